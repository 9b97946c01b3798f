//! The interactive diagnostic workflow as an explicit state machine.
//!
//! A [`Session`] owns its state, context and append-only transcript; the
//! shared read-only dependencies live in an [`Engine`]. The terminal REPL and
//! the HTTP service both drive sessions through [`Session::handle`].

mod engine;
mod payload;
mod report;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::evidence::{
    consolidate_summary, fetch_evidence, redacted_snippet, resolve_conflicts, AuditAction, AuditRecord, Channel,
    ConsolidatedSummary,
};
use crate::kb::{format_number, material_key, MitigationLookup};
use crate::query::{MatchKind, QueryEngine, Refinement};
use crate::text::normalize;
use crate::vision::{Assessor, ModelSelector, VisionError};
use crate::SourceOrigin;

pub use engine::{
    Engine, EngineError, FeatureFlags, ServiceConfig, SessionSettings, DEFAULT_LISTEN_ADDR, DEFAULT_MATERIAL,
    KB_PATH_VAR,
};
pub use payload::{
    main_menu_options, render_main_menu, AlignmentView, ClaimLine, DefectCard, EvidenceView, MenuOption,
    MitigationLine, Payload, BANNER,
};
pub use report::{export_report, ReportError};

pub const DEFAULT_REPORT_NAME: &str = "lpbf_defect_report.html";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Home,
    MainMenu,
    #[serde(rename = "ClassifyFlow_AwaitInput")]
    ClassifyAwaitInput,
    #[serde(rename = "ClassifyFlow_AwaitConfirm")]
    ClassifyAwaitConfirm,
    #[serde(rename = "ClassifyFlow_AwaitSubtype")]
    ClassifyAwaitSubtype,
    #[serde(rename = "ExploreFlow_AwaitSelection")]
    ExploreAwaitSelection,
    #[serde(rename = "ExploreFlow_ShowingDefect")]
    ExploreShowingDefect,
    #[serde(rename = "ExploreFlow_AwaitAugment")]
    ExploreAwaitAugment,
    #[serde(rename = "ExploreFlow_AwaitCausal")]
    ExploreAwaitCausal,
    AwaitMaterial,
    #[serde(rename = "ImageFlow_AwaitHypothesisAnswer")]
    ImageAwaitHypothesisAnswer,
    #[serde(rename = "ImageFlow_AwaitUpload")]
    ImageAwaitUpload,
    Exporting,
}

impl State {
    pub const ALL: [State; 13] = [
        State::Home,
        State::MainMenu,
        State::ClassifyAwaitInput,
        State::ClassifyAwaitConfirm,
        State::ClassifyAwaitSubtype,
        State::ExploreAwaitSelection,
        State::ExploreShowingDefect,
        State::ExploreAwaitAugment,
        State::ExploreAwaitCausal,
        State::AwaitMaterial,
        State::ImageAwaitHypothesisAnswer,
        State::ImageAwaitUpload,
        State::Exporting,
    ];

    fn accepts_menu_options(self) -> bool {
        matches!(self, State::Home | State::MainMenu | State::ExploreShowingDefect)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageInput {
    pub filename: String,
    pub bytes: Vec<u8>,
    pub hypothesis: Option<String>,
    pub material: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Text(String),
    Image(ImageInput),
}

impl Input {
    pub fn text(s: impl Into<String>) -> Self {
        Input::Text(s.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attachment {
    pub filename: String,
    pub size: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub role: Role,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Payload>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attachments: Vec<Attachment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_origins: Vec<SourceOrigin>,
    pub timestamp: DateTime<Utc>,
}

/// Append-only conversation log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
}

impl Transcript {
    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn push(&mut self, entry: TranscriptEntry) {
        self.entries.push(entry);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// `You: …` / agent text, as the REPL shows it.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            match e.role {
                Role::User => {
                    out.push_str("You: ");
                    out.push_str(&e.text);
                }
                Role::Agent => out.push_str(&e.text),
            }
            out.push('\n');
        }
        out
    }
}

/// One agent output: structured payload plus its plain-text rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentMessage {
    pub text: String,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub source_origins: Vec<SourceOrigin>,
}

impl From<Payload> for AgentMessage {
    fn from(payload: Payload) -> Self {
        Self { text: payload.render(), source_origins: payload.source_origins(), payload }
    }
}

fn text(s: impl Into<String>) -> AgentMessage {
    Payload::Text { text: s.into() }.into()
}

fn notice(s: impl Into<String>) -> AgentMessage {
    Payload::Notice { text: s.into() }.into()
}

fn yes_no(question: impl Into<String>) -> AgentMessage {
    Payload::QuestionYesNo { question: question.into() }.into()
}

fn menu(banner: bool) -> AgentMessage {
    Payload::Menu { banner: banner.then(|| BANNER.to_string()), options: main_menu_options() }.into()
}

fn menu_hint() -> AgentMessage {
    notice("↩ Main menu: enter an option (0–6) or type a defect name.")
}

/// `y`/`yes`/`n`/`no`, case-insensitive.
pub fn parse_yes_no(input: &str) -> Option<bool> {
    match input.trim().to_lowercase().as_str() {
        "y" | "yes" => Some(true),
        "n" | "no" => Some(false),
        _ => None,
    }
}

fn canonical_material(engine: &Engine, material: &str) -> String {
    let key = material_key(material);
    engine
        .kb
        .curated_materials()
        .into_iter()
        .find(|m| material_key(m) == key)
        .map_or_else(|| material.to_string(), String::from)
}

fn parse_number(input: &str) -> Option<usize> {
    let t = input.trim();
    (!t.is_empty() && t.len() <= 6 && t.chars().all(|c| c.is_ascii_digit())).then(|| t.parse().ok()).flatten()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum AfterMaterial {
    Explore,
    Image,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Context {
    pending_term: Option<String>,
    alternates: Vec<String>,
    options: Vec<String>,
    defect: Option<String>,
    hypothesis: Option<String>,
    material: Option<String>,
    after_material: Option<AfterMaterial>,
    last_question: Option<AgentMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    state: State,
    ctx: Context,
    transcript: Transcript,
    selector: ModelSelector,
}

impl Session {
    /// New session at `Home`, greeted with the banner and the main menu.
    pub fn new(engine: &Engine) -> Self {
        let selector = ModelSelector::fast_then_pro(&engine.settings.fast_model, &engine.settings.pro_model);
        let mut s = Self { state: State::Home, ctx: Context::default(), transcript: Transcript::default(), selector };
        let greeting = vec![menu(true)];
        s.record_agent(engine, &greeting);
        s
    }

    pub fn state(&self) -> State {
        self.state
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn selector(&self) -> &ModelSelector {
        &self.selector
    }

    /// Material in effect: configured preset, then the session's answer.
    pub fn material(&self, engine: &Engine) -> Option<String> {
        engine.settings.material.clone().or_else(|| self.ctx.material.clone())
    }

    /// Context consistency for the current state.
    pub fn check_invariants(&self) -> Result<(), String> {
        let ok = match self.state {
            State::ClassifyAwaitConfirm => self.ctx.pending_term.is_some(),
            State::ClassifyAwaitSubtype | State::ExploreAwaitSelection => !self.ctx.options.is_empty(),
            State::ExploreAwaitAugment | State::ExploreAwaitCausal => self.ctx.defect.is_some(),
            State::AwaitMaterial => self.ctx.after_material.is_some(),
            _ => true,
        };
        if !ok {
            return Err(format!("inconsistent context in {:?}: {:?}", self.state, self.ctx));
        }
        if !self.state.accepts_menu_options() && self.ctx.last_question.is_none() && self.state != State::MainMenu {
            return Err(format!("{:?} has no pending question", self.state));
        }
        Ok(())
    }

    pub fn handle(&mut self, engine: &Engine, input: Input) -> Vec<AgentMessage> {
        let entry = match &input {
            Input::Text(t) => TranscriptEntry {
                role: Role::User,
                text: t.clone(),
                payload: None,
                attachments: Vec::new(),
                source_origins: Vec::new(),
                timestamp: engine.clock.now(),
            },
            Input::Image(img) => TranscriptEntry {
                role: Role::User,
                text: format!("[image] {}", img.filename),
                payload: None,
                attachments: vec![Attachment {
                    filename: img.filename.clone(),
                    size: img.bytes.len(),
                    sha256: hex::encode(Sha256::digest(&img.bytes)),
                }],
                source_origins: Vec::new(),
                timestamp: engine.clock.now(),
            },
        };
        self.transcript.push(entry);
        let out = self.dispatch(engine, input);
        self.record_agent(engine, &out);
        out
    }

    fn record_agent(&mut self, engine: &Engine, messages: &[AgentMessage]) {
        for m in messages {
            self.transcript.push(TranscriptEntry {
                role: Role::Agent,
                text: m.text.clone(),
                payload: Some(m.payload.clone()),
                attachments: Vec::new(),
                source_origins: m.source_origins.clone(),
                timestamp: engine.clock.now(),
            });
        }
    }

    fn ask(&mut self, state: State, question: AgentMessage) -> AgentMessage {
        self.state = state;
        self.ctx.last_question = Some(question.clone());
        question
    }

    fn enter_menu(&mut self, state: State) {
        self.state = state;
        self.ctx.last_question = None;
    }

    fn reprompt(&self, problem: impl Into<String>) -> Vec<AgentMessage> {
        let mut out = vec![notice(format!("❌ {}", problem.into()))];
        match &self.ctx.last_question {
            Some(q) if !self.state.accepts_menu_options() => out.push(q.clone()),
            _ => out.push(menu(false)),
        }
        out
    }

    fn dispatch(&mut self, engine: &Engine, input: Input) -> Vec<AgentMessage> {
        let raw = match input {
            Input::Image(img) => return self.on_image(engine, img),
            Input::Text(t) => t,
        };
        let t = raw.trim();
        if t == "0" {
            let material = self.ctx.material.take();
            self.ctx = Context { material, ..Context::default() };
            self.enter_menu(State::Home);
            return vec![notice("🏠 Back to Home"), menu(true)];
        }
        match self.state {
            State::Home | State::MainMenu | State::ExploreShowingDefect => self.on_menu(engine, t),
            State::ClassifyAwaitInput => self.on_classify_input(engine, t),
            State::ClassifyAwaitConfirm => self.on_confirm(engine, t),
            State::ClassifyAwaitSubtype => self.on_choice(engine, t, false),
            State::ExploreAwaitSelection => self.on_choice(engine, t, true),
            State::ExploreAwaitAugment => self.on_augment_answer(engine, t),
            State::ExploreAwaitCausal => self.on_causal_answer(engine, t),
            State::AwaitMaterial => self.on_material(engine, t),
            State::ImageAwaitHypothesisAnswer => self.on_hypothesis(engine, t),
            State::ImageAwaitUpload => self.reprompt("Please upload an image file."),
            State::Exporting => self.on_export(t),
        }
    }

    fn on_menu(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        let kb = &engine.kb;
        match t {
            "" => vec![menu(false)],
            "1" => {
                self.enter_menu(State::MainMenu);
                let mut s = String::from("Main defect types:");
                for f in kb.tree().families() {
                    s.push_str("\n - ");
                    s.push_str(f);
                }
                vec![text(s)]
            }
            "2" => {
                self.enter_menu(State::MainMenu);
                let listing = kb.traverse_defect_categories().render();
                vec![text(format!("Defect categories:\n{}", listing.trim_end()))]
            }
            "3" => {
                self.ctx.pending_term = None;
                vec![self.ask(State::ClassifyAwaitInput, text("Enter a defect name (fuzzy search supported):"))]
            }
            "4" => {
                let mut leaves: Vec<String> = kb.tree().leaves().into_iter().map(String::from).collect();
                leaves.sort_by_key(|l| l.to_lowercase());
                self.ctx.options = leaves.clone();
                let q = Payload::QuestionChoice {
                    prompt: "Select a defect:".into(),
                    options: leaves,
                    footer: Some("👉 Enter the number of your choice:".into()),
                };
                vec![self.ask(State::ExploreAwaitSelection, q.into())]
            }
            "5" => vec![self.ask(
                State::Exporting,
                text(format!("Enter a file name for the HTML report (default: {DEFAULT_REPORT_NAME}):")),
            )],
            "6" => {
                if !engine.settings.flags.image_flow_enabled {
                    return vec![notice("📷 Image analysis is disabled in this configuration.")];
                }
                self.ctx.hypothesis = None;
                self.ctx.options.clear();
                vec![self.ask(
                    State::ImageAwaitHypothesisAnswer,
                    text("Are you suspecting a specific defect? Enter its name, or 'no' for general identification:"),
                )]
            }
            _ if parse_number(t).is_some() => {
                vec![notice(format!("❌ Invalid option '{t}'. Choose 0–6 or type a defect name.")), menu(false)]
            }
            _ => self.free_text(engine, t),
        }
    }

    /// Free text outside the classify flow: an exact leaf name goes straight
    /// to exploration, anything else asks for confirmation first.
    fn free_text(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        let interpretation = QueryEngine::new(&engine.kb).interpret(t);
        let Some(term) = interpretation.resolved_term.clone() else {
            return self.reprompt(format!("No matching defect found for '{t}'."));
        };
        if interpretation.match_kind == MatchKind::ExactSubstring && engine.kb.is_leaf(&term) {
            return self.select_defect(engine, term);
        }
        self.confirm(term, interpretation.alternates.into_iter().map(|a| a.term).collect())
    }

    fn confirm(&mut self, term: String, alternates: Vec<String>) -> Vec<AgentMessage> {
        let q = yes_no(format!("Interpreted as '{term}'. Proceed?"));
        self.ctx.pending_term = Some(term);
        self.ctx.alternates = alternates;
        vec![self.ask(State::ClassifyAwaitConfirm, q)]
    }

    fn on_classify_input(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        if t.is_empty() {
            return self.reprompt("Please enter a defect name.");
        }
        let interpretation = QueryEngine::new(&engine.kb).interpret(t);
        match interpretation.resolved_term {
            Some(term) => self.confirm(term, interpretation.alternates.into_iter().map(|a| a.term).collect()),
            None => self.reprompt(format!("No matching defect found for '{t}'.")),
        }
    }

    fn on_confirm(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        match parse_yes_no(t) {
            Some(true) => {
                let term = self.ctx.pending_term.take().expect("confirm state holds a term");
                self.ctx.alternates.clear();
                match QueryEngine::new(&engine.kb).disambiguate(&term) {
                    Ok(Refinement::LeafResolved { defect }) => self.select_defect(engine, defect),
                    Ok(Refinement::Choose(d)) => {
                        self.ctx.options = d.options.clone();
                        let q = Payload::QuestionChoice {
                            prompt: d.prompt_text,
                            options: d.options,
                            footer: Some("👉 Enter the number of your choice:".into()),
                        };
                        vec![self.ask(State::ClassifyAwaitSubtype, q.into())]
                    }
                    Err(e) => {
                        self.enter_menu(State::MainMenu);
                        vec![notice(format!("⚠️ {e}")), menu_hint()]
                    }
                }
            }
            Some(false) => {
                self.ctx.pending_term = None;
                let alternates = std::mem::take(&mut self.ctx.alternates);
                let prompt = if alternates.is_empty() {
                    "OK. Enter another defect name:".to_string()
                } else {
                    format!("OK. Other close matches: {}. Enter another defect name:", alternates.join(", "))
                };
                vec![self.ask(State::ClassifyAwaitInput, text(prompt))]
            }
            None => self.reprompt("Please answer yes or no."),
        }
    }

    fn on_choice(&mut self, engine: &Engine, t: &str, explore_menu: bool) -> Vec<AgentMessage> {
        if let Some(n) = parse_number(t) {
            if n >= 1 && n <= self.ctx.options.len() {
                let defect = self.ctx.options[n - 1].clone();
                self.ctx.options.clear();
                return self.select_defect(engine, defect);
            }
            return self.reprompt(format!("Invalid choice '{t}'. Enter a number from 1 to {}.", self.ctx.options.len()));
        }
        let wanted = normalize(t);
        if let Some(defect) = self.ctx.options.iter().find(|o| normalize(o) == wanted).cloned() {
            self.ctx.options.clear();
            return self.select_defect(engine, defect);
        }
        if explore_menu && !wanted.is_empty() {
            let saved = self.ctx.options.clone();
            let out = self.free_text(engine, t);
            if self.state == State::ExploreAwaitSelection {
                self.ctx.options = saved;
            } else if self.state != State::ClassifyAwaitSubtype {
                self.ctx.options.clear();
            }
            return out;
        }
        self.reprompt(format!("Invalid choice '{t}'. Enter a number from 1 to {}.", self.ctx.options.len()))
    }

    fn select_defect(&mut self, engine: &Engine, defect: String) -> Vec<AgentMessage> {
        self.ctx.options.clear();
        self.ctx.defect = Some(defect.clone());
        match self.material(engine) {
            Some(material) => self.explore(engine, &defect, &material),
            None => {
                self.ctx.after_material = Some(AfterMaterial::Explore);
                vec![self.ask(State::AwaitMaterial, text(format!("Enter the material (press Enter for {DEFAULT_MATERIAL}):")))]
            }
        }
    }

    fn on_material(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        if parse_number(t).is_some() {
            return self.reprompt(format!("'{t}' is not a material name."));
        }
        let material = if t.is_empty() { DEFAULT_MATERIAL.to_string() } else { canonical_material(engine, t) };
        self.ctx.material = Some(material.clone());
        match self.ctx.after_material.take() {
            Some(AfterMaterial::Explore) => {
                let defect = self.ctx.defect.clone().expect("explore target set before material prompt");
                self.explore(engine, &defect, &material)
            }
            _ => vec![self.upload_prompt()],
        }
    }

    fn upload_prompt(&mut self) -> AgentMessage {
        self.ask(State::ImageAwaitUpload, text("📷 Upload a micrograph image (PNG or JPEG)."))
    }

    /// Stage 1 (ontology path) and stage 2 (causes and mitigation), then the
    /// optional stage 3 questions when external retrieval is enabled.
    fn explore(&mut self, engine: &Engine, defect: &str, material: &str) -> Vec<AgentMessage> {
        let kb = &engine.kb;
        let retrieval = engine.settings.flags.external_retrieval_enabled;
        let path = kb.find_path(defect).map(|p| p.0).unwrap_or_default();
        let profile = kb.profile(defect);
        let lookup = kb.mitigation_for(defect, material);
        let mut card = DefectCard {
            defect: defect.to_string(),
            category_path: path,
            causes: profile.map(|p| p.causes.clone()).unwrap_or_default(),
            notes: profile.map(|p| p.notes.clone()).unwrap_or_default(),
            material: material.to_string(),
            mitigation: Vec::new(),
            fallback_notice: None,
        };
        let mut fallback = false;
        match &lookup {
            Ok(MitigationLookup::Curated(g)) => {
                card.mitigation = g
                    .rules
                    .iter()
                    .map(|r| MitigationLine {
                        parameter: r.parameter.label().to_string(),
                        text: r.rationale.clone(),
                        source_origin: g.source_origin,
                    })
                    .collect();
            }
            Ok(MitigationLookup::FallbackNeeded(f)) => {
                fallback = true;
                card.fallback_notice = Some(if retrieval {
                    format!(
                        "No curated mitigation mapping for {} on {}; literature-based context follows (source: {}).",
                        f.defect,
                        f.material,
                        f.source_origin.label()
                    )
                } else {
                    format!("No curated mitigation mapping for {} on {}.", f.defect, f.material)
                });
            }
            Err(e) => return vec![notice(format!("⚠️ {e}")), menu_hint()],
        }
        let mut out = vec![AgentMessage::from(Payload::DefectCard(card))];
        if !retrieval {
            self.enter_menu(State::ExploreShowingDefect);
            out.push(menu_hint());
            return out;
        }
        if fallback {
            out.extend(self.augment(engine, defect, material));
            out.extend(self.causal_question(engine, defect));
            return out;
        }
        out.push(self.ask(
            State::ExploreAwaitAugment,
            yes_no(format!("Would you like to fetch additional resources (images, web and scholarly articles) for '{defect}'?")),
        ));
        out
    }

    fn causal_question(&mut self, engine: &Engine, defect: &str) -> Vec<AgentMessage> {
        let has_relations = engine.kb.causes_of(defect).map(|c| !c.is_empty()).unwrap_or(false)
            || engine.kb.consequences_of(defect).map(|c| !c.is_empty()).unwrap_or(false);
        if has_relations {
            vec![self.ask(
                State::ExploreAwaitCausal,
                yes_no(format!("Would you like to see causal relationships expanded for '{defect}'?")),
            )]
        } else {
            self.enter_menu(State::ExploreShowingDefect);
            vec![menu_hint()]
        }
    }

    fn on_augment_answer(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        let Some(answer) = parse_yes_no(t) else { return self.reprompt("Please answer yes or no.") };
        let defect = self.ctx.defect.clone().expect("augment state holds a defect");
        let mut out = Vec::new();
        if answer {
            let material = self.material(engine).unwrap_or_else(|| DEFAULT_MATERIAL.to_string());
            out.extend(self.augment(engine, &defect, &material));
        }
        out.extend(self.causal_question(engine, &defect));
        out
    }

    fn augment(&mut self, engine: &Engine, defect: &str, material: &str) -> Vec<AgentMessage> {
        let clock = engine.clock.as_ref();
        let Some(search) = engine.search.as_deref() else {
            return vec![notice("⚠️ External retrieval is not configured; showing knowledge-base content only.")];
        };
        let bundle = match fetch_evidence(defect, &Channel::ALL, search, clock) {
            Ok(b) => b,
            Err(e) => {
                let record = AuditRecord {
                    source_title: format!("External retrieval for '{defect}'"),
                    source_url: String::new(),
                    action: AuditAction::Unverified,
                    reason: e.to_string(),
                    timestamp: clock.now(),
                };
                return vec![
                    notice(format!("⚠️ Sorry, external retrieval is unavailable: {e}")),
                    Payload::Audit { records: vec![record] }.into(),
                ];
            }
        };
        let resolution = resolve_conflicts(&bundle.claims, &engine.kb, defect, material, clock);
        let guidance = match engine.kb.mitigation_for(defect, material) {
            Ok(MitigationLookup::Curated(g)) => Some(g),
            _ => None,
        };
        let summary = match engine.model.as_deref() {
            Some(model) => consolidate_summary(
                &bundle,
                Some(&resolution),
                guidance.as_ref(),
                model,
                &engine.settings.fast_model,
                clock,
            ),
            None => ConsolidatedSummary {
                audit: bundle.audit.clone(),
                error: Some("no text model configured".into()),
                ..ConsolidatedSummary::default()
            },
        };
        let items = bundle
            .items
            .iter()
            .map(|item| {
                let mut shown = item.clone();
                shown.snippet = redacted_snippet(item, Some(&resolution));
                shown
            })
            .collect();
        let unverified_claims = resolution
            .unverified
            .iter()
            .map(|d| ClaimLine {
                parameter: d.claim.parameter.label().to_string(),
                value: format!("{} {}", format_number(d.claim.value), d.claim.units),
                source_title: d.claim.source.title.clone(),
            })
            .collect();
        let view = EvidenceView {
            defect: defect.to_string(),
            items,
            summary: summary.text.clone(),
            references: summary.references.clone(),
            unverified_claims,
            discarded_claims: resolution.discarded.len(),
            source_origin: SourceOrigin::ExternalRetrieval,
        };
        let mut out = vec![AgentMessage::from(Payload::EvidenceList(view))];
        if let Some(err) = &summary.error {
            out.push(notice(format!("⚠️ Sorry, the consolidated summary is unavailable: {err}")));
        }
        let mut records = bundle.audit.clone();
        records.extend(resolution.audit.iter().cloned());
        records.extend(summary.audit.iter().skip(bundle.audit.len()).cloned());
        if !records.is_empty() {
            out.push(Payload::Audit { records }.into());
        }
        out
    }

    fn on_causal_answer(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        let Some(answer) = parse_yes_no(t) else { return self.reprompt("Please answer yes or no.") };
        let defect = self.ctx.defect.clone().expect("causal state holds a defect");
        self.enter_menu(State::ExploreShowingDefect);
        if !answer {
            return vec![menu_hint()];
        }
        let causes = engine.kb.causes_of(&defect).unwrap_or_default().iter().map(|r| r.display()).collect();
        let consequences = engine.kb.consequences_of(&defect).unwrap_or_default().iter().map(|r| r.display()).collect();
        vec![Payload::Causal { defect, causes, consequences }.into(), menu_hint()]
    }

    fn on_hypothesis(&mut self, engine: &Engine, t: &str) -> Vec<AgentMessage> {
        if let Some(answer) = parse_yes_no(t) {
            if answer {
                return vec![self.ask(State::ImageAwaitHypothesisAnswer, text("Which defect do you suspect?"))];
            }
            self.ctx.hypothesis = None;
            self.ctx.options.clear();
            return self.after_hypothesis(engine, None);
        }
        if let Some(n) = parse_number(t) {
            if n >= 1 && n <= self.ctx.options.len() {
                let leaf = self.ctx.options[n - 1].clone();
                self.ctx.options.clear();
                return self.after_hypothesis(engine, Some(leaf));
            }
            return self.reprompt(format!("'{t}' is not a listed defect."));
        }
        if t.is_empty() {
            return self.reprompt("Enter a defect name, or 'no'.");
        }
        let engine_q = QueryEngine::new(&engine.kb);
        let Some(term) = engine_q.interpret(t).resolved_term else {
            return self.reprompt(format!("No matching defect found for '{t}'."));
        };
        match engine_q.disambiguate(&term) {
            Ok(Refinement::LeafResolved { defect }) => self.after_hypothesis(engine, Some(defect)),
            Ok(Refinement::Choose(d)) => {
                self.ctx.options = d.options.clone();
                let q = Payload::QuestionChoice {
                    prompt: d.prompt_text,
                    options: d.options,
                    footer: Some("👉 Enter the number of the suspected defect:".into()),
                };
                vec![self.ask(State::ImageAwaitHypothesisAnswer, q.into())]
            }
            Err(e) => self.reprompt(e.to_string()),
        }
    }

    fn after_hypothesis(&mut self, engine: &Engine, hypothesis: Option<String>) -> Vec<AgentMessage> {
        let mut out = Vec::new();
        if let Some(h) = &hypothesis {
            out.push(notice(format!("Are you suspecting '{h}' defect? Targeted evaluation will be used.")));
        }
        self.ctx.hypothesis = hypothesis;
        if self.material(engine).is_some() {
            out.push(self.upload_prompt());
        } else {
            self.ctx.after_material = Some(AfterMaterial::Image);
            out.push(self.ask(State::AwaitMaterial, text(format!("Enter the material (press Enter for {DEFAULT_MATERIAL}):"))));
        }
        out
    }

    fn on_image(&mut self, engine: &Engine, img: ImageInput) -> Vec<AgentMessage> {
        let image_state = matches!(
            self.state,
            State::Home
                | State::MainMenu
                | State::ExploreShowingDefect
                | State::ImageAwaitHypothesisAnswer
                | State::ImageAwaitUpload
        ) || (self.state == State::AwaitMaterial && self.ctx.after_material == Some(AfterMaterial::Image));
        if !image_state {
            return self.reprompt("An image is not expected here.");
        }
        if !engine.settings.flags.image_flow_enabled {
            return vec![notice("📷 Image analysis is disabled in this configuration.")];
        }
        let hypothesis = match img.hypothesis.as_deref().map(str::trim).filter(|h| !h.is_empty()) {
            Some(h) => match engine.kb.canonical_leaf(h) {
                Some(leaf) => Some(leaf),
                None => return self.reprompt(format!("Unknown hypothesis '{h}': not a defect in the knowledge base.")),
            },
            None => self.ctx.hypothesis.clone(),
        };
        let material = img
            .material
            .as_deref()
            .map(str::trim)
            .filter(|m| !m.is_empty())
            .map(|m| canonical_material(engine, m))
            .or_else(|| self.material(engine))
            .unwrap_or_else(|| DEFAULT_MATERIAL.to_string());
        self.ctx.hypothesis = None;
        self.ctx.after_material = None;
        self.ctx.options.clear();
        self.enter_menu(State::MainMenu);

        let Some(model) = engine.model.as_deref() else {
            return vec![notice("⚠️ Sorry, image analysis is unavailable: no multimodal model is configured."), menu_hint()];
        };
        let assessor = Assessor::new(&engine.kb, &engine.descriptors, model);
        match assessor.assess(&img.bytes, hypothesis.as_deref(), Some(&material), &mut self.selector) {
            Ok(a) => {
                let mut out = Vec::new();
                if !a.failed_attempts.is_empty() {
                    out.push(notice(format!("Model fallback: {}", a.failed_attempts.join("; "))));
                }
                out.push(
                    Payload::AlignmentReport(AlignmentView { image_name: img.filename, model: a.model, report: a.report })
                        .into(),
                );
                out.push(menu_hint());
                out
            }
            Err(e) => {
                let reason = match &e {
                    VisionError::Unparseable { raw } => format!("unparseable model response: {raw}"),
                    other => other.to_string(),
                };
                let record = AuditRecord {
                    source_title: format!("Image analysis of {}", img.filename),
                    source_url: String::new(),
                    action: AuditAction::Unverified,
                    reason,
                    timestamp: engine.clock.now(),
                };
                vec![
                    notice(format!("⚠️ Sorry, the image could not be analysed: {e}")),
                    Payload::Audit { records: vec![record] }.into(),
                    menu_hint(),
                ]
            }
        }
    }

    fn on_export(&mut self, t: &str) -> Vec<AgentMessage> {
        let name = t.rsplit(['/', '\\']).next().unwrap_or("").trim();
        let name = if name.is_empty() {
            DEFAULT_REPORT_NAME.to_string()
        } else if name.to_lowercase().ends_with(".html") {
            name.to_string()
        } else {
            format!("{name}.html")
        };
        self.enter_menu(State::MainMenu);
        vec![Payload::Report { filename: name }.into(), menu_hint()]
    }
}

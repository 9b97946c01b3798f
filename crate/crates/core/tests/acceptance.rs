//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Each check compares the library against an independent brute-force oracle
//! written here, or against a recorded fixture under `fixtures/`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use defect_sage_core::clock::SteppingClock;
use defect_sage_core::eval::{
    build_confusion, cohens_kappa, compute_metrics, load_manifest, run_ablation, ConfusionMatrix, EvalError,
    KappaBand, LabeledRecord,
};
use defect_sage_core::evidence::{
    extract_parameter_claims, resolve_conflicts, Channel, ClaimSource, EvidenceItem, ParameterClaim,
    RecordedSearchClient,
};
use defect_sage_core::kb::Parameter;
use defect_sage_core::model::{
    ModelAdapter, RecordedModelAdapter, StubModelAdapter, DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL,
};
use defect_sage_core::query::{similarity_ratio, MatchKind, QueryEngine, Refinement};
use defect_sage_core::session::{
    Engine, FeatureFlags, ImageInput, Input, Payload, ServiceConfig, Session, SessionSettings, State,
};
use defect_sage_core::vision::{shipped_descriptors, Assessor, ModelSelector};
use defect_sage_core::KnowledgeBase;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixtures().join(rel)).unwrap_or_else(|e| panic!("fixture {rel}: {e}"))
}

// ---------------------------------------------------------------- oracles

/// Every root-to-leaf path of the raw tree document: leaf -> parent chain.
fn enumerate_paths(node: &Value, prefix: &mut Vec<String>, out: &mut Vec<(String, Vec<String>)>) {
    match node {
        Value::Object(map) => {
            for (key, child) in map {
                prefix.push(key.clone());
                enumerate_paths(child, prefix, out);
                prefix.pop();
            }
        }
        Value::Array(items) => {
            for item in items {
                out.push((item.as_str().expect("leaf names are strings").to_string(), prefix.clone()));
            }
        }
        other => panic!("unexpected tree node {other}"),
    }
}

fn raw_tree() -> Value {
    let doc: Value = serde_json::from_str(defect_sage_core::kb::SHIPPED_KB_JSON).unwrap();
    doc["tree"].clone()
}

/// Reference gestalt ratio: naive longest-block search with the
/// earliest-ending tie rule, recursing on both sides.
fn oracle_blocks(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> usize {
    let (mut bi, mut bj, mut bk) = (alo, blo, 0usize);
    for i in alo..ahi {
        for j in blo..bhi {
            let mut k = 0;
            while i >= alo + k && j >= blo + k && a[i - k] == b[j - k] {
                k += 1;
            }
            if k > bk {
                bi = i + 1 - k;
                bj = j + 1 - k;
                bk = k;
            }
        }
    }
    if bk == 0 {
        return 0;
    }
    bk + oracle_blocks(a, b, alo, bi, blo, bj) + oracle_blocks(a, b, bi + bk, ahi, bj + bk, bhi)
}

fn oracle_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * oracle_blocks(&a, &b, 0, a.len(), 0, b.len()) as f64 / total as f64
}

struct OracleMetrics {
    accuracy: f64,
    macro_precision: f64,
    macro_recall: f64,
    macro_f1: f64,
    kappa: Option<f64>,
}

fn oracle_metrics(records: &[LabeledRecord]) -> OracleMetrics {
    let n = records.len() as f64;
    let classes: BTreeSet<&str> =
        records.iter().flat_map(|r| [r.reference.as_str(), r.predicted.as_str()]).collect();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    let mut p_e = 0.0;
    for class in &classes {
        let tp = records.iter().filter(|r| r.reference == *class && r.predicted == *class).count() as f64;
        let predicted = records.iter().filter(|r| r.predicted == *class).count() as f64;
        let actual = records.iter().filter(|r| r.reference == *class).count() as f64;
        let precision = if predicted == 0.0 { 0.0 } else { tp / predicted };
        let recall = if actual == 0.0 { 0.0 } else { tp / actual };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        p_sum += precision;
        r_sum += recall;
        f_sum += f1;
        p_e += (actual / n) * (predicted / n);
    }
    let agree = records.iter().filter(|r| r.reference == r.predicted).count() as f64;
    let p_o = agree / n;
    let k = classes.len() as f64;
    OracleMetrics {
        accuracy: p_o,
        macro_precision: p_sum / k,
        macro_recall: r_sum / k,
        macro_f1: f_sum / k,
        kappa: if (1.0 - p_e).abs() < 1e-15 { None } else { Some((p_o - p_e) / (1.0 - p_e)) },
    }
}

#[derive(Debug, PartialEq, Eq, PartialOrd, Ord, Clone, Copy)]
enum Verdict {
    Kept,
    Discarded,
    Unverified,
}

fn oracle_verdict(kb: &KnowledgeBase, defect: &str, material: &str, claim: &ParameterClaim) -> Verdict {
    let rules: Vec<_> = kb
        .mitigation_rules()
        .iter()
        .filter(|r| r.defect == defect && r.material.eq_ignore_ascii_case(material))
        .filter(|r| r.parameter == claim.parameter && r.bounds.is_some())
        .collect();
    if rules.is_empty() || rules.iter().any(|r| r.units != claim.units) {
        return Verdict::Unverified;
    }
    let inside = rules.iter().all(|r| {
        let b = r.bounds.as_ref().unwrap();
        b.low <= claim.value && claim.value <= b.high
    });
    if inside {
        Verdict::Kept
    } else {
        Verdict::Discarded
    }
}

fn claim(parameter: Parameter, value: f64, units: &str, title: &str) -> ParameterClaim {
    ParameterClaim {
        parameter,
        value,
        units: units.into(),
        source: ClaimSource { title: title.into(), url: format!("https://example.org/{title}") },
        span: (0, 0),
    }
}

// -------------------------------------------------------------- criteria

fn kb_integrity() -> Check {
    let start = Instant::now();
    let kb = KnowledgeBase::shipped();
    let listing = kb.traverse_defect_categories();
    let rendered = listing.render();
    let elapsed = start.elapsed();
    let mut oracle = Vec::new();
    enumerate_paths(&raw_tree(), &mut Vec::new(), &mut oracle);
    ensure!(kb.leaf_count() == 27, "leaf count {}", kb.leaf_count());
    ensure!(oracle.len() == 27, "raw document has {} leaves", oracle.len());
    ensure!(listing.leaf_count() == 27, "listing shows {} leaves", listing.leaf_count());
    let families: Vec<&str> = kb.tree().families().collect();
    ensure!(families.len() == 4, "families {families:?}");
    ensure!(rendered == read_fixture("kb/traversal.txt"), "traversal differs from golden listing");
    ensure!(elapsed < Duration::from_secs(1), "load + traverse took {elapsed:?}");
    Ok(format!("27 leaves, 4 families, golden listing matches, {elapsed:.2?}"))
}

fn path_finding() -> Check {
    let kb = KnowledgeBase::shipped();
    let mut oracle = Vec::new();
    enumerate_paths(&raw_tree(), &mut Vec::new(), &mut oracle);
    for (leaf, path) in &oracle {
        let found = kb.find_path(leaf).map(|p| p.0);
        ensure!(found.as_ref() == Some(path), "{leaf}: {found:?} != {path:?}");
    }
    let gas = kb.find_path("Gas porosity").map(|p| p.0);
    ensure!(
        gas == Some(vec!["Local structural defects".into(), "Porosity".into()]),
        "Gas porosity path {gas:?}"
    );
    let balling = kb.find_path("Balling").map(|p| p.display());
    ensure!(balling.as_deref() == Some("Surface defects → Main"), "Balling path {balling:?}");
    ensure!(kb.find_path("Glitter").is_none(), "unknown defect resolved");
    Ok(format!("{} leaves agree with brute-force enumeration", oracle.len()))
}

fn fuzzy_matching() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alphabets: [&[char]; 3] = [&['a', 'b'], &['a', 'b', 'c', 'd', ' '], &['p', 'o', 'r', 's', 'i', 't', 'y', 'é', 'μ']];
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let alphabet = alphabets[rng.gen_range(0..alphabets.len())];
        let word = |rng: &mut ChaCha8Rng| -> String {
            let len = rng.gen_range(0..24);
            (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
        };
        let a = word(&mut rng);
        let b = word(&mut rng);
        let diff = (similarity_ratio(&a, &b) - oracle_ratio(&a, &b)).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "ratio({a:?}, {b:?}) off by {diff}");
    }
    let kb = KnowledgeBase::shipped();
    let engine = QueryEngine::new(&kb);
    for (typo, expected) in [("porsity", "Porosity"), ("crackng", "Cracking")] {
        let q = engine.interpret(typo);
        ensure!(q.resolved_term.as_deref() == Some(expected), "{typo} -> {:?}", q.resolved_term);
        ensure!(q.match_kind == MatchKind::Fuzzy, "{typo} matched as {:?}", q.match_kind);
        ensure!((q.similarity - 14.0 / 15.0).abs() <= 1e-9, "{typo} similarity {}", q.similarity);
        let reference = oracle_ratio(typo, &expected.to_lowercase());
        ensure!((q.similarity - reference).abs() <= 1e-12, "{typo} disagrees with oracle");
    }
    Ok(format!("10,000 random pairs, max deviation {worst:e}; porsity/crackng ratio 0.9333"))
}

fn disambiguation() -> Check {
    let kb = KnowledgeBase::shipped();
    let engine = QueryEngine::new(&kb);
    let cracking = [
        "Solidification cracking",
        "Ductility-dip cracking",
        "Reheat and post weld heat treatment cracking",
        "Strain age cracking",
        "Lamellar cracking/Delamination",
        "Copper contamination cracking",
    ];
    let porosity = ["Gas porosity", "Keyhole porosity", "Lack of fusion porosity", "Surface-connected porosity"];
    for (term, expected) in [("Cracking", &cracking[..]), ("Porosity", &porosity[..])] {
        match engine.disambiguate(term) {
            Ok(Refinement::Choose(d)) => {
                ensure!(d.options == expected, "{term} options {:?}", d.options);
                ensure!(d.prompt_text == format!("🔍 Multiple types of '{term}':"), "prompt {:?}", d.prompt_text);
            }
            other => return Err(format!("{term}: {other:?}")),
        }
    }
    Ok("Cracking -> 6 options, Porosity -> 4 options, in order".into())
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let labels = ["A", "B", "C", "D", "E"];
    let mut degenerate = 0;
    for set in 0..1000 {
        let n = rng.gen_range(1..60);
        let k = rng.gen_range(1..=labels.len());
        let records: Vec<LabeledRecord> = (0..n)
            .map(|i| LabeledRecord::new(format!("r{i}"), labels[rng.gen_range(0..k)], labels[rng.gen_range(0..k)]))
            .collect();
        let matrix = build_confusion(&records).map_err(|e| e.to_string())?;
        let got = compute_metrics(&matrix).map_err(|e| e.to_string())?;
        let want = oracle_metrics(&records);
        for (name, g, w) in [
            ("accuracy", got.accuracy, want.accuracy),
            ("macro precision", got.macro_precision, want.macro_precision),
            ("macro recall", got.macro_recall, want.macro_recall),
            ("macro F1", got.macro_f1, want.macro_f1),
        ] {
            ensure!((g - w).abs() <= 1e-12, "set {set}: {name} {g} vs oracle {w}");
        }
        match (cohens_kappa(&matrix), want.kappa) {
            (Ok(k), Some(w)) => ensure!((k.kappa - w).abs() <= 1e-12, "set {set}: kappa {} vs {w}", k.kappa),
            (Err(EvalError::DegenerateAgreement), None) => degenerate += 1,
            (got, want) => return Err(format!("set {set}: kappa {got:?} vs oracle {want:?}")),
        }
    }
    let hand = [LabeledRecord::new("1", "A", "A"), LabeledRecord::new("2", "A", "B"), LabeledRecord::new("3", "B", "B")];
    let f1 = compute_metrics(&build_confusion(&hand).unwrap()).unwrap().macro_f1;
    ensure!((f1 - 2.0 / 3.0).abs() <= 1e-12, "hand case macro F1 {f1}");
    let m = ConfusionMatrix::from_counts(vec!["x".into(), "y".into()], vec![vec![40, 10], vec![10, 40]]).unwrap();
    let kappa = cohens_kappa(&m).unwrap().kappa;
    ensure!(kappa == 0.6, "[[40,10],[10,40]] kappa {kappa}");
    let perfect = ConfusionMatrix::from_counts(vec!["x".into(), "y".into()], vec![vec![7, 0], vec![0, 3]]).unwrap();
    ensure!(cohens_kappa(&perfect).unwrap().kappa == 1.0, "perfect agreement is not 1");
    Ok(format!("1,000 random sets agree ({degenerate} degenerate kappa cases agree on undefined); hand cases exact"))
}

fn ablation_replay() -> Check {
    let start = Instant::now();
    let manifest = load_manifest(fixtures().join("ablation/manifest.json")).map_err(|e| e.to_string())?;
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = run_ablation(&manifest, Some(out.path())).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let d = report.row("D").ok_or("no config D")?;
    ensure!(d.records == 200, "config D has {} records", d.records);
    ensure!(d.metrics.accuracy == 0.8, "config D accuracy {}", d.metrics.accuracy);
    ensure!((d.metrics.macro_f1 - 0.808).abs() <= 0.005, "config D macro F1 {}", d.metrics.macro_f1);
    ensure!(d.band() == Some(KappaBand::Substantial), "config D band {:?}", d.band());
    ensure!(d.band().unwrap().label() == "substantial agreement", "band label {}", d.band().unwrap().label());
    let csv = std::fs::read_to_string(out.path().join("ablation_report.csv")).map_err(|e| e.to_string())?;
    ensure!(csv.lines().any(|l| l.starts_with("D,0.8000,") && l.ends_with(",substantial agreement")), "csv: {csv}");
    let published = [("A", 0.64, 0.645), ("B", 0.12, 0.121), ("C", 0.72, 0.728), ("D", 0.80, 0.808)];
    for (id, acc, f1) in published {
        let row = report.row(id).ok_or(format!("no config {id}"))?;
        ensure!(row.metrics.accuracy == acc, "config {id} accuracy {}", row.metrics.accuracy);
        ensure!((row.metrics.macro_f1 - f1).abs() <= 0.005, "config {id} macro F1 {}", row.metrics.macro_f1);
    }
    ensure!(elapsed < Duration::from_secs(5), "ablation run took {elapsed:?}");
    let kappa = d.kappa.map(|k| k.kappa).unwrap_or(f64::NAN);
    Ok(format!("D accuracy 0.8000, macro F1 {:.4}, kappa {kappa:.4} substantial; {elapsed:.2?}", d.metrics.macro_f1))
}

fn conflict_resolution() -> Check {
    let kb = KnowledgeBase::shipped();
    let clock = SteppingClock::fixture();
    let defect = "Lack of fusion porosity";
    let item = EvidenceItem {
        channel: Channel::Web,
        title: "IN625 process window".into(),
        url: "https://example.org/in625".into(),
        snippet: "Dense parts were printed at 120 J/mm³, while others used 75 J/mm³.".into(),
    };
    let claims = extract_parameter_claims(&item);
    ensure!(claims.len() == 2, "extracted {claims:?}");
    let res = resolve_conflicts(&claims, &kb, defect, "IN625", &clock);
    ensure!(res.discarded.len() == 1 && res.discarded[0].claim.value == 120.0, "discarded {:?}", res.discarded);
    ensure!(res.kept.len() == 1 && res.kept[0].claim.value == 75.0, "kept {:?}", res.kept);
    let record = res.audit.iter().find(|r| r.reason.starts_with("120")).ok_or("no audit record for 120")?;
    ensure!(record.reason.contains("65–90 J/mm³"), "audit reason does not cite the bound: {}", record.reason);
    ensure!(record.source_url == item.url, "audit source {}", record.source_url);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let pool = [
        (Parameter::VolumetricEnergyDensity, "J/mm³", 40.0, 130.0),
        (Parameter::LaserPower, "W", 100.0, 400.0),
        (Parameter::ScanSpeed, "mm/s", 300.0, 1500.0),
        (Parameter::HatchSpacing, "μm", 40.0, 150.0),
        (Parameter::LayerThickness, "mm", 0.02, 0.08),
    ];
    for round in 0..200 {
        let (defect, material) = [(defect, "IN625"), ("Balling", "IN625"), (defect, "Ti6Al4V")][round % 3];
        let claims: Vec<ParameterClaim> = (0..rng.gen_range(0..12))
            .map(|i| {
                let (p, u, lo, hi): (Parameter, &str, f64, f64) = pool[rng.gen_range(0..pool.len())];
                claim(p, rng.gen_range(lo..hi).round(), u, &format!("s{i}"))
            })
            .collect();
        let partition = |r: &defect_sage_core::evidence::ConflictResolution| {
            let mut v: Vec<(Verdict, String)> = Vec::new();
            v.extend(r.kept.iter().map(|d| (Verdict::Kept, d.claim.source.title.clone())));
            v.extend(r.discarded.iter().map(|d| (Verdict::Discarded, d.claim.source.title.clone())));
            v.extend(r.unverified.iter().map(|d| (Verdict::Unverified, d.claim.source.title.clone())));
            v.sort();
            v
        };
        let base = resolve_conflicts(&claims, &kb, defect, material, &clock);
        ensure!(base.len() == claims.len(), "round {round}: partition lost claims");
        let mut want: Vec<(Verdict, String)> =
            claims.iter().map(|c| (oracle_verdict(&kb, defect, material, c), c.source.title.clone())).collect();
        want.sort();
        ensure!(partition(&base) == want, "round {round}: partition disagrees with oracle");
        let mut shuffled = claims.clone();
        shuffled.shuffle(&mut rng);
        let again = resolve_conflicts(&shuffled, &kb, defect, material, &clock);
        ensure!(partition(&again) == want, "round {round}: partition depends on claim order");
    }
    Ok("120 J/mm³ discarded citing 65–90 J/mm³, 75 kept; 200 random sets partition exactly, order-invariant".into())
}

/// Recorded answer for the keyhole/gas micrograph.
fn figure12_reply() -> String {
    let raw: Value = serde_json::from_str(&read_fixture("images/model.json")).unwrap();
    raw["responses"][DEFAULT_FAST_MODEL]
        .as_object()
        .unwrap()
        .values()
        .map(|entry| entry["text"].as_str().unwrap())
        .find(|text| text.contains("**Keyhole Porosity**: 90%"))
        .expect("keyhole/gas answer recorded")
        .to_string()
}

fn keyhole_case() -> (Vec<u8>, &'static str) {
    (std::fs::read(fixtures().join("images/keyhole_gas.png")).unwrap(), "IN625")
}

fn determinism_contract() -> Check {
    let kb = KnowledgeBase::shipped();
    let descriptors = shipped_descriptors(&kb).map_err(|e| e.to_string())?;
    let (image, material) = keyhole_case();

    let figure12 = RecordedModelAdapter::from_path(fixtures().join("images/model.json")).map_err(|e| e.to_string())?;
    let raw = figure12_reply();
    let stub = StubModelAdapter::replying(raw).failing_for(&[DEFAULT_FAST_MODEL]);
    let assessor = Assessor::new(&kb, &descriptors, &stub);
    for hypothesis in [None, Some("Keyhole porosity"), Some("Balling")] {
        assessor
            .assess(&image, hypothesis, Some(material), &mut ModelSelector::default())
            .map_err(|e| e.to_string())?;
    }
    let engine = Engine::kb_only(kb.clone())
        .with_settings(SessionSettings { flags: FeatureFlags::ALL_ON, ..SessionSettings::default() })
        .with_search(Arc::new(
            RecordedSearchClient::from_path(fixtures().join("balling_session/search.json")).unwrap(),
        ));
    let text_stub = Arc::new(StubModelAdapter::replying("summary"));
    let engine = engine.with_model(text_stub.clone());
    let mut s = Session::new(&engine);
    for input in ["Balling", "", "yes"] {
        s.handle(&engine, Input::text(input));
    }
    let requests: Vec<_> = stub.requests().into_iter().chain(text_stub.requests()).collect();
    ensure!(requests.len() == 7, "expected 6 vision calls and 1 text call, saw {}", requests.len());
    for r in &requests {
        let c = r.config;
        ensure!(
            c.temperature() == 0.0 && c.top_p() == 0.1 && c.top_k() == 1 && !c.is_overridden(),
            "{} call used {c:?}",
            r.model
        );
    }
    ensure!(
        requests[..6].iter().map(|r| r.model.as_str()).collect::<Vec<_>>()
            == [DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL].repeat(3),
        "vision calls did not fall back fast -> pro"
    );

    let recorded = Assessor::new(&kb, &descriptors, &figure12);
    let first = recorded.assess(&image, None, Some(material), &mut ModelSelector::default()).map_err(|e| e.to_string())?;
    let second =
        recorded.assess(&image, None, Some(material), &mut ModelSelector::default()).map_err(|e| e.to_string())?;
    ensure!(first.report.to_json() == second.report.to_json(), "repeated assessment differs");
    let scores: Vec<f64> = first.report.hypotheses.iter().map(|h| h.score).collect();
    ensure!(scores == [0.90, 0.70], "scores {scores:?}");
    let names: Vec<&str> = first.report.hypotheses.iter().map(|h| h.defect.as_str()).collect();
    ensure!(names == ["Keyhole porosity", "Gas porosity"], "defects {names:?}");
    Ok(format!("{} calls locked at 0.0/0.1/1; replay byte-identical; scores 0.90 and 0.70", requests.len()))
}

fn replay_engine() -> Engine {
    Engine::kb_only(KnowledgeBase::shipped())
        .with_settings(SessionSettings {
            flags: FeatureFlags::ALL_ON,
            material: Some("IN625".into()),
            fast_model: DEFAULT_FAST_MODEL.into(),
            pro_model: DEFAULT_PRO_MODEL.into(),
        })
        .with_clock(Arc::new(SteppingClock::fixture()))
        .with_search(Arc::new(RecordedSearchClient::from_path(fixtures().join("balling_session/search.json")).unwrap()))
        .with_model(Arc::new(RecordedModelAdapter::from_path(fixtures().join("balling_session/model.json")).unwrap()))
}

fn allowed_transitions(from: State) -> Vec<State> {
    use State::*;
    let explore_results = [AwaitMaterial, ExploreAwaitAugment, ExploreAwaitCausal, ExploreShowingDefect];
    let mut to = match from {
        Home | MainMenu | ExploreShowingDefect => vec![
            Home,
            MainMenu,
            ClassifyAwaitInput,
            ClassifyAwaitConfirm,
            ExploreAwaitSelection,
            Exporting,
            ImageAwaitHypothesisAnswer,
        ],
        ClassifyAwaitInput => vec![ClassifyAwaitConfirm],
        ClassifyAwaitConfirm => vec![ClassifyAwaitInput, ClassifyAwaitSubtype, MainMenu],
        ClassifyAwaitSubtype => vec![],
        ExploreAwaitSelection => vec![ClassifyAwaitConfirm],
        ExploreAwaitAugment => vec![ExploreAwaitCausal, ExploreShowingDefect],
        ExploreAwaitCausal => vec![ExploreShowingDefect],
        AwaitMaterial => vec![ImageAwaitUpload, MainMenu],
        ImageAwaitHypothesisAnswer => vec![AwaitMaterial, ImageAwaitUpload, MainMenu],
        ImageAwaitUpload => vec![MainMenu],
        Exporting => vec![MainMenu],
    };
    if matches!(
        from,
        Home | MainMenu | ExploreShowingDefect | ClassifyAwaitConfirm | ClassifyAwaitSubtype | ExploreAwaitSelection
            | AwaitMaterial
    ) {
        to.extend(explore_results);
    }
    to.push(from);
    to.push(Home);
    to
}

fn session_fuzzing() -> Check {
    let engine = replay_engine();
    let mut s = Session::new(&engine);
    for input in serde_json::from_str::<Value>(&read_fixture("balling_session/script.json")).unwrap()["inputs"]
        .as_array()
        .unwrap()
    {
        s.handle(&engine, Input::text(input.as_str().unwrap()));
    }
    let replay = s.transcript().to_json();
    let golden = read_fixture("balling_session/transcript.json");
    ensure!(replay == golden, "Balling session replay differs from the recorded transcript");
    let text = s.transcript().render_text();
    for needle in [
        "Category: Surface defects → Main",
        " - Oxygen Level: Keep O₂ < 0.1 %",
        "Factors leading to Balling:\n  • Energy density → Balling\n  • Laser power → Balling\n  • Scan spacing → Balling\n  • Cooling rate → Balling",
        "Balling can lead to:\n  • Balling → Surface roughness",
    ] {
        ensure!(text.contains(needle), "replay lacks {needle:?}");
    }

    let reply = figure12_reply();
    let flag_sets = [FeatureFlags::ALL_ON, FeatureFlags::OFFLINE];
    let vocabulary = [
        "0", "1", "2", "3", "4", "5", "6", "7", "9", "12", "27", "28", "99", "-1", "1.5", "yes", "no", "y", "N", "YES",
        "maybe", "", "   ", "porsity", "crackng", "Cracking", "Porosity", "Balling", "Keyhole porosity",
        "explore gas porosity", "weather", "IN625", "Ti6Al4V", "report", "../x", "🔥", "Lack of fusion porosity",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut steps = 0usize;
    let mut visited: HashSet<State> = HashSet::new();
    let mut transitions: BTreeMap<String, usize> = BTreeMap::new();
    for (round, flags) in flag_sets.iter().cycle().take(20).enumerate() {
        let stub: Arc<dyn ModelAdapter> = if round % 4 == 1 {
            Arc::new(StubModelAdapter::failing())
        } else {
            Arc::new(StubModelAdapter::replying(reply.clone()))
        };
        let engine = replay_engine()
            .with_model(stub)
            .with_settings(SessionSettings { flags: *flags, material: None, ..SessionSettings::default() });
        let mut session = Session::new(&engine);
        for _ in 0..500 {
            let input = match rng.gen_range(0..20) {
                0 => Input::Image(ImageInput {
                    filename: "x.png".into(),
                    bytes: if rng.gen_bool(0.2) { Vec::new() } else { vec![rng.gen(); 16] },
                    hypothesis: [None, Some("Keyhole porosity".into()), Some("nonsense".into())][rng.gen_range(0..3)]
                        .clone(),
                    material: None,
                }),
                1 => Input::Text((0..rng.gen_range(0..12)).map(|_| rng.gen::<char>()).collect()),
                _ => Input::text(vocabulary[rng.gen_range(0..vocabulary.len())]),
            };
            let from = session.state();
            let zero = matches!(&input, Input::Text(t) if t.trim() == "0");
            let out = catch_unwind(AssertUnwindSafe(|| session.handle(&engine, input.clone())))
                .map_err(|_| format!("panic at step {steps} in {from:?} on {input:?}"))?;
            steps += 1;
            let to = session.state();
            ensure!(!out.is_empty(), "no response in {from:?} to {input:?}");
            ensure!(allowed_transitions(from).contains(&to), "undefined transition {from:?} -> {to:?} on {input:?}");
            ensure!(!zero || to == State::Home, "'0' led to {to:?}");
            session.check_invariants()?;
            visited.insert(to);
            *transitions.entry(format!("{from:?}->{to:?}")).or_default() += 1;
        }
        let entries = session.transcript().entries();
        ensure!(entries.windows(2).all(|w| w[0].timestamp < w[1].timestamp), "transcript timestamps not increasing");
    }
    ensure!(steps == 10_000, "ran {steps} steps");
    ensure!(visited.len() == State::ALL.len(), "only visited {} of {} states", visited.len(), State::ALL.len());
    Ok(format!(
        "Balling replay byte-identical; 10,000 fuzz inputs, 0 panics, {} distinct transitions, all 13 states visited",
        transitions.len()
    ))
}

fn offline_mode() -> Check {
    std::env::remove_var("SEARCH_API_KEY");
    std::env::remove_var("MODEL_API_KEY");
    let config = ServiceConfig { flags: FeatureFlags::OFFLINE, material: Some("IN625".into()), ..ServiceConfig::default() };
    let engine = Engine::from_config(&config, Arc::new(SteppingClock::fixture())).map_err(|e| e.to_string())?;
    ensure!(engine.search.is_none() && engine.model.is_none(), "offline engine has external clients");
    for (name, check) in [
        ("1", kb_integrity as fn() -> Check),
        ("2", path_finding),
        ("3", fuzzy_matching),
        ("4", disambiguation),
        ("5", metrics_oracle),
    ] {
        check().map_err(|e| format!("criterion {name} offline: {e}"))?;
    }
    let mut s = Session::new(&engine);
    s.handle(&engine, Input::text("4"));
    let out = s.handle(&engine, Input::text("2"));
    ensure!(s.state() == State::ExploreShowingDefect, "explore ended in {:?}", s.state());
    let Payload::DefectCard(card) = &out[0].payload else { return Err(format!("first payload {}", out[0].payload.kind())) };
    ensure!(card.category_path == ["Surface defects", "Main"], "path {:?}", card.category_path);
    ensure!(card.mitigation.len() == 4, "mitigation lines {}", card.mitigation.len());
    let golden = read_fixture("balling_session/transcript.txt");
    ensure!(golden.contains(&out[0].text), "offline card differs from the online card");
    ensure!(out.iter().all(|m| !matches!(m.payload, Payload::QuestionYesNo { .. })), "offline flow asked to augment");
    let image = s.handle(&engine, Input::text("6"));
    ensure!(image[0].text.contains("disabled") && s.state() == State::ExploreShowingDefect, "image flow reachable offline");
    Ok("criteria 1–5 pass without clients; explore stages 1–2 identical to the online card".into())
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("KB integrity", kb_integrity),
        ("Path-finding", path_finding),
        ("Fuzzy matching", fuzzy_matching),
        ("Disambiguation", disambiguation),
        ("Metrics oracle equivalence", metrics_oracle),
        ("Ablation replay", ablation_replay),
        ("Conflict resolution", conflict_resolution),
        ("Determinism contract", determinism_contract),
        ("Session fuzzing", session_fuzzing),
        ("Offline mode", offline_mode),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

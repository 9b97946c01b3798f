//! Regenerates the recorded fixtures under `fixtures/`.
//!
//! ```text
//! cargo run -p defect-sage-core --example gen_fixtures
//! ```
//!
//! Search results and model answers are scripted here, recorded through the
//! same request hashing the replay clients use, and written as transcripts.
//! The Balling session golden transcript is produced by driving a session
//! over those recordings with the fixture clock.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use defect_sage_core::clock::SteppingClock;
use defect_sage_core::evidence::{
    channel_query, Channel, EvidenceItem, RecordedSearchClient, SearchClient, SearchError, SearchRequest,
    SearchTranscript,
};
use defect_sage_core::model::{ModelTranscript, StubModelAdapter, DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL};
use defect_sage_core::session::{Engine, FeatureFlags, Input, Session, SessionSettings};
use defect_sage_core::vision::{shipped_descriptors, Assessor, ModelSelector};
use defect_sage_core::KnowledgeBase;
use serde::Serialize;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn item(channel: Channel, title: &str, url: &str, snippet: &str) -> EvidenceItem {
    EvidenceItem { channel, title: title.into(), url: url.into(), snippet: snippet.into() }
}

fn scholar_link(title: &str) -> String {
    format!("https://scholar.google.com/scholar?q={}", title.replace(' ', "+"))
}

fn balling_results() -> BTreeMap<Channel, Vec<EvidenceItem>> {
    let image = vec![item(
        Channel::Image,
        "Balling effect caused by high laser power | Download Scientific Diagram",
        "https://www.researchgate.net/figure/Balling-effect-caused-by-high-laser-power-adapted-from-18-56-57_fig3_342050556",
        "Diagram of bead formation along a scan track at high laser power.",
    )];
    let web = vec![
        item(
            Channel::Web,
            "A simple scaling model for balling defect formation during ...",
            "https://www.sciencedirect.com/science/article/pii/S2214860423000441",
            "A thermal scaling argument gives the threshold between the balling regime and conduction-mode melting.",
        ),
        item(
            Channel::Web,
            "Balling Effect in LPBF: Causes, Impact, and How to Prevent It",
            "https://insidemetaladditivemanufacturing.com/2025/02/28/deep-dive-understanding-and-preventing-the-balling-effect-in-laser-powder-bed-fusion-lpbf/",
            "An unstable melt pool breaks the track into droplets rather than a continuous bead.",
        ),
        item(
            Channel::Web,
            "Forum thread: balling on IN625 test coupons",
            "https://forum.example.com/lpbf/in625-balling-coupons",
            "Balling went away once we printed with a layer thickness of 80 μm at 350 W. Oxygen was held at 0.05% throughout.",
        ),
    ];
    let scholar_titles = [
        (
            "A simple scaling model for balling defect formation during laser powder bed fusion",
            "Relates the balling to conduction transition to one dimensionless group built from material properties, powder size and preheating.",
        ),
        (
            "Analytical prediction of balling, lack-of-fusion and keyholing thresholds in powder bed fusion",
            "Analytical criteria for when lack of fusion, balling and keyholing appear in powder bed fusion.",
        ),
        (
            "Numerical investigation of balling defects in laser-based powder bed fusion of metals with Inconel 718",
            "Simulated tracks show comparable balling behaviour across laser powers with ball size changing with power.",
        ),
    ];
    let scholar = scholar_titles
        .iter()
        .map(|(title, snippet)| item(Channel::Scholar, title, &scholar_link(title), snippet))
        .collect();
    BTreeMap::from([(Channel::Image, image), (Channel::Web, web), (Channel::Scholar, scholar)])
}

const BALLING_SUMMARY: &str = "Balling is a melt-pool failure mode in laser powder bed fusion that competes with \
stable conduction-mode melting. Recent work predicts its onset analytically together with lack of fusion and \
keyholing, and ties the transition to a single dimensionless group of material properties, powder size and \
preheating. Simulations report similar balling behaviour over a range of settings, with ball size governed by \
laser power, and ongoing studies aim to quantify the mechanism more precisely.";

const KEYHOLE_GAS_RESPONSE: &str = "--- Defect Analysis ---

1. **Keyhole Porosity**: 90% Probability
 - * **Visual Evidence**: A deep, narrow cavity (highlighted in green) runs from the top surface far into the part; its walls are uneven, pointing to an unstable vapour depression.
 - * **Reasoning**: Excess energy input drives a deep keyhole that collapses and traps vapour.
2. **Gas Porosity (Irregular)**: 70% Probability
 - * **Visual Evidence**: Small, rounded but not perfectly spherical voids (highlighted in red) are scattered below the surface.
 - * **Reasoning**: Entrapped gas from powder or shielding atmosphere under unstable melt-pool flow.

--- Correction Strategy ---

1. **Reduce Laser Power**: lower the energy density so the vapour cavity stays shallow.
2. **Increase Scan Speed**: shorten the laser dwell time per point.
3. **Check Shielding Gas**: keep flow steady and purity high.
";

const LACK_OF_FUSION_RESPONSE: &str = "--- Defect Analysis ---

1. **Lack of Fusion Porosity**: 85% Probability
 - * **Visual Evidence**: An irregular, angular void with sharp boundaries containing unmelted powder particles.
2. **Keyhole Porosity**: 10% Probability
 - * **Visual Evidence**: No deep or vertically elongated cavity is present.
3. **Gas Porosity**: 5% Probability
 - * **Visual Evidence**: A few small spherical pores near the main void.

--- Correction Strategy ---

Raise the energy input so adjacent tracks and layers fuse completely.
";

/// Scripted search backend used only to produce recordings.
struct Scripted(BTreeMap<Channel, Vec<EvidenceItem>>);

impl SearchClient for Scripted {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        Ok(self.0.get(&request.channel).cloned().unwrap_or_default())
    }
}

#[derive(Serialize)]
struct SessionScript {
    material: String,
    inputs: Vec<String>,
}

#[derive(Serialize)]
struct ImageCase {
    image: String,
    hypothesis: Option<String>,
    material: String,
}

fn write(path: PathBuf, text: &str) {
    fs::create_dir_all(path.parent().unwrap()).unwrap();
    fs::write(&path, text).unwrap();
    println!("wrote {}", path.display());
}

fn main() {
    let kb = KnowledgeBase::shipped();
    let root = root();

    write(root.join("kb/traversal.txt"), &kb.traverse_defect_categories().render());

    // Balling exploration with retrieval.
    let scripted = Scripted(balling_results());
    let mut search = SearchTranscript::new();
    for channel in Channel::ALL {
        let request = SearchRequest { channel, query: channel_query("Balling", channel) };
        search.insert(&request, Ok(scripted.search(&request).unwrap()));
    }
    let summary_stub = Arc::new(StubModelAdapter::replying(BALLING_SUMMARY));
    let mut leaves: Vec<&str> = kb.tree().leaves();
    leaves.sort_by_key(|l| l.to_lowercase());
    let balling = leaves.iter().position(|l| *l == "Balling").unwrap() + 1;
    let script = SessionScript {
        material: "IN625".into(),
        inputs: vec!["4".into(), balling.to_string(), "yes".into(), "yes".into()],
    };
    let settings = SessionSettings {
        flags: FeatureFlags::ALL_ON,
        material: Some(script.material.clone()),
        fast_model: DEFAULT_FAST_MODEL.into(),
        pro_model: DEFAULT_PRO_MODEL.into(),
    };
    let engine = Engine::kb_only(kb.clone())
        .with_settings(settings.clone())
        .with_clock(Arc::new(SteppingClock::fixture()))
        .with_search(Arc::new(RecordedSearchClient::new(search.clone())))
        .with_model(summary_stub.clone());
    let mut session = Session::new(&engine);
    for input in &script.inputs {
        session.handle(&engine, Input::text(input.clone()));
    }
    let mut summary_model = ModelTranscript::new();
    for request in summary_stub.requests() {
        summary_model.insert(&request, BALLING_SUMMARY);
    }
    let dir = root.join("balling_session");
    write(dir.join("search.json"), &search.to_json());
    write(dir.join("model.json"), &summary_model.to_json());
    write(dir.join("script.json"), &(serde_json::to_string_pretty(&script).unwrap() + "\n"));
    write(dir.join("transcript.json"), &session.transcript().to_json());
    write(dir.join("transcript.txt"), &session.transcript().render_text());

    // Image assessments.
    let descriptors = shipped_descriptors(&kb).unwrap();
    let cases = [
        (ImageCase { image: "keyhole_gas.png".into(), hypothesis: None, material: "IN625".into() }, KEYHOLE_GAS_RESPONSE),
        (
            ImageCase {
                image: "lack_of_fusion.png".into(),
                hypothesis: Some("Keyhole porosity".into()),
                material: "IN625".into(),
            },
            LACK_OF_FUSION_RESPONSE,
        ),
    ];
    let mut image_model = ModelTranscript::new();
    for (case, response) in &cases {
        let bytes = fs::read(root.join("images").join(&case.image)).unwrap();
        let stub = StubModelAdapter::replying(*response);
        let assessor = Assessor::new(&kb, &descriptors, &stub);
        let mut selector = ModelSelector::default();
        assessor
            .assess(&bytes, case.hypothesis.as_deref(), Some(&case.material), &mut selector)
            .expect("scripted response parses");
        for request in stub.requests() {
            image_model.insert(&request, *response);
        }
    }
    let cases: Vec<&ImageCase> = cases.iter().map(|(c, _)| c).collect();
    write(root.join("images/model.json"), &image_model.to_json());
    write(root.join("images/cases.json"), &(serde_json::to_string_pretty(&cases).unwrap() + "\n"));
}

use std::path::PathBuf;
use std::sync::Arc;

use defect_sage_core::clock::SteppingClock;
use defect_sage_core::evidence::{FailingSearchClient, RecordedSearchClient, UnconfiguredSearchClient};
use defect_sage_core::model::{RecordedModelAdapter, StubModelAdapter};
use defect_sage_core::session::{
    export_report, AgentMessage, Engine, FeatureFlags, ImageInput, Input, Payload, Session, SessionSettings, State,
};
use defect_sage_core::{KnowledgeBase, SourceOrigin};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn online(material: Option<&str>) -> Engine {
    Engine::kb_only(KnowledgeBase::shipped())
        .with_settings(SessionSettings {
            flags: FeatureFlags::ALL_ON,
            material: material.map(String::from),
            ..SessionSettings::default()
        })
        .with_clock(Arc::new(SteppingClock::fixture()))
}

fn kinds(out: &[AgentMessage]) -> Vec<&'static str> {
    out.iter().map(|m| m.payload.kind()).collect()
}

fn image(name: &str, hypothesis: Option<&str>) -> Input {
    Input::Image(ImageInput {
        filename: name.into(),
        bytes: std::fs::read(fixtures().join("images").join(name)).unwrap(),
        hypothesis: hypothesis.map(String::from),
        material: None,
    })
}

#[test]
fn uncurated_material_falls_back_to_external_retrieval() {
    let engine = online(Some("Ti6Al4V"))
        .with_search(Arc::new(FailingSearchClient))
        .with_model(Arc::new(StubModelAdapter::replying("unused")));
    let mut s = Session::new(&engine);
    let out = s.handle(&engine, Input::text("Balling"));
    let Payload::DefectCard(card) = &out[0].payload else { panic!("{:?}", kinds(&out)) };
    assert!(card.mitigation.is_empty());
    assert!(card.fallback_notice.as_deref().unwrap().contains("External Retrieval"));
    assert!(out[1].payload.kind() == "evidence_list" || out[1].payload.kind() == "notice", "{:?}", kinds(&out));
    assert!(out.iter().all(|m| !m.text.contains("O₂ < 0.1")), "curated bounds leaked into fallback");
    assert_eq!(s.state(), State::ExploreAwaitCausal);
}

#[test]
fn missing_credentials_are_reported_not_fatal() {
    std::env::remove_var("SEARCH_API_KEY");
    let engine = online(Some("IN625")).with_search(Arc::new(UnconfiguredSearchClient::from_env()));
    let mut s = Session::new(&engine);
    s.handle(&engine, Input::text("Balling"));
    let out = s.handle(&engine, Input::text("y"));
    assert!(out[0].text.contains("missing credentials"), "{}", out[0].text);
    assert_eq!(kinds(&out), ["notice", "audit", "question_yes_no"]);
    assert_eq!(s.state(), State::ExploreAwaitCausal);
}

#[test]
fn image_flow_with_hypothesis_and_curated_mitigation() {
    let engine = online(None)
        .with_model(Arc::new(RecordedModelAdapter::from_path(fixtures().join("images/model.json")).unwrap()));
    let mut s = Session::new(&engine);
    s.handle(&engine, Input::text("6"));
    let out = s.handle(&engine, Input::text("keyhole"));
    assert!(out[0].text.contains("'Keyhole porosity'"), "{}", out[0].text);
    assert_eq!(s.state(), State::AwaitMaterial);
    s.handle(&engine, Input::text("in 625"));
    assert_eq!(s.state(), State::ImageAwaitUpload);
    let out = s.handle(&engine, image("lack_of_fusion.png", None));
    let Payload::AlignmentReport(view) = &out[0].payload else { panic!("{:?}", kinds(&out)) };
    assert_eq!(view.report.hypothesis.as_deref(), Some("Keyhole porosity"));
    assert_eq!(view.report.top().unwrap().defect, "Lack of fusion porosity");
    assert_eq!(out[0].source_origins, vec![SourceOrigin::Ontology]);
    assert!(out[0].text.contains("1. Lack of fusion porosity: 85% semantic alignment (0.85)"), "{}", out[0].text);
    assert_eq!(s.state(), State::MainMenu);
    let html = export_report(s.transcript()).unwrap();
    assert!(html.contains("<td>Lack of fusion porosity</td><td>85%</td>"));
    assert!(html.contains("sha256"));
}

#[test]
fn image_shortcut_and_model_failure() {
    let engine = online(Some("IN625")).with_model(Arc::new(StubModelAdapter::failing()));
    let mut s = Session::new(&engine);
    let out = s.handle(&engine, image("keyhole_gas.png", None));
    assert_eq!(kinds(&out), ["notice", "audit", "notice"]);
    assert!(out[0].text.starts_with("⚠️ Sorry"));
    assert!(out[1].text.contains("gemini-2.5-flash"), "{}", out[1].text);

    let engine = online(Some("IN625")).with_model(Arc::new(StubModelAdapter::replying("no defects visible")));
    let mut s = Session::new(&engine);
    let out = s.handle(&engine, image("keyhole_gas.png", None));
    assert!(out[1].text.contains("unparseable model response: no defects visible"), "{}", out[1].text);
}

#[test]
fn image_rejected_mid_classification() {
    let engine = online(Some("IN625"));
    let mut s = Session::new(&engine);
    s.handle(&engine, Input::text("3"));
    let out = s.handle(&engine, image("keyhole_gas.png", None));
    assert_eq!(s.state(), State::ClassifyAwaitInput);
    assert!(out[0].text.contains("not expected"));
}

#[test]
fn recorded_balling_search_shows_redaction() {
    let engine = online(Some("IN625"))
        .with_search(Arc::new(RecordedSearchClient::from_path(fixtures().join("balling_session/search.json")).unwrap()));
    let mut s = Session::new(&engine);
    s.handle(&engine, Input::text("explore balling"));
    let out = s.handle(&engine, Input::text("yes"));
    let Payload::EvidenceList(view) = &out[0].payload else { panic!("{:?}", kinds(&out)) };
    assert_eq!(view.discarded_claims, 1);
    assert!(view.items.iter().all(|i| !i.snippet.contains("80 μm")));
    assert!(out[1].text.contains("no text model configured"), "{}", out[1].text);
}

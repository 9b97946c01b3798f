use proptest::prelude::*;

use defect_sage_core::clock::SteppingClock;
use defect_sage_core::eval::{build_confusion, cohens_kappa, compute_metrics, LabeledRecord};
use defect_sage_core::evidence::{resolve_conflicts, ClaimSource, ParameterClaim};
use defect_sage_core::kb::{Parameter, VocabularyScope};
use defect_sage_core::query::{close_matches, similarity_ratio};
use defect_sage_core::vision::{offline_alignment_score, shipped_descriptors, Alignment, Dimension, FeatureObservation};
use defect_sage_core::KnowledgeBase;

fn labels() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..4, 0u8..4), 1..80)
}

fn records(pairs: &[(u8, u8)], names: &[&str; 4]) -> Vec<LabeledRecord> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, (r, p))| LabeledRecord::new(i.to_string(), names[*r as usize], names[*p as usize]))
        .collect()
}

proptest! {
    #[test]
    fn ratio_is_symmetric_in_range(a in "[a-e ]{0,20}", b in "[a-e ]{0,20}") {
        let r = similarity_ratio(&a, &b);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert_eq!(similarity_ratio(&a, &a), 1.0);
        prop_assert_eq!(r.to_bits(), similarity_ratio(&a, &b).to_bits());
    }

    #[test]
    fn close_matches_draws_from_vocabulary(term in "[a-z ]{0,16}", n in 1usize..5, cutoff in 0.0f64..1.0) {
        let kb = KnowledgeBase::shipped();
        let vocabulary = kb.flatten_vocabulary(VocabularyScope::AllTerms);
        let found = close_matches(&term, &vocabulary, n, cutoff);
        prop_assert!(found.len() <= n);
        for w in found.windows(2) {
            prop_assert!(w[0].similarity >= w[1].similarity);
        }
        for m in &found {
            prop_assert!(vocabulary.contains(&m.term));
            prop_assert!(m.similarity >= cutoff);
        }
    }

    #[test]
    fn metrics_ignore_record_order_and_label_names(pairs in labels(), seed in any::<u64>()) {
        let names = ["lof", "gas", "keyhole", "balling"];
        let renamed = ["w", "x", "y", "z"];
        let base = records(&pairs, &names);
        let mut shuffled = base.clone();
        let len = shuffled.len();
        for i in 0..len {
            shuffled.swap(i, (seed as usize).wrapping_add(i * 31) % len);
        }
        let m1 = compute_metrics(&build_confusion(&base).unwrap()).unwrap();
        let m2 = compute_metrics(&build_confusion(&shuffled).unwrap()).unwrap();
        let m3 = compute_metrics(&build_confusion(&records(&pairs, &renamed)).unwrap()).unwrap();
        for other in [&m2, &m3] {
            prop_assert!((m1.accuracy - other.accuracy).abs() < 1e-12);
            prop_assert!((m1.macro_f1 - other.macro_f1).abs() < 1e-12);
            prop_assert!((m1.macro_precision - other.macro_precision).abs() < 1e-12);
        }
        let k1 = cohens_kappa(&build_confusion(&base).unwrap()).ok().map(|k| k.kappa);
        let k2 = cohens_kappa(&build_confusion(&shuffled).unwrap()).ok().map(|k| k.kappa);
        prop_assert_eq!(k1, k2);
    }

    #[test]
    fn offline_score_is_monotone(highs in prop::collection::vec(any::<bool>(), 4), flip in 0usize..4) {
        let kb = KnowledgeBase::shipped();
        let descriptor = &shipped_descriptors(&kb).unwrap()[0];
        let obs = |h: &[bool]| -> Vec<FeatureObservation> {
            Dimension::ALL
                .iter()
                .zip(h)
                .map(|(d, high)| FeatureObservation {
                    dimension: *d,
                    observed: String::new(),
                    alignment: if *high { Alignment::High } else { Alignment::Low },
                })
                .collect()
        };
        let before = offline_alignment_score(&obs(&highs), descriptor);
        let mut raised = highs.clone();
        raised[flip] = true;
        let after = offline_alignment_score(&obs(&raised), descriptor);
        prop_assert!(after >= before);
        prop_assert!((0.0..=1.0).contains(&after));
    }

    #[test]
    fn conflict_partition_is_total(values in prop::collection::vec((0usize..3, 0.0f64..200.0), 0..15)) {
        let kb = KnowledgeBase::shipped();
        let clock = SteppingClock::fixture();
        let params = [
            (Parameter::VolumetricEnergyDensity, "J/mm³"),
            (Parameter::LaserPower, "W"),
            (Parameter::HatchSpacing, "μm"),
        ];
        let claims: Vec<ParameterClaim> = values
            .iter()
            .enumerate()
            .map(|(i, (p, v))| ParameterClaim {
                parameter: params[*p].0,
                value: *v,
                units: params[*p].1.into(),
                source: ClaimSource { title: format!("s{i}"), url: format!("https://example.org/{i}") },
                span: (0, 0),
            })
            .collect();
        let forward = resolve_conflicts(&claims, &kb, "Lack of fusion porosity", "IN625", &clock);
        let mut reversed = claims.clone();
        reversed.reverse();
        let backward = resolve_conflicts(&reversed, &kb, "Lack of fusion porosity", "IN625", &clock);
        prop_assert_eq!(forward.len(), claims.len());
        prop_assert_eq!(forward.audit.len(), claims.len());
        let titles = |d: &[defect_sage_core::evidence::Decision]| {
            let mut t: Vec<String> = d.iter().map(|x| x.claim.source.title.clone()).collect();
            t.sort();
            t
        };
        prop_assert_eq!(titles(&forward.kept), titles(&backward.kept));
        prop_assert_eq!(titles(&forward.discarded), titles(&backward.discarded));
        prop_assert_eq!(titles(&forward.unverified), titles(&backward.unverified));
    }
}

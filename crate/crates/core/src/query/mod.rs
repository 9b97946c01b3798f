//! Smart Search: interpretation of free-text defect queries.
//!
//! Interpretation runs in two stages. Vocabulary terms found verbatim (on
//! word boundaries, case-insensitively) inside the input win outright, the
//! longest term first. Otherwise the whole input and each of its tokens are
//! fuzzy-matched against the vocabulary with the gestalt ratio.

mod gestalt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{KnowledgeBase, VocabularyScope};
use crate::text::normalize;

pub use gestalt::{matching_blocks, similarity_ratio, MatchBlock};

pub const DEFAULT_MAX_MATCHES: usize = 3;
pub const DEFAULT_CUTOFF: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTerm {
    pub term: String,
    pub similarity: f64,
}

/// Up to `n` vocabulary terms whose ratio against `term` reaches `cutoff`,
/// best first; ties keep vocabulary order. Comparison is on normalized
/// (lowercased, whitespace-collapsed) text.
pub fn close_matches<S: AsRef<str>>(term: &str, vocabulary: &[S], n: usize, cutoff: f64) -> Vec<ScoredTerm> {
    let probe = normalize(term);
    let mut scored: Vec<ScoredTerm> = vocabulary
        .iter()
        .filter_map(|candidate| {
            let candidate = candidate.as_ref();
            let similarity = similarity_ratio(&probe, &normalize(candidate));
            (similarity >= cutoff).then(|| ScoredTerm { term: candidate.to_string(), similarity })
        })
        .collect();
    // stable: equal scores stay in vocabulary order
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    scored.truncate(n);
    scored
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    ExactSubstring,
    Fuzzy,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryInterpretation {
    pub raw_input: String,
    pub resolved_term: Option<String>,
    pub match_kind: MatchKind,
    pub similarity: f64,
    pub alternates: Vec<ScoredTerm>,
}

impl QueryInterpretation {
    fn unresolved(raw_input: &str) -> Self {
        Self {
            raw_input: raw_input.to_string(),
            resolved_term: None,
            match_kind: MatchKind::None,
            similarity: 0.0,
            alternates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disambiguation {
    pub parent: String,
    pub options: Vec<String>,
    pub prompt_text: String,
}

impl Disambiguation {
    /// Numbered option list as shown to the user.
    pub fn render(&self) -> String {
        let mut out = self.prompt_text.clone();
        for (i, option) in self.options.iter().enumerate() {
            out.push_str(&format!("\n[{}] {}", i + 1, option));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Refinement {
    LeafResolved { defect: String },
    Choose(Disambiguation),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("{0:?} is neither a defect nor a category in the knowledge base")]
    UnknownTerm(String),
}

/// Query interpretation bound to one knowledge base.
#[derive(Debug, Clone)]
pub struct QueryEngine<'kb> {
    kb: &'kb KnowledgeBase,
    vocabulary: Vec<String>,
    normalized: Vec<String>,
    max_matches: usize,
    cutoff: f64,
}

impl<'kb> QueryEngine<'kb> {
    /// Searchable vocabulary is every leaf and category name, except
    /// category names that label more than one node (`Main`, `Other`): they
    /// group siblings and do not identify a defect family on their own.
    pub fn new(kb: &'kb KnowledgeBase) -> Self {
        let vocabulary: Vec<String> = kb
            .flatten_vocabulary(VocabularyScope::AllTerms)
            .into_iter()
            .filter(|term| kb.is_leaf(term) || kb.tree().category_occurrences(term) == 1)
            .collect();
        let normalized = vocabulary.iter().map(|t| normalize(t)).collect();
        Self { kb, vocabulary, normalized, max_matches: DEFAULT_MAX_MATCHES, cutoff: DEFAULT_CUTOFF }
    }

    pub fn with_limits(mut self, max_matches: usize, cutoff: f64) -> Self {
        self.max_matches = max_matches.max(1);
        self.cutoff = cutoff.clamp(0.0, 1.0);
        self
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn interpret(&self, text: &str) -> QueryInterpretation {
        let input = normalize(text);
        if input.is_empty() {
            return QueryInterpretation::unresolved(text);
        }

        let mut hits: Vec<usize> = (0..self.vocabulary.len())
            .filter(|&i| contains_on_word_boundary(&input, &self.normalized[i]))
            .collect();
        if !hits.is_empty() {
            hits.sort_by(|&x, &y| {
                let lx = self.normalized[x].chars().count();
                let ly = self.normalized[y].chars().count();
                ly.cmp(&lx).then(x.cmp(&y))
            });
            let best = hits[0];
            return QueryInterpretation {
                raw_input: text.to_string(),
                resolved_term: Some(self.vocabulary[best].clone()),
                match_kind: MatchKind::ExactSubstring,
                similarity: 1.0,
                alternates: hits[1..]
                    .iter()
                    .map(|&i| ScoredTerm { term: self.vocabulary[i].clone(), similarity: 1.0 })
                    .collect(),
            };
        }

        let mut probes = vec![input.clone()];
        for token in input.split(|c: char| c.is_whitespace()) {
            let token = token.trim_matches(|c: char| !c.is_alphanumeric());
            if !token.is_empty() && !probes.iter().any(|p| p == token) {
                probes.push(token.to_string());
            }
        }
        // best score per vocabulary index
        let mut best: Vec<Option<f64>> = vec![None; self.vocabulary.len()];
        for probe in &probes {
            for m in close_matches(probe, &self.vocabulary, self.max_matches, self.cutoff) {
                let idx = self.vocabulary.iter().position(|t| *t == m.term).expect("term from vocabulary");
                if best[idx].is_none_or(|s| m.similarity > s) {
                    best[idx] = Some(m.similarity);
                }
            }
        }
        let mut ranked: Vec<(usize, f64)> =
            best.iter().enumerate().filter_map(|(i, s)| s.map(|s| (i, s))).collect();
        ranked.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
        ranked.truncate(self.max_matches);

        match ranked.split_first() {
            Some((&(top, similarity), rest)) => QueryInterpretation {
                raw_input: text.to_string(),
                resolved_term: Some(self.vocabulary[top].clone()),
                match_kind: MatchKind::Fuzzy,
                similarity,
                alternates: rest
                    .iter()
                    .map(|&(i, s)| ScoredTerm { term: self.vocabulary[i].clone(), similarity: s })
                    .collect(),
            },
            None => QueryInterpretation::unresolved(text),
        }
    }

    /// Leaf terms resolve directly; categories expand to every leaf in their
    /// subtree (flattened across nested sub-categories) in document order.
    pub fn disambiguate(&self, term: &str) -> Result<Refinement, QueryError> {
        if let Some(leaf) = self.kb.canonical_leaf(term) {
            return Ok(Refinement::LeafResolved { defect: leaf });
        }
        let nodes = self.kb.tree().categories_named(term);
        if nodes.is_empty() {
            return Err(QueryError::UnknownTerm(term.to_string()));
        }
        let parent = nodes[0].name.clone();
        let mut options: Vec<String> = Vec::new();
        for node in nodes {
            for leaf in node.subtree_leaves() {
                if !options.iter().any(|o| o == leaf) {
                    options.push(leaf.to_string());
                }
            }
        }
        let prompt_text = format!("🔍 Multiple types of '{parent}':");
        Ok(Refinement::Choose(Disambiguation { parent, options, prompt_text }))
    }
}

pub fn interpret_query(text: &str, kb: &KnowledgeBase) -> QueryInterpretation {
    QueryEngine::new(kb).interpret(text)
}

pub fn disambiguate(term: &str, kb: &KnowledgeBase) -> Result<Refinement, QueryError> {
    QueryEngine::new(kb).disambiguate(term)
}

/// True when `needle` occurs in `haystack` with non-alphanumeric characters (or
/// the string ends) on both sides.
pub fn contains_on_word_boundary(haystack: &str, needle: &str) -> bool {
    if needle.is_empty() {
        return false;
    }
    haystack.match_indices(needle).any(|(start, _)| {
        let before = haystack[..start].chars().next_back();
        let after = haystack[start + needle.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::shipped()
    }

    #[test]
    fn close_matches_examples() {
        let kb = kb();
        let vocab = kb.flatten_vocabulary(VocabularyScope::AllTerms);
        let porsity = close_matches("porsity", &vocab, 3, 0.6);
        assert_eq!(porsity[0].term, "Porosity");
        assert_eq!(close_matches("crackng", &vocab, 3, 0.6)[0].term, "Cracking");
        assert!(close_matches("zzzz", &vocab, 3, 0.6).is_empty());
    }

    #[test]
    fn close_matches_breaks_ties_by_vocabulary_order() {
        let vocab = ["abd", "abc", "abe"];
        let got = close_matches("abx", &vocab, 3, 0.0);
        assert_eq!(got.iter().map(|m| m.term.as_str()).collect::<Vec<_>>(), vec!["abd", "abc", "abe"]);
        assert_eq!(close_matches("abx", &vocab, 2, 0.0).len(), 2);
    }

    #[test]
    fn exact_substring_prefers_longest_term() {
        let kb = kb();
        let engine = QueryEngine::new(&kb);
        let q = engine.interpret("What is porosity?");
        assert_eq!(q.resolved_term.as_deref(), Some("Porosity"));
        assert_eq!(q.match_kind, MatchKind::ExactSubstring);
        assert_eq!(q.similarity, 1.0);

        let q = engine.interpret("Explore gas porosity");
        assert_eq!(q.resolved_term.as_deref(), Some("Gas porosity"));
        assert_eq!(q.alternates[0].term, "Porosity");
    }

    #[test]
    fn fuzzy_fallback_and_no_match() {
        let kb = kb();
        let engine = QueryEngine::new(&kb);
        let q = engine.interpret("porsity");
        assert_eq!(q.resolved_term.as_deref(), Some("Porosity"));
        assert_eq!(q.match_kind, MatchKind::Fuzzy);
        assert!((q.similarity - 14.0 / 15.0).abs() < 1e-12);
        assert!(q.alternates.windows(2).all(|w| w[0].similarity >= w[1].similarity));

        let q = engine.interpret("tell me about the weather");
        assert_eq!(q.match_kind, MatchKind::None);
        assert!(q.resolved_term.is_none());
        assert_eq!(engine.interpret("   ").match_kind, MatchKind::None);
    }

    #[test]
    fn placeholder_categories_are_not_searchable() {
        let kb = kb();
        let engine = QueryEngine::new(&kb);
        assert!(!engine.vocabulary().iter().any(|t| t == "Main" || t == "Other"));
        assert!(engine.vocabulary().iter().any(|t| t == "Solidification cracking"));
        // "main" inside "maintain" is not a word-boundary hit either way
        assert!(!contains_on_word_boundary("maintain", "main"));
        assert!(contains_on_word_boundary("is it balling?", "balling"));
    }

    #[test]
    fn disambiguation_examples() {
        let kb = kb();
        let engine = QueryEngine::new(&kb);
        match engine.disambiguate("Cracking").unwrap() {
            Refinement::Choose(d) => {
                assert_eq!(
                    d.options,
                    vec![
                        "Solidification cracking",
                        "Ductility-dip cracking",
                        "Reheat and post weld heat treatment cracking",
                        "Strain age cracking",
                        "Lamellar cracking/Delamination",
                        "Copper contamination cracking"
                    ]
                );
                assert!(d.render().starts_with("🔍 Multiple types of 'Cracking':\n[1] Solidification cracking"));
            }
            other => panic!("{other:?}"),
        }
        match engine.disambiguate("porosity").unwrap() {
            Refinement::Choose(d) => assert_eq!(
                d.options,
                vec!["Gas porosity", "Keyhole porosity", "Lack of fusion porosity", "Surface-connected porosity"]
            ),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            engine.disambiguate("Balling").unwrap(),
            Refinement::LeafResolved { defect: "Balling".into() }
        );
        assert_eq!(
            engine.disambiguate("Solidification cracking").unwrap(),
            Refinement::LeafResolved { defect: "Solidification cracking".into() }
        );
        assert!(matches!(engine.disambiguate("Unobtanium"), Err(QueryError::UnknownTerm(_))));
    }
}

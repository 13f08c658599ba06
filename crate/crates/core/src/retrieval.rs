//! Candidate retrieval for sub-queries.

use std::collections::HashSet;

use crate::model::{Candidate, SubQuery};

pub trait Retriever: Send + Sync {
    /// At most `k` candidates for `sub`, best first.
    fn retrieve(&self, sub: &SubQuery, k: usize) -> Vec<Candidate>;
}

/// Token-overlap search over an in-memory corpus. Score is the number of
/// distinct sub-query tokens found in the title or content; ties go to the
/// smaller id. Candidates sharing no token are never returned.
#[derive(Debug, Clone)]
pub struct CorpusRetriever {
    docs: Vec<(Candidate, HashSet<String>)>,
}

fn tokens(text: &str) -> HashSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 1)
        .map(str::to_lowercase)
        .collect()
}

impl CorpusRetriever {
    pub fn new(corpus: Vec<Candidate>) -> Self {
        let docs = corpus
            .into_iter()
            .map(|c| {
                let toks = tokens(&format!("{} {}", c.title, c.content));
                (c, toks)
            })
            .collect();
        Self { docs }
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }
}

impl Retriever for CorpusRetriever {
    fn retrieve(&self, sub: &SubQuery, k: usize) -> Vec<Candidate> {
        let want = tokens(&sub.text);
        let mut scored: Vec<(usize, &Candidate)> = self
            .docs
            .iter()
            .map(|(c, toks)| (want.intersection(toks).count(), c))
            .filter(|(s, _)| *s > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.id.cmp(&b.1.id)));
        scored.into_iter().take(k).map(|(_, c)| c.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::side;

    #[test]
    fn ranks_by_overlap_then_id() {
        let corpus = vec![
            Candidate::new("c", "Beijing hotels", "cheap rooms", side()),
            Candidate::new("a", "Beijing", "", side()),
            Candidate::new("b", "Shanghai hotels", "", side()),
            Candidate::new("d", "Gardening", "", side()),
        ];
        let r = CorpusRetriever::new(corpus);
        let got: Vec<String> = r
            .retrieve(&SubQuery::new("cheap Beijing hotels", []), 3)
            .into_iter()
            .map(|c| c.id.0)
            .collect();
        assert_eq!(got, ["c", "a", "b"]);
        assert_eq!(r.retrieve(&SubQuery::new("Beijing", []), 1).len(), 1);
        assert!(r.retrieve(&SubQuery::new("volcano", []), 5).is_empty());
    }
}

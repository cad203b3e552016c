//! Choosing generated/edited pairs for the preference survey.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CSRecord, Strategy};
use crate::editmetrics::hter_pair;

pub const DEFAULT_MIN_HTER: f64 = 0.39;
pub const DEFAULT_DOUBLE_PER_STRATEGY: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub record_id: String,
    pub strategy: Strategy,
    pub hter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSelection {
    pub min_hter: f64,
    /// Selected pairs ordered by strategy, then record id.
    pub pairs: Vec<EvalPair>,
    pub per_strategy: BTreeMap<Strategy, usize>,
    /// Subset of `pairs` to be assessed by a second respondent.
    pub double_annotated: Vec<String>,
}

impl EvalSelection {
    /// Distinct pairs plus second assessments.
    pub fn total_assessments(&self) -> usize {
        self.pairs.len() + self.double_annotated.len()
    }
}

/// Every edited record with HTER at or above `min_hter`, plus a seeded pick
/// of up to `double_per_strategy` of them per strategy for double annotation.
pub fn select_eval_pairs(records: &[CSRecord], min_hter: f64, double_per_strategy: usize, seed: u64) -> EvalSelection {
    let mut pairs: Vec<EvalPair> = records
        .iter()
        .filter_map(|r| {
            let edited = r.edited_text.as_deref()?;
            let h = hter_pair(&r.generated_text, edited).ok()?;
            (h >= min_hter).then(|| EvalPair { record_id: r.id.clone(), strategy: r.strategy, hter: h })
        })
        .collect();
    pairs.sort_by(|a, b| (a.strategy, &a.record_id).cmp(&(b.strategy, &b.record_id)));

    let mut per_strategy: BTreeMap<Strategy, usize> = Strategy::ALL.iter().map(|&s| (s, 0)).collect();
    for p in &pairs {
        *per_strategy.entry(p.strategy).or_default() += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut double = Vec::new();
    for s in Strategy::ALL {
        let mut ids: Vec<&str> = pairs.iter().filter(|p| p.strategy == s).map(|p| p.record_id.as_str()).collect();
        ids.shuffle(&mut rng);
        let mut picked: Vec<String> = ids.into_iter().take(double_per_strategy).map(str::to_string).collect();
        picked.sort();
        double.extend(picked);
    }
    EvalSelection { min_hter, pairs, per_strategy, double_annotated: double }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AnnotatorRole;

    fn rec(id: &str, s: Strategy, gen: &str, ed: &str) -> CSRecord {
        CSRecord {
            id: id.into(),
            claim_id: id.into(),
            strategy: s,
            generated_text: gen.into(),
            edited_text: Some(ed.into()),
            annotator_role: Some(if s == Strategy::NGO { AnnotatorRole::NGO } else { AnnotatorRole::FC }),
            ground_spans: vec![],
            comments: None,
            edited_at: None,
        }
    }

    #[test]
    fn threshold_is_inclusive() {
        // 2 insertions over a 5-token reference: 0.4
        let rs = vec![
            rec("a", Strategy::FC, "a b c", "a b c d e"),
            rec("b", Strategy::FC, "a b c", "a b c"),
            rec("c", Strategy::MIX, "x y z", "p q r"),
        ];
        let sel = select_eval_pairs(&rs, 0.4, 7, 0);
        assert_eq!(sel.pairs.iter().map(|p| p.record_id.as_str()).collect::<Vec<_>>(), ["a", "c"]);
        assert_eq!(sel.per_strategy[&Strategy::FC], 1);
        assert_eq!(sel.per_strategy[&Strategy::NGO], 0);
        assert_eq!(sel.double_annotated, ["a", "c"]);
        assert_eq!(sel.total_assessments(), 4);
    }

    #[test]
    fn double_picks_are_seeded() {
        let rs: Vec<CSRecord> = (0..10).map(|i| rec(&format!("n{i}"), Strategy::NGO, "a", "b")).collect();
        let a = select_eval_pairs(&rs, 0.39, 3, 5);
        let b = select_eval_pairs(&rs, 0.39, 3, 5);
        assert_eq!(a, b);
        assert_eq!(a.double_annotated.len(), 3);
    }
}

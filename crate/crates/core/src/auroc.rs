//! AUROC as a Mann-Whitney rank statistic.
//!
//! Scores are oriented so that higher means more out-of-distribution. With
//! midranks over the pooled scores, twice the OOD rank sum minus `m (m + 1)`
//! is twice the Mann-Whitney `U`, i.e. `2 * #(ood > id) + #(ood == id)` over
//! all cross pairs. Everything up to the final division is integer-exact.

use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};

/// Orientation shared by every detector in this crate.
pub const ORIENTATION: &str = "higher score = more OOD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
}

impl ScoreSet {
    pub fn new(id_scores: Vec<f64>, ood_scores: Vec<f64>) -> Result<Self> {
        if id_scores.is_empty() || ood_scores.is_empty() {
            return Err(OodError::Parameter(format!(
                "AUROC needs scores on both sides, got {} ID and {} OOD",
                id_scores.len(),
                ood_scores.len()
            )));
        }
        if id_scores.iter().chain(&ood_scores).any(|s| !s.is_finite()) {
            return Err(OodError::Parameter("scores must be finite".into()));
        }
        Ok(ScoreSet {
            id_scores,
            ood_scores,
        })
    }

    pub fn id_scores(&self) -> &[f64] {
        &self.id_scores
    }

    pub fn ood_scores(&self) -> &[f64] {
        &self.ood_scores
    }

    /// The same scores with the roles of the two sides exchanged.
    pub fn swapped(&self) -> ScoreSet {
        ScoreSet {
            id_scores: self.ood_scores.clone(),
            ood_scores: self.id_scores.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankStatistic {
    /// `2 U`: twice the number of cross pairs with the OOD score above the ID
    /// score, plus the number of tied cross pairs.
    pub twice_u: u64,
    pub n_id: u64,
    pub n_ood: u64,
    /// Cross pairs with equal scores.
    pub tied_pairs: u64,
}

impl RankStatistic {
    pub fn auroc(&self) -> f64 {
        self.twice_u as f64 / (2 * self.n_id * self.n_ood) as f64
    }
}

pub fn rank_statistic(scores: &ScoreSet) -> RankStatistic {
    let n_id = scores.id_scores.len();
    let n_ood = scores.ood_scores.len();
    // (score, is_ood); adding 0.0 folds -0.0 into +0.0 so they tie
    let mut pooled: Vec<(f64, bool)> = scores
        .id_scores
        .iter()
        .map(|&s| (s + 0.0, false))
        .chain(scores.ood_scores.iter().map(|&s| (s + 0.0, true)))
        .collect();
    pooled.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));

    // sum over OOD entries of twice their midrank
    let mut twice_rank_sum: u64 = 0;
    let mut tied_pairs: u64 = 0;
    let mut start = 0;
    while start < pooled.len() {
        let value = pooled[start].0;
        let end = start + pooled[start..].iter().take_while(|p| p.0 == value).count();
        let ood_here = pooled[start..end].iter().filter(|p| p.1).count() as u64;
        let id_here = (end - start) as u64 - ood_here;
        // 1-based ranks start+1 ..= end share the midrank (start + 1 + end) / 2
        twice_rank_sum += ood_here * (start as u64 + 1 + end as u64);
        tied_pairs += ood_here * id_here;
        start = end;
    }
    let m = n_ood as u64;
    RankStatistic {
        twice_u: twice_rank_sum - m * (m + 1),
        n_id: n_id as u64,
        n_ood: m,
        tied_pairs,
    }
}

/// `P(ood > id) + P(ood == id) / 2` over all cross pairs.
pub fn auroc(scores: &ScoreSet) -> f64 {
    rank_statistic(scores).auroc()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn au(id: &[f64], ood: &[f64]) -> f64 {
        auroc(&ScoreSet::new(id.to_vec(), ood.to_vec()).unwrap())
    }

    #[test]
    fn worked_cases() {
        assert_eq!(au(&[0.0, 1.0], &[2.0, 3.0]), 1.0);
        assert_eq!(au(&[2.0, 3.0], &[0.0, 1.0]), 0.0);
        assert_eq!(au(&[5.0, 5.0], &[5.0, 5.0]), 0.5);
        assert_eq!(au(&[1.0, 3.0], &[2.0, 4.0]), 0.75);
    }

    #[test]
    fn signed_zero_ties() {
        let s = ScoreSet::new(vec![-0.0], vec![0.0]).unwrap();
        let r = rank_statistic(&s);
        assert_eq!(r.tied_pairs, 1);
        assert_eq!(r.auroc(), 0.5);
    }

    #[test]
    fn tie_count() {
        let s = ScoreSet::new(vec![1.0, 2.0, 2.0], vec![2.0, 3.0]).unwrap();
        let r = rank_statistic(&s);
        assert_eq!(r.tied_pairs, 2);
        // ood 2.0: beats 1.0, ties two; ood 3.0: beats all three
        assert_eq!(r.twice_u, 2 + 2 + 6);
    }

    #[test]
    fn invalid_sets() {
        assert!(ScoreSet::new(vec![], vec![1.0]).is_err());
        assert!(ScoreSet::new(vec![1.0], vec![]).is_err());
        assert!(ScoreSet::new(vec![f64::NAN], vec![1.0]).is_err());
    }
}

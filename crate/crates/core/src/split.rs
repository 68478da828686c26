//! Leakage-free stratified splitting.
//!
//! Whole groups (lesions) are assigned to a split, so no group ever spans two
//! splits. Groups are stratified by their (class, source) pair and, inside
//! each stratum, shuffled with a seeded ChaCha stream and cut by largest
//! remainder so each split's group count is within one group of its target.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OodError, Result};
use crate::manifest::{SampleManifest, SampleRecord, Split};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        let parts = r.as_array();
        if parts.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(OodError::Parameter(format!(
                "split ratios must be non-negative, got {train}/{val}/{test}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OodError::Parameter(format!(
                "split ratios must sum to 1, got {sum}"
            )));
        }
        Ok(r)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }

    /// Group counts per split for a stratum of `m` groups (largest remainder).
    pub fn apportion(&self, m: usize) -> [usize; 3] {
        let targets = self.as_array().map(|r| r * m as f64);
        let mut counts = targets.map(|t| (t + 1e-9).floor() as usize);
        let mut left = m.saturating_sub(counts.iter().sum());
        let mut order = [0usize, 1, 2];
        // larger fractional part first, lower split index on ties
        order.sort_by(|&a, &b| {
            let fa = targets[a] - counts[a] as f64;
            let fb = targets[b] - counts[b] as f64;
            fb.total_cmp(&fa).then(a.cmp(&b))
        });
        for &j in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[j] += 1;
            left -= 1;
        }
        counts
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.80,
            val: 0.05,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub class_label: String,
    pub source: String,
    /// Groups per split, in train/val/test order.
    pub groups: [usize; 3],
    /// Samples per split, in train/val/test order.
    pub samples: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub ratios: SplitRatios,
    pub seed: u64,
    pub assignment: BTreeMap<String, Split>,
    pub strata: Vec<StratumSummary>,
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    /// Copy of `manifest` with every split filled from this assignment.
    pub fn apply(&self, manifest: &SampleManifest) -> Result<SampleManifest> {
        let records = manifest
            .records()
            .iter()
            .map(|r| {
                let split = *self.assignment.get(&r.sample_id).ok_or_else(|| {
                    OodError::Manifest(format!("sample {:?} has no assignment", r.sample_id))
                })?;
                Ok(SampleRecord {
                    split,
                    ..r.clone()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        SampleManifest::new(records)
    }
}

fn majority<'a>(labels: impl Iterator<Item = &'a str>) -> (&'a str, usize) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let distinct = counts.len();
    // BTreeMap order makes the lexicographically smallest label win ties
    let best = counts
        .iter()
        .fold(None::<(&str, usize)>, |best, (&l, &c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l)
        .unwrap_or("");
    (best, distinct)
}

pub fn stratified_group_split(
    manifest: &SampleManifest,
    ratios: SplitRatios,
    seed: u64,
) -> Result<SplitAssignment> {
    if manifest.is_empty() {
        return Err(OodError::EmptySelection("manifest has no records".into()));
    }
    SplitRatios::new(ratios.train, ratios.val, ratios.test)?;

    let mut groups: BTreeMap<&str, Vec<&SampleRecord>> = BTreeMap::new();
    for r in manifest.records() {
        groups.entry(r.group_id.as_str()).or_default().push(r);
    }

    let mut warnings = Vec::new();
    let mut strata: BTreeMap<(&str, &str), Vec<&str>> = BTreeMap::new();
    for (&gid, members) in &groups {
        let (class, n_classes) = majority(members.iter().map(|r| r.class_label.as_str()));
        if n_classes > 1 {
            warnings.push(format!(
                "group {gid:?} has {n_classes} class labels; stratified as {class:?}"
            ));
        }
        let (source, n_sources) = majority(members.iter().map(|r| r.source.as_str()));
        if n_sources > 1 {
            warnings.push(format!(
                "group {gid:?} has {n_sources} sources; stratified as {source:?}"
            ));
        }
        strata.entry((class, source)).or_default().push(gid);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut summaries = Vec::with_capacity(strata.len());
    for ((class, source), mut gids) in strata {
        gids.shuffle(&mut rng);
        let counts = ratios.apportion(gids.len());
        let mut summary = StratumSummary {
            class_label: class.to_string(),
            source: source.to_string(),
            groups: counts,
            samples: [0; 3],
        };
        let mut cursor = 0;
        for (slot, &count) in counts.iter().enumerate() {
            let split = Split::ASSIGNABLE[slot];
            for gid in &gids[cursor..cursor + count] {
                for r in &groups[gid] {
                    assignment.insert(r.sample_id.clone(), split);
                    summary.samples[slot] += 1;
                }
            }
            cursor += count;
        }
        summaries.push(summary);
    }

    Ok(SplitAssignment {
        ratios,
        seed,
        assignment,
        strata: summaries,
        warnings,
    })
}

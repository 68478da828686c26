//! Fit-score-evaluate runs over a manifest-aligned embedding matrix.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::auroc::{rank_statistic, ScoreSet, ORIENTATION};
use crate::distance::Metric;
use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};
use crate::lof::{fit_lof, LofSweepCache};
use crate::manifest::{Filter, SampleManifest};
use crate::ssd::{fit_gaussian, fit_gaussian_default};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DetectorConfig {
    Lof { k: usize, metric: Metric },
    /// `epsilon: None` selects the trace-scaled default loading.
    Ssd { epsilon: Option<f64> },
}

impl fmt::Display for DetectorConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorConfig::Lof { k, .. } => write!(f, "K = {k}"),
            DetectorConfig::Ssd { .. } => f.write_str("SSD"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub detector: DetectorConfig,
    /// Reference (in-distribution train) selection.
    pub fit_filter: Filter,
    pub id_eval_filter: Filter,
    /// OOD classes, or another source's ID samples for a source probe.
    pub ood_eval_filter: Filter,
    /// L2-normalize embeddings before fitting and scoring.
    #[serde(default)]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_path: Option<String>,
}

impl ExperimentConfig {
    pub fn with_detector(&self, detector: DetectorConfig) -> Self {
        ExperimentConfig {
            detector,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl ScoreSummary {
    pub fn of(scores: &[f64]) -> Self {
        let mut s = scores.to_vec();
        s.sort_unstable_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        ScoreSummary {
            min: s[0],
            median,
            max: s[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub detector_label: String,
    pub auroc: f64,
    pub n_fit: usize,
    pub n_id: usize,
    pub n_ood: usize,
    pub id_summary: ScoreSummary,
    pub ood_summary: ScoreSummary,
    pub tied_pairs: u64,
    pub orientation: String,
    /// Diagonal loading actually applied (SSD only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    /// Published full-scale AUROC for the matching protocol, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_auroc: Option<f64>,
    pub notes: Vec<String>,
}

impl EvalReport {
    /// Report for scores produced outside `run_experiment`, e.g. by a model
    /// loaded from disk.
    pub fn from_scores(
        config: &ExperimentConfig,
        sel: &Selections,
        id_scores: Vec<f64>,
        ood_scores: Vec<f64>,
        epsilon: Option<f64>,
    ) -> Result<Self> {
        build_report(config, sel, id_scores, ood_scores, epsilon, base_notes(config))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OodError::Format(format!("report JSON: {e}")))
    }
}

/// Resolved fit / ID / OOD selections after leakage checks.
#[derive(Debug, Clone)]
pub struct Selections {
    pub fit: Vec<usize>,
    pub id_eval: Vec<usize>,
    pub ood_eval: Vec<usize>,
}

pub fn resolve_selections(
    config: &ExperimentConfig,
    manifest: &SampleManifest,
    embeddings: &EmbeddingMatrix,
) -> Result<Selections> {
    if manifest.len() != embeddings.n() {
        return Err(OodError::Parameter(format!(
            "manifest has {} records but embeddings have {} rows",
            manifest.len(),
            embeddings.n()
        )));
    }
    let fit = manifest.select(&config.fit_filter)?;
    let id_eval = manifest.select(&config.id_eval_filter)?;
    let ood_eval = manifest.select(&config.ood_eval_filter)?;

    let sel = Selections {
        fit,
        id_eval,
        ood_eval,
    };
    check_disjoint(manifest, &sel)?;
    Ok(sel)
}

/// Refuses any sample or group shared between the fit set and an eval set,
/// and any sample selected as both ID and OOD.
pub fn check_disjoint(manifest: &SampleManifest, sel: &Selections) -> Result<()> {
    let records = manifest.records();
    let fit_samples: HashSet<usize> = sel.fit.iter().copied().collect();
    let fit_groups: HashSet<&str> = sel.fit.iter().map(|&i| records[i].group_id.as_str()).collect();
    for (side, idx) in [("ID eval", &sel.id_eval), ("OOD eval", &sel.ood_eval)] {
        for &i in idx.iter() {
            let r = &records[i];
            if fit_samples.contains(&i) {
                return Err(OodError::Leakage(format!(
                    "sample {:?} is in both the fit set and the {side} set",
                    r.sample_id
                )));
            }
            if fit_groups.contains(r.group_id.as_str()) {
                return Err(OodError::Leakage(format!(
                    "group {:?} has samples in both the fit set and the {side} set",
                    r.group_id
                )));
            }
        }
    }
    let id_set: HashSet<usize> = sel.id_eval.iter().copied().collect();
    if let Some(&i) = sel.ood_eval.iter().find(|i| id_set.contains(i)) {
        return Err(OodError::Leakage(format!(
            "sample {:?} is selected as both ID and OOD",
            records[i].sample_id
        )));
    }
    Ok(())
}

fn prepare(config: &ExperimentConfig, embeddings: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    if config.normalize {
        embeddings.l2_normalize()
    } else {
        Ok(embeddings.clone())
    }
}

fn base_notes(config: &ExperimentConfig) -> Vec<String> {
    let mut notes = vec![if config.normalize {
        "embeddings L2-normalized before fitting".to_string()
    } else {
        "embeddings used as given (no normalization)".to_string()
    }];
    match config.detector {
        DetectorConfig::Lof { metric, .. } => notes.push(format!(
            "LOF novelty mode, {metric} distance, exact brute-force neighbors"
        )),
        DetectorConfig::Ssd { .. } => notes.push(
            "single-Gaussian Mahalanobis score (no cluster conditioning), square-root form"
                .to_string(),
        ),
    }
    notes
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    config: &ExperimentConfig,
    sel: &Selections,
    id_scores: Vec<f64>,
    ood_scores: Vec<f64>,
    epsilon: Option<f64>,
    mut notes: Vec<String>,
) -> Result<EvalReport> {
    let scores = ScoreSet::new(id_scores, ood_scores)?;
    let stat = rank_statistic(&scores);
    if stat.tied_pairs > 0 {
        notes.push(format!("{} tied ID/OOD score pairs counted as 1/2", stat.tied_pairs));
    }
    Ok(EvalReport {
        config: config.clone(),
        detector_label: config.detector.to_string(),
        auroc: stat.auroc(),
        n_fit: sel.fit.len(),
        n_id: sel.id_eval.len(),
        n_ood: sel.ood_eval.len(),
        id_summary: ScoreSummary::of(scores.id_scores()),
        ood_summary: ScoreSummary::of(scores.ood_scores()),
        tied_pairs: stat.tied_pairs,
        orientation: ORIENTATION.to_string(),
        epsilon,
        reference_auroc: None,
        notes,
    })
}

pub fn run_experiment(
    config: &ExperimentConfig,
    manifest: &SampleManifest,
    embeddings: &EmbeddingMatrix,
) -> Result<EvalReport> {
    let sel = resolve_selections(config, manifest, embeddings)?;
    let z = prepare(config, embeddings)?;
    let fit = z.select(&sel.fit)?;
    let id_q = z.select(&sel.id_eval)?;
    let ood_q = z.select(&sel.ood_eval)?;
    let notes = base_notes(config);
    match config.detector {
        DetectorConfig::Lof { k, metric } => {
            let model = fit_lof(&fit, k, metric)?;
            let id_scores = model.score_batch(&id_q)?;
            let ood_scores = model.score_batch(&ood_q)?;
            build_report(config, &sel, id_scores, ood_scores, None, notes)
        }
        DetectorConfig::Ssd { epsilon } => {
            let stats = match epsilon {
                Some(e) => fit_gaussian(&fit, e)?,
                None => fit_gaussian_default(&fit)?,
            };
            let id_scores = stats.score_batch(&id_q)?;
            let ood_scores = stats.score_batch(&ood_q)?;
            build_report(config, &sel, id_scores, ood_scores, Some(stats.epsilon()), notes)
        }
    }
}

/// One report per `K`, in the given order. Neighbor lists for the fit set and
/// both query sets are computed once at the largest `K` and truncated, which
/// yields exactly the scores of independent runs.
pub fn k_sweep(
    base: &ExperimentConfig,
    ks: &[usize],
    manifest: &SampleManifest,
    embeddings: &EmbeddingMatrix,
) -> Result<Vec<EvalReport>> {
    let metric = match base.detector {
        DetectorConfig::Lof { metric, .. } => metric,
        DetectorConfig::Ssd { .. } => {
            return Err(OodError::Parameter("a K sweep needs a LOF detector".into()))
        }
    };
    let Some(&k_max) = ks.iter().max() else {
        return Ok(Vec::new());
    };
    let sel = resolve_selections(base, manifest, embeddings)?;
    let z = prepare(base, embeddings)?;
    let fit = z.select(&sel.fit)?;
    let id_q = z.select(&sel.id_eval)?;
    let ood_q = z.select(&sel.ood_eval)?;

    let cache = LofSweepCache::new(&fit, metric, k_max)?;
    let widest = cache.model(k_max)?;
    let id_lists = widest.query_neighbors(&id_q, k_max)?;
    let ood_lists = widest.query_neighbors(&ood_q, k_max)?;

    ks.iter()
        .map(|&k| {
            let config = base.with_detector(DetectorConfig::Lof { k, metric });
            let model = cache.model(k)?;
            let score = |lists: &[crate::lof::NeighborList]| -> Vec<f64> {
                lists
                    .iter()
                    .map(|nb| model.score_from_neighbors(&nb.truncated(k)))
                    .collect()
            };
            build_report(
                &config,
                &sel,
                score(&id_lists),
                score(&ood_lists),
                None,
                base_notes(&config),
            )
        })
        .collect()
}

/// CSV table with one row per detector label and one column per experiment
/// name, in first-seen order. Missing cells are left empty.
pub fn table_csv(reports: &[EvalReport]) -> String {
    let mut rows: Vec<String> = Vec::new();
    let mut cols: Vec<String> = Vec::new();
    for r in reports {
        if !rows.contains(&r.detector_label) {
            rows.push(r.detector_label.clone());
        }
        if !cols.contains(&r.config.name) {
            cols.push(r.config.name.clone());
        }
    }
    let mut out = String::from("detector");
    for c in &cols {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for row in &rows {
        out.push_str(row);
        for c in &cols {
            out.push(',');
            if let Some(r) = reports
                .iter()
                .find(|r| &r.detector_label == row && &r.config.name == c)
            {
                out.push_str(&format!("{:.3}", r.auroc));
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::{SampleRecord, Split};

    fn fixture() -> (SampleManifest, EmbeddingMatrix) {
        let mut recs = Vec::new();
        let mut rows = Vec::new();
        for i in 0..30 {
            let (class, split, x) = match i {
                0..=19 => ("NV", Split::Train, [1.0 + 0.01 * i as f64, 0.1 * (i % 5) as f64]),
                20..=24 => ("NV", Split::Test, [1.0 + 0.013 * i as f64, 0.1 * (i % 4) as f64]),
                _ => ("DF", Split::Test, [-3.0, 2.0 + i as f64]),
            };
            recs.push(SampleRecord {
                sample_id: format!("s{i}"),
                group_id: format!("g{i}"),
                class_label: class.into(),
                source: "HAM".into(),
                split,
            });
            rows.push(x);
        }
        (
            SampleManifest::new(recs).unwrap(),
            EmbeddingMatrix::from_rows(&rows).unwrap(),
        )
    }

    fn config(detector: DetectorConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: "toy".into(),
            detector,
            fit_filter: Filter::new().classes(["NV"]).split(Split::Train),
            id_eval_filter: Filter::new().classes(["NV"]).split(Split::Test),
            ood_eval_filter: Filter::new().classes(["DF"]),
            normalize: false,
            embeddings_path: None,
            manifest_path: None,
        }
    }

    #[test]
    fn planted_outliers_separate() {
        let (m, z) = fixture();
        let lof = run_experiment(
            &config(DetectorConfig::Lof {
                k: 3,
                metric: Metric::Euclidean,
            }),
            &m,
            &z,
        )
        .unwrap();
        assert_eq!(lof.auroc, 1.0);
        assert_eq!((lof.n_fit, lof.n_id, lof.n_ood), (20, 5, 5));
        assert_eq!(lof.orientation, ORIENTATION);

        let ssd = run_experiment(&config(DetectorConfig::Ssd { epsilon: None }), &m, &z).unwrap();
        assert_eq!(ssd.auroc, 1.0);
        assert!(ssd.epsilon.unwrap() > 0.0);
        assert!(ssd.notes.iter().any(|n| n.contains("single-Gaussian")));
    }

    #[test]
    fn overlap_is_refused() {
        let (m, z) = fixture();
        let mut c = config(DetectorConfig::Ssd { epsilon: None });
        c.id_eval_filter = Filter::new().classes(["NV"]);
        assert!(matches!(run_experiment(&c, &m, &z), Err(OodError::Leakage(_))));
    }

    #[test]
    fn empty_selection_is_refused() {
        let (m, z) = fixture();
        let mut c = config(DetectorConfig::Ssd { epsilon: None });
        c.ood_eval_filter = Filter::new().classes(["VASC"]);
        assert!(matches!(
            run_experiment(&c, &m, &z),
            Err(OodError::EmptySelection(_))
        ));
    }

    #[test]
    fn misaligned_inputs() {
        let (m, _) = fixture();
        let z = EmbeddingMatrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(
            run_experiment(&config(DetectorConfig::Ssd { epsilon: None }), &m, &z),
            Err(OodError::Parameter(_))
        ));
    }

    #[test]
    fn sweep_rejects_ssd() {
        let (m, z) = fixture();
        assert!(k_sweep(&config(DetectorConfig::Ssd { epsilon: None }), &[1], &m, &z).is_err());
    }

    #[test]
    fn report_json_round_trip() {
        let (m, z) = fixture();
        let r = run_experiment(&config(DetectorConfig::Ssd { epsilon: Some(0.01) }), &m, &z)
            .unwrap();
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn table_layout() {
        let (m, z) = fixture();
        let base = config(DetectorConfig::Lof {
            k: 3,
            metric: Metric::Euclidean,
        });
        let mut reports = k_sweep(&base, &[2, 3], &m, &z).unwrap();
        reports.push(run_experiment(&base.with_detector(DetectorConfig::Ssd { epsilon: None }), &m, &z).unwrap());
        let t = table_csv(&reports);
        assert_eq!(t, "detector,toy\nK = 2,1.000\nK = 3,1.000\nSSD,1.000\n");
    }
}

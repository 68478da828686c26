//! Named experiment protocols for the dermoscopy benchmark layout.
//!
//! Six diagnostic classes are in-distribution and the two rarest (DF, VASC)
//! form the OOD pool. The protocols fit on the train split of an ID
//! selection, score the test split of the same selection as ID, and score
//! a probe set as OOD. Source-probe protocols use another site's ID test
//! samples as the probe.
//!
//! `published` holds the full-scale AUROCs reported for each protocol, kept as
//! reference targets; synthetic fixtures are not expected to match them.

use crate::distance::Metric;
use crate::experiment::{DetectorConfig, ExperimentConfig};
use crate::manifest::{Filter, Split};

pub const ID_CLASSES: [&str; 6] = ["MEL", "NV", "BCC", "AK", "BKL", "SCC"];
pub const OOD_CLASSES: [&str; 2] = ["DF", "VASC"];

/// Row labels of the main K sweep.
pub const MAIN_SWEEP_KS: [usize; 5] = [10, 50, 100, 200, 300];
/// Column labels of the source-probe sweep.
pub const PROBE_SWEEP_KS: [usize; 8] = [40, 50, 60, 70, 100, 200, 250, 300];

/// Published supervised baseline on the HAM protocol (not implemented here).
pub const SUPERVISED_HAM_REFERENCE: f64 = 0.800;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// ID classes vs the DF/VASC pool.
    ClassHoldout,
    /// One site's ID samples vs another's.
    SourceProbe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub name: &'static str,
    pub kind: ProtocolKind,
    pub description: &'static str,
    pub fit: Filter,
    pub id_eval: Filter,
    pub ood_eval: Filter,
    /// `(K, AUROC)` pairs for LOF.
    pub published: &'static [(usize, f64)],
    pub published_ssd: Option<f64>,
}

impl Protocol {
    pub fn sweep_ks(&self) -> &'static [usize] {
        match self.kind {
            ProtocolKind::ClassHoldout => &MAIN_SWEEP_KS,
            ProtocolKind::SourceProbe => &PROBE_SWEEP_KS,
        }
    }

    pub fn published_for(&self, detector: &DetectorConfig) -> Option<f64> {
        match detector {
            DetectorConfig::Lof { k, .. } => self
                .published
                .iter()
                .find(|(pk, _)| pk == k)
                .map(|&(_, v)| v),
            DetectorConfig::Ssd { .. } => self.published_ssd,
        }
    }

    pub fn config(&self, detector: DetectorConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: self.name.to_string(),
            detector,
            fit_filter: self.fit.clone(),
            id_eval_filter: self.id_eval.clone(),
            ood_eval_filter: self.ood_eval.clone(),
            normalize: false,
            embeddings_path: None,
            manifest_path: None,
        }
    }

    /// LOF with cosine distance at `k`, the default detector of every protocol.
    pub fn lof_config(&self, k: usize) -> ExperimentConfig {
        self.config(DetectorConfig::Lof {
            k,
            metric: Metric::Cosine,
        })
    }
}

fn holdout(
    name: &'static str,
    description: &'static str,
    classes: &[&str],
    sources: &[&str],
    published: &'static [(usize, f64)],
    published_ssd: f64,
) -> Protocol {
    let id = Filter::new().classes(classes.iter().copied()).sources(sources.iter().copied());
    Protocol {
        name,
        kind: ProtocolKind::ClassHoldout,
        description,
        fit: id.clone().split(Split::Train),
        id_eval: id.split(Split::Test),
        ood_eval: Filter::new()
            .classes(OOD_CLASSES)
            .sources(sources.iter().copied()),
        published,
        published_ssd: Some(published_ssd),
    }
}

fn probe(
    name: &'static str,
    description: &'static str,
    classes: &[&str],
    published: &'static [(usize, f64)],
) -> Protocol {
    let id = Filter::new().classes(classes.iter().copied());
    Protocol {
        name,
        kind: ProtocolKind::SourceProbe,
        description,
        fit: id.clone().sources(["HAM"]).split(Split::Train),
        id_eval: id.clone().sources(["HAM"]).split(Split::Test),
        ood_eval: id.sources(["BCN"]).split(Split::Test),
        published,
        published_ssd: None,
    }
}

/// Every protocol, main-table columns first (left to right), then the
/// source-probe rows.
pub fn all_protocols() -> Vec<Protocol> {
    vec![
        holdout(
            "isic2019",
            "all six ID classes, all sources",
            &ID_CLASSES,
            &[],
            &[(10, 0.675), (50, 0.668), (100, 0.655), (200, 0.648), (300, 0.646)],
            0.600,
        ),
        holdout(
            "isic2019-nv",
            "NV only as ID, all sources",
            &["NV"],
            &[],
            &[(10, 0.711), (50, 0.749), (100, 0.734), (200, 0.739), (300, 0.752)],
            0.800,
        ),
        holdout(
            "ham",
            "six ID classes, HAM only",
            &ID_CLASSES,
            &["HAM"],
            &[(10, 0.749), (50, 0.774), (100, 0.779), (200, 0.770), (300, 0.760)],
            0.789,
        ),
        holdout(
            "ham-nv",
            "NV only as ID, HAM only",
            &["NV"],
            &["HAM"],
            &[(10, 0.798), (50, 0.884), (100, 0.895), (200, 0.887), (300, 0.873)],
            0.898,
        ),
        holdout(
            "bcn",
            "six ID classes, BCN only",
            &ID_CLASSES,
            &["BCN"],
            &[(10, 0.642), (50, 0.602), (100, 0.587), (200, 0.567), (300, 0.562)],
            0.560,
        ),
        holdout(
            "bcn-nv",
            "NV only as ID, BCN only",
            &["NV"],
            &["BCN"],
            &[(10, 0.664), (50, 0.646), (100, 0.615), (200, 0.604), (300, 0.615)],
            0.721,
        ),
        Protocol {
            name: "cifar10-svhn",
            kind: ProtocolKind::ClassHoldout,
            description: "natural-image benchmark: CIFAR10 as ID, SVHN as OOD",
            fit: Filter::new().sources(["CIFAR10"]).split(Split::Train),
            id_eval: Filter::new().sources(["CIFAR10"]).split(Split::Test),
            ood_eval: Filter::new().sources(["SVHN"]),
            published: &[(10, 0.841), (50, 0.894), (100, 0.922), (200, 0.941), (300, 0.945)],
            published_ssd: Some(0.991),
        },
        probe(
            "ham-vs-bcn",
            "fit HAM train (six ID classes); HAM test as ID, BCN test as OOD",
            &ID_CLASSES,
            &[
                (40, 0.946),
                (50, 0.948),
                (60, 0.951),
                (70, 0.952),
                (100, 0.956),
                (200, 0.956),
                (250, 0.955),
                (300, 0.954),
            ],
        ),
        probe(
            "ham-vs-bcn-nv",
            "fit HAM NV train; HAM NV test as ID, BCN NV test as OOD",
            &["NV"],
            &[
                (40, 0.955),
                (50, 0.958),
                (60, 0.959),
                (70, 0.960),
                (100, 0.961),
                (200, 0.954),
                (250, 0.950),
                (300, 0.947),
            ],
        ),
    ]
}

pub fn protocol(name: &str) -> Option<Protocol> {
    all_protocols().into_iter().find(|p| p.name == name)
}

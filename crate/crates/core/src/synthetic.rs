//! Seeded synthetic data: a multi-site dermoscopy-shaped embedding fixture
//! and small Gaussian cluster sets for contrastive training.
//!
//! Embeddings are Gaussian mixtures: each class has a center, each site adds
//! an offset, each group (lesion) jitters around class + site, and each
//! sample jitters around its group. DF and VASC get their own centers so
//! they behave as held-out classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::EmbeddingMatrix;
use crate::error::{OodError, Result};
use crate::manifest::{SampleManifest, SampleRecord, Split};

/// Groups per (source, class) at `scale = 1`.
const GROUP_COUNTS: &[(&str, &[(&str, usize)])] = &[
    (
        "HAM",
        &[
            ("NV", 520),
            ("MEL", 90),
            ("BKL", 90),
            ("BCC", 45),
            ("AK", 30),
            ("SCC", 20),
            ("DF", 20),
            ("VASC", 20),
        ],
    ),
    (
        "BCN",
        &[
            ("NV", 450),
            ("MEL", 160),
            ("BCC", 110),
            ("BKL", 60),
            ("AK", 50),
            ("SCC", 45),
            ("DF", 15),
            ("VASC", 15),
        ],
    ),
    (
        "MSK",
        &[
            ("NV", 160),
            ("MEL", 50),
            ("BKL", 40),
            ("BCC", 10),
            ("AK", 10),
            ("SCC", 10),
            ("DF", 5),
            ("VASC", 5),
        ],
    ),
];

const CIFAR_CLASSES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub dim: usize,
    /// Multiplier on the per-stratum group counts.
    pub scale: f64,
    /// Adds a CIFAR10 (ID) / SVHN (OOD) natural-image block.
    pub benchmark_block: bool,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 2019,
            dim: 16,
            scale: 1.0,
            benchmark_block: true,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            sd * e
        })
        .collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

/// Builds an unsplit manifest (every split `unassigned`) and the aligned
/// embedding matrix.
pub fn dermoscopy_fixture(config: &FixtureConfig) -> Result<(SampleManifest, EmbeddingMatrix)> {
    if config.dim == 0 || !(config.scale.is_finite() && config.scale > 0.0) {
        return Err(OodError::Parameter(
            "fixture needs dim >= 1 and a positive scale".into(),
        ));
    }
    let d = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    // a shared baseline keeps every vector well away from the origin
    let baseline = vec![4.0; d];

    let mut class_centers: Vec<(&str, Vec<f64>)> = Vec::new();
    let mut center_of = |rng: &mut ChaCha8Rng, class: &'static str| -> Vec<f64> {
        if let Some((_, c)) = class_centers.iter().find(|(n, _)| *n == class) {
            return c.clone();
        }
        let c = add(&baseline, &gaussian(rng, d, 1.5));
        class_centers.push((class, c.clone()));
        c
    };

    let mut records = Vec::new();
    let mut data = Vec::new();
    let push_group = |rng: &mut ChaCha8Rng,
                          records: &mut Vec<SampleRecord>,
                          data: &mut Vec<f64>,
                          center: &[f64],
                          group_sd: f64,
                          max_size: usize,
                          prefix: &str,
                          class: &str,
                          source: &str| {
        let group_id = format!("{prefix}_L{:06}", records.len());
        let group_center = add(center, &gaussian(rng, d, group_sd));
        let size = rng.random_range(1..=max_size);
        for _ in 0..size {
            let sample = add(&group_center, &gaussian(rng, d, 0.15));
            records.push(SampleRecord {
                sample_id: format!("{prefix}_{:07}", records.len()),
                group_id: group_id.clone(),
                class_label: class.to_string(),
                source: source.to_string(),
                split: Split::Unassigned,
            });
            data.extend(sample);
        }
    };

    for &(source, classes) in GROUP_COUNTS {
        let offset = gaussian(&mut rng, d, 0.8);
        for &(class, count) in classes {
            let center = add(&center_of(&mut rng, class), &offset);
            let groups = ((count as f64) * config.scale).round().max(1.0) as usize;
            for _ in 0..groups {
                push_group(
                    &mut rng,
                    &mut records,
                    &mut data,
                    &center,
                    0.6,
                    2,
                    "ISIC",
                    class,
                    source,
                );
            }
        }
    }

    if config.benchmark_block {
        let cifar_offset = gaussian(&mut rng, d, 3.0);
        for class in CIFAR_CLASSES {
            let center = add(&add(&baseline, &cifar_offset), &gaussian(&mut rng, d, 1.2));
            let groups = ((40.0 * config.scale).round() as usize).max(1);
            for _ in 0..groups {
                push_group(
                    &mut rng, &mut records, &mut data, &center, 0.6, 1, "CIFAR", class, "CIFAR10",
                );
            }
        }
        let svhn_center = add(&add(&baseline, &cifar_offset), &gaussian(&mut rng, d, 2.5));
        let groups = ((200.0 * config.scale).round() as usize).max(1);
        for _ in 0..groups {
            push_group(
                &mut rng, &mut records, &mut data, &svhn_center, 0.8, 1, "SVHN", "digit", "SVHN",
            );
        }
    }

    let n = records.len();
    Ok((SampleManifest::new(records)?, EmbeddingMatrix::new(n, d, data)?))
}

/// Two isotropic Gaussian clusters of `n_per_cluster` points each, centered
/// at `+separation / 2` and `-separation / 2` along the first axis.
pub fn two_clusters(
    n_per_cluster: usize,
    dim: usize,
    separation: f64,
    spread: f64,
    seed: u64,
) -> Result<(EmbeddingMatrix, EmbeddingMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cluster = |sign: f64| {
        let mut data = Vec::with_capacity(n_per_cluster * dim);
        for _ in 0..n_per_cluster {
            let mut p = gaussian(&mut rng, dim, spread);
            p[0] += sign * separation / 2.0;
            data.extend(p);
        }
        EmbeddingMatrix::new(n_per_cluster, dim, data)
    };
    let a = cluster(1.0)?;
    let b = cluster(-1.0)?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_is_deterministic_and_aligned() {
        let cfg = FixtureConfig {
            scale: 0.1,
            ..FixtureConfig::default()
        };
        let (m1, z1) = dermoscopy_fixture(&cfg).unwrap();
        let (m2, z2) = dermoscopy_fixture(&cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(z1, z2);
        assert_eq!(m1.len(), z1.n());
        assert!(z1.first_zero_row().is_none());
        let sources: std::collections::BTreeSet<_> =
            m1.records().iter().map(|r| r.source.as_str()).collect();
        assert_eq!(
            sources.into_iter().collect::<Vec<_>>(),
            ["BCN", "CIFAR10", "HAM", "MSK", "SVHN"]
        );
    }

    #[test]
    fn two_clusters_shapes() {
        let (a, b) = two_clusters(10, 3, 6.0, 0.5, 1).unwrap();
        assert_eq!((a.n(), a.d(), b.n(), b.d()), (10, 3, 10, 3));
        let mean_a: f64 = a.rows().map(|r| r[0]).sum::<f64>() / 10.0;
        let mean_b: f64 = b.rows().map(|r| r[0]).sum::<f64>() / 10.0;
        assert!(mean_a > 2.0 && mean_b < -2.0);
    }
}

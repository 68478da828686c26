mod common;

use common::{gaussian_rows, rng};
use oodkit::parallel::with_workers;
use oodkit::protocols::{protocol, MAIN_SWEEP_KS};
use oodkit::ssd::fit_gaussian_default;
use oodkit::synthetic::{dermoscopy_fixture, FixtureConfig};
use oodkit::{fit_lof, k_sweep, stratified_group_split, EmbeddingMatrix, Metric, SplitRatios};

fn fixture() -> (EmbeddingMatrix, EmbeddingMatrix) {
    let mut r = rng(97);
    let mut train = gaussian_rows(&mut r, 700, 12, 1.0);
    for row in &mut train {
        row[0] += 2.0;
    }
    let queries = gaussian_rows(&mut r, 500, 12, 1.5);
    (
        EmbeddingMatrix::from_rows(&train).unwrap(),
        EmbeddingMatrix::from_rows(&queries).unwrap(),
    )
}

#[test]
fn lof_batch_scores_identical_across_worker_counts() {
    let (train, queries) = fixture();
    for metric in [Metric::Cosine, Metric::Euclidean] {
        let runs: Vec<_> = [1, 2, 8]
            .iter()
            .map(|&w| {
                with_workers(w, || {
                    let model = fit_lof(&train, 10, metric).unwrap();
                    (model.clone(), model.score_batch(&queries).unwrap())
                })
            })
            .collect();
        for run in &runs[1..] {
            assert_eq!(run.0, runs[0].0);
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&run.1), bits(&runs[0].1));
        }
    }
}

#[test]
fn ssd_batch_scores_identical_across_worker_counts() {
    let (train, queries) = fixture();
    let stats = fit_gaussian_default(&train).unwrap();
    let runs: Vec<Vec<f64>> = [1, 2, 8]
        .iter()
        .map(|&w| with_workers(w, || stats.score_batch(&queries).unwrap()))
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn sweep_identical_across_worker_counts() {
    let cfg = FixtureConfig {
        scale: 0.5,
        benchmark_block: false,
        ..FixtureConfig::default()
    };
    let (manifest, z) = dermoscopy_fixture(&cfg).unwrap();
    let split = stratified_group_split(&manifest, SplitRatios::default(), 2019)
        .unwrap()
        .apply(&manifest)
        .unwrap();
    let p = protocol("ham").unwrap();
    let ks = &MAIN_SWEEP_KS[..3];
    let runs: Vec<_> = [1, 2, 8]
        .iter()
        .map(|&w| with_workers(w, || k_sweep(&p.lof_config(10), ks, &split, &z).unwrap()))
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

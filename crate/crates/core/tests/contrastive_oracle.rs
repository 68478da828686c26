mod common;

use common::{central_differences, gaussian_rows, grad_rel_err, oracle_nt_xent, rel_err, rng};
use oodkit::contrastive::{cosine_similarity_matrix, nt_xent_grad, nt_xent_loss, ViewBatch};
use oodkit::encoder::{train_toy_encoder, ToyEncoderParams, ToyTrainConfig};
use oodkit::synthetic::two_clusters;
use oodkit::{cosine_distance, EmbeddingMatrix};
use rand::Rng;

fn batch(rows: &[Vec<f64>], tau: f64) -> ViewBatch {
    ViewBatch::new(EmbeddingMatrix::from_rows(rows).unwrap(), tau).unwrap()
}

/// Rows of two views per sample: view 2i+1 is view 2i plus small noise.
fn paired_rows(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize, noise: f64) -> Vec<Vec<f64>> {
    let anchors = gaussian_rows(r, n, d, 1.0);
    let mut rows = Vec::with_capacity(2 * n);
    for a in anchors {
        let jitter = gaussian_rows(r, 1, d, noise).remove(0);
        rows.push(a.clone());
        rows.push(a.iter().zip(&jitter).map(|(x, e)| x + e).collect());
    }
    rows
}

fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

fn unflatten(flat: &[f64], d: usize) -> Vec<Vec<f64>> {
    flat.chunks(d).map(<[f64]>::to_vec).collect()
}

/// Paired rows rescaled to norms in [1, 2]. The loss is invariant to row
/// scale, so this only fixes the finite-difference step relative to the row.
fn scaled_rows(r: &mut rand_chacha::ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    paired_rows(r, n, d, 0.5)
        .into_iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let target = r.random_range(1.0..2.0);
            v.into_iter().map(|x| x * target / norm).collect()
        })
        .collect()
}

#[test]
fn loss_matches_direct_definition() {
    let mut r = rng(59);
    for trial in 0..30 {
        let n = [2, 4, 8][trial % 3];
        let d = [3, 8][trial % 2];
        let tau = [0.1, 0.5, 1.0][trial % 3];
        let rows = paired_rows(&mut r, n, d, 0.5);
        let got = nt_xent_loss(&batch(&rows, tau)).unwrap();
        let want = oracle_nt_xent(&rows, tau);
        // the direct form cancels when the loss is near 0, so compare absolutely
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = rng(61);
    let mut worst = 0.0f64;
    for trial in 0..50 {
        let n = [2, 4, 8][trial % 3];
        let d = [3, 8][(trial / 3) % 2];
        let tau = [0.1, 0.5, 1.0][(trial / 6) % 3];
        let rows = scaled_rows(&mut r, n, d);
        let g = nt_xent_grad(&batch(&rows, tau)).unwrap();
        let fd = central_differences(|x| oracle_nt_xent(&unflatten(x, d), tau), &flatten(&rows), 1e-4);
        for (a, f) in g.data().iter().zip(&fd) {
            worst = worst.max(grad_rel_err(*a, *f));
        }
    }
    assert!(worst < 1e-5, "max relative error {worst:e}");
}

#[test]
fn short_rows_agree_with_a_finer_step() {
    // at norm ~0.5 and tau = 0.1 the h = 1e-4 truncation error is visible;
    // a finer step shows the analytic gradient is not the source
    let mut r = rng(67);
    let rows: Vec<Vec<f64>> = paired_rows(&mut r, 8, 3, 0.5)
        .into_iter()
        .map(|v| {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| 0.5 * x / norm).collect()
        })
        .collect();
    let g = nt_xent_grad(&batch(&rows, 0.1)).unwrap();
    let fd = central_differences(|x| oracle_nt_xent(&unflatten(x, 3), 0.1), &flatten(&rows), 1e-6);
    for (a, f) in g.data().iter().zip(&fd) {
        assert!((a - f).abs() <= 1e-6 * a.abs().max(f.abs()).max(1e-3), "{a} vs {f}");
    }
}

#[test]
fn gradient_is_orthogonal_to_each_row() {
    let mut r = rng(71);
    for trial in 0..50 {
        let n = [2, 4, 8][trial % 3];
        let d = [3, 8][trial % 2];
        let rows = paired_rows(&mut r, n, d, 0.5);
        let g = nt_xent_grad(&batch(&rows, [0.1, 0.5, 1.0][trial % 3])).unwrap();
        for (i, z) in rows.iter().enumerate() {
            let dot: f64 = z.iter().zip(g.row(i)).map(|(a, b)| a * b).sum();
            assert!(dot.abs() <= 1e-10, "row {i}: z . grad = {dot:e}");
        }
    }
}

#[test]
fn identical_batch_has_zero_gradient() {
    let row = vec![0.3, -1.2, 2.0];
    let rows = vec![row.clone(); 4];
    for tau in [0.1, 0.5, 1.0] {
        let b = batch(&rows, tau);
        assert!((nt_xent_loss(&b).unwrap() - 3f64.ln()).abs() <= 1e-12);
        let g = nt_xent_grad(&b).unwrap();
        for j in 0..3 {
            let col: f64 = (0..4).map(|i| g.row(i)[j]).sum();
            assert!(col.abs() <= 1e-10);
        }
        let fd = central_differences(|x| oracle_nt_xent(&unflatten(x, 3), tau), &flatten(&rows), 1e-4);
        for j in 0..3 {
            let col: f64 = (0..4).map(|i| fd[i * 3 + j]).sum();
            assert!(col.abs() <= 1e-10, "finite-difference column sum {col:e}");
        }
    }
}

#[test]
fn swapping_views_leaves_loss_unchanged() {
    let mut r = rng(73);
    for trial in 0..30 {
        let rows = paired_rows(&mut r, [2, 4, 8][trial % 3], 5, 0.7);
        let mut swapped = rows.clone();
        for p in swapped.chunks_mut(2) {
            p.swap(0, 1);
        }
        let tau = [0.1, 0.5, 1.0][trial % 3];
        let a = nt_xent_loss(&batch(&rows, tau)).unwrap();
        let b = nt_xent_loss(&batch(&swapped, tau)).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.max(1.0));
    }
}

#[test]
fn rescaling_rows_leaves_loss_unchanged() {
    let mut r = rng(79);
    let rows = paired_rows(&mut r, 4, 6, 0.5);
    let base = nt_xent_loss(&batch(&rows, 0.5)).unwrap();
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|v| {
            let c = r.random_range(0.1..10.0);
            v.iter().map(|x| x * c).collect()
        })
        .collect();
    assert!(rel_err(nt_xent_loss(&batch(&scaled, 0.5)).unwrap(), base) <= 1e-12);
}

#[test]
fn loss_lower_bound() {
    // an anchor whose positive does not beat every negative contributes at
    // least ln 2, so the batch mean is at least ln 2 / 2N
    let mut r = rng(83);
    for trial in 0..200 {
        let n = [2, 4, 8][trial % 3];
        let tau = [0.1, 0.5, 1.0][trial % 3];
        let rows = paired_rows(&mut r, n, 4, [0.1, 1.0, 3.0][trial % 3]);
        let loss = nt_xent_loss(&batch(&rows, tau)).unwrap();
        assert!(loss >= 0.0);
        let s = cosine_similarity_matrix(&EmbeddingMatrix::from_rows(&rows).unwrap()).unwrap();
        let violated = (0..2 * n).any(|i| {
            (0..2 * n).any(|k| k != i && k != (i ^ 1) && s[i][k] >= s[i][i ^ 1])
        });
        if violated {
            assert!(loss >= 2f64.ln() / (2 * n) as f64, "loss {loss} with a violated anchor");
        }
    }
}

#[test]
fn similarity_matrix_agrees_with_cosine_distance() {
    let mut r = rng(89);
    let rows = gaussian_rows(&mut r, 4, 3, 1.0);
    let s = cosine_similarity_matrix(&EmbeddingMatrix::from_rows(&rows).unwrap()).unwrap();
    for i in 0..4 {
        assert_eq!(s[i][i], 1.0);
        for j in 0..4 {
            let d = cosine_distance(&rows[i], &rows[j]).unwrap();
            assert!((s[i][j] - (1.0 - d)).abs() <= 1e-12);
        }
    }
}

#[test]
fn toy_training_reduces_loss() {
    let (a, b) = two_clusters(128, 2, 6.0, 1.0, 2019).unwrap();
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    let samples = EmbeddingMatrix::new(256, 2, data).unwrap();
    let params = ToyEncoderParams::init(2, 16, 8, 2019).unwrap();
    let config = ToyTrainConfig {
        epochs: 20,
        ..ToyTrainConfig::default()
    };
    let out = train_toy_encoder(&samples, &params, &config).unwrap();
    assert_eq!(out.curve.len(), 20);
    assert!(out.curve[19] < out.curve[0], "curve {:?}", out.curve);
    let again = train_toy_encoder(&samples, &params, &config).unwrap();
    assert_eq!(again, out);
}

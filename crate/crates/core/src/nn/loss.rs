//! Training objectives.

use crate::error::{Error, Result};
use crate::nn::matrix::{dot, Matrix};

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse_loss(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::shape("mse_loss", pred.shape_str(), target.shape_str()));
    }
    let n = pred.rows() * pred.cols();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let inv_n = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (&p, &t) in pred.as_slice().iter().zip(target.as_slice()) {
        let d = p - t;
        loss += d * d;
        grad.push(2.0 * inv_n * d);
    }
    Ok((loss * inv_n, Matrix::from_vec(pred.rows(), pred.cols(), grad)?))
}

/// Margin-floored cosine distance between paired rows:
/// `beta / |P| * Σ max(1 - cos(local_k, peer_k), margin)`.
///
/// `peer` is treated as a constant, so only the gradient for `local` is returned.
/// Pairs whose distance does not exceed `margin` contribute zero gradient.
pub fn cosine_margin_loss(local: &Matrix, peer: &Matrix, margin: f64, beta: f64) -> Result<(f64, Matrix)> {
    if local.shape() != peer.shape() {
        return Err(Error::shape("cosine_margin_loss", local.shape_str(), peer.shape_str()));
    }
    let pairs = local.rows();
    if pairs == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::Config(format!("margin {margin} outside [0, 1)")));
    }
    if !(beta > 0.0) {
        return Err(Error::Config(format!("beta {beta} must be positive")));
    }
    let scale = beta / pairs as f64;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(pairs, local.cols());
    for k in 0..pairs {
        let a = local.row(k);
        let b = peer.row(k);
        let aa = dot(a, a);
        let bb = dot(b, b);
        if aa == 0.0 {
            return Err(Error::DegenerateEmbedding { table: "local", row: k });
        }
        if bb == 0.0 {
            return Err(Error::DegenerateEmbedding { table: "peer", row: k });
        }
        let na = aa.sqrt();
        let nb = bb.sqrt();
        let cos = dot(a, b) / (na * nb);
        let dist = 1.0 - cos;
        if dist > margin {
            total += dist;
            // d(1 - cos)/da = cos·a/|a|² - b/(|a||b|)
            let ca = cos / aa;
            let cb = 1.0 / (na * nb);
            for ((g, &ai), &bi) in grad.row_mut(k).iter_mut().zip(a).zip(b) {
                *g = scale * (ca * ai - cb * bi);
            }
        } else {
            total += margin;
        }
    }
    Ok((scale * total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::Rng;
    use crate::testing::rel_err;

    fn random(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
        let mut m = Matrix::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = rng.uniform_in(-1.0, 1.0);
        }
        m
    }

    #[test]
    fn mse_zero_when_equal() {
        let p = Matrix::column(&[0.3, 0.9]);
        let (l, g) = mse_loss(&p, &p).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mse_single_element() {
        let (l, g) = mse_loss(&Matrix::column(&[1.0]), &Matrix::column(&[0.0])).unwrap();
        assert_eq!(l, 1.0);
        assert_eq!(g.as_slice(), &[2.0]);
    }

    #[test]
    fn mse_matches_loop_oracle() {
        let mut rng = Rng::new(77);
        let p = random(7, 1, &mut rng);
        let t = random(7, 1, &mut rng);
        let (l, g) = mse_loss(&p, &t).unwrap();
        let mut expect = 0.0;
        for i in 0..7 {
            expect += (p.get(i, 0) - t.get(i, 0)).powi(2);
        }
        expect /= 7.0;
        assert!((l - expect).abs() < 1e-12);
        for i in 0..7 {
            assert!((g.get(i, 0) - 2.0 / 7.0 * (p.get(i, 0) - t.get(i, 0))).abs() < 1e-12);
        }
    }

    #[test]
    fn mse_empty_and_mismatch() {
        assert!(matches!(mse_loss(&Matrix::zeros(0, 1), &Matrix::zeros(0, 1)), Err(Error::EmptyBatch)));
        assert!(matches!(mse_loss(&Matrix::zeros(2, 1), &Matrix::zeros(3, 1)), Err(Error::Shape { .. })));
    }

    #[test]
    fn identical_rows_give_floor() {
        let a = Matrix::from_rows(&[[0.3, -1.2, 0.5]]);
        let (l, g) = cosine_margin_loss(&a, &a, 0.2, 100.0).unwrap();
        assert!((l - 20.0).abs() < 1e-12);
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn orthogonal_rows() {
        let (l, _) = cosine_margin_loss(
            &Matrix::from_rows(&[[1.0, 0.0]]),
            &Matrix::from_rows(&[[0.0, 1.0]]),
            0.2,
            100.0,
        )
        .unwrap();
        assert!((l - 100.0).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_row_is_named() {
        let local = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]);
        let peer = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]);
        match cosine_margin_loss(&local, &peer, 0.2, 1.0) {
            Err(Error::DegenerateEmbedding { table: "local", row: 1 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = Rng::new(404);
        let local = random(4, 8, &mut rng);
        let peer = random(4, 8, &mut rng);
        let (m, beta) = (0.2, 100.0);
        let (_, g) = cosine_margin_loss(&local, &peer, m, beta).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let c = dot(local.row(k), peer.row(k)) / (dot(local.row(k), local.row(k)).sqrt() * dot(peer.row(k), peer.row(k)).sqrt());
            if 1.0 - c <= m + 1e-3 {
                continue;
            }
            for j in 0..8 {
                let mut plus = local.clone();
                plus.set(k, j, local.get(k, j) + h);
                let mut minus = local.clone();
                minus.set(k, j, local.get(k, j) - h);
                let lp = cosine_margin_loss(&plus, &peer, m, beta).unwrap().0;
                let lm = cosine_margin_loss(&minus, &peer, m, beta).unwrap().0;
                let numeric = (lp - lm) / (2.0 * h);
                assert!(rel_err(g.get(k, j), numeric) < 1e-5, "row {k} col {j}: {} vs {numeric}", g.get(k, j));
            }
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let a = Matrix::from_rows(&[[1.0]]);
        assert!(cosine_margin_loss(&a, &a, 1.0, 1.0).is_err());
        assert!(cosine_margin_loss(&a, &a, 0.2, 0.0).is_err());
    }
}

//! Layer primitives with hand-written backward passes.
//!
//! [`DenseLayer`] offers two calling styles. [`DenseLayer::forward`] /
//! [`DenseLayer::backward`] keep the input cached inside the layer, which suits
//! single-layer use and tests. [`DenseLayer::apply`] /
//! [`DenseLayer::backward_from`] are stateless and let a model hold its own
//! activation cache.

use crate::error::{Error, Result};
use crate::nn::matrix::Matrix;
use crate::nn::optim::{ParamSet, ParamSlot};
use crate::nn::rng::Rng;

/// Fully connected layer `y = x·W + b`, with `W` stored `in_dim × out_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub grad_weight: Matrix,
    pub grad_bias: Vec<f64>,
    cached_input: Option<Matrix>,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if bias.len() != weight.cols() {
            return Err(Error::shape(
                "DenseLayer::new",
                weight.shape_str(),
                format!("bias of {}", bias.len()),
            ));
        }
        let (i, o) = weight.shape();
        Ok(DenseLayer {
            grad_weight: Matrix::zeros(i, o),
            grad_bias: vec![0.0; o],
            weight,
            bias,
            cached_input: None,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self::new(Matrix::zeros(in_dim, out_dim), vec![0.0; out_dim]).expect("consistent shapes")
    }

    /// Weights and biases drawn uniformly from `[-scale, scale]`.
    pub fn uniform(in_dim: usize, out_dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.weight.as_mut_slice() {
            *w = rng.uniform_in(-scale, scale);
        }
        for b in &mut layer.bias {
            *b = rng.uniform_in(-scale, scale);
        }
        layer
    }

    pub fn in_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.cols()
    }

    /// Forward pass without caching.
    pub fn apply(&self, input: &Matrix) -> Result<Matrix> {
        if input.cols() != self.in_dim() {
            return Err(Error::shape("dense_forward", input.shape_str(), self.weight.shape_str()));
        }
        let mut out = input.matmul(&self.weight)?;
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Forward pass that caches `input` for the next [`DenseLayer::backward`].
    pub fn forward(&mut self, input: &Matrix) -> Result<Matrix> {
        let out = self.apply(input)?;
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    /// Consumes the cached input, accumulates parameter gradients and returns
    /// the gradient with respect to the input.
    pub fn backward(&mut self, grad_out: &Matrix) -> Result<Matrix> {
        let input = self
            .cached_input
            .take()
            .ok_or_else(|| Error::State("dense backward called before forward".into()))?;
        self.backward_from(&input, grad_out)
    }

    /// Backward pass against an externally held input.
    pub fn backward_from(&mut self, input: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        if grad_out.cols() != self.out_dim() || grad_out.rows() != input.rows() {
            return Err(Error::shape(
                "dense_backward",
                grad_out.shape_str(),
                format!("{}x{}", input.rows(), self.out_dim()),
            ));
        }
        if input.cols() != self.in_dim() {
            return Err(Error::shape("dense_backward", input.shape_str(), self.weight.shape_str()));
        }
        self.grad_weight.add_assign(&input.t_matmul(grad_out)?)?;
        for (g, s) in self.grad_bias.iter_mut().zip(grad_out.column_sums()) {
            *g += s;
        }
        grad_out.matmul_t(&self.weight)
    }

    pub fn zero_grads(&mut self) {
        self.grad_weight.as_mut_slice().fill(0.0);
        self.grad_bias.fill(0.0);
    }
}

impl DenseLayer {
    pub(crate) fn named_slots(&mut self, weight: &'static str, bias: &'static str) -> [ParamSlot<'_>; 2] {
        let width = self.weight.cols();
        [
            ParamSlot::dense(weight, self.weight.as_mut_slice(), self.grad_weight.as_mut_slice(), width),
            ParamSlot::dense(bias, &mut self.bias, &mut self.grad_bias, width),
        ]
    }
}

impl ParamSet for DenseLayer {
    fn slots(&mut self) -> Vec<ParamSlot<'_>> {
        self.named_slots("weight", "bias").into()
    }
}

/// Lookup table whose gradient only tracks the rows a batch touched.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub table: Matrix,
    grad: Matrix,
    touched: Vec<usize>,
    is_touched: Vec<bool>,
}

impl Embedding {
    pub fn new(table: Matrix) -> Self {
        let (r, c) = table.shape();
        Embedding {
            table,
            grad: Matrix::zeros(r, c),
            touched: Vec::new(),
            is_touched: vec![false; r],
        }
    }

    pub fn uniform(rows: usize, dim: usize, scale: f64, rng: &mut Rng) -> Self {
        let mut t = Matrix::zeros(rows, dim);
        for v in t.as_mut_slice() {
            *v = rng.uniform_in(-scale, scale);
        }
        Self::new(t)
    }

    pub fn rows(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn lookup(&self, indices: &[usize]) -> Result<Matrix> {
        self.table.gather_rows(indices)
    }

    pub fn grad(&self) -> &Matrix {
        &self.grad
    }

    pub fn touched_rows(&self) -> &[usize] {
        &self.touched
    }

    /// Adds `g` into the gradient of row `row`.
    pub fn accumulate(&mut self, row: usize, g: &[f64]) {
        if !self.is_touched[row] {
            self.is_touched[row] = true;
            self.touched.push(row);
        }
        for (a, b) in self.grad.row_mut(row).iter_mut().zip(g) {
            *a += b;
        }
    }

    /// Scatter-adds one gradient row per index.
    pub fn accumulate_rows(&mut self, indices: &[usize], grads: &Matrix) {
        for (i, &r) in indices.iter().enumerate() {
            self.accumulate(r, grads.row(i));
        }
    }

    pub fn zero_grads(&mut self) {
        for &r in &self.touched {
            self.grad.row_mut(r).fill(0.0);
            self.is_touched[r] = false;
        }
        self.touched.clear();
    }

    pub(crate) fn slot(&mut self, name: &'static str) -> ParamSlot<'_> {
        let width = self.table.cols();
        ParamSlot {
            name,
            value: self.table.as_mut_slice(),
            grad: self.grad.as_mut_slice(),
            width,
            rows: Some(&self.touched),
        }
    }

    pub(crate) fn clear_touched(&mut self) {
        for &r in &self.touched {
            self.is_touched[r] = false;
        }
        self.touched.clear();
    }
}

pub fn relu(input: &Matrix) -> Matrix {
    input.map(|v| v.max(0.0))
}

/// Passes gradient only where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Matrix, cached_input: &Matrix) -> Result<Matrix> {
    if grad_out.shape() != cached_input.shape() {
        return Err(Error::shape("relu_backward", grad_out.shape_str(), cached_input.shape_str()));
    }
    let data = grad_out
        .as_slice()
        .iter()
        .zip(cached_input.as_slice())
        .map(|(&g, &x)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Matrix::from_vec(grad_out.rows(), grad_out.cols(), data)
}

/// Inverted dropout. The returned mask holds the per-element multiplier
/// (`0` or `1/(1-rate)`), all ones in eval mode.
pub fn dropout(input: &Matrix, rate: f64, train: bool, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !train || rate == 0.0 {
        return Ok((input.clone(), Matrix::filled(input.rows(), input.cols(), 1.0)));
    }
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    let mut mask = Matrix::zeros(input.rows(), input.cols());
    for m in mask.as_mut_slice() {
        if rng.bernoulli(keep) {
            *m = scale;
        }
    }
    Ok((input.hadamard(&mask)?, mask))
}

pub fn dropout_backward(grad_out: &Matrix, mask: &Matrix) -> Result<Matrix> {
    grad_out.hadamard(mask)
}

const SIGMOID_HI: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function; outputs stay strictly inside `(0, 1)` even when saturated.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let y = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    y.clamp(f64::MIN_POSITIVE, SIGMOID_HI)
}

pub fn sigmoid(input: &Matrix) -> Matrix {
    input.map(sigmoid_scalar)
}

/// Backward through sigmoid given its forward output.
pub fn sigmoid_backward(grad_out: &Matrix, output: &Matrix) -> Result<Matrix> {
    if grad_out.shape() != output.shape() {
        return Err(Error::shape("sigmoid_backward", grad_out.shape_str(), output.shape_str()));
    }
    let data = grad_out
        .as_slice()
        .iter()
        .zip(output.as_slice())
        .map(|(&g, &y)| g * y * (1.0 - y))
        .collect();
    Matrix::from_vec(grad_out.rows(), grad_out.cols(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{central_diff, rel_err};

    #[test]
    fn identity_weights() {
        let layer = DenseLayer::new(Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]), vec![0.0, 0.0]).unwrap();
        let out = layer.apply(&Matrix::from_rows(&[[3.0, 4.0]])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[3.0, 4.0]]));
    }

    #[test]
    fn sum_plus_bias() {
        let layer = DenseLayer::new(Matrix::from_rows(&[[1.0], [1.0]]), vec![2.0]).unwrap();
        let out = layer.apply(&Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[4.0]]));
    }

    #[test]
    fn forward_matches_triple_loop() {
        let mut rng = Rng::new(11);
        let layer = DenseLayer::uniform(3, 5, 1.0, &mut rng);
        let mut input = Matrix::zeros(2, 3);
        for v in input.as_mut_slice() {
            *v = rng.uniform_in(-2.0, 2.0);
        }
        let out = layer.apply(&input).unwrap();
        for b in 0..2 {
            for j in 0..5 {
                let mut acc = layer.bias[j];
                for k in 0..3 {
                    acc += input.get(b, k) * layer.weight.get(k, j);
                }
                assert!((out.get(b, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_width_mismatch() {
        let mut layer = DenseLayer::zeros(3, 2);
        let err = layer.forward(&Matrix::zeros(1, 4)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("1x4") && msg.contains("3x2"), "{msg}");
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut layer = DenseLayer::zeros(1, 1);
        assert!(matches!(layer.backward(&Matrix::zeros(1, 1)), Err(Error::State(_))));
    }

    #[test]
    fn zero_grad_out_leaves_accumulators() {
        let mut rng = Rng::new(2);
        let mut layer = DenseLayer::uniform(3, 2, 1.0, &mut rng);
        layer.forward(&Matrix::filled(4, 3, 0.7)).unwrap();
        let g = layer.backward(&Matrix::zeros(4, 2)).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
        assert!(layer.grad_weight.as_slice().iter().all(|&v| v == 0.0));
        assert!(layer.grad_bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_layer_matches_finite_difference() {
        // L = (w·x + b)^2 / 2 with dL/dy = y
        let x = 1.3;
        let mut layer = DenseLayer::new(Matrix::from_rows(&[[0.8]]), vec![-0.2]).unwrap();
        let y = layer.forward(&Matrix::from_rows(&[[x]])).unwrap();
        layer.backward(&y).unwrap();
        let analytic = layer.grad_weight.get(0, 0);
        let numeric = central_diff(|w| (w * x - 0.2).powi(2) / 2.0, 0.8, 1e-6);
        assert!(rel_err(analytic, numeric) < 1e-5, "{analytic} vs {numeric}");
    }

    #[test]
    fn batch_gradient_is_sum_of_singles() {
        let mut rng = Rng::new(5);
        let base = DenseLayer::uniform(3, 2, 1.0, &mut rng);
        let x = Matrix::from_rows(&[[0.1, -0.4, 0.9], [1.2, 0.3, -0.5]]);
        let g = Matrix::from_rows(&[[0.5, -1.0], [0.25, 2.0]]);

        let mut batched = base.clone();
        batched.forward(&x).unwrap();
        batched.backward(&g).unwrap();

        let mut single = base.clone();
        for r in 0..2 {
            single.forward(&x.gather_rows(&[r]).unwrap()).unwrap();
            single.backward(&g.gather_rows(&[r]).unwrap()).unwrap();
        }
        for (a, b) in batched.grad_weight.as_slice().iter().zip(single.grad_weight.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in batched.grad_bias.iter().zip(&single.grad_bias) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_grads_clears_everything() {
        let mut layer = DenseLayer::zeros(2, 2);
        layer.forward(&Matrix::filled(1, 2, 1.0)).unwrap();
        layer.backward(&Matrix::filled(1, 2, 1.0)).unwrap();
        layer.zero_grads();
        assert!(layer.grad_weight.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(layer.grad_weight.shape(), layer.weight.shape());
    }

    #[test]
    fn relu_forward_backward() {
        let x = Matrix::from_rows(&[[-1.0, 2.0]]);
        assert_eq!(relu(&x), Matrix::from_rows(&[[0.0, 2.0]]));
        let g = relu_backward(&Matrix::from_rows(&[[5.0, 5.0]]), &x).unwrap();
        assert_eq!(g, Matrix::from_rows(&[[0.0, 5.0]]));
        assert!(relu_backward(&Matrix::zeros(1, 3), &x).is_err());
    }

    #[test]
    fn relu_finite_difference_away_from_kink() {
        let mut rng = Rng::new(9);
        for _ in 0..50 {
            let mut x = rng.uniform_in(0.05, 2.0);
            if rng.bernoulli(0.5) {
                x = -x;
            }
            let w = rng.uniform_in(-1.0, 1.0);
            // L = w * relu(x)
            let g = relu_backward(&Matrix::from_rows(&[[w]]), &Matrix::from_rows(&[[x]])).unwrap();
            let numeric = central_diff(|v| w * v.max(0.0), x, 1e-6);
            let analytic = g.get(0, 0);
            assert!((analytic - numeric).abs() <= 1e-5 * numeric.abs().max(1e-8) + 1e-10);
        }
    }

    #[test]
    fn dropout_rate_zero_and_eval_are_identity() {
        let mut rng = Rng::new(1);
        let x = Matrix::from_rows(&[[1.0, -2.0, 3.0]]);
        let (y, mask) = dropout(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.as_slice().iter().all(|&m| m == 1.0));
        let (y, mask) = dropout(&x, 0.9, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.as_slice().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn dropout_rejects_rate_one() {
        let mut rng = Rng::new(1);
        assert!(matches!(dropout(&Matrix::zeros(1, 1), 1.0, true, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn dropout_monte_carlo() {
        let mut rng = Rng::new(2024);
        let mut x = Matrix::zeros(100, 100);
        for v in x.as_mut_slice() {
            *v = rng.uniform_in(0.5, 1.5);
        }
        let (y, mask) = dropout(&x, 0.5, true, &mut rng).unwrap();
        let kept = mask.as_slice().iter().filter(|&&m| m > 0.0).count() as f64 / 10_000.0;
        assert!((kept - 0.5).abs() <= 0.02, "kept {kept}");
        let mean_in: f64 = x.as_slice().iter().sum::<f64>() / 10_000.0;
        let mean_out: f64 = y.as_slice().iter().sum::<f64>() / 10_000.0;
        assert!(((mean_out - mean_in) / mean_in).abs() <= 0.02, "{mean_in} vs {mean_out}");
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        let hi = sigmoid_scalar(40.0);
        assert!(hi > 0.999999 && hi < 1.0 && hi.is_finite());
        let lo = sigmoid_scalar(-800.0);
        assert!(lo > 0.0 && lo < 1e-300);
        for &x in &[0.1, 1.0, 3.7, 12.0] {
            assert!((sigmoid_scalar(x) + sigmoid_scalar(-x) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn embedding_tracks_touched_rows() {
        let mut e = Embedding::new(Matrix::zeros(4, 2));
        e.accumulate_rows(&[1, 3, 1], &Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [1.0, 0.0]]));
        assert_eq!(e.touched_rows(), &[1, 3]);
        assert_eq!(e.grad().row(1), &[2.0, 1.0]);
        assert!(e.grad().row(0).iter().all(|&v| v == 0.0));
        e.zero_grads();
        assert!(e.grad().as_slice().iter().all(|&v| v == 0.0));
        assert!(e.touched_rows().is_empty());
    }
}

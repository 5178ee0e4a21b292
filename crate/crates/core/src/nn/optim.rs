//! Parameter updates.
//!
//! Models expose their tensors as [`ParamSlot`]s. A slot may be sparse: when
//! `rows` is set, only those rows carry gradient and only they are updated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One parameter tensor with its gradient buffer.
pub struct ParamSlot<'a> {
    pub name: &'static str,
    pub value: &'a mut [f64],
    pub grad: &'a mut [f64],
    /// Row width, used to address sparse rows.
    pub width: usize,
    pub rows: Option<&'a [usize]>,
}

impl<'a> ParamSlot<'a> {
    pub fn dense(name: &'static str, value: &'a mut [f64], grad: &'a mut [f64], width: usize) -> Self {
        ParamSlot {
            name,
            value,
            grad,
            width,
            rows: None,
        }
    }

    fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        match self.rows {
            None => vec![0..self.value.len()],
            Some(rows) => rows.iter().map(|&r| r * self.width..(r + 1) * self.width).collect(),
        }
    }

    fn check_finite(&self) -> Result<()> {
        for range in self.ranges() {
            if self.grad[range].iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric {
                    tensor: self.name.to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Anything made of trainable tensors.
pub trait ParamSet {
    fn slots(&mut self) -> Vec<ParamSlot<'_>>;

    /// Called after an update so sparse bookkeeping can be reset.
    fn after_step(&mut self) {}
}

/// `p ← p − lr·∇p` for every parameter, then zero every gradient.
///
/// Gradients are validated before any parameter is touched, so a failing
/// step leaves the parameters unchanged.
pub fn sgd_step<P: ParamSet + ?Sized>(params: &mut P, lr: f64) -> Result<()> {
    {
        let slots = params.slots();
        for slot in &slots {
            slot.check_finite()?;
        }
        for slot in slots {
            for range in slot.ranges() {
                for (p, g) in slot.value[range.clone()].iter_mut().zip(&mut slot.grad[range]) {
                    *p -= lr * *g;
                    *g = 0.0;
                }
            }
        }
    }
    params.after_step();
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Momentum,
    Adam,
}

/// Optimizer with per-tensor state. Sparse slots get lazy updates: rows
/// without gradient this step keep their value and their moment estimates.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

const MOMENTUM: f64 = 0.9;
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn step<P: ParamSet + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        if self.kind == OptimizerKind::Sgd {
            return sgd_step(params, self.lr);
        }
        self.step += 1;
        {
            let slots = params.slots();
            for slot in &slots {
                slot.check_finite()?;
            }
            if self.first.is_empty() {
                self.first = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
                if self.kind == OptimizerKind::Adam {
                    self.second = slots.iter().map(|s| vec![0.0; s.value.len()]).collect();
                }
            }
            let lr = self.lr;
            let t = self.step as i32;
            let bc1 = 1.0 - BETA1.powi(t);
            let bc2 = 1.0 - BETA2.powi(t);
            for (i, slot) in slots.into_iter().enumerate() {
                for range in slot.ranges() {
                    let m = &mut self.first[i][range.clone()];
                    let value = &mut slot.value[range.clone()];
                    let grad = &mut slot.grad[range.clone()];
                    match self.kind {
                        OptimizerKind::Momentum => {
                            for ((p, g), m) in value.iter_mut().zip(grad.iter_mut()).zip(m) {
                                *m = MOMENTUM * *m + *g;
                                *p -= lr * *m;
                                *g = 0.0;
                            }
                        }
                        OptimizerKind::Adam => {
                            let v = &mut self.second[i][range];
                            for (((p, g), m), v) in value.iter_mut().zip(grad.iter_mut()).zip(m).zip(v) {
                                *m = BETA1 * *m + (1.0 - BETA1) * *g;
                                *v = BETA2 * *v + (1.0 - BETA2) * *g * *g;
                                let mh = *m / bc1;
                                let vh = *v / bc2;
                                *p -= lr * mh / (vh.sqrt() + ADAM_EPS);
                                *g = 0.0;
                            }
                        }
                        OptimizerKind::Sgd => unreachable!(),
                    }
                }
            }
        }
        params.after_step();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::DenseLayer;
    use crate::nn::matrix::Matrix;

    fn scalar(w: f64, g: f64) -> DenseLayer {
        let mut layer = DenseLayer::new(Matrix::from_rows(&[[w]]), vec![0.0]).unwrap();
        layer.grad_weight.set(0, 0, g);
        layer
    }

    #[test]
    fn zero_lr_is_noop() {
        let mut layer = scalar(1.5, 3.0);
        sgd_step(&mut layer, 0.0).unwrap();
        assert_eq!(layer.weight.get(0, 0), 1.5);
        assert_eq!(layer.grad_weight.get(0, 0), 0.0);
    }

    #[test]
    fn scalar_update() {
        let mut layer = scalar(1.0, 2.0);
        sgd_step(&mut layer, 0.1).unwrap();
        assert!((layer.weight.get(0, 0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identical_models_stay_identical() {
        let mut a = scalar(0.3, 0.7);
        let mut b = a.clone();
        for _ in 0..5 {
            a.grad_weight.set(0, 0, 0.11);
            b.grad_weight.set(0, 0, 0.11);
            sgd_step(&mut a, 0.05).unwrap();
            sgd_step(&mut b, 0.05).unwrap();
        }
        assert_eq!(a.weight.get(0, 0).to_bits(), b.weight.get(0, 0).to_bits());
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut layer = scalar(1.0, f64::NAN);
        match sgd_step(&mut layer, 0.1) {
            Err(Error::Numeric { tensor }) => assert_eq!(tensor, "weight"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(layer.weight.get(0, 0), 1.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut layer = scalar(1.0, 5.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
        opt.step(&mut layer).unwrap();
        assert!((layer.weight.get(0, 0) - 0.99).abs() < 1e-9);
        assert_eq!(layer.grad_weight.get(0, 0), 0.0);
    }

    #[test]
    fn momentum_accumulates() {
        let mut layer = scalar(0.0, 1.0);
        let mut opt = Optimizer::new(OptimizerKind::Momentum, 0.1);
        opt.step(&mut layer).unwrap();
        layer.grad_weight.set(0, 0, 1.0);
        opt.step(&mut layer).unwrap();
        assert!((layer.weight.get(0, 0) + 0.1 + 0.19).abs() < 1e-12);
    }
}

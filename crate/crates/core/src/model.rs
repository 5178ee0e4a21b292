//! One client's deep matrix factorization model.
//!
//! ```text
//! p_u ─ user_fc ─ relu ─┐
//!                       ├─ fuse ─ dropout ─ out_fc ─ sigmoid ─ ŷ
//! q_i ─ feat_fc ─ relu ─┘
//! ```
//!
//! Fusion is concatenation by default (`2·hidden` wide) or an elementwise
//! product (`hidden` wide).
//!
//! # Checkpoint format
//!
//! UTF-8 text, `\n` line endings:
//!
//! ```text
//! feddmf-checkpoint 1
//! fusion <concat|product>
//! dropout_rate <f64>
//! tensor <name> <rows> <cols>
//! <cols values separated by one space>      (repeated rows times)
//! ...
//! ```
//!
//! Tensors appear in the order `user_embeddings`, `feature_embeddings`,
//! `user_fc.weight`, `user_fc.bias`, `feat_fc.weight`, `feat_fc.bias`,
//! `out_fc.weight`, `out_fc.bias`. Biases are stored as `1 × n`. Values use
//! the shortest representation that parses back to the identical `f64`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::{dropout, dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar};
use crate::nn::{DenseLayer, Embedding, Matrix, ParamSet, ParamSlot, Rng};

/// Half-width of the uniform initialization interval.
pub const INIT_SCALE: f64 = 0.05;

/// How the two tower outputs are combined before the output layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    #[default]
    Concat,
    Product,
}

impl Fusion {
    fn width(self, hidden: usize) -> usize {
        match self {
            Fusion::Concat => 2 * hidden,
            Fusion::Product => hidden,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Fusion::Concat => "concat",
            Fusion::Product => "product",
        }
    }
}

/// Architecture hyperparameters shared by every client.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelShape {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub fusion: Fusion,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            embed_dim: 32,
            hidden_dim: 64,
            dropout_rate: 0.5,
            fusion: Fusion::Concat,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DmfModel {
    pub user_embeddings: Embedding,
    pub feature_embeddings: Embedding,
    pub user_fc: DenseLayer,
    pub feat_fc: DenseLayer,
    pub out_fc: DenseLayer,
    dropout_rate: f64,
    fusion: Fusion,
}

/// Activations recorded by [`DmfModel::forward`]; good for one backward call.
#[derive(Debug)]
pub struct ForwardCache {
    users: Vec<usize>,
    features: Option<Vec<usize>>,
    user_in: Matrix,
    feat_in: Matrix,
    user_pre: Matrix,
    feat_pre: Matrix,
    user_act: Matrix,
    feat_act: Matrix,
    mask: Matrix,
    dropped: Matrix,
    output: Matrix,
    consumed: bool,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.users.len()
    }
}

/// Creates a model with every parameter drawn from `U[-0.05, 0.05]`.
pub fn init_model(
    num_users: usize,
    num_features: usize,
    embed_dim: usize,
    hidden_dim: usize,
    dropout_rate: f64,
    rng: &mut Rng,
) -> Result<DmfModel> {
    DmfModel::new(
        num_users,
        num_features,
        &ModelShape {
            embed_dim,
            hidden_dim,
            dropout_rate,
            fusion: Fusion::Concat,
        },
        rng,
    )
}

impl DmfModel {
    pub fn new(num_users: usize, num_features: usize, shape: &ModelShape, rng: &mut Rng) -> Result<Self> {
        for (name, v) in [
            ("num_users", num_users),
            ("num_features", num_features),
            ("embed_dim", shape.embed_dim),
            ("hidden_dim", shape.hidden_dim),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&shape.dropout_rate) {
            return Err(Error::Config(format!("dropout rate {} outside [0, 1)", shape.dropout_rate)));
        }
        let (e, h) = (shape.embed_dim, shape.hidden_dim);
        Ok(DmfModel {
            user_embeddings: Embedding::uniform(num_users, e, INIT_SCALE, rng),
            feature_embeddings: Embedding::uniform(num_features, e, INIT_SCALE, rng),
            user_fc: DenseLayer::uniform(e, h, INIT_SCALE, rng),
            feat_fc: DenseLayer::uniform(e, h, INIT_SCALE, rng),
            out_fc: DenseLayer::uniform(shape.fusion.width(h), 1, INIT_SCALE, rng),
            dropout_rate: shape.dropout_rate,
            fusion: shape.fusion,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            embed_dim: self.embed_dim(),
            hidden_dim: self.hidden_dim(),
            dropout_rate: self.dropout_rate,
            fusion: self.fusion,
        }
    }

    pub fn num_users(&self) -> usize {
        self.user_embeddings.rows()
    }

    pub fn num_features(&self) -> usize {
        self.feature_embeddings.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.user_embeddings.dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.user_fc.out_dim()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn fusion(&self) -> Fusion {
        self.fusion
    }

    pub fn is_finite(&self) -> bool {
        self.param_values().iter().all(|(_, v)| v.iter().all(|x| x.is_finite()))
    }

    fn check_indices(what: &'static str, indices: &[usize], len: usize) -> Result<()> {
        match indices.iter().find(|&&i| i >= len) {
            Some(&bad) => Err(Error::Index { what, value: bad, len }),
            None => Ok(()),
        }
    }

    /// Predicts `ŷ` for each `(users[k], features[k])` pair.
    pub fn forward(&self, users: &[usize], features: &[usize], train: bool, rng: &mut Rng) -> Result<(Matrix, ForwardCache)> {
        if users.len() != features.len() {
            return Err(Error::shape(
                "DmfModel::forward",
                format!("{} users", users.len()),
                format!("{} features", features.len()),
            ));
        }
        Self::check_indices("user", users, self.num_users())?;
        Self::check_indices("feature", features, self.num_features())?;
        let feat_in = self.feature_embeddings.lookup(features)?;
        self.forward_with(users, feat_in, Some(features.to_vec()), train, rng)
    }

    /// Eval-mode prediction where the feature embeddings come from elsewhere
    /// (typically another client's table). The model's own table is not read.
    pub fn predict_with_foreign_features(&self, users: &[usize], foreign: &Matrix) -> Result<Matrix> {
        if foreign.cols() != self.embed_dim() {
            return Err(Error::shape(
                "predict_with_foreign_features",
                foreign.shape_str(),
                format!("width {}", self.embed_dim()),
            ));
        }
        if foreign.rows() != users.len() {
            return Err(Error::shape(
                "predict_with_foreign_features",
                foreign.shape_str(),
                format!("{} users", users.len()),
            ));
        }
        Self::check_indices("user", users, self.num_users())?;
        // Eval mode never draws from the rng.
        let mut unused = Rng::new(0);
        let (pred, _) = self.forward_with(users, foreign.clone(), None, false, &mut unused)?;
        Ok(pred)
    }

    fn forward_with(
        &self,
        users: &[usize],
        feat_in: Matrix,
        features: Option<Vec<usize>>,
        train: bool,
        rng: &mut Rng,
    ) -> Result<(Matrix, ForwardCache)> {
        let user_in = self.user_embeddings.lookup(users)?;
        let user_pre = self.user_fc.apply(&user_in)?;
        let feat_pre = self.feat_fc.apply(&feat_in)?;
        let user_act = relu(&user_pre);
        let feat_act = relu(&feat_pre);
        let fused = match self.fusion {
            Fusion::Concat => user_act.hconcat(&feat_act)?,
            Fusion::Product => user_act.hadamard(&feat_act)?,
        };
        let (dropped, mask) = dropout(&fused, self.dropout_rate, train, rng)?;
        let logits = self.out_fc.apply(&dropped)?;
        let output = sigmoid(&logits);
        let cache = ForwardCache {
            users: users.to_vec(),
            features,
            user_in,
            feat_in,
            user_pre,
            feat_pre,
            user_act,
            feat_act,
            mask,
            dropped,
            output: output.clone(),
            consumed: false,
        };
        Ok((output, cache))
    }

    /// Accumulates gradients of the loss into every parameter group.
    /// Only embedding rows referenced by the batch receive gradient.
    pub fn backward(&mut self, cache: &mut ForwardCache, grad_pred: &Matrix) -> Result<()> {
        if cache.consumed {
            return Err(Error::State("forward cache already consumed by a backward pass".into()));
        }
        if grad_pred.shape() != cache.output.shape() {
            return Err(Error::shape("DmfModel::backward", grad_pred.shape_str(), cache.output.shape_str()));
        }
        cache.consumed = true;
        let grad_logits = sigmoid_backward(grad_pred, &cache.output)?;
        let grad_dropped = self.out_fc.backward_from(&cache.dropped, &grad_logits)?;
        let grad_fused = dropout_backward(&grad_dropped, &cache.mask)?;
        let (grad_user_act, grad_feat_act) = match self.fusion {
            Fusion::Concat => grad_fused.hsplit(self.hidden_dim())?,
            Fusion::Product => (grad_fused.hadamard(&cache.feat_act)?, grad_fused.hadamard(&cache.user_act)?),
        };
        let grad_user_pre = relu_backward(&grad_user_act, &cache.user_pre)?;
        let grad_feat_pre = relu_backward(&grad_feat_act, &cache.feat_pre)?;
        let grad_user_in = self.user_fc.backward_from(&cache.user_in, &grad_user_pre)?;
        let grad_feat_in = self.feat_fc.backward_from(&cache.feat_in, &grad_feat_pre)?;
        self.user_embeddings.accumulate_rows(&cache.users, &grad_user_in);
        if let Some(features) = &cache.features {
            self.feature_embeddings.accumulate_rows(features, &grad_feat_in);
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        self.user_embeddings.zero_grads();
        self.feature_embeddings.zero_grads();
        self.user_fc.zero_grads();
        self.feat_fc.zero_grads();
        self.out_fc.zero_grads();
    }

    /// Tower activations `relu(user_fc(p_u))` for the given user rows.
    pub fn user_towers(&self, users: &[usize]) -> Result<Matrix> {
        Self::check_indices("user", users, self.num_users())?;
        Ok(relu(&self.user_fc.apply(&self.user_embeddings.lookup(users)?)?))
    }

    /// Tower activations `relu(feat_fc(q))` for arbitrary embedding rows.
    pub fn feature_towers(&self, embeddings: &Matrix) -> Result<Matrix> {
        Ok(relu(&self.feat_fc.apply(embeddings)?))
    }

    /// Eval-mode output from precomputed tower activations. Bit-identical to
    /// [`DmfModel::forward`] in eval mode.
    pub fn score_towers(&self, user_act: &[f64], feat_act: &[f64]) -> f64 {
        let w = self.out_fc.weight.as_slice();
        let mut acc = 0.0;
        match self.fusion {
            Fusion::Concat => {
                let h = user_act.len();
                for (x, wk) in user_act.iter().zip(&w[..h]) {
                    if *x != 0.0 {
                        acc += x * wk;
                    }
                }
                for (x, wk) in feat_act.iter().zip(&w[h..]) {
                    if *x != 0.0 {
                        acc += x * wk;
                    }
                }
            }
            Fusion::Product => {
                for ((a, b), wk) in user_act.iter().zip(feat_act).zip(w) {
                    let x = a * b;
                    if x != 0.0 {
                        acc += x * wk;
                    }
                }
            }
        }
        sigmoid_scalar(acc + self.out_fc.bias[0])
    }

    /// Scores every `users × features` combination, row-major by user.
    /// `feature_embeddings` holds one embedding row per scored feature.
    pub fn score_grid(&self, users: &[usize], feature_embeddings: &Matrix) -> Result<Vec<f64>> {
        if feature_embeddings.cols() != self.embed_dim() {
            return Err(Error::shape(
                "score_grid",
                feature_embeddings.shape_str(),
                format!("width {}", self.embed_dim()),
            ));
        }
        let ua = self.user_towers(users)?;
        let fa = self.feature_towers(feature_embeddings)?;
        let nf = fa.rows();
        let mut out = vec![0.0; users.len() * nf];
        out.par_chunks_mut(nf.max(1)).enumerate().for_each(|(u, chunk)| {
            let urow = ua.row(u);
            for (f, slot) in chunk.iter_mut().enumerate() {
                *slot = self.score_towers(urow, fa.row(f));
            }
        });
        Ok(out)
    }

    /// Named views of all parameter tensors, in checkpoint order.
    pub fn param_values(&self) -> Vec<(&'static str, &[f64])> {
        vec![
            ("user_embeddings", self.user_embeddings.table.as_slice()),
            ("feature_embeddings", self.feature_embeddings.table.as_slice()),
            ("user_fc.weight", self.user_fc.weight.as_slice()),
            ("user_fc.bias", &self.user_fc.bias),
            ("feat_fc.weight", self.feat_fc.weight.as_slice()),
            ("feat_fc.bias", &self.feat_fc.bias),
            ("out_fc.weight", self.out_fc.weight.as_slice()),
            ("out_fc.bias", &self.out_fc.bias),
        ]
    }

    fn param_values_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.user_embeddings.table.as_mut_slice(),
            self.feature_embeddings.table.as_mut_slice(),
            self.user_fc.weight.as_mut_slice(),
            &mut self.user_fc.bias,
            self.feat_fc.weight.as_mut_slice(),
            &mut self.feat_fc.bias,
            self.out_fc.weight.as_mut_slice(),
            &mut self.out_fc.bias,
        ]
    }

    fn same_layout(&self, other: &DmfModel) -> bool {
        self.param_values()
            .iter()
            .zip(other.param_values())
            .all(|((_, a), (_, b))| a.len() == b.len())
            && self.fusion == other.fusion
    }

    /// Parameter-wise arithmetic mean of `models`.
    pub fn average(models: &[&DmfModel]) -> Result<DmfModel> {
        let first = *models
            .first()
            .ok_or_else(|| Error::Config("cannot average zero models".into()))?;
        if let Some(bad) = models.iter().find(|m| !first.same_layout(m)) {
            return Err(Error::shape(
                "DmfModel::average",
                format!("{} users x {} features", first.num_users(), first.num_features()),
                format!("{} users x {} features", bad.num_users(), bad.num_features()),
            ));
        }
        let mut out = first.clone();
        out.zero_grads();
        let n = models.len() as f64;
        let sources: Vec<Vec<(&'static str, &[f64])>> = models.iter().map(|m| m.param_values()).collect();
        for (t, dst) in out.param_values_mut().into_iter().enumerate() {
            for (i, d) in dst.iter_mut().enumerate() {
                let mut acc = 0.0;
                for src in &sources {
                    acc += src[t].1[i];
                }
                *d = acc / n;
            }
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> String {
        let mut s = String::new();
        writeln!(s, "feddmf-checkpoint 1").unwrap();
        writeln!(s, "fusion {}", self.fusion.name()).unwrap();
        writeln!(s, "dropout_rate {:?}", self.dropout_rate).unwrap();
        let shapes = self.tensor_shapes();
        for ((name, values), (rows, cols)) in self.param_values().into_iter().zip(shapes) {
            writeln!(s, "tensor {name} {rows} {cols}").unwrap();
            for r in 0..rows {
                let row = &values[r * cols..(r + 1) * cols];
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                writeln!(s, "{}", line.join(" ")).unwrap();
            }
        }
        s
    }

    fn tensor_shapes(&self) -> [(usize, usize); 8] {
        [
            self.user_embeddings.table.shape(),
            self.feature_embeddings.table.shape(),
            self.user_fc.weight.shape(),
            (1, self.user_fc.bias.len()),
            self.feat_fc.weight.shape(),
            (1, self.feat_fc.bias.len()),
            self.out_fc.weight.shape(),
            (1, self.out_fc.bias.len()),
        ]
    }

    pub fn from_checkpoint(text: &str) -> Result<DmfModel> {
        let path = Path::new("<checkpoint>");
        let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l));
        let mut next = |expect: &str| -> Result<(u64, Vec<&str>)> {
            let (n, line) = lines.next().ok_or_else(|| Error::Parse {
                path: path.into(),
                line: 0,
                message: format!("unexpected end of checkpoint, expected {expect}"),
            })?;
            Ok((n, line.split(' ').collect()))
        };
        let bad = |line: u64, message: String| Error::Parse {
            path: path.into(),
            line,
            message,
        };

        let (n, header) = next("header")?;
        if header != ["feddmf-checkpoint", "1"] {
            return Err(bad(n, "not a version 1 checkpoint".into()));
        }
        let (n, fusion) = next("fusion")?;
        let fusion = match fusion.as_slice() {
            ["fusion", "concat"] => Fusion::Concat,
            ["fusion", "product"] => Fusion::Product,
            _ => return Err(bad(n, "expected `fusion concat|product`".into())),
        };
        let (n, rate) = next("dropout_rate")?;
        let dropout_rate = match rate.as_slice() {
            ["dropout_rate", v] => v.parse::<f64>().map_err(|e| bad(n, e.to_string()))?,
            _ => return Err(bad(n, "expected `dropout_rate <value>`".into())),
        };

        let names = [
            "user_embeddings",
            "feature_embeddings",
            "user_fc.weight",
            "user_fc.bias",
            "feat_fc.weight",
            "feat_fc.bias",
            "out_fc.weight",
            "out_fc.bias",
        ];
        let mut tensors = Vec::with_capacity(names.len());
        for name in names {
            let (n, head) = next(name)?;
            let (rows, cols) = match head.as_slice() {
                ["tensor", got, r, c] if *got == name => (
                    r.parse::<usize>().map_err(|e| bad(n, e.to_string()))?,
                    c.parse::<usize>().map_err(|e| bad(n, e.to_string()))?,
                ),
                _ => return Err(bad(n, format!("expected `tensor {name} <rows> <cols>`"))),
            };
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, fields) = next("tensor row")?;
                if fields.len() != cols {
                    return Err(bad(n, format!("expected {cols} values, found {}", fields.len())));
                }
                for f in fields {
                    data.push(f.parse::<f64>().map_err(|e| bad(n, format!("{f:?}: {e}")))?);
                }
            }
            tensors.push(Matrix::from_vec(rows, cols, data)?);
        }
        let mut it = tensors.into_iter();
        let mut take = || it.next().expect("eight tensors");
        let user_embeddings = Embedding::new(take());
        let feature_embeddings = Embedding::new(take());
        let user_fc = DenseLayer::new(take(), take().into_vec())?;
        let feat_fc = DenseLayer::new(take(), take().into_vec())?;
        let out_fc = DenseLayer::new(take(), take().into_vec())?;
        let model = DmfModel {
            user_embeddings,
            feature_embeddings,
            user_fc,
            feat_fc,
            out_fc,
            dropout_rate,
            fusion,
        };
        let (e, h) = (model.embed_dim(), model.hidden_dim());
        if model.feature_embeddings.dim() != e
            || model.user_fc.in_dim() != e
            || model.feat_fc.in_dim() != e
            || model.feat_fc.out_dim() != h
            || model.out_fc.in_dim() != fusion.width(h)
            || model.out_fc.out_dim() != 1
        {
            return Err(bad(0, "tensor shapes are inconsistent".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<DmfModel> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        DmfModel::from_checkpoint(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.into(),
                line,
                message,
            },
            other => other,
        })
    }
}

impl ParamSet for DmfModel {
    fn slots(&mut self) -> Vec<ParamSlot<'_>> {
        let mut slots = vec![
            self.user_embeddings.slot("user_embeddings"),
            self.feature_embeddings.slot("feature_embeddings"),
        ];
        slots.extend(self.user_fc.named_slots("user_fc.weight", "user_fc.bias"));
        slots.extend(self.feat_fc.named_slots("feat_fc.weight", "feat_fc.bias"));
        slots.extend(self.out_fc.named_slots("out_fc.weight", "out_fc.bias"));
        slots
    }

    fn after_step(&mut self) {
        self.user_embeddings.clear_touched();
        self.feature_embeddings.clear_touched();
    }
}

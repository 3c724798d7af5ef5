//! Small classifiers with analytic gradients, local gradient-descent training
//! and evaluation.
//!
//! Both model families flatten to a single [`ParamVector`]:
//!
//! - linear softmax: `weights` (row-major, `n_classes x n_features`), `bias`
//! - MLP: `w1` (row-major, `hidden x n_features`), `b1`, `w2` (row-major,
//!   `n_classes x hidden`), `b2`, with a tanh hidden activation

use rand::seq::index;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{check_dim, Error, Result};
use crate::rng::{self, Domain};
use crate::vector::ParamVector;

pub const DEFAULT_HIDDEN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Batch {
    Full,
    Minibatch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub local_steps: usize,
    pub local_lr: f64,
    #[serde(default = "default_batch")]
    pub batch: Batch,
}

fn default_batch() -> Batch {
    Batch::Full
}

impl Default for TrainConfig {
    /// 5 full-batch steps at learning rate 0.01.
    fn default() -> Self {
        Self {
            local_steps: 5,
            local_lr: 0.01,
            batch: Batch::Full,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.local_steps == 0 {
            return Err(Error::InvalidArgument("local_steps must be at least 1".into()));
        }
        if !(self.local_lr >= 0.0 && self.local_lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid local_lr {}", self.local_lr)));
        }
        if self.batch == Batch::Minibatch(0) {
            return Err(Error::InvalidArgument("minibatch size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxModel {
    pub n_features: usize,
    pub n_classes: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmaxModel {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            n_features,
            n_classes,
            weights: vec![0.0; n_features * n_classes],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn num_params(n_features: usize, n_classes: usize) -> usize {
        n_classes * (n_features + 1)
    }

    pub fn flatten(&self) -> ParamVector {
        let mut v = Vec::with_capacity(self.weights.len() + self.bias.len());
        v.extend_from_slice(&self.weights);
        v.extend_from_slice(&self.bias);
        ParamVector::new(v)
    }

    pub fn unflatten(params: &ParamVector, n_features: usize, n_classes: usize) -> Result<Self> {
        check_dim(Self::num_params(n_features, n_classes), params.dim())?;
        let (w, b) = params.as_slice().split_at(n_features * n_classes);
        Ok(Self {
            n_features,
            n_classes,
            weights: w.to_vec(),
            bias: b.to_vec(),
        })
    }

    fn logits(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let row = &self.weights[c * self.n_features..(c + 1) * self.n_features];
            let mut acc = self.bias[c];
            for (w, xi) in row.iter().zip(x) {
                acc += w * xi;
            }
            *o = acc;
        }
    }

    /// Mean cross-entropy and its gradient in flattened layout.
    fn loss_and_gradient(&self, ds: &LabeledDataset) -> (f64, Vec<f64>) {
        let (d, k) = (self.n_features, self.n_classes);
        let mut grad = vec![0.0; Self::num_params(d, k)];
        let mut logits = vec![0.0; k];
        let mut total = 0.0;
        for (x, y) in ds.rows() {
            self.logits(x, &mut logits);
            total += softmax_in_place(&mut logits, y);
            logits[y] -= 1.0;
            let (gw, gb) = grad.split_at_mut(d * k);
            for c in 0..k {
                let r = logits[c];
                for (g, xi) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *g += r * xi;
                }
                gb[c] += r;
            }
        }
        let n = ds.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub n_features: usize,
    pub hidden: usize,
    pub n_classes: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn num_params(n_features: usize, hidden: usize, n_classes: usize) -> usize {
        hidden * (n_features + 1) + n_classes * (hidden + 1)
    }

    pub fn flatten(&self) -> ParamVector {
        let mut v = Vec::with_capacity(Self::num_params(self.n_features, self.hidden, self.n_classes));
        v.extend_from_slice(&self.w1);
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.extend_from_slice(&self.b2);
        ParamVector::new(v)
    }

    pub fn unflatten(
        params: &ParamVector,
        n_features: usize,
        hidden: usize,
        n_classes: usize,
    ) -> Result<Self> {
        check_dim(Self::num_params(n_features, hidden, n_classes), params.dim())?;
        let p = params.as_slice();
        let (w1, rest) = p.split_at(hidden * n_features);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(n_classes * hidden);
        Ok(Self {
            n_features,
            hidden,
            n_classes,
            w1: w1.to_vec(),
            b1: b1.to_vec(),
            w2: w2.to_vec(),
            b2: b2.to_vec(),
        })
    }

    fn forward(&self, x: &[f64], h: &mut [f64], logits: &mut [f64]) {
        let d = self.n_features;
        for (j, hj) in h.iter_mut().enumerate() {
            let mut acc = self.b1[j];
            for (w, xi) in self.w1[j * d..(j + 1) * d].iter().zip(x) {
                acc += w * xi;
            }
            *hj = acc.tanh();
        }
        for (c, o) in logits.iter_mut().enumerate() {
            let mut acc = self.b2[c];
            for (w, hj) in self.w2[c * self.hidden..(c + 1) * self.hidden].iter().zip(h.iter()) {
                acc += w * hj;
            }
            *o = acc;
        }
    }

    fn loss_and_gradient(&self, ds: &LabeledDataset) -> (f64, Vec<f64>) {
        let (d, m, k) = (self.n_features, self.hidden, self.n_classes);
        let mut grad = vec![0.0; Self::num_params(d, m, k)];
        let mut h = vec![0.0; m];
        let mut dh = vec![0.0; m];
        let mut logits = vec![0.0; k];
        let mut total = 0.0;
        for (x, y) in ds.rows() {
            self.forward(x, &mut h, &mut logits);
            total += softmax_in_place(&mut logits, y);
            logits[y] -= 1.0;

            let (gw1, rest) = grad.split_at_mut(m * d);
            let (gb1, rest) = rest.split_at_mut(m);
            let (gw2, gb2) = rest.split_at_mut(k * m);

            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..k {
                let r = logits[c];
                let w2_row = &self.w2[c * m..(c + 1) * m];
                for j in 0..m {
                    gw2[c * m + j] += r * h[j];
                    dh[j] += r * w2_row[j];
                }
                gb2[c] += r;
            }
            for j in 0..m {
                let da = dh[j] * (1.0 - h[j] * h[j]);
                for (g, xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += da * xi;
                }
                gb1[j] += da;
            }
        }
        let n = ds.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (total / n, grad)
    }
}

/// Turns logits into probabilities in place and returns `-ln p[y]`.
fn softmax_in_place(z: &mut [f64], y: usize) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted_y = z[y] - max;
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    (sum.ln() - shifted_y).max(0.0)
}

/// First index of the maximum.
fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = i;
        }
    }
    best
}

/// Model family and shape; operates on flattened parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear {
        n_features: usize,
        n_classes: usize,
    },
    Mlp {
        n_features: usize,
        hidden: usize,
        n_classes: usize,
    },
}

impl Architecture {
    pub fn n_features(&self) -> usize {
        match *self {
            Self::Linear { n_features, .. } | Self::Mlp { n_features, .. } => n_features,
        }
    }

    pub fn n_classes(&self) -> usize {
        match *self {
            Self::Linear { n_classes, .. } | Self::Mlp { n_classes, .. } => n_classes,
        }
    }

    pub fn num_params(&self) -> usize {
        match *self {
            Self::Linear { n_features, n_classes } => LinearSoftmaxModel::num_params(n_features, n_classes),
            Self::Mlp { n_features, hidden, n_classes } => MlpModel::num_params(n_features, hidden, n_classes),
        }
    }

    /// Per-layer uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = rng::stream(seed, Domain::Init, 0, 0);
        let mut layer = |len: usize, fan_in: usize, out: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let u = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            out.extend((0..len).map(|_| u.sample(&mut rng)));
        };
        let mut v = Vec::with_capacity(self.num_params());
        match *self {
            Self::Linear { n_features, n_classes } => {
                layer(n_features * n_classes, n_features, &mut v);
                layer(n_classes, n_features, &mut v);
            }
            Self::Mlp { n_features, hidden, n_classes } => {
                layer(hidden * n_features, n_features, &mut v);
                layer(hidden, n_features, &mut v);
                layer(n_classes * hidden, hidden, &mut v);
                layer(n_classes, hidden, &mut v);
            }
        }
        ParamVector::new(v)
    }

    fn check(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<()> {
        if ds.is_empty() {
            return Err(Error::Empty("dataset"));
        }
        check_dim(self.num_params(), params.dim())?;
        check_dim(self.n_features(), ds.n_features())?;
        if ds.n_classes() > self.n_classes() {
            return Err(Error::DimensionMismatch {
                expected: self.n_classes(),
                found: ds.n_classes(),
            });
        }
        Ok(())
    }

    pub fn loss_and_gradient(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<(f64, ParamVector)> {
        self.check(params, ds)?;
        let (loss, grad) = match *self {
            Self::Linear { n_features, n_classes } => {
                LinearSoftmaxModel::unflatten(params, n_features, n_classes)?.loss_and_gradient(ds)
            }
            Self::Mlp { n_features, hidden, n_classes } => {
                MlpModel::unflatten(params, n_features, hidden, n_classes)?.loss_and_gradient(ds)
            }
        };
        Ok((loss, ParamVector::new(grad)))
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<f64> {
        Ok(self.loss_and_gradient(params, ds)?.0)
    }

    pub fn gradient(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<ParamVector> {
        Ok(self.loss_and_gradient(params, ds)?.1)
    }

    pub fn predict(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<Vec<usize>> {
        self.check(params, ds)?;
        let k = self.n_classes();
        let mut logits = vec![0.0; k];
        let preds = match *self {
            Self::Linear { n_features, n_classes } => {
                let m = LinearSoftmaxModel::unflatten(params, n_features, n_classes)?;
                ds.rows()
                    .map(|(x, _)| {
                        m.logits(x, &mut logits);
                        argmax(&logits)
                    })
                    .collect()
            }
            Self::Mlp { n_features, hidden, n_classes } => {
                let m = MlpModel::unflatten(params, n_features, hidden, n_classes)?;
                let mut h = vec![0.0; hidden];
                ds.rows()
                    .map(|(x, _)| {
                        m.forward(x, &mut h, &mut logits);
                        argmax(&logits)
                    })
                    .collect()
            }
        };
        Ok(preds)
    }

    /// Percentage of misclassified rows; argmax ties go to the smallest class.
    pub fn evaluate_error(&self, params: &ParamVector, ds: &LabeledDataset) -> Result<f64> {
        let preds = self.predict(params, ds)?;
        let wrong = preds.iter().zip(ds.labels()).filter(|(p, y)| p != y).count();
        Ok(100.0 * wrong as f64 / ds.len() as f64)
    }

    /// Runs `cfg.local_steps` gradient-descent steps starting from `params`.
    pub fn local_train(
        &self,
        params: &ParamVector,
        ds: &LabeledDataset,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<ParamVector> {
        cfg.validate()?;
        self.check(params, ds)?;
        let mut w = params.clone();
        let mut rng = rng::stream(seed, Domain::LocalTrain, 0, 0);
        for _ in 0..cfg.local_steps {
            let grad = match cfg.batch {
                Batch::Minibatch(size) if size < ds.len() => {
                    let mut rows = index::sample(&mut rng, ds.len(), size).into_vec();
                    rows.sort_unstable();
                    self.gradient(&w, &ds.subset(&rows))?
                }
                _ => self.gradient(&w, ds)?,
            };
            w = w.axpy(-cfg.local_lr, &grad)?;
        }
        Ok(w)
    }
}

use alloc::vec::Vec;
use core::fmt;

use rand::Rng;

use super::Dataset;
use crate::error::{Error, Result};
use crate::params::ParameterVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelKind {
    SoftmaxRegression,
    /// One hidden ReLU layer.
    #[cfg_attr(feature = "serde", serde(rename = "mlp_1hidden", alias = "mlp"))]
    Mlp,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::SoftmaxRegression => "softmax_regression",
            ModelKind::Mlp => "mlp_1hidden",
        })
    }
}

/// Architecture and local optimizer settings.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    /// Ignored by softmax regression.
    pub hidden_dim: usize,
    pub num_classes: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim: 784,
            hidden_dim: 32,
            num_classes: 10,
            learning_rate: 0.1,
            momentum: 0.9,
            local_epochs: 1,
            batch_size: 32,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("input_dim", self.input_dim),
            ("num_classes", self.num_classes),
            ("local_epochs", self.local_epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(name, "must be positive"));
            }
        }
        if self.kind == ModelKind::Mlp && self.hidden_dim == 0 {
            return Err(Error::invalid("hidden_dim", "must be positive for mlp"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate",
                "must be positive and finite",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum", "must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn layout(&self) -> Layout {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        let segments = match self.kind {
            ModelKind::SoftmaxRegression => alloc::vec![("w", c, d), ("b", c, 1)],
            ModelKind::Mlp => alloc::vec![("w1", h, d), ("b1", h, 1), ("w2", c, h), ("b2", c, 1)],
        };
        let mut offset = 0;
        Layout {
            segments: segments
                .into_iter()
                .map(|(name, rows, cols)| {
                    let s = Segment {
                        name,
                        rows,
                        cols,
                        offset,
                    };
                    offset += rows * cols;
                    s
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().len()
    }

    /// Fresh weights: zeros for softmax regression; Glorot-uniform matrices
    /// and zero biases for the MLP.
    pub fn init_weights<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        let layout = self.layout();
        let mut w = alloc::vec![0.0; layout.len()];
        if self.kind == ModelKind::Mlp {
            for seg in layout.segments().iter().filter(|s| s.name.starts_with('w')) {
                let s = libm::sqrt(6.0 / (seg.rows + seg.cols) as f64);
                for x in &mut w[seg.offset..seg.offset + seg.rows * seg.cols] {
                    *x = rng.random_range(-s..s);
                }
            }
        }
        ParameterVector::new(w).expect("finite init")
    }
}

/// One named block of the flat parameter vector (a `rows x cols` row-major
/// matrix; biases have `cols == 1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps flat parameter coordinates to layers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    segments: Vec<Segment>,
}

impl Layout {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.last().map_or(0, |s| s.offset + s.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() == self.len() {
            Ok(())
        } else {
            Err(Error::Layout {
                expected: self.len(),
                found: params.len(),
            })
        }
    }

    /// Views of each segment.
    pub fn unflatten<'a>(&self, params: &'a [f64]) -> Result<Vec<&'a [f64]>> {
        self.check(params)?;
        Ok(self
            .segments
            .iter()
            .map(|s| &params[s.offset..s.offset + s.len()])
            .collect())
    }

    pub fn flatten(&self, parts: &[&[f64]]) -> Result<Vec<f64>> {
        if parts.len() != self.segments.len() {
            return Err(Error::DimensionMismatch {
                expected: self.segments.len(),
                found: parts.len(),
            });
        }
        let mut out = Vec::with_capacity(self.len());
        for (seg, part) in self.segments.iter().zip(parts) {
            crate::params::check_dim(seg.len(), part.len())?;
            out.extend_from_slice(part);
        }
        Ok(out)
    }
}

/// Reusable buffers for forward and backward passes.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    nz: Vec<usize>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    grad_hidden: Vec<f64>,
}

/// Overwrites `z` with softmax probabilities and returns log-sum-exp.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + libm::log(sum)
}

/// `out[r] = bias[r] + sum_{j in nz} w[r, j] * x[j]`.
#[inline]
fn affine_sparse(w: &[f64], bias: &[f64], cols: usize, x: &[f64], nz: &[usize], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = bias[r];
        for &j in nz {
            acc += row[j] * x[j];
        }
        *o = acc;
    }
}

#[inline]
fn affine_dense(w: &[f64], bias: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

impl ModelSpec {
    /// Forward pass for one example. Logits end up in `ws.logits`.
    fn forward(&self, weights: &[f64], x: &[f64], ws: &mut Workspace) {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        ws.nz.clear();
        ws.nz.extend(
            x.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, _)| j),
        );
        ws.logits.resize(c, 0.0);
        match self.kind {
            ModelKind::SoftmaxRegression => {
                let (w, b) = weights.split_at(c * d);
                affine_sparse(w, b, d, x, &ws.nz, &mut ws.logits);
            }
            ModelKind::Mlp => {
                let (w1, rest) = weights.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                ws.hidden_pre.resize(h, 0.0);
                ws.hidden.resize(h, 0.0);
                affine_sparse(w1, b1, d, x, &ws.nz, &mut ws.hidden_pre);
                for (o, &a) in ws.hidden.iter_mut().zip(&ws.hidden_pre) {
                    *o = a.max(0.0);
                }
                affine_dense(w2, b2, h, &ws.hidden, &mut ws.logits);
            }
        }
    }

    /// Adds the cross-entropy gradient of one example (scaled by `weight`)
    /// into `grad` and returns its loss.
    fn accumulate_example(
        &self,
        weights: &[f64],
        x: &[f64],
        label: usize,
        weight: f64,
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> f64 {
        let (d, h, c) = (self.input_dim, self.hidden_dim, self.num_classes);
        self.forward(weights, x, ws);
        let z_label = ws.logits[label];
        let lse = softmax_in_place(&mut ws.logits);
        let loss = lse - z_label;
        // logits now hold dL/dz = p - onehot, scaled
        ws.logits[label] -= 1.0;
        ws.logits.iter_mut().for_each(|g| *g *= weight);

        match self.kind {
            ModelKind::SoftmaxRegression => {
                let (gw, gb) = grad.split_at_mut(c * d);
                for (r, &g) in ws.logits.iter().enumerate() {
                    let row = &mut gw[r * d..(r + 1) * d];
                    for &j in &ws.nz {
                        row[j] += g * x[j];
                    }
                    gb[r] += g;
                }
            }
            ModelKind::Mlp => {
                let w2 = &weights[h * d + h..h * d + h + c * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(c * h);
                ws.grad_hidden.clear();
                ws.grad_hidden.resize(h, 0.0);
                for (r, &g) in ws.logits.iter().enumerate() {
                    let row = &mut gw2[r * h..(r + 1) * h];
                    for (gw, &hv) in row.iter_mut().zip(&ws.hidden) {
                        *gw += g * hv;
                    }
                    gb2[r] += g;
                    for (gh, &wv) in ws.grad_hidden.iter_mut().zip(&w2[r * h..(r + 1) * h]) {
                        *gh += g * wv;
                    }
                }
                for k in 0..h {
                    if ws.hidden_pre[k] <= 0.0 {
                        continue;
                    }
                    let g = ws.grad_hidden[k];
                    let row = &mut gw1[k * d..(k + 1) * d];
                    for &j in &ws.nz {
                        row[j] += g * x[j];
                    }
                    gb1[k] += g;
                }
            }
        }
        loss
    }

    /// Mean cross-entropy over `batch` and its gradient, written into `grad`.
    pub fn loss_and_gradient(
        &self,
        weights: &[f64],
        data: &Dataset,
        batch: &[usize],
        grad: &mut [f64],
    ) -> Result<f64> {
        let mut ws = Workspace::default();
        self.loss_and_gradient_with(weights, data, batch, grad, &mut ws)
    }

    pub(crate) fn loss_and_gradient_with(
        &self,
        weights: &[f64],
        data: &Dataset,
        batch: &[usize],
        grad: &mut [f64],
        ws: &mut Workspace,
    ) -> Result<f64> {
        self.check_compatible(weights, data)?;
        self.layout().check(grad)?;
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        for &i in batch {
            loss += self.accumulate_example(
                weights,
                data.row(i),
                data.labels()[i] as usize,
                scale,
                grad,
                ws,
            );
        }
        Ok(loss * scale)
    }

    /// Mean cross-entropy over `batch` without the gradient.
    pub fn loss(&self, weights: &[f64], data: &Dataset, batch: &[usize]) -> Result<f64> {
        self.check_compatible(weights, data)?;
        let mut ws = Workspace::default();
        let mut total = 0.0;
        for &i in batch {
            self.forward(weights, data.row(i), &mut ws);
            let z_label = ws.logits[data.labels()[i] as usize];
            total += softmax_in_place(&mut ws.logits) - z_label;
        }
        Ok(total / batch.len().max(1) as f64)
    }

    /// Logits for one example.
    pub fn logits(&self, weights: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.layout().check(weights)?;
        crate::params::check_dim(self.input_dim, x.len())?;
        let mut ws = Workspace::default();
        self.forward(weights, x, &mut ws);
        Ok(ws.logits)
    }

    fn check_compatible(&self, weights: &[f64], data: &Dataset) -> Result<()> {
        self.layout().check(weights)?;
        crate::params::check_dim(self.input_dim, data.dim())?;
        if data.num_classes() as usize > self.num_classes {
            return Err(Error::invalid(
                "num_classes",
                alloc::format!(
                    "dataset has {} classes, model {}",
                    data.num_classes(),
                    self.num_classes
                ),
            ));
        }
        Ok(())
    }
}

/// Test-set accuracy and mean cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Argmax ties resolve to the lowest class index.
pub fn evaluate(weights: &ParameterVector, test: &Dataset, spec: &ModelSpec) -> Result<Evaluation> {
    spec.check_compatible(weights.as_slice(), test)?;
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut ws = Workspace::default();
    let mut correct = 0usize;
    let mut loss = 0.0;
    for i in 0..test.len() {
        spec.forward(weights.as_slice(), test.row(i), &mut ws);
        let label = test.labels()[i] as usize;
        let mut best = 0;
        for (k, &z) in ws.logits.iter().enumerate() {
            if z > ws.logits[best] {
                best = k;
            }
        }
        if best == label {
            correct += 1;
        }
        let z_label = ws.logits[label];
        loss += softmax_in_place(&mut ws.logits) - z_label;
    }
    let n = test.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: loss / n,
    })
}

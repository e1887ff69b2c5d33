//! Dense parameter vectors and the coordinate-wise statistics shared by the
//! aggregators.
//!
//! All arithmetic is `f64`. Reductions over several vectors fold strictly left
//! to right in the order the caller passes them; the aggregators sort their
//! inputs by client id first, which is what makes results bit-reproducible.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A flat vector of model parameters or parameter updates.
///
/// Every entry is finite. Constructors and arithmetic check this and return
/// [`Error::NonFinite`] instead of producing NaN or infinity.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<f64>", into = "Vec<f64>"))]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().all(|v| v.is_finite()) {
            Ok(ParameterVector(values))
        } else {
            Err(Error::NonFinite("ParameterVector::new"))
        }
    }

    pub fn zeros(dim: usize) -> Self {
        ParameterVector(alloc::vec![0.0; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn add(&self, other: &ParameterVector) -> Result<ParameterVector> {
        add(self, other)
    }

    pub fn sub(&self, other: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self.dim(), other.dim())?;
        let out = self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect();
        ParameterVector::new(out).map_err(|_| Error::NonFinite("sub"))
    }

    pub fn scale(&self, c: f64) -> Result<ParameterVector> {
        scale(self, c)
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().map(|v| v * v).sum())
    }

    /// A copy with `extra` appended after the existing coordinates.
    pub fn extended(&self, extra: &[f64]) -> Result<ParameterVector> {
        let mut values = Vec::with_capacity(self.dim() + extra.len());
        values.extend_from_slice(&self.0);
        values.extend_from_slice(extra);
        ParameterVector::new(values)
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        ParameterVector::new(values)
    }
}

impl From<ParameterVector> for Vec<f64> {
    fn from(v: ParameterVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for ParameterVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[inline]
pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Common dimension of a non-empty list of vectors.
pub(crate) fn common_dim<V: AsRef<[f64]>>(vs: &[V], what: &'static str) -> Result<usize> {
    let first = vs.first().ok_or(Error::Empty(what))?;
    let dim = first.as_ref().len();
    for v in &vs[1..] {
        check_dim(dim, v.as_ref().len())?;
    }
    Ok(dim)
}

pub fn add(a: &ParameterVector, b: &ParameterVector) -> Result<ParameterVector> {
    check_dim(a.dim(), b.dim())?;
    let out = a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect();
    ParameterVector::new(out).map_err(|_| Error::NonFinite("add"))
}

pub fn scale(a: &ParameterVector, c: f64) -> Result<ParameterVector> {
    if !c.is_finite() {
        return Err(Error::invalid("scale factor", "must be finite"));
    }
    let out = a.0.iter().map(|x| x * c).collect();
    ParameterVector::new(out).map_err(|_| Error::NonFinite("scale"))
}

pub fn euclidean_distance(a: &ParameterVector, b: &ParameterVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(libm::sqrt(squared_distance_slices(&a.0, &b.0)))
}

pub fn squared_distance(a: &ParameterVector, b: &ParameterVector) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    Ok(squared_distance_slices(&a.0, &b.0))
}

#[inline]
pub(crate) fn squared_distance_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Median of a slice, sorting it in place. Even counts average the two middle
/// order statistics.
pub fn median_in_place(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 0 {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Per-coordinate median.
pub fn coordinate_median<V: AsRef<[f64]>>(vs: &[V]) -> Result<ParameterVector> {
    let dim = common_dim(vs, "vector list")?;
    let mut column = Vec::with_capacity(vs.len());
    let mut out = Vec::with_capacity(dim);
    for j in 0..dim {
        column.clear();
        column.extend(vs.iter().map(|v| v.as_ref()[j]));
        out.push(median_in_place(&mut column).unwrap_or_default());
    }
    ParameterVector::new(out)
}

/// Per-coordinate mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateStats {
    pub mean: ParameterVector,
    pub std: ParameterVector,
}

pub fn coordinate_stats<V: AsRef<[f64]>>(vs: &[V]) -> Result<CoordinateStats> {
    let dim = common_dim(vs, "vector list")?;
    let count = vs.len() as f64;
    let mut mean = alloc::vec![0.0; dim];
    for v in vs {
        for (m, x) in mean.iter_mut().zip(v.as_ref()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = alloc::vec![0.0; dim];
    for v in vs {
        for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
            let d = x - m;
            *s += d * d;
        }
    }
    let std = var.into_iter().map(|s| libm::sqrt(s / count)).collect();
    Ok(CoordinateStats {
        mean: ParameterVector::new(mean)?,
        std: ParameterVector::new(std)?,
    })
}

/// Mean and population standard deviation of a scalar sample.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some((mean, libm::sqrt(var)))
}

/// `sum_i weights[i] * vs[i]`, folded left to right in the given order.
pub fn weighted_sum<V: AsRef<[f64]>>(vs: &[V], weights: &[f64]) -> Result<ParameterVector> {
    let dim = common_dim(vs, "vector list")?;
    check_dim(vs.len(), weights.len())?;
    let mut out = alloc::vec![0.0; dim];
    for (v, &w) in vs.iter().zip(weights) {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += w * x;
        }
    }
    ParameterVector::new(out).map_err(|_| Error::NonFinite("weighted_sum"))
}

/// Unweighted mean, folded left to right.
pub fn mean<V: AsRef<[f64]>>(vs: &[V]) -> Result<ParameterVector> {
    let dim = common_dim(vs, "vector list")?;
    let mut out = alloc::vec![0.0; dim];
    for v in vs {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += x;
        }
    }
    let n = vs.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    ParameterVector::new(out).map_err(|_| Error::NonFinite("mean"))
}

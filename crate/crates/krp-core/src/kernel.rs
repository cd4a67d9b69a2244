//! RBF kernel evaluation, Gram matrices, and the per-sequence bandwidth
//! heuristic.
//!
//! The kernel is `k(x, z) = exp(-‖x - z‖² / (2σ²))`, so `k(x, x) = 1` and
//! all entries lie in `(0, 1]`. Gram matrices are positive semidefinite by
//! Mercer's theorem but frequently numerically singular; whenever a Gram
//! must be inverted a small diagonal jitter is added and the result is
//! validated by an attempted Cholesky factorization.

use alloc::format;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar;
use crate::seq::Sequence;

/// Diagonal jitter used by default whenever a Gram matrix must be
/// factorized (subspace fitting, ridge training).
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Bandwidths below this are treated as a constant (degenerate) sequence.
pub const MIN_BANDWIDTH: f64 = 1e-8;

/// Symmetric RBF Gram matrix of one sequence, with jitter bookkeeping.
///
/// Off-diagonal entries are plain kernel values; the diagonal is
/// `1 + jitter`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    values: DMatrix<f64>,
    sigma: f64,
    jitter: f64,
}

impl KernelMatrix {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }
}

/// RBF kernel `exp(-‖x - z‖² / (2σ²))`.
///
/// ```
/// let k = krp_core::kernel::rbf(&[1.0, 2.0], &[3.0, 1.0], 1.0).unwrap();
/// assert!((k - (-2.5f64).exp()).abs() < 1e-15);
/// ```
pub fn rbf(x: &[f64], z: &[f64], sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("bandwidth must be positive, got {sigma}")));
    }
    if x.len() != z.len() {
        return Err(Error::shape(format!(
            "vector dims differ: {} vs {}",
            x.len(),
            z.len()
        )));
    }
    let sq: f64 = x.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(scalar::exp(-sq / (2.0 * sigma * sigma)))
}

#[inline]
fn row_sq_dist(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let mut sq = 0.0;
    for c in 0..a.ncols() {
        let diff = a[(i, c)] - b[(j, c)];
        sq += diff * diff;
    }
    sq
}

/// Per-sequence bandwidth: the unbiased sample standard deviation of the
/// pooled multiset of all `n·d` scalar entries.
pub fn bandwidth(x: &Sequence) -> Result<f64> {
    let frames = x.frames();
    let count = (frames.nrows() * frames.ncols()) as f64;
    let mean = frames.iter().sum::<f64>() / count;
    let ss = frames.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    let sigma = scalar::sqrt(ss / (count - 1.0));
    if sigma < MIN_BANDWIDTH {
        return Err(Error::degenerate(format!(
            "feature standard deviation {sigma:.3e} below {MIN_BANDWIDTH:.0e}; sequence is constant"
        )));
    }
    Ok(sigma)
}

/// Gram matrix over arbitrary frame rows (workhorse behind [`gram`]; also
/// accepts a single row, where the result is `[[1 + jitter]]`).
pub fn gram_from_frames(frames: &DMatrix<f64>, sigma: f64, jitter: f64) -> Result<KernelMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("bandwidth must be positive, got {sigma}")));
    }
    if !(jitter >= 0.0) {
        return Err(Error::param(format!("jitter must be nonnegative, got {jitter}")));
    }
    let n = frames.nrows();
    let denom = 2.0 * sigma * sigma;
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        values[(i, i)] = 1.0 + jitter;
        for j in i + 1..n {
            let v = scalar::exp(-row_sq_dist(frames, i, frames, j) / denom);
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    if jitter > 0.0 && values.clone().cholesky().is_none() {
        return Err(Error::numerical(format!(
            "Gram matrix not positive definite at jitter {jitter:.1e}; increase the jitter"
        )));
    }
    Ok(KernelMatrix {
        values,
        sigma,
        jitter,
    })
}

/// RBF Gram matrix of a sequence: `Kᵢⱼ = k(xᵢ, xⱼ, σ) + jitter·[i = j]`.
///
/// With `jitter > 0` the result is validated to be positive definite by an
/// attempted factorization; with `jitter = 0` a singular (rank-deficient)
/// Gram is legal.
pub fn gram(x: &Sequence, sigma: f64, jitter: f64) -> Result<KernelMatrix> {
    gram_from_frames(x.frames(), sigma, jitter)
}

/// Cross-sequence kernel: entry `(r, s) = k(x¹_r, x²_s, σ)`.
pub fn cross_gram(x1: &Sequence, x2: &Sequence, sigma: f64) -> Result<DMatrix<f64>> {
    if x1.dim() != x2.dim() {
        return Err(Error::shape(format!(
            "sequence dims differ: {} vs {}",
            x1.dim(),
            x2.dim()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::param(format!("bandwidth must be positive, got {sigma}")));
    }
    let denom = 2.0 * sigma * sigma;
    let (a, b) = (x1.frames(), x2.frames());
    Ok(DMatrix::from_fn(a.nrows(), b.nrows(), |r, s| {
        scalar::exp(-row_sq_dist(a, r, b, s) / denom)
    }))
}

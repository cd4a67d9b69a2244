//! Order-free and linear rank-pooling baselines.
//!
//! Linear rank pooling summarizes a sequence as the vector `z` minimizing
//! the ranking-SVM objective
//!
//! ```text
//! ½‖z‖² + λ Σ_{i<j} max(0, η + zᵀxᵢ - zᵀxⱼ),
//! ```
//!
//! i.e. projections of the frames onto `z` must grow by at least `η` with
//! time. The solver is deterministic subgradient descent with Armijo
//! backtracking, so fits are reproducible without an external rank-SVM.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar;
use crate::seq::Sequence;

/// Pooling method that produced a [`PreimageDescriptor`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMethod {
    Avg,
    Rp,
    Bkrp,
    Ibkrp,
}

impl PoolMethod {
    pub fn name(&self) -> &'static str {
        match self {
            PoolMethod::Avg => "avg",
            PoolMethod::Rp => "rp",
            PoolMethod::Bkrp => "bkrp",
            PoolMethod::Ibkrp => "ibkrp",
        }
    }
}

/// Fit metadata carried by every pooled vector descriptor.
///
/// `sigma` is 0 for methods that do not use a kernel (`avg`, `rp`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoolMeta {
    pub eta: f64,
    pub lambda: f64,
    pub slack_c: f64,
    pub sigma: f64,
    pub iterations: u64,
    pub final_objective: f64,
}

impl PoolMeta {
    pub fn empty() -> Self {
        PoolMeta {
            eta: 0.0,
            lambda: 0.0,
            slack_c: 0.0,
            sigma: 0.0,
            iterations: 0,
            final_objective: 0.0,
        }
    }
}

/// Pooled vector descriptor `z ∈ R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreimageDescriptor {
    pub z: DVector<f64>,
    pub method: PoolMethod,
    pub meta: PoolMeta,
}

/// Parameters of the linear rank-pooling fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankParams {
    /// Ranking margin η.
    pub eta: f64,
    /// Weight λ of the ranking hinge sum.
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when the subgradient norm falls below this.
    pub tol: f64,
    /// Initial line-search step.
    pub step: f64,
}

impl Default for RankParams {
    fn default() -> Self {
        RankParams {
            eta: 0.01,
            lambda: 1.0,
            max_iters: 500,
            tol: 1e-6,
            step: 1.0,
        }
    }
}

impl RankParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.lambda >= 0.0 && self.tol > 0.0 && self.step > 0.0) {
            return Err(Error::param("RankParams fields must be positive"));
        }
        Ok(())
    }
}

/// Mean of the frames; invariant under frame permutations.
pub fn avg_pool(x: &Sequence) -> PreimageDescriptor {
    PreimageDescriptor {
        z: x.mean_frame(),
        method: PoolMethod::Avg,
        meta: PoolMeta::empty(),
    }
}

fn check_dims(z: &DVector<f64>, x: &Sequence) -> Result<()> {
    if z.len() != x.dim() {
        return Err(Error::shape(alloc::format!(
            "descriptor dim {} vs sequence dim {}",
            z.len(),
            x.dim()
        )));
    }
    Ok(())
}

/// Ranking-SVM objective `½‖z‖² + λ Σ_{i<j} max(0, η + zᵀxᵢ - zᵀxⱼ)`.
pub fn rp_objective(z: &DVector<f64>, x: &Sequence, prm: &RankParams) -> Result<f64> {
    prm.validate()?;
    check_dims(z, x)?;
    let proj: Vec<f64> = (0..x.frame_count()).map(|i| x.frame(i).dot(z)).collect();
    let mut hinge = 0.0;
    for i in 0..proj.len() {
        for j in i + 1..proj.len() {
            hinge += (prm.eta + proj[i] - proj[j]).max(0.0);
        }
    }
    Ok(0.5 * z.norm_squared() + prm.lambda * hinge)
}

/// Subgradient of [`rp_objective`]; the hinge kink uses the zero branch.
fn rp_subgradient(z: &DVector<f64>, x: &Sequence, prm: &RankParams) -> DVector<f64> {
    let proj: Vec<f64> = (0..x.frame_count()).map(|i| x.frame(i).dot(z)).collect();
    let mut grad = z.clone();
    for i in 0..proj.len() {
        for j in i + 1..proj.len() {
            if prm.eta + proj[i] - proj[j] > 0.0 {
                grad += prm.lambda * (x.frame(i) - x.frame(j));
            }
        }
    }
    grad
}

/// Fits linear rank pooling by subgradient descent with Armijo
/// backtracking from `z = 0`; returns the best visited iterate.
pub fn rp_fit(x: &Sequence, prm: &RankParams) -> Result<PreimageDescriptor> {
    prm.validate()?;
    let mut z = DVector::zeros(x.dim());
    let mut f = rp_objective(&z, x, prm)?;
    let mut best = (f, z.clone());
    let mut iterations = 0u64;
    const ARMIJO_C1: f64 = 1e-4;

    for _ in 0..prm.max_iters {
        let g = rp_subgradient(&z, x, prm);
        let gnorm2 = g.norm_squared();
        if scalar::sqrt(gnorm2) <= prm.tol {
            break;
        }
        let mut t = prm.step;
        let mut accepted = false;
        while t >= 1e-16 {
            let cand = &z - t * &g;
            let fc = rp_objective(&cand, x, prm)?;
            if fc.is_finite() && fc <= f - ARMIJO_C1 * t * gnorm2 {
                z = cand;
                f = fc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if f < best.0 {
            best = (f, z.clone());
        }
        if !accepted {
            break; // line search stalled at a kink; best iterate stands
        }
    }

    Ok(PreimageDescriptor {
        z: best.1,
        method: PoolMethod::Rp,
        meta: PoolMeta {
            eta: prm.eta,
            lambda: prm.lambda,
            slack_c: 0.0,
            sigma: 0.0,
            iterations,
            final_objective: best.0,
        },
    })
}

/// Fraction of pairs `i < j` whose linear ordering constraint
/// `zᵀxᵢ + η ≤ zᵀxⱼ` holds.
pub fn linear_order_satisfaction(z: &DVector<f64>, x: &Sequence, eta: f64) -> Result<f64> {
    check_dims(z, x)?;
    let proj: Vec<f64> = (0..x.frame_count()).map(|i| x.frame(i).dot(z)).collect();
    let n = proj.len();
    let mut ok = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if proj[i] + eta <= proj[j] {
                ok += 1;
            }
        }
    }
    Ok(ok as f64 / (n * (n - 1) / 2) as f64)
}

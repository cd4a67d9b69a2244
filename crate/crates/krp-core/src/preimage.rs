//! Kernelized rank pooling via RKHS pre-images.
//!
//! BKRP looks for a pre-image `z` whose kernel similarities to the frames
//! grow with time:
//!
//! ```text
//! BKRP(z)  = ½‖z‖² + λ Σ_{i<j} max(0, η + k(xᵢ,z) - k(xⱼ,z))
//! IBKRP(z) = ½ Σᵢ ‖xᵢ - z‖² + w Σ_{i<j} max(0, η + k(xᵢ,z) - k(xⱼ,z))
//! ```
//!
//! IBKRP replaces the norm regularizer by a data-attachment term so the
//! pre-image stays close to the input frames. Per-pair slack variables
//! `ξᵢⱼ ≥ 0` weighted by `C` are eliminated analytically: for each pair,
//! `min_{ξ≥0} C·ξ + λ·max(0, v - ξ) = min(C, λ)·max(0, v)`, so the hinge
//! weight is `w = min(C, λ)` (selectable back to raw `λ`).
//!
//! Both objectives are nonconvex in `z`; the solver is Armijo-backtracked
//! gradient descent with the hinge kink subgradient fixed to the zero
//! branch. There is no global optimality guarantee.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernel;
use crate::linrank::{PoolMeta, PoolMethod, PreimageDescriptor};
use crate::scalar;
use crate::seq::Sequence;

/// Objective variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bkrp,
    Ibkrp,
}

/// Starting point of the descent.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// Variant default: frame mean for IBKRP, zero for BKRP.
    Auto,
    Mean,
    LastFrame,
    Zero,
    Given(DVector<f64>),
}

/// Parameters of a pre-image fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PreimageParams {
    /// Ranking margin η.
    pub eta: f64,
    /// Weight λ of the ranking hinge sum.
    pub lambda: f64,
    /// Slack weight C; the effective hinge weight is `min(C, λ)`.
    pub slack_c: f64,
    /// Kernel bandwidth; `None` uses [`kernel::bandwidth`] per sequence.
    pub sigma: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    /// Initial line-search step.
    pub step: f64,
    pub init: Init,
    /// Run three starts (mean, first frame, last frame) and keep the best.
    pub multi_start: bool,
    /// Use the raw λ hinge weight instead of the slack-eliminated
    /// `min(C, λ)` (the slack-free objective variant).
    pub raw_lambda_weight: bool,
}

impl Default for PreimageParams {
    fn default() -> Self {
        PreimageParams {
            eta: 0.01,
            lambda: 1.0,
            slack_c: 1.0,
            sigma: None,
            max_iters: 500,
            tol: 1e-6,
            step: 1.0,
            init: Init::Auto,
            multi_start: false,
            raw_lambda_weight: false,
        }
    }
}

impl PreimageParams {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0
            && self.lambda >= 0.0
            && self.slack_c > 0.0
            && self.tol > 0.0
            && self.step > 0.0)
        {
            return Err(Error::param("PreimageParams fields must be positive"));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::param("explicit bandwidth must be positive"));
            }
        }
        Ok(())
    }

    /// Effective weight of the hinge sum after slack elimination.
    pub fn hinge_weight(&self) -> f64 {
        if self.raw_lambda_weight {
            self.lambda
        } else {
            self.slack_c.min(self.lambda)
        }
    }

    fn resolved_sigma(&self, x: &Sequence) -> Result<f64> {
        match self.sigma {
            Some(s) => Ok(s),
            None => kernel::bandwidth(x),
        }
    }
}

fn check_dims(z: &DVector<f64>, x: &Sequence) -> Result<()> {
    if z.len() != x.dim() {
        return Err(Error::shape(alloc::format!(
            "pre-image dim {} vs sequence dim {}",
            z.len(),
            x.dim()
        )));
    }
    Ok(())
}

/// Kernel values `k(xᵢ, z)` for all frames.
fn frame_kernels(z: &DVector<f64>, x: &Sequence, sigma: f64) -> Vec<f64> {
    let denom = 2.0 * sigma * sigma;
    (0..x.frame_count())
        .map(|i| {
            let mut sq = 0.0;
            for c in 0..x.dim() {
                let diff = x.frames()[(i, c)] - z[c];
                sq += diff * diff;
            }
            scalar::exp(-sq / denom)
        })
        .collect()
}

fn hinge_sum(ks: &[f64], eta: f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..ks.len() {
        for j in i + 1..ks.len() {
            sum += (eta + ks[i] - ks[j]).max(0.0);
        }
    }
    sum
}

/// BKRP objective `½‖z‖² + λ Σ_{i<j} max(0, η + k(xᵢ,z) - k(xⱼ,z))`.
pub fn bkrp_objective(z: &DVector<f64>, x: &Sequence, prm: &PreimageParams) -> Result<f64> {
    prm.validate()?;
    check_dims(z, x)?;
    let sigma = prm.resolved_sigma(x)?;
    let ks = frame_kernels(z, x, sigma);
    Ok(0.5 * z.norm_squared() + prm.lambda * hinge_sum(&ks, prm.eta))
}

/// IBKRP objective `½ Σᵢ‖xᵢ - z‖² + w Σ_{i<j} max(0, η + k(xᵢ,z) - k(xⱼ,z))`
/// with `w` the slack-eliminated hinge weight.
pub fn ibkrp_objective(z: &DVector<f64>, x: &Sequence, prm: &PreimageParams) -> Result<f64> {
    prm.validate()?;
    check_dims(z, x)?;
    let sigma = prm.resolved_sigma(x)?;
    let ks = frame_kernels(z, x, sigma);
    let mut data = 0.0;
    for i in 0..x.frame_count() {
        for c in 0..x.dim() {
            let diff = x.frames()[(i, c)] - z[c];
            data += diff * diff;
        }
    }
    Ok(0.5 * data + prm.hinge_weight() * hinge_sum(&ks, prm.eta))
}

/// Objective value for `variant`.
pub fn objective(
    z: &DVector<f64>,
    x: &Sequence,
    prm: &PreimageParams,
    variant: Variant,
) -> Result<f64> {
    match variant {
        Variant::Bkrp => bkrp_objective(z, x, prm),
        Variant::Ibkrp => ibkrp_objective(z, x, prm),
    }
}

/// Exact (sub)gradient of the chosen objective.
///
/// Uses `∇_z k(x, z) = k(x, z)(x - z)/σ²`; the hinge kink takes the zero
/// branch.
pub fn preimage_grad(
    z: &DVector<f64>,
    x: &Sequence,
    prm: &PreimageParams,
    variant: Variant,
) -> Result<DVector<f64>> {
    prm.validate()?;
    check_dims(z, x)?;
    let sigma = prm.resolved_sigma(x)?;
    let ks = frame_kernels(z, x, sigma);
    let n = x.frame_count();

    // Accumulate per-frame multipliers of ∇_z k(xᵢ, z) over violated pairs:
    // pair (i, j) adds +1 on i and -1 on j.
    let mut mult = alloc::vec![0.0f64; n];
    for i in 0..n {
        for j in i + 1..n {
            if prm.eta + ks[i] - ks[j] > 0.0 {
                mult[i] += 1.0;
                mult[j] -= 1.0;
            }
        }
    }

    let (weight, mut grad) = match variant {
        Variant::Bkrp => (prm.lambda, z.clone()),
        Variant::Ibkrp => {
            let mut g = DVector::zeros(x.dim());
            for i in 0..n {
                for c in 0..x.dim() {
                    g[c] += z[c] - x.frames()[(i, c)];
                }
            }
            (prm.hinge_weight(), g)
        }
    };

    let inv_s2 = 1.0 / (sigma * sigma);
    #[cfg(feature = "fault-inject")]
    let inv_s2 = -inv_s2; // deliberately corrupts the hinge term
    for i in 0..n {
        if mult[i] != 0.0 {
            let scale = weight * mult[i] * ks[i] * inv_s2;
            for c in 0..x.dim() {
                grad[c] += scale * (x.frames()[(i, c)] - z[c]);
            }
        }
    }
    Ok(grad)
}

fn initial_point(x: &Sequence, prm: &PreimageParams, variant: Variant) -> DVector<f64> {
    match &prm.init {
        Init::Auto => match variant {
            Variant::Bkrp => DVector::zeros(x.dim()),
            Variant::Ibkrp => x.mean_frame(),
        },
        Init::Mean => x.mean_frame(),
        Init::LastFrame => x.frame(x.frame_count() - 1),
        Init::Zero => DVector::zeros(x.dim()),
        Init::Given(z) => z.clone(),
    }
}

fn descend(
    x: &Sequence,
    prm: &PreimageParams,
    variant: Variant,
    z0: DVector<f64>,
) -> Result<(DVector<f64>, f64, u64)> {
    const ARMIJO_C1: f64 = 1e-4;
    let mut z = z0;
    let mut f = objective(&z, x, prm, variant)?;
    let mut best = (f, z.clone());
    let mut iterations = 0u64;

    for _ in 0..prm.max_iters {
        let g = preimage_grad(&z, x, prm, variant)?;
        let gnorm2 = g.norm_squared();
        if scalar::sqrt(gnorm2) <= prm.tol {
            break;
        }
        let mut t = prm.step;
        let mut accepted = false;
        while t >= 1e-16 {
            let cand = &z - t * &g;
            let fc = objective(&cand, x, prm, variant)?;
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
            break;
        }
    }
    Ok((best.1, best.0, iterations))
}

/// Fits the pre-image descriptor; deterministic given `(x, prm, variant)`.
pub fn preimage_fit(
    x: &Sequence,
    prm: &PreimageParams,
    variant: Variant,
) -> Result<PreimageDescriptor> {
    prm.validate()?;
    let sigma = prm.resolved_sigma(x)?;

    let starts: Vec<DVector<f64>> = if prm.multi_start {
        alloc::vec![x.mean_frame(), x.frame(0), x.frame(x.frame_count() - 1)]
    } else {
        alloc::vec![initial_point(x, prm, variant)]
    };

    let mut best: Option<(DVector<f64>, f64, u64)> = None;
    let mut total_iters = 0u64;
    for z0 in starts {
        let (z, f, iters) = descend(x, prm, variant, z0)?;
        total_iters += iters;
        if best.as_ref().map_or(true, |(_, fb, _)| f < *fb) {
            best = Some((z, f, iters));
        }
    }
    let (z, f, _) = best.expect("at least one start");

    Ok(PreimageDescriptor {
        z,
        method: match variant {
            Variant::Bkrp => PoolMethod::Bkrp,
            Variant::Ibkrp => PoolMethod::Ibkrp,
        },
        meta: PoolMeta {
            eta: prm.eta,
            lambda: prm.lambda,
            slack_c: prm.slack_c,
            sigma,
            iterations: total_iters,
            final_objective: f,
        },
    })
}

/// Fraction of pairs `i < j` whose kernel ordering constraint
/// `k(xᵢ,z) + η ≤ k(xⱼ,z)` holds.
pub fn kernel_order_satisfaction(
    z: &DVector<f64>,
    x: &Sequence,
    sigma: f64,
    eta: f64,
) -> Result<f64> {
    check_dims(z, x)?;
    if !(sigma > 0.0) {
        return Err(Error::param("bandwidth must be positive"));
    }
    let ks = frame_kernels(z, x, sigma);
    let n = ks.len();
    let mut ok = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if ks[i] + eta <= ks[j] {
                ok += 1;
            }
        }
    }
    Ok(ok as f64 / (n * (n - 1) / 2) as f64)
}

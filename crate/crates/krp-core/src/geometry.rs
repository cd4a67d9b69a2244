//! Generalized Stiefel/Grassmann manifold and a Riemannian
//! conjugate-gradient solver.
//!
//! For a symmetric positive-definite `K`, the constraint set is
//!
//! ```text
//! St_K(n, p) = { A ∈ ℝⁿˣᵖ : AᵀKA = I_p }
//! ```
//!
//! with the metric `⟨ξ, ζ⟩_A = tr(ξᵀKζ)`. Objectives invariant under
//! right rotations `A ↦ AR`, `R ∈ O(p)` descend to the generalized
//! Grassmann quotient; we optimize on the total space and verify the
//! invariance by tests instead of building horizontal-space machinery.
//!
//! ## Geometric toolkit
//!
//! - Tangent space at `A`: matrices `ξ` with `AᵀKξ` skew-symmetric.
//! - Tangent projection: `P_A(G) = G - A·sym(AᵀKG)`.
//! - Riemannian gradient from the Euclidean gradient `∇F`:
//!   `grad F = K⁻¹∇F - A·sym(Aᵀ∇F)`, applied through one cached Cholesky
//!   factorization of `K` (never an explicit inverse).
//! - Retraction: K-orthonormalization of `A + tξ` through the triangular
//!   factor of `(A + tξ)ᵀK(A + tξ)` (a generalized QR retraction, exact
//!   to first order with `O(t²)` deviation).
//! - Vector transport: tangent projection at the new point.
//!
//! The solver is Polak–Ribière conjugate gradient with the β clamped at
//! zero, periodic restarts, and Armijo backtracking along retractions.
//! Every iterate stays feasible by construction.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::scalar;

/// Feasibility tolerance for points: `‖AᵀKA - I‖_F ≤ 1e-8`.
pub const FEASIBILITY_TOL: f64 = 1e-8;

/// A point on the manifold, i.e. `A` with `AᵀKA = I` for the owning
/// [`KStiefel`]'s kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldPoint {
    a: DMatrix<f64>,
}

impl ManifoldPoint {
    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn into_coeffs(self) -> DMatrix<f64> {
        self.a
    }
}

/// A tangent vector at some base point (`AᵀKξ` skew-symmetric).
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    xi: DMatrix<f64>,
}

impl TangentVector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.xi
    }
}

/// Configuration of the conjugate-gradient driver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RcgConfig {
    pub max_iters: usize,
    /// Stop when the Riemannian gradient norm falls below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo_c1: f64,
    /// Force a steepest-descent restart every this many iterations.
    pub restart_every: usize,
}

impl Default for RcgConfig {
    fn default() -> Self {
        RcgConfig {
            max_iters: 100,
            grad_tol: 1e-6,
            armijo_c1: 1e-4,
            restart_every: 20,
        }
    }
}

impl RcgConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || self.restart_every == 0 {
            return Err(Error::param("iteration counts must be positive"));
        }
        if !(self.grad_tol > 0.0 && self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::param("grad_tol and armijo_c1 must be in range"));
        }
        Ok(())
    }
}

/// Outcome of [`KStiefel::rcg_minimize`].
#[derive(Debug, Clone)]
pub struct RcgResult {
    /// Best visited point.
    pub point: ManifoldPoint,
    /// Objective value at every accepted iterate, starting with the
    /// initial point; non-increasing.
    pub trace: Vec<f64>,
    /// Number of accepted steps.
    pub iterations: usize,
    /// Riemannian gradient norm at the last iterate.
    pub grad_norm: f64,
    /// Line search failed (step underflow) before other stopping rules.
    pub stalled: bool,
}

impl RcgResult {
    pub fn final_objective(&self) -> f64 {
        *self.trace.last().expect("trace never empty")
    }
}

/// The manifold `{A : AᵀKA = I}` with a cached factorization of `K`.
#[derive(Debug, Clone)]
pub struct KStiefel {
    k: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl KStiefel {
    /// Builds the manifold context for a symmetric positive-definite `K`.
    pub fn new(k: DMatrix<f64>) -> Result<Self> {
        if k.nrows() != k.ncols() {
            return Err(Error::shape("K must be square"));
        }
        let max_asym = (&k - k.transpose()).abs().max();
        if max_asym > 1e-12 {
            return Err(Error::param(alloc::format!(
                "K must be symmetric (max asymmetry {max_asym:.2e})"
            )));
        }
        let chol = k
            .clone()
            .cholesky()
            .ok_or_else(|| Error::numerical("K is not positive definite; add jitter"))?;
        Ok(KStiefel { k, chol })
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    fn check_shape(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.nrows() != self.n() {
            return Err(Error::shape(alloc::format!(
                "matrix has {} rows, manifold expects {}",
                m.nrows(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Frobenius distance of `AᵀKA` from the identity.
    pub fn feasibility_error(&self, a: &DMatrix<f64>) -> f64 {
        let m = a.transpose() * &self.k * a;
        let p = a.ncols();
        (&m - DMatrix::<f64>::identity(p, p)).norm()
    }

    fn korthonormalize_once(&self, a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let m = a.transpose() * &self.k * a;
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::numerical("AᵀKA is rank deficient"))?;
        // A·R⁻¹ with M = RᵀR: solve L·Y = Aᵀ for the lower factor L = Rᵀ.
        let y = chol
            .l()
            .solve_lower_triangular(&a.transpose())
            .ok_or_else(|| Error::numerical("triangular solve failed"))?;
        Ok(y.transpose())
    }

    /// Restores feasibility: returns `A0·R⁻¹` where `A0ᵀKA0 = RᵀR`,
    /// preserving the column span. A point that is already feasible is
    /// returned unchanged up to the exactness of its Gram factor.
    pub fn korthonormalize(&self, a0: &DMatrix<f64>) -> Result<ManifoldPoint> {
        self.check_shape(a0)?;
        if a0.ncols() == 0 || a0.ncols() > self.n() {
            return Err(Error::shape("need 1 ≤ p ≤ n columns"));
        }
        let mut a = self.korthonormalize_once(a0)?;
        // One extra pass handles ill-conditioned inputs (twice is enough).
        if self.feasibility_error(&a) > 1e-10 {
            a = self.korthonormalize_once(&a)?;
        }
        let feas = self.feasibility_error(&a);
        if feas > FEASIBILITY_TOL {
            return Err(Error::numerical(alloc::format!(
                "orthonormalization stalled at feasibility {feas:.2e}"
            )));
        }
        Ok(ManifoldPoint { a })
    }

    /// Projects an ambient matrix onto the tangent space at `p`:
    /// `ξ = G - A·sym(AᵀKG)`. Idempotent.
    pub fn tangent_project(&self, p: &ManifoldPoint, g: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(g)?;
        if g.ncols() != p.a.ncols() {
            return Err(Error::shape("tangent candidate has wrong column count"));
        }
        let atkg = p.a.transpose() * &self.k * g;
        let sym = 0.5 * (&atkg + atkg.transpose());
        Ok(TangentVector { xi: g - &p.a * sym })
    }

    /// Converts a Euclidean gradient into the Riemannian gradient:
    /// `grad = K⁻¹∇F - A·sym(Aᵀ∇F)`, using the cached factorization.
    pub fn riemannian_grad(&self, p: &ManifoldPoint, euc: &DMatrix<f64>) -> Result<TangentVector> {
        self.check_shape(euc)?;
        if euc.ncols() != p.a.ncols() {
            return Err(Error::shape("gradient has wrong column count"));
        }
        let kinv_grad = self.chol.solve(euc);
        let atg = p.a.transpose() * euc;
        let sym = 0.5 * (&atg + atg.transpose());
        Ok(TangentVector {
            xi: kinv_grad - &p.a * sym,
        })
    }

    /// Moves along `ξ` and re-orthonormalizes: `R_A(tξ) = korth(A + tξ)`.
    /// `t = 0` returns the base point unchanged.
    pub fn retract(&self, p: &ManifoldPoint, xi: &TangentVector, t: f64) -> Result<ManifoldPoint> {
        if t == 0.0 {
            return Ok(p.clone());
        }
        self.korthonormalize(&(&p.a + t * &xi.xi))
    }

    /// Projection transport of `ξ` from `_from` into the tangent space at
    /// `to`.
    pub fn transport(
        &self,
        _from: &ManifoldPoint,
        to: &ManifoldPoint,
        xi: &TangentVector,
    ) -> Result<TangentVector> {
        self.tangent_project(to, &xi.xi)
    }

    /// Riemannian metric `⟨ξ, ζ⟩ = tr(ξᵀKζ)`.
    pub fn inner(&self, xi: &TangentVector, zeta: &TangentVector) -> f64 {
        (xi.xi.transpose() * &self.k * &zeta.xi).trace()
    }

    pub fn norm(&self, xi: &TangentVector) -> f64 {
        scalar::sqrt(self.inner(xi, xi).max(0.0))
    }

    /// Minimizes `objective` over the manifold by Polak–Ribière conjugate
    /// gradient with Armijo backtracking along retractions.
    ///
    /// Returns the best visited point; the objective trace over accepted
    /// iterates is non-increasing. If the line search underflows the
    /// result carries the `stalled` flag instead of an error.
    pub fn rcg_minimize<F, G>(
        &self,
        mut objective: F,
        mut eucgrad: G,
        p0: &ManifoldPoint,
        cfg: &RcgConfig,
    ) -> Result<RcgResult>
    where
        F: FnMut(&DMatrix<f64>) -> f64,
        G: FnMut(&DMatrix<f64>) -> DMatrix<f64>,
    {
        cfg.validate()?;
        let mut point = p0.clone();
        let mut f = objective(&point.a);
        let mut best = (f, point.clone());
        let mut trace = alloc::vec![f];

        let mut grad = self.riemannian_grad(&point, &eucgrad(&point.a))?;
        let mut grad_norm2 = self.inner(&grad, &grad).max(0.0);
        let mut dir = TangentVector { xi: -&grad.xi };
        let mut step_hint = 1.0 / (1.0 + scalar::sqrt(grad_norm2));
        let mut iterations = 0usize;
        let mut stalled = false;

        for iter in 1..=cfg.max_iters {
            if scalar::sqrt(grad_norm2) <= cfg.grad_tol {
                break;
            }
            let mut slope = self.inner(&grad, &dir);
            if slope >= 0.0 {
                // Not a descent direction; fall back to steepest descent.
                dir = TangentVector { xi: -&grad.xi };
                slope = -grad_norm2;
            }

            // Armijo backtracking along the retraction.
            let mut t = step_hint;
            let mut next: Option<(ManifoldPoint, f64)> = None;
            while t >= 1e-16 {
                if let Ok(cand) = self.retract(&point, &dir, t) {
                    let fc = objective(&cand.a);
                    if fc.is_finite() && fc <= f + cfg.armijo_c1 * t * slope {
                        next = Some((cand, fc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((new_point, new_f)) = next else {
                stalled = true;
                break;
            };
            step_hint = (2.0 * t).min(1e6);

            let new_grad = self.riemannian_grad(&new_point, &eucgrad(&new_point.a))?;
            let new_norm2 = self.inner(&new_grad, &new_grad).max(0.0);

            // Polak–Ribière β with transported previous gradient, clamped
            // at zero, plus periodic restarts.
            let beta = if iter % cfg.restart_every == 0 || grad_norm2 <= 0.0 {
                0.0
            } else {
                let g_old = self.transport(&point, &new_point, &grad)?;
                let diff = TangentVector {
                    xi: &new_grad.xi - &g_old.xi,
                };
                (self.inner(&new_grad, &diff) / grad_norm2).max(0.0)
            };
            let dir_tr = self.transport(&point, &new_point, &dir)?;
            dir = TangentVector {
                xi: -&new_grad.xi + beta * &dir_tr.xi,
            };

            point = new_point;
            f = new_f;
            grad = new_grad;
            grad_norm2 = new_norm2;
            trace.push(f);
            iterations += 1;
            if f < best.0 {
                best = (f, point.clone());
            }
        }

        Ok(RcgResult {
            point: best.1,
            trace,
            iterations,
            grad_norm: scalar::sqrt(grad_norm2),
            stalled,
        })
    }
}

/// Skewness of `AᵀKξ`, the tangent-space residual of `ξ` at `A`.
pub fn tangency_error(k: &DMatrix<f64>, a: &DMatrix<f64>, xi: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * k * xi;
    (&m + m.transpose()).norm()
}

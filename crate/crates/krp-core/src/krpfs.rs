//! Order-constrained kernel feature subspaces (KRP-FS).
//!
//! The sequence descriptor is an `n×p` coefficient matrix `A` with
//! `AᵀKA = I` parameterizing a `p`-dimensional subspace of the RKHS: its
//! basis is `Φ(X)A`. With `kᵢ` the `i`-th column of the Gram matrix `K`,
//! the projection energy of frame `i` into the subspace is
//!
//! ```text
//! e(i) = kᵢᵀ A Aᵀ K A Aᵀ kᵢ     (= kᵢᵀAAᵀkᵢ on the constraint set)
//! ```
//!
//! and the objective is the subspace reconstruction error plus hinges
//! that force the energies to grow with time:
//!
//! ```text
//! F(A) = ½ Σᵢ ( -2 kᵢᵀAAᵀkᵢ + kᵢᵀAAᵀKAAᵀkᵢ )
//!        + w Σ_{i<j} max(0, e(i) + η - e(j)),     w = min(C, λ).
//! ```
//!
//! (The constant `½ Σᵢ k(xᵢ,xᵢ)` of the full reconstruction error is
//! dropped.) With `w = 0` and the constraint in force this is exactly
//! kernel PCA: `F = -½ tr(AᵀK²A)`, minimized in closed form by the top
//! eigenvectors of `K` rescaled to `uⱼ/√μⱼ` ([`kpca_oracle`]), which also
//! serves as the deterministic initializer of the Riemannian
//! conjugate-gradient fit.
//!
//! Everything depends on `A` only through `AAᵀ`, so objective and
//! gradient are invariant under right rotations `A ↦ AR`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{KStiefel, RcgConfig, RcgResult};
use crate::kernel::{self, KernelMatrix};
use crate::scalar;
use crate::seq::Sequence;

/// Parameters of a subspace fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KrpfsParams {
    /// Subspace dimension `p ≥ 1` (must satisfy `p ≤ n`).
    pub p: usize,
    /// Ranking margin η.
    pub eta: f64,
    /// Weight λ of the ranking hinge sum.
    pub lambda: f64,
    /// Slack weight C; the effective hinge weight is `min(C, λ)`.
    pub slack_c: f64,
    /// Diagonal jitter for the Gram matrix (it must be inverted).
    pub jitter: f64,
    /// Kernel bandwidth; `None` uses [`kernel::bandwidth`] per sequence.
    pub sigma: Option<f64>,
    /// Use the raw λ hinge weight instead of `min(C, λ)`.
    pub raw_lambda_weight: bool,
    pub rcg: RcgConfig,
}

impl Default for KrpfsParams {
    fn default() -> Self {
        KrpfsParams {
            p: 2,
            eta: 0.01,
            lambda: 1.0,
            slack_c: 1.0,
            jitter: kernel::DEFAULT_JITTER,
            sigma: None,
            raw_lambda_weight: false,
            rcg: RcgConfig::default(),
        }
    }
}

impl KrpfsParams {
    fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::param("subspace dimension must be at least 1"));
        }
        if !(self.eta > 0.0 && self.lambda >= 0.0 && self.slack_c > 0.0 && self.jitter >= 0.0) {
            return Err(Error::param("KrpfsParams fields must be positive"));
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
}

/// Pooled subspace descriptor: the coefficients plus everything needed to
/// evaluate cross-sequence kernels later.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDescriptor {
    /// `n×p` coefficients with `AᵀKA = I`.
    pub a: DMatrix<f64>,
    /// The pooled frames.
    pub frames: Sequence,
    /// Bandwidth the Gram matrix was built with.
    pub sigma: f64,
    /// Jitter the Gram matrix was built with.
    pub jitter: f64,
    pub p: usize,
    pub final_objective: f64,
}

impl SubspaceDescriptor {
    /// `‖AᵀKA - I‖_F` for the Gram rebuilt from the stored frames.
    pub fn feasibility_error(&self) -> Result<f64> {
        let k = kernel::gram(&self.frames, self.sigma, self.jitter)?;
        let m = self.a.transpose() * k.values() * &self.a;
        Ok((&m - DMatrix::<f64>::identity(self.p, self.p)).norm())
    }
}

/// Projection coefficients `β = Aᵀ·k(X, x)` of a query point.
pub fn projection_coefficients(
    desc: &SubspaceDescriptor,
    query: &[f64],
) -> Result<DVector<f64>> {
    if query.len() != desc.frames.dim() {
        return Err(Error::shape("query dimension mismatch"));
    }
    let n = desc.frames.frame_count();
    let mut kx = DVector::zeros(n);
    for i in 0..n {
        let xi: Vec<f64> = desc.frames.frame(i).iter().copied().collect();
        kx[i] = kernel::rbf(&xi, query, desc.sigma)?;
    }
    Ok(desc.a.transpose() * kx)
}

fn check_k_and_a(a: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<()> {
    if k.nrows() != k.ncols() {
        return Err(Error::shape("K must be square"));
    }
    if a.nrows() != k.nrows() {
        return Err(Error::shape(alloc::format!(
            "A has {} rows but K is {}x{}",
            a.nrows(),
            k.nrows(),
            k.ncols()
        )));
    }
    Ok(())
}

/// Projection energy `kᵢᵀ·A·Aᵀ·K·A·Aᵀ·kᵢ` of frame `i` (0-based).
///
/// The full expression stays valid off the constraint set, so finite
/// differences of the objective are well defined everywhere.
pub fn projection_energy(a: &DMatrix<f64>, k: &DMatrix<f64>, i: usize) -> Result<f64> {
    check_k_and_a(a, k)?;
    if i >= k.nrows() {
        return Err(Error::Index(alloc::format!(
            "frame {i} out of range 0..{}",
            k.nrows()
        )));
    }
    let bi = k.row(i) * a; // kᵢᵀA, 1×p
    let s3 = a.transpose() * k * a;
    Ok((&bi * s3 * bi.transpose())[(0, 0)])
}

/// Projection energies of every frame, computed through `B = KA` in
/// `O(n²p)` total.
fn energies(b: &DMatrix<f64>, s3: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = (b.nrows(), b.ncols());
    let mut out = alloc::vec![0.0; n];
    for i in 0..n {
        let mut e = 0.0;
        for r in 0..p {
            let mut acc = 0.0;
            for c in 0..p {
                acc += s3[(r, c)] * b[(i, c)];
            }
            e += b[(i, r)] * acc;
        }
        out[i] = e;
    }
    out
}

fn objective_with_ops(a: &DMatrix<f64>, k: &DMatrix<f64>, prm: &KrpfsParams) -> (f64, u64) {
    let (n, p) = (a.nrows(), a.ncols());
    let mut ops: u64 = 0;

    let b = k * a;
    ops += (n * n * p) as u64;
    let s3 = a.transpose() * &b;
    ops += (n * p * p) as u64;

    let mut recon = 0.0;
    let mut es = alloc::vec![0.0; n];
    for i in 0..n {
        let mut norm2 = 0.0;
        for c in 0..p {
            norm2 += b[(i, c)] * b[(i, c)];
        }
        let mut e = 0.0;
        for r in 0..p {
            let mut acc = 0.0;
            for c in 0..p {
                acc += s3[(r, c)] * b[(i, c)];
            }
            e += b[(i, r)] * acc;
        }
        ops += (p + p * p + p) as u64;
        es[i] = e;
        recon += 0.5 * (-2.0 * norm2 + e);
    }

    let w = prm.hinge_weight();
    let mut hinge = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            ops += 1;
            let v = es[i] + prm.eta - es[j];
            if v > 0.0 {
                hinge += v;
            }
        }
    }
    (recon + w * hinge, ops)
}

/// KRP-FS objective value.
pub fn krpfs_objective(a: &DMatrix<f64>, k: &DMatrix<f64>, prm: &KrpfsParams) -> Result<f64> {
    prm.validate()?;
    check_k_and_a(a, k)?;
    Ok(objective_with_ops(a, k, prm).0)
}

/// KRP-FS objective together with the number of scalar operations the
/// evaluation executed (used by the complexity-scaling checks).
pub fn krpfs_objective_counted(
    a: &DMatrix<f64>,
    k: &DMatrix<f64>,
    prm: &KrpfsParams,
) -> Result<(f64, u64)> {
    prm.validate()?;
    check_k_and_a(a, k)?;
    Ok(objective_with_ops(a, k, prm))
}

/// Exact Euclidean (sub)gradient of [`krpfs_objective`].
///
/// With `S₁ = K²A`, `S₂ = KAAᵀ`, `S₃ = AᵀKA` and `K₁₂ = Σ_viol kᵢkᵢᵀ -
/// kⱼkⱼᵀ` over the violated pairs,
///
/// ```text
/// ∇F = S₁(S₃ - 2I) + S₂S₁ + 2w·(K₁₂AS₃ + S₂K₁₂A),
/// ```
///
/// assembled without materializing any `n×n` product beyond `K` itself:
/// `K₁₂A = K·diag(m)·KA` for the per-frame violation multiplicities `m`.
pub fn krpfs_eucgrad(
    a: &DMatrix<f64>,
    k: &DMatrix<f64>,
    prm: &KrpfsParams,
) -> Result<DMatrix<f64>> {
    prm.validate()?;
    check_k_and_a(a, k)?;
    let (n, p) = (a.nrows(), a.ncols());

    let b = k * a; // KA
    let s3 = a.transpose() * &b; // AᵀKA
    let s1 = k * &b; // K²A

    // Reconstruction part: S₁(S₃ - 2I) + KAAᵀS₁ (grouped right-to-left).
    let mut grad = &s1 * (&s3 - 2.0 * DMatrix::<f64>::identity(p, p));
    grad += k * (a * (a.transpose() * &s1));

    let w = prm.hinge_weight();
    if w > 0.0 {
        let es = energies(&b, &s3);
        let mut mult = alloc::vec![0.0f64; n];
        let mut any = false;
        for i in 0..n {
            for j in i + 1..n {
                if es[i] + prm.eta - es[j] > 0.0 {
                    mult[i] += 1.0;
                    mult[j] -= 1.0;
                    any = true;
                }
            }
        }
        if any {
            // V = K₁₂A = K·(m ⊙ B) with row i of B scaled by m[i].
            let mut scaled = b.clone();
            for i in 0..n {
                for c in 0..p {
                    scaled[(i, c)] *= mult[i];
                }
            }
            let v = k * &scaled;
            let hinge_grad = &v * &s3 + k * (a * (a.transpose() * &v));
            grad += 2.0 * w * hinge_grad;
        }
    }
    Ok(grad)
}

/// Closed-form minimizer for the hinge-free objective (kernel PCA).
///
/// Returns `A*` whose columns are the top-`p` eigenvectors `uⱼ` of `K`
/// scaled to `uⱼ/√μⱼ` (so `A*ᵀKA* = I`), and the optimum
/// `F* = -½ Σ_{j≤p} μⱼ`.
pub fn kpca_oracle(k: &DMatrix<f64>, p: usize) -> Result<(DMatrix<f64>, f64)> {
    if k.nrows() != k.ncols() {
        return Err(Error::shape("K must be square"));
    }
    let n = k.nrows();
    if p == 0 || p > n {
        return Err(Error::param(alloc::format!("need 1 ≤ p ≤ {n}, got {p}")));
    }
    let eig = k.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .expect("finite eigenvalues")
    });
    let mut a = DMatrix::zeros(n, p);
    let mut sum = 0.0;
    for (col, &idx) in order.iter().take(p).enumerate() {
        let mu = eig.eigenvalues[idx];
        if mu <= 1e-14 {
            return Err(Error::numerical(alloc::format!(
                "eigenvalue {col} of K is not positive ({mu:.2e}); add jitter"
            )));
        }
        let scale = 1.0 / scalar::sqrt(mu);
        for r in 0..n {
            a[(r, col)] = eig.eigenvectors[(r, idx)] * scale;
        }
        sum += mu;
    }
    Ok((a, -0.5 * sum))
}

/// Fits the subspace descriptor: builds the Gram matrix, starts from the
/// kernel-PCA solution, and refines with Riemannian conjugate gradient.
/// Feasibility `AᵀKA = I` holds at every iterate.
pub fn krpfs_fit(x: &Sequence, prm: &KrpfsParams) -> Result<SubspaceDescriptor> {
    prm.validate()?;
    if prm.p > x.frame_count() {
        return Err(Error::param(alloc::format!(
            "subspace dimension {} exceeds frame count {}",
            prm.p,
            x.frame_count()
        )));
    }
    let sigma = match prm.sigma {
        Some(s) if s > 0.0 => s,
        Some(s) => return Err(Error::param(alloc::format!("bandwidth must be positive, got {s}"))),
        None => kernel::bandwidth(x)?,
    };
    let gram: KernelMatrix = kernel::gram(x, sigma, prm.jitter)?;
    let kv = gram.values();

    let (a0, _) = kpca_oracle(kv, prm.p)?;
    let manifold = KStiefel::new(kv.clone())?;
    let p0 = manifold.korthonormalize(&a0)?;

    let result: RcgResult = manifold.rcg_minimize(
        |a| objective_with_ops(a, kv, prm).0,
        |a| krpfs_eucgrad(a, kv, prm).expect("shapes fixed by the driver"),
        &p0,
        &prm.rcg,
    )?;

    let final_objective = result.final_objective();
    Ok(SubspaceDescriptor {
        a: result.point.into_coeffs(),
        frames: x.clone(),
        sigma,
        jitter: prm.jitter,
        p: prm.p,
        final_objective,
    })
}

/// Fraction of pairs `i < j` whose energy ordering constraint
/// `e(i) + η ≤ e(j)` holds for the descriptor.
pub fn subspace_order_satisfaction(desc: &SubspaceDescriptor, eta: f64) -> Result<f64> {
    let gram = kernel::gram(&desc.frames, desc.sigma, desc.jitter)?;
    let b = gram.values() * &desc.a;
    let s3 = desc.a.transpose() * &b;
    let es = energies(&b, &s3);
    let n = es.len();
    let mut ok = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if es[i] + eta <= es[j] {
                ok += 1;
            }
        }
    }
    Ok(ok as f64 / (n * (n - 1) / 2) as f64)
}

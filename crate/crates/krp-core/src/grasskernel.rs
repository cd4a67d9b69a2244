//! Similarity kernels between pooled descriptors and Gram assembly for
//! classification.
//!
//! Subspace descriptors are compared with the exponential projection
//! metric kernel
//!
//! ```text
//! 𝕂(D₁, D₂) = exp(ν ‖A₁ᵀ K₁₂ A₂‖²_F),
//! ```
//!
//! where `K₁₂` is the cross-sequence RBF kernel between the two frame
//! sets. Its bandwidth defaults to the geometric mean `√(σ₁σ₂)` of the
//! two per-sequence bandwidths, which is symmetric and reduces to σ when
//! they agree; a global override is available. For two copies of one
//! descriptor `A₁ᵀKA₂ = I`, so the similarity is `exp(ν·p)`; with
//! `ν = 1/p` (the default choice) the diagonal is `e` regardless of `p`.
//!
//! Pre-image descriptors are compared with a plain RBF kernel on the
//! pooled vectors.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kernel;
use crate::krpfs::SubspaceDescriptor;
use crate::linrank::PreimageDescriptor;
use crate::scalar;

/// Which descriptor family a Gram matrix was built over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Preimage,
    Subspace,
}

/// Either pooled descriptor, for kind-homogeneous collections.
#[derive(Debug, Clone, PartialEq)]
pub enum Descriptor {
    Preimage(PreimageDescriptor),
    Subspace(SubspaceDescriptor),
}

impl Descriptor {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            Descriptor::Preimage(_) => DescriptorKind::Preimage,
            Descriptor::Subspace(_) => DescriptorKind::Subspace,
        }
    }
}

/// Bandwidth rule for the cross-sequence kernel inside
/// [`subspace_similarity`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrossBandwidth {
    /// `σ_c = √(σ₁σ₂)` from the two per-sequence bandwidths.
    PerPairGeometric,
    /// One fixed bandwidth for every pair.
    Global(f64),
}

/// Classification Gram matrix over `m` descriptors.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationGram {
    values: DMatrix<f64>,
    /// ν for subspace grams, σ_c for pre-image grams.
    hyper: f64,
    kind: DescriptorKind,
    /// Jitter added to make the matrix factorizable (0 if none needed).
    jitter: f64,
}

impl ClassificationGram {
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn m(&self) -> usize {
        self.values.nrows()
    }

    pub fn hyper(&self) -> f64 {
        self.hyper
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Wraps an externally supplied symmetric kernel matrix (for Grams
    /// loaded from files).
    pub fn from_values(values: DMatrix<f64>, hyper: f64, kind: DescriptorKind) -> Result<Self> {
        if values.nrows() != values.ncols() {
            return Err(Error::shape("Gram matrix must be square"));
        }
        let asym = (&values - values.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(Error::param(alloc::format!(
                "Gram matrix must be symmetric (max asymmetry {asym:.2e})"
            )));
        }
        Ok(ClassificationGram {
            values,
            hyper,
            kind,
            jitter: 0.0,
        })
    }
}

/// Exponential projection metric similarity `exp(ν‖A₁ᵀK₁₂A₂‖²_F)` between
/// two subspace descriptors.
pub fn subspace_similarity(
    d1: &SubspaceDescriptor,
    d2: &SubspaceDescriptor,
    nu: f64,
) -> Result<f64> {
    subspace_similarity_with(d1, d2, nu, CrossBandwidth::PerPairGeometric)
}

/// [`subspace_similarity`] with an explicit cross-bandwidth rule.
pub fn subspace_similarity_with(
    d1: &SubspaceDescriptor,
    d2: &SubspaceDescriptor,
    nu: f64,
    bw: CrossBandwidth,
) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::param("nu must be positive"));
    }
    if d1.frames.dim() != d2.frames.dim() {
        return Err(Error::shape(alloc::format!(
            "feature dims differ: {} vs {}",
            d1.frames.dim(),
            d2.frames.dim()
        )));
    }
    let sigma_c = match bw {
        CrossBandwidth::PerPairGeometric => scalar::sqrt(d1.sigma * d2.sigma),
        CrossBandwidth::Global(s) if s > 0.0 => s,
        CrossBandwidth::Global(s) => {
            return Err(Error::param(alloc::format!(
                "global cross bandwidth must be positive, got {s}"
            )))
        }
    };
    let k12 = kernel::cross_gram(&d1.frames, &d2.frames, sigma_c)?;
    let m = d1.a.transpose() * k12 * &d2.a;
    Ok(scalar::exp(nu * m.norm_squared()))
}

/// RBF similarity between two pre-image descriptors.
pub fn preimage_similarity(
    d1: &PreimageDescriptor,
    d2: &PreimageDescriptor,
    sigma_c: f64,
) -> Result<f64> {
    let z1: Vec<f64> = d1.z.iter().copied().collect();
    let z2: Vec<f64> = d2.z.iter().copied().collect();
    kernel::rbf(&z1, &z2, sigma_c)
}

fn finalize_gram(
    mut values: DMatrix<f64>,
    hyper: f64,
    kind: DescriptorKind,
) -> ClassificationGram {
    // Try to certify positive definiteness; one round of jitter on
    // failure keeps near-semidefinite grams usable downstream.
    let mut jitter = 0.0;
    if values.clone().cholesky().is_none() {
        jitter = 1e-8;
        for i in 0..values.nrows() {
            values[(i, i)] += jitter;
        }
    }
    ClassificationGram {
        values,
        hyper,
        kind,
        jitter,
    }
}

/// Gram matrix over subspace descriptors.
pub fn gram_subspace(
    descriptors: &[SubspaceDescriptor],
    nu: f64,
    bw: CrossBandwidth,
) -> Result<ClassificationGram> {
    let m = descriptors.len();
    if m == 0 {
        return Err(Error::param("need at least one descriptor"));
    }
    let mut values = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = subspace_similarity_with(&descriptors[i], &descriptors[j], nu, bw)?;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(finalize_gram(values, nu, DescriptorKind::Subspace))
}

/// Gram matrix over pre-image descriptors.
pub fn gram_preimage(
    descriptors: &[PreimageDescriptor],
    sigma_c: f64,
) -> Result<ClassificationGram> {
    let m = descriptors.len();
    if m == 0 {
        return Err(Error::param("need at least one descriptor"));
    }
    let mut values = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let v = preimage_similarity(&descriptors[i], &descriptors[j], sigma_c)?;
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(finalize_gram(values, sigma_c, DescriptorKind::Preimage))
}

/// Gram matrix over a kind-homogeneous descriptor collection; `hyper` is
/// ν for subspaces and σ_c for pre-images.
pub fn gram_descriptors(descriptors: &[Descriptor], hyper: f64) -> Result<ClassificationGram> {
    let Some(first) = descriptors.first() else {
        return Err(Error::param("need at least one descriptor"));
    };
    let kind = first.kind();
    if descriptors.iter().any(|d| d.kind() != kind) {
        return Err(Error::Kind(alloc::string::String::from(
            "cannot mix pre-image and subspace descriptors in one Gram",
        )));
    }
    match kind {
        DescriptorKind::Preimage => {
            let ds: Vec<PreimageDescriptor> = descriptors
                .iter()
                .map(|d| match d {
                    Descriptor::Preimage(p) => p.clone(),
                    Descriptor::Subspace(_) => unreachable!(),
                })
                .collect();
            gram_preimage(&ds, hyper)
        }
        DescriptorKind::Subspace => {
            let ds: Vec<SubspaceDescriptor> = descriptors
                .iter()
                .map(|d| match d {
                    Descriptor::Subspace(s) => s.clone(),
                    Descriptor::Preimage(_) => unreachable!(),
                })
                .collect();
            gram_subspace(&ds, hyper, CrossBandwidth::PerPairGeometric)
        }
    }
}

/// Similarity row between one query descriptor and a reference list
/// (test-time kernel row for prediction).
pub fn similarity_row(
    query: &Descriptor,
    references: &[Descriptor],
    hyper: f64,
) -> Result<Vec<f64>> {
    references
        .iter()
        .map(|r| match (query, r) {
            (Descriptor::Preimage(a), Descriptor::Preimage(b)) => preimage_similarity(a, b, hyper),
            (Descriptor::Subspace(a), Descriptor::Subspace(b)) => subspace_similarity(a, b, hyper),
            _ => Err(Error::Kind(alloc::string::String::from(
                "query and reference descriptors have different kinds",
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krpfs::{krpfs_fit, KrpfsParams};
    use crate::linrank::{PoolMeta, PoolMethod};
    use crate::preimage::{preimage_fit, PreimageParams, Variant};
    use crate::rng::SeqRng;
    use crate::seq::{synth_sequence, Dynamics, SynthSpec};
    use nalgebra::DVector;

    fn spiral_descriptor(seed: u64, p: usize) -> SubspaceDescriptor {
        let spec = SynthSpec {
            classes: 1,
            sequences_per_class: 1,
            n: 10,
            d: 2,
            noise: 0.1,
            dynamics: Dynamics::Spiral,
        };
        let x = synth_sequence(&spec, seed, 0, 0).unwrap();
        krpfs_fit(&x, &KrpfsParams { p, ..KrpfsParams::default() }).unwrap()
    }

    fn vector_descriptor(z: &[f64]) -> PreimageDescriptor {
        PreimageDescriptor {
            z: DVector::from_row_slice(z),
            method: PoolMethod::Ibkrp,
            meta: PoolMeta::empty(),
        }
    }

    #[test]
    fn self_similarity_is_exp_nu_p() {
        for p in 1..=2 {
            let d = spiral_descriptor(3, p);
            let nu = 1.0 / p as f64;
            let got = subspace_similarity(&d, &d, nu).unwrap();
            let expect = scalar::exp(nu * p as f64);
            assert!(
                (got - expect).abs() / expect <= 1e-6,
                "p={p}: {got} vs {expect}"
            );
        }
    }

    #[test]
    fn similarity_of_feature_orthogonal_subspaces_is_one() {
        // Two sequences so far apart that every cross kernel value
        // underflows: ‖A₁ᵀK₁₂A₂‖ = 0 and the similarity is exp(0) = 1.
        let a = spiral_descriptor(1, 1);
        let mut b = spiral_descriptor(2, 1);
        let shifted = b.frames.frames() + DMatrix::from_element(10, 2, 1e4);
        b.frames = crate::seq::Sequence::from_frames(shifted).unwrap();
        let got = subspace_similarity(&a, &b, 1.0).unwrap();
        assert!((got - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn subspace_similarity_matches_bruteforce_triple_loop() {
        let d1 = spiral_descriptor(4, 2);
        let d2 = spiral_descriptor(5, 2);
        let nu = 0.5;
        let got = subspace_similarity(&d1, &d2, nu).unwrap();

        let sigma_c = scalar::sqrt(d1.sigma * d2.sigma);
        let (n1, n2) = (d1.frames.frame_count(), d2.frames.frame_count());
        let mut frob2 = 0.0;
        for c1 in 0..d1.p {
            for c2 in 0..d2.p {
                let mut entry = 0.0;
                for r in 0..n1 {
                    for s in 0..n2 {
                        let xr: Vec<f64> = d1.frames.frame(r).iter().copied().collect();
                        let xs: Vec<f64> = d2.frames.frame(s).iter().copied().collect();
                        let k = kernel::rbf(&xr, &xs, sigma_c).unwrap();
                        entry += d1.a[(r, c1)] * k * d2.a[(s, c2)];
                    }
                }
                frob2 += entry * entry;
            }
        }
        let expect = scalar::exp(nu * frob2);
        assert!((got - expect).abs() <= 1e-10 * expect.max(1.0));
    }

    #[test]
    fn preimage_similarity_basics() {
        let a = vector_descriptor(&[1.0, 2.0]);
        assert_eq!(preimage_similarity(&a, &a, 1.0).unwrap(), 1.0);
        let b = vector_descriptor(&[1.0 + 2.0f64.sqrt(), 2.0]);
        let got = preimage_similarity(&a, &b, 1.0).unwrap();
        assert!((got - scalar::exp(-1.0)).abs() <= 1e-12);
    }

    #[test]
    fn single_descriptor_gram_has_unit_or_exp_diagonal() {
        let pre = gram_preimage(&[vector_descriptor(&[0.5, -1.0])], 1.0).unwrap();
        assert_eq!(pre.values()[(0, 0)], 1.0);
        assert_eq!(pre.m(), 1);

        let d = spiral_descriptor(6, 2);
        let sub = gram_subspace(&[d], 0.5, CrossBandwidth::PerPairGeometric).unwrap();
        let expect = scalar::exp(0.5 * 2.0);
        assert!((sub.values()[(0, 0)] - expect).abs() / expect <= 1e-6);
    }

    #[test]
    fn gram_is_symmetric_and_near_psd() {
        let ds: Vec<SubspaceDescriptor> = (0..5).map(|s| spiral_descriptor(s, 2)).collect();
        let g = gram_subspace(&ds, 0.5, CrossBandwidth::PerPairGeometric).unwrap();
        let asym = (g.values() - g.values().transpose()).abs().max();
        assert!(asym <= 1e-10);
        let min_eig = g.values().clone().symmetric_eigen().eigenvalues.min();
        assert!(min_eig >= -1e-8, "min eigenvalue {min_eig}");
    }

    #[test]
    fn gram_is_rotation_invariant() {
        let mut rng = SeqRng::new(11);
        let ds: Vec<SubspaceDescriptor> = (0..4).map(|s| spiral_descriptor(s, 2)).collect();
        let base = gram_subspace(&ds, 0.5, CrossBandwidth::PerPairGeometric).unwrap();
        let mut rotated = ds.clone();
        for d in &mut rotated {
            let m = DMatrix::from_fn(2, 2, |_, _| rng.next_normal());
            let r = m.qr().q();
            d.a = &d.a * r;
        }
        let rot = gram_subspace(&rotated, 0.5, CrossBandwidth::PerPairGeometric).unwrap();
        let diff = (base.values() - rot.values()).abs().max();
        assert!(diff <= 1e-10, "max entry change {diff}");
    }

    #[test]
    fn mixed_kinds_are_rejected() {
        let d1 = Descriptor::Preimage(vector_descriptor(&[0.0, 0.0]));
        let d2 = Descriptor::Subspace(spiral_descriptor(1, 1));
        assert!(matches!(
            gram_descriptors(&[d1, d2], 1.0),
            Err(Error::Kind(_))
        ));
    }

    #[test]
    fn global_bandwidth_override_changes_cross_kernel() {
        let d1 = spiral_descriptor(7, 1);
        let d2 = spiral_descriptor(8, 1);
        let a = subspace_similarity_with(&d1, &d2, 1.0, CrossBandwidth::PerPairGeometric).unwrap();
        let b = subspace_similarity_with(&d1, &d2, 1.0, CrossBandwidth::Global(10.0)).unwrap();
        assert!((a - b).abs() > 1e-12);
    }

    #[test]
    fn preimage_fit_descriptors_compose_into_a_gram() {
        let spec = SynthSpec {
            classes: 1,
            sequences_per_class: 1,
            n: 8,
            d: 2,
            noise: 0.1,
            dynamics: Dynamics::Spiral,
        };
        let ds: Vec<Descriptor> = (0..4)
            .map(|s| {
                let x = synth_sequence(&spec, s, 0, 0).unwrap();
                Descriptor::Preimage(
                    preimage_fit(&x, &PreimageParams::default(), Variant::Ibkrp).unwrap(),
                )
            })
            .collect();
        let g = gram_descriptors(&ds, 1.0).unwrap();
        assert_eq!(g.kind(), DescriptorKind::Preimage);
        for i in 0..4 {
            assert!((g.values()[(i, i)] - 1.0).abs() <= g.jitter() + 1e-12);
        }
    }
}

//! Property tests for the numerical invariants that hold on all inputs.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use krp_core::geometry::KStiefel;
use krp_core::kernel;
use krp_core::linrank::{rp_objective, RankParams};
use krp_core::seq::{synth_sequence, Dynamics, Sequence, SynthSpec};

fn frames_strategy(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        proptest::collection::vec(
            proptest::collection::vec(-3.0f64..3.0, d..=d),
            n..=n,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gram_is_symmetric_unit_diagonal_and_mercer(
        rows in frames_strategy(8, 3),
        sigma in 0.3f64..2.0,
    ) {
        let x = Sequence::from_rows(&rows).unwrap();
        let k = kernel::gram(&x, sigma, 0.0).unwrap();
        let v = k.values();
        for i in 0..v.nrows() {
            prop_assert_eq!(v[(i, i)], 1.0);
            for j in 0..v.ncols() {
                prop_assert_eq!(v[(i, j)], v[(j, i)]);
                prop_assert!(v[(i, j)] > 0.0 && v[(i, j)] <= 1.0);
            }
        }
        let min_eig = v.clone().symmetric_eigen().eigenvalues.min();
        prop_assert!(min_eig >= -1e-10, "min eigenvalue {}", min_eig);
    }

    #[test]
    fn bandwidth_is_positively_homogeneous(
        rows in frames_strategy(6, 3),
        scale in 0.1f64..10.0,
    ) {
        let x = Sequence::from_rows(&rows).unwrap();
        if let Ok(sigma) = kernel::bandwidth(&x) {
            let scaled = Sequence::from_frames(x.frames() * scale).unwrap();
            let sigma_scaled = kernel::bandwidth(&scaled).unwrap();
            prop_assert!((sigma_scaled - scale * sigma).abs() <= 1e-9 * sigma_scaled.max(1.0));
        }
    }

    #[test]
    fn rp_objective_at_zero_counts_margins_exactly(
        rows in frames_strategy(8, 3),
        eta in 0.001f64..0.5,
        lambda in 0.1f64..3.0,
    ) {
        let x = Sequence::from_rows(&rows).unwrap();
        let prm = RankParams { eta, lambda, ..RankParams::default() };
        let n = x.frame_count() as f64;
        let z = DVector::zeros(x.dim());
        let expect = lambda * eta * n * (n - 1.0) / 2.0;
        let got = rp_objective(&z, &x, &prm).unwrap();
        prop_assert!((got - expect).abs() <= 1e-12 * expect.max(1.0));
    }

    #[test]
    fn korthonormalize_is_feasible_for_generic_inputs(
        seed in 0u64..5000,
        n in 3usize..9,
        p in 1usize..4,
    ) {
        prop_assume!(p < n);
        let mut rng = krp_core::rng::SeqRng::new(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.next_range(-1.0, 1.0));
        let k = &b * b.transpose() / n as f64 + DMatrix::identity(n, n) * 0.3;
        let manifold = KStiefel::new(k).unwrap();
        let a0 = DMatrix::from_fn(n, p, |_, _| rng.next_range(-1.0, 1.0));
        let point = manifold.korthonormalize(&a0).unwrap();
        prop_assert!(manifold.feasibility_error(point.coeffs()) <= 1e-10);
    }

    #[test]
    fn synth_sequences_are_reproducible_and_finite(
        seed in 0u64..1000,
        class in 0usize..3,
        index in 0usize..4,
        dyn_pick in 0usize..3,
    ) {
        let dynamics = [Dynamics::MonotoneLine, Dynamics::Spiral, Dynamics::FrequencyCoded][dyn_pick];
        let spec = SynthSpec {
            classes: 3,
            sequences_per_class: 4,
            n: 10,
            d: 2,
            noise: 0.05,
            dynamics,
        };
        let a = synth_sequence(&spec, seed, class, index).unwrap();
        let b = synth_sequence(&spec, seed, class, index).unwrap();
        prop_assert_eq!(a.frames(), b.frames());
        prop_assert!(a.frames().iter().all(|v| v.is_finite()));
    }
}

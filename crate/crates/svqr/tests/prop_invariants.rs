//! Property-based invariants for the loss functions and kernel machinery.

use proptest::prelude::*;

use svqr::data::Mat;
use svqr::kernel::KernelSpec;
use svqr::loss::{asym_eps_pinball_loss, empirical_risk, pinball_loss, Tau};

fn tau_strategy() -> impl Strategy<Value = Tau> {
    (0.01..0.99f64).prop_map(|t| Tau::new(t).unwrap())
}

proptest! {
    #[test]
    fn pinball_is_nonnegative_and_zero_only_at_zero(
        t in tau_strategy(),
        u in -100.0..100.0f64,
    ) {
        let v = pinball_loss(t, u);
        prop_assert!(v >= 0.0);
        prop_assert_eq!(v == 0.0, u == 0.0);
    }

    #[test]
    fn band_loss_is_zero_exactly_on_the_band(
        t in tau_strategy(),
        eps in 0.0..10.0f64,
        u in -50.0..50.0f64,
    ) {
        let v = asym_eps_pinball_loss(t, eps, u).unwrap();
        prop_assert!(v >= 0.0);
        let inside = -t.value() * eps <= u && u <= (1.0 - t.value()) * eps;
        prop_assert_eq!(v == 0.0, inside, "u={} band=[{}, {}] v={}", u, -t.value() * eps, (1.0 - t.value()) * eps, v);
    }

    #[test]
    fn zero_width_band_degenerates_to_pinball(
        t in tau_strategy(),
        u in -50.0..50.0f64,
    ) {
        let a = asym_eps_pinball_loss(t, 0.0, u).unwrap();
        let b = pinball_loss(t, u);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn band_loss_is_convex_in_the_residual(
        t in tau_strategy(),
        eps in 0.0..5.0f64,
        a in -20.0..20.0f64,
        b in -20.0..20.0f64,
    ) {
        let mid = asym_eps_pinball_loss(t, eps, 0.5 * (a + b)).unwrap();
        let ends = 0.5 * (asym_eps_pinball_loss(t, eps, a).unwrap()
            + asym_eps_pinball_loss(t, eps, b).unwrap());
        prop_assert!(mid <= ends + 1e-12);
    }

    #[test]
    fn band_edges_span_eps(t in tau_strategy(), eps in 0.0..10.0f64) {
        let upper = (1.0 - t.value()) * eps;
        let lower = -t.value() * eps;
        prop_assert!((upper - lower - eps).abs() <= 1e-12 * (1.0 + eps));
    }

    #[test]
    fn risk_matches_scalar_loop(
        t in tau_strategy(),
        eps in 0.0..3.0f64,
        rs in prop::collection::vec(-10.0..10.0f64, 0..40),
    ) {
        let total = empirical_risk(t, eps, &rs).unwrap();
        let looped: f64 = rs.iter().map(|&u| asym_eps_pinball_loss(t, eps, u).unwrap()).sum();
        prop_assert!((total - looped).abs() <= 1e-12 * (1.0 + looped));
    }

    #[test]
    fn gram_is_symmetric_and_rbf_bounded(
        q in 0.05..20.0f64,
        rows in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 1..12),
    ) {
        let x = Mat::from_rows(&rows).unwrap();
        let g = KernelSpec::rbf(q).gram(&x).unwrap();
        for i in 0..x.rows() {
            prop_assert_eq!(g.get(i, i), 1.0);
            for j in 0..x.rows() {
                // mirrored construction: bitwise-equal symmetry
                prop_assert!(g.get(i, j).to_bits() == g.get(j, i).to_bits());
                prop_assert!(g.get(i, j) >= 0.0 && g.get(i, j) <= 1.0);
                let d2: f64 = x
                    .row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                if d2 / q < 700.0 {
                    // strictly positive wherever exp does not underflow
                    prop_assert!(g.get(i, j) > 0.0);
                }
                let same = x.row(i) == x.row(j);
                prop_assert_eq!(g.get(i, j) == 1.0, same);
            }
        }
    }
}

#[test]
fn rbf_gram_is_positive_semidefinite() {
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    let mut rng = ChaCha12Rng::seed_from_u64(321);
    for _ in 0..20 {
        let l = rng.gen_range(2..=20);
        let n = rng.gen_range(1..=3);
        let rows: Vec<Vec<f64>> = (0..l)
            .map(|_| (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let x = Mat::from_rows(&rows).unwrap();
        let g = KernelSpec::rbf(rng.gen_range(0.1..5.0)).gram(&x).unwrap();
        let dm = DMatrix::from_fn(l, l, |i, j| g.get(i, j));
        let eig = dm.symmetric_eigenvalues();
        let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= -1e-8, "smallest Gram eigenvalue {min}");
    }
}

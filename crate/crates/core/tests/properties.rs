//! Randomized invariants across modules.

use num_complex::Complex64;
use proptest::prelude::*;

use freeproc::additive2d::{gaussian_green, gaussian_kernel, green2_increment};
use freeproc::measures::{CircleMeasure, RealMeasure};
use freeproc::multiplicative2d::{g_from_psi2, h_from_psi2, levy_kernel, levy_pair};
use freeproc::transforms1d::{cauchy_g, inverse_k, psi, psi_inverse, subordinators, DiscPoint, HalfPlanePoint};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn upper() -> impl Strategy<Value = Complex64> {
    (-5.0..5.0f64, 0.05..5.0f64).prop_map(|(x, y)| c(x, y))
}

fn disc(radius: f64) -> impl Strategy<Value = Complex64> {
    (0.0..radius, 0.0..std::f64::consts::TAU).prop_map(|(r, a)| Complex64::from_polar(r, a))
}

fn named_family() -> impl Strategy<Value = RealMeasure> {
    prop_oneof![
        (0.1..4.0f64).prop_map(|a| RealMeasure::semicircle(a).unwrap()),
        (0.1..4.0f64).prop_map(|l| RealMeasure::free_poisson(l).unwrap()),
        (0.1..4.0f64).prop_map(|t| RealMeasure::cauchy(t).unwrap()),
        (-3.0..3.0f64, -3.0..3.0f64, 0.05..0.95f64)
            .prop_map(|(x, y, p)| RealMeasure::atomic(vec![x, y], vec![p, 1.0 - p]).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn semicircle_moments(a in 0.1..10.0f64, k in 0usize..6) {
        let m = RealMeasure::semicircle(a).unwrap();
        prop_assert!((m.moment(2).unwrap() - a).abs() <= 1e-12 * a);
        prop_assert_eq!(m.moment(2 * k + 1).unwrap(), 0.0);
    }

    #[test]
    fn circle_moments_are_bounded(t in 0.0..5.0f64, n in -12i64..12, a in 0.0..std::f64::consts::TAU, p in 0.0..1.0f64) {
        let levy = CircleMeasure::levy(t).unwrap();
        prop_assert!(levy.moment(n).unwrap().norm() <= 1.0 + 1e-12);
        let atomic = CircleMeasure::atomic(vec![a, 2.0 * a], vec![p, 1.0 - p]).unwrap();
        prop_assert!(atomic.moment(n).unwrap().norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn half_plane_mapping_and_round_trip(m in named_family(), z in upper()) {
        let g = cauchy_g(&m, HalfPlanePoint::new(z).unwrap());
        prop_assert!(g.im < 0.0);
        let k = inverse_k(&m, g).unwrap();
        prop_assert!(k.im > 0.0);
        let back = cauchy_g(&m, HalfPlanePoint::new(k).unwrap());
        prop_assert!((back - g).norm() <= 1e-10 * g.norm().max(1.0), "{} vs {}", back, g);
    }

    #[test]
    fn subordination_residual(a in 0.2..3.0f64, l in 0.2..3.0f64, z in upper()) {
        let r = subordinators(
            &RealMeasure::semicircle(a).unwrap(),
            &RealMeasure::free_poisson(l).unwrap(),
            HalfPlanePoint::new(z).unwrap(),
        )
        .unwrap();
        prop_assert!(r.residual <= 1e-10);
        prop_assert!(r.g_sum.im < 0.0);
    }

    #[test]
    fn psi_reflection_identity(t in 0.05..3.0f64, z in disc(0.9)) {
        prop_assume!(z.norm() > 1e-3);
        let m = CircleMeasure::levy(t).unwrap();
        let inside = psi(&m, DiscPoint::new(z).unwrap());
        let outside = psi(&m, DiscPoint::new(1.0 / z.conj()).unwrap());
        prop_assert!((outside - (-1.0 - inside.conj())).norm() <= 1e-10);
    }

    #[test]
    fn psi_round_trip(t in 0.05..3.0f64, z in disc(0.9)) {
        let m = CircleMeasure::levy(t).unwrap();
        let w = psi(&m, DiscPoint::new(z).unwrap());
        let back = psi_inverse(&m, w).unwrap();
        prop_assert!((back - z).norm() <= 1e-10);
        prop_assert!((psi(&m, DiscPoint::new(back).unwrap()) - w).norm() <= 1e-10);
    }

    #[test]
    fn green_conjugate_symmetry(z in upper(), w in upper(), a in 0.2..2.0f64, rho in -0.9..0.9f64) {
        let g = gaussian_green(1.0, a, rho * a.sqrt()).unwrap();
        let lhs = g.eval(z.conj(), w).unwrap();
        let rhs = g.eval(z, w.conj()).unwrap().conj();
        prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-3));

        let inc = green2_increment(&RealMeasure::semicircle(1.0).unwrap(), &RealMeasure::semicircle(1.0 + a).unwrap());
        let lhs = inc.eval(z.conj(), w).unwrap();
        let rhs = inc.eval(z, w.conj()).unwrap().conj();
        prop_assert!((lhs - rhs).norm() <= 1e-10 * lhs.norm().max(1e-3));
    }

    #[test]
    fn increment_green_far_w_gives_past_marginal(z in upper(), a in 0.2..2.0f64) {
        let past = RealMeasure::semicircle(1.0).unwrap();
        let inc = green2_increment(&past, &RealMeasure::semicircle(1.0 + a).unwrap());
        let w = c(0.0, 1e3);
        let gx = cauchy_g(&past, HalfPlanePoint::new(z).unwrap());
        prop_assert!((w * inc.eval(z, w).unwrap() - gx).norm() <= 1e-2 * gx.norm());
    }

    #[test]
    fn gaussian_kernel_rows_are_probabilities(b in 0.5..3.0f64, rho in -0.9..0.9f64, u in -0.95..0.95f64) {
        let (a, cov) = (1.0, rho * b.sqrt());
        let x = 2.0 * u;
        let n = 20_000;
        let edge = 2.0 * b.sqrt();
        let h = 2.0 * edge / n as f64;
        let mut mass = 0.0;
        for j in 1..n {
            let k = gaussian_kernel(a, b, cov, x, -edge + j as f64 * h).unwrap();
            prop_assert!(k >= 0.0);
            mass += k * h;
        }
        prop_assert!((mass - 1.0).abs() <= 1e-3, "{}", mass);
    }

    #[test]
    fn psi2_vanishes_on_axes_and_is_conjugate_symmetric(l in 0.05..1.0f64, d in 0.05..1.0f64, z in disc(0.6), w in disc(0.6)) {
        let j = levy_pair(l, l + d).unwrap();
        let zero = c(0.0, 0.0);
        prop_assert!(j.psi2(zero, w).unwrap().norm() <= 1e-12);
        prop_assert!(j.psi2(z, zero).unwrap().norm() <= 1e-12);
        let lhs = j.psi2(z.conj(), w.conj()).unwrap();
        prop_assert!((lhs - j.psi2(z, w).unwrap().conj()).norm() <= 1e-12);
    }

    #[test]
    fn g_and_h_interconvert(l in 0.05..1.0f64, d in 0.05..1.0f64, z in disc(0.6), w in disc(0.6)) {
        let j = levy_pair(l, l + d).unwrap();
        let pu = psi(&CircleMeasure::levy(l).unwrap(), DiscPoint::new(z).unwrap());
        let pv = psi(&CircleMeasure::levy(l + d).unwrap(), DiscPoint::new(w).unwrap());
        let g = g_from_psi2(&j, z, w).unwrap();
        let h = h_from_psi2(&j, z, w).unwrap();
        prop_assert!((g - (4.0 * h - 2.0 * pu - 2.0 * pv - 3.0)).norm() <= 1e-12 * g.norm().max(1.0));
    }

    #[test]
    fn levy_kernel_rows_have_mean_one(l in 0.0..2.0f64, d in 0.05..2.0f64, s in 0.0..std::f64::consts::TAU) {
        let n = 2048;
        let mean = (0..n)
            .map(|k| levy_kernel(l, l + d, s, std::f64::consts::TAU * k as f64 / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        prop_assert!((mean - 1.0).abs() <= 1e-6);
    }
}

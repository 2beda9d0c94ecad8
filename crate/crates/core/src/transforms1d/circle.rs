//! ψ, η and S transforms on the disc, free multiplicative convolution and
//! Poisson-integral recovery of circle densities.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{DiscPoint, NEWTON_MAX_STEPS, NEWTON_TOL, RADIAL_SCHEDULE};
use crate::error::{Error, Result};
use crate::grid::{circle_angles, extrapolate_to_zero};
use crate::measures::CircleMeasure;

/// Anything that can evaluate the ψ-transform inside the unit disc.
///
/// Implementors provide `q(w) = ψ(w)/w = ∫ s/(1 − ws) dμ(s)`, which stays
/// finite at `w = 0` where it equals the first moment.
pub trait PsiTransform: Send + Sync {
    fn q(&self, w: Complex64) -> Result<Complex64>;

    fn q_prime(&self, w: Complex64) -> Result<Complex64>;

    fn psi(&self, w: Complex64) -> Result<Complex64> {
        Ok(w * self.q(w)?)
    }

    fn psi_prime(&self, w: Complex64) -> Result<Complex64> {
        Ok(self.q(w)? + w * self.q_prime(w)?)
    }

    fn first_moment(&self) -> Result<Complex64> {
        self.q(Complex64::new(0.0, 0.0))
    }

    /// `ψ⁻¹(w)` near the origin, by Newton's method unless overridden.
    fn psi_inverse(&self, w: Complex64) -> Result<Complex64> {
        psi_inverse_numeric(self, w)
    }

    /// `ψ(z)` anywhere off the circle, using `ψ(z) = −1 − conj ψ(1/z̄)` outside.
    fn psi_at(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() < 1.0 {
            self.psi(z)
        } else if z.norm() > 1.0 {
            Ok(-1.0 - self.psi(1.0 / z.conj())?.conj())
        } else {
            Err(Error::DomainEscape(format!("{z} lies on the unit circle")))
        }
    }
}

fn check_interior(w: Complex64) -> Result<()> {
    if w.norm() < 1.0 {
        Ok(())
    } else {
        Err(Error::DomainEscape(format!("{w} is outside the open unit disc")))
    }
}

// s/(1 − ws) and its w-derivative.
fn kernel(s: Complex64, w: Complex64) -> (Complex64, Complex64) {
    let d = 1.0 - w * s;
    (s / d, s * s / (d * d))
}

// Band-limited grid kernel: s Σ_{n<M} (ws)^n and its derivative.
fn grid_kernel(s: Complex64, w: Complex64, m: i32) -> (Complex64, Complex64) {
    let x = w * s;
    let d = 1.0 - x;
    let xm = x.powi(m);
    let q = s * (1.0 - xm) / d;
    let dq = s * s * ((1.0 - xm) - m as f64 * x.powi(m - 1) * d) / (d * d);
    (q, dq)
}

fn measure_q(m: &CircleMeasure, w: Complex64) -> (Complex64, Complex64) {
    match m {
        CircleMeasure::PointMass { angle } => kernel(Complex64::from_polar(1.0, *angle), w),
        CircleMeasure::Levy { time } => {
            let d = time.exp() - w;
            (1.0 / d, 1.0 / (d * d))
        }
        CircleMeasure::Atomic { angles, weights } => angles.iter().zip(weights).fold(
            (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)),
            |(q, dq), (a, p)| {
                let (k, dk) = kernel(Complex64::from_polar(1.0, *a), w);
                (q + p * k, dq + p * dk)
            },
        ),
        CircleMeasure::Grid { values } => {
            let n = values.len();
            let band = ((n - 1) / 2) as i32;
            let mut q = Complex64::new(0.0, 0.0);
            let mut dq = Complex64::new(0.0, 0.0);
            for (k, v) in values.iter().enumerate() {
                let s = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64);
                let (a, b) = grid_kernel(s, w, band);
                q += v * a;
                dq += v * b;
            }
            (q / n as f64, dq / n as f64)
        }
    }
}

impl PsiTransform for CircleMeasure {
    fn q(&self, w: Complex64) -> Result<Complex64> {
        check_interior(w)?;
        Ok(measure_q(self, w).0)
    }

    fn q_prime(&self, w: Complex64) -> Result<Complex64> {
        check_interior(w)?;
        Ok(measure_q(self, w).1)
    }

    fn first_moment(&self) -> Result<Complex64> {
        Ok(CircleMeasure::first_moment(self))
    }

    fn psi_inverse(&self, w: Complex64) -> Result<Complex64> {
        psi_inverse(self, w)
    }
}

/// `ψ_μ(z)`; exterior points use `ψ(z) = −1 − conj ψ(1/z̄)`.
pub fn psi(m: &CircleMeasure, z: DiscPoint) -> Complex64 {
    let z = z.value();
    if z.norm() < 1.0 {
        z * measure_q(m, z).0
    } else {
        let r = 1.0 / z.conj();
        -1.0 - (r * measure_q(m, r).0).conj()
    }
}

/// `η = ψ/(1 + ψ)`.
pub fn eta(m: &CircleMeasure, z: DiscPoint) -> Complex64 {
    let p = psi(m, z);
    p / (1.0 + p)
}

fn nonzero_first_moment<T: PsiTransform + ?Sized>(t: &T) -> Result<Complex64> {
    let m1 = t.first_moment()?;
    if m1.norm() < 1e-14 {
        return Err(Error::STransformUndefined);
    }
    Ok(m1)
}

/// Newton solve of `ψ(z) = w` near the origin.
fn psi_inverse_numeric<T: PsiTransform + ?Sized>(t: &T, w: Complex64) -> Result<Complex64> {
    let m1 = nonzero_first_moment(t)?;
    let mut z = w / (m1 * (1.0 + w));
    if z.norm() >= 1.0 {
        return Err(Error::DomainEscape(format!("ψ⁻¹({w}) starts outside the disc")));
    }
    for _ in 0..NEWTON_MAX_STEPS {
        let r = t.psi(z)? - w;
        if r.norm() <= NEWTON_TOL * w.norm().max(1.0) {
            return Ok(z);
        }
        let step = r / t.psi_prime(z)?;
        let mut next = z - step;
        let mut halvings = 0;
        while next.norm() >= 1.0 {
            halvings += 1;
            if halvings > 40 {
                return Err(Error::DomainEscape(format!("Newton iterate for ψ⁻¹({w}) left the disc")));
            }
            next = z - step * 0.5f64.powi(halvings);
        }
        z = next;
    }
    let r = (t.psi(z)? - w).norm();
    if r <= 1e-10 {
        Ok(z)
    } else {
        Err(Error::InversionFailed(format!("ψ⁻¹({w}) did not converge, residual {r:e}")))
    }
}

/// `ψ⁻¹(w)` near the origin; closed forms for point masses and Lévy marginals.
pub fn psi_inverse(m: &CircleMeasure, w: Complex64) -> Result<Complex64> {
    match m {
        CircleMeasure::PointMass { angle } => Ok(w * Complex64::from_polar(1.0, -angle) / (1.0 + w)),
        CircleMeasure::Levy { time } => Ok(w * time.exp() / (1.0 + w)),
        _ => psi_inverse_numeric(m, w),
    }
}

/// `S(z) = η⁻¹(z)/z` with `η⁻¹(z) = ψ⁻¹(z/(1 − z))`; `S(0) = 1/τ(U)`.
pub fn s_transform(m: &CircleMeasure, z: Complex64) -> Result<Complex64> {
    let m1 = nonzero_first_moment(m)?;
    if z.norm() < 1e-14 {
        return Ok(1.0 / m1);
    }
    Ok(psi_inverse(m, z / (1.0 - z))? / z)
}

/// `h(v) = η(v)/v = q/(1 + v q)` and its derivative.
fn h_and_dh(t: &dyn PsiTransform, v: Complex64) -> Result<(Complex64, Complex64)> {
    let q = t.q(v)?;
    let dq = t.q_prime(v)?;
    let d = 1.0 + v * q;
    Ok((q / d, (dq - q * q) / (d * d)))
}

/// Pointwise evaluator of the ψ-transform of `μ_1 ⊠ μ_2`, through the
/// subordination system `ω_1 = z h_2(ω_2)`, `ω_2 = z h_1(ω_1)`.
#[derive(Clone)]
pub struct FreeMultConvolution {
    a: Arc<dyn PsiTransform>,
    b: Arc<dyn PsiTransform>,
}

struct Solved {
    w1: Complex64,
    w2: Complex64,
    h1: Complex64,
    h2: Complex64,
    dh1: Complex64,
    dh2: Complex64,
}

impl FreeMultConvolution {
    pub fn new(a: Arc<dyn PsiTransform>, b: Arc<dyn PsiTransform>) -> Self {
        Self { a, b }
    }

    pub fn of(m1: &CircleMeasure, m2: &CircleMeasure) -> Self {
        Self::new(Arc::new(m1.clone()), Arc::new(m2.clone()))
    }

    // Φ(ω1) = ω1 − z h_b(z h_a(ω1)) with derivative.
    fn map(&self, z: Complex64, w1: Complex64) -> Result<(Complex64, Complex64, Solved)> {
        let (h1, dh1) = h_and_dh(self.a.as_ref(), w1)?;
        let w2 = z * h1;
        let (h2, dh2) = h_and_dh(self.b.as_ref(), w2)?;
        let phi = w1 - z * h2;
        let dphi = 1.0 - z * z * dh2 * dh1;
        Ok((phi, dphi, Solved { w1, w2, h1, h2, dh1, dh2 }))
    }

    fn newton(&self, z: Complex64, start: Complex64) -> Option<Solved> {
        let mut w1 = start;
        for _ in 0..60 {
            let (phi, dphi, s) = self.map(z, w1).ok()?;
            if phi.norm() <= 1e-15 * (1.0 + w1.norm()) {
                return Some(s);
            }
            let step = phi / dphi;
            let mut lambda = 1.0;
            let mut next = w1 - step;
            while next.norm() >= 1.0 || self.map(z, next).is_err() {
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return None;
                }
                next = w1 - step * lambda;
            }
            if (next - w1).norm() <= 1e-16 * (1.0 + w1.norm()) {
                return self.map(z, next).ok().map(|t| t.2);
            }
            w1 = next;
        }
        None
    }

    fn solve(&self, z: Complex64) -> Result<Solved> {
        check_interior(z)?;
        let r = z.norm();
        let r0 = r.min(0.25);
        let dir = if r > 0.0 { z / r } else { Complex64::new(1.0, 0.0) };
        // Damped fixed point on a small circle, where the maps contract.
        let z0 = dir * r0;
        let mut w1 = z0;
        let mut converged = false;
        for _ in 0..10_000 {
            let (phi, _, _) = self.map(z0, w1)?;
            w1 -= 0.5 * phi;
            if phi.norm() <= 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::SubordinationFailed(format!("multiplicative fixed point stalled at {z0}")));
        }
        let mut s = self
            .newton(z0, w1)
            .ok_or_else(|| Error::SubordinationFailed(format!("Newton polish failed at {z0}")))?;
        let mut rad = r0;
        let mut step = 0.1;
        while rad < r {
            let next = (rad + step).min(r);
            match self.newton(dir * next, s.w1) {
                Some(t) => {
                    s = t;
                    rad = next;
                    step = (step * 1.5).min(0.1);
                }
                None => {
                    step *= 0.5;
                    if step < 1e-9 {
                        return Err(Error::SubordinationFailed(format!("radial continuation stalled at {z}")));
                    }
                }
            }
        }
        Ok(s)
    }

    /// `(ω_1(z), ω_2(z))`.
    pub fn subordinators(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let s = self.solve(z)?;
        Ok((s.w1, s.w2))
    }
}

impl PsiTransform for FreeMultConvolution {
    fn q(&self, z: Complex64) -> Result<Complex64> {
        let s = self.solve(z)?;
        let h = s.h1 * s.h2;
        Ok(h / (1.0 - z * h))
    }

    fn q_prime(&self, z: Complex64) -> Result<Complex64> {
        let s = self.solve(z)?;
        let dw1 = (s.h2 + z * s.dh2 * s.h1) / (1.0 - z * z * s.dh2 * s.dh1);
        let dw2 = s.h1 + z * s.dh1 * dw1;
        let h = s.h1 * s.h2;
        let dh = s.dh1 * dw1 * s.h2 + s.h1 * s.dh2 * dw2;
        let d = 1.0 - z * h;
        Ok((dh + h * h) / (d * d))
    }

    fn first_moment(&self) -> Result<Complex64> {
        Ok(self.a.first_moment()? * self.b.first_moment()?)
    }
}

/// Angles used for circle outputs when none are requested.
pub const DEFAULT_N_CIRCLE: usize = 512;

/// `μ_1 ⊠ μ_2` as a density on [`DEFAULT_N_CIRCLE`] angles; products of
/// point masses and rotations of atomic laws are returned exactly.
pub fn free_mult_convolve(m1: &CircleMeasure, m2: &CircleMeasure) -> Result<CircleMeasure> {
    if let Some(out) = exact_product(m1, m2).or_else(|| exact_product(m2, m1)) {
        return Ok(out);
    }
    nonzero_first_moment(m1)?;
    nonzero_first_moment(m2)?;
    recover_circle_density(&FreeMultConvolution::of(m1, m2), DEFAULT_N_CIRCLE)
}

fn exact_product(m1: &CircleMeasure, m2: &CircleMeasure) -> Option<CircleMeasure> {
    let CircleMeasure::PointMass { angle } = m1 else { return None };
    match m2 {
        _ if *angle == 0.0 => Some(m2.clone()),
        CircleMeasure::PointMass { angle: b } => Some(CircleMeasure::point_mass(angle + b)),
        CircleMeasure::Atomic { angles, weights } => {
            CircleMeasure::atomic(angles.iter().map(|a| a + angle).collect(), weights.clone()).ok()
        }
        _ => None,
    }
}

/// Settings for [`recover_circle_density_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct CircleRecovery {
    /// Distances `1 − r`, coarse to fine.
    pub schedule: Vec<f64>,
    pub mass_window: (f64, f64),
    pub negativity_tol: f64,
}

impl Default for CircleRecovery {
    fn default() -> Self {
        Self { schedule: RADIAL_SCHEDULE.to_vec(), mass_window: (0.99, 1.01), negativity_tol: 1e-6 }
    }
}

/// Density (relative to normalized Haar measure) of the law with ψ-transform
/// `psi_eval` on `n` equally spaced angles.
pub fn recover_circle_density(psi_eval: &dyn PsiTransform, n: usize) -> Result<CircleMeasure> {
    recover_circle_density_with(psi_eval, n, &CircleRecovery::default())
}

/// [`recover_circle_density`] with explicit settings.
///
/// `Re(2ψ(r e^{-iθ}) + 1)` is the Poisson integral of `μ` evaluated at
/// `r e^{iθ}`, so the radial limit gives the density at `e^{iθ}`. The
/// Fourier mode `n` of the Poisson integral carries the factor `r^{|n|}`,
/// a polynomial in `1 − r`, so low modes are extrapolated exactly.
pub fn recover_circle_density_with(psi_eval: &dyn PsiTransform, n: usize, opts: &CircleRecovery) -> Result<CircleMeasure> {
    if n < 2 {
        return Err(Error::InvalidArgument("circle recovery needs at least two angles".into()));
    }
    let angles = circle_angles(n);
    let values: Vec<f64> = angles
        .par_iter()
        .map(|th| {
            let samples = opts
                .schedule
                .iter()
                .map(|d| {
                    let z = Complex64::from_polar(1.0 - d, -th);
                    Ok((2.0 * psi_eval.psi(z)? + 1.0).re)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(extrapolate_to_zero(&opts.schedule, &samples))
        })
        .collect::<Result<_>>()?;
    let mass = values.iter().sum::<f64>() / n as f64;
    let (lo, hi) = opts.mass_window;
    if !(mass >= lo && mass <= hi) {
        return Err(Error::InversionMass { mass });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -opts.negativity_tol {
        return Err(Error::Negativity { min });
    }
    let clamped: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total = clamped.iter().sum::<f64>() / n as f64;
    CircleMeasure::grid(clamped.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::mixed_moments_free;
    use crate::measures::CircleMeasure;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dp(re: f64, im: f64) -> DiscPoint {
        DiscPoint::new(c(re, im)).unwrap()
    }

    #[test]
    fn psi_values() {
        let levy = CircleMeasure::levy(1.0).unwrap();
        assert_eq!(psi(&levy, dp(0.0, 0.0)), c(0.0, 0.0));
        assert!((psi(&levy, dp(0.5, 0.0)) - 0.5 / (1f64.exp() - 0.5)).norm() < 1e-15);
        assert!((psi(&levy, dp(0.5, 0.0)).re - 0.225399).abs() < 1e-6);
        let z = c(0.3, -0.4);
        let one = CircleMeasure::point_mass(0.0);
        assert!((psi(&one, DiscPoint::new(z).unwrap()) - z / (1.0 - z)).norm() < 1e-15);
        assert!((eta(&one, DiscPoint::new(z).unwrap()) - z).norm() < 1e-15);
    }

    #[test]
    fn reflection_identity() {
        let laws = [
            CircleMeasure::levy(0.3).unwrap(),
            CircleMeasure::point_mass(1.1),
            CircleMeasure::atomic(vec![0.2, 2.0, 4.0], vec![0.3, 0.3, 0.4]).unwrap(),
        ];
        for m in &laws {
            for z in [c(0.3, 0.2), c(-0.5, 0.6), c(0.1, -0.85)] {
                let outside = 1.0 / z.conj();
                let lhs = psi(m, DiscPoint::new(outside).unwrap());
                let rhs = -1.0 - psi(m, DiscPoint::new(z).unwrap()).conj();
                assert!((lhs - rhs).norm() < 1e-14);
            }
        }
        // Outside the disc the integral gives −Σ_{n≥0} τ(U^{-n}) z^{-n} + 1 − 1.
        let levy = CircleMeasure::levy(0.3).unwrap();
        let z = c(1.1, 0.1);
        let rho = (-0.3f64).exp();
        assert!((psi(&levy, DiscPoint::new(z).unwrap()) + z / (z - rho)).norm() < 1e-13);
    }

    #[test]
    fn s_transform_examples() {
        let z = c(0.1, 0.05);
        assert!((s_transform(&CircleMeasure::point_mass(0.0), z).unwrap() - 1.0).norm() < 1e-14);
        let th = 0.8;
        let s = s_transform(&CircleMeasure::point_mass(th), z).unwrap();
        assert!((s - Complex64::from_polar(1.0, -th)).norm() < 1e-14);
        let t = 0.6;
        let s = s_transform(&CircleMeasure::levy(t).unwrap(), z).unwrap();
        assert!((s - t.exp()).norm() < 1e-13);
        let haar = CircleMeasure::grid(vec![1.0; 64]).unwrap();
        assert!(matches!(s_transform(&haar, z), Err(Error::STransformUndefined)));
    }

    #[test]
    fn psi_inverse_round_trips() {
        let laws = [
            CircleMeasure::levy(1.0).unwrap(),
            CircleMeasure::atomic(vec![0.2, 0.9], vec![0.6, 0.4]).unwrap(),
        ];
        for m in &laws {
            for w in [c(0.1, 0.0), c(0.05, -0.08), c(-0.1, 0.1)] {
                let z = psi_inverse(m, w).unwrap();
                assert!((psi(m, DiscPoint::new(z).unwrap()) - w).norm() <= 1e-10);
                let zn = psi_inverse_numeric(m, w).unwrap();
                assert!((zn - z).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn grid_law_psi_is_band_limited() {
        let n = 64;
        let haar = CircleMeasure::grid(vec![1.0; n]).unwrap();
        assert!(haar.psi(c(0.99, 0.0)).unwrap().norm() < 1e-12);
        let levy = CircleMeasure::levy(0.7).unwrap();
        let values: Vec<f64> = circle_angles(n).iter().map(|a| levy.density_at(*a)).collect();
        let g = CircleMeasure::grid(values).unwrap();
        let z = c(0.3, 0.4);
        assert!((g.psi(z).unwrap() - levy.psi(z).unwrap()).norm() < 1e-10);
        let h = 1e-6;
        let fd = (g.q(z + h).unwrap() - g.q(z - h).unwrap()) / (2.0 * h);
        assert!((g.q_prime(z).unwrap() - fd).norm() < 1e-7);
    }

    #[test]
    fn levy_product_is_levy() {
        let conv = FreeMultConvolution::of(&CircleMeasure::levy(0.4).unwrap(), &CircleMeasure::levy(0.6).unwrap());
        for z in [c(0.5, 0.0), c(0.2, -0.45), c(-0.3, 0.3), c(0.9, 0.3)] {
            let want = z / (1f64.exp() - z);
            assert!((conv.psi(z).unwrap() - want).norm() < 1e-12, "{z}");
        }
        let z = c(0.3, 0.1);
        let h = 1e-6;
        let fd = (conv.q(z + h).unwrap() - conv.q(z - h).unwrap()) / (2.0 * h);
        assert!((conv.q_prime(z).unwrap() - fd).norm() < 1e-7);
    }

    #[test]
    fn product_moments_match_word_oracle() {
        let a = CircleMeasure::atomic(vec![0.3, 1.2, 2.5], vec![0.5, 0.3, 0.2]).unwrap();
        let b = CircleMeasure::levy(0.5).unwrap();
        let conv = FreeMultConvolution::of(&a, &b);
        let n = 6;
        let ma: Vec<Complex64> = (1..=n).map(|k| a.moment(k as i64).unwrap()).collect();
        let mb: Vec<Complex64> = (1..=n).map(|k| b.moment(k as i64).unwrap()).collect();
        // τ((UV)^k) is the moment of the alternating word.
        let pts = 128;
        let radius = 0.5;
        for k in 1..=n {
            let word: Vec<u8> = (0..2 * k).map(|i| 1 + (i % 2) as u8).collect();
            let want = mixed_moments_free(&ma, &mb, &word).unwrap();
            let mut acc = c(0.0, 0.0);
            for j in 0..pts {
                let z = Complex64::from_polar(radius, 2.0 * PI * j as f64 / pts as f64);
                acc += conv.psi(z).unwrap() / z.powi(k);
            }
            let got = acc / pts as f64;
            assert!((got - want).norm() < 1e-10, "order {k}: {got} vs {want}");
        }
        let m1 = conv.first_moment().unwrap();
        assert!((m1 - a.first_moment() * b.first_moment()).norm() < 1e-15);
    }

    #[test]
    fn circle_recovery() {
        let haar = CircleMeasure::grid(vec![1.0; 32]).unwrap();
        let u = recover_circle_density(&haar, 128).unwrap();
        assert!((u.density_per_radian(1.0) - 1.0 / (2.0 * PI)).abs() < 1e-12);

        let levy = CircleMeasure::levy(1.0).unwrap();
        let rec = recover_circle_density(&levy, 512).unwrap();
        let rho = (-1f64).exp();
        let mut worst: f64 = 0.0;
        for th in circle_angles(512) {
            let s = Complex64::from_polar(1.0, th);
            let want = (1.0 - rho * rho) / (s - rho).norm_sqr();
            worst = worst.max((rec.density_at(th) - want).abs());
        }
        assert!(worst < 1e-3, "{worst}");

        let atom = CircleMeasure::point_mass(0.0);
        assert!(matches!(recover_circle_density(&atom, 512), Err(Error::InversionMass { .. })));
    }

    #[test]
    fn multiplicative_convolution_outputs() {
        let m = CircleMeasure::levy(0.3).unwrap();
        assert_eq!(free_mult_convolve(&CircleMeasure::point_mass(0.0), &m).unwrap(), m);
        assert_eq!(
            free_mult_convolve(&CircleMeasure::point_mass(0.5), &CircleMeasure::point_mass(0.25)).unwrap(),
            CircleMeasure::point_mass(0.75)
        );
        let out = free_mult_convolve(&CircleMeasure::levy(0.4).unwrap(), &CircleMeasure::levy(0.6).unwrap()).unwrap();
        let target = CircleMeasure::levy(1.0).unwrap();
        let angles = circle_angles(DEFAULT_N_CIRCLE);
        let l1: f64 = angles.iter().map(|a| (out.density_at(*a) - target.density_at(*a)).abs()).sum::<f64>()
            / angles.len() as f64;
        assert!(l1 < 1e-3, "{l1}");
        let err = (out.first_moment() - target.first_moment()).norm();
        assert!(err < 1e-8, "first moment error {err}");
        let haar = CircleMeasure::grid(vec![1.0; 16]).unwrap();
        assert!(matches!(free_mult_convolve(&haar, &m), Err(Error::STransformUndefined)));
    }
}

//! Free additive convolution through the subordination functions.

use num_complex::Complex64;
use std::sync::Arc;

use super::cauchy::CauchyTransform;
use super::inversion::{recover_density_1d_with_atoms, RecoveryOptions};
use super::HalfPlanePoint;
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::measures::{GridDensity, RealMeasure};

/// Subordination functions and the transform of the sum at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationResult {
    pub omega1: Complex64,
    pub omega2: Complex64,
    pub g_sum: Complex64,
    /// `max_i |ω_1 + ω_2 − z − 1/G_i(ω_i)|`.
    pub residual: f64,
}

/// Solver settings for [`subordinators_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubordinationOptions {
    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for SubordinationOptions {
    fn default() -> Self {
        Self { damping: 0.5, max_iterations: 10_000, tolerance: 1e-10 }
    }
}

/// `h(w) = 1/G(w) − w` and its derivative.
fn h_and_dh(t: &dyn CauchyTransform, w: Complex64) -> Result<(Complex64, Complex64)> {
    let g = t.g(w)?;
    let dg = t.g_prime(w)?;
    Ok((1.0 / g - w, -dg / (g * g) - 1.0))
}

struct Pair<'a> {
    a: &'a dyn CauchyTransform,
    b: &'a dyn CauchyTransform,
}

impl Pair<'_> {
    // Returns (ω2, Φ(ω1), Φ'(ω1)) for Φ(ω1) = ω1 − z − h_b(z + h_a(ω1)).
    fn map(&self, z: Complex64, w1: Complex64) -> Result<(Complex64, Complex64, Complex64)> {
        let (ha, dha) = h_and_dh(self.a, w1)?;
        let w2 = z + ha;
        if w2.im <= 0.0 {
            return Err(Error::DomainEscape(format!("ω2 = {w2} left the upper half-plane")));
        }
        let (hb, dhb) = h_and_dh(self.b, w2)?;
        Ok((w2, w1 - z - hb, 1.0 - dhb * dha))
    }

    fn damped(&self, z: Complex64, opts: &SubordinationOptions) -> Result<Complex64> {
        let mut w1 = z;
        for _ in 0..opts.max_iterations {
            let (_, phi, _) = self.map(z, w1)?;
            let next = w1 - opts.damping * phi;
            if phi.norm() <= 1e-13 * (1.0 + w1.norm()) {
                return Ok(next);
            }
            w1 = next;
        }
        Err(Error::SubordinationFailed(format!("fixed-point iteration stalled at {z}")))
    }

    fn newton(&self, z: Complex64, start: Complex64) -> Option<Complex64> {
        let floor = z.im * (1.0 - 1e-9);
        let mut w1 = start;
        for _ in 0..60 {
            let (_, phi, dphi) = self.map(z, w1).ok()?;
            if phi.norm() <= 1e-14 * (1.0 + w1.norm()) {
                return self.admissible(z, w1).then_some(w1);
            }
            let step = phi / dphi;
            if !step.norm().is_finite() {
                return None;
            }
            let mut lambda = 1.0;
            let mut next = w1 - step;
            while next.im < floor || self.map(z, next).is_err() {
                lambda *= 0.5;
                if lambda < 1e-6 {
                    return None;
                }
                next = w1 - step * lambda;
            }
            if (next - w1).norm() <= 1e-15 * (1.0 + w1.norm()) {
                return self.admissible(z, next).then_some(next);
            }
            w1 = next;
        }
        None
    }

    // Subordination functions never decrease the imaginary part.
    fn admissible(&self, z: Complex64, w1: Complex64) -> bool {
        let slack = 1e-10 * (1.0 + z.norm());
        match self.map(z, w1) {
            Ok((w2, _, _)) => w1.im >= z.im - slack && w2.im >= z.im - slack,
            Err(_) => false,
        }
    }

    fn result(&self, z: Complex64, w1: Complex64) -> Result<SubordinationResult> {
        let (w2, _, _) = self.map(z, w1)?;
        let g1 = self.a.g(w1)?;
        let g2 = self.b.g(w2)?;
        let r1 = (w1 + w2 - z - 1.0 / g1).norm();
        let r2 = (w1 + w2 - z - 1.0 / g2).norm();
        Ok(SubordinationResult { omega1: w1, omega2: w2, g_sum: g1, residual: r1.max(r2) })
    }

    /// Upper half-plane solve: damped iteration far from the axis, then
    /// Newton continuation down to `Im z`.
    fn solve_upper(&self, z: Complex64, start: Option<Complex64>, opts: &SubordinationOptions) -> Result<Complex64> {
        if let Some(s) = start {
            if let Some(w) = self.newton(z, s) {
                return Ok(w);
            }
        }
        let top = z.im.max(2.0 * (self.a.scale() + self.b.scale()) + 1.0);
        let mut y = top;
        let mut w1 = self.damped(Complex64::new(z.re, y), opts)?;
        let mut factor = 0.5;
        while y > z.im {
            let next_y = (y * factor).max(z.im);
            match self.newton(Complex64::new(z.re, next_y), w1) {
                Some(w) => {
                    w1 = w;
                    y = next_y;
                    factor = (factor * factor).max(0.25);
                }
                None => {
                    factor = factor.sqrt();
                    if factor > 1.0 - 1e-6 {
                        return Err(Error::SubordinationFailed(format!("continuation stalled at {z}")));
                    }
                }
            }
        }
        Ok(w1)
    }
}

/// Subordination functions of `μ_1 ⊞ μ_2` at `z` with default settings.
pub fn subordinators(m1: &RealMeasure, m2: &RealMeasure, z: HalfPlanePoint) -> Result<SubordinationResult> {
    subordinators_with(m1, m2, z.value(), None, &SubordinationOptions::default())
}

/// Subordination functions for arbitrary transforms, optionally warm-started
/// from a nearby `ω_1`.
pub fn subordinators_with(
    a: &dyn CauchyTransform,
    b: &dyn CauchyTransform,
    z: Complex64,
    start: Option<Complex64>,
    opts: &SubordinationOptions,
) -> Result<SubordinationResult> {
    if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
        return Err(Error::InvalidArgument(format!("{z} is not off the real axis")));
    }
    let pair = Pair { a, b };
    let lower = z.im < 0.0;
    let zu = if lower { z.conj() } else { z };
    let start = start.map(|s| if lower { s.conj() } else { s });
    let w1 = pair.solve_upper(zu, start, opts)?;
    let mut r = pair.result(zu, w1)?;
    if r.residual > opts.tolerance {
        return Err(Error::SubordinationFailed(format!("residual {:e} at {z}", r.residual)));
    }
    if lower {
        r.omega1 = r.omega1.conj();
        r.omega2 = r.omega2.conj();
        r.g_sum = r.g_sum.conj();
    }
    Ok(r)
}

/// Pointwise evaluator of `G_{μ_1 ⊞ μ_2}`.
#[derive(Clone)]
pub struct FreeAdditiveConvolution {
    a: Arc<dyn CauchyTransform>,
    b: Arc<dyn CauchyTransform>,
    opts: SubordinationOptions,
}

impl FreeAdditiveConvolution {
    pub fn new(a: Arc<dyn CauchyTransform>, b: Arc<dyn CauchyTransform>) -> Self {
        Self { a, b, opts: SubordinationOptions::default() }
    }

    pub fn of(m1: &RealMeasure, m2: &RealMeasure) -> Self {
        Self::new(Arc::new(m1.clone()), Arc::new(m2.clone()))
    }

    pub fn with_options(mut self, opts: SubordinationOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn subordinate(&self, z: Complex64) -> Result<SubordinationResult> {
        subordinators_with(self.a.as_ref(), self.b.as_ref(), z, None, &self.opts)
    }

    /// `ω_1(z)`, so that `G_sum = G_1 ∘ ω_1`.
    pub fn omega1(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.subordinate(z)?.omega1)
    }

    /// `ω_2(z)`, so that `G_sum = G_2 ∘ ω_2`.
    pub fn omega2(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.subordinate(z)?.omega2)
    }
}

impl CauchyTransform for FreeAdditiveConvolution {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.subordinate(z)?.g_sum)
    }

    fn g_prime(&self, z: Complex64) -> Result<Complex64> {
        let r = self.subordinate(z)?;
        let (_, dha) = h_and_dh(self.a.as_ref(), r.omega1)?;
        let (_, dhb) = h_and_dh(self.b.as_ref(), r.omega2)?;
        let dw1 = (1.0 + dhb) / (1.0 - dhb * dha);
        Ok(self.a.g_prime(r.omega1)? * dw1)
    }

    fn scale(&self) -> f64 {
        self.a.scale() + self.b.scale()
    }

    fn support_hint(&self) -> Option<(f64, f64)> {
        let (a0, a1) = self.a.support_hint()?;
        let (b0, b1) = self.b.support_hint()?;
        Some((a0 + b0, a1 + b1))
    }

    // An atom of the sum sits at x + y whenever the masses there exceed 1.
    fn atom_hint(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (x, p) in self.a.atom_hint() {
            for (y, q) in self.b.atom_hint() {
                if p + q > 1.0 {
                    out.push((x + y, p + q - 1.0));
                }
            }
        }
        out
    }
}

/// Default number of grid points for one-variable outputs.
pub const DEFAULT_N1D: usize = 2048;

/// `μ_1 ⊞ μ_2` as a gridded measure over the padded sum of supports.
///
/// Shifts by a point mass and sums of Cauchy laws are returned exactly.
pub fn free_add_convolve(m1: &RealMeasure, m2: &RealMeasure) -> Result<RealMeasure> {
    free_add_convolve_on(m1, m2, DEFAULT_N1D)
}

/// [`free_add_convolve`] on `n` grid points.
pub fn free_add_convolve_on(m1: &RealMeasure, m2: &RealMeasure, n: usize) -> Result<RealMeasure> {
    free_add_convolve_with(m1, m2, n, &RecoveryOptions::default())
}

/// [`free_add_convolve_on`] with explicit recovery settings.
pub fn free_add_convolve_with(m1: &RealMeasure, m2: &RealMeasure, n: usize, opts: &RecoveryOptions) -> Result<RealMeasure> {
    if let Some(out) = exact_sum(m1, m2)?.or(exact_sum(m2, m1)?) {
        return Ok(out);
    }
    let conv = FreeAdditiveConvolution::of(m1, m2);
    let (lo, hi) = conv
        .support_hint()
        .ok_or_else(|| Error::ConvolutionFailed("sum with a heavy-tailed law has no bounded grid".into()))?;
    let grid = UniformGrid::padded(lo, hi, 0.05, n)?;
    let atoms: Vec<f64> = conv.atom_hint().iter().map(|(x, _)| *x).collect();
    recover_density_1d_with_atoms(&conv, grid, &atoms, opts).map_err(|e| match e {
        Error::SubordinationFailed(msg) | Error::DomainEscape(msg) => Error::ConvolutionFailed(msg),
        other => other,
    })
}

fn exact_sum(m1: &RealMeasure, m2: &RealMeasure) -> Result<Option<RealMeasure>> {
    Ok(match (m1, m2) {
        (RealMeasure::Atomic(a), other) if a.points().len() == 1 => {
            let c = a.points()[0];
            if c == 0.0 {
                Some(other.clone())
            } else {
                shift(other, c)?
            }
        }
        (RealMeasure::Cauchy { scale: s }, RealMeasure::Cauchy { scale: t }) => Some(RealMeasure::cauchy(s + t)?),
        _ => None,
    })
}

fn shift(m: &RealMeasure, c: f64) -> Result<Option<RealMeasure>> {
    Ok(match m {
        RealMeasure::Atomic(a) => {
            Some(RealMeasure::atomic(a.points().iter().map(|x| x + c).collect(), a.weights().to_vec())?)
        }
        RealMeasure::Grid(g) => {
            let grid = UniformGrid::new(g.grid().min + c, g.grid().max + c, g.grid().len)?;
            let atoms = g
                .atoms()
                .map(|a| crate::measures::Atoms::partial(a.points().iter().map(|x| x + c).collect(), a.weights().to_vec()))
                .transpose()?;
            Some(RealMeasure::Grid(GridDensity::new(grid, g.values().to_vec(), atoms)?))
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{mixed_moments_free, moments_to_cumulants};
    use crate::transforms1d::r_coefficients;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn adding_zero() {
        let m = RealMeasure::free_poisson(0.7).unwrap();
        let z = c(0.4, 0.9);
        let r = subordinators(&m, &RealMeasure::point_mass(0.0), HalfPlanePoint::new(z).unwrap()).unwrap();
        let g = m.g(z).unwrap();
        assert!((r.omega1 - z).norm() < 1e-12);
        assert!((r.omega2 - 1.0 / g).norm() < 1e-12);
        assert!((r.g_sum - g).norm() < 1e-12);
    }

    #[test]
    fn symmetric_sum_and_semicircle_closed_form() {
        let s = RealMeasure::semicircle(1.0).unwrap();
        let s2 = RealMeasure::semicircle(2.0).unwrap();
        for z in [c(0.0, 1.0), c(1.3, 0.01), c(-2.5, 1e-4), c(3.0, -0.2)] {
            let r = subordinators(&s, &s, HalfPlanePoint::new(z).unwrap()).unwrap();
            let mid = (z + 1.0 / r.g_sum) / 2.0;
            assert!((r.omega1 - mid).norm() < 1e-10 && (r.omega2 - mid).norm() < 1e-10, "{z}");
            assert!((r.g_sum - s2.g(z).unwrap()).norm() < 1e-10, "{z}");
            assert!(r.residual <= 1e-10);
        }
    }

    #[test]
    fn residuals_at_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pairs = [
            (RealMeasure::semicircle(1.0).unwrap(), RealMeasure::free_poisson(1.0).unwrap()),
            (RealMeasure::cauchy(1.0).unwrap(), RealMeasure::cauchy(0.5).unwrap()),
            (RealMeasure::free_poisson(0.4).unwrap(), RealMeasure::free_poisson(0.5).unwrap()),
        ];
        for (a, b) in &pairs {
            for _ in 0..50 {
                let z = c(rng.gen_range(-5.0..5.0), rng.gen_range(1e-3..3.0));
                let r = subordinators(a, b, HalfPlanePoint::new(z).unwrap()).unwrap();
                assert!(r.residual <= 1e-10, "{a:?} {b:?} at {z}: {}", r.residual);
                assert!((r.g_sum - a.g(r.omega1).unwrap()).norm() <= 1e-9);
            }
        }
        // Free Poisson rates add.
        let (a, b) = &pairs[2];
        let sum = RealMeasure::free_poisson(0.9).unwrap();
        let z = c(0.7, 0.05);
        let r = subordinators(a, b, HalfPlanePoint::new(z).unwrap()).unwrap();
        assert!((r.g_sum - sum.g(z).unwrap()).norm() < 1e-10);
    }

    #[test]
    fn sum_moments_match_word_expansion() {
        // Far-field Laurent coefficients of G_sum against the free word oracle.
        let a = RealMeasure::semicircle(1.0).unwrap();
        let b = RealMeasure::free_poisson(1.0).unwrap();
        let conv = FreeAdditiveConvolution::of(&a, &b);
        let n = 6;
        let ma: Vec<f64> = (1..=n).map(|k| a.moment(k).unwrap()).collect();
        let mb: Vec<f64> = (1..=n).map(|k| b.moment(k).unwrap()).collect();
        let mut exact = Vec::new();
        for k in 1..=n {
            let mut total = 0.0;
            for bits in 0..(1u32 << k) {
                let word: Vec<u8> = (0..k).map(|i| 1 + ((bits >> i) & 1) as u8).collect();
                total += mixed_moments_free(&ma, &mb, &word).unwrap();
            }
            exact.push(total);
        }
        // Trapezoid on a circle of radius R recovers m_k = (1/2πi)∮ z^k G(z) dz.
        let radius = 12.0;
        let pts = 256;
        for (k, want) in exact.iter().enumerate() {
            let k = k + 1;
            let mut acc = c(0.0, 0.0);
            for j in 0..pts {
                let th = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / pts as f64;
                let z = Complex64::from_polar(radius, th);
                acc += z.powi(k as i32 + 1) * conv.g(z).unwrap();
            }
            let got = acc.re / pts as f64;
            assert!((got - want).abs() < 1e-8 * want.abs().max(1.0), "order {k}: {got} vs {want}");
        }
        let ks = moments_to_cumulants(&exact).unwrap();
        let ra = r_coefficients(&a, n).unwrap();
        let rb = r_coefficients(&b, n).unwrap();
        for i in 0..n {
            assert!((ks[i] - ra[i] - rb[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn derivative_of_sum() {
        let conv = FreeAdditiveConvolution::of(&RealMeasure::semicircle(1.0).unwrap(), &RealMeasure::free_poisson(0.6).unwrap());
        let z = c(0.8, 0.4);
        let h = 1e-6;
        let fd = (conv.g(z + h).unwrap() - conv.g(z - h).unwrap()) / (2.0 * h);
        assert!((conv.g_prime(z).unwrap() - fd).norm() < 1e-6);
    }

    #[test]
    fn exact_shortcuts() {
        let m = RealMeasure::semicircle(1.0).unwrap();
        assert_eq!(free_add_convolve(&RealMeasure::point_mass(0.0), &m).unwrap(), m);
        let c3 = free_add_convolve(&RealMeasure::cauchy(1.0).unwrap(), &RealMeasure::cauchy(2.0).unwrap()).unwrap();
        assert_eq!(c3, RealMeasure::cauchy(3.0).unwrap());
        let shifted = free_add_convolve(&RealMeasure::atomic(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap(), &RealMeasure::point_mass(0.5)).unwrap();
        assert_eq!(shifted.atoms(), vec![(1.5, 0.5), (2.5, 0.5)]);
        assert!(matches!(
            free_add_convolve(&RealMeasure::cauchy(1.0).unwrap(), &m),
            Err(Error::ConvolutionFailed(_))
        ));
    }
}

//! Cauchy transform, its compositional inverse and the R-transform.

use num_complex::Complex64;

use super::{HalfPlanePoint, NEWTON_MAX_STEPS, NEWTON_TOL};
use crate::cumulants::moments_to_cumulants;
use crate::error::{Error, Result};
use crate::measures::{mp_edges, GridDensity, RealMeasure};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Anything that can evaluate a Cauchy transform off the real axis.
pub trait CauchyTransform: Send + Sync {
    /// `G(z) = ∫ 1/(z − x) dμ(x)` for `Im z ≠ 0`.
    fn g(&self, z: Complex64) -> Result<Complex64>;

    /// `G'(z)`.
    fn g_prime(&self, z: Complex64) -> Result<Complex64>;

    /// Length scale of the law, used to pick starting points far from the axis.
    fn scale(&self) -> f64;

    /// Interval carrying the law, `None` for heavy tails.
    fn support_hint(&self) -> Option<(f64, f64)>;

    /// Atoms `(location, mass)` known in advance.
    fn atom_hint(&self) -> Vec<(f64, f64)>;
}

/// `G_μ(z)` at a point off the real axis.
pub fn cauchy_g(m: &RealMeasure, z: HalfPlanePoint) -> Complex64 {
    g_closed(m, z.value())
}

// Product of principal roots: analytic off the cut [lo, hi] and ~ z at infinity.
fn edge_root(z: Complex64, lo: f64, hi: f64) -> Complex64 {
    (z - lo).sqrt() * (z - hi).sqrt()
}

fn g_closed(m: &RealMeasure, z: Complex64) -> Complex64 {
    match m {
        RealMeasure::Semicircle { variance } => {
            let r = 2.0 * variance.sqrt();
            (z - edge_root(z, -r, r)) / (2.0 * variance)
        }
        RealMeasure::Cauchy { scale } => {
            if z.im > 0.0 {
                1.0 / (z + I * scale)
            } else {
                1.0 / (z - I * scale)
            }
        }
        RealMeasure::FreePoisson { rate } => {
            let (a, b) = mp_edges(*rate);
            (z + 1.0 - rate - edge_root(z, a, b)) / (2.0 * z)
        }
        RealMeasure::Atomic(atoms) => atoms.iter().map(|(x, w)| w / (z - x)).sum(),
        RealMeasure::Grid(g) => grid_g(g, z).0,
    }
}

fn g_prime_closed(m: &RealMeasure, z: Complex64) -> Complex64 {
    match m {
        RealMeasure::Semicircle { variance } => {
            let r = 2.0 * variance.sqrt();
            (1.0 - z / edge_root(z, -r, r)) / (2.0 * variance)
        }
        RealMeasure::Cauchy { .. } => {
            let g = g_closed(m, z);
            -g * g
        }
        RealMeasure::FreePoisson { rate } => {
            let (a, b) = mp_edges(*rate);
            let s = edge_root(z, a, b);
            let ds = (z - (1.0 + rate)) / s;
            ((1.0 - ds) * z - (z + 1.0 - rate - s)) / (2.0 * z * z)
        }
        RealMeasure::Atomic(atoms) => atoms.iter().map(|(x, w)| -w / ((z - x) * (z - x))).sum(),
        RealMeasure::Grid(g) => grid_g(g, z).1,
    }
}

/// Exact transform of the piecewise-linear interpolant plus atoms, with derivative.
fn grid_g(d: &GridDensity, z: Complex64) -> (Complex64, Complex64) {
    let grid = d.grid();
    let f = d.values();
    let h = grid.step();
    let mut g = Complex64::new(0.0, 0.0);
    let mut dg = Complex64::new(0.0, 0.0);
    let mut x0 = grid.point(0);
    let mut l0 = (z - x0).ln();
    for k in 0..grid.len - 1 {
        let x1 = grid.point(k + 1);
        let l1 = (z - x1).ln();
        let s = (f[k + 1] - f[k]) / h;
        let fz = f[k] + s * (z - x0);
        g += fz * (l0 - l1) - s * h;
        dg += s * (l0 - l1) + fz * (1.0 / (z - x0) - 1.0 / (z - x1));
        x0 = x1;
        l0 = l1;
    }
    if let Some(atoms) = d.atoms() {
        for (x, w) in atoms.iter() {
            g += w / (z - x);
            dg -= w / ((z - x) * (z - x));
        }
    }
    (g, dg)
}

fn check_off_axis(z: Complex64) -> Result<()> {
    if z.im == 0.0 || !z.im.is_finite() || !z.re.is_finite() {
        return Err(Error::InvalidArgument(format!("{z} is not off the real axis")));
    }
    Ok(())
}

impl CauchyTransform for RealMeasure {
    fn g(&self, z: Complex64) -> Result<Complex64> {
        check_off_axis(z)?;
        Ok(g_closed(self, z))
    }

    fn g_prime(&self, z: Complex64) -> Result<Complex64> {
        check_off_axis(z)?;
        Ok(g_prime_closed(self, z))
    }

    fn scale(&self) -> f64 {
        match self {
            RealMeasure::Cauchy { scale } => *scale,
            _ => {
                let (lo, hi) = self.support().expect("bounded law");
                lo.abs().max(hi.abs()).max(1e-3)
            }
        }
    }

    fn support_hint(&self) -> Option<(f64, f64)> {
        self.support()
    }

    fn atom_hint(&self) -> Vec<(f64, f64)> {
        self.atoms()
    }
}

/// Mean of a law when it has one.
fn mean_of(m: &RealMeasure) -> f64 {
    m.moment(1).unwrap_or(0.0)
}

/// `K(u)`, the inverse of `G` near `u`: closed forms for named families and
/// single atoms, Newton iteration otherwise.
pub fn inverse_k(m: &RealMeasure, u: Complex64) -> Result<Complex64> {
    if u == Complex64::new(0.0, 0.0) || !(u.re.is_finite() && u.im.is_finite()) {
        return Err(Error::InvalidArgument(format!("cannot invert G at {u}")));
    }
    match m {
        RealMeasure::Semicircle { variance } => Ok(1.0 / u + variance * u),
        RealMeasure::FreePoisson { rate } => Ok(1.0 / u + rate / (1.0 - u)),
        RealMeasure::Cauchy { scale } => {
            if u.im > 0.0 {
                Ok(1.0 / u + I * scale)
            } else if u.im < 0.0 {
                Ok(1.0 / u - I * scale)
            } else {
                Err(Error::InvalidArgument("Cauchy K needs Im u ≠ 0".into()))
            }
        }
        RealMeasure::Atomic(a) if a.points().len() == 1 => Ok(1.0 / u + a.points()[0]),
        _ => inverse_k_numeric(m, u, 1.0 / u + mean_of(m)),
    }
}

/// Newton solve of `G(K) = u` from `start`, keeping `Im K` opposite to `Im u`.
pub fn inverse_k_numeric(t: &dyn CauchyTransform, u: Complex64, start: Complex64) -> Result<Complex64> {
    if u.im == 0.0 {
        return Err(Error::InvalidArgument("K is only inverted off the real axis".into()));
    }
    let side = -u.im.signum();
    let mut k = start;
    if k.im * side <= 0.0 {
        k.im = side * k.im.abs().max(1e-3);
    }
    for _ in 0..NEWTON_MAX_STEPS {
        let r = t.g(k)? - u;
        if r.norm() <= NEWTON_TOL * u.norm().max(1.0) {
            return Ok(k);
        }
        let step = r / t.g_prime(k)?;
        let mut lambda = 1.0;
        let mut next = k - step;
        let mut halvings = 0;
        while next.im * side <= 0.0 {
            halvings += 1;
            if halvings > 40 {
                return Err(Error::DomainEscape(format!("Newton iterate for K({u}) left the half-plane")));
            }
            lambda *= 0.5;
            next = k - step * lambda;
        }
        k = next;
    }
    let r = (t.g(k)? - u).norm();
    if r <= 1e-10 {
        Ok(k)
    } else {
        Err(Error::InversionFailed(format!("K({u}) did not converge, residual {r:e}")))
    }
}

/// `R(u) = K(u) − 1/u`.
pub fn r_transform(m: &RealMeasure, u: Complex64) -> Result<Complex64> {
    Ok(inverse_k(m, u)? - 1.0 / u)
}

/// Free cumulants `κ_1..κ_order`.
pub fn r_coefficients(m: &RealMeasure, order: usize) -> Result<Vec<f64>> {
    let mut k = vec![0.0; order];
    match m {
        RealMeasure::Semicircle { variance } => {
            if order >= 2 {
                k[1] = *variance;
            }
        }
        RealMeasure::FreePoisson { rate } => k.fill(*rate),
        RealMeasure::Atomic(a) if a.points().len() == 1 => {
            if order >= 1 {
                k[0] = a.points()[0];
            }
        }
        _ => {
            let moments = (1..=order).map(|n| m.moment_with_limit(n, order)).collect::<Result<Vec<_>>>()?;
            k = moments_to_cumulants(&moments)?;
        }
    }
    Ok(k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::UniformGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hp(re: f64, im: f64) -> HalfPlanePoint {
        HalfPlanePoint::new(c(re, im)).unwrap()
    }

    fn named() -> Vec<RealMeasure> {
        vec![
            RealMeasure::semicircle(1.0).unwrap(),
            RealMeasure::semicircle(2.5).unwrap(),
            RealMeasure::free_poisson(0.4).unwrap(),
            RealMeasure::free_poisson(2.0).unwrap(),
            RealMeasure::cauchy(0.7).unwrap(),
            RealMeasure::atomic(vec![-1.0, 0.5, 2.0], vec![0.2, 0.5, 0.3]).unwrap(),
        ]
    }

    // Adaptive Simpson on the density, independent of the closed forms.
    fn quad_g(m: &RealMeasure, z: Complex64, lo: f64, hi: f64) -> Complex64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let mut acc = c(0.0, 0.0);
        for k in 0..=n {
            let x = lo + k as f64 * h;
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * m.density_at(x) / (z - x);
        }
        acc * h / 3.0 + m.atoms().iter().map(|(x, w)| w / (z - x)).sum::<Complex64>()
    }

    #[test]
    fn closed_form_values() {
        let z = hp(0.3, 0.8);
        assert!((cauchy_g(&RealMeasure::point_mass(0.0), z) - 1.0 / z.value()).norm() < 1e-15);
        let s = cauchy_g(&RealMeasure::semicircle(1.0).unwrap(), hp(0.0, 2.0));
        assert!((s - c(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-14);
        let ca = cauchy_g(&RealMeasure::cauchy(1.0).unwrap(), hp(0.0, 1.0));
        assert!((ca - c(0.0, -0.5)).norm() < 1e-15);
    }

    #[test]
    fn closed_forms_agree_with_quadrature() {
        let cases = [
            (RealMeasure::semicircle(1.0).unwrap(), -2.0, 2.0),
            (RealMeasure::free_poisson(0.4).unwrap(), 0.0, 3.0),
            (RealMeasure::free_poisson(2.0).unwrap(), 0.0, 6.0),
        ];
        for (m, lo, hi) in cases {
            for z in [c(0.5, 0.7), c(-1.0, 0.3), c(2.0, -0.5), c(0.1, 2.0)] {
                let q = quad_g(&m, z, lo, hi);
                assert!((m.g(z).unwrap() - q).norm() < 1e-6, "{m:?} at {z}");
            }
        }
    }

    #[test]
    fn derivatives_match_differences() {
        let mut all = named();
        let grid = UniformGrid::new(-2.0, 2.0, 401).unwrap();
        all.push(RealMeasure::semicircle(1.0).unwrap().discretize(grid).unwrap());
        for m in &all {
            for z in [c(0.4, 0.6), c(-1.5, -0.2), c(3.0, 1.0)] {
                let h = 1e-6;
                let fd = (m.g(z + h).unwrap() - m.g(z - h).unwrap()) / (2.0 * h);
                let d = m.g_prime(z).unwrap();
                assert!((fd - d).norm() < 1e-6 * d.norm().max(1.0), "{m:?} at {z}: {fd} vs {d}");
            }
        }
    }

    #[test]
    fn grid_transform_tracks_closed_form() {
        let s = RealMeasure::semicircle(1.0).unwrap();
        let d = s.discretize(UniformGrid::new(-2.0, 2.0, 4001).unwrap()).unwrap();
        for z in [c(0.0, 0.01), c(1.9, 0.05), c(5.0, 3.0)] {
            assert!((d.g(z).unwrap() - s.g(z).unwrap()).norm() < 2e-3, "{z}");
        }
    }

    #[test]
    fn half_plane_mapping_and_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in named() {
            for _ in 0..200 {
                let z = c(rng.gen_range(-4.0..4.0), rng.gen_range(0.05..4.0));
                let g = cauchy_g(&m, hp(z.re, z.im));
                assert!(g.im < 0.0);
                assert!((cauchy_g(&m, hp(z.re, -z.im)) - g.conj()).norm() < 1e-13);
                let k = inverse_k(&m, g).unwrap();
                assert!(k.im > 0.0, "{m:?} at {z}");
                assert!((cauchy_g(&m, HalfPlanePoint::new(k).unwrap()) - g).norm() <= 1e-10);
            }
        }
    }

    #[test]
    fn inverse_closed_forms() {
        let u = c(0.2, -0.3);
        assert!((inverse_k(&RealMeasure::point_mass(0.0), u).unwrap() - 1.0 / u).norm() < 1e-15);
        let s = inverse_k(&RealMeasure::semicircle(1.0).unwrap(), u).unwrap();
        assert!((s - (1.0 / u + u)).norm() < 1e-15);
        let up = c(0.2, 0.3);
        let k = inverse_k(&RealMeasure::cauchy(2.0).unwrap(), up).unwrap();
        assert!((k - (1.0 / up + c(0.0, 2.0))).norm() < 1e-15);
        let numeric = inverse_k_numeric(&RealMeasure::semicircle(1.0).unwrap(), u, 1.0 / u).unwrap();
        assert!((numeric - s).norm() < 1e-10);
    }

    #[test]
    fn cumulant_coefficients() {
        assert_eq!(r_coefficients(&RealMeasure::semicircle(3.0).unwrap(), 4).unwrap(), vec![0.0, 3.0, 0.0, 0.0]);
        assert_eq!(r_coefficients(&RealMeasure::point_mass(1.5), 2).unwrap(), vec![1.5, 0.0]);
        assert_eq!(r_coefficients(&RealMeasure::free_poisson(0.3).unwrap(), 3).unwrap(), vec![0.3; 3]);
        assert!(matches!(r_coefficients(&RealMeasure::cauchy(1.0).unwrap(), 2), Err(Error::MomentUndefined(_))));
        // Atomic laws go through the moment route; compare with the series of K.
        let m = RealMeasure::atomic(vec![-1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let k = r_coefficients(&m, 4).unwrap();
        let u = c(0.02, -0.01);
        let series: Complex64 = k.iter().enumerate().map(|(n, v)| v * u.powi(n as i32)).sum();
        assert!((r_transform(&m, u).unwrap() - series).norm() < 1e-5);
    }
}

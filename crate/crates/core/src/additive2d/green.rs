//! Two-variable Green's functions `G(z, w) = φ((z − X)⁻¹(w − Y)⁻¹)`.
//!
//! Every evaluator factors as a per-axis preparation followed by a cheap
//! combination, so tensor-grid sweeps solve each subordination problem once
//! per axis point instead of once per grid cell.

use num_complex::Complex64;
use std::sync::Arc;

use crate::cumulants::CumulantTable;
use crate::error::{Error, Result};
use crate::measures::RealMeasure;
use crate::transforms1d::{inverse_k, CauchyTransform, FreeAdditiveConvolution};

/// How an evaluator was built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Increment formula for `(X, X + Y)` with `Y` free from `X`.
    IncrementFree,
    /// Bi-free additive subordination of two pairs.
    BifreeSum,
    /// Closed form of a named pair.
    ClosedForm,
    /// Reduced partial R-transform given as a cumulant series.
    CumulantSeries,
}

/// Below this distance the increment formula's denominator is a pole hit.
pub const POLE_TOL: f64 = 1e-14;

/// Below this distance, relative to the distance of `z` from the real axis,
/// the increment formula switches to its derivative limit.
pub const NEAR_POLE: f64 = 1e-6;

/// Imaginary shift applied to `w` once when a pole is hit.
pub const POLE_SHIFT: f64 = 1e-9;

/// Truncated series `Σ_{n,m ≥ 1, n+m ≤ order} c_{n,m} z^n w^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateSeries {
    order: usize,
    // Set for polynomials given in full, which are never truncated.
    exact: bool,
    // coeffs[n][m], unused when n or m is 0.
    coeffs: Vec<Vec<f64>>,
}

impl BivariateSeries {
    pub fn from_fn<F: FnMut(usize, usize) -> f64>(order: usize, mut f: F) -> Self {
        let coeffs = (0..=order)
            .map(|n| (0..=order - n).map(|m| if n > 0 && m > 0 { f(n, m) } else { 0.0 }).collect())
            .collect();
        Self { order, exact: false, coeffs }
    }

    /// A polynomial given in full up to total degree `degree`.
    pub fn polynomial<F: FnMut(usize, usize) -> f64>(degree: usize, f: F) -> Self {
        Self { exact: true, ..Self::from_fn(degree, f) }
    }

    pub fn zero() -> Self {
        Self::polynomial(2, |_, _| 0.0)
    }

    /// Mixed entries `κ_{n,m}`, `n, m ≥ 1`, of a cumulant table.
    pub fn from_table(t: &CumulantTable<f64>) -> Self {
        Self::from_fn(t.order(), |n, m| t.get(n, m).expect("within cutoff"))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coeff(&self, n: usize, m: usize) -> f64 {
        if n + m <= self.order {
            self.coeffs[n][m]
        } else {
            0.0
        }
    }

    // Highest total degree with a nonzero coefficient.
    fn degree(&self) -> usize {
        (2..=self.order)
            .rev()
            .find(|k| (1..*k).any(|n| self.coeffs[n][k - n] != 0.0))
            .unwrap_or(0)
    }

    /// Sums the series, rejecting points where the last two degrees still
    /// contribute more than `1e-12` relative to the total.
    pub fn eval(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        let degree = self.degree();
        let mut total = Complex64::new(0.0, 0.0);
        let mut tail = 0.0;
        let mut zn = Complex64::new(1.0, 0.0);
        for n in 1..self.order {
            zn *= z;
            let mut wm = Complex64::new(1.0, 0.0);
            for m in 1..=self.order - n {
                wm *= w;
                let c = self.coeffs[n][m];
                if c == 0.0 {
                    continue;
                }
                let term = c * zn * wm;
                total += term;
                if n + m + 1 >= self.order {
                    tail += term.norm();
                }
            }
        }
        // A series that stops before the cutoff is a polynomial and exact.
        if !self.exact && degree + 1 >= self.order && tail > 1e-12 * total.norm().max(1.0) {
            return Err(Error::SeriesDomain(format!(
                "series at ({z}, {w}) has tail {tail:e} at cutoff {}",
                self.order
            )));
        }
        Ok(total)
    }
}

/// Per-axis values cached for [`JointGreenEvaluator::combine`].
#[derive(Debug, Clone, PartialEq)]
pub struct AxisPoint {
    pub at: Complex64,
    vals: [Complex64; 3],
    inner: Vec<AxisPoint>,
}

impl AxisPoint {
    fn leaf(at: Complex64, vals: [Complex64; 3]) -> Self {
        Self { at, vals, inner: Vec::new() }
    }
}

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Clone)]
enum KMap {
    Measure(RealMeasure),
    Subordinated(FreeAdditiveConvolution),
}

#[derive(Clone)]
enum Kind {
    Independent,
    Gaussian { c: f64 },
    Series(BivariateSeries),
    Increment(KMap),
    BifreeSum { g1: Box<JointGreenEvaluator>, g2: Box<JointGreenEvaluator>, sx: FreeAdditiveConvolution, sy: FreeAdditiveConvolution },
}

/// Evaluator of a two-variable Green's function together with the
/// Cauchy transforms of its marginals.
#[derive(Clone)]
pub struct JointGreenEvaluator {
    route: Route,
    kind: Kind,
    x: Arc<dyn CauchyTransform>,
    y: Arc<dyn CauchyTransform>,
}

impl std::fmt::Debug for JointGreenEvaluator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JointGreenEvaluator").field("route", &self.route).finish_non_exhaustive()
    }
}

impl JointGreenEvaluator {
    pub fn route(&self) -> Route {
        self.route
    }

    /// Cauchy transform of the first coordinate.
    pub fn marginal_x(&self) -> Arc<dyn CauchyTransform> {
        self.x.clone()
    }

    /// Cauchy transform of the second coordinate.
    pub fn marginal_y(&self) -> Arc<dyn CauchyTransform> {
        self.y.clone()
    }

    /// `G(z, w)` for `z, w` off the real axis.
    pub fn eval(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        self.combine(&self.prep_x(z)?, &self.prep_y(w)?)
    }

    pub fn prep_x(&self, z: Complex64) -> Result<AxisPoint> {
        match &self.kind {
            Kind::BifreeSum { g1, g2, sx, .. } => {
                let r = sx.subordinate(z)?;
                Ok(AxisPoint {
                    at: z,
                    vals: [r.omega1, r.omega2, r.g_sum],
                    inner: vec![g1.prep_x(r.omega1)?, g2.prep_x(r.omega2)?],
                })
            }
            _ => Ok(AxisPoint::leaf(z, [self.x.g(z)?, ZERO, ZERO])),
        }
    }

    pub fn prep_y(&self, w: Complex64) -> Result<AxisPoint> {
        match &self.kind {
            Kind::BifreeSum { g1, g2, sy, .. } => {
                let r = sy.subordinate(w)?;
                Ok(AxisPoint {
                    at: w,
                    vals: [r.omega1, r.omega2, r.g_sum],
                    inner: vec![g1.prep_y(r.omega1)?, g2.prep_y(r.omega2)?],
                })
            }
            Kind::Increment(KMap::Measure(mx)) => {
                let gs = self.y.g(w)?;
                Ok(AxisPoint::leaf(w, [gs, inverse_k(mx, gs)?, ZERO]))
            }
            Kind::Increment(KMap::Subordinated(conv)) => {
                let r = conv.subordinate(w)?;
                Ok(AxisPoint::leaf(w, [r.g_sum, r.omega1, ZERO]))
            }
            _ => Ok(AxisPoint::leaf(w, [self.y.g(w)?, ZERO, ZERO])),
        }
    }

    pub fn combine(&self, px: &AxisPoint, py: &AxisPoint) -> Result<Complex64> {
        let gx = px.vals[0];
        match &self.kind {
            Kind::Independent => Ok(gx * py.vals[0]),
            Kind::Gaussian { c } => {
                let p = gx * py.vals[0];
                Ok(p / (1.0 - c * p))
            }
            Kind::Series(s) => {
                let gy = py.vals[0];
                Ok(gx * gy / (1.0 - s.eval(gx, gy)?))
            }
            Kind::Increment(_) => {
                let z = px.at;
                let mut py = py.clone();
                if (z - py.vals[1]).norm() < POLE_TOL {
                    let w = py.at;
                    py = self.prep_y(w + Complex64::new(0.0, POLE_SHIFT * w.im.signum()))?;
                    if (z - py.vals[1]).norm() < POLE_TOL {
                        return Err(Error::PoleProximity { re: z.re, im: z.im });
                    }
                }
                let (gs, k) = (py.vals[0], py.vals[1]);
                let den = z - k;
                // The formula is a difference quotient of G_X between z and k.
                if den.norm() < NEAR_POLE * z.im.abs().min(k.im.abs()) {
                    Ok(-self.x.g_prime(0.5 * (z + k))?)
                } else {
                    Ok(-(gx - gs) / den)
                }
            }
            Kind::BifreeSum { g1, g2, .. } => {
                let a = g1.combine(&px.inner[0], &py.inner[0])?;
                let b = g2.combine(&px.inner[1], &py.inner[1])?;
                Ok(1.0 / (1.0 / a + 1.0 / b - 1.0 / (px.vals[2] * py.vals[2])))
            }
        }
    }
}

fn arc(m: &RealMeasure) -> Arc<dyn CauchyTransform> {
    Arc::new(m.clone())
}

/// `G = G_X G_Y`: a classically independent pair.
pub fn independent_green(mx: &RealMeasure, my: &RealMeasure) -> JointGreenEvaluator {
    JointGreenEvaluator { route: Route::ClosedForm, kind: Kind::Independent, x: arc(mx), y: arc(my) }
}

/// Bi-free Gaussian pair with covariance `(a, c; c, b)`:
/// `G(Z, W) = G_a(Z) G_b(W) / (1 − c G_a(Z) G_b(W))`.
pub fn gaussian_green(a: f64, b: f64, c: f64) -> Result<JointGreenEvaluator> {
    super::closed::check_gaussian(a, b, c)?;
    Ok(JointGreenEvaluator {
        route: Route::ClosedForm,
        kind: Kind::Gaussian { c },
        x: arc(&RealMeasure::semicircle(a)?),
        y: arc(&RealMeasure::semicircle(b)?),
    })
}

/// Pair `(X, X + Y)` with `Y` free from `X`, given the laws of `X` and `X + Y`:
/// `G(z, w) = −(G_X(z) − G_S(w)) / (z − K_X(G_S(w)))`.
pub fn green2_increment(m_x: &RealMeasure, m_sum: &RealMeasure) -> JointGreenEvaluator {
    JointGreenEvaluator {
        route: Route::IncrementFree,
        kind: Kind::Increment(KMap::Measure(m_x.clone())),
        x: arc(m_x),
        y: arc(m_sum),
    }
}

/// [`green2_increment`] when only the law of the increment is known; the
/// sum is evaluated by subordination and `K_X(G_S(w))` is its subordination
/// function.
pub fn green2_increment_of(m_x: &RealMeasure, m_y: &RealMeasure) -> JointGreenEvaluator {
    let conv = FreeAdditiveConvolution::of(m_x, m_y);
    JointGreenEvaluator {
        route: Route::IncrementFree,
        kind: Kind::Increment(KMap::Subordinated(conv.clone())),
        x: arc(m_x),
        y: Arc::new(conv),
    }
}

/// Evaluator from a reduced partial R-transform:
/// `G(Z, W) = G_X(Z) G_Y(W) / (1 − R̃(G_X(Z), G_Y(W)))`.
pub fn green2_from_reduced_r(m_x: &RealMeasure, m_y: &RealMeasure, r_tilde: BivariateSeries) -> JointGreenEvaluator {
    JointGreenEvaluator { route: Route::CumulantSeries, kind: Kind::Series(r_tilde), x: arc(m_x), y: arc(m_y) }
}

/// Reduced partial R-transform of `(X, X + Y)`: `κ_{n,m} = κ_{n+m}(X)`.
pub fn increment_reduced_r(m_x: &RealMeasure, order: usize) -> Result<BivariateSeries> {
    let k = crate::transforms1d::r_coefficients(m_x, order)?;
    Ok(BivariateSeries::from_fn(order, |n, m| k[n + m - 1]))
}

/// Evaluator of the pair sum `(X_1 + X_2, Y_1 + Y_2)` of two bi-free pairs.
pub fn bifree_add_convolve(g1: &JointGreenEvaluator, g2: &JointGreenEvaluator) -> JointGreenEvaluator {
    let sx = FreeAdditiveConvolution::new(g1.marginal_x(), g2.marginal_x());
    let sy = FreeAdditiveConvolution::new(g1.marginal_y(), g2.marginal_y());
    JointGreenEvaluator {
        route: Route::BifreeSum,
        x: Arc::new(sx.clone()),
        y: Arc::new(sy.clone()),
        kind: Kind::BifreeSum { g1: Box::new(g1.clone()), g2: Box::new(g2.clone()), sx, sy },
    }
}

/// Joint moments `τ(X^n Y^m)`, `n + m ≤ order`, by trapezoid rules on two
/// circles of radius `radius` enclosing the supports.
pub fn joint_moments_by_contour(
    g: &JointGreenEvaluator,
    order: usize,
    radius: f64,
    points: usize,
) -> Result<crate::cumulants::MomentTable<f64>> {
    use std::f64::consts::PI;
    let nodes: Vec<Complex64> =
        (0..points).map(|j| Complex64::from_polar(radius, 2.0 * PI * (j as f64 + 0.5) / points as f64)).collect();
    let px = nodes.iter().map(|z| g.prep_x(*z)).collect::<Result<Vec<_>>>()?;
    let py = nodes.iter().map(|w| g.prep_y(*w)).collect::<Result<Vec<_>>>()?;
    let mut vals = vec![vec![ZERO; points]; points];
    for (i, a) in px.iter().enumerate() {
        for (j, b) in py.iter().enumerate() {
            vals[i][j] = g.combine(a, b)?;
        }
    }
    let scale = (points * points) as f64;
    crate::cumulants::MomentTable::from_fn(order, |n, m| {
        let mut acc = ZERO;
        for (i, z) in nodes.iter().enumerate() {
            let zn = z.powi(n as i32 + 1);
            for (j, w) in nodes.iter().enumerate() {
                acc += zn * w.powi(m as i32 + 1) * vals[i][j];
            }
        }
        acc.re / scale
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{joint_moments_from_table, ratio, CumulantTable};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn increment_special_cases() {
        let m = RealMeasure::free_poisson(0.7).unwrap();
        let same = green2_increment(&m, &m);
        for (z, w) in [(c(0.3, 0.5), c(1.2, 0.4)), (c(2.0, 0.1), c(-0.5, -0.3))] {
            let want = (m.g(z).unwrap() - m.g(w).unwrap()) / (w - z);
            assert!((same.eval(z, w).unwrap() - want).norm() < 1e-10, "{z} {w}");
        }
        let s = RealMeasure::semicircle(1.0).unwrap();
        let shift = green2_increment(&RealMeasure::point_mass(0.7), &s);
        let (z, w) = (c(0.2, 0.3), c(-1.0, 0.6));
        assert!((shift.eval(z, w).unwrap() - s.g(w).unwrap() / (z - 0.7)).norm() < 1e-12);
        let cauchy = green2_increment(&RealMeasure::cauchy(1.0).unwrap(), &RealMeasure::cauchy(2.0).unwrap());
        let want = 1.0 / ((z + c(0.0, 1.0)) * (w + c(0.0, 2.0)));
        assert!((cauchy.eval(z, w).unwrap() - want).norm() < 1e-14);
        let wl = c(-1.0, -0.6);
        let want = ((z - wl) + c(0.0, 3.0)) / ((z + c(0.0, 1.0)) * (wl - c(0.0, 2.0)) * ((z - wl) + c(0.0, 1.0)));
        assert!((cauchy.eval(z, wl).unwrap() - want).norm() < 1e-14);
    }

    #[test]
    fn pole_is_removable() {
        let m = RealMeasure::free_poisson(0.7).unwrap();
        let g = green2_increment(&m, &m);
        let w = c(1.2, 0.4);
        let exact = -m.g_prime(w).unwrap();
        // The pole rule moves w by 1e-9 i, which bounds the accuracy.
        assert!((g.eval(w, w).unwrap() - exact).norm() < 1e-8);
        assert!((g.eval(w + c(1e-9, 0.0), w).unwrap() - exact).norm() < 1e-8);
    }

    #[test]
    fn asymptotics_and_symmetry() {
        let routes = [
            green2_increment(&RealMeasure::semicircle(1.0).unwrap(), &RealMeasure::semicircle(2.0).unwrap()),
            gaussian_green(1.0, 2.0, 0.7).unwrap(),
            green2_increment_of(&RealMeasure::free_poisson(0.4).unwrap(), &RealMeasure::free_poisson(0.5).unwrap()),
        ];
        for g in &routes {
            let z = c(0.0, 1e3);
            let v = g.eval(z, z).unwrap() * z * z;
            assert!((v - 1.0).norm() < 1e-2, "{:?}: {v}", g.route());
            let w = c(0.0, 1e3);
            let zf = c(0.4, 0.3);
            let lim = g.eval(zf, w).unwrap() * w;
            assert!((lim - g.marginal_x().g(zf).unwrap()).norm() < 1e-2 * lim.norm());
            let (z, w) = (c(0.3, 0.4), c(-0.8, 0.2));
            let lhs = g.eval(z.conj(), w).unwrap();
            let rhs = g.eval(z, w.conj()).unwrap().conj();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn series_route() {
        let s = RealMeasure::semicircle(1.0).unwrap();
        let indep = green2_from_reduced_r(&s, &s, BivariateSeries::zero());
        let (z, w) = (c(0.5, 0.5), c(-0.4, -0.9));
        assert!((indep.eval(z, w).unwrap() - s.g(z).unwrap() * s.g(w).unwrap()).norm() < 1e-15);

        let cc = 0.4;
        let gauss = green2_from_reduced_r(&s, &s, BivariateSeries::polynomial(2, |_, _| cc));
        let (u, v) = (c(0.1, -0.2), c(0.15, -0.1));
        let got = gauss.eval(inverse_k(&s, u).unwrap(), inverse_k(&s, v).unwrap()).unwrap();
        assert!((got - u * v / (1.0 - cc * u * v)).norm() < 1e-12);

        let p = RealMeasure::free_poisson(0.4).unwrap();
        let series = increment_reduced_r(&p, 8).unwrap();
        let far = green2_from_reduced_r(&p, &p, series);
        assert!(matches!(far.eval(c(0.5, 0.5), c(0.5, 0.5)), Err(Error::SeriesDomain(_))));
    }

    #[test]
    fn routes_agree_in_far_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pairs = [
            (RealMeasure::semicircle(1.0).unwrap(), RealMeasure::semicircle(1.0).unwrap()),
            (RealMeasure::free_poisson(0.4).unwrap(), RealMeasure::free_poisson(0.5).unwrap()),
        ];
        for (mx, my) in &pairs {
            let conv = green2_increment_of(mx, my);
            let sum = match (mx, my) {
                (RealMeasure::Semicircle { variance: a }, RealMeasure::Semicircle { variance: b }) => {
                    RealMeasure::semicircle(a + b).unwrap()
                }
                (RealMeasure::FreePoisson { rate: a }, RealMeasure::FreePoisson { rate: b }) => {
                    RealMeasure::free_poisson(a + b).unwrap()
                }
                _ => unreachable!(),
            };
            let analytic = green2_increment(mx, &sum);
            let series = green2_from_reduced_r(mx, &sum, increment_reduced_r(mx, 120).unwrap());
            for _ in 0..20 {
                let z = Complex64::from_polar(rng.gen_range(3.0..10.0), rng.gen_range(0.4..2.7));
                let w = Complex64::from_polar(rng.gen_range(3.0..10.0), rng.gen_range(0.4..2.7));
                let a = analytic.eval(z, w).unwrap();
                assert!((a - series.eval(z, w).unwrap()).norm() < 1e-8);
                assert!((a - conv.eval(z, w).unwrap()).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn bifree_sum_examples() {
        let g1 = gaussian_green(1.0, 2.0, 0.5).unwrap();
        let zero = independent_green(&RealMeasure::point_mass(0.0), &RealMeasure::point_mass(0.0));
        let same = bifree_add_convolve(&g1, &zero);
        let g2 = gaussian_green(0.5, 1.0, -0.2).unwrap();
        let sum = bifree_add_convolve(&g1, &g2);
        let want = gaussian_green(1.5, 3.0, 0.3).unwrap();
        for (z, w) in [(c(0.3, 0.5), c(1.0, 0.8)), (c(-1.5, 0.2), c(0.4, -0.6)), (c(2.5, -1.0), c(3.0, 0.3))] {
            assert!((same.eval(z, w).unwrap() - g1.eval(z, w).unwrap()).norm() < 1e-10);
            assert!((sum.eval(z, w).unwrap() - want.eval(z, w).unwrap()).norm() < 1e-6);
        }
    }

    #[test]
    fn contour_moments_match_cumulant_tables() {
        let g1 = gaussian_green(1.0, 1.0, 0.5).unwrap();
        let p = RealMeasure::free_poisson(0.3).unwrap();
        let g2 = green2_increment_of(&p, &RealMeasure::free_poisson(0.2).unwrap());
        let sum = bifree_add_convolve(&g1, &g2);
        let t1 = CumulantTable::bifree_gaussian(ratio(1, 1), ratio(1, 1), ratio(1, 2), 4).unwrap();
        let t2 = CumulantTable::free_poisson_pair(ratio(3, 10), ratio(1, 2), 4).unwrap();
        let exact = joint_moments_from_table(&t1.add(&t2).unwrap()).unwrap().to_f64();
        let got = joint_moments_by_contour(&sum, 4, 8.0, 96).unwrap();
        for n in 0..=4 {
            for m in 0..=4 - n {
                let (a, b) = (got.get(n, m).unwrap(), exact.get(n, m).unwrap());
                assert!((a - b).abs() < 1e-9, "({n},{m}): {a} vs {b}");
            }
        }
    }
}

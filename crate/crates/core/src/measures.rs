//! One-variable spectral distributions on the real line and on the unit circle.
//!
//! Named families carry closed forms for moments and densities; gridded
//! measures fall back to trapezoid quadrature. Circle densities are taken with
//! respect to normalized Haar measure `dθ/2π`, so the uniform law has density 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;

/// Default cutoff for moment queries.
pub const MAX_MOMENT_ORDER: usize = 16;

/// Tolerance on the total mass of atomic parts.
pub const ATOM_MASS_TOL: f64 = 1e-12;

/// Tolerance on the total mass of gridded densities.
pub const GRID_MASS_TOL: f64 = 1e-6;

/// Finite collection of weighted points.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Atoms {
    /// Probability atoms: nonnegative weights summing to one.
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let atoms = Self::partial(points, weights)?;
        let total = atoms.mass();
        if (total - 1.0).abs() > ATOM_MASS_TOL {
            return Err(Error::InvalidMeasure(format!("atom weights sum to {total}, not 1")));
        }
        Ok(atoms)
    }

    /// Atoms carrying only part of a measure's mass.
    pub fn partial(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::InvalidMeasure("atom points and weights differ in length".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidMeasure("atom location is not finite".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure("atom weights must be nonnegative".into()));
        }
        Ok(Self { points, weights })
    }

    pub fn point(at: f64) -> Self {
        Self { points: vec![at], weights: vec![1.0] }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Density sampled on a uniform grid, optionally with an atomic part.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: UniformGrid,
    values: Vec<f64>,
    atoms: Option<Atoms>,
}

impl GridDensity {
    /// Checks that trapezoid mass plus atom mass equals one within [`GRID_MASS_TOL`].
    pub fn new(grid: UniformGrid, values: Vec<f64>, atoms: Option<Atoms>) -> Result<Self> {
        let g = Self::unchecked(grid, values, atoms)?;
        let mass = g.total_mass();
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidMeasure(format!("grid density has mass {mass}, not 1")));
        }
        Ok(g)
    }

    /// Rescales the continuous part so that the total mass is one.
    pub fn normalized(grid: UniformGrid, values: Vec<f64>, atoms: Option<Atoms>) -> Result<Self> {
        let mut g = Self::unchecked(grid, values, atoms)?;
        let atom_mass = g.atoms.as_ref().map_or(0.0, Atoms::mass);
        let cont = g.grid.trapezoid(&g.values);
        if !(cont > 0.0) || atom_mass >= 1.0 {
            return Err(Error::InvalidMeasure("cannot normalize a density without mass".into()));
        }
        let scale = (1.0 - atom_mass) / cont;
        g.values.iter_mut().for_each(|v| *v *= scale);
        Ok(g)
    }

    fn unchecked(grid: UniformGrid, values: Vec<f64>, atoms: Option<Atoms>) -> Result<Self> {
        if values.len() != grid.len {
            return Err(Error::InvalidMeasure(format!(
                "{} density values for a grid of {} points",
                values.len(),
                grid.len
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure("density values must be finite and nonnegative".into()));
        }
        let atoms = atoms.filter(|a| !a.is_empty());
        Ok(Self { grid, values, atoms })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn atoms(&self) -> Option<&Atoms> {
        self.atoms.as_ref()
    }

    pub fn total_mass(&self) -> f64 {
        self.grid.trapezoid(&self.values) + self.atoms.as_ref().map_or(0.0, Atoms::mass)
    }
}

/// A probability law on the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum RealMeasure {
    /// Centred semicircle law with the given variance.
    Semicircle { variance: f64 },
    /// Cauchy law `t / (π (x² + t²))`.
    Cauchy { scale: f64 },
    /// Free Poisson (Marchenko–Pastur) law whose free cumulants all equal `rate`.
    FreePoisson { rate: f64 },
    Atomic(Atoms),
    Grid(GridDensity),
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidMeasure(format!("{name} must be positive, got {v}")))
    }
}

impl RealMeasure {
    pub fn semicircle(variance: f64) -> Result<Self> {
        Ok(Self::Semicircle { variance: positive("variance", variance)? })
    }

    pub fn cauchy(scale: f64) -> Result<Self> {
        Ok(Self::Cauchy { scale: positive("scale", scale)? })
    }

    pub fn free_poisson(rate: f64) -> Result<Self> {
        Ok(Self::FreePoisson { rate: positive("rate", rate)? })
    }

    pub fn atomic(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Ok(Self::Atomic(Atoms::new(points, weights)?))
    }

    pub fn point_mass(at: f64) -> Self {
        Self::Atomic(Atoms::point(at))
    }

    /// Builds a gridded copy by sampling this measure's density (atoms carried over).
    pub fn discretize(&self, grid: UniformGrid) -> Result<Self> {
        let values = grid.points().iter().map(|x| self.density_at(*x)).collect();
        let atoms = self.atoms();
        let atoms = if atoms.is_empty() {
            None
        } else {
            let (p, w) = atoms.into_iter().unzip();
            Some(Atoms::partial(p, w)?)
        };
        Ok(Self::Grid(GridDensity::normalized(grid, values, atoms)?))
    }

    /// Smallest closed interval containing the support, `None` for heavy tails.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            Self::Semicircle { variance } => {
                let r = 2.0 * variance.sqrt();
                Some((-r, r))
            }
            Self::Cauchy { .. } => None,
            Self::FreePoisson { rate } => {
                let (a, b) = mp_edges(*rate);
                Some((if *rate < 1.0 { 0.0 } else { a }, b))
            }
            Self::Atomic(atoms) => Some(min_max(atoms.points())),
            Self::Grid(g) => {
                let mut lo = g.grid.min;
                let mut hi = g.grid.max;
                if let Some(a) = &g.atoms {
                    let (alo, ahi) = min_max(a.points());
                    lo = lo.min(alo);
                    hi = hi.max(ahi);
                }
                Some((lo, hi))
            }
        }
    }

    /// Atoms `(location, mass)` of the measure.
    pub fn atoms(&self) -> Vec<(f64, f64)> {
        match self {
            Self::FreePoisson { rate } if *rate < 1.0 => vec![(0.0, 1.0 - rate)],
            Self::Atomic(a) => a.iter().collect(),
            Self::Grid(g) => g.atoms.as_ref().map(|a| a.iter().collect()).unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    /// `∫ xⁿ dμ` for `n ≤ MAX_MOMENT_ORDER`.
    pub fn moment(&self, n: usize) -> Result<f64> {
        self.moment_with_limit(n, MAX_MOMENT_ORDER)
    }

    pub fn moment_with_limit(&self, n: usize, limit: usize) -> Result<f64> {
        if n > limit {
            return Err(Error::OrderOverflow { requested: n, limit });
        }
        match self {
            Self::Semicircle { variance } => Ok(if n % 2 == 1 {
                0.0
            } else {
                catalan(n / 2) * variance.powi((n / 2) as i32)
            }),
            Self::Cauchy { .. } => {
                if n == 0 {
                    Ok(1.0)
                } else {
                    Err(Error::MomentUndefined(format!("Cauchy law has no moment of order {n}")))
                }
            }
            Self::FreePoisson { rate } => Ok(if n == 0 {
                1.0
            } else {
                (1..=n).map(|k| narayana(n, k) * rate.powi(k as i32)).sum()
            }),
            Self::Atomic(a) => Ok(a.iter().map(|(x, w)| w * x.powi(n as i32)).sum()),
            Self::Grid(g) => {
                let w = g.grid.weights();
                let cont: f64 = g
                    .grid
                    .points()
                    .iter()
                    .zip(&w)
                    .zip(&g.values)
                    .map(|((x, w), f)| w * f * x.powi(n as i32))
                    .sum();
                let atoms: f64 =
                    g.atoms.as_ref().map_or(0.0, |a| a.iter().map(|(x, w)| w * x.powi(n as i32)).sum());
                Ok(cont + atoms)
            }
        }
    }

    /// Density of the absolutely continuous part at `x`; atoms are not reported.
    pub fn density_at(&self, x: f64) -> f64 {
        match self {
            Self::Semicircle { variance } => {
                let d = 4.0 * variance - x * x;
                if d <= 0.0 {
                    0.0
                } else {
                    d.sqrt() / (2.0 * PI * variance)
                }
            }
            Self::Cauchy { scale } => scale / (PI * (x * x + scale * scale)),
            Self::FreePoisson { rate } => {
                let (a, b) = mp_edges(*rate);
                if x <= a || x >= b || x <= 0.0 {
                    0.0
                } else {
                    ((b - x) * (x - a)).sqrt() / (2.0 * PI * x)
                }
            }
            Self::Atomic(_) => 0.0,
            Self::Grid(g) => g.grid.interpolate(&g.values, x),
        }
    }

    /// Total mass as recomputed from the representation.
    pub fn total_mass(&self) -> f64 {
        match self {
            Self::Grid(g) => g.total_mass(),
            Self::Atomic(a) => a.mass(),
            _ => 1.0,
        }
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

/// Edges `(1 ∓ √λ)²` of the continuous part of the free Poisson law.
pub fn mp_edges(rate: f64) -> (f64, f64) {
    let s = rate.sqrt();
    ((1.0 - s).powi(2), (1.0 + s).powi(2))
}

pub fn catalan(n: usize) -> f64 {
    binomial(2 * n, n) / (n as f64 + 1.0)
}

/// Narayana number `N(n,k) = C(n,k) C(n,k-1) / n`: non-crossing partitions of n with k blocks.
pub fn narayana(n: usize, k: usize) -> f64 {
    if k == 0 || k > n {
        return 0.0;
    }
    binomial(n, k) * binomial(n, k - 1) / n as f64
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k.min(n));
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// A probability law on the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub enum CircleMeasure {
    /// Dirac mass at `e^{iθ}`.
    PointMass { angle: f64 },
    /// Marginal of the unitary free Lévy process: Poisson kernel at `e^{-t}`.
    Levy { time: f64 },
    Atomic { angles: Vec<f64>, weights: Vec<f64> },
    /// Density on `N` equal angles `2πk/N`, relative to normalized Haar measure.
    Grid { values: Vec<f64> },
}

impl CircleMeasure {
    pub fn point_mass(angle: f64) -> Self {
        Self::PointMass { angle }
    }

    pub fn levy(time: f64) -> Result<Self> {
        if !(time.is_finite() && time >= 0.0) {
            return Err(Error::InvalidMeasure(format!("Lévy time must be nonnegative, got {time}")));
        }
        Ok(Self::Levy { time })
    }

    pub fn atomic(angles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let a = Atoms::new(angles, weights)?;
        Ok(Self::Atomic { angles: a.points, weights: a.weights })
    }

    pub fn grid(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidMeasure("circle grid needs at least two angles".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidMeasure("density values must be finite and nonnegative".into()));
        }
        let mass = values.iter().sum::<f64>() / values.len() as f64;
        if (mass - 1.0).abs() > GRID_MASS_TOL {
            return Err(Error::InvalidMeasure(format!("circle density has mass {mass}, not 1")));
        }
        Ok(Self::Grid { values })
    }

    /// `∫ sⁿ dμ(s)` for integer `n` with `|n| ≤ MAX_MOMENT_ORDER`.
    pub fn moment(&self, n: i64) -> Result<Complex64> {
        let limit = MAX_MOMENT_ORDER;
        if n.unsigned_abs() as usize > limit {
            return Err(Error::OrderOverflow { requested: n.unsigned_abs() as usize, limit });
        }
        let nf = n as f64;
        Ok(match self {
            Self::PointMass { angle } => Complex64::from_polar(1.0, nf * angle),
            Self::Levy { time } => Complex64::new((-time * nf.abs()).exp(), 0.0),
            Self::Atomic { angles, weights } => angles
                .iter()
                .zip(weights)
                .map(|(a, w)| Complex64::from_polar(*w, nf * a))
                .sum(),
            Self::Grid { values } => {
                let len = values.len() as f64;
                values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| Complex64::from_polar(*v / len, nf * 2.0 * PI * k as f64 / len))
                    .sum()
            }
        })
    }

    /// Density relative to normalized Haar measure at `e^{iθ}`.
    pub fn density_at(&self, angle: f64) -> f64 {
        match self {
            Self::PointMass { .. } | Self::Atomic { .. } => 0.0,
            Self::Levy { time } => {
                if *time == 0.0 {
                    return 0.0;
                }
                let rho = (-time).exp();
                let s = Complex64::from_polar(1.0, angle);
                (1.0 - rho * rho) / (s - rho).norm_sqr()
            }
            Self::Grid { values } => {
                let n = values.len();
                let t = angle.rem_euclid(2.0 * PI) / (2.0 * PI) * n as f64;
                let k = (t.floor() as usize) % n;
                let frac = t - t.floor();
                values[k] * (1.0 - frac) + values[(k + 1) % n] * frac
            }
        }
    }

    /// Density relative to arc length `dθ`.
    pub fn density_per_radian(&self, angle: f64) -> f64 {
        self.density_at(angle) / (2.0 * PI)
    }

    pub fn first_moment(&self) -> Complex64 {
        self.moment(1).expect("order 1 is within every cutoff")
    }
}

/// Measure description as written in CLI spec files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    Semicircle { variance: f64 },
    Cauchy { scale: f64 },
    FreePoisson { rate: f64 },
    Atomic { points: Vec<f64>, weights: Vec<f64> },
    Grid { min: f64, max: f64, values: Vec<f64> },
    PointMass { angle: f64 },
    LevyMarginal { time: f64 },
    CircleAtomic { angles: Vec<f64>, weights: Vec<f64> },
    CircleGrid { values: Vec<f64> },
}

/// Either kind of measure, as produced from a [`MeasureSpec`].
#[derive(Debug, Clone, PartialEq)]
pub enum AnyMeasure {
    Real(RealMeasure),
    Circle(CircleMeasure),
}

impl MeasureSpec {
    pub fn build(&self) -> Result<AnyMeasure> {
        use AnyMeasure::{Circle, Real};
        Ok(match self {
            Self::Semicircle { variance } => Real(RealMeasure::semicircle(*variance)?),
            Self::Cauchy { scale } => Real(RealMeasure::cauchy(*scale)?),
            Self::FreePoisson { rate } => Real(RealMeasure::free_poisson(*rate)?),
            Self::Atomic { points, weights } => Real(RealMeasure::atomic(points.clone(), weights.clone())?),
            Self::Grid { min, max, values } => {
                let grid = UniformGrid::new(*min, *max, values.len())?;
                Real(RealMeasure::Grid(GridDensity::new(grid, values.clone(), None)?))
            }
            Self::PointMass { angle } => Circle(CircleMeasure::point_mass(*angle)),
            Self::LevyMarginal { time } => Circle(CircleMeasure::levy(*time)?),
            Self::CircleAtomic { angles, weights } => {
                Circle(CircleMeasure::atomic(angles.clone(), weights.clone())?)
            }
            Self::CircleGrid { values } => Circle(CircleMeasure::grid(values.clone())?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semicircle_moments() {
        let m = RealMeasure::semicircle(1.0).unwrap();
        assert_eq!(m.moment(0).unwrap(), 1.0);
        assert_eq!(m.moment(4).unwrap(), 2.0);
        assert_eq!(m.moment(3).unwrap(), 0.0);
        let m = RealMeasure::semicircle(2.5).unwrap();
        assert_eq!(m.moment(2).unwrap(), 2.5);
        assert_eq!(m.support(), Some((-2.0 * 2.5f64.sqrt(), 2.0 * 2.5f64.sqrt())));
    }

    #[test]
    fn free_poisson_second_moment() {
        let m = RealMeasure::free_poisson(1.0).unwrap();
        assert!((m.moment(2).unwrap() - 2.0).abs() < 1e-15);
        let lam = 0.3;
        let m = RealMeasure::free_poisson(lam).unwrap();
        let m3 = lam + 3.0 * lam * lam + lam.powi(3);
        assert!((m.moment(3).unwrap() - m3).abs() < 1e-15);
    }

    #[test]
    fn order_and_heavy_tail_errors() {
        let m = RealMeasure::semicircle(1.0).unwrap();
        assert!(matches!(m.moment(17), Err(Error::OrderOverflow { .. })));
        let c = RealMeasure::cauchy(1.0).unwrap();
        assert_eq!(c.moment(0).unwrap(), 1.0);
        assert!(matches!(c.moment(1), Err(Error::MomentUndefined(_))));
    }

    #[test]
    fn densities() {
        let s = RealMeasure::semicircle(1.0).unwrap();
        assert!((s.density_at(0.0) - 1.0 / PI).abs() < 1e-15);
        assert_eq!(s.density_at(3.0), 0.0);
        let c = RealMeasure::cauchy(1.0).unwrap();
        assert!((c.density_at(0.0) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn atoms_must_be_probabilities() {
        assert!(RealMeasure::atomic(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
        assert!(RealMeasure::atomic(vec![0.0, 1.0], vec![-0.5, 1.5]).is_err());
        assert!(RealMeasure::atomic(vec![0.0, 1.0], vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn grid_mass_checked() {
        let g = UniformGrid::new(0.0, 1.0, 11).unwrap();
        assert!(GridDensity::new(g, vec![1.0; 11], None).is_ok());
        assert!(GridDensity::new(g, vec![2.0; 11], None).is_err());
        let n = GridDensity::normalized(g, vec![2.0; 11], None).unwrap();
        assert!((n.total_mass() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn grid_round_trip_moments() {
        let g = UniformGrid::new(-2.0, 2.0, 65537).unwrap();
        let s = RealMeasure::semicircle(1.0).unwrap();
        let d = s.discretize(g).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-6);
        for n in 0..=8 {
            let err = (d.moment(n).unwrap() - s.moment(n).unwrap()).abs();
            assert!(err < 1e-4, "order {n}: {err}");
        }
        assert!(d.moment(3).unwrap().abs() < 1e-10);
    }

    #[test]
    fn circle_moments() {
        let p = CircleMeasure::point_mass(0.7);
        let m = p.moment(1).unwrap();
        assert!((m - Complex64::from_polar(1.0, 0.7)).norm() < 1e-15);
        let l = CircleMeasure::levy(0.0).unwrap();
        for n in -5..=5 {
            assert_eq!(l.moment(n).unwrap(), Complex64::new(1.0, 0.0));
        }
        let l = CircleMeasure::levy(1.3).unwrap();
        assert!((l.moment(1).unwrap().re - (-1.3f64).exp()).abs() < 1e-15);
        let a = CircleMeasure::atomic(vec![0.3, 2.0], vec![0.4, 0.6]).unwrap();
        for n in 1..6 {
            assert!((a.moment(-n).unwrap() - a.moment(n).unwrap().conj()).norm() < 1e-15);
            assert!(a.moment(n).unwrap().norm() <= 1.0 + 1e-15);
        }
    }

    #[test]
    fn levy_density_integrates_and_matches_moment() {
        let t = 0.8;
        let l = CircleMeasure::levy(t).unwrap();
        let n = 4096;
        let angles = crate::grid::circle_angles(n);
        let mass: f64 = angles.iter().map(|a| l.density_at(*a)).sum::<f64>() / n as f64;
        assert!((mass - 1.0).abs() < 1e-12);
        let m1: Complex64 = angles
            .iter()
            .map(|a| Complex64::from_polar(l.density_at(*a), *a))
            .sum::<Complex64>()
            / n as f64;
        assert!((m1.re - (-t).exp()).abs() < 1e-12 && m1.im.abs() < 1e-12);
        let grid = CircleMeasure::grid(angles.iter().map(|a| l.density_at(*a)).collect()).unwrap();
        assert!((grid.moment(2).unwrap().re - (-2.0 * t).exp()).abs() < 1e-10);
    }

    #[test]
    fn spec_parsing() {
        let s: MeasureSpec = serde_json::from_str(r#"{ "kind": "semicircle", "variance": 1.0 }"#).unwrap();
        assert_eq!(s.build().unwrap(), AnyMeasure::Real(RealMeasure::Semicircle { variance: 1.0 }));
        let s: MeasureSpec = serde_json::from_str(r#"{ "kind": "levy_marginal", "time": 0.5 }"#).unwrap();
        assert!(matches!(s.build().unwrap(), AnyMeasure::Circle(CircleMeasure::Levy { .. })));
        let s: MeasureSpec =
            serde_json::from_str(r#"{ "kind": "grid", "min": -1, "max": 1, "values": [0.5, 0.5, 0.5] }"#).unwrap();
        assert!(s.build().is_ok());
        let s: MeasureSpec = serde_json::from_str(r#"{ "kind": "cauchy", "scale": -2.0 }"#).unwrap();
        assert!(s.build().is_err());
    }
}

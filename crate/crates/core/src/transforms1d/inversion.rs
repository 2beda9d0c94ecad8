//! Density recovery from boundary values of a Cauchy transform.

use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use super::cauchy::CauchyTransform;
use super::EPSILON_SCHEDULE;
use crate::error::{Error, Result};
use crate::grid::{richardson_limit, UniformGrid};
use crate::measures::{Atoms, GridDensity, RealMeasure};

/// How the recovered mass on a finite window is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowPolicy {
    /// The window must carry the whole law; mass is checked and renormalized.
    #[default]
    Probability,
    /// The window cuts off a heavy tail; values are returned as sampled.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryOptions {
    /// Imaginary offsets, coarse to fine.
    pub schedule: Vec<f64>,
    pub policy: WindowPolicy,
    /// Accepted raw mass before renormalization.
    pub mass_window: (f64, f64),
    /// Negative values above `-negativity_tol` are clamped to zero.
    pub negativity_tol: f64,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            schedule: EPSILON_SCHEDULE.to_vec(),
            policy: WindowPolicy::Probability,
            mass_window: (0.99, 1.01),
            negativity_tol: 1e-6,
        }
    }
}

/// Densities sampled on a grid before they are packaged as a measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DensitySample {
    pub grid: UniformGrid,
    pub values: Vec<f64>,
    pub atoms: Vec<(f64, f64)>,
    /// Trapezoid mass of the unclamped values plus atom masses.
    pub raw_mass: f64,
}

/// Offset used to read off point masses.
const ATOM_PROBE: f64 = 1e-9;

/// Smallest mass reported as an atom.
const ATOM_FLOOR: f64 = 1e-10;

/// Mass of a possible atom at `x`: `lim_{δ→0} −δ Im G(x + iδ)`.
pub fn atom_mass_at(g: &dyn CauchyTransform, x: f64) -> Result<f64> {
    let v = g.g(Complex64::new(x, ATOM_PROBE))?;
    Ok(-ATOM_PROBE * v.im)
}

fn spot_check(g: &dyn CauchyTransform, grid: &UniformGrid) -> Result<()> {
    let width = grid.max - grid.min;
    let z = Complex64::new(0.5 * (grid.min + grid.max), width);
    let v = g.g(z)?;
    if !(v.im < 0.0) {
        return Err(Error::InvalidArgument(format!("G({z}) = {v} does not map the upper half-plane down")));
    }
    Ok(())
}

/// Samples `−Im G(x + iε)/π` along the schedule and extrapolates to `ε = 0`,
/// after removing the poles of the atoms found among `atom_candidates`.
pub fn sample_density_1d(
    g: &dyn CauchyTransform,
    grid: UniformGrid,
    atom_candidates: &[f64],
    opts: &RecoveryOptions,
) -> Result<DensitySample> {
    spot_check(g, &grid)?;
    let mut atoms = Vec::new();
    for x in atom_candidates {
        let m = atom_mass_at(g, *x)?;
        if m > ATOM_FLOOR {
            atoms.push((*x, m));
        }
    }
    let xs = grid.points();
    let eps = &opts.schedule;
    let values: Vec<f64> = xs
        .par_iter()
        .map(|x| {
            let samples = eps
                .iter()
                .map(|e| {
                    let z = Complex64::new(*x, *e);
                    let mut v = g.g(z)?;
                    for (a, m) in &atoms {
                        v -= m / (z - a);
                    }
                    Ok(-v.im / PI)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(richardson_limit(eps, &samples))
        })
        .collect::<Result<_>>()?;
    let atom_mass: f64 = atoms.iter().map(|(_, m)| m).sum();
    let raw_mass = grid.trapezoid(&values) + atom_mass;
    if opts.policy == WindowPolicy::Probability {
        let (lo, hi) = opts.mass_window;
        if !(raw_mass >= lo && raw_mass <= hi) {
            return Err(Error::InversionMass { mass: raw_mass });
        }
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -opts.negativity_tol {
        return Err(Error::Negativity { min });
    }
    let values = values.into_iter().map(|v| v.max(0.0)).collect();
    Ok(DensitySample { grid, values, atoms, raw_mass })
}

/// Recovers the law with Cauchy transform `g` on `grid`.
pub fn recover_density_1d(g: &dyn CauchyTransform, grid: UniformGrid) -> Result<RealMeasure> {
    recover_density_1d_with_atoms(g, grid, &[], &RecoveryOptions::default())
}

/// [`recover_density_1d`] with explicit atom candidates and options. The
/// absolutely continuous part is renormalized so the total mass is 1.
pub fn recover_density_1d_with_atoms(
    g: &dyn CauchyTransform,
    grid: UniformGrid,
    atom_candidates: &[f64],
    opts: &RecoveryOptions,
) -> Result<RealMeasure> {
    if opts.policy == WindowPolicy::Truncated {
        return Err(Error::InvalidArgument("a truncated window does not define a probability law".into()));
    }
    let s = sample_density_1d(g, grid, atom_candidates, opts)?;
    let atom_mass: f64 = s.atoms.iter().map(|(_, m)| m).sum();
    let cont = s.grid.trapezoid(&s.values);
    let scale = (1.0 - atom_mass) / cont;
    let values = s.values.iter().map(|v| v * scale).collect();
    let atoms = if s.atoms.is_empty() {
        None
    } else {
        let (p, w): (Vec<f64>, Vec<f64>) = s.atoms.into_iter().unzip();
        Some(Atoms::partial(p, w)?)
    };
    Ok(RealMeasure::Grid(GridDensity::new(s.grid, values, atoms)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms1d::{free_add_convolve, FreeAdditiveConvolution};

    #[test]
    fn semicircle_centre_value() {
        let grid = UniformGrid::new(-2.0, 2.0, 513).unwrap();
        let m = recover_density_1d(&RealMeasure::semicircle(1.0).unwrap(), grid).unwrap();
        assert!((m.density_at(0.0) - 1.0 / PI).abs() < 1e-3);
        assert!((m.total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn point_mass_has_no_density() {
        let grid = UniformGrid::new(-2.0, 2.0, 513).unwrap();
        let r = recover_density_1d(&RealMeasure::point_mass(0.0), grid);
        assert!(matches!(r, Err(Error::InversionMass { .. })), "{r:?}");
    }

    #[test]
    fn truncated_cauchy_window() {
        let grid = UniformGrid::new(-8.0, 8.0, 1025).unwrap();
        let c = RealMeasure::cauchy(1.0).unwrap();
        assert!(matches!(recover_density_1d(&c, grid), Err(Error::InversionMass { .. })));
        let opts = RecoveryOptions { policy: WindowPolicy::Truncated, ..Default::default() };
        let s = sample_density_1d(&c, grid, &[], &opts).unwrap();
        assert!((s.values[512] - 1.0 / PI).abs() < 1e-3);
        assert!((s.raw_mass - 2.0 * 8f64.atan() / PI).abs() < 1e-4);
    }

    #[test]
    fn free_poisson_atom() {
        let m = RealMeasure::free_poisson(0.4).unwrap();
        let (_, b) = crate::measures::mp_edges(0.4);
        let grid = UniformGrid::padded(0.0, b, 0.05, 2049).unwrap();
        let r = recover_density_1d_with_atoms(&m, grid, &[0.0], &RecoveryOptions::default()).unwrap();
        let atoms = r.atoms();
        assert_eq!(atoms.len(), 1);
        assert!((atoms[0].1 - 0.6).abs() < 1e-8);
        for x in [0.3, 1.0, 2.0] {
            assert!((r.density_at(x) - m.density_at(x)).abs() < 2e-3, "{x}");
        }
    }

    #[test]
    fn semicircle_sum_recovers_variance_two() {
        let s = RealMeasure::semicircle(1.0).unwrap();
        let out = free_add_convolve(&s, &s).unwrap();
        let target = RealMeasure::semicircle(2.0).unwrap();
        let RealMeasure::Grid(g) = &out else { panic!("expected a grid") };
        let diff: Vec<f64> = g.grid().points().iter().map(|x| (out.density_at(*x) - target.density_at(*x)).abs()).collect();
        let l1 = g.grid().trapezoid(&diff);
        assert!(l1 < 1e-3, "L1 = {l1}");
        for n in 1..=6 {
            let err = (out.moment(n).unwrap() - target.moment(n).unwrap()).abs();
            assert!(err < 1e-4 * target.moment(n).unwrap().abs().max(1.0), "order {n}: {err}");
        }
        // The evaluator itself is exact up to solver precision.
        let conv = FreeAdditiveConvolution::of(&s, &s);
        let z = Complex64::new(0.5, 1e-3);
        assert!((conv.g(z).unwrap() - target.g(z).unwrap()).norm() < 1e-10);
    }
}

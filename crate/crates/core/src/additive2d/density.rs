//! Two-variable Stieltjes inversion and transition kernels.

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::f64::consts::PI;

use super::green::{AxisPoint, JointGreenEvaluator};
use crate::error::{Error, Result};
use crate::cumulants::MomentTable;
use crate::grid::{richardson_limit, QuadratureRule, UniformGrid};
use crate::transforms1d::{sample_density_1d, RecoveryOptions, WindowPolicy};

/// Default points per axis for two-variable grids.
pub const DEFAULT_N2D: usize = 256;

/// Marginal density below which a kernel row is masked.
pub const MARGINAL_FLOOR: f64 = 1e-8;

/// Threshold used by [`detect_support`].
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

// Offset used to read off slice and point masses.
const PROBE: f64 = 1e-9;

// Smallest mass treated as an atom.
const ATOM_FLOOR: f64 = 1e-10;

/// Options for [`recover_density_2d_with`]; negativity tolerance `1e-5`.
pub fn default_options_2d() -> RecoveryOptions {
    RecoveryOptions { negativity_tol: 1e-5, ..Default::default() }
}

/// Options for [`joint_moments_by_quadrature`]: the two-variable defaults
/// with every offset divided by 8. Graded nodes resolve much finer scales
/// than a uniform grid, so the smaller offsets pay off.
pub fn quadrature_options_2d() -> RecoveryOptions {
    let mut opts = default_options_2d();
    opts.schedule.iter_mut().for_each(|e| *e /= 8.0);
    opts
}

/// Mass of the law carried by a line `x = at` (or `y = at`), sampled along
/// the other axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub at: f64,
    /// Density along the other axis, excluding point atoms.
    pub values: Vec<f64>,
}

/// Sampled joint density of a pair of self-adjoint variables.
///
/// The absolutely continuous part lives in `values`. Mass on vertical lines
/// `x = a`, horizontal lines `y = b` and points `(a, b)` is kept separately.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDensityGrid {
    pub x_grid: UniformGrid,
    pub y_grid: UniformGrid,
    values: Vec<f64>,
    marginal_x: Vec<f64>,
    marginal_y: Vec<f64>,
    x_slices: Vec<Slice>,
    y_slices: Vec<Slice>,
    point_atoms: Vec<(f64, f64, f64)>,
    policy: WindowPolicy,
    reference_x: Option<Vec<f64>>,
    /// Total mass before renormalization.
    pub raw_mass: f64,
}

impl JointDensityGrid {
    /// Builds a grid from samples `values[i * ny + j] = f(x_i, y_j)` of an
    /// absolutely continuous law.
    pub fn from_values(x_grid: UniformGrid, y_grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != x_grid.len * y_grid.len {
            return Err(Error::InvalidArgument(format!(
                "{} values for a {}x{} grid",
                values.len(),
                x_grid.len,
                y_grid.len
            )));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument("density values must be finite and nonnegative".into()));
        }
        let mut out = Self {
            x_grid,
            y_grid,
            values,
            marginal_x: Vec::new(),
            marginal_y: Vec::new(),
            x_slices: Vec::new(),
            y_slices: Vec::new(),
            point_atoms: Vec::new(),
            policy: WindowPolicy::Probability,
            reference_x: None,
            raw_mass: 0.0,
        };
        out.refresh_marginals();
        out.raw_mass = out.total_mass();
        Ok(out)
    }

    fn refresh_marginals(&mut self) {
        let (nx, ny) = (self.x_grid.len, self.y_grid.len);
        let mut mx: Vec<f64> = (0..nx).map(|i| self.y_grid.trapezoid(&self.values[i * ny..(i + 1) * ny])).collect();
        for s in &self.y_slices {
            for (m, v) in mx.iter_mut().zip(&s.values) {
                *m += v;
            }
        }
        let mut my: Vec<f64> = (0..ny)
            .map(|j| {
                let col: Vec<f64> = (0..nx).map(|i| self.values[i * ny + j]).collect();
                self.x_grid.trapezoid(&col)
            })
            .collect();
        for s in &self.x_slices {
            for (m, v) in my.iter_mut().zip(&s.values) {
                *m += v;
            }
        }
        self.marginal_x = mx;
        self.marginal_y = my;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.y_grid.len + j]
    }

    /// Density of the first coordinate on `x_grid`, absolutely continuous part.
    pub fn marginal_x(&self) -> &[f64] {
        &self.marginal_x
    }

    pub fn marginal_y(&self) -> &[f64] {
        &self.marginal_y
    }

    pub fn x_slices(&self) -> &[Slice] {
        &self.x_slices
    }

    pub fn y_slices(&self) -> &[Slice] {
        &self.y_slices
    }

    /// Point masses `(x, y, mass)`.
    pub fn point_atoms(&self) -> &[(f64, f64, f64)] {
        &self.point_atoms
    }

    pub fn policy(&self) -> WindowPolicy {
        self.policy
    }

    fn slice_mass(&self) -> f64 {
        let xs: f64 = self.x_slices.iter().map(|s| self.y_grid.trapezoid(&s.values)).sum();
        let ys: f64 = self.y_slices.iter().map(|s| self.x_grid.trapezoid(&s.values)).sum();
        let pts: f64 = self.point_atoms.iter().map(|p| p.2).sum();
        xs + ys + pts
    }

    /// Mass of the absolutely continuous part.
    pub fn continuous_mass(&self) -> f64 {
        self.x_grid.trapezoid(&self.marginal_x) - self.y_slices.iter().map(|s| self.x_grid.trapezoid(&s.values)).sum::<f64>()
    }

    pub fn total_mass(&self) -> f64 {
        self.continuous_mass() + self.slice_mass()
    }

    /// `∫∫ xⁿ yᵐ dμ` by the trapezoid rule, including slices and atoms.
    pub fn moment(&self, n: usize, m: usize) -> f64 {
        let xs = self.x_grid.points();
        let ys = self.y_grid.points();
        let ny = ys.len();
        let (wx, wy) = (self.x_grid.weights(), self.y_grid.weights());
        let ym: Vec<f64> = ys.iter().zip(&wy).map(|(y, w)| y.powi(m as i32) * w).collect();
        let xn: Vec<f64> = xs.iter().zip(&wx).map(|(x, w)| x.powi(n as i32) * w).collect();
        let mut total: f64 = xs
            .iter()
            .enumerate()
            .map(|(i, _)| xn[i] * self.values[i * ny..(i + 1) * ny].iter().zip(&ym).map(|(f, y)| f * y).sum::<f64>())
            .sum();
        for s in &self.x_slices {
            total += s.at.powi(n as i32) * s.values.iter().zip(&ym).map(|(f, y)| f * y).sum::<f64>();
        }
        for s in &self.y_slices {
            total += s.at.powi(m as i32) * s.values.iter().zip(&xn).map(|(f, x)| f * x).sum::<f64>();
        }
        for (a, b, p) in &self.point_atoms {
            total += a.powi(n as i32) * b.powi(m as i32) * p;
        }
        total
    }

    /// CSV with header `x,y,f`, one line per grid point of the continuous part.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,f\n");
        let ys = self.y_grid.points();
        for (i, x) in self.x_grid.points().iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                out.push_str(&format!("{x:.16e},{y:.16e},{:.16e}\n", self.value(i, j)));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        let slices = |v: &[Slice]| v.iter().map(|s| json!({ "at": s.at, "values": s.values })).collect::<Vec<_>>();
        json!({
            "x_grid": self.x_grid,
            "y_grid": self.y_grid,
            "values": self.values,
            "marginal_x": self.marginal_x,
            "marginal_y": self.marginal_y,
            "x_slices": slices(&self.x_slices),
            "y_slices": slices(&self.y_slices),
            "point_atoms": self.point_atoms,
            "raw_mass": self.raw_mass,
        })
    }
}

/// Recovers the joint law of `g` on `x_grid × y_grid` with default options.
pub fn recover_density_2d(g: &JointGreenEvaluator, x_grid: UniformGrid, y_grid: UniformGrid) -> Result<JointDensityGrid> {
    recover_density_2d_with(g, x_grid, y_grid, &default_options_2d())
}

fn probe_atoms(hint: Vec<(f64, f64)>, mass: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (at, _) in hint {
        if mass(at)? > ATOM_FLOOR {
            out.push(at);
        }
    }
    Ok(out)
}

fn prep_axis(points: &[f64], eps: f64, f: impl Fn(Complex64) -> Result<AxisPoint> + Sync) -> Result<Vec<AxisPoint>> {
    points.par_iter().map(|p| f(Complex64::new(*p, eps))).collect()
}

// Continuous density, slices and point atoms at tensor nodes, before any
// mass check or clamping.
struct Recovered {
    values: Vec<f64>,
    x_slices: Vec<Slice>,
    y_slices: Vec<Slice>,
    points: Vec<(f64, f64, f64)>,
}

fn recover_nodes(g: &JointGreenEvaluator, xs: &[f64], ys: &[f64], eps: &[f64]) -> Result<Recovered> {
    let (gx, gy) = (g.marginal_x(), g.marginal_y());
    let x_atoms = probe_atoms(gx.atom_hint(), |a| Ok(-PROBE * gx.g(Complex64::new(a, PROBE))?.im))?;
    let y_atoms = probe_atoms(gy.atom_hint(), |b| Ok(-PROBE * gy.g(Complex64::new(b, PROBE))?.im))?;
    let probe = Complex64::new(0.0, PROBE);
    let ax: Vec<AxisPoint> = x_atoms.iter().map(|a| g.prep_x(a + probe)).collect::<Result<_>>()?;
    let by: Vec<AxisPoint> = y_atoms.iter().map(|b| g.prep_y(b + probe)).collect::<Result<_>>()?;
    let mut points = Vec::new();
    for (a, pa) in x_atoms.iter().zip(&ax) {
        for (b, pb) in y_atoms.iter().zip(&by) {
            let c = -(PROBE * PROBE) * g.combine(pa, pb)?.re;
            if c > ATOM_FLOOR {
                points.push((*a, *b, c));
            }
        }
    }
    let point_pole = |z: Complex64, w: Complex64| -> Complex64 {
        points.iter().map(|(a, b, c)| c / ((z - a) * (w - b))).sum()
    };

    let (nx, ny) = (xs.len(), ys.len());
    let px: Vec<Vec<AxisPoint>> = eps.iter().map(|e| prep_axis(xs, *e, |z| g.prep_x(z))).collect::<Result<_>>()?;
    let pu: Vec<Vec<AxisPoint>> = eps.iter().map(|e| prep_axis(ys, *e, |w| g.prep_y(w))).collect::<Result<_>>()?;
    let pl: Vec<Vec<AxisPoint>> = eps.iter().map(|e| prep_axis(ys, -e, |w| g.prep_y(w))).collect::<Result<_>>()?;

    // Slice transforms: (z − a) G → S_a(w) and (w − b) G → T_b(z).
    let slice_x = |pw: &[Vec<AxisPoint>]| -> Result<Vec<Vec<Vec<Complex64>>>> {
        ax.iter()
            .map(|pa| pw.iter().map(|row| row.iter().map(|w| Ok(probe * g.combine(pa, w)?)).collect()).collect())
            .collect()
    };
    let sxu = slice_x(&pu)?;
    let sxl = slice_x(&pl)?;
    let syz: Vec<Vec<Vec<Complex64>>> = by
        .iter()
        .map(|pb| px.iter().map(|row| row.iter().map(|z| Ok(probe * g.combine(z, pb)?)).collect()).collect())
        .collect::<Result<_>>()?;

    // Slice densities with their point atoms removed.
    let x_slices: Vec<Slice> = x_atoms
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let values = (0..ny)
                .map(|j| {
                    let samples: Vec<f64> = (0..eps.len())
                        .map(|e| {
                            let w = pu[e][j].at;
                            let mut v = sxu[k][e][j];
                            for (pa, b, c) in &points {
                                if pa == a {
                                    v -= c / (w - b);
                                }
                            }
                            -v.im / PI
                        })
                        .collect();
                    richardson_limit(eps, &samples)
                })
                .collect();
            Slice { at: *a, values }
        })
        .collect();
    let y_slices: Vec<Slice> = y_atoms
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let values = (0..nx)
                .map(|i| {
                    let samples: Vec<f64> = (0..eps.len())
                        .map(|e| {
                            let z = px[e][i].at;
                            let mut v = syz[k][e][i];
                            for (a, pb, c) in &points {
                                if pb == b {
                                    v -= c / (z - a);
                                }
                            }
                            -v.im / PI
                        })
                        .collect();
                    richardson_limit(eps, &samples)
                })
                .collect();
            Slice { at: *b, values }
        })
        .collect();

    // G with every pole part removed, at (px[ex][i], pw[ey][j]).
    let regular = |ex: usize, i: usize, pw: &AxisPoint, sx: &[Vec<Vec<Complex64>>], ey: usize, j: usize| {
        let (z, w) = (px[ex][i].at, pw.at);
        let mut v = g.combine(&px[ex][i], pw)?;
        for (k, a) in x_atoms.iter().enumerate() {
            v -= sx[k][ey][j] / (z - a);
        }
        for (k, b) in y_atoms.iter().enumerate() {
            v -= syz[k][ex][i] / (w - b);
        }
        Ok::<_, Error>(v + point_pole(z, w))
    };
    let rows: Vec<Vec<f64>> = (0..nx)
        .into_par_iter()
        .map(|i| {
            (0..ny)
                .map(|j| {
                    let inner = (0..eps.len())
                        .map(|ex| {
                            let samples = (0..eps.len())
                                .map(|ey| {
                                    let up = regular(ex, i, &pu[ey][j], &sxu, ey, j)?;
                                    let lo = regular(ex, i, &pl[ey][j], &sxl, ey, j)?;
                                    Ok(-(up - lo).re / (2.0 * PI * PI))
                                })
                                .collect::<Result<Vec<f64>>>()?;
                            Ok(richardson_limit(eps, &samples))
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(richardson_limit(eps, &inner))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let values = rows.concat();
    Ok(Recovered { values, x_slices, y_slices, points })
}

/// Two-variable Stieltjes inversion
/// `f(x, y) = π⁻² Im[(G(x+iε, y+iε') − G(x+iε, y−iε')) / 2i]`.
///
/// The offsets `ε` and `ε'` run independently along the schedule and the
/// limit is extrapolated in `ε'` first, then in `ε`, so densities of product
/// form are extrapolated factor by factor. Atoms of the marginals found in
/// their hints are resolved into slices and point masses whose poles are
/// removed before inversion.
pub fn recover_density_2d_with(
    g: &JointGreenEvaluator,
    x_grid: UniformGrid,
    y_grid: UniformGrid,
    opts: &RecoveryOptions,
) -> Result<JointDensityGrid> {
    let xs = x_grid.points();
    let ys = y_grid.points();
    let Recovered { values, x_slices, y_slices, points } = recover_nodes(g, &xs, &ys, &opts.schedule)?;

    let mut out = JointDensityGrid {
        x_grid,
        y_grid,
        values,
        marginal_x: Vec::new(),
        marginal_y: Vec::new(),
        x_slices,
        y_slices,
        point_atoms: points,
        policy: opts.policy,
        reference_x: None,
        raw_mass: 0.0,
    };
    out.refresh_marginals();
    out.raw_mass = out.total_mass();
    if opts.policy == WindowPolicy::Probability {
        let (lo, hi) = opts.mass_window;
        if !(out.raw_mass >= lo && out.raw_mass <= hi) {
            return Err(Error::InversionMass { mass: out.raw_mass });
        }
    }
    let all = out.values.iter().chain(out.x_slices.iter().chain(&out.y_slices).flat_map(|s| s.values.iter()));
    let min = all.cloned().fold(f64::INFINITY, f64::min);
    if min < -opts.negativity_tol {
        return Err(Error::Negativity { min });
    }
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = x.max(0.0));
    clamp(&mut out.values);
    out.x_slices.iter_mut().chain(out.y_slices.iter_mut()).for_each(|s| clamp(&mut s.values));
    out.refresh_marginals();
    match opts.policy {
        WindowPolicy::Probability => {
            let singular = out.slice_mass();
            let scale = (1.0 - singular) / out.continuous_mass();
            out.values.iter_mut().for_each(|v| *v *= scale);
            out.refresh_marginals();
        }
        WindowPolicy::Truncated => {
            let s = sample_density_1d(g.marginal_x().as_ref(), x_grid, &[], opts)?;
            out.reference_x = Some(s.values);
        }
    }
    Ok(out)
}

/// Joint moments computed from the density recovered at the nodes of two
/// quadrature rules.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureMoments {
    pub moments: MomentTable<f64>,
    /// Total mass before renormalization.
    pub raw_mass: f64,
}

/// `∫∫ xⁿ yᵐ dμ` for `n + m ≤ order`, with the density recovered pointwise at
/// the nodes of `x_rule × y_rule` by the same inversion as
/// [`recover_density_2d_with`], and the same mass and negativity checks.
pub fn joint_moments_by_quadrature(
    g: &JointGreenEvaluator,
    order: usize,
    x_rule: &QuadratureRule,
    y_rule: &QuadratureRule,
    opts: &RecoveryOptions,
) -> Result<QuadratureMoments> {
    let (xs, ys) = (&x_rule.nodes, &y_rule.nodes);
    let ny = ys.len();
    let Recovered { mut values, mut x_slices, mut y_slices, points } = recover_nodes(g, xs, ys, &opts.schedule)?;
    let all = values.iter().chain(x_slices.iter().chain(&y_slices).flat_map(|s| s.values.iter()));
    let min = all.cloned().fold(f64::INFINITY, f64::min);
    let cont_mass = |v: &[f64]| -> f64 {
        xs.iter().enumerate().map(|(i, _)| x_rule.weights[i] * y_rule.integrate(&v[i * ny..(i + 1) * ny])).sum()
    };
    let singular = |xsl: &[Slice], ysl: &[Slice]| -> f64 {
        xsl.iter().map(|s| y_rule.integrate(&s.values)).sum::<f64>()
            + ysl.iter().map(|s| x_rule.integrate(&s.values)).sum::<f64>()
            + points.iter().map(|p| p.2).sum::<f64>()
    };
    let raw_mass = cont_mass(&values) + singular(&x_slices, &y_slices);
    if opts.policy == WindowPolicy::Probability {
        let (lo, hi) = opts.mass_window;
        if !(raw_mass >= lo && raw_mass <= hi) {
            return Err(Error::InversionMass { mass: raw_mass });
        }
    }
    if min < -opts.negativity_tol {
        return Err(Error::Negativity { min });
    }
    let clamp = |v: &mut Vec<f64>| v.iter_mut().for_each(|x| *x = x.max(0.0));
    clamp(&mut values);
    x_slices.iter_mut().chain(y_slices.iter_mut()).for_each(|s| clamp(&mut s.values));
    if opts.policy == WindowPolicy::Probability {
        let scale = (1.0 - singular(&x_slices, &y_slices)) / cont_mass(&values);
        values.iter_mut().for_each(|v| *v *= scale);
    }
    let moments = MomentTable::from_fn(order, |n, m| {
        let (n, m) = (n as i32, m as i32);
        let ym: Vec<f64> = ys.iter().zip(&y_rule.weights).map(|(y, w)| y.powi(m) * w).collect();
        let xn: Vec<f64> = xs.iter().zip(&x_rule.weights).map(|(x, w)| x.powi(n) * w).collect();
        let mut total: f64 = (0..xs.len())
            .map(|i| xn[i] * values[i * ny..(i + 1) * ny].iter().zip(&ym).map(|(f, y)| f * y).sum::<f64>())
            .sum();
        for s in &x_slices {
            total += s.at.powi(n) * s.values.iter().zip(&ym).map(|(f, y)| f * y).sum::<f64>();
        }
        for s in &y_slices {
            total += s.at.powi(m) * s.values.iter().zip(&xn).map(|(f, x)| f * x).sum::<f64>();
        }
        for (a, b, p) in &points {
            total += a.powi(n) * b.powi(m) * p;
        }
        total
    })?;
    Ok(QuadratureMoments { moments, raw_mass })
}

/// Smallest rectangle, widened by one cell, outside which the recovered
/// continuous density stays below `threshold`; slices and atoms are kept
/// inside.
pub fn detect_support(f: &JointDensityGrid, threshold: f64) -> Option<((f64, f64), (f64, f64))> {
    let (nx, ny) = (f.x_grid.len, f.y_grid.len);
    let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
    for i in 0..nx {
        for j in 0..ny {
            if f.value(i, j) > threshold {
                i0 = i0.min(i);
                i1 = i1.max(i);
                j0 = j0.min(j);
                j1 = j1.max(j);
            }
        }
    }
    let mut x = (f64::INFINITY, f64::NEG_INFINITY);
    let mut y = (f64::INFINITY, f64::NEG_INFINITY);
    if i0 != usize::MAX {
        x = (f.x_grid.point(i0.saturating_sub(1)), f.x_grid.point((i1 + 1).min(nx - 1)));
        y = (f.y_grid.point(j0.saturating_sub(1)), f.y_grid.point((j1 + 1).min(ny - 1)));
    }
    for s in &f.x_slices {
        x = (x.0.min(s.at), x.1.max(s.at));
    }
    for s in &f.y_slices {
        y = (y.0.min(s.at), y.1.max(s.at));
    }
    (x.0 < x.1 && y.0 < y.1).then_some((x, y))
}

/// Recovers on a grid over the padded marginal supports, detects the support
/// of the result and recovers again on that rectangle.
pub fn recover_density_2d_auto(g: &JointGreenEvaluator, n: usize) -> Result<JointDensityGrid> {
    recover_density_2d_auto_with(g, n, &default_options_2d())
}

pub fn recover_density_2d_auto_with(g: &JointGreenEvaluator, n: usize, opts: &RecoveryOptions) -> Result<JointDensityGrid> {
    let hint = |t: Option<(f64, f64)>, name: &str| {
        t.ok_or_else(|| Error::InvalidArgument(format!("{name} marginal has no bounded support; pass an explicit grid")))
    };
    let (x0, x1) = hint(g.marginal_x().support_hint(), "x")?;
    let (y0, y1) = hint(g.marginal_y().support_hint(), "y")?;
    let (gx, gy) = (UniformGrid::padded(x0, x1, 0.05, n)?, UniformGrid::padded(y0, y1, 0.05, n)?);
    // The first pass only locates the support; checks apply to the second.
    let scout = RecoveryOptions { policy: WindowPolicy::Truncated, negativity_tol: f64::INFINITY, ..opts.clone() };
    let first = recover_density_2d_with(g, gx, gy, &scout)?;
    match detect_support(&first, SUPPORT_THRESHOLD) {
        Some(((a, b), (c, d))) => recover_density_2d_with(g, UniformGrid::new(a, b, n)?, UniformGrid::new(c, d, n)?, opts),
        None => recover_density_2d_with(g, gx, gy, opts),
    }
}

/// Rows `k(x_i, ·)` of a transition kernel on a target grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    source: Vec<f64>,
    target: Vec<f64>,
    // Quadrature weights on the target, used for row masses.
    target_weights: Vec<f64>,
    rows: Vec<Vec<f64>>,
    row_atoms: Vec<Vec<(f64, f64)>>,
    mask: Vec<bool>,
    labels: [&'static str; 2],
}

impl TransitionKernel {
    pub(crate) fn new(
        source: Vec<f64>,
        target: Vec<f64>,
        target_weights: Vec<f64>,
        rows: Vec<Vec<f64>>,
        row_atoms: Vec<Vec<(f64, f64)>>,
        mask: Vec<bool>,
    ) -> Self {
        Self { source, target, target_weights, rows, row_atoms, mask, labels: ["x", "y"] }
    }

    /// Column names used by [`TransitionKernel::to_csv`].
    pub(crate) fn with_labels(mut self, source: &'static str, target: &'static str) -> Self {
        self.labels = [source, target];
        self
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Density row for source `i`, `None` when masked.
    pub fn row(&self, i: usize) -> Option<&[f64]> {
        (!self.mask[i]).then(|| self.rows[i].as_slice())
    }

    /// Point masses `(target, mass)` of row `i`.
    pub fn row_atoms(&self, i: usize) -> &[(f64, f64)] {
        &self.row_atoms[i]
    }

    pub fn is_masked(&self, i: usize) -> bool {
        self.mask[i]
    }

    pub fn row_mass(&self, i: usize) -> f64 {
        let cont: f64 = self.rows[i].iter().zip(&self.target_weights).map(|(v, w)| v * w).sum();
        cont + self.row_atoms[i].iter().map(|a| a.1).sum::<f64>()
    }

    /// CSV with header `x,y,k`; masked rows are omitted.
    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{},k\n", self.labels[0], self.labels[1]);
        for (i, x) in self.source.iter().enumerate() {
            if self.mask[i] {
                continue;
            }
            for (y, k) in self.target.iter().zip(&self.rows[i]) {
                out.push_str(&format!("{x:.16e},{y:.16e},{k:.16e}\n"));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "source": self.source,
            "target": self.target,
            "mask": self.mask,
            "values": self.rows.concat(),
            "row_atoms": self.row_atoms,
        })
    }
}

/// `k(x, dy) = f(x, y) dy / f_X(x)`.
///
/// On a probability window each row is renormalized to mass 1. On a
/// truncated window the divisor is the one-variable density of the first
/// marginal and rows keep the mass the window holds.
pub fn transition_kernel(f: &JointDensityGrid) -> TransitionKernel {
    let (nx, ny) = (f.x_grid.len, f.y_grid.len);
    let wy = f.y_grid.weights();
    let divisor = f.reference_x.as_deref().unwrap_or(&f.marginal_x);
    let (rows, (atoms, mask)): (Vec<Vec<f64>>, (Vec<_>, Vec<bool>)) = (0..nx)
        .into_par_iter()
        .map(|i| {
            let m = divisor[i];
            if !(m > MARGINAL_FLOOR) {
                return (vec![0.0; ny], (Vec::new(), true));
            }
            let mut row: Vec<f64> = f.values[i * ny..(i + 1) * ny].iter().map(|v| v / m).collect();
            let mut atoms: Vec<(f64, f64)> =
                f.y_slices.iter().map(|s| (s.at, s.values[i] / m)).filter(|a| a.1 > 0.0).collect();
            if f.policy == WindowPolicy::Probability {
                let mass = row.iter().zip(&wy).map(|(v, w)| v * w).sum::<f64>() + atoms.iter().map(|a| a.1).sum::<f64>();
                if mass > 0.0 {
                    row.iter_mut().for_each(|v| *v /= mass);
                    atoms.iter_mut().for_each(|a| a.1 /= mass);
                }
            }
            (row, (atoms, false))
        })
        .unzip();
    TransitionKernel::new(f.x_grid.points(), f.y_grid.points(), wy, rows, atoms, mask)
}

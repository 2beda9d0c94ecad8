//! Joint densities on the torus by two-variable Poisson recovery, and
//! transition kernels of unitary processes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::f64::consts::PI;

use super::joint::{JointPsiEvaluator, WPoint, ZPoint};
use crate::additive2d::TransitionKernel;
use crate::error::{Error, Result};
use crate::grid::{circle_angles, extrapolate_to_zero};
use crate::transforms1d::RADIAL_SCHEDULE;

/// Distances `1 − r` of the default radial schedule, coarse to fine; the
/// same as the one-variable circle schedule.
pub const TORUS_SCHEDULE: [f64; 4] = RADIAL_SCHEDULE;

/// How samples along the radial schedule are taken to `r = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadialFit {
    /// Line through the two finest samples.
    Linear,
    /// Interpolating polynomial through all samples.
    Polynomial,
}

/// Settings for [`recover_density_torus_with`].
#[derive(Debug, Clone, PartialEq)]
pub struct TorusRecovery {
    pub schedule: Vec<f64>,
    pub fit: RadialFit,
    pub mass_window: (f64, f64),
    pub negativity_tol: f64,
}

impl Default for TorusRecovery {
    fn default() -> Self {
        Self {
            schedule: TORUS_SCHEDULE.to_vec(),
            fit: RadialFit::Polynomial,
            mass_window: (0.99, 1.01),
            negativity_tol: 1e-5,
        }
    }
}

/// Density on the `N × N` grid of angle pairs `(2πi/N, 2πk/N)`, relative to
/// normalized Haar measure on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusDensityGrid {
    n: usize,
    values: Vec<f64>,
    marginal_s: Vec<f64>,
    marginal_t: Vec<f64>,
    /// Mass before clamping and renormalization.
    pub raw_mass: f64,
}

impl TorusDensityGrid {
    pub fn from_values(n: usize, values: Vec<f64>, raw_mass: f64) -> Result<Self> {
        if n < 2 || values.len() != n * n {
            return Err(Error::InvalidArgument(format!("need {n}×{n} values, got {}", values.len())));
        }
        let marginal_s = (0..n).map(|i| values[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64).collect();
        let marginal_t = (0..n).map(|k| (0..n).map(|i| values[i * n + k]).sum::<f64>() / n as f64).collect();
        Ok(Self { n, values, marginal_s, marginal_t, raw_mass })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn angles(&self) -> Vec<f64> {
        circle_angles(self.n)
    }

    /// Density at `(2πi/N, 2πk/N)`.
    pub fn value(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Density relative to `ds dt` in radians.
    pub fn density_per_radian2(&self, i: usize, k: usize) -> f64 {
        self.value(i, k) / (4.0 * PI * PI)
    }

    /// Density of the first angle, relative to normalized Haar measure.
    pub fn marginal_s(&self) -> &[f64] {
        &self.marginal_s
    }

    pub fn marginal_t(&self) -> &[f64] {
        &self.marginal_t
    }

    pub fn total_mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / (self.n * self.n) as f64
    }

    /// `∫ sⁿ tᵐ dμ(s, t)`.
    pub fn moment(&self, n: i64, m: i64) -> Complex64 {
        let angles = self.angles();
        let mut total = Complex64::new(0.0, 0.0);
        for (i, a) in angles.iter().enumerate() {
            let row: Complex64 =
                angles.iter().enumerate().map(|(k, b)| self.value(i, k) * Complex64::from_polar(1.0, m as f64 * b)).sum();
            total += row * Complex64::from_polar(1.0, n as f64 * a);
        }
        total / (self.n * self.n) as f64
    }

    pub fn to_csv(&self) -> String {
        let angles = self.angles();
        let mut out = String::from("angle_s,angle_t,f\n");
        for (i, s) in angles.iter().enumerate() {
            for (k, t) in angles.iter().enumerate() {
                out.push_str(&format!("{s:.16e},{t:.16e},{:.16e}\n", self.value(i, k)));
            }
        }
        out
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "angles": self.angles(),
            "values": self.values,
            "marginal_s": self.marginal_s,
            "marginal_t": self.marginal_t,
            "raw_mass": self.raw_mass,
            "normalization": "normalized_haar",
        })
    }
}

/// [`recover_density_torus_with`] with the default settings.
pub fn recover_density_torus(j: &JointPsiEvaluator, n: usize) -> Result<TorusDensityGrid> {
    recover_density_torus_with(j, n, &TorusRecovery::default())
}

/// Joint density of the pair on an `n × n` angle grid.
///
/// With `z = r e^{-iθ}` and `w = r e^{-iφ}`, `Re[(g(z, w) − g(1/z̄, w))/2]`
/// is the two-variable Poisson integral of `μ` at radius `r` around
/// `(e^{iθ}, e^{iφ})`; the radial samples are extrapolated to `r = 1`.
pub fn recover_density_torus_with(j: &JointPsiEvaluator, n: usize, opts: &TorusRecovery) -> Result<TorusDensityGrid> {
    if n < 2 {
        return Err(Error::InvalidArgument("torus recovery needs at least two angles".into()));
    }
    if !j.has_exterior() {
        return Err(Error::ExteriorUnavailable(
            "torus recovery needs the pair at reflected points 1/conj(z)".into(),
        ));
    }
    let angles = circle_angles(n);
    let radii: Vec<f64> = opts.schedule.iter().map(|d| 1.0 - d).collect();
    // Per radius: prepared points z, 1/z̄ and w along the angles.
    let zin: Vec<Vec<ZPoint>> = radii
        .iter()
        .map(|r| angles.iter().map(|a| j.prep_z(Complex64::from_polar(*r, -a))).collect())
        .collect::<Result<_>>()?;
    let zout: Vec<Vec<ZPoint>> = radii
        .iter()
        .map(|r| angles.iter().map(|a| j.prep_z(Complex64::from_polar(1.0 / r, -a))).collect())
        .collect::<Result<_>>()?;
    let ws: Vec<Vec<WPoint>> = radii
        .iter()
        .map(|r| angles.iter().map(|a| j.prep_w(Complex64::from_polar(*r, -a))).collect())
        .collect::<Result<_>>()?;

    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|k| {
                    let samples = (0..radii.len())
                        .map(|e| {
                            let inner = j.g_prepared(&zin[e][i], &ws[e][k])?;
                            let outer = j.g_prepared(&zout[e][i], &ws[e][k])?;
                            Ok(0.5 * (inner - outer).re)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(radial_limit(opts, &samples))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?
        .concat();

    let raw_mass = values.iter().sum::<f64>() / (n * n) as f64;
    let (lo, hi) = opts.mass_window;
    if !(raw_mass >= lo && raw_mass <= hi) {
        return Err(Error::InversionMass { mass: raw_mass });
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -opts.negativity_tol {
        return Err(Error::Negativity { min });
    }
    let clamped: Vec<f64> = values.into_iter().map(|v| v.max(0.0)).collect();
    let total = clamped.iter().sum::<f64>() / (n * n) as f64;
    TorusDensityGrid::from_values(n, clamped.into_iter().map(|v| v / total).collect(), raw_mass)
}

fn radial_limit(opts: &TorusRecovery, samples: &[f64]) -> f64 {
    let d = &opts.schedule;
    match opts.fit {
        RadialFit::Polynomial => extrapolate_to_zero(d, samples),
        RadialFit::Linear => {
            let k = d.len();
            if k == 1 {
                samples[0]
            } else {
                extrapolate_to_zero(&d[k - 2..], &samples[k - 2..])
            }
        }
    }
}

/// Transition density of the unitary free Lévy process from time `ℓ` to
/// `r`, relative to normalized Haar measure in `t`:
/// `(1 − e^{2(ℓ−r)})/|s⁻¹t − e^{ℓ−r}|²` at angles `s`, `t`.
pub fn levy_kernel(l: f64, r: f64, s: f64, t: f64) -> Result<f64> {
    if !(l >= 0.0 && l < r && r.is_finite()) {
        return Err(Error::TimeOrder { lower: l, upper: r });
    }
    let rho = (l - r).exp();
    Ok((1.0 - rho * rho) / (Complex64::from_polar(1.0, t - s) - rho).norm_sqr())
}

/// Joint density of the unitary free Lévy process at times `ℓ < r`,
/// relative to normalized Haar measure on the torus.
pub fn levy_joint_density(l: f64, r: f64, s: f64, t: f64) -> Result<f64> {
    let k = levy_kernel(l, r, s, t)?;
    let rho = (-l).exp();
    Ok(k * (1.0 - rho * rho) / (rho - Complex64::from_polar(1.0, s)).norm_sqr())
}

/// Rows `t ↦ f(s, t)/f_U(s)`, renormalized to mass 1 under normalized Haar
/// measure. Sources whose marginal density is below `floor` are masked.
pub fn circle_transition_kernel(f: &TorusDensityGrid) -> TransitionKernel {
    circle_transition_kernel_with(f, crate::additive2d::MARGINAL_FLOOR)
}

pub fn circle_transition_kernel_with(f: &TorusDensityGrid, floor: f64) -> TransitionKernel {
    let n = f.len();
    let angles = f.angles();
    let mut rows = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    for i in 0..n {
        let m = f.marginal_s()[i];
        let masked = !(m > floor);
        mask.push(masked);
        if masked {
            rows.push(vec![0.0; n]);
            continue;
        }
        let row: Vec<f64> = (0..n).map(|k| f.value(i, k)).collect();
        let mass = row.iter().sum::<f64>() / n as f64;
        rows.push(row.into_iter().map(|v| v / mass).collect());
    }
    TransitionKernel::new(angles.clone(), angles, vec![1.0 / n as f64; n], rows, vec![Vec::new(); n], mask)
        .with_labels("angle_s", "angle_t")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::{joint_moments_from_table, table_from_joint_moments, MomentTable};
    use crate::measures::CircleMeasure;
    use crate::multiplicative2d::{bifree_mult_convolve, independent_pair, levy_pair};
    use crate::transforms1d::recover_circle_density;
    use std::sync::Arc;

    fn sup<F: Fn(usize, usize) -> f64>(f: &TorusDensityGrid, want: F) -> f64 {
        let n = f.len();
        (0..n * n).map(|idx| (f.value(idx / n, idx % n) - want(idx / n, idx % n)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn haar_pair_is_uniform() {
        let haar = Arc::new(CircleMeasure::grid(vec![1.0; 8]).unwrap());
        let j = JointPsiEvaluator::from_psi2(|_, _| Ok(Complex64::new(0.0, 0.0)), haar.clone(), haar);
        let f = recover_density_torus(&j, 16).unwrap();
        assert!(sup(&f, |_, _| 1.0) < 1e-12);
        assert!((f.density_per_radian2(3, 5) - 1.0 / (4.0 * PI * PI)).abs() < 1e-12);
        assert!((f.raw_mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn levy_density_and_kernel() {
        let (l, r) = (0.5, 1.0);
        let f = recover_density_torus(&levy_pair(l, r).unwrap(), 512).unwrap();
        let a = f.angles();
        assert!(sup(&f, |i, k| levy_joint_density(l, r, a[i], a[k]).unwrap()) < 5e-3);
        let kernel = circle_transition_kernel(&f);
        let mut worst: f64 = 0.0;
        for (i, s) in a.iter().enumerate() {
            let row = kernel.row(i).unwrap();
            for (k, t) in a.iter().enumerate() {
                worst = worst.max((row[k] - levy_kernel(l, r, *s, *t).unwrap()).abs());
            }
        }
        assert!(worst < 5e-3, "{worst}");
    }

    #[test]
    fn marginals_and_product_pairs() {
        let (mu, mv) = (CircleMeasure::levy(0.3).unwrap(), CircleMeasure::levy(0.6).unwrap());
        let n = 256;
        let f = recover_density_torus(&independent_pair(&mu, &mv), n).unwrap();
        let (du, dv) = (recover_circle_density(&mu, n).unwrap(), recover_circle_density(&mv, n).unwrap());
        let a = f.angles();
        assert!(sup(&f, |i, k| du.density_at(a[i]) * dv.density_at(a[k])) < 1e-3);

        let j = levy_pair(0.4, 0.9).unwrap();
        let f = recover_density_torus(&j, n).unwrap();
        let du = recover_circle_density(j.marginal_u().as_ref(), n).unwrap();
        let dv = recover_circle_density(j.marginal_v().as_ref(), n).unwrap();
        for (i, s) in a.iter().enumerate() {
            assert!((f.marginal_s()[i] - du.density_at(*s)).abs() < 1e-3);
            assert!((f.marginal_t()[i] - dv.density_at(*s)).abs() < 1e-3);
        }
    }

    #[test]
    fn levy_kernel_properties() {
        let n = 512;
        let a = circle_angles(n);
        for s in [0.0, 1.3, 4.0] {
            let mean = a.iter().map(|t| levy_kernel(0.2, 0.5, s, *t).unwrap()).sum::<f64>() / n as f64;
            assert!((mean - 1.0).abs() < 1e-6);
            assert!((levy_kernel(0.0, 40.0, s, 2.0).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(matches!(levy_kernel(0.5, 0.5, 0.0, 0.0), Err(Error::TimeOrder { .. })));
        assert!(matches!(levy_joint_density(-0.1, 0.5, 0.0, 0.0), Err(Error::TimeOrder { .. })));
    }

    #[test]
    fn torus_moments_match_cumulant_oracle() {
        // t = s·u with u ~ Lévy(r − ℓ) free of s ~ Lévy(ℓ) and commuting.
        let (l, r) = (0.5, 1.0);
        let exact = MomentTable::from_fn(4, |n, m| {
            Complex64::new((-l * (n + m) as f64 - (r - l) * m as f64).exp(), 0.0)
        })
        .unwrap();
        let want = joint_moments_from_table(&table_from_joint_moments(&exact).unwrap()).unwrap();
        let f = recover_density_torus(&levy_pair(l, r).unwrap(), 256).unwrap();
        for n in 0..=4 {
            for m in 0..=4 - n {
                let got = f.moment(n as i64, m as i64);
                assert!((got - want.get(n, m).unwrap()).norm() < 1e-3, "({n},{m}): {got}");
            }
        }
    }

    #[test]
    fn output_shapes() {
        let f = TorusDensityGrid::from_values(2, vec![1.0, 2.0, 0.5, 0.5], 1.0).unwrap();
        let csv = f.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "angle_s,angle_t,f");
        assert_eq!(lines.len(), 5);
        assert_eq!(f.marginal_s(), &[1.5, 0.5]);
        assert_eq!(f.marginal_t(), &[0.75, 1.25]);
        let js = f.to_json();
        assert_eq!(js["n"], 2);
        assert_eq!(js["values"].as_array().unwrap().len(), 4);
        assert!(TorusDensityGrid::from_values(3, vec![1.0; 4], 1.0).is_err());
        assert!(kernel_header(&f).starts_with("angle_s,angle_t,k"));
    }

    fn kernel_header(f: &TorusDensityGrid) -> String {
        circle_transition_kernel(f).to_csv()
    }

    #[test]
    fn fitted_pairs_have_no_torus_density() {
        let j = bifree_mult_convolve(&levy_pair(0.2, 0.4).unwrap(), &levy_pair(0.1, 0.3).unwrap()).unwrap();
        assert!(matches!(recover_density_torus(&j, 16), Err(Error::ExteriorUnavailable(_))));
        assert!(matches!(recover_density_torus(&j, 1), Err(Error::InvalidArgument(_))));
    }
}

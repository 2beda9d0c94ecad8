//! Two-variable ψ, H and g transforms of commuting unitary pairs, the
//! opposite bi-free partial S-transform and bi-free multiplicative
//! convolution.

use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::cumulants::{table_from_joint_moments, CumulantTable, MomentTable};
use crate::error::{Error, Result};
use crate::measures::CircleMeasure;
use crate::transforms1d::{FreeMultConvolution, PsiTransform};

/// Denominators of the S^op quotient below this are reported as singular.
pub const SOP_TOL: f64 = 1e-14;

/// Relative distance to the removable pole of the increment formula below
/// which the derivative limit is used.
pub const NEAR_POLE: f64 = 1e-6;

/// Radius of the lattice on which convolution outputs are fitted.
pub const FIT_RADIUS: f64 = 0.5;

/// Lattice points per variable for convolution fits.
pub const FIT_POINTS: usize = 64;

/// Largest power of each variable kept by convolution fits.
pub const FIT_DEGREE: usize = 20;

type Psi2Fn = Arc<dyn Fn(Complex64, Complex64) -> Result<Complex64> + Send + Sync>;

// Supplies q(w) = ψ_U⁻¹(ψ_{VU}(w)).
#[derive(Clone)]
enum QMap {
    Inverse,
    Subordinated(FreeMultConvolution),
}

#[derive(Clone)]
enum Kind {
    Independent,
    Diagonal,
    Increment(QMap),
    Custom(Psi2Fn),
    // Coefficients c[n][m] of H, valid for |z|, |w| ≤ radius.
    Series { coeffs: Vec<Vec<Complex64>>, radius: f64 },
}

/// Two-variable ψ-transform of a commuting unitary pair `(U, V)`, with its
/// marginal ψ-transforms.
///
/// Closed-form pairs evaluate at any `z` off the circle, which the torus
/// recovery needs; fitted pairs only inside their fit radius.
#[derive(Clone)]
pub struct JointPsiEvaluator {
    kind: Kind,
    u: Arc<dyn PsiTransform>,
    v: Arc<dyn PsiTransform>,
}

/// Per-point data for the first variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZPoint {
    pub at: Complex64,
    psi: Complex64,
}

/// Per-point data for the second variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WPoint {
    pub at: Complex64,
    psi: Complex64,
    q: Complex64,
}

fn off_circle(z: Complex64) -> Result<()> {
    if (z.norm() - 1.0).abs() < 1e-15 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::DomainEscape(format!("{z} is not off the unit circle")));
    }
    Ok(())
}

fn check_times(l: f64, r: f64) -> Result<()> {
    if !(l >= 0.0 && l < r && r.is_finite()) {
        return Err(Error::TimeOrder { lower: l, upper: r });
    }
    Ok(())
}

impl JointPsiEvaluator {
    /// Pair given by its two-variable ψ-transform `psi2(z, w)`.
    pub fn from_psi2<F>(psi2: F, u: Arc<dyn PsiTransform>, v: Arc<dyn PsiTransform>) -> Self
    where
        F: Fn(Complex64, Complex64) -> Result<Complex64> + Send + Sync + 'static,
    {
        Self { kind: Kind::Custom(Arc::new(psi2)), u, v }
    }

    pub fn marginal_u(&self) -> &Arc<dyn PsiTransform> {
        &self.u
    }

    pub fn marginal_v(&self) -> &Arc<dyn PsiTransform> {
        &self.v
    }

    /// True when the pair can be evaluated at `z` outside the disc.
    pub fn has_exterior(&self) -> bool {
        !matches!(self.kind, Kind::Series { .. })
    }

    pub fn prep_z(&self, z: Complex64) -> Result<ZPoint> {
        off_circle(z)?;
        self.check_series(z)?;
        Ok(ZPoint { at: z, psi: self.u.psi_at(z)? })
    }

    pub fn prep_w(&self, w: Complex64) -> Result<WPoint> {
        off_circle(w)?;
        self.check_series(w)?;
        let (psi, q) = match &self.kind {
            Kind::Increment(QMap::Inverse) => {
                let psi = self.v.psi_at(w)?;
                (psi, self.u.psi_inverse(psi)?)
            }
            Kind::Increment(QMap::Subordinated(conv)) => {
                if w.norm() >= 1.0 {
                    return Err(Error::ExteriorUnavailable("the increment map needs |w| < 1".into()));
                }
                let q = conv.subordinators(w)?.0;
                (self.u.psi(q)?, q)
            }
            _ => (self.v.psi_at(w)?, w),
        };
        Ok(WPoint { at: w, psi, q })
    }

    fn check_series(&self, z: Complex64) -> Result<()> {
        match &self.kind {
            Kind::Series { radius, .. } if z.norm() > radius * (1.0 + 1e-12) => {
                if z.norm() > 1.0 {
                    Err(Error::ExteriorUnavailable(format!(
                        "fitted pair has no values outside the disc (|{z}| > 1)"
                    )))
                } else {
                    Err(Error::DomainEscape(format!("{z} is outside the fit radius {radius}")))
                }
            }
            _ => Ok(()),
        }
    }

    /// `H(z, w)` from prepared points.
    pub fn combine(&self, zp: &ZPoint, wp: &WPoint) -> Result<Complex64> {
        let (z, w) = (zp.at, wp.at);
        match &self.kind {
            Kind::Independent => Ok((1.0 + zp.psi) * (1.0 + wp.psi)),
            Kind::Diagonal => self.difference_quotient(z, zp.psi, w, wp.psi),
            Kind::Increment(_) => self.difference_quotient(z, zp.psi, wp.q, wp.psi),
            Kind::Custom(f) => Ok(f(z, w)? + zp.psi + wp.psi + 1.0),
            Kind::Series { coeffs, .. } => Ok(coeffs
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, row| {
                    acc * z + row.iter().rev().fold(Complex64::new(0.0, 0.0), |a, c| a * w + c)
                })),
        }
    }

    // 1 + (zψ_U(z) − qψ_U(q))/(z − q), where ψ_U(q) is given as `pq`.
    fn difference_quotient(&self, z: Complex64, pz: Complex64, q: Complex64, pq: Complex64) -> Result<Complex64> {
        let den = z - q;
        let scale = (1.0 - z.norm()).abs().min((1.0 - q.norm()).abs());
        if den.norm() < NEAR_POLE * scale {
            let mid = 0.5 * (z + q);
            if mid.norm() >= 1.0 {
                return Err(Error::PoleProximity { re: z.re, im: z.im });
            }
            return Ok(1.0 + self.u.psi(mid)? + mid * self.u.psi_prime(mid)?);
        }
        Ok(1.0 + (z * pz - q * pq) / den)
    }

    /// `H(z, w) = ψ_{U,V}(z, w) + ψ_U(z) + ψ_V(w) + 1`.
    pub fn h(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        self.combine(&self.prep_z(z)?, &self.prep_w(w)?)
    }

    pub fn psi2(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        let (zp, wp) = (self.prep_z(z)?, self.prep_w(w)?);
        Ok(self.combine(&zp, &wp)? - zp.psi - wp.psi - 1.0)
    }

    /// `g = 4ψ_{U,V} + 2(ψ_U + ψ_V) + 1 = 4H − 2ψ_U − 2ψ_V − 3`.
    pub fn g(&self, z: Complex64, w: Complex64) -> Result<Complex64> {
        let (zp, wp) = (self.prep_z(z)?, self.prep_w(w)?);
        self.g_prepared(&zp, &wp)
    }

    pub fn g_prepared(&self, zp: &ZPoint, wp: &WPoint) -> Result<Complex64> {
        Ok(4.0 * self.combine(zp, wp)? - 2.0 * zp.psi - 2.0 * wp.psi - 3.0)
    }
}

/// `(U, V)` with `U` and `V` classically independent.
pub fn independent_pair(m_u: &CircleMeasure, m_v: &CircleMeasure) -> JointPsiEvaluator {
    JointPsiEvaluator { kind: Kind::Independent, u: Arc::new(m_u.clone()), v: Arc::new(m_v.clone()) }
}

/// `(U, U)`: `H(z, w) = 1 + (zψ_U(z) − wψ_U(w))/(z − w)`.
pub fn diagonal_pair(m_u: &CircleMeasure) -> JointPsiEvaluator {
    let u: Arc<dyn PsiTransform> = Arc::new(m_u.clone());
    JointPsiEvaluator { kind: Kind::Diagonal, u: u.clone(), v: u }
}

/// `(L(U), R(VU))` from the laws of `U` and `VU`, with `q = ψ_U⁻¹(ψ_{VU}(w))`.
pub fn increment_pair(m_u: &CircleMeasure, m_vu: &CircleMeasure) -> Result<JointPsiEvaluator> {
    if m_u.first_moment().norm() < 1e-14 || m_vu.first_moment().norm() < 1e-14 {
        return Err(Error::STransformUndefined);
    }
    Ok(JointPsiEvaluator {
        kind: Kind::Increment(QMap::Inverse),
        u: Arc::new(m_u.clone()),
        v: Arc::new(m_vu.clone()),
    })
}

/// `(L(U), R(VU))` from the laws of `U` and `V`, with `q` the subordination
/// function of `U` in `V ⊠ U`.
pub fn increment_pair_of(m_u: &CircleMeasure, m_v: &CircleMeasure) -> Result<JointPsiEvaluator> {
    if m_u.first_moment().norm() < 1e-14 || m_v.first_moment().norm() < 1e-14 {
        return Err(Error::STransformUndefined);
    }
    let conv = FreeMultConvolution::of(m_u, m_v);
    Ok(JointPsiEvaluator {
        kind: Kind::Increment(QMap::Subordinated(conv.clone())),
        u: Arc::new(m_u.clone()),
        v: Arc::new(conv),
    })
}

/// The unitary free Lévy process at times `ℓ < r`.
pub fn levy_pair(l: f64, r: f64) -> Result<JointPsiEvaluator> {
    check_times(l, r)?;
    increment_pair(&CircleMeasure::levy(l)?, &CircleMeasure::levy(r)?)
}

pub fn h_from_psi2(j: &JointPsiEvaluator, z: Complex64, w: Complex64) -> Result<Complex64> {
    j.h(z, w)
}

pub fn g_from_psi2(j: &JointPsiEvaluator, z: Complex64, w: Complex64) -> Result<Complex64> {
    j.g(z, w)
}

/// `H` of the increment pair of `m_u` and `m_vu` at one point.
pub fn h_increment(m_u: &CircleMeasure, m_vu: &CircleMeasure, z: Complex64, w: Complex64) -> Result<Complex64> {
    increment_pair(m_u, m_vu)?.h(z, w)
}

// Quotient of the opposite S-transform given H at the inverse point.
fn s_op_quotient(h: Complex64, z: Complex64, w: Complex64) -> Result<Complex64> {
    let den = h - (z + 1.0);
    if den.norm() < SOP_TOL {
        return Err(Error::SOpSingularity(den.norm()));
    }
    Ok(w * (z + 1.0) / (z * (w + 1.0)) * (h - (w + 1.0)) / den)
}

fn nonzero_point(z: Complex64, w: Complex64) -> Result<()> {
    if z.norm() < 1e-300 || w.norm() < 1e-300 {
        return Err(Error::InvalidArgument("S^op needs z ≠ 0 and w ≠ 0".into()));
    }
    Ok(())
}

/// Opposite bi-free partial S-transform from `H` at `(ψ_U⁻¹(z), ψ_V⁻¹(w))`.
pub fn opposite_partial_s_from_h(j: &JointPsiEvaluator, z: Complex64, w: Complex64) -> Result<Complex64> {
    nonzero_point(z, w)?;
    let h = j.h(j.u.psi_inverse(z)?, j.v.psi_inverse(w)?)?;
    s_op_quotient(h, z, w)
}

/// Opposite bi-free partial S-transform from the two-face cumulants:
/// `(1 + K(a, b)/z)/(1 + K(a, b)/w)` with `a = zS_U(z)`, `b = wS_V(w)` and
/// `K` the series of the mixed cumulants.
pub fn opposite_partial_s_from_cumulants(
    table: &CumulantTable<Complex64>,
    u: &dyn PsiTransform,
    v: &dyn PsiTransform,
    z: Complex64,
    w: Complex64,
) -> Result<Complex64> {
    nonzero_point(z, w)?;
    // Arguments zS(z) with S(z) = (1 + z)ψ⁻¹(z)/z.
    let a = (1.0 + z) * u.psi_inverse(z)?;
    let b = (1.0 + w) * v.psi_inverse(w)?;
    let mut k = Complex64::new(0.0, 0.0);
    for (n, m, c) in table.mixed() {
        k += c * a.powi(n as i32) * b.powi(m as i32);
    }
    let den = 1.0 + k / w;
    if den.norm() < SOP_TOL {
        return Err(Error::SOpSingularity(den.norm()));
    }
    Ok((1.0 + k / z) / den)
}

// Two-dimensional DFT of samples on the torus of radius `radius`, giving the
// Taylor coefficients c[n][m] for n, m ≤ degree.
fn torus_coefficients(samples: &[Vec<Complex64>], radius: f64, degree: usize) -> Vec<Vec<Complex64>> {
    let p = samples.len();
    let twiddle = |k: usize, n: usize| Complex64::from_polar(1.0, -2.0 * PI * ((k * n) % p) as f64 / p as f64);
    // Transform along w for each z, then along z.
    let half: Vec<Vec<Complex64>> = samples
        .iter()
        .map(|row| (0..=degree).map(|m| row.iter().enumerate().map(|(k, h)| h * twiddle(k, m)).sum()).collect())
        .collect();
    (0..=degree)
        .map(|n| {
            (0..=degree)
                .map(|m| {
                    let sum: Complex64 = (0..p).map(|j| half[j][m] * twiddle(j, n)).sum();
                    sum / ((p * p) as f64 * radius.powi((n + m) as i32))
                })
                .collect()
        })
        .collect()
}

/// `φ(Uⁿ Vᵐ)` for `n + m ≤ order`, read off the Taylor coefficients of `H`.
pub fn joint_moment_table(j: &JointPsiEvaluator, order: usize) -> Result<MomentTable<Complex64>> {
    let radius = match j.kind {
        Kind::Series { radius, .. } => radius,
        _ => FIT_RADIUS,
    };
    let p = FIT_POINTS;
    let nodes: Vec<Complex64> = (0..p).map(|k| Complex64::from_polar(radius, 2.0 * PI * k as f64 / p as f64)).collect();
    let zs: Vec<ZPoint> = nodes.iter().map(|z| j.prep_z(*z)).collect::<Result<_>>()?;
    let ws: Vec<WPoint> = nodes.iter().map(|w| j.prep_w(*w)).collect::<Result<_>>()?;
    let samples: Vec<Vec<Complex64>> =
        zs.iter().map(|z| ws.iter().map(|w| j.combine(z, w)).collect()).collect::<Result<_>>()?;
    let c = torus_coefficients(&samples, radius, order);
    MomentTable::from_fn(order, |n, m| c[n][m])
}

/// Two-face cumulants of the pair, from [`joint_moment_table`].
pub fn joint_cumulant_table(j: &JointPsiEvaluator, order: usize) -> Result<CumulantTable<Complex64>> {
    table_from_joint_moments(&joint_moment_table(j, order)?)
}

/// Opposite bi-free multiplicative convolution: the pair `(U₁U₂, V₁V₂)` for
/// bi-free pairs `(U₁, V₁)` and `(U₂, V₂)`.
///
/// The output `H` is obtained from `S^op_out = S^op_1 S^op_2` on a polar
/// lattice of radius [`FIT_RADIUS`] and stored as a Taylor polynomial of
/// degree [`FIT_DEGREE`] in each variable.
pub fn bifree_mult_convolve(j1: &JointPsiEvaluator, j2: &JointPsiEvaluator) -> Result<JointPsiEvaluator> {
    for m in [&j1.u, &j1.v, &j2.u, &j2.v] {
        if m.first_moment()?.norm() < 1e-14 {
            return Err(Error::STransformUndefined);
        }
    }
    let cu = FreeMultConvolution::new(j1.u.clone(), j2.u.clone());
    let cv = FreeMultConvolution::new(j1.v.clone(), j2.v.clone());
    let p = FIT_POINTS;
    let nodes: Vec<Complex64> =
        (0..p).map(|k| Complex64::from_polar(FIT_RADIUS, 2.0 * PI * k as f64 / p as f64)).collect();

    // At each lattice point, the two inner points of each factor and ψ_out.
    let side = |conv: &FreeMultConvolution, first: &dyn PsiTransform| -> Result<Vec<(Complex64, Complex64, Complex64)>> {
        nodes
            .iter()
            .map(|z| {
                let (w1, w2) = conv.subordinators(*z)?;
                Ok((w1, w2, first.psi(w1)?))
            })
            .collect()
    };
    let zs = side(&cu, j1.u.as_ref())?;
    let ws = side(&cv, j1.v.as_ref())?;
    let z1: Vec<ZPoint> = zs.iter().map(|s| j1.prep_z(s.0)).collect::<Result<_>>()?;
    let z2: Vec<ZPoint> = zs.iter().map(|s| j2.prep_z(s.1)).collect::<Result<_>>()?;
    let w1: Vec<WPoint> = ws.iter().map(|s| j1.prep_w(s.0)).collect::<Result<_>>()?;
    let w2: Vec<WPoint> = ws.iter().map(|s| j2.prep_w(s.1)).collect::<Result<_>>()?;

    let fail = |e: Error| Error::ConvolutionFailed(e.to_string());
    let mut samples = vec![vec![Complex64::new(0.0, 0.0); p]; p];
    for i in 0..p {
        let a = zs[i].2;
        for k in 0..p {
            let b = ws[k].2;
            // ρ = (H − (b + 1))/(H − (a + 1)); the prefactor of S^op is
            // shared by both factors and the output.
            let rho = |h: Complex64| -> Result<Complex64> {
                let den = h - (a + 1.0);
                if den.norm() < SOP_TOL {
                    return Err(Error::SOpSingularity(den.norm()));
                }
                Ok((h - (b + 1.0)) / den)
            };
            let r1 = rho(j1.combine(&z1[i], &w1[k])?).map_err(fail)?;
            let r2 = rho(j2.combine(&z2[i], &w2[k])?).map_err(fail)?;
            let pre = b * (a + 1.0) / (a * (b + 1.0));
            let r = pre * r1 * r2;
            if (1.0 - r).norm() < SOP_TOL {
                return Err(fail(Error::SOpSingularity((1.0 - r).norm())));
            }
            samples[i][k] = ((b + 1.0) - r * (a + 1.0)) / (1.0 - r);
        }
    }
    let coeffs = torus_coefficients(&samples, FIT_RADIUS, FIT_DEGREE);
    Ok(JointPsiEvaluator { kind: Kind::Series { coeffs, radius: FIT_RADIUS }, u: Arc::new(cu), v: Arc::new(cv) })
}

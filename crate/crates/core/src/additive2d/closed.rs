//! Closed-form joint densities and kernels of the free Gaussian and free
//! Cauchy processes.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub(crate) fn check_gaussian(a: f64, b: f64, c: f64) -> Result<()> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("variances must be positive, got a = {a}, b = {b}")));
    }
    if c * c >= a * b {
        return Err(Error::DegenerateCorrelation { c2: c * c, ab: a * b });
    }
    Ok(())
}

// Common denominator of the density and the kernel, in normalized variables.
fn gaussian_denominator(lambda: f64, u: f64, v: f64) -> f64 {
    let l2 = lambda * lambda;
    (1.0 - l2).powi(2) - lambda * (1.0 + l2) * u * v + l2 * (u * u + v * v)
}

/// Joint density of the bi-free Gaussian pair with covariance `(a, c; c, b)`.
pub fn gaussian_joint_density(a: f64, b: f64, c: f64, x: f64, y: f64) -> Result<f64> {
    check_gaussian(a, b, c)?;
    if x * x >= 4.0 * a || y * y >= 4.0 * b {
        return Ok(0.0);
    }
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let lambda = c / (sa * sb);
    let num = (1.0 - lambda * lambda) * (4.0 * a - x * x).sqrt() * (4.0 * b - y * y).sqrt();
    Ok(num / (4.0 * PI * PI * a * b * gaussian_denominator(lambda, x / sa, y / sb)))
}

/// Transition density `y ↦ k(x, y)` of the bi-free Gaussian pair.
pub fn gaussian_kernel(a: f64, b: f64, c: f64, x: f64, y: f64) -> Result<f64> {
    check_gaussian(a, b, c)?;
    if x * x >= 4.0 * a || y * y >= 4.0 * b {
        return Ok(0.0);
    }
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let lambda = c / (sa * sb);
    let num = (1.0 - lambda * lambda) * (4.0 * b - y * y).sqrt();
    Ok(num / (2.0 * PI * b * gaussian_denominator(lambda, x / sa, y / sb)))
}

fn check_times(l: f64, r: f64) -> Result<()> {
    if !(l > 0.0 && l < r && r.is_finite()) {
        return Err(Error::TimeOrder { lower: l, upper: r });
    }
    Ok(())
}

/// Transition density of the free Cauchy process from time `l` to time `r`.
pub fn cauchy_kernel(l: f64, r: f64, x: f64, y: f64) -> Result<f64> {
    check_times(l, r)?;
    let t = r - l;
    Ok(t / (PI * ((x - y).powi(2) + t * t)))
}

/// Joint density of the free Cauchy process at times `l < r`.
pub fn cauchy_joint_density(l: f64, r: f64, x: f64, y: f64) -> Result<f64> {
    Ok(l / (PI * (x * x + l * l)) * cauchy_kernel(l, r, x, y)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::RealMeasure;

    // Gauss–Chebyshev (second kind) rule on [-2√a, 2√a] for functions with a
    // square-root factor at both edges: returns nodes and weights including
    // the factor 1/√(4a − x²).
    fn chebyshev_rule(a: f64, n: usize) -> Vec<(f64, f64)> {
        let r = 2.0 * a.sqrt();
        (1..=n)
            .map(|k| {
                let th = k as f64 * PI / (n as f64 + 1.0);
                let w = PI / (n as f64 + 1.0) * th.sin().powi(2);
                // ∫ f = ∫ f(r cos θ) r sin θ dθ
                (r * th.cos(), w * r / th.sin())
            })
            .collect()
    }

    #[test]
    fn uncorrelated_is_product() {
        let (sa, sb) = (RealMeasure::semicircle(1.5).unwrap(), RealMeasure::semicircle(0.7).unwrap());
        for (x, y) in [(0.0, 0.0), (1.2, -0.5), (-2.3, 1.6), (3.0, 0.0)] {
            let f = gaussian_joint_density(1.5, 0.7, 0.0, x, y).unwrap();
            assert!((f - sa.density_at(x) * sb.density_at(y)).abs() < 1e-14);
        }
    }

    #[test]
    fn centre_value() {
        let want = 3.0 / (4.0 * PI * PI * 0.5625);
        assert!((gaussian_joint_density(1.0, 1.0, 0.5, 0.0, 0.0).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn density_integrates_to_one_and_kernel_is_ratio() {
        let (a, b, c) = (1.0, 2.0, 0.9);
        let (rx, ry) = (chebyshev_rule(a, 200), chebyshev_rule(b, 200));
        let mut mass = 0.0;
        for (x, wx) in &rx {
            let mut row = 0.0;
            for (y, wy) in &ry {
                row += wy * gaussian_kernel(a, b, c, *x, *y).unwrap();
                mass += wx * wy * gaussian_joint_density(a, b, c, *x, *y).unwrap();
            }
            assert!((row - 1.0).abs() < 1e-8, "row at {x}: {row}");
        }
        assert!((mass - 1.0).abs() < 1e-4, "{mass}");
        let fx = RealMeasure::semicircle(a).unwrap();
        for (x, y) in [(0.3, -1.0), (-1.5, 2.2), (1.9, 0.1)] {
            let ratio = gaussian_joint_density(a, b, c, x, y).unwrap() / fx.density_at(x);
            assert!((ratio - gaussian_kernel(a, b, c, x, y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_correlation_rejected() {
        assert!(matches!(gaussian_joint_density(1.0, 1.0, 1.0, 0.0, 0.0), Err(Error::DegenerateCorrelation { .. })));
        assert!(matches!(gaussian_kernel(1.0, 4.0, -2.5, 0.0, 0.0), Err(Error::DegenerateCorrelation { .. })));
    }

    #[test]
    fn cauchy_kernel_values() {
        assert!((cauchy_kernel(1.0, 2.0, 0.0, 0.0).unwrap() - 1.0 / PI).abs() < 1e-15);
        assert!(matches!(cauchy_kernel(2.0, 1.0, 0.0, 0.0), Err(Error::TimeOrder { .. })));
        assert!(matches!(cauchy_kernel(1.0, 1.0, 0.0, 0.0), Err(Error::TimeOrder { .. })));
        let t = 1e-4;
        assert!((cauchy_kernel(1.0, 1.0 + t, 0.3, 0.3).unwrap() * PI * t - 1.0).abs() < 1e-9);
        let n = 200_001;
        let h = 100.0 / (n - 1) as f64;
        let mass: f64 = (0..n)
            .map(|k| {
                let y = -50.0 + k as f64 * h;
                let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
                w * h * cauchy_kernel(1.0, 2.0, 0.0, y).unwrap()
            })
            .sum();
        assert!((mass - 2.0 * 50f64.atan() / PI).abs() < 1e-8);
    }
}

//! Uniform sampling grids, trapezoid quadrature and limit extrapolation.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Uniform partition `min = x_0 < x_1 < ... < x_{len-1} = max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub min: f64,
    pub max: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(min: f64, max: f64, len: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || max <= min {
            return Err(Error::InvalidArgument(format!(
                "grid bounds must satisfy min < max, got [{min}, {max}]"
            )));
        }
        if len < 2 {
            return Err(Error::InvalidArgument("grid needs at least two points".into()));
        }
        Ok(Self { min, max, len })
    }

    /// Grid over `[lo, hi]` widened by `pad` times its length on each side.
    pub fn padded(lo: f64, hi: f64, pad: f64, len: usize) -> Result<Self> {
        let w = hi - lo;
        Self::new(lo - pad * w, hi + pad * w, len)
    }

    pub fn step(&self) -> f64 {
        (self.max - self.min) / (self.len - 1) as f64
    }

    pub fn point(&self, k: usize) -> f64 {
        if k + 1 == self.len {
            self.max
        } else {
            self.min + k as f64 * self.step()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|k| self.point(k)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }

    /// Composite trapezoid rule for samples on this grid.
    pub fn trapezoid(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len);
        let inner: f64 = values[1..values.len() - 1].iter().sum();
        self.step() * (inner + 0.5 * (values[0] + values[values.len() - 1]))
    }

    /// Trapezoid weights, so that `sum(w_k f_k)` equals [`Self::trapezoid`].
    pub fn weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.len];
        w[0] = 0.5 * h;
        w[self.len - 1] = 0.5 * h;
        w
    }

    /// Piecewise-linear interpolation, zero outside the grid.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let t = (x - self.min) / self.step();
        let k = (t.floor() as usize).min(self.len - 2);
        let frac = t - k as f64;
        values[k] * (1.0 - frac) + values[k + 1] * frac
    }
}

/// Equally spaced angles `2πk/n`, `k = 0..n`.
pub fn circle_angles(n: usize) -> Vec<f64> {
    (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect()
}

/// Polynomial extrapolation of `values[i] ≈ f(steps[i])` to `f(0)` (Neville's scheme).
pub fn extrapolate_to_zero(steps: &[f64], values: &[f64]) -> f64 {
    let n = steps.len();
    let mut p = values.to_vec();
    for level in 1..n {
        for i in 0..n - level {
            let (hi, hj) = (steps[i], steps[i + level]);
            p[i] = (hj * p[i] - hi * p[i + 1]) / (hj - hi);
        }
    }
    p[0]
}

fn is_monotone(values: &[f64]) -> bool {
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.iter().all(|d| *d >= 0.0) || diffs.iter().all(|d| *d <= 0.0)
}

/// Extrapolate a limit along a step schedule ordered from coarse to fine,
/// using the full interpolating polynomial.
///
/// A non-monotone sequence is not trusted for extrapolation and the finest
/// sample is returned instead.
pub fn schedule_limit(steps: &[f64], values: &[f64]) -> f64 {
    let n = values.len();
    if n == 1 || !is_monotone(values) {
        return values[n - 1];
    }
    extrapolate_to_zero(steps, values)
}

/// Richardson step assuming an error linear in the step: the line through
/// the two finest samples, evaluated at zero. Non-monotone sequences fall
/// back to the finest sample.
pub fn richardson_limit(steps: &[f64], values: &[f64]) -> f64 {
    let n = values.len();
    if n == 1 || !is_monotone(values) {
        return values[n - 1];
    }
    extrapolate_to_zero(&steps[n - 2..], &values[n - 2..])
}

/// Nodes and weights of a quadrature rule on an interval.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// Composite Gauss–Legendre rule on `[breaks[0], breaks[last]]`. Each
    /// interval between breakpoints is split into panels that shrink by
    /// `ratio` per level toward both of its ends, `levels` times.
    pub fn graded(breaks: &[f64], levels: usize, ratio: f64, order: usize) -> Result<Self> {
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("breakpoints must be strictly increasing".into()));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidArgument(format!("grading ratio {ratio} must lie in (0, 1)")));
        }
        let order = std::num::NonZeroUsize::new(order)
            .ok_or_else(|| Error::InvalidArgument("a rule needs at least one node per panel".into()))?;
        let gl = gauss_quad::legendre::GaussLegendre::new(order);
        let mut edges = Vec::new();
        for w in breaks.windows(2) {
            let (p, q) = (w[0], w[1]);
            let half = 0.5 * (q - p);
            let offsets: Vec<f64> = (0..=levels).rev().map(|k| half * ratio.powi(k as i32)).collect();
            edges.push(p);
            edges.extend(offsets.iter().map(|d| p + d));
            edges.extend(offsets.iter().rev().skip(1).map(|d| q - d));
        }
        edges.push(breaks[breaks.len() - 1]);
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for e in edges.windows(2) {
            let (a, b) = (e[0], e[1]);
            for (x, w) in gl.as_node_weight_pairs() {
                nodes.push(0.5 * ((b - a) * x + (b + a)));
                weights.push(0.5 * (b - a) * w);
            }
        }
        Ok(Self { nodes, weights })
    }

    /// [`QuadratureRule::graded`] over the given edges plus 5% padding on
    /// both sides: ten levels, ratio 0.3, eight nodes per panel. Padding
    /// stops halfway to any point in `avoid` lying outside the edges.
    pub fn around_edges(edges: &[f64], avoid: &[f64]) -> Result<Self> {
        let (lo, hi) = (edges[0], edges[edges.len() - 1]);
        let pad = 0.05 * (hi - lo);
        let below = avoid.iter().filter(|a| **a < lo).map(|a| (lo - a) / 2.0).fold(pad, f64::min);
        let above = avoid.iter().filter(|a| **a > hi).map(|a| (a - hi) / 2.0).fold(pad, f64::min);
        let mut breaks = vec![lo - below];
        breaks.extend_from_slice(edges);
        breaks.push(hi + above);
        Self::graded(&breaks, 10, 0.3, 8)
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let g = UniformGrid::new(0.0, 2.0, 11).unwrap();
        let v: Vec<f64> = g.points().iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.trapezoid(&v) - 8.0).abs() < 1e-12);
        let w = g.weights();
        let s: f64 = w.iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((s - 8.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_and_outside() {
        let g = UniformGrid::new(-1.0, 1.0, 3).unwrap();
        let v = [0.0, 2.0, 0.0];
        assert_eq!(g.interpolate(&v, 0.5), 1.0);
        assert_eq!(g.interpolate(&v, 1.5), 0.0);
        assert_eq!(g.interpolate(&v, 1.0), 0.0);
    }

    #[test]
    fn neville_recovers_quadratic_limit() {
        let f = |h: f64| 2.0 + 3.0 * h - 5.0 * h * h;
        let hs = [0.1, 0.05, 0.025];
        let vs: Vec<f64> = hs.iter().map(|h| f(*h)).collect();
        assert!((extrapolate_to_zero(&hs, &vs) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_falls_back_to_finest() {
        let hs = [0.4, 0.2, 0.1];
        let vs = [1.0, 3.0, 2.0];
        assert_eq!(schedule_limit(&hs, &vs), 2.0);
    }

    #[test]
    fn richardson_is_exact_for_lines() {
        let hs = [0.4, 0.2, 0.1];
        let vs: Vec<f64> = hs.iter().map(|h| 1.5 - 2.0 * h).collect();
        assert!((richardson_limit(&hs, &vs) - 1.5).abs() < 1e-14);
        assert_eq!(richardson_limit(&hs, &[1.0, 3.0, 2.0]), 2.0);
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(UniformGrid::new(1.0, 1.0, 4).is_err());
        assert!(UniformGrid::new(0.0, 1.0, 1).is_err());
    }

    #[test]
    fn graded_rule_handles_square_root_edges() {
        let rule = QuadratureRule::graded(&[-1.0, 0.0, 2.0], 12, 0.25, 8).unwrap();
        let poly: Vec<f64> = rule.nodes.iter().map(|x| x * x).collect();
        assert!((rule.integrate(&poly) - 3.0).abs() < 1e-13);
        // ∫_0^2 sqrt(x(2 − x)) dx = π/2
        let f: Vec<f64> = rule.nodes.iter().map(|x| if *x > 0.0 { (x * (2.0 - x)).sqrt() } else { 0.0 }).collect();
        assert!((rule.integrate(&f) - PI / 2.0).abs() < 1e-9);
        assert!(QuadratureRule::graded(&[1.0, 0.0], 2, 0.5, 4).is_err());
    }
}

//! The logarithmic potential of a computed density in the plane and its
//! diagnostics.
//!
//! For a point `z = (x, y)` the field is
//!
//! ```text
//! u(z) = Σ_j psi_j ∫_{cell j} -log|z - t| dt - C
//! ```
//!
//! integrated in closed form near each cell and with the even-moment series
//! of the uniform law further away.

mod acf;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::grid::Grid;
use crate::kernel::{uniform_moments, FAR_RATIO, SERIES_TERMS};
use crate::potential::PotentialSpec;
use crate::solver::{solve_unconstrained, MeasureSolution, SolverConfig};

pub use acf::{
    acf_phi, random_harmonic_pair, AcfQuadrature, AcfSample, HalfPlaneRamp, HarmonicPolynomial,
    ObstacleGap,
};

/// A real function on the plane with its gradient.
pub trait Planar: Sync {
    fn value(&self, x: f64, y: f64) -> f64;
    fn gradient(&self, x: f64, y: f64) -> [f64; 2];
}

/// `∫_{c-h/2}^{c+h/2} -log|z - t| dt` with `z = (x, y)`, and its gradient.
fn cell_field(x: f64, y: f64, c: f64, h: f64) -> (f64, [f64; 2]) {
    let w = Complex64::new(x - c, y);
    if w.norm() > FAR_RATIO * 0.5 * h {
        // h Re[-log w + Σ_k m_k w^{-2k} / (2k)].
        let m = uniform_moments(h);
        let inv2 = (w * w).inv();
        let mut p = inv2;
        let mut value = -w.norm().ln();
        let mut deriv = -w.inv();
        for (k, mk) in m.iter().enumerate().take(SERIES_TERMS + 1).skip(1) {
            value += mk * p.re / (2 * k) as f64;
            deriv -= p * *mk / w;
            p *= inv2;
        }
        // The gradient of Re F is the conjugate of F'.
        (h * value, [h * deriv.re, -h * deriv.im])
    } else {
        let ay = y.abs();
        // τ = t - x runs over [a, b].
        let (a, b) = (c - 0.5 * h - x, c + 0.5 * h - x);
        let log_r2 = |t: f64| {
            let r2 = t * t + y * y;
            if r2 == 0.0 {
                f64::NEG_INFINITY
            } else {
                r2.ln()
            }
        };
        let anti = |t: f64| {
            let tl = if t == 0.0 { 0.0 } else { t * log_r2(t) };
            let at = if ay == 0.0 { 0.0 } else { 2.0 * ay * (t / ay).atan() };
            -0.5 * (tl - 2.0 * t + at)
        };
        let value = anti(b) - anti(a);
        let gx = 0.5 * (log_r2(b) - log_r2(a));
        let gy = if y == 0.0 {
            0.0
        } else {
            -((b / y).atan() - (a / y).atan())
        };
        (value, [gx, gy])
    }
}

/// Field of a solution, shifted by its multiplier.
#[derive(Debug, Clone)]
pub struct PlaneField {
    grid: Grid,
    psi: Vec<f64>,
    multiplier: f64,
    mass: f64,
}

impl PlaneField {
    /// Uses the multiplier of the first mass group.
    pub fn new(solution: &MeasureSolution) -> Self {
        Self::with_multiplier(solution, solution.multipliers[0])
    }

    pub fn with_multiplier(solution: &MeasureSolution, multiplier: f64) -> Self {
        Self::from_density(solution.grid.clone(), solution.psi.clone(), multiplier)
    }

    pub fn from_density(grid: Grid, psi: Vec<f64>, multiplier: f64) -> Self {
        let mass = grid.mass(&psi);
        Self {
            grid,
            psi,
            multiplier,
            mass,
        }
    }

    pub fn multiplier(&self) -> f64 {
        self.multiplier
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `-log|·| * μ` without the shift.
    pub fn raw(&self, x: f64, y: f64) -> f64 {
        self.raw_with_gradient(x, y).0
    }

    pub fn raw_with_gradient(&self, x: f64, y: f64) -> (f64, [f64; 2]) {
        let mid = self.grid.midpoints();
        let h = self.grid.widths();
        let mut value = 0.0;
        let mut grad = [0.0, 0.0];
        for j in 0..mid.len() {
            let p = self.psi[j];
            if p == 0.0 {
                continue;
            }
            let (v, g) = cell_field(x, y, mid[j], h[j]);
            value += p * v;
            grad[0] += p * g[0];
            grad[1] += p * g[1];
        }
        (value, grad)
    }

    pub fn eval_many(&self, points: &[[f64; 2]]) -> Vec<f64> {
        points.par_iter().map(|p| self.value(p[0], p[1])).collect()
    }

    /// Largest five-point Laplacian `|Δ_δ u|` over `points`.
    pub fn harmonicity_residual(&self, points: &[[f64; 2]], step: f64) -> f64 {
        points
            .par_iter()
            .map(|&[x, y]| {
                let c = self.raw(x, y);
                let s = self.raw(x + step, y) + self.raw(x - step, y) + self.raw(x, y + step)
                    + self.raw(x, y - step);
                ((s - 4.0 * c) / (step * step)).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest `|(u + C)/log|z| + s|` over `rays` directions at each radius.
    pub fn decay_error(&self, radii: &[f64], rays: usize) -> Vec<f64> {
        radii
            .iter()
            .map(|&r| {
                (0..rays)
                    .map(|k| {
                        let t = std::f64::consts::TAU * (k as f64 + 0.5) / rays as f64;
                        (self.raw(r * t.cos(), r * t.sin()) / r.ln() + self.mass).abs()
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

impl Planar for PlaneField {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.raw(x, y) - self.multiplier
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        self.raw_with_gradient(x, y).1
    }
}

/// Smallest `U + V - C` over all cells, with the cell-averaged potential.
pub fn line_obstacle_margin(solution: &MeasureSolution) -> f64 {
    solution.obstacle_gap().into_iter().fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub s: f64,
    pub s_prime: f64,
    pub radius: f64,
    /// Minimum of `U_s - U_s'` on the circle.
    pub raw_min: f64,
    /// Same, restricted to `|y| > R/2`.
    pub raw_far_min: f64,
    /// Minimum of `(U_s - C_s) - (U_s' - C_s')` on the circle.
    pub normalized_min: f64,
    pub normalized_far_min: f64,
}

/// Compares the fields of the mass-`s` and mass-`s'` minimisers of `V` on
/// the circle of radius `radius`.
pub fn monotone_in_mass(
    v: &PotentialSpec,
    s: f64,
    s_prime: f64,
    radius: f64,
    samples: usize,
    cells: usize,
    config: &SolverConfig,
) -> Result<MonotoneReport> {
    let a = PlaneField::new(&solve_unconstrained(v, s, cells, config)?);
    let b = PlaneField::new(&solve_unconstrained(v, s_prime, cells, config)?);
    Ok(compare_on_circle(&a, &b, s, s_prime, radius, samples))
}

pub fn compare_on_circle(
    a: &PlaneField,
    b: &PlaneField,
    s: f64,
    s_prime: f64,
    radius: f64,
    samples: usize,
) -> MonotoneReport {
    let mut r = MonotoneReport {
        s,
        s_prime,
        radius,
        raw_min: f64::INFINITY,
        raw_far_min: f64::INFINITY,
        normalized_min: f64::INFINITY,
        normalized_far_min: f64::INFINITY,
    };
    for k in 0..samples {
        let t = std::f64::consts::TAU * k as f64 / samples as f64;
        let (x, y) = (radius * t.cos(), radius * t.sin());
        let raw = a.raw(x, y) - b.raw(x, y);
        let norm = raw - a.multiplier + b.multiplier;
        r.raw_min = r.raw_min.min(raw);
        r.normalized_min = r.normalized_min.min(norm);
        if y.abs() > 0.5 * radius {
            r.raw_far_min = r.raw_far_min.min(raw);
            r.normalized_far_min = r.normalized_far_min.min(norm);
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;
    use crate::quadrature::{gauss_legendre, integrate};

    #[test]
    fn cell_field_against_quadrature() {
        let rule = gauss_legendre(64);
        for (x, y, h) in [(0.1, 0.3, 0.5), (2.0, 0.5, 0.5), (1.9, 0.5, 0.5), (0.05, 1e-3, 0.1), (3.0, -1.0, 0.2)] {
            let (v, g) = cell_field(x, y, 0.0, h);
            // Panels graded geometrically towards the projection of z.
            let graded = |f: &dyn Fn(f64) -> f64, c: f64, end: f64| {
                let mut acc = 0.0;
                let mut len = end - c;
                for _ in 0..60 {
                    acc += integrate(&rule, c + 0.5 * len, c + len, f);
                    len *= 0.5;
                }
                acc + integrate(&rule, c, c + len, f)
            };
            let q = |f: &dyn Fn(f64) -> f64| {
                let c = x.clamp(-h / 2.0, h / 2.0);
                -graded(f, c, -h / 2.0) + graded(f, c, h / 2.0)
            };
            let qv = q(&|t: f64| -0.5 * ((x - t).powi(2) + y * y).ln());
            let qx = q(&|t: f64| -(x - t) / ((x - t).powi(2) + y * y));
            let qy = q(&|t: f64| -y / ((x - t).powi(2) + y * y));
            assert!((v - qv).abs() < 1e-10, "{v} {qv}");
            assert!((g[0] - qx).abs() < 1e-8 && (g[1] - qy).abs() < 1e-8, "{g:?} {qx} {qy}");
        }
        // On the line inside the cell the value is finite.
        let (v, _) = cell_field(0.0, 0.0, 0.0, 0.2);
        assert!((v - 0.2 * (1.0 - (0.1f64).ln())).abs() < 1e-14);
    }

    #[test]
    fn uniform_density_at_unit_height() {
        let g = Grid::uniform(Interval::symmetric(1.0), 50).unwrap();
        let f = PlaneField::from_density(g, vec![0.5; 50], 0.0);
        // -(1/2) ∫_{-1}^{1} log √(t² + 1) dt = 1 - π/4 - log(2)/2.
        let exact = 1.0 - std::f64::consts::FRAC_PI_4 - 0.5 * std::f64::consts::LN_2;
        assert!((f.value(0.0, 1.0) - exact).abs() < 1e-12);
        assert!((f.value(0.3, 0.7) - f.value(0.3, -0.7)).abs() < 1e-14);
        assert!((f.raw(1e6, 0.0) + (1e6f64).ln()).abs() < 1e-12);
    }
}

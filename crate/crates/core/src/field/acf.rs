use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EqmError, Result};
use crate::potential::PotentialSpec;
use crate::quadrature::gauss_legendre;

use super::{PlaneField, Planar};

/// `k (z · e)` for a unit direction `e`.
#[derive(Debug, Clone, Copy)]
pub struct HalfPlaneRamp {
    pub slope: f64,
    pub direction: [f64; 2],
}

impl Planar for HalfPlaneRamp {
    fn value(&self, x: f64, y: f64) -> f64 {
        self.slope * (x * self.direction[0] + y * self.direction[1])
    }

    fn gradient(&self, _x: f64, _y: f64) -> [f64; 2] {
        [self.slope * self.direction[0], self.slope * self.direction[1]]
    }
}

/// `Re Σ_k c_k z^k`, `k ≥ 1`.
#[derive(Debug, Clone)]
pub struct HarmonicPolynomial {
    pub coefficients: Vec<Complex64>,
}

impl Planar for HarmonicPolynomial {
    fn value(&self, x: f64, y: f64) -> f64 {
        let z = Complex64::new(x, y);
        let mut p = z;
        let mut acc = Complex64::new(0.0, 0.0);
        for c in &self.coefficients {
            acc += c * p;
            p *= z;
        }
        acc.re
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let z = Complex64::new(x, y);
        let mut p = Complex64::new(1.0, 0.0);
        let mut d = Complex64::new(0.0, 0.0);
        for (k, c) in self.coefficients.iter().enumerate() {
            d += c * p * (k + 1) as f64;
            p *= z;
        }
        [d.re, -d.im]
    }
}

/// Harmonic polynomial of degree four with coefficients drawn from `seed`;
/// it vanishes at the origin, so its positive and negative parts form an
/// admissible pair.
pub fn random_harmonic_pair(seed: u64) -> HarmonicPolynomial {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    HarmonicPolynomial {
        coefficients: (0..4)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    }
}

/// `u + V` around a point of the line, in local coordinates
/// `z ↦ center + scale z`. A heuristic two-phase split of a computed field:
/// `V` is extended constantly off the line.
pub struct ObstacleGap<'a> {
    pub field: &'a PlaneField,
    pub potential: &'a PotentialSpec,
    pub center: f64,
    pub scale: f64,
}

impl Planar for ObstacleGap<'_> {
    fn value(&self, x: f64, y: f64) -> f64 {
        let t = self.center + self.scale * x;
        self.field.value(t, self.scale * y) + self.potential.eval(t)
    }

    fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let t = self.center + self.scale * x;
        let g = self.field.gradient(t, self.scale * y);
        [
            self.scale * (g[0] + self.potential.deriv(t)),
            self.scale * g[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcfQuadrature {
    pub radial_nodes: usize,
    pub angular_panels: usize,
    /// Gauss points per angular piece.
    pub panel_order: usize,
}

impl Default for AcfQuadrature {
    fn default() -> Self {
        Self {
            radial_nodes: 128,
            angular_panels: 256,
            panel_order: 4,
        }
    }
}

impl AcfQuadrature {
    pub fn halved(&self) -> Self {
        Self {
            radial_nodes: (self.radial_nodes / 2).max(1),
            angular_panels: (self.angular_panels / 2).max(1),
            panel_order: self.panel_order,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AcfSample {
    pub r: f64,
    pub phi: f64,
    /// Same functional at half resolution in both directions.
    pub phi_coarse: f64,
}

/// `∫_{B_r} |∇f|² 1{σ f > 0}` by polar quadrature. Angular panels that see
/// a sign change of `f` are split at the bisected zero.
fn dirichlet_on_phase(f: &dyn Planar, sign: f64, r: f64, q: &AcfQuadrature) -> Result<f64> {
    let radial = gauss_legendre(q.radial_nodes);
    let angular = gauss_legendre(q.panel_order);
    let dtheta = std::f64::consts::TAU / q.angular_panels as f64;
    let mut total = 0.0;
    for (xr, wr) in radial.0.iter().zip(&radial.1) {
        let rho = 0.5 * r * (1.0 + xr);
        let at = |t: f64| f.value(rho * t.cos(), rho * t.sin()) * sign;
        let piece = |a: f64, b: f64| -> Result<f64> {
            let mid = 0.5 * (a + b);
            if at(mid) <= 0.0 {
                return Ok(0.0);
            }
            let half = 0.5 * (b - a);
            let mut acc = 0.0;
            for (xa, wa) in angular.0.iter().zip(&angular.1) {
                let t = mid + half * xa;
                let g = f.gradient(rho * t.cos(), rho * t.sin());
                let v = g[0] * g[0] + g[1] * g[1];
                if !v.is_finite() {
                    return Err(EqmError::Eval(format!("gradient not finite at radius {rho}")));
                }
                acc += wa * v;
            }
            Ok(acc * half)
        };
        let mut ring = 0.0;
        for p in 0..q.angular_panels {
            let (a, b) = (p as f64 * dtheta, (p + 1) as f64 * dtheta);
            let (fa, fb) = (at(a), at(b));
            if (fa > 0.0) != (fb > 0.0) {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..60 {
                    let m = 0.5 * (lo + hi);
                    if (at(m) > 0.0) == (fa > 0.0) {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let cut = 0.5 * (lo + hi);
                ring += piece(a, cut)? + piece(cut, b)?;
            } else {
                ring += piece(a, b)?;
            }
        }
        total += wr * ring * rho;
    }
    Ok(total * 0.5 * r)
}

/// `Φ(r) = r⁻⁴ ∫_{B_r} |∇u₊|² ∫_{B_r} |∇u₋|²` with `u₊` the positive part of
/// `plus` and `u₋` the negative part of `minus`.
pub fn acf_phi(
    plus: &dyn Planar,
    minus: &dyn Planar,
    radii: &[f64],
    quadrature: &AcfQuadrature,
) -> Result<Vec<AcfSample>> {
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0)) {
        return Err(EqmError::Config(format!("radius must be positive, got {r}")));
    }
    let coarse = quadrature.halved();
    radii
        .par_iter()
        .map(|&r| {
            let phi = |q: &AcfQuadrature| -> Result<f64> {
                let a = dirichlet_on_phase(plus, 1.0, r, q)?;
                let b = dirichlet_on_phase(minus, -1.0, r, q)?;
                Ok(a * b / r.powi(4))
            };
            Ok(AcfSample {
                r,
                phi: phi(quadrature)?,
                phi_coarse: phi(&coarse)?,
            })
        })
        .collect()
}

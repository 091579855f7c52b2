//! Independent references for the solver: a pairwise mass-transfer
//! optimiser and closed-form minimisers.

use serde::Serialize;

use crate::error::{EqmError, Result};
use crate::kernel::LogKernelOperator;
use crate::potential::PotentialSpec;
use crate::solver::{project, ConstraintSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    PairwiseTransfer,
    ClosedFormSemicircle,
    ClosedFormUniformCap,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub psi: Vec<f64>,
    pub method: OracleMethod,
    /// Full sweeps for the iterative method.
    pub iterations: usize,
    /// Largest mass moved in the last sweep, relative to the total mass.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferConfig {
    pub max_sweeps: usize,
    /// Stop after a sweep whose largest transfer is below `tol · s`.
    pub tol: f64,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 200_000,
            tol: 1e-12,
        }
    }
}

/// Cyclic exact line minimisation along `e_i - e_j` in the cell masses.
/// Each transfer keeps both cells within `[0, θ h]`; with interval masses
/// only pairs inside one interval are used.
pub fn pairwise_transfer_solve(
    v: &PotentialSpec,
    constraints: &ConstraintSet,
    kernel: &LogKernelOperator,
    config: &TransferConfig,
) -> Result<OracleResult> {
    let groups = constraints.validate()?;
    let grid = &constraints.domain;
    if kernel.grid() != grid {
        return Err(EqmError::Config("kernel was assembled for a different grid".into()));
    }
    let n = grid.len();
    let h = grid.widths();
    let cap = constraints.cap_value();
    let v_mid = v.sample(grid.midpoints())?;
    let psi0 = project(&vec![0.0; n], constraints)?;
    let mut m: Vec<f64> = psi0.iter().zip(h).map(|(p, w)| p * w).collect();
    let upper: Vec<f64> = h.iter().map(|w| cap * w).collect();
    let mut u = kernel.apply(&m);
    let members: Vec<Vec<usize>> = groups
        .iter()
        .map(|g| g.blocks.iter().flat_map(|&b| grid.blocks()[b].range()).collect())
        .collect();
    let scale = constraints.total_mass;

    let mut sweeps = 0;
    let mut largest = f64::INFINITY;
    while sweeps < config.max_sweeps {
        sweeps += 1;
        largest = 0.0f64;
        for cells in &members {
            for (a, &i) in cells.iter().enumerate() {
                for &j in &cells[a + 1..] {
                    // d/dδ of the objective at δ = 0 is 2 (g_i - g_j).
                    let slope = (u[i] + v_mid[i]) - (u[j] + v_mid[j]);
                    let curv = kernel.entry(i, i) + kernel.entry(j, j) - 2.0 * kernel.entry(i, j);
                    if !(curv > 0.0) {
                        continue;
                    }
                    let lo = (-m[i]).max(m[j] - upper[j]);
                    let hi = (upper[i] - m[i]).min(m[j]);
                    let delta = (-slope / curv).clamp(lo, hi);
                    if delta == 0.0 {
                        continue;
                    }
                    m[i] += delta;
                    m[j] -= delta;
                    let (ri, rj) = (kernel.row(i), kernel.row(j));
                    for k in 0..n {
                        u[k] += delta * (ri[k] - rj[k]);
                    }
                    largest = largest.max(delta.abs());
                }
            }
        }
        if largest <= config.tol * scale {
            break;
        }
    }
    Ok(OracleResult {
        psi: m.iter().zip(h).map(|(m, w)| m / w).collect(),
        method: OracleMethod::PairwiseTransfer,
        iterations: sweeps,
        residual: largest / scale,
    })
}

/// Minimiser of the mass-`s` problem for `V = x²`: `(2/π) √(s - x²)` on
/// `[-√s, √s]`.
pub fn semicircle_density(s: f64, points: &[f64]) -> Result<Vec<f64>> {
    if !(s > 0.0) {
        return Err(EqmError::Config(format!("mass must be positive, got {s}")));
    }
    Ok(points
        .iter()
        .map(|&x| std::f64::consts::FRAC_2_PI * (s - x * x).max(0.0).sqrt())
        .collect())
}

/// Constant `C` with `U + x² = C` on the support of [`semicircle_density`].
pub fn semicircle_multiplier(s: f64) -> f64 {
    s * (0.5 + std::f64::consts::LN_2 - 0.5 * s.ln())
}

/// The feasible set is the single density `ψ ≡ θ` when `s = θ |K|`.
pub fn uniform_cap_density(constraints: &ConstraintSet) -> Result<OracleResult> {
    let cap = constraints
        .cap
        .ok_or_else(|| EqmError::Config("the forced case needs a cap".into()))?;
    constraints.validate()?;
    let capacity = cap * constraints.domain.total_length();
    if ((constraints.total_mass - capacity) / capacity).abs() > 1e-12 {
        return Err(EqmError::Config(format!(
            "mass {} does not fill the capacity {capacity}",
            constraints.total_mass
        )));
    }
    Ok(OracleResult {
        psi: vec![cap; constraints.domain.len()],
        method: OracleMethod::ClosedFormUniformCap,
        iterations: 0,
        residual: 0.0,
    })
}

/// Samples of the semicircle at the grid midpoints.
pub fn semicircle_on_grid(s: f64, grid: &crate::grid::Grid) -> Result<OracleResult> {
    Ok(OracleResult {
        psi: semicircle_density(s, grid.midpoints())?,
        method: OracleMethod::ClosedFormSemicircle,
        iterations: 0,
        residual: 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, Interval};
    use crate::quadrature::{gauss_legendre, integrate};

    #[test]
    fn semicircle_values_and_mass() {
        let d = semicircle_density(1.0, &[0.0, 1.0, -1.0, 2.0]).unwrap();
        assert!((d[0] - 2.0 / std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(&d[1..], &[0.0, 0.0, 0.0]);
        let rule = gauss_legendre(64);
        for s in [0.3f64, 1.0, 2.5] {
            let r = s.sqrt();
            // x = r sin t removes the edge singularity.
            let mass = integrate(&rule, -std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2, |t| {
                semicircle_density(s, &[r * t.sin()]).unwrap()[0] * r * t.cos()
            });
            assert!((mass - s).abs() < 1e-10, "{s}: {mass}");
        }
        assert!((semicircle_multiplier(1.0) - (0.5 + std::f64::consts::LN_2)).abs() < 1e-15);
    }

    #[test]
    fn two_cells_match_the_hand_solution() {
        let g = Grid::uniform(Interval::new(0.0, 2.0), 2).unwrap();
        let k = LogKernelOperator::assemble(&g);
        // V = 0 and 0.3 at the two midpoints; unit widths make ψ = m.
        let v = PotentialSpec::parse("0.3 * (x - 0.5)").unwrap();
        let c = ConstraintSet::unconstrained(g.clone(), 1.0);
        let r = pairwise_transfer_solve(&v, &c, &k, &TransferConfig::default()).unwrap();
        // m = (1/2 + δ, 1/2 - δ) with f(δ) minimised by hand.
        let (k00, k11, k01) = (k.entry(0, 0), k.entry(1, 1), k.entry(0, 1));
        let (v0, v1) = (0.0, 0.3);
        let m0 = 0.5;
        let m1 = 0.5;
        let slope = (k00 * m0 + k01 * m1 + v0) - (k01 * m0 + k11 * m1 + v1);
        let delta = -slope / (k00 + k11 - 2.0 * k01);
        assert!((r.psi[0] - (m0 + delta)).abs() < 1e-12, "{:?} {delta}", r.psi);
        assert!((r.psi[1] - (m1 - delta)).abs() < 1e-12);
    }

    #[test]
    fn forced_fill_is_a_fixed_point() {
        let g = Grid::uniform(Interval::symmetric(1.0), 20).unwrap();
        let k = LogKernelOperator::assemble(&g);
        let c = ConstraintSet::capped(g, 1.0, 0.5);
        let r = pairwise_transfer_solve(&PotentialSpec::quadratic(), &c, &k, &TransferConfig::default())
            .unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.psi.iter().all(|&p| p == 0.5));
        assert_eq!(uniform_cap_density(&c).unwrap().psi, r.psi);
        let short = ConstraintSet::capped(c.domain.clone(), 0.9, 0.5);
        assert!(uniform_cap_density(&short).is_err());
    }
}

//! Minimisation of the discrete logarithmic energy over capped, mass
//! constrained densities.
//!
//! The unknown is the cell density `psi`. In the h-weighted inner product the
//! gradient of the objective `Σ K_ij m_i m_j + 2 Σ V_i m_i` (with
//! `m_i = h_i psi_i`) is `2 (U + V)`, where `U = K m` is the cell-averaged
//! potential. Accelerated projected gradient steps use the exact projection
//! of [`project`]; the momentum is reset whenever the objective would
//! increase, so accepted iterates never lose ground.

mod constraints;
pub mod kkt;
mod projection;

use serde::{Deserialize, Serialize};

pub use constraints::{ConstraintSet, MassGroup};
pub use kkt::{activity_tolerance, KktReport, Regime};
pub use projection::project;

use crate::error::{EqmError, Result};
use crate::grid::{Grid, Interval};
use crate::kernel::{self, dot, LogKernelOperator};
use crate::potential::{self, PotentialSpec};

use projection::{group_cells, project_group};

/// Starting point of the iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Start {
    /// Projection of the zero vector (uniform where uncapped).
    #[default]
    Uniform,
    /// Each group's mass packed into its leftmost cells.
    PiledLeft,
    Given(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_kkt: f64,
    pub power_iters: usize,
    /// Iterations between convergence checks.
    pub check_every: usize,
    /// Cells next to each domain endpoint left out of the residuals.
    pub kkt_endpoint_margin: usize,
    #[serde(skip)]
    pub start: Start,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iter: 50_000,
            tol_kkt: 1e-6,
            power_iters: 50,
            check_every: 5,
            kkt_endpoint_margin: 0,
            start: Start::Uniform,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(EqmError::Config("max_iter must be positive".into()));
        }
        if !(self.tol_kkt > 0.0) {
            return Err(EqmError::Config(format!("tol_kkt must be positive, got {}", self.tol_kkt)));
        }
        if self.power_iters == 0 || self.check_every == 0 {
            return Err(EqmError::Config("power_iters and check_every must be positive".into()));
        }
        Ok(())
    }
}

/// Result of a solve.
#[derive(Debug, Clone, Serialize)]
pub struct MeasureSolution {
    pub potential: String,
    pub grid: Grid,
    pub psi: Vec<f64>,
    pub cap: Option<f64>,
    pub total_mass: f64,
    /// Mass per grid interval.
    pub masses: Vec<f64>,
    pub groups: Vec<MassGroup>,
    /// One constant per mass group; `U + V = C` on the bands.
    pub multipliers: Vec<f64>,
    /// Whether each group's multiplier was read off band cells.
    pub multiplier_from_band: Vec<bool>,
    pub kkt: KktReport,
    /// Literal two-marginal energy of the measure.
    pub energy: f64,
    /// The fixed-mass objective actually minimised.
    pub objective: f64,
    pub iterations: usize,
    pub restarts: usize,
    pub lipschitz: f64,
    pub converged: bool,
    pub tol_kkt: f64,
    pub kkt_endpoint_margin: usize,
    /// Sampled potential at midpoints.
    pub v_mid: Vec<f64>,
    /// Cell-averaged logarithmic potential.
    pub cell_potential: Vec<f64>,
}

impl MeasureSolution {
    pub fn cap_value(&self) -> f64 {
        self.cap.unwrap_or(f64::INFINITY)
    }

    pub fn tol_act(&self) -> f64 {
        self.kkt.tol_act
    }

    /// Group index of every cell.
    pub fn group_of_cells(&self) -> Vec<usize> {
        let mut out = vec![0; self.grid.len()];
        for (g, group) in self.groups.iter().enumerate() {
            for &b in &group.blocks {
                for i in self.grid.blocks()[b].range() {
                    out[i] = g;
                }
            }
        }
        out
    }

    /// `U + V - C` per cell with the cell's group multiplier.
    pub fn obstacle_gap(&self) -> Vec<f64> {
        let group = self.group_of_cells();
        (0..self.grid.len())
            .map(|i| self.cell_potential[i] + self.v_mid[i] - self.multipliers[group[i]])
            .collect()
    }

    pub fn regimes(&self) -> Vec<Regime> {
        let cap = self.cap_value();
        self.psi
            .iter()
            .map(|&p| Regime::of(p, cap, self.kkt.tol_act))
            .collect()
    }

    pub fn max_density(&self) -> f64 {
        self.psi.iter().cloned().fold(0.0, f64::max)
    }
}

fn endpoint_mask(grid: &Grid, margin: usize) -> impl Fn(usize) -> bool + '_ {
    move |i: usize| {
        if margin == 0 {
            return true;
        }
        let b = &grid.blocks()[grid.block_of(i)];
        let k = i - b.start;
        k >= margin && k + margin < b.cells
    }
}

/// Band-median multipliers `C_h`, one per mass group.
pub fn recover_multipliers(solution: &MeasureSolution) -> Result<Vec<f64>> {
    let cells = group_cells(&solution.grid, &solution.groups);
    let field: Vec<f64> = solution
        .cell_potential
        .iter()
        .zip(&solution.v_mid)
        .map(|(u, v)| u + v)
        .collect();
    let mask = endpoint_mask(&solution.grid, solution.kkt_endpoint_margin);
    cells
        .iter()
        .zip(&solution.groups)
        .map(|(c, g)| {
            kkt::band_median(
                c,
                &solution.psi,
                &field,
                solution.cap_value(),
                solution.kkt.tol_act,
                &mask,
            )
            .ok_or(EqmError::BandMissing {
                interval: g.blocks[0],
            })
        })
        .collect()
}

/// Residuals of the complementarity system for given multipliers.
pub fn kkt_residual(solution: &MeasureSolution, multipliers: &[f64]) -> KktReport {
    residuals_for(
        &solution.grid,
        &solution.groups,
        &solution.psi,
        &solution.cell_potential,
        &solution.v_mid,
        solution.cap_value(),
        solution.kkt.tol_act,
        multipliers,
        solution.kkt_endpoint_margin,
    )
}

#[allow(clippy::too_many_arguments)]
fn residuals_for(
    grid: &Grid,
    groups: &[MassGroup],
    psi: &[f64],
    u: &[f64],
    v: &[f64],
    cap: f64,
    tol_act: f64,
    multipliers: &[f64],
    margin: usize,
) -> KktReport {
    let cells = group_cells(grid, groups);
    let field: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let mask = endpoint_mask(grid, margin);
    cells
        .iter()
        .zip(multipliers)
        .map(|(c, &m)| kkt::group_residuals(c, psi, &field, m, cap, tol_act, &mask))
        .fold(
            KktReport {
                r_support: 0.0,
                r_void: 0.0,
                r_sat: 0.0,
                tol_act,
            },
            kkt::merge,
        )
}

/// Multipliers (band median, or the bandless fallback) and residuals.
#[allow(clippy::too_many_arguments)]
fn assess(
    grid: &Grid,
    groups: &[MassGroup],
    cells: &[Vec<usize>],
    psi: &[f64],
    u: &[f64],
    v: &[f64],
    cap: f64,
    margin: usize,
) -> (Vec<f64>, Vec<bool>, KktReport) {
    let tol_act = activity_tolerance(psi, cap);
    let field: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + b).collect();
    let mask = endpoint_mask(grid, margin);
    let mut mult = Vec::with_capacity(groups.len());
    let mut from_band = Vec::with_capacity(groups.len());
    for c in cells {
        match kkt::band_median(c, psi, &field, cap, tol_act, &mask) {
            Some(m) => {
                mult.push(m);
                from_band.push(true);
            }
            None => {
                mult.push(kkt::bandless_multiplier(c, psi, &field, cap, tol_act));
                from_band.push(false);
            }
        }
    }
    let report = residuals_for(grid, groups, psi, u, v, cap, tol_act, &mult, margin);
    (mult, from_band, report)
}

fn masses_of(psi: &[f64], widths: &[f64]) -> Vec<f64> {
    psi.iter().zip(widths).map(|(p, h)| p * h).collect()
}

/// Largest eigenvalue of `K H` on the mass-preserving subspace, by power
/// iteration in the h-weighted inner product.
fn lipschitz_estimate(kernel: &LogKernelOperator, cells: &[Vec<usize>], iters: usize) -> f64 {
    let grid = kernel.grid();
    let h = grid.widths();
    let n = grid.len();
    let remove_means = |w: &mut [f64]| {
        for c in cells {
            let len: f64 = c.iter().map(|&i| h[i]).sum();
            let mean: f64 = c.iter().map(|&i| h[i] * w[i]).sum::<f64>() / len;
            for &i in c {
                w[i] -= mean;
            }
        }
    };
    let norm_h = |w: &[f64]| w.iter().zip(h).map(|(a, b)| a * a * b).sum::<f64>().sqrt();
    // Deterministic, non-symmetric start.
    let mut w: Vec<f64> = (0..n)
        .map(|i| ((i as f64 + 0.5) * 0.618_033_988_749_895).fract() - 0.5)
        .collect();
    remove_means(&mut w);
    let mut lambda = 0.0;
    let mut out = vec![0.0; n];
    for _ in 0..iters {
        let nw = norm_h(&w);
        if nw == 0.0 {
            break;
        }
        w.iter_mut().for_each(|x| *x /= nw);
        kernel.apply_into(&masses_of(&w, h), &mut out);
        remove_means(&mut out);
        lambda = out.iter().zip(&w).zip(h).map(|((a, b), c)| a * b * c).sum::<f64>();
        std::mem::swap(&mut w, &mut out);
    }
    lambda.abs()
}

fn initial_point(
    constraints: &ConstraintSet,
    groups: &[MassGroup],
    cells: &[Vec<usize>],
    start: &Start,
) -> Result<Vec<f64>> {
    let grid = &constraints.domain;
    let h = grid.widths();
    let cap = constraints.cap_value();
    let mut out = vec![0.0; grid.len()];
    match start {
        Start::Uniform => {
            let zeros = vec![0.0; grid.len()];
            for (g, c) in groups.iter().zip(cells) {
                project_group(&zeros, h, c, g.target, cap, &mut out)?;
            }
        }
        Start::PiledLeft => {
            // Decreasing ramp, projected: the mass sits at the left ends.
            let raw: Vec<f64> = (0..grid.len()).map(|i| -(i as f64) * 1e3 / grid.len() as f64).collect();
            for (g, c) in groups.iter().zip(cells) {
                project_group(&raw, h, c, g.target, cap, &mut out)?;
            }
        }
        Start::Given(psi) => {
            if psi.len() != grid.len() {
                return Err(EqmError::Config(format!(
                    "starting density has {} entries, grid has {}",
                    psi.len(),
                    grid.len()
                )));
            }
            for (g, c) in groups.iter().zip(cells) {
                project_group(psi, h, c, g.target, cap, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Smallest sampled `V` over each group.
fn group_floors(v_mid: &[f64], cells: &[Vec<usize>]) -> Vec<f64> {
    cells
        .iter()
        .map(|c| c.iter().map(|&i| v_mid[i]).fold(f64::INFINITY, f64::min))
        .collect()
}

/// `1 + min_g min(|C_g|, |C_g - min_g V|)`. Never larger than `1 + max |C|`,
/// and unchanged when `V` moves by a constant on a group.
fn convergence_scale(mult: &[f64], floors: &[f64]) -> f64 {
    1.0 + mult
        .iter()
        .zip(floors)
        .map(|(c, low)| c.abs().min((c - low).abs()))
        .fold(f64::INFINITY, f64::min)
}

/// Minimises the discrete energy of `v` over the feasible set.
pub fn minimize(
    v: &PotentialSpec,
    constraints: &ConstraintSet,
    config: &SolverConfig,
) -> Result<MeasureSolution> {
    let kernel = LogKernelOperator::assemble(&constraints.domain);
    minimize_with_kernel(v, constraints, &kernel, config)
}

/// As [`minimize`], reusing an assembled kernel for `constraints.domain`.
pub fn minimize_with_kernel(
    v: &PotentialSpec,
    constraints: &ConstraintSet,
    kernel: &LogKernelOperator,
    config: &SolverConfig,
) -> Result<MeasureSolution> {
    config.validate()?;
    let groups = constraints.validate()?;
    let grid = &constraints.domain;
    if kernel.grid() != grid {
        return Err(EqmError::Config("kernel was assembled for a different grid".into()));
    }
    let n = grid.len();
    let h = grid.widths();
    let cap = constraints.cap_value();
    let cells = group_cells(grid, &groups);
    let v_mid = v.sample(grid.midpoints())?;
    if let Some(i) = v_mid.iter().position(|x| !x.is_finite()) {
        return Err(EqmError::Eval(format!(
            "V is not finite at x = {}",
            grid.midpoints()[i]
        )));
    }

    // The iteration sees `V` minus its minimum over each group. Group
    // masses are fixed, so this only moves the objective by a constant and
    // keeps the iterates independent of per-group offsets of `V`.
    let floors = group_floors(&v_mid, &cells);
    let mut v_iter = v_mid.clone();
    let mut offset = 0.0;
    for ((g, c), low) in groups.iter().zip(&cells).zip(&floors) {
        for &i in c {
            v_iter[i] = v_mid[i] - low;
        }
        offset += 2.0 * low * g.target;
    }
    let objective_of = |psi: &[f64], u: &[f64]| -> f64 {
        let m = masses_of(psi, h);
        dot(&m, u) + 2.0 * dot(&m, &v_iter)
    };

    let mut x = initial_point(constraints, &groups, &cells, &config.start)?;
    let mut kx = kernel.apply(&masses_of(&x, h));
    let mut fx = objective_of(&x, &kx);
    let mut x_prev = x.clone();
    let mut kx_prev = kx.clone();

    let lambda = lipschitz_estimate(kernel, &cells, config.power_iters);
    let mut lip = 2.0 * lambda * 1.02;
    if !(lip > 0.0) || !lip.is_finite() {
        lip = 1.0;
    }

    let mut t = 1.0f64;
    let mut iterations = 0;
    let mut restarts = 0;
    let mut converged = false;
    let mut y = vec![0.0; n];
    let mut ky = vec![0.0; n];
    let mut raw = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut kz = vec![0.0; n];

    let tol_of = |mult: &[f64], report: &KktReport| -> bool {
        report.max_residual() <= config.tol_kkt * convergence_scale(mult, &floors)
    };

    let (mut mult, mut from_band, mut report) =
        assess(grid, &groups, &cells, &x, &kx, &v_mid, cap, config.kkt_endpoint_margin);
    if tol_of(&mult, &report) {
        converged = true;
    }

    while !converged && iterations < config.max_iter {
        iterations += 1;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        for i in 0..n {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
            ky[i] = kx[i] + beta * (kx[i] - kx_prev[i]);
            raw[i] = y[i] - 2.0 * (ky[i] + v_iter[i]) / lip;
        }
        for (g, c) in groups.iter().zip(&cells) {
            project_group(&raw, h, c, g.target, cap, &mut z)?;
        }
        kernel.apply_into(&masses_of(&z, h), &mut kz);
        let fz = objective_of(&z, &kz);
        let slack = 1e-14 * (1.0 + fx.abs());
        if fz > fx + slack {
            if beta > 0.0 {
                // Drop the momentum and retry from x.
                t = 1.0;
                x_prev.copy_from_slice(&x);
                kx_prev.copy_from_slice(&kx);
            } else {
                lip *= 2.0;
            }
            restarts += 1;
            continue;
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut kx_prev, &mut kx);
        x.copy_from_slice(&z);
        kx.copy_from_slice(&kz);
        fx = fz;
        t = t_next;

        if iterations % config.check_every == 0 {
            (mult, from_band, report) =
                assess(grid, &groups, &cells, &x, &kx, &v_mid, cap, config.kkt_endpoint_margin);
            converged = tol_of(&mult, &report);
        }
    }
    if !converged {
        (mult, from_band, report) =
            assess(grid, &groups, &cells, &x, &kx, &v_mid, cap, config.kkt_endpoint_margin);
        converged = tol_of(&mult, &report);
    }

    let energy = kernel::energy(kernel, &v_mid, &x)?;
    Ok(MeasureSolution {
        potential: v.label().to_string(),
        masses: grid.block_masses(&x),
        grid: grid.clone(),
        psi: x,
        cap: constraints.cap,
        total_mass: constraints.total_mass,
        groups,
        multipliers: mult,
        multiplier_from_band: from_band,
        kkt: report,
        energy,
        objective: fx + offset,
        iterations,
        restarts,
        lipschitz: lip,
        converged,
        tol_kkt: config.tol_kkt,
        kkt_endpoint_margin: config.kkt_endpoint_margin,
        v_mid,
        cell_potential: kx,
    })
}

/// Multipliers, residuals and energies of a given density, without any
/// iteration. The density is taken as is, feasible or not.
pub fn evaluate_density(
    v: &PotentialSpec,
    constraints: &ConstraintSet,
    kernel: &LogKernelOperator,
    psi: Vec<f64>,
    config: &SolverConfig,
) -> Result<MeasureSolution> {
    let groups = constraints.validate()?;
    let grid = &constraints.domain;
    if kernel.grid() != grid || psi.len() != grid.len() {
        return Err(EqmError::Config("density, kernel and grid disagree".into()));
    }
    let cells = group_cells(grid, &groups);
    let v_mid = v.sample(grid.midpoints())?;
    let u = kernel.apply(&masses_of(&psi, grid.widths()));
    let cap = constraints.cap_value();
    let (mult, from_band, report) =
        assess(grid, &groups, &cells, &psi, &u, &v_mid, cap, config.kkt_endpoint_margin);
    let scale = convergence_scale(&mult, &group_floors(&v_mid, &cells));
    let m = masses_of(&psi, grid.widths());
    Ok(MeasureSolution {
        potential: v.label().to_string(),
        masses: grid.block_masses(&psi),
        grid: grid.clone(),
        cap: constraints.cap,
        total_mass: constraints.total_mass,
        groups,
        multipliers: mult,
        multiplier_from_band: from_band,
        converged: report.max_residual() <= config.tol_kkt * scale,
        kkt: report,
        energy: kernel::energy(kernel, &v_mid, &psi)?,
        objective: dot(&m, &u) + 2.0 * dot(&m, &v_mid),
        iterations: 0,
        restarts: 0,
        lipschitz: 0.0,
        tol_kkt: config.tol_kkt,
        kkt_endpoint_margin: config.kkt_endpoint_margin,
        psi,
        v_mid,
        cell_potential: u,
    })
}

/// Cells the support must keep from each end of a truncation window.
pub const WINDOW_MARGIN_CELLS: usize = 5;

/// Unconstrained solve on an automatically chosen window `[-R, R]`, doubling
/// `R` until the computed support keeps [`WINDOW_MARGIN_CELLS`] cells away
/// from both ends.
pub fn solve_unconstrained(
    v: &PotentialSpec,
    mass: f64,
    cells: usize,
    config: &SolverConfig,
) -> Result<MeasureSolution> {
    let mut window = potential::truncation_window(v, mass)?;
    for _ in 0..=potential::MAX_DOUBLINGS {
        let grid = Grid::uniform(window, cells)?;
        let sol = minimize(v, &ConstraintSet::unconstrained(grid, mass), config)?;
        if support_clear_of_ends(&sol, WINDOW_MARGIN_CELLS) {
            return Ok(sol);
        }
        window = Interval::symmetric(2.0 * window.hi);
    }
    Err(EqmError::Growth(format!(
        "support reaches the window edge up to radius {}",
        window.hi / 2.0
    )))
}

/// True when the first and last `margin` cells of every block are void.
pub fn support_clear_of_ends(sol: &MeasureSolution, margin: usize) -> bool {
    let tol = sol.kkt.tol_act;
    sol.grid.blocks().iter().all(|b| {
        let r = b.range();
        let n = b.cells;
        (0..margin.min(n)).all(|k| sol.psi[r.start + k] <= tol && sol.psi[r.start + n - 1 - k] <= tol)
    })
}

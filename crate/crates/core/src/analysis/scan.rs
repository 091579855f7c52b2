use rayon::prelude::*;
use serde::Serialize;

use crate::error::{EqmError, Result};
use crate::grid::{Grid, Interval, Resolution};
use crate::potential::PotentialSpec;
use crate::solver::{minimize, solve_unconstrained, ConstraintSet, MeasureSolution, SolverConfig};

use super::classify::{classify, ClassifyPolicy};
use super::fit::Verdict;

pub const SCHEMA: &str = "eqm/1";

/// Feasible sets probed by a scan.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ScanMode {
    /// Mass one for `V(s^γ x) / s` on an automatic window of `cells` cells.
    Unconstrained { cells: usize },
    /// Mass `s` for `V` on the given intervals under the cap.
    Capped {
        intervals: Vec<Interval>,
        cap: f64,
        cells_per_interval: usize,
    },
}

#[derive(Debug, Clone)]
pub struct ScanConfig {
    pub mode: ScanMode,
    pub gamma: f64,
    pub solver: SolverConfig,
    pub policy: ClassifyPolicy,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub s: f64,
    pub verdict: Verdict,
    pub bands: Option<usize>,
    /// Largest `|e - 1/2|` over fitted edges.
    pub worst_exponent_deviation: Option<f64>,
    pub phase_gap: Option<f64>,
    pub kkt_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub reasons: Vec<String>,
}

/// Maximal run of consecutive non-regular mass values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlaggedWindow {
    pub s_first: f64,
    pub s_last: f64,
    pub count: usize,
    /// `count` times the local grid step.
    pub measure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanReport {
    pub schema: &'static str,
    pub potential: String,
    pub gamma: f64,
    pub mode: ScanMode,
    pub s_values: Vec<f64>,
    pub rows: Vec<ScanRow>,
    pub flagged_windows: Vec<FlaggedWindow>,
    pub flagged_measure: f64,
    pub regular_fraction: f64,
}

impl ScanReport {
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,verdict,bands,worst_exponent_deviation,phase_gap,kkt_residual,iterations,reasons")?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6e}"));
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},\"{}\"",
                r.s,
                r.verdict.as_str(),
                r.bands.map_or(String::new(), |b| b.to_string()),
                opt(r.worst_exponent_deviation),
                opt(r.phase_gap),
                opt(r.kkt_residual),
                r.iterations.map_or(String::new(), |b| b.to_string()),
                r.reasons.join("; ").replace('"', "'"),
            )?;
        }
        Ok(())
    }
}

/// `from, from + step, ...` up to `to` inclusive (within a tenth of a step).
pub fn s_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from > 0.0) || !(to >= from) || !(step > 0.0) {
        return Err(EqmError::Config(format!(
            "need 0 < s_from <= s_to and s_step > 0, got {from}, {to}, {step}"
        )));
    }
    let count = ((to - from) / step + 0.1).floor() as usize + 1;
    // Rounded to twelve significant digits so that decimal inputs give
    // decimal grid points.
    let round = |x: f64| {
        let e = 10f64.powi(11 - x.abs().log10().floor() as i32);
        (x * e).round() / e
    };
    Ok((0..count).map(|k| round(from + k as f64 * step)).collect())
}

/// Solves the problem of one scan point.
pub fn solve_at(v: &PotentialSpec, s: f64, config: &ScanConfig) -> Result<MeasureSolution> {
    match &config.mode {
        ScanMode::Unconstrained { cells } => {
            let w = v.rescale(s, config.gamma)?;
            solve_unconstrained(&w, 1.0, *cells, &config.solver)
        }
        ScanMode::Capped {
            intervals,
            cap,
            cells_per_interval,
        } => {
            let grid = Grid::new(intervals, Resolution::PerInterval(*cells_per_interval))?;
            minimize(v, &ConstraintSet::capped(grid, s, *cap), &config.solver)
        }
    }
}

fn row_at(v: &PotentialSpec, s: f64, config: &ScanConfig) -> ScanRow {
    match solve_at(v, s, config) {
        Ok(sol) => {
            let c = classify(&sol, &config.policy);
            let dev = c.worst_exponent_deviation();
            ScanRow {
                s,
                verdict: c.verdict,
                bands: Some(c.band_count),
                worst_exponent_deviation: dev.is_finite().then_some(dev),
                phase_gap: c.phase_gap.is_finite().then_some(c.phase_gap),
                kkt_residual: Some(sol.kkt.max_residual()),
                iterations: Some(sol.iterations),
                reasons: c.findings.into_iter().map(|f| f.reason).collect(),
            }
        }
        Err(err) => ScanRow {
            s,
            verdict: Verdict::Indeterminate,
            bands: None,
            worst_exponent_deviation: None,
            phase_gap: None,
            kkt_residual: None,
            iterations: None,
            reasons: vec![err.to_string()],
        },
    }
}

/// Classifies the minimiser at every mass in `s_values`. Failures are
/// recorded per row.
pub fn genericity_scan(v: &PotentialSpec, s_values: &[f64], config: &ScanConfig) -> Result<ScanReport> {
    if s_values.iter().any(|s| !(*s > 0.0) || !s.is_finite())
        || s_values.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(EqmError::Config("mass values must be positive and increasing".into()));
    }
    config.solver.validate()?;
    if let ScanMode::Capped { intervals, cap, .. } = &config.mode {
        if config.gamma != 0.0 {
            return Err(EqmError::Config("capped scans take gamma = 0".into()));
        }
        let capacity = cap * intervals.iter().map(Interval::len).sum::<f64>();
        if let Some(&last) = s_values.last() {
            if !(last < capacity) {
                return Err(EqmError::Config(format!(
                    "largest mass {last} must stay below cap times length {capacity}"
                )));
            }
        }
    }
    let rows: Vec<ScanRow> = s_values.par_iter().map(|&s| row_at(v, s, config)).collect();
    let flagged_windows = flagged_windows(s_values, &rows);
    let regular = rows.iter().filter(|r| r.verdict == Verdict::Regular).count();
    Ok(ScanReport {
        schema: SCHEMA,
        potential: v.label().to_string(),
        gamma: config.gamma,
        mode: config.mode.clone(),
        s_values: s_values.to_vec(),
        flagged_measure: flagged_windows.iter().map(|w| w.measure).sum(),
        regular_fraction: if rows.is_empty() { 1.0 } else { regular as f64 / rows.len() as f64 },
        flagged_windows,
        rows,
    })
}

fn local_step(s: &[f64], k: usize) -> f64 {
    match s.len() {
        0 | 1 => 0.0,
        n if k + 1 < n => s[k + 1] - s[k],
        _ => s[k] - s[k - 1],
    }
}

fn flagged_windows(s: &[f64], rows: &[ScanRow]) -> Vec<FlaggedWindow> {
    let mut out: Vec<FlaggedWindow> = Vec::new();
    let mut open = false;
    for (k, r) in rows.iter().enumerate() {
        if r.verdict == Verdict::Regular {
            open = false;
            continue;
        }
        let step = local_step(s, k);
        match out.last_mut() {
            Some(w) if open => {
                w.s_last = s[k];
                w.count += 1;
                w.measure += step;
            }
            _ => out.push(FlaggedWindow {
                s_first: s[k],
                s_last: s[k],
                count: 1,
                measure: step,
            }),
        }
        open = true;
    }
    out
}

/// `sup |ψ₂(x) - s^(γ-1) ψ₁(s^γ x)| / max ψ₂` over the midpoints of `psi2`,
/// with `psi1` linearly interpolated.
pub fn density_discrepancy(sol1: &MeasureSolution, sol2: &MeasureSolution, s: f64, gamma: f64) -> f64 {
    let scale = s.powf(gamma);
    let factor = s.powf(gamma - 1.0);
    let top = sol2.max_density();
    sol2.grid
        .midpoints()
        .iter()
        .zip(&sol2.psi)
        .map(|(&x, &p)| (p - factor * sol1.grid.interpolate(&sol1.psi, scale * x)).abs())
        .fold(0.0, f64::max)
        / top
}

/// Solves the mass-`s` problem for `V` and the mass-one problem for the
/// rescaled potential on matching grids and compares the densities.
///
/// Without a cap, the second problem uses `V(s^γ x)/s` on the window chosen
/// for it and the first uses that window scaled by `s^γ`. With a cap the
/// exponent must be one: the second problem lives on `K/s`.
pub fn scaling_consistency(
    v: &PotentialSpec,
    gamma: f64,
    s: f64,
    constraints: Option<(&Grid, f64)>,
    cells: usize,
    config: &SolverConfig,
) -> Result<f64> {
    match constraints {
        None => {
            let w = v.rescale(s, gamma)?;
            let sol2 = solve_unconstrained(&w, 1.0, cells, config)?;
            let grid1 = sol2.grid.scaled(s.powf(gamma))?;
            let sol1 = minimize(v, &ConstraintSet::unconstrained(grid1, s), config)?;
            Ok(density_discrepancy(&sol1, &sol2, s, gamma))
        }
        Some((grid, cap)) => {
            if gamma != 1.0 {
                return Err(EqmError::Config("capped rescaling needs gamma = 1".into()));
            }
            let sol1 = minimize(v, &ConstraintSet::capped(grid.clone(), s, cap), config)?;
            let w = v.rescale(s, 1.0)?;
            let sol2 = minimize(&w, &ConstraintSet::capped(grid.scaled(1.0 / s)?, 1.0, cap), config)?;
            Ok(density_discrepancy(&sol1, &sol2, s, 1.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(s: f64, verdict: Verdict) -> ScanRow {
        ScanRow {
            s,
            verdict,
            bands: None,
            worst_exponent_deviation: None,
            phase_gap: None,
            kkt_residual: None,
            iterations: None,
            reasons: vec![],
        }
    }

    #[test]
    fn windows_are_maximal_runs() {
        use Verdict::*;
        let s = s_grid(0.1, 0.8, 0.1).unwrap();
        assert_eq!(s.len(), 8);
        assert_eq!(s[5], 0.6);
        let v = [Regular, Singular, Indeterminate, Regular, Regular, Indeterminate, Regular, Singular];
        let rows: Vec<ScanRow> = s.iter().zip(v).map(|(&s, v)| row(s, v)).collect();
        let w = flagged_windows(&s, &rows);
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].count, 2);
        assert!((w[0].measure - 0.2).abs() < 1e-12);
        assert!((w[2].s_first - 0.8).abs() < 1e-12);
    }

    #[test]
    fn grid_of_masses() {
        let s = s_grid(0.2, 3.0, 0.05).unwrap();
        assert_eq!(s.len(), 57);
        assert!((s[56] - 3.0).abs() < 1e-12);
        assert!(s_grid(1.0, 0.5, 0.1).is_err());
        assert_eq!(s_grid(1.0, 1.0, 0.1).unwrap(), vec![1.0]);
    }

    #[test]
    fn empty_scan() {
        let cfg = ScanConfig {
            mode: ScanMode::Unconstrained { cells: 100 },
            gamma: 0.0,
            solver: SolverConfig::default(),
            policy: ClassifyPolicy::default(),
        };
        let r = genericity_scan(&PotentialSpec::quadratic(), &[], &cfg).unwrap();
        assert!(r.rows.is_empty() && r.flagged_windows.is_empty());
    }
}

//! The batch commands. Each returns an exit code and a printable summary;
//! files go to the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use eqm_core::analysis::{classify, genericity_scan, Classification, EdgeFit, ScanReport, Verdict, SCHEMA};
use eqm_core::field::{acf_phi, line_obstacle_margin, AcfQuadrature, ObstacleGap, PlaneField};
use eqm_core::solver::{minimize, solve_unconstrained};
use eqm_core::{LogKernelOperator, MeasureSolution};

use crate::config::{Format, RunConfig};
use crate::error::{CliError, EXIT_COMPUTE, EXIT_OK};
use crate::svg::{line_plot, verdict_bar, Shade};

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub summary: String,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>, CliError> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let mut w = create(dir, name)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn json_string<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn tag<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value)
        .unwrap_or_default()
        .trim_matches('"')
        .to_string()
}

/// Solves the configured problem: the constrained problem when a domain is
/// given, otherwise the unconstrained one on an automatic window.
pub fn solve(cfg: &RunConfig) -> Result<MeasureSolution, CliError> {
    let p = cfg.prepare()?;
    Ok(match &p.constraints {
        Some(c) => minimize(&p.potential, c, &cfg.solver)?,
        None => solve_unconstrained(&p.potential, cfg.mass, cfg.n, &cfg.solver)?,
    })
}

pub fn write_density_csv<W: Write>(
    sol: &MeasureSolution,
    class: &Classification,
    mut w: W,
) -> std::io::Result<()> {
    writeln!(w, "x,psi,regime,U_plus_V_minus_C")?;
    let gap = sol.obstacle_gap();
    for (i, x) in sol.grid.midpoints().iter().enumerate() {
        writeln!(
            w,
            "{x},{},{},{}",
            sol.psi[i],
            class.decomposition.regimes[i].as_str(),
            gap[i]
        )?;
    }
    Ok(())
}

pub fn write_edges_csv<W: Write>(fits: &[EdgeFit], mut w: W) -> std::io::Result<()> {
    writeln!(
        w,
        "location,side,kind,exponent,coefficient,window_near,window_far,cells,correction_degree,r_squared,verdict"
    )?;
    for f in fits {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            f.location,
            tag(&f.side),
            tag(&f.kind),
            f.exponent,
            f.coefficient,
            f.window[0],
            f.window[1],
            f.cells,
            f.correction_degree,
            f.r_squared,
            f.verdict.as_str()
        )?;
    }
    Ok(())
}

fn density_svg(sol: &MeasureSolution, class: &Classification) -> String {
    let mut shades: Vec<Shade> = class
        .decomposition
        .bands
        .iter()
        .map(|b| Shade { lo: b.lo, hi: b.hi, fill: "#3a7d44" })
        .collect();
    shades.extend(
        class
            .decomposition
            .saturated
            .iter()
            .map(|b| Shade { lo: b.lo, hi: b.hi, fill: "#c0392b" }),
    );
    let title = format!(
        "{}  s={}  verdict {}",
        sol.potential,
        sol.total_mass,
        class.verdict.as_str()
    );
    line_plot(sol.grid.midpoints(), &sol.psi, &shades, &title)
}

#[derive(Serialize)]
struct SolveReport<'a> {
    schema: &'static str,
    command: &'static str,
    potential: &'a str,
    verdict: Verdict,
    converged: bool,
    solution: &'a MeasureSolution,
    classification: &'a Classification,
}

fn solve_summary(sol: &MeasureSolution, class: &Classification) -> String {
    let mut s = format!(
        "{} s={} n={} converged={} iterations={} kkt={:.3e} verdict={}",
        sol.potential,
        sol.total_mass,
        sol.grid.len(),
        sol.converged,
        sol.iterations,
        sol.kkt.max_residual(),
        class.verdict.as_str()
    );
    for (k, c) in sol.multipliers.iter().enumerate() {
        let _ = write!(s, " C{k}={c}");
    }
    for f in &class.findings {
        let _ = write!(s, "\n  {}: {}", f.verdict.as_str(), f.reason);
    }
    s
}

fn exit_for(sol: &MeasureSolution) -> i32 {
    if sol.converged {
        EXIT_OK
    } else {
        EXIT_COMPUTE
    }
}

/// `density.csv`, `solution.json`, `density.svg`; optionally the kernel
/// matrix as CSV.
pub fn cmd_solve(cfg: &RunConfig, dump_kernel: Option<&Path>) -> Result<Outcome, CliError> {
    let sol = solve(cfg)?;
    let class = classify(&sol, &cfg.policy);
    if cfg.wants(Format::Csv) {
        let mut w = create(&cfg.out, "density.csv")?;
        write_density_csv(&sol, &class, &mut w)?;
        w.flush()?;
    }
    if cfg.wants(Format::Json) {
        let report = SolveReport {
            schema: SCHEMA,
            command: "solve",
            potential: &sol.potential,
            verdict: class.verdict,
            converged: sol.converged,
            solution: &sol,
            classification: &class,
        };
        write_text(&cfg.out, "solution.json", &json_string(&report)?)?;
    }
    if cfg.wants(Format::Svg) {
        write_text(&cfg.out, "density.svg", &density_svg(&sol, &class))?;
    }
    if let Some(path) = dump_kernel {
        let k = LogKernelOperator::assemble(&sol.grid);
        let mut w = BufWriter::new(fs::File::create(path)?);
        k.write_csv(&mut w)?;
        w.flush()?;
    }
    Ok(Outcome {
        code: exit_for(&sol),
        summary: solve_summary(&sol, &class),
    })
}

/// Edge fits and findings: `edges.csv`, `classification.json`.
pub fn cmd_classify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let sol = solve(cfg)?;
    let class = classify(&sol, &cfg.policy);
    if cfg.wants(Format::Csv) {
        let mut w = create(&cfg.out, "edges.csv")?;
        write_edges_csv(&class.edge_fits, &mut w)?;
        w.flush()?;
    }
    if cfg.wants(Format::Json) {
        #[derive(Serialize)]
        struct Report<'a> {
            schema: &'static str,
            potential: &'a str,
            total_mass: f64,
            converged: bool,
            classification: &'a Classification,
        }
        let r = Report {
            schema: SCHEMA,
            potential: &sol.potential,
            total_mass: sol.total_mass,
            converged: sol.converged,
            classification: &class,
        };
        write_text(&cfg.out, "classification.json", &json_string(&r)?)?;
    }
    let mut summary = solve_summary(&sol, &class);
    for f in &class.edge_fits {
        let _ = write!(
            summary,
            "\n  edge {:.6} {} e={:.4} Q={:.4} R2={:.5} window=[{:.1},{:.1}]h {}",
            f.location,
            tag(&f.kind),
            f.exponent,
            f.coefficient,
            f.r_squared,
            f.window[0],
            f.window[1],
            f.verdict.as_str()
        );
    }
    Ok(Outcome {
        code: exit_for(&sol),
        summary,
    })
}

/// `scan.csv`, `scan.json`, `verdictbar.svg`.
pub fn cmd_scan(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = cfg.prepare()?;
    let (s_values, scan) = cfg.scan_plan()?;
    let report: ScanReport = genericity_scan(&p.potential, &s_values, &scan)?;
    if cfg.wants(Format::Csv) {
        let mut w = create(&cfg.out, "scan.csv")?;
        report.write_csv(&mut w)?;
        w.flush()?;
    }
    if cfg.wants(Format::Json) {
        write_text(&cfg.out, "scan.json", &json_string(&report)?)?;
    }
    if cfg.wants(Format::Svg) {
        write_text(&cfg.out, "verdictbar.svg", &verdict_bar(&report))?;
    }
    let all_failed = report.rows.iter().all(|r| r.kkt_residual.is_none());
    let mut summary = format!(
        "{} gamma={} points={} regular={:.1}% flagged windows={} flagged measure={:.6}",
        report.potential,
        report.gamma,
        report.rows.len(),
        100.0 * report.regular_fraction,
        report.flagged_windows.len(),
        report.flagged_measure
    );
    for w in &report.flagged_windows {
        let _ = write!(summary, "\n  [{}, {}] ({} points)", w.s_first, w.s_last, w.count);
    }
    Ok(Outcome {
        code: if all_failed { EXIT_COMPUTE } else { EXIT_OK },
        summary,
    })
}

#[derive(Debug, Serialize)]
struct DecaySample {
    radius: f64,
    error: f64,
    bound: f64,
}

#[derive(Debug, Serialize)]
struct FieldReport {
    schema: &'static str,
    potential: String,
    mass: f64,
    multiplier: f64,
    harmonicity_step: f64,
    harmonicity_residual: f64,
    decay: Vec<DecaySample>,
    line_obstacle_margin: f64,
    /// Two-phase split of `u + V` near the first band edge; `V` is
    /// extended constantly off the line, so this is only a heuristic.
    acf_heuristic: Option<AcfHeuristic>,
}

#[derive(Debug, Serialize)]
struct AcfHeuristic {
    center: f64,
    scale: f64,
    samples: Vec<eqm_core::field::AcfSample>,
}

const FIELD_COLUMNS: usize = 81;
const FIELD_ROWS: usize = 41;
const HARMONICITY_STEP: f64 = 1e-3;
const DECAY_RADII: [f64; 2] = [1e3, 1e6];
const DECAY_RAYS: usize = 16;

/// Field samples, decay and harmonicity checks, and the heuristic ACF
/// profile: `field.csv`, `acf.csv`, `field.json`.
pub fn cmd_field(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let p = cfg.prepare()?;
    let sol = solve(cfg)?;
    let class = classify(&sol, &cfg.policy);
    let field = PlaneField::new(&sol);
    let hull = sol.grid.hull();
    let (x0, x1) = (hull.lo - 0.5 * hull.len(), hull.hi + 0.5 * hull.len());
    let lattice: Vec<[f64; 2]> = (0..FIELD_ROWS)
        .flat_map(|r| {
            let y = -1.0 + 2.0 * r as f64 / (FIELD_ROWS - 1) as f64;
            (0..FIELD_COLUMNS).map(move |c| [x0 + (x1 - x0) * c as f64 / (FIELD_COLUMNS - 1) as f64, y])
        })
        .collect();
    let values = field.eval_many(&lattice);
    let off_line: Vec<[f64; 2]> = lattice.iter().copied().filter(|p| p[1].abs() >= 0.1).collect();
    let harmonicity = field.harmonicity_residual(&off_line, HARMONICITY_STEP);
    let support = class
        .decomposition
        .bands
        .iter()
        .chain(&class.decomposition.saturated)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), i| (a.min(i.lo), b.max(i.hi)));
    let diameter = if support.1 > support.0 { support.1 - support.0 } else { hull.len() };
    let decay: Vec<DecaySample> = DECAY_RADII
        .iter()
        .zip(field.decay_error(&DECAY_RADII, DECAY_RAYS))
        .map(|(&radius, error)| DecaySample {
            radius,
            error,
            bound: 10.0 * sol.total_mass * diameter / radius,
        })
        .collect();
    let acf = match class.decomposition.bands.first() {
        Some(band) => {
            let gap = ObstacleGap {
                field: &field,
                potential: &p.potential,
                center: band.lo,
                scale: 0.25 * band.len(),
            };
            let radii = [0.1, 0.3, 0.5, 0.7, 0.9];
            let quad = AcfQuadrature {
                radial_nodes: 32,
                angular_panels: 64,
                panel_order: 4,
            };
            Some(AcfHeuristic {
                center: gap.center,
                scale: gap.scale,
                samples: acf_phi(&gap, &gap, &radii, &quad)?,
            })
        }
        None => None,
    };
    let report = FieldReport {
        schema: SCHEMA,
        potential: sol.potential.clone(),
        mass: field.mass(),
        multiplier: field.multiplier(),
        harmonicity_step: HARMONICITY_STEP,
        harmonicity_residual: harmonicity,
        decay,
        line_obstacle_margin: line_obstacle_margin(&sol),
        acf_heuristic: acf,
    };
    if cfg.wants(Format::Csv) {
        let mut w = create(&cfg.out, "field.csv")?;
        writeln!(w, "x,y,u")?;
        for (p, u) in lattice.iter().zip(&values) {
            writeln!(w, "{},{},{u}", p[0], p[1])?;
        }
        w.flush()?;
        if let Some(a) = &report.acf_heuristic {
            let mut w = create(&cfg.out, "acf.csv")?;
            writeln!(w, "r,phi,phi_coarse")?;
            for s in &a.samples {
                writeln!(w, "{},{},{}", s.r, s.phi, s.phi_coarse)?;
            }
            w.flush()?;
        }
    }
    if cfg.wants(Format::Json) {
        write_text(&cfg.out, "field.json", &json_string(&report)?)?;
    }
    let mut summary = format!(
        "{} s={} C={} harmonicity={:.3e} line obstacle margin={:.3e}",
        report.potential, report.mass, report.multiplier, report.harmonicity_residual, report.line_obstacle_margin
    );
    for d in &report.decay {
        let _ = write!(summary, "\n  decay |z|={:e}: error {:.3e} (bound {:.3e})", d.radius, d.error, d.bound);
    }
    Ok(Outcome {
        code: exit_for(&sol),
        summary,
    })
}

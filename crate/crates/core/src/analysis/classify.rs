use serde::{Deserialize, Serialize};

use crate::solver::{recover_multipliers, MeasureSolution, Regime};

use super::fit::{fit_edge, EdgeFit, FitPolicy, Verdict};
use super::support::{extract_support, phase_gap, EdgeKind, SupportDecomposition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyPolicy {
    pub fit: FitPolicy,
    /// Minimum distance, in cells, between a band and an end of its
    /// interval when the density is capped.
    pub endpoint_clearance_cells: f64,
    /// Cells within this many widths of an edge are exempt from the
    /// obstacle margin test.
    pub margin_exclusion_cells: f64,
    /// `κ` in the required margin `κ max(h, tol)^(1/2)`.
    pub margin_constant: f64,
}

impl Default for ClassifyPolicy {
    fn default() -> Self {
        Self {
            fit: FitPolicy::default(),
            endpoint_clearance_cells: 3.0,
            margin_exclusion_cells: 8.0,
            margin_constant: 0.01,
        }
    }
}

/// One reason an edge or region is not regular.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Finding {
    pub verdict: Verdict,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub findings: Vec<Finding>,
    pub decomposition: SupportDecomposition,
    pub edge_fits: Vec<EdgeFit>,
    pub band_count: usize,
    pub phase_gap: f64,
    /// Smallest `U + V - C` over void cells away from edges.
    pub void_margin: f64,
    /// Smallest `C - U - V` over saturated cells away from edges.
    pub saturated_margin: f64,
    pub required_margin: f64,
    /// Smallest `min(ψ, θ - ψ) / max ψ` over band cells away from edges.
    pub interior_floor: f64,
}

impl Classification {
    /// Largest `|e - 1/2|` over fitted edges.
    pub fn worst_exponent_deviation(&self) -> f64 {
        self.edge_fits
            .iter()
            .map(|f| (f.exponent - 0.5).abs())
            .fold(f64::NAN, f64::max)
    }
}

/// Regular iff every edge fit is regular, bands stay clear of the interval
/// ends in capped mode, and the obstacle inequality holds with a margin away
/// from the edges.
pub fn classify(solution: &MeasureSolution, policy: &ClassifyPolicy) -> Classification {
    let tol_act = solution.tol_act();
    let decomposition = extract_support(solution, tol_act);
    let mut findings = Vec::new();
    let mut note = |verdict: Verdict, reason: String| findings.push(Finding { verdict, reason });

    if !solution.converged {
        note(
            Verdict::Indeterminate,
            format!("solver did not converge (residual {:.3e})", solution.kkt.max_residual()),
        );
    }

    let mut edge_fits = Vec::new();
    for (k, e) in decomposition.edges.iter().enumerate() {
        match e.kind {
            EdgeKind::SaturatedVoid => note(
                Verdict::Singular,
                format!("void touches saturation at {:.6}", e.location),
            ),
            EdgeKind::DomainEndpoint => {}
            EdgeKind::VoidBand | EdgeKind::BandSaturated => {
                match fit_edge(solution, &decomposition, k, &policy.fit) {
                    Ok(fit) => {
                        if fit.verdict != Verdict::Regular {
                            note(
                                fit.verdict,
                                format!(
                                    "edge at {:.6}: exponent {:.4}, R² {:.5}",
                                    fit.location, fit.exponent, fit.r_squared
                                ),
                            );
                        }
                        edge_fits.push(fit);
                    }
                    Err(err) => note(Verdict::Indeterminate, err.to_string()),
                }
            }
        }
    }

    let capped = solution.cap.is_some();
    let blocks = solution.grid.blocks();
    for run in decomposition.runs.iter().filter(|r| r.regime == Regime::Band) {
        let b = &blocks[run.block];
        let clearance = (run.extent.lo - b.interval.lo).min(b.interval.hi - run.extent.hi);
        let touches = run.start == b.start || run.end == b.range().end;
        if capped && (touches || clearance < policy.endpoint_clearance_cells * b.width) {
            note(
                Verdict::Singular,
                format!("band [{:.6}, {:.6}] reaches an interval end", run.extent.lo, run.extent.hi),
            );
        } else if !capped && touches {
            note(
                Verdict::Indeterminate,
                format!("band [{:.6}, {:.6}] reaches an end of the grid", run.extent.lo, run.extent.hi),
            );
        }
    }

    let h = solution.grid.max_width();
    let required_margin = policy.margin_constant * h.max(solution.tol_kkt).sqrt();
    let (mut void_margin, mut saturated_margin) = (f64::INFINITY, f64::INFINITY);
    match recover_multipliers(solution) {
        Ok(mult) => {
            let group = solution.group_of_cells();
            let edges: Vec<f64> = decomposition
                .edges
                .iter()
                .filter(|e| e.kind != EdgeKind::DomainEndpoint)
                .map(|e| e.location)
                .collect();
            let exclusion = policy.margin_exclusion_cells * h;
            for (i, &x) in solution.grid.midpoints().iter().enumerate() {
                if edges.iter().any(|&p| (x - p).abs() <= exclusion) {
                    continue;
                }
                let gap = solution.cell_potential[i] + solution.v_mid[i] - mult[group[i]];
                match decomposition.regimes[i] {
                    Regime::Void => void_margin = void_margin.min(gap),
                    Regime::Saturated => saturated_margin = saturated_margin.min(-gap),
                    Regime::Band => {}
                }
            }
            if void_margin < required_margin {
                note(
                    Verdict::Indeterminate,
                    format!("void obstacle margin {void_margin:.3e} below {required_margin:.3e}"),
                );
            }
            if saturated_margin < required_margin {
                note(
                    Verdict::Indeterminate,
                    format!("saturated obstacle margin {saturated_margin:.3e} below {required_margin:.3e}"),
                );
            }
        }
        Err(err) => note(Verdict::Indeterminate, err.to_string()),
    }

    let top = solution.max_density();
    let cap = solution.cap_value();
    let mut interior_floor = f64::INFINITY;
    for run in decomposition.runs.iter().filter(|r| r.regime == Regime::Band) {
        for i in run.start..run.end {
            let x = solution.grid.midpoints()[i];
            if x - run.extent.lo <= policy.margin_exclusion_cells * h
                || run.extent.hi - x <= policy.margin_exclusion_cells * h
            {
                continue;
            }
            let p = solution.psi[i];
            interior_floor = interior_floor.min(p.min(cap - p) / top);
        }
    }
    if interior_floor < required_margin {
        note(
            Verdict::Indeterminate,
            format!("band density dips to {interior_floor:.3e} of its maximum"),
        );
    }

    let verdict = findings
        .iter()
        .fold(Verdict::Regular, |v, f| v.worst(f.verdict));
    Classification {
        verdict,
        band_count: decomposition.band_count(),
        phase_gap: phase_gap(&decomposition),
        findings,
        decomposition,
        edge_fits,
        void_margin,
        saturated_margin,
        required_margin,
        interior_floor,
    }
}

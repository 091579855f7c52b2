use serde::Serialize;

use crate::grid::{Grid, Interval};
use crate::solver::{MeasureSolution, Regime};

/// Runs shorter than this many cells are absorbed by a neighbour.
pub const DEBOUNCE_CELLS: usize = 3;

/// Maximal run of cells sharing a regime after debouncing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRun {
    pub regime: Regime,
    pub block: usize,
    /// First cell, global numbering.
    pub start: usize,
    /// One past the last cell.
    pub end: usize,
    /// Extent between the refined edges (or block ends).
    pub extent: Interval,
}

impl RegimeRun {
    pub fn cells(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    VoidBand,
    BandSaturated,
    /// Void directly against saturation; never a legal configuration.
    SaturatedVoid,
    /// A band or saturated run reaching an end of its interval.
    DomainEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Edge {
    pub location: f64,
    pub kind: EdgeKind,
    pub block: usize,
    /// Index of the run on the left, `None` at the left end of a block.
    pub left_run: Option<usize>,
    pub right_run: Option<usize>,
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportDecomposition {
    pub runs: Vec<RegimeRun>,
    pub bands: Vec<Interval>,
    pub saturated: Vec<Interval>,
    pub void: Vec<Interval>,
    pub edges: Vec<Edge>,
    pub tol_act: f64,
    /// Cell regimes after debouncing.
    pub regimes: Vec<Regime>,
}

impl SupportDecomposition {
    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    pub fn flagged_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.flagged)
    }
}

/// Run-length encoding of `regimes[range]` as (regime, length).
fn encode(regimes: &[Regime]) -> Vec<(Regime, usize)> {
    let mut out: Vec<(Regime, usize)> = Vec::new();
    for &r in regimes {
        match out.last_mut() {
            Some((last, len)) if *last == r => *len += 1,
            _ => out.push((r, 1)),
        }
    }
    out
}

fn coalesce(runs: Vec<(Regime, usize)>) -> Vec<(Regime, usize)> {
    let mut out: Vec<(Regime, usize)> = Vec::with_capacity(runs.len());
    for (r, len) in runs {
        match out.last_mut() {
            Some((last, l)) if *last == r => *l += len,
            _ => out.push((r, len)),
        }
    }
    out
}

/// Absorbs the shortest run below [`DEBOUNCE_CELLS`] into its longer
/// neighbour until none is left.
fn debounce(mut runs: Vec<(Regime, usize)>) -> Vec<(Regime, usize)> {
    loop {
        if runs.len() < 2 {
            return runs;
        }
        let Some((k, _)) = runs
            .iter()
            .enumerate()
            .filter(|(_, (_, len))| *len < DEBOUNCE_CELLS)
            .min_by_key(|(k, (_, len))| (*len, *k))
        else {
            return runs;
        };
        let left = k.checked_sub(1).map(|j| runs[j]);
        let right = runs.get(k + 1).copied();
        let target = match (left, right) {
            (Some(l), Some(r)) => {
                if r.1 > l.1 {
                    r.0
                } else {
                    l.0
                }
            }
            (Some(l), None) => l.0,
            (None, Some(r)) => r.0,
            (None, None) => return runs,
        };
        runs[k].0 = target;
        runs = coalesce(runs);
    }
}

fn activity(regime_pair: (Regime, Regime), psi: f64, cap: f64) -> Option<f64> {
    match regime_pair {
        (Regime::Void, Regime::Band) | (Regime::Band, Regime::Void) => Some(psi),
        (Regime::Band, Regime::Saturated) | (Regime::Saturated, Regime::Band) => Some(cap - psi),
        _ => None,
    }
}

/// Edge between cells `a = b - 1` and `b`: the point where the linear
/// interpolant of the activity variable crosses the activity tolerance.
fn refine(grid: &Grid, psi: &[f64], cap: f64, tol: f64, a: usize, pair: (Regime, Regime)) -> f64 {
    let b = a + 1;
    let x = grid.midpoints();
    let boundary = grid.cell_bounds(a).1;
    let (Some(fa), Some(fb)) = (activity(pair, psi[a], cap), activity(pair, psi[b], cap)) else {
        return boundary;
    };
    if fa == fb {
        return boundary;
    }
    let t = ((tol - fa) / (fb - fa)).clamp(0.0, 1.0);
    x[a] + t * (x[b] - x[a])
}

/// Splits the grid into debounced void, band and saturated runs and
/// locates the edges between them.
pub fn extract_support(solution: &MeasureSolution, tol_act: f64) -> SupportDecomposition {
    extract_from(&solution.grid, &solution.psi, solution.cap_value(), tol_act)
}

/// As [`extract_support`], from a bare density.
pub fn extract_from(grid: &Grid, psi: &[f64], cap: f64, tol_act: f64) -> SupportDecomposition {
    let raw: Vec<Regime> = psi.iter().map(|&p| Regime::of(p, cap, tol_act)).collect();
    let mut runs = Vec::new();
    let mut edges = Vec::new();
    let mut regimes = Vec::with_capacity(psi.len());
    for (b, block) in grid.blocks().iter().enumerate() {
        let range = block.range();
        let encoded = debounce(encode(&raw[range.clone()]));
        let first_run = runs.len();
        let mut start = range.start;
        for &(regime, len) in &encoded {
            regimes.extend(std::iter::repeat_n(regime, len));
            runs.push(RegimeRun {
                regime,
                block: b,
                start,
                end: start + len,
                extent: block.interval,
            });
            start += len;
        }
        let last_run = runs.len() - 1;
        if runs[first_run].regime != Regime::Void {
            edges.push(Edge {
                location: block.interval.lo,
                kind: EdgeKind::DomainEndpoint,
                block: b,
                left_run: None,
                right_run: Some(first_run),
                flagged: false,
            });
        }
        for k in first_run..last_run {
            let (l, r) = (runs[k].regime, runs[k + 1].regime);
            let a = runs[k].end - 1;
            let kind = match (l, r) {
                (Regime::Void, Regime::Saturated) | (Regime::Saturated, Regime::Void) => {
                    EdgeKind::SaturatedVoid
                }
                (Regime::Saturated, _) | (_, Regime::Saturated) => EdgeKind::BandSaturated,
                _ => EdgeKind::VoidBand,
            };
            let location = refine(grid, psi, cap, tol_act, a, (l, r));
            runs[k].extent.hi = location;
            runs[k + 1].extent.lo = location;
            edges.push(Edge {
                location,
                kind,
                block: b,
                left_run: Some(k),
                right_run: Some(k + 1),
                flagged: kind == EdgeKind::SaturatedVoid,
            });
        }
        if runs[last_run].regime != Regime::Void {
            edges.push(Edge {
                location: block.interval.hi,
                kind: EdgeKind::DomainEndpoint,
                block: b,
                left_run: Some(last_run),
                right_run: None,
                flagged: false,
            });
        }
    }
    let collect = |regime: Regime| -> Vec<Interval> {
        runs.iter()
            .filter(|r| r.regime == regime)
            .map(|r| r.extent)
            .collect()
    };
    SupportDecomposition {
        bands: collect(Regime::Band),
        saturated: collect(Regime::Saturated),
        void: collect(Regime::Void),
        runs,
        edges,
        tol_act,
        regimes,
    }
}

/// Smallest distance between a void boundary and a saturation boundary;
/// zero when void touches saturation, `+∞` when one type is absent.
pub fn phase_gap(decomposition: &SupportDecomposition) -> f64 {
    if decomposition
        .edges
        .iter()
        .any(|e| e.kind == EdgeKind::SaturatedVoid)
    {
        return 0.0;
    }
    let of = |kind: EdgeKind| -> Vec<f64> {
        decomposition
            .edges
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| e.location)
            .collect()
    };
    let void = of(EdgeKind::VoidBand);
    let sat = of(EdgeKind::BandSaturated);
    let mut best = f64::INFINITY;
    for a in &void {
        for b in &sat {
            best = best.min((a - b).abs());
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Resolution;

    #[test]
    fn debounce_merges_chatter() {
        use Regime::*;
        let runs = vec![(Void, 10), (Band, 1), (Void, 2), (Band, 20), (Saturated, 2), (Band, 5)];
        let out = debounce(runs);
        assert_eq!(out, vec![(Void, 13), (Band, 27)]);
        assert_eq!(debounce(vec![(Band, 2)]), vec![(Band, 2)]);
    }

    #[test]
    fn two_bands_and_phase_gap() {
        let g = Grid::uniform(Interval::new(0.0, 1.0), 100).unwrap();
        let psi: Vec<f64> = g
            .midpoints()
            .iter()
            .map(|&x| {
                if (0.1..0.3).contains(&x) {
                    0.25
                } else if (0.3..0.5).contains(&x) {
                    0.5
                } else if (0.5..0.7).contains(&x) {
                    0.25
                } else {
                    0.0
                }
            })
            .collect();
        let d = extract_from(&g, &psi, 0.5, 1e-6);
        assert_eq!(d.bands.len(), 2);
        assert_eq!(d.saturated.len(), 1);
        assert_eq!(d.void.len(), 2);
        assert!(d.flagged_edges().next().is_none());
        assert!((phase_gap(&d) - 0.2).abs() < 0.02);

        let no_sat: Vec<f64> = psi.iter().map(|&p| p.min(0.25)).collect();
        assert_eq!(phase_gap(&extract_from(&g, &no_sat, 0.5, 1e-6)), f64::INFINITY);
    }

    #[test]
    fn void_against_saturation_is_flagged() {
        let g = Grid::uniform(Interval::new(0.0, 1.0), 20).unwrap();
        let psi: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let d = extract_from(&g, &psi, 1.0, 1e-6);
        assert_eq!(d.flagged_edges().count(), 1);
        assert_eq!(phase_gap(&d), 0.0);
        assert_eq!(d.edges[0].kind, EdgeKind::DomainEndpoint);
    }

    #[test]
    fn forced_saturation_on_two_intervals() {
        let g = Grid::new(
            &[Interval::new(-2.0, -1.0), Interval::new(1.0, 2.0)],
            Resolution::PerInterval(8),
        )
        .unwrap();
        let d = extract_from(&g, &[0.7; 16], 0.7, 1e-6);
        assert!(d.bands.is_empty());
        assert_eq!(d.saturated.len(), 2);
        assert!(d.edges.iter().all(|e| e.kind == EdgeKind::DomainEndpoint));
    }
}

//! Geometry and regularity verdicts for computed densities: bands and
//! edges, square-root edge fits, classification and mass scans.

mod classify;
mod fit;
mod scan;
mod support;

pub use classify::{classify, Classification, ClassifyPolicy, Finding};
pub use fit::{fit_edge, fit_power_law, EdgeFit, FitPolicy, Side, Verdict};
pub use scan::{
    density_discrepancy, genericity_scan, s_grid, scaling_consistency, solve_at, FlaggedWindow,
    ScanConfig, ScanMode, ScanReport, ScanRow, SCHEMA,
};
pub use support::{
    extract_from, extract_support, phase_gap, Edge, EdgeKind, RegimeRun, SupportDecomposition,
    DEBOUNCE_CELLS,
};

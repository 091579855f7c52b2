//! Multipliers and complementarity residuals of the three-regime system
//!
//! ```text
//! U + V - C = 0   where 0 < psi < θ
//! U + V - C ≥ 0   where psi = 0
//! U + V - C ≤ 0   where psi = θ
//! ```
//!
//! with one constant `C` per mass group.

use serde::{Deserialize, Serialize};

/// Regime of a cell relative to the activity tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Void,
    Band,
    Saturated,
}

impl Regime {
    pub fn of(psi: f64, cap: f64, tol_act: f64) -> Self {
        if psi <= tol_act {
            Regime::Void
        } else if cap.is_finite() && psi >= cap - tol_act {
            Regime::Saturated
        } else {
            Regime::Band
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Void => "void",
            Regime::Band => "band",
            Regime::Saturated => "saturated",
        }
    }
}

/// `max(1e-8, 1e-4 θ̂)` with `θ̂ = θ` when capped, else `max psi`.
pub fn activity_tolerance(psi: &[f64], cap: f64) -> f64 {
    let scale = if cap.is_finite() {
        cap
    } else {
        psi.iter().cloned().fold(0.0, f64::max)
    };
    (1e-4 * scale).max(1e-8)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// max |U + V - C| over band cells.
    pub r_support: f64,
    /// max (C - U - V)₊ over void cells.
    pub r_void: f64,
    /// max (U + V - C)₊ over saturated cells.
    pub r_sat: f64,
    pub tol_act: f64,
}

impl KktReport {
    pub fn max_residual(&self) -> f64 {
        self.r_support.max(self.r_void).max(self.r_sat)
    }
}

/// Minimum number of band cells needed to read off a multiplier.
pub const MIN_BAND_CELLS: usize = 3;

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median of `U + V` over the band cells among `cells` that are not masked
/// out, or `None` when fewer than [`MIN_BAND_CELLS`] band cells exist.
pub fn band_median(
    cells: &[usize],
    psi: &[f64],
    field: &[f64],
    cap: f64,
    tol_act: f64,
    mask: &dyn Fn(usize) -> bool,
) -> Option<f64> {
    let values: Vec<f64> = cells
        .iter()
        .copied()
        .filter(|&i| mask(i) && Regime::of(psi[i], cap, tol_act) == Regime::Band)
        .map(|i| field[i])
        .collect();
    (values.len() >= MIN_BAND_CELLS).then(|| median(values))
}

/// Multiplier for a group without band cells: any `C` between the largest
/// saturated and the smallest void value of `U + V` makes the residuals
/// vanish; take the midpoint, or the available bound.
pub fn bandless_multiplier(
    cells: &[usize],
    psi: &[f64],
    field: &[f64],
    cap: f64,
    tol_act: f64,
) -> f64 {
    let mut sat_max = f64::NEG_INFINITY;
    let mut void_min = f64::INFINITY;
    for &i in cells {
        match Regime::of(psi[i], cap, tol_act) {
            Regime::Saturated => sat_max = sat_max.max(field[i]),
            Regime::Void => void_min = void_min.min(field[i]),
            Regime::Band => {}
        }
    }
    match (sat_max.is_finite(), void_min.is_finite()) {
        (true, true) => 0.5 * (sat_max + void_min),
        (true, false) => sat_max,
        (false, true) => void_min,
        (false, false) => 0.0,
    }
}

/// Residuals of one group with multiplier `c`, over unmasked cells.
pub fn group_residuals(
    cells: &[usize],
    psi: &[f64],
    field: &[f64],
    c: f64,
    cap: f64,
    tol_act: f64,
    mask: &dyn Fn(usize) -> bool,
) -> KktReport {
    let mut r = KktReport {
        r_support: 0.0,
        r_void: 0.0,
        r_sat: 0.0,
        tol_act,
    };
    for &i in cells.iter().filter(|&&i| mask(i)) {
        let gap = field[i] - c;
        match Regime::of(psi[i], cap, tol_act) {
            Regime::Band => r.r_support = r.r_support.max(gap.abs()),
            Regime::Void => r.r_void = r.r_void.max(-gap),
            Regime::Saturated => r.r_sat = r.r_sat.max(gap),
        }
    }
    r
}

pub(crate) fn merge(a: KktReport, b: KktReport) -> KktReport {
    KktReport {
        r_support: a.r_support.max(b.r_support),
        r_void: a.r_void.max(b.r_void),
        r_sat: a.r_sat.max(b.r_sat),
        tol_act: a.tol_act,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regimes_and_tolerance() {
        assert_eq!(activity_tolerance(&[0.0, 2.0], f64::INFINITY), 2e-4);
        assert_eq!(activity_tolerance(&[0.0, 0.0], f64::INFINITY), 1e-8);
        assert_eq!(activity_tolerance(&[0.0, 2.0], 0.5), 5e-5);
        assert_eq!(Regime::of(0.0, 1.0, 1e-4), Regime::Void);
        assert_eq!(Regime::of(0.5, 1.0, 1e-4), Regime::Band);
        assert_eq!(Regime::of(0.99995, 1.0, 1e-4), Regime::Saturated);
        assert_eq!(Regime::of(1e9, f64::INFINITY, 1e-4), Regime::Band);
    }

    #[test]
    fn residual_signs() {
        let cells: Vec<usize> = (0..6).collect();
        let psi = [0.0, 0.3, 0.3, 0.3, 1.0, 0.0];
        let field = [2.5, 2.0, 2.001, 1.999, 1.5, 1.9];
        let all = |_: usize| true;
        let c = band_median(&cells, &psi, &field, 1.0, 1e-4, &all).unwrap();
        assert_eq!(c, 2.0);
        let r = group_residuals(&cells, &psi, &field, c, 1.0, 1e-4, &all);
        assert!((r.r_support - 0.001).abs() < 1e-12);
        assert!((r.r_void - 0.1).abs() < 1e-12);
        assert_eq!(r.r_sat, 0.0);
        let psi = [0.0, 0.3, 1.0, 1.0, 1.0, 0.0];
        assert!(band_median(&cells, &psi, &field, 1.0, 1e-4, &all).is_none());
        let c = bandless_multiplier(&cells, &[1.0; 6], &field, 1.0, 1e-4);
        assert_eq!(c, 2.5);
    }
}

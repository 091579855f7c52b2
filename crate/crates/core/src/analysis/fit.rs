use serde::{Deserialize, Serialize};

use crate::error::{EqmError, Result};
use crate::solver::{MeasureSolution, Regime};

use super::support::{EdgeKind, SupportDecomposition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Regular,
    Singular,
    Indeterminate,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Regular => "Regular",
            Verdict::Singular => "Singular",
            Verdict::Indeterminate => "Indeterminate",
        }
    }

    /// The less regular of two verdicts.
    pub fn worst(self, other: Verdict) -> Verdict {
        use Verdict::*;
        match (self, other) {
            (Singular, _) | (_, Singular) => Singular,
            (Indeterminate, _) | (_, Indeterminate) => Indeterminate,
            _ => Regular,
        }
    }
}

/// Which way the band lies from the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    /// Band to the right: a left end of the band.
    Left,
    Right,
}

/// Window and thresholds of the edge exponent fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitPolicy {
    /// Closest fitted cell, in cells from the edge.
    pub min_cells_from_edge: f64,
    /// Farthest fitted cell, in cells from the edge.
    pub max_cells_from_edge: f64,
    /// Farthest fitted cell as a fraction of the band length.
    pub band_fraction: f64,
    /// Farthest fitted cell as a fraction of the void or saturated run on
    /// the other side, when that run ends at another edge.
    pub gap_fraction: f64,
    pub min_window_cells: usize,
    pub min_band_cells: usize,
    /// Degree of the polynomial in the distance added to the log-log
    /// regression; it absorbs the smooth variation of the coefficient.
    pub correction_degree: usize,
    /// Windows with fewer cells use at most a linear correction.
    pub full_correction_cells: usize,
    /// Half-width, in cells, of the search for the edge location that
    /// minimises the fit residual. Zero keeps the interpolated location.
    pub location_search_cells: f64,
    pub regular_tolerance: f64,
    pub regular_r2: f64,
    pub singular_exponent: f64,
    pub singular_r2: f64,
}

impl Default for FitPolicy {
    fn default() -> Self {
        Self {
            min_cells_from_edge: 4.0,
            max_cells_from_edge: 64.0,
            band_fraction: 0.4,
            gap_fraction: 0.15,
            min_window_cells: 6,
            min_band_cells: 12,
            correction_degree: 2,
            full_correction_cells: 32,
            location_search_cells: 1.5,
            regular_tolerance: 0.08,
            regular_r2: 0.995,
            singular_exponent: 0.8,
            singular_r2: 0.99,
        }
    }
}

impl FitPolicy {
    pub fn verdict(&self, exponent: f64, r2: f64) -> Verdict {
        if (exponent - 0.5).abs() <= self.regular_tolerance && r2 >= self.regular_r2 {
            Verdict::Regular
        } else if exponent >= self.singular_exponent && r2 >= self.singular_r2 {
            Verdict::Singular
        } else {
            Verdict::Indeterminate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeFit {
    pub location: f64,
    pub side: Side,
    pub kind: EdgeKind,
    pub exponent: f64,
    /// Leading coefficient `Q` in `φ ≈ Q d^e`.
    pub coefficient: f64,
    /// Fitted distances, in cells.
    pub window: [f64; 2],
    pub cells: usize,
    pub correction_degree: usize,
    pub r_squared: f64,
    pub verdict: Verdict,
}

/// Power law fit `log φ = log Q + e log d + Σ_{k ≤ degree} b_k d^k`.
/// Returns `(e, Q, R²)`.
pub fn fit_power_law(dist: &[f64], phi: &[f64], degree: usize) -> Result<(f64, f64, f64)> {
    regress(dist, phi, degree).map(|f| (f.exponent, f.coefficient, f.r_squared))
}

struct Regression {
    exponent: f64,
    coefficient: f64,
    r_squared: f64,
    ss_res: f64,
}

fn regress(dist: &[f64], phi: &[f64], degree: usize) -> Result<Regression> {
    let k = 2 + degree;
    let rows: Vec<(Vec<f64>, f64)> = dist
        .iter()
        .zip(phi)
        .filter(|(d, p)| **d > 0.0 && **p > 0.0)
        .map(|(&d, &p)| {
            let mut r = vec![1.0, d.ln()];
            for j in 1..=degree {
                r.push(d.powi(j as i32));
            }
            (r, p.ln())
        })
        .collect();
    if rows.len() < k + 2 {
        return Err(EqmError::Window(format!("{} usable points for a {k}-term fit", rows.len())));
    }
    // Columns are scaled to unit maximum for conditioning.
    let mut scale = vec![0.0f64; k];
    for (r, _) in &rows {
        for j in 0..k {
            scale[j] = scale[j].max(r[j].abs());
        }
    }
    let scale: Vec<f64> = scale.iter().map(|&s| if s > 0.0 { s } else { 1.0 }).collect();
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, y) in &rows {
        for i in 0..k {
            let ri = r[i] / scale[i];
            for j in 0..k {
                a[i][j] += ri * r[j] / scale[j];
            }
            a[i][k] += ri * y;
        }
    }
    let coef = solve_dense(a).ok_or_else(|| EqmError::Window("singular fit".into()))?;
    let coef: Vec<f64> = coef.iter().zip(&scale).map(|(c, s)| c / s).collect();
    let mean = rows.iter().map(|(_, y)| y).sum::<f64>() / rows.len() as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (r, y) in &rows {
        let pred: f64 = r.iter().zip(&coef).map(|(a, b)| a * b).sum();
        ss_res += (y - pred).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(Regression {
        exponent: coef[1],
        coefficient: coef[0].exp(),
        r_squared: r2,
        ss_res,
    })
}

/// Golden-section minimisation on `[a, b]`.
fn golden_min(mut a: f64, mut b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-300 {
            return None;
        }
        a.swap(c, p);
        for r in c + 1..n {
            let (top, bottom) = a.split_at_mut(r);
            let (pivot, row) = (&top[c], &mut bottom[0]);
            let f = row[c] / pivot[c];
            for (x, y) in row[c..].iter_mut().zip(&pivot[c..]) {
                *x -= f * y;
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (a[r][n] - s) / a[r][r];
    }
    Some(x)
}

/// Fits the profile on the band side of edge number `edge`.
pub fn fit_edge(
    solution: &MeasureSolution,
    decomposition: &SupportDecomposition,
    edge: usize,
    policy: &FitPolicy,
) -> Result<EdgeFit> {
    let e = decomposition
        .edges
        .get(edge)
        .ok_or_else(|| EqmError::Window(format!("no edge {edge}")))?;
    if !matches!(e.kind, EdgeKind::VoidBand | EdgeKind::BandSaturated) {
        return Err(EqmError::Window(format!("edge at {} has no band side", e.location)));
    }
    let (Some(l), Some(r)) = (e.left_run, e.right_run) else {
        return Err(EqmError::Window("edge without two sides".into()));
    };
    let runs = &decomposition.runs;
    let (band, other, side) = if runs[r].regime == Regime::Band {
        (&runs[r], &runs[l], Side::Left)
    } else {
        (&runs[l], &runs[r], Side::Right)
    };
    if band.cells() < policy.min_band_cells {
        return Err(EqmError::Window(format!(
            "band next to {} has {} cells, need {}",
            e.location,
            band.cells(),
            policy.min_band_cells
        )));
    }
    let grid = &solution.grid;
    let h = grid.blocks()[band.block].width;
    let mut reach = (policy.max_cells_from_edge * h).min(policy.band_fraction * band.extent.len());
    let other_bounded = match side {
        Side::Left => other.start > grid.blocks()[other.block].start,
        Side::Right => other.end < grid.blocks()[other.block].range().end,
    };
    if other_bounded {
        reach = reach.min(policy.gap_fraction * other.extent.len());
    }
    let near = policy.min_cells_from_edge * h;
    let cap = solution.cap_value();
    // Signed offset of a midpoint into the band.
    let inward = |x: f64, p: f64| match side {
        Side::Left => x - p,
        Side::Right => p - x,
    };
    let (mut xs, mut phi) = (Vec::new(), Vec::new());
    for i in band.start..band.end {
        let x = grid.midpoints()[i];
        let d = inward(x, e.location);
        if d >= near && d <= reach {
            xs.push(x);
            phi.push(match e.kind {
                EdgeKind::BandSaturated => cap - solution.psi[i],
                _ => solution.psi[i],
            });
        }
    }
    if xs.len() < policy.min_window_cells {
        return Err(EqmError::Window(format!(
            "fit window at {} holds {} cells, need {}",
            e.location,
            xs.len(),
            policy.min_window_cells
        )));
    }
    let degree = if xs.len() >= policy.full_correction_cells {
        policy.correction_degree
    } else {
        policy.correction_degree.min(1)
    };
    let fit_at = |p: f64| -> Result<Regression> {
        let dist: Vec<f64> = xs.iter().map(|&x| inward(x, p)).collect();
        regress(&dist, &phi, degree)
    };
    let location = if policy.location_search_cells > 0.0 {
        // The search keeps every fitted cell at least one cell inside.
        let reach_in = policy.location_search_cells.min(policy.min_cells_from_edge - 1.0) * h;
        let reach_out = policy.location_search_cells * h;
        let (a, b) = match side {
            Side::Left => (e.location - reach_out, e.location + reach_in),
            Side::Right => (e.location - reach_in, e.location + reach_out),
        };
        golden_min(a, b, |p| fit_at(p).map_or(f64::INFINITY, |f| f.ss_res))
    } else {
        e.location
    };
    let fit = fit_at(location)?;
    let (exponent, coefficient, r_squared) = (fit.exponent, fit.coefficient, fit.r_squared);
    Ok(EdgeFit {
        location,
        side,
        kind: e.kind,
        exponent,
        coefficient,
        window: [near / h, reach / h],
        cells: xs.len(),
        correction_degree: degree,
        r_squared,
        verdict: policy.verdict(exponent, r_squared),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn recovers_pure_power_laws() {
        let d: Vec<f64> = (4..64).map(|k| k as f64 * 1e-3).collect();
        for e in [0.5, 1.5, 2.0] {
            let phi: Vec<f64> = d.iter().map(|x| 0.9 * x.powf(e)).collect();
            for degree in 0..3 {
                let (fe, q, r2) = fit_power_law(&d, &phi, degree).unwrap();
                assert!((fe - e).abs() < 1e-9 && (q - 0.9).abs() < 1e-8 && r2 > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn noisy_power_laws() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        // Relative noise of 1e-4 on a [4h, 64h] window with h = 1e-3.
        let d: Vec<f64> = (4..=64).map(|k| k as f64 * 1e-3).collect();
        for e in [0.5, 1.5, 2.0] {
            let phi: Vec<f64> = d
                .iter()
                .map(|x| x.powf(e) * (1.0 + 1e-4 * rng.gen_range(-1.0..1.0)))
                .collect();
            let (fe, _, _) = fit_power_law(&d, &phi, 2).unwrap();
            assert!((fe - e).abs() < 0.03, "{e}: {fe}");
        }
    }

    #[test]
    fn verdicts() {
        let p = FitPolicy::default();
        assert_eq!(p.verdict(0.52, 0.999), Verdict::Regular);
        assert_eq!(p.verdict(0.52, 0.99), Verdict::Indeterminate);
        assert_eq!(p.verdict(1.5, 0.995), Verdict::Singular);
        assert_eq!(p.verdict(0.7, 0.999), Verdict::Indeterminate);
        assert_eq!(Verdict::Regular.worst(Verdict::Indeterminate), Verdict::Indeterminate);
        assert_eq!(Verdict::Singular.worst(Verdict::Indeterminate), Verdict::Singular);
    }
}

//! Projection onto `{0 ≤ psi ≤ θ, Σ_{group} h_i psi_i = target}` in the
//! h-weighted inner product.
//!
//! For each group the projection is `psi_i = clamp(raw_i - λ, 0, θ)` with a
//! single shift `λ`, found by bisection on the (monotone) group mass and
//! finished with an exact solve on the final activity pattern.

use crate::error::{EqmError, Result};
use crate::grid::Grid;

use super::constraints::{ConstraintSet, MassGroup};

const BISECTION_STEPS: usize = 200;

/// Projects one group in place. `cells` lists the group's cell indices.
pub(crate) fn project_group(
    raw: &[f64],
    widths: &[f64],
    cells: &[usize],
    target: f64,
    cap: f64,
    out: &mut [f64],
) -> Result<()> {
    let length: f64 = cells.iter().map(|&i| widths[i]).sum();
    let capacity = cap * length;
    if target > capacity * (1.0 + 1e-12) {
        return Err(EqmError::Constraint(format!(
            "group mass {target} exceeds capacity {capacity}"
        )));
    }
    if target >= capacity {
        for &i in cells {
            out[i] = cap;
        }
        return Ok(());
    }
    let mass_at = |lambda: f64| -> f64 {
        cells
            .iter()
            .map(|&i| widths[i] * (raw[i] - lambda).clamp(0.0, cap))
            .sum()
    };
    let (mut rmin, mut rmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for &i in cells {
        if !raw[i].is_finite() {
            return Err(EqmError::Constraint(format!("non-finite input at cell {i}")));
        }
        rmin = rmin.min(raw[i]);
        rmax = rmax.max(raw[i]);
    }
    // mass(lo) ≥ target ≥ mass(hi) = 0.
    let floor = if cap.is_finite() { cap } else { target / length };
    let mut lo = rmin - floor - 1.0;
    let mut hi = rmax;
    let tol = 1e-13 * target;
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let m = mass_at(mid);
        if (m - target).abs() <= tol {
            lo = mid;
            hi = mid;
            break;
        }
        if m > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut lambda = 0.5 * (lo + hi);
    // Exact shift for the activity pattern at λ.
    let (mut free_len, mut free_sum, mut fixed_mass) = (0.0, 0.0, 0.0);
    for &i in cells {
        let v = raw[i] - lambda;
        if v <= 0.0 {
        } else if v >= cap {
            fixed_mass += widths[i] * cap;
        } else {
            free_len += widths[i];
            free_sum += widths[i] * raw[i];
        }
    }
    if free_len > 0.0 {
        let exact = (free_sum + fixed_mass - target) / free_len;
        // Only accept it if the pattern does not change.
        let consistent = cells.iter().all(|&i| {
            let before = raw[i] - lambda;
            let after = raw[i] - exact;
            let class = |v: f64| {
                if v <= 0.0 {
                    0
                } else if v >= cap {
                    2
                } else {
                    1
                }
            };
            class(before) == class(after)
        });
        if consistent {
            lambda = exact;
        }
    }
    for &i in cells {
        out[i] = (raw[i] - lambda).clamp(0.0, cap);
    }
    Ok(())
}

/// Cell indices of every group.
pub(crate) fn group_cells(grid: &Grid, groups: &[MassGroup]) -> Vec<Vec<usize>> {
    groups
        .iter()
        .map(|g| {
            g.blocks
                .iter()
                .flat_map(|&b| grid.blocks()[b].range())
                .collect()
        })
        .collect()
}

/// Euclidean projection in the h-weighted inner product onto the feasible
/// set of `constraints`.
pub fn project(raw: &[f64], constraints: &ConstraintSet) -> Result<Vec<f64>> {
    let grid = &constraints.domain;
    if raw.len() != grid.len() {
        return Err(EqmError::Constraint(format!(
            "vector has {} entries, grid has {} cells",
            raw.len(),
            grid.len()
        )));
    }
    let groups = constraints.validate()?;
    let cells = group_cells(grid, &groups);
    let mut out = vec![0.0; raw.len()];
    for (g, c) in groups.iter().zip(&cells) {
        project_group(raw, grid.widths(), c, g.target, constraints.cap_value(), &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;

    fn four_cells() -> Grid {
        // h = 0.5
        Grid::uniform(Interval::new(0.0, 2.0), 4).unwrap()
    }

    /// Minimises Σ h (psi - raw)² over {0 ≤ psi ≤ θ, Σ h psi = s} by
    /// enumerating every lower/free/upper pattern. On a pattern the free
    /// cells share one shift, fixed by the mass equation.
    fn brute_force(raw: &[f64], h: f64, cap: f64, s: f64) -> Vec<f64> {
        let n = raw.len();
        let mut best: Option<(f64, Vec<f64>)> = None;
        for code in 0..3usize.pow(n as u32) {
            let pattern: Vec<usize> = (0..n).map(|i| (code / 3usize.pow(i as u32)) % 3).collect();
            let fixed: f64 = pattern.iter().filter(|&&p| p == 2).count() as f64 * h * cap;
            let free: Vec<usize> = (0..n).filter(|&i| pattern[i] == 1).collect();
            let candidate: Vec<f64> = if free.is_empty() {
                if ((fixed - s) / s).abs() > 1e-12 {
                    continue;
                }
                pattern.iter().map(|&p| if p == 2 { cap } else { 0.0 }).collect()
            } else {
                let sum: f64 = free.iter().map(|&i| raw[i]).sum();
                let lambda = (h * sum + fixed - s) / (h * free.len() as f64);
                (0..n)
                    .map(|i| match pattern[i] {
                        0 => 0.0,
                        2 => cap,
                        _ => raw[i] - lambda,
                    })
                    .collect()
            };
            if candidate.iter().any(|&p| p < -1e-15 || p > cap + 1e-15) {
                continue;
            }
            let dist: f64 = candidate.iter().zip(raw).map(|(p, r)| h * (p - r).powi(2)).sum();
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, candidate));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn matches_exhaustive_active_sets() {
        let c = ConstraintSet::capped(four_cells(), 1.0, 0.6);
        let raw = [1.0, 0.0, 0.0, 0.0];
        let p = project(&raw, &c).unwrap();
        let oracle = brute_force(&raw, 0.5, 0.6, 1.0);
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12, "{p:?} vs {oracle:?}");
        }
        // Frozen from the oracle: psi = (0.6, 0.4667, 0.4667, 0.4667).
        assert!((p[0] - 0.6).abs() < 1e-12);
        assert!((p[1] - 1.4 / 3.0).abs() < 1e-12);

        for raw in [[0.3, -2.0, 4.0, 0.1], [2.0, 2.0, -1.0, 0.9], [0.0, 0.0, 0.0, 5.0]] {
            for (cap, s) in [(0.6, 1.0), (1.0, 0.4), (10.0, 1.9)] {
                let c = ConstraintSet::capped(four_cells(), s, cap);
                let p = project(&raw, &c).unwrap();
                let oracle = brute_force(&raw, 0.5, cap, s);
                for (a, b) in p.iter().zip(&oracle) {
                    assert!((a - b).abs() < 1e-11, "{raw:?} {cap} {s}: {p:?} vs {oracle:?}");
                }
            }
        }
    }

    #[test]
    fn zero_input_spreads_uniformly() {
        let g = Grid::uniform(Interval::new(-1.0, 2.0), 30).unwrap();
        let c = ConstraintSet::unconstrained(g, 1.7);
        let p = project(&vec![0.0; 30], &c).unwrap();
        assert!(p.iter().all(|&v| (v - 1.7 / 3.0).abs() < 1e-13));
    }

    #[test]
    fn forced_fill_and_infeasible() {
        let g = Grid::uniform(Interval::new(-1.0, 1.0), 10).unwrap();
        let c = ConstraintSet::capped(g.clone(), 1.0, 0.5);
        let p = project(&[3.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.2], &c).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
        let c = ConstraintSet::capped(g, 1.1, 0.5);
        assert!(matches!(project(&[0.0; 10], &c), Err(EqmError::Constraint(_))));
    }

    #[test]
    fn per_interval_groups_are_independent() {
        let g = Grid::new(
            &[Interval::new(-2.0, -0.5), Interval::new(0.5, 2.0)],
            crate::grid::Resolution::PerInterval(6),
        )
        .unwrap();
        let c = ConstraintSet::capped(g.clone(), 1.0, 1.0).with_interval_masses(vec![0.3, 0.7]);
        let raw: Vec<f64> = (0..12).map(|i| ((i * 7) % 5) as f64 * 0.3 - 0.2).collect();
        let p = project(&raw, &c).unwrap();
        let m = g.block_masses(&p);
        assert!((m[0] - 0.3).abs() < 1e-12 && (m[1] - 0.7).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn projection_is_feasible_and_idempotent(
                raw in proptest::collection::vec(-3.0f64..3.0, 24),
                cap in 0.3f64..4.0,
                frac in 0.05f64..0.95,
            ) {
                let g = Grid::uniform(Interval::new(-1.5, 1.5), 24).unwrap();
                let s = frac * cap * 3.0;
                let c = ConstraintSet::capped(g.clone(), s, cap);
                let p = project(&raw, &c).unwrap();
                prop_assert!(p.iter().all(|&v| v >= 0.0 && v <= cap));
                prop_assert!((g.mass(&p) - s).abs() <= 1e-12 * s.max(1.0));
                let q = project(&p, &c).unwrap();
                for (a, b) in p.iter().zip(&q) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}

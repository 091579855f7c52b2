use serde::Serialize;

use crate::error::{EqmError, Result};
use crate::grid::Grid;

/// Feasible set: total mass, optional density cap, and optionally one
/// prescribed mass per interval of the grid.
#[derive(Debug, Clone)]
pub struct ConstraintSet {
    pub total_mass: f64,
    /// `None` means no cap.
    pub cap: Option<f64>,
    pub domain: Grid,
    pub interval_masses: Option<Vec<f64>>,
}

/// Cells sharing one mass equality, with its target.
#[derive(Debug, Clone, Serialize)]
pub struct MassGroup {
    pub blocks: Vec<usize>,
    pub target: f64,
}

impl ConstraintSet {
    pub fn unconstrained(domain: Grid, total_mass: f64) -> Self {
        Self {
            total_mass,
            cap: None,
            domain,
            interval_masses: None,
        }
    }

    pub fn capped(domain: Grid, total_mass: f64, cap: f64) -> Self {
        Self {
            total_mass,
            cap: Some(cap),
            domain,
            interval_masses: None,
        }
    }

    pub fn with_interval_masses(mut self, masses: Vec<f64>) -> Self {
        self.total_mass = masses.iter().sum();
        self.interval_masses = Some(masses);
        self
    }

    pub fn cap_value(&self) -> f64 {
        self.cap.unwrap_or(f64::INFINITY)
    }

    /// Checks the constraints and returns the mass groups. Without interval
    /// masses there is one group spanning every block.
    pub fn validate(&self) -> Result<Vec<MassGroup>> {
        let s = self.total_mass;
        if !(s > 0.0) || !s.is_finite() {
            return Err(EqmError::Constraint(format!("total mass must be positive, got {s}")));
        }
        if let Some(theta) = self.cap {
            if !(theta > 0.0) {
                return Err(EqmError::Constraint(format!("cap must be positive, got {theta}")));
            }
        }
        let theta = self.cap_value();
        let blocks = self.domain.blocks();
        match &self.interval_masses {
            None => {
                let capacity = theta * self.domain.total_length();
                if s > capacity * (1.0 + 1e-12) {
                    return Err(EqmError::Constraint(format!(
                        "mass {s} exceeds cap times domain length {capacity}"
                    )));
                }
                Ok(vec![MassGroup {
                    blocks: (0..blocks.len()).collect(),
                    target: s,
                }])
            }
            Some(masses) => {
                if masses.len() != blocks.len() {
                    return Err(EqmError::Constraint(format!(
                        "{} interval masses for {} intervals",
                        masses.len(),
                        blocks.len()
                    )));
                }
                let mut groups = Vec::with_capacity(masses.len());
                for (k, (&m, b)) in masses.iter().zip(blocks).enumerate() {
                    let capacity = theta * b.interval.len();
                    if !(m > 0.0) || m > capacity * (1.0 + 1e-12) {
                        return Err(EqmError::Constraint(format!(
                            "interval {k} mass {m} outside (0, {capacity}]"
                        )));
                    }
                    groups.push(MassGroup {
                        blocks: vec![k],
                        target: m,
                    });
                }
                Ok(groups)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Interval, Resolution};

    fn two_blocks() -> Grid {
        Grid::new(
            &[Interval::new(-2.0, -0.5), Interval::new(0.5, 2.0)],
            Resolution::PerInterval(10),
        )
        .unwrap()
    }

    #[test]
    fn groups() {
        let c = ConstraintSet::capped(two_blocks(), 1.0, 1.0);
        let g = c.validate().unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].blocks, vec![0, 1]);
        let c = c.with_interval_masses(vec![0.3, 0.7]);
        let g = c.validate().unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g[1].target, 0.7);
        assert!((c.total_mass - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible() {
        let c = ConstraintSet::capped(two_blocks(), 1.0, 0.2);
        assert!(matches!(c.validate(), Err(EqmError::Constraint(_))));
        let c = ConstraintSet::capped(two_blocks(), 1.0, 0.5).with_interval_masses(vec![0.8, 0.2]);
        assert!(matches!(c.validate(), Err(EqmError::Constraint(_))));
        let c = ConstraintSet::capped(two_blocks(), 1.0, 1.0).with_interval_masses(vec![1.0]);
        assert!(c.validate().is_err());
        let c = ConstraintSet::unconstrained(two_blocks(), -1.0);
        assert!(c.validate().is_err());
    }
}

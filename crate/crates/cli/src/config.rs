//! Run configuration: JSON file plus command-line overrides, validated
//! before any computation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use eqm_core::analysis::{ClassifyPolicy, ScanConfig, ScanMode};
use eqm_core::grid::Resolution;
use eqm_core::{ConstraintSet, Grid, Interval, PotentialConfig, PotentialSpec, SolverConfig};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Solve,
    Scan,
    Classify,
    Field,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Scan => "scan",
            Command::Classify => "classify",
            Command::Field => "field",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl std::str::FromStr for Format {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(CliError::Config(format!("unknown format '{other}' (csv, json, svg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub potential: PotentialConfig,
    /// Total mass `s`.
    pub mass: f64,
    /// Density cap; needs a domain.
    pub theta: Option<f64>,
    /// Disjoint intervals `[a, b]` in increasing order.
    pub domain: Option<Vec<[f64; 2]>>,
    pub interval_masses: Option<Vec<f64>>,
    /// Total number of cells.
    pub n: usize,
    pub gamma: f64,
    pub s_from: Option<f64>,
    pub s_to: Option<f64>,
    pub s_step: Option<f64>,
    pub solver: SolverConfig,
    pub policy: ClassifyPolicy,
    pub out: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            potential: PotentialConfig::Expr { expr: "x^2".into() },
            mass: 1.0,
            theta: None,
            domain: None,
            interval_masses: None,
            n: 1000,
            gamma: 0.0,
            s_from: None,
            s_to: None,
            s_step: None,
            solver: SolverConfig::default(),
            policy: ClassifyPolicy::default(),
            out: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
        }
    }
}

/// Parses `"[a,b];[c,d]"`.
pub fn parse_domain(text: &str) -> Result<Vec<[f64; 2]>, CliError> {
    let bad = |why: &str| CliError::Config(format!("bad domain '{text}': {why}"));
    text.split(';')
        .map(|part| {
            let inner = part
                .trim()
                .strip_prefix('[')
                .and_then(|p| p.strip_suffix(']'))
                .ok_or_else(|| bad("expected [a,b]"))?;
            let nums: Vec<&str> = inner.split(',').collect();
            if nums.len() != 2 {
                return Err(bad("expected two endpoints"));
            }
            let a = nums[0].trim().parse::<f64>().map_err(|_| bad("endpoint is not a number"))?;
            let b = nums[1].trim().parse::<f64>().map_err(|_| bad("endpoint is not a number"))?;
            Ok([a, b])
        })
        .collect()
}

/// Parses `"0.3,0.7"`.
pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("bad number '{}' in '{text}'", t.trim())))
        })
        .collect()
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Everything a command needs, checked.
pub struct Prepared {
    pub potential: PotentialSpec,
    pub constraints: Option<ConstraintSet>,
}

impl RunConfig {
    pub fn intervals(&self) -> Option<Vec<Interval>> {
        self.domain
            .as_ref()
            .map(|d| d.iter().map(|[a, b]| Interval::new(*a, *b)).collect())
    }

    fn finite_positive(name: &str, x: f64) -> Result<(), CliError> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(CliError::Config(format!("{name} must be positive and finite, got {x}")))
        }
    }

    /// Validation shared by all commands. Builds the potential and, when a
    /// domain is given, the grid and constraints at mass `self.mass`.
    pub fn prepare(&self) -> Result<Prepared, CliError> {
        self.solver.validate()?;
        Self::finite_positive("mass", self.mass)?;
        if let Some(t) = self.theta {
            Self::finite_positive("theta", t)?;
        }
        if self.n < 2 {
            return Err(CliError::Config(format!("n must be at least 2, got {}", self.n)));
        }
        if self.formats.is_empty() {
            return Err(CliError::Config("no output format selected".into()));
        }
        if !self.gamma.is_finite() {
            return Err(CliError::Config(format!("gamma must be finite, got {}", self.gamma)));
        }
        let potential = self.potential.build()?;
        let constraints = match self.intervals() {
            None => {
                if self.theta.is_some() {
                    return Err(CliError::Config("--theta needs --domain".into()));
                }
                if self.interval_masses.is_some() {
                    return Err(CliError::Config("--interval-masses needs --domain".into()));
                }
                None
            }
            Some(intervals) => {
                let grid = Grid::new(&intervals, Resolution::Total(self.n))?;
                let mut c = match self.theta {
                    Some(t) => ConstraintSet::capped(grid, self.mass, t),
                    None => ConstraintSet::unconstrained(grid, self.mass),
                };
                if let Some(m) = &self.interval_masses {
                    c = c.with_interval_masses(m.clone());
                }
                c.validate()?;
                Some(c)
            }
        };
        Ok(Prepared {
            potential,
            constraints,
        })
    }

    /// Mass values and scan settings.
    pub fn scan_plan(&self) -> Result<(Vec<f64>, ScanConfig), CliError> {
        let (from, to, step) = match (self.s_from, self.s_to, self.s_step) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(CliError::Config("scan needs --s-from, --s-to and --s-step".into())),
        };
        if !(from > 0.0 && from < to && to.is_finite()) {
            return Err(CliError::Config(format!("need 0 < s_from < s_to, got {from} and {to}")));
        }
        if self.interval_masses.is_some() {
            return Err(CliError::Config("scan does not take interval masses".into()));
        }
        let s_values = eqm_core::analysis::s_grid(from, to, step)?;
        let mode = match (self.intervals(), self.theta) {
            (None, None) => ScanMode::Unconstrained { cells: self.n },
            (Some(intervals), Some(cap)) => {
                if self.gamma != 0.0 {
                    return Err(CliError::Config("a capped scan needs gamma = 0".into()));
                }
                let length: f64 = intervals.iter().map(|i| i.len()).sum();
                let last = *s_values.last().expect("s grid is never empty");
                if last >= cap * length || !cap.is_finite() {
                    return Err(CliError::Config(format!(
                        "s_to must stay below theta |K| = {}",
                        cap * length
                    )));
                }
                ScanMode::Capped {
                    cells_per_interval: (self.n / intervals.len()).max(2),
                    intervals,
                    cap,
                }
            }
            (Some(_), None) => {
                return Err(CliError::Config("a scan on a domain needs --theta".into()))
            }
            (None, Some(_)) => return Err(CliError::Config("--theta needs --domain".into())),
        };
        Ok((
            s_values,
            ScanConfig {
                mode,
                gamma: self.gamma,
                solver: self.solver.clone(),
                policy: self.policy.clone(),
            },
        ))
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_strings() {
        assert_eq!(parse_domain("[-2,-0.5];[0.5, 2]").unwrap(), vec![[-2.0, -0.5], [0.5, 2.0]]);
        assert!(parse_domain("[-1,1").is_err());
        assert!(parse_domain("[1]").is_err());
        assert_eq!(parse_list("0.3, 0.7").unwrap(), vec![0.3, 0.7]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"mass": 1, "colour": 2}"#).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let ok: RunConfig = serde_json::from_str(
            r#"{"potential": {"builtin": "quartic_double_well"}, "n": 300, "solver": {"tol_kkt": 1e-7}}"#,
        )
        .unwrap();
        assert_eq!(ok.n, 300);
        assert_eq!(ok.solver.tol_kkt, 1e-7);
    }

    #[test]
    fn validation_happens_before_compute() {
        let base = RunConfig::default();
        let theta_only = RunConfig { theta: Some(0.5), ..base.clone() };
        assert!(matches!(theta_only.prepare(), Err(CliError::Config(_))));
        let overfull = RunConfig {
            theta: Some(0.5),
            mass: 2.0,
            domain: Some(vec![[-1.0, 1.0]]),
            ..base.clone()
        };
        assert!(matches!(overfull.prepare(), Err(CliError::Config(_))));
        let backwards = RunConfig {
            s_from: Some(1.0),
            s_to: Some(0.5),
            s_step: Some(0.1),
            ..base
        };
        assert!(matches!(backwards.scan_plan(), Err(CliError::Config(_))));
    }
}

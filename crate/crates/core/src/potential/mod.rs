//! Confining potentials: parsed expressions, built-ins, rescaled families and
//! per-interval shifts, together with growth checks and window selection.

mod expr;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use expr::{Expr, Func};

use crate::error::{EqmError, Result};
use crate::grid::Interval;

/// Serializable description of a potential, as accepted in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum PotentialConfig {
    Expr {
        expr: String,
    },
    Builtin {
        builtin: String,
        #[serde(default)]
        params: std::collections::BTreeMap<String, f64>,
    },
}

impl PotentialConfig {
    pub fn build(&self) -> Result<PotentialSpec> {
        match self {
            PotentialConfig::Expr { expr } => PotentialSpec::parse(expr),
            PotentialConfig::Builtin { builtin, params } => {
                let get = |k: &str, default: f64| params.get(k).copied().unwrap_or(default);
                let known: &[&str] = match builtin.as_str() {
                    "quadratic" => &[],
                    "quartic_double_well" => &["a", "b"],
                    other => {
                        return Err(EqmError::Config(format!("unknown builtin potential '{other}'")))
                    }
                };
                if let Some(k) = params.keys().find(|k| !known.contains(&k.as_str())) {
                    return Err(EqmError::Config(format!(
                        "unknown parameter '{k}' for builtin '{builtin}'"
                    )));
                }
                Ok(match builtin.as_str() {
                    "quadratic" => PotentialSpec::quadratic(),
                    _ => PotentialSpec::quartic_double_well(get("a", 1.0), get("b", 1.0)),
                })
            }
        }
    }
}

#[derive(Debug)]
enum Source {
    Expr { value: Expr, slope: Expr },
    /// `x ↦ base(s^γ x) / s`.
    Rescaled { base: PotentialSpec, s: f64, gamma: f64 },
    /// `base + offset` on each listed interval.
    Shifted { base: PotentialSpec, offsets: Vec<(Interval, f64)> },
}

/// A confining potential `V` with its derivative.
#[derive(Debug, Clone)]
pub struct PotentialSpec {
    source: Arc<Source>,
    label: String,
}

impl PotentialSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let value = Expr::parse(text)?;
        Ok(Self::from_expr(value, text.trim().to_string()))
    }

    pub fn from_expr(value: Expr, label: String) -> Self {
        let slope = value.derivative();
        Self {
            source: Arc::new(Source::Expr { value, slope }),
            label,
        }
    }

    /// `V(x) = x²`.
    pub fn quadratic() -> Self {
        let e = Expr::Pow(Box::new(Expr::X), 2.0);
        Self::from_expr(e, "x^2".into())
    }

    /// `V(x) = a x⁴ - b x²`.
    pub fn quartic_double_well(a: f64, b: f64) -> Self {
        let quartic = Expr::Mul(
            Box::new(Expr::Const(a)),
            Box::new(Expr::Pow(Box::new(Expr::X), 4.0)),
        );
        let quadratic = Expr::Mul(
            Box::new(Expr::Const(b)),
            Box::new(Expr::Pow(Box::new(Expr::X), 2.0)),
        );
        let e = Expr::Sub(Box::new(quartic), Box::new(quadratic));
        Self::from_expr(e, format!("{a:?}*x^4 - {b:?}*x^2"))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &*self.source {
            Source::Expr { value, .. } => value.eval(x),
            Source::Rescaled { base, s, gamma } => base.eval(s.powf(*gamma) * x) / s,
            Source::Shifted { base, offsets } => {
                base.eval(x)
                    + offsets
                        .iter()
                        .filter(|(iv, _)| iv.contains(x))
                        .map(|(_, c)| c)
                        .sum::<f64>()
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match &*self.source {
            Source::Expr { slope, .. } => slope.eval(x),
            Source::Rescaled { base, s, gamma } => {
                let a = s.powf(*gamma);
                a / s * base.deriv(a * x)
            }
            Source::Shifted { base, .. } => base.deriv(x),
        }
    }

    /// Values at a list of points.
    pub fn sample(&self, points: &[f64]) -> Result<Vec<f64>> {
        points
            .iter()
            .map(|&x| {
                let v = self.eval(x);
                if v.is_nan() {
                    Err(EqmError::Eval(format!("V({x}) is NaN for {}", self.label)))
                } else {
                    Ok(v)
                }
            })
            .collect()
    }

    /// `W(x) = V(s^γ x) / s`, so `W'(x) = s^(γ-1) V'(s^γ x)`.
    pub fn rescale(&self, s: f64, gamma: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(EqmError::Config(format!("rescaling mass must be positive, got {s}")));
        }
        if !gamma.is_finite() {
            return Err(EqmError::Config(format!("rescaling exponent must be finite, got {gamma}")));
        }
        // Compose with an existing rescaling of the same exponent.
        if let Source::Rescaled { base, s: s0, gamma: g0 } = &*self.source {
            if *g0 == gamma {
                return base.rescale(s0 * s, gamma);
            }
        }
        Ok(Self {
            label: format!("rescale({}, s={s:?}, gamma={gamma:?})", self.label),
            source: Arc::new(Source::Rescaled {
                base: self.clone(),
                s,
                gamma,
            }),
        })
    }

    /// Adds a constant on each given interval.
    pub fn shifted_on(&self, offsets: Vec<(Interval, f64)>) -> Self {
        let desc: Vec<String> = offsets
            .iter()
            .map(|(iv, c)| format!("{c:+}@[{},{}]", iv.lo, iv.hi))
            .collect();
        Self {
            label: format!("{} {}", self.label, desc.join(" ")),
            source: Arc::new(Source::Shifted {
                base: self.clone(),
                offsets,
            }),
        }
    }

    /// Relative error between the analytic derivative and a central
    /// difference with step `1e-5 (1 + |x|)`, maximised over `points`.
    pub fn derivative_self_check(&self, points: &[f64]) -> f64 {
        points
            .iter()
            .map(|&x| {
                let h = 1e-5 * (1.0 + x.abs());
                let fd = (self.eval(x + h) - self.eval(x - h)) / (2.0 * h);
                let exact = self.deriv(x);
                (exact - fd).abs() / exact.abs().max(1.0)
            })
            .fold(0.0, f64::max)
    }
}

/// Log-spaced samples per shell in [`growth_margin`].
const GROWTH_SAMPLES: usize = 2048;

/// For each radius `R`, the sampled minimum of `V(x)/log|x|` over
/// `R ≤ |x| ≤ 10R` (both signs). A heuristic admissibility check.
pub fn growth_margin(v: &PotentialSpec, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| {
            if !(r > std::f64::consts::E) {
                return Err(EqmError::Config(format!("growth radius must exceed e, got {r}")));
            }
            let mut best = f64::INFINITY;
            for k in 0..GROWTH_SAMPLES {
                let t = k as f64 / (GROWTH_SAMPLES - 1) as f64;
                let x = r * 10f64.powf(t);
                for y in [x, -x] {
                    let ratio = v.eval(y) / y.abs().ln();
                    if ratio.is_nan() {
                        return Err(EqmError::Eval(format!("V({y}) is NaN for {}", v.label())));
                    }
                    best = best.min(ratio);
                }
            }
            Ok(best)
        })
        .collect()
}

/// Shells probed before choosing a window.
pub const GROWTH_RADII: [f64; 4] = [4.0, 16.0, 64.0, 256.0];
/// Maximum number of window doublings.
pub const MAX_DOUBLINGS: usize = 8;
const WINDOW_SAMPLES: usize = 1024;

/// Picks `[-R, R]` with `R` the first of `2, 4, 8, ...` such that
/// `V(x) - min V ≥ s log(2|x|)` on the sampled shell `R/2 ≤ |x| ≤ R`, where
/// the minimum is taken over the sampled window. Requires the growth margin
/// to exceed `4 s` on some probed shell.
pub fn truncation_window(v: &PotentialSpec, s: f64) -> Result<Interval> {
    if !(s > 0.0) {
        return Err(EqmError::Config(format!("mass must be positive, got {s}")));
    }
    let margins = growth_margin(v, &GROWTH_RADII)?;
    let best = margins.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(best > 4.0 * s) {
        return Err(EqmError::Growth(format!(
            "V/log|x| reaches only {best:.4} on the probed shells, need more than {}",
            4.0 * s
        )));
    }
    let mut radius = 2.0;
    for _ in 0..=MAX_DOUBLINGS {
        if window_admissible(v, s, radius)? {
            return Ok(Interval::symmetric(radius));
        }
        radius *= 2.0;
    }
    Err(EqmError::Growth(format!(
        "no admissible window up to radius {} for {}",
        radius / 2.0,
        v.label()
    )))
}

pub(crate) fn window_admissible(v: &PotentialSpec, s: f64, radius: f64) -> Result<bool> {
    let mut vmin = f64::INFINITY;
    for k in 0..=2 * WINDOW_SAMPLES {
        let x = -radius + radius * k as f64 / WINDOW_SAMPLES as f64;
        let val = v.eval(x);
        if val.is_nan() {
            return Err(EqmError::Eval(format!("V({x}) is NaN for {}", v.label())));
        }
        vmin = vmin.min(val);
    }
    for k in 0..=WINDOW_SAMPLES {
        let x = radius * (0.5 + 0.5 * k as f64 / WINDOW_SAMPLES as f64);
        for y in [x, -x] {
            if !(v.eval(y) - vmin >= s * (2.0 * x).ln()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points() -> Vec<f64> {
        (0..100).map(|k| -3.0 + 6.0 * (k as f64 + 0.37) / 100.0).collect()
    }

    #[test]
    fn rescale_identity_substitution_and_group_law() {
        let v = PotentialSpec::parse("x^4 - x^2 + 0.3*x").unwrap();
        let pts = sample_points();
        let id = v.rescale(1.0, 0.7).unwrap();
        for &x in &pts {
            assert_eq!(id.eval(x), v.eval(x));
        }
        let q = PotentialSpec::quadratic().rescale(2.0, 1.0).unwrap();
        assert_eq!(q.eval(1.0), 2.0);
        assert_eq!(q.deriv(1.0), 4.0);

        for gamma in [0.0, 1.0, -0.5] {
            let two_step = v.rescale(0.7, gamma).unwrap().rescale(1.9, gamma).unwrap();
            let direct = v.rescale(0.7 * 1.9, gamma).unwrap();
            for &x in &pts {
                let (a, b) = (two_step.eval(x), direct.eval(x));
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
        // Mixed exponents nest instead of composing.
        let nested = v.rescale(0.5, 0.0).unwrap().rescale(2.0, 1.0).unwrap();
        for &x in &pts {
            let want = v.eval(2.0 * x) / 2.0 / 0.5;
            assert!((nested.eval(x) - want).abs() <= 1e-12 * want.abs().max(1.0));
        }
        assert!(matches!(v.rescale(0.0, 1.0), Err(EqmError::Config(_))));
        assert!(matches!(v.rescale(-1.0, 1.0), Err(EqmError::Config(_))));
    }

    #[test]
    fn rescale_is_exact() {
        let v = PotentialSpec::parse("cosh(x) - x^2").unwrap();
        for (s, gamma) in [(0.5, 1.0), (2.0, 0.0), (3.0, 0.5)] {
            let w = v.rescale(s, gamma).unwrap();
            for x in sample_points() {
                let lhs = w.eval(x) * s;
                let rhs = v.eval(f64::powf(s, gamma) * x);
                assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
                let fd_check = w.derivative_self_check(&[x]);
                assert!(fd_check < 1e-6);
            }
        }
    }

    #[test]
    fn derivative_self_check_on_builtins() {
        let pts = sample_points();
        assert!(PotentialSpec::quadratic().derivative_self_check(&pts) < 1e-6);
        assert!(PotentialSpec::quartic_double_well(1.0, 1.0).derivative_self_check(&pts) < 1e-6);
        let shifted = PotentialSpec::quadratic().shifted_on(vec![(Interval::new(0.5, 2.0), 1.0)]);
        assert_eq!(shifted.eval(1.0), 2.0);
        assert_eq!(shifted.eval(-1.0), 1.0);
        assert_eq!(shifted.deriv(1.0), 2.0);
    }

    #[test]
    fn growth_margins() {
        // Oracle: the minimum of x²/log x on [10, 100] is at the inner edge.
        let m = growth_margin(&PotentialSpec::quadratic(), &[10.0]).unwrap()[0];
        let dense = (0..200_000)
            .map(|k| 10.0 + 90.0 * k as f64 / 199_999.0)
            .map(|x: f64| x * x / x.ln())
            .fold(f64::INFINITY, f64::min);
        assert!((m - dense).abs() < 1e-9 * dense);
        assert!((m - 100.0 / 10f64.ln()).abs() < 1e-9);

        let weak = PotentialSpec::parse("log(abs(x))*0.5").unwrap();
        let m = growth_margin(&weak, &[10.0]).unwrap()[0];
        assert!((m - 0.5).abs() < 1e-12);
        assert!(m < 2.0);

        let cosh = PotentialSpec::parse("cosh(x)").unwrap();
        let m = growth_margin(&cosh, &[5.0]).unwrap()[0];
        let dense = (0..200_000)
            .map(|k| 5.0 + 45.0 * k as f64 / 199_999.0)
            .map(|x: f64| x.cosh() / x.ln())
            .fold(f64::INFINITY, f64::min);
        assert!((m - dense).abs() < 1e-6 * dense);
        assert!(m >= 5f64.cosh() / 50f64.ln());

        assert!(growth_margin(&cosh, &[2.0]).is_err());
        let nan = PotentialSpec::parse("log(x)").unwrap();
        assert!(matches!(growth_margin(&nan, &[10.0]), Err(EqmError::Eval(_))));
    }

    #[test]
    fn windows() {
        let r = truncation_window(&PotentialSpec::quadratic(), 1.0).unwrap();
        assert!(r.hi == 2.0 || r.hi == 4.0);
        assert_eq!(r.lo, -r.hi);
        let r = truncation_window(&PotentialSpec::parse("x^4").unwrap(), 1.0).unwrap();
        assert_eq!(r.hi, 2.0);
        let weak = PotentialSpec::parse("0.5*log(abs(x))").unwrap();
        assert!(matches!(truncation_window(&weak, 1.0), Err(EqmError::Growth(_))));
    }

    #[test]
    fn config_parsing() {
        let c: PotentialConfig = serde_json::from_str(r#"{"expr": "x^2"}"#).unwrap();
        assert_eq!(c.build().unwrap().eval(3.0), 9.0);
        let c: PotentialConfig =
            serde_json::from_str(r#"{"builtin": "quartic_double_well", "params": {"a": 1, "b": 2}}"#)
                .unwrap();
        assert_eq!(c.build().unwrap().eval(1.0), -1.0);
        let c: PotentialConfig = serde_json::from_str(r#"{"builtin": "quadratic"}"#).unwrap();
        assert_eq!(c.build().unwrap().eval(2.0), 4.0);
        let c: PotentialConfig =
            serde_json::from_str(r#"{"builtin": "quadratic", "params": {"q": 1}}"#).unwrap();
        assert!(c.build().is_err());
        assert!(serde_json::from_str::<PotentialConfig>(r#"{"expr": "x", "extra": 1}"#).is_err());
    }
}

use eqm_core::analysis::{classify, fit_power_law, ClassifyPolicy, EdgeKind, Verdict};
use eqm_core::kernel::LogKernelOperator;
use eqm_core::solver::{evaluate_density, solve_unconstrained};
use eqm_core::{ConstraintSet, Grid, Interval, PotentialSpec, SolverConfig};

#[test]
fn quadratic_is_regular_at_every_mass() {
    let policy = ClassifyPolicy::default();
    for s in [0.5, 1.0, 2.0] {
        let sol = solve_unconstrained(&PotentialSpec::quadratic(), s, 1500, &SolverConfig::default()).unwrap();
        let c = classify(&sol, &policy);
        assert_eq!(c.verdict, Verdict::Regular, "s={s}: {:?}", c.findings);
        assert_eq!(c.band_count, 1);
        assert_eq!(c.edge_fits.len(), 2);
        for f in &c.edge_fits {
            assert_eq!(f.kind, EdgeKind::VoidBand);
            assert!((f.exponent - 0.5).abs() < 0.05, "s={s}: e={}", f.exponent);
        }
    }
}

#[test]
fn three_halves_profile_is_singular() {
    let grid = Grid::uniform(Interval::symmetric(1.5), 1200).unwrap();
    let raw: Vec<f64> = grid.midpoints().iter().map(|&x| (1.0 - x * x).max(0.0).powf(1.5)).collect();
    let mass = grid.mass(&raw);
    let psi: Vec<f64> = raw.iter().map(|p| p / mass).collect();
    let constraints = ConstraintSet::unconstrained(grid.clone(), 1.0);
    let kernel = LogKernelOperator::assemble(&grid);
    let sol = evaluate_density(&PotentialSpec::quadratic(), &constraints, &kernel, psi, &SolverConfig::default()).unwrap();
    let c = classify(&sol, &ClassifyPolicy::default());
    assert_eq!(c.verdict, Verdict::Singular, "{:?}", c.findings);
    for f in &c.edge_fits {
        assert!((f.exponent - 1.5).abs() < 0.1, "e={}", f.exponent);
    }
}

#[test]
fn power_law_with_smooth_factor_is_recovered() {
    for e in [0.5, 1.5, 2.5] {
        let d: Vec<f64> = (1..=40).map(|k| k as f64 * 1e-3).collect();
        let phi: Vec<f64> = d.iter().map(|&t| 0.9 * t.powf(e) * (2.0 * t - 3.0 * t * t).exp()).collect();
        let (fit_e, q, r2) = fit_power_law(&d, &phi, 2).unwrap();
        assert!((fit_e - e).abs() < 1e-6, "{fit_e} vs {e}");
        assert!((q - 0.9).abs() < 1e-5, "{q}");
        assert!(r2 > 0.999_999);
    }
}

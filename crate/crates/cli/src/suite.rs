//! The acceptance suite. The `acceptance` test runs it at full resolution;
//! `eqm selftest` runs it at reduced resolution.

use std::cell::OnceCell;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use eqm_core::analysis::{
    classify, genericity_scan, s_grid, scaling_consistency, ClassifyPolicy, EdgeKind, ScanConfig, ScanMode,
};
use eqm_core::field::{acf_phi, monotone_in_mass, random_harmonic_pair, AcfQuadrature, HalfPlaneRamp};
use eqm_core::grid::Resolution;
use eqm_core::kernel::dot;
use eqm_core::oracle::{pairwise_transfer_solve, semicircle_density, TransferConfig};
use eqm_core::solver::{evaluate_density, minimize, minimize_with_kernel};
use eqm_core::{ConstraintSet, Grid, Interval, LogKernelOperator, MeasureSolution, PotentialSpec, SolverConfig};

use crate::commands::cmd_solve;
use crate::config::{Format, RunConfig};

/// Grid sizes per criterion.
#[derive(Debug, Clone)]
pub struct Scale {
    pub label: &'static str,
    pub semicircle_cells: usize,
    pub floor_cells: [usize; 2],
    pub positivity_cells: usize,
    pub positivity_vectors: usize,
    pub rescale_cells: usize,
    pub monotone_cells: usize,
    pub capped_cells: usize,
    pub interval_cells: usize,
    pub oracle_cells: usize,
    pub scan_cells: usize,
    pub determinism_cells: usize,
}

impl Scale {
    pub fn full() -> Self {
        Self {
            label: "full",
            semicircle_cells: 2000,
            floor_cells: [1000, 2000],
            positivity_cells: 400,
            positivity_vectors: 1000,
            rescale_cells: 2000,
            monotone_cells: 1000,
            capped_cells: 3000,
            interval_cells: 800,
            oracle_cells: 200,
            scan_cells: 1500,
            determinism_cells: 2000,
        }
    }

    pub fn reduced() -> Self {
        Self {
            label: "reduced",
            semicircle_cells: 400,
            floor_cells: [200, 400],
            positivity_cells: 400,
            positivity_vectors: 1000,
            rescale_cells: 400,
            monotone_cells: 400,
            // The band between plateau and void must hold a fit window.
            capped_cells: 2000,
            interval_cells: 400,
            oracle_cells: 200,
            // Edge fits near the band merge need this resolution.
            scan_cells: 1500,
            determinism_cells: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} {:>2} {:<32} {:>7.1}s  {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const CRITERIA: [(usize, &str); 12] = [
    (1, "semicircle law"),
    (2, "edge regularity"),
    (3, "KKT certification"),
    (4, "kernel positivity"),
    (5, "rescaling correspondence"),
    (6, "mass monotonicity"),
    (7, "capped phase separation"),
    (8, "interval-mass constraints"),
    (9, "oracle equivalence"),
    (10, "genericity scan"),
    (11, "ACF diagnostic"),
    (12, "determinism"),
];

/// Tolerance of the main solver when compared with the pairwise oracle.
pub const ORACLE_MAIN_TOL: f64 = 1e-10;
const SEMICIRCLE_WINDOW: f64 = 1.5;
const CAPPED_HALF_WIDTH: f64 = 3.0;
const CAP: f64 = 0.5;
const SPLIT: [(f64, f64); 2] = [(-2.0, -0.5), (0.5, 2.0)];
const SPLIT_MASSES: [f64; 2] = [0.3, 0.7];

type Solved = Result<MeasureSolution, String>;

pub struct Suite {
    pub scale: Scale,
    semicircle: OnceCell<(Solved, f64)>,
    capped: OnceCell<Solved>,
    split: OnceCell<Solved>,
}

fn semicircle_problem(cells: usize) -> ConstraintSet {
    let grid = Grid::uniform(Interval::symmetric(SEMICIRCLE_WINDOW), cells).expect("valid grid");
    ConstraintSet::unconstrained(grid, 1.0)
}

fn capped_problem(cells: usize) -> ConstraintSet {
    let grid = Grid::uniform(Interval::symmetric(CAPPED_HALF_WIDTH), cells).expect("valid grid");
    ConstraintSet::capped(grid, 1.0, CAP)
}

fn split_problem(cells: usize) -> ConstraintSet {
    let iv: Vec<Interval> = SPLIT.iter().map(|&(a, b)| Interval::new(a, b)).collect();
    let grid = Grid::new(&iv, Resolution::Total(cells)).expect("valid grid");
    ConstraintSet::capped(grid, 1.0, 1.0).with_interval_masses(SPLIT_MASSES.to_vec())
}

fn kkt_scale(sol: &MeasureSolution) -> f64 {
    1.0 + sol.multipliers.iter().fold(0.0f64, |a, c| a.max(c.abs()))
}

fn check(ok: bool, failures: &mut Vec<String>, what: String) {
    if !ok {
        failures.push(what);
    }
}

fn verdict(failures: Vec<String>, detail: String) -> (bool, String) {
    if failures.is_empty() {
        (true, detail)
    } else {
        (false, format!("{detail}; failed: {}", failures.join(", ")))
    }
}

impl Suite {
    pub fn new(scale: Scale) -> Self {
        Self {
            scale,
            semicircle: OnceCell::new(),
            capped: OnceCell::new(),
            split: OnceCell::new(),
        }
    }

    /// Single-threaded solve with its wall time.
    fn semicircle(&self) -> &(Solved, f64) {
        self.semicircle.get_or_init(|| {
            let c = semicircle_problem(self.scale.semicircle_cells);
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool");
            let t = Instant::now();
            let sol = pool.install(|| minimize(&PotentialSpec::quadratic(), &c, &SolverConfig::default()));
            (sol.map_err(|e| e.to_string()), t.elapsed().as_secs_f64())
        })
    }

    fn capped(&self) -> &Solved {
        self.capped.get_or_init(|| {
            minimize(&PotentialSpec::quadratic(), &capped_problem(self.scale.capped_cells), &SolverConfig::default())
                .map_err(|e| e.to_string())
        })
    }

    fn split(&self) -> &Solved {
        self.split.get_or_init(|| {
            minimize(&PotentialSpec::quadratic(), &split_problem(self.scale.interval_cells), &SolverConfig::default())
                .map_err(|e| e.to_string())
        })
    }

    pub fn run(&self, id: usize) -> CriterionResult {
        let name = CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .map(|c| c.1)
            .unwrap_or("unknown criterion");
        let t = Instant::now();
        let outcome = match id {
            1 => self.semicircle_law(),
            2 => self.edge_regularity(),
            3 => self.kkt_certification(),
            4 => self.kernel_positivity(),
            5 => self.rescaling(),
            6 => self.monotonicity(),
            7 => self.capped_phases(),
            8 => self.interval_masses(),
            9 => self.oracle_equivalence(),
            10 => self.genericity(),
            11 => self.acf(),
            12 => self.determinism(),
            _ => Err(format!("no criterion {id}")),
        };
        let (pass, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        CriterionResult {
            id,
            name,
            pass,
            detail,
            seconds: t.elapsed().as_secs_f64(),
        }
    }

    pub fn run_all(&self, mut report: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
        CRITERIA
            .iter()
            .map(|&(id, _)| {
                let r = self.run(id);
                report(&r);
                r
            })
            .collect()
    }

    fn semicircle_law(&self) -> Result<(bool, String), String> {
        let (sol, secs) = self.semicircle();
        let sol = sol.as_ref().map_err(Clone::clone)?;
        let h = sol.grid.max_width();
        let exact = semicircle_density(1.0, sol.grid.midpoints()).map_err(|e| e.to_string())?;
        let err = sol
            .grid
            .midpoints()
            .iter()
            .zip(sol.psi.iter().zip(&exact))
            .filter(|(x, _)| x.abs() <= 0.9)
            .map(|(_, (p, q))| (p - q).abs())
            .fold(0.0, f64::max);
        let class = classify(sol, &ClassifyPolicy::default());
        let bands = &class.decomposition.bands;
        let mut f = Vec::new();
        check(sol.converged, &mut f, "not converged".into());
        check(err <= 1e-2, &mut f, "density error".into());
        check(*secs <= 60.0, &mut f, "runtime".into());
        let edges = if bands.len() == 1 {
            let (lo, hi) = (bands[0].lo, bands[0].hi);
            check((lo + 1.0).abs() <= 2.0 * h && (hi - 1.0).abs() <= 2.0 * h, &mut f, "edge location".into());
            format!("[{lo:.5}, {hi:.5}]")
        } else {
            f.push(format!("{} bands", bands.len()));
            String::new()
        };
        Ok(verdict(
            f,
            format!(
                "n={} sup|psi-sc| on |x|<=0.9 = {err:.3e}; support {edges} (2h = {:.4}); single-thread {secs:.2}s",
                sol.grid.len(),
                2.0 * h
            ),
        ))
    }

    fn edge_regularity(&self) -> Result<(bool, String), String> {
        let sol = self.semicircle().0.as_ref().map_err(Clone::clone)?;
        let class = classify(sol, &ClassifyPolicy::default());
        let target = 2.0 * std::f64::consts::SQRT_2 / std::f64::consts::PI;
        let fits: Vec<_> = class.edge_fits.iter().filter(|e| e.kind == EdgeKind::VoidBand).collect();
        let mut f = Vec::new();
        check(fits.len() == 2, &mut f, format!("{} edge fits", fits.len()));
        let mut parts = Vec::new();
        for e in &fits {
            let q_err = (e.coefficient - target).abs() / target;
            check((0.45..=0.55).contains(&e.exponent), &mut f, format!("exponent at {:.4}", e.location));
            check(e.r_squared >= 0.995, &mut f, format!("R2 at {:.4}", e.location));
            check(q_err <= 0.1, &mut f, format!("Q at {:.4}", e.location));
            parts.push(format!(
                "x={:.4}: e={:.4} R2={:.5} Q={:.4} ({:.1}% off)",
                e.location,
                e.exponent,
                e.r_squared,
                e.coefficient,
                100.0 * q_err
            ));
        }
        Ok(verdict(f, parts.join("; ")))
    }

    fn kkt_certification(&self) -> Result<(bool, String), String> {
        let mut f = Vec::new();
        let mut parts = Vec::new();
        let runs: [(&str, &Solved); 3] = [
            ("semicircle", &self.semicircle().0),
            ("capped", self.capped()),
            ("intervals", self.split()),
        ];
        for (label, sol) in runs {
            let sol = sol.as_ref().map_err(Clone::clone)?;
            let bound = sol.tol_kkt * kkt_scale(sol);
            let k = &sol.kkt;
            let ok = sol.converged && k.r_support <= bound && k.r_void <= bound && k.r_sat <= bound;
            check(ok, &mut f, label.to_string());
            parts.push(format!(
                "{label}: {:.1e}/{:.1e}/{:.1e} <= {bound:.1e}",
                k.r_support, k.r_void, k.r_sat
            ));
        }
        let v = PotentialSpec::quadratic();
        let mut floors = Vec::new();
        for n in self.scale.floor_cells {
            let c = semicircle_problem(n);
            let k = LogKernelOperator::assemble(&c.domain);
            let psi = semicircle_density(1.0, c.domain.midpoints()).map_err(|e| e.to_string())?;
            let e = evaluate_density(&v, &c, &k, psi, &SolverConfig::default()).map_err(|e| e.to_string())?;
            floors.push(e.kkt.max_residual());
        }
        let ratio = floors[0] / floors[1];
        check(floors[1] <= 5e-3, &mut f, "sampled semicircle floor".into());
        check(ratio >= 1.5, &mut f, "floor shrinkage".into());
        parts.push(format!(
            "sampled semicircle floor n={}: {:.2e}, n={}: {:.2e} (ratio {ratio:.2})",
            self.scale.floor_cells[0], floors[0], self.scale.floor_cells[1], floors[1]
        ));
        Ok(verdict(f, parts.join("; ")))
    }

    fn kernel_positivity(&self) -> Result<(bool, String), String> {
        let t = Instant::now();
        let grid = Grid::uniform(Interval::symmetric(1.0), self.scale.positivity_cells).map_err(|e| e.to_string())?;
        let k = LogKernelOperator::assemble(&grid);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = grid.len();
        let mut worst = f64::INFINITY;
        for _ in 0..self.scale.positivity_vectors {
            let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mean = w.iter().sum::<f64>() / n as f64;
            w.iter_mut().for_each(|x| *x -= mean);
            worst = worst.min(dot(&w, &k.apply(&w)) / dot(&w, &w));
        }
        let secs = t.elapsed().as_secs_f64();
        let mut f = Vec::new();
        check(worst >= -1e-10, &mut f, "negative form".into());
        check(secs <= 5.0, &mut f, "runtime".into());
        Ok(verdict(
            f,
            format!(
                "n={n}, {} zero-mass vectors: min w'Kw/|w|^2 = {worst:.3e}; {secs:.2}s",
                self.scale.positivity_vectors
            ),
        ))
    }

    fn rescaling(&self) -> Result<(bool, String), String> {
        let v = PotentialSpec::quadratic();
        let mut f = Vec::new();
        let mut parts = Vec::new();
        for gamma in [0.0, 1.0] {
            for s in [0.5, 2.0] {
                let d = scaling_consistency(&v, gamma, s, None, self.scale.rescale_cells, &SolverConfig::default())
                    .map_err(|e| e.to_string())?;
                check(d <= 2e-2, &mut f, format!("gamma={gamma} s={s}"));
                parts.push(format!("g={gamma} s={s}: {d:.2e}"));
            }
        }
        Ok(verdict(f, parts.join("; ")))
    }

    fn monotonicity(&self) -> Result<(bool, String), String> {
        let v = PotentialSpec::quadratic();
        let mut f = Vec::new();
        let mut parts = Vec::new();
        for (s, sp) in [(0.5, 1.0), (1.0, 2.0)] {
            let r = monotone_in_mass(&v, s, sp, 10.0, 64, self.scale.monotone_cells, &SolverConfig::default())
                .map_err(|e| e.to_string())?;
            check(r.raw_min >= -1e-8, &mut f, format!("({s},{sp}) overall"));
            check(r.raw_far_min >= 0.5 * (sp - s), &mut f, format!("({s},{sp}) far field"));
            parts.push(format!(
                "({s},{sp}): min {:.4}, far min {:.4} >= {:.2}",
                r.raw_min,
                r.raw_far_min,
                0.5 * (sp - s)
            ));
        }
        Ok(verdict(f, parts.join("; ")))
    }

    fn capped_phases(&self) -> Result<(bool, String), String> {
        let sol = self.capped().as_ref().map_err(Clone::clone)?;
        let h = sol.grid.max_width();
        let class = classify(sol, &ClassifyPolicy::default());
        let mut f = Vec::new();
        check(sol.converged, &mut f, "not converged".into());
        check(!class.decomposition.saturated.is_empty(), &mut f, "no saturated plateau".into());
        check(class.phase_gap > 5.0 * h, &mut f, "phase gap".into());
        let sat: Vec<_> = class
            .edge_fits
            .iter()
            .filter(|e| e.kind == EdgeKind::BandSaturated)
            .collect();
        check(!sat.is_empty(), &mut f, "no saturation edge fits".into());
        let mut exps = Vec::new();
        for e in &sat {
            check((0.42..=0.58).contains(&e.exponent), &mut f, format!("exponent at {:.4}", e.location));
            exps.push(format!("{:.4}", e.exponent));
        }
        Ok(verdict(
            f,
            format!(
                "n={} plateau {:?}; phase gap {:.4} (5h = {:.4}); saturation edge exponents [{}]",
                sol.grid.len(),
                class
                    .decomposition
                    .saturated
                    .iter()
                    .map(|i| format!("[{:.3},{:.3}]", i.lo, i.hi))
                    .collect::<Vec<_>>(),
                class.phase_gap,
                5.0 * h,
                exps.join(", ")
            ),
        ))
    }

    fn interval_masses(&self) -> Result<(bool, String), String> {
        let sol = self.split().as_ref().map_err(Clone::clone)?;
        let mut f = Vec::new();
        let mass_err = sol
            .masses
            .iter()
            .zip(SPLIT_MASSES)
            .map(|(m, t)| (m - t).abs())
            .fold(0.0, f64::max);
        check(sol.converged, &mut f, "not converged".into());
        check(mass_err <= 1e-10, &mut f, "interval masses".into());
        check(
            sol.multipliers.len() == 2 && sol.multiplier_from_band.iter().all(|&b| b),
            &mut f,
            "two band multipliers".into(),
        );
        let shifted = PotentialSpec::quadratic().shifted_on(vec![(Interval::new(SPLIT[1].0, SPLIT[1].1), 1.0)]);
        let other = minimize(&shifted, &split_problem(self.scale.interval_cells), &SolverConfig::default())
            .map_err(|e| e.to_string())?;
        let tol = 10.0 * sol.tol_kkt;
        let d0 = (other.multipliers[0] - sol.multipliers[0]).abs();
        let d1 = (other.multipliers[1] - sol.multipliers[1] - 1.0).abs();
        let dpsi = sol
            .psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        check(other.converged, &mut f, "shifted run not converged".into());
        check(d0 <= tol, &mut f, "untouched multiplier moved".into());
        check(d1 <= tol, &mut f, "shifted multiplier".into());
        check(dpsi <= tol, &mut f, "density moved".into());
        Ok(verdict(
            f,
            format!(
                "mass error {mass_err:.1e}; C = ({:.6}, {:.6}); after +1 on the right: dC0 {d0:.1e}, dC1-1 {d1:.1e}, dpsi {dpsi:.1e} (limit {tol:.0e})",
                sol.multipliers[0], sol.multipliers[1]
            ),
        ))
    }

    fn oracle_equivalence(&self) -> Result<(bool, String), String> {
        let n = self.scale.oracle_cells;
        let v = PotentialSpec::quadratic();
        let main_cfg = SolverConfig {
            tol_kkt: ORACLE_MAIN_TOL,
            ..SolverConfig::default()
        };
        let mut f = Vec::new();
        let mut parts = Vec::new();
        for (label, c) in [
            ("semicircle", semicircle_problem(n)),
            ("capped", capped_problem(n)),
            ("intervals", split_problem(n)),
        ] {
            let k = LogKernelOperator::assemble(&c.domain);
            let a = minimize_with_kernel(&v, &c, &k, &main_cfg).map_err(|e| e.to_string())?;
            let o = pairwise_transfer_solve(&v, &c, &k, &TransferConfig::default()).map_err(|e| e.to_string())?;
            let oc = evaluate_density(&v, &c, &k, o.psi.clone(), &SolverConfig::default()).map_err(|e| e.to_string())?;
            let gap = a
                .psi
                .iter()
                .zip(&o.psi)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
                / a.max_density();
            check(a.converged && oc.converged, &mut f, format!("{label} KKT"));
            check(gap <= 1e-4, &mut f, format!("{label} gap"));
            parts.push(format!(
                "{label}: gap {gap:.1e}, oracle {} sweeps, KKT {:.1e}",
                o.iterations,
                oc.kkt.max_residual()
            ));
        }
        Ok(verdict(f, format!("n={n}, main tol {ORACLE_MAIN_TOL:.0e}; {}", parts.join("; "))))
    }

    fn genericity(&self) -> Result<(bool, String), String> {
        let v = PotentialSpec::quartic_double_well(1.0, 1.0);
        let cfg = ScanConfig {
            mode: ScanMode::Unconstrained {
                cells: self.scale.scan_cells,
            },
            gamma: 0.0,
            solver: SolverConfig::default(),
            policy: ClassifyPolicy::default(),
        };
        let step = 0.05;
        let coarse_s = s_grid(0.2, 3.0, step).map_err(|e| e.to_string())?;
        let fine_s = s_grid(0.2, 3.0, step / 4.0).map_err(|e| e.to_string())?;
        let coarse = genericity_scan(&v, &coarse_s, &cfg).map_err(|e| e.to_string())?;
        let fine = genericity_scan(&v, &fine_s, &cfg).map_err(|e| e.to_string())?;
        let mut f = Vec::new();
        check(coarse.regular_fraction >= 0.95, &mut f, "regular fraction".into());
        check(coarse.flagged_windows.len() <= 3, &mut f, "window count".into());
        check(
            fine.flagged_measure <= coarse.flagged_measure + step + 1e-12,
            &mut f,
            "refined measure".into(),
        );
        let windows = |r: &eqm_core::analysis::ScanReport| {
            r.flagged_windows
                .iter()
                .map(|w| format!("[{:.4},{:.4}]", w.s_first, w.s_last))
                .collect::<Vec<_>>()
                .join(" ")
        };
        Ok(verdict(
            f,
            format!(
                "n={}: coarse {}/{} regular ({:.1}%), windows {}, measure {:.4}; step/4: windows {}, measure {:.4}",
                self.scale.scan_cells,
                coarse.rows.iter().filter(|r| r.verdict == eqm_core::analysis::Verdict::Regular).count(),
                coarse.rows.len(),
                100.0 * coarse.regular_fraction,
                windows(&coarse),
                coarse.flagged_measure,
                windows(&fine),
                fine.flagged_measure
            ),
        ))
    }

    fn acf(&self) -> Result<(bool, String), String> {
        let q = AcfQuadrature::default();
        let radii: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let e = [1.0, 0.0];
        let plus = HalfPlaneRamp { slope: 2.0, direction: e };
        let minus = HalfPlaneRamp { slope: 3.0, direction: e };
        let eq = acf_phi(&plus, &minus, &radii, &q).map_err(|e| e.to_string())?;
        let mid = eq[4].phi;
        let spread = eq.iter().map(|s| (s.phi - mid).abs() / mid).fold(0.0, f64::max);
        let mut f = Vec::new();
        check(spread <= 1e-6, &mut f, "equality case".into());
        let mut parts = vec![format!("equality case spread {spread:.1e}")];
        for seed in [1u64, 2, 3] {
            let h = random_harmonic_pair(seed);
            let out = acf_phi(&h, &h, &radii, &q).map_err(|e| e.to_string())?;
            let drop = out
                .windows(2)
                .map(|w| (w[0].phi - w[1].phi) / w[0].phi.abs().max(f64::MIN_POSITIVE))
                .fold(f64::NEG_INFINITY, f64::max);
            check(drop <= 1e-6, &mut f, format!("seed {seed}"));
            parts.push(format!("seed {seed}: largest relative drop {drop:.1e}"));
        }
        Ok(verdict(f, parts.join("; ")))
    }

    fn determinism(&self) -> Result<(bool, String), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let run = |name: &str| -> Result<Vec<u8>, String> {
            let cfg = RunConfig {
                n: self.scale.determinism_cells,
                out: dir.path().join(name),
                formats: vec![Format::Csv],
                ..RunConfig::default()
            };
            cmd_solve(&cfg, None).map_err(|e| e.to_string())?;
            std::fs::read(cfg.out.join("density.csv")).map_err(|e| e.to_string())
        };
        let a = run("a")?;
        let b = run("b")?;
        let mut f = Vec::new();
        check(!a.is_empty() && a == b, &mut f, "density.csv differs".into());
        Ok(verdict(
            f,
            format!("two solves at n={}: {} bytes each, identical = {}", self.scale.determinism_cells, a.len(), a == b),
        ))
    }
}

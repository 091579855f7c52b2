//! Cell-integrated logarithmic interaction operator.
//!
//! Densities are piecewise constant on the cells of a [`Grid`]. The operator
//! stores the cell averages
//!
//! ```text
//! K_ij = (h_i h_j)^-1 ∫_{cell i} ∫_{cell j} -log|x - y| dx dy
//! ```
//!
//! so that the logarithmic interaction of a density `psi` is the quadratic
//! form `Σ K_ij m_i m_j` in the cell masses `m_i = psi_i h_i`.
//!
//! Nearby cell pairs use the closed-form antiderivative
//! `F(a) = a² (3/2 - log|a|) / 2`. Well separated pairs use the moment
//! expansion of the same integral, which avoids the cancellation between
//! corner terms of size `d² log d`.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::error::{EqmError, Result};
use crate::grid::Grid;

/// Pairs whose centre distance exceeds this multiple of the summed half
/// widths are integrated with the moment series.
pub(crate) const FAR_RATIO: f64 = 8.0;
/// Number of even moments kept in the far-field series.
pub(crate) const SERIES_TERMS: usize = 10;

static KERNEL_SCALE_BITS: AtomicU64 = AtomicU64::new(0x3FF0_0000_0000_0000);

/// Fault-injection hook: every kernel assembled afterwards is multiplied by
/// `scale`. Used by the self-test to check that a corrupted operator is
/// caught. Pass `1.0` to restore.
pub fn set_debug_kernel_scale(scale: f64) {
    KERNEL_SCALE_BITS.store(scale.to_bits(), Ordering::SeqCst);
}

pub fn debug_kernel_scale() -> f64 {
    f64::from_bits(KERNEL_SCALE_BITS.load(Ordering::SeqCst))
}

/// `F(a) = a² (3/2 - log|a|) / 2`, with `F(0) = 0`. Its second derivative
/// is `-log|a|`.
fn corner(a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        0.5 * a * a * (1.5 - a.abs().ln())
    }
}

/// Even moments `E[ξ^{2k}]` of the uniform law on `[-h/2, h/2]`, k = 0..SERIES_TERMS.
pub(crate) fn uniform_moments(h: f64) -> [f64; SERIES_TERMS + 1] {
    let mut m = [0.0; SERIES_TERMS + 1];
    let half = 0.5 * h;
    let mut pow = 1.0;
    for (k, slot) in m.iter_mut().enumerate() {
        *slot = pow / (2 * k + 1) as f64;
        pow *= half * half;
    }
    m
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for j in 0..k {
        c = c * (n - j) as f64 / (j + 1) as f64;
    }
    c
}

/// Even moments of `ξ - η` for independent uniforms of widths `hi`, `hj`.
fn difference_moments(hi: f64, hj: f64) -> [f64; SERIES_TERMS + 1] {
    let mi = uniform_moments(hi);
    let mj = uniform_moments(hj);
    let mut out = [0.0; SERIES_TERMS + 1];
    for (k, slot) in out.iter_mut().enumerate() {
        let n = 2 * k;
        *slot = (0..=k)
            .map(|j| binomial(n, 2 * j) * mi[j] * mj[k - j])
            .sum();
    }
    out
}

/// Average of `-log|x - y|` over `x` in a cell of width `hi` centred at
/// `ci` and `y` in a cell of width `hj` centred at `cj`.
pub fn cell_pair_average(ci: f64, hi: f64, cj: f64, hj: f64) -> f64 {
    pair_average(ci, hi, cj, hj, &difference_moments(hi, hj))
}

/// `moments` must be `difference_moments(hi, hj)`.
fn pair_average(ci: f64, hi: f64, cj: f64, hj: f64, moments: &[f64; SERIES_TERMS + 1]) -> f64 {
    let d = ci - cj;
    if d.abs() > FAR_RATIO * 0.5 * (hi + hj) {
        let inv_d2 = 1.0 / (d * d);
        let mut acc = 0.0;
        let mut p = inv_d2;
        for (k, m) in moments.iter().enumerate().skip(1) {
            let term = m * p / (2 * k) as f64;
            acc += term;
            if term < 1e-18 * acc {
                break;
            }
            p *= inv_d2;
        }
        -d.abs().ln() + acc
    } else {
        let (a1, b1) = (ci - 0.5 * hi, ci + 0.5 * hi);
        let (a2, b2) = (cj - 0.5 * hj, cj + 0.5 * hj);
        (corner(b1 - a2) - corner(a1 - a2) - corner(b1 - b2) + corner(a1 - b2)) / (hi * hj)
    }
}

/// `∫_{c-h/2}^{c+h/2} -log|x - t| dt` for a single cell.
pub fn cell_line_integral(x: f64, c: f64, h: f64) -> f64 {
    let d = x - c;
    if d.abs() > FAR_RATIO * 0.5 * h {
        let moments = uniform_moments(h);
        let inv_d2 = 1.0 / (d * d);
        let mut acc = 0.0;
        let mut p = inv_d2;
        for (k, m) in moments.iter().enumerate().skip(1) {
            acc += m * p / (2 * k) as f64;
            p *= inv_d2;
        }
        h * (-d.abs().ln() + acc)
    } else {
        // t ↦ (t - x)(1 - log|t - x|) is an antiderivative of -log|t - x|.
        let anti = |t: f64| {
            let u = t - x;
            if u == 0.0 {
                0.0
            } else {
                u * (1.0 - u.abs().ln())
            }
        };
        anti(c + 0.5 * h) - anti(c - 0.5 * h)
    }
}

/// Dense symmetric cell-averaged logarithmic kernel.
#[derive(Debug, Clone)]
pub struct LogKernelOperator {
    grid: Grid,
    n: usize,
    entries: Vec<f64>,
}

impl LogKernelOperator {
    /// Assembles all entries. The upper triangle is computed and mirrored,
    /// so `K_ij == K_ji` bit for bit.
    pub fn assemble(grid: &Grid) -> Self {
        let n = grid.len();
        let x = grid.midpoints();
        let h = grid.widths();
        let scale = debug_kernel_scale();
        let mut entries = vec![0.0; n * n];
        entries.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            let mut cached = (h[i], difference_moments(h[i], h[i]));
            for j in i..n {
                if h[j] != cached.0 {
                    cached = (h[j], difference_moments(h[i], h[j]));
                }
                row[j] = scale * pair_average(x[i], h[i], x[j], h[j], &cached.1);
            }
        });
        for i in 0..n {
            for j in 0..i {
                entries[i * n + j] = entries[j * n + i];
            }
        }
        Self {
            grid: grid.clone(),
            n,
            entries,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    /// `out = K v`. Each row is reduced sequentially, so the result does not
    /// depend on the number of worker threads.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.n);
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            *o = dot(self.row(i), v);
        });
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(v, &mut out);
        out
    }

    /// Cell-averaged logarithmic potential `U_i` of a density, i.e.
    /// `Σ_j K_ij psi_j h_j`.
    pub fn cell_potentials(&self, psi: &[f64]) -> Vec<f64> {
        let masses: Vec<f64> = psi
            .iter()
            .zip(self.grid.widths())
            .map(|(p, h)| p * h)
            .collect();
        self.apply(&masses)
    }

    /// Logarithmic interaction `Σ_ij K_ij m_i m_j` of the cell masses.
    pub fn interaction(&self, psi: &[f64]) -> f64 {
        let masses: Vec<f64> = psi
            .iter()
            .zip(self.grid.widths())
            .map(|(p, h)| p * h)
            .collect();
        dot(&self.apply(&masses), &masses)
    }

    /// Writes the matrix as CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        for i in 0..self.n {
            let line: Vec<String> = self.row(i).iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Fixed-order dot product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_density(psi: &[f64], n: usize) -> Result<()> {
    if psi.len() != n {
        return Err(EqmError::Domain(format!(
            "density has {} entries, grid has {n} cells",
            psi.len()
        )));
    }
    if let Some((i, p)) = psi.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
        return Err(EqmError::Domain(format!("density entry {i} is {p}")));
    }
    Ok(())
}

/// Energy `∬ (V(x) + V(y) - log|x - y|) dμ(x) dμ(y)` of a piecewise-constant
/// density, with `V` sampled at cell midpoints. The potential term carries
/// the total mass of the other marginal, so for a mass-`s` density it equals
/// `2 s Σ V_i m_i`.
pub fn energy(kernel: &LogKernelOperator, v_mid: &[f64], psi: &[f64]) -> Result<f64> {
    check_density(psi, kernel.len())?;
    let grid = kernel.grid();
    let mass = grid.mass(psi);
    let linear: f64 = psi
        .iter()
        .zip(grid.widths())
        .zip(v_mid)
        .map(|((p, h), v)| p * h * v)
        .sum();
    Ok(kernel.interaction(psi) + 2.0 * mass * linear)
}

/// The functional minimised at fixed mass: `Σ K_ij m_i m_j + 2 Σ V_i m_i`.
/// Its first variation is `2 (U + V)`, so minimisers satisfy `U + V = C` on
/// their support for every total mass.
pub fn objective(kernel: &LogKernelOperator, v_mid: &[f64], psi: &[f64]) -> f64 {
    let grid = kernel.grid();
    let linear: f64 = psi
        .iter()
        .zip(grid.widths())
        .zip(v_mid)
        .map(|((p, h), v)| p * h * v)
        .sum();
    kernel.interaction(psi) + 2.0 * linear
}

/// `U(x) = ∫ -log|x - t| psi(t) dt` at arbitrary points, integrated exactly
/// cell by cell. Finite at points inside cells.
pub fn potential_on_line(grid: &Grid, psi: &[f64], points: &[f64]) -> Result<Vec<f64>> {
    check_density(psi, grid.len())?;
    let x = grid.midpoints();
    let h = grid.widths();
    Ok(points
        .par_iter()
        .map(|&q| {
            (0..x.len())
                .filter(|&j| psi[j] != 0.0)
                .map(|j| psi[j] * cell_line_integral(q, x[j], h[j]))
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Interval;

    /// Composite Gauss–Legendre on a 1-D integrand, splitting at `breaks`.
    fn gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let step = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * step;
            let mid = lo + 0.5 * step;
            for k in 0..5 {
                acc += W[k] * f(mid + 0.5 * step * X[k]);
            }
        }
        acc * 0.5 * step
    }

    /// Quadrature of ∫_a^b -log|x - t| dt, written in the distance variable
    /// u = |x - t| and geometrically graded towards u = 0.
    fn line_oracle(x: f64, a: f64, b: f64) -> f64 {
        if x > a && x < b {
            log_from_zero(x - a) + log_from_zero(b - x)
        } else if x <= a {
            log_from_zero(b - x) - log_from_zero(a - x)
        } else {
            log_from_zero(x - a) - log_from_zero(x - b)
        }
    }

    /// ∫_0^len -ln(u) du by graded Gauss–Legendre.
    fn log_from_zero(len: f64) -> f64 {
        if len <= 0.0 {
            return 0.0;
        }
        let f = |u: f64| -u.ln();
        let mut acc = 0.0;
        let mut hi = len;
        for _ in 0..80 {
            let lo = hi * 0.5;
            acc += gauss(&f, lo, hi, 2);
            hi = lo;
        }
        acc
    }

    #[test]
    fn diagonal_matches_closed_form_and_quadrature() {
        // ∬_{[0,1]²} -log|x-y| by nested quadrature of the 1-D integral.
        let oracle = |h: f64| {
            let inner = |x: f64| line_oracle(x, 0.0, h);
            gauss(&inner, 0.0, h, 64) / (h * h)
        };
        let k1 = cell_pair_average(0.5, 1.0, 0.5, 1.0);
        assert!((k1 - 1.5).abs() < 1e-14);
        assert!((k1 - oracle(1.0)).abs() < 1e-6, "{} vs {}", k1, oracle(1.0));
        let k2 = cell_pair_average(0.25, 0.5, 0.25, 0.5);
        assert!((k2 - (1.5 - 0.5f64.ln())).abs() < 1e-14);
        assert!((k2 - 2.193_147_180_559_945).abs() < 1e-12);
        assert!((k2 - oracle(0.5)).abs() < 1e-6);
    }

    #[test]
    fn far_pair_is_close_to_point_interaction() {
        let k = cell_pair_average(0.0, 0.01, 10.0, 0.01);
        assert!((k + 10f64.ln()).abs() <= 1e-5);
        // Both branches agree at the switch-over distance.
        let d = FAR_RATIO * 0.01 * 1.0001;
        let series = cell_pair_average(0.0, 0.01, d, 0.01);
        let (a1, b1, a2, b2) = (-0.005, 0.005, d - 0.005, d + 0.005);
        let closed =
            (corner(b1 - a2) - corner(a1 - a2) - corner(b1 - b2) + corner(a1 - b2)) / 1e-4;
        assert!((series - closed).abs() < 1e-9, "{series} vs {closed}");
    }

    #[test]
    fn unequal_widths_match_quadrature() {
        let (ci, hi, cj, hj) = (0.1, 0.2, 0.45, 0.3);
        let inner = |x: f64| line_oracle(x, cj - 0.5 * hj, cj + 0.5 * hj);
        let oracle = gauss(&inner, ci - 0.5 * hi, ci + 0.5 * hi, 64) / (hi * hj);
        let k = cell_pair_average(ci, hi, cj, hj);
        assert!((k - oracle).abs() < 1e-9, "{k} vs {oracle}");
        let far = cell_pair_average(0.0, 0.2, 3.0, 0.05);
        let inner = |x: f64| line_oracle(x, 2.975, 3.025);
        let oracle = gauss(&inner, -0.1, 0.1, 64) / (0.2 * 0.05);
        assert!((far - oracle).abs() < 1e-10, "{far} vs {oracle}");
        // 30-digit reference value.
        assert!((far + 1.098_415_454_531_353).abs() < 1e-14);
    }

    #[test]
    fn symmetric_and_diagonal_exact() {
        let g = Grid::new(
            &[Interval::new(-2.0, -0.5), Interval::new(0.5, 2.0)],
            crate::grid::Resolution::Total(97),
        )
        .unwrap();
        let k = LogKernelOperator::assemble(&g);
        for i in 0..g.len() {
            let h = g.widths()[i];
            assert!((k.entry(i, i) - (1.5 - h.ln())).abs() <= 1e-12);
            for j in 0..g.len() {
                assert_eq!(k.entry(i, j).to_bits(), k.entry(j, i).to_bits());
            }
        }
    }

    #[test]
    fn uniform_density_energy_on_symmetric_interval() {
        // ∬_{[-1,1]²} -log|x-y| dx dy / 4 = 3/2 - log 2 for the uniform law.
        let g = Grid::uniform(Interval::new(-1.0, 1.0), 64).unwrap();
        let k = LogKernelOperator::assemble(&g);
        let psi = vec![0.5; 64];
        let v = vec![0.0; 64];
        let e = energy(&k, &v, &psi).unwrap();
        assert!((e - (1.5 - 2f64.ln())).abs() < 1e-12, "{e}");
        assert_eq!(energy(&k, &v, &vec![0.0; 64]).unwrap(), 0.0);
        let c = 0.7;
        let e_c = energy(&k, &vec![c; 64], &psi).unwrap();
        assert!((e_c - (e + 2.0 * c)).abs() < 1e-12);
        assert!(matches!(
            energy(&k, &v, &vec![-0.1; 64]),
            Err(EqmError::Domain(_))
        ));
    }

    #[test]
    fn potential_of_uniform_density() {
        let g = Grid::uniform(Interval::new(-1.0, 1.0), 40).unwrap();
        let psi = vec![0.5; 40];
        let u = potential_on_line(&g, &psi, &[0.0, 0.013, -0.013]).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-13);
        assert!((u[1] - u[2]).abs() < 1e-13);
        let oracle = 0.5 * line_oracle(0.013, -1.0, 1.0);
        assert!((u[1] - oracle).abs() < 1e-10);
        let far = potential_on_line(&g, &psi, &[1e6]).unwrap()[0];
        let bound = 2e-6 * std::f64::consts::E;
        assert!((far + 1e6f64.ln()).abs() <= bound);
    }
}

//! Uniform cell decompositions of a union of disjoint closed intervals.

use serde::{Deserialize, Serialize};

use crate::error::{EqmError, Result};

/// Smallest number of cells accepted on any interval.
pub const MIN_CELLS_PER_INTERVAL: usize = 2;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn symmetric(radius: f64) -> Self {
        Self::new(-radius, radius)
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let (a, b) = (self.lo * factor, self.hi * factor);
        if a <= b {
            Self::new(a, b)
        } else {
            Self::new(b, a)
        }
    }
}

/// How many cells to put on each interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resolution {
    /// The same count on every interval.
    PerInterval(usize),
    /// A total count split proportionally to interval length.
    Total(usize),
    /// Cells per unit length, rounded up per interval.
    PerUnitLength(f64),
}

/// One interval of the grid together with its cell layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub interval: Interval,
    /// Index of the first cell of this block in the global numbering.
    pub start: usize,
    pub cells: usize,
    pub width: f64,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.cells
    }
}

/// Piecewise-uniform grid on a union of disjoint intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    blocks: Vec<Block>,
    midpoints: Vec<f64>,
    widths: Vec<f64>,
    block_of: Vec<usize>,
}

impl Grid {
    /// Builds a grid, sorting the intervals by their left endpoint.
    pub fn new(intervals: &[Interval], resolution: Resolution) -> Result<Self> {
        if intervals.is_empty() {
            return Err(EqmError::Domain("no intervals supplied".into()));
        }
        let mut sorted = intervals.to_vec();
        for iv in &sorted {
            if !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(EqmError::Domain(format!(
                    "non-finite interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
            if iv.hi - iv.lo <= 0.0 {
                return Err(EqmError::Domain(format!(
                    "degenerate interval [{}, {}]",
                    iv.lo, iv.hi
                )));
            }
        }
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for pair in sorted.windows(2) {
            if pair[1].lo <= pair[0].hi {
                return Err(EqmError::Domain(format!(
                    "intervals [{}, {}] and [{}, {}] overlap",
                    pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi
                )));
            }
        }

        let total_len: f64 = sorted.iter().map(Interval::len).sum();
        let counts: Vec<usize> = match resolution {
            Resolution::PerInterval(n) => vec![n; sorted.len()],
            Resolution::Total(n) => {
                if sorted.len() == 1 {
                    vec![n]
                } else {
                    // Largest-remainder split so the counts add up to n.
                    let raw: Vec<f64> = sorted
                        .iter()
                        .map(|iv| n as f64 * iv.len() / total_len)
                        .collect();
                    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
                    let mut left = n.saturating_sub(counts.iter().sum());
                    let mut order: Vec<usize> = (0..raw.len()).collect();
                    order.sort_by(|&a, &b| {
                        let fa = raw[a] - raw[a].floor();
                        let fb = raw[b] - raw[b].floor();
                        fb.total_cmp(&fa).then(a.cmp(&b))
                    });
                    for &k in order.iter().cycle() {
                        if left == 0 {
                            break;
                        }
                        counts[k] += 1;
                        left -= 1;
                    }
                    counts
                }
            }
            Resolution::PerUnitLength(density) => {
                if !(density > 0.0) || !density.is_finite() {
                    return Err(EqmError::Config(format!(
                        "cells per unit length must be positive, got {density}"
                    )));
                }
                sorted
                    .iter()
                    .map(|iv| (iv.len() * density).ceil() as usize)
                    .collect()
            }
        };
        if let Some((k, &c)) = counts
            .iter()
            .enumerate()
            .find(|(_, &c)| c < MIN_CELLS_PER_INTERVAL)
        {
            return Err(EqmError::Config(format!(
                "interval {k} would get {c} cells, need at least {MIN_CELLS_PER_INTERVAL}"
            )));
        }

        Self::with_counts(&sorted, &counts)
    }

    /// Single-interval grid with `n` cells.
    pub fn uniform(interval: Interval, n: usize) -> Result<Self> {
        Self::new(&[interval], Resolution::PerInterval(n))
    }

    pub fn len(&self) -> usize {
        self.midpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.midpoints.is_empty()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.blocks.iter().map(|b| b.interval).collect()
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn block_of(&self, cell: usize) -> usize {
        self.block_of[cell]
    }

    /// Left and right edge of a cell.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        let half = 0.5 * self.widths[cell];
        (self.midpoints[cell] - half, self.midpoints[cell] + half)
    }

    pub fn total_length(&self) -> f64 {
        self.blocks.iter().map(|b| b.interval.len()).sum()
    }

    pub fn max_width(&self) -> f64 {
        self.widths.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_width(&self) -> f64 {
        self.widths.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Smallest interval containing every block.
    pub fn hull(&self) -> Interval {
        Interval::new(
            self.blocks[0].interval.lo,
            self.blocks[self.blocks.len() - 1].interval.hi,
        )
    }

    /// The same cell layout with every coordinate multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(EqmError::Config(format!(
                "grid scale factor must be positive, got {factor}"
            )));
        }
        let intervals: Vec<Interval> = self.blocks.iter().map(|b| b.interval.scaled(factor)).collect();
        let counts: Vec<usize> = self.blocks.iter().map(|b| b.cells).collect();
        Self::with_counts(&intervals, &counts)
    }

    fn with_counts(intervals: &[Interval], counts: &[usize]) -> Result<Self> {
        let mut blocks = Vec::new();
        let mut midpoints = Vec::new();
        let mut widths = Vec::new();
        let mut block_of = Vec::new();
        for (b, (iv, &n)) in intervals.iter().zip(counts).enumerate() {
            let width = iv.len() / n as f64;
            blocks.push(Block {
                interval: *iv,
                start: midpoints.len(),
                cells: n,
                width,
            });
            for i in 0..n {
                midpoints.push(iv.lo + (i as f64 + 0.5) * width);
                widths.push(width);
                block_of.push(b);
            }
        }
        Ok(Self {
            blocks,
            midpoints,
            widths,
            block_of,
        })
    }

    /// h-weighted total of a density, per block.
    pub fn block_masses(&self, psi: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| b.range().map(|i| psi[i] * self.widths[i]).sum())
            .collect()
    }

    pub fn mass(&self, psi: &[f64]) -> f64 {
        psi.iter().zip(&self.widths).map(|(p, h)| p * h).sum()
    }

    /// Locates the cell containing `x`, if any.
    pub fn locate(&self, x: f64) -> Option<usize> {
        let block = self.blocks.iter().find(|b| b.interval.contains(x))?;
        let k = ((x - block.interval.lo) / block.width).floor() as isize;
        let k = k.clamp(0, block.cells as isize - 1) as usize;
        Some(block.start + k)
    }

    /// Linear interpolation of cell values between midpoints. Values outside
    /// the blocks are zero; inside a block but beyond the outermost midpoints
    /// the nearest cell value is used.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let Some(block) = self.blocks.iter().find(|b| b.interval.contains(x)) else {
            return 0.0;
        };
        let t = (x - block.interval.lo) / block.width - 0.5;
        if t <= 0.0 {
            return values[block.start];
        }
        let last = block.cells - 1;
        if t >= last as f64 {
            return values[block.start + last];
        }
        let k = t.floor() as usize;
        let frac = t - k as f64;
        values[block.start + k] * (1.0 - frac) + values[block.start + k + 1] * frac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_cells_on_symmetric_interval() {
        let g = Grid::uniform(Interval::new(-1.0, 1.0), 4).unwrap();
        assert_eq!(g.midpoints(), &[-0.75, -0.25, 0.25, 0.75]);
        assert!(g.widths().iter().all(|&h| h == 0.5));
    }

    #[test]
    fn two_intervals_two_cells_each() {
        let g = Grid::new(
            &[Interval::new(1.0, 2.0), Interval::new(-2.0, -1.0)],
            Resolution::PerInterval(2),
        )
        .unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.widths().iter().all(|&h| h == 0.5));
        assert_eq!(g.midpoints(), &[-1.75, -1.25, 1.25, 1.75]);
        assert_eq!(g.block_of(2), 1);
    }

    #[test]
    fn overlap_is_rejected() {
        let err = Grid::new(
            &[Interval::new(0.0, 1.0), Interval::new(0.5, 2.0)],
            Resolution::PerInterval(16),
        )
        .unwrap_err();
        assert!(matches!(err, EqmError::Domain(_)));
    }

    #[test]
    fn degenerate_and_tiny_counts_are_rejected() {
        assert!(matches!(
            Grid::uniform(Interval::new(1.0, 1.0), 10),
            Err(EqmError::Domain(_))
        ));
        assert!(matches!(
            Grid::uniform(Interval::new(0.0, 1.0), 1),
            Err(EqmError::Config(_))
        ));
        assert!(matches!(Grid::new(&[], Resolution::Total(10)), Err(EqmError::Domain(_))));
    }

    #[test]
    fn total_split_adds_up() {
        let g = Grid::new(
            &[Interval::new(-2.0, -0.5), Interval::new(0.5, 2.0), Interval::new(3.0, 3.7)],
            Resolution::Total(101),
        )
        .unwrap();
        assert_eq!(g.len(), 101);
        let sum: f64 = g.widths().iter().sum();
        assert!((sum - g.total_length()).abs() < 1e-12);
        assert!(g.midpoints().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn interpolation_and_locate() {
        let g = Grid::uniform(Interval::new(0.0, 1.0), 4).unwrap();
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(g.interpolate(&v, 0.375 + 0.125), 1.5);
        assert_eq!(g.interpolate(&v, 0.01), 0.0);
        assert_eq!(g.interpolate(&v, 2.0), 0.0);
        assert_eq!(g.locate(0.3), Some(1));
        assert_eq!(g.locate(1.0), Some(3));
        assert_eq!(g.locate(1.5), None);
    }
}

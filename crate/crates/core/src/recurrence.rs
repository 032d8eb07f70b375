//! Recurrence plots and joint recurrence plots as packed bit matrices.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedTrajectory;
use crate::error::{Error, Result};

/// Vector norm used for state-space distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L1,
    L2,
    Linf,
}

impl Norm {
    #[inline]
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diffs = a.iter().zip(b).map(|(x, y)| (x - y).abs());
        match self {
            Norm::L1 => diffs.sum(),
            Norm::L2 => diffs.map(|d| d * d).sum::<f64>().sqrt(),
            Norm::Linf => diffs.fold(0.0, f64::max),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    Rp,
    Jrp,
}

/// Condensed upper triangle (`i < j`, row-major) of all pairwise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    condensed: Vec<f64>,
    norm: Norm,
}

impl DistanceMatrix {
    pub fn new(trajectory: &EmbeddedTrajectory, norm: Norm) -> Self {
        let n = trajectory.len();
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            let xi = trajectory.state(i);
            for j in i + 1..n {
                condensed.push(norm.distance(xi, trajectory.state(j)));
            }
        }
        DistanceMatrix { n, condensed, norm }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    /// Off-diagonal distances, each unordered pair once.
    pub fn values(&self) -> &[f64] {
        &self.condensed
    }
}

/// Smallest epsilon such that at least `target_rr` of the pooled off-diagonal
/// distances are `<= epsilon`.
pub fn threshold_for_rate_pooled(distances: &[&DistanceMatrix], target_rr: f64) -> Result<f64> {
    if !(target_rr > 0.0 && target_rr <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target recurrence rate must be in (0, 1), got {target_rr}"
        )));
    }
    let mut pooled: Vec<f64> = distances
        .iter()
        .flat_map(|d| d.condensed.iter().copied())
        .collect();
    if pooled.is_empty() {
        return Err(Error::InvalidParameter("no state pairs to threshold".into()));
    }
    if pooled.iter().any(|d| !d.is_finite()) {
        return Err(Error::Degenerate("non-finite state-space distance".into()));
    }
    let max = pooled.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return Err(Error::Degenerate(
            "all pairwise distances are zero (constant trajectory)".into(),
        ));
    }
    let m = pooled.len();
    let k = ((target_rr * m as f64).ceil() as usize).clamp(1, m);
    let (_, eps, _) = pooled.select_nth_unstable_by(k - 1, f64::total_cmp);
    // A zero quantile still has to be a positive radius; the smallest
    // positive float keeps exactly the coincident pairs.
    Ok(if *eps > 0.0 { *eps } else { f64::MIN_POSITIVE })
}

/// Per-trajectory threshold hitting a fixed recurrence rate.
pub fn threshold_for_rate(
    trajectory: &EmbeddedTrajectory,
    target_rr: f64,
    norm: Norm,
) -> Result<f64> {
    threshold_for_rate_pooled(&[&DistanceMatrix::new(trajectory, norm)], target_rr)
}

/// Square binary matrix stored as packed rows of 64-bit words.
#[derive(Clone, PartialEq)]
pub struct RecurrenceMatrix {
    n: usize,
    words_per_row: usize,
    bits: Vec<u64>,
    /// One threshold for an RP; the parents' thresholds for a JRP.
    pub epsilons: Vec<f64>,
    pub norm: Norm,
    pub kind: MatrixKind,
}

impl fmt::Debug for RecurrenceMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RecurrenceMatrix {:?} n={} eps={:?}", self.kind, self.n, self.epsilons)?;
        for i in 0..self.n.min(32) {
            let row: String = (0..self.n.min(64))
                .map(|j| if self.get(i, j) { '1' } else { '.' })
                .collect();
            writeln!(f, "  {row}")?;
        }
        Ok(())
    }
}

impl RecurrenceMatrix {
    pub(crate) fn zeros(n: usize, kind: MatrixKind, norm: Norm) -> Self {
        let words_per_row = n.div_ceil(64);
        RecurrenceMatrix {
            n,
            words_per_row,
            bits: vec![0; n * words_per_row],
            epsilons: Vec::new(),
            norm,
            kind,
        }
    }

    /// Builds a matrix from a predicate; no symmetry or diagonal is imposed.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::zeros(n, MatrixKind::Rp, Norm::L1);
        for i in 0..n {
            for j in 0..n {
                if f(i, j) {
                    m.set(i, j);
                }
            }
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        debug_assert!(i < self.n && j < self.n);
        (self.bits[i * self.words_per_row + j / 64] >> (j % 64)) & 1 == 1
    }

    #[inline]
    pub(crate) fn set(&mut self, i: usize, j: usize) {
        self.bits[i * self.words_per_row + j / 64] |= 1 << (j % 64);
    }

    pub(crate) fn row_words(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Column indices of the set bits in row `i`, ascending.
    pub fn row_ones(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row_words(i).iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                (word != 0).then(|| {
                    let b = word.trailing_zeros() as usize;
                    word &= word - 1;
                    w * 64 + b
                })
            })
        })
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn count_diagonal(&self) -> usize {
        (0..self.n).filter(|&i| self.get(i, i)).count()
    }

    /// Set bits excluding the main diagonal.
    pub fn count_off_diagonal(&self) -> usize {
        self.count_ones() - self.count_diagonal()
    }

    /// Off-diagonal density: off-diagonal ones over `n^2 - n`.
    pub fn recurrence_rate(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.count_off_diagonal() as f64 / (self.n * self.n - self.n) as f64
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| self.row_ones(i).all(|j| self.get(j, i)))
    }

    pub fn has_unit_diagonal(&self) -> bool {
        self.count_diagonal() == self.n
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n, self.kind, self.norm);
        t.epsilons = self.epsilons.clone();
        for i in 0..self.n {
            for j in self.row_ones(i) {
                t.set(j, i);
            }
        }
        t
    }

    /// Top-left `n x n` block.
    pub fn crop(&self, n: usize) -> Self {
        assert!(n <= self.n, "cannot crop {} to {n}", self.n);
        let mut out = Self::zeros(n, self.kind, self.norm);
        out.epsilons = self.epsilons.clone();
        let wpr = out.words_per_row;
        for i in 0..n {
            out.bits[i * wpr..(i + 1) * wpr].copy_from_slice(&self.row_words(i)[..wpr]);
        }
        out.mask_tail();
        out
    }

    fn mask_tail(&mut self) {
        let rem = self.n % 64;
        if rem != 0 {
            let mask = (1u64 << rem) - 1;
            for i in 0..self.n {
                self.bits[i * self.words_per_row + self.words_per_row - 1] &= mask;
            }
        }
    }

    /// Every set bit of `self` is also set in `other` (same size required).
    pub fn is_subset_of(&self, other: &RecurrenceMatrix) -> bool {
        self.n == other.n && self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b == 0)
    }

    /// Plain PBM (P1) rendering; row 0 at the top.
    pub fn write_pbm(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "P1")?;
        writeln!(out, "{} {}", self.n, self.n)?;
        for i in 0..self.n {
            let row: Vec<&str> = (0..self.n)
                .map(|j| if self.get(i, j) { "1" } else { "0" })
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

/// Thresholds a precomputed distance matrix: `R[i][j] = 1` iff `d <= epsilon`.
pub fn recurrence_plot_from_distances(distances: &DistanceMatrix, epsilon: f64) -> RecurrenceMatrix {
    let n = distances.n;
    let mut m = RecurrenceMatrix::zeros(n, MatrixKind::Rp, distances.norm);
    m.epsilons = vec![epsilon];
    let mut k = 0;
    for i in 0..n {
        m.set(i, i);
        for j in i + 1..n {
            if distances.condensed[k] <= epsilon {
                m.set(i, j);
                m.set(j, i);
            }
            k += 1;
        }
    }
    m
}

pub fn recurrence_plot(
    trajectory: &EmbeddedTrajectory,
    epsilon: f64,
    norm: Norm,
) -> Result<RecurrenceMatrix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "recurrence threshold must be positive, got {epsilon}"
        )));
    }
    Ok(recurrence_plot_from_distances(
        &DistanceMatrix::new(trajectory, norm),
        epsilon,
    ))
}

/// Elementwise AND of two recurrence matrices after cropping both to their
/// common top-left block.
pub fn joint_recurrence_plot(a: &RecurrenceMatrix, b: &RecurrenceMatrix) -> RecurrenceMatrix {
    let n = a.n.min(b.n);
    let mut out = RecurrenceMatrix::zeros(n, MatrixKind::Jrp, a.norm);
    out.epsilons = a.epsilons.iter().chain(&b.epsilons).copied().collect();
    let wpr = out.words_per_row;
    for i in 0..n {
        let (ra, rb) = (a.row_words(i), b.row_words(i));
        for w in 0..wpr {
            out.bits[i * wpr + w] = ra[w] & rb[w];
        }
    }
    out.mask_tail();
    out
}

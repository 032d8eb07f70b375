//! Determinism and laminarity of recurrence and joint recurrence plots.
//!
//! Both are point fractions: recurrence points lying on diagonal (vertical)
//! lines of at least `l_min` (`v_min`) points, over all recurrence points.
//! The main diagonal is excluded from numerator and denominator, and a
//! diagonal cell interrupts vertical runs. Lines cut by the matrix border
//! count at their truncated length.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::RecurrenceMatrix;

/// Histograms of maximal diagonal and vertical line lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct LineStats {
    /// `diagonal[l]` is the number of diagonal lines of length `l`.
    pub diagonal: Vec<usize>,
    pub vertical: Vec<usize>,
    /// Off-diagonal recurrence points.
    pub points: usize,
}

impl LineStats {
    pub fn new(m: &RecurrenceMatrix) -> Self {
        let n = m.size();
        let mut diagonal = vec![0usize; n + 1];
        let mut vertical = vec![0usize; n + 1];
        let mut points = 0;
        for i in 0..n {
            for j in m.row_ones(i) {
                if i == j {
                    continue;
                }
                points += 1;
                if i == 0 || j == 0 || !m.get(i - 1, j - 1) {
                    let mut len = 1;
                    while i + len < n && j + len < n && m.get(i + len, j + len) {
                        len += 1;
                    }
                    diagonal[len] += 1;
                }
                if i == 0 || i - 1 == j || !m.get(i - 1, j) {
                    let mut len = 1;
                    while i + len < n && i + len != j && m.get(i + len, j) {
                        len += 1;
                    }
                    vertical[len] += 1;
                }
            }
        }
        LineStats {
            diagonal,
            vertical,
            points,
        }
    }

    fn points_on(hist: &[usize], min_len: usize) -> (usize, usize) {
        hist.iter()
            .enumerate()
            .skip(min_len)
            .fold((0, 0), |(pts, lines), (len, &c)| (pts + len * c, lines + c))
    }

    pub fn determinism(&self, l_min: usize) -> f64 {
        self.fraction(&self.diagonal, l_min)
    }

    pub fn laminarity(&self, v_min: usize) -> f64 {
        self.fraction(&self.vertical, v_min)
    }

    fn fraction(&self, hist: &[usize], min_len: usize) -> f64 {
        if self.points == 0 {
            return 0.0;
        }
        Self::points_on(hist, min_len).0 as f64 / self.points as f64
    }

    /// Mean length of diagonal lines with at least `l_min` points (0 if none).
    pub fn mean_diagonal_length(&self, l_min: usize) -> f64 {
        Self::mean(&self.diagonal, l_min)
    }

    /// Mean length of vertical lines with at least `v_min` points (trapping time).
    pub fn mean_vertical_length(&self, v_min: usize) -> f64 {
        Self::mean(&self.vertical, v_min)
    }

    fn mean(hist: &[usize], min_len: usize) -> f64 {
        let (pts, lines) = Self::points_on(hist, min_len);
        if lines == 0 {
            0.0
        } else {
            pts as f64 / lines as f64
        }
    }
}

fn check_min_len(name: &str, v: usize) -> Result<()> {
    if v < 2 {
        return Err(Error::InvalidParameter(format!("{name} must be at least 2, got {v}")));
    }
    Ok(())
}

/// Fraction of off-diagonal recurrence points on diagonal lines of length `>= l_min`.
pub fn determinism(matrix: &RecurrenceMatrix, l_min: usize) -> Result<f64> {
    check_min_len("l_min", l_min)?;
    Ok(LineStats::new(matrix).determinism(l_min))
}

/// Fraction of off-diagonal recurrence points on vertical lines of length `>= v_min`.
pub fn laminarity(matrix: &RecurrenceMatrix, v_min: usize) -> Result<f64> {
    check_min_len("v_min", v_min)?;
    Ok(LineStats::new(matrix).laminarity(v_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RqaSummary {
    pub det: f64,
    pub lam: f64,
    pub recurrence_rate: f64,
    pub l_min: usize,
    pub v_min: usize,
    /// Average qualifying diagonal line length.
    pub mean_diagonal_length: f64,
    /// Average qualifying vertical line length.
    pub mean_vertical_length: f64,
}

pub fn summarize(matrix: &RecurrenceMatrix, l_min: usize, v_min: usize) -> Result<RqaSummary> {
    check_min_len("l_min", l_min)?;
    check_min_len("v_min", v_min)?;
    let stats = LineStats::new(matrix);
    Ok(RqaSummary {
        det: stats.determinism(l_min),
        lam: stats.laminarity(v_min),
        recurrence_rate: matrix.recurrence_rate(),
        l_min,
        v_min,
        mean_diagonal_length: stats.mean_diagonal_length(l_min),
        mean_vertical_length: stats.mean_vertical_length(v_min),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_points(n: usize, pts: &[(usize, usize)]) -> RecurrenceMatrix {
        // 1-based coordinates, identity always set
        RecurrenceMatrix::from_fn(n, |i, j| i == j || pts.contains(&(i + 1, j + 1)))
    }

    #[test]
    fn hand_case_det() {
        // one length-3 diagonal line, its mirror, one isolated point per triangle
        let m = from_points(
            6,
            &[(1, 3), (2, 4), (3, 5), (3, 1), (4, 2), (5, 3), (1, 6), (6, 1)],
        );
        assert_eq!(determinism(&m, 3).unwrap(), 0.75);
    }

    #[test]
    fn hand_case_lam() {
        let m = from_points(5, &[(1, 4), (2, 4), (3, 4), (4, 1), (4, 2), (4, 3)]);
        assert_eq!(laminarity(&m, 3).unwrap(), 0.5);
    }

    #[test]
    fn isolated_points_only() {
        let m = from_points(6, &[(1, 4), (4, 1), (2, 6), (6, 2)]);
        assert_eq!(determinism(&m, 3).unwrap(), 0.0);
        assert_eq!(laminarity(&m, 3).unwrap(), 0.0);
    }

    #[test]
    fn identity_only() {
        let s = summarize(&from_points(8, &[]), 3, 3).unwrap();
        assert_eq!((s.det, s.lam, s.recurrence_rate), (0.0, 0.0, 0.0));
    }

    // The corner diagonals of length 1 and 2 cannot reach l_min = 3, and the
    // diagonal cut leaves runs of 1 and 2 at both ends of the columns, so a
    // full matrix scores (n^2 - n - 6) / (n^2 - n).
    #[test]
    fn all_ones() {
        let s = summarize(&RecurrenceMatrix::from_fn(10, |_, _| true), 3, 3).unwrap();
        assert_eq!(s.recurrence_rate, 1.0);
        assert_eq!(s.det, 84.0 / 90.0);
        assert_eq!(s.lam, 84.0 / 90.0);
        // with l_min = v_min = 2 only the two single-point corners drop out
        let s = summarize(&RecurrenceMatrix::from_fn(10, |_, _| true), 2, 2).unwrap();
        assert_eq!(s.det, 88.0 / 90.0);
    }

    #[test]
    fn min_len_validated() {
        let m = from_points(3, &[]);
        assert!(determinism(&m, 1).is_err());
        assert!(laminarity(&m, 0).is_err());
    }

    #[test]
    fn auxiliary_means() {
        let m = from_points(
            6,
            &[(1, 3), (2, 4), (3, 5), (3, 1), (4, 2), (5, 3), (1, 6), (6, 1)],
        );
        let s = summarize(&m, 3, 2).unwrap();
        assert_eq!(s.mean_diagonal_length, 3.0);
    }
}

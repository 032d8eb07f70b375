//! Delay-coordinate embedding and estimation of its parameters.
//!
//! The delay comes from the first local minimum of the average mutual
//! information (equal-width histogram); the dimension from the false nearest
//! neighbours test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::mean_std;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingParams {
    pub delay_tau: usize,
    pub dimension_m: usize,
}

impl EmbeddingParams {
    pub fn new(delay_tau: usize, dimension_m: usize) -> Result<Self> {
        if delay_tau == 0 || dimension_m == 0 {
            return Err(Error::InvalidParameter(format!(
                "embedding needs tau >= 1 and m >= 1, got tau={delay_tau}, m={dimension_m}"
            )));
        }
        Ok(EmbeddingParams {
            delay_tau,
            dimension_m,
        })
    }

    /// Number of samples consumed beyond the first state.
    pub fn span(&self) -> usize {
        (self.dimension_m - 1) * self.delay_tau
    }

    /// States produced from `len` samples, if at least two.
    pub fn state_count(&self, len: usize) -> Option<usize> {
        len.checked_sub(self.span()).filter(|&n| n >= 2)
    }
}

/// Estimator settings. Defaults: 16 AMI bins, `tau_max = len / 4`,
/// `m_max = 10`, FNN fraction threshold 5 %, `Rtol = 10`, `Atol = 2`, at
/// most 1000 FNN query states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub ami_bins: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_max: Option<usize>,
    pub m_max: usize,
    pub fnn_threshold: f64,
    pub fnn_rtol: f64,
    pub fnn_atol: f64,
    /// FNN fractions are taken over at most this many evenly spaced states;
    /// neighbours are still searched among all states.
    pub fnn_max_queries: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            ami_bins: 16,
            tau_max: None,
            m_max: 10,
            fnn_threshold: 0.05,
            fnn_rtol: 10.0,
            fnn_atol: 2.0,
            fnn_max_queries: 1000,
        }
    }
}

/// Row-major `N x m` matrix of delay vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedTrajectory {
    data: Vec<f64>,
    dim: usize,
    pub source_channel: String,
    pub params: EmbeddingParams,
}

impl EmbeddedTrajectory {
    /// Wraps pre-built state vectors (each of length `dim`).
    pub fn from_states(states: &[Vec<f64>], source_channel: impl Into<String>) -> Result<Self> {
        let dim = states.first().map_or(0, Vec::len);
        if states.len() < 2 || dim == 0 || states.iter().any(|s| s.len() != dim) {
            return Err(Error::InvalidParameter(
                "trajectory needs at least two states of equal, nonzero dimension".into(),
            ));
        }
        Ok(EmbeddedTrajectory {
            data: states.concat(),
            dim,
            source_channel: source_channel.into(),
            params: EmbeddingParams {
                delay_tau: 1,
                dimension_m: dim,
            },
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Builds delay vectors `(s_i, s_{i+tau}, ..., s_{i+(m-1)tau})`.
pub fn embed(
    samples: &[f64],
    params: EmbeddingParams,
    source_channel: impl Into<String>,
) -> Result<EmbeddedTrajectory> {
    let n = params.state_count(samples.len()).ok_or_else(|| {
        Error::InvalidParameter(format!(
            "{} samples cannot be embedded with m={}, tau={} (need more than {})",
            samples.len(),
            params.dimension_m,
            params.delay_tau,
            params.span() + 1
        ))
    })?;
    let (m, tau) = (params.dimension_m, params.delay_tau);
    let mut data = Vec::with_capacity(n * m);
    for i in 0..n {
        data.extend((0..m).map(|k| samples[i + k * tau]));
    }
    Ok(EmbeddedTrajectory {
        data,
        dim: m,
        source_channel: source_channel.into(),
        params,
    })
}

struct Binned {
    idx: Vec<usize>,
    bins: usize,
}

fn bin_series(samples: &[f64], bins: usize) -> Option<Binned> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return None;
    }
    let idx = samples
        .iter()
        .map(|&v| (((v - lo) / range * bins as f64) as usize).min(bins - 1))
        .collect();
    Some(Binned { idx, bins })
}

/// Plug-in mutual information (nats) between the binned series and itself
/// shifted by `lag`, together with the occupied marginal bin counts.
fn lagged_mi(b: &Binned, lag: usize) -> (f64, usize, usize) {
    let n = b.idx.len() - lag;
    let k = b.bins;
    let mut joint = vec![0usize; k * k];
    let mut pa = vec![0usize; k];
    let mut pb = vec![0usize; k];
    for t in 0..n {
        let (a, c) = (b.idx[t], b.idx[t + lag]);
        joint[a * k + c] += 1;
        pa[a] += 1;
        pb[c] += 1;
    }
    let nf = n as f64;
    let mut mi = 0.0;
    for a in 0..k {
        for c in 0..k {
            let j = joint[a * k + c];
            if j > 0 {
                let pj = j as f64 / nf;
                mi += pj * (pj / ((pa[a] as f64 / nf) * (pb[c] as f64 / nf))).ln();
            }
        }
    }
    let occupied = |p: &[usize]| p.iter().filter(|&&c| c > 0).count();
    (mi, occupied(&pa), occupied(&pb))
}

/// Average mutual information for lags `1..=tau_max` (index 0 holds lag 1).
pub fn ami_curve(samples: &[f64], bins: usize, tau_max: usize) -> Result<Vec<f64>> {
    let b = bin_series(samples, bins)
        .ok_or_else(|| Error::Degenerate("constant signal has no mutual information".into()))?;
    Ok((1..=tau_max.min(samples.len() - 1))
        .map(|lag| lagged_mi(&b, lag).0)
        .collect())
}

/// Estimates the embedding delay.
///
/// Lag 1 is returned outright when the lag-1 AMI does not rise above twice
/// the plug-in bias of independent variables, `(Kx-1)(Ky-1)/(2n)`. Otherwise
/// the first strict local minimum of the AMI curve is used, then the first
/// lag where AMI falls below `AMI(1)/e`, then 1. Minima at or below the same
/// twice-bias floor are estimator noise and are skipped.
pub fn estimate_delay(samples: &[f64], cfg: &EmbeddingConfig) -> Result<usize> {
    if samples.len() < 64 {
        return Err(Error::InvalidParameter(format!(
            "delay estimation needs at least 64 samples, got {}",
            samples.len()
        )));
    }
    let b = bin_series(samples, cfg.ami_bins)
        .ok_or_else(|| Error::Degenerate("cannot estimate delay of a constant signal".into()))?;
    let tau_max = cfg.tau_max.unwrap_or(samples.len() / 4).clamp(2, samples.len() - 2);

    let (mi1, kx, ky) = lagged_mi(&b, 1);
    let bias = (kx.saturating_sub(1) * ky.saturating_sub(1)) as f64
        / (2.0 * (samples.len() - 1) as f64);
    let noise_floor = 2.0 * bias;
    if mi1 < noise_floor {
        return Ok(1);
    }

    let mut ami = Vec::with_capacity(tau_max);
    ami.push(mi1);
    ami.extend((2..=tau_max).map(|lag| lagged_mi(&b, lag).0));
    // ami[i] holds lag i + 1
    for i in 1..ami.len().saturating_sub(1) {
        if ami[i] < ami[i - 1] && ami[i] <= ami[i + 1] && ami[i] > noise_floor {
            return Ok(i + 1);
        }
    }
    let floor = mi1 / std::f64::consts::E;
    Ok(ami.iter().position(|&v| v < floor).map_or(1, |i| i + 1))
}

/// Outcome of the false nearest neighbours search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub dimension_m: usize,
    /// True when no dimension up to `m_max` got below the threshold.
    pub saturated: bool,
    /// FNN fraction for `m = 1, 2, ...` up to the one returned.
    pub fnn_fractions: Vec<f64>,
}

/// Fraction of false nearest neighbours when going from `m` to `m + 1`.
pub fn fnn_fraction(samples: &[f64], tau: usize, m: usize, rtol: f64, atol: f64) -> Result<f64> {
    fnn_fraction_sampled(samples, tau, m, rtol, atol, usize::MAX)
}

/// [`fnn_fraction`] over at most `max_queries` evenly spaced query states.
pub fn fnn_fraction_sampled(
    samples: &[f64],
    tau: usize,
    m: usize,
    rtol: f64,
    atol: f64,
    max_queries: usize,
) -> Result<f64> {
    if max_queries == 0 {
        return Err(Error::InvalidParameter("FNN needs at least one query state".into()));
    }
    let n = samples
        .len()
        .checked_sub(m * tau)
        .filter(|&n| n >= 2)
        .ok_or_else(|| {
            Error::InvalidParameter(format!(
                "{} samples are too few for an FNN test at m={m}, tau={tau}",
                samples.len()
            ))
        })?;
    let (_, sd) = mean_std(samples);
    if !(sd > 0.0) {
        return Err(Error::Degenerate("constant signal has no embedding dimension".into()));
    }
    let floor = 1e-9 * sd;

    // Candidates sorted by the first coordinate, so the search can stop once
    // the first-coordinate gap alone exceeds the best distance.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]).then(a.cmp(&b)));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let dist2 = |i: usize, j: usize, best: f64| -> f64 {
        let mut d = 0.0;
        for k in 0..m {
            let diff = samples[i + k * tau] - samples[j + k * tau];
            d += diff * diff;
            if d > best {
                break;
            }
        }
        d
    };

    let queries = n.min(max_queries);
    let mut false_count = 0usize;
    for q in 0..queries {
        let i = q * n / queries;
        let r = rank[i];
        let mut best = f64::INFINITY;
        let mut best_j = usize::MAX;
        let consider = |j: usize, best: &mut f64, best_j: &mut usize| {
            let d = dist2(i, j, *best);
            if d < *best || (d == *best && j < *best_j) {
                *best = d;
                *best_j = j;
            }
        };
        let (mut lo, mut hi) = (r, r + 1);
        loop {
            let left = lo
                .checked_sub(1)
                .map(|l| (order[l], (samples[i] - samples[order[l]]).powi(2)));
            let right = (hi < n).then(|| (order[hi], (samples[order[hi]] - samples[i]).powi(2)));
            let left_ok = left.filter(|&(_, g)| g <= best);
            let right_ok = right.filter(|&(_, g)| g <= best);
            match (left_ok, right_ok) {
                (None, None) => break,
                (Some((j, _)), _) => {
                    consider(j, &mut best, &mut best_j);
                    lo -= 1;
                    if let Some((j, _)) = right_ok {
                        consider(j, &mut best, &mut best_j);
                        hi += 1;
                    }
                }
                (None, Some((j, _))) => {
                    consider(j, &mut best, &mut best_j);
                    hi += 1;
                }
            }
        }
        let r_m = best.sqrt();
        let next = (samples[i + m * tau] - samples[best_j + m * tau]).abs();
        let ratio_false = next / r_m.max(floor) > rtol;
        let spread_false = (r_m * r_m + next * next).sqrt() / sd > atol;
        if ratio_false || spread_false {
            false_count += 1;
        }
    }
    Ok(false_count as f64 / queries as f64)
}

/// Smallest `m` whose FNN fraction is below the threshold, or `m_max` flagged
/// as saturated.
pub fn estimate_dimension(
    samples: &[f64],
    tau: usize,
    cfg: &EmbeddingConfig,
) -> Result<DimensionEstimate> {
    if tau == 0 || cfg.m_max == 0 {
        return Err(Error::InvalidParameter("tau and m_max must be positive".into()));
    }
    if samples.len() < cfg.m_max * tau + 2 {
        return Err(Error::InvalidParameter(format!(
            "{} samples are too few for an m_max={} embedding with tau={tau}",
            samples.len(),
            cfg.m_max
        )));
    }
    let mut fractions = Vec::new();
    for m in 1..=cfg.m_max {
        let f = fnn_fraction_sampled(
            samples,
            tau,
            m,
            cfg.fnn_rtol,
            cfg.fnn_atol,
            cfg.fnn_max_queries,
        )?;
        fractions.push(f);
        if f < cfg.fnn_threshold {
            return Ok(DimensionEstimate {
                dimension_m: m,
                saturated: false,
                fnn_fractions: fractions,
            });
        }
    }
    Ok(DimensionEstimate {
        dimension_m: cfg.m_max,
        saturated: true,
        fnn_fractions: fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn sine(n: usize, period: f64) -> Vec<f64> {
        (0..n)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / period).sin())
            .collect()
    }

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn embed_unrolls_definition() {
        let t = embed(&[1.0, 2.0, 3.0, 4.0, 5.0], EmbeddingParams::new(1, 2).unwrap(), "x")
            .unwrap();
        let states: Vec<Vec<f64>> = t.states().map(<[f64]>::to_vec).collect();
        assert_eq!(
            states,
            vec![vec![1.0, 2.0], vec![2.0, 3.0], vec![3.0, 4.0], vec![4.0, 5.0]]
        );
    }

    #[test]
    fn embed_identity_and_precondition() {
        let xs = [0.5, -1.0, 2.0];
        let t = embed(&xs, EmbeddingParams::new(3, 1).unwrap(), "x").unwrap();
        assert_eq!(t.states().flatten().copied().collect::<Vec<_>>(), xs.to_vec());
        let five = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert!(embed(&five, EmbeddingParams::new(2, 3).unwrap(), "x").is_err());
    }

    // Frozen from an independent numpy histogram-MI script (16 equal-width
    // bins, marginals from the joint). The AMI of an exact period-40 sine is
    // flat from lag 6 to ~14; the first strict minimum sits at lag 6.
    #[test]
    fn sine_delay_matches_histogram_oracle() {
        let cfg = EmbeddingConfig::default();
        assert_eq!(estimate_delay(&sine(1000, 40.0), &cfg).unwrap(), 6);
        assert_eq!(estimate_delay(&sine(640, 40.0), &cfg).unwrap(), 6);
    }

    #[test]
    fn ami_curve_matches_oracle_values() {
        // numpy oracle, lags 1..=6 of sin(2 pi t / 40), t < 1000
        let expected = [1.976, 1.840, 1.714, 1.600, 1.504, 1.433];
        let curve = ami_curve(&sine(1000, 40.0), 16, 6).unwrap();
        for (got, want) in curve.iter().zip(expected) {
            assert!((got - want).abs() < 5e-4, "{got} vs {want}");
        }
    }

    #[test]
    fn white_noise_delay_is_one() {
        let cfg = EmbeddingConfig::default();
        for seed in 0..20 {
            assert_eq!(estimate_delay(&noise(1000, seed), &cfg).unwrap(), 1, "seed {seed}");
        }
    }

    #[test]
    fn constant_signal_is_degenerate() {
        let cfg = EmbeddingConfig::default();
        assert!(matches!(
            estimate_delay(&[2.0; 100], &cfg),
            Err(Error::Degenerate(_))
        ));
        assert!(estimate_delay(&[1.0; 10], &cfg).is_err());
    }

    #[test]
    fn sine_unfolds_in_two_dimensions() {
        let cfg = EmbeddingConfig::default();
        for tau in [1, 6, 10] {
            let est = estimate_dimension(&sine(1000, 40.0), tau, &cfg).unwrap();
            assert_eq!(est.dimension_m, 2, "tau {tau}");
            assert!(!est.saturated);
        }
    }

    #[test]
    fn white_noise_saturates() {
        let cfg = EmbeddingConfig::default();
        for seed in 0..20 {
            let est = estimate_dimension(&noise(1000, seed), 1, &cfg).unwrap();
            assert_eq!(est.dimension_m, 10);
            assert!(est.saturated);
        }
    }

    #[test]
    fn too_short_for_m_max() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(estimate_dimension(&xs, 5, &EmbeddingConfig::default()).is_err());
    }

    // Brute-force nearest neighbour FNN, checked against the pruned search.
    fn fnn_brute(x: &[f64], tau: usize, m: usize, rtol: f64, atol: f64) -> f64 {
        let n = x.len() - m * tau;
        fnn_brute_at(x, tau, m, rtol, atol, &(0..n).collect::<Vec<_>>())
    }

    fn fnn_brute_at(x: &[f64], tau: usize, m: usize, rtol: f64, atol: f64, queries: &[usize]) -> f64 {
        let n = x.len() - m * tau;
        let (_, sd) = mean_std(x);
        let mut false_count = 0;
        for &i in queries {
            let mut best = (f64::INFINITY, 0);
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d: f64 = (0..m).map(|k| (x[i + k * tau] - x[j + k * tau]).powi(2)).sum();
                if d < best.0 {
                    best = (d, j);
                }
            }
            let r = best.0.sqrt();
            let next = (x[i + m * tau] - x[best.1 + m * tau]).abs();
            if next / r.max(1e-9 * sd) > rtol || (r * r + next * next).sqrt() / sd > atol {
                false_count += 1;
            }
        }
        false_count as f64 / queries.len() as f64
    }

    #[test]
    fn sampled_queries_equal_brute_force_on_the_sample() {
        let x = noise(900, 5);
        for (m, tau) in [(1, 1), (3, 2), (6, 1)] {
            let n = x.len() - m * tau;
            let queries: Vec<usize> = (0..100).map(|q| q * n / 100).collect();
            assert_eq!(
                fnn_fraction_sampled(&x, tau, m, 10.0, 2.0, 100).unwrap(),
                fnn_brute_at(&x, tau, m, 10.0, 2.0, &queries)
            );
        }
    }

    #[test]
    fn pruned_search_equals_brute_force() {
        let x = noise(400, 3);
        let s = sine(300, 17.3);
        for m in 1..5 {
            for tau in [1, 3] {
                assert_eq!(
                    fnn_fraction(&x, tau, m, 10.0, 2.0).unwrap(),
                    fnn_brute(&x, tau, m, 10.0, 2.0)
                );
                assert_eq!(
                    fnn_fraction(&s, tau, m, 10.0, 2.0).unwrap(),
                    fnn_brute(&s, tau, m, 10.0, 2.0)
                );
            }
        }
    }

    #[test]
    fn estimators_are_deterministic() {
        let cfg = EmbeddingConfig::default();
        let x = noise(800, 9);
        assert_eq!(estimate_delay(&x, &cfg).unwrap(), estimate_delay(&x, &cfg).unwrap());
        assert_eq!(
            estimate_dimension(&x, 2, &cfg).unwrap(),
            estimate_dimension(&x, 2, &cfg).unwrap()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn embed_count(xs in proptest::collection::vec(-10f64..10.0, 2..200),
                           m in 1usize..6, tau in 1usize..6) {
                let p = EmbeddingParams::new(tau, m).unwrap();
                match embed(&xs, p, "x") {
                    Ok(t) => prop_assert_eq!(t.len(), xs.len() - (m - 1) * tau),
                    Err(_) => prop_assert!(xs.len() < (m - 1) * tau + 2),
                }
            }
        }
    }
}

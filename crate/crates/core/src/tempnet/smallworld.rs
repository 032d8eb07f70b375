//! Temporal small-worldness against degree-preserving null networks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::correlation::temporal_correlation;
use super::paths::latencies_from;
use crate::error::{Error, Result};
use crate::netbuild::{Layer, TemporalNetwork};

/// Swap attempts per edge when rewiring a layer.
const SWAPS_PER_EDGE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWorldness {
    pub value: f64,
    /// Set when the ratio is undefined and `value` was forced to 0.
    pub degenerate: bool,
}

impl SmallWorldness {
    fn degenerate() -> Self {
        SmallWorldness {
            value: 0.0,
            degenerate: true,
        }
    }
}

/// Mean finite latency over ordered pairs `i != j`, if any pair is reachable.
pub fn mean_finite_latency(tn: &TemporalNetwork) -> Option<f64> {
    let n = tn.node_count();
    let (mut sum, mut count) = (0usize, 0usize);
    for i in 0..n {
        for (j, l) in latencies_from(tn, i).into_iter().enumerate() {
            if let (true, Some(l)) = (i != j, l) {
                sum += l;
                count += 1;
            }
        }
    }
    (count > 0).then(|| sum as f64 / count as f64)
}

/// Double-edge swaps that keep every node's degree and forbid self-loops and
/// multi-edges.
pub fn rewire_layer(layer: &Layer, rng: &mut impl Rng) -> Layer {
    let mut out = layer.clone();
    let mut edges = layer.edges();
    let m = edges.len();
    if m < 2 {
        return out;
    }
    for _ in 0..SWAPS_PER_EDGE * m {
        let e1 = rng.random_range(0..m);
        let e2 = rng.random_range(0..m);
        if e1 == e2 {
            continue;
        }
        let (a, b) = edges[e1];
        let (mut c, mut d) = edges[e2];
        if rng.random::<bool>() {
            std::mem::swap(&mut c, &mut d);
        }
        // (a,b),(c,d) -> (a,d),(c,b)
        if a == d || c == b || out.has_edge(a, d) || out.has_edge(c, b) {
            continue;
        }
        out.remove_edge(a, b);
        out.remove_edge(c, d);
        out.add_edge(a, d);
        out.add_edge(c, b);
        edges[e1] = (a.min(d), a.max(d));
        edges[e2] = (c.min(b), c.max(b));
    }
    out
}

/// One null realisation: every layer rewired independently.
pub fn null_network(tn: &TemporalNetwork, rng: &mut impl Rng) -> TemporalNetwork {
    TemporalNetwork {
        nodes: tn.nodes.clone(),
        layers: tn.layers.iter().map(|l| rewire_layer(l, rng)).collect(),
        binarize_rule: tn.binarize_rule,
    }
}

/// `S = (C / <C_null>) / (L / <L_null>)` with `C` the mean temporal
/// correlation and `L` the mean finite latency. Realisation `r` draws from
/// stream `r` of a ChaCha8 generator seeded with `seed`, so the result does
/// not depend on evaluation order.
pub fn temporal_small_worldness(
    tn: &TemporalNetwork,
    n_null: usize,
    seed: u64,
) -> Result<SmallWorldness> {
    if n_null == 0 {
        return Err(Error::InvalidParameter("n_null must be at least 1".into()));
    }
    let (_, c) = temporal_correlation(tn)?;
    let Some(l) = mean_finite_latency(tn) else {
        return Ok(SmallWorldness::degenerate());
    };

    let mut c_null = 0.0;
    let (mut l_null, mut l_count) = (0.0, 0usize);
    for r in 0..n_null {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let null = null_network(tn, &mut rng);
        c_null += temporal_correlation(&null)?.1;
        if let Some(lr) = mean_finite_latency(&null) {
            l_null += lr;
            l_count += 1;
        }
    }
    c_null /= n_null as f64;
    if l_count == 0 || c_null == 0.0 {
        return Ok(SmallWorldness::degenerate());
    }
    l_null /= l_count as f64;
    if l_null == 0.0 {
        return Ok(SmallWorldness::degenerate());
    }
    Ok(SmallWorldness {
        value: (c / c_null) / (l / l_null),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_tn(n: usize, t: usize, p: f64, seed: u64) -> TemporalNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = (0..t)
            .map(|_| {
                let mut l = Layer::empty(n);
                for i in 0..n {
                    for j in i + 1..n {
                        if rng.random::<f64>() < p {
                            l.add_edge(i, j);
                        }
                    }
                }
                l
            })
            .collect();
        TemporalNetwork::new((0..n).map(|i| i.to_string()).collect(), layers).unwrap()
    }

    #[test]
    fn rewiring_preserves_degrees() {
        let tn = random_tn(12, 5, 0.3, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let null = null_network(&tn, &mut rng);
        let mut changed = false;
        for (a, b) in tn.layers.iter().zip(&null.layers) {
            for i in 0..12 {
                assert_eq!(a.degree(i), b.degree(i));
                assert!(!b.has_edge(i, i));
            }
            changed |= a != b;
        }
        assert!(changed);
    }

    #[test]
    fn empty_network_is_degenerate() {
        let tn = random_tn(4, 3, 0.0, 0);
        let s = temporal_small_worldness(&tn, 5, 1).unwrap();
        assert!(s.degenerate && s.value == 0.0);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let tn = random_tn(8, 6, 0.3, 4);
        let a = temporal_small_worldness(&tn, 20, 77).unwrap();
        let b = temporal_small_worldness(&tn, 20, 77).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(temporal_small_worldness(&tn, 0, 77).is_err());
    }

    #[test]
    fn randomised_network_scores_near_one() {
        let mut total = 0.0;
        for seed in 0..20 {
            let base = random_tn(10, 8, 0.3, 100 + seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let randomised = null_network(&base, &mut rng);
            let s = temporal_small_worldness(&randomised, 20, 1000 + seed).unwrap();
            assert!(!s.degenerate);
            total += s.value;
        }
        let mean = total / 20.0;
        assert!((0.5..=2.0).contains(&mean), "{mean}");
    }
}

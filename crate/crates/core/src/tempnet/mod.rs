//! Temporal graph metrics and the per-trial feature vector.

mod correlation;
mod paths;
mod smallworld;

use serde::{Deserialize, Serialize};

pub use correlation::temporal_correlation;
pub use paths::{
    count_fastest_paths, efficiency_from, latencies_from, reachability_and_latency,
    temporal_efficiency, ReachabilityReport,
};
pub use smallworld::{
    mean_finite_latency, null_network, rewire_layer, temporal_small_worldness, SmallWorldness,
};

use crate::error::Result;
use crate::netbuild::TemporalNetwork;

/// Bumped whenever the feature order or meaning changes.
pub const FEATURE_SCHEMA_VERSION: u32 = 1;

/// Network-level feature names, in vector order. Per-node correlations follow
/// as `corr_<node>`.
pub const GLOBAL_FEATURES: [&str; 7] = [
    "efficiency",
    "mean_latency",
    "mean_fastest_paths",
    "temporal_correlation",
    "small_worldness",
    "frac_strong",
    "frac_weak",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalFeatures {
    pub efficiency: f64,
    /// Mean finite latency, 0 when nothing is reachable.
    pub mean_latency: f64,
    /// Mean fastest-path count over reachable ordered pairs, 0 if none.
    pub mean_fastest_paths: f64,
    pub temporal_correlation: f64,
    pub small_worldness: f64,
    pub small_worldness_degenerate: bool,
    pub frac_strong: f64,
    pub frac_weak: f64,
    pub per_node_correlation: Vec<f64>,
}

impl TemporalFeatures {
    pub fn names(nodes: &[String]) -> Vec<String> {
        GLOBAL_FEATURES
            .iter()
            .map(|s| s.to_string())
            .chain(nodes.iter().map(|n| format!("corr_{n}")))
            .collect()
    }

    pub fn values(&self) -> Vec<f64> {
        let mut v = vec![
            self.efficiency,
            self.mean_latency,
            self.mean_fastest_paths,
            self.temporal_correlation,
            self.small_worldness,
            self.frac_strong,
            self.frac_weak,
        ];
        v.extend_from_slice(&self.per_node_correlation);
        v
    }
}

/// Null-model settings for small-worldness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NullModel {
    pub n_null: usize,
    pub seed: u64,
}

/// Computes every temporal metric of a network.
pub fn feature_vector(
    tn: &TemporalNetwork,
    null: NullModel,
) -> Result<(TemporalFeatures, ReachabilityReport)> {
    let report = reachability_and_latency(tn)?;
    let n = tn.node_count();

    let reachable: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && report.latency[i][j].is_some())
        .collect();
    let (mean_latency, mean_fastest_paths) = if reachable.is_empty() {
        (0.0, 0.0)
    } else {
        let k = reachable.len() as f64;
        let lat: usize = reachable.iter().map(|&(i, j)| report.latency[i][j].unwrap()).sum();
        let paths: f64 = reachable
            .iter()
            .map(|&(i, j)| report.fastest_path_counts[i][j] as f64)
            .sum();
        (lat as f64 / k, paths / k)
    };

    let (per_node_correlation, temporal_correlation) = correlation::temporal_correlation(tn)?;
    let sw = temporal_small_worldness(tn, null.n_null, null.seed)?;
    let pairs = (n * n.saturating_sub(1) / 2) as f64;
    let frac = |k: usize| if pairs > 0.0 { k as f64 / pairs } else { 0.0 };

    let features = TemporalFeatures {
        efficiency: efficiency_from(&report),
        mean_latency,
        mean_fastest_paths,
        temporal_correlation,
        small_worldness: sw.value,
        small_worldness_degenerate: sw.degenerate,
        frac_strong: frac(report.strong_pairs.len()),
        frac_weak: frac(report.weak_pairs.len()),
        per_node_correlation,
    };
    Ok((features, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::Layer;

    const NULL: NullModel = NullModel { n_null: 5, seed: 3 };

    fn tn(n: usize, layers: Vec<Layer>) -> TemporalNetwork {
        TemporalNetwork::new((0..n).map(|i| format!("m{i}")).collect(), layers).unwrap()
    }

    #[test]
    fn empty_network_features() {
        let (f, _) = feature_vector(&tn(3, vec![Layer::empty(3); 4]), NULL).unwrap();
        assert_eq!(f.values(), vec![0.0; 10]);
        assert!(f.small_worldness_degenerate);
    }

    #[test]
    fn saturated_network_features() {
        let (f, _) = feature_vector(&tn(3, vec![Layer::complete(3); 4]), NULL).unwrap();
        assert_eq!(f.efficiency, 1.0);
        assert_eq!(f.mean_latency, 1.0);
        assert_eq!(f.mean_fastest_paths, 1.0);
        assert_eq!(f.frac_strong, 1.0);
        assert_eq!(f.frac_weak, 0.0);
        assert_eq!(f.temporal_correlation, 1.0);
    }

    #[test]
    fn chain_features_in_declared_order() {
        let net = tn(
            3,
            vec![Layer::from_edges(3, &[(0, 1)]), Layer::from_edges(3, &[(1, 2)])],
        );
        let (f, _) = feature_vector(&net, NULL).unwrap();
        let v = f.values();
        assert!((v[0] - 3.5 / 6.0).abs() < 1e-12);
        // latencies A-B 1, B-A 1, B-C 2, C-B 2, A-C 2
        assert!((v[1] - 8.0 / 5.0).abs() < 1e-12);
        assert_eq!(v[2], 1.0);
        // node B keeps degree 1 with no overlap; all C_i = 0
        assert_eq!(v[3], 0.0);
        assert_eq!(v[5], 2.0 / 3.0);
        assert_eq!(v[6], 1.0 / 3.0);
        assert_eq!(&v[7..], &[0.0, 0.0, 0.0]);
        assert_eq!(
            TemporalFeatures::names(&net.nodes)[..8],
            ["efficiency", "mean_latency", "mean_fastest_paths", "temporal_correlation",
             "small_worldness", "frac_strong", "frac_weak", "corr_m0"]
        );
    }
}

use crate::error::{Error, Result};
use crate::netbuild::TemporalNetwork;

/// Per-node topological overlap of consecutive layers, and its node mean.
///
/// `C_i = 1/(T-1) * sum_t |N_t(i) & N_{t+1}(i)| / sqrt(k_t(i) k_{t+1}(i))`,
/// where a term with either degree zero counts as 0.
pub fn temporal_correlation(tn: &TemporalNetwork) -> Result<(Vec<f64>, f64)> {
    let t_len = tn.layer_count();
    if t_len < 2 {
        return Err(Error::InvalidParameter(format!(
            "temporal correlation needs at least 2 layers, got {t_len}"
        )));
    }
    let n = tn.node_count();
    let per_node: Vec<f64> = (0..n)
        .map(|i| {
            let sum: f64 = tn
                .layers
                .windows(2)
                .map(|pair| {
                    let (a, b) = (pair[0].neighbors(i), pair[1].neighbors(i));
                    let (ka, kb) = (a.count_ones(), b.count_ones());
                    if ka == 0 || kb == 0 {
                        0.0
                    } else {
                        (a & b).count_ones() as f64 / (ka as f64 * kb as f64).sqrt()
                    }
                })
                .sum();
            sum / (t_len - 1) as f64
        })
        .collect();
    let mean = if n == 0 {
        0.0
    } else {
        per_node.iter().sum::<f64>() / n as f64
    };
    Ok((per_node, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netbuild::Layer;

    fn tn(n: usize, layers: Vec<Layer>) -> TemporalNetwork {
        TemporalNetwork::new((0..n).map(|i| i.to_string()).collect(), layers).unwrap()
    }

    #[test]
    fn identical_layers() {
        let l = Layer::from_edges(4, &[(0, 1), (1, 2)]);
        let (c, _) = temporal_correlation(&tn(4, vec![l.clone(), l.clone(), l])).unwrap();
        assert_eq!(c, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn disjoint_layers() {
        let a = Layer::from_edges(4, &[(0, 1), (2, 3)]);
        let b = Layer::from_edges(4, &[(0, 2), (1, 3)]);
        let (c, mean) = temporal_correlation(&tn(4, vec![a, b])).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        assert_eq!(mean, 0.0);
    }

    #[test]
    fn hand_case() {
        let l = Layer::from_edges(3, &[(0, 1)]);
        let (c, mean) = temporal_correlation(&tn(3, vec![l.clone(), l])).unwrap();
        assert_eq!(c, vec![1.0, 1.0, 0.0]);
        assert!((mean - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn partial_overlap() {
        // node 0: {1,2} then {1}: 1/sqrt(2)
        let a = Layer::from_edges(3, &[(0, 1), (0, 2)]);
        let b = Layer::from_edges(3, &[(0, 1)]);
        let (c, _) = temporal_correlation(&tn(3, vec![a, b])).unwrap();
        assert!((c[0] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(c[1], 1.0);
        assert_eq!(c[2], 0.0);
    }

    #[test]
    fn needs_two_layers() {
        assert!(temporal_correlation(&tn(2, vec![Layer::complete(2)])).is_err());
    }
}

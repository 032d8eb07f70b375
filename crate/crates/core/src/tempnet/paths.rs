//! Time-respecting reachability, latency and fastest-path counting.
//!
//! A path takes at most one hop per window and its hops use strictly
//! increasing windows; a node may wait any number of windows. Latency is the
//! 1-based index of the earliest window at which the target is reached when
//! starting before the first window.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netbuild::TemporalNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachabilityReport {
    /// `latency[i][j]`, `None` when `j` is never reached from `i`.
    pub latency: Vec<Vec<Option<usize>>>,
    /// Number of fastest paths; 1 on the diagonal (the empty path).
    pub fastest_path_counts: Vec<Vec<u64>>,
    /// Unordered pairs `(i, j)`, `i < j`, reachable in both directions.
    pub strong_pairs: Vec<(usize, usize)>,
    /// Unordered pairs reachable in exactly one direction.
    pub weak_pairs: Vec<(usize, usize)>,
}

impl ReachabilityReport {
    /// Finite latencies over ordered pairs `i != j`.
    pub fn finite_latencies(&self) -> impl Iterator<Item = usize> + '_ {
        self.latency.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(move |&(j, _)| j != i)
                .filter_map(|(_, l)| *l)
        })
    }
}

/// Latency row for one source node.
pub fn latencies_from(tn: &TemporalNetwork, source: usize) -> Vec<Option<usize>> {
    let n = tn.node_count();
    let mut latency = vec![None; n];
    latency[source] = Some(0);
    let mut reached: u64 = 1 << source;
    for (t, layer) in tn.layers.iter().enumerate() {
        let mut next = reached;
        let mut frontier = reached;
        while frontier != 0 {
            let u = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            next |= layer.neighbors(u);
        }
        let mut fresh = next & !reached;
        while fresh != 0 {
            let v = fresh.trailing_zeros() as usize;
            fresh &= fresh - 1;
            latency[v] = Some(t + 1);
        }
        reached = next;
    }
    latency
}

fn check_node(tn: &TemporalNetwork, i: usize) -> Result<()> {
    if i >= tn.node_count() {
        return Err(Error::InvalidParameter(format!(
            "node {i} out of range for {} nodes",
            tn.node_count()
        )));
    }
    Ok(())
}

/// Number of distinct simple time-respecting paths from `source` to `target`
/// arriving exactly at their latency. Paths differ when their (edge, window)
/// sequences differ. Zero when unreachable; one for `source == target`.
pub fn count_fastest_paths(tn: &TemporalNetwork, source: usize, target: usize) -> Result<u64> {
    check_node(tn, source)?;
    check_node(tn, target)?;
    if source == target {
        return Ok(1);
    }
    let Some(arrival) = latencies_from(tn, source)[target] else {
        return Ok(0);
    };
    let mut counter = PathCounter {
        tn,
        target,
        arrival,
        memo: HashMap::new(),
    };
    Ok(counter.count(source, 0, 1 << source))
}

struct PathCounter<'a> {
    tn: &'a TemporalNetwork,
    target: usize,
    arrival: usize,
    memo: HashMap<(usize, usize, u64), u64>,
}

impl PathCounter<'_> {
    /// Paths continuing from `node`, reached after `elapsed` windows.
    fn count(&mut self, node: usize, elapsed: usize, visited: u64) -> u64 {
        if let Some(&c) = self.memo.get(&(node, elapsed, visited)) {
            return c;
        }
        let mut total = 0u64;
        for window in elapsed + 1..=self.arrival {
            let mut nbrs = self.tn.layers[window - 1].neighbors(node) & !visited;
            while nbrs != 0 {
                let u = nbrs.trailing_zeros() as usize;
                nbrs &= nbrs - 1;
                let c = if u == self.target {
                    u64::from(window == self.arrival)
                } else {
                    self.count(u, window, visited | 1 << u)
                };
                total = total.saturating_add(c);
            }
        }
        self.memo.insert((node, elapsed, visited), total);
        total
    }
}

pub fn reachability_and_latency(tn: &TemporalNetwork) -> Result<ReachabilityReport> {
    if tn.layer_count() == 0 {
        return Err(Error::InvalidParameter("temporal network has no layers".into()));
    }
    let n = tn.node_count();
    let latency: Vec<Vec<Option<usize>>> = (0..n).map(|i| latencies_from(tn, i)).collect();
    let mut counts = vec![vec![0u64; n]; n];
    for (i, row) in counts.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            if i == j || latency[i][j].is_some() {
                *c = count_fastest_paths(tn, i, j)?;
            }
        }
    }
    let mut strong_pairs = Vec::new();
    let mut weak_pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            match (latency[i][j].is_some(), latency[j][i].is_some()) {
                (true, true) => strong_pairs.push((i, j)),
                (true, false) | (false, true) => weak_pairs.push((i, j)),
                (false, false) => {}
            }
        }
    }
    Ok(ReachabilityReport {
        latency,
        fastest_path_counts: counts,
        strong_pairs,
        weak_pairs,
    })
}

/// Mean of `1 / latency` over ordered pairs `i != j`; unreachable pairs add 0.
pub fn efficiency_from(report: &ReachabilityReport) -> f64 {
    let n = report.latency.len();
    if n < 2 {
        return 0.0;
    }
    let sum: f64 = report.finite_latencies().map(|l| 1.0 / l as f64).sum();
    sum / (n * (n - 1)) as f64
}

pub fn temporal_efficiency(tn: &TemporalNetwork) -> Result<f64> {
    if tn.node_count() < 2 {
        return Err(Error::InvalidParameter(
            "temporal efficiency needs at least two nodes".into(),
        ));
    }
    Ok(efficiency_from(&reachability_and_latency(tn)?))
}

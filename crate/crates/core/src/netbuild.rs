//! Per-window coupling graphs and their assembly into temporal networks.
//!
//! Channel pairs are weighted by the determinism or laminarity of their joint
//! recurrence plot. Channel graphs are averaged into modality graphs, then
//! each window is binarised independently and the layers are stacked in
//! window order.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::embedding::{embed, EmbeddingParams};
use crate::error::{Error, Result};
use crate::ingest::Window;
use crate::recurrence::{joint_recurrence_plot, recurrence_plot, Norm, RecurrenceMatrix};
use crate::rqa::{LineStats, RqaSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMetric {
    Jdet,
    Jlam,
}

impl WeightMetric {
    pub const ALL: [WeightMetric; 2] = [WeightMetric::Jdet, WeightMetric::Jlam];

    pub fn name(self) -> &'static str {
        match self {
            WeightMetric::Jdet => "jdet",
            WeightMetric::Jlam => "jlam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jdet" => Some(WeightMetric::Jdet),
            "jlam" => Some(WeightMetric::Jlam),
            _ => None,
        }
    }

    pub fn pick(self, s: &RqaSummary) -> f64 {
        match self {
            WeightMetric::Jdet => s.det,
            WeightMetric::Jlam => s.lam,
        }
    }
}

impl fmt::Display for WeightMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Minimum line lengths for determinism and laminarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RqaParams {
    pub l_min: usize,
    pub v_min: usize,
}

impl Default for RqaParams {
    fn default() -> Self {
        RqaParams { l_min: 3, v_min: 3 }
    }
}

/// Undirected graph with optional weights; `None` marks an absent entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedGraph {
    pub nodes: Vec<String>,
    pub weights: Vec<Vec<Option<f64>>>,
    pub window_index: usize,
    pub metric: WeightMetric,
}

impl WeightedGraph {
    pub fn new(nodes: Vec<String>, window_index: usize, metric: WeightMetric) -> Self {
        let n = nodes.len();
        WeightedGraph {
            nodes,
            weights: vec![vec![None; n]; n],
            window_index,
            metric,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.weights[i][j]
    }

    pub fn set(&mut self, i: usize, j: usize, w: Option<f64>) {
        self.weights[i][j] = w;
        self.weights[j][i] = w;
    }

    /// Upper triangle including the diagonal, row-major.
    pub fn upper_triangle(&self) -> Vec<Option<f64>> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .map(|(i, j)| self.weights[i][j])
            .collect()
    }

    /// Inverse of [`WeightedGraph::upper_triangle`].
    pub fn from_upper_triangle(
        nodes: Vec<String>,
        upper: &[Option<f64>],
        window_index: usize,
        metric: WeightMetric,
    ) -> Result<Self> {
        let n = nodes.len();
        if upper.len() != n * (n + 1) / 2 {
            return Err(Error::InvalidParameter(format!(
                "{} upper-triangle weights do not fit {n} nodes",
                upper.len()
            )));
        }
        let mut g = WeightedGraph::new(nodes, window_index, metric);
        let mut k = 0;
        for i in 0..n {
            for j in i..n {
                g.set(i, j, upper[k]);
                k += 1;
            }
        }
        Ok(g)
    }
}

/// Pairwise JRQA summaries for one window, `None` where a channel is
/// degenerate. Indexed like the upper triangle without diagonal.
pub fn pairwise_summaries(
    rps: &[Option<RecurrenceMatrix>],
    rqa: RqaParams,
) -> Vec<Option<RqaSummary>> {
    let n = rps.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push(match (&rps[a], &rps[b]) {
                (Some(ra), Some(rb)) => {
                    let jrp = joint_recurrence_plot(ra, rb);
                    let stats = LineStats::new(&jrp);
                    Some(RqaSummary {
                        det: stats.determinism(rqa.l_min),
                        lam: stats.laminarity(rqa.v_min),
                        recurrence_rate: jrp.recurrence_rate(),
                        l_min: rqa.l_min,
                        v_min: rqa.v_min,
                        mean_diagonal_length: stats.mean_diagonal_length(rqa.l_min),
                        mean_vertical_length: stats.mean_vertical_length(rqa.v_min),
                    })
                }
                _ => None,
            });
        }
    }
    out
}

/// Channel-level graph from pairwise summaries laid out as by
/// [`pairwise_summaries`]. Self entries stay absent.
pub fn graph_from_summaries(
    channels: Vec<String>,
    summaries: &[Option<RqaSummary>],
    window_index: usize,
    metric: WeightMetric,
) -> WeightedGraph {
    let n = channels.len();
    let mut g = WeightedGraph::new(channels, window_index, metric);
    let mut k = 0;
    for a in 0..n {
        for b in a + 1..n {
            g.set(a, b, summaries[k].as_ref().map(|s| metric.pick(s)));
            k += 1;
        }
    }
    g
}

pub(crate) fn is_constant(x: &[f64]) -> bool {
    x.windows(2).all(|w| w[0] == w[1])
}

/// Weighted channel graph for one window.
///
/// Each channel is embedded with its trial-level parameters and thresholded
/// at its trial-level epsilon. A channel that is constant inside the window
/// contributes absent weights.
pub fn channel_graph(
    window: &Window,
    channel_names: &[String],
    params: &[EmbeddingParams],
    epsilons: &[f64],
    norm: Norm,
    metric: WeightMetric,
    rqa: RqaParams,
) -> Result<WeightedGraph> {
    let n = window.channels.len();
    if channel_names.len() != n || params.len() != n || epsilons.len() != n {
        return Err(Error::InvalidParameter(format!(
            "window has {n} channels but {} names, {} parameter sets and {} thresholds were given",
            channel_names.len(),
            params.len(),
            epsilons.len()
        )));
    }
    let mut rps = Vec::with_capacity(n);
    for c in 0..n {
        let samples = &window.channels[c];
        if is_constant(samples) {
            log::warn!(
                "window {}: channel {} is constant; its pair weights are absent",
                window.index,
                channel_names[c]
            );
            rps.push(None);
            continue;
        }
        let traj = embed(samples, params[c], channel_names[c].clone())?;
        rps.push(Some(recurrence_plot(&traj, epsilons[c], norm)?));
    }
    let summaries = pairwise_summaries(&rps, rqa);
    Ok(graph_from_summaries(
        channel_names.to_vec(),
        &summaries,
        window.index,
        metric,
    ))
}

/// Averages a channel graph into a modality graph.
///
/// `modalities` fixes the node order; `assignment[c]` is the modality of
/// channel `c` in `modalities`. Inter-modality weights average every present
/// channel pair spanning the two modalities; intra-modality weights average
/// the present pairs within one modality.
pub fn merge_modalities(
    channel_graph: &WeightedGraph,
    modalities: &[String],
    assignment: &[String],
) -> Result<WeightedGraph> {
    let n = channel_graph.len();
    if assignment.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} channels but {} modality assignments",
            n,
            assignment.len()
        )));
    }
    let idx: Vec<usize> = assignment
        .iter()
        .zip(&channel_graph.nodes)
        .map(|(m, ch)| {
            modalities.iter().position(|x| x == m).ok_or_else(|| {
                Error::Schema(format!("channel {ch:?} maps to unknown modality {m:?}"))
            })
        })
        .collect::<Result<_>>()?;
    for (k, m) in modalities.iter().enumerate() {
        if !idx.contains(&k) {
            return Err(Error::Schema(format!("modality {m:?} has no channels")));
        }
    }

    let k = modalities.len();
    let mut sums = vec![vec![(0.0f64, 0usize); k]; k];
    for a in 0..n {
        for b in a + 1..n {
            if let Some(w) = channel_graph.weight(a, b) {
                let (p, q) = (idx[a].min(idx[b]), idx[a].max(idx[b]));
                sums[p][q].0 += w;
                sums[p][q].1 += 1;
            }
        }
    }
    let mut g = WeightedGraph::new(
        modalities.to_vec(),
        channel_graph.window_index,
        channel_graph.metric,
    );
    for p in 0..k {
        for q in p..k {
            let (s, c) = sums[p][q];
            if c > 0 {
                g.set(p, q, Some(s / c as f64));
            }
        }
    }
    Ok(g)
}

/// Modalities in order of first appearance.
pub fn modality_order(assignment: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for m in assignment {
        if !out.contains(m) {
            out.push(m.clone());
        }
    }
    out
}

/// How weighted layers become binary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum BinarizeRule {
    /// Keep the `ceil(rho * E)` strongest of the `E` present edges of each
    /// window, plus every edge tied with the weakest one kept.
    Proportional { rho: f64 },
    /// Keep edges with weight `>= threshold`.
    Absolute { threshold: f64 },
}

impl Default for BinarizeRule {
    fn default() -> Self {
        BinarizeRule::Proportional { rho: 0.5 }
    }
}

impl BinarizeRule {
    /// Weight cut-off for one window's present edge weights; `None` keeps nothing.
    pub fn cutoff(&self, weights: &[f64]) -> Option<f64> {
        match *self {
            BinarizeRule::Absolute { threshold } => Some(threshold),
            BinarizeRule::Proportional { rho } => {
                let e = weights.len();
                let keep = ((rho * e as f64) - 1e-9).ceil().max(0.0) as usize;
                if keep == 0 {
                    return None;
                }
                let mut sorted = weights.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                Some(sorted[keep.min(e) - 1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            BinarizeRule::Proportional { rho } if !(0.0..=1.0).contains(&rho) => Err(
                Error::InvalidParameter(format!("binarisation rho must be in [0, 1], got {rho}")),
            ),
            BinarizeRule::Absolute { threshold } if !threshold.is_finite() => Err(
                Error::InvalidParameter("binarisation threshold must be finite".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Symmetric adjacency without self-loops, one bit row per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    rows: Vec<u64>,
}

/// Largest node count a layer can hold.
pub const MAX_NODES: usize = 64;

impl Layer {
    pub fn empty(n: usize) -> Self {
        assert!(n <= MAX_NODES, "temporal networks hold at most {MAX_NODES} nodes");
        Layer { rows: vec![0; n] }
    }

    pub fn complete(n: usize) -> Self {
        let mut l = Layer::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                l.add_edge(i, j);
            }
        }
        l
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut l = Layer::empty(n);
        for &(i, j) in edges {
            l.add_edge(i, j);
        }
        l
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j, "self-loops are not allowed");
        self.rows[i] |= 1 << j;
        self.rows[j] |= 1 << i;
    }

    pub fn remove_edge(&mut self, i: usize, j: usize) {
        self.rows[i] &= !(1 << j);
        self.rows[j] &= !(1 << i);
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        (self.rows[i] >> j) & 1 == 1
    }

    /// Neighbour bitmask of node `i`.
    #[inline]
    pub fn neighbors(&self, i: usize) -> u64 {
        self.rows[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.rows[i].count_ones() as usize
    }

    /// Edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).filter(move |&j| self.has_edge(i, j)).map(move |j| (i, j)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalNetwork {
    pub nodes: Vec<String>,
    pub layers: Vec<Layer>,
    pub binarize_rule: Option<BinarizeRule>,
}

impl TemporalNetwork {
    pub fn new(nodes: Vec<String>, layers: Vec<Layer>) -> Result<Self> {
        if nodes.len() > MAX_NODES {
            return Err(Error::InvalidParameter(format!(
                "temporal networks hold at most {MAX_NODES} nodes, got {}",
                nodes.len()
            )));
        }
        if layers.iter().any(|l| l.len() != nodes.len()) {
            return Err(Error::InvalidParameter(
                "every layer must span the full node set".into(),
            ));
        }
        Ok(TemporalNetwork {
            nodes,
            layers,
            binarize_rule: None,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().map(Layer::edge_count).sum()
    }
}

/// Binarises each window's inter-node weights and stacks the layers.
/// Self weights never become edges; absent weights are non-edges.
pub fn assemble_temporal_network(
    graphs: &[WeightedGraph],
    rule: BinarizeRule,
) -> Result<TemporalNetwork> {
    rule.validate()?;
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no window graphs to assemble".into()))?;
    let nodes = first.nodes.clone();
    let n = nodes.len();
    let mut layers = Vec::with_capacity(graphs.len());
    for (pos, g) in graphs.iter().enumerate() {
        if g.nodes != nodes {
            return Err(Error::InvalidParameter(format!(
                "window {} has a different node set",
                g.window_index
            )));
        }
        if pos > 0 && g.window_index <= graphs[pos - 1].window_index {
            return Err(Error::InvalidParameter(
                "window graphs must be ordered by window index".into(),
            ));
        }
        let present: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter_map(|(i, j)| g.weight(i, j).map(|w| (i, j, w)))
            .collect();
        let weights: Vec<f64> = present.iter().map(|p| p.2).collect();
        let mut layer = Layer::empty(n);
        if let Some(cut) = rule.cutoff(&weights) {
            for &(i, j, w) in &present {
                if w >= cut {
                    layer.add_edge(i, j);
                }
            }
        }
        layers.push(layer);
    }
    let mut tn = TemporalNetwork::new(nodes, layers)?;
    tn.binarize_rule = Some(rule);
    Ok(tn)
}

/// Graphviz rendering of one layer.
pub fn layer_to_dot(tn: &TemporalNetwork, layer: usize) -> String {
    let mut s = format!("graph window_{layer} {{\n");
    for name in &tn.nodes {
        s.push_str(&format!("  {name:?};\n"));
    }
    for (i, j) in tn.layers[layer].edges() {
        s.push_str(&format!("  {:?} -- {:?};\n", tn.nodes[i], tn.nodes[j]));
    }
    s.push_str("}\n");
    s
}

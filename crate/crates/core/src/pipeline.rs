//! Stage drivers and their on-disk artifacts.
//!
//! Each stage reads what the previous one wrote, so running the stages one
//! by one produces the same bytes as [`run_pipeline`]. Layout of `out_dir`:
//!
//! | file | stage |
//! |---|---|
//! | `embedding.json` | [`embed_params`] |
//! | `thresholds.json`, `networks_weighted.jsonl`, `networks_binary.jsonl` | [`analyze`] |
//! | `features.csv`, `reachability.json` | [`features`] |
//! | `model_<target>.json` | [`train`] |
//! | `evaluation_<target>.json` | [`evaluate`] |
//!
//! Every artifact carries the schema version and the full configuration.
//! Files are written atomically; a failed stage leaves an `INCOMPLETE`
//! marker naming the stage and error.

use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{substream, PipelineConfig};
use crate::embedding::{embed, estimate_delay, estimate_dimension, EmbeddingConfig, EmbeddingParams};
use crate::error::{Error, Result};
use crate::ingest::{load_labels, load_recording, segment_windows, Recording};
use crate::learn::{
    cross_validate, fit_lasso, lambda_grid, select_lambda, FeatureTable, Target,
};
use crate::netbuild::{
    assemble_temporal_network, graph_from_summaries, is_constant, layer_to_dot, merge_modalities,
    modality_order, pairwise_summaries, Layer, TemporalNetwork, WeightMetric, WeightedGraph,
};
use crate::recurrence::{recurrence_plot_from_distances, threshold_for_rate_pooled, DistanceMatrix, RecurrenceMatrix};
use crate::tempnet::{feature_vector, NullModel, ReachabilityReport, TemporalFeatures};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const EMBEDDING_FILE: &str = "embedding.json";
pub const THRESHOLDS_FILE: &str = "thresholds.json";
pub const WEIGHTED_FILE: &str = "networks_weighted.jsonl";
pub const BINARY_FILE: &str = "networks_binary.jsonl";
pub const FEATURES_FILE: &str = "features.csv";
pub const REACHABILITY_FILE: &str = "reachability.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

pub fn model_file(target: Target) -> String {
    format!("model_{target}.json")
}

pub fn evaluation_file(target: Target) -> String {
    format!("evaluation_{target}.json")
}

/// Configuration plus a worker pool for trial-level parallelism.
pub struct Runner {
    pub config: PipelineConfig,
    pool: rayon::ThreadPool,
}

impl Runner {
    /// `jobs = 0` uses one worker per core.
    pub fn new(config: PipelineConfig, jobs: usize) -> Result<Self> {
        config.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Runner { config, pool })
    }

    fn par_map<T: Sync, R: Send>(
        &self,
        items: &[T],
        f: impl Fn(&T) -> Result<R> + Sync + Send,
    ) -> Result<Vec<R>> {
        self.pool.install(|| items.par_iter().map(f).collect())
    }

    fn header(&self, kind: &str) -> Value {
        json!({
            "schema_version": ARTIFACT_SCHEMA_VERSION,
            "kind": kind,
            "config": self.config.to_json(),
        })
    }
}

/// A recording file and the schema that describes it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSource {
    pub trial_id: String,
    pub csv: PathBuf,
    pub schema: PathBuf,
}

/// Lists the recordings of a data directory in file-name order. Each
/// `<trial>.csv` uses `<trial>.schema.json` when present, else `schema.json`.
pub fn discover_trials(data_dir: &Path) -> Result<Vec<TrialSource>> {
    let entries = fs::read_dir(data_dir).map_err(|e| Error::io(data_dir, e))?;
    let mut csvs = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(data_dir, e))?.path();
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        if is_csv && path.file_name().is_some_and(|n| n != LABELS_FILE) {
            csvs.push(path);
        }
    }
    csvs.sort();
    if csvs.is_empty() {
        return Err(Error::Schema(format!(
            "no recordings (*.csv) in {}",
            data_dir.display()
        )));
    }
    csvs.into_iter()
        .map(|csv| {
            let trial_id = csv.file_stem().unwrap().to_string_lossy().into_owned();
            let own = data_dir.join(format!("{trial_id}.schema.json"));
            let shared = data_dir.join("schema.json");
            let schema = if own.exists() {
                own
            } else if shared.exists() {
                shared
            } else {
                return Err(Error::Schema(format!(
                    "no schema for {}: expected {} or {}",
                    csv.display(),
                    own.display(),
                    shared.display()
                )));
            };
            Ok(TrialSource {
                trial_id,
                csv,
                schema,
            })
        })
        .collect()
}

fn load_trial(src: &TrialSource) -> Result<Recording> {
    load_recording(&src.csv, &src.schema)
}

// ---------------------------------------------------------------- io helpers

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().unwrap().to_string_lossy();
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path.display().to_string(), e))?;
    write_atomic(path, (text + "\n").as_bytes())
}

fn write_jsonl(path: &Path, lines: &[Value]) -> Result<()> {
    let mut text = String::new();
    for v in lines {
        text.push_str(&serde_json::to_string(v).map_err(|e| Error::json(path.display().to_string(), e))?);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

fn read_artifact(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn check_version(path: &Path, header: &Value) -> Result<()> {
    match header.get("schema_version").and_then(Value::as_u64) {
        Some(v) if v == u64::from(ARTIFACT_SCHEMA_VERSION) => Ok(()),
        other => Err(Error::Schema(format!(
            "{} has schema version {other:?}, expected {ARTIFACT_SCHEMA_VERSION}",
            path.display()
        ))),
    }
}

fn from_value<T: for<'de> Deserialize<'de>>(path: &Path, v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Runs `body`, recording a failure in the `INCOMPLETE` marker. A success
/// clears a marker left by the same stage.
fn guarded<T>(out_dir: &Path, stage: &'static str, body: impl FnOnce() -> Result<T>) -> Result<T> {
    let marker = out_dir.join(INCOMPLETE_MARKER);
    match body() {
        Ok(v) => {
            if let Ok(text) = fs::read_to_string(&marker) {
                if text.lines().next() == Some(&format!("stage={stage}")) {
                    fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
                }
            }
            Ok(v)
        }
        Err(e) => {
            let e = match e {
                Error::Stage { .. } => e,
                other => other.in_stage(stage, None),
            };
            let _ = fs::create_dir_all(out_dir);
            let _ = fs::write(&marker, format!("stage={stage}\nerror={e}\n"));
            Err(e)
        }
    }
}

// ---------------------------------------------------------------- embedding

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEmbedding {
    pub name: String,
    pub modality: String,
    pub delay_tau: usize,
    pub dimension_m: usize,
    /// FNN never dropped below threshold up to `m_max`.
    pub saturated: bool,
    /// Constant over the trial; the channel contributes no weights.
    pub constant: bool,
}

impl ChannelEmbedding {
    pub fn params(&self) -> Result<EmbeddingParams> {
        EmbeddingParams::new(self.delay_tau, self.dimension_m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEmbedding {
    pub trial_id: String,
    pub channels: Vec<ChannelEmbedding>,
}

/// Estimates delay and dimension for every channel of a z-scored trial.
pub fn estimate_trial_embedding(rec: &Recording, cfg: &EmbeddingConfig) -> Result<TrialEmbedding> {
    let (z, constant) = rec.z_scored();
    let channels = z
        .channels()
        .iter()
        .map(|ch| {
            if constant.contains(&ch.name) {
                return Ok(ChannelEmbedding {
                    name: ch.name.clone(),
                    modality: ch.modality.clone(),
                    delay_tau: 1,
                    dimension_m: 1,
                    saturated: false,
                    constant: true,
                });
            }
            let tau = estimate_delay(&ch.samples, cfg)?;
            let dim = estimate_dimension(&ch.samples, tau, cfg)?;
            if dim.saturated {
                log::warn!(
                    "trial {}: channel {} FNN saturated at m = {}",
                    rec.trial_id(),
                    ch.name,
                    dim.dimension_m
                );
            }
            Ok(ChannelEmbedding {
                name: ch.name.clone(),
                modality: ch.modality.clone(),
                delay_tau: tau,
                dimension_m: dim.dimension_m,
                saturated: dim.saturated,
                constant: false,
            })
        })
        .collect::<Result<_>>()?;
    Ok(TrialEmbedding {
        trial_id: rec.trial_id().to_owned(),
        channels,
    })
}

/// Stage 1: per-channel embedding parameters for every trial.
pub fn embed_params(runner: &Runner, data_dir: &Path, out_dir: &Path) -> Result<Vec<TrialEmbedding>> {
    guarded(out_dir, "embed-params", || {
        let trials = discover_trials(data_dir)?;
        let cfg = &runner.config.embedding;
        let out = runner.par_map(&trials, |src| {
            load_trial(src)
                .and_then(|rec| estimate_trial_embedding(&rec, cfg))
                .map_err(|e| e.in_stage("embed-params", Some(&src.trial_id)))
        })?;
        let mut doc = runner.header("embedding");
        doc["trials"] = serde_json::to_value(&out).expect("embedding serialises");
        write_json(&out_dir.join(EMBEDDING_FILE), &doc)?;
        Ok(out)
    })
}

pub fn load_embeddings(out_dir: &Path) -> Result<Vec<TrialEmbedding>> {
    let path = out_dir.join(EMBEDDING_FILE);
    let mut doc: Value = serde_json::from_str(&read_artifact(&path)?)
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    check_version(&path, &doc)?;
    from_value(&path, doc["trials"].take())
}

// ---------------------------------------------------------------- networks

/// Weighted and binary networks of one trial.
#[derive(Debug, Clone)]
pub struct TrialNetworks {
    pub trial_id: String,
    pub channels: Vec<String>,
    /// Trial-level threshold per channel; `None` for constant channels.
    pub epsilons: Vec<Option<f64>>,
    /// Channel-level graphs per metric, one per window.
    pub channel_graphs: Vec<(WeightMetric, Vec<WeightedGraph>)>,
    /// Modality-level graphs per metric, one per window.
    pub modality_graphs: Vec<(WeightMetric, Vec<WeightedGraph>)>,
    pub networks: Vec<(WeightMetric, TemporalNetwork)>,
}

/// Builds the per-window JRQA graphs and temporal networks of one trial.
///
/// Each channel is embedded window by window with its trial-level
/// parameters. Its threshold is the `target_rr` quantile of the distances
/// pooled over all its windows, so one epsilon serves the whole trial.
pub fn analyze_trial(
    rec: &Recording,
    emb: &TrialEmbedding,
    cfg: &PipelineConfig,
    metrics: &[WeightMetric],
) -> Result<TrialNetworks> {
    let names = rec.channel_names();
    let emb_names: Vec<&str> = emb.channels.iter().map(|c| c.name.as_str()).collect();
    if emb_names != names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Schema(format!(
            "embedding parameters list channels {emb_names:?}, recording has {names:?}"
        )));
    }
    let windows = segment_windows(rec, cfg.window_s, cfg.overlap)?;
    let n = names.len();
    let mut rps: Vec<Vec<Option<RecurrenceMatrix>>> =
        windows.iter().map(|_| (0..n).map(|_| None).collect()).collect();
    let mut epsilons = vec![None; n];
    for (c, ce) in emb.channels.iter().enumerate() {
        if ce.constant {
            continue;
        }
        let params = ce.params()?;
        let mut dms = Vec::with_capacity(windows.len());
        for (w, win) in windows.iter().enumerate() {
            if is_constant(&win.channels[c]) {
                log::warn!(
                    "trial {}, window {w}: channel {} is constant; its pair weights are absent",
                    rec.trial_id(),
                    ce.name
                );
                continue;
            }
            let traj = embed(&win.channels[c], params, ce.name.clone())?;
            dms.push((w, DistanceMatrix::new(&traj, cfg.norm)));
        }
        if dms.is_empty() {
            continue;
        }
        let refs: Vec<&DistanceMatrix> = dms.iter().map(|(_, d)| d).collect();
        let eps = threshold_for_rate_pooled(&refs, cfg.target_rr)?;
        epsilons[c] = Some(eps);
        for (w, dm) in &dms {
            rps[*w][c] = Some(recurrence_plot_from_distances(dm, eps));
        }
    }

    let assignment = rec.modalities();
    let modalities = modality_order(&assignment);
    let mut channel_graphs: Vec<(WeightMetric, Vec<WeightedGraph>)> =
        metrics.iter().map(|&m| (m, Vec::new())).collect();
    for (w, row) in rps.iter().enumerate() {
        let summaries = pairwise_summaries(row, cfg.rqa());
        for (metric, graphs) in channel_graphs.iter_mut() {
            graphs.push(graph_from_summaries(names.clone(), &summaries, windows[w].index, *metric));
        }
    }
    let mut modality_graphs = Vec::new();
    let mut networks = Vec::new();
    for (metric, graphs) in &channel_graphs {
        let merged = graphs
            .iter()
            .map(|g| merge_modalities(g, &modalities, &assignment))
            .collect::<Result<Vec<_>>>()?;
        networks.push((*metric, assemble_temporal_network(&merged, cfg.binarize_rule())?));
        modality_graphs.push((*metric, merged));
    }
    Ok(TrialNetworks {
        trial_id: rec.trial_id().to_owned(),
        channels: names,
        epsilons,
        channel_graphs,
        modality_graphs,
        networks,
    })
}

/// Stage 2: weighted and binarised networks for every trial.
///
/// With `dot` set, every layer is also written as Graphviz under `dot/`.
pub fn analyze(
    runner: &Runner,
    data_dir: &Path,
    out_dir: &Path,
    dot: bool,
) -> Result<Vec<TrialNetworks>> {
    guarded(out_dir, "analyze", || {
        let embeddings = load_embeddings(out_dir)?;
        let trials = discover_trials(data_dir)?;
        let metrics = runner.config.weight_metric.metrics();
        let jobs: Vec<(TrialSource, TrialEmbedding)> = trials
            .into_iter()
            .map(|src| {
                let emb = embeddings
                    .iter()
                    .find(|e| e.trial_id == src.trial_id)
                    .cloned()
                    .ok_or_else(|| {
                        Error::Schema(format!(
                            "{EMBEDDING_FILE} has no parameters for trial {}",
                            src.trial_id
                        ))
                        .in_stage("analyze", Some(&src.trial_id))
                    })?;
                Ok((src, emb))
            })
            .collect::<Result<_>>()?;
        let results = runner.par_map(&jobs, |(src, emb)| {
            load_trial(src)
                .and_then(|rec| analyze_trial(&rec, emb, &runner.config, &metrics))
                .map_err(|e| e.in_stage("analyze", Some(&src.trial_id)))
        })?;
        write_networks(runner, out_dir, &results, dot)?;
        Ok(results)
    })
}

fn write_networks(runner: &Runner, out_dir: &Path, results: &[TrialNetworks], dot: bool) -> Result<()> {
    let thresholds: Vec<Value> = results
        .iter()
        .map(|t| {
            let channels: Vec<Value> = t
                .channels
                .iter()
                .zip(&t.epsilons)
                .map(|(name, eps)| json!({ "name": name, "epsilon": eps }))
                .collect();
            json!({ "trial_id": t.trial_id, "channels": channels })
        })
        .collect();
    let mut doc = runner.header("thresholds");
    doc["trials"] = Value::Array(thresholds);
    write_json(&out_dir.join(THRESHOLDS_FILE), &doc)?;

    let mut weighted = vec![runner.header("weighted_networks")];
    let mut binary = vec![runner.header("binary_networks")];
    for t in results {
        for (metric, graphs) in &t.modality_graphs {
            for g in graphs {
                weighted.push(json!({
                    "trial_id": t.trial_id,
                    "metric": metric,
                    "window": g.window_index,
                    "nodes": g.nodes,
                    "weights": g.upper_triangle(),
                }));
            }
        }
        for (metric, tn) in &t.networks {
            for (w, layer) in tn.layers.iter().enumerate() {
                binary.push(json!({
                    "trial_id": t.trial_id,
                    "metric": metric,
                    "window": w,
                    "nodes": tn.nodes,
                    "edges": layer.edges(),
                }));
                if dot {
                    let path = out_dir
                        .join("dot")
                        .join(format!("{}_{metric}_w{w:03}.dot", t.trial_id));
                    write_atomic(&path, layer_to_dot(tn, w).as_bytes())?;
                }
            }
        }
    }
    write_jsonl(&out_dir.join(WEIGHTED_FILE), &weighted)?;
    write_jsonl(&out_dir.join(BINARY_FILE), &binary)
}

#[derive(Deserialize)]
struct BinaryRecord {
    trial_id: String,
    metric: WeightMetric,
    window: usize,
    nodes: Vec<String>,
    edges: Vec<(usize, usize)>,
}

/// Temporal networks keyed by trial, in file order, then by metric.
pub type NetworkSet = IndexMap<String, Vec<(WeightMetric, TemporalNetwork)>>;

pub fn load_networks(out_dir: &Path) -> Result<NetworkSet> {
    let path = out_dir.join(BINARY_FILE);
    let text = read_artifact(&path)?;
    let mut lines = text.lines();
    let header: Value = serde_json::from_str(lines.next().unwrap_or(""))
        .map_err(|e| Error::json(path.display().to_string(), e))?;
    check_version(&path, &header)?;

    let mut layers: IndexMap<(String, WeightMetric), (Vec<String>, Vec<Layer>)> = IndexMap::new();
    for (row, line) in lines.enumerate() {
        let rec: BinaryRecord = serde_json::from_str(line)
            .map_err(|e| Error::json(format!("{} line {}", path.display(), row + 2), e))?;
        let n = rec.nodes.len();
        let entry = layers
            .entry((rec.trial_id.clone(), rec.metric))
            .or_insert_with(|| (rec.nodes.clone(), Vec::new()));
        if entry.0 != rec.nodes || rec.window != entry.1.len() {
            return Err(Error::Format {
                path: path.clone(),
                row: row + 2,
                message: format!("inconsistent layer record for trial {}", rec.trial_id),
            });
        }
        if rec.edges.iter().any(|&(i, j)| i >= n || j >= n || i == j) {
            return Err(Error::Format {
                path: path.clone(),
                row: row + 2,
                message: "edge endpoint out of range".into(),
            });
        }
        entry.1.push(Layer::from_edges(n, &rec.edges));
    }
    let mut out = NetworkSet::new();
    for ((trial, metric), (nodes, ls)) in layers {
        let tn = TemporalNetwork::new(nodes, ls)?;
        out.entry(trial).or_default().push((metric, tn));
    }
    Ok(out)
}

// ---------------------------------------------------------------- features

/// Feature rows of every trial.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub columns: Vec<String>,
    pub trial_ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Named null-model seed of one trial and metric.
pub fn null_seed(seed: u64, trial_id: &str, metric: WeightMetric) -> u64 {
    substream(substream(seed, "nulls"), &format!("{trial_id}/{metric}"))
}

fn feature_columns(metrics: &[WeightMetric], nodes: &[String]) -> Vec<String> {
    metrics
        .iter()
        .flat_map(|m| {
            TemporalFeatures::names(nodes)
                .into_iter()
                .map(move |f| format!("{m}_{f}"))
                .chain(std::iter::once(format!("{m}_sw_degenerate")))
        })
        .collect()
}

/// Stage 3: temporal-network features for every trial.
pub fn features(runner: &Runner, out_dir: &Path) -> Result<FeatureSet> {
    guarded(out_dir, "features", || {
        let networks = load_networks(out_dir)?;
        let entries: Vec<(&String, &Vec<(WeightMetric, TemporalNetwork)>)> = networks.iter().collect();
        let (_, first) = entries
            .first()
            .ok_or_else(|| Error::Schema(format!("{BINARY_FILE} holds no networks")))?;
        let metrics: Vec<WeightMetric> = first.iter().map(|(m, _)| *m).collect();
        let nodes = first[0].1.nodes.clone();
        let seed = runner.config.seed;
        let n_null = runner.config.n_null;

        let computed = runner.par_map(&entries, |(trial, nets)| {
            let wrap = |e: Error| e.in_stage("features", Some(trial));
            let these: Vec<WeightMetric> = nets.iter().map(|(m, _)| *m).collect();
            if these != metrics || nets.iter().any(|(_, tn)| tn.nodes != nodes) {
                return Err(wrap(Error::Schema(
                    "metrics or nodes differ from the first trial".into(),
                )));
            }
            let mut row = Vec::new();
            let mut reach = Vec::new();
            for (metric, tn) in nets.iter() {
                let null = NullModel {
                    n_null,
                    seed: null_seed(seed, trial, *metric),
                };
                let (f, report) = feature_vector(tn, null).map_err(wrap)?;
                let values = f.values();
                if let Some(k) = values.iter().position(|v| !v.is_finite()) {
                    return Err(wrap(Error::Degenerate(format!(
                        "feature {} is not finite",
                        TemporalFeatures::names(&nodes)[k]
                    ))));
                }
                row.extend(values);
                row.push(if f.small_worldness_degenerate { 1.0 } else { 0.0 });
                reach.push((*metric, report));
            }
            Ok((row, reach))
        })?;

        let set = FeatureSet {
            columns: feature_columns(&metrics, &nodes),
            trial_ids: entries.iter().map(|(t, _)| (*t).clone()).collect(),
            rows: computed.iter().map(|(r, _)| r.clone()).collect(),
        };
        write_features(runner, out_dir, &set)?;
        write_reachability(runner, out_dir, &set.trial_ids, &nodes, &computed)?;
        Ok(set)
    })
}

fn write_features(runner: &Runner, out_dir: &Path, set: &FeatureSet) -> Result<()> {
    let config = serde_json::to_string(&runner.config.to_json()).expect("config serialises");
    let mut text = format!("# schema_version={ARTIFACT_SCHEMA_VERSION} config={config}\n");
    let mut writer = csv::Writer::from_writer(Vec::new());
    let header = std::iter::once("trial_id").chain(set.columns.iter().map(String::as_str));
    writer.write_record(header).expect("in-memory write");
    for (id, row) in set.trial_ids.iter().zip(&set.rows) {
        let cells = std::iter::once(id.clone()).chain(row.iter().map(f64::to_string));
        writer.write_record(cells).expect("in-memory write");
    }
    text.push_str(&String::from_utf8(writer.into_inner().expect("in-memory write")).expect("utf-8"));
    write_atomic(&out_dir.join(FEATURES_FILE), text.as_bytes())
}

fn write_reachability(
    runner: &Runner,
    out_dir: &Path,
    trial_ids: &[String],
    nodes: &[String],
    computed: &[(Vec<f64>, Vec<(WeightMetric, ReachabilityReport)>)],
) -> Result<()> {
    let trials: Vec<Value> = trial_ids
        .iter()
        .zip(computed)
        .flat_map(|(id, (_, reports))| {
            reports.iter().map(move |(metric, r)| {
                json!({ "trial_id": id, "metric": metric, "report": r })
            })
        })
        .collect();
    let mut doc = runner.header("reachability");
    doc["nodes"] = json!(nodes);
    doc["trials"] = Value::Array(trials);
    write_json(&out_dir.join(REACHABILITY_FILE), &doc)
}

pub fn load_features(out_dir: &Path) -> Result<FeatureSet> {
    let path = out_dir.join(FEATURES_FILE);
    let text = read_artifact(&path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format {
        path: path.clone(),
        row: 0,
        message: e.to_string(),
    })?;
    if header.get(0) != Some("trial_id") {
        return Err(Error::Schema(format!("{} must start with a trial_id column", path.display())));
    }
    let columns: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut trial_ids = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Format {
            path: path.clone(),
            row,
            message: e.to_string(),
        })?;
        trial_ids.push(rec[0].to_owned());
        let values = rec
            .iter()
            .skip(1)
            .zip(&columns)
            .map(|(cell, col)| {
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.clone(),
                    row,
                    column: col.clone(),
                    message: format!("{cell:?} is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(FeatureSet {
        columns,
        trial_ids,
        rows,
    })
}

// ---------------------------------------------------------------- learning

/// Joins `features.csv` with the labels file of the data directory.
pub fn load_table(data_dir: &Path, out_dir: &Path) -> Result<FeatureTable> {
    let set = load_features(out_dir)?;
    let labels = load_labels(&data_dir.join(LABELS_FILE))?;
    FeatureTable::from_labels(set.columns, set.trial_ids, set.rows, &labels)
}

/// Seed of the fold assignment for one target.
pub fn cv_seed(seed: u64, target: Target) -> u64 {
    substream(substream(seed, "cv"), target.name())
}

fn grid_for(runner: &Runner, table: &FeatureTable, target: Target) -> Result<Vec<f64>> {
    let g = &runner.config.lambda_grid;
    lambda_grid(table, target, g.n_points, g.min_ratio)
}

/// Stage 4: one sparse model per target, with lambda chosen by
/// cross-validation on the full table.
pub fn train(runner: &Runner, data_dir: &Path, out_dir: &Path, targets: &[Target]) -> Result<()> {
    guarded(out_dir, "train", || {
        let table = load_table(data_dir, out_dir)?;
        for &target in targets {
            let grid = grid_for(runner, &table, target)?;
            let seed = cv_seed(runner.config.seed, target);
            let (lambda, scores) = runner
                .pool
                .install(|| select_lambda(&table, target, &grid, runner.config.k_folds, seed))?;
            let model = fit_lasso(&table, target, lambda)?;
            let mut doc = runner.header("model");
            doc["lambda_grid"] = json!(grid);
            doc["validation_accuracy"] = json!(scores);
            doc["model"] = serde_json::to_value(&model).expect("model serialises");
            write_json(&out_dir.join(model_file(target)), &doc)?;
        }
        Ok(())
    })
}

/// Stage 5: nested cross-validated evaluation per target.
pub fn evaluate(runner: &Runner, data_dir: &Path, out_dir: &Path, targets: &[Target]) -> Result<()> {
    guarded(out_dir, "evaluate", || {
        let table = load_table(data_dir, out_dir)?;
        for &target in targets {
            let grid = grid_for(runner, &table, target)?;
            let seed = cv_seed(runner.config.seed, target);
            let report = runner
                .pool
                .install(|| cross_validate(&table, target, &grid, runner.config.k_folds, seed))?;
            let mut doc = runner.header("evaluation");
            doc["class_counts"] = json!(table.class_counts(target));
            doc["report"] = serde_json::to_value(&report).expect("report serialises");
            write_json(&out_dir.join(evaluation_file(target)), &doc)?;
        }
        Ok(())
    })
}

/// Every stage in order, both targets.
pub fn run_pipeline(runner: &Runner, data_dir: &Path, out_dir: &Path, dot: bool) -> Result<()> {
    let marker = out_dir.join(INCOMPLETE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
    }
    embed_params(runner, data_dir, out_dir)?;
    analyze(runner, data_dir, out_dir, dot)?;
    features(runner, out_dir)?;
    train(runner, data_dir, out_dir, &Target::ALL)?;
    evaluate(runner, data_dir, out_dir, &Target::ALL)
}

//! Synthetic multichannel recordings with a known coupling structure.
//!
//! Two dynamics are available. Coupled logistic maps iterate
//! `x_i(t+1) = (1 − Σ_j μ_ij) f(x_i(t)) + Σ_j μ_ij f(x_j(t))` with
//! `f(x) = 4x(1 − x)`; coupled phase oscillators follow
//! `θ_i' = ω_i + K Σ_j μ_ij sin(θ_j − θ_i)` and emit `sin θ_i`. Gaussian
//! observation noise is added after the dynamics and never fed back.
//!
//! Every channel owns a random stream derived from the master seed and its
//! index, so adding channels leaves existing channels unchanged.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{write_labels, write_recording, Channel, LabelRecord, Recording};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Dynamics {
    CoupledLogistic,
    CoupledOscillator {
        base_hz: f64,
        spread_hz: f64,
        gain: f64,
    },
}

impl Dynamics {
    pub fn oscillator() -> Self {
        Dynamics::CoupledOscillator {
            base_hz: 1.0,
            spread_hz: 0.3,
            gain: 4.0,
        }
    }
}

fn default_scale() -> f64 {
    1.0
}

fn default_transient() -> usize {
    500
}

fn default_rate() -> f64 {
    128.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub trial_id: String,
    /// Channel name to modality, in output column order.
    pub modality_map: IndexMap<String, String>,
    /// Symmetric, zero diagonal, entries in `[0, 1]`.
    pub coupling_matrix: Vec<Vec<f64>>,
    #[serde(default = "default_scale")]
    pub coupling_scale: f64,
    pub dynamics: Dynamics,
    pub noise_sd: f64,
    pub length_samples: usize,
    #[serde(default = "default_rate")]
    pub sampling_rate_hz: f64,
    /// Iterations discarded before recording starts.
    #[serde(default = "default_transient")]
    pub transient: usize,
    pub seed: u64,
}

impl CouplingSpec {
    /// Logistic-map spec with channels `ch0..` all in one modality each.
    pub fn logistic(trial_id: &str, coupling: Vec<Vec<f64>>, noise_sd: f64, len: usize, seed: u64) -> Self {
        let modality_map = (0..coupling.len())
            .map(|i| (format!("ch{i}"), format!("m{i}")))
            .collect();
        CouplingSpec {
            trial_id: trial_id.into(),
            modality_map,
            coupling_matrix: coupling,
            coupling_scale: 1.0,
            dynamics: Dynamics::CoupledLogistic,
            noise_sd,
            length_samples: len,
            sampling_rate_hz: default_rate(),
            transient: default_transient(),
            seed,
        }
    }

    pub fn n_channels(&self) -> usize {
        self.modality_map.len()
    }

    /// Coupling strengths after scaling.
    pub fn mu(&self) -> Vec<Vec<f64>> {
        self.coupling_matrix
            .iter()
            .map(|r| r.iter().map(|c| c * self.coupling_scale).collect())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_channels();
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if n < 2 {
            return bad(format!("need at least 2 channels, got {n}"));
        }
        if self.coupling_matrix.len() != n || self.coupling_matrix.iter().any(|r| r.len() != n) {
            return bad(format!("coupling matrix must be {n}x{n}"));
        }
        for i in 0..n {
            if self.coupling_matrix[i][i] != 0.0 {
                return bad(format!("coupling matrix diagonal entry {i} is not zero"));
            }
            for j in 0..n {
                let c = self.coupling_matrix[i][j];
                if !(0.0..=1.0).contains(&c) {
                    return bad(format!("coupling ({i}, {j}) = {c} is outside [0, 1]"));
                }
                if c != self.coupling_matrix[j][i] {
                    return bad(format!("coupling matrix is not symmetric at ({i}, {j})"));
                }
            }
        }
        if !(self.coupling_scale >= 0.0 && self.coupling_scale.is_finite()) {
            return bad(format!("coupling scale {} is invalid", self.coupling_scale));
        }
        for (i, row) in self.mu().iter().enumerate() {
            let s: f64 = row.iter().sum();
            if s >= 1.0 {
                return bad(format!("row {i} coupling sum {s} is not below 1"));
            }
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise sd {} is invalid", self.noise_sd));
        }
        if self.length_samples == 0 {
            return bad("length must be positive".into());
        }
        if !(self.sampling_rate_hz > 0.0 && self.sampling_rate_hz.is_finite()) {
            return bad(format!("sampling rate {} is invalid", self.sampling_rate_hz));
        }
        if let Dynamics::CoupledOscillator { base_hz, spread_hz, gain } = self.dynamics {
            if !(base_hz > 0.0 && spread_hz >= 0.0 && gain >= 0.0) {
                return bad("oscillator frequencies and gain must be non-negative".into());
            }
        }
        Ok(())
    }
}

fn channel_rngs(seed: u64, n: usize) -> Vec<ChaCha8Rng> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            rng
        })
        .collect()
}

fn logistic(x: f64) -> f64 {
    4.0 * x * (1.0 - x)
}

/// Noise-free trajectories, one row per channel.
pub fn simulate(spec: &CouplingSpec) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let mut rngs = channel_rngs(spec.seed, spec.n_channels());
    Ok(run_dynamics(spec, &mut rngs))
}

fn run_dynamics(spec: &CouplingSpec, rngs: &mut [ChaCha8Rng]) -> Vec<Vec<f64>> {
    let n = spec.n_channels();
    let mu = spec.mu();
    let len = spec.length_samples;
    let mut out = vec![Vec::with_capacity(len); n];
    match spec.dynamics {
        Dynamics::CoupledLogistic => {
            let mut x: Vec<f64> = rngs.iter_mut().map(|r| r.random_range(0.1..0.9)).collect();
            let mut fx = vec![0.0; n];
            for t in 0..spec.transient + len {
                for i in 0..n {
                    fx[i] = logistic(x[i]);
                }
                for i in 0..n {
                    let total: f64 = mu[i].iter().sum();
                    let pull: f64 = mu[i].iter().zip(&fx).map(|(m, f)| m * f).sum();
                    x[i] = ((1.0 - total) * fx[i] + pull).clamp(0.0, 1.0);
                }
                if t >= spec.transient {
                    for i in 0..n {
                        out[i].push(x[i]);
                    }
                }
            }
        }
        Dynamics::CoupledOscillator { base_hz, spread_hz, gain } => {
            const SUBSTEPS: usize = 8;
            let omega: Vec<f64> = rngs
                .iter_mut()
                .map(|r| TAU * (base_hz + spread_hz * r.random_range(-1.0..1.0)))
                .collect();
            let mut theta: Vec<f64> = rngs.iter_mut().map(|r| TAU * r.random::<f64>()).collect();
            let dt = 1.0 / (spec.sampling_rate_hz * SUBSTEPS as f64);
            let mut dtheta = vec![0.0; n];
            for t in 0..spec.transient + len {
                for _ in 0..SUBSTEPS {
                    for i in 0..n {
                        let pull: f64 = (0..n).map(|j| mu[i][j] * (theta[j] - theta[i]).sin()).sum();
                        dtheta[i] = omega[i] + gain * pull;
                    }
                    for i in 0..n {
                        theta[i] = (theta[i] + dt * dtheta[i]).rem_euclid(TAU);
                    }
                }
                if t >= spec.transient {
                    for i in 0..n {
                        out[i].push(theta[i].sin());
                    }
                }
            }
        }
    }
    out
}

/// Simulates the spec and adds observation noise.
pub fn generate(spec: &CouplingSpec) -> Result<Recording> {
    spec.validate()?;
    let mut rngs = channel_rngs(spec.seed, spec.n_channels());
    let clean = run_dynamics(spec, &mut rngs);
    let channels = clean
        .into_iter()
        .zip(rngs.iter_mut())
        .zip(&spec.modality_map)
        .map(|((mut samples, rng), (name, modality))| {
            if spec.noise_sd > 0.0 {
                let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
                samples.iter_mut().for_each(|s| *s += noise.sample(rng));
            }
            Channel {
                name: name.clone(),
                modality: modality.clone(),
                samples,
            }
        })
        .collect();
    Recording::new(spec.trial_id.clone(), spec.sampling_rate_hz, channels)
}

/// Writes `<trial>.csv`, `<trial>.schema.json` and `<trial>.spec.json` into `dir`.
pub fn write_generated(spec: &CouplingSpec, rec: &Recording, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let id = rec.trial_id();
    write_recording(
        rec,
        &dir.join(format!("{id}.csv")),
        &dir.join(format!("{id}.schema.json")),
    )?;
    let path = dir.join(format!("{id}.spec.json"));
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::json("synth spec", e))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Coupling regime of a synthetic trial, defined on modalities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// The first three modalities couple pairwise.
    Dense,
    /// Only the first two modalities couple.
    Sparse,
    /// No coupling.
    None,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Dense, Regime::Sparse, Regime::None];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Dense => "dense",
            Regime::Sparse => "sparse",
            Regime::None => "none",
        }
    }

    fn coupled_modalities(self, n_modalities: usize) -> Vec<(usize, usize)> {
        match self {
            Regime::Dense => vec![(0, 1), (0, 2), (1, 2)],
            Regime::Sparse => vec![(0, 1)],
            Regime::None => vec![],
        }
        .into_iter()
        .filter(|&(a, b)| a < n_modalities && b < n_modalities)
        .collect()
    }

    /// Centre of the self-report scores assigned to this regime.
    fn score_centre(self) -> f64 {
        match self {
            Regime::Dense => 7.5,
            Regime::Sparse => 5.0,
            Regime::None => 2.5,
        }
    }
}

/// A labelled set of trials spread evenly over the coupling regimes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSpec {
    pub trials_per_regime: usize,
    pub modalities: Vec<String>,
    pub channels_per_modality: usize,
    /// Coupling between every channel pair of two coupled modalities.
    pub mu: f64,
    pub noise_sd: f64,
    pub duration_s: f64,
    pub sampling_rate_hz: f64,
    /// Half-width of the uniform jitter around each regime's score centre.
    pub score_jitter: f64,
    pub dynamics: Dynamics,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            trials_per_regime: 20,
            modalities: ["eeg", "emg", "resp", "gsr"].map(String::from).to_vec(),
            channels_per_modality: 2,
            mu: 0.2,
            noise_sd: 0.05,
            duration_s: 60.0,
            sampling_rate_hz: 128.0,
            score_jitter: 1.0,
            dynamics: Dynamics::CoupledLogistic,
            seed: 0,
        }
    }
}

/// Trials plus their labels and the regime of each trial.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub specs: Vec<CouplingSpec>,
    pub regimes: Vec<Regime>,
    pub labels: Vec<LabelRecord>,
}

impl DatasetSpec {
    /// Builds the per-trial specs and labels. Trial `k` draws from seed
    /// stream `k` of the dataset seed, labels from a separate stream.
    pub fn build(&self) -> Result<Dataset> {
        if self.trials_per_regime == 0 || self.channels_per_modality == 0 {
            return Err(Error::InvalidParameter(
                "dataset needs trials and channels".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.score_jitter) {
            return Err(Error::InvalidParameter(format!(
                "score jitter must lie in [0, 1] to keep regimes in distinct classes, got {}",
                self.score_jitter
            )));
        }
        let length = (self.duration_s * self.sampling_rate_hz).round() as usize;
        let mut modality_map = IndexMap::new();
        let mut owner = Vec::new();
        for (m, name) in self.modalities.iter().enumerate() {
            for c in 0..self.channels_per_modality {
                modality_map.insert(format!("{name}{}", c + 1), name.clone());
                owner.push(m);
            }
        }
        let n = owner.len();
        let mut label_rng = ChaCha8Rng::seed_from_u64(self.seed);
        label_rng.set_stream(u64::MAX);
        let mut seeds = ChaCha8Rng::seed_from_u64(self.seed);

        let mut specs = Vec::new();
        let mut regimes = Vec::new();
        let mut labels = Vec::new();
        let mut k = 0;
        for _ in 0..self.trials_per_regime {
            for regime in Regime::ALL {
                let pairs = regime.coupled_modalities(self.modalities.len());
                let coupling: Vec<Vec<f64>> = (0..n)
                    .map(|i| {
                        (0..n)
                            .map(|j| {
                                let (a, b) = (owner[i].min(owner[j]), owner[i].max(owner[j]));
                                if pairs.contains(&(a, b)) { self.mu } else { 0.0 }
                            })
                            .collect()
                    })
                    .collect();
                let trial_id = format!("trial{:03}", k + 1);
                let spec = CouplingSpec {
                    trial_id: trial_id.clone(),
                    modality_map: modality_map.clone(),
                    coupling_matrix: coupling,
                    coupling_scale: 1.0,
                    dynamics: self.dynamics.clone(),
                    noise_sd: self.noise_sd,
                    length_samples: length,
                    sampling_rate_hz: self.sampling_rate_hz,
                    transient: default_transient(),
                    seed: seeds.random(),
                };
                spec.validate()?;
                let jitter = |rng: &mut ChaCha8Rng| {
                    regime.score_centre() + self.score_jitter * rng.random_range(-1.0..1.0)
                };
                labels.push(LabelRecord {
                    trial_id,
                    valence: jitter(&mut label_rng),
                    arousal: jitter(&mut label_rng),
                });
                specs.push(spec);
                regimes.push(regime);
                k += 1;
            }
        }
        Ok(Dataset {
            specs,
            regimes,
            labels,
        })
    }

    /// Generates every trial into `dir` together with `labels.csv`.
    pub fn write(&self, dir: &Path) -> Result<Dataset> {
        let ds = self.build()?;
        for spec in &ds.specs {
            write_generated(spec, &generate(spec)?, dir)?;
        }
        write_labels(&ds.labels, &dir.join("labels.csv"))?;
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(mu: f64) -> Vec<Vec<f64>> {
        vec![vec![0.0, mu], vec![mu, 0.0]]
    }

    #[test]
    fn strong_coupling_synchronises() {
        for mu in [0.5, 0.35] {
            for seed in 0..10 {
                let x = simulate(&CouplingSpec::logistic("t", pair(mu), 0.0, 2000, seed)).unwrap();
                let gap = x[0].iter().zip(&x[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(gap < 1e-6, "mu {mu}, seed {seed}: {gap}");
            }
        }
    }

    #[test]
    fn uncoupled_channels_differ() {
        let x = simulate(&CouplingSpec::logistic("t", pair(0.0), 0.0, 1000, 1)).unwrap();
        let gap = x[0].iter().zip(&x[1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap > 0.5);
    }

    #[test]
    fn logistic_stays_in_unit_interval() {
        let c = vec![vec![0.0, 0.3, 0.2], vec![0.3, 0.0, 0.1], vec![0.2, 0.1, 0.0]];
        let x = simulate(&CouplingSpec::logistic("t", c, 0.0, 5000, 2)).unwrap();
        assert!(x.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = CouplingSpec::logistic("t", pair(0.2), 0.05, 500, 9);
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let mut osc = spec.clone();
        osc.dynamics = Dynamics::oscillator();
        assert_eq!(generate(&osc).unwrap(), generate(&osc).unwrap());
    }

    #[test]
    fn added_channels_leave_existing_ones_alone() {
        let two = generate(&CouplingSpec::logistic("t", pair(0.0), 0.05, 300, 4)).unwrap();
        let three = generate(&CouplingSpec::logistic("t", vec![vec![0.0; 3]; 3], 0.05, 300, 4)).unwrap();
        assert_eq!(two.channels()[0].samples, three.channels()[0].samples);
        assert_eq!(two.channels()[1].samples, three.channels()[1].samples);
    }

    #[test]
    fn invalid_specs() {
        let ok = CouplingSpec::logistic("t", pair(0.2), 0.0, 10, 0);
        assert!(ok.validate().is_ok());
        let mut s = ok.clone();
        s.coupling_matrix = vec![vec![0.0, 0.2], vec![0.1, 0.0]];
        assert!(s.validate().is_err());
        let mut s = ok.clone();
        s.coupling_scale = 5.0;
        assert!(s.validate().is_err());
        let c = vec![vec![0.0, 0.6, 0.5], vec![0.6, 0.0, 0.0], vec![0.5, 0.0, 0.0]];
        assert!(CouplingSpec::logistic("t", c, 0.0, 10, 0).validate().is_err());
        let mut s = ok.clone();
        s.coupling_matrix[0][0] = 0.1;
        assert!(s.validate().is_err());
        let mut s = ok;
        s.noise_sd = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn oscillators_lock_under_coupling() {
        let mut spec = CouplingSpec::logistic("t", pair(0.4), 0.0, 2000, 3);
        spec.dynamics = Dynamics::oscillator();
        let x = simulate(&spec).unwrap();
        assert!(x.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        let corr = |a: &[f64], b: &[f64]| {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
            let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
            let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
            cov / (va * vb).sqrt()
        };
        assert!(corr(&x[0], &x[1]) > 0.5);
    }

    #[test]
    fn dataset_layout() {
        let spec = DatasetSpec {
            trials_per_regime: 2,
            duration_s: 2.0,
            ..DatasetSpec::default()
        };
        let ds = spec.build().unwrap();
        assert_eq!(ds.specs.len(), 6);
        assert_eq!(ds.regimes[..3], Regime::ALL);
        let dense = &ds.specs[0].coupling_matrix;
        // eeg1 couples to emg1/emg2/resp1/resp2, not to gsr or its sibling
        assert_eq!(dense[0], vec![0.0, 0.0, 0.2, 0.2, 0.2, 0.2, 0.0, 0.0]);
        assert!(ds.specs[2].coupling_matrix.iter().flatten().all(|&c| c == 0.0));
        for (l, r) in ds.labels.iter().zip(&ds.regimes) {
            let centre = r.score_centre();
            assert!((l.valence - centre).abs() <= 1.0 && (l.arousal - centre).abs() <= 1.0);
        }
    }
}

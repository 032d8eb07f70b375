//! Pipeline configuration and named seed substreams.
//!
//! The file format is TOML (JSON is accepted when the file ends in
//! `.json`). Missing fields take their defaults; command-line flags are
//! applied on top of the loaded file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingConfig;
use crate::error::{Error, Result};
use crate::netbuild::{BinarizeRule, RqaParams, WeightMetric};
use crate::recurrence::Norm;

/// Which JRQA measure weights the network edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricChoice {
    Jdet,
    Jlam,
    Both,
}

impl MetricChoice {
    pub fn metrics(self) -> Vec<WeightMetric> {
        match self {
            MetricChoice::Jdet => vec![WeightMetric::Jdet],
            MetricChoice::Jlam => vec![WeightMetric::Jlam],
            MetricChoice::Both => WeightMetric::ALL.to_vec(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jdet" => Some(MetricChoice::Jdet),
            "jlam" => Some(MetricChoice::Jlam),
            "both" => Some(MetricChoice::Both),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaGridSpec {
    pub n_points: usize,
    /// Smallest grid value as a fraction of `lambda_max`.
    pub min_ratio: f64,
}

impl Default for LambdaGridSpec {
    fn default() -> Self {
        LambdaGridSpec {
            n_points: 20,
            min_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Window length in seconds.
    pub window_s: f64,
    /// Fraction of a window shared with the next one.
    pub overlap: f64,
    /// Recurrence rate every channel's threshold is calibrated to.
    pub target_rr: f64,
    pub norm: Norm,
    pub l_min: usize,
    pub v_min: usize,
    /// Fraction of present edges kept per window.
    pub binarize_rho: f64,
    /// Fixed weight cut-off; replaces `binarize_rho` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binarize_threshold: Option<f64>,
    pub weight_metric: MetricChoice,
    /// Rewired networks per small-worldness estimate.
    pub n_null: usize,
    pub lambda_grid: LambdaGridSpec,
    pub k_folds: usize,
    pub seed: u64,
    pub embedding: EmbeddingConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window_s: 5.0,
            overlap: 0.2,
            target_rr: 0.1,
            norm: Norm::L1,
            l_min: 3,
            v_min: 3,
            binarize_rho: 0.5,
            binarize_threshold: None,
            weight_metric: MetricChoice::Both,
            n_null: 20,
            lambda_grid: LambdaGridSpec::default(),
            k_folds: 5,
            seed: 0,
            embedding: EmbeddingConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?
        } else {
            toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises to TOML")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises to JSON")
    }

    pub fn rqa(&self) -> RqaParams {
        RqaParams {
            l_min: self.l_min,
            v_min: self.v_min,
        }
    }

    pub fn binarize_rule(&self) -> BinarizeRule {
        match self.binarize_threshold {
            Some(threshold) => BinarizeRule::Absolute { threshold },
            None => BinarizeRule::Proportional {
                rho: self.binarize_rho,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.window_s > 0.0 && self.window_s.is_finite()) {
            return bad(format!("window_s must be positive, got {}", self.window_s));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return bad(format!("overlap must be in [0, 1), got {}", self.overlap));
        }
        if !(self.target_rr > 0.0 && self.target_rr <= 1.0) {
            return bad(format!("target_rr must be in (0, 1], got {}", self.target_rr));
        }
        if self.l_min < 2 || self.v_min < 2 {
            return bad("l_min and v_min must be at least 2".into());
        }
        if !(0.0..=1.0).contains(&self.binarize_rho) {
            return bad(format!("binarize_rho must be in [0, 1], got {}", self.binarize_rho));
        }
        if self.binarize_threshold.is_some_and(|t| !t.is_finite()) {
            return bad("binarize_threshold must be finite".into());
        }
        if self.n_null == 0 {
            return bad("n_null must be at least 1".into());
        }
        if self.k_folds < 2 {
            return bad(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        let g = &self.lambda_grid;
        if g.n_points == 0 || !(g.min_ratio > 0.0 && g.min_ratio <= 1.0) {
            return bad("lambda_grid needs n_points >= 1 and min_ratio in (0, 1]".into());
        }
        let e = &self.embedding;
        if e.ami_bins < 2 || e.m_max == 0 {
            return bad("embedding needs ami_bins >= 2 and m_max >= 1".into());
        }
        Ok(())
    }
}

/// Derives an independent seed for a named consumer of randomness.
pub fn substream(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the seed through SplitMix64.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = seed ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let mut custom = cfg.clone();
        custom.binarize_threshold = Some(0.3);
        custom.embedding.tau_max = Some(40);
        let back: PipelineConfig = toml::from_str(&custom.to_toml()).unwrap();
        assert_eq!(back, custom);
    }

    #[test]
    fn partial_file_takes_defaults() {
        let cfg: PipelineConfig = toml::from_str("seed = 7\nweight_metric = \"jdet\"\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.weight_metric, MetricChoice::Jdet);
        assert_eq!(cfg.l_min, 3);
        assert!(toml::from_str::<PipelineConfig>("windw_s = 3\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = PipelineConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.overlap = 1.0;
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            k_folds: 1,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn substreams_differ() {
        let names = ["nulls", "cv", "synth"];
        for a in names {
            for b in names {
                assert_eq!(a == b, substream(1, a) == substream(1, b));
            }
        }
        assert_ne!(substream(1, "cv"), substream(2, "cv"));
        assert_eq!(substream(5, "cv"), substream(5, "cv"));
    }
}

//! Recording and label files, per-trial normalisation and sliding windows.
//!
//! A recording is a CSV with one column per channel and one sample per row,
//! accompanied by a JSON schema naming the sampling rate and the modality of
//! every channel. Labels are a separate CSV keyed by trial id.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One named channel of a recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub modality: String,
    pub samples: Vec<f64>,
}

/// A multichannel, uniformly sampled trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recording {
    trial_id: String,
    sampling_rate_hz: f64,
    channels: Vec<Channel>,
}

impl Recording {
    /// Builds a recording, enforcing equal channel lengths, unique names and a
    /// positive sampling rate.
    pub fn new(
        trial_id: impl Into<String>,
        sampling_rate_hz: f64,
        channels: Vec<Channel>,
    ) -> Result<Self> {
        if !(sampling_rate_hz.is_finite() && sampling_rate_hz > 0.0) {
            return Err(Error::Schema(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::Schema("recording has no channels".into()));
        }
        let len = channels[0].samples.len();
        if len == 0 {
            return Err(Error::Schema("recording has no samples".into()));
        }
        let mut seen = HashSet::new();
        for ch in &channels {
            if !seen.insert(ch.name.as_str()) {
                return Err(Error::Schema(format!("duplicate channel {:?}", ch.name)));
            }
            if ch.modality.is_empty() {
                return Err(Error::Schema(format!("channel {:?} has no modality", ch.name)));
            }
            if ch.samples.len() != len {
                return Err(Error::Schema(format!(
                    "channel {:?} has {} samples, expected {len}",
                    ch.name,
                    ch.samples.len()
                )));
            }
        }
        Ok(Recording {
            trial_id: trial_id.into(),
            sampling_rate_hz,
            channels,
        })
    }

    pub fn trial_id(&self) -> &str {
        &self.trial_id
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn duration_samples(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.name.clone()).collect()
    }

    /// Modality of each channel, in channel order.
    pub fn modalities(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.modality.clone()).collect()
    }

    pub fn schema(&self) -> RecordingSchema {
        RecordingSchema {
            sampling_rate_hz: self.sampling_rate_hz,
            channels: self
                .channels
                .iter()
                .map(|c| (c.name.clone(), c.modality.clone()))
                .collect(),
        }
    }

    /// Returns a copy with every channel z-scored over the whole trial, plus
    /// the names of channels that were constant (left as all zeros).
    pub fn z_scored(&self) -> (Recording, Vec<String>) {
        let mut constant = Vec::new();
        let channels = self
            .channels
            .iter()
            .map(|ch| {
                let samples = match z_score(&ch.samples) {
                    Some(z) => z,
                    None => {
                        log::warn!(
                            "trial {}: channel {} is constant; left as zeros",
                            self.trial_id,
                            ch.name
                        );
                        constant.push(ch.name.clone());
                        vec![0.0; ch.samples.len()]
                    }
                };
                Channel {
                    name: ch.name.clone(),
                    modality: ch.modality.clone(),
                    samples,
                }
            })
            .collect();
        let rec = Recording {
            trial_id: self.trial_id.clone(),
            sampling_rate_hz: self.sampling_rate_hz,
            channels,
        };
        (rec, constant)
    }
}

/// Sample mean and standard deviation (n - 1 denominator).
pub(crate) fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn z_score(x: &[f64]) -> Option<Vec<f64>> {
    let (mean, sd) = mean_std(x);
    if !(sd > 0.0) || !sd.is_finite() {
        return None;
    }
    Some(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Sidecar schema: sampling rate and channel to modality map, in column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingSchema {
    pub sampling_rate_hz: f64,
    pub channels: IndexMap<String, String>,
}

impl RecordingSchema {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
    }
}

/// Loads a recording CSV against its schema. The trial id is the file stem.
pub fn load_recording(path: &Path, schema_path: &Path) -> Result<Recording> {
    let schema = RecordingSchema::load(schema_path)?;
    let trial_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    recording_from_csv(&trial_id, &text, &schema, path)
}

fn recording_from_csv(
    trial_id: &str,
    text: &str,
    schema: &RecordingSchema,
    path: &Path,
) -> Result<Recording> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format {
            path: path.into(),
            row: 0,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();

    let mut seen = HashSet::new();
    for name in &header {
        if !seen.insert(name.as_str()) {
            return Err(Error::Schema(format!("duplicate CSV column {name:?}")));
        }
        if !schema.channels.contains_key(name) {
            return Err(Error::Schema(format!(
                "CSV column {name:?} is not declared in the schema"
            )));
        }
    }
    for name in schema.channels.keys() {
        if !seen.contains(name.as_str()) {
            return Err(Error::Schema(format!(
                "schema channel {name:?} is missing from the CSV"
            )));
        }
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format {
            path: path.into(),
            row,
            message: e.to_string(),
        })?;
        if record.len() != header.len() {
            return Err(Error::Format {
                path: path.into(),
                row,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Format {
                    path: path.into(),
                    row,
                    message: format!("missing cell in column {:?}", header[c]),
                });
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row,
                column: header[c].clone(),
                message: format!("{cell:?} is not a number"),
            })?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Format {
            path: path.into(),
            row: 1,
            message: "no data rows".into(),
        });
    }

    let channels = schema
        .channels
        .iter()
        .map(|(name, modality)| {
            let c = header.iter().position(|h| h == name).expect("checked above");
            Channel {
                name: name.clone(),
                modality: modality.clone(),
                samples: std::mem::take(&mut columns[c]),
            }
        })
        .collect();
    Recording::new(trial_id, schema.sampling_rate_hz, channels)
}

/// Writes a recording as CSV plus its sidecar schema.
pub fn write_recording(rec: &Recording, path: &Path, schema_path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(rec.channels.iter().map(|c| c.name.as_str()))
        .expect("in-memory write");
    for t in 0..rec.duration_samples() {
        writer
            .write_record(rec.channels.iter().map(|c| c.samples[t].to_string()))
            .expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory write");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let schema = serde_json::to_string_pretty(&rec.schema()).expect("schema serialises");
    fs::write(schema_path, schema + "\n").map_err(|e| Error::io(schema_path, e))
}

/// A self-reported (valence, arousal) pair for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub trial_id: String,
    pub valence: f64,
    pub arousal: f64,
}

pub fn load_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    labels_from_csv(&text, path)
}

fn labels_from_csv(text: &str, path: &Path) -> Result<Vec<LabelRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Format {
        path: path.into(),
        row: 0,
        message: e.to_string(),
    })?;
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::Schema(format!("labels file {} lacks column {name:?}", path.display()))
        })
    };
    let (ci, cv, ca) = (col("trial_id")?, col("valence")?, col("arousal")?);

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Format {
            path: path.into(),
            row,
            message: e.to_string(),
        })?;
        let score = |c: usize, column: &str| -> Result<f64> {
            let cell = record.get(c).unwrap_or("");
            cell.parse::<f64>().map_err(|_| Error::Parse {
                path: path.into(),
                row,
                column: column.into(),
                message: format!("{cell:?} is not a number"),
            })
        };
        let trial_id = record.get(ci).unwrap_or("").to_owned();
        let valence = score(cv, "valence")?;
        let arousal = score(ca, "arousal")?;
        for (field, value) in [("valence", valence), ("arousal", arousal)] {
            if !(1.0..=9.0).contains(&value) {
                return Err(Error::ScoreRange {
                    trial_id,
                    field,
                    value,
                });
            }
        }
        if !seen.insert(trial_id.clone()) {
            return Err(Error::DuplicateTrial(trial_id));
        }
        out.push(LabelRecord {
            trial_id,
            valence,
            arousal,
        });
    }
    Ok(out)
}

pub fn write_labels(labels: &[LabelRecord], path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["trial_id", "valence", "arousal"])
        .expect("in-memory write");
    for l in labels {
        writer
            .write_record([l.trial_id.clone(), l.valence.to_string(), l.arousal.to_string()])
            .expect("in-memory write");
    }
    let bytes = writer.into_inner().expect("in-memory write");
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// A slice of every channel over `[start_sample, start_sample + length_samples)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub index: usize,
    pub start_sample: usize,
    pub length_samples: usize,
    pub channels: Vec<Vec<f64>>,
}

/// Window length and stride in samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPlan {
    pub length: usize,
    pub stride: usize,
    pub count: usize,
}

/// Resolves window length, stride and count for a recording of
/// `duration_samples` samples. Trailing samples that cannot fill a whole
/// window are dropped.
pub fn plan_windows(
    duration_samples: usize,
    sampling_rate_hz: f64,
    window_s: f64,
    overlap_fraction: f64,
) -> Result<WindowPlan> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::InvalidParameter(format!(
            "overlap fraction must be in [0, 1), got {overlap_fraction}"
        )));
    }
    let length = (window_s * sampling_rate_hz).round();
    if !(length >= 2.0) {
        return Err(Error::InvalidParameter(format!(
            "window of {window_s} s at {sampling_rate_hz} Hz is shorter than 2 samples"
        )));
    }
    let stride = (window_s * (1.0 - overlap_fraction) * sampling_rate_hz).round();
    if stride < 1.0 {
        return Err(Error::InvalidParameter("window stride rounds to zero samples".into()));
    }
    let (length, stride) = (length as usize, stride as usize);
    if length > duration_samples {
        return Err(Error::InvalidParameter(format!(
            "window of {length} samples is longer than the recording ({duration_samples} samples)"
        )));
    }
    let count = (duration_samples - length) / stride + 1;
    Ok(WindowPlan {
        length,
        stride,
        count,
    })
}

/// Z-scores every channel over the trial, then cuts overlapping windows.
pub fn segment_windows(
    recording: &Recording,
    window_s: f64,
    overlap_fraction: f64,
) -> Result<Vec<Window>> {
    let plan = plan_windows(
        recording.duration_samples(),
        recording.sampling_rate_hz,
        window_s,
        overlap_fraction,
    )?;
    let (normalized, _) = recording.z_scored();
    Ok(cut_windows(&normalized, plan))
}

pub(crate) fn cut_windows(recording: &Recording, plan: WindowPlan) -> Vec<Window> {
    (0..plan.count)
        .map(|index| {
            let start = index * plan.stride;
            Window {
                index,
                start_sample: start,
                length_samples: plan.length,
                channels: recording
                    .channels
                    .iter()
                    .map(|c| c.samples[start..start + plan.length].to_vec())
                    .collect(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(pairs: &[(&str, &str)]) -> RecordingSchema {
        RecordingSchema {
            sampling_rate_hz: 128.0,
            channels: pairs
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
        }
    }

    fn recording(rate: f64, len: usize) -> Recording {
        let samples = (0..len).map(|i| (i as f64 * 0.1).sin()).collect();
        Recording::new(
            "t",
            rate,
            vec![Channel {
                name: "a".into(),
                modality: "eeg".into(),
                samples,
            }],
        )
        .unwrap()
    }

    #[test]
    fn loads_two_channel_csv() {
        let mut text = String::from("eeg1,emg1\n");
        for i in 0..10 {
            text.push_str(&format!("{},{}\n", i, 2 * i));
        }
        let s = schema(&[("emg1", "emg"), ("eeg1", "eeg")]);
        let rec = recording_from_csv("t01", &text, &s, Path::new("t01.csv")).unwrap();
        assert_eq!(rec.duration_samples(), 10);
        // schema order, not CSV order
        assert_eq!(rec.channel_names(), vec!["emg1", "eeg1"]);
        assert_eq!(rec.channels()[0].samples[3], 6.0);
        assert_eq!(rec.channels()[1].modality, "eeg");
    }

    #[test]
    fn ragged_row_is_format_error_with_row_index() {
        let text = "a,b\n1,2\n3\n5,6\n";
        let s = schema(&[("a", "x"), ("b", "y")]);
        match recording_from_csv("t", text, &s, Path::new("t.csv")) {
            Err(Error::Format { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected format error, got {other:?}"),
        }
        let text = "a,b\n1,2\n3,\n";
        assert!(matches!(
            recording_from_csv("t", text, &s, Path::new("t.csv")),
            Err(Error::Format { row: 2, .. })
        ));
    }

    #[test]
    fn schema_mismatch_both_directions() {
        let s = schema(&[("eeg1", "eeg"), ("emg1", "emg")]);
        let err = recording_from_csv("t", "emg1\n1\n", &s, Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Schema(ref m) if m.contains("eeg1")));
        let s = schema(&[("emg1", "emg")]);
        let err = recording_from_csv("t", "emg1,x\n1,2\n", &s, Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn non_numeric_cell_is_parse_error() {
        let s = schema(&[("a", "x")]);
        let err = recording_from_csv("t", "a\n1\nfoo\n", &s, Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn label_parsing_and_errors() {
        let p = Path::new("labels.csv");
        let ok = labels_from_csv("trial_id,valence,arousal\nt01,7.5,2.0\n", p).unwrap();
        assert_eq!(
            ok,
            vec![LabelRecord {
                trial_id: "t01".into(),
                valence: 7.5,
                arousal: 2.0
            }]
        );
        let err = labels_from_csv("trial_id,valence,arousal\nt02,9.5,2.0\n", p).unwrap_err();
        assert!(matches!(err, Error::ScoreRange { field: "valence", .. }));
        let err =
            labels_from_csv("trial_id,valence,arousal\nt03,5,5\nt03,6,6\n", p).unwrap_err();
        assert!(matches!(err, Error::DuplicateTrial(ref t) if t == "t03"));
    }

    #[test]
    fn sixty_seconds_at_128hz() {
        let rec = recording(128.0, 7680);
        let w = segment_windows(&rec, 5.0, 0.2).unwrap();
        assert_eq!(w.len(), 14);
        assert!(w.iter().all(|w| w.length_samples == 640));
        assert_eq!(w[1].start_sample - w[0].start_sample, 512);
        assert_eq!(w[13].start_sample + 640, 13 * 512 + 640);
    }

    #[test]
    fn window_boundaries() {
        assert_eq!(segment_windows(&recording(128.0, 640), 5.0, 0.2).unwrap().len(), 1);
        assert!(segment_windows(&recording(128.0, 384), 5.0, 0.2).is_err());
        assert!(segment_windows(&recording(128.0, 640), 5.0, 1.0).is_err());
        assert!(segment_windows(&recording(1.0, 10), 1.0, 0.2).is_err());
        // 2-sample window with 0.9 overlap rounds its stride to zero
        assert!(plan_windows(10, 1.0, 2.0, 0.9).is_err());
    }

    #[test]
    fn constant_channel_left_as_zeros() {
        let rec = Recording::new(
            "t",
            1.0,
            vec![Channel {
                name: "c".into(),
                modality: "m".into(),
                samples: vec![3.0; 8],
            }],
        )
        .unwrap();
        let (z, constant) = rec.z_scored();
        assert_eq!(constant, vec!["c".to_string()]);
        assert!(z.channels()[0].samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recording_invariants() {
        let ch = |name: &str, n: usize| Channel {
            name: name.into(),
            modality: "m".into(),
            samples: vec![0.0; n],
        };
        assert!(Recording::new("t", 1.0, vec![ch("a", 3), ch("b", 4)]).is_err());
        assert!(Recording::new("t", 1.0, vec![ch("a", 3), ch("a", 3)]).is_err());
        assert!(Recording::new("t", 0.0, vec![ch("a", 3)]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn windows_tile_a_prefix(len in 20usize..2000, rate in 1.0f64..64.0,
                                     window_s in 0.1f64..4.0, overlap in 0.0f64..0.95) {
                if let Ok(plan) = plan_windows(len, rate, window_s, overlap) {
                    let rec = recording(rate, len);
                    let ws = segment_windows(&rec, window_s, overlap).unwrap();
                    prop_assert_eq!(ws.len(), plan.count);
                    for pair in ws.windows(2) {
                        prop_assert_eq!(pair[1].start_sample - pair[0].start_sample, plan.stride);
                    }
                    let last = ws.last().unwrap();
                    prop_assert!(last.start_sample + last.length_samples <= len);
                    // one more window would overrun
                    prop_assert!(last.start_sample + plan.stride + plan.length > len);
                }
            }

            #[test]
            fn z_scoring_centres_and_scales(xs in proptest::collection::vec(-1e3f64..1e3, 3..300)) {
                let rec = Recording::new("t", 1.0, vec![Channel {
                    name: "a".into(), modality: "m".into(), samples: xs.clone(),
                }]).unwrap();
                let (z, constant) = rec.z_scored();
                if constant.is_empty() {
                    let (m, s) = mean_std(&z.channels()[0].samples);
                    prop_assert!(m.abs() < 1e-9);
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}

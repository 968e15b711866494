//! Dataset types: paired SAR / multi-spectral patches with LCZ labels,
//! balanced train/test splits, synthetic fixtures and the on-disk container.

mod container;
mod split;
mod synthetic;

pub use container::{load_so2sat, write_container};
pub use split::{balanced_subsample, load_split_dir, write_split_dir};
pub use synthetic::make_synthetic;

use crate::error::{Error, Result};
use ndarray::Array3;

pub const PATCH: usize = 32;
pub const SAR_CHANNELS: usize = 8;
pub const MS_CHANNELS: usize = 10;
pub const CLASS_COUNT: usize = 17;

/// One paired patch: SAR [32,32,8], multi-spectral [32,32,10], label 0..=16.
///
/// Labels are 0-based internally; the published class IDs 1-10 and A-G map
/// in order onto 0-16.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sar: Array3<f64>,
    pub ms: Array3<f64>,
    pub label: u8,
}

impl Sample {
    /// Validates the shape/range invariants before constructing.
    pub fn new(sar: Array3<f64>, ms: Array3<f64>, label: u8) -> Result<Sample> {
        if sar.shape() != [PATCH, PATCH, SAR_CHANNELS] {
            return Err(Error::data(format!(
                "sar tensor has shape {:?}, expected [{PATCH}, {PATCH}, {SAR_CHANNELS}]",
                sar.shape()
            )));
        }
        if ms.shape() != [PATCH, PATCH, MS_CHANNELS] {
            return Err(Error::data(format!(
                "ms tensor has shape {:?}, expected [{PATCH}, {PATCH}, {MS_CHANNELS}]",
                ms.shape()
            )));
        }
        if usize::from(label) >= CLASS_COUNT {
            return Err(Error::data(format!("label {label} outside 0..={}", CLASS_COUNT - 1)));
        }
        if sar.iter().chain(ms.iter()).any(|v| !v.is_finite()) {
            return Err(Error::data("sample contains non-finite values".to_string()));
        }
        Ok(Sample { sar, ms, label })
    }

    /// Paper-style class ID for this sample's label ("1"-"10", "A"-"G").
    pub fn paper_class_id(&self) -> &'static str {
        paper_class_id(self.label)
    }
}

/// Published class ID for a 0-based label.
pub fn paper_class_id(label: u8) -> &'static str {
    const IDS: [&str; CLASS_COUNT] = [
        "1", "2", "3", "4", "5", "6", "7", "8", "9", "10", "A", "B", "C", "D", "E", "F", "G",
    ];
    IDS[usize::from(label)]
}

/// Per-channel standardization statistics, computed on a training split only.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub sar_mean: Vec<f64>,
    pub sar_std: Vec<f64>,
    pub ms_mean: Vec<f64>,
    pub ms_std: Vec<f64>,
}

impl NormStats {
    /// Identity transform (mean 0, std 1 for every channel).
    pub fn identity() -> NormStats {
        NormStats {
            sar_mean: vec![0.0; SAR_CHANNELS],
            sar_std: vec![1.0; SAR_CHANNELS],
            ms_mean: vec![0.0; MS_CHANNELS],
            ms_std: vec![1.0; MS_CHANNELS],
        }
    }

    /// Per-channel mean and population std over all pixels of `samples`.
    /// Channels with zero variance get std 1 so standardization stays finite.
    pub fn from_samples(samples: &[Sample]) -> NormStats {
        let mut stats = NormStats::identity();
        if samples.is_empty() {
            return stats;
        }
        let per_channel = |get: &dyn Fn(&Sample) -> &Array3<f64>, c: usize| -> (f64, f64) {
            let mut sum = 0.0;
            let mut count = 0usize;
            for s in samples {
                for v in get(s).slice(ndarray::s![.., .., c]).iter() {
                    sum += v;
                    count += 1;
                }
            }
            let mean = sum / count as f64;
            let mut var = 0.0;
            for s in samples {
                for v in get(s).slice(ndarray::s![.., .., c]).iter() {
                    let d = v - mean;
                    var += d * d;
                }
            }
            let std = (var / count as f64).sqrt();
            (mean, if std > 1e-12 { std } else { 1.0 })
        };
        for c in 0..SAR_CHANNELS {
            let (m, s) = per_channel(&|s: &Sample| &s.sar, c);
            stats.sar_mean[c] = m;
            stats.sar_std[c] = s;
        }
        for c in 0..MS_CHANNELS {
            let (m, s) = per_channel(&|s: &Sample| &s.ms, c);
            stats.ms_mean[c] = m;
            stats.ms_std[c] = s;
        }
        stats
    }

    /// Returns a standardized copy of `sample`.
    pub fn apply(&self, sample: &Sample) -> Sample {
        let mut sar = sample.sar.clone();
        for c in 0..SAR_CHANNELS {
            let (m, s) = (self.sar_mean[c], self.sar_std[c]);
            sar.slice_mut(ndarray::s![.., .., c]).mapv_inplace(|v| (v - m) / s);
        }
        let mut ms = sample.ms.clone();
        for c in 0..MS_CHANNELS {
            let (m, s) = (self.ms_mean[c], self.ms_std[c]);
            ms.slice_mut(ndarray::s![.., .., c]).mapv_inplace(|v| (v - m) / s);
        }
        Sample { sar, ms, label: sample.label }
    }
}

/// Where a split came from and how to reproduce it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub source: String,
    pub seed: u64,
    pub per_class: usize,
    pub test_size: usize,
    pub norm: NormStats,
}

impl Provenance {
    /// key=value lines, floats comma-joined, suitable for a sidecar file.
    pub fn to_key_values(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",");
        format!(
            "source={}\nseed={}\nper_class={}\ntest_size={}\nsar_mean={}\nsar_std={}\nms_mean={}\nms_std={}\n",
            self.source,
            self.seed,
            self.per_class,
            self.test_size,
            join(&self.norm.sar_mean),
            join(&self.norm.sar_std),
            join(&self.norm.ms_mean),
            join(&self.norm.ms_std),
        )
    }

    pub fn from_key_values(text: &str) -> Result<Provenance> {
        let mut map = std::collections::BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(Error::Parse {
                line: i + 1,
                msg: "expected key=value".to_string(),
            })?;
            map.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| -> Result<String> {
            map.get(k).cloned().ok_or_else(|| Error::data(format!("provenance missing key {k}")))
        };
        let floats = |k: &str| -> Result<Vec<f64>> {
            get(k)?
                .split(',')
                .map(|t| t.parse::<f64>().map_err(|_| Error::data(format!("bad float in {k}"))))
                .collect()
        };
        let int = |k: &str| -> Result<u64> {
            get(k)?.parse::<u64>().map_err(|_| Error::data(format!("bad integer in {k}")))
        };
        Ok(Provenance {
            source: get("source")?,
            seed: int("seed")?,
            per_class: int("per_class")? as usize,
            test_size: int("test_size")? as usize,
            norm: NormStats {
                sar_mean: floats("sar_mean")?,
                sar_std: floats("sar_std")?,
                ms_mean: floats("ms_mean")?,
                ms_std: floats("ms_std")?,
            },
        })
    }
}

/// A train/test split with reproduction metadata.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub class_count: usize,
    pub provenance: Provenance,
}

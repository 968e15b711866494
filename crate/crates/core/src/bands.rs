//! Band grouping: partition the 8 SAR and 10 multi-spectral channels into
//! 7 physically motivated groups, each processed by its own image encoder.
//!
//! Channel indices in [`BandGroupSpec`] are 1-based, matching how band
//! numbers are usually written for Sentinel products; conversion to 0-based
//! offsets happens inside [`split_bands`].

use crate::data::{Sample, MS_CHANNELS, SAR_CHANNELS};
use crate::error::{Error, Result};
use ndarray::Array3;

/// Which input tensor a band group selects channels from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Modality {
    Sar,
    Ms,
}

impl Modality {
    pub fn channel_count(self) -> usize {
        match self {
            Modality::Sar => SAR_CHANNELS,
            Modality::Ms => MS_CHANNELS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Sar => "SAR",
            Modality::Ms => "MS",
        }
    }
}

/// A named subset of channels of one modality.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct BandGroupSpec {
    /// Short identifier (VH, VV, PolSAR, RGB, VRE, NIR, SWIR for the defaults).
    pub name: String,
    pub modality: Modality,
    /// 1-based channel indices, strictly increasing.
    pub channels: Vec<usize>,
    /// Group phrase used inside textual prompts (e.g. "red green blue").
    pub prompt_name: String,
}

impl BandGroupSpec {
    pub fn new(
        name: &str,
        modality: Modality,
        channels: &[usize],
        prompt_name: &str,
    ) -> BandGroupSpec {
        BandGroupSpec {
            name: name.to_string(),
            modality,
            channels: channels.to_vec(),
            prompt_name: prompt_name.to_string(),
        }
    }

    /// Channel count C_i of this group.
    pub fn width(&self) -> usize {
        self.channels.len()
    }

    fn validate(&self) -> Result<()> {
        if self.channels.is_empty() {
            return Err(Error::argument(format!("group {}: empty channel list", self.name)));
        }
        let max = self.modality.channel_count();
        for &c in &self.channels {
            if c == 0 || c > max {
                return Err(Error::argument(format!(
                    "group {}: channel {} out of range 1..={} for {}",
                    self.name,
                    c,
                    max,
                    self.modality.as_str()
                )));
            }
        }
        if !self.channels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::argument(format!(
                "group {}: channels must be strictly increasing",
                self.name
            )));
        }
        Ok(())
    }
}

/// One sample after band grouping: 7 tensors of shape [32, 32, C_i].
#[derive(Debug, Clone)]
pub struct GroupedSample {
    pub groups: Vec<Array3<f64>>,
    pub label: u8,
}

/// The default 7-group partition.
///
/// SAR: VH = bands 1,2,5; VV = bands 3,4,6; PolSAR = bands 7,8.
/// MS: RGB = bands 1,2,3; VRE = bands 4,5,6,8; NIR = band 7; SWIR = bands 9,10.
///
/// Order is fixed as (VH, VV, PolSAR, RGB, VRE, NIR, SWIR) everywhere:
/// feature concatenation and the prompt catalog rely on it.
pub fn default_band_groups() -> Vec<BandGroupSpec> {
    vec![
        BandGroupSpec::new("VH", Modality::Sar, &[1, 2, 5], "vh"),
        BandGroupSpec::new("VV", Modality::Sar, &[3, 4, 6], "vv"),
        BandGroupSpec::new("PolSAR", Modality::Sar, &[7, 8], "pol"),
        BandGroupSpec::new("RGB", Modality::Ms, &[1, 2, 3], "red green blue"),
        BandGroupSpec::new("VRE", Modality::Ms, &[4, 5, 6, 8], "vegetation red edge"),
        BandGroupSpec::new("NIR", Modality::Ms, &[7], "near infrared"),
        BandGroupSpec::new("SWIR", Modality::Ms, &[9, 10], "short wave infrared"),
    ]
}

/// Checks that the specs form a partition: within each modality the channel
/// lists are pairwise disjoint and together cover every channel.
pub fn validate_partition(specs: &[BandGroupSpec]) -> Result<()> {
    for spec in specs {
        spec.validate()?;
    }
    let mut names = std::collections::BTreeSet::new();
    for spec in specs {
        if !names.insert(spec.name.clone()) {
            return Err(Error::argument(format!("duplicate group name {}", spec.name)));
        }
    }
    for modality in [Modality::Sar, Modality::Ms] {
        let n = modality.channel_count();
        let mut seen = vec![false; n];
        for spec in specs.iter().filter(|s| s.modality == modality) {
            for &c in &spec.channels {
                if seen[c - 1] {
                    return Err(Error::argument(format!(
                        "{} channel {} assigned to more than one group",
                        modality.as_str(),
                        c
                    )));
                }
                seen[c - 1] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::argument(format!(
                "{} channel {} not covered by any group",
                modality.as_str(),
                missing + 1
            )));
        }
    }
    Ok(())
}

/// Splits a sample into per-group tensors, channels taken in spec order.
pub fn split_bands(sample: &Sample, specs: &[BandGroupSpec]) -> Result<GroupedSample> {
    let mut groups = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let source = match spec.modality {
            Modality::Sar => &sample.sar,
            Modality::Ms => &sample.ms,
        };
        let (h, w) = (source.shape()[0], source.shape()[1]);
        let mut out = Array3::zeros((h, w, spec.width()));
        for (k, &c) in spec.channels.iter().enumerate() {
            out.slice_mut(ndarray::s![.., .., k])
                .assign(&source.slice(ndarray::s![.., .., c - 1]));
        }
        groups.push(out);
    }
    Ok(GroupedSample { groups, label: sample.label })
}

/// Writes the band table as one line per group:
/// `name<TAB>modality<TAB>comma-separated 1-based indices<TAB>prompt name`.
pub fn format_band_config(specs: &[BandGroupSpec]) -> String {
    let mut out = String::new();
    for spec in specs {
        let idx: Vec<String> = spec.channels.iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            spec.name,
            spec.modality.as_str(),
            idx.join(","),
            spec.prompt_name
        ));
    }
    out
}

/// Parses a band table written by [`format_band_config`]. Blank lines and
/// lines starting with `#` are skipped. The result is partition-validated.
pub fn parse_band_config(text: &str) -> Result<Vec<BandGroupSpec>> {
    let mut specs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected 4 tab-separated fields, found {}", parts.len()),
            });
        }
        let modality = match parts[1] {
            "SAR" => Modality::Sar,
            "MS" => Modality::Ms,
            other => {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown modality {other:?} (expected SAR or MS)"),
                })
            }
        };
        let channels = parts[2]
            .split(',')
            .map(|tok| {
                tok.trim().parse::<usize>().map_err(|_| Error::Parse {
                    line: i + 1,
                    msg: format!("bad channel index {tok:?}"),
                })
            })
            .collect::<Result<Vec<usize>>>()?;
        specs.push(BandGroupSpec {
            name: parts[0].to_string(),
            modality,
            channels,
            prompt_name: parts[3].to_string(),
        });
    }
    validate_partition(&specs)?;
    Ok(specs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sample;
    use ndarray::Array3;

    fn ramp_sample() -> Sample {
        // sar[.,.,c] == c+1 and ms[.,.,c] == 100 + c+1 so every value names
        // its 1-based source channel.
        let sar = Array3::from_shape_fn((32, 32, 8), |(_, _, c)| (c + 1) as f64);
        let ms = Array3::from_shape_fn((32, 32, 10), |(_, _, c)| 100.0 + (c + 1) as f64);
        Sample::new(sar, ms, 3).unwrap()
    }

    #[test]
    fn default_groups_match_published_indices() {
        let specs = default_band_groups();
        assert_eq!(specs.len(), 7);
        assert_eq!(specs[0], BandGroupSpec::new("VH", Modality::Sar, &[1, 2, 5], "vh"));
        assert_eq!(specs[1], BandGroupSpec::new("VV", Modality::Sar, &[3, 4, 6], "vv"));
        assert_eq!(specs[2], BandGroupSpec::new("PolSAR", Modality::Sar, &[7, 8], "pol"));
        assert_eq!(specs[3], BandGroupSpec::new("RGB", Modality::Ms, &[1, 2, 3], "red green blue"));
        assert_eq!(
            specs[4],
            BandGroupSpec::new("VRE", Modality::Ms, &[4, 5, 6, 8], "vegetation red edge")
        );
        assert_eq!(specs[5], BandGroupSpec::new("NIR", Modality::Ms, &[7], "near infrared"));
        assert_eq!(specs[6], BandGroupSpec::new("SWIR", Modality::Ms, &[9, 10], "short wave infrared"));
    }

    #[test]
    fn default_groups_form_partition() {
        let specs = default_band_groups();
        validate_partition(&specs).unwrap();
        let sar_union: Vec<usize> = specs
            .iter()
            .filter(|s| s.modality == Modality::Sar)
            .flat_map(|s| s.channels.iter().copied())
            .collect();
        let mut sorted = sar_union.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![1, 2, 3, 4, 5, 6, 7, 8]);
        let widths: Vec<usize> = specs.iter().map(|s| s.width()).collect();
        assert_eq!(widths, vec![3, 3, 2, 3, 4, 1, 2]);
    }

    #[test]
    fn split_selects_listed_channels_in_order() {
        let sample = ramp_sample();
        let specs = default_band_groups();
        let grouped = split_bands(&sample, &specs).unwrap();
        assert_eq!(grouped.label, 3);
        // VH group must hold constant planes 1, 2, 5.
        let vh = &grouped.groups[0];
        assert_eq!(vh.shape(), &[32, 32, 3]);
        assert_eq!(vh[[0, 0, 0]], 1.0);
        assert_eq!(vh[[10, 20, 1]], 2.0);
        assert_eq!(vh[[31, 31, 2]], 5.0);
        // MS NIR group is band 7 only.
        let nir = &grouped.groups[5];
        assert_eq!(nir.shape(), &[32, 32, 1]);
        assert_eq!(nir[[5, 5, 0]], 107.0);
    }

    #[test]
    fn split_shapes_follow_group_widths() {
        let sample = ramp_sample();
        let grouped = split_bands(&sample, &default_band_groups()).unwrap();
        let shapes: Vec<Vec<usize>> = grouped.groups.iter().map(|g| g.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![32, 32, 3],
                vec![32, 32, 3],
                vec![32, 32, 2],
                vec![32, 32, 3],
                vec![32, 32, 4],
                vec![32, 32, 1],
                vec![32, 32, 2],
            ]
        );
    }

    #[test]
    fn reassembling_groups_recovers_every_channel() {
        let sample = ramp_sample();
        let specs = default_band_groups();
        let grouped = split_bands(&sample, &specs).unwrap();
        for modality in [Modality::Sar, Modality::Ms] {
            let mut recovered: Vec<f64> = Vec::new();
            for (spec, tensor) in specs.iter().zip(&grouped.groups) {
                if spec.modality == modality {
                    for k in 0..spec.width() {
                        recovered.push(tensor[[0, 0, k]]);
                    }
                }
            }
            recovered.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let expected: Vec<f64> = match modality {
                Modality::Sar => (1..=8).map(|c| c as f64).collect(),
                Modality::Ms => (1..=10).map(|c| 100.0 + c as f64).collect(),
            };
            assert_eq!(recovered, expected);
        }
    }

    #[test]
    fn out_of_range_channel_is_rejected_by_name() {
        let sample = ramp_sample();
        let mut specs = default_band_groups();
        specs[2].channels = vec![7, 9]; // SAR has 8 channels
        let err = split_bands(&sample, &specs).unwrap_err();
        assert!(err.to_string().contains("PolSAR"), "{err}");
    }

    #[test]
    fn partition_check_catches_overlap_and_gap() {
        let mut specs = default_band_groups();
        specs[0].channels = vec![1, 2, 6]; // 6 collides with VV, 5 uncovered
        let err = validate_partition(&specs).unwrap_err();
        assert!(err.to_string().contains("channel 6"), "{err}");
        let mut specs = default_band_groups();
        specs[6].channels = vec![9]; // MS channel 10 uncovered
        let err = validate_partition(&specs).unwrap_err();
        assert!(err.to_string().contains("channel 10"), "{err}");
    }

    #[test]
    fn band_config_round_trips() {
        let specs = default_band_groups();
        let text = format_band_config(&specs);
        let parsed = parse_band_config(&text).unwrap();
        assert_eq!(parsed, specs);
    }

    #[test]
    fn band_config_parse_errors_carry_line_numbers() {
        let err = parse_band_config("VH\tSAR\t1,2,5\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected error {other:?}"),
        }
        let text = "VH\tSAR\t1,2,5\tvh\nVV\tSONAR\t3,4,6\tvv\n";
        let err = parse_band_config(text).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }
}

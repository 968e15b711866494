//! Balanced subsampling into disjoint train/test sets.

use super::{container, DatasetSplit, NormStats, Provenance, Sample, CLASS_COUNT};
use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Draws exactly `per_class` training samples per class by a seeded uniform
/// shuffle, then `test_size` test samples uniformly from the remainder
/// (without class balancing). Train and test never share a sample.
///
/// Standardization statistics are computed on the training half and stored in
/// the returned provenance.
pub fn balanced_subsample(
    dataset: &[Sample],
    per_class: usize,
    test_size: usize,
    seed: u64,
    source: &str,
) -> Result<DatasetSplit> {
    let mut counts = [0usize; CLASS_COUNT];
    for s in dataset {
        counts[usize::from(s.label)] += 1;
    }
    let present: Vec<usize> = (0..CLASS_COUNT).filter(|&k| counts[k] > 0).collect();
    for &k in &present {
        if counts[k] < per_class {
            return Err(Error::data(format!(
                "class {} has only {} samples, need {per_class}",
                super::paper_class_id(k as u8),
                counts[k]
            )));
        }
    }
    let train_total: usize = present.len() * per_class;
    if dataset.len() - train_total < test_size {
        return Err(Error::data(format!(
            "remainder holds {} samples, need {test_size} for the test set",
            dataset.len() - train_total
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);

    let mut taken = [0usize; CLASS_COUNT];
    let mut train_idx = Vec::with_capacity(train_total);
    let mut rest = Vec::with_capacity(dataset.len() - train_total);
    for &i in &order {
        let k = usize::from(dataset[i].label);
        if taken[k] < per_class {
            taken[k] += 1;
            train_idx.push(i);
        } else {
            rest.push(i);
        }
    }
    let test_idx = &rest[..test_size];

    let train: Vec<Sample> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let test: Vec<Sample> = test_idx.iter().map(|&i| dataset[i].clone()).collect();
    debug_assert!(train_idx.iter().all(|i| !test_idx.contains(i)));

    let norm = NormStats::from_samples(&train);
    Ok(DatasetSplit {
        train,
        test,
        class_count: CLASS_COUNT,
        provenance: Provenance {
            source: source.to_string(),
            seed,
            per_class,
            test_size,
            norm,
        },
    })
}

/// Writes a split as a directory: `train.h5`, `test.h5` (same container
/// layout as the source data) and `provenance.txt` (key=value lines).
pub fn write_split_dir(split: &DatasetSplit, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    container::write_container(&split.train, &dir.join("train.h5"))?;
    container::write_container(&split.test, &dir.join("test.h5"))?;
    std::fs::write(dir.join("provenance.txt"), split.provenance.to_key_values())?;
    Ok(())
}

/// Loads a split directory written by [`write_split_dir`].
pub fn load_split_dir(dir: &Path) -> Result<DatasetSplit> {
    let train = container::load_so2sat(&dir.join("train.h5"))?;
    let test = container::load_so2sat(&dir.join("test.h5"))?;
    let provenance = Provenance::from_key_values(&std::fs::read_to_string(dir.join("provenance.txt"))?)?;
    Ok(DatasetSplit { train, test, class_count: CLASS_COUNT, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;
    use sha2::{Digest, Sha256};

    fn content_hash(s: &Sample) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in s.sar.iter().chain(s.ms.iter()) {
            h.update(v.to_le_bytes());
        }
        h.update([s.label]);
        h.finalize().into()
    }

    #[test]
    fn train_histogram_is_exactly_uniform() {
        let data = make_synthetic(17, 6, 0.2, 3).unwrap();
        let split = balanced_subsample(&data, 4, 20, 47, "synth").unwrap();
        let mut counts = [0usize; CLASS_COUNT];
        for s in &split.train {
            counts[usize::from(s.label)] += 1;
        }
        assert!(counts.iter().all(|&c| c == 4));
        assert_eq!(split.test.len(), 20);
    }

    #[test]
    fn train_and_test_are_disjoint() {
        // Noisy samples are pairwise distinct, so content hashes identify them.
        let data = make_synthetic(5, 8, 0.5, 11).unwrap();
        let split = balanced_subsample(&data, 5, 10, 2, "synth").unwrap();
        let train_hashes: std::collections::BTreeSet<_> =
            split.train.iter().map(content_hash).collect();
        assert_eq!(train_hashes.len(), split.train.len());
        for s in &split.test {
            assert!(!train_hashes.contains(&content_hash(s)));
        }
    }

    #[test]
    fn forced_selection_takes_the_whole_dataset() {
        let data = make_synthetic(4, 1, 0.0, 1).unwrap();
        let split = balanced_subsample(&data, 1, 0, 9, "synth").unwrap();
        assert_eq!(split.train.len(), data.len());
        assert!(split.test.is_empty());
    }

    #[test]
    fn same_seed_gives_identical_splits() {
        let data = make_synthetic(6, 5, 0.4, 5).unwrap();
        let a = balanced_subsample(&data, 3, 8, 47, "synth").unwrap();
        let b = balanced_subsample(&data, 3, 8, 47, "synth").unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
        assert_eq!(a.provenance, b.provenance);
        let c = balanced_subsample(&data, 3, 8, 48, "synth").unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn short_class_is_reported_by_name() {
        // Truncate class 2 to a single sample.
        let mut kept = Vec::new();
        let mut class2 = 0;
        for s in make_synthetic(3, 4, 0.1, 7).unwrap() {
            if s.label == 2 {
                class2 += 1;
                if class2 > 1 {
                    continue;
                }
            }
            kept.push(s);
        }
        let err = balanced_subsample(&kept, 2, 0, 1, "synth").unwrap_err();
        assert!(err.to_string().contains("class 3"), "{err}");
        assert!(err.to_string().contains("only 1"), "{err}");
    }

    #[test]
    fn oversized_test_request_is_rejected() {
        let data = make_synthetic(3, 3, 0.1, 7).unwrap();
        let err = balanced_subsample(&data, 2, 10, 1, "synth").unwrap_err();
        assert!(err.to_string().contains("test set"), "{err}");
    }
}

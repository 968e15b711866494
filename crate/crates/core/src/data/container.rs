//! So2Sat-style HDF5 container: datasets `sen1` [N,32,32,8], `sen2`
//! [N,32,32,10] and `label` [N,17] one-hot.

use super::{Sample, CLASS_COUNT, MS_CHANNELS, PATCH, SAR_CHANNELS};
use crate::error::{Error, Result};
use ndarray::Array3;
use std::path::Path;

const ONE_HOT_TOL: f64 = 1e-6;

fn open_dataset(file: &hdf5::File, name: &str) -> Result<hdf5::Dataset> {
    file.dataset(name)
        .map_err(|_| Error::data(format!("container is missing dataset {name:?}")))
}

fn check_shape(name: &str, shape: &[usize], expected_tail: &[usize], n: usize) -> Result<()> {
    let ok = shape.len() == expected_tail.len() + 1
        && shape[0] == n
        && shape[1..] == *expected_tail;
    if !ok {
        return Err(Error::data(format!(
            "dataset {name:?} has shape {shape:?}, expected [{n}, {}]",
            expected_tail.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        )));
    }
    Ok(())
}

/// Loads all samples from a container file. Labels are decoded as the argmax
/// of each one-hot row; channel order is preserved exactly as stored.
pub fn load_so2sat(path: &Path) -> Result<Vec<Sample>> {
    let file = hdf5::File::open(path)
        .map_err(|e| Error::Container(format!("cannot open {}: {e}", path.display())))?;
    let sen1 = open_dataset(&file, "sen1")?;
    let sen2 = open_dataset(&file, "sen2")?;
    let label = open_dataset(&file, "label")?;

    let n = sen1.shape().first().copied().unwrap_or(0);
    check_shape("sen1", &sen1.shape(), &[PATCH, PATCH, SAR_CHANNELS], n)?;
    check_shape("sen2", &sen2.shape(), &[PATCH, PATCH, MS_CHANNELS], n)?;
    check_shape("label", &label.shape(), &[CLASS_COUNT], n)?;

    let read = |ds: &hdf5::Dataset, name: &str| -> Result<Vec<f64>> {
        ds.read_raw::<f64>()
            .map_err(|e| Error::Container(format!("cannot read dataset {name:?}: {e}")))
    };
    let sen1 = read(&sen1, "sen1")?;
    let sen2 = read(&sen2, "sen2")?;
    let label = read(&label, "label")?;

    let sar_stride = PATCH * PATCH * SAR_CHANNELS;
    let ms_stride = PATCH * PATCH * MS_CHANNELS;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let row = &label[i * CLASS_COUNT..(i + 1) * CLASS_COUNT];
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ONE_HOT_TOL {
            return Err(Error::data(format!(
                "label row {i} is not one-hot (row sum {sum})"
            )));
        }
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = k;
            }
        }
        let sar = Array3::from_shape_vec(
            (PATCH, PATCH, SAR_CHANNELS),
            sen1[i * sar_stride..(i + 1) * sar_stride].to_vec(),
        )
        .expect("stride math matches shape");
        let ms = Array3::from_shape_vec(
            (PATCH, PATCH, MS_CHANNELS),
            sen2[i * ms_stride..(i + 1) * ms_stride].to_vec(),
        )
        .expect("stride math matches shape");
        samples.push(Sample::new(sar, ms, best as u8).map_err(|e| {
            Error::data(format!("sample {i}: {e}"))
        })?);
    }
    Ok(samples)
}

/// Writes samples in the same layout [`load_so2sat`] reads.
pub fn write_container(samples: &[Sample], path: &Path) -> Result<()> {
    let file = hdf5::File::create(path)
        .map_err(|e| Error::Container(format!("cannot create {}: {e}", path.display())))?;
    let n = samples.len();

    let mut sen1 = Vec::with_capacity(n * PATCH * PATCH * SAR_CHANNELS);
    let mut sen2 = Vec::with_capacity(n * PATCH * PATCH * MS_CHANNELS);
    let mut label = vec![0.0f64; n * CLASS_COUNT];
    for (i, s) in samples.iter().enumerate() {
        sen1.extend(s.sar.iter().copied());
        sen2.extend(s.ms.iter().copied());
        label[i * CLASS_COUNT + usize::from(s.label)] = 1.0;
    }

    let write = |name: &str, shape: Vec<usize>, data: &[f64]| -> Result<()> {
        let ds = file
            .new_dataset::<f64>()
            .shape(shape)
            .create(name)
            .map_err(|e| Error::Container(format!("cannot create dataset {name:?}: {e}")))?;
        ds.write_raw(data)
            .map_err(|e| Error::Container(format!("cannot write dataset {name:?}: {e}")))
    };
    write("sen1", vec![n, PATCH, PATCH, SAR_CHANNELS], &sen1)?;
    write("sen2", vec![n, PATCH, PATCH, MS_CHANNELS], &sen2)?;
    write("label", vec![n, CLASS_COUNT], &label)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;

    #[test]
    fn round_trips_samples_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.h5");
        let samples = make_synthetic(3, 1, 0.25, 4).unwrap();
        write_container(&samples, &path).unwrap();
        let back = load_so2sat(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back, samples);
        for s in &back {
            assert_eq!(s.sar.shape(), &[32, 32, 8]);
            assert_eq!(s.ms.shape(), &[32, 32, 10]);
        }
    }

    #[test]
    fn one_hot_in_last_position_decodes_to_16() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.h5");
        let sar = Array3::zeros((PATCH, PATCH, SAR_CHANNELS));
        let ms = Array3::zeros((PATCH, PATCH, MS_CHANNELS));
        let sample = Sample::new(sar, ms, 16).unwrap();
        write_container(std::slice::from_ref(&sample), &path).unwrap();
        let back = load_so2sat(&path).unwrap();
        assert_eq!(back[0].label, 16);
    }

    #[test]
    fn all_zero_label_row_is_reported_with_its_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.h5");
        let samples = make_synthetic(2, 1, 0.0, 1).unwrap();
        write_container(&samples, &path).unwrap();
        {
            let f = hdf5::File::open_rw(&path).unwrap();
            let ds = f.dataset("label").unwrap();
            ds.write_raw(&vec![0.0f64; 2 * CLASS_COUNT]).unwrap();
        }
        let err = load_so2sat(&path).unwrap_err();
        assert!(err.to_string().contains("label row 0"), "{err}");
        assert!(err.to_string().contains("not one-hot"), "{err}");
    }

    #[test]
    fn missing_dataset_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.h5");
        {
            let f = hdf5::File::create(&path).unwrap();
            let ds = f.new_dataset::<f64>().shape([1, 2]).create("sen1").unwrap();
            ds.write_raw(&[0.0, 0.0]).unwrap();
        }
        let err = load_so2sat(&path).unwrap_err();
        assert!(err.to_string().contains("sen2"), "{err}");
    }

    #[test]
    fn shape_mismatch_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.h5");
        {
            let f = hdf5::File::create(&path).unwrap();
            for (name, shape) in [
                ("sen1", vec![1usize, PATCH, PATCH, SAR_CHANNELS]),
                ("sen2", vec![1, PATCH, PATCH, 9]), // wrong channel count
                ("label", vec![1, CLASS_COUNT]),
            ] {
                let total: usize = shape.iter().product();
                let ds = f.new_dataset::<f64>().shape(shape).create(name).unwrap();
                ds.write_raw(&vec![0.0; total]).unwrap();
            }
        }
        let err = load_so2sat(&path).unwrap_err();
        assert!(err.to_string().contains("sen2"), "{err}");
        assert!(err.to_string().contains("shape"), "{err}");
    }
}

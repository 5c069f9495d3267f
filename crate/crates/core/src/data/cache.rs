//! Dataset cache: a short header followed by an `.fqkc` tensor container.
//!
//! ```text
//! "FQKD" | version u8 | sample_rate f64 | classes u32 | per class: len u32, utf-8 name
//! container { windows: M x T x d, labels: M, subjects: M }
//! ```

use std::path::Path;

use super::WindowedDataset;
use crate::error::{Error, Result};
use crate::federated::{deserialize_checkpoint, serialize_checkpoint};
use crate::numerics::{ParamTree, Tensor};

pub const DATASET_MAGIC: [u8; 4] = *b"FQKD";
const DATASET_VERSION: u8 = 1;

pub fn serialize_dataset(ds: &WindowedDataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&DATASET_MAGIC);
    out.push(DATASET_VERSION);
    out.extend_from_slice(&ds.sample_rate().to_le_bytes());
    out.extend_from_slice(&(ds.classes() as u32).to_le_bytes());
    for name in ds.label_names() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    let mut tree = ParamTree::new();
    tree.insert("windows", ds.stacked()).unwrap();
    tree.insert("labels", Tensor::from_vec(ds.labels().iter().map(|&l| l as f64).collect()))
        .unwrap();
    tree.insert("subjects", Tensor::from_vec(ds.subjects().iter().map(|&s| s as f64).collect()))
        .unwrap();
    out.extend_from_slice(&serialize_checkpoint(&tree));
    out
}

pub fn deserialize_dataset(bytes: &[u8]) -> Result<WindowedDataset> {
    let truncated = || Error::CheckpointTruncated("dataset header".into());
    let mut pos = 0;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(truncated)?;
        pos += n;
        Ok(s)
    };
    let magic: [u8; 4] = take(4)?.try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(Error::CheckpointMagic(magic));
    }
    let version = take(1)?[0];
    if version != DATASET_VERSION {
        return Err(Error::CheckpointVersion(version));
    }
    let sample_rate = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let classes = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let mut names = Vec::with_capacity(classes.min(1024));
    for _ in 0..classes {
        let len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(take(len)?)
            .map_err(|_| Error::InvalidArgument("label name is not UTF-8".into()))?;
        names.push(name.to_string());
    }
    let tree = deserialize_checkpoint(&bytes[pos..])?;
    let windows = tree.expect("windows")?;
    let (m, t, d) = windows.dims3()?;
    let as_index = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(Error::InvalidArgument(format!("{v} is not a valid index")))
        }
    };
    let labels = tree.expect("labels")?.data().iter().map(|&v| as_index(v)).collect::<Result<Vec<_>>>()?;
    let subjects = tree
        .expect("subjects")?
        .data()
        .iter()
        .map(|&v| as_index(v).map(|s| s as u32))
        .collect::<Result<Vec<_>>>()?;
    let per = t * d;
    let split = (0..m)
        .map(|i| Tensor::matrix(t, d, windows.data()[i * per..(i + 1) * per].to_vec()))
        .collect::<Result<Vec<_>>>()?;
    WindowedDataset::new(split, labels, subjects, classes, sample_rate)?.with_label_names(names)
}

pub fn save_dataset(path: &Path, ds: &WindowedDataset) -> Result<()> {
    std::fs::write(path, serialize_dataset(ds))?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<WindowedDataset> {
    deserialize_dataset(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticSpec};

    #[test]
    fn dataset_round_trip() {
        let ds = gen_synthetic(&SyntheticSpec {
            windows_per_class: 3,
            window: 10,
            ..Default::default()
        })
        .unwrap()
        .with_label_names(vec!["a".into(), "b".into(), "ccc".into(), "δ".into()])
        .unwrap();
        let back = deserialize_dataset(&serialize_dataset(&ds)).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn wrong_magic_rejected() {
        let ds = gen_synthetic(&SyntheticSpec {
            windows_per_class: 1,
            window: 4,
            ..Default::default()
        })
        .unwrap();
        let mut blob = serialize_dataset(&ds);
        blob[3] = b'C';
        assert!(matches!(deserialize_dataset(&blob), Err(Error::CheckpointMagic(_))));
        assert!(deserialize_dataset(&blob[..6]).is_err());
    }
}

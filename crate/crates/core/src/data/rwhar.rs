//! Loader for RealWorld HAR style accelerometer exports.
//!
//! Layout: `<root>/<subject>/.../<sensor>_<activity>_<position>.csv`, one
//! activity per file, with a timestamp column and three axis columns named
//! `x,y,z` or `attr_x,attr_y,attr_z` in any order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{window_series, WindowedDataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const RWHAR_ACTIVITIES: [&str; 8] = [
    "climbingdown",
    "climbingup",
    "jumping",
    "lying",
    "running",
    "sitting",
    "standing",
    "walking",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RwharOptions {
    pub sensor: String,
    pub position: String,
    pub timestamp_column: String,
    /// Seconds per timestamp unit.
    pub time_scale: f64,
    pub sample_rate: f64,
    pub window: usize,
    pub stride: usize,
    pub label_map: BTreeMap<String, usize>,
}

impl Default for RwharOptions {
    fn default() -> Self {
        Self {
            sensor: "acc".into(),
            position: "chest".into(),
            timestamp_column: "attr_time".into(),
            time_scale: 1e-3,
            sample_rate: 50.0,
            window: 100,
            stride: 50,
            label_map: RWHAR_ACTIVITIES.iter().enumerate().map(|(i, a)| (a.to_string(), i)).collect(),
        }
    }
}

/// One matching sensor file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct SensorFile {
    subject: u32,
    path: PathBuf,
    activity: String,
}

fn collect_csv(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_csv(&path, out)?;
        } else if path.extension().is_some_and(|e| e == "csv") {
            out.push(path);
        }
    }
    Ok(())
}

/// Trailing digits of a directory name, e.g. `proband12` -> 12.
fn subject_number(name: &str) -> Option<u32> {
    let digits: String = name.chars().rev().take_while(char::is_ascii_digit).collect();
    digits.chars().rev().collect::<String>().parse().ok()
}

fn discover(root: &Path, opts: &RwharOptions) -> Result<Vec<SensorFile>> {
    let mut paths = Vec::new();
    collect_csv(root, &mut paths)?;
    let prefix = format!("{}_", opts.sensor);
    let suffix = format!("_{}.csv", opts.position);

    let mut dirs: Vec<String> = Vec::new();
    let mut matched = Vec::new();
    for path in paths {
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        let Some(activity) = name.strip_prefix(&prefix).and_then(|n| n.strip_suffix(&suffix)) else {
            continue;
        };
        let rel = path.strip_prefix(root).expect("walked from root");
        let mut parts = rel.components();
        let subject_dir = match (parts.next(), parts.next()) {
            (Some(first), Some(_)) => first.as_os_str().to_string_lossy().into_owned(),
            _ => String::new(),
        };
        if !dirs.contains(&subject_dir) {
            dirs.push(subject_dir.clone());
        }
        matched.push((subject_dir, activity.to_string(), path));
    }
    if matched.is_empty() {
        return Err(Error::EmptyDirectory(root.to_path_buf()));
    }
    dirs.sort();
    let mut files: Vec<SensorFile> = matched
        .into_iter()
        .map(|(dir, activity, path)| SensorFile {
            subject: subject_number(&dir).unwrap_or_else(|| dirs.iter().position(|d| *d == dir).unwrap() as u32),
            path,
            activity,
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Parsed rows of one file: timestamps in seconds and `n x 3` samples.
fn read_sensor_csv(path: &Path, opts: &RwharOptions) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |names: &[&str], shown: &str| {
        headers.iter().position(|h| names.contains(&h)).ok_or_else(|| Error::MissingColumn {
            path: path.to_path_buf(),
            column: shown.to_string(),
        })
    };
    let time_col = find(&[opts.timestamp_column.as_str()], &opts.timestamp_column)?;
    let axes = [
        find(&["x", "attr_x"], "x")?,
        find(&["y", "attr_y"], "y")?,
        find(&["z", "attr_z"], "z")?,
    ];
    let mut times = Vec::new();
    let mut samples = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::MalformedRow {
                path: path.to_path_buf(),
                row: row + 1,
                reason: format!("`{raw}` in column `{}` is not a number", &headers[col]),
            })
        };
        times.push(field(time_col)? * opts.time_scale);
        for &c in &axes {
            samples.push(field(c)?);
        }
    }
    Ok((times, samples))
}

/// Splits at timestamp gaps longer than three sample periods.
fn split_on_gaps(path: &Path, times: &[f64], sample_rate: f64) -> Result<Vec<std::ops::Range<usize>>> {
    let max_gap = 3.0 / sample_rate;
    let mut segments = Vec::new();
    let mut start = 0;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        if dt <= 0.0 {
            return Err(Error::MalformedRow {
                path: path.to_path_buf(),
                row: i + 1,
                reason: "timestamps must increase".into(),
            });
        }
        if dt > max_gap {
            segments.push(start..i);
            start = i;
        }
    }
    if !times.is_empty() {
        segments.push(start..times.len());
    }
    Ok(segments)
}

/// Loads every `<sensor>_<activity>_<position>.csv` below `root` and windows
/// each gap-free stretch. Output order follows (subject, file path).
pub fn load_rwhar(root: &Path, opts: &RwharOptions) -> Result<WindowedDataset> {
    if opts.label_map.is_empty() {
        return Err(Error::InvalidArgument("label map is empty".into()));
    }
    let classes = opts.label_map.values().max().unwrap() + 1;
    let files = discover(root, opts)?;
    for f in &files {
        if !opts.label_map.contains_key(&f.activity) {
            return Err(Error::UnknownActivity {
                path: f.path.clone(),
                activity: f.activity.clone(),
            });
        }
    }
    let per_file: Vec<Option<WindowedDataset>> = files
        .par_iter()
        .map(|f| {
            let label = opts.label_map[&f.activity];
            let (times, samples) = read_sensor_csv(&f.path, opts)?;
            let mut out: Option<WindowedDataset> = None;
            for seg in split_on_gaps(&f.path, &times, opts.sample_rate)? {
                if seg.len() < opts.window {
                    continue;
                }
                let series = Tensor::matrix(seg.len(), 3, samples[seg.start * 3..seg.end * 3].to_vec())?;
                let windows = window_series(&series, &vec![label; seg.len()], opts.window, opts.stride, classes, opts.sample_rate)?
                    .with_subject(f.subject);
                match &mut out {
                    Some(ds) => ds.extend(windows)?,
                    None => out = Some(windows),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut dataset: Option<WindowedDataset> = None;
    for ds in per_file.into_iter().flatten() {
        match &mut dataset {
            Some(all) => all.extend(ds)?,
            None => dataset = Some(ds),
        }
    }
    let dataset = dataset.ok_or_else(|| {
        Error::Empty(format!(
            "no gap-free stretch under {} reaches {} samples",
            root.display(),
            opts.window
        ))
    })?;
    let mut names = vec![String::new(); classes];
    for (name, &idx) in &opts.label_map {
        names[idx] = name.clone();
    }
    dataset.with_label_names(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subject_numbers() {
        assert_eq!(subject_number("proband12"), Some(12));
        assert_eq!(subject_number("alice"), None);
    }

    #[test]
    fn gaps_split_stream() {
        let times = [0.0, 0.02, 0.04, 0.2, 0.22];
        let segs = split_on_gaps(Path::new("t.csv"), &times, 50.0).unwrap();
        assert_eq!(segs, vec![0..3, 3..5]);
        // three periods exactly is still contiguous
        let segs = split_on_gaps(Path::new("t.csv"), &[0.0, 0.06], 50.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert!(split_on_gaps(Path::new("t.csv"), &[0.0, 0.0], 50.0).is_err());
    }
}

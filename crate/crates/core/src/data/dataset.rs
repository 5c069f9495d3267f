use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// Fixed-length multichannel windows with one class label each.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    windows: Vec<Tensor>,
    labels: Vec<usize>,
    subjects: Vec<u32>,
    classes: usize,
    sample_rate: f64,
    label_names: Vec<String>,
}

impl WindowedDataset {
    /// Every window must be `T x d` with the same `(T, d)`.
    pub fn new(windows: Vec<Tensor>, labels: Vec<usize>, subjects: Vec<u32>, classes: usize, sample_rate: f64) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Empty("dataset has no windows".into()));
        }
        if labels.len() != windows.len() || subjects.len() != windows.len() {
            return Err(Error::Shape(format!(
                "{} windows, {} labels, {} subject ids",
                windows.len(),
                labels.len(),
                subjects.len()
            )));
        }
        let shape = windows[0].dims2()?;
        if let Some(bad) = windows.iter().position(|w| w.shape() != [shape.0, shape.1]) {
            return Err(Error::Shape(format!(
                "window {bad} is {:?}, expected {:?}",
                windows[bad].shape(),
                shape
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(Self {
            windows,
            labels,
            subjects,
            classes,
            sample_rate,
            label_names: (0..classes).map(|c| format!("class{c}")).collect(),
        })
    }

    pub fn with_label_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.classes {
            return Err(Error::Shape(format!(
                "{} label names for {} classes",
                names.len(),
                self.classes
            )));
        }
        self.label_names = names;
        Ok(self)
    }

    pub fn with_subject(mut self, subject: u32) -> Self {
        self.subjects.iter_mut().for_each(|s| *s = subject);
        self
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.windows[0].shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.windows[0].shape()[1]
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn windows(&self) -> &[Tensor] {
        &self.windows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn subjects(&self) -> &[u32] {
        &self.subjects
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Distinct subject ids in ascending order.
    pub fn subject_ids(&self) -> Vec<u32> {
        let mut ids = self.subjects.clone();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} out of range for {} windows",
                self.len()
            )));
        }
        let mut out = Self::new(
            indices.iter().map(|&i| self.windows[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            indices.iter().map(|&i| self.subjects[i]).collect(),
            self.classes,
            self.sample_rate,
        )?;
        out.label_names = self.label_names.clone();
        Ok(out)
    }

    /// Appends `other`, which must share window shape and class count.
    pub fn extend(&mut self, other: WindowedDataset) -> Result<()> {
        if other.classes != self.classes || other.windows[0].shape() != self.windows[0].shape() {
            return Err(Error::Shape("cannot join datasets of different shape or class count".into()));
        }
        self.windows.extend(other.windows);
        self.labels.extend(other.labels);
        self.subjects.extend(other.subjects);
        Ok(())
    }

    /// All windows stacked into one `M x T x d` tensor.
    pub fn stacked(&self) -> Tensor {
        let shape = vec![self.len(), self.window_len(), self.channels()];
        let data = self.windows.iter().flat_map(|w| w.data().iter().copied()).collect();
        Tensor::new(shape, data).expect("windows share one shape")
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Slides a `win`-sample window with step `stride` over a `T_total x d`
/// series. Each window takes the majority label of its samples, smallest
/// class index on ties; a trailing partial window is dropped.
pub fn window_series(
    series: &Tensor,
    labels: &[usize],
    win: usize,
    stride: usize,
    classes: usize,
    sample_rate: f64,
) -> Result<WindowedDataset> {
    let (total, d) = series.dims2()?;
    if win == 0 || stride == 0 {
        return Err(Error::InvalidArgument("window length and stride must be >= 1".into()));
    }
    if labels.len() != total {
        return Err(Error::Shape(format!("{total} samples but {} labels", labels.len())));
    }
    if total < win {
        return Err(Error::WindowTooShort { len: total, width: win });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    let count = (total - win) / stride + 1;
    let mut windows = Vec::with_capacity(count);
    let mut window_labels = Vec::with_capacity(count);
    let mut votes = vec![0usize; classes];
    for start in (0..count).map(|k| k * stride) {
        windows.push(Tensor::matrix(win, d, series.data()[start * d..(start + win) * d].to_vec())?);
        votes.iter_mut().for_each(|v| *v = 0);
        for &l in &labels[start..start + win] {
            votes[l] += 1;
        }
        let best = votes.iter().enumerate().fold(0, |best, (c, &v)| if v > votes[best] { c } else { best });
        window_labels.push(best);
    }
    WindowedDataset::new(windows, window_labels, vec![0; count], classes, sample_rate)
}

pub const NORM_EPS: f64 = 1e-8;

/// Per-channel mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Population moments over every sample of every window. The standard
    /// deviation is floored at `NORM_EPS`.
    pub fn fit(dataset: &WindowedDataset) -> Self {
        let d = dataset.channels();
        let mut mean = vec![0.0; d];
        let mut count = 0usize;
        for w in dataset.windows() {
            for row in w.data().chunks_exact(d) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
                count += 1;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count as f64);
        let mut var = vec![0.0; d];
        for w in dataset.windows() {
            for row in w.data().chunks_exact(d) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var.iter().map(|s| (s / count as f64).sqrt().max(NORM_EPS)).collect();
        Self { mean, std }
    }
}

/// `(x - mean) / max(std, eps)` per channel.
pub fn normalize(dataset: &WindowedDataset, stats: &NormStats) -> Result<WindowedDataset> {
    let d = dataset.channels();
    if stats.mean.len() != d || stats.std.len() != d {
        return Err(Error::Shape(format!(
            "normalization stats cover {} channels, data has {d}",
            stats.mean.len()
        )));
    }
    let mut out = dataset.clone();
    for w in out.windows.iter_mut() {
        for row in w.data_mut().chunks_exact_mut(d) {
            for ((v, m), s) in row.iter_mut().zip(&stats.mean).zip(&stats.std) {
                *v = (*v - m) / s.max(NORM_EPS);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitStrategy {
    /// Shuffle windows and hold out a fraction.
    Window,
    /// Hold out whole subjects.
    Subject,
}

/// Splits into `(train, test)`. Indices on each side keep dataset order.
pub fn train_test_split(
    dataset: &WindowedDataset,
    test_fraction: f64,
    strategy: SplitStrategy,
    seed: u64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction {test_fraction} must lie in (0, 1)"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut test_mask = vec![false; dataset.len()];
    match strategy {
        SplitStrategy::Window => {
            if dataset.len() < 2 {
                return Err(Error::InvalidArgument("need at least two windows to split".into()));
            }
            let mut order: Vec<usize> = (0..dataset.len()).collect();
            rng.shuffle(&mut order);
            let n_test = ((dataset.len() as f64 * test_fraction).round() as usize).clamp(1, dataset.len() - 1);
            for &i in &order[..n_test] {
                test_mask[i] = true;
            }
        }
        SplitStrategy::Subject => {
            let mut ids = dataset.subject_ids();
            if ids.len() < 2 {
                return Err(Error::InvalidArgument("subject split needs at least two subjects".into()));
            }
            rng.shuffle(&mut ids);
            let n_test = ((ids.len() as f64 * test_fraction).round() as usize).clamp(1, ids.len() - 1);
            let held: Vec<u32> = ids[..n_test].to_vec();
            for (m, s) in test_mask.iter_mut().zip(dataset.subjects()) {
                *m = held.contains(s);
            }
        }
    }
    let train: Vec<usize> = (0..dataset.len()).filter(|&i| !test_mask[i]).collect();
    let test: Vec<usize> = (0..dataset.len()).filter(|&i| test_mask[i]).collect();
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(total: usize, d: usize) -> Tensor {
        Tensor::matrix(total, d, (0..total * d).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn window_count_and_starts() {
        let ds = window_series(&ramp(10, 2), &[0; 10], 5, 5, 2, 50.0).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.windows()[1].row(0), &[10.0, 11.0]);
    }

    #[test]
    fn count_formula_over_grid() {
        for total in 1..30 {
            for win in 1..=total {
                for stride in 1..7 {
                    let ds = window_series(&ramp(total, 1), &vec![0; total], win, stride, 1, 1.0).unwrap();
                    assert_eq!(ds.len(), (total - win) / stride + 1);
                }
            }
        }
    }

    #[test]
    fn majority_label_and_tie_break() {
        let ds = window_series(&ramp(5, 1), &[0, 0, 1, 1, 1], 5, 1, 2, 1.0).unwrap();
        assert_eq!(ds.labels(), &[1]);
        let ds = window_series(&ramp(4, 1), &[2, 1, 2, 1], 4, 1, 3, 1.0).unwrap();
        assert_eq!(ds.labels(), &[1]);
        let ds = window_series(&ramp(6, 1), &[3; 6], 2, 2, 4, 1.0).unwrap();
        assert!(ds.labels().iter().all(|&l| l == 3));
    }

    #[test]
    fn series_shorter_than_window_rejected() {
        let err = window_series(&ramp(3, 1), &[0; 3], 5, 1, 1, 1.0).unwrap_err();
        assert!(matches!(err, Error::WindowTooShort { len: 3, width: 5 }));
    }

    fn noisy(m: usize, shift: f64, seed: u64) -> WindowedDataset {
        let mut rng = Rng::new(seed);
        let windows = (0..m)
            .map(|_| Tensor::matrix(7, 3, (0..21).map(|k| shift + (k % 3) as f64 * 2.0 + rng.normal()).collect()).unwrap())
            .collect();
        WindowedDataset::new(windows, vec![0; m], vec![0; m], 2, 50.0).unwrap()
    }

    #[test]
    fn normalized_train_split_has_unit_moments() {
        let ds = noisy(40, 3.0, 1);
        let stats = NormStats::fit(&ds);
        let out = normalize(&ds, &stats).unwrap();
        let refit = NormStats::fit(&out);
        for c in 0..3 {
            assert!(refit.mean[c].abs() <= 1e-10);
            assert!((refit.std[c] - 1.0).abs() <= 1e-6);
        }
        // refitting on normalized data and applying again changes nothing
        let again = normalize(&out, &refit).unwrap();
        for (a, b) in again.windows().iter().zip(out.windows()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_channel_maps_to_zero() {
        let w = Tensor::matrix(4, 1, vec![5.0; 4]).unwrap();
        let ds = WindowedDataset::new(vec![w], vec![0], vec![0], 2, 1.0).unwrap();
        let out = normalize(&ds, &NormStats::fit(&ds)).unwrap();
        assert!(out.windows()[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn test_split_uses_train_stats() {
        let train = noisy(30, 0.0, 2);
        let test = noisy(30, 5.0, 3);
        let out = normalize(&test, &NormStats::fit(&train)).unwrap();
        assert!(NormStats::fit(&out).mean.iter().all(|m| *m > 1.0));
        let mismatch = NormStats {
            mean: vec![0.0],
            std: vec![1.0],
        };
        assert!(normalize(&test, &mismatch).is_err());
    }

    #[test]
    fn window_split_is_disjoint_and_deterministic() {
        let ds = noisy(50, 0.0, 4);
        let (train, test) = train_test_split(&ds, 0.2, SplitStrategy::Window, 9).unwrap();
        assert_eq!((train.len(), test.len()), (40, 10));
        let (train2, _) = train_test_split(&ds, 0.2, SplitStrategy::Window, 9).unwrap();
        assert_eq!(train, train2);
    }

    #[test]
    fn subject_split_keeps_subjects_whole() {
        let mut ds = noisy(40, 0.0, 5);
        ds.subjects = (0..40).map(|i| (i % 5) as u32).collect();
        let (train, test) = train_test_split(&ds, 0.2, SplitStrategy::Subject, 3).unwrap();
        assert_eq!(train.len() + test.len(), 40);
        assert_eq!(test.subject_ids().len(), 1);
        assert!(train.subjects().iter().all(|s| !test.subject_ids().contains(s)));
    }

    #[test]
    fn mixed_shapes_rejected() {
        let a = Tensor::zeros(&[4, 2]);
        let b = Tensor::zeros(&[4, 3]);
        assert!(WindowedDataset::new(vec![a, b], vec![0, 0], vec![0, 0], 2, 1.0).is_err());
        let c = Tensor::zeros(&[4, 2]);
        assert!(matches!(
            WindowedDataset::new(vec![c], vec![2], vec![0], 2, 1.0),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }
}

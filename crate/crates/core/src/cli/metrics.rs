use std::fmt;

use crate::error::{Error, Result};

/// Confusion counts plus accuracy and macro-averaged precision, recall and F1.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `confusion[truth][predicted]`
    pub confusion: Vec<Vec<u64>>,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro averages over all classes; a class whose precision, recall or F1
/// has a zero denominator contributes 0 to that average.
pub fn compute_metrics(confusion: &[Vec<u64>]) -> Result<MetricsReport> {
    let c = confusion.len();
    if c == 0 || confusion.iter().any(|row| row.len() != c) {
        return Err(Error::Shape(format!("confusion matrix must be square, got {c} rows")));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::Empty("confusion matrix has no counts".into()));
    }
    let trace: u64 = (0..c).map(|k| confusion[k][k]).sum();
    let (mut precision, mut recall, mut f1) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let tp = confusion[k][k];
        let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
        let actual: u64 = confusion[k].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision += p;
        recall += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    Ok(MetricsReport {
        confusion: confusion.to_vec(),
        accuracy: ratio(trace, total),
        precision: precision / c as f64,
        recall: recall / c as f64,
        f1: f1 / c as f64,
    })
}

/// Tallies `(truth, predicted)` pairs into a `classes x classes` matrix.
pub fn confusion_matrix(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Vec<Vec<u64>>> {
    if truth.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} labels but {} predictions",
            truth.len(),
            predicted.len()
        )));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= classes || p >= classes {
            return Err(Error::LabelOutOfRange {
                label: t.max(p),
                classes,
            });
        }
        m[t][p] += 1;
    }
    Ok(m)
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accuracy   {:.4}", self.accuracy)?;
        writeln!(f, "precision  {:.4}", self.precision)?;
        writeln!(f, "recall     {:.4}", self.recall)?;
        writeln!(f, "f1         {:.4}", self.f1)?;
        writeln!(f, "confusion (rows = truth, columns = predicted)")?;
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>6}")).collect();
            writeln!(f, "{}", cells.join(""))?;
        }
        Ok(())
    }
}

use log::warn;

use crate::error::{Error, Result};

/// Per-column z-score statistics fitted on a training split.
///
/// Columns with no spread are dropped: `kept[j]` is false and the column is
/// omitted from normalized output.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub kept: Vec<bool>,
}

impl NormStats {
    pub fn width(&self) -> usize {
        self.mean.len()
    }

    pub fn kept_count(&self) -> usize {
        self.kept.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.width()).filter(|&j| self.kept[j]).collect()
    }

    pub fn fit(train_x: &[Vec<f64>]) -> Result<Self> {
        fit_normalization(train_x)
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|row| self.apply_row(row)).collect()
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::invalid(format!(
                "row has {} features, normalization expects {}",
                row.len(),
                self.width()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .filter(|(j, _)| self.kept[*j])
            .map(|(j, x)| (x - self.mean[j]) / self.std[j])
            .collect())
    }

    /// Inverse of [`apply`](Self::apply); dropped columns come back as their
    /// (constant) training mean.
    pub fn invert(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let kept = self.kept_indices();
        z.iter()
            .map(|row| {
                if row.len() != kept.len() {
                    return Err(Error::invalid("normalized row width mismatch"));
                }
                let mut out = self.mean.clone();
                for (&j, &v) in kept.iter().zip(row) {
                    out[j] = v * self.std[j] + self.mean[j];
                }
                Ok(out)
            })
            .collect()
    }
}

pub fn fit_normalization(train_x: &[Vec<f64>]) -> Result<NormStats> {
    let first = train_x
        .first()
        .ok_or_else(|| Error::invalid("cannot fit normalization on an empty set"))?;
    let width = first.len();
    if train_x.iter().any(|r| r.len() != width) {
        return Err(Error::invalid("ragged rows in normalization input"));
    }
    let n = train_x.len() as f64;
    let mut stats = NormStats {
        mean: Vec::with_capacity(width),
        std: Vec::with_capacity(width),
        kept: Vec::with_capacity(width),
    };
    for j in 0..width {
        let col = || train_x.iter().map(|r| r[j]);
        let x0 = first[j];
        let (mean, std) = if col().all(|x| x == x0) {
            (x0, 0.0)
        } else {
            let mean = col().sum::<f64>() / n;
            let var = col().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        let peak = col().fold(0.0_f64, |m, x| m.max(x.abs()));
        let keep = std > 1e-12 * peak;
        if !keep {
            warn!("dropping zero-variance feature column {j}");
        }
        stats.mean.push(mean);
        stats.std.push(std);
        stats.kept.push(keep);
    }
    Ok(stats)
}

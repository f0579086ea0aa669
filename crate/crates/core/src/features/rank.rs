use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// (mean, sample variance) with exact zero variance for constant input.
fn mean_var(values: &[f64]) -> (f64, f64) {
    let first = values[0];
    if values.iter().all(|&x| x == first) {
        return (first, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, ss / (n - 1.0))
}

/// Fisher score per feature column.
///
/// Score = population variance of the class means divided by the average of
/// the per-class sample variances. A feature identical everywhere scores 0; a
/// feature with zero within-class spread but distinct class means scores
/// `+inf`.
pub fn fisher_scores(per_class: &BTreeMap<String, Vec<Vec<f64>>>) -> Result<Vec<f64>> {
    if per_class.len() < 2 {
        return Err(Error::invalid(format!(
            "feature ranking needs at least 2 classes, got {}",
            per_class.len()
        )));
    }
    let width = per_class
        .values()
        .next()
        .and_then(|rows| rows.first())
        .map(Vec::len)
        .unwrap_or(0);
    for (class, rows) in per_class {
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "class `{class}` has {} vectors, need at least 2",
                rows.len()
            )));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::invalid(format!("class `{class}`: ragged feature vectors")));
        }
        if rows.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::invalid(format!("class `{class}`: non-finite feature value")));
        }
    }

    let n_classes = per_class.len() as f64;
    let mut column = Vec::new();
    let scores = (0..width)
        .map(|j| {
            let stats: Vec<(f64, f64)> = per_class
                .values()
                .map(|rows| {
                    column.clear();
                    column.extend(rows.iter().map(|r| r[j]));
                    mean_var(&column)
                })
                .collect();
            let first_mean = stats[0].0;
            let between = if stats.iter().all(|s| s.0 == first_mean) {
                0.0
            } else {
                let grand = stats.iter().map(|s| s.0).sum::<f64>() / n_classes;
                stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>() / n_classes
            };
            let within = stats.iter().map(|s| s.1).sum::<f64>() / n_classes;
            if between == 0.0 {
                0.0
            } else if within == 0.0 {
                f64::INFINITY
            } else {
                between / within
            }
        })
        .collect();
    Ok(scores)
}

/// Features sorted by descending Fisher score; ties keep `labels` order.
pub fn rank_features<K: Clone>(
    per_class: &BTreeMap<String, Vec<Vec<f64>>>,
    labels: &[K],
) -> Result<Vec<(K, f64)>> {
    let scores = fisher_scores(per_class)?;
    if scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} labels for {} feature columns",
            labels.len(),
            scores.len()
        )));
    }
    let mut ranked: Vec<(K, f64)> = labels.iter().cloned().zip(scores).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    Ok(ranked)
}

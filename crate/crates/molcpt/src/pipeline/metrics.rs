//! Ranking metrics and the metrics TSV format.

use std::io::Write;

/// ROC-AUC: the probability that a uniformly random positive outranks a
/// uniformly random negative, ties counted one half. Computed with midranks
/// (O(n log n)); returns `None` when either class is absent.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("scores must be comparable"));

    // Midrank sum over positives: every rank is an integer or half-integer,
    // so the accumulation below is exact in f64 and order-independent.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0; // 1-based average rank of the tie block
        for &idx in &order[i..=j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let wins = rank_sum_pos - p * (p + 1.0) / 2.0;
    Some(wins / (p * negatives as f64))
}

/// Brute-force pair-counting ROC-AUC; the oracle the fast path must match.
pub fn roc_auc_pairwise(scores: &[f64], labels: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), labels.len());
    let mut total = 0.0;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1;
            if scores[i] > scores[j] {
                total += 1.0;
            } else if scores[i] == scores[j] {
                total += 0.5;
            }
        }
    }
    if pairs == 0 {
        None
    } else {
        Some(total / pairs as f64)
    }
}

/// Mean ROC-AUC over tasks, skipping tasks without both classes. Returns the
/// mean and the indices of the excluded tasks (also logged).
pub fn multi_task_auc(per_task: &[(Vec<f64>, Vec<bool>)]) -> (Option<f64>, Vec<usize>) {
    let mut values = Vec::new();
    let mut excluded = Vec::new();
    for (task, (scores, labels)) in per_task.iter().enumerate() {
        match roc_auc(scores, labels) {
            Some(v) => values.push(v),
            None => excluded.push(task),
        }
    }
    if !excluded.is_empty() {
        eprintln!(
            "warning: {} task(s) lack both classes and are excluded from the AUC mean: {excluded:?}",
            excluded.len()
        );
    }
    if values.is_empty() {
        (None, excluded)
    } else {
        (Some(values.iter().sum::<f64>() / values.len() as f64), excluded)
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    /// `train`, `valid`, or `test`.
    pub split: String,
    pub loss: f64,
    /// `NaN` renders as `na` (degenerate split).
    pub roc_auc: f64,
}

/// Writes the metrics TSV: a header line `epoch	split	loss	roc_auc`
/// followed by one row per entry, floats formatted to six decimals.
pub fn write_metrics(out: &mut impl Write, rows: &[MetricsRow]) -> std::io::Result<()> {
    writeln!(out, "epoch\tsplit\tloss\troc_auc")?;
    for r in rows {
        let auc = if r.roc_auc.is_nan() {
            "na".to_string()
        } else {
            format!("{:.6}", r.roc_auc)
        };
        writeln!(out, "{}\t{}\t{:.6}\t{}", r.epoch, r.split, r.loss, auc)?;
    }
    Ok(())
}

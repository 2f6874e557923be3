use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Class decision for one probability row: binary rows predict 1 iff
/// `p₁ ≥ threshold`; wider rows take the arg-max, lowest index on ties.
pub fn decide(probs: &[f64], threshold: f64) -> u32 {
    if probs.len() == 2 {
        return u32::from(probs[1] >= threshold);
    }
    let mut best = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = k;
        }
    }
    best as u32
}

/// `counts[i][j]`: true class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub threshold: f64,
}

impl ConfusionMatrix {
    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(
    probs: &[Vec<f64>],
    labels: &[u32],
    threshold: f64,
) -> Result<ConfusionMatrix> {
    if probs.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} probability rows, {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let width = probs.iter().map(Vec::len).max().unwrap_or(2);
    let classes = labels
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(width)
        .max(2);
    let mut counts = vec![vec![0u64; classes]; classes];
    for (p, &y) in probs.iter().zip(labels) {
        if p.len() != width {
            return Err(Error::Dimension("ragged probability rows".into()));
        }
        counts[y as usize][decide(p, threshold) as usize] += 1;
    }
    Ok(ConfusionMatrix { counts, threshold })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Some denominator was zero and the metric was set to 0.
    pub zero_division: bool,
}

fn ratio(num: u64, den: u64, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn prf_per_class(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    let k = cm.classes();
    (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..k).map(|i| cm.counts[i][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let mut zero_division = false;
            let precision = ratio(tp, predicted, &mut zero_division);
            let recall = ratio(tp, support, &mut zero_division);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                zero_division = true;
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
                zero_division,
            }
        })
        .collect()
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::Empty("confusion matrix")),
        n => Ok(cm.correct() as f64 / n as f64),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    /// Scores `≥ threshold` are called positive; the first point uses `+∞`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC over every distinct score, equal scores entering together, AUC by
/// the trapezoidal rule.
pub fn roc_auc(scores: &[f64], labels: &[u32]) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::InvalidInput(format!(
            "ROC needs binary labels, got {l}"
        )));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(usize::from(pos > 0 || neg > 0)));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let prev = *points.last().unwrap();
        let p = RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        };
        auc += (p.fpr - prev.fpr) * (p.tpr + prev.tpr) / 2.0;
        points.push(p);
    }
    Ok(RocCurve { points, auc })
}

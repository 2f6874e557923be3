use std::fmt::Write as _;

use super::metrics::{
    accuracy, confusion_matrix, prf_per_class, roc_auc, ClassMetrics, ConfusionMatrix, RocCurve,
};
use crate::error::Result;
use crate::io::EmbeddingSequence;
use crate::model::{predict, ModelParams, Prediction};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    /// Binary problems with both classes present only.
    pub roc: Option<RocCurve>,
    pub warnings: Vec<String>,
}

pub fn evaluate(probs: &[Vec<f64>], labels: &[u32], threshold: f64) -> Result<EvalReport> {
    let confusion = confusion_matrix(probs, labels, threshold)?;
    let accuracy = accuracy(&confusion)?;
    let per_class = prf_per_class(&confusion);
    let mut warnings: Vec<String> = per_class
        .iter()
        .enumerate()
        .filter(|(_, m)| m.zero_division)
        .map(|(c, _)| format!("class {c}: zero denominator, metric set to 0"))
        .collect();
    let binary = probs.iter().all(|p| p.len() == 2) && confusion.classes() == 2;
    let roc = if binary {
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        match roc_auc(&scores, labels) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("ROC skipped: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(EvalReport {
        confusion,
        per_class,
        accuracy,
        roc,
        warnings,
    })
}

/// Eval-mode predictions of `model` on labelled `sequences`, scored.
pub fn evaluate_model(
    model: &ModelParams,
    sequences: &[EmbeddingSequence],
    threshold: f64,
) -> Result<(EvalReport, Vec<Prediction>)> {
    let predictions = predict(model, sequences, threshold)?;
    let labels = crate::pipeline::PaddedBatch::from_sequences(sequences, model.arch.max_len)?
        .require_labels()?;
    let probs: Vec<Vec<f64>> = predictions.iter().map(|p| p.probs.clone()).collect();
    Ok((evaluate(&probs, &labels, threshold)?, predictions))
}

impl EvalReport {
    pub fn auc(&self) -> Option<f64> {
        self.roc.as_ref().map(|r| r.auc)
    }

    pub fn to_text(&self) -> String {
        let k = self.confusion.classes();
        let mut out = format!(
            "samples: {}\nthreshold: {}\naccuracy: {:.4}\n",
            self.confusion.total(),
            self.confusion.threshold,
            self.accuracy
        );
        if let Some(auc) = self.auc() {
            let _ = writeln!(out, "auc: {auc:.4}");
        }
        out.push_str("\nconfusion (rows true, columns predicted)\n      ");
        for j in 0..k {
            let _ = write!(out, "{j:>8}");
        }
        out.push('\n');
        for (i, row) in self.confusion.counts.iter().enumerate() {
            let _ = write!(out, "{i:>6}");
            for c in row {
                let _ = write!(out, "{c:>8}");
            }
            out.push('\n');
        }
        out.push_str("\nclass  precision  recall  f1      support\n");
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{c:<5}  {:<9.4}  {:<6.4}  {:<6.4}  {}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    /// One `key=value` per line.
    pub fn to_key_values(&self) -> String {
        let mut out = format!(
            "samples={}\nthreshold={}\naccuracy={}\n",
            self.confusion.total(),
            self.confusion.threshold,
            self.accuracy
        );
        if let Some(auc) = self.auc() {
            let _ = writeln!(out, "auc={auc}");
        }
        for (i, row) in self.confusion.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                let _ = writeln!(out, "cm_{i}_{j}={c}");
            }
        }
        for (c, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "precision_{c}={}", m.precision);
            let _ = writeln!(out, "recall_{c}={}", m.recall);
            let _ = writeln!(out, "f1_{c}={}", m.f1);
            let _ = writeln!(out, "support_{c}={}", m.support);
        }
        let _ = writeln!(out, "warnings={}", self.warnings.len());
        out
    }

    /// `fpr<TAB>tpr` per ROC point, header first; `None` without a curve.
    pub fn roc_tsv(&self) -> Option<String> {
        self.roc.as_ref().map(|r| {
            let mut out = String::from("fpr\ttpr\n");
            for p in &r.points {
                let _ = writeln!(out, "{}\t{}", p.fpr, p.tpr);
            }
            out
        })
    }
}

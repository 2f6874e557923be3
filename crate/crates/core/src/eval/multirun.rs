use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;

use super::metrics::DEFAULT_THRESHOLD;
use super::report::{evaluate_model, EvalReport};
use crate::error::{Error, Result};
use crate::io::{split_ids, EmbeddingSequence};
use crate::pipeline::PaddedBatch;
use crate::train::{train, ModelConfig, TrainConfig};

/// Mean and sample (n − 1) standard deviation; 0 for a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("metric values"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() == 1 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Ok(MeanStd { mean, std })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAggregate {
    pub runs: usize,
    /// `accuracy`, `auc`, and `precision_c` / `recall_c` / `f1_c` per class.
    pub metrics: BTreeMap<String, MeanStd>,
}

impl RunAggregate {
    pub fn get(&self, metric: &str) -> Option<MeanStd> {
        self.metrics.get(metric).copied()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("runs: {}\n", self.runs);
        for (name, v) in &self.metrics {
            let _ = writeln!(out, "{name}: {v}");
        }
        out
    }

    pub fn to_key_values(&self) -> String {
        let mut out = format!("runs={}\n", self.runs);
        for (name, v) in &self.metrics {
            let _ = writeln!(out, "{name}_mean={}\n{name}_std={}", v.mean, v.std);
        }
        out
    }
}

/// Aggregates the metrics present in every report.
pub fn aggregate(reports: &[EvalReport]) -> Result<RunAggregate> {
    if reports.is_empty() {
        return Err(Error::Empty("run reports"));
    }
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in reports {
        values
            .entry("accuracy".into())
            .or_default()
            .push(r.accuracy);
        if let Some(auc) = r.auc() {
            values.entry("auc".into()).or_default().push(auc);
        }
        for (c, m) in r.per_class.iter().enumerate() {
            values
                .entry(format!("precision_{c}"))
                .or_default()
                .push(m.precision);
            values
                .entry(format!("recall_{c}"))
                .or_default()
                .push(m.recall);
            values.entry(format!("f1_{c}")).or_default().push(m.f1);
        }
    }
    let metrics = values
        .into_iter()
        .filter(|(_, v)| v.len() == reports.len())
        .map(|(k, v)| Ok((k, MeanStd::from_values(&v)?)))
        .collect::<Result<_>>()?;
    Ok(RunAggregate {
        runs: reports.len(),
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiRunConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub train_ratio: f64,
    pub stratify: bool,
    /// Reuse the `base_seed` split for every run; only initialization,
    /// shuffling and dropout change.
    pub fixed_split: bool,
    pub threshold: f64,
    pub model: ModelConfig,
    /// Its `seed` is replaced per run.
    pub train: TrainConfig,
}

impl Default for MultiRunConfig {
    fn default() -> Self {
        MultiRunConfig {
            runs: 10,
            base_seed: 0,
            train_ratio: 0.8,
            stratify: false,
            fixed_split: false,
            threshold: DEFAULT_THRESHOLD,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MultiRunOutcome {
    pub aggregate: RunAggregate,
    pub reports: Vec<EvalReport>,
}

/// Run `r` uses seed `base_seed + r` for its split and its training.
pub fn multi_run(sequences: &[EmbeddingSequence], cfg: &MultiRunConfig) -> Result<MultiRunOutcome> {
    if cfg.runs == 0 {
        return Err(Error::InvalidInput("run count must be >= 1".into()));
    }
    let ids: Vec<String> = sequences.iter().map(|s| s.video_id.clone()).collect();
    let labels: Vec<Option<u32>> = sequences.iter().map(|s| s.label).collect();
    let by_id: HashMap<&str, &EmbeddingSequence> =
        sequences.iter().map(|s| (s.video_id.as_str(), s)).collect();
    let pick = |ids: &[String]| -> Vec<EmbeddingSequence> {
        ids.iter().map(|id| by_id[id.as_str()].clone()).collect()
    };
    let mut reports = Vec::with_capacity(cfg.runs);
    for r in 0..cfg.runs as u64 {
        let seed = cfg.base_seed.wrapping_add(r);
        let split_seed = if cfg.fixed_split { cfg.base_seed } else { seed };
        let split = split_ids(&ids, &labels, cfg.train_ratio, split_seed, cfg.stratify)?;
        let train_seqs = pick(&split.train_ids);
        let test_seqs = pick(&split.test_ids);
        let batch = PaddedBatch::from_sequences(&train_seqs, cfg.model.max_len)?;
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let outcome = train(&batch, &cfg.model, &tc)?;
        let (report, _) = evaluate_model(&outcome.model, &test_seqs, cfg.threshold)?;
        reports.push(report);
    }
    Ok(MultiRunOutcome {
        aggregate: aggregate(&reports)?,
        reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::evaluate;
    use crate::io::{synth_dataset, SynthPattern};

    #[test]
    fn mean_std_closed_form() {
        let m = MeanStd::from_values(&[0.9, 1.0]).unwrap();
        assert!((m.mean - 0.95).abs() < 1e-15);
        assert!((m.std - 0.070_710_678_118_654_75).abs() < 1e-12);
        assert_eq!(MeanStd::from_values(&[0.7]).unwrap().std, 0.0);
        assert!(MeanStd::from_values(&[]).is_err());
        let typical = MeanStd {
            mean: 0.964,
            std: 0.017,
        };
        assert_eq!(typical.to_string(), "0.964 ± 0.017");
    }

    #[test]
    fn aggregate_of_injected_reports() {
        let a = evaluate(&[vec![0.9, 0.1], vec![0.2, 0.8]], &[0, 1], 0.5).unwrap();
        let b = evaluate(&[vec![0.9, 0.1], vec![0.8, 0.2]], &[0, 1], 0.5).unwrap();
        let agg = aggregate(&[a.clone(), b]).unwrap();
        assert_eq!(agg.runs, 2);
        assert!((agg.get("accuracy").unwrap().mean - 0.75).abs() < 1e-15);
        let single = aggregate(&[a]).unwrap();
        assert!(single.metrics.values().all(|m| m.std == 0.0));
    }

    #[test]
    fn small_multi_run_is_deterministic() {
        let d = synth_dataset(40, 3, 4, SynthPattern::Separable, 9).unwrap();
        let cfg = MultiRunConfig {
            runs: 2,
            model: ModelConfig {
                max_len: 4,
                hidden: vec![6],
                heads: 2,
                ..ModelConfig::default()
            },
            train: TrainConfig {
                max_epochs: 3,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
            ..MultiRunConfig::default()
        };
        let a = multi_run(&d.sequences, &cfg).unwrap();
        let b = multi_run(&d.sequences, &cfg).unwrap();
        assert_eq!(a.aggregate, b.aggregate);
        assert_eq!(a.reports.len(), 2);
        assert_eq!(a.reports[0].confusion.total(), 8);
        let zero = MultiRunConfig { runs: 0, ..cfg };
        assert!(multi_run(&d.sequences, &zero).is_err());
    }
}

//! Cohort-level proportion of embryos that have started blastulation.

use super::stages::{StageAnnotation, VideoAnnotations};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CohortMember {
    pub annotations: Vec<StageAnnotation>,
    pub first_observation: f64,
    pub last_observation: f64,
}

impl CohortMember {
    /// Observation window spans the first to the last annotated event.
    pub fn from_annotations(video: &VideoAnnotations) -> Result<Self> {
        let times = video.annotations.iter().map(|a| a.time);
        let first = times.clone().min_by(f64::total_cmp);
        let last = times.max_by(f64::total_cmp);
        match (first, last) {
            (Some(first), Some(last)) => Ok(CohortMember {
                annotations: video.annotations.clone(),
                first_observation: first,
                last_observation: last,
            }),
            _ => Err(Error::Empty("annotation list")),
        }
    }

    fn blastulation_time(&self) -> Option<f64> {
        self.annotations
            .iter()
            .filter(|a| a.stage.is_blastocyst())
            .map(|a| a.time)
            .min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub time: f64,
    /// Fraction of the whole cohort whose earliest blastocyst stage is at or before `time`.
    pub proportion: f64,
    /// Embryos whose observation window contains `time`.
    pub active: usize,
}

pub fn cohort_blastulation_curve(cohort: &[CohortMember], grid: &[f64]) -> Result<Vec<CurvePoint>> {
    if cohort.is_empty() {
        return Err(Error::Empty("cohort"));
    }
    if grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("grid must be sorted ascending".into()));
    }
    let onsets: Vec<Option<f64>> = cohort.iter().map(CohortMember::blastulation_time).collect();
    let n = cohort.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let reached = onsets.iter().flatten().filter(|&&on| on <= t).count();
            let active = cohort
                .iter()
                .filter(|m| m.first_observation <= t && t <= m.last_observation)
                .count();
            CurvePoint {
                time: t,
                proportion: reached as f64 / n,
                active,
            }
        })
        .collect())
}

/// Parses `start:end:step` into the inclusive grid `start, start+step, …, ≤ end`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidInput(format!("grid must be start:end:step, got {spec:?}"));
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let [start, end, step] = parts[..] else {
        return Err(bad());
    };
    if step.is_nan() || step <= 0.0 || !start.is_finite() || !end.is_finite() || end < start {
        return Err(bad());
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The sixteen annotated developmental events, in developmental order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StageCode {
    TPB2,
    TPNa,
    TPNf,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
    TM,
    TSB,
    TB,
    TEB,
    THB,
}

impl StageCode {
    pub const ALL: [StageCode; 16] = [
        StageCode::TPB2,
        StageCode::TPNa,
        StageCode::TPNf,
        StageCode::T2,
        StageCode::T3,
        StageCode::T4,
        StageCode::T5,
        StageCode::T6,
        StageCode::T7,
        StageCode::T8,
        StageCode::T9,
        StageCode::TM,
        StageCode::TSB,
        StageCode::TB,
        StageCode::TEB,
        StageCode::THB,
    ];

    pub fn code(self) -> &'static str {
        match self {
            StageCode::TPB2 => "tPB2",
            StageCode::TPNa => "tPNa",
            StageCode::TPNf => "tPNf",
            StageCode::T2 => "t2",
            StageCode::T3 => "t3",
            StageCode::T4 => "t4",
            StageCode::T5 => "t5",
            StageCode::T6 => "t6",
            StageCode::T7 => "t7",
            StageCode::T8 => "t8",
            StageCode::T9 => "t9",
            StageCode::TM => "tM",
            StageCode::TSB => "tSB",
            StageCode::TB => "tB",
            StageCode::TEB => "tEB",
            StageCode::THB => "tHB",
        }
    }

    /// Blastulation start, blastocyst formation, expansion or hatching.
    pub fn is_blastocyst(self) -> bool {
        matches!(
            self,
            StageCode::TSB | StageCode::TB | StageCode::TEB | StageCode::THB
        )
    }
}

impl FromStr for StageCode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StageCode::ALL
            .into_iter()
            .find(|c| c.code() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown stage code {s:?}")))
    }
}

impl fmt::Display for StageCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageAnnotation {
    pub stage: StageCode,
    /// Hours post-insemination.
    pub time: f64,
}

impl StageAnnotation {
    pub fn new(stage: StageCode, time: f64) -> Result<Self> {
        if !time.is_finite() || time < 0.0 {
            return Err(Error::InvalidInput(format!(
                "stage {stage} at invalid time {time}"
            )));
        }
        Ok(StageAnnotation { stage, time })
    }
}

/// 1 when any annotation is a blastocyst-formation stage, else 0.
pub fn derive_label(annotations: &[StageAnnotation]) -> Result<u32> {
    if annotations.is_empty() {
        return Err(Error::Empty("annotation list"));
    }
    Ok(u32::from(
        annotations.iter().any(|a| a.stage.is_blastocyst()),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoAnnotations {
    pub video_id: String,
    pub annotations: Vec<StageAnnotation>,
}

impl VideoAnnotations {
    /// Earliest time of any blastocyst-formation stage.
    pub fn blastulation_time(&self) -> Option<f64> {
        self.annotations
            .iter()
            .filter(|a| a.stage.is_blastocyst())
            .map(|a| a.time)
            .min_by(f64::total_cmp)
    }

    /// Times must not decrease when annotations are taken in developmental order.
    fn check_order(&self) -> Result<()> {
        let mut sorted = self.annotations.clone();
        sorted.sort_by(|a, b| a.stage.cmp(&b.stage).then(a.time.total_cmp(&b.time)));
        for w in sorted.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::InvalidInput(format!(
                    "{}: {} at {} h precedes {} at {} h",
                    self.video_id, w[1].stage, w[1].time, w[0].stage, w[0].time
                )));
            }
        }
        Ok(())
    }
}

/// Parses `video_id<TAB>stage_code<TAB>hours` rows. A header line whose last
/// field is not numeric is skipped; `#` starts a comment line. Videos keep
/// the order of their first row.
pub fn parse_annotations(text: &str) -> Result<Vec<VideoAnnotations>> {
    let mut videos: Vec<VideoAnnotations> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let bad = |what: String| Error::InvalidInput(format!("annotation line {}: {what}", i + 1));
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, got {}", fields.len())));
        }
        let Ok(hours) = fields[2].parse::<f64>() else {
            if videos.is_empty() && i == 0 {
                continue;
            }
            return Err(bad(format!("hours {:?} is not numeric", fields[2])));
        };
        let stage: StageCode = fields[1].parse().map_err(|e: Error| bad(e.to_string()))?;
        let ann = StageAnnotation::new(stage, hours).map_err(|e| bad(e.to_string()))?;
        match videos.iter_mut().find(|v| v.video_id == fields[0]) {
            Some(v) => v.annotations.push(ann),
            None => videos.push(VideoAnnotations {
                video_id: fields[0].to_owned(),
                annotations: vec![ann],
            }),
        }
    }
    for v in &videos {
        v.check_order()?;
    }
    Ok(videos)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ann(code: &str, t: f64) -> StageAnnotation {
        StageAnnotation::new(code.parse().unwrap(), t).unwrap()
    }

    #[test]
    fn sixteen_codes_round_trip() {
        assert_eq!(StageCode::ALL.len(), 16);
        for c in StageCode::ALL {
            assert_eq!(c.code().parse::<StageCode>().unwrap(), c);
        }
        assert!("t10".parse::<StageCode>().is_err());
        let blast: Vec<_> = StageCode::ALL
            .into_iter()
            .filter(|c| c.is_blastocyst())
            .collect();
        assert_eq!(
            blast,
            [
                StageCode::TSB,
                StageCode::TB,
                StageCode::TEB,
                StageCode::THB
            ]
        );
    }

    #[test]
    fn labels() {
        assert_eq!(
            derive_label(&[ann("t2", 25.0), ann("tSB", 98.0)]).unwrap(),
            1
        );
        assert_eq!(
            derive_label(&[ann("tPB2", 3.0), ann("t8", 60.0), ann("tM", 85.0)]).unwrap(),
            0
        );
        assert!(derive_label(&[]).is_err());
    }

    #[test]
    fn parse_tsv() {
        let text = "video_id\tstage_code\thours\nA\ttPB2\t3.5\nA\ttSB\t99\nB\tt2\t26\n";
        let v = parse_annotations(text).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].annotations.len(), 2);
        assert_eq!(v[0].blastulation_time(), Some(99.0));
        assert_eq!(v[1].blastulation_time(), None);
        assert!(parse_annotations("A\ttX\t3\n").is_err());
        assert!(parse_annotations("A\tt2\t30\nA\tt3\t20\n").is_err());
    }

    proptest! {
        #[test]
        fn label_monotone(base in prop::collection::vec((0usize..16, 0.0f64..200.0), 1..10),
                          extra in prop::collection::vec((0usize..16, 0.0f64..200.0), 0..10)) {
            let mk = |v: &[(usize, f64)]| -> Vec<StageAnnotation> {
                v.iter().map(|&(c, t)| StageAnnotation::new(StageCode::ALL[c], t).unwrap()).collect()
            };
            let a = mk(&base);
            let mut b = a.clone();
            b.extend(mk(&extra));
            prop_assert!(derive_label(&b).unwrap() >= derive_label(&a).unwrap());
        }
    }
}

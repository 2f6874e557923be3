//! Generic long-format CSV time-series import.
//!
//! Each row is one time step of one series. The schema names which column
//! carries the series id, the (optional) timestamp, the (optional) label and
//! the feature columns. Without a timestamp column the row order within a
//! series is used as the time axis.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use super::embs::{EmbeddingSequence, Frame};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub series: String,
    pub time: Option<String>,
    pub label: Option<String>,
    /// `None` means every column not claimed by another role.
    pub features: Option<Vec<String>>,
}

impl FromStr for CsvSchema {
    type Err = Error;

    /// `series=<col>[,time=<col>][,label=<col>][,features=<c1>|<c2>|...]`
    fn from_str(s: &str) -> Result<Self> {
        let mut series = None;
        let mut schema = CsvSchema {
            series: String::new(),
            time: None,
            label: None,
            features: None,
        };
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("schema item {part:?} lacks '='")))?;
            let value = value.trim().to_owned();
            match key.trim() {
                "series" => series = Some(value),
                "time" => schema.time = Some(value),
                "label" => schema.label = Some(value),
                "features" => {
                    schema.features = Some(value.split('|').map(|c| c.trim().to_owned()).collect())
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "unknown schema role {other:?}"
                    )))
                }
            }
        }
        schema.series =
            series.ok_or_else(|| Error::InvalidInput("schema needs series=<column>".into()))?;
        Ok(schema)
    }
}

struct Row {
    time: f64,
    features: Vec<f32>,
    label: Option<u32>,
}

/// One sequence per series id, in order of first appearance. The sequence
/// label is the label of its last (latest) row.
pub fn import_csv_timeseries(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
) -> Result<Vec<EmbeddingSequence>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Csv(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv(e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Empty("csv file"));
    }

    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("column {name:?} not in header")))
    };
    let series_col = column(&schema.series)?;
    let time_col = schema.time.as_deref().map(column).transpose()?;
    let label_col = schema.label.as_deref().map(column).transpose()?;
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| column(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| i != series_col && Some(i) != time_col && Some(i) != label_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Csv("schema selects no feature columns".into()));
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
        let cell = |c: usize| record.get(c).unwrap_or("");
        let id = cell(series_col).to_owned();
        let rows = groups.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        let time = match time_col {
            Some(c) => cell(c).parse::<f64>().map_err(|_| {
                Error::Csv(format!(
                    "line {line}: timestamp {:?} is not numeric",
                    cell(c)
                ))
            })?,
            None => rows.len() as f64,
        };
        let features = feature_cols
            .iter()
            .map(|&c| {
                let v: f32 = cell(c).parse().map_err(|_| {
                    Error::Csv(format!(
                        "line {line}: feature {:?} value {:?} is not numeric",
                        &headers[c],
                        cell(c)
                    ))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::Csv(format!("line {line}: non-finite feature value")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let label = label_col
            .map(|c| {
                cell(c).parse::<u32>().map_err(|_| {
                    Error::Csv(format!(
                        "line {line}: label {:?} is not a class id",
                        cell(c)
                    ))
                })
            })
            .transpose()?;
        rows.push(Row {
            time,
            features,
            label,
        });
    }
    if order.is_empty() {
        return Err(Error::Empty("csv file"));
    }

    let dim = feature_cols.len();
    order
        .into_iter()
        .map(|id| {
            let mut rows = groups.remove(&id).unwrap();
            rows.sort_by(|a, b| a.time.total_cmp(&b.time));
            let mut seen = HashSet::new();
            for r in &rows {
                if !seen.insert(r.time.to_bits()) {
                    return Err(Error::Csv(format!(
                        "duplicate (series, timestamp) pair ({id}, {})",
                        r.time
                    )));
                }
            }
            let label = rows.last().and_then(|r| r.label);
            let frames = rows
                .into_iter()
                .map(|r| Frame {
                    timestamp: r.time,
                    vector: r.features,
                })
                .collect();
            EmbeddingSequence::new(id, dim, frames, label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::fs;

    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        fs::write(&path, text).unwrap();
        (dir, path)
    }

    #[test]
    fn schema_parsing() {
        let s: CsvSchema = "series=id,time=t,label=y,features=a|b".parse().unwrap();
        assert_eq!(s.series, "id");
        assert_eq!(s.features, Some(vec!["a".into(), "b".into()]));
        assert!("time=t".parse::<CsvSchema>().is_err());
        assert!("series=id,colour=x".parse::<CsvSchema>().is_err());
    }

    #[test]
    fn groups_and_sorts_rows() {
        let (_d, p) =
            write("id,t,x,y,label\ns1,2,0.5,1.5,0\ns2,0,9,9,1\ns1,0,0.1,1.1,0\ns1,1,0.2,1.2,1\n");
        let schema = "series=id,time=t,label=label".parse().unwrap();
        let seqs = import_csv_timeseries(&p, &schema).unwrap();
        assert_eq!(seqs.len(), 2);
        assert_eq!(seqs[0].video_id, "s1");
        assert_eq!(seqs[0].len(), 3);
        assert_eq!(seqs[0].feature_dim, 2);
        assert_eq!(seqs[0].timestamps(), vec![0.0, 1.0, 2.0]);
        assert_eq!(seqs[0].frames[0].vector, vec![0.1, 1.1]);
        // label of the latest row
        assert_eq!(seqs[0].label, Some(0));
        assert_eq!(seqs.iter().map(|s| s.len()).sum::<usize>(), 4);
    }

    #[test]
    fn eeg_style_fourteen_sensors() {
        let sensors: Vec<String> = (1..=14).map(|i| format!("s{i}")).collect();
        let mut text = format!("rec,{},eye\n", sensors.join(","));
        for row in 0..5 {
            let vals: Vec<String> = (0..14)
                .map(|j| format!("{}", 4000 + row * 14 + j))
                .collect();
            text.push_str(&format!("r1,{},{}\n", vals.join(","), row % 2));
        }
        let (_d, p) = write(&text);
        let schema = "series=rec,label=eye".parse().unwrap();
        let seqs = import_csv_timeseries(&p, &schema).unwrap();
        assert_eq!(seqs[0].feature_dim, 14);
        assert_eq!(seqs[0].len(), 5);
    }

    #[test]
    fn error_cases() {
        let schema: CsvSchema = "series=id,time=t".parse().unwrap();
        let (_d, p) = write("");
        assert!(import_csv_timeseries(&p, &schema).is_err());
        let (_d, p) = write("id,t,x\n");
        assert!(matches!(
            import_csv_timeseries(&p, &schema),
            Err(Error::Empty(_))
        ));
        let (_d, p) = write("id,t,x\na,0,1\na,1,abc\n");
        assert!(matches!(
            import_csv_timeseries(&p, &schema),
            Err(Error::Csv(_))
        ));
        let (_d, p) = write("id,t,x\na,0,1\na,0,2\n");
        assert!(matches!(
            import_csv_timeseries(&p, &schema),
            Err(Error::Csv(_))
        ));
    }
}

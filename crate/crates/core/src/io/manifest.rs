//! Tab-separated dataset manifests.
//!
//! ```text
//! path \t video_id \t label \t n_frames
//! v001.embs \t v001 \t 1 \t 7
//! ```
//!
//! Relative paths resolve against the manifest's directory. Label `-1` marks
//! an unlabeled sequence.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::embs::{read_sequence_file, EmbeddingSequence};
use crate::error::{Error, Result};

const HEADER: &str = "path\tvideo_id\tlabel\tn_frames";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub video_id: String,
    pub label: Option<u32>,
    pub n_frames: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.video_id.as_str()) {
                return Err(Error::InvalidInput(format!(
                    "duplicate video id {:?} in manifest",
                    e.video_id
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Counts per class id; unlabeled entries are counted under `-1`.
    pub fn class_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.label.map_or(-1, i64::from)).or_insert(0) += 1;
        }
        counts
    }

    pub fn video_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.video_id.clone()).collect()
    }

    /// Entries whose id is in `ids`, in manifest order.
    pub fn subset(&self, ids: &[String]) -> DatasetManifest {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        DatasetManifest {
            entries: self
                .entries
                .iter()
                .filter(|e| keep.contains(e.video_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim_end() == HEADER => {}
            Some((_, header)) => {
                return Err(Error::InvalidInput(format!(
                    "manifest header must be {HEADER:?}, got {header:?}"
                )))
            }
            None => return Err(Error::Empty("manifest")),
        }
        let mut entries = Vec::new();
        for (lineno, line) in lines {
            let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
            let bad =
                |what: &str| Error::InvalidInput(format!("manifest line {}: {what}", lineno + 1));
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let label: i64 = fields[2]
                .parse()
                .map_err(|_| bad("label is not an integer"))?;
            let label = match label {
                -1 => None,
                l if (0..=i32::MAX as i64).contains(&l) => Some(l as u32),
                _ => return Err(bad("label must be >= 0 or -1")),
            };
            let n_frames = fields[3]
                .parse()
                .map_err(|_| bad("n_frames is not a non-negative integer"))?;
            let path = Path::new(fields[0]);
            let path = if path.is_absolute() {
                path.to_path_buf()
            } else {
                base_dir.join(path)
            };
            entries.push(ManifestEntry {
                path,
                video_id: fields[1].to_owned(),
                label,
                n_frames,
            });
        }
        DatasetManifest::new(entries)
    }

    /// Reads a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let manifest = DatasetManifest::parse(&text, base)?;
        for e in &manifest.entries {
            if !e.path.is_file() {
                return Err(Error::io(
                    &e.path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                ));
            }
        }
        Ok(manifest)
    }

    /// Renders entries with paths made relative to `base_dir` where possible.
    pub fn render(&self, base_dir: &Path) -> String {
        let mut out = String::from(HEADER);
        out.push('\n');
        for e in &self.entries {
            let path = e.path.strip_prefix(base_dir).unwrap_or(&e.path);
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                path.display(),
                e.video_id,
                e.label.map_or(-1, i64::from),
                e.n_frames
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        fs::write(path, self.render(base)).map_err(|e| Error::io(path, e))
    }
}

/// Reads every sequence in the manifest, checking ids and labels agree.
pub fn load_sequences(manifest: &DatasetManifest) -> Result<Vec<EmbeddingSequence>> {
    manifest
        .entries
        .iter()
        .map(|e| {
            let seq = read_sequence_file(&e.path)?;
            if seq.video_id != e.video_id || seq.label != e.label {
                return Err(Error::InvalidInput(format!(
                    "{}: file holds ({}, {:?}) but manifest says ({}, {:?})",
                    e.path.display(),
                    seq.video_id,
                    seq.label,
                    e.video_id,
                    e.label
                )));
            }
            Ok(seq)
        })
        .collect()
}

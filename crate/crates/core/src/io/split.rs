use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

/// A deterministic train/test partition of video ids.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_ratio: f64,
    pub seed: u64,
    pub stratified: bool,
    /// Both lists keep the input order.
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

pub fn split_dataset(
    manifest: &DatasetManifest,
    ratio: f64,
    seed: u64,
    stratify: bool,
) -> Result<SplitSpec> {
    let ids = manifest.video_ids();
    let labels: Vec<Option<u32>> = manifest.entries.iter().map(|e| e.label).collect();
    split_ids(&ids, &labels, ratio, seed, stratify)
}

/// Uniform random split with `|train| = round(ratio * N)`.
///
/// The stratified variant allocates `round(ratio * N)` across classes by
/// largest remainder so the total size matches the unstratified split.
pub fn split_ids(
    ids: &[String],
    labels: &[Option<u32>],
    ratio: f64,
    seed: u64,
    stratify: bool,
) -> Result<SplitSpec> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput(format!(
            "train ratio must be in (0, 1), got {ratio}"
        )));
    }
    if ids.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} ids but {} labels",
            ids.len(),
            labels.len()
        )));
    }
    let n = ids.len();
    if n == 0 {
        return Err(Error::Empty("dataset"));
    }
    let n_train = (ratio * n as f64).round() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::DegenerateSplit {
            train: n_train,
            test: n - n_train,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; n];
    if stratify {
        let mut groups: BTreeMap<Option<u32>, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(*l).or_default().push(i);
        }
        let quotas = largest_remainder(&groups.values().map(Vec::len).collect::<Vec<_>>(), n_train);
        for (members, quota) in groups.values_mut().zip(quotas) {
            members.shuffle(&mut rng);
            for &i in &members[..quota] {
                in_train[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for &i in &order[..n_train] {
            in_train[i] = true;
        }
    }

    let (mut train_ids, mut test_ids) = (Vec::with_capacity(n_train), Vec::new());
    for (id, train) in ids.iter().zip(in_train) {
        if train {
            train_ids.push(id.clone());
        } else {
            test_ids.push(id.clone());
        }
    }
    Ok(SplitSpec {
        train_ratio: ratio,
        seed,
        stratified: stratify,
        train_ids,
        test_ids,
    })
}

/// Distributes `total` over groups proportionally to `sizes`.
fn largest_remainder(sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    let exact: Vec<f64> = sizes
        .iter()
        .map(|&s| s as f64 * total as f64 / n as f64)
        .collect();
    let mut quotas: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - quotas.iter().sum::<usize>();
    for i in order {
        if left == 0 {
            break;
        }
        if quotas[i] < sizes[i] {
            quotas[i] += 1;
            left -= 1;
        }
    }
    quotas
}

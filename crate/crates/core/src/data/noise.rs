use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{LabeledDataset, Split};
use crate::rng;
use crate::{Error, Result};

const SYMMETRIC_STREAM: u64 = 0x7379_6d6d;
const LONGTAIL_STREAM: u64 = 0x6c6f_6e67;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    /// Each training label flips, with probability `rate`, to a uniformly
    /// random different class.
    Symmetric,
    /// A `rate` fraction of the training classes is dissolved into
    /// `subclusters` fresh labels each.
    LongTail { subclusters: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub rate: f64,
    pub seed: u64,
}

pub fn inject_noise(ds: &LabeledDataset, spec: &NoiseSpec) -> Result<LabeledDataset> {
    match spec.kind {
        NoiseKind::Symmetric => inject_symmetric_noise(ds, spec.rate, spec.seed),
        NoiseKind::LongTail { subclusters } => inject_longtail_noise(ds, spec.rate, subclusters, spec.seed),
    }
}

/// Symmetric label noise over the Train records. The replacement class is
/// drawn from the other classes present in the Train split; true labels are
/// never touched.
pub fn inject_symmetric_noise(ds: &LabeledDataset, rate: f64, seed: u64) -> Result<LabeledDataset> {
    check_rate(rate)?;
    let pool = ds.classes_in(Split::Train);
    if pool.len() < 2 {
        return Err(Error::SingleClassUnsupported);
    }
    let mut rng = rng::stream(seed, SYMMETRIC_STREAM);
    let mut train_labels = ds.true_labels().to_vec();
    for i in ds.indices_of(Split::Train) {
        if rng.random::<f64>() < rate {
            // uniform over pool \ {truth}; pool is sorted and holds every Train class
            let truth = pool.binary_search(&ds.true_labels()[i]).expect("train class in pool");
            let mut pick = rng.random_range(0..pool.len() - 1);
            if pick >= truth {
                pick += 1;
            }
            train_labels[i] = pool[pick];
        }
    }
    Ok(ds.with_train_labels(train_labels, ds.num_classes()))
}

/// Open-set long-tail noise: `ceil(rate * K)` of the `K` training classes
/// are dissolved. Each dissolved class's Train records are shuffled and dealt
/// round-robin onto `subclusters` new label ids appended after the existing
/// classes, so the original id disappears from the training labels.
pub fn inject_longtail_noise(ds: &LabeledDataset, rate: f64, subclusters: usize, seed: u64) -> Result<LabeledDataset> {
    check_rate(rate)?;
    if subclusters == 0 {
        return Err(Error::InvalidParameter { name: "subclusters", reason: "must be at least 1" });
    }
    let mut pool = ds.classes_in(Split::Train);
    if pool.len() < 2 {
        return Err(Error::SingleClassUnsupported);
    }
    let dissolve = (libm::ceil(rate * pool.len() as f64 - 1e-9).max(0.0) as usize).min(pool.len());
    let mut rng = rng::stream(seed, LONGTAIL_STREAM);
    pool.shuffle(&mut rng);
    let mut train_labels = ds.true_labels().to_vec();
    let train = ds.indices_of(Split::Train);
    let mut next_id = ds.num_classes();
    for &class in &pool[..dissolve] {
        let mut members: Vec<usize> = train.iter().copied().filter(|&i| ds.true_labels()[i] == class).collect();
        members.shuffle(&mut rng);
        for (k, &i) in members.iter().enumerate() {
            train_labels[i] = next_id + k % subclusters;
        }
        next_id += subclusters;
    }
    Ok(ds.with_train_labels(train_labels, next_id))
}

fn check_rate(rate: f64) -> Result<()> {
    if (0.0..=1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "rate", reason: "must lie in [0, 1]" })
    }
}

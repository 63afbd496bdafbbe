use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{LabeledDataset, Split};
use crate::rng;
use crate::{Error, Result};

const SAMPLER_STREAM: u64 = 0x7361_6d70 << 32;

/// Uniform random batches over the Train records: every epoch is a fresh
/// seeded permutation cut into `batch_size` chunks, keeping the short tail.
#[derive(Debug, Clone)]
pub struct RandomBatchSampler {
    indices: Vec<usize>,
    batch_size: usize,
    seed: u64,
}

impl RandomBatchSampler {
    pub fn new(ds: &LabeledDataset, batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidParameter { name: "batch_size", reason: "must be at least 1" });
        }
        let indices = ds.indices_of(Split::Train);
        if indices.is_empty() {
            return Err(Error::EmptySplit);
        }
        Ok(Self { indices, batch_size, seed })
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.indices.len().div_ceil(self.batch_size)
    }

    /// Batches of epoch `epoch`; each epoch draws from its own stream.
    pub fn epoch(&self, epoch: u64) -> impl Iterator<Item = Vec<usize>> + '_ {
        let mut order = self.indices.clone();
        order.shuffle(&mut rng::stream(self.seed, SAMPLER_STREAM | (epoch & 0xffff_ffff)));
        let batch_size = self.batch_size;
        let total = order.len();
        (0..total.div_ceil(batch_size)).map(move |b| order[b * batch_size..((b + 1) * batch_size).min(total)].to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_disjoint_mixture;

    #[test]
    fn big_batch_is_one_permutation() {
        let ds = generate_disjoint_mixture(2, 1, 3, 5, 0.3, 0).unwrap();
        let sampler = RandomBatchSampler::new(&ds, 100, 1).unwrap();
        let batches: Vec<_> = sampler.epoch(0).collect();
        assert_eq!(batches.len(), 1);
        let mut b = batches[0].clone();
        b.sort_unstable();
        assert_eq!(b, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn epoch_covers_train_once() {
        let ds = generate_disjoint_mixture(4, 2, 3, 30, 0.3, 0).unwrap();
        let sampler = RandomBatchSampler::new(&ds, 16, 5).unwrap();
        let batches: Vec<_> = sampler.epoch(3).collect();
        assert_eq!(batches.len(), 8);
        assert_eq!(batches.last().unwrap().len(), 120 - 7 * 16);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, ds.indices_of(Split::Train));
        let a: Vec<_> = sampler.epoch(0).flatten().collect();
        let b: Vec<_> = sampler.epoch(1).flatten().collect();
        assert_ne!(a, b);
        assert_eq!(a, sampler.epoch(0).flatten().collect::<Vec<_>>());
    }

    #[test]
    fn errors() {
        let ds = generate_disjoint_mixture(0, 2, 3, 4, 0.3, 0).unwrap();
        assert_eq!(RandomBatchSampler::new(&ds, 4, 0).unwrap_err(), Error::EmptySplit);
        assert!(RandomBatchSampler::new(&ds, 0, 0).is_err());
    }
}

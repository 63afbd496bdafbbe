//! Labeled datasets: synthetic generators, IDX parsing, label noise,
//! batch sampling and query/gallery splits.

mod idx;
mod noise;
mod sampler;
mod split;
mod synthetic;

use alloc::vec;
use alloc::vec::Vec;

use crate::numkernel::DenseMatrix;
use crate::{Error, Result};

pub use idx::{dataset_from_idx, encode_idx_images, encode_idx_labels, parse_idx_images, parse_idx_labels, IdxImages};
pub use noise::{inject_longtail_noise, inject_noise, inject_symmetric_noise, NoiseKind, NoiseSpec};
pub use sampler::RandomBatchSampler;
pub use split::{split_query_gallery, split_train_test};
pub use synthetic::{generate_disjoint_mixture, generate_sphere_mixture};

/// Role of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    /// Held out, evaluated leave-one-out until split into query/gallery.
    Test,
    Query,
    Gallery,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Query => "query",
            Split::Gallery => "gallery",
        }
    }
}

/// Feature rows with ground-truth labels, training labels (which noise
/// injection may corrupt) and split tags.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: DenseMatrix,
    true_labels: Vec<usize>,
    train_labels: Vec<usize>,
    split_tags: Vec<Split>,
    num_classes: usize,
}

impl LabeledDataset {
    /// Clean dataset with every record tagged [`Split::Train`].
    pub fn new(features: DenseMatrix, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = features.rows();
        Self::from_parts(features, labels.clone(), labels, vec![Split::Train; n], num_classes)
    }

    pub fn from_parts(
        features: DenseMatrix,
        true_labels: Vec<usize>,
        train_labels: Vec<usize>,
        split_tags: Vec<Split>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = features.rows();
        for len in [true_labels.len(), train_labels.len(), split_tags.len()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, actual: len });
            }
        }
        if let Some(&label) = true_labels.iter().chain(&train_labels).find(|&&y| y >= num_classes) {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        Ok(Self { features, true_labels, train_labels, split_tags, num_classes })
    }

    pub fn with_split_tags(mut self, tags: Vec<Split>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), actual: tags.len() });
        }
        self.split_tags = tags;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &DenseMatrix {
        &self.features
    }

    pub fn true_labels(&self) -> &[usize] {
        &self.true_labels
    }

    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }

    pub fn split_tags(&self) -> &[Split] {
        &self.split_tags
    }

    /// Record indices carrying `split`, in ascending order.
    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split_tags[i] == split).collect()
    }

    /// Sorted distinct ground-truth classes among records tagged `split`.
    pub fn classes_in(&self, split: Split) -> Vec<usize> {
        let mut seen = vec![false; self.num_classes];
        for i in self.indices_of(split) {
            seen[self.true_labels[i]] = true;
        }
        (0..self.num_classes).filter(|&c| seen[c]).collect()
    }

    pub(crate) fn with_train_labels(&self, train_labels: Vec<usize>, num_classes: usize) -> Self {
        Self { train_labels, num_classes, ..self.clone() }
    }
}

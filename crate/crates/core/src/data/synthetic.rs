use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use super::{LabeledDataset, Split};
use crate::numkernel::{self, DenseMatrix};
use crate::rng;
use crate::{Error, Result};

const MEANS_STREAM: u64 = 0x6d65_616e;
const SAMPLES_STREAM: u64 = 0x736d_706c;

/// Balanced mixture of noisy directions on the unit sphere.
///
/// Each class gets a seeded random unit mean `mu`; its samples are
/// `normalize(mu + spread * z / sqrt(dim))` with `z ~ N(0, I)`, so `spread`
/// is the noise norm relative to the unit mean regardless of `dim`. Records
/// are class-major and all tagged [`Split::Train`].
pub fn generate_sphere_mixture(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if dim < 2 {
        return Err(Error::InvalidDimension("sphere mixture needs dim >= 2"));
    }
    if num_classes == 0 {
        return Err(Error::InvalidDimension("sphere mixture needs at least one class"));
    }
    if !(spread > 0.0) || !spread.is_finite() {
        return Err(Error::InvalidParameter { name: "spread", reason: "must be positive and finite" });
    }
    let mut mean_rng = rng::stream(seed, MEANS_STREAM);
    let means: Vec<Vec<f64>> = (0..num_classes).map(|_| unit_gaussian(&mut mean_rng, dim)).collect();

    let noise_scale = spread / libm::sqrt(dim as f64);
    let mut sample_rng = rng::stream(seed, SAMPLES_STREAM);
    let n = num_classes * samples_per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    let mut row = alloc::vec![0.0; dim];
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..samples_per_class {
            loop {
                for (r, &m) in row.iter_mut().zip(mean) {
                    let z: f64 = sample_rng.sample(StandardNormal);
                    *r = m + noise_scale * z;
                }
                if let Some(unit) = numkernel::normalized(&row) {
                    data.extend(unit);
                    break;
                }
            }
            labels.push(class);
        }
    }
    LabeledDataset::new(DenseMatrix::new(n, dim, data)?, labels, num_classes)
}

/// Retrieval-style mixture: classes `0..train_classes` are tagged Train and
/// the following `test_classes` are tagged Test, so train and test classes
/// are disjoint.
pub fn generate_disjoint_mixture(
    train_classes: usize,
    test_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let ds = generate_sphere_mixture(train_classes + test_classes, dim, samples_per_class, spread, seed)?;
    let tags = ds
        .true_labels()
        .iter()
        .map(|&y| if y < train_classes { Split::Train } else { Split::Test })
        .collect();
    ds.with_split_tags(tags)
}

fn unit_gaussian<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        if let Some(unit) = numkernel::normalized(&v) {
            return unit;
        }
    }
}

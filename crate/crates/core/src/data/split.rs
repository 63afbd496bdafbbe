use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::{LabeledDataset, Split};
use crate::rng;
use crate::{Error, Result};

const QUERY_STREAM: u64 = 0x7175_6572;
const HOLDOUT_STREAM: u64 = 0x686f_6c64;

/// Tags the held-out records (Test, Query or Gallery) as Query or Gallery by
/// a seeded draw stratified per ground-truth class. A class with `n >= 2`
/// records gets `round(fraction * n)` queries clamped to `[1, n - 1]`; a
/// singleton class goes to the gallery.
pub fn split_query_gallery(ds: &LabeledDataset, fraction_query: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction_query > 0.0 && fraction_query < 1.0) {
        return Err(Error::InvalidParameter { name: "fraction_query", reason: "must lie in (0, 1)" });
    }
    let held_out: Vec<usize> = (0..ds.len()).filter(|&i| ds.split_tags()[i] != Split::Train).collect();
    if held_out.len() < 2 {
        return Err(Error::InsufficientSamples("query/gallery split needs at least two held-out records"));
    }
    let mut tags = ds.split_tags().to_vec();
    let mut rng = rng::stream(seed, QUERY_STREAM);
    for mut members in by_class(ds, &held_out) {
        members.shuffle(&mut rng);
        let n = members.len();
        let queries = if n >= 2 { (libm::round(fraction_query * n as f64) as usize).clamp(1, n - 1) } else { 0 };
        for (k, &i) in members.iter().enumerate() {
            tags[i] = if k < queries { Split::Query } else { Split::Gallery };
        }
    }
    ds.clone().with_split_tags(tags)
}

/// Moves a stratified `fraction_test` of every class from Train to Test.
pub fn split_train_test(ds: &LabeledDataset, fraction_test: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction_test > 0.0 && fraction_test < 1.0) {
        return Err(Error::InvalidParameter { name: "fraction_test", reason: "must lie in (0, 1)" });
    }
    let train = ds.indices_of(Split::Train);
    if train.len() < 2 {
        return Err(Error::InsufficientSamples("train/test split needs at least two records"));
    }
    let mut tags = ds.split_tags().to_vec();
    let mut rng = rng::stream(seed, HOLDOUT_STREAM);
    for mut members in by_class(ds, &train) {
        members.shuffle(&mut rng);
        let held = libm::round(fraction_test * members.len() as f64) as usize;
        for &i in &members[..held] {
            tags[i] = Split::Test;
        }
    }
    ds.clone().with_split_tags(tags)
}

/// Groups `records` by ground-truth class, classes ascending.
fn by_class(ds: &LabeledDataset, records: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = (0..ds.num_classes()).map(|_| Vec::new()).collect();
    for &i in records {
        groups[ds.true_labels()[i]].push(i);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_disjoint_mixture;
    use crate::numkernel::DenseMatrix;
    use alloc::vec;

    #[test]
    fn pair_class_splits_one_one() {
        let features = DenseMatrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        let ds = LabeledDataset::new(features, vec![0, 0, 1], 2)
            .unwrap()
            .with_split_tags(vec![Split::Test; 3])
            .unwrap();
        let out = split_query_gallery(&ds, 0.5, 3).unwrap();
        let tags = out.split_tags();
        assert_ne!(tags[0], tags[1]);
        assert_eq!(tags[2], Split::Gallery);
    }

    #[test]
    fn balanced_counts_and_determinism() {
        let ds = generate_disjoint_mixture(2, 5, 3, 9, 0.3, 0).unwrap();
        let out = split_query_gallery(&ds, 0.5, 1).unwrap();
        let q = out.indices_of(Split::Query).len() as i64;
        let g = out.indices_of(Split::Gallery).len() as i64;
        assert_eq!(q + g, 45);
        assert!((q - g).abs() <= 5);
        assert_eq!(out.indices_of(Split::Train), ds.indices_of(Split::Train));
        for c in out.classes_in(Split::Query) {
            assert!(out.classes_in(Split::Gallery).contains(&c));
        }
        assert_eq!(out, split_query_gallery(&ds, 0.5, 1).unwrap());
    }

    #[test]
    fn errors() {
        let ds = generate_disjoint_mixture(2, 0, 3, 9, 0.3, 0).unwrap();
        assert!(matches!(split_query_gallery(&ds, 0.5, 1), Err(Error::InsufficientSamples(_))));
        assert!(split_query_gallery(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn holdout_is_stratified() {
        let ds = generate_disjoint_mixture(4, 0, 3, 10, 0.3, 0).unwrap();
        let out = split_train_test(&ds, 0.2, 0).unwrap();
        for c in 0..4 {
            let held = out.indices_of(Split::Test).iter().filter(|&&i| out.true_labels()[i] == c).count();
            assert_eq!(held, 2);
        }
    }
}

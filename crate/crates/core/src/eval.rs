//! Retrieval and embedding-geometry metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::numkernel::{self, DenseMatrix};
use crate::{Error, Result};

/// Cosine-similarity retrieval index over a labelled gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    gallery: DenseMatrix,
    labels: Vec<usize>,
}

impl RetrievalIndex {
    /// Normalizes the gallery rows.
    pub fn new(gallery: &DenseMatrix, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != gallery.rows() {
            return Err(Error::DimensionMismatch { expected: gallery.rows(), actual: labels.len() });
        }
        if gallery.rows() == 0 {
            return Err(Error::EmptyGallery);
        }
        Ok(Self { gallery: numkernel::l2_normalize_rows(gallery)?, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }
}

/// Recall@k for each `k` in `ks`: the fraction of queries whose `k` most
/// similar gallery items contain at least one item with the query's label.
/// Equal similarities rank the lower gallery index first. With
/// `exclude_self`, query `i` is gallery item `i` and never retrieves itself.
///
/// Returns `(k, recall)` pairs in the order of `ks`.
pub fn recall_at_k(
    queries: &DenseMatrix,
    query_labels: &[usize],
    index: &RetrievalIndex,
    ks: &[usize],
    exclude_self: bool,
) -> Result<Vec<(usize, f64)>> {
    if index.is_empty() {
        return Err(Error::EmptyGallery);
    }
    if query_labels.len() != queries.rows() {
        return Err(Error::DimensionMismatch { expected: queries.rows(), actual: query_labels.len() });
    }
    if queries.cols() != index.gallery.cols() {
        return Err(Error::DimensionMismatch { expected: index.gallery.cols(), actual: queries.cols() });
    }
    if exclude_self && queries.rows() != index.len() {
        return Err(Error::ShapeMismatch("leave-one-out needs the queries to be the gallery"));
    }
    if ks.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter { name: "ks", reason: "must be sorted ascending" });
    }
    let available = index.len() - exclude_self as usize;
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > available) {
        return Err(Error::KExceedsGallery { k, available });
    }
    if queries.rows() == 0 {
        return Err(Error::EmptyInput);
    }
    let queries = numkernel::l2_normalize_rows(queries)?;

    let mut hits = vec![0usize; ks.len()];
    for (q, &label) in query_labels.iter().enumerate() {
        if let Some(rank) = first_match_rank(&queries, q, label, index, exclude_self) {
            for (h, &k) in hits.iter_mut().zip(ks) {
                if rank < k {
                    *h += 1;
                }
            }
        }
    }
    let n = queries.rows() as f64;
    Ok(ks.iter().zip(hits).map(|(&k, h)| (k, h as f64 / n)).collect())
}

/// Zero-based rank of the best-ranked same-label gallery item, or `None`.
fn first_match_rank(queries: &DenseMatrix, q: usize, label: usize, index: &RetrievalIndex, exclude_self: bool) -> Option<usize> {
    let query = queries.row(q);
    let sims: Vec<f64> = index.gallery.iter_rows().map(|g| numkernel::dot(query, g)).collect();
    let candidates = || (0..sims.len()).filter(move |&g| !(exclude_self && g == q));
    // best match: highest similarity, lowest index on ties
    let best = candidates()
        .filter(|&g| index.labels[g] == label)
        .fold(None, |best: Option<usize>, g| match best {
            Some(b) if sims[b] >= sims[g] => Some(b),
            _ => Some(g),
        })?;
    let ahead = candidates().filter(|&g| sims[g] > sims[best] || (sims[g] == sims[best] && g < best)).count();
    Some(ahead)
}

/// Angular and radial statistics of a set of embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    /// Mean cosine between each class's samples and its center; `None` for
    /// classes without samples.
    pub class_mean_cosine: Vec<Option<f64>>,
    /// Mean over all samples of the cosine to their own class center.
    pub mean_intra_class_cosine: f64,
    /// Smallest `1 - cos` between two distinct centers; `None` with one center.
    pub min_center_cosine_distance: Option<f64>,
    /// Mean Euclidean norm of the raw embeddings.
    pub radius_mean: f64,
    /// Population standard deviation of the raw norms.
    pub radius_std: f64,
}

/// Computes a [`GeometryReport`]: angles on normalized embeddings and centers,
/// radii on the raw embeddings.
pub fn geometry_report(raw_embeddings: &DenseMatrix, labels: &[usize], centers: &DenseMatrix) -> Result<GeometryReport> {
    if labels.len() != raw_embeddings.rows() || raw_embeddings.rows() == 0 {
        return Err(Error::ShapeMismatch("labels must align with a non-empty embedding set"));
    }
    if centers.cols() != raw_embeddings.cols() {
        return Err(Error::ShapeMismatch("centers and embeddings must share a dimension"));
    }
    let n = centers.rows();
    if let Some(&label) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::LabelOutOfRange { label, num_classes: n });
    }
    let (x, radii) = numkernel::l2_normalize_rows_with_norms(raw_embeddings)?;
    let c = numkernel::l2_normalize_rows(centers)?;

    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let cos = numkernel::dot(x.row(i), c.row(y));
        sums[y] += cos;
        counts[y] += 1;
        total += cos;
    }
    let class_mean_cosine = sums.iter().zip(&counts).map(|(&s, &k)| (k > 0).then(|| s / k as f64)).collect();

    let mut min_distance: Option<f64> = None;
    for a in 0..n {
        for b in a + 1..n {
            let d = 1.0 - numkernel::dot(c.row(a), c.row(b));
            min_distance = Some(min_distance.map_or(d, |m| m.min(d)));
        }
    }

    let count = radii.len() as f64;
    let radius_mean = radii.iter().sum::<f64>() / count;
    let radius_var = radii.iter().map(|r| (r - radius_mean) * (r - radius_mean)).sum::<f64>() / count;
    Ok(GeometryReport {
        class_mean_cosine,
        mean_intra_class_cosine: total / count,
        min_center_cosine_distance: min_distance,
        radius_mean,
        radius_std: libm::sqrt(radius_var),
    })
}

/// Per-class mean direction of the normalized embeddings, as centers for
/// [`geometry_report`]. Classes without samples get a zero row.
pub fn class_mean_centers(raw_embeddings: &DenseMatrix, labels: &[usize], num_classes: usize) -> Result<DenseMatrix> {
    if labels.len() != raw_embeddings.rows() {
        return Err(Error::DimensionMismatch { expected: raw_embeddings.rows(), actual: labels.len() });
    }
    let x = numkernel::l2_normalize_rows(raw_embeddings)?;
    let mut centers = DenseMatrix::zeros(num_classes, x.cols());
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::LabelOutOfRange { label: y, num_classes });
        }
        numkernel::axpy(1.0, x.row(i), centers.row_mut(y));
    }
    Ok(centers)
}

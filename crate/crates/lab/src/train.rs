//! Dataset assembly and the training loop.

use std::collections::BTreeMap;

use ccl_core::centerbank::{CenterBank, CenterMode, CenterUpdate};
use ccl_core::data::{self, LabeledDataset, NoiseKind, NoiseSpec, RandomBatchSampler, Split};
use ccl_core::encoder::{MlpEncoder, OptimizerState};
use ccl_core::eval::{self, GeometryReport, RetrievalIndex};
use ccl_core::losses::{self, LinearClassifier, LossOutput, MarginConfig};
use ccl_core::DenseMatrix;

use crate::config::{CenterModeName, DatasetConfig, LossName, NoiseKindName, OptimizerName, TrainConfig};
use crate::error::Result;
use crate::io;
use crate::report::{EpochRecord, RecallEntry};

/// Seed-stream offset for classifier initialization.
const CLASSIFIER_SEED: u64 = 0x636c_6173;

/// Builds the dataset a config describes, with label noise applied.
pub fn load_dataset(cfg: &TrainConfig) -> Result<LabeledDataset> {
    let ds = match &cfg.dataset {
        DatasetConfig::Synthetic { train_classes, test_classes, dim, samples_per_class, spread, seed } => {
            data::generate_disjoint_mixture(
                *train_classes,
                *test_classes,
                *dim,
                *samples_per_class,
                *spread,
                seed.unwrap_or(cfg.seed),
            )?
        }
        DatasetConfig::Mnist { images, labels, test_images, test_labels, holdout } => {
            let train = io::read_idx_dataset(images, labels)?;
            match (test_images, test_labels) {
                (Some(ti), Some(tl)) => concat_test(train, io::read_idx_dataset(ti, tl)?)?,
                _ => data::split_train_test(&train, *holdout, cfg.seed)?,
            }
        }
    };
    if ds.dim() != cfg.layer_dims[0] {
        return Err(crate::config::ConfigError::new(
            "layer_dims",
            format!("first width {} does not match the data dimension {}", cfg.layer_dims[0], ds.dim()),
        )
        .into());
    }
    match &cfg.noise {
        Some(noise) if noise.rate > 0.0 => {
            let kind = match noise.kind {
                NoiseKindName::Symmetric => NoiseKind::Symmetric,
                NoiseKindName::LongTail => NoiseKind::LongTail { subclusters: noise.subclusters },
            };
            Ok(data::inject_noise(&ds, &NoiseSpec { kind, rate: noise.rate, seed: noise.seed.unwrap_or(cfg.seed) })?)
        }
        _ => Ok(ds),
    }
}

fn concat_test(train: LabeledDataset, test: LabeledDataset) -> Result<LabeledDataset> {
    if train.dim() != test.dim() {
        return Err(ccl_core::Error::DimensionMismatch { expected: train.dim(), actual: test.dim() }.into());
    }
    let rows: Vec<&[f64]> = train.features().iter_rows().chain(test.features().iter_rows()).collect();
    let labels: Vec<usize> = train.true_labels().iter().chain(test.true_labels()).copied().collect();
    let tags = std::iter::repeat_n(Split::Train, train.len()).chain(std::iter::repeat_n(Split::Test, test.len())).collect();
    let n = train.num_classes().max(test.num_classes());
    Ok(LabeledDataset::new(DenseMatrix::from_rows(&rows)?, labels, n)?.with_split_tags(tags)?)
}

/// Dense `0..n` ids for the distinct values of `labels`, in ascending order.
pub fn dense_ids(labels: &[usize]) -> (Vec<usize>, usize) {
    let map: BTreeMap<usize, usize> = {
        let mut distinct: Vec<usize> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.into_iter().enumerate().map(|(i, y)| (y, i)).collect()
    };
    (labels.iter().map(|y| map[y]).collect(), map.len())
}

/// Which records are scored and how.
#[derive(Debug, Clone)]
pub enum EvalProtocol {
    /// Leave-one-out retrieval within one set.
    LeaveOneOut { records: Vec<usize> },
    QueryGallery { queries: Vec<usize>, gallery: Vec<usize> },
}

impl EvalProtocol {
    /// Test records if any, else explicit query/gallery tags, else the training set.
    pub fn for_dataset(ds: &LabeledDataset) -> Self {
        let test = ds.indices_of(Split::Test);
        if !test.is_empty() {
            return EvalProtocol::LeaveOneOut { records: test };
        }
        let queries = ds.indices_of(Split::Query);
        let gallery = ds.indices_of(Split::Gallery);
        if !queries.is_empty() && !gallery.is_empty() {
            return EvalProtocol::QueryGallery { queries, gallery };
        }
        EvalProtocol::LeaveOneOut { records: ds.indices_of(Split::Train) }
    }

    /// Records whose embeddings the final geometry describes.
    pub fn records(&self) -> Vec<usize> {
        match self {
            EvalProtocol::LeaveOneOut { records } => records.clone(),
            EvalProtocol::QueryGallery { queries, gallery } => {
                let mut all = [queries.as_slice(), gallery.as_slice()].concat();
                all.sort_unstable();
                all
            }
        }
    }
}

/// Recall@k of `encoder` under `protocol`, scored with ground-truth labels.
pub fn evaluate_recall(encoder: &MlpEncoder, ds: &LabeledDataset, protocol: &EvalProtocol, ks: &[usize]) -> Result<Vec<RecallEntry>> {
    let embed = |idx: &[usize]| -> Result<(DenseMatrix, Vec<usize>)> {
        let x = ds.features().select_rows(idx)?;
        Ok((encoder.embed(&x)?, idx.iter().map(|&i| ds.true_labels()[i]).collect()))
    };
    let scores = match protocol {
        EvalProtocol::LeaveOneOut { records } => {
            let (emb, labels) = embed(records)?;
            let index = RetrievalIndex::new(&emb, labels.clone())?;
            eval::recall_at_k(&emb, &labels, &index, ks, true)?
        }
        EvalProtocol::QueryGallery { queries, gallery } => {
            let (q, ql) = embed(queries)?;
            let (g, gl) = embed(gallery)?;
            let index = RetrievalIndex::new(&g, gl)?;
            eval::recall_at_k(&q, &ql, &index, ks, false)?
        }
    };
    Ok(scores.into_iter().map(|(k, value)| RecallEntry { k, value }).collect())
}

/// Trainable state of one run.
#[derive(Debug, Clone)]
pub struct Model {
    pub encoder: MlpEncoder,
    /// Class centers: normalized proxies for the cosine losses, Euclidean
    /// centers for the center loss.
    pub bank: Option<CenterBank>,
    pub classifier: Option<LinearClassifier>,
    pub optimizer: OptimizerState,
    /// Training steps taken; seeds the per-step dropout draw.
    pub step: u64,
    pub epoch: u64,
}

impl Model {
    pub fn init(cfg: &TrainConfig, num_classes: usize) -> Result<Self> {
        let encoder = MlpEncoder::new(&cfg.layer_dims, cfg.dropout, cfg.seed)?;
        let dim = encoder.embedding_dim();
        let bank = if cfg.loss.uses_center_bank() || cfg.loss == LossName::CenterLoss {
            let mode = match cfg.center_mode {
                CenterModeName::Gradient => CenterMode::Gradient,
                CenterModeName::Stopgrad => CenterMode::StopGradient { renormalize: cfg.renormalize },
                CenterModeName::Momentum => CenterMode::Momentum { mu: cfg.mu.unwrap_or(0.9) },
            };
            Some(CenterBank::init(num_classes, dim, cfg.seed)?.with_mode(mode)?)
        } else {
            None
        };
        let classifier = if cfg.loss.uses_classifier() {
            let weights = CenterBank::init(num_classes, dim, cfg.seed ^ CLASSIFIER_SEED)?.raw_centers().clone();
            Some(LinearClassifier::new(weights, vec![0.0; num_classes])?)
        } else {
            None
        };
        let opt = &cfg.optimizer;
        let optimizer = match opt.kind {
            OptimizerName::SgdNesterov => OptimizerState::sgd_nesterov(opt.learning_rate, opt.momentum, opt.weight_decay)?,
            OptimizerName::Adamw => {
                OptimizerState::adamw_with(opt.learning_rate, opt.betas.0, opt.betas.1, opt.eps, opt.weight_decay)?
            }
        };
        Ok(Self { encoder, bank, classifier, optimizer, step: 0, epoch: 0 })
    }
}

/// Loss of one batch under the configured objective.
pub fn batch_loss(cfg: &TrainConfig, model: &Model, emb: &DenseMatrix, labels: &[usize]) -> Result<LossOutput> {
    let centers = || model.bank.as_ref().expect("loss needs a center bank").raw_centers();
    let out = match cfg.loss {
        LossName::Ccl => {
            let mc = MarginConfig::new(cfg.s, cfg.m, cfg.lambda, cfg.epsilon)?;
            losses::ccl(emb, labels, centers(), &mc)?
        }
        LossName::Nsoftmax => losses::nsoftmax(emb, labels, centers(), cfg.s)?,
        LossName::Proxynca => losses::proxynca(emb, labels, centers(), cfg.s)?,
        LossName::MarginContrastive => losses::margin_contrastive(emb, labels, centers(), cfg.s, cfg.m)?,
        LossName::CrossEntropy => losses::cross_entropy_linear(emb, labels, model.classifier.as_ref().expect("classifier"))?,
        LossName::CenterLoss => {
            losses::center_loss_joint(emb, labels, model.classifier.as_ref().expect("classifier"), centers(), cfg.lambda)?
        }
        LossName::InfonceBatch => losses::infonce_batch(emb, labels, cfg.s)?,
    };
    Ok(out)
}

fn dropout_seed(seed: u64, step: u64) -> u64 {
    seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One optimization step on a batch; returns the batch loss.
pub fn train_step(cfg: &TrainConfig, model: &mut Model, x: &DenseMatrix, labels: &[usize]) -> Result<f64> {
    let (emb, cache) = model.encoder.forward(x, true, dropout_seed(cfg.seed, model.step))?;
    let out = batch_loss(cfg, model, &emb, labels)?;
    let enc_grads = model.encoder.backward(&cache, &out.grad_raw_embeddings)?;

    let center_grad = match &model.bank {
        Some(bank) if !matches!(bank.mode(), CenterMode::Momentum { .. }) => Some(bank.descent_gradient(&CenterUpdate {
            grad_centers: &out.grad_centers,
            batch_embeddings: &emb,
            batch_labels: labels,
            lambda: cfg.lambda,
        })?),
        _ => None,
    };

    let mut grads: Vec<&[f64]> = enc_grads.as_slices();
    if let Some(g) = &center_grad {
        grads.push(g.as_slice());
    }
    if let Some(g) = &out.grad_classifier {
        grads.push(g.weights.as_slice());
        grads.push(&g.bias);
    }
    {
        let Model { encoder, bank, classifier, optimizer, .. } = model;
        let mut params: Vec<&mut [f64]> = encoder.parameters_mut();
        if center_grad.is_some() {
            params.push(bank.as_mut().expect("bank").raw_centers_mut()?.as_mut_slice());
        }
        if let Some(clf) = classifier {
            params.push(clf.weights.as_mut_slice());
            params.push(&mut clf.bias);
        }
        optimizer.step(&mut params, &grads)?;
    }
    if let Some(bank) = &mut model.bank {
        match bank.mode() {
            CenterMode::Momentum { .. } => bank.momentum_update(&emb, labels)?,
            _ => bank.finish_step()?,
        }
    }
    model.step += 1;
    Ok(out.value)
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub initial_recall: Vec<RecallEntry>,
    pub epochs: Vec<EpochRecord>,
    pub geometry: GeometryReport,
    /// Embeddings and ground-truth labels of the evaluated records.
    pub eval_embeddings: DenseMatrix,
    pub eval_labels: Vec<usize>,
    /// Training-label ids in the order of the center bank rows.
    pub class_ids: Vec<usize>,
}

/// Runs the full loop: per epoch, seeded batches, encoder and center updates,
/// then retrieval evaluation.
pub fn train(cfg: &TrainConfig, ds: &LabeledDataset) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_idx = ds.indices_of(Split::Train);
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| ds.train_labels()[i]).collect();
    let (dense, num_classes) = dense_ids(&train_labels);
    let mut class_ids = vec![0; num_classes];
    for (&raw, &d) in train_labels.iter().zip(&dense) {
        class_ids[d] = raw;
    }
    let mut label_of = vec![usize::MAX; ds.len()];
    for (&i, &d) in train_idx.iter().zip(&dense) {
        label_of[i] = d;
    }
    if num_classes < 2 && matches!(cfg.loss, LossName::Proxynca) {
        return Err(ccl_core::Error::SingleClassUnsupported.into());
    }

    let mut model = Model::init(cfg, num_classes)?;
    let sampler = RandomBatchSampler::new(ds, cfg.batch_size, cfg.seed)?;
    let protocol = EvalProtocol::for_dataset(ds);
    let initial_recall = evaluate_recall(&model.encoder, ds, &protocol, &cfg.ks)?;

    let mut epochs = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs as u64 {
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in sampler.epoch(epoch) {
            let x = ds.features().select_rows(&batch)?;
            let labels: Vec<usize> = batch.iter().map(|&i| label_of[i]).collect();
            total += train_step(cfg, &mut model, &x, &labels)?;
            batches += 1;
        }
        model.epoch = epoch + 1;
        let recall = evaluate_recall(&model.encoder, ds, &protocol, &cfg.ks)?;
        epochs.push(EpochRecord { epoch: epoch + 1, loss: total / batches as f64, recall });
    }

    let records = protocol.records();
    let eval_embeddings = model.encoder.embed(&ds.features().select_rows(&records)?)?;
    let eval_labels: Vec<usize> = records.iter().map(|&i| ds.true_labels()[i]).collect();
    let geometry = class_geometry(&eval_embeddings, &eval_labels)?;
    Ok(TrainOutcome { model, initial_recall, epochs, geometry, eval_embeddings, eval_labels, class_ids })
}

/// Geometry of embeddings around their per-class mean directions.
pub fn class_geometry(embeddings: &DenseMatrix, labels: &[usize]) -> Result<GeometryReport> {
    let (dense, n) = dense_ids(labels);
    let centers = eval::class_mean_centers(embeddings, &dense, n)?;
    Ok(eval::geometry_report(embeddings, &dense, &centers)?)
}

impl TrainOutcome {
    /// Recall after the last epoch, or of the initial state without epochs.
    pub fn final_recall(&self) -> &[RecallEntry] {
        self.epochs.last().map_or(&self.initial_recall, |e| &e.recall)
    }
}

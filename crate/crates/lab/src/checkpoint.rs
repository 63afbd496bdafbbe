//! Versioned text checkpoint of a [`Model`].
//!
//! Line-oriented, comma-separated; the first line is the magic string.
//! Floats use shortest round-trip formatting, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use ccl_core::centerbank::{CenterBank, CenterMode};
use ccl_core::encoder::{Layer, MlpEncoder, OptimizerKind, OptimizerState};
use ccl_core::losses::LinearClassifier;
use ccl_core::DenseMatrix;

use crate::error::{LabError, Result};
use crate::io;
use crate::train::Model;

pub const MAGIC: &str = "CCLLAB1";

fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn push_tensor(out: &mut String, name: &str, rows: usize, cols: usize, values: &[f64]) {
    let _ = write!(out, "tensor,{name},{rows},{cols}");
    if !values.is_empty() {
        let _ = write!(out, ",{}", join(values));
    }
    out.push('\n');
}

pub fn encode(model: &Model) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(out, "layer_dims,{}", join(model.encoder.layer_dims()));
    let _ = writeln!(out, "dropout,{}", model.encoder.dropout_rate());
    let _ = writeln!(out, "rng_step,{}", model.step);
    let _ = writeln!(out, "epoch,{}", model.epoch);
    let opt = &model.optimizer;
    let kind = match opt.kind() {
        OptimizerKind::SgdNesterov => "sgd_nesterov",
        OptimizerKind::AdamW => "adamw",
    };
    let (b1, b2) = opt.betas();
    let _ = writeln!(
        out,
        "optimizer,{kind},{},{},{},{b1},{b2},{},{}",
        opt.learning_rate(),
        opt.momentum(),
        opt.weight_decay(),
        opt.eps(),
        opt.step_count()
    );
    for (i, l) in model.encoder.layers().iter().enumerate() {
        push_tensor(&mut out, &format!("layer{i}.weights"), l.weights.rows(), l.weights.cols(), l.weights.as_slice());
        push_tensor(&mut out, &format!("layer{i}.bias"), 1, l.bias.len(), &l.bias);
    }
    if let Some(bank) = &model.bank {
        let mode = match bank.mode() {
            CenterMode::Gradient => "gradient,0".to_owned(),
            CenterMode::StopGradient { renormalize: false } => "stopgrad,0".to_owned(),
            CenterMode::StopGradient { renormalize: true } => "stopgrad_renormalize,0".to_owned(),
            CenterMode::Momentum { mu } => format!("momentum,{mu}"),
        };
        let _ = writeln!(out, "center_mode,{mode}");
        let c = bank.raw_centers();
        push_tensor(&mut out, "centers", c.rows(), c.cols(), c.as_slice());
    }
    if let Some(clf) = &model.classifier {
        push_tensor(&mut out, "classifier.weights", clf.weights.rows(), clf.weights.cols(), clf.weights.as_slice());
        push_tensor(&mut out, "classifier.bias", 1, clf.bias.len(), &clf.bias);
    }
    for (name, buffers) in [("first", opt.first_moments()), ("second", opt.second_moments())] {
        for (i, b) in buffers.iter().enumerate() {
            push_tensor(&mut out, &format!("moment.{name}.{i}"), 1, b.len(), b);
        }
    }
    out
}

pub fn save(path: &Path, model: &Model) -> Result<()> {
    io::write_text(path, &encode(model))
}

pub fn load(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    decode(&text).map_err(|msg| LabError::format(path, msg))
}

fn num<T: std::str::FromStr>(field: Option<&str>, what: &str) -> std::result::Result<T, String> {
    field.and_then(|f| f.parse().ok()).ok_or_else(|| format!("bad or missing {what}"))
}

pub fn decode(text: &str) -> std::result::Result<Model, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err(format!("missing {MAGIC} header"));
    }
    let mut layer_dims: Vec<usize> = Vec::new();
    let mut dropout = 0.0;
    let (mut step, mut epoch) = (0u64, 0u64);
    let mut optimizer: Option<(OptimizerState, u64)> = None;
    let mut center_mode: Option<CenterMode> = None;
    let mut tensors: Vec<(String, DenseMatrix)> = Vec::new();

    for line in lines.filter(|l| !l.is_empty()) {
        let mut f = line.split(',');
        match f.next().unwrap_or_default() {
            "layer_dims" => layer_dims = f.map(|v| num(Some(v), "layer width")).collect::<std::result::Result<_, _>>()?,
            "dropout" => dropout = num(f.next(), "dropout")?,
            "rng_step" => step = num(f.next(), "rng_step")?,
            "epoch" => epoch = num(f.next(), "epoch")?,
            "optimizer" => {
                let kind = f.next().unwrap_or_default().to_owned();
                let v: Vec<f64> = (0..6).map(|_| num(f.next(), "optimizer field")).collect::<std::result::Result<_, _>>()?;
                let step_count: u64 = num(f.next(), "step_count")?;
                let state = match kind.as_str() {
                    "sgd_nesterov" => OptimizerState::sgd_nesterov(v[0], v[1], v[2]),
                    "adamw" => OptimizerState::adamw_with(v[0], v[3], v[4], v[5], v[2]),
                    other => return Err(format!("unknown optimizer {other:?}")),
                }
                .map_err(|e| e.to_string())?;
                optimizer = Some((state, step_count));
            }
            "center_mode" => {
                let name = f.next().unwrap_or_default();
                let mu: f64 = num(f.next(), "mu")?;
                center_mode = Some(match name {
                    "gradient" => CenterMode::Gradient,
                    "stopgrad" => CenterMode::StopGradient { renormalize: false },
                    "stopgrad_renormalize" => CenterMode::StopGradient { renormalize: true },
                    "momentum" => CenterMode::Momentum { mu },
                    other => return Err(format!("unknown center mode {other:?}")),
                });
            }
            "tensor" => {
                let name = f.next().ok_or("tensor without name")?.to_owned();
                let rows: usize = num(f.next(), "rows")?;
                let cols: usize = num(f.next(), "cols")?;
                let values: Vec<f64> = f.map(|v| num(Some(v), "tensor value")).collect::<std::result::Result<_, _>>()?;
                let m = DenseMatrix::new(rows, cols, values).map_err(|e| format!("{name}: {e}"))?;
                tensors.push((name, m));
            }
            other => return Err(format!("unknown record {other:?}")),
        }
    }

    let mut take = |name: &str| -> Option<DenseMatrix> {
        let pos = tensors.iter().position(|(n, _)| n == name)?;
        Some(tensors.remove(pos).1)
    };
    if layer_dims.len() < 2 {
        return Err("layer_dims needs at least two widths".into());
    }
    let mut layers = Vec::with_capacity(layer_dims.len() - 1);
    for i in 0..layer_dims.len() - 1 {
        let weights = take(&format!("layer{i}.weights")).ok_or(format!("missing layer{i}.weights"))?;
        let bias = take(&format!("layer{i}.bias")).ok_or(format!("missing layer{i}.bias"))?.into_vec();
        if weights.shape() != (layer_dims[i + 1], layer_dims[i]) {
            return Err(format!("layer{i}.weights shape disagrees with layer_dims"));
        }
        layers.push(Layer { weights, bias });
    }
    let encoder = MlpEncoder::from_layers(layers, dropout).map_err(|e| e.to_string())?;
    let bank = match (take("centers"), center_mode) {
        (Some(c), Some(mode)) => Some(CenterBank::from_centers(c, mode).map_err(|e| e.to_string())?),
        (None, None) => None,
        _ => return Err("centers and center_mode must appear together".into()),
    };
    let classifier = match (take("classifier.weights"), take("classifier.bias")) {
        (Some(w), Some(b)) => Some(LinearClassifier::new(w, b.into_vec()).map_err(|e| e.to_string())?),
        (None, None) => None,
        _ => return Err("classifier weights and bias must appear together".into()),
    };
    let moments = |prefix: &str, take: &mut dyn FnMut(&str) -> Option<DenseMatrix>| {
        (0..).map_while(|i| take(&format!("moment.{prefix}.{i}")).map(DenseMatrix::into_vec)).collect::<Vec<_>>()
    };
    let first = moments("first", &mut take);
    let second = moments("second", &mut take);
    if let Some((name, _)) = tensors.first() {
        return Err(format!("unexpected tensor {name:?}"));
    }
    let (mut optimizer, step_count) = optimizer.ok_or("missing optimizer record")?;
    optimizer.restore(step_count, first, second).map_err(|e| e.to_string())?;
    Ok(Model { encoder, bank, classifier, optimizer, step, epoch })
}

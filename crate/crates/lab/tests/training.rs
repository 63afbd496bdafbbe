mod common;

use std::fs;

use ccl_lab::checkpoint;
use ccl_lab::commands::{self, CHECKPOINT_FILE, METRICS_FILE, REPORT_FILE};
use ccl_lab::config::{CenterModeName, LossName, OptimizerName};
use ccl_lab::report::RunReport;
use common::{ccl_config, tiny_config};

#[test]
fn records_one_entry_per_configured_epoch() {
    for loss in ["ccl", "nsoftmax", "proxynca", "cross_entropy", "center_loss", "margin_contrastive", "infonce-batch"] {
        let cfg = tiny_config(loss);
        let (report, _) = commands::run_training(&cfg).unwrap();
        assert_eq!(report.epochs.len(), cfg.epochs, "{loss}");
        assert!(report.epochs.iter().all(|e| e.loss.is_finite() && e.recall.len() == 3), "{loss}");
        assert_eq!(report.epochs.iter().map(|e| e.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    }
}

#[test]
fn zero_epochs_reports_only_the_initial_state() {
    let cfg = ccl_lab::config::TrainConfig { epochs: 0, ..ccl_config() };
    let (report, _) = commands::run_training(&cfg).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(report.initial_recall.len(), 3);
    assert_eq!(report.final_recall(), report.initial_recall.as_slice());
}

#[test]
fn same_seed_gives_identical_reports_and_artifacts() {
    let cfg = ccl_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = commands::cmd_train(&cfg, a.path()).unwrap();
    let rb = commands::cmd_train(&cfg, b.path()).unwrap();
    assert_eq!(ra.report.to_json_without_wall_clock(), rb.report.to_json_without_wall_clock());
    for file in [METRICS_FILE, CHECKPOINT_FILE, "centers.csv", "final_metrics.csv"] {
        assert_eq!(fs::read(ra.dir.join(file)).unwrap(), fs::read(rb.dir.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn echoed_config_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let first = commands::cmd_train(&ccl_config(), dir.path()).unwrap();
    let text = fs::read_to_string(first.dir.join(REPORT_FILE)).unwrap();
    let echoed: RunReport = serde_json::from_str(&text).unwrap();
    let (again, _) = commands::run_training(&echoed.config).unwrap();
    assert_eq!(again.to_json_without_wall_clock(), echoed.to_json_without_wall_clock());
}

#[test]
fn ccl_without_margin_or_center_term_trains_like_nsoftmax() {
    let (ccl, _) = commands::run_training(&tiny_config("ccl")).unwrap();
    let (ns, _) = commands::run_training(&tiny_config("nsoftmax")).unwrap();
    for (a, b) in ccl.epochs.iter().zip(&ns.epochs) {
        assert!((a.loss - b.loss).abs() < 1e-10, "epoch {}: {} vs {}", a.epoch, a.loss, b.loss);
        assert_eq!(a.recall, b.recall);
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let a = ccl_config();
    let b = ccl_lab::config::TrainConfig { seed: 8, ..ccl_config() };
    assert_ne!(commands::config_hash(&a), commands::config_hash(&b));
    let (ra, _) = commands::run_training(&a).unwrap();
    let (rb, _) = commands::run_training(&b).unwrap();
    assert_ne!(ra.epochs[0].loss, rb.epochs[0].loss);
}

#[test]
fn every_center_mode_and_optimizer_trains() {
    let modes = [
        (CenterModeName::Gradient, None, false),
        (CenterModeName::Stopgrad, None, false),
        (CenterModeName::Stopgrad, None, true),
        (CenterModeName::Momentum, Some(0.9), false),
    ];
    for (mode, mu, renormalize) in modes {
        for kind in [OptimizerName::SgdNesterov, OptimizerName::Adamw] {
            let mut cfg = ccl_config();
            cfg.center_mode = mode;
            cfg.mu = mu;
            cfg.renormalize = renormalize;
            cfg.optimizer.kind = kind;
            let (report, outcome) = commands::run_training(&cfg).unwrap();
            assert!(report.epochs.iter().all(|e| e.loss.is_finite()), "{mode:?} {kind:?}");
            let bank = outcome.model.bank.as_ref().unwrap();
            if renormalize || matches!(mode, CenterModeName::Momentum) {
                for row in bank.raw_centers().iter_rows() {
                    assert!((ccl_core::numkernel::norm(row) - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}

#[test]
fn checkpoint_round_trips_every_tensor() {
    let dir = tempfile::tempdir().unwrap();
    for loss in ["ccl", "center_loss", "infonce-batch"] {
        for kind in [OptimizerName::SgdNesterov, OptimizerName::Adamw] {
            let mut cfg = if loss == "ccl" { ccl_config() } else { tiny_config(loss) };
            cfg.optimizer.kind = kind;
            let run = commands::cmd_train(&cfg, dir.path()).unwrap();
            let path = run.dir.join(CHECKPOINT_FILE);
            let text = fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("CCLLAB1\n"));
            let loaded = checkpoint::load(&path).unwrap();
            let model = &run.outcome.model;
            assert_eq!(loaded.encoder.layers(), model.encoder.layers());
            assert_eq!(loaded.encoder.dropout_rate(), model.encoder.dropout_rate());
            assert_eq!(loaded.bank, model.bank);
            assert_eq!(loaded.classifier, model.classifier);
            assert_eq!(loaded.optimizer, model.optimizer);
            assert_eq!((loaded.step, loaded.epoch), (model.step, model.epoch));
            assert_eq!(checkpoint::encode(&loaded), text);
        }
    }
}

#[test]
fn checkpoint_rejects_foreign_files() {
    assert!(checkpoint::decode("CCLLAB0\n").is_err());
    assert!(checkpoint::decode("CCLLAB1\nlayer_dims,2,2\nbogus,1\n").is_err());
    let dir = tempfile::tempdir().unwrap();
    let run = commands::cmd_train(&ccl_config(), dir.path()).unwrap();
    let text = fs::read_to_string(run.dir.join(CHECKPOINT_FILE)).unwrap();
    let truncated: String = text.lines().filter(|l| !l.starts_with("tensor,layer1.bias")).map(|l| format!("{l}\n")).collect();
    assert!(checkpoint::decode(&truncated).unwrap_err().contains("layer1.bias"));
}

#[test]
fn run_directory_is_keyed_by_hash_and_seed() {
    let cfg = ccl_config();
    let dir = tempfile::tempdir().unwrap();
    let run = commands::cmd_train(&cfg, dir.path()).unwrap();
    let name = run.dir.file_name().unwrap().to_str().unwrap().to_owned();
    assert_eq!(name, format!("ccl-{}-seed7", commands::config_hash(&cfg)));
    assert_eq!(commands::config_hash(&cfg).len(), 12);
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1);
    let echoed = fs::read_to_string(run.dir.join("config.json")).unwrap();
    assert_eq!(ccl_lab::config::TrainConfig::from_json(&echoed).unwrap(), cfg);
}

#[test]
fn metrics_csv_follows_the_configured_ks() {
    let dir = tempfile::tempdir().unwrap();
    let run = commands::cmd_train(&ccl_config(), dir.path()).unwrap();
    let text = fs::read_to_string(run.dir.join(METRICS_FILE)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("epoch,loss,recall@1,recall@2,recall@4"));
    assert_eq!(lines.count(), 3);
}

#[test]
fn two_dimensional_embeddings_also_get_a_scatter_plot() {
    let mut cfg = tiny_config("nsoftmax");
    cfg.layer_dims = vec![8, 16, 2];
    let dir = tempfile::tempdir().unwrap();
    let run = commands::cmd_train(&cfg, dir.path()).unwrap();
    let svg = fs::read_to_string(run.dir.join("scatter.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), run.outcome.eval_labels.len());
    assert_eq!(svg.matches("class=\"legend-entry\"").count(), 3);
}

#[test]
fn noisy_training_labels_leave_evaluation_labels_clean() {
    let mut cfg = ccl_config();
    cfg.noise = Some(ccl_lab::config::NoiseConfig {
        kind: ccl_lab::config::NoiseKindName::Symmetric,
        rate: 0.5,
        subclusters: 5,
        seed: None,
    });
    let ds = ccl_lab::train::load_dataset(&cfg).unwrap();
    let flipped = (0..ds.len()).filter(|&i| ds.train_labels()[i] != ds.true_labels()[i]).count();
    assert!(flipped > 0);
    let (_, outcome) = commands::run_training(&cfg).unwrap();
    let test: Vec<usize> = ds.indices_of(ccl_core::data::Split::Test);
    let truth: Vec<usize> = test.iter().map(|&i| ds.true_labels()[i]).collect();
    assert_eq!(outcome.eval_labels, truth);
    assert_eq!(cfg.loss, LossName::Ccl);
}

#![allow(dead_code)]

use ccl_lab::config::TrainConfig;

/// A small synthetic run that finishes in well under a second.
pub fn tiny_config(loss: &str) -> TrainConfig {
    let text = format!(
        r#"{{
            "loss": "{loss}", "s": 16,
            "layer_dims": [8, 16, 4],
            "optimizer": {{"kind": "sgd_nesterov", "learning_rate": 0.01, "weight_decay": 0.0005}},
            "batch_size": 16, "epochs": 3, "seed": 7,
            "dataset": {{"kind": "synthetic", "train_classes": 4, "test_classes": 3, "dim": 8,
                         "samples_per_class": 10, "spread": 0.6}}
        }}"#
    );
    TrainConfig::from_json(&text).unwrap()
}

pub fn ccl_config() -> TrainConfig {
    TrainConfig { m: 0.1, lambda: 1.0, epsilon: 0.1, ..tiny_config("ccl") }
}

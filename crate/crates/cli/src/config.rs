use std::path::Path;

use heartseg::model::TfanConfig;
use heartseg::training::{LossConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub patience: usize,
    /// Absent or null: early stopping alone ends training.
    pub max_epochs: Option<usize>,
    pub window_overlap: f64,
}

/// Everything a training run needs, as one JSON document. Every key is
/// required except `optimizer.max_epochs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: TfanConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub folds: usize,
    /// Window overlap used when segmenting.
    pub overlap: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_train(&TrainConfig::default(), 5, 0.5)
    }
}

impl RunConfig {
    pub fn from_train(t: &TrainConfig, folds: usize, overlap: f64) -> Self {
        RunConfig {
            model: t.model.clone(),
            loss: t.loss.clone(),
            optimizer: OptimizerConfig {
                learning_rate: t.learning_rate,
                momentum: t.momentum,
                batch_size: t.batch_size,
                patience: t.patience,
                max_epochs: t.max_epochs,
                window_overlap: t.window_overlap,
            },
            seed: t.seed,
            folds,
            overlap,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let o = &self.optimizer;
        TrainConfig {
            model: self.model.clone(),
            loss: self.loss.clone(),
            learning_rate: o.learning_rate,
            momentum: o.momentum,
            batch_size: o.batch_size,
            patience: o.patience,
            max_epochs: o.max_epochs,
            window_overlap: o.window_overlap,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config().validate().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        if self.folds < 2 {
            return Err(CliError::Usage(format!("config: folds must be at least 2, got {}", self.folds)));
        }
        check_overlap(self.overlap)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn check_overlap(overlap: f64) -> Result<(), CliError> {
    if (0.0..1.0).contains(&overlap) {
        Ok(())
    } else {
        Err(CliError::Usage(format!("overlap must be in [0, 1), got {overlap}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn unknown_and_missing_keys_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::default().to_json()).unwrap();
        v["extra"] = 1.into();
        assert!(matches!(RunConfig::from_json(&v.to_string()), Err(CliError::Usage(_))));

        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::default().to_json()).unwrap();
        v.as_object_mut().unwrap().remove("folds");
        assert!(RunConfig::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value = serde_json::from_str(&RunConfig::default().to_json()).unwrap();
        v["optimizer"]["learning_rate"] = (-1.0).into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn shipped_configs_parse() {
        for name in ["default.json", "desk_scale.json"] {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name);
            RunConfig::load(&path).unwrap();
        }
        let desk = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/desk_scale.json")).unwrap();
        assert_eq!(desk.train_config(), TrainConfig::desk_scale(desk.seed));
    }
}

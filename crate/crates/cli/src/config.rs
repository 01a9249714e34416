use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use sedinc::datagen::{GenConfig, Regime, SplitCounts, CLEAN_CLASS_NAMES};
use sedinc::metrics::ExperimentConfig;
use sedinc::models::{AdapterInput, SedCnnConfig, ADAPTER_HIDDEN};
use sedinc::training::{EarlyStopConfig, TrainConfig};
use sedinc::{Error, Result};

/// Everything that determines a run. Missing keys take the defaults below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub classes: Vec<String>,
    pub regime: Regime,
    pub counts: SplitCounts,
    pub mels: usize,
    pub frames_per_second: usize,
    pub snr_db: f64,
    pub filters: usize,
    pub adapter_hidden: usize,
    pub adapter_input: AdapterInput,
    pub lr: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let gen = GenConfig::default();
        RunConfig {
            seed: 0,
            classes: CLEAN_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            regime: Regime::Clean,
            counts: SplitCounts::DESK_CLEAN,
            mels: gen.mels,
            frames_per_second: gen.frames_per_second,
            snr_db: gen.snr_db,
            filters: SedCnnConfig::default().conv_filters,
            adapter_hidden: ADAPTER_HIDDEN,
            adapter_input: AdapterInput::Logits,
            lr: train.adam.lr,
            batch_size: train.batch_size,
            patience: train.early_stop.patience,
            max_epochs: train.early_stop.max_epochs,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }

    pub fn generator(&self) -> GenConfig {
        GenConfig {
            snr_db: self.snr_db,
            ..GenConfig::with_geometry(self.mels, self.frames_per_second)
        }
    }

    pub fn model(&self) -> SedCnnConfig {
        SedCnnConfig {
            input_mels: self.mels,
            input_frames: self.frames_per_second,
            conv_filters: self.filters,
            ..SedCnnConfig::default()
        }
    }

    pub fn train(&self) -> TrainConfig {
        let mut t = TrainConfig {
            batch_size: self.batch_size,
            early_stop: EarlyStopConfig {
                patience: self.patience,
                max_epochs: self.max_epochs,
            },
            ..TrainConfig::default()
        };
        t.adam.lr = self.lr;
        t
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            regime: self.regime,
            counts: self.counts,
            generator: self.generator(),
            model: self.model(),
            adapter_hidden: self.adapter_hidden,
            adapter_input: self.adapter_input,
            train: self.train(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let c: RunConfig = serde_json::from_str(r#"{"seed": 7, "regime": "noisy"}"#).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.regime, Regime::Noisy);
        assert_eq!(c.max_epochs, 500);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sed": 7}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}

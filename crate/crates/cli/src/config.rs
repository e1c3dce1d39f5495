//! The resolved run configuration: built-in defaults, overlaid by an
//! optional TOML file, overlaid by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use flowres::dataset::SyntheticConfig;
use flowres::evaluation::FusionConfig;
use flowres::flow::FlowEstimatorConfig;
use flowres::model::BackboneConfig;
use flowres::pipeline::EncodingConfig;
use flowres::training::TrainConfig;

use crate::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces the seeds of `synth`, `backbone` and `train`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub manifest: PathBuf,
    pub cache_dir: PathBuf,
    /// Root of externally computed `.flo` files; disables the solver.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub synth: SyntheticConfig,
    pub flow: FlowEstimatorConfig,
    pub encoding: EncodingConfig,
    pub backbone: BackboneConfig,
    pub train: TrainConfig,
    pub fusion: FusionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            manifest: PathBuf::from("data/manifest.tsv"),
            cache_dir: PathBuf::from("cache"),
            flow_dir: None,
            out_dir: PathBuf::from("runs"),
            synth: SyntheticConfig::default(),
            flow: FlowEstimatorConfig::default(),
            encoding: EncodingConfig::default(),
            backbone: BackboneConfig::default(),
            train: TrainConfig::default(),
            fusion: FusionConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, or the file at `path` over the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Failure::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Push the top-level seed down and check every sub-config.
    pub fn resolve(mut self) -> Result<Self, Failure> {
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.backbone.seed = seed;
            self.train.seed = seed;
        }
        let usage = |e: &dyn std::fmt::Display| Failure::Usage(e.to_string());
        self.flow.validate().map_err(|e| usage(&e))?;
        self.backbone.validate().map_err(|e| usage(&e))?;
        self.train.validate().map_err(|e| usage(&e))?;
        self.fusion.validate().map_err(|e| usage(&e))?;
        if self.backbone.input_size != self.encoding.input_size {
            return Err(Failure::Usage(format!(
                "backbone.input_size ({}) must equal encoding.input_size ({})",
                self.backbone.input_size, self.encoding.input_size
            )));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    /// Print the resolved config and save a copy at `path`.
    pub fn echo(&self, path: Option<&Path>) -> anyhow::Result<()> {
        let text = self.to_toml();
        println!("# resolved run config\n{text}");
        if let Some(path) = path {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(path, text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            seed: Some(3),
            flow_dir: Some("ext".into()),
            ..Default::default()
        };
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_overrides_defaults_and_seed_propagates() {
        let cfg: RunConfig = toml::from_str("seed = 9\n[fusion]\nalpha = 0.25\nbeta = 0.75\n").unwrap();
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.fusion.alpha, 0.25);
        assert_eq!(cfg.fusion.threshold, 0.5);
        assert_eq!((cfg.synth.seed, cfg.backbone.seed, cfg.train.seed), (9, 9, 9));
    }

    #[test]
    fn unknown_keys_and_bad_weights_are_usage_errors() {
        assert!(toml::from_str::<RunConfig>("sed = 1\n").is_err());
        let cfg: RunConfig = toml::from_str("[fusion]\nalpha = 0.6\nbeta = 0.5\n").unwrap();
        assert!(matches!(cfg.resolve(), Err(Failure::Usage(_))));
    }
}

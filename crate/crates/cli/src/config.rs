//! Pipeline configuration: defaults, TOML file, then flag overrides, in
//! that precedence order. The fully resolved config is echoed into the run
//! report for provenance.

use serde::{Deserialize, Serialize};
use std::path::Path;

use uqfuse_core::gp::GpFitConfig;
use uqfuse_core::head::{Optimizer, TrainConfig};
use uqfuse_core::mcdropout::McConfig;
use uqfuse_core::pso::PsoConfig;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed; every stage derives its own stream from it.
    pub seed: u64,
    pub data: DataSection,
    pub shift: ShiftSection,
    pub head: HeadSection,
    pub gp: GpSection,
    pub mc: McSection,
    pub pso: PsoSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_train_per_class: usize,
    pub n_calib_per_class: usize,
    pub n_test_per_class: usize,
    pub dim: usize,
    pub separation: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftSection {
    /// Broadcast mean translation of the AI class.
    pub mean_shift: f64,
    pub covariance_scale: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadSection {
    pub h1: usize,
    pub h2: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub optimizer: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSection {
    pub m_per_class: usize,
    pub elbo_steps: usize,
    pub learning_rate: f64,
    pub mc_elbo_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub passes: usize,
    pub prob_clip: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            data: DataSection::default(),
            shift: ShiftSection::default(),
            head: HeadSection::default(),
            gp: GpSection::default(),
            mc: McSection::default(),
            pso: PsoSection::default(),
        }
    }
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            n_train_per_class: 500,
            n_calib_per_class: 250,
            n_test_per_class: 250,
            dim: 16,
            separation: 1.2,
        }
    }
}

impl Default for ShiftSection {
    fn default() -> Self {
        Self {
            mean_shift: 3.0,
            covariance_scale: 2.0,
        }
    }
}

impl Default for HeadSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            h1: t.h1,
            h2: t.h2,
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            dropout_rate: t.dropout_rate,
            optimizer: "sgd".into(),
        }
    }
}

impl Default for GpSection {
    fn default() -> Self {
        Self {
            m_per_class: 16,
            elbo_steps: 150,
            learning_rate: 0.05,
            mc_elbo_samples: 8,
        }
    }
}

impl Default for McSection {
    fn default() -> Self {
        let m = McConfig::default();
        Self {
            passes: m.n_passes,
            prob_clip: m.prob_clip,
        }
    }
}

impl Default for PsoSection {
    fn default() -> Self {
        Self {
            swarm_size: 40,
            iterations: 200,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::io(
                format!("cannot read config {}: {e}", path.display()),
                Some(path.display().to_string()),
            )
        })?;
        toml::from_str(&text)
            .map_err(|e| CliError::config(format!("invalid config {}: {e}", path.display())))
    }

    pub fn parse_optimizer(&self) -> Result<Optimizer> {
        match self.head.optimizer.as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::Adam),
            other => Err(CliError::config(format!(
                "unknown optimizer {other:?} (expected sgd or adam)"
            ))),
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        Ok(TrainConfig {
            epochs: self.head.epochs,
            batch_size: self.head.batch_size,
            learning_rate: self.head.learning_rate,
            seed,
            optimizer: self.parse_optimizer()?,
            h1: self.head.h1,
            h2: self.head.h2,
            dropout_rate: self.head.dropout_rate,
        })
    }

    pub fn gp_config(&self, seed: u64) -> GpFitConfig {
        GpFitConfig {
            m_per_class: self.gp.m_per_class,
            elbo_steps: self.gp.elbo_steps,
            learning_rate: self.gp.learning_rate,
            mc_elbo_samples: self.gp.mc_elbo_samples,
            seed,
        }
    }

    pub fn mc_config(&self, seed: u64) -> McConfig {
        McConfig {
            n_passes: self.mc.passes,
            seed,
            prob_clip: self.mc.prob_clip,
        }
    }

    pub fn pso_config(&self, seed: u64) -> PsoConfig {
        PsoConfig {
            swarm_size: self.pso.swarm_size,
            iterations: self.pso.iterations,
            inertia: self.pso.inertia,
            cognitive: self.pso.cognitive,
            social: self.pso.social,
            bounds: Vec::new(), // calibrate_policy installs its own box
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_roundtrip_toml() {
        let cfg = PipelineConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.seed, cfg.seed);
        assert_eq!(back.data.dim, cfg.data.dim);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg: PipelineConfig = toml::from_str("seed = 99\n[data]\ndim = 4\n").unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.data.dim, 4);
        assert_eq!(cfg.data.n_train_per_class, 500);
        assert_eq!(cfg.gp.m_per_class, 16);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<PipelineConfig>("nonsense = 1\n").is_err());
    }
}

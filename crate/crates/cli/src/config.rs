//! Run configuration: a JSON file whose fields are overridden by flags.

use std::path::{Path, PathBuf};

use glove_teleop::controller::ControllerConfig;
use glove_teleop::hand::{load_profile, HandProfile};
use glove_teleop::intent::{GloveProfile, RigidMotionConfig, SigmoidConfig};
use glove_teleop::io::read_json;
use glove_teleop::pipeline::PipelineConfig;
use glove_teleop::plant::PlantConfig;
use glove_teleop::predictor::{TrainConfig, DEFAULT_HORIZON, DEFAULT_WINDOW};
use glove_teleop::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub hand_profile: Option<PathBuf>,
    pub glove_profile: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub controller: Option<ControllerConfig>,
    pub plant: PlantConfig,
    pub decimation: usize,
    pub rotation_only: bool,
    pub max_lag_samples: usize,
    pub sigmoid: SigmoidConfig,
    pub rigid: RigidMotionConfig,
    pub train: TrainConfig,
    pub window: usize,
    pub horizon: usize,
    /// Axes with a smaller intent standard deviation (degrees) get no model.
    pub min_axis_std_deg: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        Self {
            hand_profile: None,
            glove_profile: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            controller: None,
            plant: p.plant,
            decimation: p.decimation,
            rotation_only: p.rotation_only,
            max_lag_samples: p.max_lag_samples,
            sigmoid: SigmoidConfig::default(),
            rigid: RigidMotionConfig::default(),
            train: TrainConfig::default(),
            window: DEFAULT_WINDOW,
            horizon: DEFAULT_HORIZON,
            min_axis_std_deg: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: Self = match path {
            Some(p) => {
                if !p.exists() {
                    return Err(Error::Invalid(format!("config file {} does not exist", p.display())));
                }
                read_json(p)?
            }
            None => Self::default(),
        };
        for p in cfg.hand_profile.iter().chain(cfg.glove_profile.iter()) {
            if !p.exists() {
                return Err(Error::Invalid(format!("profile {} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }

    pub fn hand(&self) -> Result<HandProfile> {
        match &self.hand_profile {
            Some(p) => load_profile(p),
            None => Ok(HandProfile::allegro_like()),
        }
    }

    pub fn glove(&self) -> Result<GloveProfile> {
        let g: GloveProfile = match &self.glove_profile {
            Some(p) => read_json(p)?,
            None => GloveProfile::default(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn controller_for(&self, hand: &HandProfile) -> ControllerConfig {
        self.controller.clone().unwrap_or_else(|| ControllerConfig::for_profile(hand))
    }

    pub fn pipeline(&self, hand: &HandProfile) -> PipelineConfig {
        PipelineConfig {
            decimation: self.decimation,
            rotation_only: self.rotation_only,
            max_lag_samples: self.max_lag_samples,
            plant: self.plant.clone(),
            controller: self.controller_for(hand),
        }
    }
}

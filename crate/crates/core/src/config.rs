//! Reproducible run configuration.
//!
//! One TOML file captures every parameter of a run; the root `seed` feeds
//! all stage-specific RNG streams (see [`crate::seed`]). CLI flags override
//! file values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::{self, ArrayGeometry};
use crate::error::{Error, Result};
use crate::ioutil::read_bytes;
use crate::signal::ChirpSpec;
use crate::simulate::{SignatureConfig, SynthClassSpec, SynthSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    /// Directory holding `manifest.jsonl` and the PDM recordings.
    pub dataset_dir: PathBuf,
    /// Directory for trained model files.
    pub model_dir: PathBuf,
    /// Directory for energyscapes, fold plans, features and reports.
    pub output_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset_dir: PathBuf::from("data"),
            model_dir: PathBuf::from("models"),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChirpConfig {
    pub f_start_hz: f64,
    pub f_end_hz: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
}

impl Default for ChirpConfig {
    fn default() -> Self {
        ChirpConfig {
            f_start_hz: 20_000.0,
            f_end_hz: 50_000.0,
            duration_s: 2.5e-3,
            sample_rate_hz: 450_000.0,
        }
    }
}

impl ChirpConfig {
    pub fn to_spec(&self) -> ChirpSpec {
        ChirpSpec {
            f_start: self.f_start_hz,
            f_end: self.f_end_hz,
            duration: self.duration_s,
            sample_rate: self.sample_rate_hz,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignalConfig {
    /// Sigma-delta oversampling factor (PDM rate / baseband rate).
    pub oversample: usize,
    /// Baseband record length in samples.
    pub record_samples: usize,
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            oversample: 10,
            record_samples: 16384,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeometryConfig {
    /// Optional geometry config file; empty means the built-in layout.
    pub file: String,
    /// Seed of the built-in Poisson-disc layout.
    pub seed: u64,
    pub speed_of_sound: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            file: String::new(),
            seed: 0,
            speed_of_sound: beamform::SPEED_OF_SOUND,
        }
    }
}

impl GeometryConfig {
    pub fn resolve(&self) -> Result<ArrayGeometry> {
        if self.file.is_empty() {
            let mut geom = beamform::default_geometry(self.seed);
            geom.speed_of_sound = self.speed_of_sound;
            Ok(geom)
        } else {
            beamform::read_geometry(Path::new(&self.file))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    /// Sensor noise floor in dB below full scale; `inf` disables noise.
    pub noise_floor_db: f64,
    pub classes: Vec<SynthClassSpec>,
    pub signature: SignatureConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            noise_floor_db: 46.0,
            classes: Vec::new(),
            signature: SignatureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarConfig {
    pub guard: usize,
    pub train: usize,
    pub min_floor: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        CfarConfig {
            guard: beamform::CFAR_GUARD,
            train: beamform::CFAR_TRAIN,
            min_floor: beamform::CFAR_MIN_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeaturesConfig {
    pub pool_kernel: usize,
    pub n_components: usize,
}

impl Default for FeaturesConfig {
    fn default() -> Self {
        FeaturesConfig {
            pool_kernel: crate::features::POOL_KERNEL,
            n_components: crate::features::N_COMPONENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelsConfig {
    /// Model kinds trained by `experiment`: any of "logreg", "tree", "forest".
    pub enabled: Vec<String>,
    /// Inverse regularization strength of the logistic regression.
    pub logreg_c: f64,
    pub forest_trees: usize,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            enabled: vec!["logreg".into(), "tree".into(), "forest".into()],
            logreg_c: 0.01,
            forest_trees: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Model-training seeds; each (fold, seed) pair is one recorded run.
    pub model_seeds: Vec<u64>,
    /// Classes with fewer positives are dropped before splitting.
    pub min_class_count: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model_seeds: vec![0, 1],
            min_class_count: crate::eval::MIN_CLASS_COUNT,
        }
    }
}

/// The full run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Root seed; mandatory.
    pub seed: u64,
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub chirp: ChirpConfig,
    #[serde(default)]
    pub signal: SignalConfig,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub cfar: CfarConfig,
    #[serde(default)]
    pub features: FeaturesConfig,
    #[serde(default)]
    pub models: ModelsConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

impl RunConfig {
    pub fn with_seed(seed: u64) -> Self {
        RunConfig {
            seed,
            paths: Default::default(),
            chirp: Default::default(),
            signal: Default::default(),
            geometry: Default::default(),
            simulate: Default::default(),
            cfar: Default::default(),
            features: Default::default(),
            models: Default::default(),
            experiment: Default::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parameter(format!("config: {}", e)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = String::from_utf8(read_bytes(path)?)
            .map_err(|_| Error::format(path, "not valid UTF-8"))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Assemble the dataset-synthesis spec from the config blocks.
    pub fn synth_spec(&self) -> Result<SynthSpec> {
        Ok(SynthSpec {
            classes: self.simulate.classes.clone(),
            seed: self.seed,
            noise_floor_db: self.simulate.noise_floor_db,
            record_samples: self.signal.record_samples,
            oversample: self.signal.oversample,
            chirp: self.chirp.to_spec(),
            geometry: self.geometry.resolve()?,
            signature: self.simulate.signature.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_toml_str("").is_err());
        let cfg = RunConfig::from_toml_str("seed = 3").unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.signal.record_samples, 16384);
        assert_eq!(cfg.models.logreg_c, 0.01);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::with_seed(9);
        cfg.simulate.classes.push(SynthClassSpec {
            material: crate::simulate::Material::Asphalt,
            damages: vec![crate::simulate::Damage::Crack],
            count: 5,
        });
        cfg.signal.record_samples = 8192;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
seed = 1
[signal]
record_samples = 8192

[simulate]
noise_floor_db = 38.0
classes = [ { material = "Concrete", damages = ["Pothole"], count = 3 } ]
"#,
        )
        .unwrap();
        assert_eq!(cfg.signal.record_samples, 8192);
        assert_eq!(cfg.signal.oversample, 10);
        assert_eq!(cfg.simulate.classes.len(), 1);
        assert_eq!(cfg.cfar.guard, 4);
    }
}

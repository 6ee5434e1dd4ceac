//! Flat `key = value` configuration files: `#` comments, later keys override
//! earlier ones, typed getters that name the offending key on error.

use std::collections::HashMap;
use std::path::Path;

use crate::cloud::SceneConfig;
use crate::error::{CoreError, Result};
use crate::projector::{CameraIntrinsics, ClipPlanes};
use crate::se3::PerturbBounds;
use crate::train::{LossWeights, TrainConfig, ValueTarget};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: HashMap<String, String>,
}

impl Config {
    pub fn empty() -> Self {
        Config::default()
    }

    pub fn parse(text: &str) -> Result<Config> {
        let mut values = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| CoreError::Parse {
                line: i + 1,
                msg: format!("expected `key = value`, got {line:?}"),
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CoreError::Parse {
                    line: i + 1,
                    msg: "empty key".into(),
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> Result<Config> {
        Config::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn get_f64(&self, key: &str, default: f64) -> Result<f64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                CoreError::Config(format!("key {key}: bad float {v:?} ({e})"))
            }),
        }
    }

    pub fn get_usize(&self, key: &str, default: usize) -> Result<usize> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                CoreError::Config(format!("key {key}: bad integer {v:?} ({e})"))
            }),
        }
    }

    pub fn get_u64(&self, key: &str, default: u64) -> Result<u64> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| {
                CoreError::Config(format!("key {key}: bad integer {v:?} ({e})"))
            }),
        }
    }

    pub fn scene_config(&self, seed: u64) -> Result<SceneConfig> {
        let d = SceneConfig::default();
        Ok(SceneConfig {
            extent: nalgebra::Vector3::new(
                self.get_f64("scene.extent_x", d.extent.x)?,
                self.get_f64("scene.extent_y", d.extent.y)?,
                self.get_f64("scene.extent_z", d.extent.z)?,
            ),
            pillar_spacing: self.get_f64("scene.pillar_spacing", d.pillar_spacing)?,
            pillar_radius: self.get_f64("scene.pillar_radius", d.pillar_radius)?,
            wall_thickness: self.get_f64("scene.wall_thickness", d.wall_thickness)?,
            point_density_dense: self.get_f64("scene.density", d.point_density_dense)?,
            beam_count: self.get_usize("scene.beam_count", d.beam_count)?,
            seed,
        })
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        let d = CameraIntrinsics::default();
        let width = self.get_usize("camera.width", d.width)?;
        let height = self.get_usize("camera.height", d.height)?;
        // Focal length and center scale with resolution unless pinned.
        let scale = width as f64 / d.width as f64;
        Ok(CameraIntrinsics {
            fx: self.get_f64("camera.fx", d.fx * scale)?,
            fy: self.get_f64("camera.fy", d.fy * scale)?,
            cx: self.get_f64("camera.cx", width as f64 / 2.0)?,
            cy: self.get_f64("camera.cy", height as f64 / 2.0)?,
            width,
            height,
        })
    }

    pub fn clip_planes(&self) -> Result<ClipPlanes> {
        let d = ClipPlanes::default();
        Ok(ClipPlanes {
            near: self.get_f64("camera.near", d.near)?,
            far: self.get_f64("camera.far", d.far)?,
        })
    }

    pub fn perturb_bounds(&self) -> Result<PerturbBounds> {
        Ok(PerturbBounds {
            max_rotation: self.get_f64("augment.max_rotation_deg", 5.0)?.to_radians(),
            max_translation: self.get_f64("augment.max_translation", 0.5)?,
            samples_per_frame: self.get_usize("augment.samples_per_frame", 50)?,
        })
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let d = TrainConfig::default();
        let value_target = match self.get("train.value_target").unwrap_or("prediction-loss") {
            "prediction-loss" => ValueTarget::PredictionLoss,
            "ground-truth-loss" => ValueTarget::GroundTruthLoss,
            other => {
                return Err(CoreError::Config(format!(
                    "key train.value_target: unknown mode {other:?}"
                )))
            }
        };
        Ok(TrainConfig {
            batch_size: self.get_usize("train.batch_size", d.batch_size)?,
            epochs: self.get_usize("train.epochs", d.epochs)?,
            lr: self.get_f64("train.lr", d.lr)?,
            warmup_epochs: self.get_usize("train.warmup_epochs", d.warmup_epochs)?,
            seed,
            value_target,
            weights: LossWeights {
                alpha1: self.get_f64("train.alpha1", 100.0)?,
                alpha2: self.get_f64("train.alpha2", 1.0)?,
                alpha3: self.get_f64("train.alpha3", 0.1)?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let c = Config::parse(
            "# leading comment\n\
             a = 1\n\
             b = hello world  # trailing comment\n\
             \n\
             a = 2\n",
        )
        .unwrap();
        assert_eq!(c.get("a"), Some("2"));
        assert_eq!(c.get("b"), Some("hello world"));
        assert_eq!(c.get("missing"), None);
    }

    #[test]
    fn bad_line_names_location() {
        let err = Config::parse("ok = 1\nnot a pair\n").unwrap_err();
        match err {
            CoreError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn typed_getter_errors_name_the_key() {
        let c = Config::parse("train.lr = fast\n").unwrap();
        let err = c.get_f64("train.lr", 0.0).unwrap_err();
        assert!(format!("{err}").contains("train.lr"));
    }

    #[test]
    fn defaults_apply_when_absent() {
        let c = Config::empty();
        let t = c.train_config(3).unwrap();
        assert_eq!(t.batch_size, 16);
        assert_eq!(t.epochs, 60);
        assert_eq!(t.lr, 1e-3);
        assert_eq!(t.warmup_epochs, 10);
        assert_eq!(t.seed, 3);
        assert_eq!(t.value_target, ValueTarget::PredictionLoss);
        let b = c.perturb_bounds().unwrap();
        assert!((b.max_rotation - 5.0_f64.to_radians()).abs() < 1e-12);
        assert_eq!(b.max_translation, 0.5);
        assert_eq!(b.samples_per_frame, 50);
    }

    #[test]
    fn intrinsics_scale_with_width() {
        let c = Config::parse("camera.width = 48\ncamera.height = 36\n").unwrap();
        let k = c.intrinsics().unwrap();
        assert_eq!(k.width, 48);
        assert_eq!(k.height, 36);
        assert!((k.fx - 36.0).abs() < 1e-12); // 120 * 48/160
        assert_eq!(k.cx, 24.0);
        assert_eq!(k.cy, 18.0);
    }

    #[test]
    fn value_target_modes() {
        let c = Config::parse("train.value_target = ground-truth-loss\n").unwrap();
        assert_eq!(
            c.train_config(0).unwrap().value_target,
            ValueTarget::GroundTruthLoss
        );
        let bad = Config::parse("train.value_target = nope\n").unwrap();
        assert!(bad.train_config(0).is_err());
    }
}

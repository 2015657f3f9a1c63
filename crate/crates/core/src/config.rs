//! Mission configuration: one JSON document describing the scan region,
//! camera, planner, controller, scene and outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capture::SceneConfig;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::lighting_plan::{PlanKind, ScanRegion, SppaMode};
use crate::mpc::{MpcConfig, ObstacleSet, Sphere};
use crate::sequencing::Traversal;

/// Bundled configuration used by `demo` when no file is given.
pub const DEMO_CONFIG: &str = include_str!("../configs/demo.json");

/// Angular window and light distance; camera angles come from [`CameraConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub h_min: f64,
    pub h_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    /// Distance from the object along the optical axis, meters.
    pub distance: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub aov_h: f64,
    pub aov_v: f64,
    pub body_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    pub generator: PlanKind,
    /// Position count of the Fibonacci generator.
    #[serde(default)]
    pub n: Option<usize>,
    /// Row count of the predictable grid.
    #[serde(default)]
    pub v_s: Option<usize>,
    #[serde(default)]
    pub mode: SppaMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequencerKind {
    Sppa,
    Etsp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub ooi: Vec3,
    pub region: RegionConfig,
    pub camera: CameraConfig,
    pub plan: PlanConfig,
    pub sequencer: SequencerKind,
    #[serde(default)]
    pub traversal: Traversal,
    /// Take-off and landing position of the light-carrying vehicle.
    pub initial: Vec3,
    pub v_des: f64,
    pub dt: f64,
    pub t_stab: f64,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub obstacles: Vec<Sphere>,
    #[serde(default)]
    pub scene: SceneConfig,
    /// Scene description in a separate JSON file; replaces `scene` when set.
    #[serde(default)]
    pub scene_path: Option<PathBuf>,
    #[serde(default)]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

impl MissionConfig {
    pub fn demo() -> MissionConfig {
        MissionConfig::from_json(DEMO_CONFIG).expect("bundled demo config parses")
    }

    /// Parses and validates; errors name the line, column and field.
    pub fn from_json(text: &str) -> Result<MissionConfig> {
        let cfg: MissionConfig = serde_json::from_str(text).map_err(|e| Error::Format {
            what: "mission config",
            detail: format!("line {}, column {}: {e}", e.line(), e.column()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<MissionConfig> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::File { path: path.into(), source })?;
        let mut cfg = MissionConfig::from_json(&text)?;
        // Relative scene paths are taken from the config file's directory.
        if let (Some(scene), Some(dir)) = (&cfg.scene_path, path.parent()) {
            if scene.is_relative() {
                cfg.scene_path = Some(dir.join(scene));
            }
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera_model().validate()?;
        self.scan_region().validate()?;
        self.mpc.validate()?;
        self.obstacle_set().validate()?;
        match self.plan.generator {
            PlanKind::Sppa if self.plan.v_s.is_none() => {
                return Err(Error::Precondition("plan.v_s is required for the sppa generator".into()))
            }
            PlanKind::Fibonacci if self.plan.n.is_none() => {
                return Err(Error::Precondition("plan.n is required for the fibonacci generator".into()))
            }
            _ => {}
        }
        if self.sequencer == SequencerKind::Sppa && self.plan.generator != PlanKind::Sppa {
            return Err(Error::Precondition("the sppa sequencer needs the sppa generator".into()));
        }
        if !(self.v_des > 0.0 && self.dt > 0.0 && self.t_stab >= 0.0) {
            return Err(Error::Precondition("v_des and dt must be positive, t_stab non-negative".into()));
        }
        if !(self.camera.distance > 0.0) {
            return Err(Error::InvalidCamera("camera distance must be positive".into()));
        }
        if !(self.sigma >= 0.0) {
            return Err(Error::Precondition("sigma must be non-negative".into()));
        }
        if let Some(p) = &self.scene_path {
            if !p.exists() {
                return Err(Error::Precondition(format!("scene file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Camera on the optical axis through the object.
    pub fn camera_model(&self) -> CameraModel {
        let c = &self.camera;
        CameraModel {
            aov_h: c.aov_h,
            aov_v: c.aov_v,
            body_radius: c.body_radius,
            ..CameraModel::looking_at(self.ooi, c.distance, c.yaw, c.pitch)
        }
    }

    pub fn scan_region(&self) -> ScanRegion {
        let r = &self.region;
        ScanRegion {
            h_min: r.h_min,
            h_max: r.h_max,
            v_min: r.v_min,
            v_max: r.v_max,
            distance: r.distance,
            ooi: self.ooi,
            cam_yaw: self.camera.yaw,
            cam_pitch: self.camera.pitch,
        }
    }

    pub fn obstacle_set(&self) -> ObstacleSet {
        ObstacleSet { spheres: self.obstacles.clone(), camera: self.camera_model() }
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        match &self.scene_path {
            None => Ok(self.scene.clone()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| Error::File { path: p.clone(), source })?;
                serde_json::from_str(&text).map_err(|e| Error::Format {
                    what: "scene config",
                    detail: format!("line {}, column {}: {e}", e.line(), e.column()),
                })
            }
        }
    }
}

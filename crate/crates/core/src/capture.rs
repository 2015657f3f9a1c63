//! Software renderer for the capture set and the localization-noise model.
//!
//! The object is a heightfield patch centered on the object of interest and
//! expressed in the camera's `(u, v, w)` frame, viewed orthographically along
//! `-w`. Each pixel is shaded by a directional light from the object toward
//! the light position with inverse-square falloff normalized at the
//! reference distance, so a light at that distance on the surface normal of
//! a flat white patch gives `exposure` of full scale.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{angle_between, lighting_vector, CameraModel, LightingVector, Vec3};
use crate::image::RgbImage;
use crate::lighting_plan::{capture_name, parse_lp, write_lp, LightingPlan};
use crate::mpc::{CaptureEvent, MissionLog};
use crate::ptm::NormalMap;

/// Fewest captures the biquadratic fit can use.
pub const MIN_CAPTURES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    Flat,
    /// Hemisphere of `radius` (fraction of the patch width) at the center.
    HemisphereBump { radius: f64 },
    /// Sum of Gaussian bumps; centers and widths are fractions of the patch width.
    Bumps { bumps: Vec<GaussianBump> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub sigma: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Specular {
    pub strength: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub surface: Surface,
    /// Image size in pixels (square).
    pub size: usize,
    /// Patch width in meters.
    pub extent: f64,
    pub albedo: [f64; 3],
    /// Amplitude of a smooth albedo pattern added to `albedo`.
    pub texture: f64,
    pub specular: Specular,
    pub shadowing: bool,
    /// Light distance at which the falloff factor is 1.
    pub reference_distance: f64,
    /// Fraction of full scale reached by a white patch lit head-on.
    pub exposure: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            surface: Surface::HemisphereBump { radius: 0.35 },
            size: 128,
            extent: 0.4,
            albedo: [0.85, 0.8, 0.75],
            texture: 0.1,
            specular: Specular { strength: 0.0, exponent: 20.0 },
            shadowing: false,
            reference_distance: 2.0,
            exposure: 0.8,
        }
    }
}

/// Rasterized heightfield with per-pixel normals and albedo.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub pixel: f64,
    pub heights: Vec<f64>,
    pub normals: Vec<Vec3>,
    pub albedo: Vec<[f64; 3]>,
    pub specular: Specular,
    pub shadowing: bool,
    pub reference_distance: f64,
    pub exposure: f64,
}

impl Scene {
    pub fn build(cfg: &SceneConfig) -> Result<Scene> {
        if cfg.size == 0 || !(cfg.extent > 0.0) || !(cfg.reference_distance > 0.0) {
            return Err(Error::Precondition("scene needs size > 0, extent > 0, reference distance > 0".into()));
        }
        if cfg.albedo.iter().any(|a| !(0.0..=1.0).contains(a)) || !(0.0..=1.0).contains(&cfg.texture) {
            return Err(Error::Precondition("albedo must lie in [0, 1]".into()));
        }
        if !(cfg.specular.strength >= 0.0 && cfg.specular.exponent >= 0.0 && cfg.exposure > 0.0) {
            return Err(Error::Precondition("invalid specular or exposure parameters".into()));
        }
        let n = cfg.size;
        let pixel = cfg.extent / n as f64;
        let mut heights = Vec::with_capacity(n * n);
        let mut normals = Vec::with_capacity(n * n);
        let mut albedo = Vec::with_capacity(n * n);
        for y in 0..n {
            for x in 0..n {
                // Fractional patch coordinates in [-0.5, 0.5], v pointing up.
                let fu = (x as f64 + 0.5) / n as f64 - 0.5;
                let fv = 0.5 - (y as f64 + 0.5) / n as f64;
                let (h, normal) = surface_at(&cfg.surface, fu, fv);
                if !h.is_finite() {
                    return Err(Error::Precondition("heightfield must be finite".into()));
                }
                heights.push(h * cfg.extent);
                normals.push(normal);
                let t = cfg.texture * (2.0 * PI * 3.0 * fu).sin() * (2.0 * PI * 2.0 * fv).cos();
                albedo.push(cfg.albedo.map(|a| (a + t).clamp(0.0, 1.0)));
            }
        }
        Ok(Scene {
            width: n,
            height: n,
            pixel,
            heights,
            normals,
            albedo,
            specular: cfg.specular,
            shadowing: cfg.shadowing,
            reference_distance: cfg.reference_distance,
            exposure: cfg.exposure,
        })
    }

    /// Analytic normals of the heightfield; every pixel valid.
    pub fn normal_map(&self) -> NormalMap {
        NormalMap {
            width: self.width,
            height: self.height,
            normals: self.normals.clone(),
            valid: vec![true; self.normals.len()],
        }
    }

    fn in_shadow(&self, x: usize, y: usize, l: &Vec3) -> bool {
        if l.z <= 0.0 {
            return true;
        }
        let h0 = self.heights[y * self.width + x];
        let max_h = self.heights.iter().copied().fold(f64::MIN, f64::max);
        let horiz = l.x.hypot(l.y);
        if horiz < 1e-12 {
            return false;
        }
        // March one pixel per step in the image plane.
        let (du, dv) = (l.x / horiz, l.y / horiz);
        let rise = l.z / horiz * self.pixel;
        let (mut px, mut py, mut z) = (x as f64 + 0.5, y as f64 + 0.5, h0);
        loop {
            px += du;
            py -= dv;
            z += rise;
            if z > max_h || px < 0.0 || py < 0.0 {
                return false;
            }
            let (ix, iy) = (px as usize, py as usize);
            if ix >= self.width || iy >= self.height {
                return false;
            }
            if self.heights[iy * self.width + ix] > z + 1e-9 {
                return true;
            }
        }
    }
}

fn surface_at(surface: &Surface, u: f64, v: f64) -> (f64, Vec3) {
    match surface {
        Surface::Flat => (0.0, Vec3::z()),
        Surface::HemisphereBump { radius } => {
            let r2 = u * u + v * v;
            let rr = radius * radius;
            if r2 < rr {
                let h = (rr - r2).sqrt();
                (h, Vec3::new(u, v, h) / *radius)
            } else {
                (0.0, Vec3::z())
            }
        }
        Surface::Bumps { bumps } => {
            let (mut h, mut gu, mut gv) = (0.0, 0.0, 0.0);
            for b in bumps {
                let (du, dv) = (u - b.center[0], v - b.center[1]);
                let s2 = b.sigma * b.sigma;
                let e = b.height * (-(du * du + dv * dv) / (2.0 * s2)).exp();
                h += e;
                gu -= e * du / s2;
                gv -= e * dv / s2;
            }
            (h, Vec3::new(-gu, -gv, 1.0).normalize())
        }
    }
}

fn quantize(x: f64) -> u8 {
    // Round half away from zero on a value already clamped to [0, 255].
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Image of `scene` (centered on `ooi`) lit from `light`, seen by `camera`.
pub fn render(scene: &Scene, camera: &CameraModel, ooi: &Vec3, light: &Vec3) -> Result<RgbImage> {
    let l = lighting_vector(light, ooi, camera)?.as_vec3();
    let falloff = (scene.reference_distance / (light - ooi).norm()).powi(2);
    let gain = scene.exposure * falloff;
    let w = scene.width;
    let mut img = RgbImage::new(w, scene.height);
    img.data.par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let i = y * w + x;
            let n = scene.normals[i];
            let ndl = n.dot(&l);
            let lit = ndl > 0.0 && !(scene.shadowing && scene.in_shadow(x, y, &l));
            let (diffuse, spec) = if lit {
                let r = n * (2.0 * ndl) - l;
                let s = if scene.specular.strength > 0.0 {
                    scene.specular.strength * r.z.max(0.0).powf(scene.specular.exponent)
                } else {
                    0.0
                };
                (ndl, s)
            } else {
                (0.0, 0.0)
            };
            let a = scene.albedo[i];
            for c in 0..3 {
                row[x * 3 + c] = quantize(gain * (a[c] * diffuse + spec));
            }
        }
    });
    Ok(img)
}

/// Position and heading of a vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub yaw: f64,
    pub pitch: f64,
}

/// Standard deviation of the angular noise paired with position noise `sigma`.
pub fn orientation_sigma(sigma: f64) -> f64 {
    2.0 * PI * sigma / 36.0
}

/// Adds independent Gaussian noise: `sigma` per position axis and
/// `2πσ/36` per angle.
pub fn perturb_with<R: Rng + ?Sized>(pose: &Pose, sigma: f64, rng: &mut R) -> Result<Pose> {
    if !(sigma >= 0.0) {
        return Err(Error::Precondition(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(*pose);
    }
    let pos = Normal::new(0.0, sigma).unwrap();
    let ang = Normal::new(0.0, orientation_sigma(sigma)).unwrap();
    Ok(Pose {
        position: pose.position + Vec3::from_fn(|_, _| pos.sample(rng)),
        yaw: pose.yaw + ang.sample(rng),
        pitch: pose.pitch + ang.sample(rng),
    })
}

pub fn perturb_localization(pose: &Pose, sigma: f64, seed: u64) -> Result<Pose> {
    perturb_with(pose, sigma, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Capture {
    pub name: String,
    pub image: RgbImage,
    pub true_pose: Pose,
    pub true_light: LightingVector,
    /// Lighting vector computed from the perturbed light and camera poses.
    pub recorded_light: LightingVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaptureSet {
    pub camera: CameraModel,
    pub ooi: Vec3,
    pub captures: Vec<Capture>,
    pub sigma: f64,
}

impl CaptureSet {
    /// Fewer captures than the fit needs.
    pub fn too_few(&self) -> bool {
        self.captures.len() < MIN_CAPTURES
    }

    pub fn recorded_lights(&self) -> Vec<LightingVector> {
        self.captures.iter().map(|c| c.recorded_light).collect()
    }

    /// Same images with lighting vectors re-recorded under noise `sigma`.
    pub fn with_noise(&self, sigma: f64, seed: u64) -> Result<CaptureSet> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cam_pose = Pose { position: self.camera.position, yaw: self.camera.yaw, pitch: self.camera.pitch };
        let mut captures = self.captures.clone();
        for c in &mut captures {
            let light = perturb_with(&c.true_pose, sigma, &mut rng)?;
            let cam = perturb_with(&cam_pose, sigma, &mut rng)?;
            let camera = CameraModel { yaw: cam.yaw, pitch: cam.pitch, ..self.camera };
            c.recorded_light = lighting_vector(&light.position, &self.ooi, &camera)?;
        }
        Ok(CaptureSet { captures, sigma, ..self.clone() })
    }

    /// Mean angle between recorded and true lighting directions.
    pub fn mean_recording_error(&self) -> f64 {
        if self.captures.is_empty() {
            return 0.0;
        }
        self.captures
            .iter()
            .map(|c| angle_between(&c.true_light.as_vec3(), &c.recorded_light.as_vec3()))
            .sum::<f64>()
            / self.captures.len() as f64
    }

    /// Writes `capture_NNN.png` images, `captures.lp` with the recorded
    /// vectors, and a `captures.json` manifest.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::File { path: dir.into(), source })?;
        for c in &self.captures {
            c.image.save_png(&dir.join(&c.name))?;
        }
        let lp: Vec<_> = self.captures.iter().map(|c| (c.name.clone(), c.recorded_light)).collect();
        let lp_path = dir.join("captures.lp");
        std::fs::write(&lp_path, write_lp(&lp)).map_err(|source| Error::File { path: lp_path, source })?;
        let manifest = CaptureManifest {
            camera: self.camera,
            ooi: self.ooi,
            sigma: self.sigma,
            captures: self
                .captures
                .iter()
                .map(|c| ManifestEntry {
                    image: c.name.clone(),
                    true_pose: c.true_pose,
                    true_light: c.true_light,
                    recorded_light: c.recorded_light,
                })
                .collect(),
        };
        let path = dir.join("captures.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)
            .map_err(|source| Error::File { path, source })?;
        Ok(())
    }

    /// Reads a directory written by [`CaptureSet::write`]. Lighting vectors
    /// come from `captures.lp`, so an edited `.lp` file takes effect.
    pub fn read(dir: &Path) -> Result<CaptureSet> {
        let path = dir.join("captures.json");
        let text = std::fs::read_to_string(&path).map_err(|source| Error::File { path, source })?;
        let manifest: CaptureManifest = serde_json::from_str(&text)?;
        let lp_path = dir.join("captures.lp");
        let lp_text = std::fs::read_to_string(&lp_path).map_err(|source| Error::File { path: lp_path, source })?;
        let lp = parse_lp(&lp_text)?;
        let mut captures = Vec::with_capacity(manifest.captures.len());
        for e in manifest.captures {
            let recorded_light = lp
                .iter()
                .find(|(name, _)| *name == e.image)
                .map(|(_, l)| *l)
                .ok_or_else(|| Error::Format {
                    what: "capture manifest",
                    detail: format!("{} has no entry in captures.lp", e.image),
                })?;
            captures.push(Capture {
                image: RgbImage::load_png(&dir.join(&e.image))?,
                name: e.image,
                true_pose: e.true_pose,
                true_light: e.true_light,
                recorded_light,
            });
        }
        if let Some(first) = captures.first() {
            let (w, h) = (first.image.width, first.image.height);
            if captures.iter().any(|c| c.image.width != w || c.image.height != h) {
                return Err(Error::DimensionMismatch("capture images differ in size".into()));
            }
        }
        Ok(CaptureSet { camera: manifest.camera, ooi: manifest.ooi, captures, sigma: manifest.sigma })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CaptureManifest {
    camera: CameraModel,
    ooi: Vec3,
    sigma: f64,
    captures: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestEntry {
    image: String,
    true_pose: Pose,
    true_light: LightingVector,
    recorded_light: LightingVector,
}

/// Light poses at the capture events of a flown mission.
pub fn poses_from_log(log: &MissionLog) -> Vec<Pose> {
    poses_from_events(&log.captures)
}

pub fn poses_from_events(events: &[CaptureEvent]) -> Vec<Pose> {
    events
        .iter()
        .map(|c| Pose { position: c.true_position, yaw: c.light_yaw, pitch: c.light_pitch })
        .collect()
}

/// Light poses at the planned positions, the light facing the object.
pub fn poses_from_plan(plan: &LightingPlan) -> Vec<Pose> {
    plan.positions
        .iter()
        .map(|p| {
            let (yaw, pitch) = crate::mpc::bearing(p, &plan.region.ooi);
            Pose { position: *p, yaw, pitch }
        })
        .collect()
}

/// One render per pose from the true light position; recorded lighting
/// vectors carry localization noise `sigma`.
pub fn run_capture(
    poses: &[Pose],
    ooi: Vec3,
    scene: &Scene,
    camera: &CameraModel,
    sigma: f64,
    seed: u64,
) -> Result<CaptureSet> {
    camera.validate()?;
    let captures = poses
        .iter()
        .enumerate()
        .map(|(i, pose)| {
            let true_light = lighting_vector(&pose.position, &ooi, camera)?;
            Ok(Capture {
                name: capture_name(i),
                image: render(scene, camera, &ooi, &pose.position)?,
                true_pose: *pose,
                true_light,
                recorded_light: true_light,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let clean = CaptureSet { camera: *camera, ooi, captures, sigma: 0.0 };
    if sigma == 0.0 {
        Ok(clean)
    } else {
        clean.with_noise(sigma, seed)
    }
}

//! Desired lighting positions on a spherical cap around the object.
//!
//! Two generators are provided: a Fibonacci lattice restricted to the
//! angular window, and the row-structured grid used by the predictable
//! sequencing procedure. Angles follow the cap parametrization
//!
//! ```text
//! x = x_ooi - d cos(λv + ζ) cos(λh + ψ)
//! y = y_ooi - d cos(λv + ζ) sin(λh + ψ)
//! z = z_ooi - d sin(λv + ζ)          (spherical mode)
//! z = z_ooi - d tan(λv + ζ)          (faithful mode)
//! ```
//!
//! so `λh = λv = 0` places the light on the camera axis, between camera and
//! object.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lighting_vector, CameraModel, LightingVector, Vec3};

/// Angular window, lighting distance and object/camera pose of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanRegion {
    pub h_min: f64,
    pub h_max: f64,
    pub v_min: f64,
    pub v_max: f64,
    /// Light-to-object distance, meters.
    pub distance: f64,
    /// Object of interest.
    pub ooi: Vec3,
    pub cam_yaw: f64,
    pub cam_pitch: f64,
}

impl ScanRegion {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.h_min,
            self.h_max,
            self.v_min,
            self.v_max,
            self.distance,
            self.cam_yaw,
            self.cam_pitch,
        ];
        if vals.iter().chain(self.ooi.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidRegion("non-finite parameter".into()));
        }
        if !(self.h_min < self.h_max) || !(self.v_min < self.v_max) {
            return Err(Error::InvalidRegion(format!(
                "empty angular window h=[{}, {}] v=[{}, {}]",
                self.h_min, self.h_max, self.v_min, self.v_max
            )));
        }
        if self.h_max - self.h_min > 2.0 * PI + 1e-12 {
            return Err(Error::InvalidRegion("horizontal span exceeds 2π".into()));
        }
        if self.v_max - self.v_min >= PI {
            return Err(Error::InvalidRegion("vertical span must be below π".into()));
        }
        if !(self.distance > 0.0) {
            return Err(Error::InvalidRegion(format!(
                "lighting distance must be positive, got {}",
                self.distance
            )));
        }
        Ok(())
    }

    /// Light position for the cap angles `(λh, λv)`.
    pub fn position(&self, h: f64, v: f64, mode: SppaMode) -> Vec3 {
        let a = v + self.cam_pitch;
        let b = h + self.cam_yaw;
        let z = match mode {
            SppaMode::Spherical => self.distance * a.sin(),
            SppaMode::Faithful => self.distance * a.tan(),
        };
        self.ooi
            - Vec3::new(
                self.distance * a.cos() * b.cos(),
                self.distance * a.cos() * b.sin(),
                z,
            )
    }

    /// Inverse of the spherical-mode [`ScanRegion::position`]: cap angles of
    /// a unit direction from the object, with `λh` unwrapped into the window
    /// when possible.
    pub fn angles_of(&self, dir: &Vec3) -> (f64, f64) {
        let a = (-dir.z).clamp(-1.0, 1.0).asin();
        let b = (-dir.y).atan2(-dir.x);
        let h = self.h_min + (b - self.cam_yaw - self.h_min).rem_euclid(2.0 * PI);
        (h, a - self.cam_pitch)
    }

    pub fn contains(&self, h: f64, v: f64) -> bool {
        h >= self.h_min && h <= self.h_max && v >= self.v_min && v <= self.v_max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Fibonacci,
    Sppa,
}

/// Vertical coordinate of the predictable grid: `faithful` keeps the tangent
/// as printed in the original formulation, `spherical` keeps every light at
/// the lighting distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SppaMode {
    Faithful,
    #[default]
    Spherical,
}

/// Rounding of the per-row sample count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    #[default]
    HalfAwayFromZero,
    HalfToEven,
}

impl Rounding {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::HalfAwayFromZero => x.round(),
            Rounding::HalfToEven => x.round_ties_even(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRow {
    /// Vertical angle of the row; `None` for the synthetic Fibonacci row.
    pub vertical: Option<f64>,
    pub horizontal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingPlan {
    pub kind: PlanKind,
    pub region: ScanRegion,
    pub mode: SppaMode,
    pub rows: Vec<PlanRow>,
    /// One position per (row, sample), in row order.
    pub positions: Vec<Vec3>,
    /// Cap angles `[λh, λv]` of each position.
    pub angles: Vec<[f64; 2]>,
    /// Initial position of the light-carrying vehicle.
    pub initial: Vec3,
    /// Intra-row spacing along the cap, meters (predictable grid only).
    pub spacing: Option<f64>,
}

impl LightingPlan {
    /// Number of lighting positions, excluding the initial position.
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn row_sizes(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.horizontal.len()).collect()
    }

    /// Positions grouped by row.
    pub fn grid(&self) -> Vec<&[Vec3]> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut start = 0;
        for row in &self.rows {
            let end = start + row.horizontal.len();
            out.push(&self.positions[start..end]);
            start = end;
        }
        out
    }

    /// `Λc`: the initial position followed by every lighting position.
    pub fn with_initial(&self) -> Vec<Vec3> {
        std::iter::once(self.initial).chain(self.positions.iter().copied()).collect()
    }

    /// Lighting vectors of every position against `camera`.
    pub fn lighting_vectors(&self, camera: &CameraModel) -> Result<Vec<LightingVector>> {
        self.positions
            .iter()
            .map(|p| lighting_vector(p, &self.region.ooi, camera))
            .collect()
    }

    /// Light-position file for the plan with images named `capture_NNN.png`.
    pub fn to_lp(&self, camera: &CameraModel) -> Result<String> {
        let vecs = self.lighting_vectors(camera)?;
        let entries: Vec<_> = vecs
            .into_iter()
            .enumerate()
            .map(|(i, l)| (capture_name(i), l))
            .collect();
        Ok(write_lp(&entries))
    }
}

pub fn capture_name(i: usize) -> String {
    format!("capture_{i:03}.png")
}

/// Renders `.lp` text: the entry count, then `<name> <lu> <lv> <lw>` lines.
pub fn write_lp(entries: &[(String, LightingVector)]) -> String {
    let mut s = format!("{}\n", entries.len());
    for (name, l) in entries {
        let _ = writeln!(s, "{} {:.9} {:.9} {:.9}", name, l.u, l.v, l.w);
    }
    s
}

pub fn parse_lp(text: &str) -> Result<Vec<(String, LightingVector)>> {
    let bad = |detail: String| Error::Format { what: "light-position file", detail };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let count: usize = lines
        .next()
        .ok_or_else(|| bad("empty file".into()))?
        .trim()
        .parse()
        .map_err(|e| bad(format!("line 1: {e}")))?;
    let mut out = Vec::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            return Err(bad(format!("line {}: expected 4 fields", i + 2)));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", i + 2)));
        out.push((
            parts[0].to_string(),
            LightingVector { u: num(parts[1])?, v: num(parts[2])?, w: num(parts[3])? },
        ));
    }
    if out.len() != count {
        return Err(bad(format!("header announces {count} entries, found {}", out.len())));
    }
    Ok(out)
}

const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

fn lattice_point(i: usize, m: usize) -> Vec3 {
    let z = 1.0 - 2.0 * (i as f64 + 0.5) / m as f64;
    let r = (1.0 - z * z).max(0.0).sqrt();
    let phi = GOLDEN_ANGLE * i as f64;
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

fn lattice_survivors(region: &ScanRegion, m: usize) -> Vec<(Vec3, f64, f64)> {
    // Only indices whose height lies in the window's band can survive.
    let clamp = |a: f64| a.clamp(-PI / 2.0, PI / 2.0);
    let z_lo = -clamp(region.v_max + region.cam_pitch).sin();
    let z_hi = -clamp(region.v_min + region.cam_pitch).sin();
    let index = |z: f64| ((1.0 - z) * m as f64 / 2.0 - 0.5).max(0.0);
    let first = (index(z_hi).floor() as usize).saturating_sub(1);
    let last = ((index(z_lo).ceil() as usize) + 1).min(m);
    (first..last)
        .map(|i| lattice_point(i, m))
        .filter_map(|dir| {
            let (h, v) = region.angles_of(&dir);
            region
                .contains(h, v)
                .then(|| (region.ooi + dir * region.distance, h, v))
        })
        .collect()
}

/// `n` Fibonacci-lattice positions inside the angular window.
///
/// The lattice is generated on the full sphere; its total size is increased
/// until exactly `n` lattice points fall inside the window.
pub fn fibonacci_positions(region: &ScanRegion, n: usize, initial: Vec3) -> Result<LightingPlan> {
    region.validate()?;
    let clamp = |a: f64| a.clamp(-PI / 2.0, PI / 2.0);
    let band = (clamp(region.v_max + region.cam_pitch).sin()
        - clamp(region.v_min + region.cam_pitch).sin())
        / 2.0;
    let frac = (region.h_max - region.h_min) / (2.0 * PI) * band;
    if !(frac > 0.0) {
        return Err(Error::InvalidRegion(
            "angular window covers no part of the sphere".into(),
        ));
    }
    let mut chosen = Vec::new();
    if n > 0 {
        let start = ((n as f64 / frac) * 0.8).floor().max(n as f64) as usize;
        let limit = start * 3 + 1000;
        let mut fallback = None;
        for m in start..limit {
            let pts = lattice_survivors(region, m);
            if pts.len() == n {
                chosen = pts;
                break;
            }
            if pts.len() > n && fallback.is_none() {
                fallback = Some(pts);
            }
        }
        if chosen.is_empty() {
            let mut pts = fallback.ok_or_else(|| {
                Error::InvalidRegion(format!("window too small for {n} lattice points"))
            })?;
            pts.truncate(n);
            chosen = pts;
        }
    }
    let positions = chosen.iter().map(|p| p.0).collect();
    let angles: Vec<[f64; 2]> = chosen.iter().map(|p| [p.1, p.2]).collect();
    Ok(LightingPlan {
        kind: PlanKind::Fibonacci,
        region: *region,
        mode: SppaMode::Spherical,
        rows: vec![PlanRow {
            vertical: None,
            horizontal: angles.iter().map(|a| a[0]).collect(),
        }],
        positions,
        angles,
        initial,
        spacing: None,
    })
}

/// Vertical angles `Λv`: `v_s` equally spaced values spanning the window.
pub fn vertical_samples(region: &ScanRegion, v_s: usize) -> Vec<f64> {
    let step = (region.v_max - region.v_min) / (v_s - 1) as f64;
    (0..v_s)
        .map(|k| if k + 1 == v_s { region.v_max } else { region.v_min + k as f64 * step })
        .collect()
}

/// Spacing between neighbouring samples on a row: the cap arc between two
/// neighbouring rows.
pub fn spline_spacing(region: &ScanRegion, v_s: usize) -> f64 {
    region.distance * (region.v_max - region.v_min) / v_s as f64
}

/// Number of samples on the row at vertical angle `v`.
pub fn samples_on_row(region: &ScanRegion, v_s: usize, v: f64, rounding: Rounding) -> usize {
    let s_d = spline_spacing(region, v_s);
    let arc = region.distance * v.cos() * (region.h_max - region.h_min);
    // Rows past the pole would give a negative arc.
    1 + rounding.apply(arc / s_d).max(0.0) as usize
}

/// Horizontal samples `Λh(λv)` for a row of `n_s` samples.
pub fn horizontal_samples(region: &ScanRegion, n_s: usize) -> Vec<f64> {
    let span = region.h_max - region.h_min;
    if n_s == 1 {
        return vec![region.h_min + span / 2.0];
    }
    let step = span / (n_s - 1) as f64;
    (0..n_s)
        .map(|k| if k + 1 == n_s { region.h_max } else { region.h_min + k as f64 * step })
        .collect()
}

pub fn sppa_positions(
    region: &ScanRegion,
    v_s: usize,
    initial: Vec3,
    mode: SppaMode,
) -> Result<LightingPlan> {
    sppa_positions_with(region, v_s, initial, mode, Rounding::default())
}

/// Row-structured grid of lighting positions.
pub fn sppa_positions_with(
    region: &ScanRegion,
    v_s: usize,
    initial: Vec3,
    mode: SppaMode,
    rounding: Rounding,
) -> Result<LightingPlan> {
    region.validate()?;
    if v_s < 2 {
        return Err(Error::Precondition(format!(
            "the grid needs at least two rows, got v_s = {v_s}"
        )));
    }
    let mut rows = Vec::with_capacity(v_s);
    let mut positions = Vec::new();
    let mut angles = Vec::new();
    for v in vertical_samples(region, v_s) {
        let n_s = samples_on_row(region, v_s, v, rounding);
        let hs = horizontal_samples(region, n_s);
        for &h in &hs {
            positions.push(region.position(h, v, mode));
            angles.push([h, v]);
        }
        rows.push(PlanRow { vertical: Some(v), horizontal: hs });
    }
    Ok(LightingPlan {
        kind: PlanKind::Sppa,
        region: *region,
        mode,
        rows,
        positions,
        angles,
        initial,
        spacing: Some(spline_spacing(region, v_s)),
    })
}

/// Smallest `v_s` whose grid has at least `target` positions, or the largest
/// tried if none reaches it.
pub fn sppa_rows_for_count(region: &ScanRegion, target: usize) -> usize {
    let mut best = 2;
    for v_s in 2..=256 {
        let total: usize = vertical_samples(region, v_s)
            .into_iter()
            .map(|v| samples_on_row(region, v_s, v, Rounding::default()))
            .sum();
        best = v_s;
        if total >= target {
            break;
        }
    }
    best
}

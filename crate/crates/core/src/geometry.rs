//! Shared 3D and angular math.
//!
//! World frame is right-handed with `z` up. A camera looks along its optical
//! axis `f = (cos ζ cos ψ, cos ζ sin ψ, sin ζ)` for yaw `ψ` and pitch `ζ`;
//! image-plane axes are `u` (camera right) and `v` (camera up), and `w`
//! points back toward the camera.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Angle between two directions, robust near 0 and π.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub position: Vec3,
    /// Yaw of the optical axis, radians.
    pub yaw: f64,
    /// Pitch of the optical axis, radians (positive looks up).
    pub pitch: f64,
    /// Full horizontal angle of view, radians.
    pub aov_h: f64,
    /// Full vertical angle of view, radians.
    pub aov_v: f64,
    /// Radius of the vehicle body, meters.
    pub body_radius: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let finite = self.position.iter().all(|c| c.is_finite())
            && self.yaw.is_finite()
            && self.pitch.is_finite();
        if !finite {
            return Err(Error::InvalidCamera("non-finite pose".into()));
        }
        if !(self.aov_h > 0.0 && self.aov_h < PI) || !(self.aov_v > 0.0 && self.aov_v < PI) {
            return Err(Error::InvalidCamera(format!(
                "angles of view must lie in (0, π), got h={} v={}",
                self.aov_h, self.aov_v
            )));
        }
        if !(self.body_radius >= 0.0) {
            return Err(Error::InvalidCamera(format!(
                "negative body radius {}",
                self.body_radius
            )));
        }
        if self.pitch.abs() >= PI / 2.0 {
            return Err(Error::InvalidCamera(format!(
                "pitch {} leaves no horizontal reference",
                self.pitch
            )));
        }
        Ok(())
    }

    /// Camera placed `distance` meters in front of `target`, looking at it
    /// with the given yaw and pitch.
    pub fn looking_at(target: Vec3, distance: f64, yaw: f64, pitch: f64) -> CameraModel {
        let f = forward(yaw, pitch);
        CameraModel {
            position: target - f * distance,
            yaw,
            pitch,
            aov_h: 50f64.to_radians(),
            aov_v: 40f64.to_radians(),
            body_radius: 0.0,
        }
    }

    pub fn forward(&self) -> Vec3 {
        forward(self.yaw, self.pitch)
    }

    pub fn right(&self) -> Vec3 {
        Vec3::new(self.yaw.sin(), -self.yaw.cos(), 0.0)
    }

    pub fn up(&self) -> Vec3 {
        self.right().cross(&self.forward())
    }

    /// Expresses a world direction in the `(u, v, w)` image frame.
    pub fn to_image_frame(&self, dir: &Vec3) -> Vec3 {
        Vec3::new(dir.dot(&self.right()), dir.dot(&self.up()), -dir.dot(&self.forward()))
    }
}

fn forward(yaw: f64, pitch: f64) -> Vec3 {
    Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin())
}

/// Unit light direction projected onto the image plane.
///
/// `w` carries the signed out-of-plane component; a light behind the surface
/// plane has `w < 0` and is reported invalid by [`LightingVector::is_valid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightingVector {
    pub u: f64,
    pub v: f64,
    pub w: f64,
}

impl LightingVector {
    /// Builds a front-facing vector from its image-plane components.
    pub fn from_uv(u: f64, v: f64) -> Result<LightingVector> {
        let r2 = u * u + v * v;
        if !(r2 <= 1.0 + 1e-12) || !u.is_finite() || !v.is_finite() {
            return Err(Error::OutOfDisc { u, v });
        }
        Ok(LightingVector { u, v, w: (1.0 - r2).max(0.0).sqrt() })
    }

    pub fn is_valid(&self) -> bool {
        self.w >= 0.0 && self.u * self.u + self.v * self.v <= 1.0 + 1e-12
    }

    pub fn as_vec3(&self) -> Vec3 {
        Vec3::new(self.u, self.v, self.w)
    }
}

/// Lighting vector of a light at `light_pos` illuminating the object at
/// `ooi_pos`, expressed in the image frame of `camera`.
pub fn lighting_vector(light_pos: &Vec3, ooi_pos: &Vec3, camera: &CameraModel) -> Result<LightingVector> {
    let d = light_pos - ooi_pos;
    let n = d.norm();
    if !(n > 1e-12) {
        return Err(Error::DegenerateGeometry(
            "light coincides with the object of interest".into(),
        ));
    }
    let local = camera.to_image_frame(&(d / n));
    Ok(LightingVector { u: local.x, v: local.y, w: local.z })
}

/// Intermediate quantities of the field-of-view distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovComponents {
    /// Horizontal distance between camera and light.
    pub d_xy: f64,
    /// Folded horizontal angle from the (real or mirrored) optical axis.
    pub beta_h: f64,
    /// Folded vertical angle from the (real or mirrored) optical axis.
    pub beta_v: f64,
    /// Signed distance to the nearest vertical border.
    pub d_xy_border: f64,
    /// Signed distance to the nearest horizontal border.
    pub d_z_border: f64,
    /// Signed distance to the keep-out wedge, body radius subtracted.
    pub distance: f64,
}

impl FovComponents {
    pub fn inside(&self) -> bool {
        self.d_xy_border < 0.0 && self.d_z_border < 0.0
    }
}

fn fold(angle: f64) -> f64 {
    let a = wrap_angle(angle).abs();
    a.min(PI - a)
}

/// Signed distance of a light from the camera's field of view, including the
/// rear-facing mirror of it. Negative inside either wedge.
pub fn fov_components(light_pos: &Vec3, camera: &CameraModel) -> Result<FovComponents> {
    let d = light_pos - camera.position;
    let dist = d.norm();
    if !(dist > 1e-12) {
        return Err(Error::DegenerateGeometry(
            "light coincides with the camera".into(),
        ));
    }
    let d_xy = d.x.hypot(d.y);
    let alpha_h = wrap_angle(d.y.atan2(d.x) - camera.yaw);
    let elevation = d.z.atan2(d_xy);
    // Behind the camera the mirrored axis has pitch -ζ.
    let alpha_v = if alpha_h.abs() <= PI / 2.0 {
        elevation - camera.pitch
    } else {
        elevation + camera.pitch
    };
    let beta_h = fold(alpha_h);
    let beta_v = fold(alpha_v);
    let d_xy_border = d_xy * (beta_h - camera.aov_h / 2.0).sin();
    let d_z_border = dist * (beta_v - camera.aov_v / 2.0).sin();
    let distance = if d_xy_border < 0.0 && d_z_border < 0.0 {
        -(-d_xy_border).min(-d_z_border) - camera.body_radius
    } else {
        d_xy_border.max(0.0).hypot(d_z_border.max(0.0)) - camera.body_radius
    };
    Ok(FovComponents { d_xy, beta_h, beta_v, d_xy_border, d_z_border, distance })
}

pub fn fov_distance(light_pos: &Vec3, camera: &CameraModel) -> Result<f64> {
    fov_components(light_pos, camera).map(|c| c.distance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam(yaw: f64, pitch: f64, aov_h: f64, aov_v: f64) -> CameraModel {
        CameraModel {
            position: Vec3::zeros(),
            yaw,
            pitch,
            aov_h,
            aov_v,
            body_radius: 0.0,
        }
    }

    #[test]
    fn axial_light_projects_to_origin() {
        let c = CameraModel::looking_at(Vec3::new(1.0, 2.0, 0.5), 4.0, 0.7, -0.2);
        for dist in [0.5, 1.0, 3.0] {
            let light = Vec3::new(1.0, 2.0, 0.5) - c.forward() * dist;
            let l = lighting_vector(&light, &Vec3::new(1.0, 2.0, 0.5), &c).unwrap();
            assert!(l.u.abs() < 1e-12 && l.v.abs() < 1e-12);
            assert!((l.w - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn thirty_degree_off_axis_light() {
        // Light 30° off the axis toward +y, which is camera-left for yaw 0.
        let c = cam(0.0, 0.0, 1.0, 1.0);
        let ooi = Vec3::new(5.0, 0.0, 0.0);
        let a = PI / 6.0;
        let light = ooi + Vec3::new(-a.cos(), a.sin(), 0.0) * 5.0;
        let l = lighting_vector(&light, &ooi, &c).unwrap();
        assert!((l.u + 0.5).abs() < 1e-12, "{l:?}");
        assert!(l.v.abs() < 1e-12);
        assert!((l.w - a.cos()).abs() < 1e-12);
    }

    #[test]
    fn coincident_light_is_degenerate() {
        let c = cam(0.0, 0.0, 1.0, 1.0);
        let p = Vec3::new(5.0, 0.0, 0.0);
        assert!(matches!(lighting_vector(&p, &p, &c), Err(Error::DegenerateGeometry(_))));
        assert!(matches!(fov_distance(&Vec3::zeros(), &c), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn light_behind_surface_is_flagged() {
        let c = cam(0.0, 0.0, 1.0, 1.0);
        let ooi = Vec3::new(5.0, 0.0, 0.0);
        let l = lighting_vector(&Vec3::new(7.0, 0.5, 0.0), &ooi, &c).unwrap();
        assert!(!l.is_valid());
    }

    #[test]
    fn perpendicular_light_border_distance() {
        let c = cam(0.0, 0.0, PI / 2.0, PI / 3.0);
        let f = fov_components(&Vec3::new(0.0, 5.0, 0.0), &c).unwrap();
        // Point-plane distance to the border plane through the origin with
        // normal (sin 45°, -cos 45°, 0) rotated to the left border.
        let normal = Vec3::new(-(PI / 4.0).sin(), (PI / 4.0).cos(), 0.0);
        let plane = normal.dot(&Vec3::new(0.0, 5.0, 0.0));
        assert!((f.d_xy_border - 5.0 * (PI / 4.0).sin()).abs() < 1e-12);
        assert!((f.d_xy_border - plane).abs() < 1e-12);
        assert!((f.distance - 3.5355339059327378).abs() < 1e-9);
    }

    #[test]
    fn rear_axis_is_inside_mirrored_wedge() {
        let c = cam(0.3, 0.1, 0.8, 0.6);
        let light = -c.forward() * 3.0;
        let f = fov_components(&light, &c).unwrap();
        assert!(f.beta_h.abs() < 1e-12 && f.beta_v.abs() < 1e-12);
        assert!(f.distance < 0.0);
    }

    #[test]
    fn border_plane_has_zero_distance() {
        let c = cam(0.0, 0.0, PI / 2.0, PI / 3.0);
        // On the left vertical border, level with the camera.
        let light = Vec3::new(4.0, 4.0, 0.0);
        assert!(fov_distance(&light, &c).unwrap().abs() < 1e-12);
        // On the upper horizontal border, straight ahead.
        let light = Vec3::new(3.0, 0.0, 3.0 * (PI / 6.0).tan());
        assert!(fov_distance(&light, &c).unwrap().abs() < 1e-12);
    }

    #[test]
    fn body_radius_shifts_distance() {
        let mut c = cam(0.0, 0.0, PI / 2.0, PI / 3.0);
        let light = Vec3::new(0.0, 5.0, 0.0);
        let a = fov_distance(&light, &c).unwrap();
        c.body_radius = 0.3;
        assert!((a - 0.3 - fov_distance(&light, &c).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn camera_validation() {
        assert!(cam(0.0, 0.0, PI, 0.5).validate().is_err());
        assert!(cam(0.0, 0.0, 0.5, 0.0).validate().is_err());
        let mut c = cam(0.0, 0.0, 0.5, 0.5);
        c.body_radius = -1.0;
        assert!(c.validate().is_err());
        assert!(cam(0.0, 0.0, 0.5, 0.5).validate().is_ok());
    }

    fn arb_camera() -> impl Strategy<Value = CameraModel> {
        (-3.0..3.0f64, -1.2..1.2f64, 0.2..2.8f64, 0.2..2.8f64, 0.0..0.5f64).prop_map(
            |(yaw, pitch, h, v, r)| CameraModel {
                position: Vec3::new(0.5, -1.0, 2.0),
                yaw,
                pitch,
                aov_h: h,
                aov_v: v,
                body_radius: r,
            },
        )
    }

    fn arb_offset() -> impl Strategy<Value = Vec3> {
        (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64)
            .prop_filter("away from camera", |(x, y, z)| x * x + y * y + z * z > 1e-2)
            .prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn fold_symmetry(c in arb_camera(), off in arb_offset()) {
            let a = fov_distance(&(c.position + off), &c).unwrap();
            let b = fov_distance(&(c.position - off), &c).unwrap();
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }

        #[test]
        fn rotation_about_vertical(c in arb_camera(), off in arb_offset(), rot in -3.0..3.0f64) {
            let a = fov_distance(&(c.position + off), &c).unwrap();
            let r = nalgebra::Rotation3::from_axis_angle(&Vec3::z_axis(), rot);
            let mut c2 = c;
            c2.position = r * c.position;
            c2.yaw = c.yaw + rot;
            let b = fov_distance(&(c2.position + r * off), &c2).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn forward_hemisphere_in_unit_disc(c in arb_camera(), off in arb_offset()) {
            let ooi = c.position + c.forward() * 4.0;
            let light = ooi + off;
            let l = lighting_vector(&light, &ooi, &c).unwrap();
            if l.w >= 0.0 {
                prop_assert!(l.u * l.u + l.v * l.v <= 1.0 + 1e-12);
                prop_assert!(l.is_valid());
            }
            let n = (l.u * l.u + l.v * l.v + l.w * l.w).sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }
}

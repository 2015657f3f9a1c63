//! Polynomial texture maps: per-pixel biquadratic fitting, relighting,
//! normal extraction and the `.rtiptm` container.
//!
//! Each pixel and channel stores six coefficients of
//! `I(l_u, l_v) = α1 l_u² + α2 l_v² + α3 l_u l_v + α4 l_u + α5 l_v + α6`.
//! Intensities are 8-bit sample values divided by 255.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capture::CaptureSet;
use crate::error::{Error, Result};
use crate::geometry::{LightingVector, Vec3};
use crate::image::RgbImage;

pub const COEFFICIENTS: usize = 6;
pub const PLANES: usize = COEFFICIENTS * 3;
/// Largest design-matrix condition number accepted by the fitter.
pub const MAX_CONDITION: f64 = 1e6;
/// Threshold on `|4 α1 α2 - α3²|` below which no stationary point is reported.
pub const EPS_D: f64 = 1e-9;
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

const PTM_MAGIC: &[u8] = b"RTIPTM1\n";
const NORMAL_MAGIC: &[u8] = b"RTINRM1\n";

/// Basis terms `[l_u², l_v², l_u l_v, l_u, l_v, 1]`.
pub fn basis(u: f64, v: f64) -> [f64; COEFFICIENTS] {
    [u * u, v * v, u * v, u, v, 1.0]
}

/// Least-squares solver for a fixed set of lighting vectors.
#[derive(Debug, Clone)]
pub struct PtmFitter {
    /// Pseudo-inverse of the design matrix, 6 × n.
    pinv: DMatrix<f64>,
    pub condition: f64,
}

impl PtmFitter {
    pub fn new(lights: &[LightingVector]) -> Result<PtmFitter> {
        let n = lights.len();
        let design = DMatrix::from_fn(n, COEFFICIENTS, |r, c| basis(lights[r].u, lights[r].v)[c]);
        if n < COEFFICIENTS {
            return Err(Error::IllConditionedLighting {
                condition: f64::INFINITY,
                geometry: format!("{n} lighting vectors; at least {COEFFICIENTS} are needed"),
            });
        }
        let svd = design.clone().svd(true, true);
        let s = &svd.singular_values;
        let (smax, smin) = (s.max(), s.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if !(condition < MAX_CONDITION) {
            return Err(Error::IllConditionedLighting { condition, geometry: describe_geometry(lights) });
        }
        let pinv = svd
            .pseudo_inverse(0.0)
            .map_err(|e| Error::IllConditionedLighting { condition, geometry: e.to_string() })?;
        Ok(PtmFitter { pinv, condition })
    }

    pub fn len(&self) -> usize {
        self.pinv.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coefficients minimizing the squared residual over `samples`.
    pub fn fit_samples(&self, samples: &[f64]) -> [f64; COEFFICIENTS] {
        let x = &self.pinv * DVector::from_column_slice(samples);
        std::array::from_fn(|i| x[i])
    }

    pub fn fit_images(&self, images: &[&RgbImage]) -> Result<PtmFit> {
        let Some(first) = images.first() else {
            return Err(Error::Precondition("no images to fit".into()));
        };
        if images.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} images for {} lighting vectors",
                images.len(),
                self.len()
            )));
        }
        let (w, h) = (first.width, first.height);
        if images.iter().any(|im| im.width != w || im.height != h) {
            return Err(Error::DimensionMismatch("capture images differ in size".into()));
        }
        let mut coeffs = vec![[0.0; PLANES]; w * h];
        coeffs.par_iter_mut().enumerate().for_each(|(p, out)| {
            for c in 0..3 {
                for i in 0..COEFFICIENTS {
                    let mut acc = 0.0;
                    for (k, im) in images.iter().enumerate() {
                        acc += self.pinv[(i, k)] * (im.data[p * 3 + c] as f64 / 255.0);
                    }
                    out[i * 3 + c] = acc;
                }
            }
        });
        Ok(PtmFit { width: w, height: h, coeffs })
    }
}

fn describe_geometry(lights: &[LightingVector]) -> String {
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for l in lights {
        if !distinct.iter().any(|d| (d.0 - l.u).abs() < 1e-9 && (d.1 - l.v).abs() < 1e-9) {
            distinct.push((l.u, l.v));
        }
    }
    if distinct.len() < COEFFICIENTS {
        return format!(
            "{} lighting vectors but only {} distinct directions; at least {COEFFICIENTS} are needed",
            lights.len(),
            distinct.len()
        );
    }
    // Principal spread of the (u, v) samples tells a line from a conic.
    let m = distinct.len() as f64;
    let (mu, mv) = distinct.iter().fold((0.0, 0.0), |a, d| (a.0 + d.0 / m, a.1 + d.1 / m));
    let (mut suu, mut svv, mut suv) = (0.0, 0.0, 0.0);
    for d in &distinct {
        suu += (d.0 - mu).powi(2);
        svv += (d.1 - mv).powi(2);
        suv += (d.0 - mu) * (d.1 - mv);
    }
    let tr = suu + svv;
    let det = suu * svv - suv * suv;
    let minor = tr / 2.0 - ((tr / 2.0).powi(2) - det).max(0.0).sqrt();
    if minor < 1e-9 * tr.max(1e-300) {
        "lighting vectors are collinear in the (l_u, l_v) plane".into()
    } else {
        format!(
            "{} distinct lighting vectors lie on a common conic (e.g. one ring of constant elevation); add positions at other elevations",
            distinct.len()
        )
    }
}

/// Fitted coefficients before quantization. `coeffs[p][i * 3 + c]` is
/// `α_{i+1}` of channel `c` at pixel `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct PtmFit {
    pub width: usize,
    pub height: usize,
    pub coeffs: Vec<[f64; PLANES]>,
}

pub fn fit_ptm(set: &CaptureSet) -> Result<PtmFit> {
    let lights = set.recorded_lights();
    let fitter = PtmFitter::new(&lights)?;
    let images: Vec<&RgbImage> = set.captures.iter().map(|c| &c.image).collect();
    fitter.fit_images(&images)
}

fn channel_value(a: &[f64; PLANES], c: usize, b: &[f64; COEFFICIENTS]) -> f64 {
    (0..COEFFICIENTS).map(|i| a[i * 3 + c] * b[i]).sum()
}

fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn check_disc(l: &LightingVector) -> Result<[f64; COEFFICIENTS]> {
    if !(l.u * l.u + l.v * l.v <= 1.0 + 1e-12) {
        return Err(Error::OutOfDisc { u: l.u, v: l.v });
    }
    Ok(basis(l.u, l.v))
}

impl PtmFit {
    /// Unclamped per-pixel RGB values at `l`.
    pub fn evaluate(&self, l: &LightingVector) -> Result<Vec<[f64; 3]>> {
        let b = check_disc(l)?;
        Ok(self.coeffs.iter().map(|a| std::array::from_fn(|c| channel_value(a, c, &b))).collect())
    }

    pub fn relight(&self, l: &LightingVector) -> Result<RgbImage> {
        let vals = self.evaluate(l)?;
        let mut img = RgbImage::new(self.width, self.height);
        for (p, v) in vals.iter().enumerate() {
            img.data[p * 3..p * 3 + 3].copy_from_slice(&v.map(to_u8));
        }
        Ok(img)
    }

    /// Sum of squared residuals of channel `c` at `pixel` against samples.
    pub fn residual(&self, pixel: usize, c: usize, lights: &[LightingVector], samples: &[f64]) -> f64 {
        residual_of(&self.coeffs[pixel], c, lights, samples)
    }

    pub fn quantize(&self) -> PtmImage {
        let mut scale = [0.0; PLANES];
        let mut bias = [0i32; PLANES];
        let mut planes = vec![vec![0u8; self.coeffs.len()]; PLANES];
        for k in 0..PLANES {
            let (lo, hi) = self
                .coeffs
                .iter()
                .map(|a| a[k])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
            let (s, b) = plane_mapping(lo, hi);
            scale[k] = s;
            bias[k] = b;
            for (p, a) in self.coeffs.iter().enumerate() {
                planes[k][p] = ((a[k] / s).round() + b as f64).clamp(0.0, 255.0) as u8;
            }
        }
        PtmImage { width: self.width, height: self.height, scale, bias, planes }
    }

    pub fn normal_map(&self) -> NormalMap {
        normals_from(self.width, self.height, |p| luminance(&self.coeffs[p]))
    }
}

fn residual_of(a: &[f64; PLANES], c: usize, lights: &[LightingVector], samples: &[f64]) -> f64 {
    lights
        .iter()
        .zip(samples)
        .map(|(l, s)| (channel_value(a, c, &basis(l.u, l.v)) - s).powi(2))
        .sum()
}

/// Per-plane affine 8-bit mapping `(scale, bias)` covering `[lo, hi]`.
fn plane_mapping(lo: f64, hi: f64) -> (f64, i32) {
    if !lo.is_finite() || !hi.is_finite() {
        return (1.0, 0);
    }
    let scale = if hi > lo {
        // 254 steps leave room for the rounding of both ends.
        (hi - lo) / 254.0
    } else if lo != 0.0 {
        lo.abs() / 127.0
    } else {
        1.0
    };
    (scale, -(lo / scale).round() as i32)
}

/// Luminance coefficients of one pixel.
pub fn luminance(a: &[f64; PLANES]) -> [f64; COEFFICIENTS] {
    std::array::from_fn(|i| (0..3).map(|c| LUMA[c] * a[i * 3 + c]).sum())
}

/// Stationary point of the luminance polynomial, if it is a maximum
/// inside the unit disc.
pub fn stationary_point(a: &[f64; COEFFICIENTS]) -> Option<(f64, f64)> {
    let d = 4.0 * a[0] * a[1] - a[2] * a[2];
    // A maximum needs a negative-definite quadratic part: D > 0 and α1 < 0.
    if d < EPS_D || a[0] >= 0.0 {
        return None;
    }
    let u = (a[2] * a[4] - 2.0 * a[1] * a[3]) / d;
    let v = (a[2] * a[3] - 2.0 * a[0] * a[4]) / d;
    (u * u + v * v <= 1.0).then_some((u, v))
}

fn normals_from(width: usize, height: usize, lum: impl Fn(usize) -> [f64; COEFFICIENTS] + Sync) -> NormalMap {
    let (normals, valid): (Vec<Vec3>, Vec<bool>) = (0..width * height)
        .into_par_iter()
        .map(|p| match stationary_point(&lum(p)) {
            Some((u, v)) => (Vec3::new(u, v, (1.0 - u * u - v * v).max(0.0).sqrt()), true),
            None => (Vec3::zeros(), false),
        })
        .unzip();
    NormalMap { width, height, normals, valid }
}

/// Quantized PTM. Plane `k = i * 3 + c` holds `α_{i+1}` of channel `c`
/// (R, G, B) with value `(raw - bias[k]) * scale[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PtmImage {
    pub width: usize,
    pub height: usize,
    pub scale: [f64; PLANES],
    pub bias: [i32; PLANES],
    pub planes: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PtmHeader {
    width: usize,
    height: usize,
    channels: Vec<String>,
    coefficients: Vec<String>,
    plane_order: String,
    scale: Vec<f64>,
    bias: Vec<i32>,
    colorspace: String,
}

impl PtmImage {
    pub fn coefficients(&self, pixel: usize) -> [f64; PLANES] {
        std::array::from_fn(|k| (self.planes[k][pixel] as f64 - self.bias[k] as f64) * self.scale[k])
    }

    pub fn dequantize(&self) -> PtmFit {
        PtmFit {
            width: self.width,
            height: self.height,
            coeffs: (0..self.width * self.height).map(|p| self.coefficients(p)).collect(),
        }
    }

    /// 8-bit image of the polynomial at `l`, clamped to `[0, 1]`.
    pub fn relight(&self, l: &LightingVector) -> Result<RgbImage> {
        let b = check_disc(l)?;
        let mut img = RgbImage::new(self.width, self.height);
        img.data.par_chunks_mut(3).enumerate().for_each(|(p, px)| {
            let a = self.coefficients(p);
            for c in 0..3 {
                px[c] = to_u8(channel_value(&a, c, &b));
            }
        });
        Ok(img)
    }

    pub fn normal_map(&self) -> NormalMap {
        normals_from(self.width, self.height, |p| luminance(&self.coefficients(p)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = PtmHeader {
            width: self.width,
            height: self.height,
            channels: ["R", "G", "B"].map(String::from).to_vec(),
            coefficients: (1..=COEFFICIENTS).map(|i| format!("a{i}")).collect(),
            plane_order: "coefficient-major".into(),
            scale: self.scale.to_vec(),
            bias: self.bias.to_vec(),
            colorspace: "8-bit sample values / 255".into(),
        };
        let mut out = PTM_MAGIC.to_vec();
        out.extend(serde_json::to_vec(&header)?);
        out.push(b'\n');
        for plane in &self.planes {
            out.extend_from_slice(plane);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<PtmImage> {
        let bad = |detail: String| Error::Format { what: "PTM container", detail };
        let rest = bytes.strip_prefix(PTM_MAGIC).ok_or_else(|| bad("bad magic".into()))?;
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("unterminated header".into()))?;
        let header: PtmHeader = serde_json::from_slice(&rest[..nl]).map_err(|e| bad(format!("header: {e}")))?;
        if header.scale.len() != PLANES || header.bias.len() != PLANES {
            return Err(bad(format!("expected {PLANES} scale and bias entries")));
        }
        if header.plane_order != "coefficient-major" {
            return Err(bad(format!("unsupported plane order {}", header.plane_order)));
        }
        let n = header.width * header.height;
        let data = &rest[nl + 1..];
        if data.len() != n * PLANES {
            return Err(bad(format!("expected {} plane bytes, found {}", n * PLANES, data.len())));
        }
        Ok(PtmImage {
            width: header.width,
            height: header.height,
            scale: std::array::from_fn(|k| header.scale[k]),
            bias: std::array::from_fn(|k| header.bias[k]),
            planes: data.chunks_exact(n.max(1)).take(PLANES).map(<[u8]>::to_vec).collect(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| Error::File { path: path.into(), source })
    }

    pub fn read(path: &Path) -> Result<PtmImage> {
        let bytes = std::fs::read(path).map_err(|source| Error::File { path: path.into(), source })?;
        PtmImage::from_bytes(&bytes)
    }
}

/// Per-pixel unit normals in the image frame; invalid pixels hold zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub width: usize,
    pub height: usize,
    pub normals: Vec<Vec3>,
    pub valid: Vec<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct NormalHeader {
    width: usize,
    height: usize,
}

impl NormalMap {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// RGB = (n + 1) / 2; invalid pixels are black.
    pub fn to_image(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (p, (n, ok)) in self.normals.iter().zip(&self.valid).enumerate() {
            if *ok {
                let rgb = [n.x, n.y, n.z].map(|x| to_u8((x + 1.0) / 2.0));
                img.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
            }
        }
        img
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_image().save_png_with_text(path, &[("encoding", "RGB = (n + 1) / 2, black = invalid".into())])
    }

    /// Float sidecar: magic, JSON header line, `f32` little-endian normals
    /// (x, y, z per pixel), then one validity byte per pixel.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = NORMAL_MAGIC.to_vec();
        out.extend(serde_json::to_vec(&NormalHeader { width: self.width, height: self.height })?);
        out.push(b'\n');
        for n in &self.normals {
            for x in [n.x, n.y, n.z] {
                out.extend((x as f32).to_le_bytes());
            }
        }
        out.extend(self.valid.iter().map(|v| *v as u8));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<NormalMap> {
        let bad = |detail: String| Error::Format { what: "normal-map sidecar", detail };
        let rest = bytes.strip_prefix(NORMAL_MAGIC).ok_or_else(|| bad("bad magic".into()))?;
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("unterminated header".into()))?;
        let h: NormalHeader = serde_json::from_slice(&rest[..nl]).map_err(|e| bad(e.to_string()))?;
        let n = h.width * h.height;
        let data = &rest[nl + 1..];
        if data.len() != n * 13 {
            return Err(bad(format!("expected {} bytes, found {}", n * 13, data.len())));
        }
        let f = |i: usize| f32::from_le_bytes(data[i * 4..i * 4 + 4].try_into().unwrap()) as f64;
        Ok(NormalMap {
            width: h.width,
            height: h.height,
            normals: (0..n).map(|p| Vec3::new(f(p * 3), f(p * 3 + 1), f(p * 3 + 2))).collect(),
            valid: data[n * 12..].iter().map(|&b| b != 0).collect(),
        })
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|source| Error::File { path: path.into(), source })
    }

    pub fn read_sidecar(path: &Path) -> Result<NormalMap> {
        let bytes = std::fs::read(path).map_err(|source| Error::File { path: path.into(), source })?;
        NormalMap::from_bytes(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalComparison {
    /// Mean angle over mutually valid pixels, radians.
    pub mean: f64,
    pub max: f64,
    /// Per-pixel angle, `None` where either map is invalid.
    pub angles: Vec<Option<f64>>,
    pub width: usize,
    pub height: usize,
}

pub fn compare_normals(a: &NormalMap, b: &NormalMap) -> Result<NormalComparison> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::DimensionMismatch(format!(
            "normal maps are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let angles: Vec<Option<f64>> = (0..a.normals.len())
        .map(|p| {
            (a.valid[p] && b.valid[p]).then(|| a.normals[p].dot(&b.normals[p]).clamp(-1.0, 1.0).acos())
        })
        .collect();
    let vals: Vec<f64> = angles.iter().flatten().copied().collect();
    if vals.is_empty() {
        return Err(Error::UndefinedMean);
    }
    Ok(NormalComparison {
        mean: vals.iter().sum::<f64>() / vals.len() as f64,
        max: vals.iter().copied().fold(0.0, f64::max),
        angles,
        width: a.width,
        height: a.height,
    })
}

impl NormalComparison {
    /// Heatmap from black (0 rad) through red and yellow to white at
    /// `scale_max`; invalid pixels are blue.
    pub fn heatmap(&self, scale_max: f64) -> RgbImage {
        let mut img = RgbImage::new(self.width, self.height);
        for (p, a) in self.angles.iter().enumerate() {
            let rgb = match a {
                None => [0, 0, 160],
                Some(a) => {
                    let t = (a / scale_max).clamp(0.0, 1.0) * 3.0;
                    [t, t - 1.0, t - 2.0].map(to_u8)
                }
            };
            img.data[p * 3..p * 3 + 3].copy_from_slice(&rgb);
        }
        img
    }

    pub fn save_heatmap(&self, path: &Path, scale_max: f64) -> Result<()> {
        self.heatmap(scale_max).save_png_with_text(
            path,
            &[
                ("scale_min_rad", "0".into()),
                ("scale_max_rad", format!("{scale_max}")),
                ("legend", "black 0 rad, red, yellow, white at scale_max_rad; blue invalid".into()),
                ("mean_rad", format!("{}", self.mean)),
            ],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lights(n: usize) -> Vec<LightingVector> {
        // Rings at several elevations.
        (0..n)
            .map(|i| {
                let r = 0.2 + 0.6 * ((i % 3) as f64) / 2.0;
                let a = 2.399963 * i as f64;
                LightingVector::from_uv(r * a.cos(), r * a.sin()).unwrap()
            })
            .collect()
    }

    #[test]
    fn model_class_recovery() {
        let ls = lights(12);
        let f = PtmFitter::new(&ls).unwrap();
        let samples: Vec<f64> = ls.iter().map(|l| 0.5 + 0.3 * l.u).collect();
        let a = f.fit_samples(&samples);
        let expect = [0.0, 0.0, 0.0, 0.3, 0.0, 0.5];
        for i in 0..6 {
            assert!((a[i] - expect[i]).abs() < 1e-6, "{a:?}");
        }
    }

    #[test]
    fn constant_images() {
        let ls = lights(9);
        let img = RgbImage::from_fn(4, 3, |x, y| [100 + x as u8, 50 + y as u8, 7]);
        let images: Vec<&RgbImage> = vec![&img; 9];
        let fit = PtmFitter::new(&ls).unwrap().fit_images(&images).unwrap();
        for (p, a) in fit.coeffs.iter().enumerate() {
            for k in 0..15 {
                assert!(a[k].abs() < 1e-9);
            }
            let px = img.get(p % 4, p / 4);
            for c in 0..3 {
                assert!((a[15 + c] - px[c] as f64 / 255.0).abs() < 1e-9);
            }
        }
        let q = fit.quantize();
        for p in 0..12 {
            let a = q.coefficients(p);
            for k in 0..15 {
                assert!(a[k].abs() <= q.scale[k] / 2.0 + 1e-12);
            }
        }
        assert_eq!(q.relight(&LightingVector::from_uv(0.3, 0.1).unwrap()).unwrap(), img);
    }

    #[test]
    fn too_few_or_degenerate_lights() {
        assert!(matches!(PtmFitter::new(&lights(5)), Err(Error::IllConditionedLighting { .. })));
        let line: Vec<_> = (0..10).map(|i| LightingVector::from_uv(0.05 * i as f64, 0.0).unwrap()).collect();
        match PtmFitter::new(&line) {
            Err(Error::IllConditionedLighting { geometry, .. }) => assert!(geometry.contains("collinear"), "{geometry}"),
            other => panic!("{other:?}"),
        }
        let ring: Vec<_> = (0..10)
            .map(|i| {
                let a = i as f64 * 0.6;
                LightingVector::from_uv(0.5 * a.cos(), 0.5 * a.sin()).unwrap()
            })
            .collect();
        match PtmFitter::new(&ring) {
            Err(Error::IllConditionedLighting { geometry, .. }) => assert!(geometry.contains("conic"), "{geometry}"),
            other => panic!("{other:?}"),
        }
        let dup = vec![LightingVector::from_uv(0.1, 0.2).unwrap(); 8];
        match PtmFitter::new(&dup) {
            Err(Error::IllConditionedLighting { geometry, .. }) => assert!(geometry.contains("distinct"), "{geometry}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constructed_stationary_point() {
        let a = [-1.0, -1.0, 0.0, 0.4, -0.2, 0.95];
        let (u, v) = stationary_point(&a).unwrap();
        assert!((u - 0.2).abs() < 1e-12 && (v + 0.1).abs() < 1e-12);
        let mut planes = [0.0; PLANES];
        for i in 0..6 {
            for c in 0..3 {
                planes[i * 3 + c] = a[i];
            }
        }
        let fit = PtmFit { width: 1, height: 1, coeffs: vec![planes] };
        let n = fit.normal_map();
        assert!(n.valid[0]);
        assert!((n.normals[0] - Vec3::new(0.2, -0.1, 0.97468)).norm() < 1e-5);
        assert!((n.normals[0].norm() - 1.0).abs() < 1e-12);
        let peak = stationary_point(&[-1.0, -1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(peak, (0.0, 0.0));
    }

    #[test]
    fn invalid_stationary_points() {
        // Minimum, saddle, degenerate and out-of-disc cases.
        assert!(stationary_point(&[1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).is_none());
        assert!(stationary_point(&[-1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).is_none());
        assert!(stationary_point(&[0.0, 0.0, 0.0, 0.3, 0.0, 0.0]).is_none());
        assert!(stationary_point(&[-0.1, -0.1, 0.0, 0.4, 0.0, 0.0]).is_none());
    }

    #[test]
    fn relight_origin_is_constant_plane() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fit = PtmFit {
            width: 5,
            height: 4,
            coeffs: (0..20).map(|_| std::array::from_fn(|_| rng.random_range(-0.5..1.2))).collect(),
        };
        let q = fit.quantize();
        let img = q.relight(&LightingVector::from_uv(0.0, 0.0).unwrap()).unwrap();
        for p in 0..20 {
            let a = q.coefficients(p);
            for c in 0..3 {
                assert_eq!(img.data[p * 3 + c], to_u8(a[15 + c]));
            }
        }
        assert!(matches!(
            q.relight(&LightingVector { u: 0.9, v: 0.9, w: 0.0 }),
            Err(Error::OutOfDisc { .. })
        ));
    }

    #[test]
    fn quantization_within_one_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let fit = PtmFit {
            width: 6,
            height: 6,
            coeffs: (0..36).map(|_| std::array::from_fn(|k| rng.random_range(-1.0..1.0) * (k + 1) as f64)).collect(),
        };
        let q = fit.quantize();
        for (p, a) in fit.coeffs.iter().enumerate() {
            let b = q.coefficients(p);
            for k in 0..PLANES {
                assert!((a[k] - b[k]).abs() <= q.scale[k] / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn container_round_trip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let fit = PtmFit {
            width: 3,
            height: 2,
            coeffs: (0..6).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
        };
        let q = fit.quantize();
        let bytes = q.to_bytes().unwrap();
        assert!(bytes.starts_with(b"RTIPTM1\n"));
        assert_eq!(PtmImage::from_bytes(&bytes).unwrap(), q);
        assert!(PtmImage::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(PtmImage::from_bytes(b"NOTPTM\n{}\n").is_err());
    }

    #[test]
    fn normal_sidecar_round_trip() {
        let n = NormalMap {
            width: 2,
            height: 1,
            normals: vec![Vec3::new(0.6, 0.0, 0.8), Vec3::zeros()],
            valid: vec![true, false],
        };
        let back = NormalMap::from_bytes(&n.to_bytes().unwrap()).unwrap();
        assert_eq!(back.valid, n.valid);
        assert!((back.normals[0] - n.normals[0]).norm() < 1e-7);
        assert_eq!(n.to_image().get(1, 0), [0, 0, 0]);
        assert_eq!(n.to_image().get(0, 0), [204, 128, 230]);
    }

    fn map_of(normals: Vec<Vec3>) -> NormalMap {
        let n = normals.len();
        NormalMap { width: n, height: 1, normals, valid: vec![true; n] }
    }

    #[test]
    fn comparison_cases() {
        let a = map_of(vec![Vec3::z(), Vec3::new(0.6, 0.0, 0.8), Vec3::new(0.0, -0.6, 0.8)]);
        assert_eq!(compare_normals(&a, &a).unwrap().mean, 0.0);
        let tilt = 0.1f64;
        let b = map_of(
            a.normals
                .iter()
                .map(|n| {
                    // Rotate about an axis orthogonal to n.
                    let axis = n.cross(&Vec3::new(0.3, 0.9, 0.1)).normalize();
                    nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), tilt) * n
                })
                .collect(),
        );
        let ab = compare_normals(&a, &b).unwrap();
        assert!((ab.mean - tilt).abs() < 1e-9);
        assert_eq!(ab.mean, compare_normals(&b, &a).unwrap().mean);
        let mut c = b.clone();
        c.valid = vec![false; 3];
        assert!(matches!(compare_normals(&a, &c), Err(Error::UndefinedMean)));
        let d = map_of(vec![Vec3::z(); 2]);
        assert!(matches!(compare_normals(&a, &d), Err(Error::DimensionMismatch(_))));
    }

    proptest! {
        #[test]
        fn fit_is_least_squares(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ls = lights(10);
            let samples: Vec<f64> = ls.iter().map(|_| rng.random_range(0.0..1.0)).collect();
            let a = PtmFitter::new(&ls).unwrap().fit_samples(&samples);
            let mut planes = [0.0; PLANES];
            for i in 0..6 { planes[i * 3] = a[i]; }
            let base = residual_of(&planes, 0, &ls, &samples);
            for _ in 0..20 {
                let mut p = planes;
                for i in 0..6 { p[i * 3] += rng.random_range(-1e-3..1e-3); }
                prop_assert!(residual_of(&p, 0, &ls, &samples) >= base - 1e-12);
            }
        }

        #[test]
        fn relight_is_linear(seed in 0u64..1000, u in -0.7f64..0.7, v in -0.7f64..0.7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| PtmFit {
                width: 2, height: 2,
                coeffs: (0..4).map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0))).collect(),
            };
            let (a, b) = (mk(&mut rng), mk(&mut rng));
            let sum = PtmFit {
                width: 2, height: 2,
                coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| std::array::from_fn(|k| x[k] + y[k])).collect(),
            };
            let l = LightingVector::from_uv(u, v).unwrap();
            let (ea, eb, es) = (a.evaluate(&l).unwrap(), b.evaluate(&l).unwrap(), sum.evaluate(&l).unwrap());
            for p in 0..4 {
                for c in 0..3 {
                    prop_assert!((ea[p][c] + eb[p][c] - es[p][c]).abs() < 1e-12);
                }
            }
        }
    }
}

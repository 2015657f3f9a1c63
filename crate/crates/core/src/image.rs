//! 8-bit RGB raster and PNG input/output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major, interleaved RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage { width, height, data: vec![0; width * height * 3] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut img = RgbImage::new(width, height);
        for y in 0..height {
            for x in 0..width {
                img.put(x, y, f(x, y));
            }
        }
        img
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.save_png_with_text(path, &[])
    }

    /// Writes the image with `tEXt` chunks `(keyword, text)`.
    pub fn save_png_with_text(&self, path: &Path, text: &[(&str, String)]) -> Result<()> {
        let file = File::create(path).map_err(|source| Error::File { path: path.into(), source })?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        for (k, t) in text {
            enc.add_text_chunk(k.to_string(), t.clone())?;
        }
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.data)?;
        writer.finish()?;
        Ok(())
    }

    /// Reads any 8- or 16-bit PNG, dropping alpha and expanding gray.
    pub fn load_png(path: &Path) -> Result<RgbImage> {
        Ok(load_png_with_text(path)?.0)
    }
}

/// Image plus its `tEXt` chunks.
pub fn load_png_with_text(path: &Path) -> Result<(RgbImage, Vec<(String, String)>)> {
    let file = File::open(path).map_err(|source| Error::File { path: path.into(), source })?;
    let mut dec = png::Decoder::new(BufReader::new(file));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info()?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let channels = info.color_type.samples();
    let mut img = RgbImage::new(w, h);
    for y in 0..h {
        let row = &buf[y * info.line_size..];
        for x in 0..w {
            let p = &row[x * channels..];
            let rgb = match channels {
                1 | 2 => [p[0]; 3],
                _ => [p[0], p[1], p[2]],
            };
            img.put(x, y, rgb);
        }
    }
    let text = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .map(|c| (c.keyword.clone(), c.text.clone()))
        .collect();
    Ok((img, text))
}

//! Frame rendering to binary PPM (P6) images.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Disc, SimConfig, SimTrace};
use crate::error::{Error, Result};

pub const BACKGROUND: [u8; 3] = [12, 12, 28];

/// Colour by radius band, small bullets bright and large ones warm.
pub fn radius_color(radius: f64) -> [u8; 3] {
    match radius {
        r if r < 4.0 => [240, 240, 255],
        r if r < 7.0 => [110, 200, 255],
        r if r < 10.0 => [120, 255, 140],
        r if r < 13.0 => [255, 200, 80],
        _ => [255, 80, 90],
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub pixels: Vec<[u8; 3]>,
}

impl FrameImage {
    pub fn blank(width: usize, height: usize) -> Self {
        FrameImage { width, height, pixels: vec![BACKGROUND; width * height] }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    /// Fills every pixel whose centre lies within `radius` of the disc centre.
    pub fn fill_disc(&mut self, d: &Disc) {
        let color = radius_color(d.radius);
        let x_lo = (d.x - d.radius - 0.5).floor().max(0.0) as usize;
        let y_lo = (d.y - d.radius - 0.5).floor().max(0.0) as usize;
        let x_hi = (d.x + d.radius).ceil().min(self.width as f64 - 1.0);
        let y_hi = (d.y + d.radius).ceil().min(self.height as f64 - 1.0);
        if x_hi < 0.0 || y_hi < 0.0 {
            return;
        }
        let r2 = d.radius * d.radius;
        for py in y_lo..=y_hi as usize {
            for px in x_lo..=x_hi as usize {
                let dx = px as f64 + 0.5 - d.x;
                let dy = py as f64 + 0.5 - d.y;
                if dx * dx + dy * dy <= r2 {
                    self.pixels[py * self.width + px] = color;
                }
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

pub fn render_frame(discs: &[Disc], cfg: &SimConfig) -> FrameImage {
    let mut img = FrameImage::blank(cfg.screen_w as usize, cfg.screen_h as usize);
    for d in discs {
        img.fill_disc(d);
    }
    img
}

/// Writes frames `0, stride, 2·stride, …` below `t_total` as
/// `frame_NNNNN.ppm`. The trace must have been recorded with frames.
pub fn render_frames(trace: &SimTrace, stride: usize, cfg: &SimConfig, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    let frames = trace
        .frames
        .as_ref()
        .ok_or_else(|| Error::Config("trace was simulated without frame recording".into()))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    for (f, discs) in frames.iter().enumerate().step_by(stride) {
        let path = out_dir.join(format!("frame_{f:05}.ppm"));
        fs::write(&path, render_frame(discs, cfg).to_ppm()).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

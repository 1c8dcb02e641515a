//! Synthetic camera and particle localisation.
//!
//! Frames are rendered from the simulated particle state and read back with
//! a global Otsu threshold followed by connected-component blob detection,
//! standing in for the overhead camera of the physical rig.

use std::io::{BufRead, Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::ParticleState;
use crate::Vec2;

pub const BACKGROUND_GRAY: u8 = 200;
pub const PARTICLE_GRAY: u8 = 60;
/// Smallest blob accepted as a particle, pixels.
pub const MIN_BLOB_AREA: usize = 9;
/// Minimum separation of the two Otsu class means for a detection, gray levels.
pub const MIN_CONTRAST: f64 = 40.0;

/// Pinhole-free orthographic camera looking down on the workspace.
/// Pixel `(0, 0)` is the upper-left corner of the frame; image rows grow
/// towards negative workspace `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    /// mm per pixel
    pub scale: f64,
    /// Workspace point (mm) at the outer corner of pixel `(0, 0)`.
    pub origin: Vec2,
    /// Standard deviation of additive sensor noise, gray levels.
    pub noise_sigma: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            width: 400,
            height: 400,
            scale: 0.025,
            origin: Vec2::new(-5.0, 5.0),
            noise_sigma: 5.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if self.width < 64 || self.height < 64 {
            return Err(Error::Config(
                "camera resolution must be at least 64x64".into(),
            ));
        }
        if !(self.scale > 0.0) || !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(
                "camera scale must be positive and noise non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// Continuous pixel coordinates `(u, v)` of a workspace point.
    pub fn to_pixel(&self, p: Vec2) -> (f64, f64) {
        (
            (p.x - self.origin.x) / self.scale,
            (self.origin.y - p.y) / self.scale,
        )
    }

    pub fn to_workspace(&self, u: f64, v: f64) -> Vec2 {
        Vec2::new(
            self.origin.x + u * self.scale,
            self.origin.y - v * self.scale,
        )
    }

    pub fn in_view(&self, p: Vec2) -> bool {
        let (u, v) = self.to_pixel(p);
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }

    pub fn histogram(&self) -> [u64; 256] {
        let mut h = [0u64; 256];
        for &p in &self.pixels {
            h[p as usize] += 1;
        }
        h
    }

    /// Binary PGM (P5).
    pub fn write_pgm(&self, mut out: impl Write) -> Result<()> {
        write!(out, "P5\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.pixels)?;
        Ok(())
    }

    pub fn read_pgm(input: impl Read) -> Result<Self> {
        let mut input = std::io::BufReader::new(input);
        let mut header = Vec::new();
        // Magic, width, height, maxval; comments start with '#'.
        while header.len() < 4 {
            let mut line = String::new();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::Config("truncated PGM header".into()));
            }
            let line = line.split('#').next().unwrap_or("");
            header.extend(line.split_whitespace().map(str::to_owned));
        }
        let bad = || Error::Config("malformed PGM header".to_string());
        if header[0] != "P5" || header[3] != "255" {
            return Err(bad());
        }
        let width: usize = header[1].parse().map_err(|_| bad())?;
        let height: usize = header[2].parse().map_err(|_| bad())?;
        let mut pixels = vec![0u8; width * height];
        input.read_exact(&mut pixels)?;
        Ok(GrayFrame {
            width,
            height,
            pixels,
        })
    }
}

/// Draw the particle as an anti-aliased dark disk on a noisy bright
/// background. A particle outside the field of view leaves the frame blank.
pub fn render_frame<R: Rng + ?Sized>(
    state: &ParticleState,
    cam: &CameraModel,
    rng: &mut R,
) -> GrayFrame {
    let mut frame = GrayFrame::filled(cam.width, cam.height, BACKGROUND_GRAY);
    let noise = Normal::new(0.0, cam.noise_sigma)
        .ok()
        .filter(|_| cam.noise_sigma > 0.0);
    let visible = cam.in_view(state.position);
    let (cu, cv) = cam.to_pixel(state.position);
    let radius = 0.5 * state.diameter / cam.scale;
    let contrast = PARTICLE_GRAY as f64 - BACKGROUND_GRAY as f64;
    for v in 0..cam.height {
        for u in 0..cam.width {
            let mut value = BACKGROUND_GRAY as f64;
            if visible {
                let d = ((u as f64 + 0.5 - cu).powi(2) + (v as f64 + 0.5 - cv).powi(2)).sqrt();
                let coverage = (radius - d + 0.5).clamp(0.0, 1.0);
                value += contrast * coverage;
            }
            if let Some(n) = &noise {
                value += n.sample(rng);
            }
            frame.pixels[v * cam.width + u] = value.round().clamp(0.0, 255.0) as u8;
        }
    }
    frame
}

/// Histograms whose total reaches this many counts are rejected: the exact
/// between-class comparison would overflow 128 bits.
pub const MAX_HISTOGRAM_TOTAL: u64 = 1 << 19;

/// Between-class variance at threshold `k` (class 0 is levels `<= k`) as an
/// exact fraction `num / den`, up to the common factor `1 / N^2`.
fn between_class(n0: u64, s0: u64, n1: u64, s1: u64) -> (u128, u128) {
    if n0 == 0 || n1 == 0 {
        return (0, 1);
    }
    let diff = (s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128).unsigned_abs();
    (diff * diff, n0 as u128 * n1 as u128)
}

/// Global Otsu threshold. Returns the smallest level maximising the
/// between-class variance; a histogram with a single populated level returns
/// that level.
pub fn otsu_threshold(hist: &[u64; 256]) -> Result<u8> {
    let total: u64 = hist.iter().sum();
    if total == 0 {
        return Err(Error::domain("histogram", "empty histogram"));
    }
    if total >= MAX_HISTOGRAM_TOTAL {
        return Err(Error::domain(
            "histogram",
            format!("total {total} too large"),
        ));
    }
    let mut populated = hist.iter().enumerate().filter(|(_, &c)| c > 0);
    let first = populated.next().map(|(i, _)| i as u8).unwrap_or(0);
    if populated.next().is_none() {
        return Ok(first);
    }
    let sum: u64 = hist.iter().enumerate().map(|(i, &c)| i as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best = 0u8;
    let mut best_val = (0u128, 1u128);
    for (k, &c) in hist.iter().enumerate() {
        n0 += c;
        s0 += k as u64 * c;
        let val = between_class(n0, s0, total - n0, sum - s0);
        if val.0 * best_val.1 > best_val.0 * val.1 {
            best = k as u8;
            best_val = val;
        }
    }
    Ok(best)
}

/// Centroid in workspace mm of the largest 4-connected component of pixels
/// at or below `threshold`, or `None` if that component is smaller than
/// [`MIN_BLOB_AREA`].
pub fn blob_centroid(frame: &GrayFrame, threshold: u8, cam: &CameraModel) -> Option<Vec2> {
    let (w, h) = (frame.width, frame.height);
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut best: Option<(usize, f64, f64)> = None;
    for start in 0..w * h {
        if seen[start] || frame.pixels[start] > threshold {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut area, mut su, mut sv) = (0usize, 0.0, 0.0);
        while let Some(i) = stack.pop() {
            let (u, v) = (i % w, i / w);
            area += 1;
            su += u as f64;
            sv += v as f64;
            let mut visit = |j: usize| {
                if !seen[j] && frame.pixels[j] <= threshold {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w);
            }
            if v + 1 < h {
                visit(i + w);
            }
        }
        if best.is_none_or(|(a, _, _)| area > a) {
            best = Some((area, su, sv));
        }
    }
    let (area, su, sv) = best?;
    if area < MIN_BLOB_AREA {
        return None;
    }
    let n = area as f64;
    Some(cam.to_workspace(su / n + 0.5, sv / n + 0.5))
}

/// Threshold and detect. A frame whose two Otsu classes are closer than
/// [`MIN_CONTRAST`] gray levels is treated as empty, so sensor noise on a
/// blank frame is not mistaken for a particle.
pub fn locate_particle(frame: &GrayFrame, cam: &CameraModel) -> Option<Vec2> {
    let hist = frame.histogram();
    let k = otsu_threshold(&hist).ok()?;
    let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0u64, 0u64, 0u64);
    for (level, &c) in hist.iter().enumerate() {
        if level <= k as usize {
            n0 += c;
            s0 += level as u64 * c;
        } else {
            n1 += c;
            s1 += level as u64 * c;
        }
    }
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let gap = s1 as f64 / n1 as f64 - s0 as f64 / n0 as f64;
    if gap < MIN_CONTRAST {
        return None;
    }
    blob_centroid(frame, k, cam)
}

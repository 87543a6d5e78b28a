//! Perceptual luminance estimation from sRGB frames.
//!
//! The pipeline runs per frame: gamma linearization, CIE 1931 XYZ transform,
//! luminance from the Y row, min-max normalization. Normalized frame maps are
//! then averaged over a clip and pooled into a square grid of cells that
//! serves as the bandit context.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Effective display gamma used by [`linearize`].
pub const DEFAULT_GAMMA: f64 = 2.2;

/// Default grid side length.
pub const DEFAULT_GRID: usize = 12;

/// Frames per capture clip (1 s at 30 fps).
pub const DEFAULT_CLIP_FRAMES: usize = 30;

/// Linear RGB to CIE XYZ, rows X, Y, Z.
pub const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124, 0.3576, 0.1805],
    [0.2126, 0.7152, 0.0722],
    [0.0193, 0.1192, 0.9505],
];

/// An 8-bit sRGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "frame dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A frame filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    /// Builds a frame from packed RGB24 bytes.
    pub fn from_rgb24(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        if bytes.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: width * height * 3,
                actual: bytes.len(),
            });
        }
        let pixels = bytes.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn to_rgb24(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }
}

/// Linear-light RGB frame with components in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFrame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[f64; 3]>,
}

/// Per-pixel luminance values, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LuminanceMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LuminanceMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!(
                "map dimensions must be positive, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: values.len(),
            });
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Mean of the normalized maps of a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipLuminance {
    pub map: LuminanceMap,
    pub frame_count: usize,
}

/// Square grid of mean cell luminances, row-major (`cells[y * n_g + x]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LuminanceGrid {
    n_g: usize,
    cells: Vec<f64>,
}

impl LuminanceGrid {
    pub fn new(n_g: usize, cells: Vec<f64>) -> Result<Self> {
        if n_g < 2 {
            return Err(Error::InvalidInput(format!("grid side must be >= 2, got {n_g}")));
        }
        if cells.len() != n_g * n_g {
            return Err(Error::DimensionMismatch {
                expected: n_g * n_g,
                actual: cells.len(),
            });
        }
        if cells.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("grid cells must lie in [0, 1]".into()));
        }
        Ok(Self { n_g, cells })
    }

    /// Uniform grid, mostly useful in tests.
    pub fn uniform(n_g: usize, value: f64) -> Result<Self> {
        Self::new(n_g, vec![value; n_g * n_g])
    }

    pub fn side(&self) -> usize {
        self.n_g
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.cells[y * self.n_g + x]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.cells.chunks(self.n_g)
    }
}

/// Gamma linearization of every component: `(c / 255)^gamma`.
pub fn linearize(frame: &RgbFrame, gamma: f64) -> LinearFrame {
    let lut: Vec<f64> = (0..=255u32)
        .map(|c| (f64::from(c) / 255.0).powf(gamma))
        .collect();
    let pixels = frame
        .pixels
        .iter()
        .map(|p| [lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]])
        .collect();
    LinearFrame {
        width: frame.width,
        height: frame.height,
        pixels,
    }
}

/// Linear RGB to CIE XYZ.
pub fn to_xyz(rgb: [f64; 3]) -> [f64; 3] {
    let row = |r: &[f64; 3]| r[0] * rgb[0] + r[1] * rgb[1] + r[2] * rgb[2];
    [row(&RGB_TO_XYZ[0]), row(&RGB_TO_XYZ[1]), row(&RGB_TO_XYZ[2])]
}

/// Relative luminance, the Y component of [`to_xyz`].
pub fn pixel_luminance(rgb: [f64; 3]) -> f64 {
    let y = &RGB_TO_XYZ[1];
    y[0] * rgb[0] + y[1] * rgb[1] + y[2] * rgb[2]
}

/// Un-normalized luminance of every pixel.
pub fn luminance_map(frame: &LinearFrame) -> LuminanceMap {
    LuminanceMap {
        width: frame.width,
        height: frame.height,
        values: frame.pixels.iter().map(|&p| pixel_luminance(p)).collect(),
    }
}

/// Min-max normalization over the whole map. A constant map becomes all zeros.
pub fn normalize(raw: &LuminanceMap) -> LuminanceMap {
    let (lo, hi) = raw.min_max();
    let span = hi - lo;
    let values = if span > 0.0 {
        raw.values.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
    } else {
        vec![0.0; raw.values.len()]
    };
    LuminanceMap {
        width: raw.width,
        height: raw.height,
        values,
    }
}

/// Per-pixel mean over the maps of a clip.
pub fn average_clip(maps: &[LuminanceMap]) -> Result<ClipLuminance> {
    let first = maps.first().ok_or(Error::Empty("clip has no frames"))?;
    let mut sum = vec![0.0f64; first.values.len()];
    for map in maps {
        if map.width != first.width || map.height != first.height {
            return Err(Error::InvalidInput(format!(
                "clip frame is {}x{}, expected {}x{}",
                map.width, map.height, first.width, first.height
            )));
        }
        for (acc, v) in sum.iter_mut().zip(&map.values) {
            *acc += v;
        }
    }
    let count = maps.len() as f64;
    let values = sum.into_iter().map(|s| (s / count).clamp(0.0, 1.0)).collect();
    Ok(ClipLuminance {
        map: LuminanceMap {
            width: first.width,
            height: first.height,
            values,
        },
        frame_count: maps.len(),
    })
}

/// Pools a map into an `n_g x n_g` grid. Pixel `(x, y)` falls in cell
/// `(x * n_g / width, y * n_g / height)`.
pub fn discretize(map: &LuminanceMap, n_g: usize) -> Result<LuminanceGrid> {
    if n_g < 2 {
        return Err(Error::InvalidInput(format!("grid side must be >= 2, got {n_g}")));
    }
    if n_g > map.width || n_g > map.height {
        return Err(Error::GridTooLarge {
            n_g,
            width: map.width,
            height: map.height,
        });
    }
    let mut sums = vec![0.0f64; n_g * n_g];
    let mut counts = vec![0usize; n_g * n_g];
    for y in 0..map.height {
        let cy = y * n_g / map.height;
        for x in 0..map.width {
            let cx = x * n_g / map.width;
            sums[cy * n_g + cx] += map.values[y * map.width + x];
            counts[cy * n_g + cx] += 1;
        }
    }
    let cells = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| (s / n as f64).clamp(0.0, 1.0))
        .collect();
    LuminanceGrid::new(n_g, cells)
}

/// The full estimator: frames in, context grid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceEstimator {
    pub gamma: f64,
    pub n_g: usize,
}

impl Default for LuminanceEstimator {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            n_g: DEFAULT_GRID,
        }
    }
}

impl LuminanceEstimator {
    /// Normalized luminance map of one frame.
    pub fn frame_map(&self, frame: &RgbFrame) -> LuminanceMap {
        normalize(&luminance_map(&linearize(frame, self.gamma)))
    }

    pub fn clip(&self, frames: &[RgbFrame]) -> Result<ClipLuminance> {
        let maps: Vec<_> = frames.iter().map(|f| self.frame_map(f)).collect();
        average_clip(&maps)
    }

    pub fn grid(&self, frames: &[RgbFrame]) -> Result<LuminanceGrid> {
        discretize(&self.clip(frames)?.map, self.n_g)
    }
}

//! Synthetic outdoor scenes and random object placement.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bandit::Cell;
use crate::error::{Error, Result};
use crate::luminance::{RgbFrame, DEFAULT_CLIP_FRAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    /// Sky, ground, glare patches and shadows.
    Mixed,
    /// Featureless dark scene.
    UniformDark,
    /// Dark left half, bright right half.
    HalfDarkBright,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        // 1920x1080 scaled by 1/10: same aspect, cheap enough for simulation.
        Self {
            width: 192,
            height: 108,
            frames: DEFAULT_CLIP_FRAMES,
        }
    }
}

struct Blob {
    cx: f64,
    cy: f64,
    radius: f64,
    color: [f64; 3],
}

/// A clip of `config.frames` frames of one static scene with small
/// per-frame exposure flicker and sensor noise.
pub fn generate_clip(kind: SceneKind, config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<RgbFrame>> {
    if config.width == 0 || config.height == 0 || config.frames == 0 {
        return Err(Error::InvalidInput("scene dimensions and frame count must be positive".into()));
    }
    let (w, h) = (config.width, config.height);
    let base = match kind {
        SceneKind::UniformDark => vec![[18.0, 20.0, 22.0]; w * h],
        SceneKind::HalfDarkBright => (0..w * h)
            .map(|i| if i % w < w / 2 { [15.0, 18.0, 16.0] } else { [235.0, 235.0, 230.0] })
            .collect(),
        SceneKind::Mixed => mixed_base(w, h, rng),
    };
    let noisy = kind == SceneKind::Mixed;
    let frames = (0..config.frames)
        .map(|_| {
            let gain = if noisy { 1.0 + rng.random_range(-0.03..0.03) } else { 1.0 };
            let pixels = base
                .iter()
                .map(|px| {
                    let mut out = [0u8; 3];
                    for c in 0..3 {
                        let jitter = if noisy { rng.random_range(-3.0..3.0) } else { 0.0 };
                        out[c] = (px[c] * gain + jitter).round().clamp(0.0, 255.0) as u8;
                    }
                    out
                })
                .collect();
            RgbFrame::new(w, h, pixels)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(frames)
}

fn mixed_base(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 3]> {
    let horizon = rng.random_range(0.25..0.6) * h as f64;
    let tilt = rng.random_range(-0.2..0.2);
    let sky_top = [rng.random_range(150.0..230.0), rng.random_range(180.0..240.0), 250.0];
    let ground = [rng.random_range(40.0..110.0), rng.random_range(50.0..120.0), rng.random_range(30.0..90.0)];
    let mut blobs = Vec::new();
    for _ in 0..rng.random_range(1..4) {
        let v = rng.random_range(220.0..255.0);
        blobs.push(Blob {
            cx: rng.random_range(0.0..w as f64),
            cy: rng.random_range(0.0..h as f64),
            radius: rng.random_range(0.08..0.25) * w as f64,
            color: [v, v, v * 0.95],
        });
    }
    for _ in 0..rng.random_range(2..6) {
        blobs.push(Blob {
            cx: rng.random_range(0.0..w as f64),
            cy: rng.random_range(0.0..h as f64),
            radius: rng.random_range(0.08..0.3) * w as f64,
            color: [rng.random_range(5.0..30.0), rng.random_range(10.0..45.0), rng.random_range(5.0..30.0)],
        });
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let line = horizon + tilt * (xf - w as f64 / 2.0);
            let mut px = if yf < line {
                let t = yf / line.max(1.0);
                [sky_top[0] * (1.0 - 0.2 * t), sky_top[1] * (1.0 - 0.15 * t), sky_top[2] * (1.0 - 0.1 * t)]
            } else {
                let t = (yf - line) / (h as f64 - line).max(1.0);
                [ground[0] * (1.0 - 0.3 * t), ground[1] * (1.0 - 0.3 * t), ground[2] * (1.0 - 0.3 * t)]
            };
            for b in &blobs {
                let d = ((xf - b.cx).powi(2) + (yf - b.cy).powi(2)).sqrt() / b.radius;
                if d < 1.0 {
                    let a = (1.0 - d * d).powf(0.5);
                    for c in 0..3 {
                        px[c] = px[c] * (1.0 - a) + b.color[c] * a;
                    }
                }
            }
            out.push(px);
        }
    }
    out
}

/// `n` distinct cells drawn uniformly from an `n_g x n_g` grid.
pub fn random_objects(n_g: usize, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Cell>> {
    if n > n_g * n_g {
        return Err(Error::InvalidInput(format!("cannot place {n} objects on a {n_g}x{n_g} grid")));
    }
    Ok(index::sample(rng, n_g * n_g, n)
        .into_iter()
        .map(|i| Cell::new(i % n_g, i / n_g))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::luminance::LuminanceEstimator;
    use crate::rng::substream;

    #[test]
    fn mixed_scenes_have_luminance_structure() {
        let cfg = SceneConfig { frames: 3, ..SceneConfig::default() };
        let frames = generate_clip(SceneKind::Mixed, &cfg, &mut substream(4, "scene")).unwrap();
        assert_eq!(frames.len(), 3);
        let grid = LuminanceEstimator::default().grid(&frames).unwrap();
        let (lo, hi) = grid.cells().iter().fold((1.0f64, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi - lo > 0.3, "range {lo}..{hi}");
    }

    #[test]
    fn uniform_dark_scene_normalizes_to_zero() {
        let cfg = SceneConfig { frames: 2, ..SceneConfig::default() };
        let frames = generate_clip(SceneKind::UniformDark, &cfg, &mut substream(4, "scene")).unwrap();
        let grid = LuminanceEstimator::default().grid(&frames).unwrap();
        assert!(grid.cells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objects_are_distinct_and_inside() {
        let objs = random_objects(12, 6, &mut substream(1, "objects")).unwrap();
        assert_eq!(objs.len(), 6);
        for (i, o) in objs.iter().enumerate() {
            assert!(o.x < 12 && o.y < 12);
            assert!(!objs[..i].contains(o));
        }
        assert!(random_objects(2, 5, &mut substream(1, "objects")).is_err());
    }
}

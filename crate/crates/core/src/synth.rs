//! Deterministic synthetic sea-ice scenes with exact ground truth.
//!
//! Each scene is a Voronoi partition into class regions. A region gets a base
//! brightness inside its class value band and per-pixel noise that never
//! leaves the band, so segmenting a clean scene reproduces the truth exactly.
//! Optional haze (blend toward white) and shadow (darkening) blobs are then
//! painted on top until the requested area fraction is covered.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autolabel::render_labels;
use crate::io::{write_image, ImageIoError};
use crate::kernels::GrayRaster;
use crate::raster::{ClassId, LabelMask, SceneRaster};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub count: usize,
    /// Target fraction of each scene covered by haze/shadow blobs.
    pub haze_fraction: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            count: 8,
            haze_fraction: 0.0,
            width: 256,
            height: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlobKind {
    Haze,
    Shadow,
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub scene: SceneRaster,
    pub truth: LabelMask,
    /// 255 where a blob core covers the pixel.
    pub blob_footprint: GrayRaster,
    /// The same scene without any blobs.
    pub clean: SceneRaster,
}

/// Inclusive value band used for each class by the default scheme.
fn class_band(class: ClassId) -> (u8, u8) {
    match class {
        ClassId::ThickIce => (205, 255),
        ClassId::ThinIce => (31, 204),
        ClassId::OpenWater => (0, 30),
    }
}

/// Range from which region base brightness is drawn, inset from the band.
fn base_range(class: ClassId) -> (u8, u8) {
    match class {
        ClassId::ThickIce => (215, 245),
        ClassId::ThinIce => (60, 175),
        ClassId::OpenWater => (6, 22),
    }
}

/// RGB for a given value; blue carries the maximum so HSV value equals `v`.
fn tint(class: ClassId, v: u8) -> [u8; 3] {
    let (r, g) = match class {
        ClassId::ThickIce => (0.94, 0.97),
        ClassId::ThinIce => (0.78, 0.88),
        ClassId::OpenWater => (0.35, 0.60),
    };
    let vf = v as f64;
    [(vf * r) as u8, (vf * g) as u8, v]
}

const NOISE: i32 = 4;

pub fn scene_id(seed: u64, index: usize) -> String {
    format!("synth-{seed}-{index:04}")
}

/// Generates scene `index` of the corpus described by `cfg`.
pub fn generate_scene(cfg: &SynthConfig, index: usize) -> SynthScene {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let (w, h) = (cfg.width, cfg.height);

    let n_regions = rng.gen_range(3..=6);
    let seeds: Vec<(f64, f64, ClassId, u8)> = (0..n_regions)
        .map(|i| {
            // First three regions cover every class; the rest are random.
            let class = if i < 3 {
                ClassId::ALL[i]
            } else {
                ClassId::ALL[rng.gen_range(0..3)]
            };
            let (lo, hi) = base_range(class);
            (
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.0..h as f64),
                class,
                rng.gen_range(lo..=hi),
            )
        })
        .collect();

    let mut clean = SceneRaster::filled(w, h, [0, 0, 0], scene_id(cfg.seed, index));
    let mut truth = LabelMask::filled(w, h, ClassId::ThickIce);
    for y in 0..h {
        for x in 0..w {
            let (_, _, class, base) = seeds
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - x as f64).powi(2) + (a.1 - y as f64).powi(2);
                    let db = (b.0 - x as f64).powi(2) + (b.1 - y as f64).powi(2);
                    da.total_cmp(&db)
                })
                .copied()
                .expect("at least one region");
            let (lo, hi) = class_band(class);
            let v = (base as i32 + rng.gen_range(-NOISE..=NOISE)).clamp(lo as i32, hi as i32) as u8;
            clean.set_pixel(x, y, tint(class, v));
            truth.set(x, y, class);
        }
    }

    let mut scene = clean.clone();
    let mut footprint = GrayRaster::filled(w, h, 0);
    let target = (cfg.haze_fraction.clamp(0.0, 1.0) * (w * h) as f64).round() as usize;
    let mut covered = 0usize;
    while covered < target {
        let cx = rng.gen_range(0..w) as f64;
        let cy = rng.gen_range(0..h) as f64;
        let radius = rng.gen_range(5.0..=11.0);
        let kind = if rng.gen_bool(0.5) { BlobKind::Haze } else { BlobKind::Shadow };
        let strength = rng.gen_range(0.3..=0.4);
        covered += paint_blob(&mut scene, &mut footprint, cx, cy, radius, kind, strength);
    }

    SynthScene {
        scene,
        truth,
        blob_footprint: footprint,
        clean,
    }
}

/// Soft edge width of a blob, in pixels.
const FRINGE: f64 = 2.0;

/// Paints one blob and returns how many pixels newly joined the footprint.
pub fn paint_blob(
    scene: &mut SceneRaster,
    footprint: &mut GrayRaster,
    cx: f64,
    cy: f64,
    radius: f64,
    kind: BlobKind,
    strength: f64,
) -> usize {
    let (w, h) = (scene.width(), scene.height());
    let reach = (radius + FRINGE).ceil() as isize;
    let mut added = 0;
    for y in (cy as isize - reach).max(0)..=(cy as isize + reach).min(h as isize - 1) {
        for x in (cx as isize - reach).max(0)..=(cx as isize + reach).min(w as isize - 1) {
            let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let weight = if d <= radius {
                1.0
            } else if d < radius + FRINGE {
                1.0 - (d - radius) / FRINGE
            } else {
                continue;
            };
            let (x, y) = (x as usize, y as usize);
            let px = scene.pixel(x, y);
            let a = strength * weight;
            let out = px.map(|c| {
                let c = c as f64;
                let v = match kind {
                    BlobKind::Haze => c + a * (255.0 - c),
                    BlobKind::Shadow => c * (1.0 - a),
                };
                v.round().clamp(0.0, 255.0) as u8
            });
            scene.set_pixel(x, y, out);
            if d <= radius {
                let i = y * w + x;
                if footprint.data()[i] == 0 {
                    footprint.data_mut()[i] = 255;
                    added += 1;
                }
            }
        }
    }
    added
}

pub fn generate_corpus(cfg: &SynthConfig) -> Vec<SynthScene> {
    (0..cfg.count).map(|i| generate_scene(cfg, i)).collect()
}

/// Writes `scenes/<id>.png` and `truth/<id>.png` (rendered labels) under `dir`.
pub fn write_corpus(dir: &Path, corpus: &[SynthScene]) -> Result<(), ImageIoError> {
    for s in corpus {
        let id = s.scene.scene_id();
        write_image(&dir.join("scenes").join(format!("{id}.png")), &s.scene)?;
        write_image(&dir.join("truth").join(format!("{id}.png")), &render_labels(&s.truth))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autolabel::{segment, SegmentationScheme};

    fn small(haze: f64) -> SynthConfig {
        SynthConfig {
            seed: 7,
            count: 2,
            haze_fraction: haze,
            width: 96,
            height: 80,
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_scene(&small(0.3), 1);
        let b = generate_scene(&small(0.3), 1);
        assert_eq!(a.scene, b.scene);
        assert_eq!(a.truth, b.truth);
        let c = generate_scene(&small(0.3), 0);
        assert_ne!(a.scene, c.scene);
    }

    #[test]
    fn clean_scene_segments_to_truth() {
        let s = generate_scene(&small(0.0), 0);
        assert_eq!(s.scene, s.clean);
        assert_eq!(segment(&s.scene, &SegmentationScheme::default()), s.truth);
    }

    #[test]
    fn haze_reaches_target_coverage() {
        let s = generate_scene(&small(0.3), 0);
        let covered = s.blob_footprint.data().iter().filter(|&&v| v == 255).count();
        assert!(covered as f64 >= 0.3 * 96.0 * 80.0);
    }
}

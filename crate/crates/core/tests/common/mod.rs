//! Brute-force reference implementations shared by the test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seaice::kernels::GrayRaster;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_gray(rng: &mut impl Rng, w: usize, h: usize) -> GrayRaster {
    // Mix of full-range noise and few-level images so ties and plateaus occur.
    let levels = rng.gen_range(1..=4);
    let data = (0..w * h)
        .map(|_| match levels {
            1 => rng.gen(),
            n => (rng.gen_range(0..n) * 255 / (n - 1)) as u8,
        })
        .collect();
    GrayRaster::from_parts(w, h, data)
}

fn window(img: &GrayRaster, x: usize, y: usize, k: usize) -> Vec<u8> {
    let r = (k / 2) as isize;
    let mut v = Vec::with_capacity(k * k);
    for dy in -r..=r {
        for dx in -r..=r {
            let xx = (x as isize + dx).clamp(0, img.width() as isize - 1) as usize;
            let yy = (y as isize + dy).clamp(0, img.height() as isize - 1) as usize;
            v.push(img.get(xx, yy));
        }
    }
    v
}

fn per_pixel(img: &GrayRaster, f: impl Fn(usize, usize) -> u8) -> GrayRaster {
    let mut out = Vec::with_capacity(img.width() * img.height());
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.push(f(x, y));
        }
    }
    GrayRaster::from_parts(img.width(), img.height(), out)
}

pub fn median(img: &GrayRaster, k: usize) -> GrayRaster {
    per_pixel(img, |x, y| {
        let mut w = window(img, x, y, k);
        w.sort_unstable();
        w[w.len() / 2]
    })
}

pub fn median_masked(img: &GrayRaster, exclude: &GrayRaster, k: usize) -> GrayRaster {
    per_pixel(img, |x, y| {
        let vals = window(img, x, y, k);
        let keep = window(exclude, x, y, k);
        let mut kept: Vec<u8> = vals.iter().zip(&keep).filter(|(_, &m)| m == 0).map(|(&v, _)| v).collect();
        if kept.is_empty() {
            let mut all = vals;
            all.sort_unstable();
            return all[all.len() / 2];
        }
        kept.sort_unstable();
        kept[kept.len() / 2]
    })
}

pub fn dilate(img: &GrayRaster, k: usize) -> GrayRaster {
    per_pixel(img, |x, y| window(img, x, y, k).into_iter().max().unwrap())
}

pub fn erode(img: &GrayRaster, k: usize) -> GrayRaster {
    per_pixel(img, |x, y| window(img, x, y, k).into_iter().min().unwrap())
}

pub fn absdiff(a: &GrayRaster, b: &GrayRaster) -> GrayRaster {
    per_pixel(a, |x, y| (a.get(x, y) as i32 - b.get(x, y) as i32).unsigned_abs() as u8)
}

pub fn threshold_binary(img: &GrayRaster, t: u8) -> GrayRaster {
    per_pixel(img, |x, y| if img.get(x, y) > t { 255 } else { 0 })
}

pub fn threshold_truncate(img: &GrayRaster, t: u8) -> GrayRaster {
    per_pixel(img, |x, y| if img.get(x, y) > t { t } else { img.get(x, y) })
}

pub fn normalize(img: &GrayRaster) -> GrayRaster {
    let min = *img.data().iter().min().unwrap() as f64;
    let max = *img.data().iter().max().unwrap() as f64;
    per_pixel(img, |x, y| {
        if max == min {
            0
        } else {
            (255.0 * (img.get(x, y) as f64 - min) / (max - min)).round() as u8
        }
    })
}

/// Tries every threshold directly on the pixels; class 0 is `<= t`.
pub fn otsu(img: &GrayRaster) -> u8 {
    let px = img.data();
    let total = px.len() as f64;
    let mut best = (0u8, f64::NEG_INFINITY);
    for t in 0..=255u8 {
        let (mut n0, mut s0, mut n1, mut s1) = (0u64, 0u64, 0u64, 0u64);
        for &v in px {
            if v <= t {
                n0 += 1;
                s0 += v as u64;
            } else {
                n1 += 1;
                s1 += v as u64;
            }
        }
        let var = if n0 == 0 || n1 == 0 {
            0.0
        } else {
            let (w0, w1) = (n0 as f64 / total, n1 as f64 / total);
            let (m0, m1) = (s0 as f64 / n0 as f64, s1 as f64 / n1 as f64);
            w0 * w1 * (m0 - m1) * (m0 - m1)
        };
        if var > best.1 {
            best = (t, var);
        }
    }
    best.0
}

/// Textbook HSV in degrees, then halved; every rounding is half away from
/// zero and a halved hue of 180 wraps to 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (rf, gf, bf) = (r as f64, g as f64, b as f64);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let s = if max == 0.0 { 0.0 } else { (255.0 * delta / max).round() };
    let deg = if delta == 0.0 {
        0.0
    } else if max == rf {
        let d = 60.0 * (gf - bf) / delta;
        if d < 0.0 {
            d + 360.0
        } else {
            d
        }
    } else if max == gf {
        60.0 * (bf - rf) / delta + 120.0
    } else {
        60.0 * (rf - gf) / delta + 240.0
    };
    let mut h = (deg / 2.0).round();
    if h >= 180.0 {
        h -= 180.0;
    }
    (h as u8, s as u8, max as u8)
}

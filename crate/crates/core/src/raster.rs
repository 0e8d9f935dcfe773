//! Core raster types, the 8-bit HSV convention, and the class colormap.
//!
//! HSV follows the half-degree byte convention: hue in `0..=179`, saturation
//! and value in `0..=255`. All conversions round half away from zero and are
//! computed in integer arithmetic, so results are bit-exact across platforms.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernels::GrayRaster;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum RasterError {
    #[error("raster dimensions must be positive, got {width}x{height}")]
    EmptyDimensions { width: usize, height: usize },
    #[error("raster data has {actual} samples, expected {expected} for {width}x{height}x{channels}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        actual: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
}

/// An 8-bit, 3-channel RGB raster stored row-major with interleaved samples.
#[derive(Clone, PartialEq, Eq)]
pub struct SceneRaster {
    width: usize,
    height: usize,
    data: Vec<u8>,
    scene_id: String,
}

impl fmt::Debug for SceneRaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SceneRaster")
            .field("scene_id", &self.scene_id)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl SceneRaster {
    pub const CHANNELS: usize = 3;

    pub fn new(
        width: usize,
        height: usize,
        data: Vec<u8>,
        scene_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        let expected = width * height * Self::CHANNELS;
        if data.len() != expected {
            return Err(RasterError::DataLength {
                width,
                height,
                channels: Self::CHANNELS,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
            scene_id: scene_id.into(),
        })
    }

    /// A raster where every pixel has the same color.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3], scene_id: impl Into<String>) -> Self {
        assert!(width > 0 && height > 0, "raster dimensions must be positive");
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self {
            width,
            height,
            data,
            scene_id: scene_id.into(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn scene_id(&self) -> &str {
        &self.scene_id
    }

    pub fn set_scene_id(&mut self, id: impl Into<String>) {
        self.scene_id = id.into();
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl ExactSizeIterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|p| [p[0], p[1], p[2]])
    }

    /// Extracts one color plane (0 = R, 1 = G, 2 = B).
    pub fn channel(&self, c: usize) -> GrayRaster {
        assert!(c < 3, "channel index {c} out of range");
        let data = self.data.iter().skip(c).step_by(3).copied().collect();
        GrayRaster::from_parts(self.width, self.height, data)
    }

    /// Reassembles a raster from three equally sized planes.
    pub fn from_channels(
        planes: [&GrayRaster; 3],
        scene_id: impl Into<String>,
    ) -> Result<Self, RasterError> {
        let (w, h) = (planes[0].width(), planes[0].height());
        for p in &planes[1..] {
            if p.width() != w || p.height() != h {
                return Err(RasterError::DimensionMismatch(w, h, p.width(), p.height()));
            }
        }
        let mut data = Vec::with_capacity(w * h * 3);
        for i in 0..w * h {
            data.extend(planes.iter().map(|p| p.data()[i]));
        }
        Self::new(w, h, data, scene_id)
    }
}

/// Per-pixel HSV triples in the 8-bit convention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HsvRaster {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl HsvRaster {
    /// Builds a raster from HSV triples; hues above 179 are rejected.
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::DataLength {
                width,
                height,
                channels: 1,
                expected: width * height,
                actual: data.len(),
            });
        }
        assert!(
            data.iter().all(|p| p[0] <= MAX_HUE),
            "hue exceeds {MAX_HUE}"
        );
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[u8; 3]] {
        &self.data
    }

    /// The value plane, which carries the brightness signal.
    pub fn value_plane(&self) -> GrayRaster {
        GrayRaster::from_parts(self.width, self.height, self.data.iter().map(|p| p[2]).collect())
    }
}

/// Largest representable hue in the half-degree convention.
pub const MAX_HUE: u8 = 179;

/// Divides `num / den` for nonnegative operands, rounding halves up.
#[inline]
fn div_round(num: u32, den: u32) -> u32 {
    (2 * num + den) / (2 * den)
}

/// Converts one RGB sample to 8-bit HSV.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (u8, u8, u8) {
    let (ri, gi, bi) = (r as i32, g as i32, b as i32);
    let max = ri.max(gi).max(bi);
    let min = ri.min(gi).min(bi);
    let delta = max - min;
    let v = max as u8;
    if max == 0 {
        return (0, 0, 0);
    }
    let s = div_round(255 * delta as u32, max as u32) as u8;
    if delta == 0 {
        return (0, s, v);
    }
    // Hue in half-degrees is 30 * n / delta + base, with base chosen so the
    // total lies in [0, 180).
    let (n, base) = if max == ri {
        let n = gi - bi;
        (n, if n < 0 { 180 } else { 0 })
    } else if max == gi {
        (bi - ri, 60)
    } else {
        (ri - gi, 120)
    };
    let num = 30 * n + base * delta;
    debug_assert!(num >= 0);
    let mut h = div_round(num as u32, delta as u32);
    if h >= 180 {
        h -= 180;
    }
    (h as u8, s, v)
}

/// Converts one 8-bit HSV sample back to RGB.
///
/// Hue quantization to 2° steps bounds the round-trip error: a channel
/// between min and max can move by up to `(max - min) / 60` levels.
pub fn hsv_to_rgb(h: u8, s: u8, v: u8) -> (u8, u8, u8) {
    debug_assert!(h <= MAX_HUE);
    if s == 0 {
        return (v, v, v);
    }
    let vf = v as f64;
    let c = vf * s as f64 / 255.0;
    let hp = (h as f64 * 2.0) / 60.0;
    let x = c * (1.0 - ((hp % 2.0) - 1.0).abs());
    let m = vf - c;
    let (r1, g1, b1) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let q = |f: f64| (f + m).round().clamp(0.0, 255.0) as u8;
    (q(r1), q(g1), q(b1))
}

/// Pixel-wise HSV conversion of a whole raster.
pub fn convert_raster(raster: &SceneRaster) -> HsvRaster {
    let data = raster
        .pixels()
        .map(|[r, g, b]| {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            [h, s, v]
        })
        .collect();
    HsvRaster {
        width: raster.width(),
        height: raster.height(),
        data,
    }
}

/// Surface class assigned to each pixel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum ClassId {
    #[default]
    ThickIce = 0,
    ThinIce = 1,
    OpenWater = 2,
}

impl ClassId {
    /// All classes in precedence order.
    pub const ALL: [ClassId; 3] = [ClassId::ThickIce, ClassId::ThinIce, ClassId::OpenWater];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Render color: thick ice red, thin ice blue, open water green.
    pub fn color(self) -> [u8; 3] {
        match self {
            ClassId::ThickIce => [255, 0, 0],
            ClassId::ThinIce => [0, 0, 255],
            ClassId::OpenWater => [0, 255, 0],
        }
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.color() == rgb)
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::ThickIce => "thick-ice",
            ClassId::ThinIce => "thin-ice",
            ClassId::OpenWater => "open-water",
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One class id per pixel, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    data: Vec<ClassId>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, data: Vec<ClassId>) -> Result<Self, RasterError> {
        if width == 0 || height == 0 {
            return Err(RasterError::EmptyDimensions { width, height });
        }
        if data.len() != width * height {
            return Err(RasterError::DataLength {
                width,
                height,
                channels: 1,
                expected: width * height,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            data: vec![class; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[ClassId] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> ClassId {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: ClassId) {
        self.data[y * self.width + x] = class;
    }

    /// Class indices as bytes (0, 1, 2), the compact wire form.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|c| *c as u8).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Option<Self> {
        let data = bytes
            .iter()
            .map(|&b| ClassId::from_index(b as usize))
            .collect::<Option<Vec<_>>>()?;
        Self::new(width, height, data).ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hsv_reference_points() {
        assert_eq!(rgb_to_hsv(255, 255, 255), (0, 0, 255));
        assert_eq!(rgb_to_hsv(0, 0, 0), (0, 0, 0));
        assert_eq!(rgb_to_hsv(0, 255, 0), (60, 255, 255));
        assert_eq!(rgb_to_hsv(255, 0, 0), (0, 255, 255));
        assert_eq!(rgb_to_hsv(0, 0, 255), (120, 255, 255));
        // 359° wraps to 0 after halving.
        assert_eq!(rgb_to_hsv(255, 0, 1).0, 0);
    }

    #[test]
    fn hsv_inverse_reference_points() {
        assert_eq!(hsv_to_rgb(0, 0, 255), (255, 255, 255));
        assert_eq!(hsv_to_rgb(0, 0, 0), (0, 0, 0));
        assert_eq!(hsv_to_rgb(60, 255, 255), (0, 255, 0));
    }

    #[test]
    fn convert_raster_constant_inputs() {
        let white = SceneRaster::filled(2, 2, [255, 255, 255], "w");
        assert!(convert_raster(&white).data().iter().all(|p| *p == [0, 0, 255]));
        let black = SceneRaster::filled(2, 2, [0, 0, 0], "b");
        assert!(convert_raster(&black).data().iter().all(|p| *p == [0, 0, 0]));
    }

    #[test]
    fn raster_rejects_bad_length() {
        let err = SceneRaster::new(2, 2, vec![0; 11], "x").unwrap_err();
        assert!(matches!(err, RasterError::DataLength { expected: 12, .. }));
        assert!(SceneRaster::new(0, 2, vec![], "x").is_err());
    }

    #[test]
    fn channels_round_trip() {
        let data: Vec<u8> = (0..48).collect();
        let r = SceneRaster::new(4, 4, data, "s").unwrap();
        let planes = [r.channel(0), r.channel(1), r.channel(2)];
        let back = SceneRaster::from_channels([&planes[0], &planes[1], &planes[2]], "s").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn colormap_is_bijective() {
        for c in ClassId::ALL {
            assert_eq!(ClassId::from_color(c.color()), Some(c));
        }
        let colors: std::collections::HashSet<_> = ClassId::ALL.iter().map(|c| c.color()).collect();
        assert_eq!(colors.len(), 3);
    }
}

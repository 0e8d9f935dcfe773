//! Color-range segmentation into thick ice, thin ice and open water.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::kernels::GrayRaster;
use crate::raster::{convert_raster, rgb_to_hsv, ClassId, HsvRaster, LabelMask, SceneRaster, MAX_HUE};

#[derive(Debug, thiserror::Error)]
pub enum SchemeError {
    #[error("scheme must define exactly one range per class, missing {0}")]
    MissingClass(ClassId),
    #[error("class {0} is defined more than once")]
    DuplicateClass(ClassId),
    #[error("range for {class}: lower bound {lower:?} exceeds upper bound {upper:?}")]
    InvertedBounds {
        class: ClassId,
        lower: [u8; 3],
        upper: [u8; 3],
    },
    #[error("value levels {0}..={1} are not covered by any class")]
    ValueGap(u8, u8),
    #[error("unknown scheme preset {0:?}")]
    UnknownPreset(String),
    #[error("reading scheme {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing scheme {path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum LabelError {
    #[error("pixel ({x},{y}) has color {rgb:?} which is not a class color")]
    UnknownColor { x: usize, y: usize, rgb: [u8; 3] },
}

/// Inclusive HSV bounds for one class. Hue bounds above 179 are clamped, so
/// a stated upper hue of 185 means "any hue".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawRange", into = "RawRange")]
pub struct ColorRange {
    class: ClassId,
    lower: [u8; 3],
    upper: [u8; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRange {
    class: ClassId,
    lower: [u16; 3],
    upper: [u16; 3],
}

impl TryFrom<RawRange> for ColorRange {
    type Error = String;

    fn try_from(raw: RawRange) -> Result<Self, Self::Error> {
        let conv = |b: [u16; 3]| -> Result<[u8; 3], String> {
            let h = b[0].min(MAX_HUE as u16) as u8;
            let s = u8::try_from(b[1]).map_err(|_| format!("saturation {} out of range", b[1]))?;
            let v = u8::try_from(b[2]).map_err(|_| format!("value {} out of range", b[2]))?;
            Ok([h, s, v])
        };
        ColorRange::new(raw.class, conv(raw.lower)?, conv(raw.upper)?).map_err(|e| e.to_string())
    }
}

impl From<ColorRange> for RawRange {
    fn from(r: ColorRange) -> Self {
        RawRange {
            class: r.class,
            lower: r.lower.map(u16::from),
            upper: r.upper.map(u16::from),
        }
    }
}

impl ColorRange {
    pub fn new(class: ClassId, lower: [u8; 3], upper: [u8; 3]) -> Result<Self, SchemeError> {
        let lower = [lower[0].min(MAX_HUE), lower[1], lower[2]];
        let upper = [upper[0].min(MAX_HUE), upper[1], upper[2]];
        if (0..3).any(|i| lower[i] > upper[i]) {
            return Err(SchemeError::InvertedBounds { class, lower, upper });
        }
        Ok(Self { class, lower, upper })
    }

    pub fn class(&self) -> ClassId {
        self.class
    }

    pub fn lower(&self) -> [u8; 3] {
        self.lower
    }

    pub fn upper(&self) -> [u8; 3] {
        self.upper
    }

    #[inline]
    pub fn contains(&self, hsv: [u8; 3]) -> bool {
        (0..3).all(|i| self.lower[i] <= hsv[i] && hsv[i] <= self.upper[i])
    }

    #[inline]
    fn contains_value(&self, v: u8) -> bool {
        self.lower[2] <= v && v <= self.upper[2]
    }
}

/// Three color ranges, one per class, stored in precedence order.
///
/// The value intervals must jointly cover `0..=255`. When hue or saturation
/// bounds exclude a pixel from every range, it falls back to the first class
/// whose value interval contains it, so segmentation stays total.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawScheme", into = "RawScheme")]
pub struct SegmentationScheme {
    name: String,
    ranges: [ColorRange; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScheme {
    name: String,
    ranges: Vec<ColorRange>,
}

impl TryFrom<RawScheme> for SegmentationScheme {
    type Error = SchemeError;

    fn try_from(raw: RawScheme) -> Result<Self, Self::Error> {
        SegmentationScheme::new(raw.name, raw.ranges)
    }
}

impl From<SegmentationScheme> for RawScheme {
    fn from(s: SegmentationScheme) -> Self {
        RawScheme {
            name: s.name,
            ranges: s.ranges.to_vec(),
        }
    }
}

pub const DEFAULT_PRESET: &str = "ross-sea-summer";

impl Default for SegmentationScheme {
    fn default() -> Self {
        Self::ross_sea_summer()
    }
}

impl SegmentationScheme {
    pub fn new(name: impl Into<String>, ranges: Vec<ColorRange>) -> Result<Self, SchemeError> {
        let mut slots: [Option<ColorRange>; 3] = [None; 3];
        for r in ranges {
            let slot = &mut slots[r.class.index()];
            if slot.is_some() {
                return Err(SchemeError::DuplicateClass(r.class));
            }
            *slot = Some(r);
        }
        let mut out = Vec::with_capacity(3);
        for (i, slot) in slots.into_iter().enumerate() {
            out.push(slot.ok_or(SchemeError::MissingClass(ClassId::ALL[i]))?);
        }
        let ranges: [ColorRange; 3] = out.try_into().expect("three ranges");

        // Value coverage check over all 256 levels.
        let mut v = 0u16;
        while v < 256 {
            if ranges.iter().any(|r| r.contains_value(v as u8)) {
                v += 1;
                continue;
            }
            let start = v;
            while v < 256 && !ranges.iter().any(|r| r.contains_value(v as u8)) {
                v += 1;
            }
            return Err(SchemeError::ValueGap(start as u8, (v - 1) as u8));
        }
        Ok(Self {
            name: name.into(),
            ranges,
        })
    }

    /// Summer thresholds for the Ross Sea: thick ice V ≥ 205, thin ice
    /// 31..=204, open water ≤ 30, any hue and saturation.
    pub fn ross_sea_summer() -> Self {
        let r = |c, lo: u8, hi: u8| ColorRange::new(c, [0, 0, lo], [185, 255, hi]).unwrap();
        Self::new(
            DEFAULT_PRESET,
            vec![
                r(ClassId::ThickIce, 205, 255),
                r(ClassId::ThinIce, 31, 204),
                r(ClassId::OpenWater, 0, 30),
            ],
        )
        .expect("preset is valid")
    }

    pub fn preset(name: &str) -> Result<Self, SchemeError> {
        match name {
            DEFAULT_PRESET => Ok(Self::ross_sea_summer()),
            other => Err(SchemeError::UnknownPreset(other.to_string())),
        }
    }

    /// Resolves either a preset name or a path to a TOML scheme file.
    pub fn resolve(spec: &str) -> Result<Self, SchemeError> {
        if let Ok(s) = Self::preset(spec) {
            return Ok(s);
        }
        let path = Path::new(spec);
        if !path.exists() {
            return Err(SchemeError::UnknownPreset(spec.to_string()));
        }
        let text = std::fs::read_to_string(path).map_err(|source| SchemeError::Io {
            path: spec.to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| SchemeError::Parse {
            path: spec.to_string(),
            source,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn ranges(&self) -> &[ColorRange; 3] {
        &self.ranges
    }

    pub fn range(&self, class: ClassId) -> &ColorRange {
        &self.ranges[class.index()]
    }

    #[inline]
    pub fn classify(&self, hsv: [u8; 3]) -> ClassId {
        if let Some(r) = self.ranges.iter().find(|r| r.contains(hsv)) {
            return r.class;
        }
        self.ranges
            .iter()
            .find(|r| r.contains_value(hsv[2]))
            .map(|r| r.class)
            .expect("value coverage is validated at construction")
    }
}

/// Binary mask (255 inside) of pixels falling in `range`.
pub fn class_mask(hsv: &HsvRaster, range: &ColorRange) -> GrayRaster {
    let data = hsv
        .data()
        .iter()
        .map(|&p| if range.contains(p) { 255 } else { 0 })
        .collect();
    GrayRaster::from_parts(hsv.width(), hsv.height(), data)
}

/// Assigns every pixel to exactly one class.
pub fn segment(raster: &SceneRaster, scheme: &SegmentationScheme) -> LabelMask {
    let data = raster
        .pixels()
        .map(|[r, g, b]| {
            let (h, s, v) = rgb_to_hsv(r, g, b);
            scheme.classify([h, s, v])
        })
        .collect();
    LabelMask::new(raster.width(), raster.height(), data).expect("dimensions preserved")
}

/// Same result as [`segment`], built by merging per-class masks in
/// precedence order.
pub fn segment_by_masks(raster: &SceneRaster, scheme: &SegmentationScheme) -> LabelMask {
    let hsv = convert_raster(raster);
    let masks: Vec<GrayRaster> = scheme.ranges().iter().map(|r| class_mask(&hsv, r)).collect();
    let data = (0..hsv.data().len())
        .map(|i| {
            masks
                .iter()
                .position(|m| m.data()[i] == 255)
                .map(|k| scheme.ranges()[k].class())
                .unwrap_or_else(|| scheme.classify(hsv.data()[i]))
        })
        .collect();
    LabelMask::new(raster.width(), raster.height(), data).expect("dimensions preserved")
}

/// Paints each class with its render color.
pub fn render_labels(mask: &LabelMask) -> SceneRaster {
    let data = mask.data().iter().flat_map(|c| c.color()).collect();
    SceneRaster::new(mask.width(), mask.height(), data, "labels").expect("dimensions preserved")
}

/// Reads a rendered label image back into classes.
///
/// With `snap` enabled, off-palette pixels take the class whose color is
/// nearest in RGB (ties go to the earlier class); otherwise they are an error.
pub fn parse_labels(raster: &SceneRaster, snap: bool) -> Result<LabelMask, LabelError> {
    let w = raster.width();
    let mut data = Vec::with_capacity(raster.pixel_count());
    for (i, rgb) in raster.pixels().enumerate() {
        let class = match ClassId::from_color(rgb) {
            Some(c) => c,
            None if snap => nearest_class(rgb),
            None => {
                return Err(LabelError::UnknownColor {
                    x: i % w,
                    y: i / w,
                    rgb,
                })
            }
        };
        data.push(class);
    }
    Ok(LabelMask::new(w, raster.height(), data).expect("dimensions preserved"))
}

fn nearest_class(rgb: [u8; 3]) -> ClassId {
    let dist = |c: ClassId| -> u32 {
        c.color()
            .iter()
            .zip(rgb)
            .map(|(&a, b)| (a as i32 - b as i32).pow(2) as u32)
            .sum()
    };
    let mut best = ClassId::ThickIce;
    for c in ClassId::ALL {
        if dist(c) < dist(best) {
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(v: u8) -> SceneRaster {
        SceneRaster::filled(4, 4, [v, v, v], "g")
    }

    #[test]
    fn default_scheme_clamps_hue() {
        let s = SegmentationScheme::default();
        for r in s.ranges() {
            assert_eq!(r.upper()[0], 179);
        }
    }

    #[test]
    fn constant_tiles() {
        let s = SegmentationScheme::default();
        let all = |m: &LabelMask, c| m.data().iter().all(|&x| x == c);
        assert!(all(&segment(&gray(255), &s), ClassId::ThickIce));
        assert!(all(&segment(&gray(0), &s), ClassId::OpenWater));
        assert!(all(&segment(&gray(100), &s), ClassId::ThinIce));
    }

    #[test]
    fn class_mask_thick_ice() {
        let s = SegmentationScheme::default();
        let white = HsvRaster::new(2, 2, vec![[0, 0, 255]; 4]).unwrap();
        let black = HsvRaster::new(2, 2, vec![[0, 0, 0]; 4]).unwrap();
        let thick = s.range(ClassId::ThickIce);
        assert!(class_mask(&white, thick).data().iter().all(|&v| v == 255));
        assert!(class_mask(&black, thick).data().iter().all(|&v| v == 0));
    }

    #[test]
    fn scheme_with_gap_is_rejected() {
        let r = |c, lo: u8, hi: u8| ColorRange::new(c, [0, 0, lo], [179, 255, hi]).unwrap();
        let err = SegmentationScheme::new(
            "gappy",
            vec![
                r(ClassId::ThickIce, 210, 255),
                r(ClassId::ThinIce, 31, 204),
                r(ClassId::OpenWater, 0, 30),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, SchemeError::ValueGap(205, 209)));
    }

    #[test]
    fn scheme_requires_every_class() {
        let r = ColorRange::new(ClassId::ThickIce, [0, 0, 0], [179, 255, 255]).unwrap();
        assert!(matches!(
            SegmentationScheme::new("one", vec![r]),
            Err(SchemeError::MissingClass(ClassId::ThinIce))
        ));
        assert!(matches!(
            SegmentationScheme::new("dup", vec![r, r]),
            Err(SchemeError::DuplicateClass(ClassId::ThickIce))
        ));
    }

    #[test]
    fn overlapping_scheme_uses_precedence() {
        let r = |c, lo: u8, hi: u8| ColorRange::new(c, [0, 0, lo], [179, 255, hi]).unwrap();
        let s = SegmentationScheme::new(
            "overlap",
            vec![
                r(ClassId::OpenWater, 0, 120),
                r(ClassId::ThinIce, 0, 220),
                r(ClassId::ThickIce, 100, 255),
            ],
        )
        .unwrap();
        assert_eq!(s.classify([0, 0, 110]), ClassId::ThickIce);
        assert_eq!(s.classify([0, 0, 90]), ClassId::ThinIce);
    }

    #[test]
    fn hue_restricted_scheme_falls_back_on_value() {
        let s = SegmentationScheme::new(
            "narrow-hue",
            vec![
                ColorRange::new(ClassId::ThickIce, [90, 0, 205], [130, 255, 255]).unwrap(),
                ColorRange::new(ClassId::ThinIce, [0, 0, 31], [179, 255, 204]).unwrap(),
                ColorRange::new(ClassId::OpenWater, [0, 0, 0], [179, 255, 30]).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(s.classify([10, 50, 230]), ClassId::ThickIce);
    }

    #[test]
    fn render_and_parse() {
        let m = LabelMask::new(3, 1, vec![ClassId::ThickIce, ClassId::ThinIce, ClassId::OpenWater]).unwrap();
        let img = render_labels(&m);
        assert_eq!(img.pixel(0, 0), [255, 0, 0]);
        assert_eq!(img.pixel(2, 0), [0, 255, 0]);
        assert_eq!(parse_labels(&img, false).unwrap(), m);
    }

    #[test]
    fn parse_snapping() {
        let mut img = SceneRaster::filled(2, 2, [0, 0, 255], "l");
        img.set_pixel(1, 0, [250, 5, 5]);
        let m = parse_labels(&img, true).unwrap();
        assert_eq!(m.get(1, 0), ClassId::ThickIce);

        img.set_pixel(1, 0, [255, 0, 0]);
        img.set_pixel(0, 1, [128, 128, 128]);
        let err = parse_labels(&img, false).unwrap_err();
        assert_eq!(
            err,
            LabelError::UnknownColor {
                x: 0,
                y: 1,
                rgb: [128, 128, 128]
            }
        );
    }

    #[test]
    fn scheme_serde_accepts_hue_185() {
        let text = r#"
name = "custom"
[[ranges]]
class = "thick-ice"
lower = [0, 0, 205]
upper = [185, 255, 255]
[[ranges]]
class = "thin-ice"
lower = [0, 0, 31]
upper = [185, 255, 204]
[[ranges]]
class = "open-water"
lower = [0, 0, 0]
upper = [185, 255, 30]
"#;
        let s: SegmentationScheme = toml::from_str(text).unwrap();
        assert_eq!(s.range(ClassId::ThickIce).upper(), [179, 255, 255]);
        let again: SegmentationScheme = toml::from_str(&toml::to_string(&s).unwrap()).unwrap();
        assert_eq!(again, s);
    }
}

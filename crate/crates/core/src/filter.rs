//! Thin cloud and shadow filter.
//!
//! The filter works in two stages. Detection compares a denoised brightness
//! plane against a large-window background estimate; pixels whose deviation
//! stands out (Otsu on the normalized difference, with an absolute contrast
//! floor) form the affected mask. Correction then replaces, on masked pixels
//! only, the local level of each channel by the background level:
//!
//! ```text
//! corrected(p) = clamp(c(p) - local_c(p) + bg_c(p), 0, 255)
//! ```
//!
//! where `local_c` is the small-window median and `bg_c` the background.
//! Unmasked pixels are copied verbatim, so V-band segmentation of clear
//! pixels is unaffected.

use serde::{Deserialize, Serialize};

use crate::kernels::{self, GrayRaster, KernelError};
use crate::raster::{convert_raster, SceneRaster};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FilterError {
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    Otsu,
    Fixed(u8),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Optional max-filter applied before the background median. Off by
    /// default: it shifts bright class boundaries outward.
    pub bg_dilate_k: Option<usize>,
    pub bg_median_k: usize,
    pub noise_median_k: usize,
    pub mask_mode: MaskMode,
    /// Minimum raw brightness deviation (V levels) a pixel needs to be
    /// considered affected, whatever Otsu picks on the normalized image.
    pub min_contrast: u8,
    /// Optional pre-clamp of the difference image before normalization.
    pub truncate: Option<u8>,
    /// Optional opening (erode, then dilate) of the thresholded mask. Drops
    /// the slivers flagged at sharp region corners, which are the filter's
    /// main source of damage on clean or lightly hazed scenes, but also
    /// trims blob edges. Off by default.
    pub mask_open_k: Option<usize>,
    /// Optional dilation of the final mask to cover soft blob fringes.
    pub mask_grow_k: Option<usize>,
    /// Re-estimate the background with affected pixels filled in.
    pub refine: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            bg_dilate_k: None,
            bg_median_k: 31,
            noise_median_k: 3,
            mask_mode: MaskMode::Otsu,
            min_contrast: 16,
            truncate: None,
            mask_open_k: None,
            mask_grow_k: Some(5),
            refine: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let windows = [
            ("bg_dilate_k", self.bg_dilate_k),
            ("bg_median_k", Some(self.bg_median_k)),
            ("noise_median_k", Some(self.noise_median_k)),
            ("mask_open_k", self.mask_open_k),
            ("mask_grow_k", self.mask_grow_k),
        ];
        for (name, k) in windows {
            if let Some(k) = k {
                if k < 3 || k % 2 == 0 {
                    return Err(FilterError::Config(format!(
                        "{name} = {k} must be odd and at least 3"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub filtered: SceneRaster,
    /// 255 marks an affected pixel.
    pub cloud_shadow_mask: GrayRaster,
    pub affected_fraction: f64,
}

/// Large-scale illumination estimate of one plane: optional dilation, then a
/// wide median.
pub fn estimate_background(channel: &GrayRaster, cfg: &FilterConfig) -> Result<GrayRaster, FilterError> {
    let base = match cfg.bg_dilate_k {
        Some(k) => kernels::dilate(channel, k)?,
        None => channel.clone(),
    };
    Ok(kernels::median_blur(&base, cfg.bg_median_k)?)
}

fn mask_from_planes(local: &GrayRaster, background: &GrayRaster, cfg: &FilterConfig) -> Result<GrayRaster, FilterError> {
    let mut diff = kernels::absdiff(local, background)?;
    if let Some(t) = cfg.truncate {
        diff = kernels::threshold_truncate(&diff, t);
    }
    let dmin = diff.data().iter().copied().min().unwrap_or(0) as u32;
    let dmax = diff.data().iter().copied().max().unwrap_or(0) as u32;
    let normalized = kernels::minmax_normalize(&diff);
    let t = match cfg.mask_mode {
        MaskMode::Otsu => kernels::otsu_threshold(&normalized),
        MaskMode::Fixed(t) => t,
    };
    // The contrast floor is expressed in the normalized scale so that the
    // binary threshold still runs on the normalized plane.
    let floor = cfg.min_contrast as u32;
    let t = if floor == 0 {
        t
    } else if dmax < floor || dmax == dmin {
        255
    } else {
        let floor_n = if floor <= dmin {
            0
        } else {
            // Largest normalized level whose raw value is still below the floor.
            let span = dmax - dmin;
            let below = floor - 1 - dmin;
            ((2 * 255 * below + span) / (2 * span)).min(255)
        };
        t.max(floor_n as u8)
    };
    let mut mask = kernels::threshold_binary(&normalized, t);
    if let Some(k) = cfg.mask_open_k {
        mask = kernels::dilate(&kernels::erode(&mask, k)?, k)?;
    }
    if let Some(k) = cfg.mask_grow_k {
        if mask.data().iter().any(|&v| v != 0) {
            mask = kernels::dilate(&mask, k)?;
        }
    }
    Ok(mask)
}

/// Background of `plane` re-estimated from unaffected pixels only, so blobs
/// do not drag the median.
fn clear_background(plane: &GrayRaster, mask: &GrayRaster, cfg: &FilterConfig) -> Result<GrayRaster, FilterError> {
    if mask.data().iter().all(|&v| v == 0) {
        return estimate_background(plane, cfg);
    }
    let base = match cfg.bg_dilate_k {
        Some(k) => kernels::dilate(plane, k)?,
        None => plane.clone(),
    };
    Ok(kernels::median_blur_masked(&base, mask, cfg.bg_median_k)?)
}

/// Detects thin cloud and shadow pixels from the brightness (HSV value) plane.
pub fn detect_mask(raster: &SceneRaster, cfg: &FilterConfig) -> Result<GrayRaster, FilterError> {
    cfg.validate()?;
    let gray = convert_raster(raster).value_plane();
    let local = kernels::median_blur(&gray, cfg.noise_median_k)?;
    let background = estimate_background(&gray, cfg)?;
    let mask = mask_from_planes(&local, &background, cfg)?;
    if cfg.refine && mask.data().iter().any(|&v| v != 0) {
        let background = clear_background(&gray, &mask, cfg)?;
        return mask_from_planes(&local, &background, cfg);
    }
    Ok(mask)
}

/// Detects affected pixels and corrects them channel by channel.
pub fn apply_filter(raster: &SceneRaster, cfg: &FilterConfig) -> Result<FilterOutput, FilterError> {
    let mask = detect_mask(raster, cfg)?;
    let affected = mask.data().iter().filter(|&&v| v == 255).count();
    let affected_fraction = affected as f64 / raster.pixel_count() as f64;
    if affected == 0 {
        return Ok(FilterOutput {
            filtered: raster.clone(),
            cloud_shadow_mask: mask,
            affected_fraction,
        });
    }

    let mut planes = [raster.channel(0), raster.channel(1), raster.channel(2)];
    for plane in planes.iter_mut() {
        let local = kernels::median_blur(plane, cfg.noise_median_k)?;
        let background = if cfg.refine {
            clear_background(plane, &mask, cfg)?
        } else {
            estimate_background(plane, cfg)?
        };
        let out = plane.data_mut();
        for (i, px) in out.iter_mut().enumerate() {
            if mask.data()[i] == 255 {
                let v = *px as i32 - local.data()[i] as i32 + background.data()[i] as i32;
                *px = v.clamp(0, 255) as u8;
            }
        }
    }
    let filtered = SceneRaster::from_channels([&planes[0], &planes[1], &planes[2]], raster.scene_id())
        .expect("planes share dimensions");
    Ok(FilterOutput {
        filtered,
        cloud_shadow_mask: mask,
        affected_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_raster_is_untouched() {
        let r = SceneRaster::filled(40, 40, [200, 210, 220], "u");
        let out = apply_filter(&r, &FilterConfig::default()).unwrap();
        assert_eq!(out.filtered, r);
        assert_eq!(out.affected_fraction, 0.0);
        assert!(out.cloud_shadow_mask.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn background_of_constant_is_constant() {
        let g = GrayRaster::filled(40, 40, 93);
        let cfg = FilterConfig {
            bg_dilate_k: Some(7),
            ..FilterConfig::default()
        };
        assert_eq!(estimate_background(&g, &cfg).unwrap(), g);
    }

    #[test]
    fn rejects_even_windows() {
        let cfg = FilterConfig {
            bg_median_k: 20,
            ..FilterConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(FilterError::Config(_))));
        let r = SceneRaster::filled(40, 40, [1, 2, 3], "u");
        assert!(apply_filter(&r, &cfg).is_err());
    }

    #[test]
    fn raster_smaller_than_window_is_an_error() {
        let r = SceneRaster::filled(16, 16, [1, 2, 3], "small");
        let err = apply_filter(&r, &FilterConfig::default()).unwrap_err();
        assert!(matches!(err, FilterError::Kernel(KernelError::WindowTooLarge { .. })));
    }

    #[test]
    fn config_serde_round_trip() {
        let cfg = FilterConfig {
            mask_mode: MaskMode::Fixed(40),
            truncate: Some(128),
            ..FilterConfig::default()
        };
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(toml::from_str::<FilterConfig>(&text).unwrap(), cfg);
    }
}

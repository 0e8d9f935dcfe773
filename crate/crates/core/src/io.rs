//! PNG codec boundary and the run directory layout.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, ImageFormat, RgbImage};

use crate::raster::SceneRaster;

#[derive(Debug, thiserror::Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Decode {
        path: PathBuf,
        source: image::ImageError,
    },
    #[error("{path}: unsupported format {found}; expected 8-bit RGB PNG")]
    Unsupported { path: PathBuf, found: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// How to treat single-channel inputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GrayPolicy {
    #[default]
    Reject,
    /// Replicate the gray sample into all three channels.
    Promote,
}

fn describe(color: ColorType) -> String {
    let bits = color.bits_per_pixel() / color.channel_count() as u16;
    format!("{color:?} ({bits}-bit, {} channel(s))", color.channel_count())
}

/// Reads an 8-bit RGB (or RGBA, alpha dropped) PNG. The scene id is the
/// file stem.
pub fn read_image(path: &Path) -> Result<SceneRaster, ImageIoError> {
    read_image_with(path, GrayPolicy::Reject)
}

pub fn read_image_with(path: &Path, gray: GrayPolicy) -> Result<SceneRaster, ImageIoError> {
    let bytes = fs::read(path).map_err(|source| ImageIoError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let img = image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|source| {
        ImageIoError::Decode {
            path: path.to_path_buf(),
            source,
        }
    })?;
    let unsupported = |color: ColorType| ImageIoError::Unsupported {
        path: path.to_path_buf(),
        found: describe(color),
    };
    let color = img.color();
    let rgb: RgbImage = match color {
        ColorType::Rgb8 => img.into_rgb8(),
        ColorType::Rgba8 => {
            log::warn!("{}: dropping alpha channel", path.display());
            img.into_rgb8()
        }
        ColorType::L8 | ColorType::La8 if gray == GrayPolicy::Promote => img.into_rgb8(),
        other => return Err(unsupported(other)),
    };
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (w, h) = rgb.dimensions();
    SceneRaster::new(w as usize, h as usize, rgb.into_raw(), stem).map_err(|e| ImageIoError::Unsupported {
        path: path.to_path_buf(),
        found: e.to_string(),
    })
}

pub fn write_image(path: &Path, raster: &SceneRaster) -> Result<(), ImageIoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| ImageIoError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
    }
    let img = RgbImage::from_raw(raster.width() as u32, raster.height() as u32, raster.data().to_vec())
        .expect("raster buffer matches its dimensions");
    img.save_with_format(path, ImageFormat::Png)
        .map_err(|source| ImageIoError::Decode {
            path: path.to_path_buf(),
            source,
        })
}

/// Lists `*.png` files in `dir`, sorted by name.
pub fn list_pngs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    out.sort();
    Ok(out)
}

/// `<root>/run/<run_id>/{tiles,filtered,labels,reports}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(out_dir: &Path, run_id: &str) -> Self {
        Self {
            root: out_dir.join("run").join(run_id),
        }
    }

    pub fn tiles(&self) -> PathBuf {
        self.root.join("tiles")
    }

    pub fn filtered(&self) -> PathBuf {
        self.root.join("filtered")
    }

    pub fn labels(&self) -> PathBuf {
        self.root.join("labels")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.toml")
    }

    pub fn create(&self) -> std::io::Result<()> {
        for d in [self.tiles(), self.filtered(), self.labels(), self.reports()] {
            fs::create_dir_all(d)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, ImageBuffer, Rgb};

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<u8> = (0..5 * 3 * 3).map(|i| (i * 37 % 256) as u8).collect();
        let r = SceneRaster::new(5, 3, data, "scene-a").unwrap();
        let p = dir.path().join("scene-a.png");
        write_image(&p, &r).unwrap();
        assert_eq!(read_image(&p).unwrap(), r);
    }

    #[test]
    fn sixteen_bit_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("deep.png");
        let img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_pixel(4, 4, Rgb([1000u16, 2, 3]));
        img.save_with_format(&p, ImageFormat::Png).unwrap();
        let err = read_image(&p).unwrap_err();
        assert!(err.to_string().contains("16"), "{err}");
    }

    #[test]
    fn grayscale_policy() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gray.png");
        GrayImage::from_pixel(3, 3, image::Luma([90])).save(&p).unwrap();
        assert!(matches!(read_image(&p), Err(ImageIoError::Unsupported { .. })));
        let r = read_image_with(&p, GrayPolicy::Promote).unwrap();
        assert!(r.pixels().all(|px| px == [90, 90, 90]));
    }

    #[test]
    fn alpha_is_stripped() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rgba.png");
        image::RgbaImage::from_pixel(2, 2, image::Rgba([1, 2, 3, 4])).save(&p).unwrap();
        let r = read_image(&p).unwrap();
        assert!(r.pixels().all(|px| px == [1, 2, 3]));
    }

    #[test]
    fn layout_paths() {
        let l = RunLayout::new(Path::new("/tmp/out"), "r1");
        assert_eq!(l.labels(), PathBuf::from("/tmp/out/run/r1/labels"));
    }
}

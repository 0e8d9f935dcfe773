//! Auto-labeling of polar sea-ice satellite tiles.
//!
//! The pipeline filters thin clouds and shadows, segments each pixel into
//! thick ice, thin ice or open water by HSV value bands, and runs the
//! per-tile work sequentially, on a local worker pool, or across TCP workers
//! with a master that reassembles results. Metrics compare label masks with
//! a confusion matrix, per-class rates and SSIM.

pub mod autolabel;
pub mod cli;
pub mod engine;
pub mod filter;
pub mod io;
pub mod kernels;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod synth;
pub mod tiling;

pub use autolabel::{segment, ColorRange, SegmentationScheme};
pub use engine::{EngineMode, JobOutput, JobSpec, PhaseTiming, PipelineConfig, SceneInput};
pub use filter::{apply_filter, FilterConfig, FilterOutput};
pub use kernels::GrayRaster;
pub use raster::{ClassId, HsvRaster, LabelMask, SceneRaster};
pub use tiling::{Tile, TileGrid};

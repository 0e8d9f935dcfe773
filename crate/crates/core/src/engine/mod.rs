//! Per-tile execution in three interchangeable modes.
//!
//! A job has three phases. *Load* decodes input scenes and cuts them into
//! tiles. *Map* runs filter then segmentation on every tile. *Reduce*
//! reassembles results by tile index and stitches whole-scene outputs.
//! Sequential, local-pool and master/worker runs of the same job produce
//! identical labels and filtered rasters; only the timings differ.

pub mod bench;
pub mod master;
pub mod protocol;
pub mod worker;

use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::autolabel::{segment, SegmentationScheme};
use crate::filter::{apply_filter, FilterConfig};
use crate::io::read_image;
use crate::raster::{LabelMask, SceneRaster};
use crate::tiling::{split_scene, stitch_labels, stitch_scene, Tile, TileGrid, DEFAULT_TILE_SIZE};

pub use master::{Master, MasterOptions};
pub use worker::{run_worker, WorkerOptions, WorkerSummary};

pub const DEFAULT_CHUNK_SIZE: usize = 8;

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("invalid job: {0}")]
    Config(String),
    #[error("no workers connected within {0:?}")]
    NoWorkers(Duration),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("connection to master lost after {attempts} reconnect attempts: {last}")]
    ConnectionLost { attempts: u32, last: String },
    #[error("worker aborted after {0} task(s)")]
    Aborted(usize),
}

impl EngineError {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        EngineError::Io {
            context: context.into(),
            source,
        }
    }
}

/// One scene to process, either on disk or already decoded.
#[derive(Clone, Debug)]
pub enum SceneInput {
    Path(PathBuf),
    Raster(SceneRaster),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EngineMode {
    Sequential,
    Local { workers: usize },
    /// Listen on `bind` and farm tasks out to connecting workers.
    Master { bind: String },
}

impl EngineMode {
    pub fn label(&self) -> &'static str {
        match self {
            EngineMode::Sequential => "sequential",
            EngineMode::Local { .. } => "local",
            EngineMode::Master { .. } => "master",
        }
    }
}

/// Filter and segmentation settings shipped to every worker.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub scheme: SegmentationScheme,
}

impl PipelineConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("pipeline config serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }
}

#[derive(Clone, Debug)]
pub struct JobSpec {
    pub inputs: Vec<SceneInput>,
    pub config: PipelineConfig,
    pub mode: EngineMode,
    pub tile_size: usize,
    pub chunk_size: usize,
    /// Threads used for decoding inputs in the load phase.
    pub io_workers: usize,
}

impl JobSpec {
    pub fn new(inputs: Vec<SceneInput>, config: PipelineConfig, mode: EngineMode) -> Self {
        let io_workers = match mode {
            EngineMode::Local { workers } => workers,
            _ => 1,
        };
        Self {
            inputs,
            config,
            mode,
            tile_size: DEFAULT_TILE_SIZE,
            chunk_size: DEFAULT_CHUNK_SIZE,
            io_workers,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if self.chunk_size == 0 {
            return Err(EngineError::Config("chunk_size must be at least 1".into()));
        }
        if self.tile_size == 0 {
            return Err(EngineError::Config("tile_size must be at least 1".into()));
        }
        if let EngineMode::Local { workers: 0 } = self.mode {
            return Err(EngineError::Config("workers must be at least 1".into()));
        }
        self.config
            .filter
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub load_seconds: f64,
    pub map_seconds: f64,
    pub reduce_seconds: f64,
    pub tiles_processed: usize,
    pub workers: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileProduct {
    pub labels: LabelMask,
    pub filtered: SceneRaster,
    pub affected_fraction: f64,
    pub micros: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TileOutcome {
    pub index: usize,
    pub scene_id: String,
    pub grid_row: usize,
    pub grid_col: usize,
    pub result: Result<TileProduct, String>,
}

impl TileOutcome {
    fn new(index: usize, tile: &Tile, result: Result<TileProduct, String>) -> Self {
        Self {
            index,
            scene_id: tile.scene_id.clone(),
            grid_row: tile.grid_row,
            grid_col: tile.grid_col,
            result,
        }
    }
}

/// Stitched outputs of one scene; absent when any of its tiles failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneOutput {
    pub grid: TileGrid,
    pub labels: Option<LabelMask>,
    pub filtered: Option<SceneRaster>,
}

#[derive(Clone, Debug)]
pub struct LoadFailure {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct JobOutput {
    pub tiles: Vec<TileOutcome>,
    pub scenes: Vec<SceneOutput>,
    pub load_failures: Vec<LoadFailure>,
    pub timing: PhaseTiming,
}

impl JobOutput {
    pub fn failed_tiles(&self) -> impl Iterator<Item = &TileOutcome> {
        self.tiles.iter().filter(|t| t.result.is_err())
    }

    pub fn is_complete(&self) -> bool {
        self.load_failures.is_empty() && self.failed_tiles().next().is_none()
    }

    /// Label bytes of every tile in index order; failed tiles contribute
    /// nothing. Used to compare runs across modes.
    pub fn label_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for t in &self.tiles {
            if let Ok(p) = &t.result {
                out.extend_from_slice(&p.labels.to_bytes());
            }
        }
        out
    }
}

/// The per-tile map function.
pub trait TileProcessor: Sync {
    fn process(&self, tile: &Tile) -> Result<TileProduct, String>;
}

impl TileProcessor for PipelineConfig {
    fn process(&self, tile: &Tile) -> Result<TileProduct, String> {
        process_tile(tile, self)
    }
}

/// Filters one tile and segments the filtered raster.
pub fn process_tile(tile: &Tile, cfg: &PipelineConfig) -> Result<TileProduct, String> {
    let start = Instant::now();
    let out = apply_filter(&tile.raster, &cfg.filter).map_err(|e| format!("tile {}: {e}", tile.file_stem()))?;
    let labels = segment(&out.filtered, &cfg.scheme);
    Ok(TileProduct {
        labels,
        filtered: out.filtered,
        affected_fraction: out.affected_fraction,
        micros: start.elapsed().as_micros() as u64,
    })
}

fn panic_message(p: &(dyn Any + Send)) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".into()
    }
}

/// Runs the processor on one tile, retrying once if it panics.
fn guarded<P: TileProcessor + ?Sized>(p: &P, tile: &Tile) -> Result<TileProduct, String> {
    let mut last = String::new();
    for attempt in 0..2 {
        match catch_unwind(AssertUnwindSafe(|| p.process(tile))) {
            Ok(r) => return r,
            Err(e) => {
                last = panic_message(e.as_ref());
                log::warn!("tile {} panicked (attempt {}): {last}", tile.file_stem(), attempt + 1);
            }
        }
    }
    Err(format!("tile {} panicked twice: {last}", tile.file_stem()))
}

/// Map phase over already loaded tiles with `workers` threads pulling
/// chunks of `chunk_size` tiles. Outcomes are returned in tile order.
pub fn map_tiles<P: TileProcessor + ?Sized>(
    tiles: &[Tile],
    processor: &P,
    workers: usize,
    chunk_size: usize,
) -> Vec<TileOutcome> {
    let workers = workers.max(1);
    let chunk_size = chunk_size.max(1);
    if workers == 1 {
        return tiles
            .iter()
            .enumerate()
            .map(|(i, t)| TileOutcome::new(i, t, guarded(processor, t)))
            .collect();
    }
    let n_chunks = tiles.len().div_ceil(chunk_size);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Result<TileProduct, String>)>();
    let mut slots: Vec<Option<Result<TileProduct, String>>> = vec![None; tiles.len()];
    std::thread::scope(|s| {
        for _ in 0..workers.min(n_chunks) {
            let tx = tx.clone();
            let next = &next;
            s.spawn(move || loop {
                let c = next.fetch_add(1, Ordering::Relaxed);
                if c >= n_chunks {
                    break;
                }
                let lo = c * chunk_size;
                let hi = (lo + chunk_size).min(tiles.len());
                for (i, t) in tiles[lo..hi].iter().enumerate() {
                    if tx.send((lo + i, guarded(processor, t))).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        for (i, r) in rx {
            slots[i] = Some(r);
        }
    });
    tiles
        .iter()
        .zip(slots)
        .enumerate()
        .map(|(i, (t, r))| TileOutcome::new(i, t, r.expect("every tile reported")))
        .collect()
}

pub(crate) struct Loaded {
    pub tiles: Vec<Tile>,
    pub grids: Vec<TileGrid>,
    pub failures: Vec<LoadFailure>,
}

/// Load phase: decode inputs (in parallel over `io_workers`) and split them
/// into tiles. Tile indices follow input order, then row-major order.
pub(crate) fn load(inputs: &[SceneInput], tile_size: usize, io_workers: usize) -> Loaded {
    let split = |input: &SceneInput| -> Result<(Vec<Tile>, TileGrid), LoadFailure> {
        let fail = |path: PathBuf, reason: String| LoadFailure { path, reason };
        let scene = match input {
            SceneInput::Path(p) => read_image(p).map_err(|e| fail(p.clone(), e.to_string()))?,
            SceneInput::Raster(r) => r.clone(),
        };
        split_scene(&scene, tile_size).map_err(|e| {
            let path = match input {
                SceneInput::Path(p) => p.clone(),
                SceneInput::Raster(r) => PathBuf::from(r.scene_id()),
            };
            fail(path, e.to_string())
        })
    };

    let workers = io_workers.clamp(1, inputs.len().max(1));
    let results: Vec<Result<(Vec<Tile>, TileGrid), LoadFailure>> = if workers == 1 {
        inputs.iter().map(split).collect()
    } else {
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<_>> = (0..inputs.len()).map(|_| None).collect();
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|s| {
            for _ in 0..workers {
                let tx = tx.clone();
                let next = &next;
                let split = &split;
                s.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= inputs.len() {
                        break;
                    }
                    let _ = tx.send((i, split(&inputs[i])));
                });
            }
            drop(tx);
            for (i, r) in rx {
                slots[i] = Some(r);
            }
        });
        slots.into_iter().map(|r| r.expect("every input loaded")).collect()
    };

    let mut loaded = Loaded {
        tiles: Vec::new(),
        grids: Vec::new(),
        failures: Vec::new(),
    };
    for r in results {
        match r {
            Ok((tiles, grid)) => {
                loaded.tiles.extend(tiles);
                loaded.grids.push(grid);
            }
            Err(f) => {
                log::error!("{}: {}", f.path.display(), f.reason);
                loaded.failures.push(f);
            }
        }
    }
    loaded
}

/// Reduce phase: stitches each scene whose tiles all succeeded.
pub(crate) fn reduce(tiles: &[TileOutcome], grids: &[TileGrid]) -> Vec<SceneOutput> {
    let mut offset = 0;
    grids
        .iter()
        .map(|grid| {
            let own = &tiles[offset..offset + grid.tile_count()];
            offset += grid.tile_count();
            let ok: Option<Vec<&TileProduct>> = own.iter().map(|t| t.result.as_ref().ok()).collect();
            let (labels, filtered) = match ok {
                Some(products) => {
                    let label_tiles: Vec<(usize, usize, LabelMask)> = own
                        .iter()
                        .zip(&products)
                        .map(|(t, p)| (t.grid_row, t.grid_col, p.labels.clone()))
                        .collect();
                    let raster_tiles: Vec<Tile> = own
                        .iter()
                        .zip(&products)
                        .map(|(t, p)| {
                            let mut r = p.filtered.clone();
                            r.set_scene_id(&t.scene_id);
                            Tile::new(r, t.grid_row, t.grid_col)
                        })
                        .collect();
                    (
                        stitch_labels(&label_tiles, grid).ok(),
                        stitch_scene(&raster_tiles, grid).ok(),
                    )
                }
                None => (None, None),
            };
            SceneOutput {
                grid: grid.clone(),
                labels,
                filtered,
            }
        })
        .collect()
}

fn finish(loaded: Loaded, tiles: Vec<TileOutcome>, mut timing: PhaseTiming) -> JobOutput {
    let start = Instant::now();
    let scenes = reduce(&tiles, &loaded.grids);
    timing.reduce_seconds += start.elapsed().as_secs_f64();
    timing.tiles_processed = tiles.iter().filter(|t| t.result.is_ok()).count();
    JobOutput {
        tiles,
        scenes,
        load_failures: loaded.failures,
        timing,
    }
}

/// Processes every tile in row-major order on the calling thread.
pub fn run_sequential(job: &JobSpec) -> Result<JobOutput, EngineError> {
    run_local_with(job, 1)
}

/// Processes tiles on a pool of `workers` threads.
pub fn run_local(job: &JobSpec, workers: usize) -> Result<JobOutput, EngineError> {
    if workers == 0 {
        return Err(EngineError::Config("workers must be at least 1".into()));
    }
    run_local_with(job, workers)
}

fn run_local_with(job: &JobSpec, workers: usize) -> Result<JobOutput, EngineError> {
    job.validate()?;
    let start = Instant::now();
    let io_workers = if workers == 1 { 1 } else { job.io_workers.max(1) };
    let loaded = load(&job.inputs, job.tile_size, io_workers);
    let load_seconds = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let tiles = map_tiles(&loaded.tiles, &job.config, workers, job.chunk_size);
    let map_seconds = start.elapsed().as_secs_f64();

    let timing = PhaseTiming {
        load_seconds,
        map_seconds,
        workers,
        ..PhaseTiming::default()
    };
    Ok(finish(loaded, tiles, timing))
}

/// Runs a job in the mode it names. Master mode blocks until all tiles are
/// back from workers.
pub fn run(job: &JobSpec) -> Result<JobOutput, EngineError> {
    match &job.mode {
        EngineMode::Sequential => run_sequential(job),
        EngineMode::Local { workers } => run_local(job, *workers),
        EngineMode::Master { bind } => Master::bind(bind)?.run(job, &MasterOptions::default()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn white(size: usize) -> SceneInput {
        SceneInput::Raster(SceneRaster::filled(size, size, [255, 255, 255], "white"))
    }

    #[test]
    fn white_tile_is_thick_ice() {
        let job = JobSpec::new(vec![white(256)], PipelineConfig::default(), EngineMode::Sequential);
        let out = run_sequential(&job).unwrap();
        assert_eq!(out.tiles.len(), 1);
        let p = out.tiles[0].result.as_ref().unwrap();
        assert!(p.labels.data().iter().all(|&c| c == crate::ClassId::ThickIce));
        assert_eq!(out.timing.tiles_processed, 1);
    }

    #[test]
    fn empty_job() {
        let job = JobSpec::new(vec![], PipelineConfig::default(), EngineMode::Sequential);
        let out = run_sequential(&job).unwrap();
        assert!(out.tiles.is_empty());
        assert!(out.scenes.is_empty());
        assert!(out.is_complete());
    }

    #[test]
    fn more_workers_than_tiles() {
        let job = JobSpec::new(vec![white(256)], PipelineConfig::default(), EngineMode::Local { workers: 8 });
        let seq = run_sequential(&job).unwrap();
        let par = run_local(&job, 8).unwrap();
        assert_eq!(seq.label_bytes(), par.label_bytes());
    }

    struct Flaky {
        calls: AtomicUsize,
    }

    impl TileProcessor for Flaky {
        fn process(&self, tile: &Tile) -> Result<TileProduct, String> {
            // Every tile panics on its first attempt; tile (0,1) always does.
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if tile.grid_col == 1 || n % 2 == 0 {
                panic!("injected");
            }
            process_tile(tile, &PipelineConfig::default())
        }
    }

    #[test]
    fn panics_are_retried_once_then_recorded() {
        let scene = SceneRaster::filled(64, 32, [255, 255, 255], "s");
        let (tiles, _) = split_scene(&scene, 32).unwrap();
        let p = Flaky {
            calls: AtomicUsize::new(0),
        };
        let out = map_tiles(&tiles, &p, 1, 1);
        assert_eq!(out.len(), 2);
        assert!(out[1].result.as_ref().unwrap_err().contains("panicked twice"));
        assert!(out[0].result.is_ok());
    }
}

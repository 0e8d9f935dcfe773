//! Runs a job, records it in a manifest, and reads the manifest back.
//!
//!     cargo run --release --example run_manifest -- [out-dir]

use std::path::PathBuf;

use seaice::engine::run;
use seaice::manifest::{read_manifest, write_manifest, EngineSettings, OutputPaths, RunManifest};
use seaice::synth::{generate_corpus, SynthConfig};
use seaice::{EngineMode, JobSpec, PipelineConfig, SceneInput};

fn main() -> anyhow::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "run/example".into()));
    let corpus = generate_corpus(&SynthConfig {
        count: 2,
        haze_fraction: 0.3,
        ..SynthConfig::default()
    });
    let inputs = corpus.into_iter().map(|s| SceneInput::Raster(s.scene)).collect();
    let config = PipelineConfig::default();
    let job = JobSpec::new(inputs, config.clone(), EngineMode::Local { workers: 2 });
    let out = run(&job)?;

    let mut m = RunManifest {
        run_id: "example".into(),
        inputs: Vec::new(),
        truth: None,
        filter: config.filter,
        scheme: config.scheme,
        engine: EngineSettings {
            mode: job.mode.label().into(),
            workers: out.timing.workers,
            chunk_size: job.chunk_size,
            tile_size: job.tile_size,
            bind: None,
        },
        outputs: OutputPaths {
            root: root.clone(),
            filtered: root.join("filtered"),
            labels: root.join("labels"),
            reports: root.join("reports"),
        },
        timing: out.timing,
        scenes: Vec::new(),
        tiles: Vec::new(),
        extra: toml::Table::new(),
    };
    m.record(&out);
    let path = root.join("manifest.toml");
    write_manifest(&path, &m)?;
    let back = read_manifest(&path)?;
    println!("{}: {} tiles recorded, equal after reading back: {}", path.display(), back.tiles.len(), back == m);
    Ok(())
}

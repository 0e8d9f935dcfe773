//! The whole pipeline through the engine, sequentially and on a local pool,
//! with phase timings.
//!
//!     cargo run --release --example local_pool -- [workers] [scenes]

use seaice::engine::{run_local, run_sequential};
use seaice::synth::{generate_corpus, SynthConfig};
use seaice::{EngineMode, JobSpec, PipelineConfig, SceneInput};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let workers = args.next().transpose()?.unwrap_or(4);
    let count = args.next().transpose()?.unwrap_or(8);
    let corpus = generate_corpus(&SynthConfig {
        count,
        haze_fraction: 0.3,
        width: 512,
        height: 512,
        ..SynthConfig::default()
    });
    let inputs = corpus.into_iter().map(|s| SceneInput::Raster(s.scene)).collect();
    let job = JobSpec::new(inputs, PipelineConfig::default(), EngineMode::Local { workers });

    let seq = run_sequential(&job)?;
    let par = run_local(&job, workers)?;
    for (name, out) in [("sequential", &seq), ("local", &par)] {
        let t = out.timing;
        println!(
            "{name:<10} workers {} tiles {}  load {:.3}s map {:.3}s reduce {:.3}s",
            t.workers, t.tiles_processed, t.load_seconds, t.map_seconds, t.reduce_seconds
        );
    }
    println!("labels identical: {}", seq.label_bytes() == par.label_bytes());
    Ok(())
}

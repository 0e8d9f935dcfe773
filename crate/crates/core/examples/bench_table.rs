//! Load/map/reduce timings and speedups for sequential, local and loopback
//! distributed runs, printed as a table and as CSV.
//!
//!     cargo run --release --example bench_table -- [scenes]

use seaice::engine::bench::{bench, format_table, write_csv, BenchVariant};
use seaice::synth::{generate_corpus, SynthConfig};
use seaice::{PipelineConfig, SceneInput};

fn main() -> anyhow::Result<()> {
    let count: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(4);
    let corpus = generate_corpus(&SynthConfig {
        count,
        haze_fraction: 0.3,
        width: 512,
        height: 512,
        ..SynthConfig::default()
    });
    let inputs: Vec<SceneInput> = corpus.into_iter().map(|s| SceneInput::Raster(s.scene)).collect();
    let variants = [
        BenchVariant::Sequential,
        BenchVariant::Local { workers: 2 },
        BenchVariant::Local { workers: 4 },
        BenchVariant::Distributed { workers: 1, cores: 1 },
        BenchVariant::Distributed { workers: 2, cores: 2 },
    ];
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    println!("{cores} core(s) available");
    let rows = bench(&inputs, &PipelineConfig::default(), &variants, 8)?;
    print!("{}", format_table(&rows));
    println!();
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}

//! A master and several workers over loopback TCP, one of which drops out
//! after its first task. The job still finishes with every tile once.
//!
//!     cargo run --release --example distributed -- [workers]

use std::thread;

use seaice::engine::{run_sequential, run_worker, Master, MasterOptions, WorkerOptions};
use seaice::synth::{generate_corpus, SynthConfig};
use seaice::{EngineMode, JobSpec, PipelineConfig, SceneInput};

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let corpus = generate_corpus(&SynthConfig {
        count: 4,
        haze_fraction: 0.3,
        width: 512,
        height: 512,
        ..SynthConfig::default()
    });
    let inputs = corpus.into_iter().map(|s| SceneInput::Raster(s.scene)).collect();
    let mut job = JobSpec::new(inputs, PipelineConfig::default(), EngineMode::Sequential);
    job.chunk_size = 2;

    let master = Master::bind("127.0.0.1:0")?;
    let addr = master.local_addr().to_string();
    println!("master on {addr}");
    let workers: Vec<_> = (0..n)
        .map(|i| {
            let opts = WorkerOptions {
                worker_id: format!("w{i}"),
                abort_after_tasks: (i == 0).then_some(2),
                ..WorkerOptions::default()
            };
            let addr = addr.clone();
            thread::spawn(move || (opts.worker_id.clone(), run_worker(&addr, &opts)))
        })
        .collect();

    let out = master.run(&job, &MasterOptions::default())?;
    for h in workers {
        match h.join().unwrap() {
            (id, Ok(s)) => println!("{id}: {} tasks, {} tiles", s.tasks, s.tiles),
            (id, Err(e)) => println!("{id}: {e}"),
        }
    }
    let t = out.timing;
    println!("{} tiles, map {:.3}s reduce {:.3}s", t.tiles_processed, t.map_seconds, t.reduce_seconds);
    println!("same labels as sequential: {}", run_sequential(&job)?.label_bytes() == out.label_bytes());
    Ok(())
}

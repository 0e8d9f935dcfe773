//! Writes a seeded synthetic corpus (scenes plus truth labels) to disk.
//!
//!     cargo run --example synth_corpus -- <out-dir> [count] [haze-fraction]

use std::path::PathBuf;

use seaice::synth::{generate_corpus, write_corpus, SynthConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "corpus".into()));
    let count = args.next().map(|a| a.parse()).transpose()?.unwrap_or(4);
    let haze_fraction = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.3);
    let cfg = SynthConfig {
        count,
        haze_fraction,
        ..SynthConfig::default()
    };
    let corpus = generate_corpus(&cfg);
    write_corpus(&out, &corpus)?;
    for s in &corpus {
        let covered = s.blob_footprint.data().iter().filter(|&&p| p != 0).count();
        println!(
            "{}  blob cores {:.1}%",
            s.scene.scene_id(),
            100.0 * covered as f64 / s.scene.pixel_count() as f64
        );
    }
    println!("{} scenes under {}", corpus.len(), out.display());
    Ok(())
}

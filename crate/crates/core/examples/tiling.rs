//! Splitting a scene into 256x256 tiles and stitching it back.
//!
//!     cargo run --example tiling -- [width] [height]

use seaice::synth::{generate_scene, SynthConfig};
use seaice::tiling::{split_scene, stitch_scene};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>());
    let width = args.next().transpose()?.unwrap_or(2048);
    let height = args.next().transpose()?.unwrap_or(width);
    let cfg = SynthConfig {
        width,
        height,
        ..SynthConfig::default()
    };
    let scene = generate_scene(&cfg, 0).scene;

    let (tiles, grid) = split_scene(&scene, 256)?;
    println!("{}x{} -> {} tiles ({} rows x {} cols)", width, height, tiles.len(), grid.rows, grid.cols);
    println!("first {}, last {}", tiles[0].file_stem(), tiles[tiles.len() - 1].file_stem());
    println!("grid sidecar:\n{}", toml::to_string(&grid)?);

    let back = stitch_scene(&tiles, &grid)?;
    assert_eq!(back, scene);
    println!("stitched scene is identical");
    Ok(())
}

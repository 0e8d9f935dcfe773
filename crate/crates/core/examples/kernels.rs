//! The image kernels behind the filter, on the value plane of a hazy scene:
//! median background, difference, normalization and an Otsu threshold.
//!
//!     cargo run --example kernels

use seaice::kernels::{absdiff, dilate, median_blur, minmax_normalize, otsu_threshold, threshold_binary};
use seaice::raster::convert_raster;
use seaice::synth::{generate_scene, SynthConfig};

fn main() -> anyhow::Result<()> {
    let cfg = SynthConfig {
        haze_fraction: 0.3,
        ..SynthConfig::default()
    };
    let scene = generate_scene(&cfg, 0);
    let v = convert_raster(&scene.scene).value_plane();

    let local = median_blur(&v, 3)?;
    let background = median_blur(&v, 31)?;
    let diff = minmax_normalize(&absdiff(&local, &background)?);
    let t = otsu_threshold(&diff);
    let mask = dilate(&threshold_binary(&diff, t), 5)?;

    let on = |g: &seaice::GrayRaster| g.data().iter().filter(|&&p| p != 0).count();
    let blob = on(&scene.blob_footprint);
    let caught = mask
        .data()
        .iter()
        .zip(scene.blob_footprint.data())
        .filter(|&(&m, &b)| m != 0 && b != 0)
        .count();
    println!("otsu threshold on normalized difference: {t}");
    println!("mask covers {} px; blob cores {blob} px, {caught} of them masked", on(&mask));
    Ok(())
}

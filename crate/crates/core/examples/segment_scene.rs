//! HSV segmentation of one image (or a generated scene) into the three ice
//! classes, with the label map written next to it.
//!
//!     cargo run --example segment_scene -- [scene.png] [labels.png]

use std::path::PathBuf;

use seaice::autolabel::{render_labels, segment, SegmentationScheme};
use seaice::io::{read_image, write_image};
use seaice::raster::rgb_to_hsv;
use seaice::synth::{generate_scene, SynthConfig};
use seaice::ClassId;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let scene = match args.next() {
        Some(p) => read_image(&PathBuf::from(p))?,
        None => generate_scene(&SynthConfig::default(), 0).scene,
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("labels.png"));

    let scheme = SegmentationScheme::default();
    for r in scheme.ranges() {
        println!("{:<10} HSV {:?}..{:?}", r.class().name(), r.lower(), r.upper());
    }
    let [r, g, b] = scene.pixel(0, 0);
    println!("pixel (0,0) rgb ({r},{g},{b}) -> hsv {:?}", rgb_to_hsv(r, g, b));

    let labels = segment(&scene, &scheme);
    let n = labels.data().len() as f64;
    for c in [ClassId::ThickIce, ClassId::ThinIce, ClassId::OpenWater] {
        let k = labels.data().iter().filter(|&&l| l == c).count();
        println!("{:<10} {:6.2}%", c.name(), 100.0 * k as f64 / n);
    }
    write_image(&out, &render_labels(&labels))?;
    println!("wrote {}", out.display());
    Ok(())
}

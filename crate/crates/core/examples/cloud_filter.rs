//! Filters a hazy synthetic corpus and compares segmentation accuracy before
//! and after filtering.
//!
//!     cargo run --release --example cloud_filter -- [scenes] [haze-fraction] [bg-window]

use seaice::autolabel::{segment, SegmentationScheme};
use seaice::filter::{apply_filter, FilterConfig};
use seaice::metrics::{confusion, report, ConfusionMatrix};
use seaice::synth::{generate_scene, SynthConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(16);
    let haze: f64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(0.3);
    let synth = SynthConfig {
        seed: 42,
        count,
        haze_fraction: haze,
        ..SynthConfig::default()
    };
    let scheme = SegmentationScheme::default();
    let mut cfg = FilterConfig::default();
    if let Some(k) = args.next() {
        cfg.bg_median_k = k.parse()?;
    }

    let (mut before, mut after) = (ConfusionMatrix::default(), ConfusionMatrix::default());
    for i in 0..count {
        let s = generate_scene(&synth, i);
        let out = apply_filter(&s.scene, &cfg)?;
        let raw = confusion(&segment(&s.scene, &scheme), &s.truth)?;
        let fil = confusion(&segment(&out.filtered, &scheme), &s.truth)?;
        if count <= 16 {
            println!(
                "{}  affected {:5.1}%  accuracy {:.4} -> {:.4}",
                s.scene.scene_id(),
                100.0 * out.affected_fraction,
                report(&raw)?.accuracy,
                report(&fil)?.accuracy
            );
        }
        before.add(&raw);
        after.add(&fil);
    }
    println!("\noriginal:\n{}{}", before, report(&before)?);
    println!("filtered:\n{}{}", after, report(&after)?);
    Ok(())
}

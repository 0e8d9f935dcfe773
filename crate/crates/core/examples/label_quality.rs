//! Confusion matrix, per-class metrics and SSIM for auto-labels of a hazy
//! scene against ground truth.
//!
//!     cargo run --release --example label_quality

use seaice::autolabel::{render_labels, segment, SegmentationScheme};
use seaice::metrics::{confusion, report, ssim};
use seaice::synth::{generate_scene, SynthConfig};

fn main() -> anyhow::Result<()> {
    let cfg = SynthConfig {
        haze_fraction: 0.3,
        ..SynthConfig::default()
    };
    let s = generate_scene(&cfg, 3);
    let labels = segment(&s.scene, &SegmentationScheme::default());

    let cm = confusion(&labels, &s.truth)?;
    let mut r = report(&cm)?;
    r.ssim = Some(ssim(&render_labels(&labels), &render_labels(&s.truth))?);
    print!("{cm}\n{r}");
    r.write_csv(std::io::stdout())?;
    Ok(())
}

//! Label quality metrics: confusion matrix, per-class rates and SSIM.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::raster::{ClassId, LabelMask, SceneRaster};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("confusion matrix is empty")]
    Empty,
    #[error("image {0}x{1} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall(usize, usize),
}

/// Pixel counts indexed `[predicted][reference]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 3]; 3],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..3).map(|i| self.counts[i][i]).sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (row, orow) in self.counts.iter_mut().zip(&other.counts) {
            for (c, o) in row.iter_mut().zip(orow) {
                *c += o;
            }
        }
    }

    /// Each column (reference class) scaled to percentages. Columns with no
    /// reference pixels are all zero.
    pub fn column_percentages(&self) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for r in 0..3 {
            let col: u64 = (0..3).map(|p| self.counts[p][r]).sum();
            if col == 0 {
                continue;
            }
            for p in 0..3 {
                out[p][r] = 100.0 * self.counts[p][r] as f64 / col as f64;
            }
        }
        out
    }
}

impl fmt::Display for ConfusionMatrix {
    /// Column-percentage layout: rows are predictions, columns references.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pct = self.column_percentages();
        write!(f, "{:>16}", "pred \\ ref")?;
        for c in ClassId::ALL {
            write!(f, "{:>12}", c.name())?;
        }
        writeln!(f)?;
        for p in ClassId::ALL {
            write!(f, "{:>16}", p.name())?;
            for r in 0..3 {
                write!(f, "{:>11.2}%", pct[p.index()][r])?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

pub fn confusion(pred: &LabelMask, reference: &LabelMask) -> Result<ConfusionMatrix, MetricsError> {
    if pred.width() != reference.width() || pred.height() != reference.height() {
        return Err(MetricsError::DimensionMismatch(
            pred.width(),
            pred.height(),
            reference.width(),
            reference.height(),
        ));
    }
    let mut cm = ConfusionMatrix::default();
    for (p, r) in pred.data().iter().zip(reference.data()) {
        cm.counts[p.index()][r.index()] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: ClassId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub pixels: u64,
    pub ssim: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Derives accuracy and per-class rates. Zero denominators yield 0, and
/// absent classes still count toward the macro averages.
pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let per_class: Vec<ClassMetrics> = ClassId::ALL
        .iter()
        .map(|&c| {
            let i = c.index();
            let tp = cm.counts[i][i];
            let predicted: u64 = cm.counts[i].iter().sum();
            let actual: u64 = (0..3).map(|p| cm.counts[p][i]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, actual);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / 3.0;
    Ok(MetricsReport {
        accuracy: ratio(cm.correct(), total),
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        pixels: total,
        ssim: None,
    })
}

impl MetricsReport {
    pub const CSV_HEADER: [&'static str; 5] = ["scope", "precision", "recall", "f1", "accuracy"];

    /// One row per class plus a macro row; accuracy and SSIM sit on the
    /// macro row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header: Vec<&str> = Self::CSV_HEADER.to_vec();
        header.push("ssim");
        wtr.write_record(&header)?;
        for m in &self.per_class {
            wtr.write_record([
                m.class.name().to_string(),
                format!("{:.6}", m.precision),
                format!("{:.6}", m.recall),
                format!("{:.6}", m.f1),
                String::new(),
                String::new(),
            ])?;
        }
        wtr.write_record([
            "macro".to_string(),
            format!("{:.6}", self.macro_precision),
            format!("{:.6}", self.macro_recall),
            format!("{:.6}", self.macro_f1),
            format!("{:.6}", self.accuracy),
            self.ssim.map(|s| format!("{s:.6}")).unwrap_or_default(),
        ])?;
        wtr.flush()?;
        Ok(())
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pixels:   {}", self.pixels)?;
        writeln!(f, "accuracy: {:.4}", self.accuracy)?;
        for m in &self.per_class {
            writeln!(
                f,
                "{:<11} precision {:.4}  recall {:.4}  f1 {:.4}",
                m.class.name(),
                m.precision,
                m.recall,
                m.f1
            )?;
        }
        writeln!(
            f,
            "{:<11} precision {:.4}  recall {:.4}  f1 {:.4}",
            "macro", self.macro_precision, self.macro_recall, self.macro_f1
        )?;
        if let Some(s) = self.ssim {
            writeln!(f, "ssim:     {s:.4}")?;
        }
        Ok(())
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
pub const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Normalized 11×11 Gaussian window, row-major.
pub fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / sum).collect();
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for a in &g {
        for b in &g {
            w.push(a * b);
        }
    }
    w
}

fn ssim_plane(a: &[f64], b: &[f64], width: usize, height: usize, window: &[f64]) -> f64 {
    let n = SSIM_WINDOW;
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=height - n {
        for x0 in 0..=width - n {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            for dy in 0..n {
                let row = (y0 + dy) * width + x0;
                for dx in 0..n {
                    let wgt = window[dy * n + dx];
                    mu_a += wgt * a[row + dx];
                    mu_b += wgt * b[row + dx];
                }
            }
            let (mut var_a, mut var_b, mut cov) = (0.0, 0.0, 0.0);
            for dy in 0..n {
                let row = (y0 + dy) * width + x0;
                for dx in 0..n {
                    let wgt = window[dy * n + dx];
                    let da = a[row + dx] - mu_a;
                    let db = b[row + dx] - mu_b;
                    var_a += wgt * da * da;
                    var_b += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2);
            acc += num / den;
            count += 1;
        }
    }
    acc / count as f64
}

/// Single-scale SSIM averaged over valid window positions and then over
/// the three channels.
pub fn ssim(a: &SceneRaster, b: &SceneRaster) -> Result<f64, MetricsError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(MetricsError::DimensionMismatch(a.width(), a.height(), b.width(), b.height()));
    }
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.width(), a.height()));
    }
    let window = gaussian_window();
    let mut total = 0.0;
    for c in 0..3 {
        let pa: Vec<f64> = a.channel(c).data().iter().map(|&v| v as f64).collect();
        let pb: Vec<f64> = b.channel(c).data().iter().map(|&v| v as f64).collect();
        total += ssim_plane(&pa, &pb, a.width(), a.height(), &window);
    }
    Ok(total / 3.0)
}

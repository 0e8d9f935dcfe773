//! Speedup tables over engine variants.

use std::io::Write;
use std::thread;

use serde::Serialize;

use super::{run_local, run_sequential, run_worker, EngineError, EngineMode, JobSpec, Master, MasterOptions, PhaseTiming, PipelineConfig, SceneInput, WorkerOptions};

pub const BENCH_HEADER: [&str; 8] = [
    "mode",
    "workers",
    "cores",
    "load_s",
    "map_s",
    "reduce_s",
    "speedup_load",
    "speedup_reduce",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchVariant {
    Sequential,
    Local { workers: usize },
    /// Master plus `workers` loopback workers with `cores` threads each.
    Distributed { workers: usize, cores: usize },
}

impl BenchVariant {
    fn mode(&self) -> &'static str {
        match self {
            BenchVariant::Sequential => "sequential",
            BenchVariant::Local { .. } => "local",
            BenchVariant::Distributed { .. } => "distributed",
        }
    }

    fn shape(&self) -> (usize, usize) {
        match *self {
            BenchVariant::Sequential => (1, 1),
            BenchVariant::Local { workers } => (workers, 1),
            BenchVariant::Distributed { workers, cores } => (workers, cores),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub mode: String,
    pub workers: usize,
    pub cores: usize,
    pub load_s: f64,
    pub map_s: f64,
    pub reduce_s: f64,
    pub speedup_load: f64,
    pub speedup_reduce: f64,
}

fn ratio(base: f64, this: f64) -> f64 {
    if this > 0.0 {
        base / this
    } else {
        0.0
    }
}

/// Runs one variant on `inputs` and returns its phase timings.
pub fn time_variant(
    inputs: &[SceneInput],
    config: &PipelineConfig,
    variant: BenchVariant,
    chunk_size: usize,
) -> Result<PhaseTiming, EngineError> {
    let mut job = JobSpec::new(inputs.to_vec(), config.clone(), EngineMode::Sequential);
    job.chunk_size = chunk_size;
    let out = match variant {
        BenchVariant::Sequential => run_sequential(&job)?,
        BenchVariant::Local { workers } => {
            job.io_workers = workers;
            run_local(&job, workers)?
        }
        BenchVariant::Distributed { workers, cores } => {
            let master = Master::bind("127.0.0.1:0")?;
            let addr = master.local_addr().to_string();
            job.io_workers = workers;
            let handles: Vec<_> = (0..workers)
                .map(|i| {
                    let addr = addr.clone();
                    let opts = WorkerOptions {
                        worker_id: format!("bench-{i}"),
                        cores,
                        ..WorkerOptions::default()
                    };
                    thread::spawn(move || run_worker(&addr, &opts))
                })
                .collect();
            let out = master.run(&job, &MasterOptions::default());
            for h in handles {
                let _ = h.join();
            }
            out?
        }
    };
    Ok(out.timing)
}

/// Times every variant in order and fills in speedups (see [`add_speedups`]).
pub fn bench(
    inputs: &[SceneInput],
    config: &PipelineConfig,
    variants: &[BenchVariant],
    chunk_size: usize,
) -> Result<Vec<BenchRow>, EngineError> {
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let t = time_variant(inputs, config, v, chunk_size)?;
        let (workers, cores) = v.shape();
        log::info!("{} {workers}x{cores}: map {:.3}s", v.mode(), t.map_seconds);
        rows.push(BenchRow {
            mode: v.mode().to_string(),
            workers,
            cores,
            load_s: t.load_seconds,
            map_s: t.map_seconds,
            reduce_s: t.reduce_seconds,
            speedup_load: 0.0,
            speedup_reduce: 0.0,
        });
    }
    add_speedups(&mut rows);
    Ok(rows)
}

/// Speedups relative to the 1-worker/1-core row of the same mode, or to the
/// first row of that mode when it has none. Sequential and local rows share a
/// baseline since their phases mean the same thing; distributed runs count
/// result collection as reduce time and are only compared with each other.
pub fn add_speedups(rows: &mut [BenchRow]) {
    let family = |mode: &str| if mode == "distributed" { "distributed" } else { "local" };
    let bases: Vec<Option<BenchRow>> = rows
        .iter()
        .map(|r| {
            let same = |b: &&BenchRow| family(&b.mode) == family(&r.mode);
            rows.iter()
                .filter(same)
                .find(|b| b.workers == 1 && b.cores == 1)
                .or_else(|| rows.iter().find(same))
                .cloned()
        })
        .collect();
    for (r, base) in rows.iter_mut().zip(bases) {
        let base = base.expect("a row is its own fallback");
        r.speedup_load = ratio(base.load_s, r.load_s);
        r.speedup_reduce = ratio(base.reduce_s, r.reduce_s);
    }
}

pub fn write_csv<W: Write>(rows: &[BenchRow], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(BENCH_HEADER)?;
    for r in rows {
        out.write_record([
            r.mode.clone(),
            r.workers.to_string(),
            r.cores.to_string(),
            format!("{:.6}", r.load_s),
            format!("{:.6}", r.map_s),
            format!("{:.6}", r.reduce_s),
            format!("{:.3}", r.speedup_load),
            format!("{:.3}", r.speedup_reduce),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text table with the same columns as the CSV.
pub fn format_table(rows: &[BenchRow]) -> String {
    let mut s = format!(
        "{:<12} {:>7} {:>5} {:>9} {:>9} {:>9} {:>12} {:>14}\n",
        "mode", "workers", "cores", "load_s", "map_s", "reduce_s", "speedup_load", "speedup_reduce"
    );
    for r in rows {
        s += &format!(
            "{:<12} {:>7} {:>5} {:>9.3} {:>9.3} {:>9.3} {:>12.2} {:>14.2}\n",
            r.mode, r.workers, r.cores, r.load_s, r.map_s, r.reduce_s, r.speedup_load, r.speedup_reduce
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_schema() {
        let rows = vec![BenchRow {
            mode: "sequential".into(),
            workers: 1,
            cores: 1,
            load_s: 0.5,
            map_s: 2.0,
            reduce_s: 0.25,
            speedup_load: 0.0,
            speedup_reduce: 0.0,
        }];
        let mut rows = rows;
        let row = |mode: &str, workers, cores, reduce_s| BenchRow {
            mode: mode.into(),
            workers,
            cores,
            load_s: 0.5,
            map_s: 1.0,
            reduce_s,
            speedup_load: 0.0,
            speedup_reduce: 0.0,
        };
        rows.push(row("local", 4, 1, 0.125));
        rows.push(row("distributed", 1, 1, 8.0));
        rows.push(row("distributed", 4, 4, 0.5));
        add_speedups(&mut rows);
        assert_eq!(rows[0].speedup_load, 1.0);
        assert_eq!(rows[0].speedup_reduce, 1.0);
        assert_eq!(rows[1].speedup_reduce, 2.0);
        assert_eq!(rows[2].speedup_reduce, 1.0);
        assert_eq!(rows[3].speedup_reduce, 16.0);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "mode,workers,cores,load_s,map_s,reduce_s,speedup_load,speedup_reduce"
        );
    }
}

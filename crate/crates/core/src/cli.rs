//! The `seaice` command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure or when some tiles
//! failed, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::autolabel::{parse_labels, render_labels, segment, SegmentationScheme, DEFAULT_PRESET};
use crate::engine::bench::{bench, format_table, write_csv, BenchVariant};
use crate::engine::{self, EngineMode, JobSpec, Master, MasterOptions, PipelineConfig, SceneInput, WorkerOptions};
use crate::filter::{apply_filter, FilterConfig};
use crate::io::{list_pngs, read_image, write_image, RunLayout};
use crate::manifest::{read_manifest, write_manifest, EngineSettings, OutputPaths, RunManifest, SceneRecord};
use crate::metrics::{confusion, report, ssim, ConfusionMatrix, MetricsReport};
use crate::synth::{generate_corpus, write_corpus, SynthConfig};
use crate::tiling::{split_scene, DEFAULT_TILE_SIZE};

#[derive(Parser, Debug)]
#[command(name = "seaice", version, about = "Sea-ice auto-labeling pipeline")]
pub struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Cut scenes into square tiles.
    Split(SplitArgs),
    /// Remove thin cloud and shadow from scenes.
    Filter(FilterArgs),
    /// Segment scenes into rendered label images.
    Label(LabelArgs),
    /// Split, filter and label scenes through the engine.
    Pipeline(PipelineArgs),
    /// Compare label images with ground truth.
    Evaluate(EvaluateArgs),
    /// Time engine variants and print a speedup table.
    Bench(BenchArgs),
    /// Run a pipeline as master, serving tiles to TCP workers.
    Master(MasterArgs),
    /// Serve tasks for a master until it shuts down.
    Worker(WorkerArgs),
    /// Generate a synthetic corpus with ground truth.
    Synth(SynthArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Manifest or config file providing `filter` and `scheme` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Segmentation preset name or scheme file; overrides the config.
    #[arg(long)]
    pub scheme: Option<String>,
}

impl Common {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = &self.scheme {
            cfg.scheme = SegmentationScheme::resolve(s).with_context(|| format!("scheme {s}"))?;
        }
        cfg.filter.validate().with_context(|| "filter config")?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Scene PNGs or directories of them.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile_size: usize,
}

#[derive(Args, Debug)]
pub struct FilterArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Also write the affected-pixel mask as `<id>.mask.png`.
    #[arg(long)]
    pub masks: bool,
}

#[derive(Args, Debug)]
pub struct LabelArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
    /// Filter before segmenting.
    #[arg(long)]
    pub filter: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Sequential,
    Local,
    Master,
}

#[derive(Args, Debug, Clone)]
pub struct PipelineArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value_t = ModeArg::Sequential)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Listen address in master mode.
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub bind: String,
    #[arg(long, default_value_t = engine::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = DEFAULT_TILE_SIZE)]
    pub tile_size: usize,
    #[arg(long, default_value = "default")]
    pub run_id: String,
    /// Ground-truth label directory; when given, a metrics report is written.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Seconds the master waits for a first worker.
    #[arg(long, default_value_t = 30)]
    pub worker_wait: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Manifest written by `pipeline`.
    #[arg(long, conflicts_with = "pred")]
    pub config: Option<PathBuf>,
    /// Directory of predicted label PNGs.
    #[arg(long, requires = "truth")]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Scene PNGs or directories; a synthetic corpus is used when empty.
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    /// Local pool sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
    pub workers: Vec<usize>,
    /// Loopback distributed runs as WORKERSxCORES, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub distributed: Vec<String>,
    #[arg(long, default_value_t = engine::DEFAULT_CHUNK_SIZE)]
    pub chunk_size: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Synthetic scenes when no inputs are given.
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MasterArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Args, Debug)]
pub struct WorkerArgs {
    #[arg(long)]
    pub master: String,
    #[arg(long, default_value_t = 1)]
    pub cores: usize,
    #[arg(long)]
    pub id: Option<String>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 0.0)]
    pub haze_fraction: f64,
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Split(a) => cmd_split(&a),
        Command::Filter(a) => cmd_filter(&a),
        Command::Label(a) => cmd_label(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Master(mut a) => {
            a.pipeline.mode = ModeArg::Master;
            cmd_pipeline(&a.pipeline)
        }
        Command::Worker(a) => cmd_worker(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

/// Reads the `filter` and `scheme` tables of a manifest or config file.
pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let mut cfg = PipelineConfig::default();
    if let Some(f) = table.get("filter") {
        cfg.filter = f
            .clone()
            .try_into::<FilterConfig>()
            .with_context(|| format!("{}: field `filter`", path.display()))?;
    }
    if let Some(s) = table.get("scheme") {
        cfg.scheme = s
            .clone()
            .try_into::<SegmentationScheme>()
            .with_context(|| format!("{}: field `scheme`", path.display()))?;
    }
    Ok(cfg)
}

/// Expands directories into their PNG files, keeping argument order.
pub fn collect_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(list_pngs(p).with_context(|| format!("listing {}", p.display()))?);
        } else if p.exists() {
            out.push(p.clone());
        } else {
            bail!("{}: no such file or directory", p.display());
        }
    }
    if out.is_empty() {
        bail!("no input images found in {}", join_paths(paths));
    }
    Ok(out)
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
}

fn cmd_split(a: &SplitArgs) -> Result<i32> {
    for path in collect_inputs(&a.inputs)? {
        let scene = read_image(&path)?;
        let (tiles, grid) = split_scene(&scene, a.tile_size).with_context(|| path.display().to_string())?;
        for t in &tiles {
            write_image(&a.out.join(format!("{}.png", t.file_stem())), &t.raster)?;
        }
        let grid_path = a.out.join(format!("{}.grid.toml", grid.scene_id));
        fs::write(&grid_path, toml::to_string(&grid)?).with_context(|| grid_path.display().to_string())?;
        println!("{}: {} tiles ({}x{})", path.display(), tiles.len(), grid.rows, grid.cols);
    }
    Ok(0)
}

fn cmd_filter(a: &FilterArgs) -> Result<i32> {
    let cfg = a.common.pipeline_config()?;
    let mut failed = 0;
    for path in collect_inputs(&a.inputs)? {
        let scene = read_image(&path)?;
        match apply_filter(&scene, &cfg.filter) {
            Ok(out) => {
                write_image(&a.out.join(format!("{}.png", scene.scene_id())), &out.filtered)?;
                if a.masks {
                    let m = &out.cloud_shadow_mask;
                    let mask = crate::raster::SceneRaster::from_channels([m, m, m], scene.scene_id())?;
                    write_image(&a.out.join(format!("{}.mask.png", scene.scene_id())), &mask)?;
                }
                println!("{}: affected {:.2}%", path.display(), 100.0 * out.affected_fraction);
            }
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                failed += 1;
            }
        }
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

fn cmd_label(a: &LabelArgs) -> Result<i32> {
    let cfg = a.common.pipeline_config()?;
    let mut failed = 0;
    for path in collect_inputs(&a.inputs)? {
        let mut scene = read_image(&path)?;
        if a.filter {
            match apply_filter(&scene, &cfg.filter) {
                Ok(out) => scene = out.filtered,
                Err(e) => {
                    eprintln!("{}: {e}", path.display());
                    failed += 1;
                    continue;
                }
            }
        }
        let labels = segment(&scene, &cfg.scheme);
        write_image(&a.out.join(format!("{}.png", scene.scene_id())), &render_labels(&labels))?;
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

/// Result of a pipeline run as seen by the CLI.
#[derive(Debug)]
pub struct PipelineSummary {
    pub manifest: PathBuf,
    pub complete: bool,
    pub report: Option<MetricsReport>,
}

/// Runs split, filter and label through the engine and writes the run
/// directory: stitched filtered and label images, the manifest, and a
/// metrics report when ground truth is given.
pub fn run_pipeline(a: &PipelineArgs) -> Result<PipelineSummary> {
    let cfg = a.common.pipeline_config()?;
    let inputs = collect_inputs(&a.inputs)?;
    let mode = match a.mode {
        ModeArg::Sequential => EngineMode::Sequential,
        ModeArg::Local => EngineMode::Local { workers: a.workers },
        ModeArg::Master => EngineMode::Master { bind: a.bind.clone() },
    };
    let mut job = JobSpec::new(
        inputs.iter().cloned().map(SceneInput::Path).collect(),
        cfg.clone(),
        mode.clone(),
    );
    job.chunk_size = a.chunk_size;
    job.tile_size = a.tile_size;
    job.io_workers = a.workers.max(1);
    job.validate()?;

    let out = match &mode {
        EngineMode::Master { bind } => {
            let master = Master::bind(bind)?;
            eprintln!("master listening on {}", master.local_addr());
            let opts = MasterOptions {
                worker_wait: Duration::from_secs(a.worker_wait),
                ..MasterOptions::default()
            };
            master.run(&job, &opts)?
        }
        _ => engine::run(&job)?,
    };

    let layout = RunLayout::new(&a.out, &a.run_id);
    layout.create().with_context(|| layout.root.display().to_string())?;
    let mut scenes = Vec::new();
    for s in &out.scenes {
        let id = &s.grid.scene_id;
        let mut rec = SceneRecord {
            grid: s.grid.clone(),
            labels: None,
            filtered: None,
        };
        if let Some(l) = &s.labels {
            let rel = PathBuf::from("labels").join(format!("{id}.png"));
            write_image(&layout.root.join(&rel), &render_labels(l))?;
            rec.labels = Some(rel);
        }
        if let Some(f) = &s.filtered {
            let rel = PathBuf::from("filtered").join(format!("{id}.png"));
            write_image(&layout.root.join(&rel), f)?;
            rec.filtered = Some(rel);
        }
        scenes.push(rec);
    }
    for t in out.failed_tiles() {
        eprintln!("tile {} ({},{}) failed: {}", t.scene_id, t.grid_row, t.grid_col, t.result.as_ref().unwrap_err());
    }
    for f in &out.load_failures {
        eprintln!("{}: {}", f.path.display(), f.reason);
    }

    let mut manifest = RunManifest {
        run_id: a.run_id.clone(),
        inputs,
        truth: a.truth.clone(),
        filter: cfg.filter.clone(),
        scheme: cfg.scheme.clone(),
        engine: EngineSettings {
            mode: mode.label().to_string(),
            workers: out.timing.workers,
            chunk_size: a.chunk_size,
            tile_size: a.tile_size,
            bind: matches!(mode, EngineMode::Master { .. }).then(|| a.bind.clone()),
        },
        outputs: OutputPaths {
            root: layout.root.clone(),
            filtered: layout.filtered(),
            labels: layout.labels(),
            reports: layout.reports(),
        },
        timing: out.timing,
        scenes,
        tiles: Vec::new(),
        extra: toml::Table::new(),
    };
    manifest.record(&out);
    let manifest_path = layout.manifest();
    write_manifest(&manifest_path, &manifest)?;

    let report = match &a.truth {
        Some(truth) => {
            let r = evaluate_manifest(&manifest_path, Some(truth))?;
            write_report(&r, &layout.reports(), &r.confusion)?;
            Some(r.report)
        }
        None => None,
    };
    Ok(PipelineSummary {
        manifest: manifest_path,
        complete: out.is_complete(),
        report,
    })
}

fn cmd_pipeline(a: &PipelineArgs) -> Result<i32> {
    let s = run_pipeline(a)?;
    println!("manifest: {}", s.manifest.display());
    if let Some(r) = &s.report {
        print!("{r}");
    }
    Ok(if s.complete { 0 } else { 1 })
}

#[derive(Debug)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub report: MetricsReport,
}

/// Compares every label image named in a manifest with the truth image of
/// the same scene id. SSIM is the mean over scenes of the rendered images.
pub fn evaluate_manifest(path: &Path, truth: Option<&Path>) -> Result<Evaluation> {
    let m = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let truth = truth
        .map(Path::to_path_buf)
        .or(m.truth.clone())
        .with_context(|| format!("{}: no truth directory recorded; pass --truth", path.display()))?;
    let mut pairs = Vec::new();
    for s in &m.scenes {
        let labels = s
            .labels
            .as_ref()
            .with_context(|| format!("scene {} has no label image (tile failures)", s.grid.scene_id))?;
        pairs.push((base.join(labels), truth.join(format!("{}.png", s.grid.scene_id))));
    }
    evaluate_pairs(&pairs)
}

/// Compares predicted and truth label images matched by file name.
pub fn evaluate_dirs(pred: &Path, truth: &Path) -> Result<Evaluation> {
    let pairs: Vec<(PathBuf, PathBuf)> = list_pngs(pred)
        .with_context(|| pred.display().to_string())?
        .into_iter()
        .map(|p| {
            let t = truth.join(p.file_name().expect("listed file"));
            (p, t)
        })
        .collect();
    if pairs.is_empty() {
        bail!("no label images in {}", pred.display());
    }
    evaluate_pairs(&pairs)
}

fn evaluate_pairs(pairs: &[(PathBuf, PathBuf)]) -> Result<Evaluation> {
    let mut cm = ConfusionMatrix::default();
    let mut ssim_sum = 0.0;
    for (pred_path, truth_path) in pairs {
        let pred_img = read_image(pred_path)?;
        let truth_img = read_image(truth_path)?;
        let pred = parse_labels(&pred_img, false).with_context(|| pred_path.display().to_string())?;
        let truth = parse_labels(&truth_img, false).with_context(|| truth_path.display().to_string())?;
        cm.add(&confusion(&pred, &truth).with_context(|| format!("{} vs {}", pred_path.display(), truth_path.display()))?);
        ssim_sum += ssim(&render_labels(&pred), &render_labels(&truth))
            .with_context(|| pred_path.display().to_string())?;
    }
    let mut r = report(&cm)?;
    if !pairs.is_empty() {
        r.ssim = Some(ssim_sum / pairs.len() as f64);
    }
    Ok(Evaluation {
        confusion: cm,
        report: r,
    })
}

fn write_report(e: &Evaluation, dir: &Path, cm: &ConfusionMatrix) -> Result<()> {
    fs::create_dir_all(dir)?;
    e.report.write_csv(fs::File::create(dir.join("metrics.csv"))?)?;
    fs::write(dir.join("metrics.txt"), format!("{cm}\n{}", e.report))?;
    Ok(())
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<i32> {
    let e = match (&a.config, &a.pred, &a.truth) {
        (Some(m), _, t) => evaluate_manifest(m, t.as_deref())?,
        (None, Some(p), Some(t)) => evaluate_dirs(p, t)?,
        _ => {
            eprintln!("error: evaluate needs --config <manifest> or --pred <dir> --truth <dir>");
            return Ok(2);
        }
    };
    let mut buf = Vec::new();
    match a.format {
        Format::Csv => e.report.write_csv(&mut buf)?,
        Format::Text => write!(buf, "{}\n{}", e.confusion, e.report)?,
    }
    emit(&buf, a.out.as_deref())?;
    Ok(0)
}

fn emit(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(parent) = p.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(p, bytes).with_context(|| p.display().to_string())?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn parse_distributed(spec: &str) -> Result<BenchVariant> {
    let (w, c) = spec
        .split_once('x')
        .with_context(|| format!("--distributed {spec}: expected WORKERSxCORES"))?;
    Ok(BenchVariant::Distributed {
        workers: w.trim().parse().with_context(|| format!("--distributed {spec}"))?,
        cores: c.trim().parse().with_context(|| format!("--distributed {spec}"))?,
    })
}

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let cfg = a.common.pipeline_config()?;
    let inputs: Vec<SceneInput> = if a.inputs.is_empty() {
        let corpus = generate_corpus(&SynthConfig {
            seed: a.seed,
            count: a.count,
            haze_fraction: 0.3,
            ..SynthConfig::default()
        });
        corpus.into_iter().map(|s| SceneInput::Raster(s.scene)).collect()
    } else {
        collect_inputs(&a.inputs)?.into_iter().map(SceneInput::Path).collect()
    };
    let mut variants = vec![BenchVariant::Sequential];
    for &w in &a.workers {
        if w == 0 {
            bail!("--workers: pool sizes must be at least 1");
        }
        variants.push(BenchVariant::Local { workers: w });
    }
    let distributed = a.distributed.iter().map(|d| parse_distributed(d)).collect::<Result<Vec<_>>>()?;
    let baseline = BenchVariant::Distributed { workers: 1, cores: 1 };
    if !distributed.is_empty() && !distributed.contains(&baseline) {
        variants.push(baseline);
    }
    variants.extend(distributed);
    let rows = bench(&inputs, &cfg, &variants, a.chunk_size)?;
    let mut buf = Vec::new();
    match a.format {
        Format::Csv => write_csv(&rows, &mut buf)?,
        Format::Text => buf.extend_from_slice(format_table(&rows).as_bytes()),
    }
    emit(&buf, a.out.as_deref())?;
    Ok(0)
}

fn cmd_worker(a: &WorkerArgs) -> Result<i32> {
    let opts = WorkerOptions {
        worker_id: a.id.clone().unwrap_or_else(|| WorkerOptions::default().worker_id),
        cores: a.cores.max(1),
        ..WorkerOptions::default()
    };
    let s = engine::run_worker(&a.master, &opts)?;
    eprintln!("worker {}: {} task(s), {} tile(s)", opts.worker_id, s.tasks, s.tiles);
    Ok(0)
}

fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    if !(0.0..=1.0).contains(&a.haze_fraction) {
        bail!("--haze-fraction must be within [0, 1]");
    }
    let cfg = SynthConfig {
        seed: a.seed,
        count: a.count,
        haze_fraction: a.haze_fraction,
        width: a.size,
        height: a.size,
    };
    let corpus = generate_corpus(&cfg);
    write_corpus(&a.out, &corpus)?;
    println!(
        "{} scene(s) under {} (scheme {DEFAULT_PRESET})",
        corpus.len(),
        a.out.display()
    );
    Ok(0)
}

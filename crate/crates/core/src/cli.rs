//! Command-line workflows. Each artifact-producing command writes one
//! `RunManifest` next to its outputs.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataset::{build_dataset, read_dataset, write_dataset, DatasetConfig};
use crate::error::{Error, Result};
use crate::flow::{read_field, solve_steady, write_field, FlowField};
use crate::geometry::{make_cell, UnitCellGeometry, DEFAULT_PITCH};
use crate::metrics::{
    field_r2, periodicity_scan, surrogate_error_map, sweep_report, write_comparison, write_error_map,
    write_report, PeriodicityScan, SweepOptions,
};
use crate::surrogate::{load_model, save_model, train, write_history, LossWeights, TrainConfig, Variant};
use crate::tracer::{
    critical_diameter, trace_particle, write_dc_result, write_trajectory, ContactModel, FlowSource, ShiftRule,
    TraceOptions,
};

#[derive(Debug, Parser)]
#[command(name = "dld", version, about = "DLD unit-cell flow oracle, surrogate training and critical-diameter tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve oracle flow fields for one or more geometries.
    Gen(GenArgs),
    /// Sample a training dataset from field files.
    Dataset(DatasetArgs),
    /// Train a surrogate.
    Train(TrainArgs),
    /// Field R², error maps and periodicity for a model against oracle fields.
    Eval(EvalArgs),
    /// Critical diameter by bisection.
    Dc(DcArgs),
    /// Export one particle trajectory.
    Trace(TraceArgs),
    /// Top/bottom boundary mismatch scan.
    Periodicity(PeriodicityArgs),
    /// Per-F report of R² and Dc error for one or more models.
    Sweep(SweepArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    /// Post fractions; with `--n`, every combination is solved.
    #[arg(long, value_delimiter = ',')]
    pub f: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u32>,
    #[arg(long, default_value_t = DEFAULT_PITCH)]
    pub ds: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dp: f64,
    #[arg(long, default_value_t = 256)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Use the 120-geometry set (F 0.25..0.70, N 3..14) when no geometry is given.
    #[arg(long)]
    pub full_scale: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output CSV for a single geometry, otherwise a directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetArgs {
    /// Field CSV files or directories containing them.
    #[arg(long, value_delimiter = ',', required = true)]
    pub fields: Vec<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 200)]
    pub n_wall: usize,
    #[arg(long, default_value_t = 100)]
    pub n_io: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// periodic, soft or baseline.
    #[arg(long, default_value = "periodic")]
    pub variant: String,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_data: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_wall: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_inlet_v: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_p_io: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_periodic: f64,
    /// 1000 epochs, batch 2000.
    #[arg(long)]
    pub full_scale: bool,
    /// Checkpoint path; the history goes to `<out>.history.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceFlags {
    #[arg(long, default_value_t = 0.5)]
    pub step_factor: f64,
    /// Zero the normal velocity at contact instead of reversing it.
    #[arg(long)]
    pub sliding: bool,
    /// wrap, midline or flux.
    #[arg(long, default_value = "flux")]
    pub shift: String,
}

impl TraceFlags {
    fn options(&self) -> Result<TraceOptions> {
        let shift = match self.shift.as_str() {
            "wrap" => ShiftRule::Wrap,
            "midline" => ShiftRule::Midline,
            "flux" => ShiftRule::FluxMidline,
            other => return Err(Error::Usage(format!("unknown shift rule '{other}'"))),
        };
        Ok(TraceOptions {
            step_factor: self.step_factor,
            contact: if self.sliding { ContactModel::Slide } else { ContactModel::Reverse },
            shift,
            ..TraceOptions::default()
        })
    }
}

#[derive(Debug, Args, Serialize)]
pub struct SourceArgs {
    /// Surrogate checkpoint.
    #[arg(long, conflicts_with = "field")]
    pub model: Option<PathBuf>,
    /// Oracle field CSV.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Geometry for a model source.
    #[arg(long)]
    pub f: Option<f64>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long, default_value_t = DEFAULT_PITCH)]
    pub ds: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub fields: Vec<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DcArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[command(flatten)]
    pub trace: TraceFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Particle diameter.
    #[arg(long)]
    pub diameter: f64,
    /// Columns to traverse; defaults to N.
    #[arg(long)]
    pub columns: Option<usize>,
    #[command(flatten)]
    pub trace: TraceFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PeriodicityArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.4, 0.5, 0.6, 0.45])]
    pub f: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [6, 9, 12, 8, 10])]
    pub n: Vec<u32>,
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
    #[arg(long, default_value_t = DEFAULT_PITCH)]
    pub ds: f64,
    /// JSON output; defaults to printing only.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    pub models: Vec<PathBuf>,
    /// Oracle field CSV files or directories.
    #[arg(long, value_delimiter = ',', required = true)]
    pub fields: Vec<PathBuf>,
    /// Restrict to these geometries, given as `F:N`.
    #[arg(long, value_delimiter = ',')]
    pub geometries: Vec<String>,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    #[arg(long, default_value_t = 200)]
    pub probes: usize,
    #[command(flatten)]
    pub trace: TraceFlags,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
}

/// Geometry list used when `gen` is given no explicit F/N.
pub fn preset_geometries(full_scale: bool) -> Vec<(f64, u32)> {
    if full_scale {
        let fs: Vec<f64> = (5..=14).map(|k| f64::from(k) * 0.05).collect();
        fs.iter()
            .flat_map(|&f| (3..=14).map(move |n| (round6(f), n)))
            .collect()
    } else {
        [0.3, 0.4, 0.5, 0.6]
            .iter()
            .flat_map(|&f| [6, 9, 12].into_iter().map(move |n| (f, n)))
            .collect()
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn field_file_name(f: f64, n: u32) -> String {
    format!("field_F{f}_N{n}.csv")
}

fn manifest_path(out: &Path) -> PathBuf {
    if out.extension().is_some() {
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        out.with_file_name(format!("{stem}.manifest.json"))
    } else {
        out.join("manifest.json")
    }
}

struct Run {
    command: &'static str,
    started: Instant,
    started_unix: u64,
}

impl Run {
    fn start(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        }
    }

    fn finish<C: Serialize>(
        self,
        config: &C,
        seeds: Vec<u64>,
        inputs: Vec<PathBuf>,
        outputs: Vec<PathBuf>,
        at: &Path,
    ) -> Result<()> {
        let manifest = RunManifest {
            command: self.command.into(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config)?,
            seeds,
            inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_unix: self.started_unix,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(at);
        let json = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }
}

fn require_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(Error::Usage(format!("{what} '{}' does not exist", path.display())));
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Expand directories into their field CSVs (sorted) and keep files as given.
fn expand_field_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        require_exists(p, "field path")?;
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| {
                    q.extension().is_some_and(|e| e == "csv")
                        && q.file_name().is_some_and(|n| n.to_string_lossy().starts_with("field_"))
                })
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("no field files found".into()));
    }
    Ok(out)
}

/// Map `f` over `items` with up to `workers` threads, keeping input order.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker thread panicked")?);
        }
        Ok(out)
    })
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let run = Run::start("gen");
    let geoms: Vec<(f64, u32)> = match (a.f.is_empty(), a.n.is_empty()) {
        (true, true) => preset_geometries(a.full_scale),
        (false, false) => a.f.iter().flat_map(|&f| a.n.iter().map(move |&n| (f, n))).collect(),
        _ => return Err(Error::Usage("--f and --n must be given together".into())),
    };
    let cells: Vec<UnitCellGeometry> = geoms
        .iter()
        .map(|&(f, n)| make_cell(f, n, a.ds))
        .collect::<Result<_>>()?;
    let single = cells.len() == 1 && a.out.extension().is_some();
    if !single {
        ensure_dir(&a.out)?;
    }
    let outputs = par_map(&cells, a.workers, |cell| {
        let field = solve_steady(cell, a.dp, a.grid, a.grid, a.tol, a.max_iters)?;
        let path = if single {
            a.out.clone()
        } else {
            a.out.join(field_file_name(cell.f, cell.n))
        };
        write_field(&field, &path)?;
        eprintln!(
            "F={} N={}: {} iterations, residual {:.3e}, Re {:.3e} -> {}",
            cell.f,
            cell.n,
            field.iterations,
            field.residual,
            field.reynolds,
            path.display()
        );
        Ok(path)
    })?;
    run.finish(a, vec![], vec![], outputs, &a.out)
}

fn load_fields(paths: &[PathBuf]) -> Result<(Vec<PathBuf>, Vec<FlowField>)> {
    let files = expand_field_paths(paths)?;
    let fields = files.iter().map(|p| read_field(p)).collect::<Result<Vec<_>>>()?;
    Ok((files, fields))
}

fn cmd_dataset(a: &DatasetArgs) -> Result<()> {
    let run = Run::start("dataset");
    let (files, fields) = load_fields(&a.fields)?;
    let cfg = DatasetConfig {
        samples_per_geometry: a.samples,
        n_wall: a.n_wall,
        n_io: a.n_io,
        seed: a.seed,
    };
    let ds = build_dataset(&fields, &cfg)?;
    write_dataset(&ds, &a.out)?;
    eprintln!("{} records from {} geometries -> {}", ds.records.len(), fields.len(), a.out.display());
    run.finish(a, vec![a.seed], files, vec![a.out.clone()], &a.out)
}

pub fn history_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.history.csv"))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let run = Run::start("train");
    require_exists(&a.data, "dataset")?;
    let variant: Variant = a.variant.parse()?;
    let base = if a.full_scale { TrainConfig::full_scale() } else { TrainConfig::desk() };
    let cfg = TrainConfig {
        lr0: a.lr.unwrap_or(base.lr0),
        epochs: a.epochs.unwrap_or(base.epochs),
        batch: a.batch.unwrap_or(base.batch),
        seed: a.seed,
        weights: LossWeights {
            data: a.lambda_data,
            wall: a.lambda_wall,
            inlet_v: a.lambda_inlet_v,
            p_io: a.lambda_p_io,
            periodic: a.lambda_periodic,
        },
        ..base
    };
    let ds = read_dataset(&a.data)?;
    let cfg = TrainConfig { dp: ds.meta.dp, ..cfg };
    let (model, history) = train(&ds, &cfg, variant)?;
    save_model(&model, &a.out)?;
    let hist = history_path(&a.out);
    write_history(&history, &hist)?;
    if let Some(last) = history.last() {
        eprintln!(
            "{} trained for {} epochs: data {:.4e} bc {:.4e} periodicity {:.4e}",
            variant.tag(),
            history.len(),
            last.data_loss,
            last.bc_loss,
            last.periodicity_loss
        );
    }
    #[derive(Serialize)]
    struct Resolved<'a> {
        args: &'a TrainArgs,
        train: TrainConfig,
    }
    run.finish(
        &Resolved { args: a, train: cfg },
        vec![cfg.seed],
        vec![a.data.clone()],
        vec![a.out.clone(), hist],
        &a.out,
    )
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let run = Run::start("eval");
    require_exists(&a.model, "model")?;
    let model = load_model(&a.model)?;
    let (files, fields) = load_fields(&a.fields)?;
    ensure_dir(&a.out)?;
    #[derive(Serialize)]
    struct Row {
        f: f64,
        n: u32,
        r2: [f64; 3],
        periodicity: PeriodicityScan,
        /// Relative to the output directory.
        error_map: String,
    }
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for field in &fields {
        let map = surrogate_error_map(field, &model)?;
        let map_name = format!("error_map_F{}_N{}.csv", field.cell.f, field.cell.n);
        let map_path = a.out.join(&map_name);
        write_error_map(&map, &map_path)?;
        rows.push(Row {
            f: field.cell.f,
            n: field.cell.n,
            r2: field_r2(field, &model)?,
            periodicity: periodicity_scan(&model, &field.cell, a.probes)?,
            error_map: map_name,
        });
        outputs.push(map_path);
    }
    let path = a.out.join("eval.json");
    std::fs::write(&path, serde_json::to_string_pretty(&rows)?).map_err(|e| Error::io(&path, e))?;
    outputs.push(path);
    let mut inputs = vec![a.model.clone()];
    inputs.extend(files);
    run.finish(a, vec![model.config.seed], inputs, outputs, &a.out)
}

struct LoadedSource {
    field: Option<FlowField>,
    model: Option<crate::surrogate::SurrogateModel>,
    cell: UnitCellGeometry,
    inputs: Vec<PathBuf>,
}

impl LoadedSource {
    fn load(s: &SourceArgs) -> Result<Self> {
        match (&s.model, &s.field) {
            (Some(m), None) => {
                require_exists(m, "model")?;
                let (Some(f), Some(n)) = (s.f, s.n) else {
                    return Err(Error::Usage("--f and --n are required with --model".into()));
                };
                let model = load_model(m)?;
                Ok(Self {
                    field: None,
                    model: Some(model),
                    cell: make_cell(f, n, s.ds)?,
                    inputs: vec![m.clone()],
                })
            }
            (None, Some(p)) => {
                require_exists(p, "field")?;
                let field = read_field(p)?;
                Ok(Self {
                    cell: field.cell,
                    field: Some(field),
                    model: None,
                    inputs: vec![p.clone()],
                })
            }
            _ => Err(Error::Usage("exactly one of --model or --field is required".into())),
        }
    }

    fn source(&self) -> FlowSource<'_> {
        match (&self.field, &self.model) {
            (Some(f), _) => FlowSource::Grid(f),
            (None, Some(m)) => FlowSource::Surrogate {
                model: m,
                cell: &self.cell,
            },
            (None, None) => unreachable!("a source is always loaded"),
        }
    }
}

fn cmd_dc(a: &DcArgs) -> Result<()> {
    let run = Run::start("dc");
    let src = LoadedSource::load(&a.source)?;
    let res = critical_diameter(&src.source(), a.tol, &a.trace.options()?)?;
    write_dc_result(&res, &a.out)?;
    println!("Dc = {} (bracket {} .. {}, {} evaluations)", res.dc, res.bracket.0, res.bracket.1, res.evaluations);
    run.finish(a, vec![], src.inputs, vec![a.out.clone()], &a.out)
}

fn cmd_trace(a: &TraceArgs) -> Result<()> {
    let run = Run::start("trace");
    let src = LoadedSource::load(&a.source)?;
    let opts = TraceOptions {
        record: true,
        ..a.trace.options()?
    };
    let columns = a.columns.unwrap_or(src.cell.n as usize);
    let traj = trace_particle(&src.source(), a.diameter, columns, &opts)?;
    write_trajectory(&traj, &a.out)?;
    println!(
        "mode {:?}, lateral displacement {} over {columns} columns",
        traj.mode, traj.dy_device
    );
    run.finish(a, vec![], src.inputs, vec![a.out.clone()], &a.out)
}

fn cmd_periodicity(a: &PeriodicityArgs) -> Result<()> {
    let run = Run::start("periodicity");
    require_exists(&a.model, "model")?;
    if a.f.len() != a.n.len() {
        return Err(Error::Usage("--f and --n lists must have equal length".into()));
    }
    let model = load_model(&a.model)?;
    let scans = a
        .f
        .iter()
        .zip(&a.n)
        .map(|(&f, &n)| periodicity_scan(&model, &make_cell(f, n, a.ds)?, a.probes))
        .collect::<Result<Vec<_>>>()?;
    for s in &scans {
        println!(
            "F={} N={}: avg u {:e} v {:e} p {:e}; max u {:e} v {:e} p {:e}",
            s.f, s.n, s.avg[0], s.avg[1], s.avg[2], s.max[0], s.max[1], s.max[2]
        );
    }
    if let Some(out) = &a.out {
        std::fs::write(out, serde_json::to_string_pretty(&scans)?).map_err(|e| Error::io(out, e))?;
        run.finish(a, vec![model.config.seed], vec![a.model.clone()], vec![out.clone()], out)?;
    }
    Ok(())
}

fn parse_geometry(s: &str) -> Result<(f64, u32)> {
    let (f, n) = s
        .split_once(':')
        .ok_or_else(|| Error::Usage(format!("geometry '{s}' must look like F:N")))?;
    let f = f.parse().map_err(|_| Error::Usage(format!("bad F in '{s}'")))?;
    let n = n.parse().map_err(|_| Error::Usage(format!("bad N in '{s}'")))?;
    Ok((f, n))
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let run = Run::start("sweep");
    for m in &a.models {
        require_exists(m, "model")?;
    }
    let (files, fields) = load_fields(&a.fields)?;
    let geoms: Vec<(f64, u32)> = if a.geometries.is_empty() {
        fields.iter().map(|f| (f.cell.f, f.cell.n)).collect()
    } else {
        a.geometries.iter().map(|s| parse_geometry(s)).collect::<Result<_>>()?
    };
    let opts = SweepOptions {
        dc_tol: a.tol,
        trace: a.trace.options()?,
        periodicity_probes: a.probes,
        workers: a.workers,
    };
    // oracle Dc once, shared by every model
    let dc_true = par_map(&fields, a.workers, |f| {
        Ok(critical_diameter(&FlowSource::Grid(f), opts.dc_tol, &opts.trace).map(|r| r.dc).unwrap_or(f64::NAN))
    })?;
    ensure_dir(&a.out)?;
    // file names only, so reports do not depend on where the run happened
    let dataset_id = files
        .iter()
        .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
        .collect::<Vec<_>>()
        .join(";");
    let mut reports = Vec::new();
    let mut outputs = Vec::new();
    for m in &a.models {
        let model = load_model(m)?;
        let id = m.file_stem().map_or_else(|| model.variant.tag().to_string(), |s| s.to_string_lossy().into_owned());
        let truth: Vec<f64> = dc_true.clone();
        let known: Option<&[f64]> = Some(&truth);
        let mut report = sweep_report(&geoms, &model, &id, &fields, known, &dataset_id, &opts)?;
        for g in &mut report.geometries {
            if g.dc_true.is_some_and(f64::is_nan) {
                g.dc_true = None;
                g.dc_error_pct = None;
                g.note = Some("oracle Dc undefined".into());
            }
        }
        let dir = a.out.join(&id);
        write_report(&report, &dir)?;
        outputs.push(dir);
        println!(
            "{id}: mean Dc error {} %, mean R2 u {:.4} v {:.4} p {:.4}",
            report.mean_dc_error_pct.map_or("n/a".into(), |e| format!("{e:.3}")),
            report.mean_r2[0],
            report.mean_r2[1],
            report.mean_r2[2]
        );
        reports.push(report);
    }
    let table = a.out.join("comparison.csv");
    write_comparison(&reports, &table)?;
    outputs.push(table);
    let mut inputs = a.models.clone();
    inputs.extend(files);
    run.finish(a, vec![], inputs, outputs, &a.out)
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Dataset(a) => cmd_dataset(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Dc(a) => cmd_dc(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Periodicity(a) => cmd_periodicity(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Parse arguments, run, and return the process exit code.
pub fn run_from_env() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

//! Evaluation: R², critical-diameter error, boundary periodicity scans,
//! field error maps and per-F sweep reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::UnitCellGeometry;
use crate::surrogate::SurrogateModel;
use crate::tracer::{critical_diameter, FlowSource, TraceOptions};

pub const FIELDS: [&str; 3] = ["u", "v", "p"];

/// Anything that maps `(x, y, F, N)` to `(u, v, p)`.
pub trait FieldPredictor {
    fn predict_point(&self, x: f64, y: f64, f: f64, n: f64) -> (f64, f64, f64);

    /// Velocity scale of the predictions, for comparing against oracle fields.
    fn velocity_scale(&self) -> Option<f64> {
        None
    }
}

impl FieldPredictor for SurrogateModel {
    fn predict_point(&self, x: f64, y: f64, f: f64, n: f64) -> (f64, f64, f64) {
        self.predict(x, y, f, n)
    }

    fn velocity_scale(&self) -> Option<f64> {
        Some(self.norms.u_scale)
    }
}

/// A gridded field used as a predictor for its own geometry.
impl FieldPredictor for FlowField {
    fn predict_point(&self, x: f64, y: f64, _f: f64, _n: f64) -> (f64, f64, f64) {
        self.sample(x, y)
    }

    fn velocity_scale(&self) -> Option<f64> {
        Some(self.scale.u_scale)
    }
}

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r2(truth: &[f64], pred: &[f64]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::Usage(format!(
            "r2 needs equal nonempty lists, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedVariance);
    }
    let ss_res: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// `|true - pred| / |true| * 100`.
pub fn dc_percent_error(dc_true: f64, dc_pred: f64) -> Result<f64> {
    if dc_true == 0.0 {
        return Err(Error::Domain("reference critical diameter is zero".into()));
    }
    Ok((dc_true - dc_pred).abs() / dc_true.abs() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicityScan {
    pub f: f64,
    pub n: u32,
    pub probes: usize,
    /// Per field `u, v, p`.
    pub avg: [f64; 3],
    pub max: [f64; 3],
}

/// `|predict(x, 0) - predict(x, Dy)|` at `n_x` evenly spaced `x` in `[0, Dx]`.
pub fn periodicity_scan<P: FieldPredictor + ?Sized>(
    model: &P,
    cell: &UnitCellGeometry,
    n_x: usize,
) -> Result<PeriodicityScan> {
    if n_x < 2 {
        return Err(Error::Usage("a periodicity scan needs at least 2 probes".into()));
    }
    let n = f64::from(cell.n);
    let mut sum = [0.0; 3];
    let mut max = [0.0f64; 3];
    for k in 0..n_x {
        let x = k as f64 * cell.dx / (n_x - 1) as f64;
        let a = model.predict_point(x, 0.0, cell.f, n);
        let b = model.predict_point(x, cell.dy, cell.f, n);
        let d = [(a.0 - b.0).abs(), (a.1 - b.1).abs(), (a.2 - b.2).abs()];
        for c in 0..3 {
            sum[c] += d[c];
            max[c] = max[c].max(d[c]);
        }
    }
    Ok(PeriodicityScan {
        f: cell.f,
        n: cell.n,
        probes: n_x,
        avg: sum.map(|s| s / n_x as f64),
        max,
    })
}

/// Per-node absolute errors; `None` marks solid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    pub u: Vec<Option<f64>>,
    pub v: Vec<Option<f64>>,
    pub p: Vec<Option<f64>>,
}

/// Express `truth` in the predictor's velocity scale when both are known.
fn aligned_truth<P: FieldPredictor + ?Sized>(truth: &FlowField, model: &P) -> Result<FlowField> {
    match model.velocity_scale() {
        Some(s) if s != truth.scale.u_scale => truth.rescaled(s),
        _ => Ok(truth.clone()),
    }
}

fn check_geometry(truth: &FlowField, model: &SurrogateModel) -> Result<()> {
    if (truth.cell.dy - model.norms.period).abs() > 1e-12 {
        return Err(Error::Validation(format!(
            "field cell height {} differs from the model period {}",
            truth.cell.dy, model.norms.period
        )));
    }
    Ok(())
}

pub fn field_error_map<P: FieldPredictor + ?Sized>(truth: &FlowField, model: &P) -> Result<ErrorMap> {
    let t = aligned_truth(truth, model)?;
    let (f, n) = (t.cell.f, f64::from(t.cell.n));
    let len = t.n_nodes();
    let (mut u, mut v, mut p) = (vec![None; len], vec![None; len], vec![None; len]);
    for j in 0..=t.ny {
        for i in 0..=t.nx {
            let k = t.node_index(i, j);
            if t.solid[k] {
                continue;
            }
            let (x, y) = t.node_xy(i, j);
            let q = model.predict_point(x, y, f, n);
            u[k] = Some((q.0 - t.u[k]).abs());
            v[k] = Some((q.1 - t.v[k]).abs());
            p[k] = Some((q.2 - t.p[k]).abs());
        }
    }
    Ok(ErrorMap {
        nx: t.nx,
        ny: t.ny,
        dx: t.cell.dx,
        dy: t.cell.dy,
        u,
        v,
        p,
    })
}

pub fn surrogate_error_map(truth: &FlowField, model: &SurrogateModel) -> Result<ErrorMap> {
    check_geometry(truth, model)?;
    field_error_map(truth, model)
}

/// CSV grid `x,y,err_u,err_v,err_p,solid`; error cells are empty at solid nodes.
pub fn write_error_map(map: &ErrorMap, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,err_u,err_v,err_p,solid").map_err(io)?;
    let hx = map.dx / map.nx as f64;
    let hy = map.dy / map.ny as f64;
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for j in 0..=map.ny {
        for i in 0..=map.nx {
            let k = j * (map.nx + 1) + i;
            writeln!(
                w,
                "{},{},{},{},{},{}",
                i as f64 * hx,
                j as f64 * hy,
                cell(map.u[k]),
                cell(map.v[k]),
                cell(map.p[k]),
                u8::from(map.u[k].is_none())
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// R² of `u, v, p` over the fluid nodes of `truth`.
pub fn field_r2<P: FieldPredictor + ?Sized>(truth: &FlowField, model: &P) -> Result<[f64; 3]> {
    let t = aligned_truth(truth, model)?;
    let (f, n) = (t.cell.f, f64::from(t.cell.n));
    let mut tv: [Vec<f64>; 3] = Default::default();
    let mut pv: [Vec<f64>; 3] = Default::default();
    for j in 0..=t.ny {
        for i in 0..=t.nx {
            let k = t.node_index(i, j);
            if t.solid[k] {
                continue;
            }
            let (x, y) = t.node_xy(i, j);
            let q = model.predict_point(x, y, f, n);
            for (c, (tt, pp)) in [(t.u[k], q.0), (t.v[k], q.1), (t.p[k], q.2)].into_iter().enumerate() {
                tv[c].push(tt);
                pv[c].push(pp);
            }
        }
    }
    Ok([r2(&tv[0], &pv[0])?, r2(&tv[1], &pv[1])?, r2(&tv[2], &pv[2])?])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryEval {
    pub f: f64,
    pub n: u32,
    pub r2: [f64; 3],
    pub dc_true: Option<f64>,
    pub dc_pred: Option<f64>,
    pub dc_error_pct: Option<f64>,
    pub periodicity: PeriodicityScan,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FRow {
    pub f: f64,
    pub geometries: usize,
    pub r2: [f64; 3],
    /// Mean over geometries with a defined error.
    pub dc_error_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub f: f64,
    pub n: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub geometries: Vec<GeometryEval>,
    pub by_f: Vec<FRow>,
    pub mean_r2: [f64; 3],
    pub mean_dc_error_pct: Option<f64>,
    pub periodicity_avg: [f64; 3],
    pub periodicity_max: [f64; 3],
    pub skipped: Vec<Skipped>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub dc_tol: f64,
    pub trace: TraceOptions,
    pub periodicity_probes: usize,
    pub workers: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            dc_tol: 1e-4,
            trace: TraceOptions::default(),
            periodicity_probes: 200,
            workers: 1,
        }
    }
}

fn mean(vals: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = vals.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn evaluate_geometry(field: &FlowField, model: &SurrogateModel, dc_true: Option<f64>, opts: &SweepOptions) -> Result<GeometryEval> {
    check_geometry(field, model)?;
    let r2v = field_r2(field, model)?;
    let periodicity = periodicity_scan(model, &field.cell, opts.periodicity_probes)?;
    let mut note = None;
    let dc_true = match dc_true {
        Some(d) => Some(d),
        None => match critical_diameter(&FlowSource::Grid(field), opts.dc_tol, &opts.trace) {
            Ok(r) => Some(r.dc),
            Err(e) => {
                note = Some(format!("oracle Dc: {e}"));
                None
            }
        },
    };
    let src = FlowSource::Surrogate {
        model,
        cell: &field.cell,
    };
    let dc_pred = match critical_diameter(&src, opts.dc_tol, &opts.trace) {
        Ok(r) => Some(r.dc),
        Err(e) => {
            note = Some(format!("surrogate Dc: {e}"));
            None
        }
    };
    let dc_error_pct = match (dc_true, dc_pred) {
        (Some(t), Some(p)) => Some(dc_percent_error(t, p)?),
        _ => None,
    };
    Ok(GeometryEval {
        f: field.cell.f,
        n: field.cell.n,
        r2: r2v,
        dc_true,
        dc_pred,
        dc_error_pct,
        periodicity,
        note,
    })
}

/// Evaluate `model` on each requested geometry that has an oracle field.
///
/// `dc_true` optionally supplies precomputed oracle critical diameters in
/// the order of `fields`.
pub fn sweep_report(
    geometries: &[(f64, u32)],
    model: &SurrogateModel,
    model_id: &str,
    fields: &[FlowField],
    dc_true: Option<&[f64]>,
    dataset_id: &str,
    opts: &SweepOptions,
) -> Result<EvalReport> {
    let mut skipped = Vec::new();
    let mut jobs = Vec::new();
    for &(f, n) in geometries {
        match fields.iter().position(|fl| fl.cell.f == f && fl.cell.n == n) {
            Some(k) => jobs.push((k, dc_true.and_then(|d| d.get(k).copied()))),
            None => skipped.push(Skipped {
                f,
                n,
                reason: "no oracle field for this geometry".into(),
            }),
        }
    }
    let run = |&(k, dt): &(usize, Option<f64>)| evaluate_geometry(&fields[k], model, dt, opts);
    let evals: Vec<GeometryEval> = if opts.workers > 1 && jobs.len() > 1 {
        let chunk = jobs.len().div_ceil(opts.workers);
        std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .chunks(chunk)
                .map(|c| s.spawn(move || c.iter().map(run).collect::<Result<Vec<_>>>()))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect::<Result<Vec<Vec<_>>>>()
        })?
        .into_iter()
        .flatten()
        .collect()
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };
    Ok(assemble_report(model_id, dataset_id, evals, skipped))
}

/// Group per-geometry results by F (averaging over N) and compute aggregates.
pub fn assemble_report(model_id: &str, dataset_id: &str, evals: Vec<GeometryEval>, skipped: Vec<Skipped>) -> EvalReport {
    let mut fs: Vec<f64> = evals.iter().map(|e| e.f).collect();
    fs.sort_by(f64::total_cmp);
    fs.dedup();
    let by_f = fs
        .iter()
        .map(|&f| {
            let g: Vec<&GeometryEval> = evals.iter().filter(|e| e.f == f).collect();
            FRow {
                f,
                geometries: g.len(),
                r2: [0, 1, 2].map(|c| mean(g.iter().map(|e| e.r2[c])).unwrap_or(f64::NAN)),
                dc_error_pct: mean(g.iter().filter_map(|e| e.dc_error_pct)),
            }
        })
        .collect();
    let mean_r2 = [0, 1, 2].map(|c| mean(evals.iter().map(|e| e.r2[c])).unwrap_or(f64::NAN));
    let mean_dc_error_pct = mean(evals.iter().filter_map(|e| e.dc_error_pct));
    let periodicity_avg = [0, 1, 2].map(|c| mean(evals.iter().map(|e| e.periodicity.avg[c])).unwrap_or(0.0));
    let periodicity_max = [0, 1, 2].map(|c| evals.iter().map(|e| e.periodicity.max[c]).fold(0.0, f64::max));
    EvalReport {
        model_id: model_id.into(),
        dataset_id: dataset_id.into(),
        geometries: evals,
        by_f,
        mean_r2,
        mean_dc_error_pct,
        periodicity_avg,
        periodicity_max,
        skipped,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// `report.json` plus `table.csv` (one row per F and an average row).
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&json_path, json).map_err(|e| Error::io(&json_path, e))?;
    write_comparison(std::slice::from_ref(report), &dir.join("table.csv"))
}

/// Side-by-side per-F table for several reports.
pub fn write_comparison(reports: &[EvalReport], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "model,F,geometries,r2_u,r2_v,r2_p,dc_error_pct").map_err(io)?;
    for r in reports {
        for row in &r.by_f {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.model_id,
                row.f,
                row.geometries,
                row.r2[0],
                row.r2[1],
                row.r2[2],
                opt(row.dc_error_pct)
            )
            .map_err(io)?;
        }
        writeln!(
            w,
            "{},average,{},{},{},{},{}",
            r.model_id,
            r.geometries.len(),
            r.mean_r2[0],
            r.mean_r2[1],
            r.mean_r2[2],
            opt(r.mean_dc_error_pct)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surrogate::{Norms, TrainConfig, Variant};
    use crate::testutil::{cell, synthetic};
    use proptest::prelude::*;

    struct Zero;

    impl FieldPredictor for Zero {
        fn predict_point(&self, _: f64, _: f64, _: f64, _: f64) -> (f64, f64, f64) {
            (0.0, 0.0, 0.0)
        }
    }

    fn field() -> FlowField {
        synthetic(cell(0.5, 10), 32, |x, y| (1.0 + x * y, (8.0 * y).sin()))
    }

    #[test]
    fn r2_examples() {
        let t = [1.0, 2.0, 3.0];
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert_eq!(r2(&t, &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r2(&t, &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(matches!(r2(&[4.0, 4.0], &[1.0, 2.0]), Err(Error::UndefinedVariance)));
        assert!(matches!(r2(&t, &[1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn dc_error_examples() {
        assert_eq!(dc_percent_error(0.0466, 0.0466).unwrap(), 0.0);
        let e = dc_percent_error(0.0466, 0.0470).unwrap();
        assert!((e - 0.858).abs() < 5e-4, "{e}");
        let e = dc_percent_error(0.0705, 0.0705 * 1.1).unwrap();
        assert!((e - 10.0).abs() < 1e-9);
        assert!(matches!(dc_percent_error(0.0, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn periodicity_scan_of_periodic_and_constant_models_is_zero() {
        let c = cell(0.45, 7);
        let m = SurrogateModel::new(Variant::PeriodicLayer, Norms::default(), TrainConfig::desk()).unwrap();
        let s = periodicity_scan(&m, &c, 200).unwrap();
        assert_eq!((s.avg, s.max), ([0.0; 3], [0.0; 3]));
        let z = SurrogateModel::zeros(Variant::SoftPeriodic, Norms::default(), TrainConfig::desk()).unwrap();
        let s = periodicity_scan(&z, &c, 2).unwrap();
        assert_eq!((s.avg, s.max), ([0.0; 3], [0.0; 3]));
        let soft = SurrogateModel::new(Variant::SoftPeriodic, Norms::default(), TrainConfig::desk()).unwrap();
        let s = periodicity_scan(&soft, &c, 50).unwrap();
        assert!(s.avg.iter().all(|&a| a > 0.0));
        assert!(matches!(periodicity_scan(&m, &c, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn error_map_of_the_truth_is_zero() {
        let f = field();
        let map = field_error_map(&f, &f).unwrap();
        assert_eq!((map.nx, map.ny), (f.nx, f.ny));
        assert_eq!(map.u.len(), f.n_nodes());
        for k in 0..f.n_nodes() {
            assert_eq!(map.u[k].is_none(), f.solid[k]);
            if !f.solid[k] {
                assert_eq!((map.u[k], map.v[k], map.p[k]), (Some(0.0), Some(0.0), Some(0.0)));
            }
        }
        assert_eq!(field_r2(&f, &f).unwrap(), [1.0; 3]);
    }

    #[test]
    fn error_map_of_zero_model_is_the_field() {
        let f = field();
        let map = field_error_map(&f, &Zero).unwrap();
        for k in (0..f.n_nodes()).filter(|&k| !f.solid[k]) {
            assert_eq!(map.u[k], Some(f.u[k].abs()));
            assert_eq!(map.v[k], Some(f.v[k].abs()));
            assert_eq!(map.p[k], Some(f.p[k].abs()));
        }
    }

    #[test]
    fn error_map_csv_dimensions() {
        let f = field();
        let map = field_error_map(&f, &Zero).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        write_error_map(&map, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), f.n_nodes() + 1);
        assert!(text.starts_with("x,y,err_u,err_v,err_p,solid\n"));
    }

    #[test]
    fn mismatched_period_is_rejected() {
        let f = synthetic(crate::geometry::make_cell(0.5, 10, 0.3).unwrap(), 32, |_, _| (1.0, 0.0));
        let m = SurrogateModel::zeros(Variant::PeriodicLayer, Norms::default(), TrainConfig::desk()).unwrap();
        assert!(matches!(surrogate_error_map(&f, &m), Err(Error::Validation(_))));
    }

    fn eval(f: f64, n: u32, r: f64, dc: Option<f64>) -> GeometryEval {
        GeometryEval {
            f,
            n,
            r2: [r; 3],
            dc_true: Some(0.05),
            dc_pred: dc.map(|e| 0.05 * (1.0 + e / 100.0)),
            dc_error_pct: dc,
            periodicity: PeriodicityScan {
                f,
                n,
                probes: 2,
                avg: [r; 3],
                max: [2.0 * r; 3],
            },
            note: None,
        }
    }

    #[test]
    fn single_geometry_report_equals_its_values() {
        let rep = assemble_report("m", "d", vec![eval(0.5, 8, 0.9, Some(3.0))], vec![]);
        assert_eq!(rep.mean_r2, [0.9; 3]);
        assert_eq!(rep.mean_dc_error_pct, Some(3.0));
        assert_eq!(rep.by_f.len(), 1);
        assert_eq!(rep.by_f[0].dc_error_pct, Some(3.0));
        assert_eq!(rep.periodicity_max, [1.8; 3]);
    }

    #[test]
    fn report_groups_by_f() {
        let evals = vec![
            eval(0.4, 6, 0.8, Some(2.0)),
            eval(0.5, 6, 0.9, None),
            eval(0.4, 9, 0.6, Some(4.0)),
        ];
        let rep = assemble_report("m", "d", evals, vec![]);
        assert_eq!(rep.by_f.len(), 2);
        assert_eq!(rep.by_f[0].f, 0.4);
        assert_eq!(rep.by_f[0].geometries, 2);
        assert!((rep.by_f[0].r2[0] - 0.7).abs() < 1e-15);
        assert_eq!(rep.by_f[0].dc_error_pct, Some(3.0));
        assert_eq!(rep.by_f[1].dc_error_pct, None);
        assert_eq!(rep.mean_dc_error_pct, Some(3.0));
        let dir = tempfile::tempdir().unwrap();
        write_report(&rep, dir.path()).unwrap();
        let table = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
        assert_eq!(table.lines().count(), 4);
        assert!(table.lines().last().unwrap().starts_with("m,average,3,"));
    }

    #[test]
    fn missing_fields_are_listed_as_skipped() {
        let m = SurrogateModel::zeros(Variant::PeriodicLayer, Norms::default(), TrainConfig::desk()).unwrap();
        let rep = sweep_report(&[(0.3, 4)], &m, "m", &[], None, "d", &SweepOptions::default()).unwrap();
        assert!(rep.geometries.is_empty());
        assert_eq!(rep.skipped.len(), 1);
        assert_eq!((rep.skipped[0].f, rep.skipped[0].n), (0.3, 4));
    }

    proptest! {
        #[test]
        fn r2_is_permutation_invariant(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30), rot in 0usize..30) {
            let (t, p): (Vec<f64>, Vec<f64>) = v.iter().copied().unzip();
            prop_assume!(t.iter().any(|&x| x != t[0]));
            let k = rot % t.len();
            let mut t2 = t.clone();
            let mut p2 = p.clone();
            t2.rotate_left(k);
            p2.rotate_left(k);
            let a = r2(&t, &p).unwrap();
            let b = r2(&t2, &p2).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
            prop_assert!(a <= 1.0);
        }

        #[test]
        fn relative_dc_error(a in 1e-3f64..1.0, e in -0.5f64..0.5) {
            let got = dc_percent_error(a, a * (1.0 + e)).unwrap();
            prop_assert!((got - 100.0 * e.abs()).abs() < 1e-9);
        }

        #[test]
        fn periodic_models_scan_to_zero(seed in any::<u64>(), f in 0.2f64..0.7, n in 3u32..15, probes in 2usize..64) {
            let cfg = TrainConfig { seed, ..TrainConfig::desk() };
            let m = SurrogateModel::new(Variant::PeriodicLayer, Norms::default(), cfg).unwrap();
            let c = crate::geometry::make_cell(f, n, 0.4).unwrap();
            let s = periodicity_scan(&m, &c, probes).unwrap();
            prop_assert_eq!(s.avg, [0.0; 3]);
            prop_assert_eq!(s.max, [0.0; 3]);
        }
    }
}

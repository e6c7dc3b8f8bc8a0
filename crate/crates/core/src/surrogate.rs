//! Surrogate model: three independent sub-networks for `u`, `v` and `p`,
//! the combined data/boundary loss, training and checkpoints.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{BoundarySets, Dataset, SampleRecord};
use crate::error::{Error, Result};
use crate::geometry::{UnitCellGeometry, DEFAULT_PITCH, MAX_PERIOD};
use crate::neural::{adam_step, lr_at, Activation, DenseLayer, Mlp, OptimizerState, PeriodicFeatures};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const HISTORY_HEADER: &str = "epoch,lr,data_loss,bc_loss,periodicity_loss,total";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Trigonometric periodic first layer; exact y-periodicity.
    PeriodicLayer,
    /// Raw `y` input with a boundary-mismatch penalty.
    SoftPeriodic,
    /// Plain 3 x 50 Swish network.
    Baseline,
}

impl Variant {
    pub fn tag(self) -> &'static str {
        match self {
            Variant::PeriodicLayer => "periodic_layer",
            Variant::SoftPeriodic => "soft_periodic",
            Variant::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" | "periodic_layer" => Ok(Variant::PeriodicLayer),
            "soft" | "soft_periodic" => Ok(Variant::SoftPeriodic),
            "baseline" => Ok(Variant::Baseline),
            other => Err(Error::Usage(format!(
                "unknown variant '{other}' (expected periodic, soft or baseline)"
            ))),
        }
    }
}

/// Input normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    /// Cell height; also the period of the feature map.
    pub period: f64,
    /// Coordinates are divided by this.
    pub length: f64,
    pub f_scale: f64,
    pub n_scale: f64,
    /// Velocity scale of the training targets (raw `u` / target `u`).
    pub u_scale: f64,
}

impl Default for Norms {
    fn default() -> Self {
        Self {
            period: DEFAULT_PITCH,
            length: DEFAULT_PITCH,
            f_scale: 1.0,
            n_scale: MAX_PERIOD,
            u_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub data: f64,
    pub wall: f64,
    pub inlet_v: f64,
    pub p_io: f64,
    /// Only used by the soft-periodic variant.
    pub periodic: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            data: 1.0,
            wall: 1.0,
            inlet_v: 1.0,
            p_io: 1.0,
            periodic: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr0: f64,
    pub epochs: usize,
    pub batch: usize,
    pub weights: LossWeights,
    pub dp: f64,
    pub seed: u64,
    /// Boundary pairs drawn per mini-batch for the soft periodicity term.
    pub periodic_pairs: usize,
    /// Harmonics in the periodic feature map.
    pub harmonics: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Reduced schedule sized for a single CPU core.
    pub fn desk() -> Self {
        Self {
            lr0: 1e-3,
            epochs: 200,
            batch: 128,
            weights: LossWeights::default(),
            dp: 0.1,
            seed: 42,
            periodic_pairs: 32,
            harmonics: 1,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            epochs: 1000,
            batch: 2000,
            ..Self::desk()
        }
    }

    pub fn validate(&self, n_records: usize) -> Result<()> {
        let w = self.weights;
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config("initial learning rate must be positive".into()));
        }
        if [w.data, w.wall, w.inlet_v, w.p_io, w.periodic]
            .iter()
            .any(|&x| !(x.is_finite() && x > 0.0))
        {
            return Err(Error::Config("loss weights must be positive".into()));
        }
        if self.batch == 0 || self.batch > n_records {
            return Err(Error::Config(format!(
                "batch size {} must lie in 1..={n_records}",
                self.batch
            )));
        }
        if self.harmonics == 0 {
            return Err(Error::Config("at least one harmonic is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateModel {
    pub variant: Variant,
    /// `u`, `v`, `p` in that order.
    pub subnets: Vec<Mlp>,
    pub norms: Norms,
    pub features: PeriodicFeatures,
    pub config: TrainConfig,
}

/// Layer shapes for a variant: `(inputs, outputs, activation)` and the
/// side-input attachment point.
fn architecture(variant: Variant, feat_width: usize) -> (Vec<(usize, usize, Activation)>, Option<usize>, usize) {
    match variant {
        Variant::PeriodicLayer | Variant::SoftPeriodic => {
            let first = if variant == Variant::PeriodicLayer { feat_width } else { 2 };
            let mut dims = vec![(first, 64, Activation::Tanh), (66, 64, Activation::Swish)];
            dims.extend((0..6).map(|_| (64, 64, Activation::Swish)));
            dims.push((64, 1, Activation::Identity));
            (dims, Some(0), 2)
        }
        Variant::Baseline => (
            vec![
                (4, 50, Activation::Swish),
                (50, 50, Activation::Swish),
                (50, 50, Activation::Swish),
                (50, 1, Activation::Identity),
            ],
            None,
            0,
        ),
    }
}

impl SurrogateModel {
    /// Randomly initialized model; each sub-network draws from one seeded stream in turn.
    pub fn new(variant: Variant, norms: Norms, config: TrainConfig) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::build(variant, norms, config, |i, o, a| DenseLayer::init(i, o, a, &mut rng))
    }

    pub fn zeros(variant: Variant, norms: Norms, config: TrainConfig) -> Result<Self> {
        Self::build(variant, norms, config, DenseLayer::zeros)
    }

    fn build(
        variant: Variant,
        norms: Norms,
        config: TrainConfig,
        mut make: impl FnMut(usize, usize, Activation) -> DenseLayer,
    ) -> Result<Self> {
        let features = PeriodicFeatures::new(norms.period, config.harmonics);
        let (dims, side_after, side_width) = architecture(variant, features.width());
        let subnets = (0..3)
            .map(|_| {
                let layers = dims.iter().map(|&(i, o, a)| make(i, o, a)).collect();
                Mlp::new(layers, side_after, side_width)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant,
            subnets,
            norms,
            features,
            config,
        })
    }

    fn main_width(&self) -> usize {
        self.subnets[0].input_width()
    }

    /// Write the network inputs for one point; `n_norm` is `N` already divided by the norm.
    fn encode(&self, x: f64, y: f64, f: f64, n_norm: f64, main: &mut [f64], side: &mut [f64]) {
        let xs = x / self.norms.length;
        let fs = f / self.norms.f_scale;
        match self.variant {
            Variant::PeriodicLayer => {
                self.features.encode(xs, y, main);
                side[0] = fs;
                side[1] = n_norm;
            }
            Variant::SoftPeriodic => {
                main[0] = xs;
                main[1] = y / self.norms.length;
                side[0] = fs;
                side[1] = n_norm;
            }
            Variant::Baseline => {
                main[0] = xs;
                main[1] = y / self.norms.length;
                main[2] = fs;
                main[3] = n_norm;
            }
        }
    }

    fn inputs(&self, pts: &[[f64; 4]]) -> (Array2<f64>, Option<Array2<f64>>) {
        let mw = self.main_width();
        let sw = self.subnets[0].side_width;
        let mut main = Array2::zeros((pts.len(), mw));
        let mut side = Array2::zeros((pts.len(), sw.max(1)));
        let mut side_buf = [0.0; 2];
        for (r, p) in pts.iter().enumerate() {
            let mut row = main.row_mut(r);
            let slice = row.as_slice_mut().expect("row-major array");
            self.encode(p[0], p[1], p[2], p[3] / self.norms.n_scale, slice, &mut side_buf);
            for k in 0..sw {
                side[[r, k]] = side_buf[k];
            }
        }
        let side = (sw > 0).then_some(side);
        (main, side)
    }

    fn forward_all(&self, main: ArrayView2<f64>, side: Option<ArrayView2<f64>>) -> Result<Vec<crate::neural::ForwardCache>> {
        self.subnets.iter().map(|net| net.forward(main, side)).collect()
    }

    /// `(u, v, p)` for a batch of `[x, y, F, N]` rows.
    pub fn predict_batch(&self, pts: &[[f64; 4]]) -> Result<Array2<f64>> {
        let (main, side) = self.inputs(pts);
        let caches = self.forward_all(main.view(), side.as_ref().map(|s| s.view()))?;
        let mut out = Array2::zeros((pts.len(), 3));
        for (k, c) in caches.iter().enumerate() {
            out.column_mut(k).assign(&c.output().column(0));
        }
        Ok(out)
    }

    pub fn predict(&self, x: f64, y: f64, f: f64, n: f64) -> (f64, f64, f64) {
        self.predict_normalized(x, y, f, n / self.norms.n_scale)
    }

    /// Same as [`predict`](Self::predict) with `N` supplied already normalized.
    pub fn predict_normalized(&self, x: f64, y: f64, f: f64, n_norm: f64) -> (f64, f64, f64) {
        let mut main = vec![0.0; self.main_width()];
        let mut side = [0.0; 2];
        self.encode(x, y, f, n_norm, &mut main, &mut side);
        let mut out = [0.0; 3];
        for (k, net) in self.subnets.iter().enumerate() {
            out[k] = forward_point(net, &main, &side);
        }
        (out[0], out[1], out[2])
    }

    /// `(u, v)` only; skips the pressure sub-network.
    pub fn predict_velocity(&self, x: f64, y: f64, f: f64, n: f64) -> (f64, f64) {
        let mut main = vec![0.0; self.main_width()];
        let mut side = [0.0; 2];
        self.encode(x, y, f, n / self.norms.n_scale, &mut main, &mut side);
        (
            forward_point(&self.subnets[0], &main, &side),
            forward_point(&self.subnets[1], &main, &side),
        )
    }

    pub fn n_params(&self) -> usize {
        self.subnets.iter().map(Mlp::n_params).sum()
    }
}

/// Single-point forward without the batch machinery.
fn forward_point(net: &Mlp, input: &[f64], side: &[f64]) -> f64 {
    let mut x: Vec<f64> = input.to_vec();
    for (k, layer) in net.layers.iter().enumerate() {
        let mut next = Vec::with_capacity(layer.outputs() + net.side_width);
        for (o, w) in layer.weights.rows().into_iter().enumerate() {
            let z = w.iter().zip(&x).fold(0.0, |acc, (a, b)| acc + a * b) + layer.bias[o];
            next.push(layer.activation.apply(z));
        }
        if net.side_after == Some(k) {
            next.extend_from_slice(&side[..net.side_width]);
        }
        x = next;
    }
    x[0]
}

fn check_nonempty<T>(items: &[T], what: &str) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Usage(format!("{what} is empty")));
    }
    Ok(())
}

/// Mean over records of the squared errors summed over `u`, `v`, `p`.
pub fn data_loss(model: &SurrogateModel, batch: &[SampleRecord]) -> Result<f64> {
    check_nonempty(batch, "batch")?;
    let pts: Vec<[f64; 4]> = batch.iter().map(|r| [r.x, r.y, r.f, f64::from(r.n)]).collect();
    let pred = model.predict_batch(&pts)?;
    let sum: f64 = batch
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let e = [pred[[k, 0]] - r.u, pred[[k, 1]] - r.v, pred[[k, 2]] - r.p];
            e.iter().map(|x| x * x).sum::<f64>()
        })
        .sum();
    Ok(sum / batch.len() as f64)
}

/// Weighted boundary loss: wall no-slip, inlet `v = 0`, inlet `p = dp`, outlet `p = 0`.
pub fn bc_loss(model: &SurrogateModel, bounds: &BoundarySets, dp: f64, weights: &LossWeights) -> Result<f64> {
    check_nonempty(&bounds.wall_points, "wall point set")?;
    check_nonempty(&bounds.inlet_points, "inlet point set")?;
    check_nonempty(&bounds.outlet_points, "outlet point set")?;
    let g = |pts: &[(f64, f64)]| -> Result<Array2<f64>> {
        let rows: Vec<[f64; 4]> = pts
            .iter()
            .map(|&(x, y)| [x, y, bounds.f, f64::from(bounds.n)])
            .collect();
        model.predict_batch(&rows)
    };
    let mean = |a: &Array2<f64>, f: &dyn Fn(f64, f64, f64) -> f64| -> f64 {
        a.rows().into_iter().map(|r| f(r[0], r[1], r[2])).sum::<f64>() / a.nrows() as f64
    };
    let wall = g(&bounds.wall_points)?;
    let inlet = g(&bounds.inlet_points)?;
    let outlet = g(&bounds.outlet_points)?;
    Ok(weights.wall * mean(&wall, &|u, v, _| u * u + v * v)
        + weights.inlet_v * mean(&inlet, &|_, v, _| v * v)
        + weights.p_io
            * (mean(&inlet, &|_, _, p| (p - dp) * (p - dp)) + mean(&outlet, &|_, _, p| p * p)))
}

/// Mean over `n_pairs` evenly spaced `x` and the three fields of the squared
/// difference between `y = 0` and `y = Dy`.
pub fn soft_periodicity_loss(model: &SurrogateModel, cell: &UnitCellGeometry, n_pairs: usize) -> Result<f64> {
    if model.variant == Variant::PeriodicLayer {
        return Err(Error::Usage(
            "the periodicity penalty is identically zero for the periodic-layer variant".into(),
        ));
    }
    periodicity_penalty(model, cell, n_pairs)
}

/// The penalty without the variant guard.
pub fn periodicity_penalty(model: &SurrogateModel, cell: &UnitCellGeometry, n_pairs: usize) -> Result<f64> {
    if n_pairs == 0 {
        return Err(Error::Usage("at least one probe pair is required".into()));
    }
    let n = f64::from(cell.n);
    let mut pts = Vec::with_capacity(2 * n_pairs);
    for k in 0..n_pairs {
        let x = (k as f64 + 0.5) * cell.dx / n_pairs as f64;
        pts.push([x, 0.0, cell.f, n]);
        pts.push([x, cell.dy, cell.f, n]);
    }
    let pred = model.predict_batch(&pts)?;
    let mut sum = 0.0;
    for k in 0..n_pairs {
        for c in 0..3 {
            let d = pred[[2 * k, c]] - pred[[2 * k + 1, c]];
            sum += d * d;
        }
    }
    Ok(sum / (3 * n_pairs) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub data_loss: f64,
    pub bc_loss: f64,
    pub periodicity_loss: f64,
    pub total: f64,
}

/// Rows of one training step and where each group starts.
struct StepBatch {
    pts: Vec<[f64; 4]>,
    targets: Vec<[f64; 3]>,
    n_wall: usize,
    n_inlet: usize,
    n_outlet: usize,
    n_pairs: usize,
}

#[derive(Default, Clone, Copy)]
struct StepLoss {
    data: f64,
    bc: f64,
    periodic: f64,
    total: f64,
}

/// Loss and gradients of one step; returns flat gradients per subnet.
fn step_gradients(model: &SurrogateModel, b: &StepBatch, cfg: &TrainConfig) -> Result<(StepLoss, Vec<Vec<f64>>)> {
    let w = &cfg.weights;
    let nd = b.targets.len();
    let (o_wall, o_in, o_out, o_pair) = (
        nd,
        nd + b.n_wall,
        nd + b.n_wall + b.n_inlet,
        nd + b.n_wall + b.n_inlet + b.n_outlet,
    );
    let (main, side) = model.inputs(&b.pts);
    let caches = model.forward_all(main.view(), side.as_ref().map(|s| s.view()))?;
    let out: Vec<&Array2<f64>> = caches.iter().map(|c| c.output()).collect();
    let mut loss = StepLoss::default();
    let mut grads = Vec::with_capacity(3);
    let inv = |n: usize| if n > 0 { 1.0 / n as f64 } else { 0.0 };
    let periodic_on = model.variant == Variant::SoftPeriodic && b.n_pairs > 0;
    for (s, net) in model.subnets.iter().enumerate() {
        let o = out[s];
        let mut g = Array2::zeros((b.pts.len(), 1));
        for r in 0..nd {
            let e = o[[r, 0]] - b.targets[r][s];
            loss.data += e * e * inv(nd);
            g[[r, 0]] = w.data * 2.0 * e * inv(nd);
        }
        for r in o_wall..o_in {
            if s < 2 {
                let e = o[[r, 0]];
                loss.bc += w.wall * e * e * inv(b.n_wall);
                g[[r, 0]] = w.wall * 2.0 * e * inv(b.n_wall);
            }
        }
        for r in o_in..o_out {
            let (lam, e) = match s {
                1 => (w.inlet_v, o[[r, 0]]),
                2 => (w.p_io, o[[r, 0]] - cfg.dp),
                _ => continue,
            };
            loss.bc += lam * e * e * inv(b.n_inlet);
            g[[r, 0]] = lam * 2.0 * e * inv(b.n_inlet);
        }
        if s == 2 {
            for r in o_out..o_pair {
                let e = o[[r, 0]];
                loss.bc += w.p_io * e * e * inv(b.n_outlet);
                g[[r, 0]] = w.p_io * 2.0 * e * inv(b.n_outlet);
            }
        }
        if periodic_on {
            let scale = inv(3 * b.n_pairs);
            for k in 0..b.n_pairs {
                let (lo, hi) = (o_pair + 2 * k, o_pair + 2 * k + 1);
                let d = o[[lo, 0]] - o[[hi, 0]];
                loss.periodic += d * d * scale;
                g[[lo, 0]] = w.periodic * 2.0 * d * scale;
                g[[hi, 0]] = -w.periodic * 2.0 * d * scale;
            }
        }
        let back = net.backward(&caches[s], g.view())?;
        grads.push(back.grads.flatten());
    }
    loss.total = w.data * loss.data + loss.bc + w.periodic * loss.periodic;
    Ok((loss, grads))
}

/// Train a fresh model of `variant` on `ds`.
pub fn train(ds: &Dataset, cfg: &TrainConfig, variant: Variant) -> Result<(SurrogateModel, Vec<HistoryRow>)> {
    check_nonempty(&ds.records, "dataset")?;
    cfg.validate(ds.records.len())?;
    let cells = ds.geometry_cells()?;
    let norms = Norms {
        period: cells.first().map_or(DEFAULT_PITCH, |c| c.dy),
        length: cells.first().map_or(DEFAULT_PITCH, |c| c.ds),
        u_scale: ds.meta.u_scale,
        ..Norms::default()
    };
    if cells.iter().any(|c| c.dy != norms.period) {
        return Err(Error::Config("all geometries must share the cell height".into()));
    }
    let mut model = SurrogateModel::new(variant, norms, *cfg)?;
    let history = train_model(&mut model, ds, &cells, cfg)?;
    Ok((model, history))
}

fn train_model(
    model: &mut SurrogateModel,
    ds: &Dataset,
    cells: &[UnitCellGeometry],
    cfg: &TrainConfig,
) -> Result<Vec<HistoryRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F_7EA1);
    let pool = |pick: fn(&BoundarySets) -> &Vec<(f64, f64)>| -> Vec<[f64; 4]> {
        ds.boundary
            .iter()
            .flat_map(|b| pick(b).iter().map(move |&(x, y)| [x, y, b.f, f64::from(b.n)]))
            .collect()
    };
    let mut wall = pool(|b| &b.wall_points);
    let mut inlet = pool(|b| &b.inlet_points);
    let mut outlet = pool(|b| &b.outlet_points);
    let mut order: Vec<usize> = (0..ds.records.len()).collect();
    let mut params: Vec<Vec<f64>> = model.subnets.iter().map(Mlp::flat_params).collect();
    let mut opt: Vec<OptimizerState> = params
        .iter()
        .map(|p| OptimizerState::new(p.len(), cfg.lr0))
        .collect();
    let n_batches = ds.records.len().div_ceil(cfg.batch);
    let chunk = |v: &[[f64; 4]], b: usize| -> std::ops::Range<usize> {
        let n = v.len();
        (b * n / n_batches)..((b + 1) * n / n_batches)
    };
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg.lr0);
        for o in &mut opt {
            o.lr = lr;
        }
        order.shuffle(&mut rng);
        wall.shuffle(&mut rng);
        inlet.shuffle(&mut rng);
        outlet.shuffle(&mut rng);
        let mut acc = StepLoss::default();
        for b in 0..n_batches {
            let ids = &order[b * ds.records.len() / n_batches..(b + 1) * ds.records.len() / n_batches];
            let mut pts: Vec<[f64; 4]> = ids
                .iter()
                .map(|&i| {
                    let r = &ds.records[i];
                    [r.x, r.y, r.f, f64::from(r.n)]
                })
                .collect();
            let targets: Vec<[f64; 3]> = ids
                .iter()
                .map(|&i| {
                    let r = &ds.records[i];
                    [r.u, r.v, r.p]
                })
                .collect();
            let (rw, ri, ro) = (chunk(&wall, b), chunk(&inlet, b), chunk(&outlet, b));
            pts.extend_from_slice(&wall[rw.clone()]);
            pts.extend_from_slice(&inlet[ri.clone()]);
            pts.extend_from_slice(&outlet[ro.clone()]);
            let n_pairs = if model.variant == Variant::SoftPeriodic {
                cfg.periodic_pairs
            } else {
                0
            };
            for _ in 0..n_pairs {
                let c = &cells[rng.gen_range(0..cells.len())];
                let x = rng.gen::<f64>() * c.dx;
                pts.push([x, 0.0, c.f, f64::from(c.n)]);
                pts.push([x, c.dy, c.f, f64::from(c.n)]);
            }
            let batch = StepBatch {
                pts,
                targets,
                n_wall: rw.len(),
                n_inlet: ri.len(),
                n_outlet: ro.len(),
                n_pairs,
            };
            let (loss, grads) = step_gradients(model, &batch, cfg)?;
            if !loss.total.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for s in 0..3 {
                adam_step(&mut opt[s], &mut params[s], &grads[s])?;
                model.subnets[s].set_flat_params(&params[s])?;
            }
            acc.data += loss.data;
            acc.bc += loss.bc;
            acc.periodic += loss.periodic;
            acc.total += loss.total;
        }
        let k = n_batches as f64;
        history.push(HistoryRow {
            epoch,
            lr,
            data_loss: acc.data / k,
            bc_loss: acc.bc / k,
            periodicity_loss: acc.periodic / k,
            total: acc.total / k,
        });
    }
    Ok(history)
}

pub fn write_history(history: &[HistoryRow], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{HISTORY_HEADER}").map_err(io)?;
    for h in history {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            h.epoch, h.lr, h.data_loss, h.bc_loss, h.periodicity_loss, h.total
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

#[derive(Serialize, Deserialize)]
struct LayerSpec {
    inputs: usize,
    outputs: usize,
    activation: Activation,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format_version: u32,
    variant: Variant,
    seed: u64,
    architecture: Vec<LayerSpec>,
    model: SurrogateModel,
}

pub fn save_model(model: &SurrogateModel, path: &Path) -> Result<()> {
    let ckpt = Checkpoint {
        format_version: MODEL_FORMAT_VERSION,
        variant: model.variant,
        seed: model.config.seed,
        architecture: model.subnets[0]
            .layers
            .iter()
            .map(|l| LayerSpec {
                inputs: l.inputs(),
                outputs: l.outputs(),
                activation: l.activation,
            })
            .collect(),
        model: model.clone(),
    };
    let json = serde_json::to_string(&ckpt)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<SurrogateModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "missing format_version".into(),
        })?;
    if found != u64::from(MODEL_FORMAT_VERSION) {
        return Err(Error::Version {
            expected: MODEL_FORMAT_VERSION,
            found: found as u32,
        });
    }
    let ckpt: Checkpoint = serde_json::from_value(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: e.to_string(),
    })?;
    let model = ckpt.model;
    if ckpt.variant != model.variant {
        return Err(Error::Validation("checkpoint variant tags disagree".into()));
    }
    let (dims, side_after, side_width) = architecture(model.variant, model.features.width());
    let ok = model.subnets.len() == 3
        && model.subnets.iter().all(|net| {
            net.side_after == side_after
                && net.side_width == side_width
                && net.layers.len() == dims.len()
                && net.layers.iter().zip(&dims).all(|(l, &(i, o, a))| {
                    l.inputs() == i && l.outputs() == o && l.activation == a && l.bias.len() == o
                })
        });
    if !ok {
        return Err(Error::Validation(format!(
            "layer shapes do not match the {} architecture",
            model.variant.tag()
        )));
    }
    Ok(model)
}

/// Load and require a specific variant.
pub fn load_model_as(path: &Path, expected: Variant) -> Result<SurrogateModel> {
    let model = load_model(path)?;
    if model.variant != expected {
        return Err(Error::VariantMismatch {
            expected: expected.tag().into(),
            found: model.variant.tag().into(),
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{build_dataset, DatasetConfig};
    use crate::neural::DenseLayer;
    use crate::testutil::{cell, synthetic};
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(variant: Variant, seed: u64) -> SurrogateModel {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::desk()
        };
        SurrogateModel::new(variant, Norms::default(), cfg).unwrap()
    }

    fn zero() -> SurrogateModel {
        SurrogateModel::zeros(Variant::PeriodicLayer, Norms::default(), TrainConfig::desk()).unwrap()
    }

    fn smoke_dataset(n: usize) -> Dataset {
        // Velocity goes to zero on the post surface so the wall term agrees with the data.
        let c = cell(0.5, 10);
        let r = c.radius();
        let f = synthetic(c.clone(), 64, |x, y| {
            let d = c.post_distance(x, y);
            let g = 1.0 - (-((d - r) / 0.05).powi(2)).exp();
            let s = (std::f64::consts::PI * y / 0.4).sin();
            (g * (0.5 + 0.5 * s * s), 0.2 * g * (std::f64::consts::TAU * x / 0.4).sin() * s)
        });
        let cfg = DatasetConfig {
            samples_per_geometry: n,
            n_wall: 40,
            n_io: 20,
            seed: 5,
        };
        build_dataset(&[f], &cfg).unwrap()
    }

    /// A soft-variant model whose three outputs are exactly `y`.
    fn y_model() -> SurrogateModel {
        let mut m = SurrogateModel::zeros(Variant::SoftPeriodic, Norms::default(), TrainConfig::desk()).unwrap();
        let layer = DenseLayer {
            weights: array![[0.0, m.norms.length]],
            bias: array![0.0],
            activation: Activation::Identity,
        };
        let net = Mlp::new(vec![layer], None, 0).unwrap();
        m.subnets = vec![net.clone(), net.clone(), net];
        m
    }

    #[test]
    fn periodic_variant_is_bit_periodic() {
        let m = random(Variant::PeriodicLayer, 3);
        for x in [0.0, 0.05, 0.2, 0.37] {
            assert_eq!(m.predict(x, 0.0, 0.5, 10.0), m.predict(x, 0.4, 0.5, 10.0));
        }
    }

    #[test]
    fn soft_variant_is_not_periodic() {
        let m = random(Variant::SoftPeriodic, 3);
        assert_ne!(m.predict(0.1, 0.0, 0.5, 10.0), m.predict(0.1, 0.4, 0.5, 10.0));
    }

    #[test]
    fn zero_model_outputs_biases() {
        let mut m = zero();
        for (k, net) in m.subnets.iter_mut().enumerate() {
            net.layers.last_mut().unwrap().bias[0] = k as f64 + 0.5;
        }
        assert_eq!(m.predict(0.1, 0.2, 0.5, 7.0), (0.5, 1.5, 2.5));
    }

    #[test]
    fn baseline_is_three_layers_of_fifty() {
        let m = random(Variant::Baseline, 1);
        for net in &m.subnets {
            let widths: Vec<usize> = net.layers.iter().map(DenseLayer::outputs).collect();
            assert_eq!(widths, vec![50, 50, 50, 1]);
            assert!(net.layers[..3].iter().all(|l| l.activation == Activation::Swish));
        }
    }

    #[test]
    fn periodic_layout_matches_description() {
        let m = random(Variant::PeriodicLayer, 1);
        let net = &m.subnets[0];
        assert_eq!(net.layers.len(), 9);
        assert_eq!(net.layers[0].activation, Activation::Tanh);
        assert_eq!(net.layers[0].outputs(), 64);
        assert_eq!(net.layers[1].inputs(), 66);
        assert!(net.layers[1..8].iter().all(|l| l.activation == Activation::Swish && l.outputs() == 64));
        assert_eq!(net.layers[8].activation, Activation::Identity);
        assert_ne!(m.subnets[0], m.subnets[1]);
    }

    #[test]
    fn data_loss_hand_values() {
        let m = zero();
        let rec = SampleRecord {
            x: 0.2,
            y: 0.2,
            f: 0.5,
            n: 10,
            u: 1.0,
            v: -1.0,
            p: 1.0,
        };
        assert_eq!(data_loss(&m, &[rec]).unwrap(), 3.0);
        let exact = SampleRecord {
            u: 0.0,
            v: 0.0,
            p: 0.0,
            ..rec
        };
        assert_eq!(data_loss(&m, &[exact]).unwrap(), 0.0);
        assert!(matches!(data_loss(&m, &[]), Err(Error::Usage(_))));
    }

    #[test]
    fn data_loss_ignores_order() {
        let ds = smoke_dataset(40);
        let m = random(Variant::PeriodicLayer, 2);
        let mut rev = ds.records.clone();
        rev.reverse();
        let a = data_loss(&m, &ds.records).unwrap();
        let b = data_loss(&m, &rev).unwrap();
        assert!((a - b).abs() <= 1e-14 * a);
    }

    #[test]
    fn bc_loss_of_zero_model_is_dp_squared() {
        let ds = smoke_dataset(10);
        let w = LossWeights::default();
        let l = bc_loss(&zero(), &ds.boundary[0], 0.1, &w).unwrap();
        assert!((l - 0.01).abs() < 1e-15);
    }

    #[test]
    fn bc_loss_is_linear_in_wall_weight() {
        let ds = smoke_dataset(10);
        let b = &ds.boundary[0];
        let m = random(Variant::PeriodicLayer, 4);
        let w1 = LossWeights::default();
        let w2 = LossWeights { wall: 2.0, ..w1 };
        let w0 = LossWeights { wall: 1e-300, ..w1 };
        let (l1, l2, l0) = (
            bc_loss(&m, b, 0.1, &w1).unwrap(),
            bc_loss(&m, b, 0.1, &w2).unwrap(),
            bc_loss(&m, b, 0.1, &w0).unwrap(),
        );
        let wall = l1 - l0;
        assert!(wall > 0.0);
        assert!((l2 - l0 - 2.0 * wall).abs() < 1e-12);
    }

    #[test]
    fn exact_boundary_model_has_zero_bc_loss() {
        // u = v = 0 and p = dp (1 - x / Dx) through single identity layers
        let ds = smoke_dataset(10);
        let mut m = y_model();
        let lin = |w: [f64; 2], b: f64| {
            let layer = DenseLayer {
                weights: array![[w[0], w[1]]],
                bias: array![b],
                activation: Activation::Identity,
            };
            Mlp::new(vec![layer], None, 0).unwrap()
        };
        let scale = m.norms.length / 0.4;
        m.subnets = vec![lin([0.0, 0.0], 0.0), lin([0.0, 0.0], 0.0), lin([-0.1 * scale, 0.0], 0.1)];
        let l = bc_loss(&m, &ds.boundary[0], 0.1, &LossWeights::default()).unwrap();
        assert!(l < 1e-30, "{l}");
    }

    #[test]
    fn empty_boundary_set_is_a_usage_error() {
        let ds = smoke_dataset(10);
        let mut b = ds.boundary[0].clone();
        b.outlet_points.clear();
        assert!(matches!(
            bc_loss(&zero(), &b, 0.1, &LossWeights::default()),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn periodicity_loss_hand_values() {
        let c = cell(0.5, 10);
        let m = y_model();
        let l = soft_periodicity_loss(&m, &c, 16).unwrap();
        assert!((l - 0.16).abs() < 1e-15, "{l}");
        let constant = SurrogateModel::zeros(Variant::SoftPeriodic, Norms::default(), TrainConfig::desk()).unwrap();
        assert_eq!(soft_periodicity_loss(&constant, &c, 8).unwrap(), 0.0);
        let p = random(Variant::PeriodicLayer, 1);
        assert!(matches!(soft_periodicity_loss(&p, &c, 8), Err(Error::Usage(_))));
        assert_eq!(periodicity_penalty(&p, &c, 8).unwrap(), 0.0);
    }

    #[test]
    fn smoke_training_reduces_data_loss() {
        let ds = smoke_dataset(200);
        let cfg = TrainConfig {
            batch: 20,
            ..TrainConfig::desk()
        };
        let (m, h) = train(&ds, &cfg, Variant::PeriodicLayer).unwrap();
        let initial = data_loss(&SurrogateModel::new(Variant::PeriodicLayer, m.norms, cfg).unwrap(), &ds.records).unwrap();
        let last = data_loss(&m, &ds.records).unwrap();
        assert!(last < 0.1 * initial, "{initial} -> {last}");
        assert_eq!(h.len(), 200);
        assert!(h.iter().enumerate().all(|(k, r)| r.epoch == k));
        assert_eq!(h[50].lr, 5e-4);
    }

    #[test]
    fn training_is_reproducible() {
        let ds = smoke_dataset(60);
        let cfg = TrainConfig {
            batch: 20,
            epochs: 5,
            ..TrainConfig::desk()
        };
        for v in [Variant::PeriodicLayer, Variant::SoftPeriodic, Variant::Baseline] {
            let (a, ha) = train(&ds, &cfg, v).unwrap();
            let (b, hb) = train(&ds, &cfg, v).unwrap();
            assert_eq!(a, b);
            assert_eq!(ha, hb);
        }
    }

    #[test]
    fn soft_training_records_a_periodicity_term() {
        let ds = smoke_dataset(60);
        let cfg = TrainConfig {
            batch: 20,
            epochs: 2,
            ..TrainConfig::desk()
        };
        let (_, h) = train(&ds, &cfg, Variant::SoftPeriodic).unwrap();
        assert!(h[0].periodicity_loss > 0.0);
        let (_, h) = train(&ds, &cfg, Variant::PeriodicLayer).unwrap();
        assert_eq!(h[0].periodicity_loss, 0.0);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let ds = smoke_dataset(20);
        let big = TrainConfig {
            batch: 21,
            ..TrainConfig::desk()
        };
        assert!(matches!(train(&ds, &big, Variant::Baseline), Err(Error::Config(_))));
        let mut neg = TrainConfig {
            batch: 10,
            ..TrainConfig::desk()
        };
        neg.weights.wall = -1.0;
        assert!(matches!(train(&ds, &neg, Variant::Baseline), Err(Error::Config(_))));
    }

    #[test]
    fn divergence_names_the_epoch() {
        let ds = smoke_dataset(20);
        let cfg = TrainConfig {
            batch: 10,
            epochs: 3,
            lr0: 1e300,
            ..TrainConfig::desk()
        };
        match train(&ds, &cfg, Variant::Baseline) {
            Err(Error::Diverged { epoch }) => assert!(epoch < 3),
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = random(Variant::PeriodicLayer, 11);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            let (x, y, f, n) = (rng.gen::<f64>() * 0.4, rng.gen::<f64>() * 0.4, rng.gen_range(0.2..0.7), f64::from(rng.gen_range(3u32..15)));
            assert_eq!(back.predict(x, y, f, n), m.predict(x, y, f, n));
        }
        assert!(load_model_as(&path, Variant::PeriodicLayer).is_ok());
    }

    #[test]
    fn truncated_checkpoint_fails_to_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&random(Variant::Baseline, 1), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, &text[..text.len() / 2]).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn wrong_version_or_variant_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&random(Variant::Baseline, 1), &path).unwrap();
        assert!(matches!(
            load_model_as(&path, Variant::PeriodicLayer),
            Err(Error::VariantMismatch { .. })
        ));
        let text = std::fs::read_to_string(&path).unwrap();
        std::fs::write(&path, text.replacen("\"format_version\":1", "\"format_version\":99", 1)).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Version { found: 99, .. })));
    }

    #[test]
    fn history_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let row = HistoryRow {
            epoch: 0,
            lr: 1e-3,
            data_loss: 1.0,
            bc_loss: 2.0,
            periodicity_loss: 0.0,
            total: 3.0,
        };
        write_history(&[row], &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "epoch,lr,data_loss,bc_loss,periodicity_loss,total\n0,0.001,1,2,0,3\n");
    }

    #[test]
    fn variant_tags_parse() {
        assert_eq!("soft".parse::<Variant>().unwrap().tag(), "soft_periodic");
        assert_eq!("periodic".parse::<Variant>().unwrap(), Variant::PeriodicLayer);
        assert!("cnn".parse::<Variant>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn periodic_in_y_for_any_input(
            x in 0.0f64..0.4, y in -1.0f64..1.0, f in 0.1f64..0.9, n in 1u32..15, k in -3i32..4,
        ) {
            let m = random(Variant::PeriodicLayer, 17);
            let shifted = y + f64::from(k) * 0.4;
            // reduction modulo the period is exact only up to rounding of the shifted value
            let a = m.predict(x, 0.0, f, f64::from(n));
            let b = m.predict(x, 0.4, f, f64::from(n));
            prop_assert_eq!(a, b);
            let c = m.predict(x, y, f, f64::from(n));
            let d = m.predict(x, shifted, f, f64::from(n));
            for (p, q) in [(c.0, d.0), (c.1, d.1), (c.2, d.2)] {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }

        #[test]
        fn n_normalization_is_equivalent(x in 0.0f64..0.4, y in 0.0f64..0.4, n in 1u32..15) {
            let m = random(Variant::PeriodicLayer, 5);
            let n = f64::from(n);
            prop_assert_eq!(m.predict(x, y, 0.5, n), m.predict_normalized(x, y, 0.5, n / m.norms.n_scale));
        }

        #[test]
        fn velocity_path_matches_full_prediction(x in 0.0f64..0.4, y in 0.0f64..0.4) {
            let m = random(Variant::Baseline, 8);
            let (u, v, _) = m.predict(x, y, 0.4, 9.0);
            prop_assert_eq!(m.predict_velocity(x, y, 0.4, 9.0), (u, v));
        }
    }
}

//! Massless particle tracing through a flow source, zig-zag/bumped
//! classification and critical-diameter bisection.
//!
//! The flow is solved on an untilted cell. The array tilt is realized here as
//! a frame change: each time the particle crosses the column midline
//! `x = Dx / 2` its local `y` is lowered by `epsilon`, so the next column's
//! posts sit `epsilon` higher in the device frame. `x` itself wraps at `Dx`
//! without a shift.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::geometry::UnitCellGeometry;
use crate::surrogate::SurrogateModel;

/// Velocity provider for the tracer.
#[derive(Clone, Copy)]
pub enum FlowSource<'a> {
    /// Gridded oracle field, bilinear interpolation.
    Grid(&'a FlowField),
    /// Surrogate evaluated directly at a fixed geometry.
    Surrogate {
        model: &'a SurrogateModel,
        cell: &'a UnitCellGeometry,
    },
    /// Closed-form field without solids.
    Analytic(&'a dyn Fn(f64, f64) -> (f64, f64)),
}

impl FlowSource<'_> {
    pub fn cell(&self) -> Option<&UnitCellGeometry> {
        match self {
            FlowSource::Grid(f) => Some(&f.cell),
            FlowSource::Surrogate { cell, .. } => Some(cell),
            FlowSource::Analytic(_) => None,
        }
    }

    /// Natural length scale for step control.
    fn spacing(&self) -> f64 {
        match self {
            FlowSource::Grid(f) => f.hx().min(f.hy()),
            FlowSource::Surrogate { cell, .. } => cell.dx.min(cell.dy) / 256.0,
            FlowSource::Analytic(_) => 1e-3,
        }
    }
}

pub fn velocity_at(src: &FlowSource, x: f64, y: f64) -> Result<(f64, f64)> {
    match src {
        FlowSource::Analytic(f) => Ok(f(x, y)),
        FlowSource::Grid(field) => {
            if field.is_solid(x, y) {
                return Err(Error::SolidQuery { x, y });
            }
            Ok(field.velocity(x, y))
        }
        FlowSource::Surrogate { model, cell } => {
            if cell.is_solid_periodic(x, y) {
                return Err(Error::SolidQuery { x, y });
            }
            let xw = x.rem_euclid(cell.dx);
            let yw = cell.wrap_y(y);
            Ok(model.predict_velocity(xw, yw, cell.f, f64::from(cell.n)))
        }
    }
}

/// Classical fourth-order Runge-Kutta step of `dx/dt = v(x)`.
pub fn step_rk4(src: &FlowSource, pos: (f64, f64), dt: f64) -> Result<(f64, f64)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step must be positive, got {dt}")));
    }
    let (x, y) = pos;
    let k1 = velocity_at(src, x, y)?;
    let k2 = velocity_at(src, x + 0.5 * dt * k1.0, y + 0.5 * dt * k1.1)?;
    let k3 = velocity_at(src, x + 0.5 * dt * k2.0, y + 0.5 * dt * k2.1)?;
    let k4 = velocity_at(src, x + dt * k3.0, y + dt * k3.1)?;
    Ok((
        x + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        y + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    ))
}

/// Put `pos` back on the effective-radius circle and reverse the normal
/// component of `velocity`.
pub fn resolve_collision(
    pos: (f64, f64),
    velocity: (f64, f64),
    center: (f64, f64),
    effective_radius: f64,
) -> Result<((f64, f64), (f64, f64))> {
    reflect(pos, velocity, center, effective_radius, ContactModel::Reverse)
}

fn reflect(
    pos: (f64, f64),
    velocity: (f64, f64),
    center: (f64, f64),
    r: f64,
    contact: ContactModel,
) -> Result<((f64, f64), (f64, f64))> {
    let (dx, dy) = (pos.0 - center.0, pos.1 - center.1);
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(Error::Degenerate(
            "particle position coincides with the post center".into(),
        ));
    }
    let (nx, ny) = (dx / d, dy / d);
    let vn = velocity.0 * nx + velocity.1 * ny;
    let k = match contact {
        ContactModel::Reverse => 2.0,
        ContactModel::Slide => 1.0,
    };
    // only an inward normal component is acted on
    let vn = if vn < 0.0 || contact == ContactModel::Reverse { vn } else { 0.0 };
    let v = (velocity.0 - k * vn * nx, velocity.1 - k * vn * ny);
    Ok(((center.0 + r * nx, center.1 + r * ny), v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactModel {
    /// Normal velocity reversed, tangential kept.
    Reverse,
    /// Normal velocity removed.
    Slide,
}

/// Where and how the per-column row shift is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftRule {
    /// `y -= epsilon` when `x` wraps at `Dx`.
    Wrap,
    /// `y -= epsilon` when the particle crosses `x = Dx / 2`.
    Midline,
    /// At `x = Dx / 2`, move the particle across exactly `1/N` of the
    /// cell flux: `psi(y') = psi(y) - Q / N`.
    FluxMidline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Zigzag,
    Bumped,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceOptions {
    /// Target step length as a fraction of the source spacing.
    pub step_factor: f64,
    /// Overrides the source spacing when set.
    pub spacing: Option<f64>,
    /// Step budget per column traversal.
    pub max_steps_per_column: usize,
    pub contact: ContactModel,
    pub shift: ShiftRule,
    /// Keep every step in the trajectory.
    pub record: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            step_factor: 0.5,
            spacing: None,
            max_steps_per_column: 200_000,
            contact: ContactModel::Reverse,
            shift: ShiftRule::FluxMidline,
            record: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub x_device: f64,
    pub y_device: f64,
    /// Negative while swept back upstream of the launch column.
    pub column: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WrapEvent {
    pub column: i64,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TracePoint>,
    pub wrap_events: Vec<WrapEvent>,
    pub mode: Mode,
    pub dy_device: f64,
    pub steps: usize,
}

struct Tracer<'s, 'a> {
    src: &'s FlowSource<'a>,
    cell: UnitCellGeometry,
    r_eff: f64,
    h: f64,
    opts: TraceOptions,
}

impl Tracer<'_, '_> {
    fn post_hit(&self, p: (f64, f64)) -> Option<(f64, f64)> {
        let c = self.cell.nearest_post(p.0, p.1);
        ((p.0 - c.0).hypot(p.1 - c.1) < self.r_eff).then_some(c)
    }

    /// Advance one step from `p`, resolving post contact. Returns the new
    /// position and the time taken.
    fn advance(&self, p: (f64, f64)) -> Result<((f64, f64), f64)> {
        let v = velocity_at(self.src, p.0, p.1)?;
        let speed = v.0.hypot(v.1);
        if !speed.is_finite() {
            return Err(Error::Stall {
                steps: 0,
                x: p.0,
                y: p.1,
            });
        }
        let len = self.opts.step_factor * self.h;
        let mut dt = len / speed.max(1e-12);
        let mut q = None;
        for _ in 0..30 {
            match step_rk4(self.src, p, dt) {
                Ok(n) => {
                    q = Some(n);
                    break;
                }
                Err(Error::SolidQuery { .. }) => dt *= 0.5,
                Err(e) => return Err(e),
            }
        }
        // very close to a wall: fall back to an Euler step from a fluid point
        let q = q.unwrap_or((p.0 + dt * v.0, p.1 + dt * v.1));
        let Some(c) = self.post_hit(q) else {
            return Ok((q, dt));
        };
        let d = (q.0 - p.0, q.1 - p.1);
        let t_c = segment_entry(p, d, c, self.r_eff);
        let contact = (p.0 + t_c * d.0, p.1 + t_c * d.1);
        let vel = (d.0 / dt, d.1 / dt);
        let (on, v2) = reflect(contact, vel, c, self.r_eff, self.opts.contact)?;
        let rest = (1.0 - t_c) * dt;
        let mut out = (on.0 + rest * v2.0, on.1 + rest * v2.1);
        if let Some(c2) = self.post_hit(out) {
            out = self.project(out, c2)?;
        }
        Ok((out, dt))
    }

    fn project(&self, p: (f64, f64), c: (f64, f64)) -> Result<(f64, f64)> {
        let (dx, dy) = (p.0 - c.0, p.1 - c.1);
        let d = dx.hypot(dy);
        if d == 0.0 {
            return Err(Error::Degenerate(
                "particle position coincides with the post center".into(),
            ));
        }
        Ok((c.0 + self.r_eff * dx / d, c.1 + self.r_eff * dy / d))
    }
}

/// Cumulative x-flux along the vertical line `x = x0`, periodic in `y`.
struct FluxTable {
    dy: f64,
    psi: Vec<f64>,
    total: f64,
}

impl FluxTable {
    fn new(src: &FlowSource, cell: &UnitCellGeometry, x0: f64, m: usize) -> Result<Self> {
        let h = cell.dy / m as f64;
        let u: Vec<f64> = (0..=m)
            .map(|k| velocity_at(src, x0, k as f64 * h).map(|v| v.0))
            .collect::<Result<_>>()?;
        let mut psi = vec![0.0; m + 1];
        for k in 0..m {
            // keep psi strictly increasing so the inverse exists
            psi[k + 1] = psi[k] + (0.5 * h * (u[k] + u[k + 1])).max(1e-300);
        }
        let total = psi[m];
        if !(total > 0.0) {
            return Err(Error::Degenerate("no net flux across the column midline".into()));
        }
        Ok(Self {
            dy: cell.dy,
            psi,
            total,
        })
    }

    fn h(&self) -> f64 {
        self.dy / (self.psi.len() - 1) as f64
    }

    fn psi_at(&self, y: f64) -> f64 {
        let k = (y / self.dy).floor();
        let r = y - k * self.dy;
        let s = (r / self.h()).clamp(0.0, (self.psi.len() - 1) as f64);
        let i = (s.floor() as usize).min(self.psi.len() - 2);
        let t = s - i as f64;
        k * self.total + self.psi[i] * (1.0 - t) + self.psi[i + 1] * t
    }

    fn y_at(&self, psi: f64) -> f64 {
        let k = (psi / self.total).floor();
        let r = psi - k * self.total;
        let i = self.psi.partition_point(|&p| p <= r).clamp(1, self.psi.len() - 1) - 1;
        let t = ((r - self.psi[i]) / (self.psi[i + 1] - self.psi[i])).clamp(0.0, 1.0);
        k * self.dy + (i as f64 + t) * self.h()
    }

    /// Move `y` down across `fraction` of the total flux.
    fn shift(&self, y: f64, fraction: f64) -> f64 {
        self.y_at(self.psi_at(y) - fraction * self.total)
    }
}

/// Fraction along `p + t d`, `t` in `[0, 1]`, where the circle is entered.
fn segment_entry(p: (f64, f64), d: (f64, f64), c: (f64, f64), r: f64) -> f64 {
    let (fx, fy) = (p.0 - c.0, p.1 - c.1);
    let a = d.0 * d.0 + d.1 * d.1;
    let c0 = fx * fx + fy * fy - r * r;
    if a == 0.0 || c0 <= 0.0 {
        return 0.0;
    }
    let b = 2.0 * (fx * d.0 + fy * d.1);
    let disc = (b * b - 4.0 * a * c0).max(0.0);
    ((-b - disc.sqrt()) / (2.0 * a)).clamp(0.0, 1.0)
}

/// Trace a particle of diameter `dp` through `columns` post columns.
pub fn trace_particle(
    src: &FlowSource,
    dp: f64,
    columns: usize,
    opts: &TraceOptions,
) -> Result<Trajectory> {
    let cell = *src
        .cell()
        .ok_or_else(|| Error::Usage("tracing needs a source with geometry".into()))?;
    if !(dp > 0.0 && dp < cell.gap) {
        return Err(Error::Domain(format!(
            "particle diameter {dp} must lie in (0, gap = {})",
            cell.gap
        )));
    }
    let tracer = Tracer {
        src,
        cell,
        r_eff: cell.radius() + 0.5 * dp,
        h: opts.spacing.unwrap_or_else(|| src.spacing()),
        opts: *opts,
    };
    let half = 0.5 * cell.dx;
    let flux = match opts.shift {
        ShiftRule::FluxMidline => Some(FluxTable::new(src, &cell, half, 1024)?),
        _ => None,
    };
    let y_start = cell.radius() + 0.5 * dp;
    let mut p = (0.0, y_start);
    let mut t = 0.0;
    let mut column = 0i64;
    let mut shifts = 0i64;
    let mut steps = 0usize;
    let mut col_steps = 0usize;
    let mut furthest = 0i64;
    let mut points = Vec::new();
    let mut wrap_events = Vec::new();
    let device = |p: (f64, f64), column: i64, shifts: i64| {
        (p.0 + column as f64 * cell.dx, p.1 + shifts as f64 * cell.epsilon)
    };
    let mut record = |t: f64, p: (f64, f64), column: i64, shifts: i64| {
        if opts.record {
            let (xd, yd) = device(p, column, shifts);
            points.push(TracePoint {
                t,
                x_device: xd,
                y_device: yd,
                column,
            });
        }
    };
    record(t, p, column, shifts);
    let target = i64::try_from(columns)
        .map_err(|_| Error::Domain(format!("column count {columns} too large")))?;
    while column < target {
        let (mut q, dt) = tracer.advance(p)?;
        t += dt;
        steps += 1;
        col_steps += 1;
        let mid_cross = p.0 < half && q.0 >= half && shifts == column;
        let wrap_cross = q.0 >= cell.dx && shifts == column;
        let shifted = match opts.shift {
            ShiftRule::Midline if mid_cross => Some(q.1 - cell.epsilon),
            ShiftRule::FluxMidline if mid_cross => {
                let table = flux.as_ref().expect("flux table built for this rule");
                Some(table.shift(q.1, 1.0 / f64::from(cell.n)))
            }
            ShiftRule::Wrap if wrap_cross => Some(q.1 - cell.epsilon),
            _ => None,
        };
        if let Some(y_new) = shifted {
            wrap_events.push(WrapEvent {
                column,
                shift: y_new - q.1,
            });
            q.1 = y_new;
            shifts += 1;
            if let Some(c) = tracer.post_hit(q) {
                q = tracer.project(q, c)?;
            }
        }
        if q.0 >= cell.dx {
            q.0 -= cell.dx;
            column += 1;
            if column > furthest {
                furthest = column;
                col_steps = 0;
            }
        } else if q.0 < 0.0 {
            // backward excursion into the upstream column
            q.0 += cell.dx;
            column -= 1;
        }
        p = q;
        record(t, p, column, shifts);
        if col_steps > opts.max_steps_per_column {
            return Err(Error::Stall {
                steps,
                x: p.0,
                y: p.1,
            });
        }
    }
    let dy_device = (p.1 + shifts as f64 * cell.epsilon) - y_start;
    let mode = if columns == 0 {
        Mode::Undetermined
    } else if dy_device >= 0.5 * columns as f64 * cell.epsilon {
        Mode::Bumped
    } else {
        Mode::Zigzag
    };
    Ok(Trajectory {
        points,
        wrap_events,
        mode,
        dy_device,
        steps,
    })
}

/// Trace through `N` columns and classify.
pub fn classify_mode(src: &FlowSource, dp: f64, opts: &TraceOptions) -> Result<Mode> {
    let n = src
        .cell()
        .ok_or_else(|| Error::Usage("classification needs a source with geometry".into()))?
        .n as usize;
    Ok(trace_particle(src, dp, n, opts)?.mode)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeEval {
    pub dp: f64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcResult {
    pub f: f64,
    pub n: u32,
    pub dc: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub log: Vec<ModeEval>,
}

/// Bisect the zig-zag/bumped threshold over `[0.01, 0.99] gap`.
pub fn critical_diameter(src: &FlowSource, tol: f64, opts: &TraceOptions) -> Result<DcResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let cell = *src
        .cell()
        .ok_or_else(|| Error::Usage("bisection needs a source with geometry".into()))?;
    let mut log = Vec::new();
    let mut eval = |dp: f64| -> Result<Mode> {
        let mode = classify_mode(src, dp, opts)?;
        log.push(ModeEval { dp, mode });
        Ok(mode)
    };
    let mut low = 0.01 * cell.gap;
    let mut high = 0.99 * cell.gap;
    let low_mode = eval(low)?;
    let high_mode = eval(high)?;
    if low_mode != Mode::Zigzag || high_mode != Mode::Bumped {
        return Err(Error::NoCrossing {
            low,
            high,
            low_mode: format!("{low_mode:?}"),
            high_mode: format!("{high_mode:?}"),
        });
    }
    while high - low >= tol {
        let mid = 0.5 * (low + high);
        match eval(mid)? {
            Mode::Bumped => high = mid,
            _ => low = mid,
        }
    }
    Ok(DcResult {
        f: cell.f,
        n: cell.n,
        dc: 0.5 * (low + high),
        bracket: (low, high),
        evaluations: log.len(),
        log,
    })
}

pub fn write_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "t,x_device,y_device,column").map_err(io)?;
    for p in &traj.points {
        writeln!(w, "{},{},{},{}", p.t, p.x_device, p.y_device, p.column).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_dc_result(res: &DcResult, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(res)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

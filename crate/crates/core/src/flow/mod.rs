//! Built-in flow oracle: steady laminar flow through the periodic unit cell.
//!
//! [`solve_steady`] produces a [`FlowField`] sampled on the `(nx + 1) x (ny + 1)`
//! cell-corner nodes, including both copies of the periodic boundary rows so
//! that bilinear interpolation covers the closed cell without wrapping.

mod solver;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{make_cell, reynolds, ReynoldsSpec, UnitCellGeometry};

use solver::{Domain, StokesSystem};

pub const FIELD_FORMAT_VERSION: u32 = 1;

/// What occupies the cell besides fluid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellLayout {
    /// Four corner posts, periodic in x and y.
    Posts,
    /// No obstacles, periodic in x and y. Nothing resists a pressure drive
    /// here, so the steady problem is posed with a prescribed unit mean
    /// velocity instead of the body force; the linear drop is still added to
    /// the reconstructed pressure.
    Empty,
    /// No posts, no-slip walls at `y = 0` and `y = Dy`; periodic in x.
    Channel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Pressure drop across one cell.
    pub dp: f64,
    pub nx: usize,
    pub ny: usize,
    /// Relative velocity change between defect-correction sweeps.
    pub tol: f64,
    pub max_iters: usize,
    pub rho: f64,
    pub mu: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dp: 0.1,
            nx: 256,
            ny: 256,
            tol: 1e-8,
            max_iters: 200,
            rho: 1.0,
            mu: 1.0,
        }
    }
}

/// Constants that map raw solver output to the stored field:
/// `p = p_scale * p_raw + p_offset`, `u = u_raw / u_scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleMeta {
    pub p_offset: f64,
    pub p_scale: f64,
    pub u_scale: f64,
}

impl ScaleMeta {
    pub const IDENTITY: ScaleMeta = ScaleMeta {
        p_offset: 0.0,
        p_scale: 1.0,
        u_scale: 1.0,
    };
}

/// Node-sampled solver output in the solver's own units.
#[derive(Debug, Clone)]
pub struct RawFlow {
    pub cell: UnitCellGeometry,
    pub layout: CellLayout,
    pub nx: usize,
    pub ny: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub solid: Vec<bool>,
    pub dp: f64,
    pub rho: f64,
    pub mu: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub cell: UnitCellGeometry,
    pub layout: CellLayout,
    pub nx: usize,
    pub ny: usize,
    /// Node values, index `j * (nx + 1) + i` for node `(i hx, j hy)`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub p: Vec<f64>,
    pub solid: Vec<bool>,
    pub scale: ScaleMeta,
    /// Nondimensional pressure drop (inlet average minus outlet average).
    pub dp: f64,
    pub rho: f64,
    pub mu: f64,
    pub iterations: usize,
    pub residual: f64,
    pub reynolds: f64,
}

/// Sidecar metadata written next to a field CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldMeta {
    pub format_version: u32,
    pub geometry: UnitCellGeometry,
    pub layout: CellLayout,
    pub nx: usize,
    pub ny: usize,
    pub dp: f64,
    pub scale: ScaleMeta,
    pub rho: f64,
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
    pub reynolds: f64,
}

/// Solve the post-array cell with the given pressure drop and grid.
pub fn solve_steady(
    cell: &UnitCellGeometry,
    dp: f64,
    nx: usize,
    ny: usize,
    tol: f64,
    max_iters: usize,
) -> Result<FlowField> {
    let cfg = FlowConfig {
        dp,
        nx,
        ny,
        tol,
        max_iters,
        ..FlowConfig::default()
    };
    solve_with(cell, CellLayout::Posts, &cfg)
}

/// Solve any layout and nondimensionalize with the field's own `max |u|`.
pub fn solve_with(cell: &UnitCellGeometry, layout: CellLayout, cfg: &FlowConfig) -> Result<FlowField> {
    let raw = solve_raw(cell, layout, cfg)?;
    let u_scale = raw.u.iter().fold(0.0f64, |m, &u| m.max(u.abs()));
    nondimensionalize(&raw, cfg.dp, u_scale)
}

fn validate_config(cell: &UnitCellGeometry, layout: CellLayout, cfg: &FlowConfig) -> Result<()> {
    if cfg.nx < 64 || cfg.ny < 64 {
        return Err(Error::Config(format!(
            "grid must be at least 64 x 64, got {} x {}",
            cfg.nx, cfg.ny
        )));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    if !(cfg.mu > 0.0) || !(cfg.rho >= 0.0) {
        return Err(Error::Config("viscosity must be positive and density non-negative".into()));
    }
    if !cfg.dp.is_finite() || cfg.dp == 0.0 {
        return Err(Error::Config("pressure drop must be finite and non-zero".into()));
    }
    if layout == CellLayout::Posts {
        let h = (cell.dx / cfg.nx as f64).max(cell.dy / cfg.ny as f64);
        let gap_cells = cell.gap / h;
        if gap_cells < 4.0 {
            return Err(Error::Resolution { gap_cells });
        }
    }
    Ok(())
}

/// Run the solver and map the staggered solution onto cell-corner nodes.
pub fn solve_raw(cell: &UnitCellGeometry, layout: CellLayout, cfg: &FlowConfig) -> Result<RawFlow> {
    validate_config(cell, layout, cfg)?;
    let dom = Domain { cell, layout };
    let system = StokesSystem::new(&dom, *cfg);
    let sol = system.solve()?;

    let (nx, ny) = (cfg.nx, cfg.ny);
    let hx = cell.dx / nx as f64;
    let hy = cell.dy / ny as f64;
    let w = nx + 1;
    let n_nodes = w * (ny + 1);
    let wrap = |i: isize, n: usize| i.rem_euclid(n as isize) as usize;
    let face = |arr: &[f64], i: isize, j: isize| arr[wrap(j, ny) * nx + wrap(i, nx)];

    let mut u = vec![0.0; n_nodes];
    let mut v = vec![0.0; n_nodes];
    let mut p_per: Vec<Option<f64>> = vec![None; n_nodes];
    let mut solid = vec![false; n_nodes];
    for j in 0..=ny {
        for i in 0..=nx {
            let k = j * w + i;
            let (x, y) = (i as f64 * hx, j as f64 * hy);
            let (ii, jj) = (i as isize, j as isize);
            solid[k] = dom.is_solid(x, y);
            if !solid[k] {
                u[k] = 0.5 * (face(&sol.u, ii, jj - 1) + face(&sol.u, ii, jj));
                v[k] = 0.5 * (face(&sol.v, ii - 1, jj) + face(&sol.v, ii, jj));
            }
            let cells = [(ii - 1, jj - 1), (ii, jj - 1), (ii - 1, jj), (ii, jj)];
            let known: Vec<f64> = cells
                .iter()
                .filter_map(|&(ci, cj)| sol.p[wrap(cj, ny) * nx + wrap(ci, nx)])
                .collect();
            if !known.is_empty() {
                p_per[k] = Some(known.iter().sum::<f64>() / known.len() as f64);
            }
        }
    }
    // the x = Dx column must repeat x = 0 exactly for the periodic part
    for j in 0..=ny {
        p_per[j * w + nx] = p_per[j * w];
    }
    let p_per = fill_missing(p_per, w, ny + 1);
    let p: Vec<f64> = p_per
        .iter()
        .enumerate()
        .map(|(k, &pp)| {
            let x = (k % w) as f64 * hx;
            pp + cfg.dp * (1.0 - x / cell.dx)
        })
        .collect();

    Ok(RawFlow {
        cell: *cell,
        layout,
        nx,
        ny,
        u,
        v,
        p,
        solid,
        dp: cfg.dp,
        rho: cfg.rho,
        mu: cfg.mu,
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Extend known node values into unknown ones by repeated neighbor averaging.
fn fill_missing(mut vals: Vec<Option<f64>>, w: usize, h: usize) -> Vec<f64> {
    loop {
        let missing: Vec<usize> = (0..vals.len()).filter(|&k| vals[k].is_none()).collect();
        if missing.is_empty() {
            break;
        }
        let mut updates = Vec::new();
        for &k in &missing {
            let (i, j) = (k % w, k / w);
            let mut sum = 0.0;
            let mut cnt = 0;
            let nbs = [
                (i.wrapping_sub(1), j),
                (i + 1, j),
                (i, j.wrapping_sub(1)),
                (i, j + 1),
            ];
            for (a, b) in nbs {
                if a < w && b < h {
                    if let Some(val) = vals[b * w + a] {
                        sum += val;
                        cnt += 1;
                    }
                }
            }
            if cnt > 0 {
                updates.push((k, sum / cnt as f64));
            }
        }
        if updates.is_empty() {
            // nothing known at all
            return vals.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        }
        for (k, val) in updates {
            vals[k] = Some(val);
        }
    }
    vals.into_iter().map(|v| v.unwrap_or(0.0)).collect()
}

fn column_mean(vals: &[f64], solid: &[bool], w: usize, rows: usize, i: usize) -> Option<f64> {
    let (sum, cnt) = (0..rows)
        .map(|j| j * w + i)
        .filter(|&k| !solid[k])
        .fold((0.0, 0usize), |(s, c), k| (s + vals[k], c + 1));
    (cnt > 0).then(|| sum / cnt as f64)
}

/// Shift and scale pressure so the inlet-column fluid average is `dp` and the
/// outlet average is zero, and divide velocities by `u_scale`.
pub fn nondimensionalize(raw: &RawFlow, dp: f64, u_scale: f64) -> Result<FlowField> {
    if !(u_scale.is_finite() && u_scale > 0.0) {
        return Err(Error::Domain(format!(
            "velocity scale must be positive, got {u_scale}"
        )));
    }
    let w = raw.nx + 1;
    let rows = raw.ny + 1;
    let p_in = column_mean(&raw.p, &raw.solid, w, rows, 0)
        .ok_or_else(|| Error::Domain("inlet column has no fluid nodes".into()))?;
    let p_out = column_mean(&raw.p, &raw.solid, w, rows, raw.nx)
        .ok_or_else(|| Error::Domain("outlet column has no fluid nodes".into()))?;
    let drop = p_in - p_out;
    if drop == 0.0 {
        return Err(Error::Domain("raw pressure drop is zero".into()));
    }
    let p_scale = dp / drop;
    let scale = ScaleMeta {
        p_offset: -p_scale * p_out,
        p_scale,
        u_scale,
    };
    let hy = raw.cell.dy / raw.ny as f64;
    let flux: f64 = (0..raw.ny).map(|j| raw.u[j * w] * hy).sum();
    let re = match raw.layout {
        CellLayout::Posts | CellLayout::Channel if raw.rho > 0.0 && flux > 0.0 => {
            let l = match raw.layout {
                CellLayout::Posts => raw.cell.gap,
                _ => raw.cell.dy,
            };
            ReynoldsSpec::new(raw.rho, flux / raw.cell.dy, l, raw.mu)
                .map(|s| reynolds(&s))
                .unwrap_or(0.0)
        }
        _ => 0.0,
    };
    Ok(FlowField {
        cell: raw.cell,
        layout: raw.layout,
        nx: raw.nx,
        ny: raw.ny,
        u: raw.u.iter().map(|&u| u / u_scale).collect(),
        v: raw.v.iter().map(|&v| v / u_scale).collect(),
        p: raw.p.iter().map(|&p| p_scale * p + scale.p_offset).collect(),
        solid: raw.solid.clone(),
        scale,
        dp,
        rho: raw.rho,
        mu: raw.mu,
        iterations: raw.iterations,
        residual: raw.residual,
        reynolds: re,
    })
}

/// Fully developed channel profile `u_max (1 - (y/h)^2)`, `y` measured from the centerline.
pub fn poiseuille_reference(y: f64, h: f64, u_max: f64) -> Result<f64> {
    if !(h > 0.0) || y.abs() > h {
        return Err(Error::Domain(format!("|y| = {} exceeds half-height {h}", y.abs())));
    }
    let r = y / h;
    Ok(u_max * (1.0 - r * r))
}

impl FlowField {
    pub fn hx(&self) -> f64 {
        self.cell.dx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.cell.dy / self.ny as f64
    }

    pub fn node_index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn node_xy(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.hx(), j as f64 * self.hy())
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Layout-aware solid test; coordinates are taken periodically.
    pub fn is_solid(&self, x: f64, y: f64) -> bool {
        match self.layout {
            CellLayout::Posts => self.cell.is_solid_periodic(x, y),
            CellLayout::Empty => false,
            CellLayout::Channel => y <= 0.0 || y >= self.cell.dy,
        }
    }

    pub fn max_speed(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.v)
            .fold(0.0f64, |m, (&u, &v)| m.max(u.hypot(v)))
    }

    /// Locate `(x, y)` in the node grid: lower-left node and local offsets.
    fn locate(&self, x: f64, y: f64) -> (usize, usize, f64, f64) {
        // snap coordinates that are nodes up to rounding
        let snap = |s: f64| if (s - s.round()).abs() < 1e-9 { s.round() } else { s };
        let sx = snap(x / self.hx()).clamp(0.0, self.nx as f64);
        let sy = snap(y / self.hy()).clamp(0.0, self.ny as f64);
        let i = (sx.floor() as usize).min(self.nx - 1);
        let j = (sy.floor() as usize).min(self.ny - 1);
        (i, j, sx - i as f64, sy - j as f64)
    }

    fn bilinear(&self, arr: &[f64], x: f64, y: f64) -> f64 {
        let (i, j, fx, fy) = self.locate(x, y);
        let k00 = self.node_index(i, j);
        let k10 = k00 + 1;
        let k01 = k00 + self.nx + 1;
        let k11 = k01 + 1;
        // exact at nodes: zero weights drop the other corners
        let a = arr[k00] * (1.0 - fx) + arr[k10] * fx;
        let b = arr[k01] * (1.0 - fx) + arr[k11] * fx;
        if fy == 0.0 {
            a
        } else {
            a * (1.0 - fy) + b * fy
        }
    }

    fn wrap_point(&self, x: f64, y: f64) -> (f64, f64) {
        let wx = if (0.0..=self.cell.dx).contains(&x) {
            x
        } else {
            x.rem_euclid(self.cell.dx)
        };
        let wy = match self.layout {
            CellLayout::Channel => y.clamp(0.0, self.cell.dy),
            _ if (0.0..=self.cell.dy).contains(&y) => y,
            _ => y.rem_euclid(self.cell.dy),
        };
        (wx, wy)
    }

    /// Bilinearly interpolated velocity; periodic in x and (for periodic layouts) y.
    pub fn velocity(&self, x: f64, y: f64) -> (f64, f64) {
        let (x, y) = self.wrap_point(x, y);
        (self.bilinear(&self.u, x, y), self.bilinear(&self.v, x, y))
    }

    /// Bilinearly interpolated pressure for a point inside the closed cell.
    pub fn pressure(&self, x: f64, y: f64) -> f64 {
        let y = self.wrap_point(0.0, y).1;
        self.bilinear(&self.p, x.clamp(0.0, self.cell.dx), y)
    }

    pub fn sample(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let (u, v) = self.velocity(x, y);
        (u, v, self.pressure(x, y))
    }

    /// Volumetric x-flux through node column `i`.
    pub fn column_flux(&self, i: usize) -> f64 {
        let hy = self.hy();
        (0..self.ny).map(|j| self.u[self.node_index(i, j)] * hy).sum()
    }

    pub fn inlet_pressure(&self) -> f64 {
        column_mean(&self.p, &self.solid, self.nx + 1, self.ny + 1, 0).unwrap_or(f64::NAN)
    }

    pub fn outlet_pressure(&self) -> f64 {
        column_mean(&self.p, &self.solid, self.nx + 1, self.ny + 1, self.nx).unwrap_or(f64::NAN)
    }

    /// Undo the stored scaling.
    pub fn to_raw(&self) -> RawFlow {
        let s = self.scale;
        RawFlow {
            cell: self.cell,
            layout: self.layout,
            nx: self.nx,
            ny: self.ny,
            u: self.u.iter().map(|&u| u * s.u_scale).collect(),
            v: self.v.iter().map(|&v| v * s.u_scale).collect(),
            p: self.p.iter().map(|&p| (p - s.p_offset) / s.p_scale).collect(),
            solid: self.solid.clone(),
            dp: self.dp / s.p_scale,
            rho: self.rho,
            mu: self.mu,
            iterations: self.iterations,
            residual: self.residual,
        }
    }

    /// Re-express the field with a different velocity scale.
    pub fn rescaled(&self, u_scale: f64) -> Result<FlowField> {
        nondimensionalize(&self.to_raw(), self.dp, u_scale)
    }

    pub fn meta(&self) -> FieldMeta {
        FieldMeta {
            format_version: FIELD_FORMAT_VERSION,
            geometry: self.cell,
            layout: self.layout,
            nx: self.nx,
            ny: self.ny,
            dp: self.dp,
            scale: self.scale,
            rho: self.rho,
            mu: self.mu,
            residual: self.residual,
            iterations: self.iterations,
            reynolds: self.reynolds,
        }
    }
}

/// Path of the JSON sidecar for a CSV artifact.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Write `x,y,u,v,p,solid` rows in row-major node order plus the JSON sidecar.
pub fn write_field(field: &FlowField, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "x,y,u,v,p,solid").map_err(io)?;
    for j in 0..=field.ny {
        for i in 0..=field.nx {
            let k = field.node_index(i, j);
            let (x, y) = field.node_xy(i, j);
            writeln!(
                w,
                "{x},{y},{},{},{},{}",
                field.u[k],
                field.v[k],
                field.p[k],
                u8::from(field.solid[k])
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&field.meta())?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FlowField> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: FieldMeta = serde_json::from_str(&text)?;
    if meta.format_version != FIELD_FORMAT_VERSION {
        return Err(Error::Version {
            expected: FIELD_FORMAT_VERSION,
            found: meta.format_version,
        });
    }
    // recompute derived geometry rather than trusting the file
    let cell = make_cell(meta.geometry.f, meta.geometry.n, meta.geometry.ds)?;
    let n_nodes = (meta.nx + 1) * (meta.ny + 1);
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let (mut u, mut v, mut p, mut solid) = (
        Vec::with_capacity(n_nodes),
        Vec::with_capacity(n_nodes),
        Vec::with_capacity(n_nodes),
        Vec::with_capacity(n_nodes),
    );
    for (ln, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = ln + 1;
        if ln == 0 {
            if line.trim() != "x,y,u,v,p,solid" {
                return Err(parse_err(lineno, format!("unexpected header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 6 {
            return Err(parse_err(lineno, format!("expected 6 columns, found {}", cols.len())));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad number '{s}': {e}")))
        };
        u.push(num(cols[2])?);
        v.push(num(cols[3])?);
        p.push(num(cols[4])?);
        solid.push(match cols[5].trim() {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lineno, format!("bad solid flag '{other}'"))),
        });
    }
    if u.len() != n_nodes {
        return Err(parse_err(
            u.len() + 1,
            format!("expected {n_nodes} nodes, found {}", u.len()),
        ));
    }
    Ok(FlowField {
        cell,
        layout: meta.layout,
        nx: meta.nx,
        ny: meta.ny,
        u,
        v,
        p,
        solid,
        scale: meta.scale,
        dp: meta.dp,
        rho: meta.rho,
        mu: meta.mu,
        iterations: meta.iterations,
        residual: meta.residual,
        reynolds: meta.reynolds,
    })
}

//! Staggered (MAC) finite-difference solver for steady incompressible flow
//! on the periodic unit cell.
//!
//! Unknowns are x-velocities on vertical faces, y-velocities on horizontal
//! faces and a periodic pressure in each cell that touches an active face.
//! The pressure drop is applied as a uniform body force `dp / Dx`, which
//! keeps the problem periodic in both directions. Faces adjacent to a solid
//! use the true distance to the wall along the stencil axis, so curved post
//! surfaces are not staircased in the viscous term.
//!
//! The Stokes operator is factorized once with a sparse LU; convection is
//! carried on the right-hand side and removed by defect correction, which
//! doubles as iterative refinement of the linear solve.

use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};
use crate::geometry::UnitCellGeometry;

use super::{CellLayout, FlowConfig};

/// Solution on the staggered grid, before mapping to nodes.
#[derive(Debug, Clone)]
pub(crate) struct StaggeredSolution {
    /// `u[j * nx + i]` at `(i hx, (j + 1/2) hy)`.
    pub u: Vec<f64>,
    /// `v[j * nx + i]` at `((i + 1/2) hx, j hy)`.
    pub v: Vec<f64>,
    /// Periodic pressure per cell, `None` where the cell has no active face.
    pub p: Vec<Option<f64>>,
    pub iterations: usize,
    pub residual: f64,
}

pub(crate) struct Domain<'a> {
    pub cell: &'a UnitCellGeometry,
    pub layout: CellLayout,
}

impl Domain<'_> {
    /// Solid test on unwrapped coordinates.
    pub fn is_solid(&self, x: f64, y: f64) -> bool {
        match self.layout {
            CellLayout::Posts => self.cell.is_solid_periodic(x, y),
            CellLayout::Empty => false,
            CellLayout::Channel => y <= 0.0 || y >= self.cell.dy,
        }
    }

    /// Fraction `t` in `(0, 1]` along `p -> q` where the wall is crossed;
    /// `p` must be fluid and `q` solid.
    fn wall_fraction(&self, p: (f64, f64), q: (f64, f64)) -> f64 {
        let t = match self.layout {
            CellLayout::Posts => {
                let (cx, cy) = self.cell.nearest_post(q.0, q.1);
                let r = self.cell.radius();
                let (dx, dy) = (q.0 - p.0, q.1 - p.1);
                let (fx, fy) = (p.0 - cx, p.1 - cy);
                let a = dx * dx + dy * dy;
                let b = 2.0 * (fx * dx + fy * dy);
                let c = fx * fx + fy * fy - r * r;
                let disc = (b * b - 4.0 * a * c).max(0.0);
                (-b - disc.sqrt()) / (2.0 * a)
            }
            CellLayout::Channel => {
                if q.1 <= 0.0 {
                    p.1 / (p.1 - q.1)
                } else {
                    (self.cell.dy - p.1) / (q.1 - p.1)
                }
            }
            CellLayout::Empty => 1.0,
        };
        t.clamp(1e-3, 1.0)
    }
}

struct Indexing {
    nx: usize,
    ny: usize,
    u: Vec<Option<usize>>,
    v: Vec<Option<usize>>,
    p: Vec<Option<usize>>,
    n_vel: usize,
    n_total: usize,
}

impl Indexing {
    fn id(&self, i: isize, j: isize) -> usize {
        let i = i.rem_euclid(self.nx as isize) as usize;
        let j = j.rem_euclid(self.ny as isize) as usize;
        j * self.nx + i
    }
}

fn build_indexing(dom: &Domain, nx: usize, ny: usize, hx: f64, hy: f64) -> Indexing {
    let mut u = vec![None; nx * ny];
    let mut v = vec![None; nx * ny];
    let mut next = 0usize;
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 * hx, (j as f64 + 0.5) * hy);
            if !dom.is_solid(x, y) {
                u[j * nx + i] = Some(next);
                next += 1;
            }
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = ((i as f64 + 0.5) * hx, j as f64 * hy);
            if !dom.is_solid(x, y) {
                v[j * nx + i] = Some(next);
                next += 1;
            }
        }
    }
    let n_vel = next;
    let mut idx = Indexing {
        nx,
        ny,
        u,
        v,
        p: vec![None; nx * ny],
        n_vel,
        n_total: 0,
    };
    for j in 0..ny as isize {
        for i in 0..nx as isize {
            let touches = idx.u[idx.id(i, j)].is_some()
                || idx.u[idx.id(i + 1, j)].is_some()
                || idx.v[idx.id(i, j)].is_some()
                || idx.v[idx.id(i, j + 1)].is_some();
            if touches {
                let c = idx.id(i, j);
                idx.p[c] = Some(next);
                next += 1;
            }
        }
    }
    idx.n_total = next;
    idx
}

/// One stencil direction: neighbor unknown (if active) and spacing.
struct Arm {
    neighbor: Option<usize>,
    dist: f64,
}

struct Assembly {
    triplets: Vec<Triplet<usize, usize, f64>>,
}

impl Assembly {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.triplets.push(Triplet::new(r, c, v));
    }
}

pub(crate) struct StokesSystem<'a> {
    dom: &'a Domain<'a>,
    cfg: FlowConfig,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    idx: Indexing,
    /// Stencil arms for each velocity unknown: [W, E, S, N].
    arms: Vec<[Arm; 4]>,
    pin_row: usize,
    /// Without obstacles the momentum operator has constant velocities in its
    /// null space; one u row and one v row are replaced by `u = 1`, `v = 0`.
    anchors: Option<(usize, usize)>,
}

impl<'a> StokesSystem<'a> {
    pub fn new(dom: &'a Domain<'a>, cfg: FlowConfig) -> Self {
        let (nx, ny) = (cfg.nx, cfg.ny);
        let hx = dom.cell.dx / nx as f64;
        let hy = dom.cell.dy / ny as f64;
        let idx = build_indexing(dom, nx, ny, hx, hy);
        let mut arms: Vec<[Arm; 4]> = Vec::with_capacity(idx.n_vel);
        let make_arms = |faces: &[Option<usize>], i: isize, j: isize, pos: (f64, f64)| {
            let offsets = [(-1, 0), (1, 0), (0, -1), (0, 1)];
            offsets.map(|(di, dj)| {
                let h = if di != 0 { hx } else { hy };
                let q = (pos.0 + di as f64 * hx, pos.1 + dj as f64 * hy);
                let nb = if dom.is_solid(q.0, q.1) {
                    None
                } else {
                    faces[idx.id(i + di, j + dj)]
                };
                match nb {
                    Some(k) => Arm {
                        neighbor: Some(k),
                        dist: h,
                    },
                    None => {
                        Arm {
                            neighbor: None,
                            dist: h * dom.wall_fraction(pos, q),
                        }
                    }
                }
            })
        };
        for j in 0..ny {
            for i in 0..nx {
                if idx.u[j * nx + i].is_some() {
                    let pos = (i as f64 * hx, (j as f64 + 0.5) * hy);
                    arms.push(make_arms(&idx.u, i as isize, j as isize, pos));
                }
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                if idx.v[j * nx + i].is_some() {
                    let pos = ((i as f64 + 0.5) * hx, j as f64 * hy);
                    arms.push(make_arms(&idx.v, i as isize, j as isize, pos));
                }
            }
        }
        let pin_row = idx.p.iter().flatten().copied().min().unwrap_or(idx.n_vel);
        let anchors = match dom.layout {
            CellLayout::Empty => Some((0, idx.u.iter().flatten().count())),
            _ => None,
        };
        Self {
            dom,
            cfg,
            nx,
            ny,
            hx,
            hy,
            idx,
            arms,
            pin_row,
            anchors,
        }
    }

    fn is_anchor(&self, row: usize) -> bool {
        self.anchors.is_some_and(|(a, b)| row == a || row == b)
    }

    /// Momentum rows are scaled by `hx^2 / mu` and pressure is carried as
    /// `q = p hx / mu`, which keeps every matrix entry of order one.
    fn assemble(&self) -> Result<SparseColMat<usize, f64>> {
        let (nx, ny, hx, hy) = (self.nx, self.ny, self.hx, self.hy);
        let idx = &self.idx;
        let mut asm = Assembly {
            triplets: Vec::with_capacity(idx.n_vel * 7 + idx.n_total * 4),
        };
        let h2 = hx * hx;
        let mut row = 0usize;
        // velocity rows, u first then v, matching unknown numbering
        for comp in 0..2 {
            let faces = if comp == 0 { &idx.u } else { &idx.v };
            for j in 0..ny as isize {
                for i in 0..nx as isize {
                    let Some(me) = faces[idx.id(i, j)] else {
                        continue;
                    };
                    debug_assert_eq!(me, row);
                    row += 1;
                    if self.is_anchor(me) {
                        asm.push(me, me, 1.0);
                        continue;
                    }
                    let arms = &self.arms[me];
                    let mut diag = 0.0;
                    for pair in [(0usize, 1usize), (2, 3)] {
                        let (m, p) = (&arms[pair.0], &arms[pair.1]);
                        let sum = m.dist + p.dist;
                        let cm = 2.0 / (m.dist * sum) * h2;
                        let cp = 2.0 / (p.dist * sum) * h2;
                        diag += cm + cp;
                        if let Some(k) = m.neighbor {
                            asm.push(me, k, -cm);
                        }
                        if let Some(k) = p.neighbor {
                            asm.push(me, k, -cp);
                        }
                    }
                    asm.push(me, me, diag);
                    // pressure gradient between the two cells sharing the face
                    let (hi, lo) = if comp == 0 {
                        (idx.id(i, j), idx.id(i - 1, j))
                    } else {
                        (idx.id(i, j), idx.id(i, j - 1))
                    };
                    let scale = if comp == 0 { 1.0 } else { hx / hy };
                    let (Some(ph), Some(pl)) = (idx.p[hi], idx.p[lo]) else {
                        return Err(Error::LinearSolve(
                            "active face without pressure neighbors".into(),
                        ));
                    };
                    asm.push(me, ph, scale);
                    asm.push(me, pl, -scale);
                }
            }
        }
        // continuity rows, scaled by hx
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                let Some(me) = idx.p[idx.id(i, j)] else {
                    continue;
                };
                if me == self.pin_row {
                    asm.push(me, me, 1.0);
                    continue;
                }
                if let Some(k) = idx.u[idx.id(i, j)] {
                    asm.push(me, k, 1.0);
                }
                if let Some(k) = idx.u[idx.id(i + 1, j)] {
                    asm.push(me, k, -1.0);
                }
                let r = hx / hy;
                if let Some(k) = idx.v[idx.id(i, j)] {
                    asm.push(me, k, r);
                }
                if let Some(k) = idx.v[idx.id(i, j + 1)] {
                    asm.push(me, k, -r);
                }
            }
        }
        let n = idx.n_total;
        SparseColMat::try_new_from_triplets(n, n, &asm.triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))
    }

    /// Scaled right-hand side: body force minus convection of `x`.
    fn rhs(&self, x: &[f64]) -> Vec<f64> {
        let idx = &self.idx;
        let (nx, ny, hx, hy) = (self.nx, self.ny, self.hx, self.hy);
        let scale = hx * hx / self.cfg.mu;
        let force = match self.dom.layout {
            CellLayout::Empty => 0.0,
            _ => self.cfg.dp / self.dom.cell.dx,
        };
        let rho = self.cfg.rho;
        let val = |faces: &[Option<usize>], i: isize, j: isize| -> f64 {
            faces[idx.id(i, j)].map_or(0.0, |k| x[k])
        };
        let mut b = vec![0.0; idx.n_total];
        for j in 0..ny as isize {
            for i in 0..nx as isize {
                if let Some(me) = idx.u[idx.id(i, j)] {
                    let mut conv = 0.0;
                    if rho > 0.0 {
                        let uc = x[me];
                        let vb = 0.25
                            * (val(&idx.v, i - 1, j)
                                + val(&idx.v, i, j)
                                + val(&idx.v, i - 1, j + 1)
                                + val(&idx.v, i, j + 1));
                        let dudx = (val(&idx.u, i + 1, j) - val(&idx.u, i - 1, j)) / (2.0 * hx);
                        let dudy = (val(&idx.u, i, j + 1) - val(&idx.u, i, j - 1)) / (2.0 * hy);
                        conv = rho * (uc * dudx + vb * dudy);
                    }
                    b[me] = scale * (force - conv);
                }
            }
        }
        if rho > 0.0 {
            for j in 0..ny as isize {
                for i in 0..nx as isize {
                    if let Some(me) = idx.v[idx.id(i, j)] {
                        let vc = x[me];
                        let ub = 0.25
                            * (val(&idx.u, i, j - 1)
                                + val(&idx.u, i + 1, j - 1)
                                + val(&idx.u, i, j)
                                + val(&idx.u, i + 1, j));
                        let dvdx = (val(&idx.v, i + 1, j) - val(&idx.v, i - 1, j)) / (2.0 * hx);
                        let dvdy = (val(&idx.v, i, j + 1) - val(&idx.v, i, j - 1)) / (2.0 * hy);
                        b[me] = -scale * rho * (ub * dvdx + vc * dvdy);
                    }
                }
            }
        }
        if let Some((au, av)) = self.anchors {
            b[au] = 1.0;
            b[av] = 0.0;
        }
        b
    }

    pub fn solve(&self) -> Result<StaggeredSolution> {
        let a = self.assemble()?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::LinearSolve(format!("sparse LU failed: {e:?}")))?;
        let n = self.idx.n_total;
        let nv = self.idx.n_vel;
        let mut x = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        for it in 1..=self.cfg.max_iters.max(1) {
            iterations = it;
            let b = self.rhs(&x);
            let ax = &a * Col::from_fn(n, |k| x[k]);
            let r = Col::from_fn(n, |k| b[k] - ax[k]);
            let delta = lu.solve(&r);
            let mut dnorm = 0.0;
            let mut xnorm = 0.0;
            for k in 0..n {
                x[k] += delta[k];
                if k < nv {
                    dnorm += delta[k] * delta[k];
                    xnorm += x[k] * x[k];
                }
            }
            if !dnorm.is_finite() || !xnorm.is_finite() {
                return Err(Error::Convergence {
                    iterations: it,
                    residual: f64::NAN,
                });
            }
            residual = if xnorm > 0.0 {
                (dnorm / xnorm).sqrt()
            } else {
                dnorm.sqrt()
            };
            if it > 1 && residual < self.cfg.tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::Convergence {
                iterations,
                residual,
            });
        }
        let pscale = self.cfg.mu / self.hx;
        let gather = |faces: &[Option<usize>]| -> Vec<f64> {
            faces.iter().map(|f| f.map_or(0.0, |k| x[k])).collect()
        };
        Ok(StaggeredSolution {
            u: gather(&self.idx.u),
            v: gather(&self.idx.v),
            p: self
                .idx
                .p
                .iter()
                .map(|c| c.map(|k| x[k] * pscale))
                .collect(),
            iterations,
            residual,
        })
    }
}

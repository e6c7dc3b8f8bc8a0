//! Synthetic fields for unit tests.

use crate::flow::{nondimensionalize, CellLayout, FlowField, RawFlow};
use crate::geometry::{make_cell, UnitCellGeometry};

/// Node field built from closed-form `(u, v)`; zero velocity on solid nodes
/// and pressure `0.1 (1 - x / Dx)`.
pub fn synthetic(
    cell: UnitCellGeometry,
    n: usize,
    vel: impl Fn(f64, f64) -> (f64, f64),
) -> FlowField {
    let h = (cell.dx / n as f64, cell.dy / n as f64);
    let (mut u, mut v, mut p, mut solid) = (vec![], vec![], vec![], vec![]);
    for j in 0..=n {
        for i in 0..=n {
            let (x, y) = (i as f64 * h.0, j as f64 * h.1);
            let s = cell.is_solid_periodic(x, y);
            let (a, b) = if s { (0.0, 0.0) } else { vel(x, y) };
            u.push(a);
            v.push(b);
            p.push(0.1 * (1.0 - x / cell.dx));
            solid.push(s);
        }
    }
    let raw = RawFlow {
        cell,
        layout: CellLayout::Posts,
        nx: n,
        ny: n,
        u,
        v,
        p,
        solid,
        dp: 0.1,
        rho: 1.0,
        mu: 1.0,
        iterations: 1,
        residual: 0.0,
    };
    nondimensionalize(&raw, 0.1, 1.0).unwrap()
}

pub fn cell(f: f64, n: u32) -> UnitCellGeometry {
    make_cell(f, n, 0.4).unwrap()
}

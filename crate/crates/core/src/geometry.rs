//! DLD unit-cell geometry.
//!
//! A unit cell is a `Ds x Ds` square with a quarter post at each corner.
//! Seen periodically the four quarters form one full circular post of
//! diameter `D0 = F * Ds`, so every solid test reduces to the distance to
//! the nearest corner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cell pitch in nondimensional units.
pub const DEFAULT_PITCH: f64 = 0.4;

/// Largest period number used when normalizing `N` as a network input.
pub const MAX_PERIOD: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitCellGeometry {
    /// Post diameter as a fraction of the pitch.
    pub f: f64,
    /// Period number of the array.
    pub n: u32,
    /// Cell pitch.
    pub ds: f64,
    /// Post diameter.
    pub d0: f64,
    /// Row shift per column.
    pub epsilon: f64,
    pub gap: f64,
    pub dx: f64,
    pub dy: f64,
}

impl UnitCellGeometry {
    pub fn radius(&self) -> f64 {
        0.5 * self.d0
    }

    /// Radius used by the solid tests: boundary points count as solid, and
    /// a relative slack of 1e-12 keeps mirrored coordinates such as
    /// `Dx - x` on the same side of the surface.
    fn solid_radius(&self) -> f64 {
        self.radius() * (1.0 + 1e-12)
    }

    /// The four post centers, in the order (0,0), (Dx,0), (0,Dy), (Dx,Dy).
    pub fn post_centers(&self) -> [(f64, f64); 4] {
        [
            (0.0, 0.0),
            (self.dx, 0.0),
            (0.0, self.dy),
            (self.dx, self.dy),
        ]
    }

    /// Nearest post center among the periodic lattice of posts, for any
    /// point in the plane.
    pub fn nearest_post(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (x / self.dx).round() * self.dx,
            (y / self.dy).round() * self.dy,
        )
    }

    /// Distance from `(x, y)` to the nearest post center, periodic in both axes.
    pub fn post_distance(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = self.nearest_post(x, y);
        (x - cx).hypot(y - cy)
    }

    /// Solid test without the in-cell precondition; points are mapped
    /// through the periodic post lattice.
    pub fn is_solid_periodic(&self, x: f64, y: f64) -> bool {
        self.post_distance(x, y) <= self.solid_radius()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.dx).contains(&x) && (0.0..=self.dy).contains(&y)
    }

    /// Fluid area fraction of the cell in closed form.
    pub fn fluid_fraction(&self) -> f64 {
        let r = self.radius();
        1.0 - std::f64::consts::PI * r * r / (self.dx * self.dy)
    }

    /// Wrap `y` into `[0, Dy)`.
    pub fn wrap_y(&self, y: f64) -> f64 {
        let w = y.rem_euclid(self.dy);
        if w >= self.dy {
            0.0
        } else {
            w
        }
    }
}

/// Build a unit cell from the post fraction `f`, period number `n` and pitch `ds`.
pub fn make_cell(f: f64, n: u32, ds: f64) -> Result<UnitCellGeometry> {
    if !(f.is_finite() && f > 0.0 && f < 1.0) {
        return Err(Error::Domain(format!(
            "post fraction F must lie in (0, 1), got {f}"
        )));
    }
    if n < 1 {
        return Err(Error::Domain("period number N must be at least 1".into()));
    }
    if !(ds.is_finite() && ds > 0.0) {
        return Err(Error::Domain(format!("pitch Ds must be positive, got {ds}")));
    }
    let d0 = f * ds;
    Ok(UnitCellGeometry {
        f,
        n,
        ds,
        d0,
        epsilon: ds / n as f64,
        gap: ds - d0,
        dx: ds,
        dy: ds,
    })
}

/// Whether `(x, y)` lies within a post (boundary included).
pub fn is_solid(cell: &UnitCellGeometry, x: f64, y: f64) -> Result<bool> {
    if !cell.contains(x, y) {
        return Err(Error::Domain(format!(
            "point ({x}, {y}) lies outside the cell [0, {}] x [0, {}]",
            cell.dx, cell.dy
        )));
    }
    let r = cell.solid_radius();
    Ok(cell
        .post_centers()
        .iter()
        .any(|&(cx, cy)| (x - cx).hypot(y - cy) <= r))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReynoldsSpec {
    pub rho: f64,
    pub u: f64,
    pub l: f64,
    pub mu: f64,
}

impl ReynoldsSpec {
    pub fn new(rho: f64, u: f64, l: f64, mu: f64) -> Result<Self> {
        for (name, v) in [("rho", rho), ("U", u), ("L", l), ("mu", mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { rho, u, l, mu })
    }
}

/// Reynolds number `rho U L / mu`.
pub fn reynolds(spec: &ReynoldsSpec) -> f64 {
    spec.rho * spec.u * spec.l / spec.mu
}

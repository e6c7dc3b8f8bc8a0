//! Training data: interior point samples, boundary point sets and their
//! on-disk form (`x,y,F,N,u,v,p` CSV plus a JSON sidecar).

use std::collections::HashSet;
use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{sidecar_path, FlowField};
use crate::geometry::{make_cell, UnitCellGeometry};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const DATASET_HEADER: &str = "x,y,F,N,u,v,p";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub x: f64,
    pub y: f64,
    pub f: f64,
    pub n: u32,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

/// Points used by the soft boundary-condition loss of one geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySets {
    pub f: f64,
    pub n: u32,
    pub wall_points: Vec<(f64, f64)>,
    pub inlet_points: Vec<(f64, f64)>,
    pub outlet_points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryEntry {
    pub f: f64,
    pub n: u32,
    pub ds: f64,
}

impl GeometryEntry {
    pub fn cell(&self) -> Result<UnitCellGeometry> {
        make_cell(self.f, self.n, self.ds)
    }

    fn matches(&self, f: f64, n: u32) -> bool {
        self.f == f && self.n == n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub format_version: u32,
    pub dp: f64,
    pub u_scale: f64,
    pub seed: u64,
    pub samples_per_geometry: usize,
    pub geometries: Vec<GeometryEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub records: Vec<SampleRecord>,
    /// One entry per geometry, in `meta.geometries` order.
    pub boundary: Vec<BoundarySets>,
    pub meta: DatasetMeta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub samples_per_geometry: usize,
    pub n_wall: usize,
    pub n_io: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples_per_geometry: 1000,
            n_wall: 200,
            n_io: 100,
            seed: 42,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetSidecar {
    meta: DatasetMeta,
    boundary: Vec<BoundarySets>,
}

/// Stream seed for one geometry, independent of where it sits in a list.
pub fn geometry_seed(seed: u64, f: f64, n: u32, salt: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = seed
        ^ f.to_bits().rotate_left(17)
        ^ (u64::from(n)).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ salt.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draw `n` uniform fluid points and interpolate the field there.
pub fn sample_points(field: &FlowField, n: usize, seed: u64) -> Vec<SampleRecord> {
    let cell = &field.cell;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut seen = HashSet::with_capacity(n);
    while out.len() < n {
        let x = rng.gen::<f64>() * cell.dx;
        let y = rng.gen::<f64>() * cell.dy;
        if field.is_solid(x, y) || !seen.insert((x.to_bits(), y.to_bits())) {
            continue;
        }
        let (u, v, p) = field.sample(x, y);
        out.push(SampleRecord {
            x,
            y,
            f: cell.f,
            n: cell.n,
            u,
            v,
            p,
        });
    }
    out
}

/// Wall points on the four quarter-post arcs plus inlet/outlet points.
pub fn boundary_sets(cell: &UnitCellGeometry, n_wall: usize, n_io: usize, seed: u64) -> BoundarySets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = cell.radius();
    // arc start angle for each corner so the quarter lies inside the cell
    let arcs = [
        ((0.0, 0.0), 0.0),
        ((cell.dx, 0.0), FRAC_PI_2),
        ((cell.dx, cell.dy), 2.0 * FRAC_PI_2),
        ((0.0, cell.dy), 3.0 * FRAC_PI_2),
    ];
    let wall_points = (0..n_wall)
        .map(|k| {
            let ((cx, cy), start) = arcs[k % 4];
            let theta = start + rng.gen::<f64>() * FRAC_PI_2;
            (cx + r * theta.cos(), cy + r * theta.sin())
        })
        .collect();
    let fluid_y = |rng: &mut ChaCha8Rng| loop {
        let y = r + rng.gen::<f64>() * (cell.dy - 2.0 * r);
        if y > r && y < cell.dy - r {
            break y;
        }
    };
    let inlet_points = (0..n_io).map(|_| (0.0, fluid_y(&mut rng))).collect();
    let outlet_points = (0..n_io).map(|_| (cell.dx, fluid_y(&mut rng))).collect();
    BoundarySets {
        f: cell.f,
        n: cell.n,
        wall_points,
        inlet_points,
        outlet_points,
    }
}

/// Build a dataset from solved fields sharing one pressure drop.
///
/// Velocities are re-expressed with a common scale, the largest `|u|` over
/// all fields, so every target `|u|` is at most one.
pub fn build_dataset(fields: &[FlowField], cfg: &DatasetConfig) -> Result<Dataset> {
    let dp = fields.first().map_or(0.1, |f| f.dp);
    if fields.iter().any(|f| f.dp != dp) {
        return Err(Error::Config("all fields must share the same pressure drop".into()));
    }
    let u_scale = fields
        .iter()
        .flat_map(|f| f.u.iter().map(move |&u| (u * f.scale.u_scale).abs()))
        .fold(0.0f64, f64::max);
    let mut records = Vec::with_capacity(fields.len() * cfg.samples_per_geometry);
    let mut boundary = Vec::with_capacity(fields.len());
    let mut geometries = Vec::with_capacity(fields.len());
    for field in fields {
        let cell = field.cell;
        if geometries.iter().any(|g: &GeometryEntry| g.matches(cell.f, cell.n)) {
            return Err(Error::Config(format!(
                "geometry F={} N={} appears twice",
                cell.f, cell.n
            )));
        }
        let scaled = field.rescaled(u_scale)?;
        records.extend(sample_points(
            &scaled,
            cfg.samples_per_geometry,
            geometry_seed(cfg.seed, cell.f, cell.n, 1),
        ));
        boundary.push(boundary_sets(
            &cell,
            cfg.n_wall,
            cfg.n_io,
            geometry_seed(cfg.seed, cell.f, cell.n, 2),
        ));
        geometries.push(GeometryEntry {
            f: cell.f,
            n: cell.n,
            ds: cell.ds,
        });
    }
    Ok(Dataset {
        records,
        boundary,
        meta: DatasetMeta {
            format_version: DATASET_FORMAT_VERSION,
            dp,
            u_scale,
            seed: cfg.seed,
            samples_per_geometry: cfg.samples_per_geometry,
            geometries,
        },
    })
}

impl Dataset {
    pub fn geometry_cells(&self) -> Result<Vec<UnitCellGeometry>> {
        self.meta.geometries.iter().map(GeometryEntry::cell).collect()
    }

    /// Check every record against its geometry and the per-geometry counts.
    pub fn validate(&self) -> Result<()> {
        let cells = self.geometry_cells()?;
        let mut counts = vec![0usize; cells.len()];
        let mut seen = HashSet::with_capacity(self.records.len());
        for (k, r) in self.records.iter().enumerate() {
            let gi = self
                .meta
                .geometries
                .iter()
                .position(|g| g.matches(r.f, r.n))
                .ok_or_else(|| {
                    Error::Validation(format!(
                        "record {k} references unknown geometry F={} N={}",
                        r.f, r.n
                    ))
                })?;
            let cell = &cells[gi];
            if ![r.x, r.y, r.u, r.v, r.p].iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!("record {k} has non-finite values")));
            }
            if !cell.contains(r.x, r.y) || cell.is_solid_periodic(r.x, r.y) {
                return Err(Error::Validation(format!(
                    "record {k} at ({}, {}) lies inside a post or outside the cell of F={} N={}",
                    r.x, r.y, r.f, r.n
                )));
            }
            if !seen.insert((gi, r.x.to_bits(), r.y.to_bits())) {
                return Err(Error::Validation(format!("record {k} duplicates an earlier point")));
            }
            counts[gi] += 1;
        }
        if !self.records.is_empty() {
            for (gi, &c) in counts.iter().enumerate() {
                if c != self.meta.samples_per_geometry {
                    return Err(Error::Validation(format!(
                        "geometry {gi} has {c} records, expected {}",
                        self.meta.samples_per_geometry
                    )));
                }
            }
        }
        if self.boundary.len() != self.meta.geometries.len() && !self.boundary.is_empty() {
            return Err(Error::Validation(
                "boundary sets do not match the geometry list".into(),
            ));
        }
        Ok(())
    }
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{DATASET_HEADER}").map_err(io)?;
    for r in &ds.records {
        writeln!(w, "{},{},{},{},{},{},{}", r.x, r.y, r.f, r.n, r.u, r.v, r.p).map_err(io)?;
    }
    w.flush().map_err(io)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&DatasetSidecar {
        meta: ds.meta.clone(),
        boundary: ds.boundary.clone(),
    })?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: DatasetSidecar = serde_json::from_str(&text)?;
    if sidecar.meta.format_version != DATASET_FORMAT_VERSION {
        return Err(Error::Version {
            expected: DATASET_FORMAT_VERSION,
            found: sidecar.meta.format_version,
        });
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut records = Vec::new();
    for (ln, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = ln + 1;
        if ln == 0 {
            if line.trim() != DATASET_HEADER {
                return Err(parse_err(lineno, format!("unexpected header '{line}'")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 7 {
            return Err(parse_err(lineno, format!("expected 7 columns, found {}", cols.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad number '{s}': {e}")))
        };
        let n = cols[3]
            .parse::<u32>()
            .map_err(|e| parse_err(lineno, format!("bad period number '{}': {e}", cols[3])))?;
        records.push(SampleRecord {
            x: num(cols[0])?,
            y: num(cols[1])?,
            f: num(cols[2])?,
            n,
            u: num(cols[4])?,
            v: num(cols[5])?,
            p: num(cols[6])?,
        });
    }
    let ds = Dataset {
        records,
        boundary: sidecar.boundary,
        meta: sidecar.meta,
    };
    ds.validate()?;
    Ok(ds)
}

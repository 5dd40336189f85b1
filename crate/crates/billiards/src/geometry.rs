//! Billiard tables on the two-torus: lattice, circular scatterers, parameter
//! domains, and boundary queries.
//!
//! A table is a lattice (two basis vectors) plus a list of disjoint circular
//! scatterers in the fundamental cell. Two named families cover the standard
//! examples: `hexagonal(d)` (radius-1 scatterers, nearest-center distance d)
//! and `square(R, R')` (unit cell with a radius-R′ disk at the corner and a
//! radius-R disk at the center). Everything else goes through `custom`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{Real, Vec2};

/// Errors from table construction and geometry queries.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("scatterers overlap or touch: minimal gap {gap} <= 0")]
    OverlappingScatterers { gap: f64 },
    #[error("lattice basis is degenerate (determinant ~ 0)")]
    DegenerateLattice,
    #[error("scatterer index {index} out of range (table has {count})")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("domain membership is undefined for custom tables")]
    UnsupportedFamily,
    #[error("malformed table spec: {0}")]
    InvalidSpec(String),
}

/// Serializable table description; the on-disk JSON interface.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TableSpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "Rprime", default, skip_serializing_if = "Option::is_none")]
    pub r_prime: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<[[f64; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scatterers: Option<Vec<ScattererSpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScattererSpec {
    pub center: [f64; 2],
    pub radius: f64,
}

impl TableSpec {
    pub fn hexagonal(d: f64) -> Self {
        Self { family: "hexagonal".into(), d: Some(d), r: None, r_prime: None, lattice: None, scatterers: None }
    }

    pub fn square(r: f64, r_prime: f64) -> Self {
        Self { family: "square".into(), d: None, r: Some(r), r_prime: Some(r_prime), lattice: None, scatterers: None }
    }

    pub fn custom(lattice: [[f64; 2]; 2], scatterers: Vec<ScattererSpec>) -> Self {
        Self { family: "custom".into(), d: None, r: None, r_prime: None, lattice: Some(lattice), scatterers: Some(scatterers) }
    }
}

/// Which named parameter family a table came from; `Custom` for raw specs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FamilyTag {
    Hexagonal { d: f64 },
    Square { r: f64, r_prime: f64 },
    Custom,
}

/// One circular scatterer: center in the fundamental cell, radius > 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scatterer<S> {
    pub center: Vec2<S>,
    pub radius: S,
}

/// Immutable billiard table; all geometry queries derive from it.
#[derive(Clone, Debug)]
pub struct BilliardTable<S> {
    basis: [Vec2<S>; 2],
    scatterers: Vec<Scatterer<S>>,
    family: FamilyTag,
}

/// Point, outward normal, counter-clockwise tangent, and curvature of a
/// scatterer boundary at a given arclength.
#[derive(Clone, Copy, Debug)]
pub struct BoundaryFrame<S> {
    pub position: Vec2<S>,
    pub outward_normal: Vec2<S>,
    pub tangent: Vec2<S>,
    pub curvature: S,
}

/// Outcome of a parameter-domain membership test.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainVerdict {
    pub accepted: bool,
    pub violated_constraints: Vec<String>,
    /// Smallest slack among the satisfied constraints.
    pub margin: f64,
}

/// Builds a table from a spec, enforcing the type invariants
/// (positive radii, nondegenerate lattice, pairwise disjoint translates).
pub fn build_table<S: Real>(spec: &TableSpec) -> Result<BilliardTable<S>, GeometryError> {
    let (basis, scatterers, family) = match spec.family.as_str() {
        "hexagonal" => {
            let d = spec.d.ok_or_else(|| GeometryError::InvalidSpec("hexagonal requires d".into()))?;
            let basis = [
                Vec2::new(S::of(d), S::zero()),
                Vec2::new(S::of(d / 2.0), S::of(d * 3f64.sqrt() / 2.0)),
            ];
            let scatterers = vec![Scatterer { center: Vec2::zero(), radius: S::one() }];
            (basis, scatterers, FamilyTag::Hexagonal { d })
        }
        "square" => {
            let r = spec.r.ok_or_else(|| GeometryError::InvalidSpec("square requires R".into()))?;
            let rp = spec.r_prime.ok_or_else(|| GeometryError::InvalidSpec("square requires Rprime".into()))?;
            let basis = [Vec2::new(S::one(), S::zero()), Vec2::new(S::zero(), S::one())];
            // Index 0: corner disk (radius R'), index 1: center disk (radius R).
            let scatterers = vec![
                Scatterer { center: Vec2::zero(), radius: S::of(rp) },
                Scatterer { center: Vec2::new(S::of(0.5), S::of(0.5)), radius: S::of(r) },
            ];
            (basis, scatterers, FamilyTag::Square { r, r_prime: rp })
        }
        "custom" => {
            let lat = spec.lattice.ok_or_else(|| GeometryError::InvalidSpec("custom requires lattice".into()))?;
            let scs = spec
                .scatterers
                .as_ref()
                .ok_or_else(|| GeometryError::InvalidSpec("custom requires scatterers".into()))?;
            if scs.is_empty() {
                return Err(GeometryError::InvalidSpec("custom requires at least one scatterer".into()));
            }
            let basis = [
                Vec2::new(S::of(lat[0][0]), S::of(lat[0][1])),
                Vec2::new(S::of(lat[1][0]), S::of(lat[1][1])),
            ];
            let scatterers = scs
                .iter()
                .map(|s| Scatterer { center: Vec2::new(S::of(s.center[0]), S::of(s.center[1])), radius: S::of(s.radius) })
                .collect();
            (basis, scatterers, FamilyTag::Custom)
        }
        other => return Err(GeometryError::InvalidSpec(format!("unknown family {other:?}"))),
    };

    let table = BilliardTable { basis, scatterers, family };

    for s in &table.scatterers {
        if s.radius <= S::zero() || !s.radius.is_finite() {
            return Err(GeometryError::InvalidSpec("scatterer radius must be positive".into()));
        }
    }
    let det = table.basis[0].cross(table.basis[1]).abs();
    let scale = table.basis[0].norm() * table.basis[1].norm();
    if det <= scale * S::of(1e-12) {
        return Err(GeometryError::DegenerateLattice);
    }
    let gap = table.min_gap();
    if gap <= S::zero() {
        return Err(GeometryError::OverlappingScatterers { gap: gap.as_f64() });
    }
    Ok(table)
}

/// Tests membership of a hexagonal or square spec in its admissible
/// parameter domain; custom tables have no defined domain.
pub fn validate_domain(spec: &TableSpec) -> Result<DomainVerdict, GeometryError> {
    // Each entry: (constraint name, slack); satisfied iff slack > 0.
    let slacks: Vec<(String, f64)> = match spec.family.as_str() {
        "hexagonal" => {
            let d = spec.d.ok_or_else(|| GeometryError::InvalidSpec("hexagonal requires d".into()))?;
            vec![
                ("d > 2".into(), d - 2.0),
                ("d < 4/sqrt(3)".into(), 4.0 / 3f64.sqrt() - d),
            ]
        }
        "square" => {
            let r = spec.r.ok_or_else(|| GeometryError::InvalidSpec("square requires R".into()))?;
            let rp = spec.r_prime.ok_or_else(|| GeometryError::InvalidSpec("square requires Rprime".into()))?;
            vec![
                ("R > 0".into(), r),
                ("R < R'".into(), rp - r),
                ("R' < 1/2".into(), 0.5 - rp),
                ("R + R' > 1/2".into(), r + rp - 0.5),
                ("R + R' < sqrt(2)/2".into(), 2f64.sqrt() / 2.0 - (r + rp)),
                ("R' > sqrt(2)/4".into(), rp - 2f64.sqrt() / 4.0),
            ]
        }
        "custom" => return Err(GeometryError::UnsupportedFamily),
        other => return Err(GeometryError::InvalidSpec(format!("unknown family {other:?}"))),
    };

    let violated: Vec<String> = slacks.iter().filter(|(_, s)| *s <= 0.0).map(|(n, _)| n.clone()).collect();
    let margin = slacks
        .iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(_, s)| *s)
        .fold(f64::INFINITY, f64::min);
    Ok(DomainVerdict {
        accepted: violated.is_empty(),
        violated_constraints: violated,
        margin: if margin.is_finite() { margin } else { 0.0 },
    })
}

/// Minimal curvature over all scatterers: 1 / max radius.
pub fn min_curvature<S: Real>(table: &BilliardTable<S>) -> S {
    let max_r = table
        .scatterers
        .iter()
        .map(|s| s.radius)
        .fold(S::zero(), S::max);
    S::one() / max_r
}

/// Boundary frame of scatterer `index` at arclength `r` (wraps modulo the
/// circumference).
pub fn boundary_frame<S: Real>(
    table: &BilliardTable<S>,
    index: usize,
    r: S,
) -> Result<BoundaryFrame<S>, GeometryError> {
    let s = table
        .scatterers
        .get(index)
        .ok_or(GeometryError::IndexOutOfRange { index, count: table.scatterers.len() })?;
    let theta = r / s.radius;
    let (sin, cos) = theta.sin_cos();
    let normal = Vec2::new(cos, sin);
    Ok(BoundaryFrame {
        position: s.center + normal.scale(s.radius),
        outward_normal: normal,
        tangent: normal.perp(),
        curvature: S::one() / s.radius,
    })
}

impl<S: Real> BilliardTable<S> {
    pub fn basis(&self) -> [Vec2<S>; 2] {
        self.basis
    }

    pub fn scatterers(&self) -> &[Scatterer<S>] {
        &self.scatterers
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    /// Number of scatterer components of the boundary (D in the phase space
    /// M = boundary x [-pi/2, pi/2]).
    pub fn component_count(&self) -> usize {
        self.scatterers.len()
    }

    pub fn circumference(&self, index: usize) -> S {
        S::of(2.0) * S::PI() * self.scatterers[index].radius
    }

    /// Lattice translate k1*b1 + k2*b2.
    pub fn translate(&self, k: (i64, i64)) -> Vec2<S> {
        self.basis[0].scale(S::of(k.0 as f64)) + self.basis[1].scale(S::of(k.1 as f64))
    }

    /// Area of the fundamental cell.
    pub fn cell_area(&self) -> S {
        self.basis[0].cross(self.basis[1]).abs()
    }

    /// Diameter of the fundamental cell (longest parallelogram diagonal).
    pub fn cell_diameter(&self) -> S {
        let d1 = (self.basis[0] + self.basis[1]).norm();
        let d2 = (self.basis[0] - self.basis[1]).norm();
        d1.max(d2)
    }

    /// Default free-flight search bound for finite-horizon tables.
    pub fn flight_bound(&self) -> S {
        S::of(3.0) * self.cell_diameter()
    }

    pub fn max_radius(&self) -> S {
        self.scatterers.iter().map(|s| s.radius).fold(S::zero(), S::max)
    }

    pub fn min_radius(&self) -> S {
        self.scatterers.iter().map(|s| s.radius).fold(S::infinity(), S::min)
    }

    /// Minimal boundary-to-boundary gap between distinct scatterer copies,
    /// over lattice translates within +-2 cells.
    pub fn min_gap(&self) -> S {
        let mut gap = S::infinity();
        for (i, a) in self.scatterers.iter().enumerate() {
            for (j, b) in self.scatterers.iter().enumerate() {
                for k1 in -2..=2i64 {
                    for k2 in -2..=2i64 {
                        if i == j && k1 == 0 && k2 == 0 {
                            continue;
                        }
                        // Unordered pairs are visited twice; harmless for a min.
                        let c = b.center + self.translate((k1, k2));
                        let g = (c - a.center).norm() - a.radius - b.radius;
                        gap = gap.min(g);
                    }
                }
            }
        }
        gap
    }

    /// Writes `p` as a1*b1 + a2*b2 (lattice coordinates).
    pub fn lattice_coords(&self, p: Vec2<S>) -> (S, S) {
        let det = self.basis[0].cross(self.basis[1]);
        let a1 = p.cross(self.basis[1]) / det;
        let a2 = self.basis[0].cross(p) / det;
        (a1, a2)
    }

    /// Reduces `p` to the fundamental cell; returns the reduced point and the
    /// integer lattice coordinates that were subtracted.
    pub fn reduce(&self, p: Vec2<S>) -> (Vec2<S>, (i64, i64)) {
        let (a1, a2) = self.lattice_coords(p);
        let k1 = a1.floor().as_f64() as i64;
        let k2 = a2.floor().as_f64() as i64;
        (p - self.translate((k1, k2)), (k1, k2))
    }
}

//! The collision map T, its inverse via backward ray tracing, free-flight
//! statistics, and the finite-horizon corridor search.
//!
//! Collisions are found in the universal cover: the ray is tested against
//! every scatterer translate whose center lies within reach, using the exact
//! quadratic ray-circle intersection. Phase points use the standard billiard
//! coordinates (r, phi): arclength along the scatterer and the angle between
//! the outgoing velocity and the outward normal, with positive phi on the
//! counter-clockwise tangent side.

use thiserror::Error;

use crate::geometry::{boundary_frame, BilliardTable};
use crate::scalar::{Real, Vec2};

/// Points closer than this (radians) to |phi| = pi/2 are treated as singular
/// inputs: the map is defined there but numerically ill-conditioned.
pub const GRAZING_CUTOFF: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("phase point is within the grazing cutoff of |phi| = pi/2")]
    GrazingInput,
    #[error("no collision within flight bound {bound}")]
    NoCollisionWithinBound { bound: f64 },
}

/// Collision coordinate on the scatterer boundary.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint<S> {
    pub scatterer: usize,
    /// Arclength, reduced modulo the circumference.
    pub r: S,
    /// Angle between outgoing velocity and outward normal, in [-pi/2, pi/2].
    pub phi: S,
}

/// Continuity branch of the collision map: which scatterer copy is hit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol {
    pub scatterer: usize,
    /// Lattice translate of the hit copy, relative to the cell of departure.
    pub translate: (i32, i32),
}

/// One application of the collision map.
#[derive(Clone, Copy, Debug)]
pub struct CollisionStep<S> {
    pub image: PhasePoint<S>,
    /// Free-flight time (unit speed, so also the chord length).
    pub tau: S,
    pub symbol: Symbol,
    /// pi/2 - |phi| of the image point.
    pub grazing_margin: S,
}

/// Flow-coordinate state: position (taken modulo the lattice) and direction.
#[derive(Clone, Copy, Debug)]
pub struct FlowState<S> {
    pub position: Vec2<S>,
    pub direction: Vec2<S>,
}

impl<S: Real> PhasePoint<S> {
    pub fn new(scatterer: usize, r: S, phi: S) -> Self {
        Self { scatterer, r, phi }
    }

    /// Boundary position and outgoing velocity of this phase point.
    pub fn flow_state(&self, table: &BilliardTable<S>) -> FlowState<S> {
        let f = boundary_frame(table, self.scatterer, self.r).expect("valid scatterer index");
        let (sin, cos) = self.phi.sin_cos();
        FlowState {
            position: f.position,
            direction: f.outward_normal.scale(cos) + f.tangent.scale(sin),
        }
    }

    pub fn grazing_margin(&self) -> S {
        S::FRAC_PI_2() - self.phi.abs()
    }
}

/// Phase point of a boundary hit: `dir` is the OUTGOING velocity at `hit`.
fn phase_of_outgoing<S: Real>(
    table: &BilliardTable<S>,
    scatterer: usize,
    hit: Vec2<S>,
    dir: Vec2<S>,
) -> PhasePoint<S> {
    let sc = table.scatterers()[scatterer];
    let normal = (hit - sc.center).normalized();
    let tangent = normal.perp();
    let mut theta = normal.y.atan2(normal.x);
    if theta < S::zero() {
        theta = theta + S::of(2.0) * S::PI();
    }
    PhasePoint {
        scatterer,
        r: sc.radius * theta,
        phi: dir.dot(tangent).atan2(dir.dot(normal)),
    }
}

struct Hit<S> {
    t: S,
    symbol: Symbol,
    /// Hit point in the frame of the departure cell (not reduced).
    point: Vec2<S>,
}

/// Earliest ray-circle intersection with time in (min_t, bound] over all
/// scatterer translates. `exclude` skips one circle copy (the departure
/// circle); `min_t` rejects roundoff roots when no copy is excluded.
fn raycast<S: Real>(
    table: &BilliardTable<S>,
    origin: Vec2<S>,
    dir: Vec2<S>,
    bound: S,
    min_t: S,
    exclude: Option<(usize, (i64, i64))>,
) -> Option<Hit<S>> {
    let det = table.cell_area();
    let reach = bound + table.max_radius() + table.cell_diameter();
    // |k1| <= |b2| * reach / det and symmetrically: dual-basis norm bound.
    let k1_max = (table.basis()[1].norm() * reach / det).as_f64().ceil() as i64;
    let k2_max = (table.basis()[0].norm() * reach / det).as_f64().ceil() as i64;

    let mut best: Option<Hit<S>> = None;
    for k1 in -k1_max..=k1_max {
        for k2 in -k2_max..=k2_max {
            let shift = table.translate((k1, k2));
            for (j, sc) in table.scatterers().iter().enumerate() {
                if exclude == Some((j, (k1, k2))) {
                    continue;
                }
                let oc = sc.center + shift - origin;
                let b = oc.dot(dir);
                if b <= S::zero() {
                    // Center behind the ray; the ray starts outside every
                    // non-excluded circle, so the surface is behind too.
                    continue;
                }
                let a = oc.norm_squared() - sc.radius * sc.radius;
                let disc = b * b - a;
                if disc < S::zero() {
                    continue;
                }
                let t = b - disc.sqrt();
                if t <= min_t || t > bound {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some(h) => t < h.t,
                };
                if better {
                    best = Some(Hit {
                        t,
                        symbol: Symbol { scatterer: j, translate: (k1 as i32, k2 as i32) },
                        point: origin + dir.scale(t),
                    });
                }
            }
        }
    }
    best
}

/// Earliest collision of a free flight; `max_len` defaults to the table's
/// finite-horizon flight bound. The returned state carries the INCOMING
/// direction and a position reduced to the fundamental cell; the symbol names
/// the scatterer copy that was hit, relative to the cell of the (reduced)
/// start position.
pub fn next_collision<S: Real>(
    table: &BilliardTable<S>,
    state: &FlowState<S>,
    max_len: Option<S>,
) -> Result<(FlowState<S>, S, Symbol), DynamicsError> {
    let bound = max_len.unwrap_or_else(|| table.flight_bound());
    let (origin, _) = table.reduce(state.position);
    let dir = state.direction.normalized();
    // Start points off the boundary have no departure circle to exclude; a
    // tiny positive cut rejects the roundoff root when the caller starts
    // exactly on a boundary anyway.
    let eps = S::of(1e-9) * table.cell_diameter();
    match raycast(table, origin, dir, bound, eps, None) {
        Some(h) => {
            let (k1, k2) = h.symbol.translate;
            let reduced = h.point - table.translate((k1 as i64, k2 as i64));
            Ok((FlowState { position: reduced, direction: dir }, h.t, h.symbol))
        }
        None => Err(DynamicsError::NoCollisionWithinBound { bound: bound.as_f64() }),
    }
}

/// The collision map T.
pub fn billiard_map<S: Real>(
    table: &BilliardTable<S>,
    x: &PhasePoint<S>,
) -> Result<CollisionStep<S>, DynamicsError> {
    if x.grazing_margin() < S::of(GRAZING_CUTOFF) {
        return Err(DynamicsError::GrazingInput);
    }
    let state = x.flow_state(table);
    let bound = table.flight_bound();
    let hit = raycast(table, state.position, state.direction, bound, S::zero(), Some((x.scatterer, (0, 0))))
        .ok_or(DynamicsError::NoCollisionWithinBound { bound: bound.as_f64() })?;

    let (k1, k2) = hit.symbol.translate;
    let hit_reduced = hit.point - table.translate((k1 as i64, k2 as i64));
    let sc = table.scatterers()[hit.symbol.scatterer];
    let normal = (hit_reduced - sc.center).normalized();
    let v = state.direction;
    let reflected = v - normal.scale(S::of(2.0) * v.dot(normal));

    let image = phase_of_outgoing(table, hit.symbol.scatterer, hit_reduced, reflected);
    Ok(CollisionStep {
        image,
        tau: hit.t,
        symbol: hit.symbol,
        grazing_margin: image.grazing_margin().max(S::zero()),
    })
}

/// The inverse collision map, computed by tracing the incoming ray backward
/// (not by conjugating T, so the time-reversal identity stays a real check).
pub fn billiard_map_inverse<S: Real>(
    table: &BilliardTable<S>,
    x: &PhasePoint<S>,
) -> Result<CollisionStep<S>, DynamicsError> {
    if x.grazing_margin() < S::of(GRAZING_CUTOFF) {
        return Err(DynamicsError::GrazingInput);
    }
    let f = boundary_frame(table, x.scatterer, x.r).expect("valid scatterer index");
    let (sin, cos) = x.phi.sin_cos();
    let v_out = f.outward_normal.scale(cos) + f.tangent.scale(sin);
    // The incoming velocity at x reflects to v_out; reflection is an
    // involution, so v_in is the reflection of v_out in the same normal.
    let v_in = v_out - f.outward_normal.scale(S::of(2.0) * v_out.dot(f.outward_normal));

    let bound = table.flight_bound();
    let hit = raycast(table, f.position, -v_in, bound, S::zero(), Some((x.scatterer, (0, 0))))
        .ok_or(DynamicsError::NoCollisionWithinBound { bound: bound.as_f64() })?;

    let (k1, k2) = hit.symbol.translate;
    let hit_reduced = hit.point - table.translate((k1 as i64, k2 as i64));
    // At the previous collision the orbit left with velocity v_in.
    let image = phase_of_outgoing(table, hit.symbol.scatterer, hit_reduced, v_in);
    Ok(CollisionStep {
        image,
        tau: hit.t,
        symbol: hit.symbol,
        grazing_margin: image.grazing_margin().max(S::zero()),
    })
}

/// Deterministic stratified stream of phase points.
///
/// Index i maps to a point via a seeded two-dimensional Kronecker sequence,
/// cycling through scatterer components. The stream is budget-independent:
/// the first k points of any run with the same seed are identical, so a
/// statistic over a prefix never exceeds one over the full stream.
#[derive(Clone, Copy, Debug)]
pub struct SampleStream {
    off_r: f64,
    off_phi: f64,
}

/// Margin (radians) kept from |phi| = pi/2 when sampling.
const SAMPLE_PHI_MARGIN: f64 = 1e-6;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl SampleStream {
    pub fn new(seed: u64) -> Self {
        let mut s = seed;
        let off_r = splitmix64(&mut s) as f64 / 2f64.powi(64);
        let off_phi = splitmix64(&mut s) as f64 / 2f64.powi(64);
        Self { off_r, off_phi }
    }

    pub fn phase_point<S: Real>(&self, table: &BilliardTable<S>, i: usize) -> PhasePoint<S> {
        // Additive recurrence with the plastic-constant pair (well-distributed
        // in 2-D and trivially indexable).
        const A1: f64 = 0.754_877_666_246_692_8;
        const A2: f64 = 0.569_840_290_998_053_2;
        let d = table.component_count();
        let comp = i % d;
        let j = (i / d) as f64 + 1.0;
        let u = (j * A1 + self.off_r).fract();
        let v = (j * A2 + self.off_phi).fract();
        let half_pi = std::f64::consts::FRAC_PI_2 - SAMPLE_PHI_MARGIN;
        PhasePoint {
            scatterer: comp,
            r: table.circumference(comp) * S::of(u),
            phi: S::of((2.0 * v - 1.0) * half_pi),
        }
    }
}

/// Free-flight bounds report.
#[derive(Clone, Copy, Debug)]
pub struct FlightBounds<S> {
    /// Minimal free flight; the minimal boundary gap, which every family
    /// realizes as a bouncing orbit between nearest scatterer copies.
    pub tau_min: S,
    pub tau_min_exact: bool,
    /// Estimated maximal free flight (sampling + corridor geometry).
    pub tau_max: S,
    pub tau_max_is_estimate: bool,
    /// Largest flight seen in the sample stream alone.
    pub sample_max: S,
    /// Longest free chord along rational corridor directions.
    pub corridor_chord: S,
    pub samples_used: usize,
}

/// Exact tau_min plus a sampled-and-refined tau_max estimate.
///
/// tau_max combines (a) the max flight over `budget` stream samples with
/// seeded hill-climb refinement around the best ones, and (b) the exact
/// longest free chord along low rational directions; it is still flagged as
/// an estimate. The stream is prefix-stable, so any statistic computed over
/// the first k <= budget samples with the same seed is dominated by it.
pub fn free_flight_bounds<S: Real>(
    table: &BilliardTable<S>,
    budget: usize,
    seed: u64,
) -> FlightBounds<S> {
    let tau_min = table.min_gap();

    let stream = SampleStream::new(seed);
    let mut best: Vec<(S, PhasePoint<S>)> = Vec::new();
    let mut sample_max = S::zero();
    for i in 0..budget {
        let x = stream.phase_point(table, i);
        if let Ok(step) = billiard_map(table, &x) {
            sample_max = sample_max.max(step.tau);
            let worst_kept = best.last().map(|(t, _)| *t).unwrap_or(S::zero());
            if best.len() < 16 || step.tau > worst_kept {
                best.push((step.tau, x));
                best.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                best.truncate(16);
            }
        }
    }

    // Deterministic pattern-search refinement around the best samples.
    let mut refined = sample_max;
    for &(_, start) in &best {
        let mut x = start;
        let mut fx = eval_tau(table, &x).unwrap_or(S::zero());
        let mut step_r = table.circumference(x.scatterer).as_f64() * 0.02;
        let mut step_phi = 0.05f64;
        for _ in 0..8 {
            let mut moved = false;
            for (dr, dphi) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)] {
                let circ = table.circumference(x.scatterer);
                let cap = S::FRAC_PI_2() - S::of(SAMPLE_PHI_MARGIN);
                let cand = PhasePoint {
                    scatterer: x.scatterer,
                    r: (x.r + S::of(dr * step_r)).rem(circ),
                    phi: (x.phi + S::of(dphi * step_phi)).min(cap).max(-cap),
                };
                if let Some(t) = eval_tau(table, &cand) {
                    if t > fx {
                        x = cand;
                        fx = t;
                        moved = true;
                    }
                }
            }
            if !moved {
                step_r *= 0.5;
                step_phi *= 0.5;
            }
        }
        refined = refined.max(fx);
    }

    let corridor_chord = S::of(longest_rational_chord(table, 3));
    FlightBounds {
        tau_min,
        tau_min_exact: true,
        tau_max: refined.max(corridor_chord),
        tau_max_is_estimate: true,
        sample_max,
        corridor_chord,
        samples_used: budget,
    }
}

fn eval_tau<S: Real>(table: &BilliardTable<S>, x: &PhasePoint<S>) -> Option<S> {
    billiard_map(table, x).ok().map(|s| s.tau)
}

/// Finite-horizon verdict up to direction height `d_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonVerdict {
    pub finite: bool,
    pub d_max: i64,
    pub witness: Option<CorridorWitness>,
}

/// An open corridor: a strip of full lines in lattice direction `direction`
/// avoiding every scatterer.
#[derive(Clone, Debug, PartialEq)]
pub struct CorridorWitness {
    pub direction: (i64, i64),
    /// Transversal width of the open strip.
    pub width: f64,
    /// Transversal coordinate of the strip midline (projection onto the unit
    /// normal of the direction).
    pub offset: f64,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Primitive lattice directions with |p|, |q| <= d_max, one per +-w pair,
/// sorted by height so witnesses are found at the lowest direction first.
fn primitive_directions(d_max: i64) -> Vec<(i64, i64)> {
    let mut dirs = Vec::new();
    for p in 0..=d_max {
        for q in -d_max..=d_max {
            if (p, q) == (0, 0) || (p == 0 && q < 0) {
                continue;
            }
            if gcd(p, q) == 1 {
                dirs.push((p, q));
            }
        }
    }
    dirs.sort_by_key(|&(p, q)| (p * p + q * q, p, q));
    dirs
}

/// Shadow intervals of all scatterers on the transversal circle of a
/// direction: centers projected onto the unit normal, modulo the projected
/// lattice spacing.
fn shadow_intervals<S: Real>(table: &BilliardTable<S>, dir: (i64, i64)) -> (f64, Vec<(f64, f64)>) {
    let w = table.translate(dir);
    let spacing = (table.cell_area() / w.norm()).as_f64();
    let n = w.perp().normalized();
    let intervals = table
        .scatterers()
        .iter()
        .map(|s| {
            let c = s.center.dot(n).as_f64().rem_euclid(spacing);
            (c - s.radius.as_f64(), c + s.radius.as_f64())
        })
        .collect();
    (spacing, intervals)
}

/// Largest uncovered gap of the shadow intervals on the circle [0, spacing);
/// returns (gap length, gap midpoint).
fn largest_uncovered_gap(spacing: f64, intervals: &[(f64, f64)]) -> (f64, f64) {
    // Any interval at least as long as the period covers everything.
    if intervals.iter().any(|(a, b)| b - a >= spacing) {
        return (0.0, 0.0);
    }
    // Unroll: each interval contributes its translate starting within
    // [0, spacing) plus one wrap copy; then sweep.
    let mut ivs: Vec<(f64, f64)> = Vec::with_capacity(intervals.len() * 2);
    for &(a, b) in intervals {
        let len = b - a;
        let start = a.rem_euclid(spacing);
        ivs.push((start, start + len));
        ivs.push((start - spacing, start - spacing + len));
    }
    ivs.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut best_gap = 0.0;
    let mut best_mid = 0.0;
    let mut covered_to = f64::NEG_INFINITY;
    for &(a, b) in &ivs {
        if a > covered_to && covered_to > f64::NEG_INFINITY {
            let gap = a - covered_to;
            if gap > best_gap {
                best_gap = gap;
                best_mid = (covered_to + a) / 2.0;
            }
        }
        covered_to = covered_to.max(b);
    }
    // Close the circle: gap between the last cover end and the first start
    // one period up.
    if let Some(&(first_a, _)) = ivs.first() {
        let a = first_a + spacing;
        if a > covered_to {
            let gap = a - covered_to;
            if gap > best_gap {
                best_gap = gap;
                best_mid = (covered_to + a) / 2.0;
            }
        }
    }
    (best_gap, best_mid.rem_euclid(spacing))
}

/// Searches rational directions (p, q), gcd = 1, |p|,|q| <= d_max, for an
/// open corridor. Finding none is a finite-horizon verdict up to d_max.
pub fn finite_horizon_check<S: Real>(table: &BilliardTable<S>, d_max: i64) -> HorizonVerdict {
    const GAP_TOL: f64 = 1e-12;
    for dir in primitive_directions(d_max) {
        let (spacing, intervals) = shadow_intervals(table, dir);
        let (gap, mid) = largest_uncovered_gap(spacing, &intervals);
        if gap > GAP_TOL * spacing {
            return HorizonVerdict {
                finite: false,
                d_max,
                witness: Some(CorridorWitness { direction: dir, width: gap, offset: mid }),
            };
        }
    }
    HorizonVerdict { finite: true, d_max, witness: None }
}

/// Longest free chord along rational directions up to `d_max`: the maximal
/// run between consecutive scatterer shadows along any full line in such a
/// direction. Exact for each direction; the max over directions feeds the
/// tau_max estimate.
fn longest_rational_chord<S: Real>(table: &BilliardTable<S>, d_max: i64) -> f64 {
    let mut best = 0.0f64;
    for dir in primitive_directions(d_max) {
        let w = table.translate(dir);
        let period = w.norm().as_f64();
        let what = Vec2::new(w.x / w.norm(), w.y / w.norm());
        let n = what.perp();
        let spacing = (table.cell_area() / w.norm()).as_f64();

        // Copies within one longitudinal period, as (transversal, longitudinal,
        // radius). k-range big enough to cover t in [0, period) for any offset.
        let det = table.cell_area().as_f64();
        let reach = period + table.cell_diameter().as_f64();
        let k1m = (table.basis()[1].norm().as_f64() * reach / det).ceil() as i64 + 1;
        let k2m = (table.basis()[0].norm().as_f64() * reach / det).ceil() as i64 + 1;
        let mut copies: Vec<(f64, f64, f64)> = Vec::new();
        for k1 in -k1m..=k1m {
            for k2 in -k2m..=k2m {
                for s in table.scatterers() {
                    let c = s.center + table.translate((k1, k2));
                    let y = c.dot(n).as_f64().rem_euclid(spacing);
                    let t = c.dot(what).as_f64().rem_euclid(period);
                    copies.push((y, t, s.radius.as_f64()));
                }
            }
        }
        copies.sort_by(|a, b| a.partial_cmp(b).unwrap());
        copies.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9 && (a.2 - b.2).abs() < 1e-12);

        // The free-run length as a function of the transversal offset is
        // piecewise smooth with breakpoints at shadow edges; probing just
        // inside each edge (and each shadow midline) captures the sup to
        // sampling accuracy.
        let mut offsets: Vec<f64> = Vec::new();
        for &(y, _, r) in &copies {
            for e in [y - r + 1e-9, y + r - 1e-9, y] {
                offsets.push(e.rem_euclid(spacing));
            }
        }
        for y0 in offsets {
            // Occupied longitudinal intervals on the line at offset y0.
            let mut occ: Vec<(f64, f64)> = Vec::new();
            for &(y, t, r) in &copies {
                let mut dy = (y - y0).rem_euclid(spacing);
                if dy > spacing / 2.0 {
                    dy -= spacing;
                }
                if dy.abs() < r {
                    let h = (r * r - dy * dy).sqrt();
                    occ.push((t - h, t + h));
                }
            }
            if occ.is_empty() {
                continue; // open corridor; the horizon check reports it
            }
            let (gap, _) = largest_uncovered_gap(period, &occ);
            best = best.max(gap);
        }
    }
    best
}

//! Symbolic itineraries, cell counting for the forward partition, traced
//! singularity curves, and the complexity estimate.
//!
//! Cells of the length-n forward partition are identified with itineraries
//! (symbol words); the sampler therefore reports a lower bound on the true
//! cell count. Counting is deterministic and monotone in the budget: samples
//! come from a fixed-order quadtree whose refinement queue is processed
//! first-in-first-out, so a larger budget evaluates a superset of points.

use std::collections::{BTreeMap, HashMap, VecDeque};

use thiserror::Error;

use crate::dynamics::{billiard_map, billiard_map_inverse, DynamicsError, PhasePoint};
pub use crate::dynamics::Symbol;
use crate::geometry::BilliardTable;

#[derive(Debug, Error, PartialEq)]
pub enum SingularityError {
    #[error("orbit reached a grazing collision at step {step}")]
    SingularOrbit { step: usize },
    #[error("orbit exceeded the flight bound at step {step}")]
    FlightEscaped { step: usize },
}

/// Ordered word of continuity-branch symbols.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Itinerary {
    pub symbols: Vec<Symbol>,
}

impl Itinerary {
    pub fn new(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Cyclic left rotation by k.
    pub fn rotated(&self, k: usize) -> Self {
        let n = self.symbols.len();
        if n == 0 {
            return self.clone();
        }
        let mut symbols = Vec::with_capacity(n);
        for i in 0..n {
            symbols.push(self.symbols[(i + k) % n]);
        }
        Self { symbols }
    }

    /// Lexicographically least cyclic rotation (canonical representative).
    pub fn canonical_rotation(&self) -> Self {
        (0..self.symbols.len().max(1))
            .map(|k| self.rotated(k))
            .min()
            .unwrap_or_default()
    }
}

impl std::fmt::Display for Itinerary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, s) in self.symbols.iter().enumerate() {
            if i > 0 {
                write!(f, ";")?;
            }
            write!(f, "{}:{},{}", s.scatterer, s.translate.0, s.translate.1)?;
        }
        Ok(())
    }
}

/// A finite orbit segment: the n symbols plus the n+1 visited points and the
/// n flight times.
#[derive(Clone, Debug)]
pub struct OrbitSegment {
    pub itinerary: Itinerary,
    pub points: Vec<PhasePoint<f64>>,
    pub taus: Vec<f64>,
}

impl OrbitSegment {
    pub fn birkhoff_tau(&self) -> f64 {
        self.taus.iter().sum()
    }
}

/// The length-n symbol word of x.
pub fn itinerary(
    table: &BilliardTable<f64>,
    x: &PhasePoint<f64>,
    n: usize,
) -> Result<Itinerary, SingularityError> {
    orbit_segment(table, x, n).map(|seg| seg.itinerary)
}

/// The word together with the orbit points and flight times.
pub fn orbit_segment(
    table: &BilliardTable<f64>,
    x: &PhasePoint<f64>,
    n: usize,
) -> Result<OrbitSegment, SingularityError> {
    let mut symbols = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n + 1);
    let mut taus = Vec::with_capacity(n);
    let mut cur = *x;
    points.push(cur);
    for step in 0..n {
        match billiard_map(table, &cur) {
            Ok(s) => {
                symbols.push(s.symbol);
                taus.push(s.tau);
                cur = s.image;
                points.push(cur);
            }
            Err(DynamicsError::GrazingInput) => {
                return Err(SingularityError::SingularOrbit { step })
            }
            Err(DynamicsError::NoCollisionWithinBound { .. }) => {
                return Err(SingularityError::FlightEscaped { step })
            }
        }
    }
    Ok(OrbitSegment { itinerary: Itinerary::new(symbols), points, taus })
}

/// Sampler configuration for `count_cells`.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    /// Number of quadtree rectangles processed (the unit of work).
    pub budget: usize,
    /// Shifts the sampling lattice along the periodic r coordinate.
    pub seed: u64,
    /// Initial grid is initial_grid x initial_grid rectangles per scatterer.
    pub initial_grid: usize,
    /// Rectangles are split unconditionally until finer than 1/forced_grid
    /// of the domain, so cells wider than that cannot be missed wholesale.
    pub forced_grid: usize,
    /// Minimum rectangle side (normalized units) for boundary-driven splits.
    pub min_quad: f64,
    /// Additional phase points evaluated before the sweep (e.g. known orbit
    /// points); they join the discovered-itinerary registry like any sample.
    pub extra_seeds: Vec<PhasePoint<f64>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            budget: 20_000,
            seed: 7,
            initial_grid: 8,
            forced_grid: 64,
            min_quad: 1e-6,
            extra_seeds: Vec::new(),
        }
    }
}

/// One discovered cell: its word and representative points, including the
/// extremizers of the Birkhoff flight-time sum (potentials proportional to
/// tau pick their near-maximizer among these).
#[derive(Clone, Debug)]
pub struct CellRepresentative {
    pub itinerary: Itinerary,
    pub point: PhasePoint<f64>,
    pub birkhoff_tau: f64,
    pub max_tau_point: PhasePoint<f64>,
    pub max_tau: f64,
    pub min_tau_point: PhasePoint<f64>,
    pub min_tau: f64,
}

/// Result of the cell-count sweep.
#[derive(Clone, Debug)]
pub struct CellCount {
    pub n: usize,
    /// Distinct itineraries discovered: a lower bound for the cell count.
    pub count: usize,
    /// Itinerary evaluations performed (cache misses).
    pub samples_used: usize,
    /// One representative per discovered cell, sorted by itinerary.
    pub representatives: Vec<CellRepresentative>,
}

/// Margin (radians) kept from the grazing lines when mapping the normalized
/// sampling square onto phase coordinates.
const SAMPLE_EDGE_PAD: f64 = 1e-7;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

#[derive(Clone, Copy)]
struct Quad {
    scatterer: usize,
    /// Normalized corners: u along r (periodic), v along phi.
    u0: f64,
    u1: f64,
    v0: f64,
    v1: f64,
}

struct Registry {
    /// Keyed by (starting component, word): the word alone does not name the
    /// component the orbit starts on.
    cells: BTreeMap<(usize, Itinerary), CellRepresentative>,
    evals: usize,
}

impl Registry {
    fn record(&mut self, point: PhasePoint<f64>, seg: &OrbitSegment) {
        let tau = seg.birkhoff_tau();
        self.cells
            .entry((point.scatterer, seg.itinerary.clone()))
            .and_modify(|rep| {
                if tau > rep.max_tau {
                    rep.max_tau = tau;
                    rep.max_tau_point = point;
                }
                if tau < rep.min_tau {
                    rep.min_tau = tau;
                    rep.min_tau_point = point;
                }
            })
            .or_insert_with(|| CellRepresentative {
                itinerary: seg.itinerary.clone(),
                point,
                birkhoff_tau: tau,
                max_tau_point: point,
                max_tau: tau,
                min_tau_point: point,
                min_tau: tau,
            });
    }
}

/// Counts distinct length-n itineraries by a deterministic quadtree sweep:
/// an initial stratified grid per scatterer, unconditional refinement down
/// to the forced resolution, then boundary-driven refinement wherever the
/// corner words of a rectangle disagree. The FIFO queue order makes the
/// count monotone nondecreasing in the budget.
pub fn count_cells(table: &BilliardTable<f64>, n: usize, config: &SamplerConfig) -> CellCount {
    let mut state = config.seed;
    let shift = splitmix64(&mut state) as f64 / 2f64.powi(64);

    let mut registry = Registry { cells: BTreeMap::new(), evals: 0 };
    let mut cache: HashMap<(usize, u64, u64), Option<Itinerary>> = HashMap::new();

    let phi_lo = -std::f64::consts::FRAC_PI_2 + SAMPLE_EDGE_PAD;
    let phi_hi = std::f64::consts::FRAC_PI_2 - SAMPLE_EDGE_PAD;

    for seed in &config.extra_seeds {
        if let Ok(seg) = orbit_segment(table, seed, n) {
            registry.record(*seed, &seg);
        }
        registry.evals += 1;
    }

    let eval = |registry: &mut Registry,
                    cache: &mut HashMap<(usize, u64, u64), Option<Itinerary>>,
                    scatterer: usize,
                    u: f64,
                    v: f64|
     -> Option<Itinerary> {
        let key = (scatterer, u.to_bits(), v.to_bits());
        if let Some(hit) = cache.get(&key) {
            return hit.clone();
        }
        let r = table.circumference(scatterer) * (u + shift).fract();
        let phi = phi_lo + (phi_hi - phi_lo) * v;
        let point = PhasePoint::new(scatterer, r, phi);
        registry.evals += 1;
        let word = match orbit_segment(table, &point, n) {
            Ok(seg) => {
                registry.record(point, &seg);
                Some(seg.itinerary)
            }
            Err(_) => None,
        };
        cache.insert(key, word.clone());
        word
    };

    // Scatterers interleaved so small budgets still cover every component.
    let mut queue: VecDeque<Quad> = VecDeque::new();
    let g = config.initial_grid.max(1);
    for i in 0..g {
        for j in 0..g {
            for scatterer in 0..table.component_count() {
                queue.push_back(Quad {
                    scatterer,
                    u0: i as f64 / g as f64,
                    u1: (i + 1) as f64 / g as f64,
                    v0: j as f64 / g as f64,
                    v1: (j + 1) as f64 / g as f64,
                });
            }
        }
    }

    let forced = 1.0 / config.forced_grid.max(1) as f64;
    let mut pops = 0usize;
    while pops < config.budget {
        let Some(q) = queue.pop_front() else { break };
        pops += 1;

        let corners = [
            eval(&mut registry, &mut cache, q.scatterer, q.u0, q.v0),
            eval(&mut registry, &mut cache, q.scatterer, q.u1, q.v0),
            eval(&mut registry, &mut cache, q.scatterer, q.u0, q.v1),
            eval(&mut registry, &mut cache, q.scatterer, q.u1, q.v1),
        ];

        let width = q.u1 - q.u0;
        let height = q.v1 - q.v0;
        let coarse = width > forced || height > forced;
        let disagree = corners.iter().any(|c| *c != corners[0]);
        let splittable = width > config.min_quad && height > config.min_quad;
        if coarse || (disagree && splittable) {
            let um = 0.5 * (q.u0 + q.u1);
            let vm = 0.5 * (q.v0 + q.v1);
            for (a, b, c, d) in [
                (q.u0, um, q.v0, vm),
                (um, q.u1, q.v0, vm),
                (q.u0, um, vm, q.v1),
                (um, q.u1, vm, q.v1),
            ] {
                queue.push_back(Quad { scatterer: q.scatterer, u0: a, u1: b, v0: c, v1: d });
            }
        }
    }

    CellCount {
        n,
        count: registry.cells.len(),
        samples_used: registry.evals,
        representatives: registry.cells.into_values().collect(),
    }
}

/// Distinct word counts for every window length 1..=max_n, read at every
/// offset of orbit segments started on a fixed exhaustive grid. Counting
/// all offsets makes the counts submultiplicative by construction:
/// an (n+m)-window is the concatenation of an n-window and an m-window,
/// both of which are themselves counted.
pub fn windowed_counts(
    table: &BilliardTable<f64>,
    max_n: usize,
    grid_r: usize,
    grid_phi: usize,
) -> Vec<(usize, usize)> {
    let phi_lo = -std::f64::consts::FRAC_PI_2 + SAMPLE_EDGE_PAD;
    let phi_hi = std::f64::consts::FRAC_PI_2 - SAMPLE_EDGE_PAD;
    let mut words: Vec<std::collections::BTreeSet<(usize, &[Symbol])>> =
        vec![Default::default(); max_n];

    let mut segments = Vec::new();
    for scatterer in 0..table.component_count() {
        let circ = table.circumference(scatterer);
        for i in 0..grid_r {
            let r = circ * (i as f64 + 0.5) / grid_r as f64;
            for j in 0..grid_phi {
                let phi = phi_lo + (phi_hi - phi_lo) * (j as f64 + 0.5) / grid_phi as f64;
                // Long segments power every window length; 2*max_n offsets
                // give each length a fair share.
                let len = 3 * max_n;
                if let Ok(seg) = orbit_segment(table, &PhasePoint::new(scatterer, r, phi), len) {
                    segments.push(seg);
                }
            }
        }
    }
    for seg in &segments {
        let symbols = &seg.itinerary.symbols;
        for n in 1..=max_n {
            for offset in 0..=(symbols.len().saturating_sub(n)) {
                let component = seg.points[offset].scatterer;
                words[n - 1].insert((component, &symbols[offset..offset + n]));
            }
        }
    }
    (1..=max_n).map(|n| (n, words[n - 1].len())).collect()
}

/// One polyline of a singularity set.
#[derive(Clone, Debug)]
pub struct SingularityCurve {
    /// Scatterer on which the curve lives.
    pub scatterer: usize,
    /// Number of map iterations that produced it (0 = grazing line itself).
    pub order_step: u32,
    /// Branch word of the iterations, plus the seeding data.
    pub branch: Itinerary,
    pub seed_scatterer: usize,
    pub seed_sign: i8,
    /// Vertices as (r, phi).
    pub points: Vec<(f64, f64)>,
}

impl SingularityCurve {
    /// Stable identifier for export and multiplicity counting.
    pub fn branch_id(&self) -> String {
        let sign = if self.seed_sign >= 0 { '+' } else { '-' };
        format!("d{}:{}{}:{}", self.order_step, sign, self.seed_scatterer, self.branch)
    }
}

/// Singularity curves up to |order| iterations.
#[derive(Clone, Debug)]
pub struct SingularityCurveSet {
    /// Positive: backward iterates of the grazing lines (discontinuities of
    /// the forward map); negative: forward iterates.
    pub order: i32,
    pub resolution: f64,
    pub curves: Vec<SingularityCurve>,
}

/// Offset (radians) from |phi| = pi/2 used to seed the grazing lines; the
/// traced curves are one-sided limits of iterates of these.
pub const DELTA_OFFSET: f64 = 1e-7;

/// Hard cap on adaptive bisection depth between two seeds.
const MAX_BISECTION_DEPTH: u32 = 24;

/// Hard cap on vertices per (seed line, branch) family.
const MAX_VERTICES_PER_FAMILY: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
struct TracePoint {
    word: Option<Itinerary>,
    image: Option<PhasePoint<f64>>,
}

/// Iterates the map `steps` times in the given direction, recording the
/// branch word (forward symbols, or inverse-branch symbols when backward).
fn trace(table: &BilliardTable<f64>, x: &PhasePoint<f64>, steps: u32, backward: bool) -> TracePoint {
    let mut cur = *x;
    let mut symbols = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let step = if backward { billiard_map_inverse(table, &cur) } else { billiard_map(table, &cur) };
        match step {
            Ok(s) => {
                symbols.push(s.symbol);
                cur = s.image;
            }
            Err(_) => return TracePoint { word: None, image: None },
        }
    }
    TracePoint { word: Some(Itinerary::new(symbols)), image: Some(cur) }
}

/// Traces S at the given signed order: the grazing lines plus their iterates
/// under T^-1 (order > 0) or T (order < 0), one family per iteration count,
/// seed line, and branch word. Polylines are re-densified adaptively where
/// consecutive images separate by more than `resolution` or change branch.
pub fn singularity_set(
    table: &BilliardTable<f64>,
    order: i32,
    resolution: f64,
) -> SingularityCurveSet {
    let resolution = resolution.max(1e-9);
    let mut curves = Vec::new();

    // Order 0: the grazing lines themselves.
    for scatterer in 0..table.component_count() {
        let circ = table.circumference(scatterer);
        let count = (circ / resolution).ceil().max(2.0) as usize;
        for sign in [1i8, -1] {
            let phi = f64::from(sign) * std::f64::consts::FRAC_PI_2;
            let points = (0..=count)
                .map(|j| (circ * j as f64 / count as f64, phi))
                .collect();
            curves.push(SingularityCurve {
                scatterer,
                order_step: 0,
                branch: Itinerary::default(),
                seed_scatterer: scatterer,
                seed_sign: sign,
                points,
            });
        }
    }

    let backward = order > 0;
    for steps in 1..=order.unsigned_abs() {
        for seed_scatterer in 0..table.component_count() {
            let circ = table.circumference(seed_scatterer);
            let count = (circ / resolution).ceil().max(8.0) as usize;
            for sign in [1i8, -1] {
                let phi_seed = f64::from(sign) * (std::f64::consts::FRAC_PI_2 - DELTA_OFFSET);
                let eval = |r: f64| {
                    trace(table, &PhasePoint::new(seed_scatterer, r, phi_seed), steps, backward)
                };

                // In-order adaptive sweep over the seed parameter.
                let mut vertices: Vec<(f64, TracePoint)> = Vec::new();
                let mut stack: Vec<(f64, TracePoint, f64, TracePoint, u32)> = Vec::new();
                let mut prev_r = 0.0;
                let mut prev = eval(prev_r);
                vertices.push((prev_r, prev.clone()));
                for j in 1..=count {
                    let r = circ * j as f64 / count as f64;
                    let cur = eval(r);
                    stack.push((prev_r, prev.clone(), r, cur.clone(), 0));
                    while let Some((ra, pa, rb, pb, depth)) = stack.pop() {
                        let close = match (&pa.image, &pb.image) {
                            (Some(a), Some(b)) => {
                                pa.word == pb.word
                                    && a.scatterer == b.scatterer
                                    && phase_distance(table, a, b) <= resolution
                            }
                            (None, None) => pa.word == pb.word,
                            _ => false,
                        };
                        if close || depth >= MAX_BISECTION_DEPTH {
                            vertices.push((rb, pb));
                        } else {
                            let rm = 0.5 * (ra + rb);
                            let pm = eval(rm);
                            stack.push((rm, pm.clone(), rb, pb, depth + 1));
                            stack.push((ra, pa, rm, pm, depth + 1));
                        }
                        if vertices.len() > MAX_VERTICES_PER_FAMILY {
                            break;
                        }
                    }
                    prev_r = r;
                    prev = cur;
                    if vertices.len() > MAX_VERTICES_PER_FAMILY {
                        break;
                    }
                }

                // Cut the vertex sequence into polylines of constant branch.
                let mut family: Vec<SingularityCurve> = Vec::new();
                let mut open: Option<SingularityCurve> = None;
                for (_, tp) in vertices {
                    match (tp.word, tp.image) {
                        (Some(word), Some(image)) => {
                            let same = open
                                .as_ref()
                                .map(|c| c.branch == word && c.scatterer == image.scatterer)
                                .unwrap_or(false);
                            if !same {
                                if let Some(c) = open.take() {
                                    if c.points.len() >= 2 {
                                        family.push(c);
                                    }
                                }
                                open = Some(SingularityCurve {
                                    scatterer: image.scatterer,
                                    order_step: steps,
                                    branch: word,
                                    seed_scatterer,
                                    seed_sign: sign,
                                    points: Vec::new(),
                                });
                            }
                            if let Some(c) = open.as_mut() {
                                c.points.push((image.r, image.phi));
                            }
                        }
                        _ => {
                            if let Some(c) = open.take() {
                                if c.points.len() >= 2 {
                                    family.push(c);
                                }
                            }
                        }
                    }
                }
                if let Some(c) = open.take() {
                    if c.points.len() >= 2 {
                        family.push(c);
                    }
                }
                // The seed parameter is periodic: a branch window that
                // straddles r = 0 shows up as matching first and last runs.
                if family.len() >= 2 {
                    let first = &family[0];
                    let last = family.last().expect("nonempty");
                    if first.branch == last.branch && first.scatterer == last.scatterer {
                        let mut last = family.pop().expect("nonempty");
                        last.points.extend(family[0].points.iter().copied());
                        family[0] = last;
                    }
                }
                curves.extend(family);
            }
        }
    }

    SingularityCurveSet { order, resolution, curves }
}

fn phase_distance(table: &BilliardTable<f64>, a: &PhasePoint<f64>, b: &PhasePoint<f64>) -> f64 {
    let circ = table.circumference(a.scatterer);
    let dr = (a.r - b.r).rem_euclid(circ);
    let dr = dr.min(circ - dr);
    (dr * dr + (a.phi - b.phi).powi(2)).sqrt()
}

/// Complexity estimate: K_n and where it is attained.
#[derive(Clone, Debug)]
pub struct ComplexityEstimate {
    pub n: u32,
    /// Maximal number of distinct curves passing near one point.
    pub k_n: usize,
    /// Witness location (scatterer, r, phi).
    pub location: (usize, f64, f64),
    /// Implied linear-growth constant K_n / n.
    pub k_rate: f64,
    /// Multiplicity is counted at the curve-set resolution.
    pub caveat: String,
}

/// Maximum number of distinct curves with a segment point inside a common
/// 3x3 block of resolution-sized buckets; returns (count, witness center).
pub(crate) fn max_multiplicity(
    curves: &[(usize, &[(f64, f64)])],
    resolution: f64,
) -> (usize, (usize, f64, f64)) {
    type Key = (usize, i64, i64);
    let mut buckets: BTreeMap<Key, std::collections::BTreeSet<usize>> = BTreeMap::new();
    let inv = 1.0 / resolution;
    for (curve_idx, (scatterer, points)) in curves.iter().enumerate() {
        for w in points.windows(2) {
            let (r0, p0) = w[0];
            let (r1, p1) = w[1];
            // Segments are about resolution-sized; endpoint + midpoint
            // bucketing covers every bucket the segment meets.
            for (r, p) in [(r0, p0), (0.5 * (r0 + r1), 0.5 * (p0 + p1)), (r1, p1)] {
                let key = (*scatterer, (r * inv).floor() as i64, (p * inv).floor() as i64);
                buckets.entry(key).or_default().insert(curve_idx);
            }
        }
        if points.len() == 1 {
            let (r, p) = points[0];
            let key = (*scatterer, (r * inv).floor() as i64, (p * inv).floor() as i64);
            buckets.entry(key).or_default().insert(curve_idx);
        }
    }

    let mut best = 0usize;
    let mut witness = (0usize, 0.0, 0.0);
    for (&(s, i, j), _) in &buckets {
        let mut union = std::collections::BTreeSet::new();
        for di in -1..=1 {
            for dj in -1..=1 {
                if let Some(set) = buckets.get(&(s, i + di, j + dj)) {
                    union.extend(set.iter().copied());
                }
            }
        }
        if union.len() > best {
            best = union.len();
            witness = (s, (i as f64 + 0.5) * resolution, (j as f64 + 0.5) * resolution);
        }
    }
    (best, witness)
}

/// Estimates K_n: the maximal number of singularity curves of the order-n
/// set passing within `resolution` of a common point, located by spatial
/// hashing of the polyline segments.
pub fn complexity(table: &BilliardTable<f64>, n: u32, resolution: f64) -> ComplexityEstimate {
    let set = singularity_set(table, n as i32, resolution);
    let curve_refs: Vec<(usize, &[(f64, f64)])> = set
        .curves
        .iter()
        .map(|c| (c.scatterer, c.points.as_slice()))
        .collect();
    let (k_n, location) = max_multiplicity(&curve_refs, resolution);
    ComplexityEstimate {
        n,
        k_n,
        location,
        k_rate: k_n as f64 / f64::from(n.max(1)),
        caveat: format!("multiplicity counted within resolution {resolution}"),
    }
}

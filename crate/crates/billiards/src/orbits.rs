//! Periodic orbits via the chord-length functional.
//!
//! A cyclic symbol word pins each orbit point to one scatterer copy in the
//! universal cover; the periodic orbits of that word are the critical points
//! of the total chord length as a function of the boundary angles. The
//! solver runs damped Newton iterations on the stationarity system (the
//! Hessian is cyclic tridiagonal) and accepts a solution only when honest
//! re-simulation through the collision map reproduces the word and closes
//! up. Uniqueness of the critical point per word makes enumeration by
//! canonical cyclic words a census of Fix T^n.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use thiserror::Error;

use crate::dynamics::{billiard_map, PhasePoint, Symbol, GRAZING_CUTOFF};
use crate::geometry::BilliardTable;
use crate::scalar::Vec2;
use crate::singularity::Itinerary;

/// Gradient sup-norm at which Newton is declared converged.
const SOLVER_TOLERANCE: f64 = 1e-12;
/// Maximum Newton iterations before giving up.
const MAX_ITERS: usize = 80;
/// Re-simulation closure tolerance (phase distance).
const CLOSURE_TOLERANCE: f64 = 1e-8;
/// Orbits whose point sets are this close are the same orbit.
const DEDUP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum OrbitError {
    #[error("Newton iteration did not converge within {MAX_ITERS} steps")]
    NonConvergence,
    #[error("itinerary budget exceeded; census is partial")]
    BudgetExceeded { census: OrbitCensus },
}

/// A validated periodic orbit.
#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    /// Primitive period: number of collisions before the orbit repeats.
    pub period: usize,
    /// The cyclic word, aligned so points[0] realizes it forward.
    pub itinerary: Itinerary,
    pub points: Vec<PhasePoint<f64>>,
    /// Per-step flight times.
    pub taus: Vec<f64>,
    /// Total flight length; at unit speed also the Birkhoff sum of tau.
    pub length: f64,
    /// Minimum over the orbit of pi/2 - |phi|.
    pub grazing_margin: f64,
    pub birkhoff_tau: f64,
}

/// Census of the fixed points of T^n.
#[derive(Clone, Debug)]
pub struct OrbitCensus {
    pub period: usize,
    /// Primitive orbits of every period dividing n, deduplicated.
    pub orbits: Vec<PeriodicOrbit>,
    /// Sum of e^{S_n g} over all fixed points of T^n.
    pub weighted_sum: f64,
    /// Number of primitive orbits found.
    pub count: usize,
    /// Number of fixed points of T^n: each primitive orbit of period p
    /// contributes its p points.
    pub fixed_points: usize,
    /// True when the sequence budget cut enumeration short.
    pub partial: bool,
    /// Cyclic words enumerated (across all divisor lengths).
    pub sequences_tried: usize,
    /// Words whose Newton iteration failed to converge.
    pub solver_failures: usize,
}

/// Enumeration limits for the census.
#[derive(Clone, Debug)]
pub struct CensusConfig {
    /// Cap on cyclic words enumerated across all divisor lengths.
    pub max_sequences: usize,
    /// Sampling budget used to observe the one-step alphabet.
    pub alphabet_budget: usize,
}

impl Default for CensusConfig {
    fn default() -> Self {
        Self { max_sequences: 400_000, alphabet_budget: 30_000 }
    }
}

fn phase_distance(table: &BilliardTable<f64>, a: &PhasePoint<f64>, b: &PhasePoint<f64>) -> f64 {
    if a.scatterer != b.scatterer {
        return f64::INFINITY;
    }
    let circ = table.circumference(a.scatterer);
    let dr = (a.r - b.r).rem_euclid(circ);
    let dr = dr.min(circ - dr);
    (dr * dr + (a.phi - b.phi).powi(2)).sqrt()
}

/// Unfolded scatterer copies visited by a cyclic word: copy i hosts point i
/// (1-based step targets), with index 0 and n+1 the winding-shifted wraps.
struct UnfoldedCycle {
    /// Centers C[0..=n+1]; C[1..=n] host the unknowns.
    centers: Vec<Vec2<f64>>,
    radii: Vec<f64>,
    scatterers: Vec<usize>,
}

fn unfold(table: &BilliardTable<f64>, word: &[Symbol]) -> UnfoldedCycle {
    let n = word.len();
    let mut centers = Vec::with_capacity(n + 2);
    let mut radii = Vec::with_capacity(n + 2);
    let mut scatterers = Vec::with_capacity(n + 2);
    let mut cum = (0i64, 0i64);
    // Placeholder for index 0, filled from the wrap below.
    centers.push(Vec2::zero());
    radii.push(0.0);
    scatterers.push(0);
    for s in word {
        cum = (cum.0 + i64::from(s.translate.0), cum.1 + i64::from(s.translate.1));
        let sc = table.scatterers()[s.scatterer];
        centers.push(sc.center + table.translate(cum));
        radii.push(sc.radius);
        scatterers.push(s.scatterer);
    }
    let winding = table.translate(cum);
    // Index 0 is point n shifted back one winding; index n+1 is point 1
    // shifted forward.
    centers[0] = centers[n] - winding;
    radii[0] = radii[n];
    scatterers[0] = scatterers[n];
    centers.push(centers[1] + winding);
    radii.push(radii[1]);
    scatterers.push(scatterers[1]);
    UnfoldedCycle { centers, radii, scatterers }
}

/// Gradient of the total chord length in the boundary angles.
fn length_gradient(cycle: &UnfoldedCycle, theta: &[f64]) -> Option<DVector<f64>> {
    let n = theta.len();
    let q = |i: usize| -> Vec2<f64> {
        let th = theta[(i + n - 1) % n];
        cycle.centers[i] + Vec2::new(th.cos(), th.sin()).scale(cycle.radii[i])
    };
    let mut g = DVector::zeros(n);
    for i in 1..=n {
        let qi = q(i);
        let prev = q(i - 1);
        let next = q(i + 1);
        let l_in = (qi - prev).norm();
        let l_out = (next - qi).norm();
        if l_in < 1e-9 || l_out < 1e-9 {
            return None;
        }
        let e_in = (qi - prev).scale(1.0 / l_in);
        let e_out = (next - qi).scale(1.0 / l_out);
        let th = theta[i - 1];
        let tangent = Vec2::new(-th.sin(), th.cos()).scale(cycle.radii[i]);
        g[i - 1] = e_in.dot(tangent) - e_out.dot(tangent);
    }
    Some(g)
}

/// Hessian of the total chord length: cyclic tridiagonal, assembled dense.
fn length_hessian(cycle: &UnfoldedCycle, theta: &[f64]) -> Option<DMatrix<f64>> {
    let n = theta.len();
    let q = |i: usize| -> Vec2<f64> {
        let th = theta[(i + n - 1) % n];
        cycle.centers[i] + Vec2::new(th.cos(), th.sin()).scale(cycle.radii[i])
    };
    // Velocity and its angle derivative for the unknown at slot i.
    let vel = |i: usize| -> (Vec2<f64>, Vec2<f64>) {
        let th = theta[(i + n - 1) % n];
        let r = cycle.radii[i];
        (
            Vec2::new(-th.sin(), th.cos()).scale(r),
            Vec2::new(-th.cos(), -th.sin()).scale(r),
        )
    };
    let mut h = DMatrix::zeros(n, n);
    for a in 1..=n {
        let b = a + 1;
        let qa = q(a);
        let qb = q(b);
        let l = (qb - qa).norm();
        if l < 1e-9 {
            return None;
        }
        let e = (qb - qa).scale(1.0 / l);
        let proj = |v: Vec2<f64>| v - e.scale(e.dot(v));
        let (va, aa) = vel(a);
        let (vb, ab) = vel(if b > n { 1 } else { b });
        let ia = a - 1;
        let ib = if b > n { 0 } else { b - 1 };
        let pa = proj(va);
        let pb = proj(vb);
        h[(ia, ia)] += va.dot(pa) / l - e.dot(aa);
        h[(ib, ib)] += vb.dot(pb) / l + e.dot(ab);
        let cross = -va.dot(pb) / l;
        h[(ia, ib)] += cross;
        h[(ib, ia)] += cross;
    }
    Some(h)
}

/// Initial angles: each point faces the bisector of its unfolded neighbors.
fn seed_angles(cycle: &UnfoldedCycle, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| {
            let c = cycle.centers[i];
            let to_prev = cycle.centers[i - 1] - c;
            let to_next = cycle.centers[i + 1] - c;
            let u = to_prev.normalized() + to_next.normalized();
            if u.norm() < 1e-9 {
                // Collinear neighbors on opposite sides: face the next one.
                let w = to_next.normalized();
                w.y.atan2(w.x)
            } else {
                u.y.atan2(u.x)
            }
        })
        .collect()
}

/// Solves for the critical point of the length functional of a cyclic word
/// and validates it by re-simulation. `None` means the word carries no
/// realizable orbit (blocked chord, grazing, or re-simulation mismatch).
pub fn find_periodic_orbit(
    table: &BilliardTable<f64>,
    word: &Itinerary,
) -> Result<Option<PeriodicOrbit>, OrbitError> {
    let n = word.len();
    if n < 2 {
        return Ok(None);
    }
    let cycle = unfold(table, &word.symbols);
    let mut theta = seed_angles(&cycle, n);

    let mut grad = match length_gradient(&cycle, &theta) {
        Some(g) => g,
        None => return Ok(None),
    };
    let mut converged = false;
    for _ in 0..MAX_ITERS {
        if grad.amax() < SOLVER_TOLERANCE {
            converged = true;
            break;
        }
        let Some(hess) = length_hessian(&cycle, &theta) else { return Ok(None) };
        let Some(delta) = hess.lu().solve(&grad) else { return Err(OrbitError::NonConvergence) };
        // Damped update: backtrack until the gradient norm improves.
        let base = grad.norm();
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..24 {
            let trial: Vec<f64> = theta
                .iter()
                .zip(delta.iter())
                .map(|(t, d)| t - alpha * d)
                .collect();
            if let Some(g_trial) = length_gradient(&cycle, &trial) {
                if g_trial.norm() < base * (1.0 - 0.25 * alpha) || g_trial.norm() < SOLVER_TOLERANCE {
                    theta = trial;
                    grad = g_trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(OrbitError::NonConvergence);
        }
    }
    if !converged && grad.amax() >= SOLVER_TOLERANCE {
        return Err(OrbitError::NonConvergence);
    }

    build_validated_orbit(table, word, &cycle, &theta)
}

/// Turns converged angles into phase points and validates by re-simulation.
fn build_validated_orbit(
    table: &BilliardTable<f64>,
    word: &Itinerary,
    cycle: &UnfoldedCycle,
    theta: &[f64],
) -> Result<Option<PeriodicOrbit>, OrbitError> {
    let n = theta.len();
    let q = |i: usize| -> Vec2<f64> {
        let th = theta[(i + n - 1) % n];
        cycle.centers[i] + Vec2::new(th.cos(), th.sin()).scale(cycle.radii[i])
    };

    // Phase point at each orbit position; slot n is the cycle start (it
    // lives on the word's final target, which is the starting scatterer).
    let mut points = Vec::with_capacity(n);
    let mut taus = Vec::with_capacity(n);
    let mut margin = f64::INFINITY;
    for idx in 0..n {
        // Order points so that points[0] realizes the word forward:
        // start at slot n, then slots 1..n-1.
        let slot = if idx == 0 { n } else { idx };
        let qi = q(slot);
        let next = q(slot + 1);
        let out = next - qi;
        let tau = out.norm();
        if tau < 1e-9 {
            return Ok(None);
        }
        let dir = out.scale(1.0 / tau);
        let th = theta[(slot + n - 1) % n];
        let normal = Vec2::new(th.cos(), th.sin());
        let tangent = normal.perp();
        let cos_phi = dir.dot(normal);
        if cos_phi <= 0.0 {
            // The outgoing chord points into the scatterer: not an orbit.
            return Ok(None);
        }
        let phi = dir.dot(tangent).atan2(cos_phi);
        let scatterer = cycle.scatterers[slot];
        let circ = table.circumference(scatterer);
        let r = (cycle.radii[slot] * th.rem_euclid(2.0 * std::f64::consts::PI)).rem_euclid(circ);
        let point = PhasePoint::new(scatterer, r, phi);
        margin = margin.min(point.grazing_margin());
        points.push(point);
        taus.push(tau);
    }
    if margin < GRAZING_CUTOFF {
        return Ok(None);
    }

    // Honest re-simulation: the collision map must reproduce the word and
    // close up within tolerance.
    let mut cur = points[0];
    for (i, expected) in word.symbols.iter().enumerate() {
        let Ok(step) = billiard_map(table, &cur) else { return Ok(None) };
        if step.symbol != *expected {
            return Ok(None);
        }
        let target = if i + 1 < n { points[i + 1] } else { points[0] };
        if phase_distance(table, &step.image, &target) > CLOSURE_TOLERANCE {
            return Ok(None);
        }
        cur = step.image;
    }

    let length: f64 = taus.iter().sum();
    Ok(Some(PeriodicOrbit {
        period: n,
        itinerary: word.clone(),
        points,
        taus,
        length,
        grazing_margin: margin,
        birkhoff_tau: length,
    }))
}

/// One-step symbols observed per starting component, by generous sampling.
/// Used as the enumeration alphabet: letters the map is never seen to use
/// cannot begin a validated orbit chord.
pub fn one_step_alphabet(table: &BilliardTable<f64>, budget: usize) -> Vec<Vec<Symbol>> {
    let cfg = crate::singularity::SamplerConfig {
        budget,
        ..Default::default()
    };
    let cells = crate::singularity::count_cells(table, 1, &cfg);
    let mut per_component: Vec<std::collections::BTreeSet<Symbol>> =
        vec![Default::default(); table.component_count()];
    for rep in &cells.representatives {
        per_component[rep.point.scatterer].insert(rep.itinerary.symbols[0]);
    }
    per_component.into_iter().map(|s| s.into_iter().collect()).collect()
}

/// Admissibility window for a single chord: center distance within
/// (sum of radii, flight bound + 2 max radius).
fn chord_window(table: &BilliardTable<f64>, from: usize, s: &Symbol) -> bool {
    let a = table.scatterers()[from];
    let b = table.scatterers()[s.scatterer];
    let dist = (b.center + table.translate((i64::from(s.translate.0), i64::from(s.translate.1)))
        - a.center)
        .norm();
    dist > a.radius + b.radius && dist < table.flight_bound() + 2.0 * table.max_radius()
}

/// Letters ranked for enumeration: tier groups letters by the shortest
/// admissible chord gap they can realize, so budgeted enumeration spends
/// itself on short flights (where orbits are dense) before long ones.
struct RankedAlphabet {
    /// Per source component, (tier, letter) sorted ascending; the pair is
    /// the total order used for canonical (Lyndon) representatives.
    letters: Vec<Vec<(usize, Symbol)>>,
    tier_count: usize,
}

fn ranked_alphabet(table: &BilliardTable<f64>, observed: &[Vec<Symbol>]) -> RankedAlphabet {
    // Global tier of a letter: its minimal chord gap over admissible sources,
    // rounded to collapse ties from exact lattice symmetry.
    let mut gap_of: BTreeMap<Symbol, f64> = BTreeMap::new();
    for (src, letters) in observed.iter().enumerate() {
        for s in letters {
            if !chord_window(table, src, s) {
                continue;
            }
            let a = table.scatterers()[src];
            let b = table.scatterers()[s.scatterer];
            let gap = (b.center
                + table.translate((i64::from(s.translate.0), i64::from(s.translate.1)))
                - a.center)
                .norm()
                - a.radius
                - b.radius;
            let e = gap_of.entry(*s).or_insert(f64::INFINITY);
            *e = e.min(gap);
        }
    }
    let mut gaps: Vec<i64> = gap_of.values().map(|g| (g / 1e-9).round() as i64).collect();
    gaps.sort_unstable();
    gaps.dedup();
    let tier = |s: &Symbol| -> usize {
        let q = (gap_of[s] / 1e-9).round() as i64;
        gaps.binary_search(&q).expect("tier present")
    };
    let letters = observed
        .iter()
        .enumerate()
        .map(|(src, ls)| {
            let mut v: Vec<(usize, Symbol)> = ls
                .iter()
                .filter(|s| chord_window(table, src, s))
                .map(|s| (tier(s), *s))
                .collect();
            v.sort_unstable();
            v
        })
        .collect();
    RankedAlphabet { letters, tier_count: gaps.len() }
}

/// Generates each primitive cyclic word of length p exactly once, as its
/// lexicographically minimal rotation under the (tier, symbol) order, in
/// stages of increasing maximal tier. Within a stage the walk is the
/// classic Lyndon-word recursion: extend with letters no smaller than the
/// letter one period back, resetting the period on strict increase; a full
/// word is primitive exactly when its period is p. Appends to `out`;
/// returns false if the solve budget ran out mid-stage.
fn lyndon_words(
    table: &BilliardTable<f64>,
    p: usize,
    alphabet: &RankedAlphabet,
    budget: &mut usize,
    out: &mut Vec<Itinerary>,
) -> bool {
    for stage in 0..alphabet.tier_count {
        for start in 0..table.component_count() {
            let mut word: Vec<(usize, Symbol)> = Vec::with_capacity(p);
            if !lyndon_extend(start, start, p, stage, alphabet, &mut word, budget, out, 1) {
                return false;
            }
        }
    }
    true
}

#[allow(clippy::too_many_arguments)]
fn lyndon_extend(
    start: usize,
    at: usize,
    p: usize,
    stage: usize,
    alphabet: &RankedAlphabet,
    word: &mut Vec<(usize, Symbol)>,
    budget: &mut usize,
    out: &mut Vec<Itinerary>,
    period: usize,
) -> bool {
    let t = word.len();
    if t == p {
        let is_primitive = period == p;
        let closes = at == start;
        let uses_stage = word.iter().any(|&(tier, _)| tier == stage);
        if is_primitive && closes && uses_stage {
            out.push(Itinerary::new(word.iter().map(|&(_, s)| s).collect()));
            *budget = budget.saturating_sub(1);
            return *budget > 0;
        }
        return true;
    }
    let floor = if period <= t { Some(word[t - period]) } else { None };
    for &(tier, s) in &alphabet.letters[at] {
        if tier > stage {
            break;
        }
        if let Some(f) = floor {
            if (tier, s) < f {
                continue;
            }
        }
        let next_period = match floor {
            Some(f) if (tier, s) == f => period,
            _ => t + 1,
        };
        word.push((tier, s));
        let alive = lyndon_extend(
            start,
            s.scatterer,
            p,
            stage,
            alphabet,
            word,
            budget,
            out,
            next_period,
        );
        word.pop();
        if !alive {
            return false;
        }
    }
    true
}

fn divisors(n: usize) -> Vec<usize> {
    let mut d: Vec<usize> = (2..=n).filter(|p| n % p == 0).collect();
    d.sort_unstable();
    d
}

/// Census of Fix T^n: enumerate primitive canonical words of every period
/// p >= 2 dividing n, solve each, deduplicate, and accumulate the weighted
/// sum for the supplied step potential g(point, tau).
pub fn enumerate_fixed_points<G>(
    table: &BilliardTable<f64>,
    n: usize,
    g: G,
    config: &CensusConfig,
) -> Result<OrbitCensus, OrbitError>
where
    G: Fn(&PhasePoint<f64>, f64) -> f64 + Sync,
{
    let observed = one_step_alphabet(table, config.alphabet_budget);
    let alphabet = ranked_alphabet(table, &observed);
    let mut budget = config.max_sequences;
    let mut words: Vec<Itinerary> = Vec::new();
    let mut exhausted = false;
    for p in divisors(n) {
        if !lyndon_words(table, p, &alphabet, &mut budget, &mut words) {
            exhausted = true;
            break;
        }
    }
    let sequences_tried = words.len();

    // Solve in parallel, reduce in deterministic index order.
    let solved: Vec<Result<Option<PeriodicOrbit>, OrbitError>> = words
        .par_iter()
        .map(|w| find_periodic_orbit(table, w))
        .collect();

    let mut orbits: Vec<PeriodicOrbit> = Vec::new();
    let mut solver_failures = 0usize;
    let mut seen: BTreeMap<(usize, usize, i64, i64), Vec<usize>> = BTreeMap::new();
    for result in solved {
        match result {
            Ok(Some(orbit)) => {
                // Dedup by point-set proximity: quantized key plus an exact
                // distance check against colliding candidates.
                let key_point = orbit
                    .points
                    .iter()
                    .min_by(|a, b| {
                        (a.scatterer, a.r, a.phi)
                            .partial_cmp(&(b.scatterer, b.r, b.phi))
                            .expect("finite phase coordinates")
                    })
                    .expect("orbit has points");
                let key = (
                    orbit.period,
                    key_point.scatterer,
                    (key_point.r / DEDUP_TOLERANCE).round() as i64,
                    (key_point.phi / DEDUP_TOLERANCE).round() as i64,
                );
                let duplicate = seen.get(&key).is_some_and(|candidates| {
                    candidates.iter().any(|&idx| {
                        orbits_close(table, &orbits[idx], &orbit)
                    })
                });
                if !duplicate {
                    seen.entry(key).or_default().push(orbits.len());
                    orbits.push(orbit);
                }
            }
            Ok(None) => {}
            Err(OrbitError::NonConvergence) => solver_failures += 1,
            Err(e) => return Err(e),
        }
    }

    orbits.sort_by(|a, b| {
        (a.period, &a.itinerary).cmp(&(b.period, &b.itinerary))
    });

    let mut weighted_sum = 0.0;
    let mut fixed_points = 0usize;
    for orbit in &orbits {
        let p = orbit.period;
        let s_p: f64 = orbit
            .points
            .iter()
            .zip(&orbit.taus)
            .map(|(x, &tau)| g(x, tau))
            .sum();
        let repeats = (n / p) as f64;
        // Each of the p points is a fixed point of T^n with S_n g = (n/p) S_p g.
        weighted_sum += p as f64 * (repeats * s_p).exp();
        fixed_points += p;
    }

    let census = OrbitCensus {
        period: n,
        count: orbits.len(),
        orbits,
        weighted_sum,
        fixed_points,
        partial: exhausted,
        sequences_tried,
        solver_failures,
    };
    if exhausted {
        Err(OrbitError::BudgetExceeded { census })
    } else {
        Ok(census)
    }
}

fn orbits_close(table: &BilliardTable<f64>, a: &PeriodicOrbit, b: &PeriodicOrbit) -> bool {
    if a.period != b.period {
        return false;
    }
    // Same orbit iff some rotation aligns the point sequences.
    (0..a.period).any(|shift| {
        a.points
            .iter()
            .enumerate()
            .all(|(i, p)| phase_distance(table, p, &b.points[(i + shift) % b.period]) < DEDUP_TOLERANCE)
    })
}

/// All orbits of primitive period <= n_max whose grazing margin is below
/// the threshold, sorted by margin. An empty result is the diagnostic
/// "no near-grazing periodic orbit at this scale" (not a proof).
pub fn grazing_orbit_scan(
    table: &BilliardTable<f64>,
    n_max: usize,
    threshold: f64,
    config: &CensusConfig,
) -> Result<Vec<(PeriodicOrbit, f64)>, OrbitError> {
    let mut found: Vec<(PeriodicOrbit, f64)> = Vec::new();
    for p in 2..=n_max {
        // Primitive orbits only: a census at prime-free p would repeat work,
        // so scan period by period rather than through divisors.
        let census = match enumerate_fixed_points(table, p, |_, _| 0.0, config) {
            Ok(c) => c,
            Err(e) => return Err(e),
        };
        for orbit in census.orbits.into_iter().filter(|o| o.period == p) {
            if orbit.grazing_margin < threshold {
                let margin = orbit.grazing_margin;
                found.push((orbit, margin));
            }
        }
    }
    found.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite margins"));
    Ok(found)
}

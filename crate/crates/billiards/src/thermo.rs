//! Entropy and pressure estimators built on the dynamical primitives.
//!
//! The closed-form pieces are exact up to quadrature: the SRB entropy lower
//! bound, the tail-entropy and semicontinuity-defect formulas, and the
//! sparse-recurrence margin. The empirical pieces are honest one-sided
//! estimators: grazing frequencies from sampled orbit segments, entropy
//! growth rates from cell counts and orbit censuses, and atomic measures on
//! periodic orbits with their weak-star comparisons. Every estimator is
//! deterministic given its seed and configuration.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dynamics::{billiard_map, free_flight_bounds, PhasePoint, SampleStream};
use crate::geometry::BilliardTable;
use crate::orbits::OrbitCensus;
use crate::singularity::{orbit_segment, CellCount};

#[derive(Debug, Error)]
pub enum ThermoError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} data points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("census contains no orbits")]
    EmptyCensus,
    #[error("no pressure lower bound available for this potential")]
    UnsupportedPotential,
}

/// Potential g on the collision space. `ScaledTau` covers the flow-entropy
/// family g = c tau (the maximal-entropy flow potential is c = -h_top);
/// `Tabulated` is piecewise constant on a per-scatterer (r, phi) grid.
#[derive(Clone, Debug)]
pub enum Potential {
    Zero,
    ScaledTau { c: f64 },
    Tabulated(TabulatedPotential),
}

#[derive(Clone, Debug)]
pub struct TabulatedPotential {
    pub grids: Vec<PotentialGrid>,
}

#[derive(Clone, Debug)]
pub struct PotentialGrid {
    pub r_bins: usize,
    pub phi_bins: usize,
    /// Row-major: r bin outer, phi bin inner.
    pub values: Vec<f64>,
}

impl Potential {
    /// Value of g at a collision with flight time tau to the next one.
    pub fn step_value(&self, table: &BilliardTable<f64>, x: &PhasePoint<f64>, tau: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::ScaledTau { c } => c * tau,
            Potential::Tabulated(tab) => {
                let grid = &tab.grids[x.scatterer];
                let circ = table.circumference(x.scatterer);
                let ri = ((x.r / circ * grid.r_bins as f64) as usize).min(grid.r_bins - 1);
                let s = (x.phi + std::f64::consts::FRAC_PI_2) / std::f64::consts::PI;
                let pi = ((s * grid.phi_bins as f64) as usize).min(grid.phi_bins - 1);
                grid.values[ri * grid.phi_bins + pi]
            }
        }
    }

    /// Upper bound for sup g over the collision space, with a caveat when
    /// the bound leans on the estimated maximal flight time.
    pub fn sup_bound(&self, table: &BilliardTable<f64>) -> (f64, Option<String>) {
        match self {
            Potential::Zero => (0.0, None),
            Potential::ScaledTau { c } => {
                if *c <= 0.0 {
                    // g = c tau is maximized at the shortest flight, which
                    // is known exactly.
                    (c * table.min_gap(), None)
                } else {
                    let fb = free_flight_bounds(table, 20_000, SUP_SEED);
                    (
                        c * fb.tau_max,
                        Some("sup g uses the estimated maximal flight time".to_string()),
                    )
                }
            }
            Potential::Tabulated(tab) => {
                let m = tab
                    .grids
                    .iter()
                    .flat_map(|g| g.values.iter())
                    .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                (m, None)
            }
        }
    }
}

const SUP_SEED: u64 = 7;

/// Atomic measure on the collision space; weights are normalized to total
/// mass one at construction.
#[derive(Clone, Debug)]
pub struct EmpiricalMeasure {
    atoms: Vec<(PhasePoint<f64>, f64)>,
}

impl EmpiricalMeasure {
    pub fn new(mut atoms: Vec<(PhasePoint<f64>, f64)>) -> Result<Self, ThermoError> {
        let mut total = 0.0;
        for (x, w) in &atoms {
            if !w.is_finite() || *w < 0.0 {
                return Err(ThermoError::InvalidInput(format!("atom weight {w}")));
            }
            if x.phi.abs() > std::f64::consts::FRAC_PI_2 {
                return Err(ThermoError::InvalidInput(format!(
                    "atom outside the collision space: phi = {}",
                    x.phi
                )));
            }
            total += w;
        }
        if total <= 0.0 {
            return Err(ThermoError::InvalidInput("zero total mass".to_string()));
        }
        for (_, w) in &mut atoms {
            *w /= total;
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[(PhasePoint<f64>, f64)] {
        &self.atoms
    }

    pub fn integrate(&self, f: impl Fn(&PhasePoint<f64>) -> f64) -> f64 {
        self.atoms.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// Image measure under the collision map; atoms whose image is
    /// undefined (grazing) are dropped and counted.
    pub fn pushforward(
        &self,
        table: &BilliardTable<f64>,
    ) -> Result<(EmpiricalMeasure, usize), ThermoError> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        let mut dropped = 0usize;
        for (x, w) in &self.atoms {
            match billiard_map(table, x) {
                Ok(step) => atoms.push((step.image, *w)),
                Err(_) => dropped += 1,
            }
        }
        if dropped == 0 {
            // Nothing lost: weights are already normalized, and skipping
            // the renormalization keeps them bit-exact under permutation.
            return Ok((EmpiricalMeasure { atoms }, 0));
        }
        Ok((EmpiricalMeasure::new(atoms)?, dropped))
    }
}

/// Maximal observed frequency of near-grazing collisions in windows of n0
/// consecutive collisions; a lower bound for the phase-space supremum.
#[derive(Clone, Debug)]
pub struct S0Estimate {
    pub n0: usize,
    pub phi0: f64,
    pub value: f64,
    pub witness: PhasePoint<f64>,
}

#[derive(Clone, Debug)]
pub struct S0Config {
    pub segments: usize,
    pub segment_length: usize,
    pub seed: u64,
    pub refine_rounds: usize,
}

impl Default for S0Config {
    fn default() -> Self {
        Self { segments: 64, segment_length: 96, seed: 7, refine_rounds: 8 }
    }
}

/// Named bound with its inputs and honesty caveats.
#[derive(Clone, Debug)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub inputs: BTreeMap<String, f64>,
    pub caveats: Vec<String>,
}

// 15-point Gauss-Legendre rule on [-1, 1] (positive half; the rule is
// symmetric and the zero node is listed once).
const GL15_NODES: [f64; 8] = [
    0.000000000000000,
    0.201194093997435,
    0.394151347077563,
    0.570972172608539,
    0.724417731360170,
    0.848206583410427,
    0.937273392400706,
    0.987992518020485,
];
const GL15_WEIGHTS: [f64; 8] = [
    0.202578241925561,
    0.198431485327112,
    0.186161000015562,
    0.166269205816994,
    0.139570677926154,
    0.107159220467172,
    0.070366047488108,
    0.030753241996117,
];

fn gl15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut sum = GL15_WEIGHTS[0] * f(mid);
    for i in 1..8 {
        let dx = half * GL15_NODES[i];
        sum += GL15_WEIGHTS[i] * (f(mid + dx) + f(mid - dx));
    }
    sum * half
}

/// Adaptive bisection: accept a panel when one level of refinement moves
/// its Gauss-Legendre value by less than the panel's share of the budget.
fn adaptive_quad(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let mid = 0.5 * (a + b);
        let left = gl15(f, a, mid);
        let right = gl15(f, mid, b);
        if depth >= 48 || (left + right - whole).abs() <= tol {
            return left + right;
        }
        recurse(f, a, mid, left, 0.5 * tol, depth + 1)
            + recurse(f, mid, b, right, 0.5 * tol, depth + 1)
    }
    let whole = gl15(f, a, b);
    recurse(f, a, b, whole, tol, 0)
}

fn srb_integral(tau_min: f64, kappa_min: f64, tol: f64) -> f64 {
    // (1/2) int_{-pi/2}^{pi/2} log(1 + 2 tau kappa / cos phi) cos phi dphi;
    // the integrand is even, so integrate the right half once. It extends
    // continuously by 0 at pi/2 and the quadrature never evaluates there.
    let a = 2.0 * tau_min * kappa_min;
    let f = |phi: f64| {
        let c = phi.cos();
        (1.0 + a / c).ln() * c
    };
    adaptive_quad(&f, 0.0, std::f64::consts::FRAC_PI_2, tol)
}

/// Entropy of the smooth invariant measure, bounded below in closed form
/// from the minimal flight time and minimal scatterer curvature.
pub fn srb_entropy_lower_bound(tau_min: f64, kappa_min: f64) -> Result<f64, ThermoError> {
    if tau_min < 0.0 {
        return Err(ThermoError::InvalidInput(format!("negative tau_min {tau_min}")));
    }
    if !(kappa_min > 0.0) {
        return Err(ThermoError::InvalidInput(format!("kappa_min {kappa_min} must be positive")));
    }
    if tau_min == 0.0 {
        return Ok(0.0);
    }
    Ok(srb_integral(tau_min, kappa_min, 1e-10))
}

/// Simulated orbit windows reused across estimates with the same config;
/// identical (table, config) inputs see identical segments, which is what
/// makes the monotonicity invariants exact rather than statistical.
fn sample_segments(table: &BilliardTable<f64>, config: &S0Config) -> Vec<Vec<PhasePoint<f64>>> {
    let stream = SampleStream::new(config.seed);
    let mut segments = Vec::with_capacity(config.segments);
    let mut index = 0usize;
    let mut attempts = 0usize;
    while segments.len() < config.segments && attempts < 8 * config.segments {
        attempts += 1;
        let start = stream.phase_point(table, index);
        index += 1;
        if let Some(seg) = simulate_segment(table, &start, config.segment_length) {
            segments.push(seg);
        }
    }
    segments
}

fn simulate_segment(
    table: &BilliardTable<f64>,
    start: &PhasePoint<f64>,
    length: usize,
) -> Option<Vec<PhasePoint<f64>>> {
    let mut seg = Vec::with_capacity(length);
    let mut cur = *start;
    seg.push(cur);
    for _ in 1..length {
        cur = billiard_map(table, &cur).ok()?.image;
        seg.push(cur);
    }
    Some(seg)
}

fn window_best(seg: &[PhasePoint<f64>], n0: usize, phi0: f64) -> Option<(f64, usize)> {
    if seg.len() < n0 {
        return None;
    }
    let mut best = (0.0f64, 0usize);
    let mut found = false;
    for off in 0..=(seg.len() - n0) {
        let hits = seg[off..off + n0].iter().filter(|p| p.phi.abs() > phi0).count();
        let freq = hits as f64 / n0 as f64;
        if !found || freq > best.0 {
            best = (freq, off);
            found = true;
        }
    }
    Some(best)
}

/// Maximal phi0-grazing frequency over n0 consecutive collisions: stratified
/// sampled segments plus local pattern-search refinement around the best
/// window. The result is a lower bound for the supremum.
pub fn s0_estimate(
    table: &BilliardTable<f64>,
    n0: usize,
    phi0: f64,
    config: &S0Config,
) -> S0Estimate {
    let segments = sample_segments(table, config);
    let mut best_value = 0.0f64;
    let mut witness = PhasePoint::new(0, 0.0, 0.0);
    for seg in &segments {
        if let Some((freq, off)) = window_best(seg, n0, phi0) {
            if freq > best_value {
                best_value = freq;
                witness = seg[off];
            }
        }
    }

    // Pattern search around the witness: score windows by hit count, then
    // by total |phi| to climb toward grazing even between count levels.
    let circ = table.circumference(witness.scatterer);
    let mut step_r = 0.01 * circ;
    let mut step_phi = 0.02;
    let score = |x: &PhasePoint<f64>| -> Option<(usize, f64)> {
        let seg = simulate_segment(table, x, n0)?;
        let hits = seg.iter().filter(|p| p.phi.abs() > phi0).count();
        let graze: f64 = seg.iter().map(|p| p.phi.abs()).sum();
        Some((hits, graze))
    };
    let mut best_score = score(&witness).unwrap_or((0, 0.0));
    for _ in 0..config.refine_rounds {
        let mut improved = false;
        for (dr, dphi) in [
            (1.0, 0.0),
            (-1.0, 0.0),
            (0.0, 1.0),
            (0.0, -1.0),
            (1.0, 1.0),
            (-1.0, -1.0),
            (1.0, -1.0),
            (-1.0, 1.0),
        ] {
            let cand = PhasePoint::new(
                witness.scatterer,
                (witness.r + dr * step_r).rem_euclid(circ),
                (witness.phi + dphi * step_phi)
                    .clamp(-std::f64::consts::FRAC_PI_2 + 1e-9, std::f64::consts::FRAC_PI_2 - 1e-9),
            );
            if let Some(s) = score(&cand) {
                if s > best_score {
                    best_score = s;
                    witness = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            step_r *= 0.5;
            step_phi *= 0.5;
        }
    }
    best_value = best_value.max(best_score.0 as f64 / n0 as f64);

    S0Estimate { n0, phi0, value: best_value, witness }
}

/// How s0 enters the sparse-recurrence margin: an a-priori half bound, or
/// grid-searched estimates.
#[derive(Clone, Debug)]
pub enum S0Mode {
    /// Assume s0 <= 1/2, the value the closed-form certification uses.
    AssumedHalf,
    /// Estimate s0 on a grid of (n0, phi0) pairs and take the smallest.
    Estimated { n0_grid: Vec<usize>, phi0_grid: Vec<f64>, config: S0Config },
}

/// Margin (P_lb - sup g) - min s0 log 2: positive means sparse recurrence
/// is certified at estimator precision.
pub fn sparse_recurrence_check(
    table: &BilliardTable<f64>,
    g: &Potential,
    pressure_lb: Option<f64>,
    mode: &S0Mode,
) -> Result<BoundReport, ThermoError> {
    let mut caveats = Vec::new();
    let p_lb = match pressure_lb {
        Some(v) => v,
        None => match g {
            Potential::Zero => {
                srb_entropy_lower_bound(table.min_gap(), crate::geometry::min_curvature(table))?
            }
            _ => return Err(ThermoError::UnsupportedPotential),
        },
    };
    let (sup_g, sup_caveat) = g.sup_bound(table);
    if let Some(c) = sup_caveat {
        caveats.push(c);
    }

    let mut inputs = BTreeMap::new();
    let s0_log2 = match mode {
        S0Mode::AssumedHalf => {
            caveats.push("s0 taken as 1/2 (closed-form mode), not estimated".to_string());
            0.5 * std::f64::consts::LN_2
        }
        S0Mode::Estimated { n0_grid, phi0_grid, config } => {
            caveats.push(
                "s0 estimates are lower bounds for the supremum; certification is one-sided"
                    .to_string(),
            );
            let mut min_s0 = f64::INFINITY;
            for &n0 in n0_grid {
                for &phi0 in phi0_grid {
                    let est = s0_estimate(table, n0, phi0, config);
                    inputs.insert(format!("s0[n0={n0},phi0={phi0:.3}]"), est.value);
                    min_s0 = min_s0.min(est.value);
                }
            }
            if !min_s0.is_finite() {
                return Err(ThermoError::InvalidInput("empty s0 grid".to_string()));
            }
            min_s0 * std::f64::consts::LN_2
        }
    };

    let value = (p_lb - sup_g) - s0_log2;
    inputs.insert("pressure_lower_bound".to_string(), p_lb);
    inputs.insert("sup_potential".to_string(), sup_g);
    inputs.insert("s0_log2".to_string(), s0_log2);
    Ok(BoundReport { name: "sparse_recurrence_margin".to_string(), value, inputs, caveats })
}

/// Least-squares growth rate of log cell counts in n.
#[derive(Clone, Debug)]
pub struct CellGrowth {
    pub rate: f64,
    /// Per-step increments log(count_{k+1}/count_k)/(n_{k+1}-n_k).
    pub increments: Vec<(usize, f64)>,
}

pub fn entropy_from_cells(counts: &[(usize, usize)]) -> Result<CellGrowth, ThermoError> {
    if counts.len() < 3 {
        return Err(ThermoError::InsufficientData { needed: 3, got: counts.len() });
    }
    if counts.iter().any(|&(_, c)| c == 0) {
        return Err(ThermoError::InvalidInput("zero cell count".to_string()));
    }
    let m = counts.len() as f64;
    let sx: f64 = counts.iter().map(|&(n, _)| n as f64).sum();
    let sy: f64 = counts.iter().map(|&(_, c)| (c as f64).ln()).sum();
    let sxx: f64 = counts.iter().map(|&(n, _)| (n as f64).powi(2)).sum();
    let sxy: f64 = counts.iter().map(|&(n, c)| n as f64 * (c as f64).ln()).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Err(ThermoError::InvalidInput("degenerate n values".to_string()));
    }
    let rate = (m * sxy - sx * sy) / denom;
    let increments = counts
        .windows(2)
        .map(|w| {
            let (n0, c0) = w[0];
            let (n1, c1) = w[1];
            (n1, ((c1 as f64).ln() - (c0 as f64).ln()) / (n1 as f64 - n0 as f64))
        })
        .collect();
    Ok(CellGrowth { rate, increments })
}

/// Growth-rate sequence (1/n) log sum e^{S_n g} from censuses, with a
/// plateau estimate from the last terms.
#[derive(Clone, Debug)]
pub struct OrbitGrowth {
    pub sequence: Vec<(usize, f64)>,
    pub plateau: f64,
}

pub fn entropy_from_orbits(censuses: &[OrbitCensus]) -> Result<OrbitGrowth, ThermoError> {
    if censuses.is_empty() {
        return Err(ThermoError::EmptyCensus);
    }
    let mut sequence = Vec::with_capacity(censuses.len());
    for census in censuses {
        if census.count == 0 || census.weighted_sum <= 0.0 {
            return Err(ThermoError::EmptyCensus);
        }
        sequence.push((census.period, census.weighted_sum.ln() / census.period as f64));
    }
    let k = sequence.len().min(3);
    let plateau = sequence[sequence.len() - k..].iter().map(|&(_, v)| v).sum::<f64>() / k as f64;
    Ok(OrbitGrowth { sequence, plateau })
}

/// Tail-entropy bound (3 + 2 floor(tau_max/tau_min)) s0 log(2K).
pub fn tail_entropy_bound(
    s0: f64,
    k: f64,
    tau_min: f64,
    tau_max: f64,
) -> Result<BoundReport, ThermoError> {
    if !(0.0..=1.0).contains(&s0) {
        return Err(ThermoError::InvalidInput(format!("s0 {s0} outside [0,1]")));
    }
    if k < 1.0 {
        return Err(ThermoError::InvalidInput(format!("K {k} below 1")));
    }
    if !(tau_min > 0.0) || tau_max < tau_min {
        return Err(ThermoError::InvalidInput(format!(
            "flight bounds ({tau_min}, {tau_max}) invalid"
        )));
    }
    let value = (3.0 + 2.0 * (tau_max / tau_min).floor()) * s0 * (2.0 * k).ln();
    let mut inputs = BTreeMap::new();
    inputs.insert("s0".to_string(), s0);
    inputs.insert("K".to_string(), k);
    inputs.insert("tau_min".to_string(), tau_min);
    inputs.insert("tau_max".to_string(), tau_max);
    Ok(BoundReport { name: "tail_entropy_bound".to_string(), value, inputs, caveats: Vec::new() })
}

/// Upper-semicontinuity defect bound P_mu + mass (P_top - P_muS); for an
/// atomic singular part the entropy term vanishes and P_muS is just the
/// potential integral.
pub fn usc_defect_bound(
    p_mu: f64,
    mu_s_mass: f64,
    p_top: f64,
    p_mu_s: f64,
) -> Result<BoundReport, ThermoError> {
    if !(0.0..=1.0).contains(&mu_s_mass) {
        return Err(ThermoError::InvalidInput(format!("singular mass {mu_s_mass} outside [0,1]")));
    }
    for (name, v) in [("P_mu", p_mu), ("P_top", p_top), ("P_muS", p_mu_s)] {
        if !v.is_finite() {
            return Err(ThermoError::InvalidInput(format!("{name} not finite")));
        }
    }
    let value = p_mu + mu_s_mass * (p_top - p_mu_s);
    let mut inputs = BTreeMap::new();
    inputs.insert("P_mu".to_string(), p_mu);
    inputs.insert("mu_S_mass".to_string(), mu_s_mass);
    inputs.insert("P_top".to_string(), p_top);
    inputs.insert("P_muS".to_string(), p_mu_s);
    Ok(BoundReport { name: "usc_defect_bound".to_string(), value, inputs, caveats: Vec::new() })
}

/// Atomic measure on Fix T^n weighting each fixed point by e^{S_n g}.
pub fn periodic_orbit_measure(
    table: &BilliardTable<f64>,
    census: &OrbitCensus,
    g: &Potential,
) -> Result<EmpiricalMeasure, ThermoError> {
    if census.orbits.is_empty() {
        return Err(ThermoError::EmptyCensus);
    }
    let n = census.period;
    let mut atoms = Vec::with_capacity(census.fixed_points);
    for orbit in &census.orbits {
        let s_p: f64 = orbit
            .points
            .iter()
            .zip(&orbit.taus)
            .map(|(x, &tau)| g.step_value(table, x, tau))
            .sum();
        // S_n g is constant along the orbit: the n-window repeats the
        // primitive p-window n/p times.
        let weight = ((n / orbit.period) as f64 * s_p).exp();
        for x in &orbit.points {
            atoms.push((*x, weight));
        }
    }
    EmpiricalMeasure::new(atoms)
}

/// The chi acceptance target for near-maximizers inside each cell: the
/// tracked extremal-tau representative is taken as the cell's S_n g
/// near-maximizer for the scaled-tau family.
pub const CHI_ACCEPTANCE: f64 = 0.99;

/// Averaged equilibrium approximation: one weighted atom per discovered
/// cell, pushed forward over the n-window and averaged. Returns the measure
/// and the number of representatives dropped for singular orbits.
pub fn equilibrium_approximation(
    table: &BilliardTable<f64>,
    n: usize,
    g: &Potential,
    cells: &CellCount,
) -> Result<(EmpiricalMeasure, usize), ThermoError> {
    if n == 0 {
        return Err(ThermoError::InvalidInput("window must be positive".to_string()));
    }
    let mut atoms = Vec::new();
    let mut dropped = 0usize;
    for rep in &cells.representatives {
        let x = match g {
            Potential::ScaledTau { c } if *c >= 0.0 => rep.max_tau_point,
            Potential::ScaledTau { .. } => rep.min_tau_point,
            _ => rep.point,
        };
        match orbit_segment(table, &x, n) {
            Ok(seg) => {
                let s_n: f64 = (0..n)
                    .map(|i| g.step_value(table, &seg.points[i], seg.taus[i]))
                    .sum();
                let weight = s_n.exp();
                for i in 0..n {
                    atoms.push((seg.points[i], weight));
                }
            }
            Err(_) => dropped += 1,
        }
    }
    if atoms.is_empty() {
        return Err(ThermoError::InvalidInput("every representative was singular".to_string()));
    }
    Ok((EmpiricalMeasure::new(atoms)?, dropped))
}

/// Weak-star distance surrogate: maximal discrepancy over a fixed dictionary
/// of m bounded test functions (low-order trigonometric products in
/// normalized r and phi, per scatterer).
pub fn weak_star_distance(
    table: &BilliardTable<f64>,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    m: usize,
) -> f64 {
    let funcs = dictionary(table, m);
    let mut worst = 0.0f64;
    for f in &funcs {
        let a = mu.integrate(|x| f.eval(table, x));
        let b = nu.integrate(|x| f.eval(table, x));
        worst = worst.max((a - b).abs());
    }
    worst
}

struct TestFunction {
    scatterer: usize,
    /// 0 -> 1, 1 -> cos u, 2 -> sin u, 3 -> cos 2u, 4 -> sin 2u.
    r_mode: usize,
    phi_mode: usize,
}

impl TestFunction {
    fn eval(&self, table: &BilliardTable<f64>, x: &PhasePoint<f64>) -> f64 {
        if x.scatterer != self.scatterer {
            return 0.0;
        }
        let u = 2.0 * std::f64::consts::PI * x.r / table.circumference(x.scatterer);
        let v = 2.0 * x.phi;
        trig(self.r_mode, u) * trig(self.phi_mode, v)
    }
}

fn trig(mode: usize, u: f64) -> f64 {
    match mode {
        0 => 1.0,
        1 => u.cos(),
        2 => u.sin(),
        3 => (2.0 * u).cos(),
        _ => (2.0 * u).sin(),
    }
}

fn dictionary(table: &BilliardTable<f64>, m: usize) -> Vec<TestFunction> {
    // Low orders first, scatterers interleaved, skipping the constant
    // (measures are normalized, so it separates nothing).
    let mut modes: Vec<(usize, usize)> = (0..5usize)
        .flat_map(|a| (0..5usize).map(move |b| (a, b)))
        .filter(|&(a, b)| (a, b) != (0, 0))
        .collect();
    modes.sort_by_key(|&(a, b)| (a.max(b), a, b));
    let mut funcs = Vec::with_capacity(m);
    'outer: for (a, b) in modes {
        for s in 0..table.component_count() {
            funcs.push(TestFunction { scatterer: s, r_mode: a, phi_mode: b });
            if funcs.len() == m {
                break 'outer;
            }
        }
    }
    funcs
}

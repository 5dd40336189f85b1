//! Release gate: thirteen end-to-end checks spanning the closed-form
//! entropy bound, horizon verdicts, collision-map invariants, the
//! periodic-orbit census, measure estimators, and CLI determinism.
//! Each check prints one PASS/FAIL line; the test fails at the end if
//! any check failed, so a broken build reports every failure at once.

use std::process::Command;
use std::time::Instant;

use billiards::dynamics::{
    billiard_map, billiard_map_inverse, finite_horizon_check, free_flight_bounds, SampleStream,
    Symbol,
};
use billiards::geometry::{boundary_frame, build_table, TableSpec};
use billiards::orbits::{
    enumerate_fixed_points, find_periodic_orbit, CensusConfig, OrbitCensus, OrbitError,
};
use billiards::singularity::{count_cells, Itinerary, SamplerConfig};
use billiards::thermo::{
    entropy_from_orbits, periodic_orbit_measure, s0_estimate, sparse_recurrence_check,
    srb_entropy_lower_bound, tail_entropy_bound, usc_defect_bound, weak_star_distance, Potential,
    S0Config, S0Mode,
};
use billiards::{BilliardTable, PhasePoint};

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn check(&mut self, id: usize, name: &str, ok: bool, detail: String) {
        let status = if ok { "PASS" } else { "FAIL" };
        println!("criterion {id:02} {status} {name}: {detail}");
        if !ok {
            self.failures.push(format!("criterion {id:02} {name}: {detail}"));
        }
    }
}

fn hex(d: f64) -> BilliardTable {
    build_table(&TableSpec::hexagonal(d)).unwrap()
}

fn square(r: f64, r_prime: f64) -> BilliardTable {
    build_table(&TableSpec::square(r, r_prime)).unwrap()
}

/// Composite Simpson on [0, pi/2), independent of the adaptive quadrature
/// inside the library (different rule, different panel layout).
fn simpson_srb(tau_min: f64, kappa_min: f64) -> f64 {
    let a = 2.0 * tau_min * kappa_min;
    let f = |phi: f64| {
        let c = phi.cos();
        if c <= 0.0 {
            0.0
        } else {
            (1.0 + a / c).ln() * c
        }
    };
    let n = 1 << 18;
    let h = std::f64::consts::FRAC_PI_2 / n as f64;
    let mut sum = f(0.0) + f(std::f64::consts::FRAC_PI_2);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    sum * h / 3.0
}

fn circ_dist(a: f64, b: f64, circ: f64) -> f64 {
    let d = (a - b).rem_euclid(circ);
    d.min(circ - d)
}

fn phase_dist(a: &PhasePoint, b: &PhasePoint, circ: f64) -> f64 {
    if a.scatterer != b.scatterer {
        return f64::INFINITY;
    }
    let dr = circ_dist(a.r, b.r, circ);
    let dphi = a.phi - b.phi;
    (dr * dr + dphi * dphi).sqrt()
}

/// Census that tolerates an exhausted sequence budget by keeping the
/// partial result (the partial flag stays set on the census).
fn census(table: &BilliardTable, n: usize, config: &CensusConfig) -> OrbitCensus {
    match enumerate_fixed_points(table, n, |_, _| 0.0, config) {
        Ok(c) => c,
        Err(OrbitError::BudgetExceeded { census }) => census,
        Err(e) => panic!("census n={n} failed: {e}"),
    }
}

fn u01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[test]
fn acceptance() {
    let mut gate = Gate { failures: Vec::new() };
    let hex22 = hex(2.2);

    // 1. Entropy lower bound on the hexagonal table at the shortest gap.
    let t0 = Instant::now();
    let bound_hex = srb_entropy_lower_bound(0.15, 1.0).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    let oracle = simpson_srb(0.15, 1.0);
    let half_log2 = 0.5 * std::f64::consts::LN_2;
    gate.check(
        1,
        "srb bound hexagonal",
        bound_hex > 0.36 && bound_hex > half_log2 && (bound_hex - oracle).abs() < 1e-6 && dt < 1.0,
        format!(
            "value {bound_hex:.6} (> 0.36, > {half_log2:.5}), quadrature gap {:.2e}, {dt:.3} s",
            (bound_hex - oracle).abs()
        ),
    );

    // 2. Entropy lower bound on the square table.
    let t0 = Instant::now();
    let tau_sq = std::f64::consts::SQRT_2 / 2.0 - 0.65;
    let bound_sq = srb_entropy_lower_bound(tau_sq, 2.5).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    gate.check(
        2,
        "srb bound square",
        bound_sq > 0.347 && dt < 1.0,
        format!("value {bound_sq:.6} (> 0.347), {dt:.3} s"),
    );

    // 3. The bound grows with the minimal flight time.
    let h = 1e-4;
    let mut diffs = Vec::new();
    for i in 0..10 {
        let tau = 0.05 + 0.1 * i as f64;
        let lo = srb_entropy_lower_bound(tau, 1.0).unwrap();
        let hi = srb_entropy_lower_bound(tau + h, 1.0).unwrap();
        diffs.push(hi - lo);
    }
    let min_diff = diffs.iter().cloned().fold(f64::INFINITY, f64::min);
    gate.check(
        3,
        "srb bound monotone in tau_min",
        min_diff > 0.0,
        format!("10 forward differences, smallest {min_diff:.3e}"),
    );

    // 4. Horizon verdicts on both families.
    let t0 = Instant::now();
    let h22 = finite_horizon_check(&hex22, 6);
    let dt22 = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let h235 = finite_horizon_check(&hex(2.35), 6);
    let dt235 = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let hsq = finite_horizon_check(&square(0.25, 0.4), 6);
    let dtsq = t0.elapsed().as_secs_f64();
    gate.check(
        4,
        "horizon verdicts",
        h22.finite
            && !h235.finite
            && h235.witness.is_some()
            && hsq.finite
            && dt22 < 5.0
            && dt235 < 5.0
            && dtsq < 5.0,
        format!(
            "hex 2.2 finite={}, hex 2.35 finite={} witness={:?}, square finite={}; {:.2}/{:.2}/{:.2} s",
            h22.finite,
            h235.finite,
            h235.witness.as_ref().map(|w| w.direction),
            hsq.finite,
            dt22,
            dt235,
            dtsq
        ),
    );

    // 5. Collision-map invariants on ten thousand seeded points.
    let t0 = Instant::now();
    let bounds = free_flight_bounds(&hex22, 20_000, SEED);
    let stream = SampleStream::new(SEED);
    let circ = hex22.circumference(0);
    let mut max_round_trip = 0.0f64;
    let mut max_reflection = 0.0f64;
    let mut max_reversal = 0.0f64;
    let mut tau_lo = f64::INFINITY;
    let mut tau_hi = 0.0f64;
    let mut map_failures = 0usize;
    for i in 0..10_000 {
        let x = stream.phase_point(&hex22, i);
        let Ok(step) = billiard_map(&hex22, &x) else {
            map_failures += 1;
            continue;
        };
        tau_lo = tau_lo.min(step.tau);
        tau_hi = tau_hi.max(step.tau);

        // Reflection law at the image collision: the incoming direction
        // mirrored in the boundary normal is the outgoing direction.
        let vin = x.flow_state(&hex22).direction;
        let vout = step.image.flow_state(&hex22).direction;
        let frame = boundary_frame(&hex22, step.image.scatterer, step.image.r).unwrap();
        let mirrored = vin - frame.outward_normal.scale(2.0 * vin.dot(frame.outward_normal));
        max_reflection = max_reflection.max((mirrored - vout).norm());

        // Round trip through the inverse map.
        match billiard_map_inverse(&hex22, &step.image) {
            Ok(back) => {
                max_round_trip = max_round_trip.max(phase_dist(&back.image, &x, circ));
            }
            Err(_) => map_failures += 1,
        }

        // Time reversal: R T R = T^{-1} with R(r, phi) = (r, -phi).
        let rx = PhasePoint::new(x.scatterer, x.r, -x.phi);
        match (billiard_map(&hex22, &rx), billiard_map_inverse(&hex22, &x)) {
            (Ok(fwd), Ok(inv)) => {
                let rtr = PhasePoint::new(fwd.image.scatterer, fwd.image.r, -fwd.image.phi);
                max_reversal = max_reversal.max(phase_dist(&inv.image, &rtr, circ));
            }
            _ => map_failures += 1,
        }
    }
    let dt = t0.elapsed().as_secs_f64();
    gate.check(
        5,
        "collision map invariants",
        map_failures == 0
            && max_round_trip < 1e-9
            && max_reflection < 1e-10
            && max_reversal < 1e-10
            && tau_lo >= 0.2 - 1e-9
            && tau_hi <= bounds.tau_max
            && dt < 10.0,
        format!(
            "round-trip {max_round_trip:.2e}, reflection {max_reflection:.2e}, reversal \
             {max_reversal:.2e}, tau in [{tau_lo:.6}, {tau_hi:.6}] within [0.2, {:.6}], \
             {map_failures} failures, {dt:.2} s",
            bounds.tau_max
        ),
    );

    // 6. The center-line period-2 orbit and its symmetry-forced values.
    let word = Itinerary::new(vec![
        Symbol { scatterer: 0, translate: (1, 0) },
        Symbol { scatterer: 0, translate: (-1, 0) },
    ]);
    let orbit = find_periodic_orbit(&hex22, &word).unwrap();
    let (ok6, detail6) = match &orbit {
        Some(o) => {
            let max_phi = o.points.iter().map(|p| p.phi.abs()).fold(0.0, f64::max);
            (
                (o.length - 0.4).abs() <= 1e-10 && max_phi <= 1e-10,
                format!("length {:.12} (target 0.4), max |phi| {max_phi:.2e}", o.length),
            )
        }
        None => (false, "solver rejected the center-line word".to_string()),
    };
    gate.check(6, "period-2 center-line orbit", ok6, detail6);

    // Shared censuses for criteria 7-10.
    let census_config = CensusConfig::default();
    let t_census = Instant::now();
    let censuses: Vec<OrbitCensus> =
        (2..=8).map(|n| census(&hex22, n, &census_config)).collect();
    let census_time = t_census.elapsed().as_secs_f64();
    let by_n = |n: usize| &censuses[n - 2];

    // 7. Fixed points never exceed the itinerary-cell count at the same n.
    let mut ok7 = true;
    let mut pairs = Vec::new();
    for n in 2..=6 {
        let c = by_n(n);
        // Seeding the sampler with the orbit points makes every cell that
        // carries a fixed point visible to the cell counter, so the
        // inequality is checked against an honest cell census.
        let seeds: Vec<PhasePoint> =
            c.orbits.iter().flat_map(|o| o.points.iter().cloned()).collect();
        let config = SamplerConfig { seed: SEED, extra_seeds: seeds, ..Default::default() };
        let cells = count_cells(&hex22, n, &config);
        // A budget-truncated census undercounts Fix T^n, so the computed
        // inequality below stays an honest check either way.
        ok7 &= c.fixed_points <= cells.count;
        pairs.push(format!(
            "n={n}: {} <= {}{}",
            c.fixed_points,
            cells.count,
            if c.partial { " (census truncated)" } else { "" }
        ));
    }
    gate.check(7, "fixed points bounded by cells", ok7, pairs.join(", "));

    // 8. Growth plateau of (1/n) log #Fix T^n.
    let growth = entropy_from_orbits(&censuses[2..]).unwrap();
    gate.check(
        8,
        "orbit growth plateau",
        growth.plateau > 0.3 && census_time < 600.0,
        format!(
            "plateau {:.4} over n=4..8 (> 0.3), censuses built in {census_time:.1} s",
            growth.plateau
        ),
    );

    // 9. Invariance of the periodic-orbit measure: pushforward equals the
    // measure as an atom multiset.
    let mu4 = periodic_orbit_measure(&hex22, by_n(4), &Potential::Zero).unwrap();
    let (pushed, dropped) = mu4.pushforward(&hex22).unwrap();
    let originals = mu4.atoms();
    let mut used = vec![false; originals.len()];
    let mut max_pair_dist = 0.0f64;
    let mut weight_mismatches = 0usize;
    let mut unmatched = 0usize;
    for (y, w) in pushed.atoms() {
        let mut best = f64::INFINITY;
        let mut best_i = usize::MAX;
        for (i, (x, _)) in originals.iter().enumerate() {
            if used[i] {
                continue;
            }
            let d = phase_dist(y, x, circ);
            if d < best {
                best = d;
                best_i = i;
            }
        }
        if best_i == usize::MAX || best >= 1e-8 {
            unmatched += 1;
            continue;
        }
        used[best_i] = true;
        max_pair_dist = max_pair_dist.max(best);
        if originals[best_i].1.to_bits() != w.to_bits() {
            weight_mismatches += 1;
        }
    }
    gate.check(
        9,
        "measure invariance under the map",
        dropped == 0 && unmatched == 0 && weight_mismatches == 0,
        format!(
            "{} atoms matched, max pair distance {max_pair_dist:.2e}, {dropped} dropped, \
             {weight_mismatches} weight mismatches",
            originals.len() - used.iter().filter(|u| !**u).count()
        ),
    );

    // 10. Equidistribution trend of the weak-star distances.
    let mu6 = periodic_orbit_measure(&hex22, by_n(6), &Potential::Zero).unwrap();
    let mu8 = periodic_orbit_measure(&hex22, by_n(8), &Potential::Zero).unwrap();
    let d46 = weak_star_distance(&hex22, &mu4, &mu6, 32);
    let d68 = weak_star_distance(&hex22, &mu6, &mu8, 32);
    gate.check(
        10,
        "weak-star distance trend",
        d68 <= 1.1 * d46,
        format!("d(mu4, mu6) = {d46:.5}, d(mu6, mu8) = {d68:.5} (<= 1.1x)"),
    );

    // 11. Sparse-recurrence certification in both modes.
    let hex215 = hex(2.15);
    let sq = square(0.25, 0.4);
    let half_hex =
        sparse_recurrence_check(&hex215, &Potential::Zero, None, &S0Mode::AssumedHalf).unwrap();
    let half_sq =
        sparse_recurrence_check(&sq, &Potential::Zero, None, &S0Mode::AssumedHalf).unwrap();
    let s0_config =
        S0Config { segments: 32, segment_length: 64, seed: SEED, refine_rounds: 4 };
    let n0_grid = [8usize, 16, 32];
    let phi0_grid = [1.2f64, 1.35, 1.5];
    let mut grid_ok = true;
    let mut grid_values = Vec::new();
    for &n0 in &n0_grid {
        let mut prev_phi = f64::INFINITY;
        for &phi0 in &phi0_grid {
            let est = s0_estimate(&hex215, n0, phi0, &s0_config);
            grid_ok &= (0.0..=1.0).contains(&est.value) && est.value <= prev_phi;
            prev_phi = est.value;
            grid_values.push(est.value);
        }
    }
    // Doubling the window cannot raise the maximal window average.
    for j in 0..phi0_grid.len() {
        let v8 = grid_values[j];
        let v16 = grid_values[phi0_grid.len() + j];
        let v32 = grid_values[2 * phi0_grid.len() + j];
        grid_ok &= v16 <= v8 && v32 <= v16;
    }
    let estimated = sparse_recurrence_check(
        &hex215,
        &Potential::Zero,
        None,
        &S0Mode::Estimated {
            n0_grid: n0_grid.to_vec(),
            phi0_grid: phi0_grid.to_vec(),
            config: s0_config.clone(),
        },
    )
    .unwrap();
    gate.check(
        11,
        "sparse recurrence certification",
        half_hex.value > 0.0 && half_sq.value > 0.0 && grid_ok && estimated.value > 0.0,
        format!(
            "hex 2.15 margin {:.5}, square margin {:.6}, s0 grid in [0,1] monotone, \
             estimated-mode margin {:.5}",
            half_hex.value, half_sq.value, estimated.value
        ),
    );

    // 12. Bound evaluators against direct arithmetic.
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut max_rel = 0.0f64;
    let mut ok12 = true;
    for _ in 0..100 {
        let s0 = u01(&mut rng);
        let k = 1.0 + 63.0 * u01(&mut rng);
        let tau_min = 0.05 + 0.45 * u01(&mut rng);
        let tau_max = tau_min * (1.0 + 9.0 * u01(&mut rng));
        let got = tail_entropy_bound(s0, k, tau_min, tau_max).unwrap().value;
        let expected = s0 * (2.0 * k).ln() * 2.0f64.mul_add((tau_max / tau_min).floor(), 3.0);
        let rel = (got - expected).abs() / expected.abs().max(1e-300);
        max_rel = max_rel.max(rel);
        ok12 &= rel < 1e-12;

        let p_mu = 2.0 * u01(&mut rng) - 1.0;
        let mass = u01(&mut rng);
        let p_top = u01(&mut rng);
        let p_mu_s = p_top * u01(&mut rng);
        let got = usc_defect_bound(p_mu, mass, p_top, p_mu_s).unwrap().value;
        let expected = mass.mul_add(p_top - p_mu_s, p_mu);
        let rel = (got - expected).abs() / expected.abs().max(1e-12);
        max_rel = max_rel.max(rel);
        ok12 &= rel < 1e-12;
    }
    let tail_zero = tail_entropy_bound(0.0, 12.0, 0.15, 2.4).unwrap().value;
    let usc_zero_mass = usc_defect_bound(0.37, 0.0, 0.9, 0.1).unwrap().value;
    ok12 &= tail_zero == 0.0 && usc_zero_mass == 0.37;
    gate.check(
        12,
        "bound evaluators vs direct arithmetic",
        ok12,
        format!(
            "100 random tuples each, max relative gap {max_rel:.2e}; s0=0 gives {tail_zero}, \
             zero singular mass gives {usc_zero_mass}"
        ),
    );

    // 13. CLI reports are byte-identical across worker-thread counts.
    let dir = std::env::temp_dir().join(format!("billiards-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let spec_path = dir.join("hex22.json");
    std::fs::write(&spec_path, "{\"family\": \"hexagonal\", \"d\": 2.2}\n").unwrap();
    let bin = env!("CARGO_BIN_EXE_billiards-cli");
    let mut outputs = Vec::new();
    let mut cli_ok = true;
    for (label, threads) in [("t1", 1), ("t1b", 1), ("t2", 2), ("t8", 8)] {
        let out_path = dir.join(format!("report-{label}.json"));
        let status = Command::new(bin)
            .args([
                "report",
                "--table",
                spec_path.to_str().unwrap(),
                "--n-max",
                "6",
                "--seed",
                "7",
                "--threads",
                &threads.to_string(),
                "--out",
                out_path.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        cli_ok &= status.success();
        outputs.push(std::fs::read(&out_path).unwrap());
    }
    let identical = outputs.windows(2).all(|w| w[0] == w[1]);
    gate.check(
        13,
        "cli determinism across threads",
        cli_ok && identical,
        format!(
            "report regenerated with threads 1/1/2/8: {} bytes each, byte-identical = {identical}",
            outputs[0].len()
        ),
    );

    std::fs::remove_dir_all(&dir).ok();

    assert!(
        gate.failures.is_empty(),
        "{} acceptance criteria failed:\n{}",
        gate.failures.len(),
        gate.failures.join("\n")
    );
}

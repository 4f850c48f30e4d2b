//! Acceptance battery: one PASS/FAIL line per criterion.

use std::hash::{DefaultHasher, Hasher};
use std::io::Write;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool_core::costshare::{goalprog_split, oracle_split, shapley_split, CustomerShare, Exact, RunAccount};
use ridepool_core::harness::{run_grid, GridOutput, ScenarioGrid};
use ridepool_core::io;
use ridepool_core::simengine::{counterfactual_sro, materialize, synthetic_trips, SplitScheme, TripSpec};
use ridepool_core::verify::{
    build_theorem4_fixtures_with, check_individual_rationality, check_pcp_detour, flagged_costs, theorem3_witness,
    theorem4_outcome, theorem4_samples,
};
use ridepool_core::{make_grid, run_sim, CustomerId, Mechanism, Money, Ppm, RoadNetwork, SimConfig, VehicleId};

// audit battery
const AUDIT_SEEDS: u64 = 100;
const AUDIT_REQUESTS: usize = 500;
const AUDIT_FLEET: usize = 30;
const AUDIT_RUNTIME: Duration = Duration::from_secs(60);

// cost-share oracle
const ORACLE_RUNS: u64 = 10_000;

// trend corpus
const TREND_SEEDS: u64 = 20;
const TREND_REQUESTS: usize = 500;
const TREND_FLEET: usize = 60;
const TREND_HORIZON: i64 = 3600;
const TREND_CORPUS_SEED: u64 = 7;
const TREND_RUNTIME: Duration = Duration::from_secs(600);

// theorem fixtures
const MIN_THEOREM4_SAMPLES: usize = 50;
const THEOREM3_MARGIN: f64 = 0.10;

struct Report {
    lines: Vec<(usize, bool, String)>,
}

impl Report {
    fn record(&mut self, n: usize, pass: bool, detail: String) {
        println!("criterion {n}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((n, pass, detail));
    }
}

fn audit_net() -> RoadNetwork {
    make_grid(10, 10, 0.2, 20.0).unwrap()
}

fn audit_mar(seed: u64) -> f64 {
    [0.25, 0.5, 0.75, 1.0][(seed % 4) as usize]
}

fn audit_config(mechanism: Mechanism, seed: u64) -> SimConfig {
    SimConfig {
        mechanism,
        fleet_size: AUDIT_FLEET,
        mar: audit_mar(seed),
        rng_seed: seed,
        ..SimConfig::default()
    }
}

fn criterion_1(report: &mut Report) {
    let net = audit_net();
    let start = Instant::now();
    let mut violations = 0;
    let mut poolable_served = 0;
    let mut pooled = 0;
    for seed in 1..=AUDIT_SEEDS {
        let cfg = audit_config(Mechanism::Ccp, seed);
        let reqs = materialize(&cfg, &synthetic_trips(&net, AUDIT_REQUESTS, cfg.horizon, seed)).unwrap();
        let res = run_sim(&cfg, &net, &reqs).unwrap();
        let v = check_individual_rationality("ccp", &res);
        violations += usize::from(!v.pass);
        poolable_served += res.per_customer.iter().filter(|c| c.poolable && c.served).count();
        pooled += res.pooled_customers;
    }
    let elapsed = start.elapsed();
    report.record(
        1,
        violations == 0 && pooled > 0 && elapsed < AUDIT_RUNTIME,
        format!(
            "{AUDIT_SEEDS} CCP runs, {poolable_served} served poolable customers ({pooled} pooled), \
             {violations} runs with violations, {:.1}s",
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_2(report: &mut Report) {
    let net = audit_net();
    let mut violations = 0;
    let mut pooled = 0;
    for detour in [0.1, 0.3, 0.5] {
        for seed in 1..=AUDIT_SEEDS {
            let mut cfg = audit_config(Mechanism::Pcp, seed);
            cfg.tariff.detour_factor = Ppm::from_f64(detour);
            let reqs = materialize(&cfg, &synthetic_trips(&net, AUDIT_REQUESTS, cfg.horizon, seed)).unwrap();
            let res = run_sim(&cfg, &net, &reqs).unwrap();
            let v = check_pcp_detour("pcp", &res, &reqs, &net, &cfg.tariff).unwrap();
            violations += usize::from(!v.pass);
            pooled += res.pooled_customers;
        }
    }
    report.record(
        2,
        violations == 0 && pooled > 0,
        format!("{} PCP runs over detour 0.1/0.3/0.5, {pooled} pooled customers, {violations} runs with violations", 3 * AUDIT_SEEDS),
    );
}

fn random_account(rng: &mut ChaCha8Rng, id: u64, n: u32) -> RunAccount {
    let customers: Vec<CustomerShare> = (0..n)
        .map(|i| {
            let cs = rng.random_range(3_000..40_000);
            CustomerShare {
                customer: CustomerId(i),
                solitary_cost: Money(cs),
                pooled_time_cost: Money(rng.random_range(0..cs / 2)),
            }
        })
        .collect();
    let room: i64 = customers.iter().map(|c| (c.solitary_cost - c.pooled_time_cost).0).sum();
    let surplus = rng.random_range(0..=room / 3);
    RunAccount {
        run_id: id,
        vehicle: VehicleId(0),
        customers,
        run_fare: Money(room - surplus),
        events: Vec::new(),
    }
}

fn criterion_3(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let thresholds: Vec<Ppm> = [0.05, 0.10, 0.15, 0.20].iter().map(|&x| Ppm::from_f64(x)).collect();
    let mut mismatches = 0;
    for i in 0..ORACLE_RUNS {
        let n = rng.random_range(2..=4);
        let acct = random_account(&mut rng, i, n);
        if goalprog_split(&acct, &thresholds).unwrap().counts != oracle_split(&acct, &thresholds).unwrap() {
            mismatches += 1;
        }
    }
    let mut unequal = 0;
    for i in 0..ORACLE_RUNS {
        let acct = random_account(&mut rng, i, 2);
        let half = Exact::new(acct.surplus().0 as i128, 2);
        let split = shapley_split(&acct).unwrap();
        for (c, s) in acct.customers.iter().zip(&split.per_customer) {
            let saving = Exact::from_integer((c.solitary_cost - c.pooled_time_cost).0 as i128) - s.fare;
            unequal += usize::from(saving != half);
        }
    }
    report.record(
        3,
        mismatches == 0 && unequal == 0,
        format!(
            "{ORACLE_RUNS} goal-programming runs: {mismatches} count mismatches; \
             {ORACLE_RUNS} two-rider Shapley runs: {unequal} savings different from v/2"
        ),
    );
}

fn criterion_4(report: &mut Report) {
    let net = audit_net();
    let mut differing = Vec::new();
    let mut fare_diffs = 0;
    for seed in 1..=20 {
        let mut cfg = audit_config(Mechanism::Ccp, seed);
        cfg.mar = 1.0;
        let reqs = materialize(&cfg, &synthetic_trips(&net, AUDIT_REQUESTS, cfg.horizon, seed)).unwrap();
        let a = run_sim(&cfg, &net, &reqs).unwrap();
        cfg.split = SplitScheme::default_goalprog();
        let b = run_sim(&cfg, &net, &reqs).unwrap();
        let same_ops = a.decisions == b.decisions
            && a.vehicles == b.vehicles
            && a.fleet_distance == b.fleet_distance
            && a.pool_events == b.pool_events
            && a.per_customer.iter().zip(&b.per_customer).all(|(x, y)| {
                (x.customer, x.served, x.pooled, x.pickup, x.dropoff) == (y.customer, y.served, y.pooled, y.pickup, y.dropoff)
            });
        // the run fares are the same; only their division may change
        let same_totals = a.fares_total == b.fares_total && a.profit == b.profit;
        if !(same_ops && same_totals) {
            differing.push(seed);
        }
        fare_diffs += a.per_customer.iter().zip(&b.per_customer).filter(|(x, y)| x.fare != y.fare).count();
    }
    report.record(
        4,
        differing.is_empty(),
        format!("20 paired seeds: operations differ in {differing:?}; {fare_diffs} per-customer fares differ"),
    );
}

fn criterion_5(report: &mut Report) {
    let samples = theorem4_samples();
    let mut failures = 0;
    let (mut missed, mut unprofitable) = (0, 0);
    for (p, et, ed) in &samples {
        let (o, a) = build_theorem4_fixtures_with(p, *et, *ed).unwrap();
        let out = theorem4_outcome(&o, &a).unwrap();
        failures += usize::from(!out.holds());
        for b in &out.branches {
            match b {
                ridepool_core::verify::Theorem4Branch::MissedProfitable => missed += 1,
                ridepool_core::verify::Theorem4Branch::CustomerUnprofitable => unprofitable += 1,
            }
        }
    }
    report.record(
        5,
        samples.len() >= MIN_THEOREM4_SAMPLES && failures == 0,
        format!(
            "{} samples, {failures} failures; branches: {missed} missed-profitable, {unprofitable} customer-unprofitable",
            samples.len()
        ),
    );
}

fn criterion_6(report: &mut Report) {
    let (above, threshold) = theorem3_witness(1.0 + THEOREM3_MARGIN).unwrap();
    let (below, _) = theorem3_witness(1.0 - THEOREM3_MARGIN).unwrap();
    let hi = flagged_costs(&above, Mechanism::Pcp).unwrap();
    let lo = flagged_costs(&below, Mechanism::Pcp).unwrap();
    let pooled_hi = above.run(Mechanism::Pcp).unwrap().pooled_customers == 2;
    let pass = pooled_hi && hi.poolable_cost > hi.solitary_cost && lo.poolable_cost <= lo.solitary_cost;
    report.record(
        6,
        pass,
        format!(
            "threshold {threshold:.6} $/s; +10%: pooled {} vs solitary {}; -10%: pooled {} vs solitary {}",
            hi.poolable_cost, hi.solitary_cost, lo.poolable_cost, lo.solitary_cost
        ),
    );
}

fn trend_grid() -> ScenarioGrid {
    ScenarioGrid {
        mechanisms: vec![Mechanism::Sro, Mechanism::Pcp, Mechanism::Ccp],
        max_waits: vec![240],
        mars: (0..=10).map(|i| i as f64 / 10.0).collect(),
        fleet_sizes: vec![TREND_FLEET],
        change_fees: [1.5, 2.0, 2.5, 3.0].iter().map(|&x| Money::from_dollars(x)).collect(),
        discount_factors: [0.7, 0.9].iter().map(|&x| Ppm::from_f64(x)).collect(),
        detour_factors: [0.1, 0.3, 0.5].iter().map(|&x| Ppm::from_f64(x)).collect(),
        seeds: (1..=TREND_SEEDS).collect(),
        horizon: TREND_HORIZON,
        ..ScenarioGrid::default()
    }
}

fn trend_trips(net: &RoadNetwork) -> Vec<TripSpec> {
    synthetic_trips(net, TREND_REQUESTS, TREND_HORIZON, TREND_CORPUS_SEED)
}

/// Mean of a metric over the summaries selected by `pick`, per MAR.
fn per_mar(out: &GridOutput, pick: impl Fn(&str, Mechanism) -> bool, metric: impl Fn(&ridepool_core::harness::MarRow) -> f64) -> Vec<f64> {
    let sel: Vec<_> = out.summaries.iter().filter(|s| pick(&s.label, s.mechanism)).collect();
    assert!(!sel.is_empty());
    (0..sel[0].rows.len())
        .map(|i| sel.iter().map(|s| metric(&s.rows[i])).sum::<f64>() / sel.len() as f64)
        .collect()
}

fn fmt_series(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

fn criterion_7(report: &mut Report, out: &GridOutput, elapsed: Duration) {
    let mars: Vec<f64> = out.summaries[0].rows.iter().map(|r| r.mar).collect();
    let unserved_pcp = per_mar(out, |_, m| m == Mechanism::Pcp, |r| r.unserved_pct);
    let unserved_ccp = per_mar(out, |_, m| m == Mechanism::Ccp, |r| r.unserved_pct);
    let saving_pcp = per_mar(out, |_, m| m == Mechanism::Pcp, |r| r.distance_saving_pct);
    let saving_ccp = per_mar(out, |_, m| m == Mechanism::Ccp, |r| r.distance_saving_pct);
    let profit_70 = per_mar(out, |l, m| m == Mechanism::Pcp && l.contains("delta=0.70"), |r| r.profit_delta_usd);
    let profit_90 = per_mar(out, |l, m| m == Mechanism::Pcp && l.contains("delta=0.90"), |r| r.profit_delta_usd);

    let non_increasing = |v: &[f64]| v.windows(2).all(|w| w[1] <= w[0]);
    let increasing = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
    let a = non_increasing(&unserved_pcp) && non_increasing(&unserved_ccp);
    let b = unserved_ccp.iter().zip(&unserved_pcp).all(|(c, p)| c <= p);
    let positive_from = |v: &[f64]| mars.iter().zip(v).filter(|(m, _)| **m >= 0.4 - 1e-9).all(|(_, s)| *s > 0.0);
    let c = increasing(&saving_pcp) && increasing(&saving_ccp) && positive_from(&saving_pcp) && positive_from(&saving_ccp);
    let from_half = |v: &[f64], below: bool| {
        mars.iter()
            .zip(v)
            .filter(|(m, _)| **m >= 0.5 - 1e-9)
            .all(|(_, p)| if below { *p < 0.0 } else { *p > 0.0 })
    };
    let d = from_half(&profit_70, true) && from_half(&profit_90, false);
    println!("  (a) unserved % PCP: {}", fmt_series(&unserved_pcp));
    println!("  (a) unserved % CCP: {}", fmt_series(&unserved_ccp));
    println!("  (c) distance saving % PCP: {}", fmt_series(&saving_pcp));
    println!("  (c) distance saving % CCP: {}", fmt_series(&saving_ccp));
    println!("  (d) profit vs SRO $ PCP delta=0.7: {}", fmt_series(&profit_70));
    println!("  (d) profit vs SRO $ PCP delta=0.9: {}", fmt_series(&profit_90));
    report.record(
        7,
        a && b && c && d && elapsed < TREND_RUNTIME,
        format!(
            "(a) {a} (b) {b} (c) {c} (d) {d}; {} cells x {TREND_SEEDS} seeds in {:.1}s",
            out.cells.len() as u64 / TREND_SEEDS,
            elapsed.as_secs_f64()
        ),
    );
}

fn criterion_8(report: &mut Report) {
    let net = audit_net();
    let mut mismatched = Vec::new();
    for seed in 1..=20 {
        for mech in [Mechanism::Pcp, Mechanism::Ccp] {
            let mut cfg = audit_config(mech, seed);
            cfg.mar = 0.0;
            let reqs = materialize(&cfg, &synthetic_trips(&net, AUDIT_REQUESTS, cfg.horizon, seed)).unwrap();
            let pooled = run_sim(&cfg, &net, &reqs).unwrap();
            let solo = counterfactual_sro(&cfg, &net, &reqs).unwrap();
            if pooled != solo {
                mismatched.push((mech, seed));
            }
        }
    }
    report.record(8, mismatched.is_empty(), format!("40 MAR-0 runs, mismatches: {mismatched:?}"));
}

/// Hash of every CSV the grid produces.
struct HashWriter {
    hasher: DefaultHasher,
    bytes: usize,
}

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.hasher.write(buf);
        self.bytes += buf.len();
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn digest(out: &GridOutput) -> (u64, usize) {
    let mut h = HashWriter {
        hasher: DefaultHasher::new(),
        bytes: 0,
    };
    let tagged = io::tag_cells(&out.cells);
    io::write_cells(&mut h, &out.cells).unwrap();
    io::write_summary(&mut h, &out.summaries).unwrap();
    io::write_decisions(&mut h, &tagged).unwrap();
    io::write_customers(&mut h, &tagged).unwrap();
    io::write_splits(&mut h, &tagged).unwrap();
    io::write_runs(&mut h, &tagged).unwrap();
    io::write_pool_events(&mut h, &tagged).unwrap();
    io::write_sim_run_accounts(&mut h, &tagged).unwrap();
    (h.hasher.finish(), h.bytes)
}

fn criterion_9(report: &mut Report, first: &GridOutput, net: &RoadNetwork, trips: &[TripSpec]) {
    let second = run_grid(&trend_grid(), trips, net).unwrap();
    let (h1, n1) = digest(first);
    let (h2, n2) = digest(&second);
    report.record(
        9,
        h1 == h2 && n1 == n2,
        format!("two executions of the trend grid: {n1} vs {n2} CSV bytes, digests {h1:016x} vs {h2:016x}"),
    );
}

#[test]
fn acceptance() {
    let mut report = Report { lines: Vec::new() };
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);
    criterion_5(&mut report);
    criterion_6(&mut report);

    let net = make_grid(10, 10, 0.2, 20.0).unwrap();
    let trips = trend_trips(&net);
    let start = Instant::now();
    let out = run_grid(&trend_grid(), &trips, &net).unwrap();
    criterion_7(&mut report, &out, start.elapsed());
    criterion_8(&mut report);
    criterion_9(&mut report, &out, &net, &trips);

    report.lines.sort_by_key(|l| l.0);
    let failed: Vec<usize> = report.lines.iter().filter(|l| !l.1).map(|l| l.0).collect();
    println!("acceptance: {} of {} criteria pass", report.lines.len() - failed.len(), report.lines.len());
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}

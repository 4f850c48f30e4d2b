//! Deterministic request-driven simulation of one mechanism on one fleet.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costshare::{
    goalprog_split, shapley_split, CostShareError, CustomerShare, RunAccount, SplitResult, SurplusEvent,
};
use crate::domain::{extract_runs, CustomerId, DomainError, Request, Run, VehicleId, VehicleState};
use crate::mechanisms::{assign, Book, CustomerBook, Decision, DecisionKind, Mechanism, PoolEvent};
use crate::netgraph::{LocationId, NetError, RoadNetwork};
use crate::pricing::{provider_profit, Tariff};
use crate::units::{fmt4, Distance, Money, Ppm, Seconds, ValueOfTime};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    CostShare(#[from] CostShareError),
}

/// Value-of-time categories in dollars per minute.
pub const DEFAULT_VOT_SET: [f64; 5] = [0.166, 0.195, 0.225, 0.254, 0.283];

// independent random streams of one seed
const STREAM_FLEET: u64 = 1;
const STREAM_POOLABLE: u64 = 2;
const STREAM_VOT: u64 = 3;
const STREAM_TRIPS: u64 = 4;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitScheme {
    Shapley,
    Goalprog { thresholds: Vec<Ppm> },
}

impl SplitScheme {
    pub fn default_goalprog() -> Self {
        SplitScheme::Goalprog {
            thresholds: [0.05, 0.10, 0.15, 0.20].iter().map(|&x| Ppm::from_f64(x)).collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            SplitScheme::Shapley => "shapley",
            SplitScheme::Goalprog { .. } => "goalprog",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub mechanism: Mechanism,
    pub tariff: Tariff,
    pub fleet_size: usize,
    /// Applies to every request when set; otherwise each trip carries its own.
    pub max_wait_override: Option<Seconds>,
    /// Share of customers who set themselves poolable.
    pub mar: f64,
    pub rng_seed: u64,
    pub horizon: Seconds,
    pub value_of_time_set: Vec<ValueOfTime>,
    pub split: SplitScheme,
    /// Fixed start nodes, one per vehicle; random placement otherwise.
    pub initial_positions: Option<Vec<LocationId>>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mechanism: Mechanism::Sro,
            tariff: Tariff::default(),
            fleet_size: 1,
            max_wait_override: Some(240),
            mar: 0.0,
            rng_seed: 0,
            horizon: 1800,
            value_of_time_set: DEFAULT_VOT_SET.iter().map(|&v| ValueOfTime::from_usd_per_min(v)).collect(),
            split: SplitScheme::Shapley,
            initial_positions: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigError(m));
        if self.fleet_size == 0 {
            return bad("fleet size must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.mar) {
            return bad(format!("MAR {} outside [0, 1]", self.mar));
        }
        if self.value_of_time_set.is_empty() {
            return bad("value-of-time set is empty".into());
        }
        if let Some(w) = self.max_wait_override {
            if w <= 0 {
                return bad("max wait must be positive".into());
            }
        }
        if let Some(p) = &self.initial_positions {
            if p.len() != self.fleet_size {
                return bad(format!("{} initial positions for {} vehicles", p.len(), self.fleet_size));
            }
        }
        self.tariff
            .validate()
            .map_err(|e| SimError::ConfigError(e.to_string()))
    }
}

/// A trip as read from a file; missing fields are drawn from the seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripSpec {
    pub request_time: Seconds,
    pub origin: LocationId,
    pub destination: LocationId,
    pub value_of_time: Option<ValueOfTime>,
    pub max_wait: Option<Seconds>,
    pub poolable: Option<bool>,
}

/// Turn trips into requests: customer ids follow file order, value of time and
/// poolability come from their own random streams when not given. Every trip
/// consumes one draw of each stream, so MAR changes never shift value-of-time
/// draws and the poolable set at a lower MAR is a subset of that at a higher one.
pub fn materialize(cfg: &SimConfig, trips: &[TripSpec]) -> Result<Vec<Request>, SimError> {
    cfg.validate()?;
    let mut vot_rng = stream(cfg.rng_seed, STREAM_VOT);
    let mut pool_rng = stream(cfg.rng_seed, STREAM_POOLABLE);
    trips
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let vot_draw = cfg.value_of_time_set[vot_rng.random_range(0..cfg.value_of_time_set.len())];
            let u: f64 = pool_rng.random();
            let max_wait = cfg.max_wait_override.or(t.max_wait).ok_or_else(|| {
                SimError::ConfigError(format!("trip {i} has no max wait and no override is set"))
            })?;
            let r = Request {
                id: CustomerId(i as u32),
                origin: t.origin,
                destination: t.destination,
                request_time: t.request_time,
                value_of_time: t.value_of_time.unwrap_or(vot_draw),
                max_wait,
                poolable: t.poolable.unwrap_or(u < cfg.mar),
            };
            r.validate()?;
            Ok(r)
        })
        .collect()
}

/// Uniform origins and destinations over the nodes, request times uniform over
/// `[0, horizon]`, sorted by time.
pub fn synthetic_trips(net: &RoadNetwork, count: usize, horizon: Seconds, seed: u64) -> Vec<TripSpec> {
    let mut rng = stream(seed, STREAM_TRIPS);
    let nodes = net.nodes();
    let mut trips: Vec<TripSpec> = (0..count)
        .map(|_| {
            let t = rng.random_range(0..=horizon.max(0));
            let o = nodes[rng.random_range(0..nodes.len())];
            let mut d = o;
            while d == o {
                d = nodes[rng.random_range(0..nodes.len())];
            }
            TripSpec {
                request_time: t,
                origin: o,
                destination: d,
                value_of_time: None,
                max_wait: None,
                poolable: None,
            }
        })
        .collect();
    trips.sort_by_key(|t| t.request_time);
    trips
}

pub fn initial_fleet(cfg: &SimConfig, net: &RoadNetwork) -> Vec<VehicleState> {
    let positions: Vec<LocationId> = match &cfg.initial_positions {
        Some(p) => p.clone(),
        None => {
            let mut rng = stream(cfg.rng_seed, STREAM_FLEET);
            let nodes = net.nodes();
            (0..cfg.fleet_size)
                .map(|_| nodes[rng.random_range(0..nodes.len())])
                .collect()
        }
    };
    positions
        .into_iter()
        .enumerate()
        .map(|(i, n)| VehicleState::new(VehicleId(i as u32), n))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CustomerOutcome {
    pub customer: CustomerId,
    pub request_time: Seconds,
    pub poolable: bool,
    pub served: bool,
    pub pooled: bool,
    pub vehicle: Option<VehicleId>,
    pub fare: Money,
    pub pickup: Option<Seconds>,
    pub dropoff: Option<Seconds>,
    pub total_cost: Money,
    pub baseline_solitary_cost: Money,
    pub baseline_dropoff: Seconds,
}

/// One customer's line of an ex-post split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub run_id: u64,
    pub customer: CustomerId,
    pub solitary_cost: Money,
    pub pooled_time_cost: Money,
    pub fare: Money,
    pub relative_saving: f64,
}

/// Rows of a split, fares rounded to whole mills.
pub fn split_rows(acct: &RunAccount, split: &SplitResult) -> Vec<SplitRow> {
    split
        .rounded_fares()
        .into_iter()
        .zip(acct.customers.iter().zip(&split.per_customer))
        .map(|((customer, fare), (cs, detail))| SplitRow {
            run_id: acct.run_id,
            customer,
            solitary_cost: cs.solitary_cost,
            pooled_time_cost: cs.pooled_time_cost,
            fare,
            relative_saving: detail.relative_saving_f64(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub served: usize,
    pub unserved: usize,
    pub pooled_customers: usize,
    pub poolable_customers: usize,
    pub fleet_distance: Distance,
    pub fares_total: Money,
    pub profit: Money,
    pub per_customer: Vec<CustomerOutcome>,
    pub runs: Vec<Run>,
    pub decisions: Vec<Decision>,
    pub pool_events: Vec<PoolEvent>,
    /// Pooled runs as handed to the ex-post split.
    pub run_accounts: Vec<RunAccount>,
    pub splits: Vec<SplitRow>,
    pub vehicles: Vec<VehicleState>,
}

fn check_inputs(net: &RoadNetwork, fleet: &[VehicleState], requests: &[Request]) -> Result<(), SimError> {
    if requests.windows(2).any(|w| w[0].request_time > w[1].request_time) {
        return Err(SimError::ConfigError("requests are not sorted by request time".into()));
    }
    let mut ids = BTreeSet::new();
    let mut used: BTreeSet<LocationId> = fleet.iter().map(|v| v.start_node).collect();
    for r in requests {
        r.validate()?;
        if !ids.insert(r.id) {
            return Err(SimError::ConfigError(format!("duplicate customer id {}", r.id)));
        }
        for n in [r.origin, r.destination] {
            if !net.contains(n) {
                return Err(SimError::ConfigError(format!(
                    "request {} references node {n} outside the network",
                    r.id
                )));
            }
            used.insert(n);
        }
    }
    for v in fleet {
        if !net.contains(v.start_node) {
            return Err(SimError::ConfigError(format!(
                "vehicle {} starts at node {} outside the network",
                v.id, v.start_node
            )));
        }
    }
    let used: Vec<LocationId> = used.into_iter().collect();
    net.check_strongly_connected(&used)
        .map_err(|e| SimError::ConfigError(format!("network is not strongly connected over used nodes: {e}")))
}

/// Simulate `requests` (sorted by time) under `cfg.mechanism`.
pub fn run_sim(cfg: &SimConfig, net: &RoadNetwork, requests: &[Request]) -> Result<SimResult, SimError> {
    cfg.validate()?;
    let mut fleet = initial_fleet(cfg, net);
    check_inputs(net, &fleet, requests)?;
    let mut book: Book = BTreeMap::new();
    let mut decisions = Vec::new();
    let mut events: Vec<PoolEvent> = Vec::new();
    let mut considered = Vec::new();

    for r in requests.iter().filter(|r| r.request_time <= cfg.horizon) {
        considered.push(*r);
        let d = assign(cfg.mechanism, net, &cfg.tariff, &book, &fleet, r)?;
        if let Some(c) = &d.chosen {
            let v = &mut fleet[c.vehicle.0 as usize];
            *v = v.apply_assignment(net, r.id, &c.plan, r.request_time)?;
        }
        for cc in &d.commitments {
            match book.get_mut(&cc.customer) {
                Some(b) => b.committed = *cc,
                None => {
                    book.insert(
                        cc.customer,
                        CustomerBook {
                            request: *r,
                            baseline: d.baseline,
                            committed: *cc,
                        },
                    );
                }
            }
        }
        events.extend(d.event);
        decisions.push(d.record);
    }

    let provisional: BTreeMap<CustomerId, Money> =
        book.iter().map(|(&c, b)| (c, b.committed.current_fare)).collect();
    let mut times: BTreeMap<CustomerId, (VehicleId, Seconds, Seconds)> = BTreeMap::new();
    let mut runs = Vec::new();
    for v in &fleet {
        for (c, (pu, dr)) in v.service_times() {
            times.insert(c, (v.id, pu, dr));
        }
        runs.extend(extract_runs(v, &provisional));
    }

    let pooled_set: BTreeSet<CustomerId> = events.iter().flat_map(|e| [e.partner, e.newcomer]).collect();
    let mut final_fares = provisional.clone();
    let mut run_accounts = Vec::new();
    let mut splits = Vec::new();
    if cfg.mechanism == Mechanism::Ccp {
        for (run_id, run) in runs.iter().enumerate() {
            if run.customers.len() < 2 {
                continue;
            }
            let members: BTreeSet<CustomerId> = run.customers.iter().copied().collect();
            let acct = RunAccount {
                run_id: run_id as u64,
                vehicle: run.vehicle,
                customers: run
                    .customers
                    .iter()
                    .map(|c| {
                        let b = &book[c];
                        CustomerShare {
                            customer: *c,
                            solitary_cost: b.baseline.cost,
                            pooled_time_cost: b.request.time_cost(times[c].2),
                        }
                    })
                    .collect(),
                run_fare: run.total_fare,
                events: events
                    .iter()
                    .filter(|e| members.contains(&e.partner) && members.contains(&e.newcomer))
                    .map(|e| SurplusEvent {
                        first: e.partner,
                        second: e.newcomer,
                        surplus: e.surplus,
                    })
                    .collect(),
            };
            let split = match &cfg.split {
                SplitScheme::Shapley => shapley_split(&acct)?,
                SplitScheme::Goalprog { thresholds } => goalprog_split(&acct, thresholds)?,
            };
            for row in split_rows(&acct, &split) {
                final_fares.insert(row.customer, row.fare);
                splits.push(row);
            }
            run_accounts.push(acct);
        }
    }

    let mut per_customer = Vec::with_capacity(considered.len());
    for (r, d) in considered.iter().zip(&decisions) {
        let served = d.kind != DecisionKind::Unserved;
        let t = times.get(&r.id);
        let fare = if served { final_fares[&r.id] } else { Money::ZERO };
        let dropoff = t.map(|x| x.2);
        per_customer.push(CustomerOutcome {
            customer: r.id,
            request_time: r.request_time,
            poolable: r.poolable,
            served,
            pooled: pooled_set.contains(&r.id),
            vehicle: t.map(|x| x.0),
            fare,
            pickup: t.map(|x| x.1),
            dropoff,
            total_cost: match dropoff {
                Some(dr) => fare + r.time_cost(dr),
                None => Money::ZERO,
            },
            baseline_solitary_cost: d.baseline_cost,
            baseline_dropoff: book.get(&r.id).map(|b| b.baseline.dropoff).unwrap_or(0),
        });
    }

    let fleet_distance: Distance = fleet
        .iter()
        .map(|v| v.distance(net))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    let fares_total: Money = per_customer.iter().map(|c| c.fare).sum();
    let served = per_customer.iter().filter(|c| c.served).count();
    Ok(SimResult {
        served,
        unserved: per_customer.len() - served,
        pooled_customers: pooled_set.len(),
        poolable_customers: per_customer.iter().filter(|c| c.poolable).count(),
        fleet_distance,
        fares_total,
        profit: provider_profit(fares_total, fleet_distance, &cfg.tariff),
        per_customer,
        runs: runs_with_fares(runs, &final_fares),
        decisions,
        pool_events: events,
        run_accounts,
        splits,
        vehicles: fleet,
    })
}

fn runs_with_fares(mut runs: Vec<Run>, fares: &BTreeMap<CustomerId, Money>) -> Vec<Run> {
    for r in &mut runs {
        r.total_fare = r.customers.iter().map(|c| fares.get(c).copied().unwrap_or(Money::ZERO)).sum();
    }
    runs
}

/// The same scenario with pooling switched off.
pub fn counterfactual_sro(cfg: &SimConfig, net: &RoadNetwork, requests: &[Request]) -> Result<SimResult, SimError> {
    let sro = SimConfig {
        mechanism: Mechanism::Sro,
        ..cfg.clone()
    };
    run_sim(&sro, net, requests)
}

impl SimResult {
    /// Dropoffs recomputed from the final schedules agree with the customer records.
    pub fn replay_consistent(&self, net: &RoadNetwork) -> Result<bool, NetError> {
        let mut replayed = BTreeMap::new();
        for v in &self.vehicles {
            let fresh = VehicleState::from_schedule(net, v.id, v.start_node, v.schedule.clone())
                .map_err(|e| match e {
                    DomainError::Net(n) => n,
                    other => NetError::InvalidParameter(other.to_string()),
                })?;
            replayed.extend(fresh.service_times().into_iter().map(|(c, t)| (c, t.1)));
        }
        Ok(self.per_customer.iter().all(|c| c.dropoff == replayed.get(&c.customer).copied()))
    }

    pub fn unserved_pct(&self) -> f64 {
        let n = self.served + self.unserved;
        if n == 0 {
            0.0
        } else {
            100.0 * self.unserved as f64 / n as f64
        }
    }

    /// Summary line used in logs.
    pub fn describe(&self) -> String {
        format!(
            "served {} unserved {} pooled {}/{} distance {} mi fares {} profit {}",
            self.served,
            self.unserved,
            self.pooled_customers,
            self.poolable_customers,
            fmt4(self.fleet_distance.miles()),
            self.fares_total.to_csv(),
            self.profit.to_csv()
        )
    }
}

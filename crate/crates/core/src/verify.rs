//! Executable checks of the mechanisms' properties on results and on small
//! purpose-built instances.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CustomerId, Request};
use crate::mechanisms::Mechanism;
use crate::netgraph::{Arc, LocationId, NetError, RoadNetwork};
use crate::pricing::Tariff;
use crate::simengine::{run_sim, CustomerOutcome, SimConfig, SimError, SimResult, SplitScheme};
use crate::units::{Distance, Money, Ppm, Seconds, ValueOfTime, PPM};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("invalid perturbation: {0}")]
    InvalidEpsilon(String),
    #[error("domain error: {0}")]
    DomainError(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub fixture: String,
    pub check: String,
    pub pass: bool,
    pub detail: String,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mark = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "[{mark}] {} / {}: {}", self.fixture, self.check, self.detail)
    }
}

fn verdict(fixture: &str, check: &str, pass: bool, detail: String) -> Verdict {
    Verdict {
        fixture: fixture.into(),
        check: check.into(),
        pass,
        detail,
    }
}

/// Every served poolable customer pays at most the solitary baseline, and every
/// served non-poolable customer pays exactly that.
pub fn check_individual_rationality(fixture: &str, result: &SimResult) -> Verdict {
    let offenders: Vec<&CustomerOutcome> = result
        .per_customer
        .iter()
        .filter(|c| c.served)
        .filter(|c| {
            if c.poolable {
                c.total_cost > c.baseline_solitary_cost
            } else {
                c.total_cost != c.baseline_solitary_cost
            }
        })
        .collect();
    let detail = match offenders.first() {
        None => format!("{} served customers within their solitary baseline", result.served),
        Some(c) => format!(
            "{} violations; first: customer {} pays {} against baseline {}",
            offenders.len(),
            c.customer,
            c.total_cost.to_csv(),
            c.baseline_solitary_cost.to_csv()
        ),
    };
    verdict(fixture, "individual_rationality", offenders.is_empty(), detail)
}

/// Every pooled customer's ride lasts at most (1+Δ) times the direct ride.
pub fn check_pcp_detour(
    fixture: &str,
    result: &SimResult,
    requests: &[Request],
    net: &RoadNetwork,
    tariff: &Tariff,
) -> Result<Verdict, NetError> {
    let mut bad = Vec::new();
    for c in result.per_customer.iter().filter(|c| c.pooled) {
        let r = requests.iter().find(|r| r.id == c.customer).expect("request of outcome");
        let (Some(pu), Some(dr)) = (c.pickup, c.dropoff) else { continue };
        let direct = net.travel_time(r.origin, r.destination)?;
        if ((dr - pu) as i128) * PPM as i128 > ((PPM + tariff.detour_factor.0) as i128) * direct as i128 {
            bad.push(c.customer);
        }
    }
    let detail = match bad.first() {
        None => format!("{} pooled customers within the ride bound", result.pooled_customers),
        Some(c) => format!("{} violations; first customer {c}", bad.len()),
    };
    Ok(verdict(fixture, "pcp_detour_bound", bad.is_empty(), detail))
}

/// Value of time above which worst-case provider-centered pooling costs more
/// than riding alone, in dollars per second.
pub fn theorem3_threshold(
    delta: f64,
    p_solitary: Money,
    detour: f64,
    solitary_duration: Seconds,
) -> Result<f64, VerifyError> {
    if detour.is_nan() || detour <= 0.0 {
        return Err(VerifyError::DomainError(format!("detour factor must be positive, got {detour}")));
    }
    if solitary_duration <= 0 {
        return Err(VerifyError::DomainError(format!(
            "solitary duration must be positive, got {solitary_duration}"
        )));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(VerifyError::DomainError(format!("discount factor must lie in (0, 1], got {delta}")));
    }
    Ok((1.0 - delta) * p_solitary.dollars() / (detour * solitary_duration as f64))
}

/// A miniature instance with fixed vehicle placement.
#[derive(Clone, Debug)]
pub struct TheoremFixture {
    pub name: String,
    pub network: RoadNetwork,
    pub vehicles: Vec<LocationId>,
    pub requests: Vec<Request>,
    pub tariff: Tariff,
}

impl TheoremFixture {
    pub fn run(&self, mechanism: Mechanism) -> Result<SimResult, SimError> {
        self.run_with(mechanism, &self.requests)
    }

    pub fn run_with(&self, mechanism: Mechanism, requests: &[Request]) -> Result<SimResult, SimError> {
        let cfg = SimConfig {
            mechanism,
            tariff: self.tariff,
            fleet_size: self.vehicles.len(),
            max_wait_override: None,
            mar: 1.0,
            rng_seed: 0,
            horizon: Seconds::MAX,
            split: SplitScheme::Shapley,
            initial_positions: Some(self.vehicles.clone()),
            ..SimConfig::default()
        };
        run_sim(&cfg, &self.network, requests)
    }

    /// The last request, whose flag the dominance checks flip.
    pub fn flagged(&self) -> CustomerId {
        self.requests.last().expect("fixture has requests").id
    }
}

/// Geometry of the two-customer shared-destination instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Theorem4Params {
    pub detour: Ppm,
    /// Travel time from either origin to the destination.
    pub base_time: Seconds,
    pub base_distance: Distance,
    /// Distance between the two origins, shorter than `base_distance`.
    pub origin_gap: Distance,
    pub max_wait: Seconds,
    pub value_of_time: ValueOfTime,
    pub tariff: Tariff,
}

impl Default for Theorem4Params {
    fn default() -> Self {
        Theorem4Params {
            detour: Ppm::from_f64(0.3),
            base_time: 600,
            base_distance: Distance::from_miles(2.0),
            origin_gap: Distance::from_miles(1.0),
            max_wait: 360,
            value_of_time: ValueOfTime::from_usd_per_min(0.2),
            tariff: Tariff::default(),
        }
    }
}

const NODE_I: LocationId = LocationId(0);
const NODE_J: LocationId = LocationId(1);
const NODE_D: LocationId = LocationId(2);

fn two_way(a: LocationId, b: LocationId, length: Distance, time: Seconds) -> [Arc; 2] {
    [
        Arc { from: a, to: b, length, travel_time: time },
        Arc { from: b, to: a, length, travel_time: time },
    ]
}

fn shared_destination_fixture(
    name: &str,
    p: &Theorem4Params,
    gap_time: Seconds,
    (t_i, d_i): (Seconds, Distance),
    (t_j, d_j): (Seconds, Distance),
) -> Result<TheoremFixture, NetError> {
    let nodes = vec![(NODE_I, 0.0, 0.0), (NODE_J, 1.0, 0.0), (NODE_D, 0.5, 2.0)];
    let mut arcs = Vec::new();
    arcs.extend(two_way(NODE_I, NODE_J, p.origin_gap, gap_time));
    arcs.extend(two_way(NODE_I, NODE_D, d_i, t_i));
    arcs.extend(two_way(NODE_J, NODE_D, d_j, t_j));
    let network = RoadNetwork::new(nodes, arcs)?;
    let req = |id: u32, origin: LocationId| Request {
        id: CustomerId(id),
        origin,
        destination: NODE_D,
        request_time: 0,
        value_of_time: p.value_of_time,
        max_wait: p.max_wait,
        poolable: true,
    };
    let mut tariff = p.tariff;
    tariff.detour_factor = p.detour;
    Ok(TheoremFixture {
        name: name.into(),
        network,
        vehicles: vec![NODE_I, NODE_J],
        requests: vec![req(0, NODE_I), req(1, NODE_J)],
        tariff,
    })
}

/// The original instance, where provider-centered pooling just meets the
/// arrival bound, and the perturbed one, where it no longer does.
pub fn build_theorem4_fixtures(
    detour: f64,
    epsilon_t: Seconds,
    epsilon_d: f64,
) -> Result<(TheoremFixture, TheoremFixture), VerifyError> {
    let p = Theorem4Params {
        detour: Ppm::from_f64(detour),
        ..Theorem4Params::default()
    };
    build_theorem4_fixtures_with(&p, epsilon_t, Distance::from_miles(epsilon_d))
}

pub fn build_theorem4_fixtures_with(
    p: &Theorem4Params,
    epsilon_t: Seconds,
    epsilon_d: Distance,
) -> Result<(TheoremFixture, TheoremFixture), VerifyError> {
    let scaled = p.detour.0 as i128 * p.base_time as i128;
    if p.detour.0 <= 0 || scaled % PPM as i128 != 0 {
        return Err(VerifyError::DomainError(format!(
            "detour {} times {} s is not a whole number of seconds",
            p.detour.as_f64(),
            p.base_time
        )));
    }
    let gap_time = (scaled / PPM as i128) as Seconds;
    if p.origin_gap >= p.base_distance {
        return Err(VerifyError::DomainError("origins must be closer than the destination".into()));
    }
    if gap_time > p.max_wait {
        return Err(VerifyError::DomainError("max wait must allow the detour to the second origin".into()));
    }
    if epsilon_t <= 0 || epsilon_d.0 <= 0 {
        return Err(VerifyError::InvalidEpsilon("perturbations must be strictly positive".into()));
    }
    if 2 * epsilon_t >= gap_time {
        return Err(VerifyError::InvalidEpsilon(format!(
            "2 x {epsilon_t} s must stay below the origin gap time {gap_time} s"
        )));
    }
    if Distance(2 * epsilon_d.0) >= p.origin_gap {
        return Err(VerifyError::InvalidEpsilon(
            "twice the distance perturbation must stay below the origin gap".into(),
        ));
    }
    let t = p.base_time;
    let l = p.base_distance;
    let original = shared_destination_fixture("theorem4_original", p, gap_time, (t, l), (t, l))?;
    let altered = shared_destination_fixture(
        "theorem4_altered",
        p,
        gap_time,
        (t + epsilon_t, l + epsilon_d),
        (t - epsilon_t, l - epsilon_d),
    )?;
    Ok((original, altered))
}

/// Which side of the case split an instance pair exhibits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem4Branch {
    /// Customer-centered pooling pools the perturbed pair with less driving,
    /// which provider-centered pooling forbids.
    MissedProfitable,
    /// Pooling helps neither pair of customers, yet provider-centered pooling
    /// pools the original pair.
    CustomerUnprofitable,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Theorem4Outcome {
    pub pcp_pools_original: bool,
    pub pcp_pools_altered: bool,
    pub ccp_pools_original: bool,
    pub ccp_pools_altered: bool,
    pub altered_pooled_distance_saving: bool,
    pub branches: Vec<Theorem4Branch>,
}

impl Theorem4Outcome {
    pub fn holds(&self) -> bool {
        self.pcp_pools_original && !self.pcp_pools_altered && self.branches.len() == 1
    }
}

pub fn theorem4_outcome(original: &TheoremFixture, altered: &TheoremFixture) -> Result<Theorem4Outcome, SimError> {
    let pools = |r: &SimResult| r.pooled_customers == 2;
    let pcp_o = original.run(Mechanism::Pcp)?;
    let pcp_a = altered.run(Mechanism::Pcp)?;
    let ccp_o = original.run(Mechanism::Ccp)?;
    let ccp_a = altered.run(Mechanism::Ccp)?;
    let sro_a = altered.run(Mechanism::Sro)?;
    let saving = ccp_a.fleet_distance < sro_a.fleet_distance;
    let mut branches = Vec::new();
    if pools(&ccp_a) && !pools(&pcp_a) && saving {
        branches.push(Theorem4Branch::MissedProfitable);
    }
    if !pools(&ccp_a) && !pools(&ccp_o) && pools(&pcp_o) {
        branches.push(Theorem4Branch::CustomerUnprofitable);
    }
    Ok(Theorem4Outcome {
        pcp_pools_original: pools(&pcp_o),
        pcp_pools_altered: pools(&pcp_a),
        ccp_pools_original: pools(&ccp_o),
        ccp_pools_altered: pools(&ccp_a),
        altered_pooled_distance_saving: saving,
        branches,
    })
}

/// Total cost of the flagged customer when poolable and when not.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DominancePair {
    pub poolable_cost: Money,
    pub solitary_cost: Money,
}

pub fn flagged_costs(fx: &TheoremFixture, mechanism: Mechanism) -> Result<DominancePair, SimError> {
    let who = fx.flagged();
    let cost = |flag: bool| -> Result<Money, SimError> {
        let mut reqs = fx.requests.clone();
        reqs.last_mut().expect("non-empty").poolable = flag;
        let res = fx.run_with(mechanism, &reqs)?;
        let c = res
            .per_customer
            .iter()
            .find(|c| c.customer == who)
            .expect("flagged customer present");
        Ok(c.total_cost)
    };
    Ok(DominancePair {
        poolable_cost: cost(true)?,
        solitary_cost: cost(false)?,
    })
}

/// The flagged customer is never worse off for being poolable.
pub fn check_weak_dominance_fixture(fx: &TheoremFixture, mechanism: Mechanism) -> Result<Verdict, SimError> {
    let p = flagged_costs(fx, mechanism)?;
    Ok(verdict(
        &fx.name,
        &format!("weak_dominance_{}", mechanism.to_string().to_lowercase()),
        p.poolable_cost <= p.solitary_cost,
        format!(
            "poolable {} vs not poolable {}",
            p.poolable_cost.to_csv(),
            p.solitary_cost.to_csv()
        ),
    ))
}

/// The original shared-destination instance with the newcomer's value of time
/// set to `factor` times the threshold. Under provider-centered pooling the
/// newcomer's arrival is delayed by exactly the detour factor.
pub fn theorem3_witness(factor: f64) -> Result<(TheoremFixture, f64), VerifyError> {
    let p = Theorem4Params::default();
    let (mut fx, _) = build_theorem4_fixtures_with(&p, 1, Distance(1))?;
    let j = fx.requests[1];
    let p_s = p.tariff.distance_fare(fx.network.distance(j.origin, j.destination)?);
    let duration = fx.network.travel_time(j.origin, j.destination)?;
    let threshold = theorem3_threshold(p.tariff.discount_factor.as_f64(), p_s, p.detour.as_f64(), duration)?;
    let vot = ValueOfTime::from_usd_per_min(threshold * factor * 60.0);
    fx.requests[1].value_of_time = vot;
    fx.name = format!("theorem3_witness_x{factor}");
    Ok((fx, threshold))
}

/// A single customer with an idle vehicle at her origin and nobody to pool with.
pub fn lone_customer_fixture() -> Result<TheoremFixture, NetError> {
    let p = Theorem4Params::default();
    let mut fx = shared_destination_fixture("lone_customer", &p, 180, (600, p.base_distance), (600, p.base_distance))?;
    fx.requests = vec![Request {
        id: CustomerId(0),
        ..fx.requests[1]
    }];
    fx.vehicles = vec![NODE_J];
    Ok(fx)
}

/// Deterministic sample of perturbations for the case-split check.
pub fn theorem4_samples() -> Vec<(Theorem4Params, Seconds, Distance)> {
    let mut out = Vec::new();
    let detours = [0.1, 0.2, 0.3, 0.4, 0.5];
    let vots = [0.2, 0.6, 1.2, 2.5, 5.0];
    for (a, &d) in detours.iter().enumerate() {
        for (b, &v) in vots.iter().enumerate() {
            for k in 0..2 {
                let p = Theorem4Params {
                    detour: Ppm::from_f64(d),
                    value_of_time: ValueOfTime::from_usd_per_min(v),
                    ..Theorem4Params::default()
                };
                let gap_time = (d * p.base_time as f64).round() as Seconds;
                let eps_t = 1 + ((a * 7 + b * 3 + k * 11) as Seconds % (gap_time / 2 - 1).max(1));
                let eps_d = Distance::from_miles(0.01 + 0.04 * ((a + b + k) % 10) as f64);
                out.push((p, eps_t, eps_d));
            }
        }
    }
    out
}

/// All fixture verdicts.
pub fn run_fixture_suite() -> Result<Vec<Verdict>, VerifyError> {
    let mut out = Vec::new();

    for (p, eps_t, eps_d) in theorem4_samples() {
        let (o, a) = build_theorem4_fixtures_with(&p, eps_t, eps_d)?;
        let res = theorem4_outcome(&o, &a)?;
        out.push(verdict(
            &format!(
                "theorem4_detour{}_vot{}_et{}_ed{}",
                p.detour.as_f64(),
                p.value_of_time.usd_per_min(),
                eps_t,
                eps_d.miles()
            ),
            "case_split",
            res.holds(),
            format!("{:?}", res.branches),
        ));
    }

    for (factor, expect_worse) in [(1.1, true), (0.9, false)] {
        let (fx, threshold) = theorem3_witness(factor)?;
        let p = flagged_costs(&fx, Mechanism::Pcp)?;
        let worse = p.poolable_cost > p.solitary_cost;
        out.push(verdict(
            &fx.name,
            "pcp_pooling_cost_above_solitary",
            worse == expect_worse,
            format!(
                "threshold {:.6} $/s; poolable {} vs not poolable {}",
                threshold,
                p.poolable_cost.to_csv(),
                p.solitary_cost.to_csv()
            ),
        ));
    }

    let (fx, _) = build_theorem4_fixtures(0.3, 10, 0.05)?;
    out.push(check_weak_dominance_fixture(&fx, Mechanism::Ccp)?);
    let p = flagged_costs(&fx, Mechanism::Ccp)?;
    out.push(verdict(
        &fx.name,
        "ccp_pooling_strictly_cheaper",
        p.poolable_cost < p.solitary_cost,
        format!("poolable {} vs not poolable {}", p.poolable_cost.to_csv(), p.solitary_cost.to_csv()),
    ));
    let lone = lone_customer_fixture()?;
    let p = flagged_costs(&lone, Mechanism::Ccp)?;
    out.push(verdict(
        &lone.name,
        "no_partner_costs_equal",
        p.poolable_cost == p.solitary_cost,
        format!("poolable {} vs not poolable {}", p.poolable_cost.to_csv(), p.solitary_cost.to_csv()),
    ));

    let (fx, _) = theorem3_witness(1.1)?;
    let ccp = fx.run(Mechanism::Ccp)?;
    out.push(check_individual_rationality(&fx.name, &ccp));
    Ok(out)
}

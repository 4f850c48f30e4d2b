//! Online assignment: candidate generation, feasibility and the three selection rules.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::{
    route_distance, time_stops, CustomerId, InsertionPlan, Op, PlannedStop, Request, VehicleId,
    VehicleState, VehicleView,
};
use crate::netgraph::{LocationId, NetError, RoadNetwork};
use crate::pricing::{ccp_pooled_fare, pcp_fare, solitary_fare, PoolCase, PoolGeometry, PricingError, Tariff};
use crate::units::{Distance, Money, Seconds, PPM};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mechanism {
    #[serde(alias = "sro")]
    Sro,
    #[serde(alias = "pcp")]
    Pcp,
    #[serde(alias = "ccp")]
    Ccp,
}

impl Mechanism {
    pub fn pools(self) -> bool {
        self != Mechanism::Sro
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Sro => "SRO",
            Mechanism::Pcp => "PCP",
            Mechanism::Ccp => "CCP",
        })
    }
}

impl FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "SRO" => Ok(Mechanism::Sro),
            "PCP" => Ok(Mechanism::Pcp),
            "CCP" => Ok(Mechanism::Ccp),
            _ => Err(format!("unknown mechanism {s:?}")),
        }
    }
}

/// Frozen solitary counterfactual of a customer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Baseline {
    /// Undiscounted solitary fare.
    pub fare: Money,
    pub dropoff: Seconds,
    pub cost: Money,
    /// No vehicle could serve the customer alone; the baseline assumes the
    /// longest admissible wait.
    pub hypothetical: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommittedCost {
    pub customer: CustomerId,
    pub baseline_solitary_cost: Money,
    pub current_guaranteed_cost: Money,
    pub current_fare: Money,
}

/// Per-customer state the mechanisms consult for already assigned customers.
#[derive(Clone, Debug, PartialEq)]
pub struct CustomerBook {
    pub request: Request,
    pub baseline: Baseline,
    pub committed: CommittedCost,
}

pub type Book = BTreeMap<CustomerId, CustomerBook>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Violation {
    MaxWaitExceeded(CustomerId),
    DetourExceeded(CustomerId),
    ArrivalGuaranteeExceeded(CustomerId),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MaxWaitExceeded(c) => write!(f, "max wait exceeded for {c}"),
            Violation::DetourExceeded(c) => write!(f, "ride detour bound exceeded for {c}"),
            Violation::ArrivalGuaranteeExceeded(c) => write!(f, "arrival bound exceeded for {c}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsertionCandidate {
    pub vehicle: VehicleId,
    pub plan: InsertionPlan,
    pub anchor: LocationId,
    pub anchor_time: Seconds,
    pub added_distance: Distance,
    pub new_pickups: Vec<(CustomerId, Seconds)>,
    pub new_dropoffs: Vec<(CustomerId, Seconds)>,
    pub partner: Option<CustomerId>,
    pub case: Option<PoolCase>,
    /// Pair fare, computed under customer-centered pooling only.
    pub pooled_fare: Option<Money>,
    pub violation: Option<Violation>,
}

impl InsertionCandidate {
    pub fn feasible(&self) -> bool {
        self.violation.is_none()
    }

    pub fn is_pooled(&self) -> bool {
        self.partner.is_some()
    }

    pub fn dropoff_of(&self, c: CustomerId) -> Option<Seconds> {
        self.new_dropoffs.iter().find(|x| x.0 == c).map(|x| x.1)
    }

    pub fn pickup_of(&self, c: CustomerId) -> Option<Seconds> {
        self.new_pickups.iter().find(|x| x.0 == c).map(|x| x.1)
    }

    fn key(&self) -> (Distance, VehicleId, &InsertionPlan) {
        (self.added_distance, self.vehicle, &self.plan)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DecisionKind {
    Solitary,
    Pooled,
    Unserved,
}

impl fmt::Display for DecisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecisionKind::Solitary => "solitary",
            DecisionKind::Pooled => "pooled",
            DecisionKind::Unserved => "unserved",
        })
    }
}

/// One decision-log row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub time: Seconds,
    pub customer: CustomerId,
    pub kind: DecisionKind,
    pub vehicle: Option<VehicleId>,
    pub partner: Option<CustomerId>,
    pub fare: Money,
    pub baseline_cost: Money,
    pub guaranteed_cost: Money,
    pub added_distance: Distance,
}

/// A pooling of a newcomer with the single active customer of a vehicle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEvent {
    pub time: Seconds,
    pub vehicle: VehicleId,
    pub partner: CustomerId,
    pub newcomer: CustomerId,
    pub case: PoolCase,
    pub pair_fare: Money,
    /// Coalition surplus; zero under provider-centered pooling, which does not price it.
    pub surplus: Money,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentDecision {
    pub record: Decision,
    pub chosen: Option<InsertionCandidate>,
    pub baseline: Baseline,
    /// New committed costs for the requester and, when pooled, the partner.
    pub commitments: Vec<CommittedCost>,
    pub event: Option<PoolEvent>,
}

fn pricing_to_net(e: PricingError) -> NetError {
    match e {
        PricingError::Net(n) => n,
        other => NetError::InvalidParameter(other.to_string()),
    }
}

fn pickup_time(v: &VehicleState, c: CustomerId) -> Option<Seconds> {
    v.schedule
        .iter()
        .zip(v.arrivals())
        .find(|(e, _)| e.op == Op::Pu && e.customer == c)
        .map(|(_, &a)| a)
}

fn pool_case(onboard: bool, plan: &[PlannedStop], newcomer: CustomerId) -> PoolCase {
    let first_pu_new = plan.iter().find(|s| s.op == Op::Pu).map(|s| s.customer) == Some(newcomer);
    let first_do_new = plan.iter().find(|s| s.op == Op::Do).map(|s| s.customer) == Some(newcomer);
    match (onboard, first_pu_new, first_do_new) {
        (true, _, false) => PoolCase::OnboardDropFirst,
        (true, _, true) => PoolCase::OnboardDropLast,
        (false, false, false) => PoolCase::FirstInFirstOut,
        (false, false, true) => PoolCase::FirstInLastOut,
        (false, true, false) => PoolCase::NewcomerFirstDropFirst,
        (false, true, true) => PoolCase::NewcomerFirstDropLast,
    }
}

/// `value * 1e6 <= (1e6 + factor) * bound`, exactly.
fn within_factor(value: Seconds, factor_ppm: i64, bound: Seconds) -> bool {
    (value as i128) * (PPM as i128) <= ((PPM + factor_ppm) as i128) * (bound as i128)
}

/// All solitary and (in pooling modes) pooled candidates for `r`, with feasibility marked.
pub fn enumerate_candidates(
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    fleet: &[VehicleState],
    r: &Request,
    now: Seconds,
    mode: Mechanism,
) -> Result<Vec<InsertionCandidate>, NetError> {
    let mut out = Vec::new();
    for v in fleet {
        let view = v.view(net, now)?;
        if view.is_empty() {
            out.push(solitary_candidate(net, v.id, &view, r)?);
            continue;
        }
        if !mode.pools() || !r.poolable {
            continue;
        }
        let active = view.active_customers();
        let [k] = active[..] else { continue };
        let Some(kb) = book.get(&k) else { continue };
        if !kb.request.poolable {
            continue;
        }
        let onboard = view.onboard.contains(&k);
        let pu_r = PlannedStop { op: Op::Pu, customer: r.id, location: r.origin };
        let do_r = PlannedStop { op: Op::Do, customer: r.id, location: r.destination };
        let plans: Vec<InsertionPlan> = if onboard {
            let do_k = view.active[0];
            vec![vec![pu_r, do_k, do_r], vec![pu_r, do_r, do_k]]
        } else {
            let (pu_k, do_k) = (view.active[0], view.active[1]);
            vec![
                vec![pu_k, pu_r, do_k, do_r],
                vec![pu_k, pu_r, do_r, do_k],
                vec![pu_r, pu_k, do_k, do_r],
                vec![pu_r, pu_k, do_r, do_k],
            ]
        };
        let old = route_distance(net, view.anchor, &view.active)?;
        let k_pickup_done = pickup_time(v, k);
        for plan in plans {
            let times = time_stops(net, view.anchor, view.anchor_time, &plan)?;
            let at = |c: CustomerId, op: Op| {
                plan.iter()
                    .zip(&times)
                    .find(|(s, _)| s.customer == c && s.op == op)
                    .map(|(_, &t)| t)
            };
            let pu_r_t = at(r.id, Op::Pu).expect("plan picks up r");
            let do_r_t = at(r.id, Op::Do).expect("plan drops r");
            let pu_k_t = if onboard {
                k_pickup_done.expect("onboard customer was picked up")
            } else {
                at(k, Op::Pu).expect("plan picks up k")
            };
            let do_k_t = at(k, Op::Do).expect("plan drops k");
            let added = route_distance(net, view.anchor, &plan)? - old;
            let case = pool_case(onboard, &plan, r.id);
            let mut c = InsertionCandidate {
                vehicle: v.id,
                plan: plan.clone(),
                anchor: view.anchor,
                anchor_time: view.anchor_time,
                added_distance: added,
                new_pickups: vec![(k, pu_k_t), (r.id, pu_r_t)],
                new_dropoffs: vec![(k, do_k_t), (r.id, do_r_t)],
                partner: Some(k),
                case: Some(case),
                pooled_fare: None,
                violation: None,
            };
            if pu_r_t - r.request_time > r.max_wait {
                c.violation = Some(Violation::MaxWaitExceeded(r.id));
            } else if !onboard && pu_k_t - kb.request.request_time > kb.request.max_wait {
                c.violation = Some(Violation::MaxWaitExceeded(k));
            }
            if mode == Mechanism::Ccp {
                let g = PoolGeometry {
                    case,
                    anchor: view.anchor,
                    pickup_i: pu_k_t,
                    pickup_j: pu_r_t,
                    dropoff_i: do_k_t,
                    dropoff_j: do_r_t,
                };
                let fare = ccp_pooled_fare(tariff, net, &kb.request, r, &g).map_err(pricing_to_net)?;
                c.pooled_fare = Some(fare);
            }
            out.push(c);
        }
    }
    if mode == Mechanism::Pcp {
        // pooled candidates are judged against the frozen solitary arrival
        let base = solitary_baseline(net, tariff, r, best_solitary(&out))?;
        for c in out.iter_mut().filter(|c| c.is_pooled() && c.feasible()) {
            c.violation = pcp_pair_violation(net, tariff, book, r, base.dropoff, c)?;
        }
    }
    Ok(out)
}

fn solitary_candidate(
    net: &RoadNetwork,
    vehicle: VehicleId,
    view: &VehicleView,
    r: &Request,
) -> Result<InsertionCandidate, NetError> {
    let plan = vec![
        PlannedStop { op: Op::Pu, customer: r.id, location: r.origin },
        PlannedStop { op: Op::Do, customer: r.id, location: r.destination },
    ];
    let times = time_stops(net, view.anchor, view.anchor_time, &plan)?;
    let added = route_distance(net, view.anchor, &plan)?;
    let violation = (times[0] - r.request_time > r.max_wait).then_some(Violation::MaxWaitExceeded(r.id));
    Ok(InsertionCandidate {
        vehicle,
        plan,
        anchor: view.anchor,
        anchor_time: view.anchor_time,
        added_distance: added,
        new_pickups: vec![(r.id, times[0])],
        new_dropoffs: vec![(r.id, times[1])],
        partner: None,
        case: None,
        pooled_fare: None,
        violation,
    })
}

/// Solitary counterfactual from the best feasible solitary candidate, or the
/// hypothetical ride at maximal wait when there is none.
pub fn solitary_baseline(
    net: &RoadNetwork,
    tariff: &Tariff,
    r: &Request,
    best_solitary: Option<&InsertionCandidate>,
) -> Result<Baseline, NetError> {
    let fare = solitary_fare(tariff, net, r.origin, r.destination).map_err(pricing_to_net)?;
    let (dropoff, hypothetical) = match best_solitary {
        Some(c) => (c.dropoff_of(r.id).expect("solitary dropoff"), false),
        None => (
            r.request_time + r.max_wait + net.travel_time(r.origin, r.destination)?,
            true,
        ),
    };
    Ok(Baseline {
        fare,
        dropoff,
        cost: fare + r.time_cost(dropoff),
        hypothetical,
    })
}

fn best_by_distance<'a, I: Iterator<Item = &'a InsertionCandidate>>(it: I) -> Option<&'a InsertionCandidate> {
    it.min_by(|a, b| a.key().cmp(&b.key()))
}

fn best_solitary(cands: &[InsertionCandidate]) -> Option<&InsertionCandidate> {
    best_by_distance(cands.iter().filter(|c| c.feasible() && !c.is_pooled()))
}

fn unserved(r: &Request, baseline: Baseline) -> AssignmentDecision {
    AssignmentDecision {
        record: Decision {
            time: r.request_time,
            customer: r.id,
            kind: DecisionKind::Unserved,
            vehicle: None,
            partner: None,
            fare: Money::ZERO,
            baseline_cost: baseline.cost,
            guaranteed_cost: Money::ZERO,
            added_distance: Distance::ZERO,
        },
        chosen: None,
        baseline,
        commitments: Vec::new(),
        event: None,
    }
}

fn solitary_decision(r: &Request, c: &InsertionCandidate, baseline: Baseline, fare: Money) -> AssignmentDecision {
    let dropoff = c.dropoff_of(r.id).expect("solitary dropoff");
    let guaranteed = fare + r.time_cost(dropoff);
    AssignmentDecision {
        record: Decision {
            time: r.request_time,
            customer: r.id,
            kind: DecisionKind::Solitary,
            vehicle: Some(c.vehicle),
            partner: None,
            fare,
            baseline_cost: baseline.cost,
            guaranteed_cost: guaranteed,
            added_distance: c.added_distance,
        },
        chosen: Some(c.clone()),
        baseline,
        commitments: vec![CommittedCost {
            customer: r.id,
            baseline_solitary_cost: baseline.cost,
            current_guaranteed_cost: guaranteed,
            current_fare: fare,
        }],
        event: None,
    }
}

/// Solitary rides only, minimal added distance.
pub fn assign_sro(
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    fleet: &[VehicleState],
    r: &Request,
) -> Result<AssignmentDecision, NetError> {
    let cands = enumerate_candidates(net, tariff, book, fleet, r, r.request_time, Mechanism::Sro)?;
    let best = best_solitary(&cands);
    let baseline = solitary_baseline(net, tariff, r, best)?;
    Ok(match best {
        Some(c) => solitary_decision(r, c, baseline, baseline.fare),
        None => unserved(r, baseline),
    })
}

/// Provider-centered pooling: minimal added distance over solitary and
/// detour-feasible pooled candidates; poolable customers pay the discounted fare.
pub fn assign_pcp(
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    fleet: &[VehicleState],
    r: &Request,
) -> Result<AssignmentDecision, NetError> {
    if !r.poolable {
        return assign_sro(net, tariff, book, fleet, r);
    }
    let now = r.request_time;
    let cands = enumerate_candidates(net, tariff, book, fleet, r, now, Mechanism::Pcp)?;
    let baseline = solitary_baseline(net, tariff, r, best_solitary(&cands))?;
    let fare = pcp_fare(tariff, baseline.fare);
    let Some(best) = best_by_distance(cands.iter().filter(|c| c.feasible())) else {
        return Ok(unserved(r, baseline));
    };
    if !best.is_pooled() {
        return Ok(solitary_decision(r, best, baseline, fare));
    }
    let k = best.partner.expect("pooled");
    let kb = &book[&k];
    let r_do = best.dropoff_of(r.id).expect("dropoff");
    let k_do = best.dropoff_of(k).expect("dropoff");
    let r_cost = fare + r.time_cost(r_do);
    let k_cost = kb.committed.current_fare + kb.request.time_cost(k_do);
    Ok(AssignmentDecision {
        record: Decision {
            time: now,
            customer: r.id,
            kind: DecisionKind::Pooled,
            vehicle: Some(best.vehicle),
            partner: Some(k),
            fare,
            baseline_cost: baseline.cost,
            guaranteed_cost: r_cost,
            added_distance: best.added_distance,
        },
        chosen: Some(best.clone()),
        baseline,
        commitments: vec![
            CommittedCost {
                customer: r.id,
                baseline_solitary_cost: baseline.cost,
                current_guaranteed_cost: r_cost,
                current_fare: fare,
            },
            CommittedCost {
                current_guaranteed_cost: k_cost,
                ..kb.committed
            },
        ],
        event: Some(PoolEvent {
            time: now,
            vehicle: best.vehicle,
            partner: k,
            newcomer: r.id,
            case: best.case.expect("pooled"),
            pair_fare: fare + kb.committed.current_fare,
            surplus: Money::ZERO,
        }),
    })
}

// Ride duration within (1+Δ) of the direct ride, and arrival within (1+Δ) of
// the frozen solitary arrival, for both customers of the pair.
fn pcp_pair_violation(
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    r: &Request,
    r_baseline_dropoff: Seconds,
    c: &InsertionCandidate,
) -> Result<Option<Violation>, NetError> {
    let delta = tariff.detour_factor.0;
    let k = c.partner.expect("pooled candidate");
    let kb = &book[&k];
    for (req, base_do) in [(kb.request, kb.baseline.dropoff), (*r, r_baseline_dropoff)] {
        let pu = c.pickup_of(req.id).expect("pickup time");
        let dropoff = c.dropoff_of(req.id).expect("dropoff time");
        let direct = net.travel_time(req.origin, req.destination)?;
        if !within_factor(dropoff - pu, delta, direct) {
            return Ok(Some(Violation::DetourExceeded(req.id)));
        }
        if !within_factor(dropoff - req.request_time, delta, base_do - req.request_time) {
            return Ok(Some(Violation::ArrivalGuaranteeExceeded(req.id)));
        }
    }
    Ok(None)
}

/// Coalition surplus of a pooled candidate: solitary baseline of the newcomer
/// plus the partner's guaranteed cost, minus the pair's pooled total cost.
pub fn coalition_surplus(book: &Book, r: &Request, r_baseline: Money, c: &InsertionCandidate) -> Option<Money> {
    let k = c.partner?;
    let kb = book.get(&k)?;
    let pooled = c.pooled_fare?
        + r.time_cost(c.dropoff_of(r.id)?)
        + kb.request.time_cost(c.dropoff_of(k)?);
    Some(r_baseline + kb.committed.current_guaranteed_cost - pooled)
}

/// Customer-centered pooling: pool only when the pair's total cost strictly
/// drops, picking the largest surplus.
pub fn assign_ccp(
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    fleet: &[VehicleState],
    r: &Request,
) -> Result<AssignmentDecision, NetError> {
    if !r.poolable {
        return assign_sro(net, tariff, book, fleet, r);
    }
    let now = r.request_time;
    let cands = enumerate_candidates(net, tariff, book, fleet, r, now, Mechanism::Ccp)?;
    let solo = best_solitary(&cands);
    let baseline = solitary_baseline(net, tariff, r, solo)?;
    let best_pool = cands
        .iter()
        .filter(|c| c.feasible() && c.is_pooled())
        .filter_map(|c| coalition_surplus(book, r, baseline.cost, c).map(|s| (s, c)))
        .filter(|(s, _)| s.0 > 0)
        .min_by(|(sa, a), (sb, b)| sb.cmp(sa).then_with(|| a.key().cmp(&b.key())));
    let Some((surplus, best)) = best_pool else {
        return Ok(match solo {
            Some(c) => solitary_decision(r, c, baseline, baseline.fare),
            None => unserved(r, baseline),
        });
    };
    let k = best.partner.expect("pooled");
    let kb = &book[&k];
    let a_r = r.time_cost(best.dropoff_of(r.id).expect("dropoff"));
    let a_k = kb.request.time_cost(best.dropoff_of(k).expect("dropoff"));
    // newcomer keeps the odd mill
    let r_share = Money((surplus.0 + 1) / 2);
    let k_share = surplus - r_share;
    let g_r = baseline.cost - r_share;
    let g_k = kb.committed.current_guaranteed_cost - k_share;
    let f_r = g_r - a_r;
    let f_k = g_k - a_k;
    let pair_fare = best.pooled_fare.expect("pair fare");
    debug_assert_eq!(f_r + f_k, pair_fare);
    Ok(AssignmentDecision {
        record: Decision {
            time: now,
            customer: r.id,
            kind: DecisionKind::Pooled,
            vehicle: Some(best.vehicle),
            partner: Some(k),
            fare: f_r,
            baseline_cost: baseline.cost,
            guaranteed_cost: g_r,
            added_distance: best.added_distance,
        },
        chosen: Some(best.clone()),
        baseline,
        commitments: vec![
            CommittedCost {
                customer: r.id,
                baseline_solitary_cost: baseline.cost,
                current_guaranteed_cost: g_r,
                current_fare: f_r,
            },
            CommittedCost {
                customer: k,
                baseline_solitary_cost: kb.committed.baseline_solitary_cost,
                current_guaranteed_cost: g_k,
                current_fare: f_k,
            },
        ],
        event: Some(PoolEvent {
            time: now,
            vehicle: best.vehicle,
            partner: k,
            newcomer: r.id,
            case: best.case.expect("pooled"),
            pair_fare,
            surplus,
        }),
    })
}

pub fn assign(
    mode: Mechanism,
    net: &RoadNetwork,
    tariff: &Tariff,
    book: &Book,
    fleet: &[VehicleState],
    r: &Request,
) -> Result<AssignmentDecision, NetError> {
    match mode {
        Mechanism::Sro => assign_sro(net, tariff, book, fleet, r),
        Mechanism::Pcp => assign_pcp(net, tariff, book, fleet, r),
        Mechanism::Ccp => assign_ccp(net, tariff, book, fleet, r),
    }
}

//! Requests, vehicle schedules and runs.
//!
//! A schedule is the ordered list of `(location, time, op, customer)` entries a
//! vehicle has committed to. Entries up to `now` are history; pickups and
//! drop-offs after `now` are the active part that may be re-planned when a new
//! customer is inserted. Vehicles only change course at nodes: the anchor is the
//! first node on the current leg the vehicle reaches at or after `now`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{LocationId, NetError, RoadNetwork};
use crate::units::{Distance, Money, Seconds, ValueOfTime};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CustomerId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VehicleId(pub u32);

impl fmt::Display for CustomerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("vehicle {vehicle}: more than two customers on board")]
    CapacityViolation { vehicle: VehicleId },
    #[error("vehicle {vehicle}: {reason}")]
    OrderingViolation { vehicle: VehicleId, reason: String },
    #[error("request {id}: {reason}")]
    InvalidRequest { id: CustomerId, reason: String },
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: CustomerId,
    pub origin: LocationId,
    pub destination: LocationId,
    /// Also the preferred pickup time.
    pub request_time: Seconds,
    pub value_of_time: ValueOfTime,
    pub max_wait: Seconds,
    pub poolable: bool,
}

impl Request {
    pub fn validate(&self) -> Result<(), DomainError> {
        let bad = |reason: &str| DomainError::InvalidRequest {
            id: self.id,
            reason: reason.into(),
        };
        if self.origin == self.destination {
            return Err(bad("origin equals destination"));
        }
        if self.max_wait <= 0 {
            return Err(bad("max wait must be positive"));
        }
        if self.value_of_time.0 < 0 {
            return Err(bad("value of time must be non-negative"));
        }
        if self.request_time < 0 {
            return Err(bad("request time must be non-negative"));
        }
        Ok(())
    }

    /// Time cost of being dropped off at `dropoff`, waiting included.
    pub fn time_cost(&self, dropoff: Seconds) -> Money {
        self.value_of_time.cost_of(dropoff - self.request_time)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    Rec,
    Pu,
    Do,
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Op::Rec => "REC",
            Op::Pu => "PU",
            Op::Do => "DO",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub location: LocationId,
    /// Arrival for PU/DO; the request time for REC.
    pub time: Seconds,
    pub op: Op,
    pub customer: CustomerId,
}

/// One stop of an insertion plan, before times are assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlannedStop {
    pub op: Op,
    pub customer: CustomerId,
    pub location: LocationId,
}

/// Full ordered active part after an insertion: existing active stops interleaved
/// with the new customer's pickup and drop-off.
pub type InsertionPlan = Vec<PlannedStop>;

/// Where a vehicle can next change course, and what it is committed to.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleView {
    pub anchor: LocationId,
    pub anchor_time: Seconds,
    pub active: Vec<PlannedStop>,
    pub onboard: Vec<CustomerId>,
}

impl VehicleView {
    pub fn active_customers(&self) -> Vec<CustomerId> {
        let set: BTreeSet<CustomerId> = self.active.iter().map(|s| s.customer).collect();
        set.into_iter().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub start_node: LocationId,
    pub schedule: Vec<ScheduleEntry>,
    pub anchor_node: LocationId,
    pub anchor_time: Seconds,
    // replayed arrival per schedule entry
    arrivals: Vec<Seconds>,
}

/// Times at which a vehicle leaving `from` at `depart` reaches each stop.
pub fn time_stops(
    net: &RoadNetwork,
    from: LocationId,
    depart: Seconds,
    stops: &[PlannedStop],
) -> Result<Vec<Seconds>, NetError> {
    let mut t = depart;
    let mut at = from;
    let mut out = Vec::with_capacity(stops.len());
    for s in stops {
        t += net.travel_time(at, s.location)?;
        at = s.location;
        out.push(t);
    }
    Ok(out)
}

/// Driving distance from `from` through the stops in order.
pub fn route_distance(
    net: &RoadNetwork,
    from: LocationId,
    stops: &[PlannedStop],
) -> Result<Distance, NetError> {
    let mut at = from;
    let mut d = Distance::ZERO;
    for s in stops {
        d += net.distance(at, s.location)?;
        at = s.location;
    }
    Ok(d)
}

impl VehicleState {
    pub fn new(id: VehicleId, start_node: LocationId) -> Self {
        VehicleState {
            id,
            start_node,
            schedule: Vec::new(),
            anchor_node: start_node,
            anchor_time: 0,
            arrivals: Vec::new(),
        }
    }

    /// Rebuild a vehicle from a stored schedule.
    pub fn from_schedule(
        net: &RoadNetwork,
        id: VehicleId,
        start_node: LocationId,
        schedule: Vec<ScheduleEntry>,
    ) -> Result<Self, DomainError> {
        let mut v = VehicleState::new(id, start_node);
        v.schedule = schedule;
        v.arrivals = v.replay(net)?;
        if let (Some(e), Some(&t)) = (v.schedule.last(), v.arrivals.last()) {
            v.anchor_node = e.location;
            v.anchor_time = t;
        }
        Ok(v)
    }

    pub fn arrivals(&self) -> &[Seconds] {
        &self.arrivals
    }

    /// Recompute arrivals from the start node. A REC entry is reached no
    /// earlier than its own time, which is when the vehicle learned of it.
    pub fn replay(&self, net: &RoadNetwork) -> Result<Vec<Seconds>, NetError> {
        let mut at = self.start_node;
        let mut t: Seconds = 0;
        let mut out = Vec::with_capacity(self.schedule.len());
        for e in &self.schedule {
            t += net.travel_time(at, e.location)?;
            if e.op == Op::Rec {
                t = t.max(e.time);
            }
            at = e.location;
            out.push(t);
        }
        Ok(out)
    }

    /// Entries not yet reached at `t`, order preserved.
    pub fn active_schedule(&self, t: Seconds) -> Vec<ScheduleEntry> {
        self.schedule
            .iter()
            .zip(&self.arrivals)
            .filter(|(_, &a)| a >= t)
            .map(|(e, _)| *e)
            .collect()
    }

    // first entry not yet reached at `now`
    fn split(&self, now: Seconds) -> usize {
        self.arrivals.partition_point(|&a| a <= now)
    }

    /// Anchor, active stops and on-board customers at `now`.
    pub fn view(&self, net: &RoadNetwork, now: Seconds) -> Result<VehicleView, NetError> {
        let k = self.split(now);
        let (last_loc, last_t) = if k == 0 {
            (self.start_node, 0)
        } else {
            (self.schedule[k - 1].location, self.arrivals[k - 1])
        };
        let active: Vec<PlannedStop> = self.schedule[k..]
            .iter()
            .filter(|e| e.op != Op::Rec)
            .map(|e| PlannedStop {
                op: e.op,
                customer: e.customer,
                location: e.location,
            })
            .collect();
        let mut onboard = Vec::new();
        for s in &active {
            if s.op == Op::Do && !active.iter().any(|p| p.op == Op::Pu && p.customer == s.customer) {
                onboard.push(s.customer);
            }
        }
        let (anchor, anchor_time) = if k == self.schedule.len() || last_t == now {
            (last_loc, now)
        } else {
            let target = self.schedule[k].location;
            let mut t = last_t;
            let mut found = None;
            let nodes = net.path_nodes(last_loc, target)?;
            for w in nodes.windows(2) {
                t += net.travel_time(w[0], w[1])?;
                if t >= now {
                    found = Some((w[1], t));
                    break;
                }
            }
            // a REC at the previous location can delay departure past `now`
            found.unwrap_or((target, self.arrivals[k].max(now)))
        };
        Ok(VehicleView {
            anchor,
            anchor_time,
            active,
            onboard,
        })
    }

    /// Commit an insertion plan for `customer`, requested at `now`.
    pub fn apply_assignment(
        &self,
        net: &RoadNetwork,
        customer: CustomerId,
        plan: &[PlannedStop],
        now: Seconds,
    ) -> Result<VehicleState, DomainError> {
        let view = self.view(net, now)?;
        check_plan(self.id, &view, customer, plan)?;
        let k = self.split(now);
        let mut schedule: Vec<ScheduleEntry> = self.schedule[..k].to_vec();
        schedule.extend(self.schedule[k..].iter().filter(|e| e.op == Op::Rec).copied());
        schedule.push(ScheduleEntry {
            location: view.anchor,
            time: now,
            op: Op::Rec,
            customer,
        });
        let times = time_stops(net, view.anchor, view.anchor_time, plan)?;
        for (s, t) in plan.iter().zip(times) {
            schedule.push(ScheduleEntry {
                location: s.location,
                time: t,
                op: s.op,
                customer: s.customer,
            });
        }
        let mut next = VehicleState {
            id: self.id,
            start_node: self.start_node,
            schedule,
            anchor_node: view.anchor,
            anchor_time: view.anchor_time,
            arrivals: Vec::new(),
        };
        next.arrivals = next.replay(net)?;
        debug_assert!(next
            .schedule
            .iter()
            .zip(&next.arrivals)
            .all(|(e, &a)| e.op == Op::Rec || e.time == a));
        Ok(next)
    }

    /// Total driving distance of the schedule from the start node.
    pub fn distance(&self, net: &RoadNetwork) -> Result<Distance, NetError> {
        let mut at = self.start_node;
        let mut d = Distance::ZERO;
        for e in &self.schedule {
            d += net.distance(at, e.location)?;
            at = e.location;
        }
        Ok(d)
    }

    /// Realized pickup and drop-off time per customer.
    pub fn service_times(&self) -> BTreeMap<CustomerId, (Seconds, Seconds)> {
        let mut out: BTreeMap<CustomerId, (Seconds, Seconds)> = BTreeMap::new();
        for (e, &a) in self.schedule.iter().zip(&self.arrivals) {
            match e.op {
                Op::Pu => out.entry(e.customer).or_insert((a, a)).0 = a,
                Op::Do => out.entry(e.customer).or_insert((a, a)).1 = a,
                Op::Rec => {}
            }
        }
        out
    }

    /// Largest number of customers on board at once, from the realized schedule.
    pub fn max_onboard(&self) -> usize {
        let mut n = 0usize;
        let mut max = 0;
        for e in &self.schedule {
            match e.op {
                Op::Pu => n += 1,
                Op::Do => n = n.saturating_sub(1),
                Op::Rec => {}
            }
            max = max.max(n);
        }
        max
    }

    /// Check time order and per-customer REC < PU < DO order.
    pub fn check_invariants(&self) -> Result<(), DomainError> {
        let bad = |reason: String| DomainError::OrderingViolation {
            vehicle: self.id,
            reason,
        };
        if self.arrivals.windows(2).any(|w| w[0] > w[1]) {
            return Err(bad("arrival times decrease".into()));
        }
        if self.max_onboard() > 2 {
            return Err(DomainError::CapacityViolation { vehicle: self.id });
        }
        let mut stage: BTreeMap<CustomerId, Op> = BTreeMap::new();
        for (e, &a) in self.schedule.iter().zip(&self.arrivals) {
            let prev = stage.get(&e.customer).copied();
            let ok = match e.op {
                Op::Rec => prev.is_none(),
                Op::Pu => prev == Some(Op::Rec),
                Op::Do => prev == Some(Op::Pu),
            };
            if !ok {
                return Err(bad(format!("customer {} has {} out of order", e.customer, e.op)));
            }
            if e.op != Op::Rec && e.time != a {
                return Err(bad(format!("customer {} {} time differs from replay", e.customer, e.op)));
            }
            stage.insert(e.customer, e.op);
        }
        if let Some((c, _)) = stage.iter().find(|(_, &op)| op != Op::Do) {
            return Err(bad(format!("customer {c} is never dropped off")));
        }
        Ok(())
    }
}

fn check_plan(
    vehicle: VehicleId,
    view: &VehicleView,
    customer: CustomerId,
    plan: &[PlannedStop],
) -> Result<(), DomainError> {
    let bad = |reason: String| DomainError::OrderingViolation { vehicle, reason };
    let existing: Vec<PlannedStop> = plan.iter().filter(|s| s.customer != customer).copied().collect();
    if existing != view.active {
        return Err(bad("plan reorders or drops committed stops".into()));
    }
    if view.onboard.contains(&customer) || view.active.iter().any(|s| s.customer == customer) {
        return Err(bad(format!("customer {customer} already assigned")));
    }
    let mine: Vec<Op> = plan.iter().filter(|s| s.customer == customer).map(|s| s.op).collect();
    if mine != [Op::Pu, Op::Do] {
        return Err(bad(format!("customer {customer} needs exactly PU then DO")));
    }
    let mut onboard = view.onboard.len();
    for s in plan {
        if s.op == Op::Rec {
            return Err(bad("plan contains a REC entry".into()));
        }
        if s.op == Op::Pu {
            onboard += 1;
            if onboard > 2 {
                return Err(DomainError::CapacityViolation { vehicle });
            }
        } else {
            onboard -= 1;
        }
    }
    Ok(())
}

/// A maximal interval during which a vehicle is never empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub vehicle: VehicleId,
    /// In pickup order.
    pub customers: Vec<CustomerId>,
    pub start_time: Seconds,
    pub end_time: Seconds,
    pub total_fare: Money,
    /// PU/DO events of the run in schedule order.
    pub events: Vec<(Op, CustomerId, Seconds)>,
}

/// Split a realized schedule into runs. Customers missing from `fares` count as zero.
pub fn extract_runs(v: &VehicleState, fares: &BTreeMap<CustomerId, Money>) -> Vec<Run> {
    let mut runs = Vec::new();
    let mut cur: Option<Run> = None;
    let mut onboard = 0usize;
    for (e, &a) in v.schedule.iter().zip(&v.arrivals) {
        match e.op {
            Op::Rec => continue,
            Op::Pu => {
                let run = cur.get_or_insert_with(|| Run {
                    vehicle: v.id,
                    customers: Vec::new(),
                    start_time: a,
                    end_time: a,
                    total_fare: Money::ZERO,
                    events: Vec::new(),
                });
                run.customers.push(e.customer);
                run.total_fare += fares.get(&e.customer).copied().unwrap_or(Money::ZERO);
                run.events.push((Op::Pu, e.customer, a));
                onboard += 1;
            }
            Op::Do => {
                if let Some(run) = cur.as_mut() {
                    run.events.push((Op::Do, e.customer, a));
                    run.end_time = a;
                }
                onboard = onboard.saturating_sub(1);
                if onboard == 0 {
                    runs.extend(cur.take());
                }
            }
        }
    }
    runs.extend(cur);
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::make_grid;

    fn l(i: u32) -> LocationId {
        LocationId(i)
    }

    fn req(id: u32, o: u32, d: u32, t: Seconds) -> Request {
        Request {
            id: CustomerId(id),
            origin: l(o),
            destination: l(d),
            request_time: t,
            value_of_time: ValueOfTime::from_usd_per_min(0.2),
            max_wait: 300,
            poolable: true,
        }
    }

    fn pu(r: &Request) -> PlannedStop {
        PlannedStop { op: Op::Pu, customer: r.id, location: r.origin }
    }

    fn dr(r: &Request) -> PlannedStop {
        PlannedStop { op: Op::Do, customer: r.id, location: r.destination }
    }

    #[test]
    fn empty_vehicle_assignment() {
        // 3x3 grid, 24 s per edge
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let v = VehicleState::new(VehicleId(0), l(0));
        let i = req(1, 1, 2, 10);
        let v = v.apply_assignment(&net, i.id, &[pu(&i), dr(&i)], 10).unwrap();
        let ops: Vec<(LocationId, Seconds, Op)> =
            v.schedule.iter().map(|e| (e.location, e.time, e.op)).collect();
        assert_eq!(ops, vec![(l(0), 10, Op::Rec), (l(1), 34, Op::Pu), (l(2), 58, Op::Do)]);
        v.check_invariants().unwrap();
        assert_eq!(v.active_schedule(40), vec![v.schedule[2]]);
        assert!(VehicleState::new(VehicleId(1), l(0)).active_schedule(5).is_empty());
    }

    #[test]
    fn insertion_keeps_committed_customer() {
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let j = req(1, 1, 8, 0);
        let v = VehicleState::new(VehicleId(0), l(0))
            .apply_assignment(&net, j.id, &[pu(&j), dr(&j)], 0)
            .unwrap();
        // j picked up at 24; at t=30 the vehicle heads 1 -> 2 and reaches 2 at 48
        let i = req(2, 2, 5, 30);
        let view = v.view(&net, 30).unwrap();
        assert_eq!((view.anchor, view.anchor_time), (l(2), 48));
        assert_eq!(view.onboard, vec![j.id]);
        let plan = vec![pu(&i), dr(&i), dr(&j)];
        let v2 = v.apply_assignment(&net, i.id, &plan, 30).unwrap();
        v2.check_invariants().unwrap();
        let ops: Vec<(Op, u32)> = v2.schedule.iter().map(|e| (e.op, e.customer.0)).collect();
        assert_eq!(
            ops,
            vec![(Op::Rec, 1), (Op::Pu, 1), (Op::Rec, 2), (Op::Pu, 2), (Op::Do, 2), (Op::Do, 1)]
        );
        assert_eq!(v2.service_times()[&i.id], (48, 72));
        assert_eq!(v2.service_times()[&j.id], (24, 96));
        // the vehicle only drives 0-1-2-5-8
        assert_eq!(v2.distance(&net).unwrap(), Distance::from_miles(0.8));
    }

    #[test]
    fn third_rider_is_rejected() {
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let a = req(1, 1, 8, 0);
        let b = req(2, 2, 8, 0);
        let c = req(3, 3, 8, 0);
        let v = VehicleState::new(VehicleId(0), l(0))
            .apply_assignment(&net, a.id, &[pu(&a), dr(&a)], 0)
            .unwrap();
        let v = v
            .apply_assignment(&net, b.id, &[pu(&a), pu(&b), dr(&a), dr(&b)], 0)
            .unwrap();
        let plan = vec![pu(&a), pu(&b), pu(&c), dr(&a), dr(&b), dr(&c)];
        assert_eq!(
            v.apply_assignment(&net, c.id, &plan, 0),
            Err(DomainError::CapacityViolation { vehicle: VehicleId(0) })
        );
        let swapped = vec![pu(&b), pu(&a), dr(&a), dr(&b), pu(&c), dr(&c)];
        assert!(matches!(
            v.apply_assignment(&net, c.id, &swapped, 0),
            Err(DomainError::OrderingViolation { .. })
        ));
    }

    #[test]
    fn runs_split_on_empty_vehicle() {
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let i = req(1, 1, 2, 0);
        let j = req(2, 5, 8, 100);
        let v = VehicleState::new(VehicleId(0), l(0))
            .apply_assignment(&net, i.id, &[pu(&i), dr(&i)], 0)
            .unwrap()
            .apply_assignment(&net, j.id, &[pu(&j), dr(&j)], 100)
            .unwrap();
        let fares = BTreeMap::from([(i.id, Money(3000)), (j.id, Money(3000))]);
        let runs = extract_runs(&v, &fares);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0].customers, vec![i.id]);
        assert_eq!(runs[1].customers, vec![j.id]);
        assert_eq!(runs[1].total_fare, Money(3000));
    }

    #[test]
    fn chained_pooling_is_one_run() {
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let i = req(1, 1, 2, 0);
        let j = req(2, 2, 8, 0);
        let k = req(3, 5, 7, 0);
        let v = VehicleState::new(VehicleId(0), l(0))
            .apply_assignment(&net, i.id, &[pu(&i), dr(&i)], 0)
            .unwrap()
            .apply_assignment(&net, j.id, &[pu(&i), pu(&j), dr(&i), dr(&j)], 0)
            .unwrap();
        let v = v
            .apply_assignment(&net, k.id, &[pu(&i), pu(&j), dr(&i), pu(&k), dr(&j), dr(&k)], 0)
            .unwrap();
        v.check_invariants().unwrap();
        let runs = extract_runs(&v, &BTreeMap::new());
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].customers, vec![i.id, j.id, k.id]);
        let seq: Vec<(Op, CustomerId)> = runs[0].events.iter().map(|e| (e.0, e.1)).collect();
        let direct: Vec<(Op, CustomerId)> = v
            .schedule
            .iter()
            .filter(|e| e.op != Op::Rec)
            .map(|e| (e.op, e.customer))
            .collect();
        assert_eq!(seq, direct);
    }

    #[test]
    fn parked_vehicle_anchors_at_last_stop() {
        let net = make_grid(3, 3, 0.2, 30.0).unwrap();
        let i = req(1, 1, 2, 0);
        let v = VehicleState::new(VehicleId(0), l(0))
            .apply_assignment(&net, i.id, &[pu(&i), dr(&i)], 0)
            .unwrap();
        let view = v.view(&net, 500).unwrap();
        assert_eq!((view.anchor, view.anchor_time), (l(2), 500));
        assert!(view.is_empty());
    }

    #[test]
    fn request_validation() {
        let mut r = req(1, 1, 1, 0);
        assert!(r.validate().is_err());
        r.destination = l(2);
        assert!(r.validate().is_ok());
        r.max_wait = 0;
        assert!(r.validate().is_err());
    }
}

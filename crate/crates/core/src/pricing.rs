//! Fares, customer cost and provider profit.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Request;
use crate::netgraph::{LocationId, NetError, RoadNetwork};
use crate::units::{Distance, Money, Ppm, Seconds};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("invalid tariff: {0}")]
    InvalidTariff(String),
    #[error("invalid pooling geometry: {0}")]
    InvalidGeometry(String),
    #[error("origin and destination coincide at {0}")]
    SameEndpoints(LocationId),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Tariff block as written in scenario files, in dollars.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TariffConfig {
    #[serde(default = "defaults::base_fare")]
    pub base_fare_usd: f64,
    #[serde(default = "defaults::per_mile")]
    pub per_mile_usd: f64,
    #[serde(default = "defaults::change_fee")]
    pub change_fee_usd: f64,
    #[serde(default = "defaults::discount")]
    pub discount_factor: f64,
    #[serde(default = "defaults::detour")]
    pub detour_factor: f64,
    #[serde(default = "defaults::provider_cost")]
    pub provider_cost_per_mile_usd: f64,
}

mod defaults {
    pub fn base_fare() -> f64 {
        2.50
    }
    pub fn per_mile() -> f64 {
        2.50
    }
    pub fn change_fee() -> f64 {
        2.00
    }
    pub fn discount() -> f64 {
        0.80
    }
    pub fn detour() -> f64 {
        0.30
    }
    pub fn provider_cost() -> f64 {
        2.945
    }
}

impl Default for TariffConfig {
    fn default() -> Self {
        TariffConfig {
            base_fare_usd: defaults::base_fare(),
            per_mile_usd: defaults::per_mile(),
            change_fee_usd: defaults::change_fee(),
            discount_factor: defaults::discount(),
            detour_factor: defaults::detour(),
            provider_cost_per_mile_usd: defaults::provider_cost(),
        }
    }
}

/// Tariff in exact units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tariff {
    pub base_fare: Money,
    pub per_mile: Money,
    pub change_fee: Money,
    pub discount_factor: Ppm,
    pub detour_factor: Ppm,
    pub provider_cost_per_mile: Money,
}

impl Default for Tariff {
    fn default() -> Self {
        Tariff::try_from(&TariffConfig::default()).expect("default tariff is valid")
    }
}

impl TryFrom<&TariffConfig> for Tariff {
    type Error = PricingError;

    fn try_from(c: &TariffConfig) -> Result<Self, PricingError> {
        let t = Tariff {
            base_fare: Money::from_dollars(c.base_fare_usd),
            per_mile: Money::from_dollars(c.per_mile_usd),
            change_fee: Money::from_dollars(c.change_fee_usd),
            discount_factor: Ppm::from_f64(c.discount_factor),
            detour_factor: Ppm::from_f64(c.detour_factor),
            provider_cost_per_mile: Money::from_dollars(c.provider_cost_per_mile_usd),
        };
        t.validate()?;
        Ok(t)
    }
}

impl Tariff {
    pub fn validate(&self) -> Result<(), PricingError> {
        let bad = |m: &str| Err(PricingError::InvalidTariff(m.into()));
        if self.base_fare.0 < 0 {
            return bad("base fare must be non-negative");
        }
        if self.per_mile.0 <= 0 {
            return bad("per-mile rate must be positive");
        }
        if self.change_fee.0 < 0 {
            return bad("change fee must be non-negative");
        }
        if self.discount_factor.0 <= 0 || self.discount_factor > Ppm::ONE {
            return bad("discount factor must lie in (0, 1]");
        }
        if self.detour_factor.0 <= 0 {
            return bad("detour factor must be positive");
        }
        if self.provider_cost_per_mile.0 <= 0 {
            return bad("provider cost per mile must be positive");
        }
        Ok(())
    }

    pub fn to_config(&self) -> TariffConfig {
        TariffConfig {
            base_fare_usd: self.base_fare.dollars(),
            per_mile_usd: self.per_mile.dollars(),
            change_fee_usd: self.change_fee.dollars(),
            discount_factor: self.discount_factor.as_f64(),
            detour_factor: self.detour_factor.as_f64(),
            provider_cost_per_mile_usd: self.provider_cost_per_mile.dollars(),
        }
    }

    /// Base fare plus the per-mile charge for `distance`.
    pub fn distance_fare(&self, distance: Distance) -> Money {
        self.base_fare + Money::per_mile(self.per_mile, distance)
    }
}

pub fn solitary_fare(t: &Tariff, net: &RoadNetwork, o: LocationId, d: LocationId) -> Result<Money, PricingError> {
    if o == d {
        return Err(PricingError::SameEndpoints(o));
    }
    Ok(t.distance_fare(net.distance(o, d)?))
}

pub fn pcp_fare(t: &Tariff, solitary: Money) -> Money {
    solitary.scale(t.discount_factor)
}

/// Stop order of a pooled pair. `i` is the customer assigned first, `j` the newcomer.
/// Cases 1 and 2 have `i` on board when `j` is assigned.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PoolCase {
    /// on board: PU j, DO i, DO j
    OnboardDropFirst,
    /// on board: PU j, DO j, DO i
    OnboardDropLast,
    /// PU i, PU j, DO i, DO j
    FirstInFirstOut,
    /// PU i, PU j, DO j, DO i
    FirstInLastOut,
    /// PU j, PU i, DO i, DO j
    NewcomerFirstDropFirst,
    /// PU j, PU i, DO j, DO i
    NewcomerFirstDropLast,
}

impl PoolCase {
    /// Case number 1 to 6.
    pub fn number(self) -> u8 {
        self as u8 + 1
    }
}

/// Everything the pooled fare depends on besides the two requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub case: PoolCase,
    /// Vehicle location when `j` is assigned.
    pub anchor: LocationId,
    pub pickup_i: Seconds,
    pub pickup_j: Seconds,
    pub dropoff_i: Seconds,
    pub dropoff_j: Seconds,
}

impl PoolGeometry {
    fn validate(&self, j: &Request) -> Result<(), PricingError> {
        use PoolCase::*;
        let g = self;
        let tr = j.request_time;
        let chain: Vec<Seconds> = match g.case {
            OnboardDropFirst => vec![g.pickup_i, tr, g.pickup_j, g.dropoff_i, g.dropoff_j],
            OnboardDropLast => vec![g.pickup_i, tr, g.pickup_j, g.dropoff_j, g.dropoff_i],
            FirstInFirstOut => vec![g.pickup_i, g.pickup_j, g.dropoff_i, g.dropoff_j],
            FirstInLastOut => vec![g.pickup_i, g.pickup_j, g.dropoff_j, g.dropoff_i],
            NewcomerFirstDropFirst => vec![g.pickup_j, g.pickup_i, g.dropoff_i, g.dropoff_j],
            NewcomerFirstDropLast => vec![g.pickup_j, g.pickup_i, g.dropoff_j, g.dropoff_i],
        };
        let ordered = chain.windows(2).all(|w| w[0] <= w[1]);
        let pickup_ahead = match g.case {
            OnboardDropFirst | OnboardDropLast => true,
            // j may be collected the moment it requests; i must still be waiting
            _ => tr < g.pickup_i && tr <= g.pickup_j,
        };
        if ordered && pickup_ahead {
            Ok(())
        } else {
            Err(PricingError::InvalidGeometry(format!(
                "case {} requires the stop times in order, got {chain:?} with request at {tr}",
                g.case.number()
            )))
        }
    }
}

/// Pooled fare of a pair: one base fare, the per-mile charge on the case's legs
/// and one change fee.
pub fn ccp_pooled_fare(
    t: &Tariff,
    net: &RoadNetwork,
    i: &Request,
    j: &Request,
    g: &PoolGeometry,
) -> Result<Money, PricingError> {
    g.validate(j)?;
    Ok(t.distance_fare(pooled_legs(net, i, j, g)?) + t.change_fee)
}

/// Total length of the legs a pooled fare charges for.
pub fn pooled_legs(net: &RoadNetwork, i: &Request, j: &Request, g: &PoolGeometry) -> Result<Distance, NetError> {
    use PoolCase::*;
    let (oi, di, oj, dj, l) = (i.origin, i.destination, j.origin, j.destination, g.anchor);
    let seq = match g.case {
        OnboardDropFirst => vec![oi, l, oj, di, dj],
        OnboardDropLast => vec![oi, l, oj, dj, di],
        FirstInFirstOut => vec![oi, oj, di, dj],
        FirstInLastOut => vec![oi, oj, dj, di],
        NewcomerFirstDropFirst => vec![oj, oi, di, dj],
        NewcomerFirstDropLast => vec![oj, oi, dj, di],
    };
    seq.windows(2).map(|w| net.distance(w[0], w[1])).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostQuote {
    pub fare: Money,
    pub dropoff_time: Seconds,
    pub total_cost: Money,
}

impl CostQuote {
    pub fn new(fare: Money, r: &Request, dropoff: Seconds) -> Self {
        CostQuote {
            fare,
            dropoff_time: dropoff,
            total_cost: total_cost(fare, r, dropoff),
        }
    }
}

/// Fare plus value of time over wait and ride.
pub fn total_cost(fare: Money, r: &Request, dropoff: Seconds) -> Money {
    fare + r.time_cost(dropoff)
}

pub fn provider_profit(fares_collected: Money, fleet_distance: Distance, t: &Tariff) -> Money {
    fares_collected - Money::per_mile(t.provider_cost_per_mile, fleet_distance)
}

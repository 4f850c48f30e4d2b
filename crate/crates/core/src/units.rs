//! Fixed-point quantities used throughout the simulator.
//!
//! Money is kept in mills (tenths of a cent), distances in micro-miles and
//! unitless factors in parts per million, so fare arithmetic and the pooling
//! comparisons are exact integer operations. Conversions from floating point
//! happen only at ingestion.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Simulation time in integer seconds.
pub type Seconds = i64;

pub const MILLS_PER_DOLLAR: i64 = 1_000;
pub const MICROMILES_PER_MILE: i64 = 1_000_000;
pub const PPM: i64 = 1_000_000;

/// Integer division rounded half to even.
pub fn div_round_half_even(num: i128, den: i128) -> i128 {
    assert!(den != 0, "division by zero");
    let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => {
            if q % 2 == 0 {
                q
            } else {
                q + 1
            }
        }
    }
}

/// Round a float half to even at four decimals, the precision of every CSV output.
pub fn round4(x: f64) -> f64 {
    (x * 1e4).round_ties_even() / 1e4
}

pub fn fmt4(x: f64) -> String {
    let r = round4(x);
    // avoid "-0.0000"
    if r == 0.0 {
        "0.0000".to_string()
    } else {
        format!("{r:.4}")
    }
}

/// Dollars in integer mills.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_mills(mills: i64) -> Self {
        Money(mills)
    }

    pub fn from_dollars(dollars: f64) -> Self {
        Money((dollars * MILLS_PER_DOLLAR as f64).round_ties_even() as i64)
    }

    pub fn mills(self) -> i64 {
        self.0
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / MILLS_PER_DOLLAR as f64
    }

    /// Rate per mile times a distance, rounded half-even to the mill.
    pub fn per_mile(rate: Money, distance: Distance) -> Money {
        let v = div_round_half_even(
            rate.0 as i128 * distance.0 as i128,
            MICROMILES_PER_MILE as i128,
        );
        Money(v as i64)
    }

    /// `self` scaled by a ppm factor, rounded half-even.
    pub fn scale(self, factor: Ppm) -> Money {
        Money(div_round_half_even(self.0 as i128 * factor.0 as i128, PPM as i128) as i64)
    }

    pub fn to_csv(self) -> String {
        fmt4(self.dollars())
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}${}.{:03}", a / 1000, a % 1000)
    }
}

/// Length in integer micro-miles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Distance(pub i64);

impl Distance {
    pub const ZERO: Distance = Distance(0);

    pub fn from_miles(miles: f64) -> Self {
        Distance((miles * MICROMILES_PER_MILE as f64).round_ties_even() as i64)
    }

    pub fn miles(self) -> f64 {
        self.0 as f64 / MICROMILES_PER_MILE as f64
    }
}

impl Add for Distance {
    type Output = Distance;
    fn add(self, rhs: Distance) -> Distance {
        Distance(self.0 + rhs.0)
    }
}

impl AddAssign for Distance {
    fn add_assign(&mut self, rhs: Distance) {
        self.0 += rhs.0;
    }
}

impl Sub for Distance {
    type Output = Distance;
    fn sub(self, rhs: Distance) -> Distance {
        Distance(self.0 - rhs.0)
    }
}

impl Sum for Distance {
    fn sum<I: Iterator<Item = Distance>>(iter: I) -> Distance {
        Distance(iter.map(|d| d.0).sum())
    }
}

/// A unitless factor in parts per million (discount, detour, thresholds).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Ppm(pub i64);

impl Ppm {
    pub const ONE: Ppm = Ppm(PPM);

    pub fn from_f64(x: f64) -> Self {
        Ppm((x * PPM as f64).round_ties_even() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / PPM as f64
    }
}

/// A customer's value of time, held in micro-dollars per minute so the
/// five-value discretization is represented exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ValueOfTime(pub i64);

impl ValueOfTime {
    pub fn from_usd_per_min(x: f64) -> Self {
        ValueOfTime((x * 1e6).round_ties_even() as i64)
    }

    pub fn usd_per_min(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn usd_per_second(self) -> f64 {
        self.0 as f64 / 6e7
    }

    /// Cost of `secs` seconds, rounded half-even to the mill.
    pub fn cost_of(self, secs: Seconds) -> Money {
        // micro-dollars/min * s / 60 = micro-dollars; / 1000 = mills
        Money(div_round_half_even(self.0 as i128 * secs as i128, 60_000) as i64)
    }
}

//! Ex-post division of a run's fare among its customers.
//!
//! A run with customers `i` (solitary cost `c_i`, pooled time cost `a_i`) and
//! total fare `P` has surplus `V = Σ(c_i − a_i) − P`. Any split gives customer
//! `i` an absolute saving `c_i − a_i − p_i`, and the savings sum to `V`.
//! Everything here is exact: money in mills, fares as rationals of mills.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{CustomerId, VehicleId};
use crate::units::{Money, Ppm, PPM};

pub type Exact = Ratio<i128>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostShareError {
    #[error("run {run}: pooled costs exceed the solitary baselines by {deficit}")]
    InfeasibleRun { run: u64, deficit: Money },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("run has {0} customers; the exhaustive oracle handles at most 4")]
    TooLarge(usize),
    #[error("run {0} has no customers")]
    EmptyRun(u64),
    #[error("customer {0}: solitary cost must be positive")]
    NonPositiveBaseline(CustomerId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CustomerShare {
    pub customer: CustomerId,
    /// Frozen solitary total cost.
    pub solitary_cost: Money,
    /// Value of time over wait and pooled ride.
    pub pooled_time_cost: Money,
}

/// A pooling inside a run whose surplus is shared by its two participants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurplusEvent {
    pub first: CustomerId,
    pub second: CustomerId,
    pub surplus: Money,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunAccount {
    pub run_id: u64,
    pub vehicle: VehicleId,
    pub customers: Vec<CustomerShare>,
    pub run_fare: Money,
    pub events: Vec<SurplusEvent>,
}

impl RunAccount {
    pub fn surplus(&self) -> Money {
        self.customers
            .iter()
            .map(|c| c.solitary_cost - c.pooled_time_cost)
            .sum::<Money>()
            - self.run_fare
    }

    fn check(&self) -> Result<Money, CostShareError> {
        if self.customers.is_empty() {
            return Err(CostShareError::EmptyRun(self.run_id));
        }
        if let Some(c) = self.customers.iter().find(|c| c.solitary_cost.0 <= 0) {
            return Err(CostShareError::NonPositiveBaseline(c.customer));
        }
        let v = self.surplus();
        if v.0 < 0 {
            return Err(CostShareError::InfeasibleRun {
                run: self.run_id,
                deficit: -v,
            });
        }
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CustomerSplit {
    pub customer: CustomerId,
    /// Fare in mills.
    pub fare: Exact,
    pub relative_saving: Exact,
}

impl CustomerSplit {
    pub fn fare_dollars(&self) -> f64 {
        ratio_f64(&self.fare) / 1000.0
    }

    pub fn relative_saving_f64(&self) -> f64 {
        ratio_f64(&self.relative_saving)
    }
}

pub fn ratio_f64(r: &Exact) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitResult {
    pub per_customer: Vec<CustomerSplit>,
    /// Customers reaching each threshold, when thresholds were given.
    pub counts: Vec<usize>,
}

impl SplitResult {
    pub fn total_fare(&self) -> Exact {
        self.per_customer.iter().map(|c| c.fare).sum()
    }

    /// Fares rounded to whole mills by largest remainder, preserving the total.
    pub fn rounded_fares(&self) -> Vec<(CustomerId, Money)> {
        round_to_mills(&self.per_customer.iter().map(|c| (c.customer, c.fare)).collect::<Vec<_>>())
    }
}

/// Largest-remainder rounding; ties go to the lower customer id.
pub fn round_to_mills(fares: &[(CustomerId, Exact)]) -> Vec<(CustomerId, Money)> {
    let total: Exact = fares.iter().map(|f| f.1).sum();
    assert!(total.is_integer(), "run fare must be whole mills");
    let mut floors: Vec<(CustomerId, i128, Exact)> = fares
        .iter()
        .map(|&(c, f)| {
            let fl = f.floor();
            (c, fl.to_integer(), f - fl)
        })
        .collect();
    let short = total.to_integer() - floors.iter().map(|f| f.1).sum::<i128>();
    let mut order: Vec<usize> = (0..floors.len()).collect();
    order.sort_by(|&a, &b| floors[b].2.cmp(&floors[a].2).then(floors[a].0.cmp(&floors[b].0)));
    for &ix in order.iter().take(short as usize) {
        floors[ix].1 += 1;
    }
    floors.into_iter().map(|(c, m, _)| (c, Money(m as i64))).collect()
}

fn split_from_savings(acct: &RunAccount, savings: &[Exact], thresholds: &[Ppm]) -> SplitResult {
    let per_customer: Vec<CustomerSplit> = acct
        .customers
        .iter()
        .zip(savings)
        .map(|(c, &s)| {
            let cs = Exact::from_integer(c.solitary_cost.0 as i128);
            CustomerSplit {
                customer: c.customer,
                fare: cs - Exact::from_integer(c.pooled_time_cost.0 as i128) - s,
                relative_saving: s / cs,
            }
        })
        .collect();
    let counts = thresholds
        .iter()
        .map(|t| {
            let sigma = Exact::new(t.0 as i128, PPM as i128);
            per_customer.iter().filter(|c| c.relative_saving >= sigma).count()
        })
        .collect();
    SplitResult { per_customer, counts }
}

/// Equal division of each pooling's surplus between its two participants.
///
/// Two-customer runs split `V` in halves. Longer runs use the recorded events
/// when their surpluses add up to `V`, and an equal division of `V` otherwise.
pub fn shapley_split(acct: &RunAccount) -> Result<SplitResult, CostShareError> {
    let v = acct.check()?;
    let n = acct.customers.len();
    let pos = |c: CustomerId| acct.customers.iter().position(|x| x.customer == c);
    let events_total: Money = acct.events.iter().map(|e| e.surplus).sum();
    let events_usable = n > 2
        && events_total == v
        && acct.events.iter().all(|e| pos(e.first).is_some() && pos(e.second).is_some());
    let mut savings = vec![Exact::from_integer(0); n];
    if events_usable {
        for e in &acct.events {
            let half = Exact::new(e.surplus.0 as i128, 2);
            savings[pos(e.first).unwrap()] += half;
            savings[pos(e.second).unwrap()] += half;
        }
    } else {
        let share = Exact::new(v.0 as i128, n as i128);
        savings.iter_mut().for_each(|s| *s = share);
    }
    Ok(split_from_savings(acct, &savings, &[]))
}

fn check_thresholds(thresholds: &[Ppm]) -> Result<(), CostShareError> {
    if thresholds.is_empty() {
        return Err(CostShareError::InvalidThresholds("at least one threshold is required".into()));
    }
    if let Some(t) = thresholds.iter().find(|t| t.0 <= 0 || t.0 >= PPM) {
        return Err(CostShareError::InvalidThresholds(format!(
            "{} lies outside (0, 1)",
            t.as_f64()
        )));
    }
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CostShareError::InvalidThresholds("thresholds must be strictly increasing".into()));
    }
    Ok(())
}

/// Lexicographic goal programming: maximize the number of customers saving at
/// least `thresholds[0]`, then at least `thresholds[1]` without losing any of the
/// former, and so on.
///
/// An optimal assignment always gives the higher levels to the customers with
/// the smallest solitary cost (ties by id), so each level is the largest prefix
/// of that order the remaining budget affords. Leftover surplus goes to the
/// customers reaching the first level in proportion to their solitary cost, or
/// to everybody if nobody reaches it.
pub fn goalprog_split(acct: &RunAccount, thresholds: &[Ppm]) -> Result<SplitResult, CostShareError> {
    check_thresholds(thresholds)?;
    let v = acct.check()?;
    let n = acct.customers.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| (acct.customers[i].solitary_cost, acct.customers[i].customer));
    let cs: Vec<i128> = order.iter().map(|&i| acct.customers[i].solitary_cost.0 as i128).collect();
    let mut prefix = vec![0i128; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + cs[i];
    }
    // budget and cost in mills * ppm
    let budget = v.0 as i128 * PPM as i128;
    let mut spent = 0i128;
    let mut prev_sigma = 0i128;
    let mut prev_count = n;
    let mut level = vec![0usize; n];
    for (k, t) in thresholds.iter().enumerate() {
        let step = t.0 as i128 - prev_sigma;
        let count = (0..=prev_count)
            .rev()
            .find(|&m| spent + step * prefix[m] <= budget)
            .unwrap_or(0);
        spent += step * prefix[count];
        for lv in level.iter_mut().take(count) {
            *lv = k + 1;
        }
        prev_sigma = t.0 as i128;
        prev_count = count;
    }
    let slack = budget - spent;
    let selected: Vec<usize> = (0..n).filter(|&i| level[i] > 0).collect();
    let pool: Vec<usize> = if selected.is_empty() { (0..n).collect() } else { selected };
    let pool_cs: i128 = pool.iter().map(|&i| cs[i]).sum();
    let mut savings = vec![Exact::from_integer(0); n];
    for (sorted_ix, &orig) in order.iter().enumerate() {
        let sigma = if level[sorted_ix] == 0 {
            0
        } else {
            thresholds[level[sorted_ix] - 1].0 as i128
        };
        let mut s = Exact::new(sigma * cs[sorted_ix], PPM as i128);
        if pool.contains(&sorted_ix) {
            s += Exact::new(slack * cs[sorted_ix], PPM as i128 * pool_cs);
        }
        savings[orig] = s;
    }
    Ok(split_from_savings(acct, &savings, thresholds))
}

/// Exhaustive search over saving levels for runs of up to four customers.
pub fn oracle_split(acct: &RunAccount, thresholds: &[Ppm]) -> Result<Vec<usize>, CostShareError> {
    check_thresholds(thresholds)?;
    let n = acct.customers.len();
    if n > 4 {
        return Err(CostShareError::TooLarge(n));
    }
    let v = acct.check()?;
    let m = thresholds.len();
    let budget = v.0 as i128 * PPM as i128;
    let sigma = |l: usize| if l == 0 { 0 } else { thresholds[l - 1].0 as i128 };
    let total = (m + 1).pow(n as u32);
    let mut best: Option<Vec<usize>> = None;
    for code in 0..total {
        let mut rest = code;
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            levels.push(rest % (m + 1));
            rest /= m + 1;
        }
        let cost: i128 = levels
            .iter()
            .zip(&acct.customers)
            .map(|(&l, c)| sigma(l) * c.solitary_cost.0 as i128)
            .sum();
        if cost > budget {
            continue;
        }
        let counts: Vec<usize> = (1..=m).map(|k| levels.iter().filter(|&&l| l >= k).count()).collect();
        if best.as_ref().is_none_or(|b| counts > *b) {
            best = Some(counts);
        }
    }
    Ok(best.expect("the all-zero assignment is feasible"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acct(cs: &[i64], a: &[i64], fare: i64) -> RunAccount {
        RunAccount {
            run_id: 0,
            vehicle: VehicleId(0),
            customers: cs
                .iter()
                .zip(a)
                .enumerate()
                .map(|(i, (&c, &a))| CustomerShare {
                    customer: CustomerId(i as u32),
                    solitary_cost: Money::from_dollars(c as f64),
                    pooled_time_cost: Money::from_dollars(a as f64),
                })
                .collect(),
            run_fare: Money::from_dollars(fare as f64),
            events: Vec::new(),
        }
    }

    fn pct(xs: &[f64]) -> Vec<Ppm> {
        xs.iter().map(|&x| Ppm::from_f64(x)).collect()
    }

    fn mills(x: i64) -> Exact {
        Exact::from_integer(x as i128 * 1000)
    }

    #[test]
    fn shapley_symmetric_pair() {
        let s = shapley_split(&acct(&[10, 10], &[1, 1], 14)).unwrap();
        assert_eq!(s.per_customer[0].fare, mills(7));
        assert_eq!(s.per_customer[1].fare, mills(7));
        assert_eq!(s.per_customer[0].relative_saving, Exact::new(1, 5));
    }

    #[test]
    fn shapley_zero_surplus() {
        let s = shapley_split(&acct(&[10, 10], &[1, 1], 18)).unwrap();
        assert_eq!(s.per_customer[0].fare, mills(9));
        assert_eq!(s.per_customer[1].relative_saving, Exact::from_integer(0));
    }

    #[test]
    fn shapley_asymmetric_pair() {
        let s = shapley_split(&acct(&[20, 10], &[2, 1], 23)).unwrap();
        assert_eq!(s.per_customer[0].fare, mills(16));
        assert_eq!(s.per_customer[1].fare, mills(7));
        assert_eq!(s.total_fare(), mills(23));
    }

    #[test]
    fn shapley_rejects_infeasible_run() {
        assert!(matches!(
            shapley_split(&acct(&[10, 10], &[1, 1], 19)),
            Err(CostShareError::InfeasibleRun { .. })
        ));
    }

    #[test]
    fn shapley_chained_run_uses_events() {
        let mut a = acct(&[10, 10, 20], &[1, 1, 2], 30);
        // V = 36 - 30 = 6, split into events of 4 and 2
        a.events = vec![
            SurplusEvent { first: CustomerId(0), second: CustomerId(1), surplus: Money(4000) },
            SurplusEvent { first: CustomerId(1), second: CustomerId(2), surplus: Money(2000) },
        ];
        let s = shapley_split(&a).unwrap();
        assert_eq!(s.per_customer[0].fare, mills(7));
        assert_eq!(s.per_customer[1].fare, mills(6));
        assert_eq!(s.per_customer[2].fare, mills(17));
        assert_eq!(s.total_fare(), mills(30));
    }

    #[test]
    fn goalprog_all_reach_top_level() {
        let a = acct(&[10, 10], &[1, 1], 14);
        let s = goalprog_split(&a, &pct(&[0.05, 0.10, 0.15, 0.20])).unwrap();
        assert_eq!(s.counts, vec![2, 2, 2, 2]);
        assert_eq!(s.total_fare(), mills(14));
    }

    #[test]
    fn goalprog_budget_for_one_saver() {
        let a = acct(&[10, 10], &[1, 1], 17);
        let s = goalprog_split(&a, &pct(&[0.10])).unwrap();
        assert_eq!(s.counts, vec![1]);
        assert!(s.per_customer[0].relative_saving >= Exact::new(1, 10));
        assert_eq!(oracle_split(&a, &pct(&[0.10])).unwrap(), vec![1]);
    }

    #[test]
    fn goalprog_three_customers() {
        let a = acct(&[10, 10, 20], &[1, 1, 2], 30);
        assert_eq!(goalprog_split(&a, &pct(&[0.05])).unwrap().counts, vec![3]);
        assert_eq!(oracle_split(&a, &pct(&[0.05])).unwrap(), vec![3]);
    }

    #[test]
    fn thresholds_are_validated() {
        let a = acct(&[10, 10], &[1, 1], 14);
        assert!(matches!(
            goalprog_split(&a, &pct(&[0.10, 0.05])),
            Err(CostShareError::InvalidThresholds(_))
        ));
        assert!(matches!(goalprog_split(&a, &pct(&[1.0])), Err(CostShareError::InvalidThresholds(_))));
    }

    #[test]
    fn oracle_size_limit() {
        let a = acct(&[10, 10, 10, 10, 10], &[1, 1, 1, 1, 1], 40);
        assert_eq!(oracle_split(&a, &pct(&[0.1])), Err(CostShareError::TooLarge(5)));
    }

    #[test]
    fn rounding_keeps_total_and_favours_lower_id() {
        let fares = vec![
            (CustomerId(0), Exact::new(10_001, 2)),
            (CustomerId(1), Exact::new(9_999, 2)),
        ];
        let r = round_to_mills(&fares);
        assert_eq!(r, vec![(CustomerId(0), Money(5001)), (CustomerId(1), Money(4999))]);
        let thirds = vec![
            (CustomerId(0), Exact::new(10, 3)),
            (CustomerId(1), Exact::new(10, 3)),
            (CustomerId(2), Exact::new(10, 3)),
        ];
        let r = round_to_mills(&thirds);
        assert_eq!(r.iter().map(|x| x.1 .0).collect::<Vec<_>>(), vec![4, 3, 3]);
    }
}

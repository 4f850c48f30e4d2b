//! Scenario grids, per-cell metrics against paired solitary runs, savings
//! brackets and Pareto comparison of mechanism summaries.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::CustomerId;
use crate::mechanisms::Mechanism;
use crate::netgraph::RoadNetwork;
use crate::pricing::Tariff;
use crate::simengine::{materialize, run_sim, SimConfig, SimError, SimResult, SplitScheme, TripSpec};
use crate::units::{Money, Ppm, Seconds, ValueOfTime};

pub const BRACKET_THRESHOLDS: [f64; 5] = [0.0, 0.05, 0.10, 0.15, 0.20];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    ConfigError(String),
    #[error("summaries cover different MAR sets: {0}")]
    MismatchedGrids(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioGrid {
    pub mechanisms: Vec<Mechanism>,
    pub max_waits: Vec<Seconds>,
    pub mars: Vec<f64>,
    pub fleet_sizes: Vec<usize>,
    /// CCP only.
    pub change_fees: Vec<Money>,
    /// PCP only.
    pub discount_factors: Vec<Ppm>,
    /// PCP only.
    pub detour_factors: Vec<Ppm>,
    pub seeds: Vec<u64>,
    pub value_of_time_set: Vec<ValueOfTime>,
    pub split: SplitScheme,
    /// Base fare, per-mile rate and provider cost shared by every cell.
    pub tariff: Tariff,
    pub horizon: Seconds,
}

impl Default for ScenarioGrid {
    fn default() -> Self {
        let t = Tariff::default();
        let d = SimConfig::default();
        ScenarioGrid {
            mechanisms: vec![Mechanism::Sro, Mechanism::Pcp, Mechanism::Ccp],
            max_waits: vec![240],
            mars: vec![0.0, 0.5, 1.0],
            fleet_sizes: vec![30],
            change_fees: vec![t.change_fee],
            discount_factors: vec![t.discount_factor],
            detour_factors: vec![t.detour_factor],
            seeds: vec![1],
            value_of_time_set: d.value_of_time_set,
            split: SplitScheme::Shapley,
            tariff: t,
            horizon: d.horizon,
        }
    }
}

/// One mechanism configuration at one MAR and seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mechanism: Mechanism,
    pub max_wait: Seconds,
    pub fleet_size: usize,
    pub change_fee: Option<Money>,
    pub discount_factor: Option<Ppm>,
    pub detour_factor: Option<Ppm>,
    pub mar: f64,
    pub seed: u64,
}

impl Cell {
    /// Mechanism and its parameters, without MAR and seed.
    pub fn label(&self) -> String {
        let mut s = format!("{} w={} n={}", self.mechanism, self.max_wait, self.fleet_size);
        if let Some(d) = self.discount_factor {
            s.push_str(&format!(" delta={:.2}", d.as_f64()));
        }
        if let Some(d) = self.detour_factor {
            s.push_str(&format!(" Delta={:.2}", d.as_f64()));
        }
        if let Some(p) = self.change_fee {
            s.push_str(&format!(" pc={:.2}", p.dollars()));
        }
        s
    }

    fn config(&self, grid: &ScenarioGrid) -> SimConfig {
        let mut tariff = grid.tariff;
        if let Some(p) = self.change_fee {
            tariff.change_fee = p;
        }
        if let Some(d) = self.discount_factor {
            tariff.discount_factor = d;
        }
        if let Some(d) = self.detour_factor {
            tariff.detour_factor = d;
        }
        SimConfig {
            mechanism: self.mechanism,
            tariff,
            fleet_size: self.fleet_size,
            max_wait_override: Some(self.max_wait),
            mar: self.mar,
            rng_seed: self.seed,
            horizon: grid.horizon,
            value_of_time_set: grid.value_of_time_set.clone(),
            split: grid.split.clone(),
            initial_positions: None,
        }
    }
}

impl ScenarioGrid {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::ConfigError(m.into()));
        if self.mechanisms.is_empty() {
            return bad("no mechanisms");
        }
        if self.max_waits.is_empty() || self.mars.is_empty() || self.fleet_sizes.is_empty() || self.seeds.is_empty() {
            return bad("max waits, MARs, fleet sizes and seeds must be non-empty");
        }
        if self.mechanisms.contains(&Mechanism::Pcp) && (self.discount_factors.is_empty() || self.detour_factors.is_empty()) {
            return bad("PCP needs discount and detour factors");
        }
        if self.mechanisms.contains(&Mechanism::Ccp) && self.change_fees.is_empty() {
            return bad("CCP needs change fees");
        }
        if let Some(m) = self.mars.iter().find(|m| !(0.0..=1.0).contains(*m)) {
            return Err(HarnessError::ConfigError(format!("MAR {m} outside [0, 1]")));
        }
        if self.mars.windows(2).any(|w| w[0] >= w[1]) {
            return bad("MAR values must be strictly increasing");
        }
        if self.value_of_time_set.is_empty() {
            return bad("value-of-time set is empty");
        }
        self.tariff
            .validate()
            .map_err(|e| HarnessError::ConfigError(e.to_string()))
    }

    /// Cells in a fixed order: mechanism, wait, fleet, parameters, MAR, seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &mechanism in &self.mechanisms {
            let params: Vec<(Option<Money>, Option<Ppm>, Option<Ppm>)> = match mechanism {
                Mechanism::Sro => vec![(None, None, None)],
                Mechanism::Pcp => self
                    .discount_factors
                    .iter()
                    .flat_map(|&d| self.detour_factors.iter().map(move |&dd| (None, Some(d), Some(dd))))
                    .collect(),
                Mechanism::Ccp => self.change_fees.iter().map(|&p| (Some(p), None, None)).collect(),
            };
            for &max_wait in &self.max_waits {
                for &fleet_size in &self.fleet_sizes {
                    for &(change_fee, discount_factor, detour_factor) in &params {
                        for &mar in &self.mars {
                            for &seed in &self.seeds {
                                out.push(Cell {
                                    mechanism,
                                    max_wait,
                                    fleet_size,
                                    change_fee,
                                    discount_factor,
                                    detour_factor,
                                    mar,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Metrics of one cell against its paired solitary run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    pub requests: usize,
    pub unserved_pct: f64,
    /// Pooled customers among poolable ones; undefined without poolable customers.
    pub pooled_share_pct: Option<f64>,
    pub distance_mi: f64,
    pub distance_saving_pct: f64,
    pub profit_usd: f64,
    pub profit_delta_usd: f64,
    pub profit_delta_pct: Option<f64>,
    /// Mean relative cost reduction against the paired solitary run, over
    /// poolable customers served in both.
    pub cost_reduction_pct: Option<f64>,
    /// Mean total cost over the same population.
    pub mean_cost_poolable_usd: Option<f64>,
    pub brackets: [Option<f64>; 5],
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    pub result: SimResult,
    pub metrics: CellMetrics,
}

/// Share (percent) of served poolable customers whose saving against their
/// solitary baseline reaches each threshold; `None` without poolable customers.
pub fn savings_brackets(result: &SimResult, thresholds: &[f64]) -> Vec<Option<f64>> {
    let pool: Vec<_> = result.per_customer.iter().filter(|c| c.poolable && c.served).collect();
    thresholds
        .iter()
        .map(|&th| {
            if pool.is_empty() {
                return None;
            }
            let hits = pool
                .iter()
                .filter(|c| {
                    let base = c.baseline_solitary_cost.mills() as f64;
                    let saving = (c.baseline_solitary_cost - c.total_cost).mills() as f64;
                    saving >= th * base - 1e-9
                })
                .count();
            Some(100.0 * hits as f64 / pool.len() as f64)
        })
        .collect()
}

fn pct(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| 100.0 * num / den)
}

pub fn cell_metrics(result: &SimResult, sro: &SimResult) -> CellMetrics {
    let requests = result.per_customer.len();
    let pooled_of_poolable = result.per_customer.iter().filter(|c| c.poolable && c.pooled).count();
    let sro_costs: BTreeMap<CustomerId, Money> = sro
        .per_customer
        .iter()
        .filter(|c| c.served)
        .map(|c| (c.customer, c.total_cost))
        .collect();
    let mut reductions = Vec::new();
    let mut costs = Vec::new();
    for c in result.per_customer.iter().filter(|c| c.poolable && c.served) {
        if let Some(&base) = sro_costs.get(&c.customer) {
            if base.mills() > 0 {
                reductions.push((base - c.total_cost).mills() as f64 / base.mills() as f64 * 100.0);
            }
            costs.push(c.total_cost.dollars());
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let d = result.fleet_distance.miles();
    let d0 = sro.fleet_distance.miles();
    let brackets = savings_brackets(result, &BRACKET_THRESHOLDS);
    CellMetrics {
        requests,
        unserved_pct: result.unserved_pct(),
        pooled_share_pct: pct(pooled_of_poolable as f64, result.poolable_customers as f64),
        distance_mi: d,
        distance_saving_pct: pct(d0 - d, d0).unwrap_or(0.0),
        profit_usd: result.profit.dollars(),
        profit_delta_usd: (result.profit - sro.profit).dollars(),
        profit_delta_pct: pct((result.profit - sro.profit).dollars(), sro.profit.dollars().abs()),
        cost_reduction_pct: mean(&reductions),
        mean_cost_poolable_usd: mean(&costs),
        brackets: [brackets[0], brackets[1], brackets[2], brackets[3], brackets[4]],
    }
}

/// Seed-averaged metrics at one MAR.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarRow {
    pub mar: f64,
    pub seeds: usize,
    pub unserved_pct: f64,
    pub pooled_share_pct: Option<f64>,
    pub distance_saving_pct: f64,
    pub profit_usd: f64,
    pub profit_delta_usd: f64,
    pub profit_delta_pct: Option<f64>,
    pub cost_reduction_pct: Option<f64>,
    pub mean_cost_poolable_usd: Option<f64>,
    pub brackets: [Option<f64>; 5],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismSummary {
    pub label: String,
    pub mechanism: Mechanism,
    pub rows: Vec<MarRow>,
}

impl MechanismSummary {
    pub fn row(&self, mar: f64) -> Option<&MarRow> {
        self.rows.iter().find(|r| r.mar == mar)
    }
}

fn mean_opt(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn aggregate(label: String, mechanism: Mechanism, cells: &[&CellResult]) -> MechanismSummary {
    let mut by_mar: BTreeMap<u64, Vec<&CellMetrics>> = BTreeMap::new();
    for c in cells {
        by_mar.entry(c.cell.mar.to_bits()).or_default().push(&c.metrics);
    }
    let mut rows: Vec<MarRow> = by_mar
        .into_iter()
        .map(|(bits, ms)| {
            let mut brackets = [None; 5];
            for (i, b) in brackets.iter_mut().enumerate() {
                *b = mean_opt(ms.iter().map(|m| m.brackets[i]));
            }
            MarRow {
                mar: f64::from_bits(bits),
                seeds: ms.len(),
                unserved_pct: mean(ms.iter().map(|m| m.unserved_pct)),
                pooled_share_pct: mean_opt(ms.iter().map(|m| m.pooled_share_pct)),
                distance_saving_pct: mean(ms.iter().map(|m| m.distance_saving_pct)),
                profit_usd: mean(ms.iter().map(|m| m.profit_usd)),
                profit_delta_usd: mean(ms.iter().map(|m| m.profit_delta_usd)),
                profit_delta_pct: mean_opt(ms.iter().map(|m| m.profit_delta_pct)),
                cost_reduction_pct: mean_opt(ms.iter().map(|m| m.cost_reduction_pct)),
                mean_cost_poolable_usd: mean_opt(ms.iter().map(|m| m.mean_cost_poolable_usd)),
                brackets,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.mar.total_cmp(&b.mar));
    MechanismSummary { label, mechanism, rows }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridOutput {
    pub cells: Vec<CellResult>,
    /// One per mechanism configuration, in grid order.
    pub summaries: Vec<MechanismSummary>,
}

type SroKey = (Seconds, usize, u64);

/// Run every cell and its paired solitary counterfactual; the counterfactuals
/// are shared by all cells with the same wait, fleet size and seed.
pub fn run_grid(grid: &ScenarioGrid, trips: &[TripSpec], net: &RoadNetwork) -> Result<GridOutput, HarnessError> {
    grid.validate()?;
    if trips.is_empty() {
        return Err(HarnessError::ConfigError("no trips".into()));
    }
    let cells = grid.cells();
    let mut keys: Vec<SroKey> = cells.iter().map(|c| (c.max_wait, c.fleet_size, c.seed)).collect();
    keys.sort();
    keys.dedup();
    let sro: Vec<(SroKey, SimResult)> = keys
        .par_iter()
        .map(|&(max_wait, fleet_size, seed)| {
            let cell = Cell {
                mechanism: Mechanism::Sro,
                max_wait,
                fleet_size,
                change_fee: None,
                discount_factor: None,
                detour_factor: None,
                mar: 0.0,
                seed,
            };
            let cfg = cell.config(grid);
            let reqs = materialize(&cfg, trips)?;
            Ok(((max_wait, fleet_size, seed), run_sim(&cfg, net, &reqs)?))
        })
        .collect::<Result<_, SimError>>()?;
    let sro: BTreeMap<SroKey, SimResult> = sro.into_iter().collect();

    let results: Vec<CellResult> = cells
        .into_par_iter()
        .map(|cell| {
            let cfg = cell.config(grid);
            let reqs = materialize(&cfg, trips)?;
            let result = run_sim(&cfg, net, &reqs)?;
            let base = &sro[&(cell.max_wait, cell.fleet_size, cell.seed)];
            let metrics = cell_metrics(&result, base);
            Ok(CellResult { cell, result, metrics })
        })
        .collect::<Result<_, SimError>>()?;

    let mut groups: Vec<(String, Mechanism, Vec<&CellResult>)> = Vec::new();
    for c in &results {
        let label = c.cell.label();
        match groups.iter_mut().find(|g| g.0 == label) {
            Some(g) => g.2.push(c),
            None => groups.push((label, c.cell.mechanism, vec![c])),
        }
    }
    let summaries = groups
        .into_iter()
        .map(|(label, m, cs)| aggregate(label, m, &cs))
        .collect();
    Ok(GridOutput { cells: results, summaries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Dominance {
    Dominates,
    /// Holds on the MAR range from the first to the second value.
    Partially(f64, f64),
    None,
}

impl fmt::Display for Dominance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dominance::Dominates => write!(f, "dominates"),
            Dominance::Partially(a, b) => write!(f, "partially({:.0}-{:.0})", a * 100.0, b * 100.0),
            Dominance::None => write!(f, "none"),
        }
    }
}

/// Whether `a` is at least as profitable with customer costs at most as high
/// as `b`, at every MAR or on the longest contiguous MAR range.
pub fn pareto_dominance(a: &MechanismSummary, b: &MechanismSummary) -> Result<Dominance, HarnessError> {
    let ma: Vec<f64> = a.rows.iter().map(|r| r.mar).collect();
    let mb: Vec<f64> = b.rows.iter().map(|r| r.mar).collect();
    if ma != mb {
        return Err(HarnessError::MismatchedGrids(format!("{ma:?} vs {mb:?}")));
    }
    let holds: Vec<bool> = a
        .rows
        .iter()
        .zip(&b.rows)
        .map(|(x, y)| {
            let cost_ok = match (x.mean_cost_poolable_usd, y.mean_cost_poolable_usd) {
                (Some(cx), Some(cy)) => cx <= cy,
                _ => true,
            };
            x.profit_usd >= y.profit_usd && cost_ok
        })
        .collect();
    if holds.iter().all(|&h| h) {
        return Ok(Dominance::Dominates);
    }
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < holds.len() {
        if holds[i] {
            let start = i;
            while i + 1 < holds.len() && holds[i + 1] {
                i += 1;
            }
            if best.is_none_or(|(s, e)| i - start > e - s) {
                best = Some((start, i));
            }
        }
        i += 1;
    }
    Ok(match best {
        Some((s, e)) => Dominance::Partially(ma[s], ma[e]),
        None => Dominance::None,
    })
}

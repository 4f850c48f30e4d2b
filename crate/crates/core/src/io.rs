//! CSV readers and writers. Column orders are fixed; floats are written
//! rounded half-even to four decimals and undefined metrics as `n/a`.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::Deserialize;
use thiserror::Error;

use crate::costshare::{CustomerShare, RunAccount, SurplusEvent};
use crate::domain::{CustomerId, VehicleId};
use crate::harness::{CellResult, MarRow, MechanismSummary};
use crate::mechanisms::Mechanism;
use crate::netgraph::LocationId;
use crate::simengine::{SimResult, SplitRow, TripSpec};
use crate::units::{fmt4, Money, Seconds, ValueOfTime};
use crate::verify::Verdict;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
}

/// A simulation result tagged with its grid cell.
#[derive(Clone, Copy, Debug)]
pub struct Tagged<'a> {
    pub cell: usize,
    pub mechanism: Mechanism,
    pub result: &'a SimResult,
}

pub fn tag_cells(cells: &[CellResult]) -> Vec<Tagged<'_>> {
    cells
        .iter()
        .enumerate()
        .map(|(i, c)| Tagged {
            cell: i,
            mechanism: c.cell.mechanism,
            result: &c.result,
        })
        .collect()
}

fn opt4(x: Option<f64>) -> String {
    x.map(fmt4).unwrap_or_else(|| "n/a".into())
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn money(x: Money) -> String {
    x.to_csv()
}

#[derive(Deserialize)]
struct TripRow {
    request_time_s: Seconds,
    origin_node: u32,
    dest_node: u32,
    value_of_time_usd_per_min: Option<f64>,
    max_wait_s: Option<Seconds>,
    poolable: Option<String>,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" => Some(true),
        "0" | "false" | "no" => Some(false),
        _ => None,
    }
}

/// Trips; blank optional fields are drawn from the seed at simulation time.
pub fn read_trips<R: Read>(r: R) -> Result<Vec<TripSpec>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<TripRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let poolable = match row.poolable.as_deref().map(str::trim) {
            None | Some("") => None,
            Some(s) => Some(parse_bool(s).ok_or_else(|| IoError::Parse {
                line,
                reason: format!("poolable must be true/false, got {s:?}"),
            })?),
        };
        out.push(TripSpec {
            request_time: row.request_time_s,
            origin: LocationId(row.origin_node),
            destination: LocationId(row.dest_node),
            value_of_time: row.value_of_time_usd_per_min.map(ValueOfTime::from_usd_per_min),
            max_wait: row.max_wait_s,
            poolable,
        });
    }
    Ok(out)
}

pub fn write_trips<W: Write>(w: W, trips: &[TripSpec]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "request_time_s",
        "origin_node",
        "dest_node",
        "value_of_time_usd_per_min",
        "max_wait_s",
        "poolable",
    ])?;
    for t in trips {
        wtr.write_record([
            t.request_time.to_string(),
            t.origin.to_string(),
            t.destination.to_string(),
            t.value_of_time.map(|v| fmt4(v.usd_per_min())).unwrap_or_default(),
            opt(t.max_wait),
            opt(t.poolable),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_decisions<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cell",
        "time_s",
        "customer",
        "mechanism",
        "decision",
        "vehicle",
        "partner",
        "fare_usd",
        "baseline_cost_usd",
        "guaranteed_cost_usd",
        "added_distance_mi",
    ])?;
    for t in items {
        for d in &t.result.decisions {
            wtr.write_record([
                t.cell.to_string(),
                d.time.to_string(),
                d.customer.to_string(),
                t.mechanism.to_string(),
                d.kind.to_string(),
                opt(d.vehicle),
                opt(d.partner),
                money(d.fare),
                money(d.baseline_cost),
                money(d.guaranteed_cost),
                fmt4(d.added_distance.miles()),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_customers<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cell",
        "customer",
        "request_time_s",
        "poolable",
        "served",
        "pooled",
        "vehicle",
        "fare_usd",
        "pickup_s",
        "dropoff_s",
        "total_cost_usd",
        "baseline_cost_usd",
        "baseline_dropoff_s",
    ])?;
    for t in items {
        for c in &t.result.per_customer {
            wtr.write_record([
                t.cell.to_string(),
                c.customer.to_string(),
                c.request_time.to_string(),
                c.poolable.to_string(),
                c.served.to_string(),
                c.pooled.to_string(),
                opt(c.vehicle),
                money(c.fare),
                opt(c.pickup),
                opt(c.dropoff),
                money(c.total_cost),
                money(c.baseline_solitary_cost),
                c.baseline_dropoff.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

const SPLIT_HEADER: [&str; 7] = [
    "cell",
    "run_id",
    "customer",
    "c_solitary_usd",
    "a_pooled_time_usd",
    "fare_usd",
    "relative_saving",
];

pub fn write_split_rows<W: Write>(w: W, rows: &[(usize, SplitRow)]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SPLIT_HEADER)?;
    for (cell, s) in rows {
        wtr.write_record([
            cell.to_string(),
            s.run_id.to_string(),
            s.customer.to_string(),
            money(s.solitary_cost),
            money(s.pooled_time_cost),
            money(s.fare),
            fmt4(s.relative_saving),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_splits<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let rows: Vec<(usize, SplitRow)> = items
        .iter()
        .flat_map(|t| t.result.splits.iter().map(move |s| (t.cell, s.clone())))
        .collect();
    write_split_rows(w, &rows)
}

pub fn write_runs<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["cell", "vehicle", "start_s", "end_s", "customers", "total_fare_usd"])?;
    for t in items {
        for r in &t.result.runs {
            let cs: Vec<String> = r.customers.iter().map(|c| c.to_string()).collect();
            wtr.write_record([
                t.cell.to_string(),
                r.vehicle.to_string(),
                r.start_time.to_string(),
                r.end_time.to_string(),
                cs.join(" "),
                money(r.total_fare),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_pool_events<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "cell",
        "time_s",
        "vehicle",
        "partner",
        "newcomer",
        "case",
        "pair_fare_usd",
        "surplus_usd",
    ])?;
    for t in items {
        for e in &t.result.pool_events {
            wtr.write_record([
                t.cell.to_string(),
                e.time.to_string(),
                e.vehicle.to_string(),
                e.partner.to_string(),
                e.newcomer.to_string(),
                e.case.number().to_string(),
                money(e.pair_fare),
                money(e.surplus),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

const ACCOUNT_HEADER: [&str; 10] = [
    "cell",
    "run_id",
    "vehicle",
    "run_fare_usd",
    "record",
    "customer",
    "c_solitary_usd",
    "a_pooled_time_usd",
    "partner",
    "surplus_usd",
];

/// Pooled runs as inputs to the ex-post split: one `customer` record per
/// rider and one `event` record per pooling (customer, partner, surplus).
pub fn write_run_accounts<W: Write>(w: W, items: &[(usize, &RunAccount)]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ACCOUNT_HEADER)?;
    for (cell, a) in items {
        let head = [cell.to_string(), a.run_id.to_string(), a.vehicle.to_string(), money(a.run_fare)];
        for c in &a.customers {
            let mut rec = head.to_vec();
            rec.extend([
                "customer".into(),
                c.customer.to_string(),
                money(c.solitary_cost),
                money(c.pooled_time_cost),
                String::new(),
                String::new(),
            ]);
            wtr.write_record(rec)?;
        }
        for e in &a.events {
            let mut rec = head.to_vec();
            rec.extend([
                "event".into(),
                e.first.to_string(),
                String::new(),
                String::new(),
                e.second.to_string(),
                money(e.surplus),
            ]);
            wtr.write_record(rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_sim_run_accounts<W: Write>(w: W, items: &[Tagged]) -> Result<(), IoError> {
    let rows: Vec<(usize, &RunAccount)> = items
        .iter()
        .flat_map(|t| t.result.run_accounts.iter().map(move |a| (t.cell, a)))
        .collect();
    write_run_accounts(w, &rows)
}

#[derive(Deserialize)]
struct AccountRow {
    cell: Option<usize>,
    run_id: u64,
    vehicle: u32,
    run_fare_usd: f64,
    record: String,
    customer: u32,
    c_solitary_usd: Option<f64>,
    a_pooled_time_usd: Option<f64>,
    partner: Option<u32>,
    surplus_usd: Option<f64>,
}

/// Run accounts keyed by (cell, run id); the cell column may be absent.
pub fn read_run_accounts<R: Read>(r: R) -> Result<Vec<(usize, RunAccount)>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut out: BTreeMap<(usize, u64), RunAccount> = BTreeMap::new();
    for (i, row) in rdr.deserialize::<AccountRow>().enumerate() {
        let row = row?;
        let line = i as u64 + 2;
        let missing = |what: &str| IoError::Parse {
            line,
            reason: format!("{} record without {what}", row.record),
        };
        let key = (row.cell.unwrap_or(0), row.run_id);
        let acct = out.entry(key).or_insert_with(|| RunAccount {
            run_id: row.run_id,
            vehicle: VehicleId(row.vehicle),
            customers: Vec::new(),
            run_fare: Money::from_dollars(row.run_fare_usd),
            events: Vec::new(),
        });
        match row.record.as_str() {
            "customer" => acct.customers.push(CustomerShare {
                customer: CustomerId(row.customer),
                solitary_cost: Money::from_dollars(row.c_solitary_usd.ok_or_else(|| missing("c_solitary_usd"))?),
                pooled_time_cost: Money::from_dollars(
                    row.a_pooled_time_usd.ok_or_else(|| missing("a_pooled_time_usd"))?,
                ),
            }),
            "event" => acct.events.push(SurplusEvent {
                first: CustomerId(row.customer),
                second: CustomerId(row.partner.ok_or_else(|| missing("partner"))?),
                surplus: Money::from_dollars(row.surplus_usd.ok_or_else(|| missing("surplus_usd"))?),
            }),
            other => {
                return Err(IoError::Parse {
                    line,
                    reason: format!("unknown record kind {other:?}"),
                })
            }
        }
    }
    Ok(out.into_iter().map(|((cell, _), a)| (cell, a)).collect())
}

const BRACKET_COLUMNS: [&str; 5] = ["bracket_0", "bracket_5", "bracket_10", "bracket_15", "bracket_20"];

pub fn write_cells<W: Write>(w: W, cells: &[CellResult]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec![
        "cell",
        "label",
        "mechanism",
        "max_wait_s",
        "fleet_size",
        "change_fee_usd",
        "discount_factor",
        "detour_factor",
        "mar",
        "seed",
        "requests",
        "unserved_pct",
        "pooled_share_pct",
        "distance_mi",
        "distance_saving_pct",
        "profit_usd",
        "profit_delta_usd",
        "profit_delta_pct",
        "cost_reduction_pct",
        "mean_cost_poolable_usd",
    ];
    header.extend(BRACKET_COLUMNS);
    wtr.write_record(&header)?;
    for (i, c) in cells.iter().enumerate() {
        let m = &c.metrics;
        let mut rec = vec![
            i.to_string(),
            c.cell.label(),
            c.cell.mechanism.to_string(),
            c.cell.max_wait.to_string(),
            c.cell.fleet_size.to_string(),
            c.cell.change_fee.map(money).unwrap_or_default(),
            c.cell.discount_factor.map(|d| fmt4(d.as_f64())).unwrap_or_default(),
            c.cell.detour_factor.map(|d| fmt4(d.as_f64())).unwrap_or_default(),
            fmt4(c.cell.mar),
            c.cell.seed.to_string(),
            m.requests.to_string(),
            fmt4(m.unserved_pct),
            opt4(m.pooled_share_pct),
            fmt4(m.distance_mi),
            fmt4(m.distance_saving_pct),
            fmt4(m.profit_usd),
            fmt4(m.profit_delta_usd),
            opt4(m.profit_delta_pct),
            opt4(m.cost_reduction_pct),
            opt4(m.mean_cost_poolable_usd),
        ];
        rec.extend(m.brackets.iter().map(|&b| opt4(b)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

const SUMMARY_HEADER: [&str; 17] = [
    "label",
    "mechanism",
    "mar",
    "seeds",
    "unserved_pct",
    "pooled_share_pct",
    "distance_saving_pct",
    "profit_usd",
    "profit_delta_usd",
    "profit_delta_pct",
    "cost_reduction_pct",
    "mean_cost_poolable_usd",
    "bracket_0",
    "bracket_5",
    "bracket_10",
    "bracket_15",
    "bracket_20",
];

pub fn write_summary<W: Write>(w: W, summaries: &[MechanismSummary]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for s in summaries {
        for r in &s.rows {
            let mut rec = vec![
                s.label.clone(),
                s.mechanism.to_string(),
                fmt4(r.mar),
                r.seeds.to_string(),
                fmt4(r.unserved_pct),
                opt4(r.pooled_share_pct),
                fmt4(r.distance_saving_pct),
                fmt4(r.profit_usd),
                fmt4(r.profit_delta_usd),
                opt4(r.profit_delta_pct),
                opt4(r.cost_reduction_pct),
                opt4(r.mean_cost_poolable_usd),
            ];
            rec.extend(r.brackets.iter().map(|&b| opt4(b)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_summary<R: Read>(r: R) -> Result<Vec<MechanismSummary>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SUMMARY_HEADER {
        return Err(IoError::Parse {
            line: 1,
            reason: "unexpected summary header".into(),
        });
    }
    let mut out: Vec<MechanismSummary> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let bad = |col: usize| IoError::Parse {
            line,
            reason: format!("bad value {:?} in column {}", &rec[col], SUMMARY_HEADER[col]),
        };
        let num = |col: usize| rec[col].parse::<f64>().map_err(|_| bad(col));
        let optn = |col: usize| -> Result<Option<f64>, IoError> {
            if &rec[col] == "n/a" {
                Ok(None)
            } else {
                num(col).map(Some)
            }
        };
        let mechanism: Mechanism = rec[1].parse().map_err(|_| bad(1))?;
        let row = MarRow {
            mar: num(2)?,
            seeds: rec[3].parse().map_err(|_| bad(3))?,
            unserved_pct: num(4)?,
            pooled_share_pct: optn(5)?,
            distance_saving_pct: num(6)?,
            profit_usd: num(7)?,
            profit_delta_usd: num(8)?,
            profit_delta_pct: optn(9)?,
            cost_reduction_pct: optn(10)?,
            mean_cost_poolable_usd: optn(11)?,
            brackets: [optn(12)?, optn(13)?, optn(14)?, optn(15)?, optn(16)?],
        };
        match out.iter_mut().find(|s| s.label == rec[0]) {
            Some(s) => s.rows.push(row),
            None => out.push(MechanismSummary {
                label: rec[0].to_string(),
                mechanism,
                rows: vec![row],
            }),
        }
    }
    Ok(out)
}

pub fn write_verdicts<W: Write>(w: W, verdicts: &[Verdict]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fixture", "check", "pass", "detail"])?;
    for v in verdicts {
        wtr.write_record([v.fixture.as_str(), v.check.as_str(), if v.pass { "true" } else { "false" }, v.detail.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_grid, ScenarioGrid};
    use crate::netgraph::make_grid;
    use crate::simengine::synthetic_trips;

    #[test]
    fn trips_round_trip_with_blanks() {
        let text = "request_time_s,origin_node,dest_node,value_of_time_usd_per_min,max_wait_s,poolable\n\
                    0,1,2,,,\n5,2,3,0.2,120,true\n";
        let trips = read_trips(text.as_bytes()).unwrap();
        assert_eq!(trips.len(), 2);
        assert_eq!(trips[0].value_of_time, None);
        assert_eq!(trips[1].poolable, Some(true));
        assert_eq!(trips[1].max_wait, Some(120));
        let mut buf = Vec::new();
        write_trips(&mut buf, &trips).unwrap();
        assert_eq!(read_trips(buf.as_slice()).unwrap(), trips);
    }

    #[test]
    fn bad_poolable_flag() {
        let text = "request_time_s,origin_node,dest_node,value_of_time_usd_per_min,max_wait_s,poolable\n0,1,2,,,maybe\n";
        assert!(matches!(read_trips(text.as_bytes()), Err(IoError::Parse { line: 2, .. })));
    }

    #[test]
    fn summary_and_accounts_round_trip() {
        let net = make_grid(5, 5, 0.2, 20.0).unwrap();
        let trips = synthetic_trips(&net, 60, 1800, 1);
        let grid = ScenarioGrid {
            mars: vec![0.0, 1.0],
            fleet_sizes: vec![6],
            ..ScenarioGrid::default()
        };
        let out = run_grid(&grid, &trips, &net).unwrap();
        let mut buf = Vec::new();
        write_summary(&mut buf, &out.summaries).unwrap();
        let back = read_summary(buf.as_slice()).unwrap();
        assert_eq!(back.len(), out.summaries.len());
        let mut again = Vec::new();
        write_summary(&mut again, &back).unwrap();
        assert_eq!(buf, again);

        let tagged = tag_cells(&out.cells);
        let mut acc = Vec::new();
        write_sim_run_accounts(&mut acc, &tagged).unwrap();
        let accounts = read_run_accounts(acc.as_slice()).unwrap();
        let original: Vec<&RunAccount> = out.cells.iter().flat_map(|c| &c.result.run_accounts).collect();
        assert_eq!(accounts.len(), original.len());
        for ((_, a), b) in accounts.iter().zip(original) {
            assert_eq!(a, b);
        }
    }
}

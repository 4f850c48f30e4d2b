//! Road network and memoized shortest paths.
//!
//! Paths minimize travel time; the distance reported for a pair is the length
//! of the time-optimal path whose node sequence is lexicographically smallest.
//! Every prefix of such a path is itself the lexicographically smallest
//! time-optimal path to its end node, which is what lets a vehicle reroute
//! from any node along its current leg without changing realized distance.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::units::{Distance, Seconds};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LocationId(pub u32);

impl fmt::Display for LocationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid arc {from}->{to}: {reason}")]
    InvalidArc {
        from: LocationId,
        to: LocationId,
        reason: String,
    },
    #[error("unknown location {0}")]
    UnknownLocation(LocationId),
    #[error("no path from {0} to {1}")]
    Unreachable(LocationId, LocationId),
    #[error("network file: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arc {
    pub from: LocationId,
    pub to: LocationId,
    pub length: Distance,
    pub travel_time: Seconds,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathResult {
    pub distance: Distance,
    pub duration: Seconds,
    pub node_sequence: Vec<LocationId>,
}

const UNREACHABLE: Seconds = Seconds::MAX;
const NO_HOP: u32 = u32::MAX;

/// All-pairs tables, indexed `[from * n + to]`.
#[derive(Clone, Debug)]
struct AllPairs {
    n: usize,
    time: Vec<Seconds>,
    dist: Vec<Distance>,
    next: Vec<u32>,
}

#[derive(Clone, Debug)]
pub struct RoadNetwork {
    ids: Vec<LocationId>,
    coords: Vec<(f64, f64)>,
    arcs: Vec<Arc>,
    // outgoing arcs per node index, parallel arcs reduced to the fastest (then shortest)
    out: Vec<Vec<(usize, Seconds, Distance)>>,
    paths: AllPairs,
}

impl RoadNetwork {
    /// Build a network from nodes (with coordinates) and arcs, precomputing
    /// all shortest paths.
    pub fn new(nodes: Vec<(LocationId, f64, f64)>, arcs: Vec<Arc>) -> Result<Self, NetError> {
        if nodes.is_empty() {
            return Err(NetError::InvalidParameter("network has no nodes".into()));
        }
        let mut nodes = nodes;
        nodes.sort_by_key(|n| n.0);
        for w in nodes.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(NetError::Parse(format!("duplicate node id {}", w[0].0)));
            }
        }
        let ids: Vec<LocationId> = nodes.iter().map(|n| n.0).collect();
        let coords = nodes.iter().map(|n| (n.1, n.2)).collect();
        let idx = |id: LocationId| ids.binary_search(&id).ok();

        let mut best: BTreeMap<(usize, usize), (Seconds, Distance)> = BTreeMap::new();
        for a in &arcs {
            let bad = |reason: &str| NetError::InvalidArc {
                from: a.from,
                to: a.to,
                reason: reason.to_string(),
            };
            let (Some(u), Some(v)) = (idx(a.from), idx(a.to)) else {
                return Err(bad("endpoint not in node set"));
            };
            if a.length.0 <= 0 {
                return Err(bad("length must be positive"));
            }
            if a.travel_time <= 0 {
                return Err(bad("travel time must be positive"));
            }
            if u == v {
                return Err(bad("self loop"));
            }
            let cand = (a.travel_time, a.length);
            best.entry((u, v))
                .and_modify(|cur| {
                    if cand < *cur {
                        *cur = cand
                    }
                })
                .or_insert(cand);
        }
        let mut out = vec![Vec::new(); ids.len()];
        for (&(u, v), &(t, d)) in &best {
            out[u].push((v, t, d));
        }
        let paths = all_pairs(&out);
        Ok(RoadNetwork {
            ids,
            coords,
            arcs,
            out,
            paths,
        })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn nodes(&self) -> &[LocationId] {
        &self.ids
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn coords(&self, id: LocationId) -> Option<(f64, f64)> {
        self.index(id).ok().map(|i| self.coords[i])
    }

    pub fn contains(&self, id: LocationId) -> bool {
        self.ids.binary_search(&id).is_ok()
    }

    fn index(&self, id: LocationId) -> Result<usize, NetError> {
        self.ids
            .binary_search(&id)
            .map_err(|_| NetError::UnknownLocation(id))
    }

    fn pair(&self, from: LocationId, to: LocationId) -> Result<usize, NetError> {
        let k = self.index(from)? * self.paths.n + self.index(to)?;
        if self.paths.time[k] == UNREACHABLE {
            return Err(NetError::Unreachable(from, to));
        }
        Ok(k)
    }

    /// Travel time of the shortest path.
    pub fn travel_time(&self, from: LocationId, to: LocationId) -> Result<Seconds, NetError> {
        Ok(self.paths.time[self.pair(from, to)?])
    }

    /// Length of the time-optimal path.
    pub fn distance(&self, from: LocationId, to: LocationId) -> Result<Distance, NetError> {
        Ok(self.paths.dist[self.pair(from, to)?])
    }

    pub fn shortest_path(&self, from: LocationId, to: LocationId) -> Result<PathResult, NetError> {
        let k = self.pair(from, to)?;
        Ok(PathResult {
            distance: self.paths.dist[k],
            duration: self.paths.time[k],
            node_sequence: self.path_nodes(from, to)?,
        })
    }

    /// Nodes of the shortest path, both endpoints included.
    pub fn path_nodes(&self, from: LocationId, to: LocationId) -> Result<Vec<LocationId>, NetError> {
        self.pair(from, to)?;
        let n = self.paths.n;
        let t = self.index(to)?;
        let mut u = self.index(from)?;
        let mut seq = vec![self.ids[u]];
        while u != t {
            u = self.paths.next[u * n + t] as usize;
            seq.push(self.ids[u]);
        }
        Ok(seq)
    }

    /// Fail unless every ordered pair in `subset` is connected.
    pub fn check_strongly_connected(&self, subset: &[LocationId]) -> Result<(), NetError> {
        let mut idxs: Vec<usize> = subset
            .iter()
            .map(|&id| self.index(id))
            .collect::<Result<_, _>>()?;
        idxs.sort_unstable();
        idxs.dedup();
        let n = self.paths.n;
        for &a in &idxs {
            for &b in &idxs {
                if self.paths.time[a * n + b] == UNREACHABLE {
                    return Err(NetError::Unreachable(self.ids[a], self.ids[b]));
                }
            }
        }
        Ok(())
    }

    /// Directly connected neighbours with arc time and length.
    pub fn neighbours(&self, id: LocationId) -> Result<Vec<(LocationId, Seconds, Distance)>, NetError> {
        let u = self.index(id)?;
        Ok(self.out[u]
            .iter()
            .map(|&(v, t, d)| (self.ids[v], t, d))
            .collect())
    }

    /// Read the sectioned CSV format: `node,id,x,y` and `arc,from,to,length_mi,time_s` rows.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, NetError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut nodes = Vec::new();
        let mut arcs = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| NetError::Parse(e.to_string()))?;
            let field = |i: usize| -> Result<&str, NetError> {
                rec.get(i)
                    .ok_or_else(|| NetError::Parse(format!("row {}: missing field {i}", line + 1)))
            };
            let num = |i: usize| -> Result<f64, NetError> {
                field(i)?
                    .parse::<f64>()
                    .map_err(|e| NetError::Parse(format!("row {}: {e}", line + 1)))
            };
            let id = |i: usize| -> Result<LocationId, NetError> {
                field(i)?
                    .parse::<u32>()
                    .map(LocationId)
                    .map_err(|e| NetError::Parse(format!("row {}: {e}", line + 1)))
            };
            match field(0)? {
                "node" => nodes.push((id(1)?, num(2)?, num(3)?)),
                "arc" => {
                    let time = num(4)?;
                    if time.fract() != 0.0 {
                        return Err(NetError::Parse(format!(
                            "row {}: time_s must be whole seconds",
                            line + 1
                        )));
                    }
                    arcs.push(Arc {
                        from: id(1)?,
                        to: id(2)?,
                        length: Distance::from_miles(num(3)?),
                        travel_time: time as Seconds,
                    })
                }
                // section headers
                "kind" | "type" | "section" => {}
                other => {
                    return Err(NetError::Parse(format!(
                        "row {}: unknown record type {other:?}",
                        line + 1
                    )))
                }
            }
        }
        RoadNetwork::new(nodes, arcs)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (id, (x, y)) in self.ids.iter().zip(&self.coords) {
            writeln!(w, "node,{id},{x},{y}")?;
        }
        for a in &self.arcs {
            writeln!(
                w,
                "arc,{},{},{},{}",
                a.from,
                a.to,
                a.length.miles(),
                a.travel_time
            )?;
        }
        Ok(())
    }
}

fn all_pairs(out: &[Vec<(usize, Seconds, Distance)>]) -> AllPairs {
    let n = out.len();
    let mut rev: Vec<Vec<(usize, Seconds)>> = vec![Vec::new(); n];
    for (u, arcs) in out.iter().enumerate() {
        for &(v, t, _) in arcs {
            rev[v].push((u, t));
        }
    }
    // one column (fixed target) per task
    let columns: Vec<(Vec<Seconds>, Vec<Distance>, Vec<u32>)> = (0..n)
        .into_par_iter()
        .map(|target| column_to(target, out, &rev))
        .collect();
    let mut time = vec![UNREACHABLE; n * n];
    let mut dist = vec![Distance::ZERO; n * n];
    let mut next = vec![NO_HOP; n * n];
    for (t, (ct, cd, cn)) in columns.into_iter().enumerate() {
        for u in 0..n {
            time[u * n + t] = ct[u];
            dist[u * n + t] = cd[u];
            next[u * n + t] = cn[u];
        }
    }
    AllPairs {
        n,
        time,
        dist,
        next,
    }
}

fn column_to(
    target: usize,
    out: &[Vec<(usize, Seconds, Distance)>],
    rev: &[Vec<(usize, Seconds)>],
) -> (Vec<Seconds>, Vec<Distance>, Vec<u32>) {
    let n = out.len();
    let mut time = vec![UNREACHABLE; n];
    time[target] = 0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((0, target)));
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse((t, v))) = heap.pop() {
        if t > time[v] {
            continue;
        }
        order.push(v);
        for &(u, w) in &rev[v] {
            let cand = t + w;
            if cand < time[u] {
                time[u] = cand;
                heap.push(Reverse((cand, u)));
            }
        }
    }
    let mut dist = vec![Distance::ZERO; n];
    let mut next = vec![NO_HOP; n];
    // `order` is non-decreasing in time-to-target, and arc times are positive,
    // so each hop's tail is settled before the head needs it.
    for &u in &order {
        if u == target {
            continue;
        }
        let hop = out[u]
            .iter()
            .filter(|&&(v, w, _)| time[v] != UNREACHABLE && w + time[v] == time[u])
            .min_by_key(|&&(v, _, _)| v)
            .expect("settled node has a tight arc");
        next[u] = hop.0 as u32;
        dist[u] = hop.2 + dist[hop.0];
    }
    (time, dist, next)
}

/// Bidirectional 4-neighbour grid. Node ids are `row * cols + col`.
pub fn make_grid(rows: usize, cols: usize, edge_length_mi: f64, speed_mph: f64) -> Result<RoadNetwork, NetError> {
    if rows < 2 || cols < 2 {
        return Err(NetError::InvalidParameter(format!(
            "grid needs at least 2 rows and 2 columns, got {rows}x{cols}"
        )));
    }
    if !edge_length_mi.is_finite() || edge_length_mi <= 0.0 {
        return Err(NetError::InvalidParameter(format!(
            "edge length must be positive, got {edge_length_mi}"
        )));
    }
    if !speed_mph.is_finite() || speed_mph <= 0.0 {
        return Err(NetError::InvalidParameter(format!(
            "speed must be positive, got {speed_mph}"
        )));
    }
    let secs = (edge_length_mi / speed_mph * 3600.0).round_ties_even() as Seconds;
    if secs <= 0 {
        return Err(NetError::InvalidParameter(
            "edge travel time rounds to zero seconds".into(),
        ));
    }
    let length = Distance::from_miles(edge_length_mi);
    let id = |r: usize, c: usize| LocationId((r * cols + c) as u32);
    let mut nodes = Vec::with_capacity(rows * cols);
    let mut arcs = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            nodes.push((id(r, c), c as f64 * edge_length_mi, r as f64 * edge_length_mi));
            let mut link = |a: LocationId, b: LocationId| {
                arcs.push(Arc { from: a, to: b, length, travel_time: secs });
                arcs.push(Arc { from: b, to: a, length, travel_time: secs });
            };
            if c + 1 < cols {
                link(id(r, c), id(r, c + 1));
            }
            if r + 1 < rows {
                link(id(r, c), id(r + 1, c));
            }
        }
    }
    RoadNetwork::new(nodes, arcs)
}

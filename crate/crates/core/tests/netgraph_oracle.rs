use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ridepool_core::netgraph::Arc;
use ridepool_core::{make_grid, Distance, LocationId, RoadNetwork};

fn random_network(n: u32, extra: usize, seed: u64) -> RoadNetwork {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n).map(|i| (LocationId(i), i as f64, 0.0)).collect();
    let mut arcs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut push = |a: u32, b: u32, rng: &mut ChaCha8Rng, arcs: &mut Vec<Arc>| {
        if a != b && seen.insert((a, b)) {
            arcs.push(Arc {
                from: LocationId(a),
                to: LocationId(b),
                length: Distance(rng.random_range(1..5_000)),
                // few distinct times so that ties are common
                travel_time: rng.random_range(1..6),
            });
        }
    };
    for i in 0..n {
        push(i, (i + 1) % n, &mut rng, &mut arcs);
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        push(a, b, &mut rng, &mut arcs);
    }
    RoadNetwork::new(nodes, arcs).unwrap()
}

fn bellman_ford(net: &RoadNetwork, src: LocationId) -> Vec<i64> {
    let n = net.node_count();
    let mut d = vec![i64::MAX; n];
    d[src.0 as usize] = 0;
    for _ in 0..n {
        for a in net.arcs() {
            let du = d[a.from.0 as usize];
            if du != i64::MAX && du + a.travel_time < d[a.to.0 as usize] {
                d[a.to.0 as usize] = du + a.travel_time;
            }
        }
    }
    d
}

fn all_simple_paths(net: &RoadNetwork, cur: LocationId, to: LocationId, path: &mut Vec<LocationId>, out: &mut Vec<Vec<LocationId>>) {
    if cur == to {
        out.push(path.clone());
        return;
    }
    for (nb, _, _) in net.neighbours(cur).unwrap() {
        if !path.contains(&nb) {
            path.push(nb);
            all_simple_paths(net, nb, to, path, out);
            path.pop();
        }
    }
}

fn arc_between(net: &RoadNetwork, a: LocationId, b: LocationId) -> &Arc {
    net.arcs().iter().find(|x| x.from == a && x.to == b).unwrap()
}

#[test]
fn times_match_bellman_ford() {
    for seed in 0..30 {
        let net = random_network(25, 60, seed);
        for s in net.nodes().to_vec() {
            let bf = bellman_ford(&net, s);
            for &t in net.nodes() {
                assert_eq!(net.travel_time(s, t).unwrap(), bf[t.0 as usize], "seed {seed} {s}->{t}");
            }
        }
    }
}

#[test]
fn paths_are_lexicographically_smallest_fastest() {
    for seed in 0..40 {
        let net = random_network(6, 10, 1000 + seed);
        for &s in net.nodes() {
            for &t in net.nodes() {
                let mut paths = Vec::new();
                all_simple_paths(&net, s, t, &mut vec![s], &mut paths);
                let time = |p: &Vec<LocationId>| -> i64 { p.windows(2).map(|w| arc_between(&net, w[0], w[1]).travel_time).sum() };
                let best_t = paths.iter().map(time).min().unwrap();
                let expected = paths.iter().filter(|p| time(p) == best_t).min().unwrap();
                let got = net.shortest_path(s, t).unwrap();
                assert_eq!(&got.node_sequence, expected, "seed {seed} {s}->{t}");
                assert_eq!(got.duration, best_t);
                let dist: Distance = expected.windows(2).map(|w| arc_between(&net, w[0], w[1]).length).sum();
                assert_eq!(got.distance, dist);
            }
        }
    }
}

proptest! {
    #[test]
    fn triangle_inequality(seed in 0u64..500, a in 0u32..12, b in 0u32..12, c in 0u32..12) {
        let net = random_network(12, 20, seed);
        let (a, b, c) = (LocationId(a), LocationId(b), LocationId(c));
        prop_assert!(net.travel_time(a, c).unwrap() <= net.travel_time(a, b).unwrap() + net.travel_time(b, c).unwrap());
        prop_assert_eq!(net.travel_time(a, a).unwrap(), 0);
    }

    #[test]
    fn grid_is_symmetric(rows in 2usize..7, cols in 2usize..7, a in 0u32..36, b in 0u32..36) {
        let net = make_grid(rows, cols, 0.2, 20.0).unwrap();
        let n = (rows * cols) as u32;
        let (a, b) = (LocationId(a % n), LocationId(b % n));
        prop_assert_eq!(net.travel_time(a, b).unwrap(), net.travel_time(b, a).unwrap());
        prop_assert_eq!(net.distance(a, b).unwrap(), net.distance(b, a).unwrap());
        let p = net.shortest_path(a, b).unwrap();
        prop_assert_eq!(p.node_sequence.first().copied(), Some(a));
        prop_assert_eq!(p.node_sequence.last().copied(), Some(b));
    }
}

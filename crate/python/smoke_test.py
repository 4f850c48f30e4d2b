"""Smoke test for the ridepool extension module."""

import ridepool


def main():
    net = ridepool.RoadNetwork.grid(10, 10, 0.2, 20.0)
    assert net.node_count == 100
    miles, secs, nodes = net.shortest_path(0, 8)
    assert nodes[0] == 0 and nodes[-1] == 8
    assert abs(miles - 1.6) < 1e-9 and secs == 8 * 36

    trips = ridepool.synthetic_trips(net, 300, horizon=3600, seed=7)
    results = {}
    for mech in ("SRO", "PCP", "CCP"):
        res = ridepool.simulate(net, trips, mechanism=mech, fleet_size=40, mar=1.0, seed=3, horizon=3600)
        assert res.served + res.unserved == len(trips)
        results[mech] = res
        print(mech, res.describe())
    assert results["SRO"].pooled_customers == 0
    assert results["CCP"].individually_rational()
    for c in results["CCP"].customers():
        if c.served and c.poolable:
            assert c.total_cost_usd <= c.baseline_cost_usd + 1e-9

    # MAR 0 behaves like solitary rides
    zero = ridepool.simulate(net, trips, mechanism="CCP", fleet_size=40, mar=0.0, seed=3, horizon=3600)
    assert zero.decisions() == results["SRO"].decisions()

    split = ridepool.shapley_split(15.0, [(0, 10.0, 1.0), (1, 12.0, 2.0)])
    assert [round(f, 3) for _, f, _ in split] == [7.0, 8.0]
    gp = ridepool.goalprog_split(15.0, [(0, 10.0, 1.0), (1, 12.0, 2.0)], [0.05, 0.10])
    assert abs(sum(f for _, f, _ in gp) - 15.0) < 1e-9

    t = ridepool.theorem3_threshold(0.8, 10.0, 0.3, 600)
    assert abs(t - 0.2 * 10.0 / 180.0) < 1e-12

    verdicts = ridepool.verify_fixtures()
    assert verdicts and all(v[2] for v in verdicts)

    try:
        ridepool.simulate(net, trips, mechanism="XYZ")
    except ValueError as e:
        assert "unknown mechanism" in str(e)
    else:
        raise AssertionError("bad mechanism accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()

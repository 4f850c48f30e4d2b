//! Python bindings: networks, simulations, fare splits and fixture checks.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ridepool_core::costshare::{goalprog_split, shapley_split, CustomerShare, RunAccount, SplitResult};
use ridepool_core::simengine::{self, materialize, split_rows, SplitScheme, TripSpec};
use ridepool_core::verify;
use ridepool_core::{CustomerId, LocationId, Mechanism, Money, Ppm, SimConfig, VehicleId};

fn value_error<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "RoadNetwork", frozen)]
struct PyRoadNetwork {
    inner: Arc<ridepool_core::RoadNetwork>,
}

#[pymethods]
impl PyRoadNetwork {
    /// Grid with `rows * cols` nodes numbered row by row.
    #[staticmethod]
    #[pyo3(signature = (rows, cols, edge_miles = 0.2, speed_mph = 20.0))]
    fn grid(rows: usize, cols: usize, edge_miles: f64, speed_mph: f64) -> PyResult<Self> {
        let net = ridepool_core::make_grid(rows, cols, edge_miles, speed_mph).map_err(value_error)?;
        Ok(PyRoadNetwork { inner: Arc::new(net) })
    }

    #[staticmethod]
    fn from_csv(path: &str) -> PyResult<Self> {
        let f = std::fs::File::open(path).map_err(value_error)?;
        let net = ridepool_core::RoadNetwork::read_csv(f).map_err(value_error)?;
        Ok(PyRoadNetwork { inner: Arc::new(net) })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.node_count()
    }

    fn travel_time(&self, a: u32, b: u32) -> PyResult<i64> {
        self.inner.travel_time(LocationId(a), LocationId(b)).map_err(value_error)
    }

    fn distance_miles(&self, a: u32, b: u32) -> PyResult<f64> {
        Ok(self.inner.distance(LocationId(a), LocationId(b)).map_err(value_error)?.miles())
    }

    /// `(miles, seconds, nodes)` of the fastest path.
    fn shortest_path(&self, a: u32, b: u32) -> PyResult<(f64, i64, Vec<u32>)> {
        let p = self.inner.shortest_path(LocationId(a), LocationId(b)).map_err(value_error)?;
        Ok((p.distance.miles(), p.duration, p.node_sequence.iter().map(|n| n.0).collect()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RoadNetwork(nodes={}, arcs={})",
            self.inner.node_count(),
            self.inner.arc_count()
        )
    }
}

#[pyclass(name = "Customer", frozen, get_all)]
struct PyCustomer {
    customer: u32,
    request_time: i64,
    poolable: bool,
    served: bool,
    pooled: bool,
    vehicle: Option<u32>,
    fare_usd: f64,
    pickup: Option<i64>,
    dropoff: Option<i64>,
    total_cost_usd: f64,
    baseline_cost_usd: f64,
}

type DecisionRow = (i64, u32, String, Option<u32>, Option<u32>, f64);

#[pyclass(name = "SimResult", frozen)]
struct PySimResult {
    inner: simengine::SimResult,
}

#[pymethods]
impl PySimResult {
    #[getter]
    fn served(&self) -> usize {
        self.inner.served
    }

    #[getter]
    fn unserved(&self) -> usize {
        self.inner.unserved
    }

    #[getter]
    fn pooled_customers(&self) -> usize {
        self.inner.pooled_customers
    }

    #[getter]
    fn poolable_customers(&self) -> usize {
        self.inner.poolable_customers
    }

    #[getter]
    fn fleet_distance_miles(&self) -> f64 {
        self.inner.fleet_distance.miles()
    }

    #[getter]
    fn fares_total_usd(&self) -> f64 {
        self.inner.fares_total.dollars()
    }

    #[getter]
    fn profit_usd(&self) -> f64 {
        self.inner.profit.dollars()
    }

    #[getter]
    fn unserved_pct(&self) -> f64 {
        self.inner.unserved_pct()
    }

    fn customers(&self) -> Vec<PyCustomer> {
        self.inner
            .per_customer
            .iter()
            .map(|c| PyCustomer {
                customer: c.customer.0,
                request_time: c.request_time,
                poolable: c.poolable,
                served: c.served,
                pooled: c.pooled,
                vehicle: c.vehicle.map(|v| v.0),
                fare_usd: c.fare.dollars(),
                pickup: c.pickup,
                dropoff: c.dropoff,
                total_cost_usd: c.total_cost.dollars(),
                baseline_cost_usd: c.baseline_solitary_cost.dollars(),
            })
            .collect()
    }

    /// `(time, customer, decision, vehicle, partner, fare_usd)` per request.
    fn decisions(&self) -> Vec<DecisionRow> {
        self.inner
            .decisions
            .iter()
            .map(|d| {
                (
                    d.time,
                    d.customer.0,
                    d.kind.to_string(),
                    d.vehicle.map(|v| v.0),
                    d.partner.map(|p| p.0),
                    d.fare.dollars(),
                )
            })
            .collect()
    }

    fn individually_rational(&self) -> bool {
        verify::check_individual_rationality("python", &self.inner).pass
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }

    fn __repr__(&self) -> String {
        format!("SimResult({})", self.inner.describe())
    }
}

/// Uniform synthetic trips as `(request_time, origin, destination)`.
#[pyfunction]
#[pyo3(signature = (network, count, horizon = 1800, seed = 1))]
fn synthetic_trips(network: &PyRoadNetwork, count: usize, horizon: i64, seed: u64) -> Vec<(i64, u32, u32)> {
    simengine::synthetic_trips(&network.inner, count, horizon, seed)
        .into_iter()
        .map(|t| (t.request_time, t.origin.0, t.destination.0))
        .collect()
}

/// Simulate one mechanism on `(request_time, origin, destination)` trips.
#[pyfunction]
#[pyo3(signature = (
    network, trips, mechanism = "CCP", fleet_size = 30, mar = 1.0, seed = 1, max_wait = 240,
    horizon = 1800, discount_factor = 0.8, detour_factor = 0.3, change_fee = 2.0, split = "shapley",
    initial_positions = None
))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    network: &PyRoadNetwork,
    trips: Vec<(i64, u32, u32)>,
    mechanism: &str,
    fleet_size: usize,
    mar: f64,
    seed: u64,
    max_wait: i64,
    horizon: i64,
    discount_factor: f64,
    detour_factor: f64,
    change_fee: f64,
    split: &str,
    initial_positions: Option<Vec<u32>>,
) -> PyResult<PySimResult> {
    let mechanism: Mechanism = mechanism.parse().map_err(value_error)?;
    let split = match split {
        "shapley" => SplitScheme::Shapley,
        "goalprog" => SplitScheme::default_goalprog(),
        other => return Err(PyValueError::new_err(format!("unknown split scheme {other:?}"))),
    };
    let mut cfg = SimConfig {
        mechanism,
        fleet_size,
        max_wait_override: Some(max_wait),
        mar,
        rng_seed: seed,
        horizon,
        split,
        initial_positions: initial_positions.map(|p| p.into_iter().map(LocationId).collect()),
        ..SimConfig::default()
    };
    cfg.tariff.discount_factor = Ppm::from_f64(discount_factor);
    cfg.tariff.detour_factor = Ppm::from_f64(detour_factor);
    cfg.tariff.change_fee = Money::from_dollars(change_fee);
    let mut specs: Vec<TripSpec> = trips
        .into_iter()
        .map(|(t, o, d)| TripSpec {
            request_time: t,
            origin: LocationId(o),
            destination: LocationId(d),
            value_of_time: None,
            max_wait: None,
            poolable: None,
        })
        .collect();
    specs.sort_by_key(|t| t.request_time);
    let net = network.inner.clone();
    let result = py.detach(move || {
        let reqs = materialize(&cfg, &specs)?;
        simengine::run_sim(&cfg, &net, &reqs)
    });
    Ok(PySimResult {
        inner: result.map_err(value_error)?,
    })
}

fn account(run_fare_usd: f64, customers: &[(u32, f64, f64)]) -> RunAccount {
    RunAccount {
        run_id: 0,
        vehicle: VehicleId(0),
        customers: customers
            .iter()
            .map(|&(c, cs, a)| CustomerShare {
                customer: CustomerId(c),
                solitary_cost: Money::from_dollars(cs),
                pooled_time_cost: Money::from_dollars(a),
            })
            .collect(),
        run_fare: Money::from_dollars(run_fare_usd),
        events: Vec::new(),
    }
}

fn split_tuples(acct: &RunAccount, result: &SplitResult) -> Vec<(u32, f64, f64)> {
    split_rows(acct, result)
        .into_iter()
        .map(|r| (r.customer.0, r.fare.dollars(), r.relative_saving))
        .collect()
}

/// Equal division of a run's surplus. Customers are `(id, solitary_cost, pooled_time_cost)`;
/// returns `(id, fare_usd, relative_saving)`.
#[pyfunction(name = "shapley_split")]
fn py_shapley_split(run_fare_usd: f64, customers: Vec<(u32, f64, f64)>) -> PyResult<Vec<(u32, f64, f64)>> {
    let acct = account(run_fare_usd, &customers);
    let r = shapley_split(&acct).map_err(value_error)?;
    Ok(split_tuples(&acct, &r))
}

/// Goal-programming split with saving thresholds given as fractions.
#[pyfunction(name = "goalprog_split")]
#[pyo3(signature = (run_fare_usd, customers, thresholds = vec![0.05, 0.10, 0.15, 0.20]))]
fn py_goalprog_split(
    run_fare_usd: f64,
    customers: Vec<(u32, f64, f64)>,
    thresholds: Vec<f64>,
) -> PyResult<Vec<(u32, f64, f64)>> {
    let acct = account(run_fare_usd, &customers);
    let th: Vec<Ppm> = thresholds.iter().map(|&t| Ppm::from_f64(t)).collect();
    let r = goalprog_split(&acct, &th).map_err(value_error)?;
    Ok(split_tuples(&acct, &r))
}

/// Value of time (dollars per second) above which worst-case pooling under the
/// discount costs more than riding alone.
#[pyfunction]
fn theorem3_threshold(delta: f64, p_solitary_usd: f64, detour: f64, duration_s: i64) -> PyResult<f64> {
    verify::theorem3_threshold(delta, Money::from_dollars(p_solitary_usd), detour, duration_s).map_err(value_error)
}

/// `(fixture, check, pass, detail)` for every built-in fixture check.
#[pyfunction]
fn verify_fixtures() -> PyResult<Vec<(String, String, bool, String)>> {
    Ok(verify::run_fixture_suite()
        .map_err(value_error)?
        .into_iter()
        .map(|v| (v.fixture, v.check, v.pass, v.detail))
        .collect())
}

#[pymodule]
fn ridepool(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRoadNetwork>()?;
    m.add_class::<PySimResult>()?;
    m.add_class::<PyCustomer>()?;
    m.add_function(wrap_pyfunction!(synthetic_trips, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(py_shapley_split, m)?)?;
    m.add_function(wrap_pyfunction!(py_goalprog_split, m)?)?;
    m.add_function(wrap_pyfunction!(theorem3_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(verify_fixtures, m)?)?;
    Ok(())
}

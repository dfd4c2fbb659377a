//! Python bindings for the `gbb-semi` crate.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use gbb_semi::harness::{run_cell, InstanceSource, MechanismSpec};
use gbb_semi::lemmas::lemma_test_suite;
use gbb_semi::values::{realize as realize_rs, resolve_instance};
use gbb_semi::{gbb, oracle, trade, Error, Mode, ValueSequence};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(name = "Valuation", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyValuation(trade::Valuation);

#[pymethods]
impl PyValuation {
    #[new]
    fn new(s: f64, b: f64) -> PyResult<Self> {
        trade::Valuation::new(s, b).map(Self).map_err(py_err)
    }

    #[getter]
    fn s(&self) -> f64 {
        self.0.seller()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.buyer()
    }

    fn __repr__(&self) -> String {
        format!("Valuation(s={}, b={})", self.0.seller(), self.0.buyer())
    }
}

#[pyclass(name = "PricePair", frozen, skip_from_py_object)]
#[derive(Clone, Copy)]
struct PyPricePair(trade::PricePair);

#[pymethods]
impl PyPricePair {
    /// Seller price `p`, buyer price `q`.
    #[new]
    fn new(p: f64, q: f64) -> PyResult<Self> {
        trade::PricePair::new(p, q).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn diagonal(p: f64) -> PyResult<Self> {
        trade::PricePair::diagonal(p).map(Self).map_err(py_err)
    }

    #[getter]
    fn p(&self) -> f64 {
        self.0.seller_price()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.0.buyer_price()
    }

    fn is_wbb(&self) -> bool {
        self.0.is_wbb()
    }

    fn __repr__(&self) -> String {
        format!("PricePair(p={}, q={})", self.0.seller_price(), self.0.buyer_price())
    }
}

#[pyfunction]
fn trade_indicator(v: &PyValuation, a: &PyPricePair) -> bool {
    trade::trade_indicator(v.0, a.0)
}

#[pyfunction]
fn gft(v: &PyValuation, a: &PyPricePair) -> f64 {
    trade::gft(v.0, a.0)
}

#[pyfunction]
fn profit(v: &PyValuation, a: &PyPricePair) -> f64 {
    trade::profit(v.0, a.0)
}

/// Tuning for horizon `T`; `K` overrides the discretization.
#[pyclass(name = "Params", frozen)]
struct PyParams(gbb::Params);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (horizon, arms=None))]
    fn new(horizon: usize, arms: Option<usize>) -> PyResult<Self> {
        match arms {
            Some(k) => gbb::Params::with_arms(horizon, k),
            None => gbb::Params::from_horizon(horizon),
        }
        .map(Self)
        .map_err(py_err)
    }

    #[getter]
    fn horizon(&self) -> usize {
        self.0.horizon
    }

    #[getter(K)]
    fn arms(&self) -> usize {
        self.0.arms
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.0.beta
    }

    #[getter]
    fn eta(&self) -> f64 {
        self.0.eta
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.0.gamma
    }

    fn __repr__(&self) -> String {
        format!(
            "Params(T={}, K={}, beta={}, eta={}, gamma={})",
            self.0.horizon, self.0.arms, self.0.beta, self.0.eta, self.0.gamma
        )
    }
}

#[pyfunction]
fn surrogate_gft(v: &PyValuation, k: usize, arms: usize) -> PyResult<f64> {
    if arms == 0 || k == 0 || k > arms {
        return Err(PyValueError::new_err(format!("need 1 <= k <= K, got k={k}, K={arms}")));
    }
    Ok(gbb::surrogate_gft(v.0, k, arms))
}

fn to_sequence(values: Vec<(f64, f64)>) -> PyResult<ValueSequence> {
    let rounds = values
        .into_iter()
        .map(|(s, b)| trade::Valuation::new(s, b))
        .collect::<Result<Vec<_>, _>>()
        .map_err(py_err)?;
    ValueSequence::new(rounds).map_err(py_err)
}

/// `(p_star, gft_star)` for a list of `(s, b)` rounds.
#[pyfunction]
fn best_fixed_price(values: Vec<(f64, f64)>) -> PyResult<(f64, f64)> {
    let bench = oracle::best_fixed_price(&to_sequence(values)?);
    Ok((bench.p_star, bench.gft_star))
}

#[pyfunction]
fn k_star(p: f64, arms: usize) -> PyResult<usize> {
    if arms == 0 || !(0.0..=1.0).contains(&p) {
        return Err(PyValueError::new_err("need K >= 1 and p in [0, 1]"));
    }
    Ok(oracle::k_star(p, arms))
}

/// Realized `(s, b)` rounds of a builtin instance or instance file.
#[pyfunction]
fn realize(instance: &str, horizon: usize, seed: u64) -> PyResult<Vec<(f64, f64)>> {
    let spec = resolve_instance(instance, horizon).map_err(py_err)?;
    let seq = realize_rs(&spec, horizon, seed).map_err(py_err)?;
    Ok(seq.iter().map(|v| (v.seller(), v.buyer())).collect())
}

/// One run; returns the summary row as a dict. With `rounds=True` the dict
/// also holds a `rounds` list of `(phase, p, q, trade, gft, profit,
/// cum_profit)` tuples.
#[pyfunction]
#[pyo3(signature = (mechanism, instance, horizon, seed, phase2_only=false, rounds=false))]
fn simulate<'py>(
    py: Python<'py>,
    mechanism: &str,
    instance: &str,
    horizon: usize,
    seed: u64,
    phase2_only: bool,
    rounds: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let mut mech: MechanismSpec = mechanism.parse().map_err(py_err)?;
    if phase2_only {
        match &mut mech {
            MechanismSpec::GbbSemi { mode, .. } => *mode = Mode::Phase2Only,
            _ => return Err(PyValueError::new_err("phase2_only needs gbb-semi")),
        }
    }
    let source = InstanceSource::Named(instance.to_string());
    let cell = py
        .detach(|| run_cell(&source, &mech, horizon, seed))
        .map_err(py_err)?;
    let s = &cell.summary;
    let d = PyDict::new(py);
    d.set_item("T", s.horizon)?;
    d.set_item("seed", s.seed)?;
    d.set_item("mechanism", &s.mechanism)?;
    d.set_item("total_gft", s.total_gft)?;
    d.set_item("benchmark_gft", s.benchmark_gft)?;
    d.set_item("regret", s.regret)?;
    d.set_item("normalized_regret", s.normalized_regret)?;
    d.set_item("final_profit", s.final_profit)?;
    d.set_item("T_prime", s.t_prime)?;
    d.set_item("valve_triggered", s.valve_triggered)?;
    if rounds {
        let rows: Vec<_> = cell
            .records
            .iter()
            .map(|r| {
                (
                    r.phase.as_str(),
                    r.action.seller_price(),
                    r.action.buyer_price(),
                    r.trade,
                    r.gft,
                    r.profit,
                    r.cumulative_profit,
                )
            })
            .collect();
        d.set_item("rounds", rows)?;
    }
    Ok(d)
}

/// Runs the randomized inequality checks; one dict per check.
#[pyfunction]
#[pyo3(signature = (trials=10_000, seed=0))]
fn lemma_suite<'py>(py: Python<'py>, trials: usize, seed: u64) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let report = py.detach(|| lemma_test_suite(trials, seed)).map_err(py_err)?;
    report
        .results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("name", r.name)?;
            d.set_item("checks", r.checks)?;
            d.set_item("violations", r.violations)?;
            d.set_item("worst_margin", r.worst_margin)?;
            d.set_item("passed", r.passed())?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
fn gbbsemi(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyValuation>()?;
    m.add_class::<PyPricePair>()?;
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(trade_indicator, m)?)?;
    m.add_function(wrap_pyfunction!(gft, m)?)?;
    m.add_function(wrap_pyfunction!(profit, m)?)?;
    m.add_function(wrap_pyfunction!(surrogate_gft, m)?)?;
    m.add_function(wrap_pyfunction!(best_fixed_price, m)?)?;
    m.add_function(wrap_pyfunction!(k_star, m)?)?;
    m.add_function(wrap_pyfunction!(realize, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(lemma_suite, m)?)?;
    Ok(())
}

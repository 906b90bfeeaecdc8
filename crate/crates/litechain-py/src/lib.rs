//! Python bindings for the litechain simulator: the security metric, the
//! radio model, the clustering game, reputation normalization, and the
//! full scenario runner.

use std::collections::{BTreeMap, HashMap};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use litechain::clustering::{run_game, GameConfig};
use litechain::consensus::{commit_threshold, normalize_reputation};
use litechain::core::{canonical_hash, DatasetShard, Device, DeviceId, Role};
use litechain::fl::staleness_weight;
use litechain::harness::{run_scenario, Scenario};
use litechain::radio::{
    channel_gain, clustered_complexity, max_reduction, one_tier_complexity, ChannelParams,
    SizeProfile,
};
use litechain::secmetric::{security, security_dft, security_enum, Committee};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// SHA-256 identifier of a weight vector's canonical serialization.
#[pyfunction]
#[pyo3(name = "canonical_hash")]
fn canonical_hash_py(py: Python<'_>, weights: Vec<f64>) -> PyResult<Py<PyBytes>> {
    let digest = canonical_hash(&weights).map_err(value_err)?;
    Ok(PyBytes::new(py, &digest).into())
}

/// Consensus security by direct subset enumeration (K <= 25).
#[pyfunction]
#[pyo3(name = "security_enum")]
fn security_enum_py(reliabilities: Vec<f64>) -> PyResult<f64> {
    let committee = Committee::new(reliabilities).map_err(value_err)?;
    security_enum(&committee).map_err(value_err)
}

/// Consensus security by the DFT characteristic-function method. The
/// fault budget defaults to `floor((K - 1) / 3)`.
#[pyfunction]
#[pyo3(name = "security_dft", signature = (reliabilities, fault_budget=None))]
fn security_dft_py(reliabilities: Vec<f64>, fault_budget: Option<usize>) -> PyResult<f64> {
    let committee = Committee::new(reliabilities).map_err(value_err)?;
    match fault_budget {
        Some(budget) => security_dft(&committee, budget).map_err(value_err),
        None => security(&committee).map_err(value_err),
    }
}

/// Free-space path loss gain at a distance in meters.
#[pyfunction]
#[pyo3(signature = (distance, antenna_gain=4.11, carrier_freq=915e6, pathloss_exp=2.8, light_speed=3e8))]
fn path_loss_gain(
    distance: f64,
    antenna_gain: f64,
    carrier_freq: f64,
    pathloss_exp: f64,
    light_speed: f64,
) -> PyResult<f64> {
    let cp = ChannelParams {
        antenna_gain,
        carrier_freq,
        pathloss_exp,
        light_speed,
        ..ChannelParams::default()
    };
    channel_gain(distance, &cp).map_err(value_err)
}

/// Shannon rate in bits per second across a link of the given distance.
#[pyfunction]
#[pyo3(signature = (distance, tx_power=0.2, bandwidth=1e6, noise_power=1e-10))]
fn shannon_rate(distance: f64, tx_power: f64, bandwidth: f64, noise_power: f64) -> PyResult<f64> {
    let cp = ChannelParams {
        bandwidth,
        noise_power,
        ..ChannelParams::default()
    };
    let h = channel_gain(distance, &cp).map_err(value_err)?;
    Ok(bandwidth * (1.0 + tx_power * h / noise_power).log2())
}

/// One-round expected communication bytes `(one_tier, clustered,
/// reduction)` for N devices reorganized into K clusters.
#[pyfunction]
fn comm_complexity(
    n: usize,
    k: usize,
    model_size: f64,
    block_size: f64,
) -> PyResult<(f64, f64, f64)> {
    let sp = SizeProfile {
        model_size,
        block_size,
        ..SizeProfile::default()
    };
    let c = litechain::radio::comm_complexity(n, k, &sp).map_err(value_err)?;
    Ok((c.one_tier, c.clustered, c.reduction))
}

/// Closed form of the maximal expected reduction, attained at K = 4.
#[pyfunction]
#[pyo3(name = "max_reduction")]
fn max_reduction_py(n: usize, model_size: f64, block_size: f64) -> f64 {
    let sp = SizeProfile {
        model_size,
        block_size,
        ..SizeProfile::default()
    };
    max_reduction(n, &sp)
}

/// Sanity identity: `one_tier - clustered` at K = 4 equals the closed
/// form exactly for integer byte sizes.
#[pyfunction]
fn reduction_identity_holds(n: usize, model_size: f64, block_size: f64) -> PyResult<bool> {
    if n < 4 {
        return Err(PyValueError::new_err("need at least 4 devices"));
    }
    let sp = SizeProfile {
        model_size,
        block_size,
        ..SizeProfile::default()
    };
    Ok(one_tier_complexity(n, &sp) - clustered_complexity(n, 4, &sp) == max_reduction(n, &sp))
}

/// `ceil((2K + 1) / 3)` votes required by the commit phases.
#[pyfunction]
#[pyo3(name = "commit_threshold")]
fn commit_threshold_py(k: usize) -> usize {
    commit_threshold(k)
}

/// Staleness weight `s (t - tau + 1)^{-q}`.
#[pyfunction]
#[pyo3(name = "staleness_weight")]
fn staleness_weight_py(base: f64, q: f64, tau: u64, t: u64) -> PyResult<f64> {
    if t < tau {
        return Err(PyValueError::new_err("staleness requires t >= tau"));
    }
    Ok(staleness_weight(base, q, tau, t))
}

/// Rank-normalizes raw reputation scores into `[floor, ceiling]`.
#[pyfunction]
#[pyo3(name = "normalize_reputation", signature = (scores, floor=0.1, ceiling=0.99, zero_prior=0.5))]
fn normalize_reputation_py(
    scores: HashMap<u32, f64>,
    floor: f64,
    ceiling: f64,
    zero_prior: f64,
) -> HashMap<u32, f64> {
    let scores: BTreeMap<DeviceId, f64> = scores.into_iter().collect();
    normalize_reputation(&scores, floor, ceiling, zero_prior)
        .into_iter()
        .collect()
}

type ClusteringResult = (HashMap<u32, u32>, HashMap<u32, u32>, f64);

/// Runs the coalition clustering game over devices given as
/// `(x, y, compute, reliability)` tuples; returns
/// `(assignments, committee, welfare)`.
#[pyfunction]
fn cluster_network(devices: Vec<(f64, f64, f64, f64)>) -> PyResult<ClusteringResult> {
    let devices: Vec<Device> = devices
        .into_iter()
        .enumerate()
        .map(|(id, (x, y, compute, reliability))| Device {
            id: id as DeviceId,
            position: (x, y),
            compute,
            tx_power: 0.2,
            dataset: DatasetShard::empty(1),
            reliability,
            reputation: 0.0,
            role: Role::Member,
        })
        .collect();
    let outcome = run_game(
        &devices,
        &ChannelParams::default(),
        &SizeProfile::default(),
        &GameConfig::default(),
    )
    .map_err(value_err)?;
    let assignments = outcome
        .partition
        .assignments
        .iter()
        .map(|(&d, &c)| (d, c))
        .collect();
    let committee = outcome
        .partition
        .committee
        .iter()
        .map(|(&c, &d)| (c, d))
        .collect();
    Ok((assignments, committee, outcome.welfare))
}

/// The default scenario as a TOML document, ready to edit.
#[pyfunction]
fn default_scenario_toml() -> String {
    Scenario::default().to_toml()
}

/// One finished simulation run.
#[pyclass]
struct RunResult {
    #[pyo3(get)]
    summary: String,
    #[pyo3(get)]
    metrics_csv: String,
    #[pyo3(get)]
    ledger_jsonl: String,
    #[pyo3(get)]
    final_accuracy: f64,
    #[pyo3(get)]
    time_to_target: Option<f64>,
    #[pyo3(get)]
    rounds_run: u64,
    #[pyo3(get)]
    clusters: usize,
}

/// Runs a scenario described by a TOML document and returns the metrics.
#[pyfunction]
#[pyo3(name = "run_scenario")]
fn run_scenario_py(config_toml: &str) -> PyResult<RunResult> {
    let scenario = Scenario::from_toml(config_toml).map_err(value_err)?;
    let output = run_scenario(&scenario).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(RunResult {
        summary: output.metrics.summary_json(),
        metrics_csv: output.metrics.to_csv(),
        ledger_jsonl: output.ledger.export_jsonl(),
        final_accuracy: output.metrics.final_accuracy,
        time_to_target: output.metrics.time_to_target,
        rounds_run: output.metrics.rounds_run,
        clusters: output.metrics.n_clusters,
    })
}

#[pymodule]
fn litechain_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(canonical_hash_py, m)?)?;
    m.add_function(wrap_pyfunction!(security_enum_py, m)?)?;
    m.add_function(wrap_pyfunction!(security_dft_py, m)?)?;
    m.add_function(wrap_pyfunction!(path_loss_gain, m)?)?;
    m.add_function(wrap_pyfunction!(shannon_rate, m)?)?;
    m.add_function(wrap_pyfunction!(comm_complexity, m)?)?;
    m.add_function(wrap_pyfunction!(max_reduction_py, m)?)?;
    m.add_function(wrap_pyfunction!(reduction_identity_holds, m)?)?;
    m.add_function(wrap_pyfunction!(commit_threshold_py, m)?)?;
    m.add_function(wrap_pyfunction!(staleness_weight_py, m)?)?;
    m.add_function(wrap_pyfunction!(normalize_reputation_py, m)?)?;
    m.add_function(wrap_pyfunction!(cluster_network, m)?)?;
    m.add_function(wrap_pyfunction!(default_scenario_toml, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario_py, m)?)?;
    m.add_class::<RunResult>()?;
    Ok(())
}

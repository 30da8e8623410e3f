//! Scenario runners. Each returns typed rows plus a JSON summary; `run`
//! renders them as CSV.

use anyhow::{Context, Result};
use mitopo_core::demodulation::{
    add_awgn, blind_detect, build_pilot_codebook, lambda_spread, ml_detect, pairwise_error_bound,
    precompute_for_scene, q_zero, upsilon_matrix, Approximation, NoiseModel, PilotCodebook,
};
use mitopo_core::linalg::CVector;
use mitopo_core::modulation::{enumerate_constellation, normalize_symbol_power, symbol_power, NetworkSymbol};
use mitopo_core::network::CoupledNetwork;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Scenario};
use crate::mc::{count_errors, SerEstimate};

/// Bumped whenever a CSV column changes.
pub const SCHEMA_VERSION: u32 = 1;

/// "AB" for transmitter 1 on pattern A and transmitter 2 on pattern B.
pub fn symbol_label(s: &NetworkSymbol) -> String {
    s.patterns.iter().map(|&p| char::from(b'A' + p as u8)).collect()
}

fn constellation(cfg: &ExperimentConfig) -> Result<Vec<NetworkSymbol>> {
    let scene = cfg.scene(cfg.layout.distances[0])?;
    Ok(enumerate_constellation(
        &scene.patterns,
        scene.users(),
        cfg.layout.scheme,
        cfg.layout.merge_symmetric,
    )?)
}

fn networks(cfg: &ExperimentConfig, distance: f64, symbols: &[NetworkSymbol]) -> Result<Vec<CoupledNetwork>> {
    cfg.scene(distance)?
        .networks(symbols)
        .with_context(|| format!("assembling networks at D = {distance} m"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenRow {
    pub config_hash: String,
    pub seed: u64,
    pub distance: f64,
    pub symbol: usize,
    pub label: String,
    pub index: usize,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSummary {
    pub labels: Vec<String>,
    /// Per symbol: max over eigen-index of (max - min) / |mean| across D.
    pub relative_spread: Vec<f64>,
    /// Largest absolute drift of any eigenvalue across D (H).
    pub max_drift: f64,
    /// Smallest sup-norm distance between two symbols' sorted spectra at
    /// equal D (H).
    pub min_separation: f64,
    /// max |sum(lambda) - N_Tot L| / (N_Tot L).
    pub trace_error: f64,
}

pub fn eigen_sweep(cfg: &ExperimentConfig) -> Result<(Vec<EigenRow>, EigenSummary)> {
    let symbols = constellation(cfg)?;
    let hash = cfg.hash();
    let l = cfg.physics.inductance;
    let mut distances = cfg.layout.distances.clone();
    distances.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut spectra: Vec<Vec<DVector<f64>>> = vec![Vec::new(); symbols.len()];
    let mut trace_error: f64 = 0.0;
    let mut min_separation = f64::INFINITY;
    for &d in &distances {
        let nets = networks(cfg, d, &symbols)?;
        for (k, net) in nets.iter().enumerate() {
            let lambda = &net.basis.lambda;
            let n = lambda.len() as f64;
            trace_error = trace_error.max((lambda.sum() - n * l).abs() / (n * l));
            for (i, &v) in lambda.iter().enumerate() {
                rows.push(EigenRow {
                    config_hash: hash.clone(),
                    seed: cfg.master_seed,
                    distance: d,
                    symbol: k,
                    label: symbol_label(&symbols[k]),
                    index: i,
                    eigenvalue: v,
                });
            }
            spectra[k].push(lambda.clone());
        }
        for a in 0..nets.len() {
            for b in 0..a {
                let (la, lb) = (&nets[a].basis.lambda, &nets[b].basis.lambda);
                let sep = if la.len() == lb.len() { (la - lb).amax() } else { f64::INFINITY };
                min_separation = min_separation.min(sep);
            }
        }
    }
    let relative_spread = spectra.iter().map(|s| lambda_spread(s)).collect::<mitopo_core::Result<Vec<_>>>()?;
    let max_drift = spectra
        .iter()
        .flat_map(|s| {
            (0..s[0].len()).map(move |t| {
                let (lo, hi) = s
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v[t]), hi.max(v[t])));
                hi - lo
            })
        })
        .fold(0.0, f64::max);
    let summary = EigenSummary {
        labels: symbols.iter().map(symbol_label).collect(),
        relative_spread,
        max_drift,
        min_separation,
        trace_error,
    };
    Ok((rows, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PilotRow {
    pub config_hash: String,
    pub seed: u64,
    pub distance: f64,
    pub n0: f64,
    pub bound: f64,
    /// Smallest distance between two codebook entries (A).
    pub min_distance: f64,
    pub trials: u64,
    pub errors: Option<u64>,
    pub ser: Option<f64>,
    pub std_err: Option<f64>,
}

/// Power-normalized pilot codebooks, one per distance.
pub fn pilot_codebooks(cfg: &ExperimentConfig) -> Result<Vec<(f64, PilotCodebook)>> {
    let symbols = constellation(cfg)?;
    let sets = cfg.plan().frequency_sets(cfg.omega0())?;
    anyhow::ensure!(sets.len() == 1, "pilot detection uses a single frequency set (plan.n_sets = 1)");
    cfg.layout
        .distances
        .iter()
        .map(|&d| {
            let nets = networks(cfg, d, &symbols)?;
            let powers = nets.iter().map(|n| symbol_power(n, &sets)).collect::<mitopo_core::Result<Vec<_>>>()?;
            let etas = normalize_symbol_power(&powers, &cfg.budget())?;
            Ok((d, build_pilot_codebook(&nets, &sets[0], &etas, 0.0)?))
        })
        .collect()
}

/// Pilot ML detection SER of `codebook` at its own N0.
pub fn pilot_ser(codebook: &PilotCodebook, master_seed: u64, cell: u64, trials: u64, chunk: u64) -> SerEstimate {
    let model = NoiseModel {
        n0: codebook.n0,
        seed: master_seed,
    };
    count_errors(master_seed, cell, trials, chunk, |rng| {
        let k = rng.random_range(0..codebook.len());
        let obs = add_awgn(&codebook.symbols[k], &model, rng).expect("n0 validated");
        ml_detect(&obs, codebook).expect("codebook is non-empty").k_hat != k
    })
}

pub fn pilot_bound(cfg: &ExperimentConfig) -> Result<Vec<PilotRow>> {
    let hash = cfg.hash();
    let levels = cfg.noise_levels();
    let mut rows = Vec::new();
    for (di, (d, base)) in pilot_codebooks(cfg)?.into_iter().enumerate() {
        let min_distance = base
            .distances()
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(move |(k, _)| *k != i).map(|(_, v)| *v))
            .fold(f64::INFINITY, f64::min);
        for (ni, &n0) in levels.iter().enumerate() {
            let cb = PilotCodebook { n0, ..base.clone() };
            let bound = pairwise_error_bound(&cb)?;
            let mc = cfg.pilot.monte_carlo.then(|| {
                pilot_ser(&cb, cfg.master_seed, (di * levels.len() + ni) as u64, cfg.trials, cfg.chunk_size)
            });
            rows.push(PilotRow {
                config_hash: hash.clone(),
                seed: cfg.master_seed,
                distance: d,
                n0,
                bound,
                min_distance,
                trials: mc.map_or(0, |m| m.trials),
                errors: mc.map(|m| m.errors),
                ser: mc.map(|m| m.ser),
                std_err: mc.map(|m| m.std_err),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlindRow {
    pub config_hash: String,
    pub seed: u64,
    pub distance: f64,
    pub n0: f64,
    pub trials: u64,
    pub errors: u64,
    pub ser: f64,
    pub std_err: f64,
    pub below_resolution: bool,
}

pub fn blind_mc(cfg: &ExperimentConfig) -> Result<Vec<BlindRow>> {
    let symbols = constellation(cfg)?;
    let sets = cfg.plan().frequency_sets(cfg.omega0())?;
    let reference = cfg.scene(cfg.layout.distances[0])?;
    let basis = precompute_for_scene(&reference, &symbols, &cfg.prior()?, &sets, &cfg.basis_options())?;
    let hash = cfg.hash();
    let levels = cfg.noise_levels();
    let mut rows = Vec::new();
    for (di, &d) in cfg.layout.distances.iter().enumerate() {
        let nets = networks(cfg, d, &symbols)?;
        let powers = nets.iter().map(|n| symbol_power(n, &sets)).collect::<mitopo_core::Result<Vec<_>>>()?;
        let etas = normalize_symbol_power(&powers, &cfg.budget())?;
        // clean[k][set]: the measured currents, true model at the true D
        let clean: Vec<Vec<CVector>> = nets
            .iter()
            .zip(&etas)
            .map(|(net, &eta)| {
                let q0 = q_zero(net);
                sets.iter()
                    .map(|f| Ok(upsilon_matrix(net, f, Approximation::Exact)? * &q0 * Complex64::new(eta, 0.0)))
                    .collect::<mitopo_core::Result<Vec<_>>>()
            })
            .collect::<mitopo_core::Result<_>>()?;
        for (ni, &n0) in levels.iter().enumerate() {
            let model = NoiseModel {
                n0,
                seed: cfg.master_seed,
            };
            let fusion = cfg.blind.fusion;
            let est = count_errors(
                cfg.master_seed,
                (di * levels.len() + ni) as u64,
                cfg.trials,
                cfg.chunk_size,
                |rng| {
                    let k = rng.random_range(0..clean.len());
                    let obs: Vec<CVector> = clean[k]
                        .iter()
                        .map(|c| add_awgn(c, &model, rng).expect("n0 validated"))
                        .collect();
                    blind_detect(&obs, &basis, fusion).expect("basis matches observations").k_hat != k
                },
            );
            rows.push(BlindRow {
                config_hash: hash.clone(),
                seed: cfg.master_seed,
                distance: d,
                n0,
                trials: est.trials,
                errors: est.errors,
                ser: est.ser,
                std_err: est.std_err,
                below_resolution: est.below_resolution(),
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerRow {
    pub config_hash: String,
    pub seed: u64,
    pub distance: f64,
    pub symbol: usize,
    pub label: String,
    pub eta: f64,
    pub transmit_power: f64,
    pub received_power: f64,
    pub efficiency: f64,
}

pub fn power_sweep(cfg: &ExperimentConfig) -> Result<Vec<PowerRow>> {
    let symbols = constellation(cfg)?;
    let sets = cfg.plan().frequency_sets(cfg.omega0())?;
    let hash = cfg.hash();
    let mut rows = Vec::new();
    for &d in &cfg.layout.distances {
        let nets = networks(cfg, d, &symbols)?;
        let powers = nets.iter().map(|n| symbol_power(n, &sets)).collect::<mitopo_core::Result<Vec<_>>>()?;
        let etas = normalize_symbol_power(&powers, &cfg.budget())?;
        for (k, (p, &eta)) in powers.iter().zip(&etas).enumerate() {
            let s = p.scaled(eta);
            rows.push(PowerRow {
                config_hash: hash.clone(),
                seed: cfg.master_seed,
                distance: d,
                symbol: k,
                label: symbol_label(&symbols[k]),
                eta,
                transmit_power: s.transmit,
                received_power: s.received,
                efficiency: s.received / s.transmit,
            });
        }
    }
    Ok(rows)
}

pub struct Report {
    pub csv: Vec<u8>,
    pub rows: usize,
    pub summary: serde_json::Value,
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner()?)
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    Ok(match cfg.scenario {
        Scenario::EigenSweep => {
            let (rows, summary) = eigen_sweep(cfg)?;
            Report {
                csv: to_csv(&rows)?,
                rows: rows.len(),
                summary: serde_json::to_value(summary)?,
            }
        }
        Scenario::PilotBound => {
            let rows = pilot_bound(cfg)?;
            Report {
                csv: to_csv(&rows)?,
                rows: rows.len(),
                summary: serde_json::Value::Null,
            }
        }
        Scenario::BlindMc => {
            let rows = blind_mc(cfg)?;
            Report {
                csv: to_csv(&rows)?,
                rows: rows.len(),
                summary: serde_json::Value::Null,
            }
        }
        Scenario::PowerSweep => {
            let rows = power_sweep(cfg)?;
            Report {
                csv: to_csv(&rows)?,
                rows: rows.len(),
                summary: serde_json::Value::Null,
            }
        }
    })
}

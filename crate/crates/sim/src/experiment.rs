//! Parallel sweeps and CSV output.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ncim_core::metrics::{complexity_count, efficiency, to_db, Algorithm, ComplexityParams};
use ncim_core::rng::derive_seed;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Experiment, SimConfig};
use crate::trial::{run_trial, Outcome};

/// One CSV row: mean metrics of one algorithm at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub experiment: String,
    pub algorithm: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub trials: usize,
    pub nmse_db_mean: f64,
    pub ader_mean: f64,
    pub ber_total_mean: f64,
    pub avg_iterations: f64,
    pub cm: f64,
    pub ec: f64,
    pub master_seed: u64,
}

/// Seed of trial `trial` at sweep point `point`.
pub fn trial_seed(master: u64, point: usize, trial: usize) -> u64 {
    derive_seed(&[master, point as u64, trial as u64])
}

fn run_trials(
    cfg: &SimConfig,
    algorithms: &[Algorithm],
    master: u64,
    point: usize,
    range: std::ops::Range<usize>,
) -> anyhow::Result<Vec<Vec<Outcome>>> {
    range
        .into_par_iter()
        .map(|t| run_trial(cfg, algorithms, trial_seed(master, point, t)))
        .collect()
}

#[derive(Debug, Default, Clone, Copy)]
struct Sums {
    nmse: f64,
    nmse_count: usize,
    ader: f64,
    ber: f64,
    iterations: f64,
}

/// Runs every sweep point of `exp`. The result does not depend on the size
/// of the thread pool: trials are seeded independently and reduced in order.
pub fn run_experiment(exp: &Experiment) -> anyhow::Result<Vec<Row>> {
    exp.validate()?;
    let algorithms = &exp.params.algorithms;
    let master = exp.params.master_seed;
    let mut rows = Vec::new();
    for (point, (value, cfg)) in exp.points().enumerate() {
        let mut outcomes = run_trials(&cfg, algorithms, master, point, 0..cfg.trials)?;
        let low_ber = |o: &[Vec<Outcome>]| {
            (0..algorithms.len()).any(|a| {
                o.iter().map(|t| t[a].ber).sum::<f64>() / (o.len() as f64) < cfg.extend_below_ber
            })
        };
        if cfg.extended_trials > cfg.trials && low_ber(&outcomes) {
            outcomes.extend(run_trials(
                &cfg,
                algorithms,
                master,
                point,
                cfg.trials..cfg.extended_trials,
            )?);
        }
        let n = outcomes.len();
        for (a, &alg) in algorithms.iter().enumerate() {
            let mut s = Sums::default();
            for t in &outcomes {
                let o = t[a];
                if let Some(v) = o.nmse {
                    s.nmse += v;
                    s.nmse_count += 1;
                }
                s.ader += o.ader;
                s.ber += o.ber;
                s.iterations += o.iterations;
            }
            let ber = s.ber / n as f64;
            let cm = complexity_count(alg, &complexity_params(&cfg));
            let ec = efficiency(ber, cm).map(|e| e.value).unwrap_or(f64::NAN);
            rows.push(Row {
                experiment: exp.name.clone(),
                algorithm: alg.name().to_string(),
                sweep_param: exp.sweep.param.name().to_string(),
                sweep_value: value,
                trials: n,
                nmse_db_mean: if s.nmse_count == 0 {
                    f64::NAN
                } else {
                    to_db(s.nmse / s.nmse_count as f64)
                },
                ader_mean: s.ader / n as f64,
                ber_total_mean: ber,
                avg_iterations: s.iterations / n as f64,
                cm,
                ec,
                master_seed: master,
            });
        }
    }
    Ok(rows)
}

/// Table-I parameters of a configuration, counting the full `T0` iterations.
pub fn complexity_params(cfg: &SimConfig) -> ComplexityParams {
    ComplexityParams {
        devices: cfg.devices,
        per_device: cfg.per_device,
        seq_len: cfg.seq_len,
        antennas: cfg.antennas,
        subframes: cfg.subframes,
        subcarriers: cfg.subcarrier_block,
        iterations: cfg.max_iterations,
        active: cfg.active,
        neighbors: cfg.neighbors,
    }
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Runs `exp` and writes `<dir>/<name>.csv`; returns the path.
pub fn run_to_dir(exp: &Experiment, dir: &Path) -> anyhow::Result<PathBuf> {
    let rows = run_experiment(exp)?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(format!("{}.csv", exp.name));
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_csv(&rows, file)?;
    Ok(path)
}

//! Named experiment catalog, one entry per figure.

use ncim_core::metrics::Algorithm;

use crate::config::{Experiment, SimConfig, SweepParam, SweepSpec};

pub const PRESET_NAMES: [&str; 5] = ["fig5", "fig6", "fig7", "fig8", "fig9"];

/// Speeds of the mobility study, km/h.
pub const FIG9_SPEEDS_KMH: [f64; 3] = [0.0, 120.0, 180.0];

pub fn kmh_to_mps(v: f64) -> f64 {
    v / 3.6
}

fn small_mimo(per_device: usize) -> SimConfig {
    SimConfig {
        antennas: 2,
        per_device,
        subframes: 2,
        subcarrier_block: 8,
        algorithms: vec![Algorithm::StfJabid, Algorithm::StfJ1n1, Algorithm::Somp],
        ..Default::default()
    }
}

fn large_mimo() -> SimConfig {
    SimConfig {
        antennas: 32,
        per_device: 2,
        snr_db: 5.0,
        algorithms: vec![Algorithm::AeJabid, Algorithm::Benchmark1, Algorithm::Somp],
        ..Default::default()
    }
}

fn sweep(name: &str, param: SweepParam, values: &[f64], params: SimConfig) -> Experiment {
    Experiment {
        name: name.to_string(),
        sweep: SweepSpec {
            param,
            values: values.to_vec(),
        },
        params,
    }
}

/// Experiments of preset `name`. The mobility preset expands into one sweep
/// over `L_F` per speed.
pub fn preset(name: &str) -> Result<Vec<Experiment>, ncim_core::Error> {
    let lengths = [16.0, 20.0, 24.0, 28.0, 32.0, 36.0, 40.0];
    Ok(match name {
        "fig5" => vec![sweep(
            "fig5",
            SweepParam::L,
            &lengths,
            SimConfig {
                snr_db: 15.0,
                ..small_mimo(2)
            },
        )],
        "fig6" => vec![sweep(
            "fig6",
            SweepParam::SnrDb,
            &[0.0, 3.0, 6.0, 9.0, 12.0, 15.0],
            SimConfig {
                seq_len: 40,
                ..small_mimo(4)
            },
        )],
        "fig7" => vec![sweep("fig7", SweepParam::L, &lengths, large_mimo())],
        "fig8" => vec![sweep(
            "fig8",
            SweepParam::M,
            &[16.0, 24.0, 32.0, 48.0, 64.0],
            SimConfig {
                seq_len: 30,
                ..large_mimo()
            },
        )],
        "fig9" => FIG9_SPEEDS_KMH
            .iter()
            .map(|&v| {
                sweep(
                    &format!("fig9_v{}kmh", v as u32),
                    SweepParam::LF,
                    &[1.0, 2.0, 4.0, 8.0],
                    SimConfig {
                        seq_len: 32,
                        snr_db: 10.0,
                        v_max: kmh_to_mps(v),
                        tfst: true,
                        algorithms: vec![Algorithm::AeJabid],
                        ..large_mimo()
                    },
                )
            })
            .collect(),
        other => {
            return Err(ncim_core::Error::InvalidArgument {
                name: "preset",
                reason: format!(
                    "unknown preset `{other}`; known: {}",
                    PRESET_NAMES.join(", ")
                ),
            })
        }
    })
}

/// Shrinks an experiment for quick runs: few trials and no extension.
pub fn desk_scale(exp: &mut Experiment) {
    exp.params.trials = 20;
    exp.params.extended_trials = 0;
}

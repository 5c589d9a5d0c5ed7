//! One Monte Carlo trial: ground truth, channel, received signal, detectors, metrics.

use ncim_core::ae::{run_ae_jabid, AeConfig, AeResult};
use ncim_core::baselines::{run_benchmark1, run_somp, SompConfig};
use ncim_core::channel::{draw_paths, AngularTransform};
use ncim_core::codebook::Codebook;
use ncim_core::mat::CMat;
use ncim_core::metrics::{combine_slabs, count_errors, nmse, Algorithm, Detection, ErrorCounts};
use ncim_core::rng::TrialRng;
use ncim_core::signal::{
    assemble_x, draw_ground_truth, noise_variance, slabs_to_angular, synthesize_received,
    synthesize_tfst_received, FrameLayout, FreqChannel, GroundTruth, ReceivedSignal, TfstLayout,
};
use ncim_core::stf::{run_stf_jabid, StfConfig};
use rand::SeedableRng;

use crate::config::SimConfig;

/// Metrics of one detector on one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Outcome {
    /// `None` when the reference channel is all zero (no active device).
    pub nmse: Option<f64>,
    pub ader: f64,
    pub ber: f64,
    pub iterations: f64,
}

/// Everything a detector may look at, plus the reference it is scored against.
pub struct Frame {
    pub layout: FrameLayout,
    pub codebook: Codebook,
    pub truth: GroundTruth,
    /// Spatial equivalent channel, `KI × M'`.
    pub x: CMat,
    pub received: ReceivedSignal,
}

/// Draws the frame for `seed`. Every detector of a trial sees this same frame.
pub fn draw_frame(cfg: &SimConfig, seed: u64) -> anyhow::Result<Frame> {
    let mut rng = TrialRng::seed_from_u64(seed);
    let layout = FrameLayout {
        devices: cfg.devices,
        per_device: cfg.per_device,
        seq_len: cfg.seq_len,
        antennas: cfg.antennas,
        subframes: cfg.subframes,
        subcarriers: cfg.subcarrier_block,
    };
    let codebook = Codebook::generate_with(cfg.devices, cfg.per_device, cfg.seq_len, &mut rng)?;
    let truth = draw_ground_truth(&layout, cfg.active, &mut rng)?;
    let params = cfg.channel_params();
    let paths = draw_paths(&params, cfg.devices, &mut rng)?;
    let channels = FreqChannel::compute(
        &paths,
        &params,
        &layout,
        cfg.first_subcarrier,
        Some(truth.activity()),
    )?;
    let x = assemble_x(&truth, &channels, &layout)?;
    let sigma2 = noise_variance(cfg.snr()?, cfg.active, cfg.seq_len);
    let received = if cfg.tfst {
        let tl = TfstLayout {
            groups: cfg.groups,
            first_subcarrier: cfg.first_subcarrier,
        };
        synthesize_tfst_received(&codebook, &truth, &paths, &params, tl, sigma2, &mut rng)?
    } else {
        synthesize_received(&codebook, &x, sigma2, cfg.antennas, &mut rng)?
    };
    Ok(Frame {
        layout,
        codebook,
        truth,
        x,
        received,
    })
}

fn outcome(est: &CMat, truth: &CMat, ader: f64, ber: f64, iterations: f64) -> Outcome {
    Outcome {
        nmse: nmse(est, truth).ok(),
        ader,
        ber,
        iterations,
    }
}

fn score_whole(det: &Detection, frame: &Frame) -> anyhow::Result<ErrorCounts> {
    let slabs: Vec<usize> = (0..frame.layout.slabs()).collect();
    Ok(count_errors(
        det,
        &frame.truth,
        &slabs,
        frame.layout.per_device,
    )?)
}

/// Runs `alg` on `frame`.
pub fn detect(alg: Algorithm, cfg: &SimConfig, frame: &Frame) -> anyhow::Result<Outcome> {
    let rx = &frame.received;
    let cb = &frame.codebook;
    let m = frame.layout.antennas;
    let slabs = frame.layout.slabs();
    let stf_cfg = StfConfig {
        amp: cfg.amp(),
        threshold: cfg.threshold_stf,
    };
    match alg {
        Algorithm::StfJabid => {
            let res = run_stf_jabid(&rx.y, cb, rx.noise_var, m, &stf_cfg)?;
            let c = score_whole(&res.detection, frame)?;
            Ok(outcome(
                &res.x_hat,
                &frame.x,
                c.ader(),
                c.ber_total(),
                res.iterations as f64,
            ))
        }
        Algorithm::StfJ1n1 => {
            let mut parts = Vec::with_capacity(slabs);
            let mut est = Vec::with_capacity(slabs);
            let mut iters = 0.0;
            for s in 0..slabs {
                let res = run_stf_jabid(&rx.slab(s)?, cb, rx.noise_var, m, &stf_cfg)?;
                parts.push(count_errors(
                    &res.detection,
                    &frame.truth,
                    &[s],
                    frame.layout.per_device,
                )?);
                iters += res.iterations as f64;
                est.push(res.x_hat);
            }
            let (ader, ber) = combine_slabs(&parts);
            Ok(outcome(
                &CMat::hstack(&est)?,
                &frame.x,
                ader,
                ber,
                iters / slabs as f64,
            ))
        }
        Algorithm::AeJabid | Algorithm::Benchmark1 => {
            let transform = AngularTransform::new(m)?;
            let r = slabs_to_angular(&rx.y, m, &transform)?;
            let w = slabs_to_angular(&frame.x, m, &transform)?;
            let ae_cfg = AeConfig {
                amp: cfg.amp(),
                threshold: cfg.threshold_ae,
                scheme: cfg.scheme()?,
            };
            let mut parts = Vec::with_capacity(slabs);
            let mut est = Vec::with_capacity(slabs);
            let mut iters = 0.0;
            for s in 0..slabs {
                let rs = r.columns(s * m, m)?;
                // The angular transform is unitary, so the noise variance carries over.
                let res: AeResult = if alg == Algorithm::AeJabid {
                    run_ae_jabid(&rs, cb, rx.noise_var, &ae_cfg)?
                } else {
                    run_benchmark1(&rs, cb, rx.noise_var, &ae_cfg.amp, ae_cfg.threshold)?
                };
                parts.push(count_errors(
                    &res.detection,
                    &frame.truth,
                    &[s],
                    frame.layout.per_device,
                )?);
                iters += res.iterations as f64;
                est.push(res.w_hat);
            }
            let (ader, ber) = combine_slabs(&parts);
            Ok(outcome(
                &CMat::hstack(&est)?,
                &w,
                ader,
                ber,
                iters / slabs as f64,
            ))
        }
        Algorithm::Somp => {
            let somp_cfg = SompConfig {
                noise_power: rx.noise_var,
                max_atoms: cfg.seq_len.min(cfg.devices * cfg.per_device),
            };
            let mut parts = Vec::with_capacity(slabs);
            let mut est = Vec::with_capacity(slabs);
            let mut atoms = 0.0;
            for s in 0..slabs {
                let res = run_somp(&rx.slab(s)?, cb, &somp_cfg)?;
                parts.push(count_errors(
                    &res.detection,
                    &frame.truth,
                    &[s],
                    frame.layout.per_device,
                )?);
                atoms += res.support.len() as f64;
                est.push(res.x_hat);
            }
            let (ader, ber) = combine_slabs(&parts);
            Ok(outcome(
                &CMat::hstack(&est)?,
                &frame.x,
                ader,
                ber,
                atoms / slabs as f64,
            ))
        }
        Algorithm::GmmvAmp | Algorithm::SectionwiseAmp => {
            anyhow::bail!("`{alg}` has no detector implementation")
        }
    }
}

/// Draws one frame and runs every requested detector on it.
pub fn run_trial(
    cfg: &SimConfig,
    algorithms: &[Algorithm],
    seed: u64,
) -> anyhow::Result<Vec<Outcome>> {
    let frame = draw_frame(cfg, seed)?;
    algorithms.iter().map(|&a| detect(a, cfg, &frame)).collect()
}

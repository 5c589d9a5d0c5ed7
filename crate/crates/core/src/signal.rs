//! Ground-truth draws and received-signal synthesis.
//!
//! A frame spans `J` sub-frames on `Ñ` contiguous subcarriers. Every
//! (subcarrier, sub-frame) pair is a *slab* of `M` measurement columns; slab
//! `s = ñ·J + j` (0-based) occupies columns `s·M .. (s+1)·M` of both `X` and
//! `Y`, matching the `[Y_1, …, Y_Ñ]`, `Y_n = [Y_n^1, …, Y_n^J]` stacking.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;

use crate::channel::{freq_channel, steering_vector, AngularTransform, ChannelParams, PathSet};
use crate::codebook::{selection_to_bits, Codebook};
use crate::error::{invalid, Error, Result};
use crate::mat::{axpy, CMat};
use crate::rng::complex_normal;

/// Dimensions of one access frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameLayout {
    pub devices: usize,
    pub per_device: usize,
    pub seq_len: usize,
    pub antennas: usize,
    pub subframes: usize,
    pub subcarriers: usize,
}

impl FrameLayout {
    pub fn slabs(&self) -> usize {
        self.subframes * self.subcarriers
    }

    /// `M' = J·M·Ñ`.
    pub fn columns(&self) -> usize {
        self.slabs() * self.antennas
    }

    pub fn unknowns(&self) -> usize {
        self.devices * self.per_device
    }

    /// (0-based subcarrier offset, 0-based sub-frame) of slab `s`.
    pub fn slab_position(&self, s: usize) -> (usize, usize) {
        (s / self.subframes, s % self.subframes)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    active: Vec<bool>,
    /// `[k][slab]`, 1-based selection, 0 for inactive devices.
    selections: Vec<Vec<usize>>,
    per_device: usize,
}

impl GroundTruth {
    pub fn new(active: Vec<bool>, selections: Vec<Vec<usize>>, per_device: usize) -> Result<Self> {
        if active.len() != selections.len() {
            return Err(Error::ShapeMismatch(
                "activity and selection lengths differ".into(),
            ));
        }
        for (a, sel) in active.iter().zip(&selections) {
            for &s in sel {
                if *a && (s == 0 || s > per_device) {
                    return Err(invalid("selections", "active selection outside 1..=I"));
                }
                if !*a && s != 0 {
                    return Err(invalid("selections", "inactive device with a selection"));
                }
            }
        }
        Ok(Self {
            active,
            selections,
            per_device,
        })
    }

    pub fn devices(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.active[k]
    }

    pub fn activity(&self) -> &[bool] {
        &self.active
    }

    /// 0-based indices of active devices in increasing order.
    pub fn active_set(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&k| self.active[k]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|a| **a).count()
    }

    pub fn selection(&self, k: usize, slab: usize) -> Option<usize> {
        match self.selections[k][slab] {
            0 => None,
            s => Some(s),
        }
    }

    pub fn selections(&self) -> &[Vec<usize>] {
        &self.selections
    }

    /// Payload bits carried by device `k` in `slab`.
    pub fn bits(&self, k: usize, slab: usize) -> Option<Vec<u8>> {
        self.selection(k, slab)
            .map(|s| selection_to_bits(s, self.per_device).expect("validated at construction"))
    }
}

/// Uniform size-`active` subset of devices with i.i.d. uniform selections.
pub fn draw_ground_truth<R: Rng + ?Sized>(
    layout: &FrameLayout,
    active: usize,
    rng: &mut R,
) -> Result<GroundTruth> {
    if active > layout.devices {
        return Err(invalid(
            "Ka",
            alloc::format!("{active} active devices out of {}", layout.devices),
        ));
    }
    let mut flags = vec![false; layout.devices];
    for k in sample(rng, layout.devices, active) {
        flags[k] = true;
    }
    let slabs = layout.slabs();
    let selections = flags
        .iter()
        .map(|&a| {
            (0..slabs)
                .map(|_| {
                    if a {
                        rng.random_range(1..=layout.per_device)
                    } else {
                        0
                    }
                })
                .collect()
        })
        .collect();
    GroundTruth::new(flags, selections, layout.per_device)
}

/// Frequency-domain channels `[device][slab] -> M-vector`. Devices that were
/// skipped at construction have empty entries.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqChannel {
    antennas: usize,
    h: Vec<Vec<Vec<Complex64>>>,
}

impl FreqChannel {
    /// Evaluates every slab channel. Slab `(ñ, j)` uses subcarrier
    /// `first_subcarrier + ñ` frozen at the start of sub-frame `j`.
    pub fn compute(
        paths: &PathSet,
        params: &ChannelParams,
        layout: &FrameLayout,
        first_subcarrier: usize,
        only: Option<&[bool]>,
    ) -> Result<Self> {
        if first_subcarrier == 0 || first_subcarrier + layout.subcarriers - 1 > params.subcarriers {
            return Err(invalid("first_subcarrier", "subcarrier block exceeds N"));
        }
        if paths.devices.len() != layout.devices {
            return Err(Error::ShapeMismatch(
                "path set does not cover every device".into(),
            ));
        }
        let h = paths
            .devices
            .iter()
            .enumerate()
            .map(|(k, dev)| {
                if only.is_some_and(|m| !m[k]) {
                    return Vec::new();
                }
                (0..layout.slabs())
                    .map(|s| {
                        let (n, j) = layout.slab_position(s);
                        let t = params.subframe_start(j + 1, layout.seq_len);
                        freq_channel(dev, first_subcarrier + n, t, params)
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            antennas: params.antennas,
            h,
        })
    }

    pub fn from_parts(antennas: usize, h: Vec<Vec<Vec<Complex64>>>) -> Self {
        Self { antennas, h }
    }

    pub fn get(&self, k: usize, slab: usize) -> Option<&[Complex64]> {
        self.h.get(k)?.get(slab).map(|v| v.as_slice())
    }
}

/// Equivalent channel `X` (`KI × M'`): row `k·I + i` of slab `s` is `h^T`
/// when device `k` is active and picked sequence `i+1` there, zero otherwise.
pub fn assemble_x(gt: &GroundTruth, channels: &FreqChannel, layout: &FrameLayout) -> Result<CMat> {
    if gt.devices() != layout.devices {
        return Err(Error::ShapeMismatch(
            "ground truth does not match the layout".into(),
        ));
    }
    let m = layout.antennas;
    let mut x = CMat::zeros(layout.unknowns(), layout.columns());
    for k in gt.active_set() {
        for s in 0..layout.slabs() {
            let sel = gt.selection(k, s).expect("active device has a selection");
            let h = channels
                .get(k, s)
                .filter(|h| h.len() == m)
                .ok_or_else(|| Error::ShapeMismatch(alloc::format!("no channel for device {k}")))?;
            let row = k * layout.per_device + sel - 1;
            for (a, &v) in h.iter().enumerate() {
                x[(row, s * m + a)] = v;
            }
        }
    }
    Ok(x)
}

/// Noise variance giving `snr_db` per received sample when `active` devices
/// each contribute `1/L` average power (unit-power channel taps).
pub fn noise_variance(snr_db: f64, active: usize, seq_len: usize) -> f64 {
    (active as f64 / seq_len as f64) / libm::pow(10.0, snr_db / 10.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedSignal {
    pub y: CMat,
    pub noise_var: f64,
    /// Columns per (subcarrier, sub-frame) slab.
    pub slab_width: usize,
}

impl ReceivedSignal {
    pub fn slabs(&self) -> usize {
        self.y.cols() / self.slab_width
    }

    pub fn slab(&self, s: usize) -> Result<CMat> {
        self.y.columns(s * self.slab_width, self.slab_width)
    }
}

/// `Y = Φ X + N` with `N` i.i.d. CN(0, `noise_var`); `noise_var = 0` is noiseless.
pub fn synthesize_received<R: Rng + ?Sized>(
    cb: &Codebook,
    x: &CMat,
    noise_var: f64,
    slab_width: usize,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    if !(noise_var >= 0.0) {
        return Err(invalid("noise_var", "must be non-negative"));
    }
    if slab_width == 0 || !x.cols().is_multiple_of(slab_width) {
        return Err(invalid("slab_width", "must divide the column count"));
    }
    let mut y = cb.matrix().matmul(x)?;
    add_noise(&mut y, noise_var, rng);
    Ok(ReceivedSignal {
        y,
        noise_var,
        slab_width,
    })
}

fn add_noise<R: Rng + ?Sized>(y: &mut CMat, noise_var: f64, rng: &mut R) {
    if noise_var > 0.0 {
        for v in y.as_mut_slice() {
            *v += complex_normal(rng, noise_var);
        }
    }
}

/// Applies the angular transform to every slab of a received signal (or of an
/// equivalent channel matrix when given one with `slab_width = M`).
pub fn to_angular(rx: &ReceivedSignal, transform: &AngularTransform) -> Result<ReceivedSignal> {
    Ok(ReceivedSignal {
        y: slabs_to_angular(&rx.y, rx.slab_width, transform)?,
        noise_var: rx.noise_var,
        slab_width: rx.slab_width,
    })
}

/// Angular-domain version of a matrix made of `width`-column slabs.
pub fn slabs_to_angular(mat: &CMat, width: usize, transform: &AngularTransform) -> Result<CMat> {
    if width != transform.antennas() || !mat.cols().is_multiple_of(width) {
        return Err(invalid(
            "slab_width",
            alloc::format!(
                "slabs of width {width} cannot take an {}-point angular transform",
                transform.antennas()
            ),
        ));
    }
    let blocks = (0..mat.cols() / width)
        .map(|s| transform.apply(&mat.columns(s * width, width)?))
        .collect::<Result<Vec<_>>>()?;
    CMat::hstack(&blocks)
}

/// Splits a length-`L` sequence into `groups` contiguous segments of
/// `L / groups` symbols; segment `f` rides on the `f`-th subcarrier of the group.
pub fn tfst_map(seq: &[Complex64], groups: usize) -> Result<Vec<Vec<Complex64>>> {
    if groups == 0 || !seq.len().is_multiple_of(groups) {
        return Err(invalid(
            "L_F",
            alloc::format!("L = {} is not divisible by L_F = {groups}", seq.len()),
        ));
    }
    Ok(seq.chunks(seq.len() / groups).map(|c| c.to_vec()).collect())
}

/// Inverse of [`tfst_map`].
pub fn tfst_concat(segments: &[Vec<Complex64>]) -> Vec<Complex64> {
    segments.concat()
}

/// Placement of a time-frequency spread transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TfstLayout {
    /// `L_F`, number of contiguous subcarriers.
    pub groups: usize,
    /// 1-based index of the first subcarrier.
    pub first_subcarrier: usize,
}

/// `(1/N) Σ_{s<N} exp(j2π x s)`: the gain that a tone offset by `x` bins
/// leaks into an FFT bin.
pub fn ici_kernel(x: f64, n: usize) -> Complex64 {
    let n_f = n as f64;
    let den = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * PI * x);
    if den.norm() < 1e-12 {
        // x is an integer: every sample adds coherently.
        return Complex64::new(1.0, 0.0);
    }
    let num = Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, 2.0 * PI * x * n_f);
    num / (den * n_f)
}

/// Received `L × M` signal when every active device spreads its sequence over
/// `L_F` contiguous subcarriers and `L_T = L / L_F` OFDM symbols through the
/// time-varying multipath channel.
///
/// Each path rotates continuously with its Doppler shift during the useful
/// part of every symbol; demodulating with an `N`-point DFT then yields, for
/// output subcarrier `q` and symbol `t`,
///
/// ```text
/// y = Σ_p g_p a(θ_p) e^{j2π ν_p t_0} Σ_f s_f e^{-j2π f_f τ_p} D(ν_p T_s + (f - q)/N)
/// ```
///
/// with `D` the [`ici_kernel`]. The `f = q` term is the attenuated desired
/// signal, the rest is inter-subcarrier interference. Only the group's own
/// subcarriers are occupied. Row `q·L_T + t` of the output carries symbol `t`
/// of subcarrier `q`, mirroring the sequence split of [`tfst_map`].
pub fn synthesize_tfst_received<R: Rng + ?Sized>(
    cb: &Codebook,
    gt: &GroundTruth,
    paths: &PathSet,
    params: &ChannelParams,
    layout: TfstLayout,
    noise_var: f64,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    let l = cb.seq_len();
    let groups = layout.groups;
    if groups == 0 || !l.is_multiple_of(groups) {
        return Err(invalid(
            "L_F",
            alloc::format!("L = {l} is not divisible by L_F = {groups}"),
        ));
    }
    if layout.first_subcarrier == 0 || layout.first_subcarrier + groups - 1 > params.subcarriers {
        return Err(invalid("first_subcarrier", "subcarrier group exceeds N"));
    }
    if !(noise_var >= 0.0) {
        return Err(invalid("noise_var", "must be non-negative"));
    }
    let symbols = l / groups;
    let m = params.antennas;
    let ts = params.sample_period();
    let n = params.subcarriers;
    let mut y = CMat::zeros(l, m);
    let mut rows = vec![Complex64::new(0.0, 0.0); l];

    for k in gt.active_set() {
        let sel = gt
            .selection(k, 0)
            .ok_or_else(|| invalid("gt", "no selection in slab 0"))?;
        let seq = cb.sequence_of(k + 1, sel)?;
        let dev = &paths.devices[k];
        if dev.paths.is_empty() {
            continue;
        }
        let norm = libm::sqrt(m as f64 / dev.paths.len() as f64);
        for p in &dev.paths {
            // Scalar response of every output row for this path.
            let delay_phase: Vec<Complex64> = (0..groups)
                .map(|f| {
                    let freq = params.subcarrier_frequency(layout.first_subcarrier + f);
                    Complex64::from_polar(1.0, -2.0 * PI * p.delay * freq)
                })
                .collect();
            let leak: Vec<Complex64> = (0..2 * groups - 1)
                .map(|d| {
                    let offset = d as f64 - (groups as f64 - 1.0);
                    ici_kernel(p.doppler * ts + offset / n as f64, n)
                })
                .collect();
            for t in 0..symbols {
                let t0 = ((t * (n + params.cyclic_prefix)) + params.cyclic_prefix) as f64 * ts;
                let rot = Complex64::from_polar(1.0, 2.0 * PI * p.doppler * t0);
                for q in 0..groups {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for f in 0..groups {
                        acc += seq[f * symbols + t] * delay_phase[f] * leak[f + groups - 1 - q];
                    }
                    rows[q * symbols + t] = rot * acc;
                }
            }
            let a = steering_vector(p.aoa, m);
            for (ant, &am) in a.iter().enumerate() {
                let coef = p.gain * am * norm;
                axpy(coef, &rows, y.col_mut(ant));
            }
        }
    }
    add_noise(&mut y, noise_var, rng);
    Ok(ReceivedSignal {
        y,
        noise_var,
        slab_width: m,
    })
}

/// Mean magnitude of the desired-signal gain `|D(ν T_s)|` over the paths of
/// the given devices, a measured stand-in for the ICI attenuation factor.
pub fn measured_ici_attenuation(paths: &PathSet, devices: &[usize], params: &ChannelParams) -> f64 {
    let ts = params.sample_period();
    let mut sum = 0.0;
    let mut count = 0usize;
    for &k in devices {
        for p in &paths.devices[k].paths {
            sum += ici_kernel(p.doppler * ts, params.subcarriers).norm();
            count += 1;
        }
    }
    if count == 0 {
        1.0
    } else {
        sum / count as f64
    }
}

//! Detection outcomes, error metrics and complexity accounting.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::codebook::selection_to_bits;
use crate::error::{invalid, Error, Result};
use crate::mat::CMat;
use crate::signal::GroundTruth;

/// Detector output: active devices (0-based, increasing) and, for each, one
/// 1-based sequence selection per slab.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Detection {
    pub active: Vec<usize>,
    pub selections: Vec<Vec<usize>>,
}

impl Detection {
    pub fn new(active: Vec<usize>, selections: Vec<Vec<usize>>) -> Self {
        debug_assert_eq!(active.len(), selections.len());
        Self { active, selections }
    }

    pub fn selection(&self, device: usize) -> Option<&[usize]> {
        self.active
            .binary_search(&device)
            .ok()
            .map(|p| self.selections[p].as_slice())
    }
}

/// `‖est − truth‖_F / ‖truth‖_F`.
pub fn nmse(est: &CMat, truth: &CMat) -> Result<f64> {
    if est.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(
            "estimate and truth differ in shape".into(),
        ));
    }
    let den = truth.frobenius_norm();
    if den == 0.0 {
        return Err(Error::UndefinedMetric("NMSE of an all-zero reference"));
    }
    Ok(est.sub(truth)?.frobenius_norm() / den)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * libm::log10(x)
}

/// `(|truth \ detected| + |detected \ truth|) / K`.
pub fn ader(detected: &[usize], truth: &[usize], devices: usize) -> f64 {
    let missed = truth.iter().filter(|k| !detected.contains(k)).count();
    let false_alarms = detected.iter().filter(|k| !truth.contains(k)).count();
    (missed + false_alarms) as f64 / devices as f64
}

/// Error counts of one detection against the ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    pub devices: usize,
    pub true_active: usize,
    pub missed: usize,
    pub false_alarms: usize,
    pub bit_errors: usize,
    /// Bits per selection, `r`.
    pub bits: usize,
    /// Selections per device covered by this detection.
    pub selections: usize,
}

impl ErrorCounts {
    pub fn ader(&self) -> f64 {
        (self.missed + self.false_alarms) as f64 / self.devices as f64
    }

    pub fn ber_numerator(&self) -> usize {
        (self.missed + self.false_alarms) * self.bits * self.selections + self.bit_errors
    }

    pub fn ber_denominator(&self) -> usize {
        (self.true_active + self.false_alarms) * self.bits * self.selections
    }

    /// `((Em+Ef)·r + Bd) / ((Ka+Ef)·r)`, summed over selections; zero when
    /// there was nothing to transmit or detect.
    pub fn ber_total(&self) -> f64 {
        match self.ber_denominator() {
            0 => 0.0,
            d => self.ber_numerator() as f64 / d as f64,
        }
    }
}

/// Scores `det` against the slabs `slabs` of `gt`; `det.selections[..][j]`
/// refers to slab `slabs[j]`.
pub fn count_errors(
    det: &Detection,
    gt: &GroundTruth,
    slabs: &[usize],
    per_device: usize,
) -> Result<ErrorCounts> {
    let truth = gt.active_set();
    let bits = per_device.trailing_zeros() as usize;
    let mut counts = ErrorCounts {
        devices: gt.devices(),
        true_active: truth.len(),
        bits,
        selections: slabs.len(),
        ..Default::default()
    };
    counts.missed = truth
        .iter()
        .filter(|k| det.selection(**k).is_none())
        .count();
    for (&k, sel) in det.active.iter().zip(&det.selections) {
        if k >= gt.devices() {
            return Err(Error::IndexOutOfRange {
                name: "device",
                index: k + 1,
                max: gt.devices(),
            });
        }
        if !gt.is_active(k) {
            counts.false_alarms += 1;
            continue;
        }
        if sel.len() != slabs.len() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "{} selections for {} slabs",
                sel.len(),
                slabs.len()
            )));
        }
        for (&est, &s) in sel.iter().zip(slabs) {
            let want = gt.selection(k, s).expect("active device");
            if bits == 0 {
                continue;
            }
            let a = selection_to_bits(est, per_device)?;
            let b = selection_to_bits(want, per_device)?;
            counts.bit_errors += a.iter().zip(&b).filter(|(x, y)| x != y).count();
        }
    }
    Ok(counts)
}

/// Combines per-slab detections of one frame: ADER is averaged over slabs,
/// BER is the ratio of summed numerators and denominators.
pub fn combine_slabs(parts: &[ErrorCounts]) -> (f64, f64) {
    if parts.is_empty() {
        return (0.0, 0.0);
    }
    let ader = parts.iter().map(|p| p.ader()).sum::<f64>() / parts.len() as f64;
    let num: usize = parts.iter().map(|p| p.ber_numerator()).sum();
    let den: usize = parts.iter().map(|p| p.ber_denominator()).sum();
    let ber = if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    };
    (ader, ber)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Algorithm {
    StfJabid,
    /// STF-JABID run on each (subcarrier, sub-frame) slab alone.
    StfJ1n1,
    AeJabid,
    Benchmark1,
    Somp,
    GmmvAmp,
    SectionwiseAmp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::StfJabid,
        Algorithm::StfJ1n1,
        Algorithm::AeJabid,
        Algorithm::Benchmark1,
        Algorithm::Somp,
        Algorithm::GmmvAmp,
        Algorithm::SectionwiseAmp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::StfJabid => "stf_jabid",
            Algorithm::StfJ1n1 => "stf_j1n1",
            Algorithm::AeJabid => "ae_jabid",
            Algorithm::Benchmark1 => "benchmark1",
            Algorithm::Somp => "somp",
            Algorithm::GmmvAmp => "gmmv_amp",
            Algorithm::SectionwiseAmp => "sectionwise_amp",
        }
    }

    /// Whether the harness can run this detector (the last two only have
    /// complexity rows).
    pub fn is_simulated(self) -> bool {
        !matches!(self, Algorithm::GmmvAmp | Algorithm::SectionwiseAmp)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| invalid("algorithm", alloc::format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexityParams {
    pub devices: usize,
    pub per_device: usize,
    pub seq_len: usize,
    pub antennas: usize,
    pub subframes: usize,
    pub subcarriers: usize,
    pub iterations: usize,
    pub active: usize,
    pub neighbors: usize,
}

/// Complex multiplications per frame.
pub fn complexity_count(alg: Algorithm, p: &ComplexityParams) -> f64 {
    let (k, i, l, m) = (
        p.devices as f64,
        p.per_device as f64,
        p.seq_len as f64,
        p.antennas as f64,
    );
    let slabs = (p.subframes * p.subcarriers) as f64;
    let t = p.iterations as f64;
    let ki = k * i;
    let stf = |cols: f64| {
        t * (4.0 * ki * l * cols
            + 7.25 * ki * cols
            + 1.25 * ki * i * cols
            + 0.75 * ki * i * cols * cols)
    };
    match alg {
        Algorithm::AeJabid => {
            slabs * t * (4.0 * ki * l * m + 7.75 * ki * m + 0.5 * p.neighbors as f64 * ki * m)
        }
        Algorithm::Benchmark1 | Algorithm::GmmvAmp => slabs * t * (4.0 * ki * l * m + 8.0 * ki * m),
        Algorithm::SectionwiseAmp => slabs * t * 2.0 * ki * l * m,
        Algorithm::StfJabid => stf(slabs * m),
        Algorithm::StfJ1n1 => slabs * stf(m),
        Algorithm::Somp => {
            let ka = p.active as f64;
            let greedy: f64 = (1..=p.active)
                .map(|s| {
                    let s = s as f64;
                    s * s * s + 2.0 * l * s * s + 2.0 * l * m * s
                })
                .sum();
            slabs * (ka * ki * l * m + greedy)
        }
    }
}

/// BER gain per decade of complexity, `-log10(BER) / log10(C_m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Efficiency {
    pub value: f64,
    /// BER was zero; `value` is `+inf`.
    pub error_free: bool,
}

pub fn efficiency(ber: f64, cm: f64) -> Result<Efficiency> {
    if !(cm > 1.0) {
        return Err(invalid("cm", "complexity must exceed 1"));
    }
    if ber == 0.0 {
        return Ok(Efficiency {
            value: f64::INFINITY,
            error_free: true,
        });
    }
    if !(ber > 0.0 && ber <= 1.0) {
        return Err(invalid("ber", "must lie in [0, 1]"));
    }
    Ok(Efficiency {
        value: -libm::log10(ber) / libm::log10(cm),
        error_free: false,
    })
}

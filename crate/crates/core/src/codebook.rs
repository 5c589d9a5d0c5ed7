//! Bernoulli signature codebooks.
//!
//! Every device owns `I = 2^r` length-`L` sequences whose entries are drawn from
//! the QPSK-like alphabet `(±1 ± j)/sqrt(2L)`. All `K·I` columns are stacked into
//! one `L × KI` sensing matrix, device-major: column `(k-1)·I + (i-1)` (0-based)
//! holds sequence `i` of device `k`.

use alloc::vec::Vec;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};

use crate::error::{invalid, Error, Result};
use crate::mat::CMat;
use crate::rng::TrialRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    devices: usize,
    per_device: usize,
    bits: u32,
    phi: CMat,
}

impl Codebook {
    /// Draws a codebook for `devices` devices with `per_device` sequences of
    /// length `seq_len`. Deterministic in `seed`.
    pub fn generate(devices: usize, per_device: usize, seq_len: usize, seed: u64) -> Result<Self> {
        let mut rng = TrialRng::seed_from_u64(seed);
        Self::generate_with(devices, per_device, seq_len, &mut rng)
    }

    /// Same as [`Codebook::generate`] but drawing from an existing stream.
    pub fn generate_with<R: Rng + ?Sized>(
        devices: usize,
        per_device: usize,
        seq_len: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if devices == 0 {
            return Err(invalid("K", "need at least one device"));
        }
        if seq_len == 0 {
            return Err(invalid("L", "sequence length must be positive"));
        }
        let bits = bits_per_selection(per_device)?;
        let amp = 1.0 / libm::sqrt(2.0 * seq_len as f64);
        let n = seq_len * devices * per_device;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let re = if rng.random::<bool>() { amp } else { -amp };
            let im = if rng.random::<bool>() { amp } else { -amp };
            data.push(Complex64::new(re, im));
        }
        let phi = CMat::from_col_major(seq_len, devices * per_device, data)?;
        Ok(Self {
            devices,
            per_device,
            bits,
            phi,
        })
    }

    /// Wraps an arbitrary sensing matrix. Used by tests and by the baselines,
    /// which accept any dictionary.
    pub fn from_matrix(phi: CMat, per_device: usize) -> Result<Self> {
        let bits = if per_device == 1 {
            0
        } else {
            bits_per_selection(per_device)?
        };
        if phi.cols() == 0 || !phi.cols().is_multiple_of(per_device) {
            return Err(invalid(
                "phi",
                alloc::format!(
                    "{} columns is not a multiple of I = {per_device}",
                    phi.cols()
                ),
            ));
        }
        Ok(Self {
            devices: phi.cols() / per_device,
            per_device,
            bits,
            phi,
        })
    }

    pub fn devices(&self) -> usize {
        self.devices
    }

    pub fn per_device(&self) -> usize {
        self.per_device
    }

    pub fn seq_len(&self) -> usize {
        self.phi.rows()
    }

    /// Bits carried by one sequence selection, `log2(I)`.
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn matrix(&self) -> &CMat {
        &self.phi
    }

    /// Sequence `i` of device `k`, both 1-based.
    pub fn sequence_of(&self, k: usize, i: usize) -> Result<&[Complex64]> {
        if k == 0 || k > self.devices {
            return Err(Error::IndexOutOfRange {
                name: "k",
                index: k,
                max: self.devices,
            });
        }
        if i == 0 || i > self.per_device {
            return Err(Error::IndexOutOfRange {
                name: "i",
                index: i,
                max: self.per_device,
            });
        }
        Ok(self.phi.col((k - 1) * self.per_device + (i - 1)))
    }
}

fn bits_per_selection(per_device: usize) -> Result<u32> {
    if per_device < 2 || !per_device.is_power_of_two() {
        return Err(invalid(
            "I",
            alloc::format!("{per_device} is not a power of two >= 2"),
        ));
    }
    Ok(per_device.trailing_zeros())
}

/// Maps a big-endian bit vector to a 1-based selection index.
pub fn bits_to_selection(bits: &[u8], per_device: usize) -> Result<usize> {
    let r = bits_per_selection(per_device)? as usize;
    if bits.len() != r {
        return Err(invalid(
            "bits",
            alloc::format!("expected {r} bits, got {}", bits.len()),
        ));
    }
    let mut idx = 0usize;
    for &b in bits {
        if b > 1 {
            return Err(invalid("bits", "entries must be 0 or 1"));
        }
        idx = (idx << 1) | b as usize;
    }
    Ok(idx + 1)
}

/// Inverse of [`bits_to_selection`].
pub fn selection_to_bits(selection: usize, per_device: usize) -> Result<Vec<u8>> {
    let r = bits_per_selection(per_device)? as usize;
    if selection == 0 || selection > per_device {
        return Err(Error::IndexOutOfRange {
            name: "selection",
            index: selection,
            max: per_device,
        });
    }
    let v = selection - 1;
    Ok((0..r).rev().map(|b| ((v >> b) & 1) as u8).collect())
}

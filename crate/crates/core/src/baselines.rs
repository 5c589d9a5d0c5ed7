//! Reference detectors: simultaneous OMP and the antenna-averaged AE variant.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::ae::{run_angular, ActivityUpdate, AeResult};
use crate::amp::AmpConfig;
use crate::codebook::Codebook;
use crate::error::{invalid, Result};
use crate::mat::{axpy, dotc, CMat};
use crate::metrics::Detection;
use crate::stf::strongest_sequence;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SompConfig {
    /// Stop once the mean residual power per entry drops below this.
    pub noise_power: f64,
    pub max_atoms: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SompResult {
    /// Selected columns in selection order.
    pub support: Vec<usize>,
    /// Least-squares estimate on the support, zero elsewhere (`KI × C`).
    pub x_hat: CMat,
    pub detection: Detection,
    /// Mean residual power after each selection.
    pub residual_power: Vec<f64>,
}

fn mean_power(m: &CMat) -> f64 {
    m.frobenius_norm_sqr() / m.as_slice().len().max(1) as f64
}

/// Greedy joint-sparse recovery of `Y ≈ Φ X`, treating all columns of `Y` as
/// one slab for sequence selection.
pub fn run_somp(y: &CMat, cb: &Codebook, cfg: &SompConfig) -> Result<SompResult> {
    let phi = cb.matrix();
    let (l, n) = phi.shape();
    if y.rows() != l || y.cols() == 0 {
        return Err(invalid(
            "Y",
            alloc::format!("{}x{} input for an {l}x{n} dictionary", y.rows(), y.cols()),
        ));
    }
    if !(cfg.noise_power > 0.0) {
        return Err(invalid("noise_power", "must be positive"));
    }
    if cfg.max_atoms > n {
        return Err(invalid(
            "max_atoms",
            alloc::format!("at most {n} columns can be selected"),
        ));
    }
    let cols = y.cols();
    let mut resid = y.clone();
    // Orthonormal basis of the selected atoms; `coef[j]` are the coordinates of
    // atom j in that basis (upper-triangular R of a QR factorisation).
    let mut basis: Vec<Vec<Complex64>> = Vec::new();
    let mut coef: Vec<Vec<Complex64>> = Vec::new();
    let mut support = Vec::new();
    let mut independent = Vec::new();
    let mut chosen = vec![false; n];
    let mut residual_power = Vec::new();

    while support.len() < cfg.max_atoms && mean_power(&resid) >= cfg.noise_power {
        let mut best = None;
        let mut best_score = -1.0;
        for j in (0..n).filter(|&j| !chosen[j]) {
            let score: f64 = (0..cols)
                .map(|c| dotc(phi.col(j), resid.col(c)).norm_sqr())
                .sum();
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        chosen[j] = true;
        support.push(j);
        let atom = phi.col(j);
        let mut v = atom.to_vec();
        let mut r = vec![Complex64::new(0.0, 0.0); basis.len() + 1];
        for _ in 0..2 {
            for (q, rq) in basis.iter().zip(r.iter_mut()) {
                let p = dotc(q, &v);
                *rq += p;
                axpy(-p, q, &mut v);
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x.norm_sqr()).sum::<f64>());
        let atom_norm = libm::sqrt(atom.iter().map(|x| x.norm_sqr()).sum::<f64>());
        if norm <= 1e-10 * atom_norm.max(f64::MIN_POSITIVE) {
            // Already in the span: the fit cannot improve.
            independent.push(false);
            coef.push(r);
            residual_power.push(mean_power(&resid));
            break;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        r[basis.len()] = Complex64::new(norm, 0.0);
        for c in 0..cols {
            let p = dotc(&v, resid.col(c));
            axpy(-p, &v, resid.col_mut(c));
        }
        basis.push(v);
        coef.push(r);
        independent.push(true);
        residual_power.push(mean_power(&resid));
    }

    // Back-substitution R x = Qᴴ y over the independent atoms; dependent atoms
    // get zero coefficients (a basic least-squares solution).
    let idx: Vec<usize> = (0..support.len()).filter(|&s| independent[s]).collect();
    let mut x_hat = CMat::zeros(n, cols);
    for c in 0..cols {
        let qy: Vec<Complex64> = basis.iter().map(|q| dotc(q, y.col(c))).collect();
        let mut sol = vec![Complex64::new(0.0, 0.0); idx.len()];
        for a in (0..idx.len()).rev() {
            let mut acc = qy[a];
            for b in a + 1..idx.len() {
                acc -= coef[idx[b]][a] * sol[b];
            }
            sol[a] = acc / coef[idx[a]][a];
        }
        for (a, &s) in idx.iter().enumerate() {
            x_hat[(support[s], c)] = sol[a];
        }
    }

    let per = cb.per_device();
    let mut active: Vec<usize> = support.iter().map(|&j| j / per).collect();
    active.sort_unstable();
    active.dedup();
    let selections = active
        .iter()
        .map(|&d| vec![strongest_sequence(&x_hat, d, per, 0, cols)])
        .collect();
    Ok(SompResult {
        support,
        x_hat,
        detection: Detection::new(active, selections),
        residual_power,
    })
}

/// AE-JABID with the neighbour smoothing replaced by a plain mean over all
/// angles.
pub fn run_benchmark1(
    r: &CMat,
    cb: &Codebook,
    sigma_nbar2: f64,
    amp_cfg: &AmpConfig,
    threshold: f64,
) -> Result<AeResult> {
    run_angular(
        r,
        cb,
        sigma_nbar2,
        amp_cfg,
        threshold,
        ActivityUpdate::AntennaMean,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_selects_nothing() {
        let cb = Codebook::generate(4, 2, 8, 1).unwrap();
        let res = run_somp(
            &CMat::zeros(8, 2),
            &cb,
            &SompConfig {
                noise_power: 1e-3,
                max_atoms: 8,
            },
        )
        .unwrap();
        assert!(res.support.is_empty());
        assert!(res.detection.active.is_empty());
    }

    #[test]
    fn orthogonal_dictionary_recovers_exactly() {
        // Columns of a 4-point DFT are orthonormal.
        let phi = CMat::from_fn(4, 4, |r, c| {
            Complex64::from_polar(0.5, 2.0 * core::f64::consts::PI * (r * c) as f64 / 4.0)
        });
        let cb = Codebook::from_matrix(phi.clone(), 1).unwrap();
        let mut x = CMat::zeros(4, 2);
        x[(1, 0)] = Complex64::new(1.0, 0.5);
        x[(1, 1)] = Complex64::new(-0.3, 0.2);
        x[(3, 0)] = Complex64::new(0.4, -1.0);
        x[(3, 1)] = Complex64::new(0.7, 0.7);
        let y = phi.matmul(&x).unwrap();
        let res = run_somp(
            &y,
            &cb,
            &SompConfig {
                noise_power: 1e-20,
                max_atoms: 4,
            },
        )
        .unwrap();
        assert_eq!(res.support.len(), 2);
        assert_eq!(res.detection.active, vec![1, 3]);
        assert!(res.x_hat.sub(&x).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn residual_power_does_not_grow() {
        let cb = Codebook::generate(10, 2, 12, 3).unwrap();
        let y = CMat::from_fn(12, 3, |r, c| {
            Complex64::new((r * 3 + c) as f64 % 5.0 - 2.0, 0.3 * r as f64)
        });
        let res = run_somp(
            &y,
            &cb,
            &SompConfig {
                noise_power: 1e-9,
                max_atoms: 12,
            },
        )
        .unwrap();
        assert!(res.residual_power.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}

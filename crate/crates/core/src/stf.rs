//! Space-time-frequency joint activity and blind information detection.
//!
//! The prior couples all `I` sequences of a device and all `M'` measurement
//! columns through one activity probability `λ_k`: an active device uses
//! exactly one of its sequences per column, an inactive one none.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::amp::{self, AmpConfig, Denoiser, Sensing};
use crate::codebook::Codebook;
use crate::error::{invalid, Error, Result};
use crate::mat::{CMat, RMat};
use crate::metrics::Detection;
use crate::special::{log_sum_exp, normal_cdf, normal_pdf, sigmoid};

/// Largest activity probability used inside odds ratios.
const PI_CEIL: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StfHyper {
    pub mu0: Complex64,
    pub tau0: f64,
    pub sigma_n2: f64,
    pub lambda: Vec<f64>,
}

impl StfHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 >= 0.0) {
            return Err(invalid("tau0", "prior variance must be non-negative"));
        }
        if !(self.sigma_n2 > 0.0) {
            return Err(invalid("sigma_n2", "noise variance must be positive"));
        }
        if self.lambda.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(invalid(
                "lambda",
                "activity probabilities must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Objective maximised over `c > 0` by [`lambda_init`].
fn lambda_objective(c: f64, ki: f64, l: f64) -> f64 {
    let g = (1.0 + c * c) * normal_cdf(-c) - c * normal_pdf(c);
    (1.0 - 2.0 * ki * g / l) / (1.0 + c * c - 2.0 * g)
}

/// Initial activity probability from the minimax sparsity–undersampling
/// tradeoff of soft-threshold AMP.
pub fn lambda_init(devices: usize, per_device: usize, seq_len: usize) -> f64 {
    let ki = (devices * per_device).max(1) as f64;
    let l = seq_len.max(1) as f64;
    let f = |c: f64| lambda_objective(c, ki, l);
    // Coarse scan, then golden-section refinement around the best cell.
    let step = 1e-2;
    let mut best = step;
    let mut best_val = f(step);
    let mut c = 2.0 * step;
    while c <= 20.0 {
        let v = f(c);
        if v > best_val {
            best_val = v;
            best = c;
        }
        c += step;
    }
    let (mut a, mut b) = ((best - step).max(1e-9), best + step);
    let g = 0.5 * (libm::sqrt(5.0) - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        }
    }
    let val = (l / ki) * f(0.5 * (a + b)).max(best_val);
    val.clamp(1e-6, PI_CEIL)
}

/// Per-entry posterior statistics of one denoising pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StfPosterior {
    pub x_hat: CMat,
    pub v_hat: RMat,
    pub pi: RMat,
    pub mu_bar: CMat,
    pub tau_bar: RMat,
}

/// Gaussian-product terms shared by both denoisers: `(μ̄, τ̄, 𝓛)` where `𝓛`
/// is the log-likelihood ratio of "Gaussian present" versus "zero".
#[inline]
pub(crate) fn gaussian_terms(
    r: Complex64,
    phi: f64,
    mu0: Complex64,
    tau0: f64,
) -> (Complex64, f64, f64) {
    let s = tau0 + phi;
    let mu = (mu0 * phi + r * tau0) / s;
    let tau = tau0 * phi / s;
    let llr = libm::log(phi / s) - (r - mu0).norm_sqr() / s + r.norm_sqr() / phi;
    (mu, tau, llr)
}

/// Structured denoiser. `r` and `phi` are `KI × M'` with rows grouped by device.
pub fn stf_denoise(
    r: &CMat,
    phi: &RMat,
    hyper: &StfHyper,
    per_device: usize,
) -> Result<StfPosterior> {
    let (n, cols) = r.shape();
    if phi.shape() != r.shape() || per_device == 0 || n % per_device != 0 {
        return Err(Error::ShapeMismatch(
            "pseudo-observations do not match KI x M'".into(),
        ));
    }
    let devices = n / per_device;
    if hyper.lambda.len() != devices {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} activity probabilities for {devices} devices",
            hyper.lambda.len()
        )));
    }
    let mut post = StfPosterior {
        x_hat: CMat::zeros(n, cols),
        v_hat: RMat::zeros(n, cols),
        pi: RMat::zeros(n, cols),
        mu_bar: CMat::zeros(n, cols),
        tau_bar: RMat::zeros(n, cols),
    };
    let mut llr = RMat::zeros(per_device, cols);
    let mut lse = vec![0.0; cols];
    let ln_i = libm::log(per_device as f64);
    for k in 0..devices {
        let base = k * per_device;
        for c in 0..cols {
            for i in 0..per_device {
                let row = base + i;
                let (mu, tau, l) = gaussian_terms(
                    r[(row, c)],
                    phi[(row, c)].max(amp::VAR_FLOOR),
                    hyper.mu0,
                    hyper.tau0,
                );
                post.mu_bar[(row, c)] = mu;
                post.tau_bar[(row, c)] = tau;
                llr[(i, c)] = l;
            }
            lse[c] = log_sum_exp(llr.col(c));
        }
        // P_k = λ / (λ + (1-λ) G_k), ln G_k = M' ln I - Σ_c lse_c. The clamp
        // keeps a device whose λ collapsed to 0 recoverable.
        let lam = hyper.lambda[k].clamp(1.0 - PI_CEIL, PI_CEIL);
        let ln_g = cols as f64 * ln_i - lse.iter().sum::<f64>();
        let active = sigmoid(libm::log(lam) - libm::log1p(-lam) - ln_g);
        for c in 0..cols {
            for i in 0..per_device {
                let row = base + i;
                let p = (active * libm::exp(llr[(i, c)] - lse[c])).clamp(0.0, 1.0);
                let mu = post.mu_bar[(row, c)];
                post.pi[(row, c)] = p;
                post.x_hat[(row, c)] = mu * p;
                post.v_hat[(row, c)] =
                    (p * post.tau_bar[(row, c)] + p * (1.0 - p) * mu.norm_sqr()).max(0.0);
            }
        }
    }
    Ok(post)
}

/// Posterior-weighted mean and spread of the Gaussian component. `None` when
/// the total posterior mass is negligible.
pub(crate) fn prior_moments(pi: &RMat, mu: &CMat, tau: &RMat) -> Option<(Complex64, f64)> {
    let mass: f64 = pi.as_slice().iter().sum();
    if !(mass >= 1e-12) {
        return None;
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for (&p, &m) in pi.as_slice().iter().zip(mu.as_slice()) {
        acc += m * p;
    }
    let mu0 = acc / mass;
    let mut spread = 0.0;
    for ((&p, &m), &t) in pi.as_slice().iter().zip(mu.as_slice()).zip(tau.as_slice()) {
        spread += p * ((mu0 - m).norm_sqr() + t);
    }
    Some((mu0, spread / mass))
}

/// `λ_k = (1/M') Σ_{m'} s/(1+s)` with `s = Σ_i π/(1-π)`.
pub fn lambda_update(pi: &RMat, per_device: usize) -> Vec<f64> {
    let (n, cols) = pi.shape();
    (0..n / per_device)
        .map(|k| {
            let mut acc = 0.0;
            for c in 0..cols {
                let s: f64 = (0..per_device)
                    .map(|i| {
                        let p = pi[(k * per_device + i, c)].min(PI_CEIL);
                        p / (1.0 - p)
                    })
                    .sum();
                acc += s / (1.0 + s);
            }
            (acc / cols as f64).clamp(0.0, 1.0)
        })
        .collect()
}

/// EM step: new `(μ₀, τ₀, λ)`. `μ₀, τ₀` are held when the posterior mass vanishes.
pub fn em_update(post: &StfPosterior, per_device: usize, prev: &StfHyper) -> StfHyper {
    let (mu0, tau0) =
        prior_moments(&post.pi, &post.mu_bar, &post.tau_bar).unwrap_or((prev.mu0, prev.tau0));
    StfHyper {
        mu0,
        tau0,
        sigma_n2: prev.sigma_n2,
        lambda: lambda_update(&post.pi, per_device),
    }
}

struct StfDenoiser {
    hyper: StfHyper,
    per_device: usize,
    last: Option<StfPosterior>,
}

impl Denoiser for StfDenoiser {
    fn denoise(&mut self, r: &CMat, phi: &RMat, x_hat: &mut CMat, v_hat: &mut RMat) -> Result<()> {
        let post = stf_denoise(r, phi, &self.hyper, self.per_device)?;
        x_hat.as_mut_slice().copy_from_slice(post.x_hat.as_slice());
        v_hat.as_mut_slice().copy_from_slice(post.v_hat.as_slice());
        self.last = Some(post);
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        if let Some(post) = &self.last {
            self.hyper = em_update(post, self.per_device, &self.hyper);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StfConfig {
    pub amp: AmpConfig,
    /// `T_h1`.
    pub threshold: f64,
}

impl Default for StfConfig {
    fn default() -> Self {
        Self {
            amp: AmpConfig::default(),
            threshold: 0.7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StfResult {
    pub x_hat: CMat,
    pub detection: Detection,
    pub lambda: Vec<f64>,
    pub iterations: usize,
}

/// Initial prior variance, floored for noise-dominated inputs.
pub(crate) fn tau0_init(y: &CMat, phi: &CMat, sigma2: f64, activity: f64) -> f64 {
    let v = (y.frobenius_norm() - y.rows() as f64 * sigma2) / (phi.frobenius_norm() * activity);
    if v.is_finite() {
        v.max(1e-6)
    } else {
        1e-6
    }
}

/// Index of the sequence with the largest power over a slab of `width`
/// columns, 1-based.
pub(crate) fn strongest_sequence(
    x: &CMat,
    device: usize,
    per_device: usize,
    slab: usize,
    width: usize,
) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..per_device {
        let row = device * per_device + i;
        let p: f64 = (slab * width..(slab + 1) * width)
            .map(|c| x[(row, c)].norm_sqr())
            .sum();
        if p > best.1 {
            best = (i, p);
        }
    }
    best.0 + 1
}

/// Detects active devices and their sequence selections from `Y` (`L × M'`,
/// slabs of `slab_width` antenna columns).
pub fn run_stf_jabid(
    y: &CMat,
    cb: &Codebook,
    sigma_n2: f64,
    slab_width: usize,
    cfg: &StfConfig,
) -> Result<StfResult> {
    if y.rows() != cb.seq_len() {
        return Err(invalid(
            "Y",
            alloc::format!(
                "{} rows but sequences have length {}",
                y.rows(),
                cb.seq_len()
            ),
        ));
    }
    if slab_width == 0 || y.cols() == 0 || !y.cols().is_multiple_of(slab_width) {
        return Err(invalid(
            "slab_width",
            "must divide the number of measurement columns",
        ));
    }
    let (k, i) = (cb.devices(), cb.per_device());
    let lambda0 = lambda_init(k, i, cb.seq_len());
    let hyper = StfHyper {
        mu0: Complex64::new(0.0, 0.0),
        tau0: tau0_init(y, cb.matrix(), sigma_n2, lambda0),
        sigma_n2,
        lambda: vec![lambda0; k],
    };
    hyper.validate()?;
    let sensing = Sensing::new(cb.matrix().clone())?;
    let mut den = StfDenoiser {
        hyper,
        per_device: i,
        last: None,
    };
    let state = amp::run(&sensing, y, sigma_n2, &cfg.amp, &mut den)?;
    let lambda = den.hyper.lambda;
    let active: Vec<usize> = (0..k).filter(|&d| lambda[d] > cfg.threshold).collect();
    let slabs = y.cols() / slab_width;
    let selections = active
        .iter()
        .map(|&d| {
            (0..slabs)
                .map(|s| strongest_sequence(&state.x_hat, d, i, s, slab_width))
                .collect()
        })
        .collect();
    Ok(StfResult {
        x_hat: state.x_hat,
        detection: Detection::new(active, selections),
        lambda,
        iterations: state.iteration,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn lambda_init_bounded_by_prefactor() {
        let l0 = lambda_init(100, 2, 40);
        assert!(l0 > 0.0 && l0 <= 0.2, "{l0}");
    }

    #[test]
    fn softmax_when_certainly_active() {
        let r = CMat::filled(2, 1, c(0.0, 0.0));
        let phi = RMat::filled(2, 1, 1.0);
        let hyper = StfHyper {
            mu0: c(0.0, 0.0),
            tau0: 1.0,
            sigma_n2: 0.1,
            lambda: vec![1.0],
        };
        let post = stf_denoise(&r, &phi, &hyper, 2).unwrap();
        assert!((post.pi[(0, 0)] - 0.5).abs() < 1e-11);
        assert!((post.pi[(1, 0)] - 0.5).abs() < 1e-11);
    }

    #[test]
    fn collapsed_prior_needs_overwhelming_evidence() {
        let mut r = CMat::filled(4, 3, c(0.0, 0.0));
        for col in 0..3 {
            r[(2, col)] = c(5.0, -1.0);
        }
        let phi = RMat::filled(4, 3, 0.2);
        let hyper = StfHyper {
            mu0: c(0.0, 0.0),
            tau0: 1.0,
            sigma_n2: 0.1,
            lambda: vec![0.0, 0.0],
        };
        let post = stf_denoise(&r, &phi, &hyper, 2).unwrap();
        for row in 0..2 {
            for col in 0..3 {
                assert!(post.pi[(row, col)] < 1e-12);
                assert!(post.x_hat[(row, col)].norm() < 1e-12);
            }
        }
        // Three columns at |r|²/φ = 130 outweigh the 1e-12 floor.
        assert!(post.pi[(2, 0)] > 0.99);
    }

    #[test]
    fn zero_belief_gives_zero_moments() {
        let post = stf_denoise(
            &CMat::filled(2, 1, c(0.0, 0.0)),
            &RMat::filled(2, 1, 1e-3),
            &StfHyper {
                mu0: c(0.0, 0.0),
                tau0: 1e6,
                sigma_n2: 0.1,
                lambda: vec![1e-12],
            },
            2,
        )
        .unwrap();
        for row in 0..2 {
            if post.pi[(row, 0)] == 0.0 {
                assert_eq!(post.x_hat[(row, 0)], c(0.0, 0.0));
                assert_eq!(post.v_hat[(row, 0)], 0.0);
            }
        }
    }

    #[test]
    fn lambda_update_limits() {
        let zero = RMat::zeros(4, 3);
        assert_eq!(lambda_update(&zero, 2), vec![0.0, 0.0]);
        let mut one = RMat::zeros(2, 3);
        for col in 0..3 {
            one[(0, col)] = 1.0;
        }
        let lam = lambda_update(&one, 2);
        assert!(lam[0] > 1.0 - 1e-11);
    }

    #[test]
    fn em_holds_prior_without_mass() {
        let post = StfPosterior {
            x_hat: CMat::zeros(2, 1),
            v_hat: RMat::zeros(2, 1),
            pi: RMat::zeros(2, 1),
            mu_bar: CMat::filled(2, 1, c(3.0, 0.0)),
            tau_bar: RMat::filled(2, 1, 0.5),
        };
        let prev = StfHyper {
            mu0: c(0.1, 0.2),
            tau0: 0.7,
            sigma_n2: 0.1,
            lambda: vec![0.4],
        };
        let next = em_update(&post, 2, &prev);
        assert_eq!(next.mu0, prev.mu0);
        assert_eq!(next.tau0, prev.tau0);
        assert_eq!(next.lambda, vec![0.0]);
    }

    #[test]
    fn strongest_sequence_ignores_scale() {
        let mut x = CMat::zeros(4, 4);
        x[(1, 2)] = c(1.0, 0.0);
        x[(0, 3)] = c(0.5, 0.0);
        x[(2, 0)] = c(0.0, 2.0);
        assert_eq!(strongest_sequence(&x, 0, 2, 1, 2), 2);
        assert_eq!(strongest_sequence(&x, 1, 2, 0, 2), 1);
        let mut y = x.clone();
        y.scale(7.0);
        assert_eq!(strongest_sequence(&y, 0, 2, 1, 2), 2);
    }
}

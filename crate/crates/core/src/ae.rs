//! Angular-domain enhanced detection for large arrays.
//!
//! Works on one `L × M` slab in the virtual angular domain. Each entry of `W`
//! gets its own Bernoulli–Gaussian prior with activity `ρ_{k,i}^m`; after
//! every EM step the activities are re-estimated from their angular neighbours.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::amp::{self, AmpConfig, Denoiser, Sensing};
use crate::codebook::Codebook;
use crate::error::{invalid, Error, Result};
use crate::mat::{CMat, RMat};
use crate::metrics::Detection;
use crate::special::sigmoid;
use crate::stf::{gaussian_terms, lambda_init, prior_moments, tau0_init};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NeighborScheme {
    zeta: Vec<f64>,
}

impl NeighborScheme {
    /// `zeta[q-1]` weighs the neighbours at distance `q`; weights must lie in
    /// `(0, 1]` and not grow with distance.
    pub fn new(zeta: Vec<f64>) -> Result<Self> {
        if zeta.iter().any(|z| !(*z > 0.0 && *z <= 1.0)) {
            return Err(invalid("zeta", "weights must lie in (0, 1]"));
        }
        if zeta.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("zeta", "weights must not increase with distance"));
        }
        Ok(Self { zeta })
    }

    pub fn disabled() -> Self {
        Self { zeta: Vec::new() }
    }

    pub fn radius(&self) -> usize {
        self.zeta.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.zeta
    }

    /// Sum of the weights over both sides.
    pub fn normalizer(&self) -> f64 {
        2.0 * self.zeta.iter().sum::<f64>()
    }

    /// The same scheme cut down to the widest radius an `m`-element array allows.
    pub fn fitted_to(&self, m: usize) -> Self {
        let q = self.zeta.len().min(m.saturating_sub(1) / 2);
        Self {
            zeta: self.zeta[..q].to_vec(),
        }
    }
}

impl Default for NeighborScheme {
    fn default() -> Self {
        Self {
            zeta: vec![1.0, 0.8, 0.6, 0.4],
        }
    }
}

/// Replaces every activity by the weighted mean of its `2Q` circular
/// neighbours along the angle axis (the element itself is not included).
pub fn neighbor_smooth(rho: &RMat, scheme: &NeighborScheme) -> Result<RMat> {
    let q = scheme.radius();
    let m = rho.cols();
    if q == 0 {
        return Ok(rho.clone());
    }
    if 2 * q >= m {
        return Err(invalid(
            "Q",
            alloc::format!(
                "radius {q} needs more than {} angular bins, have {m}",
                2 * q
            ),
        ));
    }
    let norm = scheme.normalizer();
    Ok(RMat::from_fn(rho.rows(), m, |row, col| {
        let mut acc = 0.0;
        for (d, &z) in scheme.zeta.iter().enumerate() {
            let d = d + 1;
            acc += z * (rho[(row, (col + d) % m)] + rho[(row, (col + m - d) % m)]);
        }
        (acc / norm).clamp(0.0, 1.0)
    }))
}

/// How activities are re-estimated after the EM step.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivityUpdate {
    Neighbors(NeighborScheme),
    /// Every angle gets the device-sequence mean over all angles.
    AntennaMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeHyper {
    pub mu0: Complex64,
    pub tau0: f64,
    pub sigma_n2: f64,
    /// `KI × M`.
    pub rho: RMat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AePosterior {
    pub w_hat: CMat,
    pub u_hat: RMat,
    pub pi: RMat,
    pub mu: CMat,
    pub tau: RMat,
}

/// Elementwise Bernoulli–Gaussian denoiser.
pub fn ae_denoise(r: &CMat, xi: &RMat, hyper: &AeHyper) -> Result<AePosterior> {
    if xi.shape() != r.shape() || hyper.rho.shape() != r.shape() {
        return Err(Error::ShapeMismatch(
            "pseudo-observations, variances and activities differ".into(),
        ));
    }
    let (n, cols) = r.shape();
    let mut post = AePosterior {
        w_hat: CMat::zeros(n, cols),
        u_hat: RMat::zeros(n, cols),
        pi: RMat::zeros(n, cols),
        mu: CMat::zeros(n, cols),
        tau: RMat::zeros(n, cols),
    };
    for c in 0..cols {
        for j in 0..n {
            let (mu, tau, llr) = gaussian_terms(
                r[(j, c)],
                xi[(j, c)].max(amp::VAR_FLOOR),
                hyper.mu0,
                hyper.tau0,
            );
            let rho = hyper.rho[(j, c)];
            let p = if rho <= 0.0 {
                0.0
            } else if rho >= 1.0 {
                1.0
            } else {
                sigmoid(llr + libm::log(rho) - libm::log1p(-rho))
            };
            post.mu[(j, c)] = mu;
            post.tau[(j, c)] = tau;
            post.pi[(j, c)] = p;
            post.w_hat[(j, c)] = mu * p;
            post.u_hat[(j, c)] = (p * tau + p * (1.0 - p) * mu.norm_sqr()).max(0.0);
        }
    }
    Ok(post)
}

/// EM step: `ρ = π̃` followed by the activity update, and the weighted prior
/// moments (held when the posterior mass vanishes).
pub fn ae_em_update(
    post: &AePosterior,
    update: &ActivityUpdate,
    prev: &AeHyper,
) -> Result<AeHyper> {
    let (mu0, tau0) = prior_moments(&post.pi, &post.mu, &post.tau).unwrap_or((prev.mu0, prev.tau0));
    let rho = match update {
        ActivityUpdate::Neighbors(s) => neighbor_smooth(&post.pi, s)?,
        ActivityUpdate::AntennaMean => {
            let m = post.pi.cols() as f64;
            let means: Vec<f64> = (0..post.pi.rows())
                .map(|j| (0..post.pi.cols()).map(|c| post.pi[(j, c)]).sum::<f64>() / m)
                .collect();
            RMat::from_fn(post.pi.rows(), post.pi.cols(), |j, _| means[j])
        }
    };
    Ok(AeHyper {
        mu0,
        tau0,
        sigma_n2: prev.sigma_n2,
        rho,
    })
}

struct AeDenoiser {
    hyper: AeHyper,
    update: ActivityUpdate,
    last: Option<AePosterior>,
}

impl Denoiser for AeDenoiser {
    fn denoise(&mut self, r: &CMat, phi: &RMat, x_hat: &mut CMat, v_hat: &mut RMat) -> Result<()> {
        let post = ae_denoise(r, phi, &self.hyper)?;
        x_hat.as_mut_slice().copy_from_slice(post.w_hat.as_slice());
        v_hat.as_mut_slice().copy_from_slice(post.u_hat.as_slice());
        self.last = Some(post);
        Ok(())
    }

    fn learn(&mut self) -> Result<()> {
        if let Some(post) = &self.last {
            self.hyper = ae_em_update(post, &self.update, &self.hyper)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AeConfig {
    pub amp: AmpConfig,
    /// `T_h2`.
    pub threshold: f64,
    pub scheme: NeighborScheme,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            amp: AmpConfig::default(),
            threshold: 0.9,
            scheme: NeighborScheme::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AeResult {
    pub w_hat: CMat,
    pub detection: Detection,
    /// Final activities, `KI × M`.
    pub rho: RMat,
    /// Posterior activity of each element at the last iteration, `KI × M`.
    pub belief: RMat,
    pub iterations: usize,
}

/// AE-JABID on one angular-domain slab `R` (`L × M`). The neighbour radius is
/// reduced when the array is too small for it.
pub fn run_ae_jabid(r: &CMat, cb: &Codebook, sigma_nbar2: f64, cfg: &AeConfig) -> Result<AeResult> {
    let scheme = cfg.scheme.fitted_to(r.cols());
    run_angular(
        r,
        cb,
        sigma_nbar2,
        &cfg.amp,
        cfg.threshold,
        ActivityUpdate::Neighbors(scheme),
    )
}

/// Shared driver for AE-JABID and its antenna-averaging variant.
pub fn run_angular(
    r: &CMat,
    cb: &Codebook,
    sigma_nbar2: f64,
    amp_cfg: &AmpConfig,
    threshold: f64,
    update: ActivityUpdate,
) -> Result<AeResult> {
    if r.rows() != cb.seq_len() || r.cols() == 0 {
        return Err(invalid(
            "R",
            alloc::format!(
                "{}x{} input for sequences of length {}",
                r.rows(),
                r.cols(),
                cb.seq_len()
            ),
        ));
    }
    let (k, i, m) = (cb.devices(), cb.per_device(), r.cols());
    let rho0 = lambda_init(k, i, cb.seq_len());
    let hyper = AeHyper {
        mu0: Complex64::new(0.0, 0.0),
        tau0: tau0_init(r, cb.matrix(), sigma_nbar2, rho0),
        sigma_n2: sigma_nbar2,
        rho: RMat::filled(k * i, m, rho0),
    };
    let sensing = Sensing::new(cb.matrix().clone())?;
    let mut den = AeDenoiser {
        hyper,
        update,
        last: None,
    };
    let state = amp::run(&sensing, r, sigma_nbar2, amp_cfg, &mut den)?;
    let rho = den.hyper.rho;
    let belief = den
        .last
        .map(|p| p.pi)
        .unwrap_or_else(|| RMat::filled(k * i, m, rho0));
    // Detection reads each element's own posterior; the smoothed field only
    // serves as the prior of the next iteration and never sees the element itself.
    let peak = |row: usize| (0..m).map(|c| belief[(row, c)]).fold(0.0, f64::max);
    let power = |row: usize| {
        (0..m)
            .map(|c| state.x_hat[(row, c)].norm_sqr())
            .sum::<f64>()
    };
    let mut active = Vec::new();
    let mut selections = Vec::new();
    for d in 0..k {
        let rows = d * i..(d + 1) * i;
        if rows.clone().any(|row| peak(row) > threshold) {
            let best = rows
                .max_by(|&a, &b| {
                    peak(a)
                        .total_cmp(&peak(b))
                        .then(power(a).total_cmp(&power(b)))
                        .then(b.cmp(&a))
                })
                .expect("I >= 1");
            active.push(d);
            selections.push(vec![best - d * i + 1]);
        }
    }
    Ok(AeResult {
        w_hat: state.x_hat,
        detection: Detection::new(active, selections),
        rho,
        belief,
        iterations: state.iteration,
    })
}

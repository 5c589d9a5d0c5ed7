//! Approximate message passing on `Y = Φ X + N`, shared by both detectors.
//!
//! The loop is: factor-node update, damping of `(V, Z)`, variable-node update,
//! then a pluggable [`Denoiser`] that maps pseudo-observations `(r, φ)` to
//! posterior means and variances and re-learns its own prior.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::mat::{dotc, CMat, RMat};

/// Floor applied to every `σ² + V` denominator.
pub const VAR_FLOOR: f64 = 1e-15;

/// Sensing matrix together with its elementwise squared magnitudes.
#[derive(Debug, Clone)]
pub struct Sensing {
    phi: CMat,
    abs2: RMat,
    /// `Some(c)` when every `|Φ_lj|² = c`, which turns the variance sums into
    /// column sums.
    constant_modulus: Option<f64>,
}

impl Sensing {
    pub fn new(phi: CMat) -> Result<Self> {
        if phi.is_empty() {
            return Err(invalid("phi", "empty sensing matrix"));
        }
        if !phi.is_finite() {
            return Err(invalid("phi", "non-finite entries"));
        }
        let abs2 = phi.map(|v| v.norm_sqr());
        let first = abs2.as_slice()[0];
        let constant_modulus = abs2
            .as_slice()
            .iter()
            .all(|&a| (a - first).abs() <= 1e-12 * first.max(1e-300))
            .then_some(first);
        Ok(Self {
            phi,
            abs2,
            constant_modulus,
        })
    }

    pub fn matrix(&self) -> &CMat {
        &self.phi
    }

    pub fn abs2(&self) -> &RMat {
        &self.abs2
    }

    pub fn measurements(&self) -> usize {
        self.phi.rows()
    }

    pub fn unknowns(&self) -> usize {
        self.phi.cols()
    }

    pub fn constant_modulus(&self) -> Option<f64> {
        self.constant_modulus
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmpState {
    pub x_hat: CMat,
    pub v_hat: RMat,
    pub z: CMat,
    pub v: RMat,
    pub r: CMat,
    pub phi: RMat,
    pub iteration: usize,
}

/// `Z = Y`, `V = 1`, `x̂ = 0`, `v̂ = 1`.
pub fn init_state(y: &CMat, unknowns: usize) -> Result<AmpState> {
    if y.is_empty() || unknowns == 0 {
        return Err(invalid("Y", "empty measurement matrix"));
    }
    let c = y.cols();
    Ok(AmpState {
        x_hat: CMat::zeros(unknowns, c),
        v_hat: RMat::filled(unknowns, c, 1.0),
        z: y.clone(),
        v: RMat::filled(y.rows(), c, 1.0),
        r: CMat::zeros(unknowns, c),
        phi: RMat::filled(unknowns, c, 1.0),
        iteration: 0,
    })
}

fn check_shapes(state: &AmpState, sensing: &Sensing, y: &CMat) -> Result<()> {
    let (l, n) = (sensing.measurements(), sensing.unknowns());
    if y.rows() != l
        || state.z.shape() != y.shape()
        || state.v.shape() != y.shape()
        || state.x_hat.shape() != (n, y.cols())
        || state.v_hat.shape() != (n, y.cols())
    {
        return Err(Error::ShapeMismatch(alloc::format!(
            "state does not fit a {l}x{n} sensing matrix and {}x{} measurements",
            y.rows(),
            y.cols()
        )));
    }
    Ok(())
}

fn check_noise(sigma2: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(invalid("sigma_n2", "noise variance must be positive"));
    }
    Ok(())
}

/// Factor-node update. Returns the new `(V, Z)`; the Onsager term uses the
/// `(Z, V)` currently held by `state`.
pub fn factor_update(
    state: &AmpState,
    sensing: &Sensing,
    y: &CMat,
    sigma2: f64,
) -> Result<(RMat, CMat)> {
    check_noise(sigma2)?;
    check_shapes(state, sensing, y)?;
    let l = sensing.measurements();
    let cols = y.cols();
    let mut v = RMat::zeros(l, cols);
    for c in 0..cols {
        let vh = state.v_hat.col(c);
        let dst = v.col_mut(c);
        match sensing.constant_modulus {
            Some(a) => dst.fill(a * vh.iter().sum::<f64>()),
            None => {
                for (j, &w) in vh.iter().enumerate() {
                    if w != 0.0 {
                        for (d, &p) in dst.iter_mut().zip(sensing.abs2.col(j)) {
                            *d += p * w;
                        }
                    }
                }
            }
        }
    }
    let mut z = sensing.phi.matmul(&state.x_hat)?;
    for c in 0..cols {
        let (yc, zp, vp, vn) = (y.col(c), state.z.col(c), state.v.col(c), v.col(c));
        for (l_idx, zn) in z.col_mut(c).iter_mut().enumerate() {
            let den = (sigma2 + vp[l_idx]).max(VAR_FLOOR);
            *zn -= (yc[l_idx] - zp[l_idx]) * (vn[l_idx] / den);
        }
    }
    Ok((v, z))
}

/// Convex combination `κ·prev + (1-κ)·new`, applied in place to `new`.
pub fn damp(
    new_v: &mut RMat,
    new_z: &mut CMat,
    prev_v: &RMat,
    prev_z: &CMat,
    kappa: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(invalid("kappa", "damping factor must lie in [0, 1)"));
    }
    if new_v.shape() != prev_v.shape() || new_z.shape() != prev_z.shape() {
        return Err(Error::ShapeMismatch(
            "damping operands differ in shape".into(),
        ));
    }
    if kappa == 0.0 {
        return Ok(());
    }
    for (n, &p) in new_v.as_mut_slice().iter_mut().zip(prev_v.as_slice()) {
        *n = kappa * p + (1.0 - kappa) * *n;
    }
    for (n, &p) in new_z.as_mut_slice().iter_mut().zip(prev_z.as_slice()) {
        *n = p * kappa + *n * (1.0 - kappa);
    }
    Ok(())
}

/// Variable-node update: fills `state.phi` and `state.r` from the current
/// `(V, Z, x̂)`.
pub fn variable_update(
    state: &mut AmpState,
    sensing: &Sensing,
    y: &CMat,
    sigma2: f64,
) -> Result<()> {
    check_noise(sigma2)?;
    check_shapes(state, sensing, y)?;
    let (l, n) = (sensing.measurements(), sensing.unknowns());
    let cols = y.cols();
    if state.r.shape() != (n, cols) || state.phi.shape() != (n, cols) {
        state.r = CMat::zeros(n, cols);
        state.phi = RMat::zeros(n, cols);
    }
    let mut inv = vec![0.0; l];
    let mut resid = vec![Complex64::new(0.0, 0.0); l];
    for c in 0..cols {
        let (yc, zc, vc) = (y.col(c), state.z.col(c), state.v.col(c));
        for i in 0..l {
            inv[i] = 1.0 / (sigma2 + vc[i]).max(VAR_FLOOR);
            resid[i] = (yc[i] - zc[i]) * inv[i];
        }
        let shared_phi = sensing
            .constant_modulus
            .map(|a| 1.0 / (a * inv.iter().sum::<f64>()));
        for j in 0..n {
            let p = match shared_phi {
                Some(p) => p,
                None => {
                    let s: f64 = sensing
                        .abs2
                        .col(j)
                        .iter()
                        .zip(&inv)
                        .map(|(a, b)| a * b)
                        .sum();
                    1.0 / s.max(VAR_FLOOR)
                }
            };
            state.phi[(j, c)] = p;
            state.r[(j, c)] = state.x_hat[(j, c)] + dotc(sensing.phi.col(j), &resid) * p;
        }
    }
    Ok(())
}

/// `‖x − prev‖_F / ‖prev‖_F < ε`; false when `prev` is all zero.
pub fn converged(x: &CMat, prev: &CMat, epsilon: f64) -> bool {
    let den = prev.frobenius_norm_sqr();
    if den == 0.0 || x.shape() != prev.shape() {
        return false;
    }
    let num: f64 = x
        .as_slice()
        .iter()
        .zip(prev.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    libm::sqrt(num / den) < epsilon
}

/// Maps pseudo-observations to posterior statistics and updates its prior.
pub trait Denoiser {
    /// Writes posterior means and variances for every entry of `r`.
    fn denoise(&mut self, r: &CMat, phi: &RMat, x_hat: &mut CMat, v_hat: &mut RMat) -> Result<()>;

    /// Hyperparameter learning from the posteriors of the last [`denoise`](Self::denoise).
    fn learn(&mut self) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AmpConfig {
    pub max_iterations: usize,
    pub kappa: f64,
    pub epsilon: f64,
}

impl Default for AmpConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            kappa: 0.3,
            epsilon: 1e-6,
        }
    }
}

impl AmpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(invalid("kappa", "damping factor must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "tolerance must be positive"));
        }
        Ok(())
    }
}

/// Runs the AMP loop to convergence or `max_iterations`.
pub fn run<D: Denoiser + ?Sized>(
    sensing: &Sensing,
    y: &CMat,
    sigma2: f64,
    cfg: &AmpConfig,
    denoiser: &mut D,
) -> Result<AmpState> {
    cfg.validate()?;
    check_noise(sigma2)?;
    if y.rows() != sensing.measurements() {
        return Err(Error::ShapeMismatch(alloc::format!(
            "{} measurement rows for a sensing matrix with {} rows",
            y.rows(),
            sensing.measurements()
        )));
    }
    let mut state = init_state(y, sensing.unknowns())?;
    let mut prev_x: Vec<Complex64> = Vec::new();
    for t in 1..=cfg.max_iterations {
        let (mut v, mut z) = factor_update(&state, sensing, y, sigma2)?;
        damp(&mut v, &mut z, &state.v, &state.z, cfg.kappa)?;
        state.v = v;
        state.z = z;
        variable_update(&mut state, sensing, y, sigma2)?;
        prev_x.clear();
        prev_x.extend_from_slice(state.x_hat.as_slice());
        denoiser.denoise(&state.r, &state.phi, &mut state.x_hat, &mut state.v_hat)?;
        denoiser.learn()?;
        state.iteration = t;
        let prev = CMat::from_col_major(state.x_hat.rows(), state.x_hat.cols(), prev_x.clone())?;
        if converged(&state.x_hat, &prev, cfg.epsilon) {
            break;
        }
    }
    Ok(state)
}

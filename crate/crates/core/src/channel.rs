//! Geometric multipath channels between single-antenna devices and an
//! elevated `M`-antenna uniform linear array with half-wavelength spacing.
//!
//! Each device sees `P` scattered paths with a CN(0,1) gain, a delay inside the
//! cyclic prefix, an angle of arrival inside a narrow cone around a per-device
//! center, and a Doppler shift. The subcarrier-`n` channel at absolute time `t`
//! is
//!
//! ```text
//! h(n, t) = sqrt(M/P) * sum_p g_p * exp(j2π ν_p t) * a(θ_p) * exp(-j2π τ_p f_n),
//! f_n     = -B/2 + B (n-1) / N.
//! ```

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::mat::CMat;
use crate::rng::complex_normal;

const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Unit-norm ULA response for an angle of arrival `theta` (radians).
pub fn steering_vector(theta: f64, antennas: usize) -> Vec<Complex64> {
    spatial_frequency_response(0.5 * libm::sin(theta), antennas)
}

/// `[exp(j2π m u)]_m / sqrt(M)` for a normalized spatial frequency `u = (d/λ) sin θ`.
fn spatial_frequency_response(u: f64, antennas: usize) -> Vec<Complex64> {
    let s = 1.0 / libm::sqrt(antennas as f64);
    (0..antennas)
        .map(|m| Complex64::from_polar(s, 2.0 * PI * m as f64 * u))
        .collect()
}

/// Static scenario parameters that shape the channel draw.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ChannelParams {
    pub antennas: usize,
    pub subcarriers: usize,
    pub cyclic_prefix: usize,
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    /// Maximum radial speed in m/s.
    pub v_max: f64,
    pub min_paths: usize,
    pub max_paths: usize,
    pub angular_spread_deg: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            antennas: 2,
            subcarriers: 512,
            cyclic_prefix: 32,
            bandwidth_hz: 10.0e6,
            carrier_hz: 1.0e9,
            v_max: 0.0,
            min_paths: 8,
            max_paths: 14,
            angular_spread_deg: 10.0,
        }
    }
}

impl ChannelParams {
    pub fn sample_period(&self) -> f64 {
        1.0 / self.bandwidth_hz
    }

    pub fn max_doppler(&self) -> f64 {
        max_doppler(self.v_max, self.carrier_hz)
    }

    pub fn max_delay(&self) -> f64 {
        self.cyclic_prefix as f64 / self.bandwidth_hz
    }

    /// Baseband frequency of 1-based subcarrier `n`.
    pub fn subcarrier_frequency(&self, n: usize) -> f64 {
        let b = self.bandwidth_hz;
        -b / 2.0 + b * (n as f64 - 1.0) / self.subcarriers as f64
    }

    /// Duration of one OFDM symbol including its cyclic prefix.
    pub fn symbol_duration(&self) -> f64 {
        (self.subcarriers + self.cyclic_prefix) as f64 * self.sample_period()
    }

    /// Start time of 1-based sub-frame `j` when each sub-frame spans
    /// `symbols` OFDM symbols. The channel is frozen at this instant for the
    /// whole sub-frame.
    pub fn subframe_start(&self, j: usize, symbols: usize) -> f64 {
        (j as f64 - 1.0) * symbols as f64 * self.symbol_duration()
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(invalid("M", "need at least one antenna"));
        }
        if self.subcarriers == 0 {
            return Err(invalid("N", "need at least one subcarrier"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(invalid("B_s", "bandwidth must be positive"));
        }
        if self.min_paths == 0 || self.min_paths > self.max_paths {
            return Err(invalid("P_range", "need 1 <= min_paths <= max_paths"));
        }
        if !(self.v_max >= 0.0) {
            return Err(invalid("v_max", "speed must be non-negative"));
        }
        Ok(())
    }
}

/// `v f_c / c`.
pub fn max_doppler(v_max: f64, carrier_hz: f64) -> f64 {
    v_max * carrier_hz / SPEED_OF_LIGHT
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub delay: f64,
    pub aoa: f64,
    pub doppler: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePaths {
    pub aoa_center: f64,
    pub angular_spread: f64,
    pub paths: Vec<Path>,
}

/// Path sets for every device, indexed by 0-based device number.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSet {
    pub devices: Vec<DevicePaths>,
}

/// Draws an independent path set for each of `devices` devices.
pub fn draw_paths<R: Rng + ?Sized>(
    params: &ChannelParams,
    devices: usize,
    rng: &mut R,
) -> Result<PathSet> {
    params.validate()?;
    let nu_max = params.max_doppler();
    let tau_max = params.max_delay();
    let spread = params.angular_spread_deg.to_radians();
    let mut out = Vec::with_capacity(devices);
    for _ in 0..devices {
        let count = rng.random_range(params.min_paths..=params.max_paths);
        let center = uniform(rng, -PI / 2.0, PI / 2.0);
        let paths = (0..count)
            .map(|_| Path {
                gain: complex_normal(rng, 1.0),
                delay: uniform(rng, 0.0, tau_max),
                aoa: uniform(rng, center - spread / 2.0, center + spread / 2.0),
                doppler: uniform(rng, -nu_max, nu_max),
            })
            .collect();
        out.push(DevicePaths {
            aoa_center: center,
            angular_spread: spread,
            paths,
        });
    }
    Ok(PathSet { devices: out })
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    lo + (hi - lo) * rng.random::<f64>()
}

/// Channel of one device on 1-based subcarrier `n` at absolute time `t` (s).
pub fn freq_channel(
    device: &DevicePaths,
    n: usize,
    t: f64,
    params: &ChannelParams,
) -> Vec<Complex64> {
    channel_at(device, params.subcarrier_frequency(n), t, params.antennas)
}

fn channel_at(device: &DevicePaths, freq: f64, t: f64, antennas: usize) -> Vec<Complex64> {
    let mut h = vec![Complex64::new(0.0, 0.0); antennas];
    if device.paths.is_empty() {
        return h;
    }
    let norm = libm::sqrt(antennas as f64 / device.paths.len() as f64);
    for p in &device.paths {
        let phase = 2.0 * PI * (p.doppler * t - p.delay * freq);
        let coef = p.gain * Complex64::from_polar(norm, phase);
        let a = steering_vector(p.aoa, antennas);
        for (hm, am) in h.iter_mut().zip(&a) {
            *hm += coef * am;
        }
    }
    h
}

/// Offset of symbol `l_t` on group subcarrier `l_f` (both 1-based) from the
/// start of the transmission: `((l_t-1) N + l_t N_cp + l_f) T_s`.
pub fn tfst_time_offset(l_t: usize, l_f: usize, params: &ChannelParams) -> f64 {
    let n = params.subcarriers as f64;
    let ncp = params.cyclic_prefix as f64;
    ((l_t as f64 - 1.0) * n + l_t as f64 * ncp + l_f as f64) * params.sample_period()
}

/// Channel seen by symbol `l_t` on the `l_f`-th subcarrier of a time-frequency
/// spread group whose first subcarrier is `first_subcarrier`.
pub fn doubly_selective_channel(
    device: &DevicePaths,
    l_t: usize,
    l_f: usize,
    first_subcarrier: usize,
    params: &ChannelParams,
) -> Vec<Complex64> {
    let n = first_subcarrier + l_f - 1;
    freq_channel(device, n, tfst_time_offset(l_t, l_f, params), params)
}

/// Virtual angular grid `(m - (M+1)/2) / M`, `m = 1..=M`, in units of
/// normalized spatial frequency.
pub fn angular_grid(antennas: usize) -> Vec<f64> {
    let m_bar = (antennas as f64 + 1.0) / 2.0;
    (1..=antennas)
        .map(|m| (m as f64 - m_bar) / antennas as f64)
        .collect()
}

/// AoA (radians) that lands exactly on angular bin `m` (1-based).
pub fn on_grid_aoa(m: usize, antennas: usize) -> f64 {
    libm::asin(2.0 * angular_grid(antennas)[m - 1])
}

/// Right multiplication by the conjugate of the unitary DFT matrix whose
/// columns are the ULA responses on the virtual angular grid.
#[derive(Debug, Clone)]
pub struct AngularTransform {
    conj_basis: CMat,
}

impl AngularTransform {
    pub fn new(antennas: usize) -> Result<Self> {
        if antennas == 0 {
            return Err(invalid("M", "need at least one antenna"));
        }
        let grid = angular_grid(antennas);
        let cols: Vec<Vec<Complex64>> = grid
            .iter()
            .map(|&u| {
                spatial_frequency_response(u, antennas)
                    .into_iter()
                    .map(|v| v.conj())
                    .collect()
            })
            .collect();
        Ok(Self {
            conj_basis: CMat::from_columns(antennas, &cols)?,
        })
    }

    pub fn antennas(&self) -> usize {
        self.conj_basis.rows()
    }

    /// The unitary basis `A_R` itself (columns are grid responses).
    pub fn basis(&self) -> CMat {
        self.conj_basis.map(|v| v.conj())
    }

    /// `h A_R^*` for a `rows × M` matrix.
    pub fn apply(&self, spatial: &CMat) -> Result<CMat> {
        if spatial.cols() != self.antennas() {
            return Err(Error::ShapeMismatch(alloc::format!(
                "angular transform of width {} on {} columns",
                self.antennas(),
                spatial.cols()
            )));
        }
        spatial.matmul(&self.conj_basis)
    }

    /// Transform of a single spatial row vector.
    pub fn apply_vec(&self, spatial: &[Complex64]) -> Result<Vec<Complex64>> {
        let row = CMat::from_col_major(1, spatial.len(), spatial.to_vec())?;
        Ok(self.apply(&row)?.as_slice().to_vec())
    }
}

/// Stand-alone form of [`AngularTransform::apply`].
pub fn angular_transform(spatial: &CMat) -> Result<CMat> {
    AngularTransform::new(spatial.cols())?.apply(spatial)
}

/// Air-to-ground link budget inputs. Powers in dBm/dB, distances in metres,
/// carrier in MHz, bandwidth in Hz.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub height_m: f64,
    pub horizontal_m: f64,
    pub eta_los_db: f64,
    pub eta_nlos_db: f64,
    pub env_a: f64,
    pub env_b: f64,
    pub carrier_mhz: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 14.0,
            height_m: 100.0,
            horizontal_m: 500.0,
            eta_los_db: 2.3,
            eta_nlos_db: 34.0,
            env_a: 5.0188,
            env_b: 0.3511,
            carrier_mhz: 1000.0,
            bandwidth_hz: 10.0e6,
        }
    }
}

impl LinkBudget {
    pub fn distance(&self) -> f64 {
        libm::hypot(self.height_m, self.horizontal_m)
    }

    /// Elevation angle in degrees.
    pub fn elevation_deg(&self) -> f64 {
        180.0 * libm::asin(self.height_m / self.distance()) / PI
    }

    /// Probabilistic LoS/NLoS path loss in dB.
    pub fn path_loss_db(&self) -> f64 {
        let excess = self.eta_los_db - self.eta_nlos_db;
        let c = self.elevation_deg();
        let base = 20.0 * libm::log10(self.distance())
            + 20.0 * libm::log10(4.0 * PI * self.carrier_mhz / 300.0)
            + self.eta_nlos_db;
        excess / (1.0 + self.env_a * libm::exp(-self.env_b * (c - self.env_a))) + base
    }

    pub fn noise_power_dbm(&self) -> f64 {
        -174.0 + 10.0 * libm::log10(self.bandwidth_hz)
    }
}

/// Received SNR in dB implied by a link budget.
pub fn snr_from_link_budget(lb: &LinkBudget) -> Result<f64> {
    if !(lb.height_m >= 0.0) || !(lb.horizontal_m >= 0.0) {
        return Err(Error::Domain("distances must be non-negative".into()));
    }
    if lb.height_m == 0.0 && lb.horizontal_m == 0.0 {
        return Err(Error::Domain("device and UAV coincide".into()));
    }
    if !(lb.bandwidth_hz > 0.0) || !(lb.carrier_mhz > 0.0) {
        return Err(Error::Domain(
            "bandwidth and carrier must be positive".into(),
        ));
    }
    Ok(lb.tx_power_dbm - lb.path_loss_db() - lb.noise_power_dbm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::TrialRng;
    use rand::SeedableRng;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn steering_broadside_is_flat() {
        let a = steering_vector(0.0, 4);
        for v in a {
            assert!(close(v, Complex64::new(0.5, 0.0), 1e-15));
        }
    }

    #[test]
    fn steering_endfire_alternates() {
        let a = steering_vector(PI / 2.0, 4);
        let want = [0.5, -0.5, 0.5, -0.5];
        for (v, w) in a.iter().zip(want) {
            assert!(close(*v, Complex64::new(w, 0.0), 1e-12));
        }
    }

    #[test]
    fn steering_has_unit_norm() {
        for m in [1, 3, 8, 33] {
            for theta in [-1.2, 0.0, 0.3, 1.5] {
                let n: f64 = steering_vector(theta, m).iter().map(|v| v.norm_sqr()).sum();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn doppler_at_180_kmh() {
        let nu = max_doppler(50.0, 1.0e9);
        assert!((nu - 166.666_666_666).abs() < 1e-6);
    }

    #[test]
    fn drawn_paths_respect_ranges() {
        let params = ChannelParams {
            v_max: 50.0,
            antennas: 4,
            ..Default::default()
        };
        let mut rng = TrialRng::seed_from_u64(1);
        let set = draw_paths(&params, 50, &mut rng).unwrap();
        let nu = params.max_doppler();
        for dev in &set.devices {
            assert!((8..=14).contains(&dev.paths.len()));
            assert!(dev.aoa_center.abs() <= PI / 2.0);
            for p in &dev.paths {
                assert!(p.delay >= 0.0 && p.delay <= 3.2e-6);
                assert!((p.aoa - dev.aoa_center).abs() <= dev.angular_spread / 2.0 + 1e-15);
                assert!(p.doppler.abs() <= nu);
            }
        }
    }

    #[test]
    fn zero_speed_means_zero_doppler() {
        let params = ChannelParams::default();
        let mut rng = TrialRng::seed_from_u64(2);
        let set = draw_paths(&params, 10, &mut rng).unwrap();
        assert!(set
            .devices
            .iter()
            .flat_map(|d| &d.paths)
            .all(|p| p.doppler == 0.0));
    }

    fn single_path(gain: Complex64, delay: f64, aoa: f64, doppler: f64) -> DevicePaths {
        DevicePaths {
            aoa_center: aoa,
            angular_spread: 0.0,
            paths: vec![Path {
                gain,
                delay,
                aoa,
                doppler,
            }],
        }
    }

    #[test]
    fn single_static_path_is_scaled_steering_vector() {
        let params = ChannelParams {
            antennas: 4,
            ..Default::default()
        };
        let dev = single_path(Complex64::new(1.0, 0.0), 0.0, 0.4, 0.0);
        let h = freq_channel(&dev, 17, 0.0, &params);
        let a = steering_vector(0.4, 4);
        for (x, y) in h.iter().zip(&a) {
            assert!(close(*x, y * 2.0, 1e-12));
        }
        let h2 = freq_channel(&dev, 300, 0.0, &params);
        assert_eq!(h, h2);
    }

    #[test]
    fn doppler_phase_between_consecutive_symbols() {
        let params = ChannelParams {
            antennas: 1,
            ..Default::default()
        };
        let dev = single_path(Complex64::new(1.0, 0.0), 1.0e-6, 0.0, 100.0);
        let h1 = doubly_selective_channel(&dev, 1, 1, 1, &params)[0];
        let h2 = doubly_selective_channel(&dev, 2, 1, 1, &params)[0];
        let want = Complex64::from_polar(1.0, 2.0 * PI * 100.0 * 544.0 / 1.0e7);
        assert!(close(h2 / h1, want, 1e-12));
    }

    #[test]
    fn doubly_selective_without_doppler_is_static() {
        let params = ChannelParams {
            antennas: 4,
            ..Default::default()
        };
        let mut rng = TrialRng::seed_from_u64(3);
        let set = draw_paths(&params, 3, &mut rng).unwrap();
        for dev in &set.devices {
            let stat = freq_channel(dev, 5, 0.0, &params);
            for lt in 1..4 {
                let h = doubly_selective_channel(dev, lt, 1, 5, &params);
                for (a, b) in h.iter().zip(&stat) {
                    assert!(close(*a, *b, 1e-12));
                }
            }
        }
    }

    #[test]
    fn angular_basis_is_unitary() {
        for m in [1, 2, 5, 8, 32] {
            let a = AngularTransform::new(m).unwrap().basis();
            let g = a.adjoint().matmul(&a).unwrap();
            for r in 0..m {
                for c in 0..m {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert!(close(g[(r, c)], Complex64::new(want, 0.0), 1e-12));
                }
            }
        }
    }

    #[test]
    fn on_grid_path_concentrates_in_one_bin() {
        let m = 4;
        let tr = AngularTransform::new(m).unwrap();
        for bin in 1..=m {
            let theta = on_grid_aoa(bin, m);
            let h: Vec<Complex64> = steering_vector(theta, m).iter().map(|v| v * 2.0).collect();
            let w = tr.apply_vec(&h).unwrap();
            for (idx, v) in w.iter().enumerate() {
                if idx + 1 == bin {
                    assert!((v.norm_sqr() - 4.0).abs() < 1e-9);
                } else {
                    assert!(v.norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn angular_transform_of_zero_is_zero() {
        let z = CMat::zeros(3, 8);
        assert_eq!(angular_transform(&z).unwrap(), z);
        assert!(AngularTransform::new(4).unwrap().apply(&z).is_err());
    }

    #[test]
    fn link_budget_worked_example() {
        let snr = snr_from_link_budget(&LinkBudget::default()).unwrap();
        assert!((snr - 17.84).abs() < 0.05, "{snr}");
    }

    #[test]
    fn link_budget_overhead_is_best() {
        let over = LinkBudget {
            horizontal_m: 0.0,
            ..Default::default()
        };
        assert!((over.elevation_deg() - 90.0).abs() < 1e-12);
        let s0 = snr_from_link_budget(&over).unwrap();
        for r in [10.0, 100.0, 500.0, 2000.0] {
            let lb = LinkBudget {
                horizontal_m: r,
                ..Default::default()
            };
            assert!(s0 > snr_from_link_budget(&lb).unwrap());
        }
    }

    #[test]
    fn doubling_distance_adds_six_db_to_log_term() {
        let near = LinkBudget::default();
        let far = LinkBudget {
            height_m: 200.0,
            horizontal_m: 1000.0,
            ..Default::default()
        };
        // Same elevation, so only the log-distance term moves.
        let delta = far.path_loss_db() - near.path_loss_db();
        assert!((delta - 20.0 * libm::log10(2.0)).abs() < 1e-9);
    }

    #[test]
    fn link_budget_rejects_coincident_points() {
        let lb = LinkBudget {
            height_m: 0.0,
            horizontal_m: 0.0,
            ..Default::default()
        };
        assert!(matches!(snr_from_link_budget(&lb), Err(Error::Domain(_))));
    }
}

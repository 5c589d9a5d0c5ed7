//! Simulation configuration, sweep description and validation.

use std::fmt;

use ncim_core::ae::NeighborScheme;
use ncim_core::amp::AmpConfig;
use ncim_core::channel::{snr_from_link_budget, ChannelParams, LinkBudget};
use ncim_core::metrics::Algorithm;
use serde::{Deserialize, Serialize};

/// One point of the scenario space. Keys follow the usual symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    #[serde(rename = "K")]
    pub devices: usize,
    #[serde(rename = "Ka")]
    pub active: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "N")]
    pub subcarriers: usize,
    #[serde(rename = "N_cp")]
    pub cyclic_prefix: usize,
    #[serde(rename = "I")]
    pub per_device: usize,
    #[serde(rename = "L")]
    pub seq_len: usize,
    #[serde(rename = "J")]
    pub subframes: usize,
    #[serde(rename = "N_tilde")]
    pub subcarrier_block: usize,
    /// 1-based index of the first occupied subcarrier.
    pub first_subcarrier: usize,
    /// Nominal subcarrier spacing. Informational: the simulated spacing is `B_s / N`.
    pub delta_f: f64,
    pub f_c: f64,
    #[serde(rename = "B_s")]
    pub bandwidth: f64,
    pub snr_db: f64,
    /// When present, overrides `snr_db`.
    pub link_budget: Option<LinkBudget>,
    /// Maximum device speed in m/s.
    pub v_max: f64,
    #[serde(rename = "P_range")]
    pub path_range: [usize; 2],
    /// Angular spread in degrees.
    pub angular_spread: f64,
    /// Spread each sequence over `L_F` subcarriers and `L / L_F` symbols of a
    /// continuously varying channel.
    pub tfst: bool,
    #[serde(rename = "L_F")]
    pub groups: usize,
    pub algorithms: Vec<Algorithm>,
    #[serde(rename = "T0")]
    pub max_iterations: usize,
    pub kappa: f64,
    #[serde(rename = "T_h1")]
    pub threshold_stf: f64,
    #[serde(rename = "T_h2")]
    pub threshold_ae: f64,
    pub epsilon: f64,
    #[serde(rename = "Q")]
    pub neighbors: usize,
    pub zeta: Vec<f64>,
    pub trials: usize,
    /// Trials per point when some algorithm's mean BER falls below
    /// `extend_below_ber` after `trials`; 0 disables.
    pub extended_trials: usize,
    pub extend_below_ber: f64,
    pub master_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        let ch = ChannelParams::default();
        Self {
            devices: 100,
            active: 10,
            antennas: ch.antennas,
            subcarriers: ch.subcarriers,
            cyclic_prefix: ch.cyclic_prefix,
            per_device: 2,
            seq_len: 40,
            subframes: 1,
            subcarrier_block: 1,
            first_subcarrier: 1,
            delta_f: 15e3,
            f_c: ch.carrier_hz,
            bandwidth: ch.bandwidth_hz,
            snr_db: 15.0,
            link_budget: None,
            v_max: 0.0,
            path_range: [ch.min_paths, ch.max_paths],
            angular_spread: ch.angular_spread_deg,
            tfst: false,
            groups: 1,
            algorithms: vec![Algorithm::StfJabid],
            max_iterations: 200,
            kappa: 0.3,
            threshold_stf: 0.7,
            threshold_ae: 0.9,
            epsilon: 1e-6,
            neighbors: 4,
            zeta: vec![1.0, 0.8, 0.6, 0.4],
            trials: 500,
            extended_trials: 2000,
            extend_below_ber: 1e-3,
            master_seed: 1,
        }
    }
}

impl SimConfig {
    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            antennas: self.antennas,
            subcarriers: self.subcarriers,
            cyclic_prefix: self.cyclic_prefix,
            bandwidth_hz: self.bandwidth,
            carrier_hz: self.f_c,
            v_max: self.v_max,
            min_paths: self.path_range[0],
            max_paths: self.path_range[1],
            angular_spread_deg: self.angular_spread,
        }
    }

    pub fn amp(&self) -> AmpConfig {
        AmpConfig {
            max_iterations: self.max_iterations,
            kappa: self.kappa,
            epsilon: self.epsilon,
        }
    }

    pub fn scheme(&self) -> Result<NeighborScheme, ncim_core::Error> {
        NeighborScheme::new(self.zeta[..self.neighbors.min(self.zeta.len())].to_vec())
    }

    /// Effective SNR in dB.
    pub fn snr(&self) -> Result<f64, ncim_core::Error> {
        match &self.link_budget {
            Some(lb) => snr_from_link_budget(lb),
            None => Ok(self.snr_db),
        }
    }

    /// Every violated invariant, each tagged with its key.
    pub fn violations(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut bad = |field: &'static str, msg: String| {
            v.push(Violation {
                field,
                message: msg,
            })
        };
        if self.devices == 0 {
            bad("K", "need at least one device".into());
        }
        if self.active > self.devices {
            bad(
                "Ka",
                format!("{} active devices exceed K = {}", self.active, self.devices),
            );
        }
        if self.antennas == 0 {
            bad("M", "need at least one antenna".into());
        }
        if self.per_device < 2 || !self.per_device.is_power_of_two() {
            bad(
                "I",
                format!("{} is not a power of two >= 2", self.per_device),
            );
        }
        if self.seq_len == 0 {
            bad("L", "sequence length must be positive".into());
        }
        if self.subframes == 0 {
            bad("J", "need at least one sub-frame".into());
        }
        if self.subcarrier_block == 0 || self.subcarrier_block > self.subcarriers {
            bad(
                "N_tilde",
                format!("{} is outside 1..=N", self.subcarrier_block),
            );
        }
        let span = if self.tfst {
            self.groups
        } else {
            self.subcarrier_block
        };
        if self.first_subcarrier == 0 || self.first_subcarrier + span.max(1) - 1 > self.subcarriers
        {
            bad("first_subcarrier", "occupied subcarriers exceed N".into());
        }
        if !(self.bandwidth > 0.0) {
            bad("B_s", "bandwidth must be positive".into());
        }
        if !(self.f_c > 0.0) {
            bad("f_c", "carrier must be positive".into());
        }
        if !self.snr_db.is_finite() {
            bad("snr_db", "must be finite".into());
        }
        if let Some(lb) = &self.link_budget {
            if let Err(e) = snr_from_link_budget(lb) {
                bad("link_budget", e.to_string());
            }
        }
        if !(self.v_max >= 0.0) {
            bad("v_max", "speed must be non-negative".into());
        }
        if self.path_range[0] == 0 || self.path_range[0] > self.path_range[1] {
            bad("P_range", "need 1 <= min <= max".into());
        }
        if !(self.angular_spread >= 0.0) {
            bad("angular_spread", "must be non-negative".into());
        }
        if self.groups == 0 || !self.seq_len.is_multiple_of(self.groups.max(1)) {
            bad(
                "L_F",
                format!(
                    "L = {} is not divisible by L_F = {}",
                    self.seq_len, self.groups
                ),
            );
        }
        if self.groups > 1 && !self.tfst {
            bad(
                "L_F",
                "spreading over several subcarriers needs tfst = true".into(),
            );
        }
        if self.tfst && (self.subframes != 1 || self.subcarrier_block != 1) {
            bad(
                "tfst",
                "time-frequency spreading uses a single slab (J = N_tilde = 1)".into(),
            );
        }
        if self.algorithms.is_empty() {
            bad("algorithms", "need at least one algorithm".into());
        }
        for a in &self.algorithms {
            if !a.is_simulated() {
                bad(
                    "algorithms",
                    format!("`{a}` has no detector implementation"),
                );
            }
        }
        if !(0.0..1.0).contains(&self.kappa) {
            bad("kappa", "must lie in [0, 1)".into());
        }
        for (name, t) in [("T_h1", self.threshold_stf), ("T_h2", self.threshold_ae)] {
            if !(t > 0.0 && t < 1.0) {
                bad(name, "threshold must lie in (0, 1)".into());
            }
        }
        if !(self.epsilon > 0.0) {
            bad("epsilon", "must be positive".into());
        }
        if self.neighbors > self.zeta.len() {
            bad(
                "Q",
                format!(
                    "needs {} weights, zeta has {}",
                    self.neighbors,
                    self.zeta.len()
                ),
            );
        } else if let Err(e) = self.scheme() {
            bad("zeta", e.to_string());
        }
        if self.trials == 0 {
            bad("trials", "need at least one trial".into());
        }
        if self.extended_trials != 0 && self.extended_trials < self.trials {
            bad("extended_trials", "must be 0 or at least `trials`".into());
        }
        v
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(v))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigError(pub Vec<Violation>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration:")?;
        for v in &self.0 {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepParam {
    L,
    #[serde(rename = "snr_db")]
    SnrDb,
    M,
    #[serde(rename = "L_F")]
    LF,
    #[serde(rename = "v_max")]
    VMax,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::L => "L",
            SweepParam::SnrDb => "snr_db",
            SweepParam::M => "M",
            SweepParam::LF => "L_F",
            SweepParam::VMax => "v_max",
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &SimConfig, value: f64) -> SimConfig {
        let mut c = base.clone();
        match self {
            SweepParam::L => c.seq_len = value as usize,
            SweepParam::SnrDb => {
                c.snr_db = value;
                c.link_budget = None;
            }
            SweepParam::M => c.antennas = value as usize,
            SweepParam::LF => c.groups = value as usize,
            SweepParam::VMax => c.v_max = value,
        }
        c
    }

    fn integral(self) -> bool {
        matches!(self, SweepParam::L | SweepParam::M | SweepParam::LF)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

/// A named sweep over one parameter of a base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub params: SimConfig,
}

impl Experiment {
    pub fn points(&self) -> impl Iterator<Item = (f64, SimConfig)> + '_ {
        self.sweep
            .values
            .iter()
            .map(|&v| (v, self.sweep.param.apply(&self.params, v)))
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            out.push(Violation {
                field: "name",
                message: "must be a non-empty file stem".into(),
            });
        }
        let vals = &self.sweep.values;
        if vals.is_empty() {
            out.push(Violation {
                field: "sweep.values",
                message: "need at least one value".into(),
            });
        }
        if vals.windows(2).any(|w| !(w[1] > w[0])) {
            out.push(Violation {
                field: "sweep.values",
                message: "values must be strictly increasing".into(),
            });
        }
        let p = self.sweep.param;
        if p.integral() && vals.iter().any(|v| v.fract() != 0.0 || *v < 0.0) {
            out.push(Violation {
                field: "sweep.values",
                message: format!("{} takes non-negative integers", p.name()),
            });
        }
        let mut seen = Vec::new();
        for (value, cfg) in self.points() {
            for v in cfg.violations() {
                let msg = format!("{} (at {} = {value})", v.message, p.name());
                if !seen.contains(&msg) {
                    seen.push(msg.clone());
                    out.push(Violation {
                        field: v.field,
                        message: msg,
                    });
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(v))
        }
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        Ok(toml::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        assert!(SimConfig::default().validate().is_ok());
    }

    #[test]
    fn too_many_active_names_ka() {
        let c = SimConfig {
            active: 101,
            ..Default::default()
        };
        let v = c.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "Ka");
    }

    #[test]
    fn l_f_divisibility() {
        let c = SimConfig {
            seq_len: 32,
            groups: 5,
            tfst: true,
            ..Default::default()
        };
        assert!(c.violations().iter().any(|v| v.field == "L_F"));
    }

    #[test]
    fn all_violations_reported_together() {
        let c = SimConfig {
            active: 200,
            per_device: 3,
            kappa: 1.0,
            ..Default::default()
        };
        let fields: Vec<_> = c.violations().iter().map(|v| v.field).collect();
        assert_eq!(fields, vec!["Ka", "I", "kappa"]);
    }

    #[test]
    fn toml_rejects_unknown_keys() {
        let ok = "name = \"x\"\n[sweep]\nparam = \"L\"\nvalues = [20.0, 30.0]\n[params]\nK = 50\nalgorithms = [\"ae_jabid\", \"somp\"]\n";
        let e = Experiment::from_toml(ok).unwrap();
        assert_eq!(e.params.devices, 50);
        assert_eq!(
            e.params.algorithms,
            vec![Algorithm::AeJabid, Algorithm::Somp]
        );
        let bad = format!("{ok}bogus = 1\n");
        assert!(Experiment::from_toml(&bad).is_err());
    }

    #[test]
    fn sweep_values_must_increase() {
        let e = Experiment {
            name: "x".into(),
            sweep: SweepSpec {
                param: SweepParam::L,
                values: vec![40.0, 30.0],
            },
            params: SimConfig::default(),
        };
        assert!(e.violations().iter().any(|v| v.field == "sweep.values"));
    }
}

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::ML_BUDGET;
use crate::error::{Error, Result};
use crate::model::{Constellation, ConstellationKind, LosGeometry};
use crate::prox::{Mode, ProxParams};

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "PROX_JED_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelSpec {
    Rayleigh,
    Los(LosGeometry),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    #[default]
    Float,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Prox,
    Aprox,
    MrcCsir,
    MrcChest,
    MrcRt,
    MlJed,
}

impl MethodKind {
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::Prox => "prox",
            MethodKind::Aprox => "aprox",
            MethodKind::MrcCsir => "mrc_csir",
            MethodKind::MrcChest => "mrc_chest",
            MethodKind::MrcRt => "mrc_rt",
            MethodKind::MlJed => "ml_jed",
        }
    }
}

/// A detector in a sweep. `params` only applies to PrOX and APrOX; the mode is
/// implied by the kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodSpec {
    pub kind: MethodKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ProxParams>,
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        Self { kind, label: None, params: None }
    }

    pub fn prox(params: ProxParams) -> Self {
        let kind = match params.mode {
            Mode::Exact => MethodKind::Prox,
            Mode::Approx => MethodKind::Aprox,
        };
        Self { kind, label: None, params: Some(params) }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.label().to_string())
    }

    /// Solver parameters with the mode forced by the kind.
    pub fn prox_params(&self) -> Option<ProxParams> {
        let mode = match self.kind {
            MethodKind::Prox => Mode::Exact,
            MethodKind::Aprox => Mode::Approx,
            _ => return None,
        };
        Some(self.params.unwrap_or_default().with_mode(mode))
    }
}

fn default_budget() -> u64 {
    ML_BUDGET
}

/// Monte-Carlo sweep configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Receive antennas `B`.
    pub antennas: usize,
    /// Data slots `K`; blocks have `K + 1` slots.
    pub data_slots: usize,
    pub constellation: ConstellationKind,
    #[serde(default = "default_channel")]
    pub channel: ChannelSpec,
    pub snr_db: Vec<f64>,
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    pub methods: Vec<MethodSpec>,
    #[serde(default)]
    pub arithmetic: Arithmetic,
    /// Downlink symbols per trial; `None` means `K`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub downlink_symbols: Option<usize>,
    #[serde(default)]
    pub downlink_receiver: crate::baselines::DownlinkReceiver,
    #[serde(default = "default_budget")]
    pub ml_budget: u64,
}

fn default_channel() -> ChannelSpec {
    ChannelSpec::Rayleigh
}

impl SweepConfig {
    /// Rayleigh sweep with defaults for everything but the essentials.
    pub fn new(
        antennas: usize,
        data_slots: usize,
        constellation: ConstellationKind,
        snr_db: Vec<f64>,
        trials: usize,
        methods: Vec<MethodSpec>,
    ) -> Self {
        Self {
            antennas,
            data_slots,
            constellation,
            channel: ChannelSpec::Rayleigh,
            snr_db,
            trials,
            master_seed: 0,
            methods,
            arithmetic: Arithmetic::Float,
            downlink_symbols: None,
            downlink_receiver: Default::default(),
            ml_budget: ML_BUDGET,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.master_seed = seed;
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn constellation(&self) -> Constellation {
        Constellation::of_kind(self.constellation)
    }

    pub fn downlink_symbols(&self) -> usize {
        self.downlink_symbols.unwrap_or(self.data_slots)
    }

    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 {
            return Err(Error::Config("antennas must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("snr_db must be a non-empty list of finite values".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods configured".into()));
        }
        if let ChannelSpec::Los(g) = &self.channel {
            g.validate()?;
        }
        let mut labels = std::collections::HashSet::new();
        for m in &self.methods {
            if !labels.insert(m.label()) {
                return Err(Error::Config(format!("duplicate method label '{}'", m.label())));
            }
            if let Some(p) = m.prox_params() {
                p.validate()?;
            } else if m.params.is_some() {
                return Err(Error::Config(format!("method '{}' takes no params", m.label())));
            }
            if m.kind == MethodKind::MlJed {
                let m_size = self.constellation().size() as u64;
                let ok = m_size.checked_pow(self.data_slots as u32).is_some_and(|n| n <= self.ml_budget);
                if !ok {
                    return Err(Error::Capacity(format!(
                        "ML-JED with {} and K = {} exceeds the budget of {} candidates",
                        self.constellation, self.data_slots, self.ml_budget
                    )));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Worker threads: the environment override if set and valid, else all cores.
pub(crate) fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
antennas = 16
data_slots = 8
constellation = "qpsk"
snr_db = [-4.0, -3.0]
trials = 100
master_seed = 7

[channel]
kind = "los"
antenna_spacing = 0.5
user_distance = 40.0
user_angle = 0.3

[[methods]]
kind = "prox"
params = { rho_log2 = 0, t_max = 5 }

[[methods]]
kind = "mrc_chest"
"#;

    #[test]
    fn toml_round_trip() {
        let cfg = SweepConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(cfg.methods[0].prox_params().unwrap().rho_log2, 0);
        assert_eq!(cfg.methods[0].prox_params().unwrap().alpha_scale, 2.0);
        assert!(matches!(cfg.channel, ChannelSpec::Los(g) if g.user_distance == 40.0));
        let back = SweepConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.hash().len(), 64);
    }

    #[test]
    fn rejects_invalid_configs() {
        let base = SweepConfig::from_toml_str(EXAMPLE).unwrap();
        let mut c = base.clone();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.snr_db.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.methods.push(MethodSpec::new(MethodKind::MrcChest));
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.data_slots = 16;
        c.methods.push(MethodSpec::new(MethodKind::MlJed));
        assert!(matches!(c.validate(), Err(Error::Capacity(_))));
        let mut c = base.clone();
        c.methods[1].params = Some(ProxParams::default());
        assert!(c.validate().is_err());
        assert!(SweepConfig::from_toml_str("antennas = 1\nbogus = 2").is_err());
        let mut c = base;
        c.master_seed += 1;
        assert_ne!(c.hash(), SweepConfig::from_toml_str(EXAMPLE).unwrap().hash());
    }
}

//! Run configuration, read from TOML. Every field has a default, so an
//! empty file is a valid config and `to_toml` prints the full set.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boost::{AggregationMode, BoostParams};
use crate::data::{ClusterSpec, FeatureSpec};
use crate::error::{Error, Result};
use crate::lasso::LassoParams;
use crate::select::{WindowSpec, DEFAULT_BETA, DEFAULT_MULTIPLIERS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds synthetic data, share randomness and server keys.
    pub seed: u64,
    pub topology: TopologyConfig,
    pub data: DataConfig,
    pub features: FeatureConfig,
    pub boost: BoostParams,
    pub selection: SelectionConfig,
    pub lasso: LassoParams,
    pub protocol: ProtocolConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            topology: TopologyConfig::default(),
            data: DataConfig::default(),
            features: FeatureConfig::default(),
            boost: BoostParams::default(),
            selection: SelectionConfig::default(),
            lasso: LassoParams::default(),
            protocol: ProtocolConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transport {
    #[default]
    InProcess,
    /// Loopback sockets between threads.
    TcpLoopback,
    /// One process per party, addresses from `topology.addresses`.
    Tcp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub transport: Transport,
    /// Party id -> `host:port`, for process-per-party runs.
    pub addresses: BTreeMap<String, String>,
    /// Server ids; default: the three ids after the largest farm id.
    pub servers: Vec<u32>,
    pub recv_timeout_secs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FarmConfig {
    pub id: u32,
    pub path: PathBuf,
    pub capacity: f64,
}

impl Default for FarmConfig {
    fn default() -> Self {
        FarmConfig {
            id: 1,
            path: PathBuf::new(),
            capacity: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Farm CSVs; empty means use the synthetic cluster.
    pub farms: Vec<FarmConfig>,
    /// Farm id of the active party (label owner).
    pub target: Option<u32>,
    /// Leading share of aligned samples used for training.
    pub train_fraction: f64,
    pub out_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            farms: Vec::new(),
            target: None,
            train_fraction: 0.75,
            out_dir: PathBuf::from("windshare-out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub lags: usize,
    pub nwp_steps: usize,
    /// Forecast horizons in 15-minute steps.
    pub horizons: Vec<usize>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let f = FeatureSpec::default();
        FeatureConfig {
            lags: f.lags,
            nwp_steps: f.nwp_steps,
            horizons: vec![1, 4, 16],
        }
    }
}

impl FeatureConfig {
    pub fn spec(&self) -> FeatureSpec {
        FeatureSpec {
            lags: self.lags,
            nwp_steps: self.nwp_steps,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub beta: f64,
    pub multipliers: Vec<f64>,
    pub window: WindowSpec,
    /// Explicit participant farm ids; skips MMD selection when set.
    pub participants: Option<Vec<u32>>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            beta: DEFAULT_BETA,
            multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            window: WindowSpec::default(),
            participants: None,
        }
    }
}

/// How vertical models are trained by `train`, `eval`, `compare` and `bench`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// The multi-party protocol.
    #[default]
    Secure,
    /// Co-located plaintext training on the same quantized gradients. Same
    /// model, no privacy; for accuracy studies on large feature sets.
    Plaintext,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub engine: EngineKind,
    pub frac_bits: u32,
    pub aggregation: AggregationMode,
    pub audit: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            engine: EngineKind::Secure,
            frac_bits: 20,
            aggregation: AggregationMode::OneHot,
            audit: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cluster: ClusterSpec,
    /// Extra farms with unrelated weather appended to the cluster.
    pub independent: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            cluster: ClusterSpec::default(),
            independent: 0,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.boost.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return bad(format!("data.train_fraction must lie in (0, 1), got {}", self.data.train_fraction));
        }
        if self.features.horizons.is_empty() || self.features.horizons.contains(&0) {
            return bad("features.horizons must be non-empty positive steps".into());
        }
        if self.features.lags == 0 {
            return bad("features.lags must be at least 1".into());
        }
        if !(self.selection.beta > 0.0) {
            return bad(format!("selection.beta must be positive, got {}", self.selection.beta));
        }
        if self.protocol.frac_bits == 0 || self.protocol.frac_bits > 40 {
            return bad(format!("protocol.frac_bits must lie in 1..=40, got {}", self.protocol.frac_bits));
        }
        let mut ids: Vec<u32> = self.data.farms.iter().map(|f| f.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return bad("duplicate farm id in data.farms".into());
        }
        if !self.topology.servers.is_empty() && self.topology.servers.len() != 3 {
            return bad(format!("topology.servers needs exactly 3 ids, got {}", self.topology.servers.len()));
        }
        Ok(())
    }
}

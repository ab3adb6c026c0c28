use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{DqnHyper, Nsga2Config, QHyper};
use crate::domain::{CostWeights, NetworkModel, ServerSpec};
use crate::mdp::{FeatureCaps, Objective, RewardConfig};
use crate::ppo::PpoHyper;
use crate::sim::{EnvConfig, WorkloadProfile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Ppo,
    Qlearning,
    Dqn,
    Nsga2,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Ppo, Algorithm::Qlearning, Algorithm::Dqn, Algorithm::Nsga2];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Ppo => "ppo",
            Algorithm::Qlearning => "qlearning",
            Algorithm::Dqn => "dqn",
            Algorithm::Nsga2 => "nsga2",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ppo" => Ok(Algorithm::Ppo),
            "qlearning" => Ok(Algorithm::Qlearning),
            "dqn" => Ok(Algorithm::Dqn),
            "nsga2" => Ok(Algorithm::Nsga2),
            other => Err(format!("unknown algorithm `{other}` (expected ppo, qlearning, dqn or nsga2)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Cloud,
    #[default]
    Fog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default)]
    pub tier: Tier,
    pub cores: u32,
    pub freq_mhz: f64,
    pub ram_gb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub bandwidth_mbps: f64,
    pub propagation_ms: f64,
}

/// Either per-tier link characteristics or explicit matrices. A link
/// touching a cloud server uses the cloud characteristics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub cloud: Link,
    pub fog: Link,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bandwidth_mbps: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propagation_ms: Option<Vec<Vec<f64>>>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            cloud: Link { bandwidth_mbps: 6.0, propagation_ms: 15.0 },
            fog: Link { bandwidth_mbps: 25.0, propagation_ms: 3.0 },
            bandwidth_mbps: None,
            propagation_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Task-size multiplier of the evaluation workload.
    pub size_scale: f64,
    /// Blocks of `ppo.horizon` decisions to evaluate.
    pub blocks: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { size_scale: 0.5, blocks: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardSection {
    pub penalty: f64,
}

impl Default for RewardSection {
    fn default() -> Self {
        Self { penalty: -10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub objective: Objective,
    pub seeds: Vec<u64>,
    /// Policy-update budget.
    pub updates: usize,
    /// Random-policy decisions used to fix the cost normalisation of a run.
    pub calibration_decisions: usize,
    pub weights: CostWeights,
    pub servers: Vec<ServerEntry>,
    pub network: NetworkSection,
    pub workload: WorkloadProfile,
    pub eval: EvalSection,
    pub reward: RewardSection,
    pub features: FeatureCaps,
    pub ppo: PpoHyper,
    pub qlearning: QHyper,
    pub dqn: DqnHyper,
    pub nsga2: Nsga2Config,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            objective: Objective::Weighted,
            seeds: vec![1, 2, 3, 4, 5],
            updates: 100,
            calibration_decisions: 512,
            weights: CostWeights::default(),
            servers: paper_mirror_servers(),
            network: NetworkSection::default(),
            workload: WorkloadProfile::default(),
            eval: EvalSection::default(),
            reward: RewardSection::default(),
            features: FeatureCaps::default(),
            ppo: PpoHyper::default(),
            qlearning: QHyper::default(),
            dqn: DqnHyper::default(),
            nsga2: Nsga2Config::default(),
        }
    }
}

/// Three cloud-like and three fog-like servers.
pub fn paper_mirror_servers() -> Vec<ServerEntry> {
    let s = |name: &str, tier, cores, ghz: f64, ram_gb| ServerEntry {
        name: Some(name.into()),
        tier,
        cores,
        freq_mhz: ghz * 1000.0,
        ram_gb,
    };
    vec![
        s("cloud-1", Tier::Cloud, 2, 2.0, 9.0),
        s("cloud-2", Tier::Cloud, 16, 2.0, 64.0),
        s("cloud-3", Tier::Cloud, 2, 2.2, 4.0),
        s("fog-1", Tier::Fog, 4, 1.2, 1.0),
        s("fog-2", Tier::Fog, 8, 3.2, 16.0),
        s("fog-3", Tier::Fog, 2, 3.1, 4.0),
    ]
}

fn cfg_err(path: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config { path: path.into(), msg: msg.into() }
}

impl ExperimentConfig {
    pub fn fleet(&self) -> Vec<ServerSpec> {
        self.servers.iter().enumerate().map(|(i, s)| ServerSpec::new(i, s.cores, s.freq_mhz, s.ram_gb)).collect()
    }

    pub fn network_model(&self) -> Result<NetworkModel> {
        let n = self.servers.len();
        let net = match (&self.network.bandwidth_mbps, &self.network.propagation_ms) {
            (Some(bw), Some(prop)) => NetworkModel::new(bw.clone(), prop.clone()),
            (None, None) => NetworkModel::from_fn(n, |j, k| {
                let l = if self.servers[j].tier == Tier::Cloud || self.servers[k].tier == Tier::Cloud {
                    self.network.cloud
                } else {
                    self.network.fog
                };
                (l.bandwidth_mbps, l.propagation_ms)
            }),
            _ => {
                return Err(cfg_err("network", "bandwidth_mbps and propagation_ms must be given together"));
            }
        };
        let net = net.map_err(|e| cfg_err("network", e.to_string()))?;
        if net.len() != n {
            return Err(cfg_err("network.bandwidth_mbps", format!("matrix is {}x{}, fleet has {n} servers", net.len(), net.len())));
        }
        Ok(net)
    }

    pub fn reward_config(&self) -> RewardConfig {
        RewardConfig { penalty: self.reward.penalty, w1: self.weights.w1, w2: self.weights.w2 }
    }

    pub fn env_config(&self, workload: WorkloadProfile, seed: u64) -> Result<EnvConfig> {
        Ok(EnvConfig {
            fleet: self.fleet(),
            net: self.network_model()?,
            weights: self.weights,
            caps: self.features,
            workload,
            seed,
        })
    }

    /// The evaluation workload: the training profile with its task sizes
    /// scaled.
    pub fn eval_workload(&self) -> WorkloadProfile {
        let mut w = self.workload.clone();
        w.size_scale *= self.eval.size_scale;
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.servers.is_empty() {
            return Err(cfg_err("servers", "fleet must not be empty"));
        }
        for (i, s) in self.servers.iter().enumerate() {
            if s.cores == 0 {
                return Err(cfg_err(format!("servers[{i}].cores"), "C3: cores must be >= 1"));
            }
            if !(s.freq_mhz > 0.0 && s.freq_mhz.is_finite()) {
                return Err(cfg_err(format!("servers[{i}].freq_mhz"), "C3: frequency must be positive"));
            }
            if !(s.ram_gb > 0.0 && s.ram_gb.is_finite()) {
                return Err(cfg_err(format!("servers[{i}].ram_gb"), "C3: RAM size must be positive"));
            }
        }
        let w = &self.weights;
        if !w.weighted_valid() {
            return Err(cfg_err(
                "weights",
                format!("C6: w1 + w2 must equal 1 with both in [0, 1] (got {} + {})", w.w1, w.w2),
            ));
        }
        if !w.load_balance_valid() {
            return Err(cfg_err("weights", format!("a1 + a2 must equal 1 with both in [0, 1] (got {} + {})", w.a1, w.a2)));
        }
        self.network_model()?;
        self.workload.validate()?;
        let max_cores = self.servers.iter().map(|s| s.cores as f64).fold(0.0, f64::max);
        let max_ram = self.servers.iter().map(|s| s.ram_gb).fold(0.0, f64::max);
        if self.workload.cpu_demand.hi > max_cores {
            return Err(cfg_err(
                "workload.cpu_demand",
                "C2: largest demand exceeds every server, its utilization would leave [0, 1]",
            ));
        }
        if self.workload.ram_demand_gb.hi > max_ram {
            return Err(cfg_err(
                "workload.ram_demand_gb",
                "C2: largest demand exceeds every server, its utilization would leave [0, 1]",
            ));
        }
        if self.features.max_servers < self.servers.len() {
            return Err(cfg_err(
                "features.max_servers",
                format!("{} servers do not fit into {} feature slots", self.servers.len(), self.features.max_servers),
            ));
        }
        if self.seeds.is_empty() {
            return Err(cfg_err("seeds", "at least one seed is required"));
        }
        if self.updates == 0 {
            return Err(cfg_err("updates", "must be >= 1"));
        }
        if !(self.eval.size_scale > 0.0) {
            return Err(cfg_err("eval.size_scale", "must be positive"));
        }
        if !(self.reward.penalty < 0.0) {
            return Err(cfg_err("reward.penalty", "must be negative"));
        }
        self.ppo.validate().map_err(|e| cfg_err("ppo", e.to_string()))?;
        self.qlearning.validate().map_err(|e| cfg_err("qlearning", e.to_string()))?;
        self.dqn.validate().map_err(|e| cfg_err("dqn", e.to_string()))?;
        self.nsga2.validate().map_err(|e| cfg_err("nsga2", e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| cfg_err("", e.to_string()))
    }
}

/// Parses and validates a TOML configuration; omitted fields take their
/// defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| cfg_err("", e.to_string().trim_end()))?;
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(if path == "." { String::new() } else { path }, e.into_inner().to_string().trim_end())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

pub fn save_config(cfg: &ExperimentConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, cfg.to_toml()?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_config() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.ppo.gamma, 0.9);
        assert_eq!(c.ppo.clip, 0.3);
        assert_eq!(c.fleet().len(), 6);
    }

    #[test]
    fn tier_links() {
        let net = ExperimentConfig::default().network_model().unwrap();
        assert_eq!(net.propagation_ms[0][3], 15.0);
        assert_eq!(net.bandwidth_mbps[3][0], 6.0);
        assert_eq!(net.propagation_ms[3][4], 3.0);
        assert_eq!(net.bandwidth_mbps[4][5], 25.0);
        assert_eq!(net.propagation_ms[2][2], 0.0);
    }

    #[test]
    fn round_trip() {
        let mut c = ExperimentConfig::default();
        c.algorithm = Algorithm::Nsga2;
        c.weights = CostWeights { a1: 0.3, a2: 0.7, w1: 0.1, w2: 0.9 };
        c.seeds = vec![7, 8];
        let back = parse_config(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_config("[weights]\nw1 = 0.7\nw2 = 0.7\n").unwrap_err().to_string();
        assert!(e.contains("C6") && e.contains("weights"), "{e}");
        let e = parse_config("[[servers]]\ncores = 2\nfreq_mhz = 0.0\nram_gb = 1.0\n").unwrap_err().to_string();
        assert!(e.contains("C3") && e.contains("servers[0].freq_mhz"), "{e}");
        let e = parse_config("[ppo]\ngamma = \"high\"\n").unwrap_err().to_string();
        assert!(e.contains("ppo.gamma"), "{e}");
        let e = parse_config("[workload.cpu_demand]\nlo = 1.0\nhi = 40.0\n").unwrap_err().to_string();
        assert!(e.contains("C2"), "{e}");
        let e = parse_config("[ppo]\nepochs = 0\n").unwrap_err().to_string();
        assert!(e.contains("K >= 1"), "{e}");
        assert!(parse_config("bogus = 1\n").is_err());
    }
}

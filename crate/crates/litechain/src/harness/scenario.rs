//! Scenario configuration: one structured TOML file drives a whole run.
//! Every field has a default; the channel defaults mirror the standard
//! parameter table (broadcast coefficient 0.5, antenna gain 4.11, carrier
//! 915 MHz, path loss exponent 2.8, light speed 3e8 m/s, broadcast timeout
//! 300 s) and the training defaults mirror batch size 128, one local
//! epoch, learning rate 0.001.

use serde::{Deserialize, Serialize};

use crate::adversary::AttackConfig;
use crate::clustering::GameConfig;
use crate::fl::ModelKind;
use crate::radio::{ChannelParams, SizeProfile};

/// Which protocol stack a run simulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Two-tier clustered protocol with identifier storage and pruning.
    #[default]
    Litechain,
    /// One-tier baseline storing full models on-chain.
    FlcModel,
    /// One-tier baseline storing model identifiers on-chain.
    FlcHash,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Litechain => "litechain",
            Scheme::FlcModel => "flc_model",
            Scheme::FlcHash => "flc_hash",
        }
    }

    pub fn is_one_tier(&self) -> bool {
        !matches!(self, Scheme::Litechain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub devices: usize,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    /// Compute capacities assigned round-robin, float ops per second.
    pub compute_tiers: Vec<f64>,
    /// Transmission power per device, watts.
    pub tx_power: f64,
    /// Reliability sampled uniformly from this range at start.
    pub reliability_range: (f64, f64),
    /// Minimum pairwise distance enforced at placement, meters.
    pub placement_min_distance: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            devices: 20,
            area_side: 1000.0,
            compute_tiers: vec![1e9, 2e9, 4e9, 8e9],
            tx_power: 0.2,
            reliability_range: (0.66, 0.99),
            placement_min_distance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub input_dim: usize,
    pub classes: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Size of the task-published verification pool that committee members
    /// sample quality checks from.
    pub verify_samples: usize,
    pub blob_spread: f64,
    pub blob_noise: f64,
    pub dirichlet_alpha: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            classes: 10,
            train_samples: 2000,
            test_samples: 1000,
            verify_samples: 256,
            blob_spread: 3.0,
            blob_noise: 0.8,
            dirichlet_alpha: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlConfig {
    pub learning_rate: f64,
    /// Local SGD steps per round.
    pub local_steps: u32,
    pub batch_size: usize,
    pub model: ModelChoice,
    /// Hidden width for the MLP model.
    pub hidden: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    #[default]
    SoftmaxLinear,
    Mlp,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            local_steps: 1,
            batch_size: 128,
            model: ModelChoice::SoftmaxLinear,
            hidden: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Rounds between update consensuses (the epoch length).
    pub update_every: u64,
    /// Quality threshold; zero means `1 / classes`.
    pub quality_threshold: f64,
    /// Verifier sample size for quality checks.
    pub verify_sample: usize,
    pub reward_block: f64,
    pub reward_participation: f64,
    /// Staleness base weight; zero means `1 / K` once K is known.
    pub staleness_base: f64,
    pub staleness_q: f64,
    /// Duplicate-identifier defense (off for the no-detection study arm).
    pub replay_detection: bool,
    /// Quality filtering at verifiers (off for the unfiltered study arm).
    pub quality_filter: bool,
    pub reliability_floor: f64,
    pub reliability_ceiling: f64,
    pub zero_prior: f64,
    pub retry_cap: usize,
    /// Accounting overhead per on-chain model fragment, bytes.
    pub fragment_overhead: f64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            update_every: 20,
            quality_threshold: 0.0,
            verify_sample: 64,
            reward_block: 100.0,
            reward_participation: 1.0,
            staleness_base: 0.0,
            staleness_q: 0.5,
            replay_detection: true,
            quality_filter: true,
            reliability_floor: 0.1,
            reliability_ceiling: 0.99,
            zero_prior: 0.5,
            retry_cap: 10,
            fragment_overhead: 256.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StopConfig {
    pub target_accuracy: f64,
    pub max_rounds: u64,
}

impl Default for StopConfig {
    fn default() -> Self {
        Self {
            target_accuracy: 0.73,
            max_rounds: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusteringConfig {
    pub penalty_scale: f64,
    pub neighbor_min_rate: f64,
    pub slot_cap: usize,
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        let g = GameConfig::default();
        Self {
            penalty_scale: g.penalty_scale,
            neighbor_min_rate: g.neighbor_min_rate,
            slot_cap: g.slot_cap,
        }
    }
}

impl ClusteringConfig {
    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            penalty_scale: self.penalty_scale,
            neighbor_min_rate: self.neighbor_min_rate,
            slot_cap: self.slot_cap,
        }
    }
}

/// The whole scenario: everything a deterministic run depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    pub scheme: Scheme,
    pub network: NetworkConfig,
    pub channel: ChannelParams,
    pub sizes: SizeProfile,
    pub data: DataConfig,
    pub fl: FlConfig,
    pub protocol: ProtocolConfig,
    pub attack: AttackConfig,
    pub stop: StopConfig,
    pub clustering: ClusteringConfig,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn model_kind(&self) -> ModelKind {
        match self.fl.model {
            ModelChoice::SoftmaxLinear => ModelKind::SoftmaxLinear,
            ModelChoice::Mlp => ModelKind::Mlp {
                hidden: self.fl.hidden,
            },
        }
    }

    /// Effective quality threshold: configured value or `1 / classes`.
    pub fn quality_threshold(&self) -> f64 {
        if self.protocol.quality_threshold > 0.0 {
            self.protocol.quality_threshold
        } else {
            1.0 / self.data.classes as f64
        }
    }

    /// Field-level validation with the offending field in the message.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.network.devices;
        if n < 4 {
            return Err(format!("network.devices: {n} is below the minimum of 4"));
        }
        if self.network.area_side <= 0.0 {
            return Err("network.area_side: must be positive".into());
        }
        if self.network.compute_tiers.is_empty()
            || self.network.compute_tiers.iter().any(|&c| c <= 0.0)
        {
            return Err("network.compute_tiers: need at least one positive tier".into());
        }
        if self.network.tx_power <= 0.0 {
            return Err("network.tx_power: must be positive".into());
        }
        let (lo, hi) = self.network.reliability_range;
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(format!(
                "network.reliability_range: [{lo}, {hi}] is not a sub-range of [0, 1]"
            ));
        }
        if !self.sizes.check_invariants() {
            return Err(
                "sizes: all entries must be non-negative and msg_size <= block_size".into(),
            );
        }
        if self.channel.bandwidth <= 0.0
            || self.channel.noise_power <= 0.0
            || self.channel.carrier_freq <= 0.0
            || self.channel.light_speed <= 0.0
            || self.channel.antenna_gain <= 0.0
        {
            return Err("channel: bandwidth, noise, carrier, light speed, and gain must be positive".into());
        }
        if self.channel.pathloss_exp < 2.0 {
            return Err(format!(
                "channel.pathloss_exp: {} is below the free-space minimum of 2",
                self.channel.pathloss_exp
            ));
        }
        if self.data.classes < 2 {
            return Err("data.classes: need at least 2 classes".into());
        }
        if self.data.input_dim == 0 {
            return Err("data.input_dim: must be positive".into());
        }
        if self.data.train_samples < n {
            return Err(format!(
                "data.train_samples: {} cannot cover {} devices",
                self.data.train_samples, n
            ));
        }
        if self.data.dirichlet_alpha <= 0.0 {
            return Err("data.dirichlet_alpha: must be positive".into());
        }
        if self.fl.local_steps == 0 {
            return Err("fl.local_steps: must be at least 1".into());
        }
        if self.fl.batch_size == 0 {
            return Err("fl.batch_size: must be at least 1".into());
        }
        if self.fl.learning_rate < 0.0 {
            return Err("fl.learning_rate: must be non-negative".into());
        }
        if self.protocol.update_every == 0 {
            return Err("protocol.update_every: must be at least 1".into());
        }
        if self.protocol.verify_sample == 0 {
            return Err("protocol.verify_sample: must be at least 1".into());
        }
        if self.stop.max_rounds == 0 {
            return Err("stop.max_rounds: must be at least 1".into());
        }
        if !self.stop.target_accuracy.is_finite() || self.stop.target_accuracy < 0.0 {
            return Err("stop.target_accuracy: must be a non-negative number (above 1 disables the stop)".into());
        }
        self.attack.validate().map_err(|e| format!("attack.{e}"))?;
        if let Some(map) = &self.attack.flip_map {
            if map.len() != self.data.classes {
                return Err(format!(
                    "attack.flip_map: permutation of {} labels does not match data.classes = {}",
                    map.len(),
                    self.data.classes
                ));
            }
        }
        Ok(())
    }
}

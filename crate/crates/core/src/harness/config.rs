//! Declarative experiment description, loaded from TOML.
//!
//! Every table rejects unknown keys. The published JSON schema lives in
//! `schema/experiment.schema.json` and is kept in step with these types by a test.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackSpec;
use crate::error::{Error, Result};
use crate::group::Tier;
use crate::hypermesh::{ClientId, HypermeshTopology};
use crate::quantfl::{Codebook, SyntheticBlobs, TrainConfig};
use crate::transport::{SimSchedule, TcpOptions};

pub const SCHEMA: &str = include_str!("../../schema/experiment.schema.json");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Defense {
    #[default]
    On,
    Off,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportKind {
    #[default]
    Sim,
    Tcp,
}

impl TransportKind {
    pub fn name(self) -> &'static str {
        match self {
            TransportKind::Sim => "sim",
            TransportKind::Tcp => "tcp",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Hidden layer widths; input and output sizes come from the dataset.
    pub hidden: Vec<usize>,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { hidden: vec![16] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSpec {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for TrainingSpec {
    fn default() -> Self {
        Self {
            epochs: 2,
            lr: 0.2,
            batch_size: 8,
        }
    }
}

impl From<TrainingSpec> for TrainConfig {
    fn from(t: TrainingSpec) -> Self {
        TrainConfig {
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdxSpec {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    #[serde(default)]
    pub train_limit: Option<usize>,
    #[serde(default)]
    pub test_limit: Option<usize>,
    #[serde(default = "ten")]
    pub classes: usize,
}

fn ten() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic(SyntheticBlobs),
    Idx(IdxSpec),
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticBlobs::default())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    /// Dataset, split, initial model and local training.
    pub data: u64,
    /// Key pairs, pairwise randoms and sealing.
    pub protocol: u64,
    pub attack: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            data: 1,
            protocol: 2,
            attack: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcpSpec {
    pub stage_timeout_ms: u64,
    pub connect_timeout_ms: u64,
}

impl Default for TcpSpec {
    fn default() -> Self {
        Self {
            stage_timeout_ms: 30_000,
            connect_timeout_ms: 30_000,
        }
    }
}

impl From<TcpSpec> for TcpOptions {
    fn from(t: TcpSpec) -> Self {
        TcpOptions {
            stage_timeout: Duration::from_millis(t.stage_timeout_ms),
            connect_timeout: Duration::from_millis(t.connect_timeout_ms),
            disconnect_at_round: None,
        }
    }
}

/// One attacker arrangement for the detection sweep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlacementSpec {
    pub d: usize,
    pub n: usize,
    pub attackers: usize,
    pub same_group: bool,
    /// Explicit attacker ids; chosen canonically when absent.
    #[serde(default)]
    pub clients: Option<Vec<ClientId>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    /// Empty means the built-in d^2 and d^3 table rows.
    pub placements: Vec<PlacementSpec>,
    /// Attack magnitude for the detection sweep.
    pub magnitude: [i64; 2],
    pub change_sizes: Vec<i64>,
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub attacker: ClientId,
    pub window_offset: usize,
    pub attack_round: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            placements: Vec::new(),
            magnitude: [20, 30],
            change_sizes: vec![0, 1, 2, 3, 4, 5, 6],
            counts: vec![1, 2, 4, 8, 16, 32],
            seeds: vec![1, 2, 3],
            attacker: 0,
            window_offset: 0,
            attack_round: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub n: usize,
    pub rounds: u32,
    #[serde(default = "ternary")]
    pub quantization: Codebook,
    #[serde(default)]
    pub defense: Defense,
    /// Ignore `attacks`; produces the no-attack comparison curve.
    #[serde(default)]
    pub baseline: bool,
    #[serde(default = "test_tier")]
    pub tier: Tier,
    #[serde(default)]
    pub transport: TransportKind,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Count coordinates whose individual values the server could infer.
    #[serde(default)]
    pub report_leakage: bool,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub training: TrainingSpec,
    #[serde(default)]
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub schedule: SimSchedule,
    #[serde(default)]
    pub tcp: TcpSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
}

fn ternary() -> Codebook {
    Codebook::Ternary
}

fn test_tier() -> Tier {
    Tier::Test
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// A ternary run on synthetic blobs with no attackers and default settings.
    pub fn new(d: usize, n: usize, rounds: u32) -> Self {
        Self {
            d,
            n,
            rounds,
            quantization: Codebook::Ternary,
            defense: Defense::On,
            baseline: false,
            tier: Tier::Test,
            transport: TransportKind::Sim,
            output: default_output(),
            report_leakage: false,
            model: ModelSpec::default(),
            training: TrainingSpec::default(),
            dataset: DatasetSpec::default(),
            seeds: Seeds::default(),
            attacks: Vec::new(),
            schedule: SimSchedule::default(),
            tcp: TcpSpec::default(),
            sweep: SweepSpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config; relative dataset paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut config = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let (DatasetSpec::Idx(idx), Some(dir)) = (&mut config.dataset, path.parent()) {
            for p in [
                &mut idx.train_images,
                &mut idx.train_labels,
                &mut idx.test_images,
                &mut idx.test_labels,
            ] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config types serialize to TOML")
    }

    pub fn topology(&self) -> Result<HypermeshTopology> {
        HypermeshTopology::build(self.d, self.n)
    }

    /// Attacks actually in force; none for baseline runs.
    pub fn active_attacks(&self) -> &[AttackSpec] {
        if self.baseline {
            &[]
        } else {
            &self.attacks
        }
    }

    /// Checks that do not need the dataset. Attack windows are checked
    /// against the model size when the experiment is prepared.
    pub fn validate(&self) -> Result<()> {
        let topology = self.topology()?;
        let t = &self.training;
        if t.epochs == 0 || t.batch_size == 0 || !t.lr.is_finite() || t.lr < 0.0 {
            return Err(Error::Config(format!("bad training settings {t:?}")));
        }
        if self.model.hidden.contains(&0) {
            return Err(Error::Config("hidden layer of width 0".into()));
        }
        if let DatasetSpec::Synthetic(b) = &self.dataset {
            if b.classes < 2
                || b.train < topology.client_count()
                || b.test == 0
                || !b.spread.is_finite()
                || b.spread < 0.0
            {
                return Err(Error::Config(format!("bad synthetic dataset {b:?}")));
            }
        }
        if self.schedule.delay_min > self.schedule.delay_max {
            return Err(Error::Config("schedule delay_min exceeds delay_max".into()));
        }
        for a in &self.attacks {
            if let Some(r) = a.rounds.iter().find(|&&r| r == 0 || r > self.rounds) {
                return Err(Error::Config(format!(
                    "attack round {r} outside 1..={}",
                    self.rounds
                )));
            }
            if let Some(c) = a.clients.iter().find(|&&c| c >= topology.client_count()) {
                return Err(Error::Config(format!(
                    "attacker id {c} outside {} clients",
                    topology.client_count()
                )));
            }
        }
        Ok(())
    }
}

//! Round-by-round federated learning simulation.
//!
//! Each round: select clients, train the honest ones from the broadcast
//! model, let malicious clients submit, aggregate, evaluate on the held-out
//! test set. Client ids `[0, n_malicious)` are the malicious ones. Updates
//! are always assembled in ascending client-id order, so results do not
//! depend on how local training is scheduled across threads.

use std::path::PathBuf;

use rand::seq::index;
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationRule;
use crate::attack::{self, AttackSpec};
use crate::data::{self, LabeledDataset};
use crate::error::{Error, Result};
use crate::model::{Architecture, TrainConfig, DEFAULT_HIDDEN};
use crate::rng::{self, Domain};
use crate::stpa::{self, MomentumState, StpaConfig};
use crate::vector::{subtract, ClientUpdate, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Every client participates in every round.
    CrossSilo,
    /// A uniform random subset participates each round.
    CrossDevice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    Iid,
    NoniidShards {
        shards_per_client: usize,
        shard_size: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Linear,
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
    },
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Gaussian blobs; the last `test_per_class` rows of each class are held out.
    Blobs {
        n_classes: usize,
        dim: usize,
        samples_per_class: usize,
        test_per_class: usize,
        spread: f64,
        /// Defaults to the experiment seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    /// Files in the flat layout of [`data::write_dataset`]. Without a test
    /// file, a random `test_fraction` of the training rows is held out.
    File {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

impl DataConfig {
    /// 10-class, 20-dimensional blobs with 200 training and 100 test rows
    /// per class.
    pub fn default_blobs() -> Self {
        Self::Blobs {
            n_classes: 10,
            dim: 20,
            samples_per_class: 200,
            test_per_class: 100,
            spread: DEFAULT_BLOB_SPREAD,
            seed: None,
        }
    }
}

/// Blob spread used by the presets.
pub const DEFAULT_BLOB_SPREAD: f64 = 0.2;

/// Full description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub n_clients: usize,
    pub n_malicious: usize,
    /// Defaults to `n_clients`.
    #[serde(default)]
    pub clients_per_round: Option<usize>,
    pub rounds: usize,
    pub attack: AttackSpec,
    pub rule: AggregationRule,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_partition")]
    pub partition: PartitionConfig,
    pub seed: u64,
    /// Used when `rule` is `stpa`.
    #[serde(default)]
    pub stpa: StpaConfig,
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    #[serde(default = "DataConfig::default_blobs")]
    pub data: DataConfig,
}

fn default_partition() -> PartitionConfig {
    PartitionConfig::Iid
}

fn default_model() -> ModelConfig {
    ModelConfig::Linear
}

impl ScenarioConfig {
    /// 20 clients, 7 malicious, all participating; linear model on the
    /// default blobs for 100 rounds.
    pub fn cross_silo(rule: AggregationRule, attack: AttackSpec, seed: u64) -> Self {
        Self {
            scenario: Scenario::CrossSilo,
            n_clients: 20,
            n_malicious: 7,
            clients_per_round: Some(20),
            rounds: 100,
            attack,
            rule,
            train: TrainConfig::default(),
            partition: PartitionConfig::Iid,
            seed,
            stpa: StpaConfig::default(),
            model: ModelConfig::Linear,
            data: DataConfig::default_blobs(),
        }
    }

    /// 100 clients, 34 malicious, 20 sampled per round.
    pub fn cross_device(rule: AggregationRule, attack: AttackSpec, seed: u64) -> Self {
        Self {
            scenario: Scenario::CrossDevice,
            n_clients: 100,
            n_malicious: 34,
            clients_per_round: Some(20),
            ..Self::cross_silo(rule, attack, seed)
        }
    }

    pub fn per_round(&self) -> usize {
        self.clients_per_round.unwrap_or(self.n_clients)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_clients == 0 {
            return bad("n_clients must be positive".into());
        }
        if self.n_malicious >= self.n_clients {
            return bad(format!(
                "n_malicious ({}) must be below n_clients ({})",
                self.n_malicious, self.n_clients
            ));
        }
        let k = self.per_round();
        if k == 0 || k > self.n_clients {
            return bad(format!("clients_per_round {k} outside 1..={}", self.n_clients));
        }
        if self.scenario == Scenario::CrossSilo && k != self.n_clients {
            return bad("cross_silo requires clients_per_round == n_clients".into());
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.attack.validate().map_err(wrap)?;
        self.rule.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        if self.rule == AggregationRule::Stpa {
            self.stpa.validate().map_err(wrap)?;
        }
        if let AggregationRule::Krum { f, m } = self.rule {
            if k < f + 2 + m {
                return bad(format!("krum with f = {f}, m = {m} needs more than {k} clients per round"));
            }
        }
        if let AggregationRule::TrimmedMean { gamma } = self.rule {
            if k < 2 * crate::aggregation::trim_count(k, gamma) + 1 {
                return bad(format!("trim rate {gamma} leaves no values with {k} clients"));
            }
        }
        if let ModelConfig::Mlp { hidden: 0 } = self.model {
            return bad("mlp hidden width must be positive".into());
        }
        if let DataConfig::Blobs { samples_per_class, test_per_class, .. } = self.data {
            if samples_per_class == 0 || test_per_class == 0 {
                return bad("blobs need positive samples_per_class and test_per_class".into());
            }
        }
        if let DataConfig::File { test_fraction, test: None, .. } = self.data {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return bad(format!("test_fraction {test_fraction} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Metrics for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub selected: Vec<usize>,
    pub malicious_selected: usize,
    pub benign_kept: usize,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub discarded: bool,
    pub test_error_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentState {
    pub global_model: ParamVector,
    pub momentum: MomentumState,
    /// Index of the next round to run.
    pub round: usize,
}

/// Uniform sample without replacement (cross-device) or everyone
/// (cross-silo), sorted ascending.
pub fn select_clients(round: usize, cfg: &ScenarioConfig) -> Vec<usize> {
    let k = cfg.per_round();
    if cfg.scenario == Scenario::CrossSilo || k >= cfg.n_clients {
        return (0..cfg.n_clients).collect();
    }
    let mut rng = rng::stream(cfg.seed, Domain::Selection, round as u64, 0);
    let mut ids = index::sample(&mut rng, cfg.n_clients, k).into_vec();
    ids.sort_unstable();
    ids
}

fn derived_seed(seed: u64, domain: Domain, a: usize, b: usize) -> u64 {
    rng::stream(seed, domain, a as u64, b as u64).next_u64()
}

/// Everything a round needs besides the mutable state.
#[derive(Debug, Clone)]
pub struct Experiment {
    cfg: ScenarioConfig,
    arch: Architecture,
    clients: Vec<LabeledDataset>,
    test: LabeledDataset,
    state: ExperimentState,
}

impl Experiment {
    /// Builds datasets from `cfg.data` and sets up the initial model.
    pub fn new(cfg: ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let (train, test) = load_data(&cfg)?;
        Self::with_data(cfg, &train, test)
    }

    /// Partitions `train` across clients, corrupts the malicious clients'
    /// data when the attack is data-level, and initialises the model.
    pub fn with_data(cfg: ScenarioConfig, train: &LabeledDataset, test: LabeledDataset) -> Result<Self> {
        cfg.validate()?;
        if train.n_features() != test.n_features() {
            return Err(Error::Config(format!(
                "train has {} features, test has {}",
                train.n_features(),
                test.n_features()
            )));
        }
        if test.is_empty() {
            return Err(Error::Config("test set is empty".into()));
        }
        let n_classes = train.n_classes().max(test.n_classes());
        let arch = match cfg.model {
            ModelConfig::Linear => Architecture::Linear {
                n_features: train.n_features(),
                n_classes,
            },
            ModelConfig::Mlp { hidden } => Architecture::Mlp {
                n_features: train.n_features(),
                hidden,
                n_classes,
            },
        };
        let plan = match cfg.partition {
            PartitionConfig::Iid => data::partition_iid(train, cfg.n_clients, cfg.seed)?,
            PartitionConfig::NoniidShards { shards_per_client, shard_size } => {
                data::partition_noniid_shards(train, cfg.n_clients, shards_per_client, shard_size, cfg.seed)?
            }
        };
        let mut clients = plan.materialize(train);
        if let Some(id) = clients.iter().position(LabeledDataset::is_empty) {
            return Err(Error::Config(format!("client {id} received no training rows")));
        }
        if cfg.attack.is_data_attack() {
            for (id, ds) in clients.iter_mut().enumerate().take(cfg.n_malicious) {
                let seed = derived_seed(cfg.seed, Domain::Noise, id, 0);
                *ds = attack::apply_data_attack(&cfg.attack, ds, seed)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        let global_model = arch.init_params(cfg.seed);
        let momentum = MomentumState::new(global_model.dim());
        Ok(Self {
            cfg,
            arch,
            clients,
            test,
            state: ExperimentState {
                global_model,
                momentum,
                round: 0,
            },
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn architecture(&self) -> Architecture {
        self.arch
    }

    pub fn state(&self) -> &ExperimentState {
        &self.state
    }

    pub fn client_data(&self, id: usize) -> &LabeledDataset {
        &self.clients[id]
    }

    pub fn test_set(&self) -> &LabeledDataset {
        &self.test
    }

    pub fn is_malicious(&self, id: usize) -> bool {
        id < self.cfg.n_malicious
    }

    /// Runs the next round and advances the state.
    pub fn step(&mut self) -> Result<RoundLog> {
        let (state, log) = self.run_round(&self.state)?;
        self.state = state;
        Ok(log)
    }

    /// Runs `rounds` rounds, handing each log to `sink` as soon as it exists.
    pub fn run_with(&mut self, mut sink: impl FnMut(&RoundLog) -> Result<()>) -> Result<Vec<RoundLog>> {
        let mut logs = Vec::with_capacity(self.cfg.rounds);
        while self.state.round < self.cfg.rounds {
            let log = self.step()?;
            sink(&log)?;
            logs.push(log);
        }
        Ok(logs)
    }

    /// One protocol round from `state`; pure with respect to `self`.
    pub fn run_round(&self, state: &ExperimentState) -> Result<(ExperimentState, RoundLog)> {
        let cfg = &self.cfg;
        let t = state.round;
        let w_t = &state.global_model;
        let selected = select_clients(t, cfg);
        let malicious_selected = selected.iter().filter(|&&id| self.is_malicious(id)).count();

        let model_attack = matches!(cfg.attack, AttackSpec::ByzantineGaussian { .. }) || cfg.attack.is_omniscient();
        let trains = |id: usize| !(self.is_malicious(id) && model_attack);

        let trained: Vec<(usize, ParamVector)> = selected
            .par_iter()
            .filter(|&&id| trains(id))
            .map(|&id| {
                let seed = derived_seed(cfg.seed, Domain::LocalTrain, t, id);
                self.arch
                    .local_train(w_t, &self.clients[id], &cfg.train, seed)
                    .map(|w| (id, w))
            })
            .collect::<Result<_>>()?;

        let omniscient = if cfg.attack.is_omniscient() {
            let honest: Vec<ParamVector> = trained
                .iter()
                .filter(|(id, _)| !self.is_malicious(*id))
                .map(|(_, w)| subtract(w_t, w))
                .collect::<Result<_>>()?;
            if honest.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "round {t}: no honest clients selected, omniscient attack undefined"
                )));
            }
            let g = match cfg.attack {
                AttackSpec::Ipm { epsilon } => attack::ipm_updates(&honest, epsilon, 1)?,
                AttackSpec::Alie { epsilon } => attack::alie_updates(&honest, epsilon, 1)?,
                _ => unreachable!(),
            };
            Some(attack::to_submission(w_t, &g[0])?)
        } else {
            None
        };

        let mut trained = trained.into_iter().peekable();
        let mut updates = Vec::with_capacity(selected.len());
        for (slot, &id) in selected.iter().enumerate() {
            let model = if trained.peek().is_some_and(|(tid, _)| *tid == id) {
                trained.next().expect("peeked").1
            } else {
                match cfg.attack {
                    AttackSpec::ByzantineGaussian { sigma } => {
                        let seed = derived_seed(cfg.seed, Domain::Byzantine, t, id);
                        attack::gaussian_byzantine_update(w_t, sigma, seed)?
                    }
                    _ => omniscient.clone().expect("omniscient submission"),
                }
            };
            updates.push(ClientUpdate::new(t, slot, model, self.clients[id].len()));
        }

        let mut momentum = state.momentum.clone();
        let (global_model, benign_kept, alpha, eta, discarded) = match &cfg.rule {
            AggregationRule::Stpa => {
                let (outcome, next) = stpa::stpa_round(w_t, &updates, &state.momentum, &cfg.stpa)?;
                momentum = next;
                (
                    outcome.new_model,
                    outcome.benign_count,
                    Some(outcome.alpha),
                    Some(outcome.eta),
                    outcome.discarded,
                )
            }
            rule => (rule.aggregate(&updates)?, updates.len(), None, None, false),
        };

        let test_error_pct = self.arch.evaluate_error(&global_model, &self.test)?;
        let log = RoundLog {
            round: t,
            selected,
            malicious_selected,
            benign_kept,
            alpha,
            eta,
            discarded,
            test_error_pct,
        };
        Ok((
            ExperimentState {
                global_model,
                momentum,
                round: t + 1,
            },
            log,
        ))
    }
}

/// Builds the train and test sets described by `cfg.data`.
pub fn load_data(cfg: &ScenarioConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match &cfg.data {
        DataConfig::Blobs {
            n_classes,
            dim,
            samples_per_class,
            test_per_class,
            spread,
            seed,
        } => {
            let all = data::generate_blobs(
                *n_classes,
                *dim,
                samples_per_class + test_per_class,
                *spread,
                seed.unwrap_or(cfg.seed),
            )?;
            all.split_per_class(*test_per_class)
        }
        DataConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => Ok((
            data::load_idx(train_images, train_labels)?,
            data::load_idx(test_images, test_labels)?,
        )),
        DataConfig::File {
            train,
            test,
            test_fraction,
        } => {
            let train_ds = data::read_dataset(train)?;
            match test {
                Some(path) => Ok((train_ds, data::read_dataset(path)?)),
                None => {
                    let order = data::shuffled_indices(train_ds.len(), cfg.seed);
                    let n_test = ((train_ds.len() as f64) * test_fraction).round() as usize;
                    let (test_rows, train_rows) = order.split_at(n_test);
                    Ok((train_ds.subset(train_rows), train_ds.subset(test_rows)))
                }
            }
        }
    }
}

/// Builds the experiment and runs every round.
pub fn run_experiment(cfg: &ScenarioConfig) -> Result<Vec<RoundLog>> {
    Experiment::new(cfg.clone())?.run_with(|_| Ok(()))
}

/// Mean and population standard deviation of the test error over the last
/// `window` rounds (all rounds if fewer).
pub fn final_stats(logs: &[RoundLog], window: usize) -> Option<(f64, f64)> {
    if logs.is_empty() || window == 0 {
        return None;
    }
    let tail = &logs[logs.len().saturating_sub(window)..];
    let n = tail.len() as f64;
    let mean = tail.iter().map(|l| l.test_error_pct).sum::<f64>() / n;
    let var = tail.iter().map(|l| (l.test_error_pct - mean).powi(2)).sum::<f64>() / n;
    Some((mean, var.sqrt()))
}

/// Number of malicious clients for a given fraction of `n_clients`.
pub fn malicious_count(fraction: f64, n_clients: usize) -> usize {
    (fraction * n_clients as f64).round() as usize
}

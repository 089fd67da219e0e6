//! Broadcast, local training, probe filtering and FedAvg aggregation.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::config::{AttackKind, DatasetSource, ExperimentConfig};
use crate::dataset::{self, Example, PoisonKind, PoisonSpec, Shard};
use crate::error::{Error, Result};
use crate::filter::{self, FilterDecision, FilterMetrics, ProbeMode, ProbeVector};
use crate::nn::{adam_step, evaluate, model_backward, AdamState, ModelParams};
use crate::seed::{self, derive, derived_rng};
use crate::tensor::Tensor;
use crate::{IMAGE_SIDE, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClientRole {
    IndicatorNormal,
    IndicatorAbnormal,
    SubjectNormal,
    SubjectAbnormal,
}

impl ClientRole {
    pub const ALL: [ClientRole; 4] = [
        ClientRole::IndicatorNormal,
        ClientRole::IndicatorAbnormal,
        ClientRole::SubjectNormal,
        ClientRole::SubjectAbnormal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClientRole::IndicatorNormal => "indicator_normal",
            ClientRole::IndicatorAbnormal => "indicator_abnormal",
            ClientRole::SubjectNormal => "subject_normal",
            ClientRole::SubjectAbnormal => "subject_abnormal",
        }
    }

    pub fn is_abnormal(self) -> bool {
        matches!(self, ClientRole::IndicatorAbnormal | ClientRole::SubjectAbnormal)
    }

    pub fn is_indicator(self) -> bool {
        matches!(self, ClientRole::IndicatorNormal | ClientRole::IndicatorAbnormal)
    }
}

impl fmt::Display for ClientRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClientRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClientRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown client role `{s}`")))
    }
}

/// A participant: its role, its (already poisoned) shard and its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub id: usize,
    pub role: ClientRole,
    pub shard: Shard,
    pub poison: PoisonSpec,
    /// Combined with the round index to seed local training.
    pub train_seed: u64,
}

impl ClientConfig {
    /// Poisons `clean` according to `poison` once, up front.
    pub fn new(id: usize, role: ClientRole, clean: &Shard, poison: PoisonSpec, train_seed: u64) -> Result<Self> {
        Ok(ClientConfig {
            id,
            role,
            shard: dataset::poison_shard(clean, &poison)?,
            poison,
            train_seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs_per_round: usize,
    pub rounds: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub filter_enabled: bool,
    /// Neighbours consulted by the filter.
    pub k: usize,
    pub probe_mode: ProbeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_per_round: 5,
            rounds: 30,
            learning_rate: 0.001,
            batch_size: 32,
            filter_enabled: true,
            k: 1,
            probe_mode: ProbeMode::Softmax,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if self.k == 0 {
            return Err(Error::invalid("k must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// 1-based round number.
    pub round: usize,
    /// Validation accuracy of the global model after this round's update.
    pub accuracy: f64,
    pub probes: Vec<ProbeVector>,
    pub roles: BTreeMap<usize, ClientRole>,
    pub decision: FilterDecision,
    pub metrics: FilterMetrics,
    /// Number of models averaged into the new global.
    pub aggregated: usize,
    /// Every model was excluded and the previous global was carried forward.
    pub empty_round: bool,
}

impl RoundReport {
    pub fn kept(&self) -> usize {
        self.decision.kept_count()
    }

    pub fn excluded(&self) -> usize {
        self.decision.excluded_count()
    }
}

fn batch_tensor(examples: &[&Example]) -> Result<(Tensor, Vec<usize>)> {
    let mut data = Vec::with_capacity(examples.len() * IMAGE_SIDE * IMAGE_SIDE);
    let mut labels = Vec::with_capacity(examples.len());
    for ex in examples {
        data.extend_from_slice(ex.image.data());
        labels.push(ex.label);
    }
    let t = Tensor::from_vec(&[examples.len(), 1, IMAGE_SIDE, IMAGE_SIDE], data)?;
    Ok((t, labels))
}

/// Trains a copy of `global` on `shard` with a fresh Adam state.
pub fn local_train(
    global: &ModelParams,
    shard: &Shard,
    cfg: &TrainConfig,
    rng: &mut seed::Rng,
) -> Result<ModelParams> {
    if shard.examples.is_empty() {
        return Err(Error::invalid(format!("client {} has an empty shard", shard.client_id)));
    }
    cfg.validate()?;
    let mut params = global.clone();
    let mut state = AdamState::new(cfg.learning_rate);
    let mut order: Vec<usize> = (0..shard.examples.len()).collect();
    for _ in 0..cfg.epochs_per_round {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &shard.examples[i]).collect();
            let (x, y) = batch_tensor(&batch)?;
            let (_, grads) = model_backward(&params, &x, &y)?;
            adam_step(&mut params, &grads, &mut state)?;
        }
    }
    Ok(params)
}

/// Unweighted element-wise mean, summed in ascending client-id order.
pub fn fedavg(models: &[(usize, &ModelParams)]) -> Result<ModelParams> {
    if models.is_empty() {
        return Err(Error::invalid("fedavg needs at least one model"));
    }
    let mut ordered: Vec<&(usize, &ModelParams)> = models.iter().collect();
    ordered.sort_by_key(|(id, _)| *id);
    if ordered.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid("fedavg received duplicate client ids"));
    }
    let mut sum = ordered[0].1.clone();
    sum.validate()?;
    for (_, p) in &ordered[1..] {
        p.validate()?;
        sum.axpy(1.0, p)?;
    }
    if ordered.len() > 1 {
        sum.scale(1.0 / ordered.len() as f64);
    }
    Ok(sum)
}

/// One federated round: train every client, probe, filter and aggregate.
pub fn run_round(
    global: &ModelParams,
    clients: &[ClientConfig],
    cfg: &TrainConfig,
    probe: &Tensor,
    round: usize,
    validation: &[Example],
) -> Result<(ModelParams, RoundReport)> {
    let roles: BTreeMap<usize, ClientRole> = clients.iter().map(|c| (c.id, c.role)).collect();
    if roles.len() != clients.len() {
        return Err(Error::invalid("client ids must be unique"));
    }
    if cfg.filter_enabled {
        if !clients.iter().any(|c| c.role == ClientRole::IndicatorNormal) {
            return Err(Error::MissingIndicator("normal"));
        }
        if !clients.iter().any(|c| c.role == ClientRole::IndicatorAbnormal) {
            return Err(Error::MissingIndicator("abnormal"));
        }
    }

    let trained: Vec<(ModelParams, ProbeVector)> = clients
        .par_iter()
        .map(|c| {
            let mut rng = derived_rng(&[c.train_seed, round as u64]);
            let local = local_train(global, &c.shard, cfg, &mut rng)?;
            let values = filter::probe_model(&local, probe, cfg.probe_mode)?;
            Ok((local, ProbeVector { client_id: c.id, values }))
        })
        .collect::<Result<_>>()?;
    let probes: Vec<ProbeVector> = trained.iter().map(|(_, p)| p.clone()).collect();

    let decision = if cfg.filter_enabled {
        let ind = filter::indicator_set(&probes, &roles, cfg.k)?;
        filter::filter_clients(&probes, &ind, &roles)?
    } else {
        FilterDecision::keep_all(roles.keys().copied())
    };
    let metrics = filter::filter_metrics(&decision, &roles);

    let kept: Vec<(usize, &ModelParams)> = clients
        .iter()
        .zip(&trained)
        .filter(|(c, _)| decision.is_kept(c.id))
        .map(|(c, (p, _))| (c.id, p))
        .collect();
    let empty_round = kept.is_empty();
    let next = if empty_round { global.clone() } else { fedavg(&kept)? };
    let accuracy = evaluate(&next, validation)?;

    let report = RoundReport {
        round,
        accuracy,
        probes,
        roles,
        decision,
        metrics,
        aggregated: kept.len(),
        empty_round,
    };
    Ok((next, report))
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub reports: Vec<RoundReport>,
    /// Global model after the last round.
    pub global: ModelParams,
}

/// Training and validation data for an experiment.
fn load_data(cfg: &ExperimentConfig) -> Result<(Vec<Example>, Vec<Example>)> {
    match &cfg.dataset {
        DatasetSource::Synthetic => {
            let n_train = cfg.n_clients * cfg.per_client;
            let mut all = dataset::synthetic_dataset(
                derive(&[cfg.seed, seed::TAG_DATA]),
                n_train + cfg.validation_size,
                NUM_CLASSES,
            )?;
            let validation = all.split_off(n_train);
            Ok((all, validation))
        }
        DatasetSource::Mnist(dir) => dataset::load_mnist_dir(dir),
    }
}

/// Clients in id order: normal indicators, abnormal indicators, normal
/// subjects, abnormal subjects.
pub fn build_clients(cfg: &ExperimentConfig, train: &[Example]) -> Result<Vec<ClientConfig>> {
    let shards = dataset::partition_iid(
        train,
        cfg.n_clients,
        cfg.per_client,
        derive(&[cfg.seed, seed::TAG_PARTITION]),
    )?;
    let roles = std::iter::repeat_n(ClientRole::IndicatorNormal, cfg.indicator_normal)
        .chain(std::iter::repeat_n(ClientRole::IndicatorAbnormal, cfg.indicator_abnormal))
        .chain(std::iter::repeat_n(ClientRole::SubjectNormal, cfg.subject_normal))
        .chain(std::iter::repeat_n(ClientRole::SubjectAbnormal, cfg.subject_abnormal));
    shards
        .iter()
        .zip(roles)
        .map(|(shard, role)| {
            let id = shard.client_id;
            let kind = match role {
                ClientRole::IndicatorNormal | ClientRole::SubjectNormal => PoisonKind::None,
                ClientRole::IndicatorAbnormal => PoisonKind::NoiseMix(1.0),
                ClientRole::SubjectAbnormal => match cfg.attack {
                    AttackKind::NoiseMix => PoisonKind::NoiseMix(cfg.noise_ratio),
                    AttackKind::LabelFlip => PoisonKind::LabelFlip,
                },
            };
            let poison = PoisonSpec {
                kind,
                seed: derive(&[cfg.seed, seed::TAG_POISON, id as u64]),
            };
            let train_seed = derive(&[cfg.seed, seed::TAG_TRAIN, id as u64]);
            ClientConfig::new(id, role, shard, poison, train_seed)
        })
        .collect()
}

/// Builds data, clients and probe from `cfg` and runs every round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentRun> {
    cfg.validate()?;
    let (train, validation) = load_data(cfg)?;
    if validation.is_empty() {
        return Err(Error::invalid("validation set is empty"));
    }
    let clients = build_clients(cfg, &train)?;
    drop(train);
    let probe = filter::make_probe(derive(&[cfg.seed, seed::TAG_PROBE]));
    let mut global = ModelParams::init(&mut derived_rng(&[cfg.seed, seed::TAG_INIT]));

    let mut reports = Vec::with_capacity(cfg.train.rounds);
    for round in 1..=cfg.train.rounds {
        let (next, report) = run_round(&global, &clients, &cfg.train, &probe, round, &validation)?;
        global = next;
        reports.push(report);
    }
    Ok(ExperimentRun { reports, global })
}

//! Probe-based Sybil filtering.
//!
//! A fixed random image is pushed through every locally trained model. The
//! 10-way responses of the indicator clients (known honest / known poisoned)
//! form a labelled reference set, and every subject client's response is
//! classified by its nearest reference under Euclidean distance.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::federation::ClientRole;
use crate::nn::{model_forward, model_logits, ModelParams};
use crate::seed;
use crate::tensor::Tensor;
use crate::IMAGE_SIDE;

/// A model's response to the probe image.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeVector {
    pub client_id: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Normal,
    Abnormal,
}

/// Which network output is used as the fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ProbeMode {
    #[default]
    Softmax,
    Logits,
}

/// Labelled reference vectors for nearest-neighbour voting.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSet {
    entries: Vec<(ProbeVector, Label)>,
    k: usize,
}

impl IndicatorSet {
    pub fn new(entries: Vec<(ProbeVector, Label)>, k: usize) -> Result<Self> {
        if !entries.iter().any(|(_, l)| *l == Label::Normal) {
            return Err(Error::MissingIndicator("normal"));
        }
        if !entries.iter().any(|(_, l)| *l == Label::Abnormal) {
            return Err(Error::MissingIndicator("abnormal"));
        }
        if k == 0 || k > entries.len() {
            return Err(Error::invalid(format!(
                "k = {k} must be between 1 and the indicator count {}",
                entries.len()
            )));
        }
        let dim = entries[0].0.values.len();
        if entries.iter().any(|(v, _)| v.values.len() != dim) {
            return Err(Error::invalid("indicator vectors differ in length"));
        }
        Ok(IndicatorSet { entries, k })
    }

    pub fn entries(&self) -> &[(ProbeVector, Label)] {
        &self.entries
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Kept,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterDecision {
    pub decisions: BTreeMap<usize, Decision>,
    /// Predicted label of every subject client.
    pub predicted: BTreeMap<usize, Label>,
}

impl FilterDecision {
    /// Every client kept, nothing classified.
    pub fn keep_all(client_ids: impl IntoIterator<Item = usize>) -> Self {
        FilterDecision {
            decisions: client_ids.into_iter().map(|id| (id, Decision::Kept)).collect(),
            predicted: BTreeMap::new(),
        }
    }

    pub fn is_kept(&self, client_id: usize) -> bool {
        self.decisions.get(&client_id) == Some(&Decision::Kept)
    }

    pub fn kept_count(&self) -> usize {
        self.decisions.values().filter(|&&d| d == Decision::Kept).count()
    }

    pub fn excluded_count(&self) -> usize {
        self.decisions.len() - self.kept_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterMetrics {
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
}

/// A `[1, 28, 28]` image of i.i.d. U[0,1] pixels.
pub fn make_probe(seed: u64) -> Tensor {
    let mut rng = seed::rng(seed);
    let data = (0..IMAGE_SIDE * IMAGE_SIDE).map(|_| rng.gen::<f64>()).collect();
    Tensor::from_vec(&[1, IMAGE_SIDE, IMAGE_SIDE], data).expect("probe shape")
}

pub fn probe_model(params: &ModelParams, probe: &Tensor, mode: ProbeMode) -> Result<Vec<f64>> {
    if probe.shape() != [1, IMAGE_SIDE, IMAGE_SIDE] {
        return Err(Error::Shape {
            context: "probe_model",
            dimension: "probe size",
            expected: IMAGE_SIDE * IMAGE_SIDE,
            found: probe.len(),
        });
    }
    let batch = probe.clone().reshape(&[1, 1, IMAGE_SIDE, IMAGE_SIDE])?;
    let out = match mode {
        ProbeMode::Softmax => model_forward(params, &batch)?,
        ProbeMode::Logits => model_logits(params, &batch)?,
    };
    Ok(out.into_data())
}

pub fn euclidean_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::Shape {
            context: "euclidean_distance",
            dimension: "vector length",
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt())
}

/// Majority label among the `k` nearest indicators. Distance ties and vote
/// ties both go to the lowest indicator client id.
pub fn knn_classify(v: &ProbeVector, ind: &IndicatorSet) -> Result<Label> {
    let mut ranked: Vec<(f64, usize, Label)> = ind
        .entries
        .iter()
        .map(|(e, l)| Ok((euclidean_distance(&e.values, &v.values)?, e.client_id, *l)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let nearest = &ranked[..ind.k];

    // label -> (votes, lowest client id among voters)
    let mut tally: BTreeMap<Label, (usize, usize)> = BTreeMap::new();
    for &(_, id, label) in nearest {
        let e = tally.entry(label).or_insert((0, usize::MAX));
        e.0 += 1;
        e.1 = e.1.min(id);
    }
    let (label, _) = tally
        .into_iter()
        .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.1 .1.cmp(&a.1 .1)))
        .expect("k >= 1");
    Ok(label)
}

/// Builds the indicator set from this round's probe vectors.
pub fn indicator_set(
    probes: &[ProbeVector],
    roles: &BTreeMap<usize, ClientRole>,
    k: usize,
) -> Result<IndicatorSet> {
    let entries = probes
        .iter()
        .filter_map(|p| match roles.get(&p.client_id) {
            Some(ClientRole::IndicatorNormal) => Some((p.clone(), Label::Normal)),
            Some(ClientRole::IndicatorAbnormal) => Some((p.clone(), Label::Abnormal)),
            _ => None,
        })
        .collect();
    IndicatorSet::new(entries, k)
}

/// Keep/exclude decision for every probed client.
pub fn filter_clients(
    probes: &[ProbeVector],
    ind: &IndicatorSet,
    roles: &BTreeMap<usize, ClientRole>,
) -> Result<FilterDecision> {
    let mut out = FilterDecision::default();
    for p in probes {
        let role = roles
            .get(&p.client_id)
            .ok_or_else(|| Error::invalid(format!("client {} has no role", p.client_id)))?;
        let decision = match role {
            ClientRole::IndicatorNormal => Decision::Kept,
            ClientRole::IndicatorAbnormal => Decision::Excluded,
            ClientRole::SubjectNormal | ClientRole::SubjectAbnormal => {
                let label = knn_classify(p, ind)?;
                out.predicted.insert(p.client_id, label);
                match label {
                    Label::Normal => Decision::Kept,
                    Label::Abnormal => Decision::Excluded,
                }
            }
        };
        if out.decisions.insert(p.client_id, decision).is_some() {
            return Err(Error::invalid(format!("client {} probed twice", p.client_id)));
        }
    }
    Ok(out)
}

/// Precision, recall and accuracy of the exclusions over subject clients.
///
/// Precision is 1 when nothing was excluded and recall is 1 when there was no
/// abnormal subject to catch. Accuracy is 1 when there are no subjects.
pub fn filter_metrics(decision: &FilterDecision, roles: &BTreeMap<usize, ClientRole>) -> FilterMetrics {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (id, role) in roles {
        let excluded = decision.decisions.get(id) == Some(&Decision::Excluded);
        match (role, excluded) {
            (ClientRole::SubjectAbnormal, true) => tp += 1,
            (ClientRole::SubjectAbnormal, false) => fn_ += 1,
            (ClientRole::SubjectNormal, true) => fp += 1,
            (ClientRole::SubjectNormal, false) => tn += 1,
            _ => {}
        }
    }
    let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
    FilterMetrics {
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
    }
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::activation::ActivationKind;
use super::loss;
use super::network::{MlpNetwork, TrainSample};
use crate::error::{Error, Result};
use crate::stats::Histogram;

/// Absolute-error threshold on the normalized scale counted by [`validate`].
pub const PRECISION_THRESHOLD: f64 = 0.002;

/// Width of the error histogram bins emitted by [`validate`].
pub const ERROR_BIN_WIDTH: f64 = 0.001;
const ERROR_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub shuffle_each_epoch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 14,
            seed: 1,
            shuffle_each_epoch: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(self) -> Result<Self> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Domain {
                what: "learning rate",
                value: self.learning_rate,
                bound: ">= 0",
            });
        }
        if self.epochs == 0 {
            return Err(Error::Domain {
                what: "epochs",
                value: 0.0,
                bound: ">= 1",
            });
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean of `1/2 e^2` over the training set after each epoch.
    pub history: Vec<f64>,
}

/// Mean of `1/2 e^2` over every output of every sample.
pub fn dataset_mse(net: &MlpNetwork, samples: &[TrainSample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in samples {
        let y = net.predict(&s.input)?;
        for (d, y) in s.desired.iter().zip(&y) {
            total += loss(d - y);
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Online training. One seeded generator drives every epoch's shuffle, so
/// `(net, samples, config)` fully determine the result.
pub fn train(net: &mut MlpNetwork, samples: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if config.shuffle_each_epoch {
            order.shuffle(&mut rng);
        }
        for &k in &order {
            let s = &samples[k];
            let trace = net.forward(&s.input)?;
            net.backward_update(s, &trace, config.learning_rate)
                .map_err(|e| match e {
                    Error::Divergence(msg) => {
                        Error::Divergence(format!("{msg} at epoch {} sample {k}", epoch + 1))
                    }
                    other => other,
                })?;
        }
        if !net.is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite weights after epoch {}",
                epoch + 1
            )));
        }
        history.push(dataset_mse(net, samples)?);
    }
    Ok(TrainOutcome { history })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    /// Mean of `1/2 e^2` on the normalized scale.
    pub mse: f64,
    /// `mse * 100`.
    pub mse_percent: f64,
    /// (predicted, desired) per output.
    pub pairs: Vec<(f64, f64)>,
    /// Absolute errors in bins of [`ERROR_BIN_WIDTH`]; the last bin also
    /// holds everything beyond its upper edge.
    pub error_histogram: Histogram,
    /// Outputs with `|error| < PRECISION_THRESHOLD`.
    pub within_threshold: usize,
}

impl ValidationReport {
    pub fn fraction_within(&self) -> f64 {
        if self.pairs.is_empty() {
            0.0
        } else {
            self.within_threshold as f64 / self.pairs.len() as f64
        }
    }
}

pub fn validate(net: &MlpNetwork, samples: &[TrainSample]) -> Result<ValidationReport> {
    if samples.is_empty() {
        return Err(Error::Empty("validation set"));
    }
    let mut pairs = Vec::with_capacity(samples.len());
    for s in samples {
        let y = net.predict(&s.input)?;
        if y.len() != s.desired.len() {
            return Err(Error::Shape(format!(
                "sample has {} targets, network produces {}",
                s.desired.len(),
                y.len()
            )));
        }
        pairs.extend(y.into_iter().zip(s.desired.iter().copied()));
    }
    let abs_err: Vec<f64> = pairs.iter().map(|(y, d)| (d - y).abs()).collect();
    let mse = pairs.iter().map(|(y, d)| loss(d - y)).sum::<f64>() / pairs.len() as f64;
    Ok(ValidationReport {
        mse,
        mse_percent: mse * 100.0,
        within_threshold: abs_err.iter().filter(|e| **e < PRECISION_THRESHOLD).count(),
        error_histogram: Histogram::with_range(
            &abs_err,
            0.0,
            ERROR_BIN_WIDTH * ERROR_BINS as f64,
            ERROR_BINS,
        ),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: ActivationKind,
    pub output_activation: ActivationKind,
}

impl Candidate {
    pub fn new(layer_sizes: &[usize], hidden: ActivationKind, output: ActivationKind) -> Self {
        Candidate {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation: hidden,
            output_activation: output,
        }
    }

    /// `3-6-3-1:tanh:tanh`; the output activation defaults to the hidden one.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = s.trim().split(':');
        let sizes = parts
            .next()
            .unwrap_or_default()
            .split('-')
            .map(|t| t.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::invalid("candidate", format!("bad layer sizes in `{s}`")))?;
        let hidden: ActivationKind = parts
            .next()
            .ok_or_else(|| Error::invalid("candidate", format!("missing activation in `{s}`")))?
            .trim()
            .parse()?;
        let output = match parts.next() {
            Some(t) => t.trim().parse()?,
            None => hidden,
        };
        if parts.next().is_some() {
            return Err(Error::invalid("candidate", format!("too many fields in `{s}`")));
        }
        Ok(Candidate::new(&sizes, hidden, output))
    }

    pub fn label(&self) -> String {
        let sizes: Vec<String> = self.layer_sizes.iter().map(|s| s.to_string()).collect();
        format!(
            "{}:{}:{}",
            sizes.join("-"),
            self.hidden_activation,
            self.output_activation
        )
    }
}

/// Ordering applied by [`architecture_search`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankRule {
    /// Lowest validation MSE first.
    #[default]
    ValidationMse,
    /// Largest share of validation errors under [`PRECISION_THRESHOLD`] first.
    Precision,
}

impl std::str::FromStr for RankRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation_mse" => Ok(RankRule::ValidationMse),
            "precision" => Ok(RankRule::Precision),
            _ => Err(Error::invalid("rank rule", s)),
        }
    }
}

impl RankRule {
    pub fn name(self) -> &'static str {
        match self {
            RankRule::ValidationMse => "validation_mse",
            RankRule::Precision => "precision",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateResult {
    pub index: usize,
    pub candidate: Candidate,
    pub param_count: usize,
    pub history: Vec<f64>,
    pub train_mse: f64,
    pub validation_mse: f64,
    pub fraction_within: f64,
    /// `Some` when training failed; metric fields are then NaN.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Successful candidates in rank order, failed ones after them.
    pub ranked: Vec<CandidateResult>,
    pub best: MlpNetwork,
}

/// Trains and validates every candidate from the same seed, then ranks them.
/// Ties fall to the smaller network, then to the earlier candidate.
pub fn architecture_search(
    train_set: &[TrainSample],
    validation_set: &[TrainSample],
    candidates: &[Candidate],
    config: &TrainConfig,
    rule: RankRule,
) -> Result<SearchOutcome> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate list"));
    }
    let runs: Vec<(CandidateResult, Option<MlpNetwork>)> = candidates
        .par_iter()
        .enumerate()
        .map(|(index, c)| {
            let attempt = || -> Result<(MlpNetwork, Vec<f64>, f64, f64)> {
                let mut net = MlpNetwork::initialized(
                    &c.layer_sizes,
                    c.hidden_activation,
                    c.output_activation,
                    config.seed,
                )?;
                let outcome = train(&mut net, train_set, config)?;
                let report = validate(&net, validation_set)?;
                Ok((net, outcome.history, report.mse, report.fraction_within()))
            };
            let param_count = c
                .layer_sizes
                .windows(2)
                .map(|w| w[0] * w[1] + w[1])
                .sum();
            match attempt() {
                Ok((net, history, validation_mse, fraction_within)) => (
                    CandidateResult {
                        index,
                        candidate: c.clone(),
                        param_count,
                        train_mse: history.last().copied().unwrap_or(f64::NAN),
                        history,
                        validation_mse,
                        fraction_within,
                        failure: None,
                    },
                    Some(net),
                ),
                Err(e) => (
                    CandidateResult {
                        index,
                        candidate: c.clone(),
                        param_count,
                        history: Vec::new(),
                        train_mse: f64::NAN,
                        validation_mse: f64::NAN,
                        fraction_within: f64::NAN,
                        failure: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let (mut ok, failed): (Vec<_>, Vec<_>) = runs.into_iter().partition(|(r, _)| r.failure.is_none());
    if ok.is_empty() {
        let causes: Vec<String> = failed
            .iter()
            .map(|(r, _)| format!("{}: {}", r.candidate.label(), r.failure.as_deref().unwrap_or("")))
            .collect();
        return Err(Error::Divergence(format!(
            "all candidates failed: {}",
            causes.join("; ")
        )));
    }
    ok.sort_by(|(a, _), (b, _)| {
        let primary = match rule {
            RankRule::ValidationMse => a.validation_mse.total_cmp(&b.validation_mse),
            RankRule::Precision => b.fraction_within.total_cmp(&a.fraction_within),
        };
        primary
            .then(a.param_count.cmp(&b.param_count))
            .then(a.index.cmp(&b.index))
    });
    let best = ok[0].1.clone().expect("successful run keeps its network");
    let ranked = ok
        .into_iter()
        .chain(failed)
        .map(|(r, _)| r)
        .collect();
    Ok(SearchOutcome { ranked, best })
}

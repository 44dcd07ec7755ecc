//! The TETRADAT attack: attribution-guided pixel selection followed by repeated
//! PROTES runs over HSV perturbations, halving the amplitude after each success
//! and warm-starting every run from the previous distribution.

mod perturb;

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use perturb::{encode_grid, hsv_to_rgb, perturb, rgb_to_hsv, PixelMove};

use crate::attribution::{self, AttributionError, AttributionMap, Baseline, PixelSelection};
use crate::harness::compute_norms;
use crate::model::{BlackBox, Differentiable, Image, ModelError};
use crate::protes::{self, ObjectiveError, ProtesConfig, ProtesError, StopReason};
use crate::tt::{MultiIndex, TtTensor};

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack configuration: {0}")]
    Config(String),
    #[error("invalid perturbation: {0}")]
    Perturbation(String),
    #[error("attribution model predicts class {auxiliary}, attacked model predicts {attacked}")]
    AuxiliaryDisagrees { attacked: usize, auxiliary: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Attribution(#[from] AttributionError),
    #[error(transparent)]
    Protes(ProtesError),
}

impl From<ProtesError> for AttackError {
    fn from(e: ProtesError) -> Self {
        match e {
            ProtesError::Objective(inner) => match inner.downcast::<ModelError>() {
                Ok(m) => AttackError::Model(*m),
                Err(inner) => match inner.downcast::<AttackError>() {
                    Ok(a) => *a,
                    Err(inner) => AttackError::Protes(ProtesError::Objective(inner)),
                },
            },
            other => AttackError::Protes(other),
        }
    }
}

impl AttackError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, AttackError::Model(m) if m.is_retryable())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    /// Number of pixels the optimizer may touch.
    pub d_hat: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon0: f64,
    /// Black-box queries available to the optimizer, across all runs.
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default = "default_steps")]
    pub attribution_steps: usize,
    #[serde(default)]
    pub baseline: Baseline,
    #[serde(default)]
    pub protes: ProtesConfig,
}

fn default_epsilon() -> f64 {
    1.0
}
fn default_budget() -> usize {
    10_000
}
fn default_steps() -> usize {
    15
}

impl AttackConfig {
    /// Defaults with `d_hat` at 10% of the pixel count.
    pub fn for_image(height: usize, width: usize) -> Self {
        Self {
            d_hat: ((height * width) as f64 * 0.1).round().max(1.0) as usize,
            epsilon0: default_epsilon(),
            budget: default_budget(),
            attribution_steps: default_steps(),
            baseline: Baseline::Black,
            protes: ProtesConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        if !(self.epsilon0 > 0.0 && self.epsilon0 <= 1.0) {
            return Err(AttackError::Config(format!("epsilon0 {} outside (0, 1]", self.epsilon0)));
        }
        if self.d_hat == 0 {
            return Err(AttackError::Config("d_hat must be at least 1".into()));
        }
        if self.attribution_steps == 0 {
            return Err(AttackError::Config("attribution_steps must be at least 1".into()));
        }
        if self.budget < self.protes.candidates {
            return Err(AttackError::Config(format!(
                "budget {} is smaller than one batch of {}",
                self.budget, self.protes.candidates
            )));
        }
        self.protes.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttackResult {
    pub success: bool,
    pub adversarial: Image,
    pub original_class: usize,
    pub adversarial_class: usize,
    pub final_epsilon: f64,
    /// Optimizer queries; the initial classification is not included.
    pub queries: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// What happened in one PROTES run at a fixed amplitude.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    pub epsilon: f64,
    pub queries: usize,
    pub succeeded: bool,
    pub stop: StopReason,
    /// Serialized distribution handed to the run (`None` on the random first run).
    pub entry: Option<Vec<u8>>,
    /// Serialized distribution the run ended with.
    pub exit: Option<Vec<u8>>,
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub result: AttackResult,
    pub attribution: AttributionMap,
    pub selection: PixelSelection,
    /// Per-pixel moves of the returned adversarial image (`None` if no query was made).
    pub moves: Option<MultiIndex>,
    pub runs: Vec<RunTrace>,
}

#[derive(Clone, Debug)]
struct Candidate {
    index: MultiIndex,
    epsilon: f64,
    score: f64,
    class: usize,
    image: Image,
}

/// Runs the attack and returns only the result record.
pub fn tetradat<B, D>(attacked: &B, auxiliary: &D, image: &Image, config: &AttackConfig) -> Result<AttackResult, AttackError>
where
    B: BlackBox + ?Sized,
    D: Differentiable + ?Sized,
{
    tetradat_detailed(attacked, auxiliary, image, config, false).map(|o| o.result)
}

/// Runs the attack, also returning the attribution map, the selected pixels and
/// a per-run trace. With `record_distributions` the trace carries the
/// serialized distribution at every run boundary.
pub fn tetradat_detailed<B, D>(
    attacked: &B,
    auxiliary: &D,
    image: &Image,
    config: &AttackConfig,
    record_distributions: bool,
) -> Result<AttackOutcome, AttackError>
where
    B: BlackBox + ?Sized,
    D: Differentiable + ?Sized,
{
    config.validate()?;
    let original = attacked.query(image)?;
    let class = original.top_class;
    let aux = auxiliary.predict(image)?;
    if aux.top_class != class {
        return Err(AttackError::AuxiliaryDisagrees {
            attacked: class,
            auxiliary: aux.top_class,
        });
    }

    let attribution = attribution::integrated_gradients(auxiliary, image, class, config.attribution_steps, config.baseline)?;
    let selection = attribution::select_top_pixels(&attribution, config.d_hat)?;
    let modes = vec![PixelMove::COUNT; selection.d_hat()];

    let mut distribution: Option<TtTensor> = None;
    let mut epsilon = config.epsilon0;
    let mut used = 0usize;
    let mut runs = Vec::new();
    let mut last_success: Option<Candidate> = None;
    let best_effort: RefCell<Option<Candidate>> = RefCell::new(None);

    while config.budget - used >= config.protes.candidates {
        let found: RefCell<Option<Candidate>> = RefCell::new(None);
        let mut objective = |batch: &[MultiIndex]| -> Result<Vec<f64>, ObjectiveError> {
            let mut values = Vec::with_capacity(batch.len());
            for n in batch {
                let x = perturb(image, n, &selection, epsilon).map_err(ObjectiveError::from)?;
                let p = attacked.query(&x).map_err(ObjectiveError::from)?;
                let score = *p.probs.get(class).ok_or_else(|| {
                    ObjectiveError::from(ModelError::InvalidPrediction(format!(
                        "{} classes, attacked class is {class}",
                        p.probs.len()
                    )))
                })?;
                let better = |slot: &Option<Candidate>| slot.as_ref().is_none_or(|c| score < c.score);
                let candidate = || Candidate {
                    index: n.clone(),
                    epsilon,
                    score,
                    class: p.top_class,
                    image: x.clone(),
                };
                if p.top_class != class && better(&found.borrow()) {
                    *found.borrow_mut() = Some(candidate());
                }
                if better(&best_effort.borrow()) {
                    *best_effort.borrow_mut() = Some(candidate());
                }
                values.push(score);
            }
            Ok(values)
        };
        let mut stop = |_: f64| found.borrow().is_some();

        let run_config = ProtesConfig {
            seed: config.protes.seed.wrapping_add(runs.len() as u64),
            ..config.protes.clone()
        };
        let entry = distribution.as_ref().filter(|_| record_distributions).map(TtTensor::to_bytes);
        let (state, reason) = protes::minimize(
            &modes,
            &mut objective,
            config.budget - used,
            &run_config,
            distribution.take(),
            Some(&mut stop),
        )?;
        used += state.queries_used();
        let success = found.into_inner();
        runs.push(RunTrace {
            epsilon,
            queries: state.queries_used(),
            succeeded: success.is_some(),
            stop: reason,
            entry,
            exit: record_distributions.then(|| state.distribution.to_bytes()),
        });
        distribution = Some(state.distribution);
        match success {
            Some(c) => {
                last_success = Some(c);
                epsilon /= 2.0;
            }
            None => break,
        }
    }

    let (success, chosen) = match last_success {
        Some(c) => (true, Some(c)),
        None => (false, best_effort.into_inner()),
    };
    let (adversarial, adversarial_class, final_epsilon, moves) = match chosen {
        Some(c) => (c.image, c.class, c.epsilon, Some(c.index)),
        None => (image.clone(), class, config.epsilon0, None),
    };
    let norms = compute_norms(image, &adversarial).map_err(|e| AttackError::Perturbation(e.to_string()))?;
    Ok(AttackOutcome {
        result: AttackResult {
            success,
            adversarial,
            original_class: class,
            adversarial_class,
            final_epsilon,
            queries: used,
            l1: norms.l1,
            l2: norms.l2,
            linf: norms.linf,
        },
        attribution,
        selection,
        moves,
        runs,
    })
}

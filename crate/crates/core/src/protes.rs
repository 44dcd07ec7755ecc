//! PROTES: probabilistic optimization over a TT-represented distribution.
//!
//! Each iteration samples `K` candidates from `P_theta`, evaluates them in one
//! batch, keeps the `k` with the smallest objective values and takes `k_gd`
//! gradient-ascent steps on the summed log-likelihood of those elites.

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tt::{MultiIndex, TtError, TtTensor};

/// Error returned by a user objective.
pub type ObjectiveError = Box<dyn Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum ProtesError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TtError),
    #[error("warm-start distribution has modes {got:?}, expected {expected:?}")]
    WarmStartShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("objective returned {got} values for {expected} candidates")]
    ObjectiveArity { expected: usize, got: usize },
    #[error("objective failed: {0}")]
    Objective(ObjectiveError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtesConfig {
    /// Candidates sampled per iteration (`K`).
    pub candidates: usize,
    /// Elites kept per iteration (`k`).
    pub elites: usize,
    /// Gradient-ascent steps per iteration (`k_gd`).
    pub ascent_steps: usize,
    pub learning_rate: f64,
    /// TT-rank of the distribution.
    pub rank: usize,
    pub seed: u64,
}

impl Default for ProtesConfig {
    fn default() -> Self {
        Self {
            candidates: 100,
            elites: 10,
            ascent_steps: 100,
            learning_rate: 0.01,
            rank: 5,
            seed: 0,
        }
    }
}

impl ProtesConfig {
    pub fn validate(&self) -> Result<(), ProtesError> {
        if self.elites == 0 || self.elites > self.candidates {
            return Err(ProtesError::Config(format!(
                "need 1 <= elites ({}) <= candidates ({})",
                self.elites, self.candidates
            )));
        }
        if self.ascent_steps == 0 {
            return Err(ProtesError::Config("ascent_steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(ProtesError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.rank == 0 {
            return Err(ProtesError::Config("rank must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The caller's stop predicate fired.
    Condition,
    /// Not enough budget remained for another full batch.
    BudgetExhausted,
}

/// One completed iteration: the batch in sampling order, its values, and the
/// positions (into the batch) of the selected elites.
#[derive(Clone, Debug)]
pub struct Iteration {
    pub candidates: Vec<MultiIndex>,
    pub values: Vec<f64>,
    pub elites: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ProtesState {
    pub distribution: TtTensor,
    queries_used: usize,
    iterations: usize,
    best: Option<(MultiIndex, f64)>,
    rng: ChaCha8Rng,
}

impl ProtesState {
    /// Fresh state with a random non-negative distribution of rank `config.rank`.
    pub fn init(mode_sizes: &[usize], config: &ProtesConfig) -> Result<Self, ProtesError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let distribution = TtTensor::random_nonneg_with(mode_sizes, config.rank, &mut rng)?;
        Ok(Self::from_parts(distribution, rng))
    }

    /// State that continues from an existing distribution (restart semantics).
    pub fn warm(distribution: TtTensor, config: &ProtesConfig) -> Result<Self, ProtesError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self::from_parts(distribution, rng))
    }

    fn from_parts(distribution: TtTensor, rng: ChaCha8Rng) -> Self {
        Self {
            distribution,
            queries_used: 0,
            iterations: 0,
            best: None,
            rng,
        }
    }

    pub fn queries_used(&self) -> usize {
        self.queries_used
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn best_index(&self) -> Option<&MultiIndex> {
        self.best.as_ref().map(|(n, _)| n)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.as_ref().map(|&(_, v)| v)
    }

    /// Runs one sample / evaluate / select / ascend cycle.
    ///
    /// If the objective fails the state (including the random stream) is left
    /// exactly as it was before the call.
    pub fn iterate<F>(&mut self, objective: &mut F, config: &ProtesConfig) -> Result<Iteration, ProtesError>
    where
        F: FnMut(&[MultiIndex]) -> Result<Vec<f64>, ObjectiveError> + ?Sized,
    {
        config.validate()?;
        let mut rng = self.rng.clone();
        let candidates = self.distribution.sample(config.candidates, &mut rng);
        let values = objective(&candidates).map_err(ProtesError::Objective)?;
        if values.len() != candidates.len() {
            return Err(ProtesError::ObjectiveArity {
                expected: candidates.len(),
                got: values.len(),
            });
        }
        let elites = select_elites(&values, config.elites);
        let elite_batch: Vec<MultiIndex> = elites.iter().map(|&i| candidates[i].clone()).collect();

        let mut distribution = self.distribution.clone();
        distribution.ascend_likelihood(&elite_batch, config.learning_rate, config.ascent_steps)?;

        // commit
        self.rng = rng;
        self.distribution = distribution;
        self.queries_used += candidates.len();
        self.iterations += 1;
        for (n, &v) in candidates.iter().zip(&values) {
            let better = match &self.best {
                None => true,
                Some((_, b)) => v < *b,
            };
            if better && !v.is_nan() {
                self.best = Some((n.clone(), v));
            }
        }
        Ok(Iteration {
            candidates,
            values,
            elites,
        })
    }
}

/// Positions of the `k` smallest values; ties keep sampling order, NaN ranks last.
pub fn select_elites(values: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    order.truncate(k);
    order
}

/// Iterates until `stop_when(best_value)` holds or fewer than `K` queries remain.
///
/// A `warm_start` distribution replaces random initialization. A budget below
/// `K` returns immediately with [`StopReason::BudgetExhausted`] and no queries.
pub fn minimize<F>(
    mode_sizes: &[usize],
    objective: &mut F,
    budget: usize,
    config: &ProtesConfig,
    warm_start: Option<TtTensor>,
    mut stop_when: Option<&mut dyn FnMut(f64) -> bool>,
) -> Result<(ProtesState, StopReason), ProtesError>
where
    F: FnMut(&[MultiIndex]) -> Result<Vec<f64>, ObjectiveError> + ?Sized,
{
    let mut state = match warm_start {
        Some(t) => {
            if t.mode_sizes() != mode_sizes {
                return Err(ProtesError::WarmStartShape {
                    expected: mode_sizes.to_vec(),
                    got: t.mode_sizes(),
                });
            }
            ProtesState::warm(t, config)?
        }
        None => ProtesState::init(mode_sizes, config)?,
    };
    while state.queries_used + config.candidates <= budget {
        state.iterate(objective, config)?;
        if let (Some(stop), Some(best)) = (stop_when.as_deref_mut(), state.best_value()) {
            if stop(best) {
                return Ok((state, StopReason::Condition));
            }
        }
    }
    Ok((state, StopReason::BudgetExhausted))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ProtesConfig {
        ProtesConfig {
            candidates: 20,
            elites: 4,
            ascent_steps: 10,
            learning_rate: 0.01,
            rank: 3,
            seed: 1,
        }
    }

    #[test]
    fn config_validation() {
        assert!(ProtesConfig::default().validate().is_ok());
        let bad = [
            ProtesConfig { elites: 0, ..small() },
            ProtesConfig { elites: 21, ..small() },
            ProtesConfig { ascent_steps: 0, ..small() },
            ProtesConfig { learning_rate: 0.0, ..small() },
            ProtesConfig { learning_rate: f64::NAN, ..small() },
            ProtesConfig { rank: 0, ..small() },
        ];
        for c in bad {
            assert!(matches!(c.validate(), Err(ProtesError::Config(_))), "{c:?}");
        }
    }

    #[test]
    fn elites_are_stable_on_ties() {
        let values = [3.0, 1.0, 2.0, 1.0, 2.0, f64::NAN, 0.5];
        assert_eq!(select_elites(&values, 3), vec![6, 1, 3]);
        // boundary tie between positions 2 and 4: the earlier one wins
        assert_eq!(select_elites(&values, 4), vec![6, 1, 3, 2]);
        assert_eq!(select_elites(&values, 7).last(), Some(&5));
    }

    #[test]
    fn init_caps_ranks() {
        let cfg = ProtesConfig { rank: 5, ..ProtesConfig::default() };
        let s = ProtesState::init(&[3; 10], &cfg).unwrap();
        assert_eq!(s.distribution.ranks(), vec![1, 3, 5, 5, 5, 5, 5, 5, 5, 3, 1]);
        assert_eq!(s.queries_used(), 0);
        assert!(s.best_value().is_none());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = small();
        let a = ProtesState::init(&[3; 6], &cfg).unwrap();
        let b = ProtesState::init(&[3; 6], &cfg).unwrap();
        let c = ProtesState::init(&[3; 6], &ProtesConfig { seed: 2, ..cfg }).unwrap();
        assert_eq!(a.distribution, b.distribution);
        assert_ne!(a.distribution, c.distribution);
    }

    #[test]
    fn constant_objective_sets_best() {
        let cfg = small();
        let mut s = ProtesState::init(&[3; 4], &cfg).unwrap();
        let mut f = |b: &[MultiIndex]| Ok(vec![4.25; b.len()]);
        s.iterate(&mut f, &cfg).unwrap();
        assert_eq!(s.best_value(), Some(4.25));
        assert_eq!(s.queries_used(), 20);
    }

    #[test]
    fn failing_objective_leaves_state_untouched() {
        let cfg = small();
        let mut s = ProtesState::init(&[3; 4], &cfg).unwrap();
        let before = s.distribution.to_bytes();
        let mut fail = |_: &[MultiIndex]| -> Result<Vec<f64>, ObjectiveError> { Err("boom".into()) };
        assert!(matches!(s.iterate(&mut fail, &cfg), Err(ProtesError::Objective(_))));
        assert_eq!(s.distribution.to_bytes(), before);
        assert_eq!(s.queries_used(), 0);

        // the next successful iteration draws the same batch a fresh state would
        let mut fresh = ProtesState::init(&[3; 4], &cfg).unwrap();
        let mut f = |b: &[MultiIndex]| Ok(b.iter().map(|n| n.0[0] as f64).collect());
        let x = s.iterate(&mut f, &cfg).unwrap();
        let y = fresh.iterate(&mut f, &cfg).unwrap();
        assert_eq!(x.candidates, y.candidates);
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let cfg = small();
        let mut s = ProtesState::init(&[2; 3], &cfg).unwrap();
        let mut f = |_: &[MultiIndex]| Ok(vec![0.0]);
        assert!(matches!(
            s.iterate(&mut f, &cfg),
            Err(ProtesError::ObjectiveArity { expected: 20, got: 1 })
        ));
    }

    #[test]
    fn budget_below_batch_is_immediate_exhaustion() {
        let mut calls = 0;
        let mut f = |b: &[MultiIndex]| {
            calls += 1;
            Ok(vec![0.0; b.len()])
        };
        let (s, reason) = minimize(&[3; 3], &mut f, 19, &small(), None, None).unwrap();
        assert_eq!(reason, StopReason::BudgetExhausted);
        assert_eq!(s.queries_used(), 0);
        assert_eq!(calls, 0);
    }

    #[test]
    fn partial_batches_are_not_issued() {
        let mut f = |b: &[MultiIndex]| Ok(vec![1.0; b.len()]);
        let (s, reason) = minimize(&[3; 3], &mut f, 75, &small(), None, None).unwrap();
        assert_eq!(reason, StopReason::BudgetExhausted);
        assert_eq!(s.queries_used(), 60);
        assert_eq!(s.iterations(), 3);
    }

    #[test]
    fn stop_predicate_on_binary_objective() {
        // zero whenever the first mode is 0: shows up in the first batch almost surely
        let mut iters_seen = Vec::new();
        let mut f = |b: &[MultiIndex]| {
            iters_seen.push(b.iter().any(|n| n.0[0] == 0));
            Ok(b.iter().map(|n| if n.0[0] == 0 { 0.0 } else { 1.0 }).collect())
        };
        let mut stop = |v: f64| v < 0.5;
        let (s, reason) =
            minimize(&[3; 5], &mut f, 10_000, &small(), None, Some(&mut stop)).unwrap();
        assert_eq!(reason, StopReason::Condition);
        let first_hit = iters_seen.iter().position(|&h| h).unwrap();
        assert_eq!(s.iterations(), first_hit + 1);
        assert_eq!(s.best_value(), Some(0.0));
    }

    #[test]
    fn warm_start_shape_is_checked() {
        let t = TtTensor::random_nonneg(&[3, 3], 2, 0).unwrap();
        let mut f = |b: &[MultiIndex]| Ok(vec![0.0; b.len()]);
        assert!(matches!(
            minimize(&[3, 3, 3], &mut f, 100, &small(), Some(t), None),
            Err(ProtesError::WarmStartShape { .. })
        ));
    }
}

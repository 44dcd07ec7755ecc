mod common;

use common::{dense, flat_index};
use tetradat::protes::{minimize, ObjectiveError};
use tetradat::tt::Core;
use tetradat::{MultiIndex, ProtesConfig, ProtesState, StopReason, TtTensor};

fn planted(target: &MultiIndex) -> impl FnMut(&[MultiIndex]) -> Result<Vec<f64>, ObjectiveError> + '_ {
    move |batch| Ok(batch.iter().map(|n| if n == target { 0.0 } else { 1.0 }).collect())
}

fn probability(t: &TtTensor, n: &MultiIndex) -> f64 {
    let full = dense(t);
    full[flat_index(&t.mode_sizes(), n)] / full.iter().sum::<f64>()
}

#[test]
fn different_seeds_give_different_starts() {
    let a = ProtesState::init(&[3; 6], &ProtesConfig { seed: 1, ..Default::default() }).unwrap();
    let b = ProtesState::init(&[3; 6], &ProtesConfig { seed: 2, ..Default::default() }).unwrap();
    assert_ne!(a.distribution.to_bytes(), b.distribution.to_bytes());
}

#[test]
fn sampled_planted_index_gains_mass() {
    let target = MultiIndex(vec![2, 0, 1, 1]);
    let config = ProtesConfig::default();
    let mut state = ProtesState::init(&[3; 4], &config).unwrap();
    let mut objective = planted(&target);
    for _ in 0..50 {
        let before = probability(&state.distribution, &target);
        let it = state.iterate(&mut objective, &config).unwrap();
        if it.candidates.contains(&target) {
            let after = probability(&state.distribution, &target);
            assert!(after > before, "{after} <= {before}");
            assert_eq!(it.candidates[it.elites[0]], target);
            return;
        }
    }
    panic!("planted index was never sampled on 81 entries");
}

#[test]
fn concentrated_warm_start_samples_its_mode() {
    let target = [1usize, 0, 2, 2, 1];
    let cores = target
        .iter()
        .map(|&t| {
            let data = (0..3).map(|i| if i == t { 1.0 } else { 1e-4 }).collect();
            Core::from_vec(1, 3, 1, data).unwrap()
        })
        .collect();
    let warm = TtTensor::from_cores(cores).unwrap();
    let mut seen = Vec::new();
    let mut objective = |b: &[MultiIndex]| -> Result<Vec<f64>, ObjectiveError> {
        seen.extend_from_slice(b);
        Ok(vec![0.0; b.len()])
    };
    let config = ProtesConfig {
        rank: 1,
        ..Default::default()
    };
    let (state, reason) = minimize(&[3; 5], &mut objective, 100, &config, Some(warm), None).unwrap();
    assert_eq!(reason, StopReason::BudgetExhausted);
    assert_eq!(state.queries_used(), 100);
    let hits = seen.iter().filter(|n| n.0 == target).count();
    assert!(hits >= 99, "{hits}/100");
}

#[test]
fn runs_are_deterministic() {
    let objective = |b: &[MultiIndex]| -> Result<Vec<f64>, ObjectiveError> {
        Ok(b.iter().map(|n| n.0.iter().enumerate().map(|(i, &v)| ((i + v) % 3) as f64).sum()).collect())
    };
    let config = ProtesConfig { seed: 17, ..Default::default() };
    let run = || {
        let mut f = objective;
        let (s, _) = minimize(&[3; 8], &mut f, 1000, &config, None, None).unwrap();
        (s.distribution.to_bytes(), s.best_index().cloned(), s.best_value())
    };
    assert_eq!(run(), run());
}

#[test]
fn separable_minimum_is_found_on_a_few_seeds() {
    for seed in 0..5 {
        let mut f = |b: &[MultiIndex]| -> Result<Vec<f64>, ObjectiveError> {
            Ok(b.iter()
                .map(|n| {
                    let (i, j) = (n.0[0] as f64 + 1.0, n.0[1] as f64 + 1.0);
                    (i - 2.0).powi(2) + (j - 3.0).powi(2)
                })
                .collect())
        };
        let config = ProtesConfig { seed, ..Default::default() };
        let (s, _) = minimize(&[5, 5], &mut f, 2000, &config, None, None).unwrap();
        assert_eq!(s.best_index(), Some(&MultiIndex(vec![1, 2])), "seed {seed}");
    }
}

#[test]
fn stop_condition_ends_early() {
    let target = MultiIndex(vec![0, 0, 0]);
    let mut f = planted(&target);
    let mut stop = |best: f64| best == 0.0;
    let (s, reason) = minimize(&[3; 3], &mut f, 10_000, &ProtesConfig::default(), None, Some(&mut stop)).unwrap();
    assert_eq!(reason, StopReason::Condition);
    assert_eq!(s.best_index(), Some(&target));
    assert!(s.queries_used() < 10_000);
    assert_eq!(s.queries_used() % 100, 0);
}

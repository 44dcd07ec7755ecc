mod common;

use common::{all_indices, core_finite_differences, dense, dense_log_likelihood, flat_index, total_variation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tetradat::tt::Core;
use tetradat::{MultiIndex, TtTensor};

#[test]
fn three_by_three_by_three_by_three_matches_dense() {
    let t = TtTensor::random_nonneg(&[3, 3, 3, 3], 2, 11).unwrap();
    let full = dense(&t);
    assert_eq!(full.len(), 81);
    for n in all_indices(&[3, 3, 3, 3]) {
        let want = full[flat_index(&[3, 3, 3, 3], &n)];
        let got = t.get(&n).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs(), "{n:?}: {got} vs {want}");
    }
}

#[test]
fn two_cores_are_a_matrix_product() {
    // A is 4x3 (left rank 1), B is 3x5 (right rank 1)
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b: Vec<f64> = (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let t = TtTensor::from_cores(vec![
        Core::from_vec(1, 4, 3, a.clone()).unwrap(),
        Core::from_vec(3, 5, 1, b.clone()).unwrap(),
    ])
    .unwrap();
    for i in 0..4 {
        for j in 0..5 {
            let want: f64 = (0..3).map(|k| a[i * 3 + k] * b[k * 5 + j]).sum();
            let got = t.get(&MultiIndex(vec![i, j])).unwrap();
            assert!((got - want).abs() < 1e-14, "({i},{j})");
        }
    }
}

#[test]
fn sampling_matches_normalized_tensor() {
    let t = TtTensor::random_nonneg(&[3, 4, 2, 3], 3, 21).unwrap();
    let modes = t.mode_sizes();
    let full = dense(&t);
    let z: f64 = full.iter().sum();
    let probs: Vec<f64> = full.iter().map(|v| v / z).collect();
    let mut counts = vec![0usize; full.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for n in t.sample(100_000, &mut rng) {
        counts[flat_index(&modes, &n)] += 1;
    }
    let tv = total_variation(&counts, &probs);
    assert!(tv <= 0.02, "TV {tv}");
}

#[test]
fn sampling_with_the_same_rng_state_is_reproducible() {
    let t = TtTensor::random_nonneg(&[3; 6], 3, 2).unwrap();
    let a = t.sample(50, &mut ChaCha8Rng::seed_from_u64(8));
    let b = t.sample(50, &mut ChaCha8Rng::seed_from_u64(8));
    assert_eq!(a, b);
}

#[test]
fn gradient_matches_finite_differences() {
    let t = TtTensor::random_nonneg(&[3, 2, 4], 2, 31).unwrap();
    let batch: Vec<MultiIndex> = [[0, 1, 3], [2, 0, 0], [0, 1, 3], [1, 1, 2]]
        .iter()
        .map(|n| MultiIndex(n.to_vec()))
        .collect();
    let grad = t.log_likelihood_grad(&batch).unwrap();
    let fd = core_finite_differences(&t, 1e-6, |t| dense_log_likelihood(t, &batch));
    for (ci, core_fd) in fd.iter().enumerate() {
        for (k, want) in core_fd.iter().enumerate() {
            let got = grad.cores()[ci].data()[k];
            assert!(
                (got - want).abs() <= 1e-5 * want.abs().max(1.0),
                "core {ci} entry {k}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn log_likelihood_matches_dense() {
    let t = TtTensor::random_nonneg(&[2, 3, 2], 2, 4).unwrap();
    let batch = all_indices(&[2, 3, 2]);
    let got = t.log_likelihood(&batch).unwrap();
    let want = dense_log_likelihood(&t, &batch);
    assert!((got - want).abs() < 1e-10);
}

#[test]
fn repeated_ascent_increases_likelihood_of_a_fixed_batch() {
    let mut t = TtTensor::random_nonneg(&[3; 5], 3, 41).unwrap();
    let batch: Vec<MultiIndex> = [[0, 1, 2, 0, 1], [2, 2, 2, 2, 2], [1, 0, 1, 0, 1]]
        .iter()
        .map(|n| MultiIndex(n.to_vec()))
        .collect();
    let mut prev = t.log_likelihood(&batch).unwrap();
    for step in 0..100 {
        let g = t.log_likelihood_grad(&batch).unwrap();
        t.ascend(&g, 0.01).unwrap();
        let now = t.log_likelihood(&batch).unwrap();
        assert!(now >= prev - 1e-12, "step {step}: {now} < {prev}");
        prev = now;
    }
}

#[test]
fn long_chains_do_not_underflow() {
    let t = TtTensor::random_nonneg(&[3; 400], 5, 1).unwrap();
    let n = MultiIndex(vec![1; 400]);
    let lv = t.log_value(&n).unwrap();
    assert!(lv.is_finite());
    let g = t.log_likelihood_grad(std::slice::from_ref(&n)).unwrap();
    assert!(g.cores().iter().all(|c| c.data().iter().all(|v| v.is_finite())));
    let draws = t.sample(5, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(draws.iter().all(|d| d.len() == 400));
}

#[test]
fn container_round_trips_through_a_file() {
    let t = TtTensor::random_nonneg(&[3, 5, 2], 4, 9).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dist.ttt");
    t.write_to(std::fs::File::create(&path).unwrap()).unwrap();
    let back = TtTensor::read_from(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, t);
    assert!(TtTensor::from_bytes(&t.to_bytes()[..10]).is_err());
}

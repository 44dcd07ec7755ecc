//! Quick numerical self-checks, each against an independent reference computation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::{hsv_to_rgb, rgb_to_hsv};
use crate::model::{BuiltinClassifier, Differentiable, Image};
use crate::protes::{self, ProtesConfig};
use crate::tt::{MultiIndex, TtTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct SelfCheck {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_selftest() -> Vec<SelfCheck> {
    vec![
        check("tt evaluation vs dense contraction", tt_dense),
        check("tt sampling vs normalized tensor", tt_sampling),
        check("log-likelihood gradient vs finite differences", tt_gradient),
        check("hsv round trip on 17^3 lattice", hsv_round_trip),
        check("protes finds separable minimum", protes_separable),
        check("classifier input gradient vs finite differences", classifier_gradient),
    ]
}

fn check(name: &'static str, f: fn() -> Result<String, String>) -> SelfCheck {
    match f() {
        Ok(detail) => SelfCheck { name, passed: true, detail },
        Err(detail) => SelfCheck { name, passed: false, detail },
    }
}

fn all_indices(modes: &[usize]) -> Vec<MultiIndex> {
    let mut out = vec![Vec::new()];
    for &n in modes {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out.into_iter().map(MultiIndex).collect()
}

/// Dense tensor by contracting cores left to right; last index fastest.
fn dense(t: &TtTensor) -> Vec<f64> {
    let mut acc = vec![1.0];
    let mut rank = 1;
    for c in t.cores() {
        let (l, n, r) = c.shape();
        debug_assert_eq!(l, rank);
        let rows = acc.len() / rank;
        let mut next = vec![0.0; rows * n * r];
        for row in 0..rows {
            for a in 0..l {
                let v = acc[row * l + a];
                for i in 0..n {
                    for b in 0..r {
                        next[(row * n + i) * r + b] += v * c.get(a, i, b);
                    }
                }
            }
        }
        acc = next;
        rank = r;
    }
    acc
}

fn tt_dense() -> Result<String, String> {
    let t = TtTensor::random_nonneg(&[3, 3, 3, 3], 3, 1).map_err(|e| e.to_string())?;
    let full = dense(&t);
    let mut worst = 0.0f64;
    for (n, want) in all_indices(&t.mode_sizes()).iter().zip(&full) {
        let got = t.get(n).map_err(|e| e.to_string())?;
        worst = worst.max((got - want).abs() / want.abs());
    }
    if worst <= 1e-12 {
        Ok(format!("max rel err {worst:.2e}"))
    } else {
        Err(format!("max rel err {worst:.2e}"))
    }
}

fn tt_sampling() -> Result<String, String> {
    let t = TtTensor::random_nonneg(&[2, 2, 2], 2, 2).map_err(|e| e.to_string())?;
    let full = dense(&t);
    let z: f64 = full.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 20_000;
    let mut counts = vec![0usize; full.len()];
    for n in t.sample(draws, &mut rng) {
        counts[n.0[0] * 4 + n.0[1] * 2 + n.0[2]] += 1;
    }
    let tv: f64 = 0.5
        * counts
            .iter()
            .zip(&full)
            .map(|(&c, p)| (c as f64 / draws as f64 - p / z).abs())
            .sum::<f64>();
    if tv <= 0.03 {
        Ok(format!("TV {tv:.4}"))
    } else {
        Err(format!("TV {tv:.4}"))
    }
}

fn tt_gradient() -> Result<String, String> {
    let t = TtTensor::random_nonneg(&[3, 3, 3], 2, 4).map_err(|e| e.to_string())?;
    let batch: Vec<MultiIndex> = [[0, 1, 2], [2, 2, 0], [1, 0, 1]]
        .iter()
        .map(|n| MultiIndex(n.to_vec()))
        .collect();
    let grad = t.log_likelihood_grad(&batch).map_err(|e| e.to_string())?;
    let ll = |t: &TtTensor| -> f64 { batch.iter().map(|n| t.get(n).unwrap().ln()).sum() };
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (ci, core) in t.cores().iter().enumerate() {
        for k in 0..core.data().len() {
            let mut plus = t.clone();
            plus.cores_mut()[ci].data_mut()[k] += h;
            let mut minus = t.clone();
            minus.cores_mut()[ci].data_mut()[k] -= h;
            let fd = (ll(&plus) - ll(&minus)) / (2.0 * h);
            let an = grad.cores()[ci].data()[k];
            worst = worst.max((fd - an).abs() / an.abs().max(1e-3));
        }
    }
    if worst <= 1e-5 {
        Ok(format!("max rel err {worst:.2e}"))
    } else {
        Err(format!("max rel err {worst:.2e}"))
    }
}

fn hsv_round_trip() -> Result<String, String> {
    let mut worst = 0.0f64;
    for r in 0..17 {
        for g in 0..17 {
            for b in 0..17 {
                let rgb = [r as f64 / 16.0, g as f64 / 16.0, b as f64 / 16.0];
                let back = hsv_to_rgb(rgb_to_hsv(rgb));
                for (x, y) in rgb.iter().zip(back) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    if worst <= 1e-9 {
        Ok(format!("max abs err {worst:.2e}"))
    } else {
        Err(format!("max abs err {worst:.2e}"))
    }
}

fn protes_separable() -> Result<String, String> {
    let mut f = |b: &[MultiIndex]| {
        Ok(b.iter()
            .map(|n| {
                let (i, j) = (n.0[0] as f64 + 1.0, n.0[1] as f64 + 1.0);
                (i - 2.0).powi(2) + (j - 3.0).powi(2)
            })
            .collect())
    };
    let (s, _) = protes::minimize(&[5, 5], &mut f, 2000, &ProtesConfig::default(), None, None)
        .map_err(|e| e.to_string())?;
    match (s.best_index(), s.best_value()) {
        (Some(n), Some(v)) if v == 0.0 => Ok(format!("minimum at {:?}", n.0)),
        (n, v) => Err(format!("best {v:?} at {n:?}")),
    }
}

fn classifier_gradient() -> Result<String, String> {
    let m = BuiltinClassifier::random(4, 4, 16, 5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<f64> = (0..48).map(|_| rng.gen_range(0.05..0.95)).collect();
    let img = Image::new(4, 4, data.clone()).map_err(|e| e.to_string())?;
    let class = 2;
    let g = m.input_gradient(&img, class).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..data.len() {
        let mut p = data.clone();
        p[k] += h;
        let mut q = data.clone();
        q[k] -= h;
        let fp = crate::model::Classifier::predict(&m, &Image::new(4, 4, p).unwrap()).unwrap().probs[class];
        let fq = crate::model::Classifier::predict(&m, &Image::new(4, 4, q).unwrap()).unwrap().probs[class];
        let fd = (fp - fq) / (2.0 * h);
        worst = worst.max((fd - g[k]).abs() / g[k].abs().max(1e-6));
    }
    if worst <= 1e-4 {
        Ok(format!("max rel err {worst:.2e}"))
    } else {
        Err(format!("max rel err {worst:.2e}"))
    }
}

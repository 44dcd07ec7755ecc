//! Reference computations shared by the integration tests. Nothing here calls
//! into the fast paths under test except for reading core entries.

#![allow(dead_code)]

use std::path::PathBuf;

use tetradat::model::{Classifier, Differentiable, Image, ModelError, Prediction};
use tetradat::{BuiltinClassifier, MultiIndex, TtTensor};

pub fn frozen_model_path() -> PathBuf {
    // resolves from either crate directory
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/assets/desk_model.nnw")
}

pub fn frozen_model() -> BuiltinClassifier {
    BuiltinClassifier::load(&frozen_model_path()).expect("frozen desk model is checked in")
}

/// Every multi-index in lexicographic order (last index fastest).
pub fn all_indices(modes: &[usize]) -> Vec<MultiIndex> {
    let total: usize = modes.iter().product();
    (0..total)
        .map(|mut flat| {
            let mut idx = vec![0; modes.len()];
            for (slot, &n) in idx.iter_mut().zip(modes).rev() {
                *slot = flat % n;
                flat /= n;
            }
            MultiIndex(idx)
        })
        .collect()
}

/// Full tensor, built by contracting one core at a time into a dense array.
pub fn dense(t: &TtTensor) -> Vec<f64> {
    let mut acc = vec![1.0];
    let mut rank = 1;
    for c in t.cores() {
        let (l, n, r) = c.shape();
        assert_eq!(l, rank);
        let rows = acc.len() / l;
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
    assert_eq!(rank, 1);
    acc
}

pub fn flat_index(modes: &[usize], n: &MultiIndex) -> usize {
    modes.iter().zip(&n.0).fold(0, |acc, (&m, &i)| acc * m + i)
}

/// `sum_s log P[n_s]` straight from the dense tensor.
pub fn dense_log_likelihood(t: &TtTensor, batch: &[MultiIndex]) -> f64 {
    let modes = t.mode_sizes();
    let full = dense(t);
    batch.iter().map(|n| full[flat_index(&modes, n)].ln()).sum()
}

/// Central differences of `f` with respect to every core entry, in core order.
pub fn core_finite_differences(t: &TtTensor, h: f64, f: impl Fn(&TtTensor) -> f64) -> Vec<Vec<f64>> {
    (0..t.cores().len())
        .map(|ci| {
            (0..t.cores()[ci].data().len())
                .map(|k| {
                    let mut plus = t.clone();
                    plus.cores_mut()[ci].data_mut()[k] += h;
                    let mut minus = t.clone();
                    minus.cores_mut()[ci].data_mut()[k] -= h;
                    (f(&plus) - f(&minus)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// Central differences of `probs[class]` with respect to each input channel.
pub fn input_finite_differences<C: Classifier + ?Sized>(model: &C, image: &Image, class: usize, h: f64) -> Vec<f64> {
    let x = image.data();
    (0..x.len())
        .map(|k| {
            let mut p = x.to_vec();
            let mut q = x.to_vec();
            p[k] += h;
            q[k] -= h;
            let fp = model.predict(&Image::new(image.height(), image.width(), p).unwrap()).unwrap().probs[class];
            let fq = model.predict(&Image::new(image.height(), image.width(), q).unwrap()).unwrap().probs[class];
            (fp - fq) / (2.0 * h)
        })
        .collect()
}

pub fn total_variation(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

/// Softmax over a linear score `w . x + b`, with the analytic gradient.
#[derive(Clone, Debug)]
pub struct LinearSoftmax {
    pub height: usize,
    pub width: usize,
    /// Class-major: `weights[c * inputs + j]`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LinearSoftmax {
    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    fn probs(&self, x: &[f64]) -> Vec<f64> {
        let logits: Vec<f64> = (0..self.classes())
            .map(|c| {
                self.bias[c]
                    + self.weights[c * x.len()..(c + 1) * x.len()]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect();
        let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|v| v / z).collect()
    }
}

impl Classifier for LinearSoftmax {
    fn num_classes(&self) -> usize {
        self.classes()
    }

    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        Prediction::from_probs(self.probs(image.data()))
    }
}

impl Differentiable for LinearSoftmax {
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError> {
        let x = image.data();
        let p = self.probs(x);
        let n = x.len();
        Ok((0..n)
            .map(|j| {
                let mean: f64 = (0..self.classes()).map(|c| p[c] * self.weights[c * n + j]).sum();
                p[class_index] * (self.weights[class_index * n + j] - mean)
            })
            .collect())
    }
}

/// Exactly linear in the input (not a probability model): `f(x) = w . x`.
/// Its "probabilities" are only used through the gradient, so `predict`
/// returns a fixed one-hot vector.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weights: Vec<f64>,
}

impl Linear {
    pub fn value(&self, image: &Image) -> f64 {
        self.weights.iter().zip(image.data()).map(|(w, v)| w * v).sum()
    }
}

impl Classifier for Linear {
    fn num_classes(&self) -> usize {
        1
    }

    fn predict(&self, _image: &Image) -> Result<Prediction, ModelError> {
        Prediction::from_probs(vec![1.0])
    }
}

impl Differentiable for Linear {
    fn input_gradient(&self, _image: &Image, _class_index: usize) -> Result<Vec<f64>, ModelError> {
        Ok(self.weights.clone())
    }
}

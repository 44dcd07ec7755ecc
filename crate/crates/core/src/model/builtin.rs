//! The built-in classifier: flatten -> dense -> ReLU -> dense -> softmax.
//!
//! Weights live in the `NNW1` container:
//!
//! ```text
//! magic "NNW1"
//! u64 height, u64 width, u64 channels (= 3)
//! u64 layer count (= 2)
//! per layer: u64 in_dim, u64 out_dim
//! per layer: in_dim * out_dim f64 weights (input-major: w[i * out_dim + o]),
//!            then out_dim f64 biases
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Classifier, Differentiable, Image, ModelError, Prediction};
use crate::dataset::LabeledImage;

const NNW_MAGIC: &[u8; 4] = b"NNW1";

#[derive(Clone, Debug, PartialEq)]
pub struct BuiltinClassifier {
    height: usize,
    width: usize,
    hidden: usize,
    classes: usize,
    /// `inputs x hidden`, input-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    /// `hidden x classes`, hidden-major.
    w2: Vec<f64>,
    b2: Vec<f64>,
}

struct Forward {
    pre: Vec<f64>,
    probs: Vec<f64>,
}

impl BuiltinClassifier {
    pub fn zeros(height: usize, width: usize, hidden: usize, classes: usize) -> Self {
        let inputs = height * width * 3;
        Self {
            height,
            width,
            hidden,
            classes,
            w1: vec![0.0; inputs * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * classes],
            b2: vec![0.0; classes],
        }
    }

    /// Random initialization: He-uniform first layer, Glorot-uniform output layer, zero biases.
    pub fn random(height: usize, width: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Self::zeros(height, width, hidden, classes);
        let a1 = (6.0 / m.inputs() as f64).sqrt();
        m.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
        let a2 = (6.0 / (hidden + classes) as f64).sqrt();
        m.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
        m
    }

    /// Builds a classifier from explicit parameters; see the module docs for layouts.
    pub fn from_parameters(
        height: usize,
        width: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: Vec<f64>,
    ) -> Result<Self, ModelError> {
        let hidden = b1.len();
        let classes = b2.len();
        let inputs = height * width * 3;
        if inputs == 0 || hidden == 0 || classes == 0 {
            return Err(ModelError::Weights("empty layer".into()));
        }
        if w1.len() != inputs * hidden || w2.len() != hidden * classes {
            return Err(ModelError::Weights("weight shapes do not chain".into()));
        }
        Ok(Self {
            height,
            width,
            hidden,
            classes,
            w1,
            b1,
            w2,
            b2,
        })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn inputs(&self) -> usize {
        self.height * self.width * 3
    }

    pub fn first_layer_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.w1, &mut self.b1)
    }

    pub fn second_layer_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.w2, &mut self.b2)
    }

    fn check_image(&self, image: &Image) -> Result<(), ModelError> {
        if image.height() != self.height || image.width() != self.width {
            return Err(ModelError::ShapeMismatch {
                want_h: self.height,
                want_w: self.width,
                got_h: image.height(),
                got_w: image.width(),
            });
        }
        Ok(())
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let h = self.hidden;
        let mut pre = self.b1.clone();
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (p, &w) in pre.iter_mut().zip(&self.w1[j * h..(j + 1) * h]) {
                *p += xj * w;
            }
        }
        let mut logits = self.b2.clone();
        for (k, &p) in pre.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let row = &self.w2[k * self.classes..(k + 1) * self.classes];
            for (l, &w) in logits.iter_mut().zip(row) {
                *l += p * w;
            }
        }
        Forward {
            pre,
            probs: softmax(&logits),
        }
    }

    /// `d probs[class] / d x`, backpropagated through softmax, both dense layers and ReLU.
    fn backward(&self, x: &[f64], fwd: &Forward, dprobs: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // softmax Jacobian: dL/dlogit_j = p_j (g_j - sum_i g_i p_i)
        let dot: f64 = dprobs.iter().zip(&fwd.probs).map(|(g, p)| g * p).sum();
        let dlogits: Vec<f64> = fwd.probs.iter().zip(dprobs).map(|(p, g)| p * (g - dot)).collect();
        let dpre: Vec<f64> = (0..self.hidden)
            .map(|k| {
                if fwd.pre[k] > 0.0 {
                    let row = &self.w2[k * self.classes..(k + 1) * self.classes];
                    row.iter().zip(&dlogits).map(|(w, d)| w * d).sum()
                } else {
                    0.0
                }
            })
            .collect();
        let dx = (0..x.len())
            .map(|j| {
                let col = &self.w1[j * self.hidden..(j + 1) * self.hidden];
                col.iter().zip(&dpre).map(|(w, d)| w * d).sum()
            })
            .collect();
        (dx, dlogits)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), ModelError> {
        w.write_all(NNW_MAGIC)?;
        for x in [self.height, self.width, 3, 2, self.inputs(), self.hidden, self.hidden, self.classes] {
            w.write_all(&(x as u64).to_le_bytes())?;
        }
        for block in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for x in block.iter() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, ModelError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != NNW_MAGIC {
            return Err(ModelError::Weights(format!("bad magic {magic:?}")));
        }
        let mut header = [0usize; 8];
        for h in &mut header {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b) as usize;
        }
        let [height, width, channels, layers, in1, out1, in2, out2] = header;
        if channels != 3 || layers != 2 {
            return Err(ModelError::Weights(format!(
                "expected 3 channels and 2 layers, got {channels} and {layers}"
            )));
        }
        if in1 != height * width * 3 || out1 != in2 || in1 == 0 || out1 == 0 || out2 == 0 {
            return Err(ModelError::Weights("layer shapes do not chain".into()));
        }
        if in1.checked_mul(out1).is_none_or(|n| n > 1 << 32) {
            return Err(ModelError::Weights("layer too large".into()));
        }
        let mut read_block = |n: usize| -> Result<Vec<f64>, ModelError> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect())
        };
        let w1 = read_block(in1 * out1)?;
        let b1 = read_block(out1)?;
        let w2 = read_block(in2 * out2)?;
        let b2 = read_block(out2)?;
        Self::from_parameters(height, width, w1, b1, w2, b2)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut cursor = bytes;
        let m = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(ModelError::Weights(format!("{} trailing bytes", cursor.len())));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Plain mini-batch gradient descent on softmax cross-entropy.
    pub fn train(data: &[LabeledImage], config: &TrainConfig) -> Result<(Self, TrainReport), ModelError> {
        let first = data
            .first()
            .ok_or_else(|| ModelError::InvalidImage("empty training set".into()))?;
        let (height, width) = (first.image.height(), first.image.width());
        let classes = data.iter().map(|s| s.label).max().unwrap() + 1;
        let classes = classes.max(config.classes);
        let mut model = Self::random(height, width, config.hidden, classes, config.seed);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_0f_7a1e);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut epoch_losses = Vec::with_capacity(config.epochs);

        let mut gw1 = vec![0.0; model.w1.len()];
        let mut gb1 = vec![0.0; model.b1.len()];
        let mut gw2 = vec![0.0; model.w2.len()];
        let mut gb2 = vec![0.0; model.b2.len()];
        // train on mean-centered inputs and fold the shift into b1 afterwards
        let mut center = vec![0.0; height * width * 3];
        for s in data {
            model.check_image(&s.image)?;
            for (c, v) in center.iter_mut().zip(s.image.data()) {
                *c += v / data.len() as f64;
            }
        }
        let mut x = Vec::new();
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for batch in order.chunks(config.batch_size.max(1)) {
                gw1.iter_mut().for_each(|g| *g = 0.0);
                gb1.iter_mut().for_each(|g| *g = 0.0);
                gw2.iter_mut().for_each(|g| *g = 0.0);
                gb2.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let sample = &data[i];
                    x.clear();
                    x.extend(sample.image.data().iter().zip(&center).map(|(v, c)| v - c));
                    let fwd = model.forward(&x);
                    loss_sum -= fwd.probs[sample.label].max(1e-300).ln();
                    // cross-entropy through softmax
                    let mut dlogits = fwd.probs.clone();
                    dlogits[sample.label] -= 1.0;
                    let h = model.hidden;
                    let mut dpre = vec![0.0; h];
                    for k in 0..h {
                        if fwd.pre[k] <= 0.0 {
                            continue;
                        }
                        let row = &model.w2[k * classes..(k + 1) * classes];
                        let grow = &mut gw2[k * classes..(k + 1) * classes];
                        let mut acc = 0.0;
                        for ((g, &w), &d) in grow.iter_mut().zip(row).zip(&dlogits) {
                            *g += fwd.pre[k] * d;
                            acc += w * d;
                        }
                        dpre[k] = acc;
                    }
                    for (g, d) in gb2.iter_mut().zip(&dlogits) {
                        *g += d;
                    }
                    for (g, d) in gb1.iter_mut().zip(&dpre) {
                        *g += d;
                    }
                    for (j, &xj) in x.iter().enumerate() {
                        for (g, &d) in gw1[j * h..(j + 1) * h].iter_mut().zip(&dpre) {
                            *g += xj * d;
                        }
                    }
                }
                let step = config.learning_rate / batch.len() as f64;
                for (w, g) in model.w1.iter_mut().zip(&gw1) {
                    *w -= step * g;
                }
                for (w, g) in model.b1.iter_mut().zip(&gb1) {
                    *w -= step * g;
                }
                for (w, g) in model.w2.iter_mut().zip(&gw2) {
                    *w -= step * g;
                }
                for (w, g) in model.b2.iter_mut().zip(&gb2) {
                    *w -= step * g;
                }
            }
            epoch_losses.push(loss_sum / data.len() as f64);
        }
        let h = model.hidden;
        for (j, c) in center.iter().enumerate() {
            for (b, w) in model.b1.iter_mut().zip(&model.w1[j * h..(j + 1) * h]) {
                *b -= c * w;
            }
        }
        let accuracy = model.accuracy(data)?;
        Ok((
            model,
            TrainReport {
                epoch_losses,
                train_accuracy: accuracy,
            },
        ))
    }

    /// Fraction of samples whose arg-max matches the label.
    pub fn accuracy(&self, data: &[LabeledImage]) -> Result<f64, ModelError> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut correct = 0usize;
        for s in data {
            if self.predict(&s.image)?.top_class == s.label {
                correct += 1;
            }
        }
        Ok(correct as f64 / data.len() as f64)
    }
}

impl Classifier for BuiltinClassifier {
    fn num_classes(&self) -> usize {
        self.classes
    }

    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        self.check_image(image)?;
        let fwd = self.forward(image.data());
        let top_class = argmax(&fwd.probs);
        Ok(Prediction {
            top_score: fwd.probs[top_class],
            top_class,
            probs: fwd.probs,
        })
    }
}

impl Differentiable for BuiltinClassifier {
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError> {
        self.check_image(image)?;
        if class_index >= self.classes {
            return Err(ModelError::ClassOutOfRange {
                class: class_index,
                classes: self.classes,
            });
        }
        let x = image.data();
        let fwd = self.forward(x);
        let mut seed = vec![0.0; self.classes];
        seed[class_index] = 1.0;
        Ok(self.backward(x, &fwd, &seed).0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    /// Lower bound on the class count; the labels may imply more.
    pub classes: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            classes: 10,
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub train_accuracy: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

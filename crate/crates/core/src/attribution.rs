//! Attribution maps from a differentiable classifier and top-pixel selection.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Differentiable, Image, ModelError};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("integrated gradients needs at least one step")]
    ZeroSteps,
    #[error("cannot select {requested} pixels from {available}")]
    SelectionSize { requested: usize, available: usize },
    #[error("cannot write attribution image: {0}")]
    Export(String),
}

/// Reference image at the start of the integrated-gradients path.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Baseline {
    #[default]
    Black,
    /// Uniform noise on `[0, 1]` per channel from the given seed.
    Noise { seed: u64 },
}

impl Baseline {
    pub fn image(&self, height: usize, width: usize) -> Image {
        match *self {
            Baseline::Black => Image::filled(height, width, [0.0; 3]).expect("valid image"),
            Baseline::Noise { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let data = (0..height * width * 3).map(|_| rng.gen::<f64>()).collect();
                Image::new(height, width, data).expect("valid image")
            }
        }
    }
}

/// Per-pixel significance scores, row-major `H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct AttributionMap {
    pub height: usize,
    pub width: usize,
    pub scores: Vec<f64>,
    pub class_index: usize,
    /// `None` for saliency maps.
    pub baseline: Option<Baseline>,
}

impl AttributionMap {
    pub fn score(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.width + col]
    }

    /// Writes a min-max normalized 8-bit grayscale image.
    pub fn save_png(&self, path: &Path) -> Result<(), AttributionError> {
        let lo = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let bytes: Vec<u8> = self
            .scores
            .iter()
            .map(|&s| {
                if span > 0.0 {
                    ((s - lo) / span * 255.0).round() as u8
                } else {
                    0
                }
            })
            .collect();
        image::save_buffer(
            path,
            &bytes,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::L8,
        )
        .map_err(|e| AttributionError::Export(format!("{}: {e}", path.display())))
    }
}

/// Gradient of the class probability at the image, summed in absolute value
/// over the three channels of each pixel.
pub fn saliency<D: Differentiable + ?Sized>(
    model: &D,
    image: &Image,
    class_index: usize,
) -> Result<AttributionMap, AttributionError> {
    let grad = model.input_gradient(image, class_index)?;
    let scores = grad
        .chunks_exact(3)
        .map(|c| c.iter().map(|g| g.abs()).sum())
        .collect();
    Ok(AttributionMap {
        height: image.height(),
        width: image.width(),
        scores,
        class_index,
        baseline: None,
    })
}

/// Per-channel integrated gradients, before aggregation to pixels.
///
/// Right-endpoint Riemann sum with `steps` nodes along the straight path from
/// the baseline to the image.
pub fn integrated_gradients_channels<D: Differentiable + ?Sized>(
    model: &D,
    image: &Image,
    class_index: usize,
    steps: usize,
    baseline: Baseline,
) -> Result<Vec<f64>, AttributionError> {
    if steps == 0 {
        return Err(AttributionError::ZeroSteps);
    }
    let base = baseline.image(image.height(), image.width());
    let x = image.data();
    let x0 = base.data();
    let mut avg = vec![0.0; x.len()];
    for t in 1..=steps {
        let alpha = t as f64 / steps as f64;
        let point: Vec<f64> = x0
            .iter()
            .zip(x)
            .map(|(&b, &v)| (b + alpha * (v - b)).clamp(0.0, 1.0))
            .collect();
        let point = Image::new(image.height(), image.width(), point)?;
        let g = model.input_gradient(&point, class_index)?;
        for (a, gi) in avg.iter_mut().zip(g) {
            *a += gi;
        }
    }
    Ok(avg
        .iter()
        .zip(x.iter().zip(x0))
        .map(|(a, (v, b))| (v - b) * a / steps as f64)
        .collect())
}

/// Integrated gradients summed (with sign) over the channels of each pixel.
pub fn integrated_gradients<D: Differentiable + ?Sized>(
    model: &D,
    image: &Image,
    class_index: usize,
    steps: usize,
    baseline: Baseline,
) -> Result<AttributionMap, AttributionError> {
    let per_channel = integrated_gradients_channels(model, image, class_index, steps, baseline)?;
    Ok(AttributionMap {
        height: image.height(),
        width: image.width(),
        scores: per_channel.chunks_exact(3).map(|c| c.iter().sum()).collect(),
        class_index,
        baseline: Some(baseline),
    })
}

/// Pixel positions chosen for perturbation, best first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelSelection {
    pub positions: Vec<(usize, usize)>,
}

impl PixelSelection {
    pub fn d_hat(&self) -> usize {
        self.positions.len()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.positions.contains(&(row, col))
    }
}

/// The `d_hat` highest-scoring pixels; equal scores keep row-major order.
pub fn select_top_pixels(map: &AttributionMap, d_hat: usize) -> Result<PixelSelection, AttributionError> {
    let available = map.height * map.width;
    if d_hat == 0 || d_hat > available {
        return Err(AttributionError::SelectionSize {
            requested: d_hat,
            available,
        });
    }
    let mut order: Vec<usize> = (0..available).collect();
    order.sort_by(|&a, &b| map.scores[b].total_cmp(&map.scores[a]));
    Ok(PixelSelection {
        positions: order[..d_hat]
            .iter()
            .map(|&i| (i / map.width, i % map.width))
            .collect(),
    })
}

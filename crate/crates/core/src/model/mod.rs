//! Images, predictions and the classifier interfaces the attack is written against.
//!
//! The attack only ever sees a [`BlackBox`]: something that maps an image to a
//! probability vector and counts how often it was asked. Attribution needs the
//! richer [`Differentiable`] interface, which the built-in classifier and the
//! bridge provide.

mod bridge;
mod builtin;
mod endpoint;

use std::path::Path;

use thiserror::Error;

pub use bridge::{BridgeEndpoint, BridgeInfo, BridgeRequest, BridgeResponse};
pub use builtin::{BuiltinClassifier, TrainConfig, TrainReport};
pub use endpoint::{BlackBox, InProcess};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("image is {got_h}x{got_w}, model expects {want_h}x{want_w}")]
    ShapeMismatch {
        want_h: usize,
        want_w: usize,
        got_h: usize,
        got_w: usize,
    },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("classifier does not provide input gradients")]
    NotDifferentiable,
    /// The bridge process could not be reached or replied with garbage. Retryable.
    #[error("bridge transport failure: {0}")]
    Transport(String),
    /// The bridge answered, but with an error from the model side.
    #[error("remote model error: {0}")]
    Remote(String),
    #[error("malformed weights file: {0}")]
    Weights(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ModelError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ModelError::Transport(_))
    }
}

/// An RGB image with channel values in `[0, 1]`, stored row-major as `H x W x 3`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self, ModelError> {
        if height == 0 || width == 0 {
            return Err(ModelError::InvalidImage(format!("empty image {height}x{width}")));
        }
        if data.len() != height * width * 3 {
            return Err(ModelError::InvalidImage(format!(
                "{} values for a {height}x{width}x3 image",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(ModelError::InvalidImage(format!("channel value {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3]) -> Result<Self, ModelError> {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_pixels(&self) -> usize {
        self.height * self.width
    }

    /// Flattened `H x W x 3` channel values.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let o = (row * self.width + col) * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    /// Overwrites one pixel, clamping each channel into `[0, 1]`.
    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let o = (row * self.width + col) * 3;
        for (dst, v) in self.data[o..o + 3].iter_mut().zip(rgb) {
            *dst = v.clamp(0.0, 1.0);
        }
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self, ModelError> {
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self::new(height, width, data)
    }

    /// Rounds every channel to the nearest 8-bit level.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&x| (x * 255.0).round() as u8).collect()
    }

    /// Loads an 8-bit image (PNG or PPM, anything the `image` crate decodes).
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let img = image::open(path)
            .map_err(|e| ModelError::InvalidImage(format!("{}: {e}", path.display())))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Self::from_rgb8(h as usize, w as usize, img.as_raw())
    }

    /// Saves as 8-bit; the format follows the file extension.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
        )
        .map_err(|e| ModelError::InvalidImage(format!("{}: {e}", path.display())))
    }
}

/// A classifier output: a probability vector and its arg-max.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub probs: Vec<f64>,
    pub top_class: usize,
    pub top_score: f64,
}

impl Prediction {
    /// Validates a probability vector and records its (first) arg-max.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidPrediction("no classes".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::InvalidPrediction("probability outside [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(ModelError::InvalidPrediction(format!("probabilities sum to {sum}")));
        }
        let mut top_class = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > probs[top_class] {
                top_class = i;
            }
        }
        let top_score = probs[top_class];
        Ok(Self {
            probs,
            top_class,
            top_score,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }
}

/// Anything that scores an image.
pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;
    fn predict(&self, image: &Image) -> Result<Prediction, ModelError>;
}

/// A classifier that also exposes `d probs[class] / d pixels`.
pub trait Differentiable: Classifier {
    /// Gradient of the class probability with respect to every channel value,
    /// laid out like [`Image::data`].
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError>;
}

impl<T: Classifier + ?Sized> Classifier for &T {
    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }
    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        (**self).predict(image)
    }
}

impl<T: Differentiable + ?Sized> Differentiable for &T {
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError> {
        (**self).input_gradient(image, class_index)
    }
}

use std::sync::atomic::{AtomicU64, Ordering};

use super::{Classifier, Differentiable, Image, ModelError, Prediction};

/// The only view of the attacked model the attack loop gets: predictions plus a
/// count of successful queries.
pub trait BlackBox: Send + Sync {
    fn query(&self, image: &Image) -> Result<Prediction, ModelError>;
    fn query_count(&self) -> u64;
}

impl<T: BlackBox + ?Sized> BlackBox for &T {
    fn query(&self, image: &Image) -> Result<Prediction, ModelError> {
        (**self).query(image)
    }
    fn query_count(&self) -> u64 {
        (**self).query_count()
    }
}

/// Wraps an in-process classifier as a counted black box.
#[derive(Debug)]
pub struct InProcess<C> {
    model: C,
    counter: AtomicU64,
}

impl<C: Classifier> InProcess<C> {
    pub fn new(model: C) -> Self {
        Self {
            model,
            counter: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &C {
        &self.model
    }

    pub fn into_inner(self) -> C {
        self.model
    }
}

impl<C: Classifier> BlackBox for InProcess<C> {
    fn query(&self, image: &Image) -> Result<Prediction, ModelError> {
        let p = self.model.predict(image)?;
        self.counter.fetch_add(1, Ordering::Relaxed);
        Ok(p)
    }

    fn query_count(&self) -> u64 {
        self.counter.load(Ordering::Relaxed)
    }
}

impl<C: Classifier> Classifier for InProcess<C> {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }
    fn predict(&self, image: &Image) -> Result<Prediction, ModelError> {
        self.model.predict(image)
    }
}

impl<C: Differentiable> Differentiable for InProcess<C> {
    fn input_gradient(&self, image: &Image, class_index: usize) -> Result<Vec<f64>, ModelError> {
        self.model.input_gradient(image, class_index)
    }
}

use serde::{Deserialize, Serialize};

use crate::model::{Image, ModelError};

/// Perturbation norms on the 0-255 channel scale.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// L1, L2 and L-infinity norms of `adversarial - original`, flattened over all
/// channels, with channel values scaled to 0-255 before differencing.
pub fn compute_norms(original: &Image, adversarial: &Image) -> Result<Norms, ModelError> {
    if original.height() != adversarial.height() || original.width() != adversarial.width() {
        return Err(ModelError::ShapeMismatch {
            want_h: original.height(),
            want_w: original.width(),
            got_h: adversarial.height(),
            got_w: adversarial.width(),
        });
    }
    let mut n = Norms::default();
    let mut sq = 0.0;
    for (a, b) in original.data().iter().zip(adversarial.data()) {
        let d = (b * 255.0 - a * 255.0).abs();
        n.l1 += d;
        sq += d * d;
        n.linf = n.linf.max(d);
    }
    n.l2 = sq.sqrt();
    Ok(n)
}

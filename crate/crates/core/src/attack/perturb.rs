//! Discrete pixel perturbations in HSV space.

use super::AttackError;
use crate::attribution::PixelSelection;
use crate::model::Image;
use crate::tt::MultiIndex;

/// Per-pixel action encoded by one multi-index entry.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PixelMove {
    /// Index 0: `S <- max(0, S - eps)`.
    Desaturate,
    /// Index 1: leave the pixel alone.
    Keep,
    /// Index 2: `V <- min(1, V + eps)`.
    Brighten,
}

impl PixelMove {
    pub const COUNT: usize = 3;

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Self::Desaturate),
            1 => Some(Self::Keep),
            2 => Some(Self::Brighten),
            _ => None,
        }
    }
}

/// Symmetric amplitude grid `(2 n / (N - 1) - 1) * eps` for `n = 0..N`.
pub fn encode_grid(epsilon: f64, nodes: usize) -> Result<Vec<f64>, AttackError> {
    if nodes < 2 {
        return Err(AttackError::Config(format!("grid needs at least 2 nodes, got {nodes}")));
    }
    let last = (nodes - 1) as f64;
    Ok((0..nodes).map(|n| (2.0 * n as f64 / last - 1.0) * epsilon).collect())
}

/// RGB in `[0, 1]` to HSV with hue in degrees `[0, 360)` and S, V in `[0, 1]`.
pub fn rgb_to_hsv([r, g, b]: [f64; 3]) -> [f64; 3] {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let s = if max > 0.0 { delta / max } else { 0.0 };
    [if h >= 360.0 { h - 360.0 } else { h }, s, max]
}

/// Inverse of [`rgb_to_hsv`] (hexagonal cone).
pub fn hsv_to_rgb([h, s, v]: [f64; 3]) -> [f64; 3] {
    let c = v * s;
    let hp = h.rem_euclid(360.0) / 60.0;
    let x = c * (1.0 - (hp.rem_euclid(2.0) - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m].map(|ch| ch.clamp(0.0, 1.0))
}

/// Applies one move per selected pixel; everything else is copied bit-for-bit.
pub fn perturb(
    image: &Image,
    n: &MultiIndex,
    selection: &PixelSelection,
    epsilon: f64,
) -> Result<Image, AttackError> {
    if n.len() != selection.d_hat() {
        return Err(AttackError::Perturbation(format!(
            "multi-index has {} entries for {} selected pixels",
            n.len(),
            selection.d_hat()
        )));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(AttackError::Perturbation(format!("epsilon {epsilon} outside (0, 1]")));
    }
    let mut out = image.clone();
    for (&(row, col), &i) in selection.positions.iter().zip(n.as_slice()) {
        let mv = PixelMove::from_index(i)
            .ok_or_else(|| AttackError::Perturbation(format!("move index {i} outside 0..3")))?;
        if mv == PixelMove::Keep {
            continue;
        }
        let [h, s, v] = rgb_to_hsv(image.pixel(row, col));
        let hsv = match mv {
            PixelMove::Desaturate => [h, (s - epsilon).max(0.0), v],
            PixelMove::Brighten => [h, s, (v + epsilon).min(1.0)],
            PixelMove::Keep => unreachable!(),
        };
        out.set_pixel(row, col, hsv_to_rgb(hsv));
    }
    Ok(out)
}

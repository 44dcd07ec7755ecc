//! Image sources: the seeded synthetic "desk" dataset and labeled folders on disk.
//!
//! Desk images are 32x32 RGB. The background is dark gray noise; the class is
//! the position of the dominant (strongly saturated) reddish 6x6 patch. A second,
//! weakly saturated distractor patch of the same brightness sits at another
//! position, so the class is decided by which patch is more colorful rather
//! than by presence or brightness.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attack::hsv_to_rgb;
use crate::model::{Image, ModelError};

pub const DESK_SIZE: usize = 32;
pub const DESK_CLASSES: usize = 10;
const PATCH: usize = 6;
/// Top-left corners of the class patches: two rows of five.
const ANCHORS: [(usize, usize); DESK_CLASSES] = [
    (4, 1),
    (4, 7),
    (4, 13),
    (4, 19),
    (4, 25),
    (20, 1),
    (20, 7),
    (20, 13),
    (20, 19),
    (20, 25),
];

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub image: Image,
    pub label: usize,
}

/// `count` desk images; labels cycle through the classes, everything else comes from `seed`.
pub fn synthetic_desk_dataset(seed: u64, count: usize) -> Vec<LabeledImage> {
    (0..count)
        .map(|i| {
            let label = i % DESK_CLASSES;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(i as u64));
            LabeledImage {
                id: format!("desk_{seed}_{i:05}"),
                image: desk_image(label, &mut rng),
                label,
            }
        })
        .collect()
}

fn desk_image<R: Rng>(label: usize, rng: &mut R) -> Image {
    let n = DESK_SIZE;
    let mut data = Vec::with_capacity(n * n * 3);
    for _ in 0..n * n {
        let g: f64 = rng.gen_range(0.02..0.2);
        for _ in 0..3 {
            data.push(quantize(g + rng.gen_range(-0.02..0.02)));
        }
    }
    let mut img = Image::new(n, n, data).expect("background in range");

    let mut distractor = rng.gen_range(0..DESK_CLASSES - 1);
    if distractor >= label {
        distractor += 1;
    }
    let dominant = rng.gen_range(0.65..0.9);
    let gap = rng.gen_range(0.1..0.2);
    paint_patch(&mut img, ANCHORS[distractor], dominant - gap, rng);
    paint_patch(&mut img, ANCHORS[label], dominant, rng);
    img
}

fn paint_patch<R: Rng>(img: &mut Image, anchor: (usize, usize), saturation: f64, rng: &mut R) {
    // reddish hues only, so saturation is close to linear in the channels
    let hue = (rng.gen_range(-20.0..20.0) + 360.0) % 360.0;
    let dr = rng.gen_range(-2i64..=2);
    let dc = rng.gen_range(-1i64..=1);
    let r0 = (anchor.0 as i64 + dr).clamp(0, (DESK_SIZE - PATCH) as i64) as usize;
    let c0 = (anchor.1 as i64 + dc).clamp(0, (DESK_SIZE - PATCH) as i64) as usize;
    for r in r0..r0 + PATCH {
        for c in c0..c0 + PATCH {
            let v = rng.gen_range(0.6..0.95);
            let s = (saturation + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0);
            let rgb = hsv_to_rgb([hue, s, v]);
            img.set_pixel(r, c, rgb.map(quantize));
        }
    }
}

/// Snap to the 8-bit grid so synthetic images behave like decoded files.
fn quantize(x: f64) -> f64 {
    (x.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Loads `<dir>/<label>/<file>` for every integer-named subdirectory, in sorted order.
pub fn load_labeled_folder(dir: &Path) -> Result<Vec<LabeledImage>, ModelError> {
    let mut classes: Vec<(usize, std::path::PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_dir() {
            continue;
        }
        if let Some(label) = entry.file_name().to_str().and_then(|s| s.parse().ok()) {
            classes.push((label, entry.path()));
        }
    }
    classes.sort();
    let mut out = Vec::new();
    for (label, path) in classes {
        let mut files: Vec<_> = fs::read_dir(&path)?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                    Some("png" | "ppm" | "pnm")
                )
            })
            .collect();
        files.sort();
        for f in files {
            let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            out.push(LabeledImage {
                id: format!("{label}_{stem}"),
                image: Image::load(&f)?,
                label,
            });
        }
    }
    Ok(out)
}

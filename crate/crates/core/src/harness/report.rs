//! Report emission: four-panel figures per attacked image and a summary table.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use super::{artifact, read_records, CampaignSummary, HarnessError, RESULTS_FILE, SUMMARY_FILE};
use crate::model::Image;

/// Column order of `summary.csv`; mirrors [`CampaignSummary`].
pub const SUMMARY_COLUMNS: [&str; 6] = [
    "images_attempted",
    "images_skipped",
    "success_rate",
    "mean_l1",
    "mean_l2",
    "mean_queries",
];

const AMPLIFY: f64 = 10.0;
const GAP: u32 = 4;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReportFiles {
    pub panels: Vec<PathBuf>,
    pub summary_table: PathBuf,
    /// Human-readable notes about panels that could not be drawn.
    pub notices: Vec<String>,
}

/// `|adversarial - original| * factor`, clamped to `[0, 1]` per channel.
pub fn amplify_difference(original: &Image, adversarial: &Image, factor: f64) -> Result<Image, HarnessError> {
    if original.height() != adversarial.height() || original.width() != adversarial.width() {
        return Err(HarnessError::Results("original and adversarial differ in shape".into()));
    }
    let data = original
        .data()
        .iter()
        .zip(adversarial.data())
        .map(|(a, b)| ((b - a).abs() * factor).clamp(0.0, 1.0))
        .collect();
    Ok(Image::new(original.height(), original.width(), data)?)
}

/// Writes `panels/<id>_panel.png` for every record (original, attribution map,
/// amplified perturbation, adversarial; class labels under the first and last
/// panel) and `summary.csv`.
pub fn emit_report(results_dir: &Path) -> Result<ReportFiles, HarnessError> {
    let records = read_records(&results_dir.join(RESULTS_FILE))?;
    let mut files = ReportFiles::default();

    let summary_path = results_dir.join(SUMMARY_FILE);
    let summary: CampaignSummary = if summary_path.exists() {
        serde_json::from_str(&fs::read_to_string(&summary_path)?)
            .map_err(|e| HarnessError::Results(format!("{}: {e}", summary_path.display())))?
    } else {
        files
            .notices
            .push(format!("{SUMMARY_FILE} missing; summary rebuilt from records without skip counts"));
        CampaignSummary::from_records(&records, 0)
    };
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    let table = format!(
        "{}\n{},{},{},{},{},{}\n",
        SUMMARY_COLUMNS.join(","),
        summary.images_attempted,
        summary.images_skipped,
        opt(summary.success_rate),
        opt(summary.mean_l1),
        opt(summary.mean_l2),
        opt(summary.mean_queries),
    );
    files.summary_table = results_dir.join("summary.csv");
    fs::write(&files.summary_table, table)?;

    let panel_dir = results_dir.join("panels");
    fs::create_dir_all(&panel_dir)?;
    for r in &records {
        let load = |kind: &str| {
            let p = artifact(results_dir, &r.image, kind);
            Image::load(&p).map_err(|e| format!("{}: {e}", p.display()))
        };
        let adv_path = results_dir.join(&r.adversarial);
        let parts = (
            load("orig"),
            load("attr"),
            Image::load(&adv_path).map_err(|e| format!("{}: {e}", adv_path.display())),
        );
        let (orig, attr, adv) = match parts {
            (Ok(o), Ok(a), Ok(v)) => (o, a, v),
            (o, a, v) => {
                let missing: Vec<String> = [o.err(), a.err(), v.err()].into_iter().flatten().collect();
                files
                    .notices
                    .push(format!("panel for {} omitted: {}", r.image, missing.join("; ")));
                continue;
            }
        };
        let diff = amplify_difference(&orig, &adv, AMPLIFY)?;
        let labels = [Some(r.original_class), Some(r.original_class), None, Some(r.adversarial_class)];
        let panel = compose_panel(&[&orig, &attr, &diff, &adv], &labels);
        let path = panel_dir.join(format!("{}_panel.png", r.image));
        panel
            .save(&path)
            .map_err(|e| HarnessError::Results(format!("{}: {e}", path.display())))?;
        files.panels.push(path);
    }
    Ok(files)
}

fn compose_panel(tiles: &[&Image], labels: &[Option<usize>]) -> RgbImage {
    let h = tiles[0].height() as u32;
    let w = tiles[0].width() as u32;
    let scale = (128 / h.max(w)).max(1);
    let (th, tw) = (h * scale, w * scale);
    let label_h = 5 * 2 + 2 * GAP;
    let n = tiles.len() as u32;
    let mut out = RgbImage::from_pixel(n * tw + (n + 1) * GAP, th + 2 * GAP + label_h, Rgb([255, 255, 255]));
    for (t, tile) in tiles.iter().enumerate() {
        let x0 = GAP + t as u32 * (tw + GAP);
        let bytes = tile.to_rgb8();
        for y in 0..th {
            for x in 0..tw {
                let o = (((y / scale) * w + x / scale) * 3) as usize;
                out.put_pixel(x0 + x, GAP + y, Rgb([bytes[o], bytes[o + 1], bytes[o + 2]]));
            }
        }
        if let Some(Some(label)) = labels.get(t) {
            draw_number(&mut out, *label, x0, th + 2 * GAP, 2);
        }
    }
    out
}

/// 3x5 bitmap digits, one row per `u8` (low three bits, MSB on the left).
const DIGITS: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111],
    [0b010, 0b110, 0b010, 0b010, 0b111],
    [0b111, 0b001, 0b111, 0b100, 0b111],
    [0b111, 0b001, 0b111, 0b001, 0b111],
    [0b101, 0b101, 0b111, 0b001, 0b001],
    [0b111, 0b100, 0b111, 0b001, 0b111],
    [0b111, 0b100, 0b111, 0b101, 0b111],
    [0b111, 0b001, 0b010, 0b010, 0b010],
    [0b111, 0b101, 0b111, 0b101, 0b111],
    [0b111, 0b101, 0b111, 0b001, 0b111],
];

fn draw_number(img: &mut RgbImage, value: usize, x0: u32, y0: u32, scale: u32) {
    for (k, ch) in value.to_string().bytes().enumerate() {
        let glyph = DIGITS[(ch - b'0') as usize];
        let gx = x0 + k as u32 * 4 * scale;
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3u32 {
                if bits & (0b100 >> col) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (x, y) = (gx + col * scale + dx, y0 + row as u32 * scale + dy);
                        if x < img.width() && y < img.height() {
                            img.put_pixel(x, y, Rgb([0, 0, 0]));
                        }
                    }
                }
            }
        }
    }
}

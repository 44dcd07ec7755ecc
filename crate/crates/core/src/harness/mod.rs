//! Campaigns: attack every image of a source, persist per-image records and a
//! summary, and render report panels from the results directory.
//!
//! Layout of an output directory:
//!
//! * `results.jsonl`: one [`AttackRecord`] per attempted image, in image order;
//! * `summary.json`: the [`CampaignSummary`];
//! * `<id>_orig.png`, `<id>_attr.png`, `<id>_adv.png`: original image,
//!   attribution map and adversarial image for every attempted image.

mod config;
mod metrics;
mod report;
mod selftest;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{CampaignSpec, EndpointSpec, ImageSource, SeedPolicy};
pub use metrics::{compute_norms, Norms};
pub use report::{amplify_difference, emit_report, ReportFiles, SUMMARY_COLUMNS};
pub use selftest::{run_selftest, SelfCheck};

use crate::attack::{tetradat_detailed, AttackConfig, AttackError, AttackOutcome};
use crate::dataset::{load_labeled_folder, synthetic_desk_dataset, LabeledImage};
use crate::model::{BlackBox, BridgeEndpoint, BuiltinClassifier, Differentiable, InProcess, ModelError};

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model error: {0}")]
    Model(#[from] ModelError),
    #[error("attack on {image} failed: {source}")]
    Attack {
        image: String,
        #[source]
        source: AttackError,
    },
    #[error("bad results file: {0}")]
    Results(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of `results.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackRecord {
    pub image: String,
    pub success: bool,
    /// File name of the adversarial image, relative to the results directory.
    pub adversarial: String,
    pub original_class: usize,
    pub adversarial_class: usize,
    pub final_epsilon: f64,
    pub queries: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub images_attempted: usize,
    /// Images misclassified by the attacked or the auxiliary model.
    pub images_skipped: usize,
    /// `None` when nothing was attempted.
    pub success_rate: Option<f64>,
    /// Averaged over successful attacks only.
    pub mean_l1: Option<f64>,
    pub mean_l2: Option<f64>,
    /// Averaged over all attempted images.
    pub mean_queries: Option<f64>,
}

impl CampaignSummary {
    pub fn from_records(records: &[AttackRecord], images_skipped: usize) -> Self {
        let attempted = records.len();
        let wins: Vec<&AttackRecord> = records.iter().filter(|r| r.success).collect();
        let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| {
            (n > 0).then(|| xs.sum::<f64>() / n as f64)
        };
        Self {
            images_attempted: attempted,
            images_skipped,
            success_rate: (attempted > 0).then(|| wins.len() as f64 / attempted as f64),
            mean_l1: mean(&mut wins.iter().map(|r| r.l1), wins.len()),
            mean_l2: mean(&mut wins.iter().map(|r| r.l2), wins.len()),
            mean_queries: mean(&mut records.iter().map(|r| r.queries as f64), attempted),
        }
    }
}

/// A model usable both as the attacked black box and as the attribution model.
pub trait Endpoint: BlackBox + Differentiable {}
impl<T: BlackBox + Differentiable> Endpoint for T {}

pub fn open_endpoint(spec: &EndpointSpec) -> Result<Box<dyn Endpoint>, HarnessError> {
    Ok(match spec {
        EndpointSpec::Builtin { weights } => Box::new(InProcess::new(
            BuiltinClassifier::load(weights)
                .map_err(|e| HarnessError::Config(format!("{}: {e}", weights.display())))?,
        )),
        EndpointSpec::Bridge { command } => Box::new(BridgeEndpoint::spawn(command)?),
    })
}

pub fn load_images(source: &ImageSource) -> Result<Vec<LabeledImage>, HarnessError> {
    Ok(match source {
        ImageSource::Synthetic { seed, count } => synthetic_desk_dataset(*seed, *count),
        ImageSource::Directory { path, limit } => {
            let mut items = load_labeled_folder(path)?;
            if let Some(n) = limit {
                items.truncate(*n);
            }
            items
        }
    })
}

pub fn read_records(path: &Path) -> Result<Vec<AttackRecord>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    BufReader::new(File::open(path)?)
        .lines()
        .filter(|l| l.as_ref().map_or(true, |s| !s.trim().is_empty()))
        .map(|l| {
            let l = l?;
            serde_json::from_str(&l).map_err(|e| HarnessError::Results(format!("{}: {e}", path.display())))
        })
        .collect()
}

enum ImageOutcome {
    Skipped,
    Attacked(Box<AttackOutcome>),
}

/// Attacks every image of the campaign and writes records, artifacts and the summary.
///
/// Images that already have a record in the output directory are not attacked
/// again. Images misclassified by either model are skipped and counted. A
/// failing endpoint aborts the campaign after `retries` extra attempts;
/// records written so far stay on disk.
pub fn run_campaign(spec: &CampaignSpec) -> Result<CampaignSummary, HarnessError> {
    spec.validate()?;
    let attacked = open_endpoint(&spec.attacked)?;
    let auxiliary = open_endpoint(&spec.auxiliary)?;
    let images = load_images(&spec.images)?;
    fs::create_dir_all(&spec.output_dir)?;

    let results_path = spec.output_dir.join(RESULTS_FILE);
    let existing: HashMap<String, AttackRecord> = read_records(&results_path)?
        .into_iter()
        .map(|r| (r.image.clone(), r))
        .collect();
    let mut out = OpenOptions::new().create(true).append(true).open(&results_path)?;

    let mut records = Vec::new();
    let mut skipped = 0usize;
    let pending: Vec<(usize, &LabeledImage)> = images
        .iter()
        .enumerate()
        .filter(|(_, s)| !existing.contains_key(&s.id))
        .collect();
    let mut outcomes: HashMap<usize, ImageOutcome> = HashMap::new();

    for wave in pending.chunks(spec.workers) {
        let results: Vec<(usize, Result<ImageOutcome, HarnessError>)> = std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|&(pos, sample)| {
                    let (attacked, auxiliary) = (&*attacked, &*auxiliary);
                    scope.spawn(move || (pos, attack_one(spec, attacked, auxiliary, pos, sample)))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("attack worker panicked")).collect()
        });
        for (pos, res) in results {
            let outcome = res?;
            if let ImageOutcome::Attacked(o) = &outcome {
                let record = persist(&spec.output_dir, &images[pos], o)?;
                writeln!(out, "{}", serde_json::to_string(&record).expect("record serializes"))?;
                out.flush()?;
            }
            outcomes.insert(pos, outcome);
        }
    }

    for (pos, sample) in images.iter().enumerate() {
        if let Some(r) = existing.get(&sample.id) {
            records.push(r.clone());
            continue;
        }
        match outcomes.get(&pos) {
            Some(ImageOutcome::Skipped) => skipped += 1,
            Some(ImageOutcome::Attacked(o)) => records.push(record_for(sample, o)),
            None => unreachable!("every pending image has an outcome"),
        }
    }

    let summary = CampaignSummary::from_records(&records, skipped);
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(spec.output_dir.join(SUMMARY_FILE), text)?;
    Ok(summary)
}

fn attack_one(
    spec: &CampaignSpec,
    attacked: &dyn Endpoint,
    auxiliary: &dyn Endpoint,
    position: usize,
    sample: &LabeledImage,
) -> Result<ImageOutcome, HarnessError> {
    let config = AttackConfig {
        protes: crate::protes::ProtesConfig {
            seed: spec.seed_policy.seed_for(spec.attack.protes.seed, position),
            ..spec.attack.protes.clone()
        },
        ..spec.attack.clone()
    };
    let mut attempt = 0;
    loop {
        let run = || -> Result<ImageOutcome, AttackError> {
            let pa = BlackBox::query(attacked, &sample.image)?;
            let pb = auxiliary.predict(&sample.image)?;
            if pa.top_class != sample.label || pb.top_class != sample.label {
                return Ok(ImageOutcome::Skipped);
            }
            Ok(ImageOutcome::Attacked(Box::new(tetradat_detailed(
                attacked,
                auxiliary,
                &sample.image,
                &config,
                false,
            )?)))
        };
        match run() {
            Ok(o) => return Ok(o),
            Err(e) if e.is_retryable() && attempt < spec.retries => attempt += 1,
            Err(source) => {
                return Err(HarnessError::Attack {
                    image: sample.id.clone(),
                    source,
                })
            }
        }
    }
}

fn artifact(dir: &Path, id: &str, kind: &str) -> PathBuf {
    dir.join(format!("{id}_{kind}.png"))
}

fn record_for(sample: &LabeledImage, o: &AttackOutcome) -> AttackRecord {
    let r = &o.result;
    AttackRecord {
        image: sample.id.clone(),
        success: r.success,
        adversarial: format!("{}_adv.png", sample.id),
        original_class: r.original_class,
        adversarial_class: r.adversarial_class,
        final_epsilon: r.final_epsilon,
        queries: r.queries,
        l1: r.l1,
        l2: r.l2,
        linf: r.linf,
    }
}

fn persist(dir: &Path, sample: &LabeledImage, o: &AttackOutcome) -> Result<AttackRecord, HarnessError> {
    sample.image.save(&artifact(dir, &sample.id, "orig"))?;
    o.result.adversarial.save(&artifact(dir, &sample.id, "adv"))?;
    o.attribution
        .save_png(&artifact(dir, &sample.id, "attr"))
        .map_err(|e| HarnessError::Results(e.to_string()))?;
    Ok(record_for(sample, o))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(success: bool, l1: f64, queries: usize) -> AttackRecord {
        AttackRecord {
            image: "x".into(),
            success,
            adversarial: "x_adv.png".into(),
            original_class: 0,
            adversarial_class: usize::from(success),
            final_epsilon: 1.0,
            queries,
            l1,
            l2: l1 / 2.0,
            linf: 1.0,
        }
    }

    #[test]
    fn empty_summary_is_null() {
        let s = CampaignSummary::from_records(&[], 4);
        assert_eq!(s.images_attempted, 0);
        assert_eq!(s.images_skipped, 4);
        assert_eq!(s.success_rate, None);
        let json = serde_json::to_value(&s).unwrap();
        assert!(json["success_rate"].is_null());
    }

    #[test]
    fn means_over_successes() {
        let rs = [record(true, 10.0, 100), record(false, 99.0, 300), record(true, 20.0, 200)];
        let s = CampaignSummary::from_records(&rs, 1);
        assert_eq!(s.success_rate, Some(2.0 / 3.0));
        assert_eq!(s.mean_l1, Some(15.0));
        assert_eq!(s.mean_l2, Some(7.5));
        assert_eq!(s.mean_queries, Some(200.0));
    }
}

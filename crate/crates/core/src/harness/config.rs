//! Campaign configuration files (TOML).
//!
//! ```toml
//! output_dir = "results"
//! workers = 1          # images attacked concurrently
//! retries = 2          # extra attempts after a transport failure
//! seed_policy = "per_image"
//!
//! [images]
//! source = "synthetic" # or "directory" with `path = "..."` (and optional `limit`)
//! seed = 2024
//! count = 100
//!
//! [attacked]
//! kind = "builtin"     # or "bridge" with `command = ["python3", "serve.py", "alexnet"]`
//! weights = "../crates/core/assets/desk_model.nnw"
//!
//! [auxiliary]
//! kind = "builtin"
//! weights = "../crates/core/assets/desk_model.nnw"
//!
//! [attack]
//! d_hat = 102
//! epsilon0 = 1.0
//! budget = 10000
//! attribution_steps = 15
//!
//! [attack.protes]
//! candidates = 100
//! elites = 10
//! ascent_steps = 100
//! learning_rate = 0.01
//! rank = 5
//! seed = 0
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::attack::AttackConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub output_dir: PathBuf,
    pub images: ImageSource,
    pub attacked: EndpointSpec,
    pub auxiliary: EndpointSpec,
    pub attack: AttackConfig,
    #[serde(default)]
    pub seed_policy: SeedPolicy,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
}

fn default_workers() -> usize {
    1
}
fn default_retries() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImageSource {
    Synthetic {
        seed: u64,
        count: usize,
    },
    /// `<path>/<label>/<image>` folders.
    Directory {
        path: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EndpointSpec {
    Builtin { weights: PathBuf },
    Bridge { command: Vec<String> },
}

/// How the optimizer seed is chosen for each image.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// `attack.protes.seed + image position`.
    #[default]
    PerImage,
    /// `attack.protes.seed` for every image.
    Fixed,
}

impl SeedPolicy {
    pub fn seed_for(self, base: u64, position: usize) -> u64 {
        match self {
            SeedPolicy::PerImage => base.wrapping_add(position as u64),
            SeedPolicy::Fixed => base,
        }
    }
}

impl CampaignSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.attack
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.workers == 0 {
            return Err(HarnessError::Config("workers must be at least 1".into()));
        }
        for ep in [&self.attacked, &self.auxiliary] {
            if let EndpointSpec::Bridge { command } = ep {
                if command.is_empty() {
                    return Err(HarnessError::Config("bridge command is empty".into()));
                }
            }
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let ImageSource::Directory { path, .. } = &mut self.images {
            fix(path);
        }
        for ep in [&mut self.attacked, &mut self.auxiliary] {
            if let EndpointSpec::Builtin { weights } = ep {
                fix(weights);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
output_dir = "out"

[images]
source = "synthetic"
seed = 7
count = 3

[attacked]
kind = "builtin"
weights = "model.nnw"

[auxiliary]
kind = "bridge"
command = ["python3", "serve.py", "vgg19"]

[attack]
d_hat = 10
budget = 500

[attack.protes]
rank = 3
"#;

    #[test]
    fn parses_with_defaults() {
        let spec = CampaignSpec::from_toml(EXAMPLE).unwrap();
        assert_eq!(spec.images, ImageSource::Synthetic { seed: 7, count: 3 });
        assert_eq!(spec.attack.epsilon0, 1.0);
        assert_eq!(spec.attack.attribution_steps, 15);
        assert_eq!(spec.attack.protes.candidates, 100);
        assert_eq!(spec.attack.protes.rank, 3);
        assert_eq!((spec.workers, spec.retries), (1, 2));
        assert_eq!(spec.seed_policy, SeedPolicy::PerImage);
    }

    #[test]
    fn resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, EXAMPLE).unwrap();
        let spec = CampaignSpec::from_file(&path).unwrap();
        assert_eq!(spec.output_dir, dir.path().join("out"));
        assert_eq!(
            spec.attacked,
            EndpointSpec::Builtin {
                weights: dir.path().join("model.nnw")
            }
        );
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(CampaignSpec::from_toml("output_dir = 3").is_err());
        assert!(CampaignSpec::from_toml(&EXAMPLE.replace("budget = 500", "budget = 50")).is_err());
        assert!(CampaignSpec::from_toml(&EXAMPLE.replace("d_hat = 10", "d_hat = 10\nbogus = 1")).is_err());
        assert!(CampaignSpec::from_toml(&format!("workers = 0\n{EXAMPLE}")).is_err());
    }

    #[test]
    fn seed_policies() {
        assert_eq!(SeedPolicy::PerImage.seed_for(10, 3), 13);
        assert_eq!(SeedPolicy::Fixed.seed_for(10, 3), 10);
    }
}

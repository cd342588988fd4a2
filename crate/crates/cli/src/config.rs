use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use rwre::theorems::CHECKS;
use rwre::EnvParams;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvParams,
    /// Replaces the seed of every environment when present.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Relative paths resolve against the config file's directory.
    pub output_dir: PathBuf,
    #[serde(default)]
    pub jobs: Vec<Job>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Job {
    pub id: String,
    pub check: String,
    /// Check configuration, including its Monte Carlo budget.
    #[serde(default)]
    pub geometry: Value,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    /// Per-job environment; defaults to the top-level one.
    #[serde(default)]
    pub env: Option<EnvParams>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        if cfg.output_dir.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        let mut seen = BTreeSet::new();
        for job in &self.jobs {
            if job.id.is_empty() || job.id.contains(['/', '\\']) || job.id.starts_with('.') {
                return Err(format!("job id `{}` is not a plain file name", job.id));
            }
            if !seen.insert(job.id.as_str()) {
                return Err(format!("duplicate job id `{}`", job.id));
            }
            if !CHECKS.contains(&job.check.as_str()) {
                return Err(format!("job `{}`: unknown check `{}`", job.id, job.check));
            }
            if !(job.geometry.is_null() || job.geometry.is_object()) {
                return Err(format!("job `{}`: geometry must be an object", job.id));
            }
        }
        for env in std::iter::once(&self.env).chain(self.jobs.iter().filter_map(|j| j.env.as_ref())) {
            env.validate().map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn job_env(&self, job: &Job) -> EnvParams {
        let env = job.env.as_ref().unwrap_or(&self.env);
        match self.seed {
            Some(s) => env.with_seed(s),
            None => env.clone(),
        }
    }
}

//! Flat JSON run configuration. Every field can be overridden by a flag.

use std::path::{Path, PathBuf};

use latentrec::{DuplicatePolicy, FillStrategy, InputFormat, OutOfRangePolicy, RatingScale};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub scale: Option<String>,
    pub duplicates: Option<DuplicatePolicy>,
    pub out_of_range: Option<OutOfRangePolicy>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fraction: Option<f64>,

    pub algorithms: Option<Vec<String>>,
    pub fills: Option<Vec<String>>,
    pub components: Option<Vec<usize>>,
    pub parallel: Option<bool>,
    pub timings: Option<bool>,

    pub algorithm: Option<String>,
    pub fill: Option<String>,
    pub rank: Option<usize>,

    pub nmf_max_iterations: Option<usize>,
    pub nmf_tolerance: Option<f64>,
    pub nmf_inner_updates: Option<usize>,
    pub svdi_threshold: Option<f64>,
    pub svdi_max_iterations: Option<usize>,
    pub sgd_alpha: Option<f64>,
    pub sgd_lambda: Option<f64>,
    pub sgd_epochs: Option<usize>,

    pub model: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub k: Option<usize>,
    pub kmeans_max_iterations: Option<usize>,
    pub kmeans_restarts: Option<usize>,

    pub user: Option<String>,
    pub n: Option<usize>,
    pub exclude_seen: Option<bool>,
    pub min_support: Option<usize>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

pub fn parse_scale(s: &str) -> Result<RatingScale, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("--scale {s:?}: {e}")))
}

pub fn parse_fill(s: &str) -> Result<FillStrategy, CliError> {
    s.parse().map_err(|e| CliError::Usage(format!("{e}")))
}

/// Accepts `5,10,15`, `2..30` (inclusive) or a mix such as `2..5,10`.
pub fn parse_components(s: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let bad = || format!("bad component list entry {part:?}");
        match part.split_once("..") {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                out.extend(lo..=hi);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err("empty component list".into());
    }
    Ok(out)
}

pub fn parse_list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(String::from).collect()
}

//! Run configuration: a flat key-value text file with one section per
//! pipeline stage. No environment overrides; everything a run needs is in
//! the file (plus the `--seed` / `--out` flags, which exist so sweeps over
//! seeds do not need one file each).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use couponopt_core::evaluation::Strategy;
use couponopt_core::uplift::LearnerKind;
use couponopt_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,

    // [data]
    pub synthetic: bool,
    pub n_customers: usize,
    pub noise_scale: f64,
    pub arm_probability: Option<f64>,
    pub dataset_path: Option<PathBuf>,
    pub catalog_path: Option<PathBuf>,

    // [uplift]
    pub learner: LearnerKind,
    pub tune: bool,

    // [segment]
    pub k_grid: Vec<usize>,
    pub n_bootstrap: usize,

    // [allocate]
    pub strategies: Vec<String>,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,

    // [sweep]
    pub n_budgets: usize,
    pub budget_min_fraction: f64,
    pub budget_max_fraction: f64,
    pub hyper_sweep: bool,

    // [cv]
    pub cv_enabled: bool,
    pub lambda_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    pub beta_grid: Vec<f64>,

    /// Raw file contents, hashed into the manifest.
    pub raw: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("run-out"),
            synthetic: true,
            n_customers: 70_000,
            noise_scale: 1.0,
            arm_probability: None,
            dataset_path: None,
            catalog_path: None,
            learner: LearnerKind::Gbt,
            tune: false,
            k_grid: vec![10],
            n_bootstrap: 200,
            strategies: vec!["random".into(), "mck".into(), "mvo".into(), "ro".into()],
            lambda: 0.0,
            alpha: 0.5,
            beta: 0.8,
            lower: None,
            upper: None,
            n_budgets: 11,
            budget_min_fraction: 0.4,
            budget_max_fraction: 1.6,
            hyper_sweep: true,
            cv_enabled: false,
            lambda_grid: vec![
                0.0, 0.001, 0.002, 0.003, 0.004, 0.005, 0.006, 0.007, 0.008, 0.009, 0.010,
            ],
            alpha_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            beta_grid: vec![0.0, 0.2, 0.4, 0.6, 0.8],
            raw: String::new(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| {
            Error::Validation(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&raw)
    }

    pub fn parse(raw: &str) -> Result<Self> {
        let entries = parse_sections(raw)?;
        let mut cfg = RunConfig { raw: raw.to_string(), ..RunConfig::default() };

        let get = |section: &str, key: &str| -> Option<&String> {
            entries.get(&(section.to_string(), key.to_string()))
        };

        if let Some(v) = get("run", "seed") {
            cfg.seed = parse_value(v, "run.seed")?;
        }
        if let Some(v) = get("run", "out") {
            cfg.out_dir = PathBuf::from(v);
        }

        if let Some(v) = get("data", "synthetic") {
            cfg.synthetic = parse_bool(v, "data.synthetic")?;
        }
        if let Some(v) = get("data", "n_customers") {
            cfg.n_customers = parse_value(v, "data.n_customers")?;
        }
        if let Some(v) = get("data", "noise_scale") {
            cfg.noise_scale = parse_value(v, "data.noise_scale")?;
        }
        if let Some(v) = get("data", "arm_probability") {
            cfg.arm_probability = Some(parse_value(v, "data.arm_probability")?);
        }
        if let Some(v) = get("data", "dataset") {
            cfg.dataset_path = Some(PathBuf::from(v));
        }
        if let Some(v) = get("data", "catalog") {
            cfg.catalog_path = Some(PathBuf::from(v));
        }

        if let Some(v) = get("uplift", "learner") {
            cfg.learner = v.parse()?;
        }
        if let Some(v) = get("uplift", "tune") {
            cfg.tune = parse_bool(v, "uplift.tune")?;
        }

        if let Some(v) = get("segment", "k_grid") {
            cfg.k_grid = parse_list(v, "segment.k_grid")?;
        }
        if let Some(v) = get("segment", "bootstrap") {
            cfg.n_bootstrap = parse_value(v, "segment.bootstrap")?;
        }

        if let Some(v) = get("allocate", "strategies") {
            cfg.strategies = v.split_whitespace().map(str::to_string).collect();
        }
        if let Some(v) = get("allocate", "lambda") {
            cfg.lambda = parse_value(v, "allocate.lambda")?;
        }
        if let Some(v) = get("allocate", "alpha") {
            cfg.alpha = parse_value(v, "allocate.alpha")?;
        }
        if let Some(v) = get("allocate", "beta") {
            cfg.beta = parse_value(v, "allocate.beta")?;
        }
        if let Some(v) = get("allocate", "lower") {
            cfg.lower = Some(parse_value(v, "allocate.lower")?);
        }
        if let Some(v) = get("allocate", "upper") {
            cfg.upper = Some(parse_value(v, "allocate.upper")?);
        }

        if let Some(v) = get("sweep", "budgets") {
            cfg.n_budgets = parse_value(v, "sweep.budgets")?;
        }
        if let Some(v) = get("sweep", "min") {
            cfg.budget_min_fraction = parse_value(v, "sweep.min")?;
        }
        if let Some(v) = get("sweep", "max") {
            cfg.budget_max_fraction = parse_value(v, "sweep.max")?;
        }
        if let Some(v) = get("sweep", "hyper_sweep") {
            cfg.hyper_sweep = parse_bool(v, "sweep.hyper_sweep")?;
        }

        if let Some(v) = get("cv", "enabled") {
            cfg.cv_enabled = parse_bool(v, "cv.enabled")?;
        }
        if let Some(v) = get("cv", "lambda_grid") {
            cfg.lambda_grid = parse_list(v, "cv.lambda_grid")?;
        }
        if let Some(v) = get("cv", "alpha_grid") {
            cfg.alpha_grid = parse_list(v, "cv.alpha_grid")?;
        }
        if let Some(v) = get("cv", "beta_grid") {
            cfg.beta_grid = parse_list(v, "cv.beta_grid")?;
        }

        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_grid.is_empty() {
            return Err(Error::Validation("segment.k_grid must be non-empty".into()));
        }
        if self.n_budgets == 0 {
            return Err(Error::Validation("sweep.budgets must be at least 1".into()));
        }
        if self.budget_min_fraction > self.budget_max_fraction {
            return Err(Error::Validation("sweep.min must not exceed sweep.max".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Validation("allocate.strategies must be non-empty".into()));
        }
        for s in &self.strategies {
            if !matches!(s.as_str(), "random" | "mck" | "mvo" | "ro") {
                return Err(Error::Validation(format!("unknown strategy {s:?}")));
            }
        }
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) if lo > hi => {
                return Err(Error::Validation("allocate.lower exceeds allocate.upper".into()))
            }
            (Some(_), None) | (None, Some(_)) => {
                return Err(Error::Validation(
                    "allocate.lower and allocate.upper must be set together".into(),
                ))
            }
            _ => {}
        }
        if !self.synthetic {
            let Some(ds) = &self.dataset_path else {
                return Err(Error::Validation("data.dataset required when synthetic = false".into()));
            };
            if !ds.exists() {
                return Err(Error::Validation(format!("dataset {} does not exist", ds.display())));
            }
        }
        if let Some(catalog) = &self.catalog_path {
            if !catalog.exists() {
                return Err(Error::Validation(format!(
                    "catalog {} does not exist",
                    catalog.display()
                )));
            }
        } else if !self.synthetic {
            return Err(Error::Validation("data.catalog required when synthetic = false".into()));
        }
        if self.cv_enabled
            && (self.lambda_grid.is_empty() || self.alpha_grid.is_empty() || self.beta_grid.is_empty())
        {
            return Err(Error::Validation("cv grids must be non-empty".into()));
        }
        Ok(())
    }

    pub fn bounds(&self) -> Option<(f64, f64)> {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            _ => None,
        }
    }

    /// Budget fractions of `|I| x mean coupon cost`, evenly spaced.
    pub fn budget_fractions(&self) -> Vec<f64> {
        if self.n_budgets == 1 {
            return vec![self.budget_min_fraction];
        }
        (0..self.n_budgets)
            .map(|i| {
                self.budget_min_fraction
                    + (self.budget_max_fraction - self.budget_min_fraction) * i as f64
                        / (self.n_budgets - 1) as f64
            })
            .collect()
    }

    pub fn strategy_list(&self) -> Vec<Strategy> {
        self.strategies
            .iter()
            .map(|s| match s.as_str() {
                "random" => Strategy::Random,
                "mck" => Strategy::Mck,
                "mvo" => Strategy::Mvo { lambda: self.lambda },
                "ro" => Strategy::Ro { alpha: self.alpha, beta: self.beta },
                other => unreachable!("validated strategy {other}"),
            })
            .collect()
    }

    /// FNV-1a hash of the raw config text, for the manifest.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in self.raw.as_bytes() {
            h ^= u64::from(*byte);
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

type SectionMap = BTreeMap<(String, String), String>;

fn parse_sections(raw: &str) -> Result<SectionMap> {
    let mut entries = SectionMap::new();
    let mut section = String::new();
    for (lineno, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            section = name.trim().to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Validation(format!(
                "config line {}: expected `key = value`, got {line:?}",
                lineno + 1
            )));
        };
        entries.insert(
            (section.clone(), key.trim().to_string()),
            value.trim().to_string(),
        );
    }
    Ok(entries)
}

fn parse_value<T: std::str::FromStr>(value: &str, key: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Validation(format!("cannot parse {key} from {value:?}")))
}

fn parse_bool(value: &str, key: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::Validation(format!("cannot parse {key} from {other:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(value: &str, key: &str) -> Result<Vec<T>> {
    let parts: Vec<&str> = value.split([' ', ',']).filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        return Err(Error::Validation(format!("{key} must list at least one value")));
    }
    parts.into_iter().map(|p| parse_value(p, key)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let raw = "\
[run]
seed = 7
out = /tmp/x

[data]
synthetic = true
n_customers = 1400

[uplift]
learner = ridge
tune = false

[segment]
k_grid = 5 10
bootstrap = 50

[allocate]
strategies = random ro
alpha = 0.5
beta = 0.8
lower = 0.05
upper = 0.50

[sweep]
budgets = 3
min = 0.4
max = 1.6
";
        let cfg = RunConfig::parse(raw).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.k_grid, vec![5, 10]);
        assert_eq!(cfg.bounds(), Some((0.05, 0.50)));
        assert_eq!(cfg.budget_fractions(), vec![0.4, 1.0, 1.6]);
        assert_eq!(cfg.strategies, vec!["random", "ro"]);
        assert_eq!(cfg.config_hash().len(), 16);
    }

    #[test]
    fn rejects_bad_lines_and_values() {
        assert!(RunConfig::parse("[run]\nseed 7\n").is_err());
        assert!(RunConfig::parse("[run]\nseed = x\n").is_err());
        assert!(RunConfig::parse("[allocate]\nstrategies = quantum\n").is_err());
        assert!(RunConfig::parse("[allocate]\nlower = 0.5\n").is_err());
        assert!(RunConfig::parse("[data]\nsynthetic = false\n").is_err());
    }

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }
}

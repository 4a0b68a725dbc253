//! Sectioned key=value experiment configs.
//!
//! ```text
//! [problem]
//! preset = quartic-10d     # required
//! n = 40000                # optional overrides
//! sigma = 0.1
//! clamp_radius = 8.2
//! problem_seed = 0
//!
//! [budget]
//! epsilon = 2.0            # required
//! delta = 0.01
//! batch = 1024
//!
//! [run]
//! mode = no-clip
//! seeds = 1,2,3
//! out = runs
//! coords = true
//! no_nsg = false
//! delta_prehalved = false
//!
//! [constants]
//! c_escape_iters = 4
//! ```
//!
//! Unknown keys, duplicate keys and malformed values are parse errors carrying
//! the offending line number.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::optimizer::Mode;
use crate::privacy::{Constants, PrivacyBudget};
use crate::testbed::{preset, PresetOverrides, TestbedProblem};

/// A fully parsed experiment configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub preset: String,
    pub overrides: PresetOverrides,
    pub problem_seed: u64,
    pub epsilon: f64,
    pub delta: f64,
    /// Batch size; defaults to min(100, n) at problem build time.
    pub batch: Option<usize>,
    pub mode: Mode,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Whether traces include coordinate columns; defaults to dim <= 50.
    pub coords: Option<bool>,
    /// Disable the gradient-concentration assumption (adds the extra
    /// Gaussian floor).
    pub no_nsg: bool,
    /// Spend delta/2 in the formulas so the end-to-end guarantee is
    /// (epsilon, delta) rather than (epsilon, 2 delta).
    pub delta_prehalved: bool,
    pub constants: Constants,
}

impl ExperimentConfig {
    /// Builds the configured testbed problem.
    pub fn build_problem(&self) -> Result<TestbedProblem> {
        preset(&self.preset, &self.overrides, self.problem_seed)
    }

    /// The delta actually spent in calibration formulas.
    pub fn effective_delta(&self) -> f64 {
        if self.delta_prehalved {
            self.delta / 2.0
        } else {
            self.delta
        }
    }

    /// Budget with the default batch rule applied.
    pub fn budget_for(&self, problem: &TestbedProblem) -> Result<PrivacyBudget> {
        let n = problem.spec().n_components;
        let batch = self.batch.unwrap_or_else(|| n.min(100));
        PrivacyBudget::new(self.epsilon, self.effective_delta(), batch)
    }
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| err(line, format!("{key}: expected a number, got '{v}'")))
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .map_err(|_| err(line, format!("{key}: expected an integer, got '{v}'")))
}

fn parse_u64(line: usize, key: &str, v: &str) -> Result<u64> {
    v.parse::<u64>()
        .map_err(|_| err(line, format!("{key}: expected an integer, got '{v}'")))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(err(line, format!("{key}: expected true/false, got '{v}'"))),
    }
}

/// Parses the sectioned key=value config format.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut section = String::new();
    let mut seen: Vec<(String, String)> = Vec::new();

    let mut preset_id: Option<String> = None;
    let mut overrides = PresetOverrides::default();
    let mut problem_seed = 0u64;
    let mut epsilon: Option<f64> = None;
    let mut delta = 0.01;
    let mut batch: Option<usize> = None;
    let mut mode = Mode::NoClip;
    let mut seeds: Vec<u64> = vec![0];
    let mut out_dir = PathBuf::from("out");
    let mut coords: Option<bool> = None;
    let mut no_nsg = false;
    let mut delta_prehalved = false;
    let mut constants = Constants::default();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| err(line_no, "unterminated section header"))?
                .trim();
            match name {
                "problem" | "budget" | "run" | "constants" => section = name.to_string(),
                other => return Err(err(line_no, format!("unknown section '[{other}]'"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(line_no, format!("expected 'key = value', got '{line}'")))?;
        let key = key.trim();
        let value = value.trim();
        if section.is_empty() {
            return Err(err(
                line_no,
                format!("key '{key}' appears before any section header"),
            ));
        }
        let qualified = (section.clone(), key.to_string());
        if seen.contains(&qualified) {
            return Err(err(
                line_no,
                format!("duplicate key '{key}' in section [{section}]"),
            ));
        }
        seen.push(qualified);

        match (section.as_str(), key) {
            ("problem", "preset") => preset_id = Some(value.to_string()),
            ("problem", "n") => overrides.n = Some(parse_usize(line_no, key, value)?),
            ("problem", "sigma") => overrides.sigma = Some(parse_f64(line_no, key, value)?),
            ("problem", "clamp_radius") => {
                overrides.clamp_radius = Some(parse_f64(line_no, key, value)?)
            }
            ("problem", "problem_seed") => problem_seed = parse_u64(line_no, key, value)?,
            ("budget", "epsilon") => epsilon = Some(parse_f64(line_no, key, value)?),
            ("budget", "delta") => delta = parse_f64(line_no, key, value)?,
            ("budget", "batch") => batch = Some(parse_usize(line_no, key, value)?),
            ("run", "mode") => {
                mode = value
                    .parse()
                    .map_err(|e: Error| err(line_no, e.to_string()))?
            }
            ("run", "seeds") => {
                let mut parsed = Vec::new();
                for part in value.split(',') {
                    let part = part.trim();
                    if part.is_empty() {
                        continue;
                    }
                    parsed.push(parse_u64(line_no, key, part)?);
                }
                if parsed.is_empty() {
                    return Err(err(line_no, "seeds must be nonempty"));
                }
                let mut dedup = parsed.clone();
                dedup.sort_unstable();
                dedup.dedup();
                if dedup.len() != parsed.len() {
                    return Err(err(line_no, "seeds must be distinct"));
                }
                seeds = parsed;
            }
            ("run", "out") => out_dir = PathBuf::from(value),
            ("run", "coords") => coords = Some(parse_bool(line_no, key, value)?),
            ("run", "no_nsg") => no_nsg = parse_bool(line_no, key, value)?,
            ("run", "delta_prehalved") => delta_prehalved = parse_bool(line_no, key, value)?,
            ("constants", "c") => constants.c = parse_f64(line_no, key, value)?,
            ("constants", "c1") => constants.c1 = parse_f64(line_no, key, value)?,
            ("constants", "c2") => constants.c2 = parse_f64(line_no, key, value)?,
            ("constants", "c_eta") => constants.c_eta = parse_f64(line_no, key, value)?,
            ("constants", "c_escape_iters") => {
                constants.c_escape_iters = parse_f64(line_no, key, value)?
            }
            ("constants", "c_escape_radius") => {
                constants.c_escape_radius = parse_f64(line_no, key, value)?
            }
            ("constants", "c_drop") => constants.c_drop = parse_f64(line_no, key, value)?,
            (s, k) => return Err(err(line_no, format!("unknown key '{k}' in section [{s}]"))),
        }
    }

    let preset = preset_id.ok_or_else(|| err(0, "missing required key: [problem] preset"))?;
    let epsilon = epsilon.ok_or_else(|| err(0, "missing required key: [budget] epsilon"))?;
    if !(epsilon > 0.0) {
        return Err(err(0, format!("epsilon must be positive, got {epsilon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(err(0, format!("delta must lie in (0,1), got {delta}")));
    }
    constants.validate()?;

    Ok(ExperimentConfig {
        preset,
        overrides,
        problem_seed,
        epsilon,
        delta,
        batch,
        mode,
        seeds,
        out_dir,
        coords,
        no_nsg,
        delta_prehalved,
        constants,
    })
}

/// Applies comma-separated `k=v` constant overrides (the CLI `--constants`
/// flag) on top of a parsed config.
pub fn apply_constant_overrides(constants: &mut Constants, text: &str) -> Result<()> {
    for part in text.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| {
            Error::Input(format!("expected k=v in constants override, got '{part}'"))
        })?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| Error::Input(format!("constant {k}: expected a number, got '{v}'")))?;
        match k.trim() {
            "c" => constants.c = v,
            "c1" => constants.c1 = v,
            "c2" => constants.c2 = v,
            "c_eta" => constants.c_eta = v,
            "c_escape_iters" => constants.c_escape_iters = v,
            "c_escape_radius" => constants.c_escape_radius = v,
            "c_drop" => constants.c_drop = v,
            other => return Err(Error::Input(format!("unknown constant '{other}'"))),
        }
    }
    constants.validate()
}

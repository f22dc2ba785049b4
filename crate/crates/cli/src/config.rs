//! Run configuration: a `key=value` text format, one entry per line, `#`
//! starts a comment. Later assignments override earlier ones, so a config
//! file is applied first and command-line flags after it.

use std::fmt::Write as _;
use std::path::PathBuf;

use ttn::data::{GrayWeights, Resample};
use ttn::model::TtnLayout;
use ttn::trainer::TrainConfig;

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar10,
}

impl DatasetKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "mnist" => Some(Self::Mnist),
            "cifar10" => Some(Self::Cifar10),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::Cifar10 => "cifar10",
        }
    }

    /// MNIST is rescaled from 28 to 16; CIFAR-10 stays at its native 32.
    pub fn default_side(self) -> usize {
        match self {
            Self::Mnist => 16,
            Self::Cifar10 => 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub classes: Vec<usize>,
    pub samples_per_class: Option<usize>,
    pub test_samples_per_class: Option<usize>,
    pub side: Option<usize>,
    pub d: usize,
    pub chi: usize,
    pub sweeps: usize,
    pub tol: f64,
    pub seed: u64,
    pub threads: Option<usize>,
    pub normalize: bool,
    pub balance: bool,
    pub gray: GrayWeights,
    pub resample: Resample,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            classes: (0..10).collect(),
            samples_per_class: None,
            test_samples_per_class: None,
            side: None,
            d: 3,
            chi: 3,
            sweeps: 20,
            tol: 1e-4,
            seed: 0,
            threads: None,
            normalize: false,
            balance: false,
            gray: GrayWeights::default(),
            resample: Resample::Bilinear,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| CliError::usage(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> CliResult<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!("{key}: expected true or false, got {value:?}"))),
    }
}

/// `none` or empty means no cap.
fn parse_cap(key: &str, value: &str) -> CliResult<Option<usize>> {
    if value.is_empty() || value == "none" {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn fmt_cap(cap: Option<usize>) -> String {
    cap.map_or_else(|| "none".into(), |n| n.to_string())
}

/// `0,1,4` or ranges such as `0-9`.
pub fn parse_list(key: &str, value: &str) -> CliResult<Vec<usize>> {
    let mut out = Vec::new();
    for part in value.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (parse_num(key, a.trim())?, parse_num(key, b.trim())?);
                if a > b {
                    return Err(CliError::usage(format!("{key}: empty range {part}")));
                }
                out.extend(a..=b);
            }
            None => out.push(parse_num(key, part)?),
        }
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let value = value.trim();
        match key {
            "dataset" => {
                self.dataset = DatasetKind::parse(value)
                    .ok_or_else(|| CliError::usage(format!("dataset: expected mnist or cifar10, got {value:?}")))?
            }
            "data_dir" => self.data_dir = (!value.is_empty()).then(|| PathBuf::from(value)),
            "classes" => self.classes = parse_list(key, value)?,
            "samples_per_class" => self.samples_per_class = parse_cap(key, value)?,
            "test_samples_per_class" => self.test_samples_per_class = parse_cap(key, value)?,
            "side" => {
                self.side = if value.is_empty() || value == "auto" {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "d" => self.d = parse_num(key, value)?,
            "chi" => self.chi = parse_num(key, value)?,
            "sweeps" => self.sweeps = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "threads" => self.threads = parse_cap(key, value)?,
            "normalize" => self.normalize = parse_bool(key, value)?,
            "balance" => self.balance = parse_bool(key, value)?,
            "gray" => {
                let w: Vec<f64> = value
                    .split(',')
                    .map(|p| parse_num(key, p.trim()))
                    .collect::<CliResult<_>>()?;
                let [r, g, b] = w[..] else {
                    return Err(CliError::usage(format!("gray: expected three weights, got {value:?}")));
                };
                self.gray = GrayWeights { r, g, b };
            }
            "resample" => {
                self.resample = match value {
                    "bilinear" => Resample::Bilinear,
                    "nearest" => Resample::Nearest,
                    _ => {
                        return Err(CliError::usage(format!(
                            "resample: expected bilinear or nearest, got {value:?}"
                        )))
                    }
                }
            }
            _ => return Err(CliError::usage(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::usage(m));
        if self.classes.is_empty() {
            return bad("classes: at least one class is required".into());
        }
        let mut sorted = self.classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.classes.len() {
            return bad(format!("classes: duplicate entry in {:?}", self.classes));
        }
        if let Some(&c) = self.classes.iter().find(|&&c| c > 9) {
            return bad(format!("classes: {c} is not a label of a 10-class dataset"));
        }
        if self.d < 2 {
            return bad(format!("d: must be at least 2, got {}", self.d));
        }
        if self.chi < 1 {
            return bad("chi: must be at least 1".into());
        }
        let side = self.side();
        if side < 2 || !side.is_power_of_two() {
            return bad(format!("side: must be a power of 2 of at least 2, got {side}"));
        }
        if self.samples_per_class == Some(0) || self.test_samples_per_class == Some(0) {
            return bad("samples per class: must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads: must be positive".into());
        }
        if [self.gray.r, self.gray.g, self.gray.b]
            .iter()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return bad("gray: weights must be finite and non-negative".into());
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn side(&self) -> usize {
        self.side.unwrap_or_else(|| self.dataset.default_side())
    }

    /// Two classes train a single yes/no model; more train one per class.
    pub fn is_binary(&self) -> bool {
        self.classes.len() == 2
    }

    pub fn layout(&self) -> CliResult<TtnLayout> {
        Ok(TtnLayout::binary(self.side(), self.d, self.chi)?)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_sweeps: self.sweeps,
            cost_tolerance: self.tol,
            seed: self.seed,
            normalize_nodes: self.normalize,
            balance_targets: self.balance,
            ..TrainConfig::default()
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let classes: Vec<String> = self.classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "dataset={}", self.dataset.name());
        let _ = writeln!(
            s,
            "data_dir={}",
            self.data_dir
                .as_ref()
                .map_or(String::new(), |p| p.display().to_string())
        );
        let _ = writeln!(s, "classes={}", classes.join(","));
        let _ = writeln!(s, "samples_per_class={}", fmt_cap(self.samples_per_class));
        let _ = writeln!(s, "test_samples_per_class={}", fmt_cap(self.test_samples_per_class));
        let _ = writeln!(s, "side={}", self.side.map_or_else(|| "auto".into(), |n| n.to_string()));
        let _ = writeln!(s, "d={}", self.d);
        let _ = writeln!(s, "chi={}", self.chi);
        let _ = writeln!(s, "sweeps={}", self.sweeps);
        let _ = writeln!(s, "tol={:e}", self.tol);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "threads={}", fmt_cap(self.threads));
        let _ = writeln!(s, "normalize={}", self.normalize);
        let _ = writeln!(s, "balance={}", self.balance);
        let _ = writeln!(s, "gray={:e},{:e},{:e}", self.gray.r, self.gray.g, self.gray.b);
        let resample = match self.resample {
            Resample::Bilinear => "bilinear",
            Resample::Nearest => "nearest",
        };
        let _ = writeln!(s, "resample={resample}");
        s
    }
}

/// Splits `text` into `(key, value)` pairs, skipping blanks and comments.
pub fn entries(text: &str, source: &str) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("{source}:{}: expected key=value, got {line:?}", n + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

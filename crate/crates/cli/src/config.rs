//! Run configuration: a JSON file merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Text,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Certificate {
    All,
    Ellipticity,
    Hermitian,
    Ak,
}

/// Flags shared by every command. Unset flags fall back to the config file,
/// then to defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in structure name.
    #[arg(long)]
    pub structure: Option<String>,
    /// Structure parameters as `k=v,k=v`.
    #[arg(long)]
    pub params: Option<String>,
    /// Number of sampled points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tol_analytic: Option<f64>,
    #[arg(long)]
    pub tol_fd: Option<f64>,
    /// Flow family: ahcf, scf or hcf.
    #[arg(long)]
    pub flow: Option<String>,
    /// AHCF gauge coefficient.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// AHCF Q1 coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q1: Option<Vec<f64>>,
    /// AHCF Q2 coefficients, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub q2: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    pub a1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a3: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub a4: Option<f64>,
    #[arg(long)]
    pub t_end: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Output path (stdout if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Chart point, comma separated (tensors).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub point: Option<Vec<f64>>,
    /// Probe count (symbol).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Probe dimension (symbol).
    #[arg(long)]
    pub dim: Option<usize>,
    /// Which certificate to run (symbol).
    #[arg(long, value_enum)]
    pub certificate: Option<Certificate>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub structure: Option<String>,
    pub params: Option<BTreeMap<String, f64>>,
    pub points: Option<usize>,
    pub seed: Option<u64>,
    pub tol_analytic: Option<f64>,
    pub tol_fd: Option<f64>,
    pub flow: Option<String>,
    pub a: Option<f64>,
    pub q1: Option<Vec<f64>>,
    pub q2: Option<Vec<f64>>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub a4: Option<f64>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub point: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub dim: Option<usize>,
    pub certificate: Option<Certificate>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }
}

/// The resolved configuration, echoed into reports.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub structure: Option<String>,
    pub params: BTreeMap<String, f64>,
    pub points: usize,
    pub seed: u64,
    pub tol_analytic: f64,
    pub tol_fd: f64,
    pub flow: Option<String>,
    pub a: f64,
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub hcf: [f64; 4],
    pub t_end: f64,
    pub dt: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    pub format: Format,
    pub point: Option<Vec<f64>>,
    pub trials: usize,
    pub dim: usize,
    pub certificate: Certificate,
}

pub fn parse_params(s: &str) -> Result<BTreeMap<String, f64>, String> {
    let mut out = BTreeMap::new();
    for item in s.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format!("parameter `{item}` is not of the form k=v"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("parameter `{k}` has a non-numeric value `{v}`"))?;
        out.insert(k.trim().to_string(), v);
    }
    Ok(out)
}

impl RunConfig {
    pub fn resolve(command: &str, flags: &Flags) -> Result<Self, String> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let params = match &flags.params {
            Some(s) => parse_params(s)?,
            None => file.params.unwrap_or_default(),
        };
        let cfg = RunConfig {
            command: command.to_string(),
            structure: flags.structure.clone().or(file.structure),
            params,
            points: flags.points.or(file.points).unwrap_or(20),
            seed: flags.seed.or(file.seed).unwrap_or(0),
            tol_analytic: flags.tol_analytic.or(file.tol_analytic).unwrap_or(1e-9),
            tol_fd: flags.tol_fd.or(file.tol_fd).unwrap_or(1e-5),
            flow: flags.flow.clone().or(file.flow),
            a: flags.a.or(file.a).unwrap_or(0.0),
            q1: flags.q1.clone().or(file.q1).unwrap_or_default(),
            q2: flags.q2.clone().or(file.q2).unwrap_or_default(),
            hcf: [
                flags.a1.or(file.a1).unwrap_or(0.0),
                flags.a2.or(file.a2).unwrap_or(0.0),
                flags.a3.or(file.a3).unwrap_or(0.0),
                flags.a4.or(file.a4).unwrap_or(0.0),
            ],
            t_end: flags.t_end.or(file.t_end).unwrap_or(0.5),
            dt: flags.dt.or(file.dt).unwrap_or(1e-3),
            out: flags.out.clone().or(file.out),
            format: flags.format.or(file.format).unwrap_or(Format::Json),
            point: flags.point.clone().or(file.point),
            trials: flags.trials.or(file.trials).unwrap_or(100),
            dim: flags.dim.or(file.dim).unwrap_or(4),
            certificate: flags.certificate.or(file.certificate).unwrap_or(Certificate::All),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("tol-analytic", self.tol_analytic),
            ("tol-fd", self.tol_fd),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(format!("t-end must be non-negative, got {}", self.t_end));
        }
        if self.points == 0 {
            return Err("points must be at least 1".into());
        }
        if self.trials == 0 {
            return Err("trials must be at least 1".into());
        }
        Ok(())
    }

    pub fn structure(&self) -> Result<&str, String> {
        self.structure
            .as_deref()
            .ok_or_else(|| format!("{} needs --structure", self.command))
    }
}

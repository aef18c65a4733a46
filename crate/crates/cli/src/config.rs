//! Run configuration: a TOML key-value document.
//!
//! Real-valued entries may be written as numbers or as quoted decimal
//! strings; strings are parsed at the working precision, numbers through
//! their shortest round-trip decimal form.

use std::path::{Path, PathBuf};

use fh_gauss_core::numeric::parse_real;
use fh_gauss_core::WeightSpec;
use rug::Float;
use serde::Serialize;
use toml::Value;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Orthopoly,
    Ladder,
    Identities,
    Dynamics,
    All,
}

impl Suite {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "orthopoly" => Suite::Orthopoly,
            "ladder" => Suite::Ladder,
            "identities" => Suite::Identities,
            "dynamics" => Suite::Dynamics,
            "all" => Suite::All,
            other => return Err(CliError::Config(format!("unknown suite '{other}'"))),
        })
    }

    pub fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(CliError::Config(format!("unknown format '{other}'"))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Json => "json",
            Format::Csv => "csv",
        }
    }
}

/// Per-coordinate linear grid; `steps[j] = 1` pins coordinate `j` at
/// `start[j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub start: Vec<String>,
    pub stop: Vec<String>,
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub ts: Vec<String>,
    pub gammas: Vec<String>,
    pub precision_bits: u32,
    pub quad_tol: String,
    pub n_max: usize,
    pub suite: Suite,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub format: Format,
    #[serde(skip)]
    pub out: PathBuf,
    /// Overrides every report tolerance when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verify_tol: Option<f64>,
    pub iterate_bound: f64,
    pub step: f64,
    pub richardson: bool,
}

const KEYS: &[&str] = &[
    "ts",
    "gammas",
    "precision_bits",
    "quad_tol",
    "n_max",
    "suite",
    "sweep_start",
    "sweep_stop",
    "sweep_steps",
    "format",
    "out",
    "verify_tol",
    "iterate_bound",
    "step",
    "richardson",
];

fn real_text(key: &str, v: &Value) -> Result<String, CliError> {
    match v {
        Value::String(s) => Ok(s.trim().to_string()),
        Value::Integer(i) => Ok(i.to_string()),
        Value::Float(f) => Ok(format!("{f:e}")),
        _ => Err(CliError::Config(format!("'{key}' must hold real numbers"))),
    }
}

fn real_list(key: &str, v: &Value) -> Result<Vec<String>, CliError> {
    match v {
        Value::Array(items) => items.iter().map(|x| real_text(key, x)).collect(),
        other => Ok(vec![real_text(key, other)?]),
    }
}

fn real_f64(key: &str, v: &Value) -> Result<f64, CliError> {
    let text = real_text(key, v)?;
    text.parse::<f64>()
        .map_err(|_| CliError::Config(format!("'{key}' is not a number: {text}")))
}

fn uint(key: &str, v: &Value) -> Result<u64, CliError> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(CliError::Config(format!("'{key}' must be a non-negative integer"))),
    }
}

fn string<'a>(key: &str, v: &'a Value) -> Result<&'a str, CliError> {
    v.as_str().ok_or_else(|| CliError::Config(format!("'{key}' must be a string")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if let Some(k) = table.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(CliError::Config(format!("unknown key '{k}'")));
        }
        let get = |k: &str| table.get(k);
        let ts = real_list("ts", get("ts").ok_or_else(|| CliError::Config("missing 'ts'".into()))?)?;
        let gammas = real_list("gammas", get("gammas").ok_or_else(|| CliError::Config("missing 'gammas'".into()))?)?;
        let sweep = match (get("sweep_start"), get("sweep_stop"), get("sweep_steps")) {
            (None, None, None) => None,
            (Some(a), Some(b), Some(c)) => {
                let steps = match c {
                    Value::Array(items) => items.iter().map(|x| uint("sweep_steps", x).map(|v| v as usize)).collect::<Result<_, _>>()?,
                    other => vec![uint("sweep_steps", other)? as usize; ts.len()],
                };
                Some(Sweep { start: real_list("sweep_start", a)?, stop: real_list("sweep_stop", b)?, steps })
            }
            _ => return Err(CliError::Config("sweep needs sweep_start, sweep_stop and sweep_steps".into())),
        };
        let cfg = RunConfig {
            ts,
            gammas,
            precision_bits: get("precision_bits").map(|v| uint("precision_bits", v)).transpose()?.unwrap_or(256) as u32,
            quad_tol: get("quad_tol").map(|v| real_text("quad_tol", v)).transpose()?.unwrap_or_else(|| "1e-30".into()),
            n_max: get("n_max").map(|v| uint("n_max", v)).transpose()?.unwrap_or(12) as usize,
            suite: get("suite").map(|v| string("suite", v).and_then(Suite::parse)).transpose()?.unwrap_or(Suite::All),
            sweep,
            format: get("format").map(|v| string("format", v).and_then(Format::parse)).transpose()?.unwrap_or(Format::Json),
            out: get("out").map(|v| string("out", v).map(PathBuf::from)).transpose()?.unwrap_or_else(|| PathBuf::from(".")),
            verify_tol: get("verify_tol").map(|v| real_f64("verify_tol", v)).transpose()?,
            iterate_bound: get("iterate_bound").map(|v| real_f64("iterate_bound", v)).transpose()?.unwrap_or(1e-12),
            step: get("step").map(|v| real_f64("step", v)).transpose()?.unwrap_or(fh_gauss_core::dynamics::DEFAULT_STEP),
            richardson: get("richardson")
                .map(|v| v.as_bool().ok_or_else(|| CliError::Config("'richardson' must be a boolean".into())))
                .transpose()?
                .unwrap_or(false),
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Validates everything that does not need a numeric build.
    pub fn check(&self) -> Result<(), CliError> {
        if self.ts.len() != self.gammas.len() {
            return Err(CliError::Config(format!("{} positions but {} exponents", self.ts.len(), self.gammas.len())));
        }
        if self.n_max < 2 {
            return Err(CliError::Config("n_max must be at least 2".into()));
        }
        if !(self.step > 0.0) || !(self.iterate_bound >= 0.0) || self.verify_tol.is_some_and(|t| !(t >= 0.0)) {
            return Err(CliError::Config("step must be positive and tolerances non-negative".into()));
        }
        if let Some(s) = &self.sweep {
            let n = self.ts.len();
            if s.start.len() != n || s.stop.len() != n || s.steps.len() != n || s.steps.iter().any(|&k| k == 0) {
                return Err(CliError::Config("sweep lists must match ts in length and steps must be positive".into()));
            }
        }
        self.base_spec()?;
        self.grid()?;
        Ok(())
    }

    pub fn base_spec(&self) -> Result<WeightSpec, CliError> {
        let ts: Vec<&str> = self.ts.iter().map(String::as_str).collect();
        let gs: Vec<&str> = self.gammas.iter().map(String::as_str).collect();
        WeightSpec::from_decimal(&ts, &gs, self.precision_bits, &self.quad_tol).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Grid points in row-major order with the last coordinate fastest.
    pub fn grid(&self) -> Result<Vec<WeightSpec>, CliError> {
        let base = self.base_spec()?;
        let Some(s) = &self.sweep else { return Ok(vec![base]) };
        let p = self.precision_bits;
        let parse = |t: &str| parse_real(p, t).map_err(|e| CliError::Config(e.to_string()));
        let mut axes: Vec<Vec<Float>> = Vec::new();
        for j in 0..self.ts.len() {
            let a = parse(&s.start[j])?;
            let b = parse(&s.stop[j])?;
            let k = s.steps[j];
            axes.push(
                (0..k)
                    .map(|i| {
                        if k == 1 {
                            a.clone()
                        } else {
                            let frac = Float::with_val(p, Float::with_val(p, &b - &a) * i as u32) / (k as u32 - 1);
                            frac + &a
                        }
                    })
                    .collect(),
            );
        }
        let mut points: Vec<Vec<Float>> = vec![Vec::new()];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |x| {
                        let mut v = prefix.clone();
                        v.push(x.clone());
                        v
                    })
                })
                .collect();
        }
        points
            .iter()
            .enumerate()
            .map(|(i, pt)| base.with_positions(pt).map_err(|e| CliError::Config(format!("grid point {i}: {e}"))))
            .collect()
    }
}

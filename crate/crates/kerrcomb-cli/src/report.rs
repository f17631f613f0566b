//! Machine-readable run report and its human-readable rendering.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub frequency: String,
    pub power: String,
    pub rates: String,
    pub spectra: String,
    pub amplitudes: String,
}

impl Default for Units {
    fn default() -> Self {
        Units {
            frequency: "omega/kappa (kappa = half linewidth)".into(),
            power: "W".into(),
            rates: "rad/s unless suffixed _over_kappa".into(),
            spectra: "quadrature and number-difference spectra in shot-noise units; S_sp dimensionless (photons/s per Hz)".into(),
            amplitudes: "sqrt(photons) for resonator inputs, normalized field for normalized inputs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductRecord {
    pub product: String,
    pub files: Vec<String>,
    pub inputs_sha256: String,
    pub runtime_seconds: f64,
    pub provenance: String,
    pub details: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubRun {
    pub value: f64,
    pub dir: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub pattern: Option<String>,
    pub roll_order: Option<u64>,
}

impl SubRun {
    pub fn from_report(value: f64, dir: &str, r: &Report) -> SubRun {
        let state = r.state.as_ref();
        SubRun {
            value,
            dir: dir.to_string(),
            status: r.status,
            error: r.error.clone(),
            pattern: state.and_then(|s| s["pattern"].as_str()).map(String::from),
            roll_order: state.and_then(|s| s["roll_order"].as_u64()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub parameter: String,
    pub values: Vec<f64>,
    pub runs: Vec<SubRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool: String,
    pub name: String,
    pub mode: String,
    pub status: Status,
    pub error: Option<String>,
    pub seed: u64,
    pub threads: usize,
    /// SHA-256 of the effective scenario TOML (after command-line overrides).
    pub inputs_sha256: String,
    pub runtime_seconds: f64,
    pub units: Units,
    pub derived: Option<Value>,
    pub state: Option<Value>,
    pub products: Vec<ProductRecord>,
    pub sweep: Option<SweepRecord>,
    /// Effective scenario, also written next to the report.
    pub scenario_file: String,
    pub scenario: Value,
}

impl Report {
    pub fn load(dir: &Path) -> Result<Report, String> {
        let path = dir.join("report.json");
        let text =
            std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let status = match self.status {
            Status::Ok => "ok",
            Status::Error => "ERROR",
        };
        let _ = writeln!(out, "{} [{}] {}", self.name, self.mode, status);
        if let Some(e) = &self.error {
            let _ = writeln!(out, "  error: {e}");
        }
        let _ = writeln!(
            out,
            "  seed {}  threads {}  runtime {:.3} s  inputs {}",
            self.seed,
            self.threads,
            self.runtime_seconds,
            &self.inputs_sha256[..self.inputs_sha256.len().min(16)]
        );
        if let Some(Value::Object(d)) = &self.derived {
            let _ = writeln!(out, "  derived:");
            for (k, v) in d {
                let _ = writeln!(out, "    {k:<28} {}", scalar(v));
            }
        }
        if let Some(Value::Object(s)) = &self.state {
            let _ = writeln!(out, "  state:");
            for (k, v) in s {
                let _ = writeln!(out, "    {k:<28} {}", scalar(v));
            }
        }
        for p in &self.products {
            let _ = writeln!(out, "  product {} ({:.3} s)", p.product, p.runtime_seconds);
            for f in &p.files {
                let _ = writeln!(out, "    {f}");
            }
            if let Value::Object(d) = &p.details {
                for (k, v) in d {
                    if !v.is_array() && !v.is_object() {
                        let _ = writeln!(out, "    {k}: {}", scalar(v));
                    }
                }
            }
        }
        if let Some(sw) = &self.sweep {
            let _ = writeln!(out, "  sweep over {}:", sw.parameter);
            for r in &sw.runs {
                let _ = writeln!(
                    out,
                    "    {:<12} {:<10} {:<6} {}",
                    r.value,
                    r.dir,
                    match r.status {
                        Status::Ok => "ok",
                        Status::Error => "ERROR",
                    },
                    r.pattern.as_deref().or(r.error.as_deref()).unwrap_or("-")
                );
            }
        }
        out
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Number(n) => match n.as_f64() {
            Some(x) if n.is_f64() => format!("{x:.6e}"),
            _ => n.to_string(),
        },
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

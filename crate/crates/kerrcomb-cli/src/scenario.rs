//! Scenario files (TOML, schema version 1).

use kerrcomb::steady_state::{ModalParams, Seed};
use kerrcomb::units::{
    self, derive_loss_budget, Dispersion, Nonlinearity, ResonatorConfig, Topology, UnitsError,
};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (this build reads {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("product `{product}` is not available in mode `{mode}`")]
    ProductMode { product: Product, mode: Mode },
    #[error("{0}")]
    Inconsistent(String),
    #[error("sweep parameter `{0}`: {1}")]
    Sweep(String, String),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    BelowThreshold,
    AboveThreshold,
    HamiltonianAudit,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::BelowThreshold => "below_threshold",
            Mode::AboveThreshold => "above_threshold",
            Mode::HamiltonianAudit => "hamiltonian_audit",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    Spectrum,
    Envelope,
    FluxTable,
    QuadratureSpectrum,
    NumberDifference,
    Stability,
    Audit,
}

impl Product {
    pub fn name(&self) -> &'static str {
        match self {
            Product::Spectrum => "spectrum",
            Product::Envelope => "envelope",
            Product::FluxTable => "flux_table",
            Product::QuadratureSpectrum => "quadrature_spectrum",
            Product::NumberDifference => "number_difference",
            Product::Stability => "stability",
            Product::Audit => "audit",
        }
    }

    fn allowed_in(&self, mode: Mode) -> bool {
        use Product::*;
        match mode {
            Mode::BelowThreshold => matches!(self, Spectrum | Envelope | FluxTable),
            Mode::AboveThreshold => {
                matches!(self, QuadratureSpectrum | NumberDifference | Stability)
            }
            Mode::HamiltonianAudit => matches!(self, Audit),
        }
    }
}

impl std::fmt::Display for Product {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub outputs: Vec<Product>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator: Option<Resonator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Rates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized: Option<Normalized>,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub spectrum: SpectrumSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
    #[serde(default)]
    pub number_difference: NumberDifferenceSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
}

/// Physical resonator. Pump power and detuning each take exactly one of an
/// absolute value or a relative one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Resonator {
    /// Metres.
    pub pump_wavelength: f64,
    /// Metres.
    pub radius: f64,
    pub group_index: f64,
    pub intrinsic_q: f64,
    pub through_q: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop_q: Option<f64>,
    #[serde(default = "add_through")]
    pub topology: Topology,
    /// `{ gamma = W⁻¹m⁻¹ }` or `{ g0 = rad/s }`.
    pub nonlinearity: Nonlinearity,
    /// `{ zeta2 = rad/s }` or `{ beta2 = s²/m }`.
    pub dispersion: Dispersion,
    /// Watts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_power: Option<f64>,
    /// Pump power in units of the threshold power at this detuning.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pump_over_threshold: Option<f64>,
    /// rad/s.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detuning_over_kappa: Option<f64>,
}

fn add_through() -> Topology {
    Topology::AddThrough
}

impl Resonator {
    /// Resolve relative pump and detuning into an absolute configuration.
    pub fn to_config(&self) -> Result<ResonatorConfig, ScenarioError> {
        let mut cfg = ResonatorConfig {
            pump_wavelength: self.pump_wavelength,
            radius: self.radius,
            group_index: self.group_index,
            intrinsic_q: self.intrinsic_q,
            through_q: self.through_q,
            drop_q: self.drop_q,
            topology: self.topology,
            nonlinearity: self.nonlinearity,
            dispersion: self.dispersion,
            pump_power: 0.0,
            detuning: 0.0,
        };
        cfg.validate()?;
        let budget = derive_loss_budget(&cfg)?;
        cfg.detuning = match (self.detuning, self.detuning_over_kappa) {
            (Some(d), None) => d,
            (None, Some(x)) => x * budget.kappa,
            (None, None) => 0.0,
            (Some(_), Some(_)) => {
                return Err(ScenarioError::Inconsistent(
                    "resonator: give detuning or detuning_over_kappa, not both".into(),
                ))
            }
        };
        cfg.pump_power = match (self.pump_power, self.pump_over_threshold) {
            (Some(p), None) => p,
            (None, Some(x)) => {
                x * units::threshold_pump_power(&budget, cfg.g0(), cfg.omega_l(), cfg.detuning)?
            }
            _ => {
                return Err(ScenarioError::Inconsistent(
                    "resonator: give exactly one of pump_power, pump_over_threshold".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Below-threshold parameters given directly as rates in units of κ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub rho: f64,
    pub sigma: f64,
    pub zeta2: f64,
    /// g = g0|𝒜₀|².
    pub g: f64,
}

/// Above-threshold parameters in normalized LLE form (κ = g0 = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalized {
    pub alpha: f64,
    pub beta: f64,
    pub f: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedKind {
    Noise,
    BrightSoliton,
    DarkSoliton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub seed_kind: SeedKind,
    /// Sidemode noise amplitude in scaled units.
    pub noise_amplitude: f64,
    /// Dark-soliton box half-width (rad).
    pub half_width: f64,
    /// Split-step size in units of 1/κ.
    pub step: f64,
    pub max_horizon: f64,
    /// Initial truncation; the solver default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Points on the angle grid of the intensity dump.
    pub intensity_points: usize,
}

impl Default for Solver {
    fn default() -> Self {
        Solver {
            seed_kind: SeedKind::Noise,
            noise_amplitude: 1e-6,
            half_width: 0.3,
            step: 1e-3,
            max_horizon: 20_000.0,
            k: None,
            intensity_points: 1024,
        }
    }
}

impl Solver {
    pub fn seed(&self, rng_seed: u64) -> Seed {
        match self.seed_kind {
            SeedKind::Noise => Seed::Noise {
                amplitude: self.noise_amplitude,
                rng_seed,
            },
            SeedKind::BrightSoliton => Seed::BrightSoliton,
            SeedKind::DarkSoliton => Seed::DarkSoliton {
                half_width: self.half_width,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    pub modes: Vec<i64>,
    /// Half-width of a uniform ω/κ grid; the adaptive default grid when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    pub points: usize,
    pub envelope_range: [i64; 2],
    pub flux_range: [i64; 2],
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            modes: vec![1],
            omega_max: None,
            points: 2048,
            envelope_range: [-60, 60],
            flux_range: [-50, 50],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    /// Pairs to evaluate; the roll order (or 1) when empty.
    pub pairs: Vec<usize>,
    /// Extra angle offsets δΦ (rad) evaluated next to the optimized one.
    pub offsets: Vec<f64>,
    pub omega_min: f64,
    pub omega_max: f64,
    pub points_per_side: usize,
    /// |ω|/κ band of the angle objective.
    pub band: [f64; 2],
    pub scan_points: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        QuadratureSection {
            pairs: vec![],
            offsets: vec![0.0, std::f64::consts::FRAC_PI_2],
            omega_min: 1e-3,
            omega_max: 20.0,
            points_per_side: 400,
            band: [0.1, 10.0],
            scan_points: 181,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumberDifferenceSection {
    pub omega_max: f64,
    pub points: usize,
}

impl Default for NumberDifferenceSection {
    fn default() -> Self {
        NumberDifferenceSection {
            omega_max: 10.0,
            points: 801,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AuditSection {
    pub monomial_k_max: u32,
    pub commutator_k_max: u32,
    pub number_difference_k_max: u32,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection {
            monomial_k_max: 6,
            commutator_k_max: 4,
            number_difference_k_max: 5,
        }
    }
}

/// One scalar parameter swept over a list of values. `parameter` is a dotted
/// path into the scenario, e.g. `resonator.pump_over_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// Resolved physical inputs of a run.
#[derive(Debug, Clone)]
pub enum Inputs {
    Resonator(ResonatorConfig),
    Rates(Rates),
    Normalized(Normalized),
    None,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Structural checks that do not need any computation.
    pub fn check(&self) -> Result<(), ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::Schema(self.schema_version));
        }
        for p in &self.outputs {
            if !p.allowed_in(self.mode) {
                return Err(ScenarioError::ProductMode {
                    product: *p,
                    mode: self.mode,
                });
            }
        }
        let given = [
            ("resonator", self.resonator.is_some()),
            ("rates", self.rates.is_some()),
            ("normalized", self.normalized.is_some()),
        ];
        let named: Vec<&str> = given.iter().filter(|g| g.1).map(|g| g.0).collect();
        let ok: &[&str] = match self.mode {
            Mode::BelowThreshold => &["resonator", "rates"],
            Mode::AboveThreshold => &["resonator", "normalized"],
            Mode::HamiltonianAudit => &[],
        };
        if named.iter().any(|n| !ok.contains(n)) || (!ok.is_empty() && named.len() != 1) {
            return Err(ScenarioError::Inconsistent(format!(
                "mode `{}` needs exactly one of [{}], got [{}]",
                self.mode,
                ok.join(", "),
                named.join(", ")
            )));
        }
        if let Some(r) = &self.rates {
            if !(0.0..=1.0).contains(&r.rho) || !(r.g >= 0.0) {
                return Err(ScenarioError::Inconsistent(
                    "rates: need 0 ≤ rho ≤ 1 and g ≥ 0".into(),
                ));
            }
        }
        if let Some(n) = &self.normalized {
            if !(0.0..=1.0).contains(&n.rho) {
                return Err(ScenarioError::Inconsistent(
                    "normalized: need 0 ≤ rho ≤ 1".into(),
                ));
            }
        }
        let s = &self.spectrum;
        if s.envelope_range[0] > s.envelope_range[1] || s.flux_range[0] > s.flux_range[1] {
            return Err(ScenarioError::Inconsistent(
                "spectrum: empty mode range".into(),
            ));
        }
        let q = &self.quadrature;
        if !(q.omega_min > 0.0 && q.omega_max > q.omega_min && q.band[0] < q.band[1]) {
            return Err(ScenarioError::Inconsistent(
                "quadrature: need 0 < omega_min < omega_max and band[0] < band[1]".into(),
            ));
        }
        if self.audit.monomial_k_max > kerrcomb::hamiltonian_audit::MAX_K
            || self.audit.commutator_k_max > kerrcomb::hamiltonian_audit::MAX_K
            || self.audit.number_difference_k_max > kerrcomb::hamiltonian_audit::MAX_K
        {
            return Err(ScenarioError::Inconsistent(format!(
                "audit: K is limited to {}",
                kerrcomb::hamiltonian_audit::MAX_K
            )));
        }
        if let Some(r) = &self.resonator {
            r.to_config()?;
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                return Err(ScenarioError::Sweep(
                    sw.parameter.clone(),
                    "no values".into(),
                ));
            }
            self.expand_sweep()?;
        }
        Ok(())
    }

    pub fn inputs(&self) -> Result<Inputs, ScenarioError> {
        Ok(match (&self.resonator, &self.rates, &self.normalized) {
            (Some(r), _, _) => Inputs::Resonator(r.to_config()?),
            (_, Some(r), _) => Inputs::Rates(*r),
            (_, _, Some(n)) => Inputs::Normalized(*n),
            _ => Inputs::None,
        })
    }

    /// Modal parameters for the above-threshold solver.
    pub fn modal_params(&self) -> Result<ModalParams, ScenarioError> {
        match self.inputs()? {
            Inputs::Resonator(cfg) => Ok(ModalParams::from_config(&cfg)?),
            Inputs::Normalized(n) => Ok(ModalParams::normalized(n.alpha, n.beta, n.f, n.rho)),
            _ => Err(ScenarioError::Inconsistent("no modal parameters".into())),
        }
    }

    /// One scenario per sweep value (without the sweep), or just `self`.
    pub fn expand_sweep(&self) -> Result<Vec<(Option<f64>, Scenario)>, ScenarioError> {
        let sw = match &self.sweep {
            None => return Ok(vec![(None, self.clone())]),
            Some(sw) => sw,
        };
        let mut base = self.clone();
        base.sweep = None;
        let tree: toml::Value = toml::Value::try_from(&base)
            .map_err(|e| ScenarioError::Sweep(sw.parameter.clone(), e.to_string()))?;
        let mut out = Vec::with_capacity(sw.values.len());
        for &v in &sw.values {
            let mut t = tree.clone();
            set_path(&mut t, &sw.parameter, v)
                .map_err(|e| ScenarioError::Sweep(sw.parameter.clone(), e))?;
            let s: Scenario = t.try_into().map_err(|e: toml::de::Error| {
                ScenarioError::Sweep(sw.parameter.clone(), e.to_string())
            })?;
            s.check()?;
            out.push((Some(v), s));
        }
        Ok(out)
    }
}

/// Set a scalar at a dotted path. An existing integer stays an integer, and
/// setting a relative pump or detuning clears its absolute counterpart.
fn set_path(tree: &mut toml::Value, path: &str, v: f64) -> Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    let (last, parents) = parts.split_last().ok_or("empty path")?;
    let mut node = tree;
    for p in parents {
        node = node
            .as_table_mut()
            .ok_or_else(|| format!("`{p}` is not a table"))?
            .get_mut(*p)
            .ok_or_else(|| format!("no section `{p}`"))?;
    }
    let table = node.as_table_mut().ok_or("parent is not a table")?;
    let value = match table.get(*last) {
        Some(toml::Value::Integer(_)) => {
            if v.fract() != 0.0 {
                return Err(format!("{v} is not an integer"));
            }
            toml::Value::Integer(v as i64)
        }
        Some(toml::Value::Float(_)) | None => toml::Value::Float(v),
        Some(_) => return Err("not a scalar".into()),
    };
    let counterpart = match *last {
        "pump_over_threshold" => Some("pump_power"),
        "pump_power" => Some("pump_over_threshold"),
        "detuning_over_kappa" => Some("detuning"),
        "detuning" => Some("detuning_over_kappa"),
        _ => None,
    };
    if let Some(c) = counterpart {
        table.remove(c);
    }
    table.insert(last.to_string(), value);
    Ok(())
}

//! Resonator parameter model and SI <-> normalized conversions.
//!
//! All rates are half-linewidths in rad/s. Full linewidths (2κ) only show up
//! at the I/O boundary.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Speed of light in vacuum (m/s), exact.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Planck constant (J·s), exact.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant.
pub const HBAR: f64 = PLANCK / (2.0 * PI);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitsError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("add-drop topology requires drop_q")]
    MissingDropQ,
    #[error("drop_q given for an add-through resonator")]
    UnexpectedDropQ,
    #[error("nonlinear gain g0 must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("pump power must be non-negative, got {0}")]
    NegativePower(f64),
    #[error("no modulational-instability roll order: 2(σ+2κ)/ζ₂ = {radicand}")]
    NoRollOrder { radicand: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    AddThrough,
    AddDrop,
}

/// Kerr nonlinearity, given either as the fiber-style γ (W⁻¹m⁻¹) or as the
/// per-photon rate g0 (rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Gamma(f64),
    G0(f64),
}

/// Second-order dispersion, either ζ₂ (rad/s) or β₂ (s²/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dispersion {
    Zeta2(f64),
    Beta2(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorConfig {
    pub pump_wavelength: f64,
    pub radius: f64,
    pub group_index: f64,
    pub intrinsic_q: f64,
    pub through_q: f64,
    pub drop_q: Option<f64>,
    pub topology: Topology,
    pub nonlinearity: Nonlinearity,
    pub dispersion: Dispersion,
    pub pump_power: f64,
    /// Pump detuning σ (rad/s).
    pub detuning: f64,
}

impl ResonatorConfig {
    pub fn validate(&self) -> Result<(), UnitsError> {
        let positive = [
            ("pump_wavelength", self.pump_wavelength),
            ("radius", self.radius),
            ("group_index", self.group_index),
            ("intrinsic_q", self.intrinsic_q),
            ("through_q", self.through_q),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(UnitsError::Config(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        match (self.topology, self.drop_q) {
            (Topology::AddDrop, None) => return Err(UnitsError::MissingDropQ),
            (Topology::AddThrough, Some(_)) => return Err(UnitsError::UnexpectedDropQ),
            (Topology::AddDrop, Some(q)) if !(q.is_finite() && q > 0.0) => {
                return Err(UnitsError::Config(format!(
                    "drop_q must be finite and > 0, got {q}"
                )));
            }
            _ => {}
        }
        match self.nonlinearity {
            Nonlinearity::Gamma(v) | Nonlinearity::G0(v) if !(v.is_finite() && v >= 0.0) => {
                return Err(UnitsError::Config(format!(
                    "nonlinearity must be finite and >= 0, got {v}"
                )));
            }
            _ => {}
        }
        match self.dispersion {
            Dispersion::Zeta2(v) | Dispersion::Beta2(v) if !v.is_finite() => {
                return Err(UnitsError::Config("dispersion must be finite".into()));
            }
            _ => {}
        }
        if !(self.pump_power.is_finite() && self.pump_power >= 0.0) {
            return Err(UnitsError::NegativePower(self.pump_power));
        }
        if !self.detuning.is_finite() {
            return Err(UnitsError::Config("detuning must be finite".into()));
        }
        Ok(())
    }

    /// Pump angular frequency ω_L (rad/s).
    pub fn omega_l(&self) -> f64 {
        2.0 * PI * SPEED_OF_LIGHT / self.pump_wavelength
    }

    pub fn hbar_omega(&self) -> f64 {
        HBAR * self.omega_l()
    }

    pub fn group_velocity(&self) -> f64 {
        SPEED_OF_LIGHT / self.group_index
    }

    /// Free spectral range ζ₁ (rad/s).
    pub fn fsr(&self) -> f64 {
        self.group_velocity() / self.radius
    }

    pub fn g0(&self) -> f64 {
        match self.nonlinearity {
            Nonlinearity::G0(g) => g,
            Nonlinearity::Gamma(gamma) => {
                g0_from_gamma(gamma, self.group_velocity(), self.radius, self.omega_l())
            }
        }
    }

    pub fn gamma(&self) -> f64 {
        match self.nonlinearity {
            Nonlinearity::Gamma(gamma) => gamma,
            Nonlinearity::G0(g) => {
                gamma_from_g0(g, self.group_velocity(), self.radius, self.omega_l())
            }
        }
    }

    pub fn zeta2(&self) -> f64 {
        match self.dispersion {
            Dispersion::Zeta2(z) => z,
            Dispersion::Beta2(b) => zeta2_from_beta2(b, self.group_velocity(), self.fsr()),
        }
    }

    pub fn beta2(&self) -> f64 {
        match self.dispersion {
            Dispersion::Beta2(b) => b,
            Dispersion::Zeta2(z) => beta2_from_zeta2(z, self.group_velocity(), self.fsr()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBudget {
    pub kappa_t: f64,
    pub kappa_i: f64,
    pub kappa_d: f64,
    pub kappa: f64,
    pub rho: f64,
    pub fsr: f64,
    pub topology: Topology,
}

impl LossBudget {
    /// Out-coupling rate of the port where the output is observed.
    pub fn kappa_out(&self) -> f64 {
        match self.topology {
            Topology::AddThrough => self.kappa_t,
            Topology::AddDrop => self.kappa_d,
        }
    }

    /// Full width at half maximum 2κ (rad/s).
    pub fn full_linewidth(&self) -> f64 {
        2.0 * self.kappa
    }
}

pub fn kappa_from_q(omega_l: f64, q: f64) -> f64 {
    omega_l / (2.0 * q)
}

pub fn q_from_kappa(omega_l: f64, kappa: f64) -> f64 {
    omega_l / (2.0 * kappa)
}

pub fn derive_loss_budget(config: &ResonatorConfig) -> Result<LossBudget, UnitsError> {
    config.validate()?;
    let w = config.omega_l();
    let kappa_t = kappa_from_q(w, config.through_q);
    let kappa_i = kappa_from_q(w, config.intrinsic_q);
    let kappa_d = match config.drop_q {
        Some(q) => kappa_from_q(w, q),
        None => 0.0,
    };
    let kappa = kappa_t + kappa_i + kappa_d;
    let kappa_r = match config.topology {
        Topology::AddThrough => kappa_t,
        Topology::AddDrop => kappa_d,
    };
    Ok(LossBudget {
        kappa_t,
        kappa_i,
        kappa_d,
        kappa,
        rho: kappa_r / kappa,
        fsr: config.fsr(),
        topology: config.topology,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimumPump {
    /// Watts.
    pub power: f64,
    /// Minimal intracavity photon number κ/g0.
    pub photons: f64,
}

pub fn min_pump_power(
    budget: &LossBudget,
    g0: f64,
    omega_l: f64,
) -> Result<MinimumPump, UnitsError> {
    if !(g0 > 0.0) {
        return Err(UnitsError::NonPositiveGain(g0));
    }
    let k = budget.kappa;
    Ok(MinimumPump {
        power: HBAR * omega_l * k.powi(3) / (2.0 * g0 * budget.kappa_t),
        photons: k / g0,
    })
}

pub fn threshold_pump_power(
    budget: &LossBudget,
    g0: f64,
    omega_l: f64,
    sigma: f64,
) -> Result<f64, UnitsError> {
    let p_min = min_pump_power(budget, g0, omega_l)?.power;
    let s = 1.0 + sigma / budget.kappa;
    Ok(p_min * (1.0 + s * s))
}

/// Near-threshold roll order. A zero radicand returns `Ok(0)`, the boundary
/// where the instability band closes.
pub fn predicted_roll_order(sigma: f64, kappa: f64, zeta2: f64) -> Result<u32, UnitsError> {
    let radicand = 2.0 * (sigma + 2.0 * kappa) / zeta2;
    if radicand == 0.0 && zeta2 != 0.0 {
        return Ok(0);
    }
    if !(radicand.is_finite() && radicand > 0.0) {
        return Err(UnitsError::NoRollOrder { radicand });
    }
    // f64::round breaks ties away from zero
    Ok(radicand.sqrt().round() as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedParams {
    pub alpha: f64,
    pub beta: f64,
    pub f: f64,
    pub g0_over_kappa: f64,
}

impl NormalizedParams {
    pub fn f_squared(&self) -> f64 {
        self.f * self.f
    }
}

pub fn normalize(
    config: &ResonatorConfig,
    budget: &LossBudget,
) -> Result<NormalizedParams, UnitsError> {
    config.validate()?;
    let k = budget.kappa;
    let g0 = config.g0();
    let a_in = pump_photon_flux(config.pump_power, config.omega_l())?;
    Ok(NormalizedParams {
        alpha: -config.detuning / k,
        beta: -config.zeta2() / k,
        f: (2.0 * g0 * budget.kappa_t / k.powi(3)).sqrt() * a_in,
        g0_over_kappa: g0 / k,
    })
}

/// g0 = γ v_g² ħω_L / (2πa).
pub fn g0_from_gamma(gamma: f64, group_velocity: f64, radius: f64, omega_l: f64) -> f64 {
    gamma * group_velocity * group_velocity * HBAR * omega_l / (2.0 * PI * radius)
}

pub fn gamma_from_g0(g0: f64, group_velocity: f64, radius: f64, omega_l: f64) -> f64 {
    g0 * 2.0 * PI * radius / (group_velocity * group_velocity * HBAR * omega_l)
}

/// β₂ = −ζ₂ / (v_g ζ₁²).
pub fn beta2_from_zeta2(zeta2: f64, group_velocity: f64, fsr: f64) -> f64 {
    -zeta2 / (group_velocity * fsr * fsr)
}

pub fn zeta2_from_beta2(beta2: f64, group_velocity: f64, fsr: f64) -> f64 {
    -beta2 * group_velocity * fsr * fsr
}

/// A_in = sqrt(P/ħω_L), in s^(-1/2).
pub fn pump_photon_flux(power: f64, omega_l: f64) -> Result<f64, UnitsError> {
    if !(power >= 0.0) {
        return Err(UnitsError::NegativePower(power));
    }
    Ok((power / (HBAR * omega_l)).sqrt())
}

/// Rough effective-area estimate (λ/n_g)^(7/6) a^(5/6), in m².
///
/// Advisory only; it tends to overestimate and is not used by any spectrum.
pub fn effective_area_estimate(wavelength: f64, group_index: f64, radius: f64) -> f64 {
    (wavelength / group_index).powf(7.0 / 6.0) * radius.powf(5.0 / 6.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn crystalline_disk() -> ResonatorConfig {
        ResonatorConfig {
            pump_wavelength: 1550e-9,
            radius: 2.5e-3,
            group_index: 1.43,
            intrinsic_q: 1e9,
            through_q: 0.25e9,
            drop_q: None,
            topology: Topology::AddThrough,
            nonlinearity: Nonlinearity::Gamma(1e-3),
            dispersion: Dispersion::Zeta2(2.0 * PI * 2.9e3),
            pump_power: 2.5e-3,
            detuning: 0.0,
        }
    }

    #[test]
    fn linewidth_and_rho() {
        let cfg = crystalline_disk();
        let b = derive_loss_budget(&cfg).unwrap();
        // independent: ω = 2πc/λ, 2κ = ω/Q_t + ω/Q_i
        let w = 2.0 * PI * 299_792_458.0 / 1550e-9;
        let full = w / 0.25e9 + w / 1e9;
        assert_relative_eq!(b.full_linewidth(), full, max_relative = 1e-14);
        assert!((b.full_linewidth() / (2.0 * PI) - 0.967e6).abs() < 0.01e6);
        assert_relative_eq!(b.rho, 0.8, max_relative = 1e-12);
    }

    #[test]
    fn add_drop_symmetric_rho() {
        let mut cfg = crystalline_disk();
        cfg.topology = Topology::AddDrop;
        cfg.intrinsic_q = 1e9;
        cfg.through_q = 1e9;
        cfg.drop_q = Some(1e9);
        let b = derive_loss_budget(&cfg).unwrap();
        assert_relative_eq!(b.rho, 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(b.kappa, b.kappa_t + b.kappa_i + b.kappa_d);
    }

    #[test]
    fn missing_drop_q_is_an_error() {
        let mut cfg = crystalline_disk();
        cfg.topology = Topology::AddDrop;
        assert_eq!(derive_loss_budget(&cfg), Err(UnitsError::MissingDropQ));
    }

    #[test]
    fn rho_vanishes_without_out_coupling() {
        let mut cfg = crystalline_disk();
        cfg.through_q = 1e30;
        let b = derive_loss_budget(&cfg).unwrap();
        assert!(b.rho < 1e-20);
    }

    #[test]
    fn g0_matches_quoted_value() {
        let cfg = crystalline_disk();
        let g0 = cfg.g0() / (2.0 * PI);
        assert!((g0 - 57.2e-6).abs() / 57.2e-6 < 0.02, "g0/2π = {g0}");
    }

    #[test]
    fn g0_gamma_round_trip() {
        let cfg = crystalline_disk();
        let g = cfg.g0();
        let back = gamma_from_g0(g, cfg.group_velocity(), cfg.radius, cfg.omega_l());
        assert_relative_eq!(back, 1e-3, max_relative = 1e-12);
        assert_eq!(g0_from_gamma(0.0, 1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn minimum_and_threshold_power() {
        let cfg = crystalline_disk();
        let b = derive_loss_budget(&cfg).unwrap();
        let p = min_pump_power(&b, cfg.g0(), cfg.omega_l()).unwrap();
        assert!((p.power - 2.06e-3).abs() / 2.06e-3 < 0.01, "{}", p.power);
        let pth = threshold_pump_power(&b, cfg.g0(), cfg.omega_l(), -b.kappa).unwrap();
        assert_relative_eq!(pth, p.power, max_relative = 1e-15);
        let p0 = threshold_pump_power(&b, cfg.g0(), cfg.omega_l(), 0.0).unwrap();
        assert_relative_eq!(p0, 2.0 * p.power, max_relative = 1e-15);
        assert_relative_eq!(p.photons, b.kappa / cfg.g0());
        assert!(min_pump_power(&b, 0.0, cfg.omega_l()).is_err());
    }

    #[test]
    fn roll_order_values() {
        let cfg = crystalline_disk();
        let b = derive_loss_budget(&cfg).unwrap();
        let z = cfg.zeta2();
        assert_eq!(predicted_roll_order(-b.kappa, b.kappa, z).unwrap(), 18);
        assert_eq!(predicted_roll_order(-2.0 * b.kappa, b.kappa, z).unwrap(), 0);
        assert!(predicted_roll_order(-3.0 * b.kappa, b.kappa, z).is_err());
        assert!(predicted_roll_order(0.0, 1.0, 0.0).is_err());
        // radicand 2(σ+2κ)/ζ₂ = 6.25 -> 2.5 -> ties away from zero
        assert_eq!(predicted_roll_order(1.125, 1.0, 1.0).unwrap(), 3);
    }

    #[test]
    fn normalized_parameters() {
        let mut cfg = crystalline_disk();
        let b = derive_loss_budget(&cfg).unwrap();
        cfg.detuning = -b.kappa;
        let n = normalize(&cfg, &b).unwrap();
        assert_relative_eq!(n.alpha, 1.0, max_relative = 1e-15);
        let p_min = min_pump_power(&b, cfg.g0(), cfg.omega_l()).unwrap().power;
        assert_relative_eq!(n.f_squared(), 2.5e-3 / p_min, max_relative = 1e-12);
        assert!((n.f_squared() - 1.214).abs() < 0.01);
        cfg.pump_power = p_min;
        assert_relative_eq!(normalize(&cfg, &b).unwrap().f, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn photon_flux() {
        assert_eq!(pump_photon_flux(0.0, 1e15).unwrap(), 0.0);
        let w = 1.2e15;
        assert_relative_eq!(
            pump_photon_flux(HBAR * w, w).unwrap(),
            1.0,
            max_relative = 1e-15
        );
        let w = crystalline_disk().omega_l();
        let a2 = pump_photon_flux(2.06e-3, w).unwrap().powi(2);
        assert!((a2 - 1.61e16).abs() / 1.61e16 < 0.005, "{a2}");
        assert!(pump_photon_flux(-1.0, w).is_err());
    }

    #[test]
    fn crystalline_minimum_power_is_milliwatt_scale() {
        // 10 GHz FSR, γ ≈ 1 W⁻¹km⁻¹, Q = 1e9 on both ports
        let n_g = 1.5;
        let radius = SPEED_OF_LIGHT / n_g / (2.0 * PI * 10e9);
        let cfg = ResonatorConfig {
            radius,
            group_index: n_g,
            intrinsic_q: 1e9,
            through_q: 1e9,
            nonlinearity: Nonlinearity::Gamma(1e-3),
            ..crystalline_disk()
        };
        let b = derive_loss_budget(&cfg).unwrap();
        let p = min_pump_power(&b, cfg.g0(), cfg.omega_l()).unwrap().power;
        assert!(p > 1e-4 && p < 1e-2, "{p}");
    }

    proptest! {
        #[test]
        fn dispersion_round_trip(z in -1e6f64..1e6, vg in 1e7f64..3e8, fsr in 1e9f64..1e12) {
            let b2 = beta2_from_zeta2(z, vg, fsr);
            let back = zeta2_from_beta2(b2, vg, fsr);
            prop_assert!((back - z).abs() <= 1e-12 * z.abs().max(1e-300));
        }

        #[test]
        fn q_round_trip(q in 1e3f64..1e12, w in 1e14f64..1e16) {
            let k = kappa_from_q(w, q);
            prop_assert!((q_from_kappa(w, k) - q).abs() <= 1e-12 * q);
        }

        #[test]
        fn pmin_quadratic_in_kappa_at_fixed_rho(scale in 1.01f64..10.0, rho in 0.05f64..0.95) {
            let k = 1e6;
            let mk = |k: f64| LossBudget {
                kappa_t: rho * k, kappa_i: (1.0 - rho) * k, kappa_d: 0.0, kappa: k, rho, fsr: 1e11,
                topology: Topology::AddThrough,
            };
            let p1 = min_pump_power(&mk(k), 1.0, 1e15).unwrap().power;
            let p2 = min_pump_power(&mk(scale * k), 1.0, 1e15).unwrap().power;
            prop_assert!(p2 > p1);
            prop_assert!((p2 / p1 - scale * scale).abs() < 1e-10 * scale * scale);
        }

        #[test]
        fn rho_increases_with_out_coupling(kt in 1e3f64..1e7, dk in 1.0f64..1e6, ki in 1e3f64..1e7) {
            let r1 = kt / (kt + ki);
            let r2 = (kt + dk) / (kt + dk + ki);
            prop_assert!(r2 > r1);
        }

        #[test]
        fn threshold_never_below_minimum(s in -20.0f64..20.0) {
            let b = LossBudget { kappa_t: 0.8, kappa_i: 0.2, kappa_d: 0.0, kappa: 1.0, rho: 0.8, fsr: 1.0,
                topology: Topology::AddThrough };
            let pmin = min_pump_power(&b, 1.0, 1.0).unwrap().power;
            let pth = threshold_pump_power(&b, 1.0, 1.0, s).unwrap();
            prop_assert!(pth >= pmin);
        }
    }
}

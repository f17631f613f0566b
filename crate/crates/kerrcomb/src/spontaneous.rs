//! Below-threshold emission: spontaneous four-wave-mixing spectra of the
//! sidemode pairs around a flat state, their fluxes, the total emitted power
//! and the two-mode pair statistics.

use crate::series::{fmt, linspace, ComplexSeries, SpectrumSeries};
use crate::steady_state::{FlatStateBranches, ModalParams};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

type C64 = Complex64;

#[derive(Debug, Error)]
pub enum SpontaneousError {
    #[error(
        "linearization breaks down for mode {l}: κ² - g² + ξ² = {gap:.3e} (large quantum fluctuations just below threshold)"
    )]
    Divergence { l: i64, gap: f64 },
    #[error("mode {l} sits on the weak/strong regime boundary g² = κ² + ξ² (unphysical divergence of the flux)")]
    RegimeSingularity { l: i64 },
    #[error("ζ₂ = 0 gives an unphysical divergence of the total power")]
    NoDispersion,
    #[error(
        "pump is not very weak: linear photon number {photons:.3e} exceeds 1e-2 κ/g0 = {limit:.3e}"
    )]
    NotVeryWeak { photons: f64, limit: f64 },
    #[error("squeezing parameter must be non-negative, got {0}")]
    NegativeSqueezing(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Flat-state quantities that set the sidemode spectra. Rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SfwmParams {
    pub kappa: f64,
    pub rho: f64,
    pub sigma: f64,
    pub zeta2: f64,
    pub g0: f64,
    /// Intracavity pump amplitude 𝒜₀.
    #[serde(skip)]
    pub a0: C64,
    /// Photon energy ħω_L in joules; only used for power conversion.
    pub hbar_omega: f64,
}

impl SfwmParams {
    pub fn from_flat(params: &ModalParams, flat: &FlatStateBranches, hbar_omega: f64) -> Self {
        SfwmParams {
            kappa: params.kappa,
            rho: params.rho,
            sigma: params.sigma,
            zeta2: params.zeta2,
            g0: params.g0,
            a0: flat.a0(),
            hbar_omega,
        }
    }

    /// Parameters given directly by the pump-induced rate g = g0|𝒜₀|².
    pub fn from_rates(kappa: f64, rho: f64, sigma: f64, zeta2: f64, g: f64) -> Self {
        SfwmParams {
            kappa,
            rho,
            sigma,
            zeta2,
            g0: 1.0,
            a0: C64::new(g.max(0.0).sqrt(), 0.0),
            hbar_omega: 1.0,
        }
    }

    /// g = g0|𝒜₀|².
    pub fn g(&self) -> f64 {
        self.g0 * self.a0.norm_sqr()
    }

    /// ξ_l = σ - ζ₂l²/2 + 2g.
    pub fn xi(&self, l: i64) -> f64 {
        self.sigma - 0.5 * self.zeta2 * (l * l) as f64 + 2.0 * self.g()
    }

    /// 𝒟_l(ω) with ω in rad/s.
    pub fn denominator(&self, l: i64, omega: f64) -> C64 {
        let (k, g, xi) = (self.kappa, self.g(), self.xi(l));
        C64::new(k * k - g * g + xi * xi - omega * omega, -2.0 * k * omega)
    }

    /// κ² - g² + ξ_l², the value of 𝒟_l at ω = 0.
    fn gap(&self, l: i64) -> f64 {
        let (k, g, xi) = (self.kappa, self.g(), self.xi(l));
        k * k - g * g + xi * xi
    }

    fn check_gap(&self, l: i64) -> Result<(), SpontaneousError> {
        let gap = self.gap(l);
        let scale = self.kappa * self.kappa + self.xi(l).powi(2);
        if self.g() > 0.0 && gap.abs() <= 1e-12 * scale {
            return Err(SpontaneousError::Divergence { l, gap });
        }
        Ok(())
    }

    /// S_sp,l at one frequency (rad/s).
    pub fn density(&self, l: i64, omega: f64) -> f64 {
        let (k, g) = (self.kappa, self.g());
        4.0 * self.rho * k * k * g * g / self.denominator(l, omega).norm_sqr()
    }
}

/// Spectral density of the output photon flux of sidemode l on an ω/κ grid.
pub fn spontaneous_spectrum(
    p: &SfwmParams,
    l: i64,
    omega_over_kappa: &[f64],
) -> Result<SpectrumSeries, SpontaneousError> {
    p.check_gap(l)?;
    let values = omega_over_kappa
        .iter()
        .map(|&x| p.density(l, x * p.kappa))
        .collect();
    Ok(SpectrumSeries::new(
        omega_over_kappa.to_vec(),
        values,
        format!("S_sp,{l}"),
    ))
}

/// 2048 points over [-20κ, 20κ], widened to ±(ω_m + 10κ) for double peaks.
pub fn default_grid(p: &SfwmParams, l: i64) -> Vec<f64> {
    let half = match classify_lineshape(p, l).peak_frequencies.last() {
        Some(&wm) if wm > 0.0 => (wm / p.kappa + 10.0).max(20.0),
        _ => 20.0,
    };
    linspace(-half, half, 2048)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LineShapeKind {
    SinglePeaked,
    DoublePeaked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineShape {
    pub kind: LineShapeKind,
    /// rad/s; {0} or {-ω_m, ω_m}.
    pub peak_frequencies: Vec<f64>,
    pub peak_value: f64,
}

/// Single peak iff ξ_l² ≤ κ² + g², else peaks at ±sqrt(ξ_l² - κ² - g²).
pub fn classify_lineshape(p: &SfwmParams, l: i64) -> LineShape {
    let (k, g, xi) = (p.kappa, p.g(), p.xi(l));
    let excess = xi * xi - k * k - g * g;
    if excess <= 0.0 {
        LineShape {
            kind: LineShapeKind::SinglePeaked,
            peak_frequencies: vec![0.0],
            peak_value: p.density(l, 0.0),
        }
    } else {
        let wm = excess.sqrt();
        LineShape {
            kind: LineShapeKind::DoublePeaked,
            peak_frequencies: vec![-wm, wm],
            peak_value: p.density(l, wm),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope {
    pub l: Vec<i64>,
    pub values: Vec<f64>,
    pub kinds: Vec<LineShapeKind>,
    /// Sidemodes where the discrete envelope has a local maximum.
    pub peaks: Vec<i64>,
    /// Continuous maxima ±sqrt(2(σ + 2g)/ζ₂) when the radicand is positive.
    pub predicted_peak: Option<f64>,
}

/// Peak height of each sidemode spectrum over a range of l.
pub fn spectrum_envelope(p: &SfwmParams, l_range: std::ops::RangeInclusive<i64>) -> Envelope {
    let (k, g) = (p.kappa, p.g());
    let mut out = Envelope {
        l: vec![],
        values: vec![],
        kinds: vec![],
        peaks: vec![],
        predicted_peak: None,
    };
    for l in l_range {
        let xi = p.xi(l);
        let shape = classify_lineshape(p, l);
        let v = match shape.kind {
            LineShapeKind::SinglePeaked => {
                4.0 * p.rho * g * g * k * k / (k * k - g * g + xi * xi).powi(2)
            }
            LineShapeKind::DoublePeaked => p.rho * g * g / (xi * xi - g * g),
        };
        out.l.push(l);
        out.values.push(v);
        out.kinds.push(shape.kind);
    }
    let v = &out.values;
    for i in 0..v.len() {
        let left = i == 0 || v[i] > v[i - 1];
        let right = i + 1 == v.len() || v[i] >= v[i + 1];
        if left && right && v.len() > 1 && v[i] > 0.0 {
            out.peaks.push(out.l[i]);
        }
    }
    if p.zeta2 != 0.0 {
        let rad = 2.0 * (p.sigma + 2.0 * g) / p.zeta2;
        if rad > 0.0 {
            out.predicted_peak = Some(rad.sqrt());
        }
    }
    out
}

impl Envelope {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["l", "S_env", "kind"])?;
        for ((l, v), kind) in self.l.iter().zip(&self.values).zip(&self.kinds) {
            let kind = match kind {
                LineShapeKind::SinglePeaked => "single",
                LineShapeKind::DoublePeaked => "double",
            };
            wr.write_record([l.to_string(), fmt(*v), kind.to_string()])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxRegime {
    Weak,
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SidemodeFlux {
    pub l: i64,
    /// Photons per second.
    pub rate: f64,
    /// Watts.
    pub power: f64,
    pub regime: FluxRegime,
}

/// Integrated output flux (1/2π)∫S_sp,l dω of sidemode l.
///
/// In the strong regime the integral evaluates to
/// ρκ²g²/((g² - κ² - ξ²)·sqrt(g² - ξ²)).
pub fn sidemode_flux(p: &SfwmParams, l: i64) -> Result<SidemodeFlux, SpontaneousError> {
    let (k, g, xi) = (p.kappa, p.g(), p.xi(l));
    let (k2, g2, x2) = (k * k, g * g, xi * xi);
    let edge = g2 - k2 - x2;
    if g > 0.0 && edge.abs() <= 1e-12 * (k2 + x2) {
        return Err(SpontaneousError::RegimeSingularity { l });
    }
    let (rate, regime) = if edge < 0.0 {
        (p.rho * k * g2 / (k2 - g2 + x2), FluxRegime::Weak)
    } else {
        (
            p.rho * k2 * g2 / (edge * (g2 - x2).sqrt()),
            FluxRegime::Strong,
        )
    };
    Ok(SidemodeFlux {
        l,
        rate,
        power: p.hbar_omega * rate,
        regime,
    })
}

pub fn write_flux_csv<W: Write>(rows: &[SidemodeFlux], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["l", "R_out", "P_out_watts", "regime"])?;
    for r in rows {
        let regime = match r.regime {
            FluxRegime::Weak => "weak",
            FluxRegime::Strong => "strong",
        };
        wr.write_record([
            r.l.to_string(),
            fmt(r.rate),
            fmt(r.power),
            regime.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VeryWeakFlux {
    pub l: i64,
    pub rate: f64,
    pub r_max: f64,
    pub power: f64,
}

/// Sidemode flux when pump depletion and Kerr shifts are negligible.
pub fn very_weak_flux(
    params: &ModalParams,
    l: i64,
    hbar_omega: f64,
) -> Result<VeryWeakFlux, SpontaneousError> {
    check_very_weak(params)?;
    let r_max = max_photon_rate(params);
    let (k, s) = (params.kappa, params.sigma);
    let shifted = s - 0.5 * params.zeta2 * (l * l) as f64;
    let rate = r_max / ((1.0 + (s / k).powi(2)).powi(2) * (1.0 + (shifted / k).powi(2)));
    Ok(VeryWeakFlux {
        l,
        rate,
        r_max,
        power: hbar_omega * rate,
    })
}

/// R_max = 4ρ g0² κ_t² / κ⁵ · (P/ħω_L)².
pub fn max_photon_rate(params: &ModalParams) -> f64 {
    let flux = params.a_in * params.a_in;
    4.0 * params.rho * params.g0.powi(2) * params.kappa_t.powi(2) / params.kappa.powi(5)
        * flux
        * flux
}

fn check_very_weak(params: &ModalParams) -> Result<(), SpontaneousError> {
    let photons = 2.0 * params.kappa_t * params.a_in * params.a_in
        / (params.kappa.powi(2) + params.sigma.powi(2));
    let limit = 1e-2 * params.kappa / params.g0;
    if photons > limit {
        return Err(SpontaneousError::NotVeryWeak { photons, limit });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TotalPower {
    /// Continuous approximation ħω R_max ∫dl (...), evaluated exactly, watts.
    pub closed_form: f64,
    /// The same integral with the bracket [1 + sgn(σ/ζ₂)/sqrt(1+(σ/κ)²)]^½;
    /// equal to `closed_form` only at σ = 0.
    pub printed_form: f64,
    /// Σ over sidemodes 0 < |l| ≤ l_max, watts.
    pub sidemode_sum: f64,
    /// The l = 0 term, which the continuous integral also counts.
    pub pump_mode_term: f64,
    pub l_max: i64,
}

impl TotalPower {
    /// Discrete sum over every l, the counterpart of the integral.
    pub fn full_sum(&self) -> f64 {
        self.sidemode_sum + self.pump_mode_term
    }
}

/// Total spontaneous power emitted in the very-weak regime.
pub fn total_spontaneous_power(
    params: &ModalParams,
    hbar_omega: f64,
) -> Result<TotalPower, SpontaneousError> {
    if params.zeta2 == 0.0 {
        return Err(SpontaneousError::NoDispersion);
    }
    check_very_weak(params)?;
    let (k, z) = (params.kappa, params.zeta2);
    let r_max = max_photon_rate(params);
    let s2 = (params.sigma / k).powi(2);
    let sgn = if params.sigma == 0.0 {
        0.0
    } else {
        (params.sigma / z).signum()
    };
    let base = hbar_omega * r_max * PI * (k / z.abs()).sqrt() * (1.0 + s2).powf(-2.25);
    // ∫dl/(1 + (s - ζ₂l²/2κ)²) = π sqrt(κ/|ζ₂|) (1+s²)^(-1/4) [1 + s sgn(ζ₂)/sqrt(1+s²)]^½
    let closed_form = base * (1.0 + params.sigma / k * z.signum() / (1.0 + s2).sqrt()).sqrt();
    let printed_form = base * (1.0 + sgn / (1.0 + s2).sqrt()).sqrt();

    let peak = (2.0 * params.sigma / z).max(0.0).sqrt();
    let tail = (2e4 * k / z.abs()).sqrt();
    let l_max = (10.0 * peak).max(tail).ceil() as i64;
    let term = |l: i64| very_weak_flux(params, l, hbar_omega).map(|f| f.power);
    let mut sidemode_sum = 0.0;
    for l in 1..=l_max {
        sidemode_sum += 2.0 * term(l)?;
    }
    Ok(TotalPower {
        closed_form,
        printed_form,
        sidemode_sum,
        pump_mode_term: term(0)?,
        l_max,
    })
}

/// Output correlation of the l and -l operators on an ω/κ grid.
pub fn pair_correlation(
    p: &SfwmParams,
    l: i64,
    omega_over_kappa: &[f64],
) -> Result<ComplexSeries, SpontaneousError> {
    p.check_gap(l)?;
    let k = p.kappa;
    let r_l = C64::new(-k, p.xi(l));
    let s_l = C64::i() * p.g0 * p.a0 * p.a0;
    let values = omega_over_kappa
        .iter()
        .map(|&x| {
            let w = x * k;
            let d = p.denominator(l, w);
            -p.rho
                * (2.0 * k * s_l / d.norm_sqr())
                * (d.conj() + 2.0 * k * (r_l.conj() - C64::i() * w))
        })
        .collect();
    Ok(ComplexSeries {
        omega: omega_over_kappa.to_vec(),
        values,
        label: format!("C_{l}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairStatistics {
    /// P(n) for n = 0..=n_max.
    pub probabilities: Vec<f64>,
    /// Probability of more than n_max pairs.
    pub tail: f64,
    pub mean_pairs: f64,
}

/// Photon-pair number distribution of a two-mode squeezed vacuum.
pub fn pair_statistics(r: f64, n_max: usize) -> Result<PairStatistics, SpontaneousError> {
    if !(r >= 0.0) {
        return Err(SpontaneousError::NegativeSqueezing(r));
    }
    let t2 = r.tanh().powi(2);
    let c2 = r.cosh().powi(2);
    let probabilities: Vec<f64> = (0..=n_max)
        .scan(1.0 / c2, |p, _| {
            let v = *p;
            *p *= t2;
            Some(v)
        })
        .collect();
    Ok(PairStatistics {
        probabilities,
        tail: t2.powi(n_max as i32 + 1),
        mean_pairs: r.sinh().powi(2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn reference_rates() -> SfwmParams {
        SfwmParams::from_rates(1.0, 0.5, 0.5, 0.01, 0.1)
    }

    /// (1/2π)∫ f over the real line by composite Gauss-Legendre on panels
    /// concentrated near the peaks, plus the analytic ω⁻⁴ tails.
    fn integrate(p: &SfwmParams, l: i64) -> f64 {
        let nodes = [
            (-0.906179845938664, 0.236926885056189),
            (-0.538469310105683, 0.478628670499366),
            (0.0, 0.568888888888889),
            (0.538469310105683, 0.478628670499366),
            (0.906179845938664, 0.236926885056189),
        ];
        let cut = 200.0 * p.kappa;
        let n = 40000;
        let h = 2.0 * cut / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            let a = -cut + i as f64 * h;
            for (x, w) in nodes {
                acc += w * 0.5 * h * p.density(l, a + 0.5 * h * (1.0 + x));
            }
        }
        // S ~ 4ρκ²g²/ω⁴ beyond the cut
        let g = p.g();
        acc += 2.0 * 4.0 * p.rho * p.kappa.powi(2) * g * g / (3.0 * cut.powi(3));
        acc / (2.0 * PI)
    }

    #[test]
    fn zero_pump_gives_no_emission() {
        let p = SfwmParams::from_rates(1.0, 0.5, 0.5, 0.01, 0.0);
        let s = spontaneous_spectrum(&p, 3, &linspace(-5.0, 5.0, 11)).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert_eq!(sidemode_flux(&p, 3).unwrap().rate, 0.0);
        assert!(pair_correlation(&p, 3, &[0.0, 1.0])
            .unwrap()
            .values
            .iter()
            .all(|c| c.norm() == 0.0));
    }

    #[test]
    fn reference_central_value() {
        let p = reference_rates();
        let s = spontaneous_spectrum(&p, 1, &[0.0]).unwrap();
        // ξ_1 = 0.695, 𝒟_1(0) = 1 - 0.01 + 0.695²
        let d = 1.0 - 0.01 + 0.695f64.powi(2);
        assert_relative_eq!(s.values[0], 0.02 / (d * d), max_relative = 1e-12);
        assert_relative_eq!(s.values[0], 9.22e-3, max_relative = 1e-3);
    }

    #[test]
    fn reference_lineshapes() {
        let p = reference_rates();
        assert_eq!(classify_lineshape(&p, 1).kind, LineShapeKind::SinglePeaked);
        assert_eq!(classify_lineshape(&p, -1).kind, LineShapeKind::SinglePeaked);
        let s25 = classify_lineshape(&p, 25);
        let s50 = classify_lineshape(&p, 50);
        assert_eq!(s25.kind, LineShapeKind::DoublePeaked);
        assert_eq!(s50.kind, LineShapeKind::DoublePeaked);
        assert_relative_eq!(p.xi(25), -2.425, max_relative = 1e-12);
        assert_relative_eq!(s25.peak_frequencies[1], 2.207, max_relative = 1e-3);
        assert!(s50.peak_frequencies[1] > s25.peak_frequencies[1]);
        assert_eq!(
            classify_lineshape(&p, 100_000).kind,
            LineShapeKind::DoublePeaked
        );
    }

    #[test]
    fn grid_numerics_reproduce_the_classification() {
        for sigma in [0.5, 5.0, -5.0] {
            let p = SfwmParams::from_rates(1.0, 0.5, sigma, 0.01, 0.1);
            for l in -100..=100i64 {
                let shape = classify_lineshape(&p, l);
                let grid = default_grid(&p, l);
                let s = spontaneous_spectrum(&p, l, &grid).unwrap();
                let v = &s.values;
                let maxima: Vec<f64> = (1..v.len() - 1)
                    .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1])
                    .map(|i| grid[i])
                    .collect();
                match shape.kind {
                    LineShapeKind::SinglePeaked => {
                        assert!(maxima.len() <= 1, "l={l}");
                        // flat tops near the boundary may fall between grid points
                        assert!(maxima.iter().all(|w| w.abs() < 0.1), "l={l} {maxima:?}");
                    }
                    LineShapeKind::DoublePeaked => {
                        let wm = shape.peak_frequencies[1];
                        if wm > 0.2 {
                            assert_eq!(maxima.len(), 2, "l={l}");
                            assert!((maxima[1] - wm).abs() < 0.05, "l={l}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn at_threshold_is_a_divergence() {
        // g = κ and ξ_0 = 0
        let p = SfwmParams::from_rates(1.0, 0.5, -2.0, 0.01, 1.0);
        assert!(matches!(
            spontaneous_spectrum(&p, 0, &[0.0]),
            Err(SpontaneousError::Divergence { .. })
        ));
    }

    #[test]
    fn parseval_weak_regime() {
        for (sigma, g, l) in [(0.5, 0.1, 1), (0.5, 0.1, 25), (-1.0, 0.4, 3), (2.0, 0.7, 0)] {
            let p = SfwmParams::from_rates(1.0, 0.6, sigma, 0.01, g);
            let f = sidemode_flux(&p, l).unwrap();
            assert_eq!(f.regime, FluxRegime::Weak);
            assert_relative_eq!(integrate(&p, l), f.rate, max_relative = 1e-3);
        }
    }

    #[test]
    fn parseval_strong_regime() {
        // g² > κ² + ξ²: ξ_l = σ - ζ₂l²/2 + 2g small
        for (sigma, g, l) in [(-3.0, 1.4, 0), (-2.5, 1.2, 2), (-3.2, 1.6, 1)] {
            let p = SfwmParams::from_rates(1.0, 0.6, sigma, 0.01, g);
            let f = sidemode_flux(&p, l).unwrap();
            assert_eq!(f.regime, FluxRegime::Strong, "ξ = {}", p.xi(l));
            assert_relative_eq!(integrate(&p, l), f.rate, max_relative = 1e-3);
        }
    }

    #[test]
    fn regime_boundary_is_refused() {
        // ξ_0 = 0 and g = κ puts mode 0 on the boundary
        let p = SfwmParams::from_rates(1.0, 0.5, -2.0, 0.01, 1.0);
        assert!(matches!(
            sidemode_flux(&p, 0),
            Err(SpontaneousError::RegimeSingularity { l: 0 })
        ));
    }

    #[test]
    fn envelope_peaks_by_detuning() {
        let cases = [(5.0, 32), (0.5, 12)];
        for (sigma, expect) in cases {
            let p = SfwmParams::from_rates(1.0, 0.5, sigma, 0.01, 0.1);
            let env = spectrum_envelope(&p, -60..=60);
            assert_eq!(env.peaks, vec![-expect, expect], "σ = {sigma}");
            assert_eq!(env.predicted_peak.unwrap().round() as i64, expect);
        }
        let p = SfwmParams::from_rates(1.0, 0.5, -5.0, 0.01, 0.1);
        let env = spectrum_envelope(&p, -60..=60);
        assert_eq!(env.peaks, vec![0]);
        assert!(env.predicted_peak.is_none());
        assert!(env.kinds.iter().all(|k| *k == LineShapeKind::DoublePeaked));
    }

    #[test]
    fn envelope_touches_the_peaks() {
        let p = reference_rates();
        let env = spectrum_envelope(&p, -80..=80);
        for (l, v) in env.l.iter().zip(&env.values) {
            let shape = classify_lineshape(&p, *l);
            assert_relative_eq!(*v, shape.peak_value, max_relative = 1e-12);
            let s = spontaneous_spectrum(&p, *l, &default_grid(&p, *l)).unwrap();
            assert!(*v >= s.max().1 - 1e-12);
        }
    }

    fn weak_params(power_scale: f64, sigma: f64, zeta2: f64) -> ModalParams {
        // κ = 1, g0 = 1 normalization; F² small keeps the pump very weak
        let mut p = ModalParams::normalized(-sigma, -zeta2, 1.0, 0.5);
        p.a_in *= power_scale;
        p
    }

    #[test]
    fn very_weak_resonant_pump_mode_equals_r_max() {
        let p = weak_params(1e-3, 0.0, 0.02);
        let f = very_weak_flux(&p, 0, 2.0).unwrap();
        assert_relative_eq!(f.rate, f.r_max, max_relative = 1e-15);
        assert_relative_eq!(f.power, 2.0 * f.r_max, max_relative = 1e-15);
    }

    #[test]
    fn critical_coupling_power_formula() {
        // ρ = 1/2 means κ_t = κ/2; ζ₂ negligible
        let hw = 1.3e-19;
        let mut p = weak_params(1e-3, 0.0, 1e-12);
        p.kappa = 2.0;
        p.kappa_t = 1.0;
        p.g0 = 0.01;
        let photon_flux = p.a_in * p.a_in;
        let f = very_weak_flux(&p, 5, hw).unwrap();
        let expect = hw * p.g0.powi(2) / (2.0 * p.kappa.powi(3)) * photon_flux * photon_flux;
        assert_relative_eq!(f.power, expect, max_relative = 1e-9);
    }

    #[test]
    fn very_weak_is_the_small_g_limit() {
        let p = weak_params(0.05, 0.7, 0.02);
        let flat =
            crate::steady_state::solve_flat_state(&p, crate::steady_state::BranchChoice::Adiabatic);
        let s = SfwmParams::from_flat(&p, &flat, 1.0);
        assert!(s.g() < 1e-2);
        for l in [0, 3, 10] {
            let a = very_weak_flux(&p, l, 1.0).unwrap().rate;
            let b = sidemode_flux(&s, l).unwrap().rate;
            assert_relative_eq!(a, b, max_relative = 1e-2);
        }
    }

    #[test]
    fn strong_pumping_is_not_very_weak() {
        let p = ModalParams::normalized(1.0, -0.02, 0.9, 0.5);
        assert!(matches!(
            very_weak_flux(&p, 0, 1.0),
            Err(SpontaneousError::NotVeryWeak { .. })
        ));
    }

    #[test]
    fn total_power_closed_form_against_sum() {
        for (sigma, zeta2) in [
            (0.0, 0.02),
            (1.5, 0.01),
            (-1.5, 0.01),
            (0.5, 0.002),
            (-3.0, -0.01),
            (3.0, -0.01),
        ] {
            let p = weak_params(1e-3, sigma, zeta2);
            let t = total_spontaneous_power(&p, 1.0).unwrap();
            let rel = (t.full_sum() - t.closed_form).abs() / t.closed_form;
            assert!(rel < 0.02, "σ={sigma} ζ₂={zeta2}: {rel}");
        }
        let p = weak_params(1e-3, 0.0, 0.02);
        let t = total_spontaneous_power(&p, 1.0).unwrap();
        let r_max = max_photon_rate(&p);
        assert_relative_eq!(
            t.closed_form,
            r_max * PI * (1.0 / 0.02f64).sqrt(),
            max_relative = 1e-14
        );
        assert_eq!(t.closed_form, t.printed_form);
        // away from resonance the printed bracket misses the sum
        let t = total_spontaneous_power(&weak_params(1e-3, 1.5, 0.01), 1.0).unwrap();
        assert!((t.full_sum() - t.printed_form).abs() / t.full_sum() > 0.05);
    }

    #[test]
    fn total_power_scales_with_inverse_root_dispersion() {
        let a = total_spontaneous_power(&weak_params(1e-3, 0.4, 0.01), 1.0).unwrap();
        let b = total_spontaneous_power(&weak_params(1e-3, 0.4, 0.04), 1.0).unwrap();
        assert_relative_eq!(b.closed_form, 0.5 * a.closed_form, max_relative = 1e-14);
    }

    #[test]
    fn total_power_needs_dispersion() {
        let p = weak_params(1e-3, 0.0, 0.0);
        assert!(matches!(
            total_spontaneous_power(&p, 1.0),
            Err(SpontaneousError::NoDispersion)
        ));
    }

    #[test]
    fn correlation_vanishes_without_outcoupling() {
        let p = SfwmParams {
            rho: 0.0,
            ..reference_rates()
        };
        let c = pair_correlation(&p, 4, &linspace(-3.0, 3.0, 7)).unwrap();
        assert!(c.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn correlation_golden_values() {
        let c = pair_correlation(&reference_rates(), 1, &[0.0, 1.0]).unwrap();
        let s = spontaneous_spectrum(&reference_rates(), 1, &[0.0, 1.0]).unwrap();
        for (z, v) in c.values.iter().zip(&s.values) {
            // ρ = 1/2: half of the pure-state bound
            assert!(z.norm_sqr() < v * (v + 1.0));
        }
        assert_relative_eq!(c.values[0].norm(), 6.8511e-2, max_relative = 1e-4);
    }

    #[test]
    fn pair_statistics_cases() {
        let s = pair_statistics(0.0, 5).unwrap();
        assert_eq!(s.probabilities[0], 1.0);
        assert!(s.probabilities[1..].iter().all(|&p| p == 0.0));
        let s = pair_statistics(0.5, 200).unwrap();
        let mean: f64 = s
            .probabilities
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum();
        assert_relative_eq!(mean, 0.27155, max_relative = 1e-4);
        assert_relative_eq!(mean, s.mean_pairs, max_relative = 1e-12);
        assert!(pair_statistics(-0.1, 3).is_err());
    }

    proptest! {
        #[test]
        fn spectrum_symmetries(sigma in -5.0..5.0f64, g in 0.0..0.9f64, l in -60i64..60, w in -30.0..30.0f64) {
            let p = SfwmParams::from_rates(1.0, 0.5, sigma, 0.013, g);
            prop_assume!(p.gap(l).abs() > 1e-6);
            let a = p.density(l, w);
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, p.density(l, -w));
            prop_assert_eq!(a, p.density(-l, w));
        }

        #[test]
        fn pure_pairs_saturate_the_two_mode_bound(
            sigma in -3.0..3.0f64, g in 0.01..0.9f64, l in 0i64..40, w in -5.0..5.0f64,
            phase in -3.0..3.0f64, rho in 0.05..1.0f64,
        ) {
            let mut p = SfwmParams::from_rates(1.0, 1.0, sigma, 0.01, g);
            p.a0 *= C64::from_polar(1.0, phase);
            prop_assume!(p.gap(l).abs() > 1e-3);
            let c = pair_correlation(&p, l, &[w]).unwrap().values[0];
            let s = p.density(l, w * p.kappa);
            // ρ = 1 is a pure two-mode squeezed state: |C|² = S(S + 1)
            prop_assert!((c.norm_sqr() - s * (s + 1.0)).abs() <= 1e-9 * s * (s + 1.0));
            let q = SfwmParams { rho, ..p };
            let cq = pair_correlation(&q, l, &[w]).unwrap().values[0];
            prop_assert!((cq - rho * c).norm() <= 1e-12 * c.norm());
            let sq = q.density(l, w * p.kappa);
            prop_assert!(cq.norm_sqr() <= sq * (sq + 1.0) * (1.0 + 1e-12));
        }

        #[test]
        fn pair_probabilities_sum_to_one(r in 0.0..3.0f64, n_max in 0usize..60) {
            let s = pair_statistics(r, n_max).unwrap();
            let total: f64 = s.probabilities.iter().sum::<f64>() + s.tail;
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}

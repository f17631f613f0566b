//! Output quantum noise above threshold: correlation matrices of the pair
//! quadratures, quadrature spectra at arbitrary angle, the closed-form
//! three-mode spectra, and the search for the most squeezed angle.
//!
//! Quadrature vectors are ordered (q0_1..q0_K, q1_1..q1_K) in the pair-rotated
//! frame of [`QuadratureJacobian`]; spectra are normalized to shot noise.

use crate::linearization::QuadratureJacobian;
use crate::series::SpectrumSeries;
use nalgebra::{DMatrix, DVector, Hessenberg};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::{FRAC_PI_2, PI};
use thiserror::Error;

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Relative pivot below which J_q/κ + iω counts as singular. The neutral
/// translation mode leaves a pivot of ~1e-12 at ω = 0 after rounding.
const SINGULAR: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum SqueezingError {
    #[error("ρ must lie in (0, 1], got {0}")]
    Rho(f64),
    #[error("J_q ± iω is singular at ω/κ = {0} (neutral mode)")]
    Resolvent(f64),
    #[error("pair index {l} outside 1..={k}")]
    Pair { l: usize, k: usize },
    #[error("quadrature spectrum has an imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),
    #[error("frequency band [{0}, {1}] holds fewer than two grid points")]
    EmptyBand(f64, f64),
}

fn check_rho(rho: f64, allow_zero: bool) -> Result<(), SqueezingError> {
    let low_ok = if allow_zero { rho >= 0.0 } else { rho > 0.0 };
    if !(low_ok && rho <= 1.0) {
        return Err(SqueezingError::Rho(rho));
    }
    Ok(())
}

/// Normalized photon-number-difference spectrum of a three-mode comb.
pub fn photon_number_difference_spectrum(
    rho: f64,
    omega_over_kappa: &[f64],
) -> Result<SpectrumSeries, SqueezingError> {
    check_rho(rho, false)?;
    let values = omega_over_kappa
        .iter()
        .map(|&x| 1.0 - rho * 4.0 / (x * x + 4.0))
        .collect();
    Ok(SpectrumSeries::new(
        omega_over_kappa.to_vec(),
        values,
        "S_N",
    ))
}

/// C_in = [[I, iI], [-iI, I]].
pub fn input_correlation(k: usize) -> DMatrix<C64> {
    let mut c = DMatrix::zeros(2 * k, 2 * k);
    for a in 0..k {
        c[(a, a)] = C64::new(1.0, 0.0);
        c[(k + a, k + a)] = C64::new(1.0, 0.0);
        c[(a, k + a)] = I;
        c[(k + a, a)] = -I;
    }
    c
}

/// C_in·v without forming C_in.
fn apply_input(v: &[C64]) -> Vec<C64> {
    let k = v.len() / 2;
    let mut out = vec![ZERO; 2 * k];
    for a in 0..k {
        out[a] = v[a] + I * v[k + a];
        out[k + a] = -I * v[a] + v[k + a];
    }
    out
}

/// Dense C_out(ω) = M C_in M† + 4ρ(1-ρ) G C_in G†, with
/// G = κ(J_q + iω)⁻¹ and M = 2ρG + I.
pub fn output_correlation(
    q: &QuadratureJacobian,
    rho: f64,
    omega_over_kappa: f64,
) -> Result<DMatrix<C64>, SqueezingError> {
    check_rho(rho, true)?;
    let n = 2 * q.k;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { I * omega_over_kappa } else { ZERO };
        C64::new(q.jq[(i, j)] / q.kappa, 0.0) + d
    });
    let lu = a.lu();
    let u = lu.u();
    let scale = q.jq.iter().fold(0.0f64, |m, v| m.max(v.abs())) / q.kappa + omega_over_kappa.abs();
    let pivot = u
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, z| m.min(z.norm()));
    if !(pivot > SINGULAR * scale.max(1e-300)) {
        return Err(SqueezingError::Resolvent(omega_over_kappa));
    }
    let g = lu
        .try_inverse()
        .ok_or(SqueezingError::Resolvent(omega_over_kappa))?;
    let cin = input_correlation(q.k);
    let m = g.map(|z| 2.0 * rho * z) + DMatrix::identity(n, n);
    let noise = 4.0 * rho * (1.0 - rho);
    Ok(&m * &cin * m.adjoint() + (&g * &cin * g.adjoint()).map(|z| noise * z))
}

/// S_{φ,l} from a dense C_out.
pub fn quadrature_value(c: &DMatrix<C64>, l: usize, phi: f64) -> Result<f64, SqueezingError> {
    let k = c.nrows() / 2;
    if l == 0 || l > k {
        return Err(SqueezingError::Pair { l, k });
    }
    let (i, j) = (l - 1, k + l - 1);
    let (s, co) = phi.sin_cos();
    let v = c[(i, i)] * co * co + c[(j, j)] * s * s + (c[(i, j)] + c[(j, i)]) * co * s;
    check_real(v)
}

fn check_real(v: C64) -> Result<f64, SqueezingError> {
    if v.im.abs() > 1e-10 * v.re.abs().max(1.0) {
        return Err(SqueezingError::ImaginaryResidue(v.im));
    }
    Ok(v.re)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureSpectrum {
    pub l: usize,
    /// Angle relative to the pair phase Φ_l.
    pub delta_phi: f64,
    /// Absolute angle Φ_l + δΦ.
    pub phi: f64,
    pub series: SpectrumSeries,
}

/// Per-pair quadrature moments on a frequency grid: C11_ll, C22_ll and
/// (C12 + C21)_ll.
#[derive(Debug, Clone)]
pub struct QuadratureSweep {
    pub k: usize,
    pub rho: f64,
    /// ω/κ of the evaluated points (singular points dropped).
    pub omega: Vec<f64>,
    /// Grid points where the resolvent was singular.
    pub skipped: Vec<f64>,
    pub pairs: Vec<usize>,
    /// Indexed [pair position][frequency].
    moments: Vec<Vec<[f64; 3]>>,
    phases: Vec<f64>,
}

/// Upper Hessenberg form of J_qᵀ/κ, so every frequency costs O(n²) per
/// right-hand side.
struct HessenbergResolvent {
    q: DMatrix<f64>,
    h: DMatrix<f64>,
    scale: f64,
}

impl HessenbergResolvent {
    fn new(jq: &DMatrix<f64>, kappa: f64) -> Self {
        let scale = jq.iter().fold(0.0f64, |m, v| m.max(v.abs())) / kappa;
        let (q, h) = Hessenberg::new(jq.transpose() / kappa).unpack();
        HessenbergResolvent { q, h, scale }
    }

    /// Rows `rows` of G = (J_q/κ + iω)⁻¹, from (H + iω) y = Qᵀ e_i.
    fn rows(&self, omega: f64, rows: &[usize]) -> Option<Vec<Vec<C64>>> {
        let n = self.h.nrows();
        let mut a: Vec<C64> = self.h.iter().map(|&v| C64::new(v, 0.0)).collect();
        // column-major
        let at = |i: usize, j: usize| j * n + i;
        for d in 0..n {
            a[at(d, d)] += I * omega;
        }
        let mut rhs: Vec<Vec<C64>> = rows
            .iter()
            .map(|&r| (0..n).map(|j| C64::new(self.q[(r, j)], 0.0)).collect())
            .collect();
        // Givens sweep down the subdiagonal
        for c in 0..n.saturating_sub(1) {
            let (x, y) = (a[at(c, c)], a[at(c + 1, c)]);
            let r = (x.norm_sqr() + y.norm_sqr()).sqrt();
            if r == 0.0 {
                continue;
            }
            let (cs, sn) = (x / r, y / r);
            for j in c..n {
                let (u, v) = (a[at(c, j)], a[at(c + 1, j)]);
                a[at(c, j)] = cs.conj() * u + sn.conj() * v;
                a[at(c + 1, j)] = -sn * u + cs * v;
            }
            for b in rhs.iter_mut() {
                let (u, v) = (b[c], b[c + 1]);
                b[c] = cs.conj() * u + sn.conj() * v;
                b[c + 1] = -sn * u + cs * v;
            }
        }
        let pivot = (0..n).fold(f64::INFINITY, |m, d| m.min(a[at(d, d)].norm()));
        if !(pivot > SINGULAR * (self.scale + omega.abs()).max(1e-300)) {
            return None;
        }
        let mut out = Vec::with_capacity(rows.len());
        for b in rhs {
            let mut y = b;
            for i in (0..n).rev() {
                let mut s = y[i];
                for j in i + 1..n {
                    s -= a[at(i, j)] * y[j];
                }
                y[i] = s / a[at(i, i)];
            }
            let x = DVector::from_vec(y);
            let qx = self.q.map(|v| C64::new(v, 0.0)) * x;
            out.push(qx.iter().copied().collect());
        }
        Some(out)
    }
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Quadrature moments of the requested pairs over a grid of ω/κ.
pub fn quadrature_sweep(
    q: &QuadratureJacobian,
    rho: f64,
    omega_over_kappa: &[f64],
    pairs: &[usize],
) -> Result<QuadratureSweep, SqueezingError> {
    check_rho(rho, true)?;
    for &l in pairs {
        if l == 0 || l > q.k {
            return Err(SqueezingError::Pair { l, k: q.k });
        }
    }
    let k = q.k;
    let res = HessenbergResolvent::new(&q.jq, q.kappa);
    let rows: Vec<usize> = pairs.iter().flat_map(|&l| [l - 1, k + l - 1]).collect();
    let noise = 4.0 * rho * (1.0 - rho);
    let points: Vec<Result<Option<Vec<[f64; 3]>>, SqueezingError>> = omega_over_kappa
        .par_iter()
        .map(|&w| {
            let g = match res.rows(w, &rows) {
                Some(g) => g,
                None => return Ok(None),
            };
            let mut per_pair = Vec::with_capacity(pairs.len());
            for (p, _) in pairs.iter().enumerate() {
                let (i, j) = (rows[2 * p], rows[2 * p + 1]);
                let (gi, gj) = (&g[2 * p], &g[2 * p + 1]);
                let mut mi: Vec<C64> = gi.iter().map(|z| 2.0 * rho * z).collect();
                let mut mj: Vec<C64> = gj.iter().map(|z| 2.0 * rho * z).collect();
                mi[i] += 1.0;
                mj[j] += 1.0;
                let (ci, cj) = (apply_input(&mi), apply_input(&mj));
                let (ni, nj) = (apply_input(gi), apply_input(gj));
                let c = |m_row: &[C64], cm: &[C64], g_row: &[C64], cg: &[C64]| {
                    dot(cm, m_row) + noise * dot(cg, g_row)
                };
                // C_ab = m_a C_in m_b† with the row vectors m
                let c11 = c(&mi, &ci, gi, &ni);
                let c22 = c(&mj, &cj, gj, &nj);
                let c12 = dot(&ci, &mj) + noise * dot(&ni, gj);
                let c21 = dot(&cj, &mi) + noise * dot(&nj, gi);
                per_pair.push([check_real(c11)?, check_real(c22)?, check_real(c12 + c21)?]);
            }
            Ok(Some(per_pair))
        })
        .collect();
    let mut out = QuadratureSweep {
        k,
        rho,
        omega: vec![],
        skipped: vec![],
        pairs: pairs.to_vec(),
        moments: vec![Vec::new(); pairs.len()],
        phases: pairs.iter().map(|&l| q.phase(l)).collect(),
    };
    for (&w, pt) in omega_over_kappa.iter().zip(points) {
        match pt? {
            Some(v) => {
                out.omega.push(w);
                for (p, m) in v.into_iter().enumerate() {
                    out.moments[p].push(m);
                }
            }
            None => out.skipped.push(w),
        }
    }
    Ok(out)
}

impl QuadratureSweep {
    fn position(&self, l: usize) -> Result<usize, SqueezingError> {
        self.pairs
            .iter()
            .position(|&p| p == l)
            .ok_or(SqueezingError::Pair { l, k: self.k })
    }

    /// S_{Φ_l+δΦ, l} on the sweep grid.
    pub fn spectrum(&self, l: usize, delta_phi: f64) -> Result<QuadratureSpectrum, SqueezingError> {
        let p = self.position(l)?;
        let (s, c) = delta_phi.sin_cos();
        let values = self.moments[p]
            .iter()
            .map(|m| m[0] * c * c + m[1] * s * s + m[2] * c * s)
            .collect();
        Ok(QuadratureSpectrum {
            l,
            delta_phi,
            phi: self.phases[p] + delta_phi,
            series: SpectrumSeries::new(self.omega.clone(), values, format!("S_{l}")),
        })
    }

    /// Trapezoid integrals of the three moments over band.0 ≤ |ω/κ| ≤ band.1.
    fn band_integrals(&self, p: usize, band: (f64, f64)) -> Result<[f64; 3], SqueezingError> {
        let inside = |w: f64| w.abs() >= band.0 && w.abs() <= band.1;
        let mut acc = [0.0; 3];
        let mut used = 0;
        for i in 1..self.omega.len() {
            let (w0, w1) = (self.omega[i - 1], self.omega[i]);
            if inside(w0) && inside(w1) && w0.signum() == w1.signum() {
                let (a, b) = (self.moments[p][i - 1], self.moments[p][i]);
                for c in 0..3 {
                    acc[c] += 0.5 * (w1 - w0) * (a[c] + b[c]);
                }
                used += 1;
            }
        }
        if used == 0 {
            return Err(SqueezingError::EmptyBand(band.0, band.1));
        }
        Ok(acc)
    }
}

/// Two-sided grid of ω/κ that skips zero: ±geometric from `min` to `max`.
pub fn default_omega_grid(min: f64, max: f64, points_per_side: usize) -> Vec<f64> {
    let n = points_per_side.max(2);
    let r = (max / min).ln();
    let pos: Vec<f64> = (0..n)
        .map(|i| min * (r * i as f64 / (n - 1) as f64).exp())
        .collect();
    pos.iter()
        .rev()
        .map(|w| -w)
        .chain(pos.iter().copied())
        .collect()
}

/// Closed-form three-mode spectra S_a and S_p on a grid of ω/κ.
///
/// S_p is 1 + ρ(4κ_a²/ω²)[1 + 4κ_p²/(ω² + 4κ_a²)]; it is infinite at ω = 0.
pub fn analytic_three_mode_spectra(
    kappa_a: f64,
    kappa_p: f64,
    rho: f64,
    kappa: f64,
    omega_over_kappa: &[f64],
) -> (SpectrumSeries, SpectrumSeries) {
    let ka2 = 4.0 * kappa_a * kappa_a;
    let kp2 = 4.0 * kappa_p * kappa_p;
    let mut sa = Vec::with_capacity(omega_over_kappa.len());
    let mut sp = Vec::with_capacity(omega_over_kappa.len());
    for &x in omega_over_kappa {
        let w2 = (x * kappa).powi(2);
        sa.push(1.0 - rho * ka2 / (w2 + ka2));
        sp.push(if w2 == 0.0 {
            f64::INFINITY
        } else {
            1.0 + rho * ka2 / w2 * (1.0 + kp2 / (w2 + ka2))
        });
    }
    (
        SpectrumSeries::new(omega_over_kappa.to_vec(), sa, "S_a"),
        SpectrumSeries::new(omega_over_kappa.to_vec(), sp, "S_p"),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AngleOptions {
    /// |ω|/κ range of the band-integrated objective.
    pub band: (f64, f64),
    pub scan_points: usize,
    pub tolerance: f64,
}

impl Default for AngleOptions {
    fn default() -> Self {
        AngleOptions {
            band: (0.1, 10.0),
            scan_points: 181,
            tolerance: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizedAngle {
    pub l: usize,
    pub phi_l: f64,
    pub delta_phi: f64,
    pub objective: f64,
    pub multi_minimum: bool,
    pub degenerate: bool,
    pub spectrum: QuadratureSpectrum,
}

/// Minimize ∫_band S_{Φ_l+δ, l} dω over one period δ ∈ [-π/2, π/2).
///
/// The spectrum is π-periodic in the angle, so this covers every quadrature.
/// Soliton pairs can squeeze far from δ = 0 (the bright comb near -π/2).
pub fn optimize_quadrature_angle(
    sweep: &QuadratureSweep,
    l: usize,
    options: &AngleOptions,
) -> Result<OptimizedAngle, SqueezingError> {
    let p = sweep.position(l)?;
    let [a, b, c] = sweep.band_integrals(p, options.band)?;
    let f = |d: f64| {
        let (s, co) = d.sin_cos();
        a * co * co + b * s * s + c * s * co
    };
    let n = options.scan_points.max(4);
    let h = PI / n as f64;
    let grid: Vec<f64> = (0..n).map(|i| -FRAC_PI_2 + h * i as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&d| f(d)).collect();
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let degenerate = hi - lo <= 1e-12 * (a.abs() + b.abs()).max(1e-300);
    let best = (0..n)
        .min_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap())
        .unwrap_or(0);
    // cyclic neighbours: the grid wraps at ±π/2
    let minima = (0..n)
        .filter(|&i| vals[i] < vals[(i + n - 1) % n] && vals[i] <= vals[(i + 1) % n])
        .count();
    let delta = if degenerate {
        0.0
    } else {
        wrap_half(golden(
            &f,
            grid[best] - h,
            grid[best] + h,
            options.tolerance,
        ))
    };
    Ok(OptimizedAngle {
        l,
        phi_l: sweep.phases[p],
        delta_phi: delta,
        objective: f(delta),
        multi_minimum: !degenerate && minima > 1,
        degenerate,
        spectrum: sweep.spectrum(l, delta)?,
    })
}

/// Reduce an angle to [-π/2, π/2).
fn wrap_half(x: f64) -> f64 {
    (x + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2
}

fn golden(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

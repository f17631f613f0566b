//! Linearized fluctuation dynamics around a stationary comb: the modal block
//! Jacobian J_a = [[R, S], [S*, R*]], its spectrum, pair phases, and the real
//! quadrature Jacobian J_q acting on the antisymmetric pair combinations.

use crate::series::fmt;
use crate::spectral::Grid;
use crate::steady_state::{CombState, Pattern, MODE_FLOOR};
use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// States with a larger relative residual are refused.
pub const RESIDUAL_GATE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum LinearizationError {
    #[error("state is not stationary (residual {0:.3e}); refine it first")]
    Unconverged(f64),
    #[error("state has no mirror-symmetric frame (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("three-mode rates need a Roll with exactly three active modes, got {0}")]
    NotThreeMode(String),
    #[error("eigenvalue iteration did not converge for a block of size {0}")]
    Eigen(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// R and S blocks of the modal fluctuation Jacobian, in rad/s.
#[derive(Debug, Clone)]
pub struct BlockJacobian {
    pub k: usize,
    pub kappa: f64,
    pub r: DMatrix<C64>,
    pub s: DMatrix<C64>,
}

impl BlockJacobian {
    fn idx(&self, l: i64) -> usize {
        (l + self.k as i64) as usize
    }

    /// Assembled 2(2K+1) complex matrix acting on (δa, δa*).
    pub fn ja(&self) -> DMatrix<C64> {
        let n = 2 * self.k + 1;
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&self.r);
        j.view_mut((0, n), (n, n)).copy_from(&self.s);
        j.view_mut((n, 0), (n, n))
            .copy_from(&self.s.map(|z| z.conj()));
        j.view_mut((n, n), (n, n))
            .copy_from(&self.r.map(|z| z.conj()));
        j
    }

    /// d(δa)/dt = R δa + S δa*.
    pub fn apply(&self, da: &[C64]) -> Vec<C64> {
        let n = da.len();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| self.r[(i, j)] * da[j] + self.s[(i, j)] * da[j].conj())
                    .sum()
            })
            .collect()
    }

    /// Real matrix on (Re δa, Im δa); similar to J_a, so it has the same
    /// eigenvalues.
    pub fn real_form(&self) -> DMatrix<f64> {
        let n = 2 * self.k + 1;
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                let (r, s) = (self.r[(i, j)], self.s[(i, j)]);
                m[(i, j)] = r.re + s.re;
                m[(i, n + j)] = -r.im + s.im;
                m[(n + i, j)] = r.im + s.im;
                m[(n + i, n + j)] = r.re - s.re;
            }
        }
        m
    }

    /// 2×2 block of J_a coupling δa_l with δa_{-l}*.
    pub fn pair_block(&self, l: i64) -> [[C64; 2]; 2] {
        let (a, b) = (self.idx(l), self.idx(-l));
        [
            [self.r[(a, a)], self.s[(a, b)]],
            [self.s[(b, a)].conj(), self.r[(b, b)].conj()],
        ]
    }
}

pub fn build_modal_jacobian(state: &CombState) -> Result<BlockJacobian, LinearizationError> {
    if !(state.residual_norm <= RESIDUAL_GATE) {
        return Err(LinearizationError::Unconverged(state.residual_norm));
    }
    Ok(modal_jacobian_unchecked(state))
}

/// Jacobian without the stationarity gate (finite-difference checks use it
/// away from fixed points).
pub fn modal_jacobian_unchecked(state: &CombState) -> BlockJacobian {
    let p = &state.params;
    let k = state.k as i64;
    let n = state.amplitudes.len();
    let mut grid = Grid::new(state.k);
    let (pk, qk) = grid.kernels(&state.amplitudes);
    let off = 2 * k;
    let mut r = DMatrix::zeros(n, n);
    let mut s = DMatrix::zeros(n, n);
    for (i, l) in (-k..=k).enumerate() {
        for (j, q) in (-k..=k).enumerate() {
            let mut v = 2.0 * I * p.g0 * pk[(l - q + off) as usize];
            if i == j {
                let l2 = (l * l) as f64;
                v += C64::new(-p.kappa, p.sigma - 0.5 * p.zeta2 * l2);
            }
            r[(i, j)] = v;
            s[(i, j)] = I * p.g0 * qk[(l + q + off) as usize];
        }
    }
    BlockJacobian {
        k: state.k,
        kappa: p.kappa,
        r,
        s,
    }
}

#[derive(Debug, Clone)]
pub struct StabilitySpectrum {
    /// Sorted by decreasing real part.
    pub eigenvalues: Vec<C64>,
    pub max_real: f64,
    /// max Re λ ≤ 1e-6 κ.
    pub stable: bool,
    /// Sizes of the independent real blocks that were diagonalized.
    pub blocks: Vec<usize>,
}

/// All eigenvalues of J_a.
///
/// The real form is split into the connected components of its coupling
/// graph (rolls only couple modes in matching residue classes) and, when a
/// component is mirror symmetric, into even and odd parts.
pub fn stability_spectrum(jac: &BlockJacobian) -> Result<StabilitySpectrum, LinearizationError> {
    let m = jac.real_form();
    let n = 2 * jac.k + 1;
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-13 * scale;

    // union-find over modes
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut c = i;
        while p[c] != r {
            let nx = p[c];
            p[c] = r;
            c = nx;
        }
        r
    }
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let w = m[(i, j)].abs()
                    + m[(i, n + j)].abs()
                    + m[(n + i, j)].abs()
                    + m[(n + i, n + j)].abs();
                if w > tol {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        parent[a] = b;
                    }
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }

    let mut eigenvalues = Vec::with_capacity(2 * n);
    let mut blocks = Vec::new();
    for modes in groups.values() {
        let vars: Vec<usize> = modes
            .iter()
            .copied()
            .chain(modes.iter().map(|&i| n + i))
            .collect();
        let sub = DMatrix::from_fn(vars.len(), vars.len(), |a, b| m[(vars[a], vars[b])]);
        for block in mirror_split(&sub, modes, n, tol) {
            blocks.push(block.nrows());
            eigenvalues.extend(eigen(&block)?);
        }
    }
    eigenvalues.sort_by(|a, b| {
        b.re.partial_cmp(&a.re)
            .unwrap()
            .then(b.im.partial_cmp(&a.im).unwrap())
    });
    let max_real = eigenvalues
        .first()
        .map(|z| z.re)
        .unwrap_or(f64::NEG_INFINITY);
    Ok(StabilitySpectrum {
        eigenvalues,
        max_real,
        stable: max_real <= 1e-6 * jac.kappa,
        blocks,
    })
}

/// Even/odd reduction under l -> -l when the component is invariant.
fn mirror_split(sub: &DMatrix<f64>, modes: &[usize], n: usize, tol: f64) -> Vec<DMatrix<f64>> {
    let c = modes.len();
    let pos = |i: usize| modes.iter().position(|&x| x == i);
    let mirror: Option<Vec<usize>> = modes.iter().map(|&i| pos(n - 1 - i)).collect();
    let mirror = match mirror {
        Some(v) if c > 1 => v,
        _ => return vec![sub.clone()],
    };
    let pm = |a: usize| if a < c { mirror[a] } else { c + mirror[a - c] };
    let symmetric =
        (0..2 * c).all(|a| (0..2 * c).all(|b| (sub[(pm(a), pm(b))] - sub[(a, b)]).abs() <= tol));
    if !symmetric {
        return vec![sub.clone()];
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut even: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut odd: Vec<Vec<(usize, f64)>> = Vec::new();
    for part in 0..2 {
        for a in 0..c {
            let b = mirror[a];
            let (x, y) = (part * c + a, part * c + b);
            if a == b {
                even.push(vec![(x, 1.0)]);
            } else if a < b {
                even.push(vec![(x, h), (y, h)]);
                odd.push(vec![(x, h), (y, -h)]);
            }
        }
    }
    let project = |basis: &Vec<Vec<(usize, f64)>>| {
        DMatrix::from_fn(basis.len(), basis.len(), |i, j| {
            let mut acc = 0.0;
            for &(a, wa) in &basis[i] {
                for &(b, wb) in &basis[j] {
                    acc += wa * wb * sub[(a, b)];
                }
            }
            acc
        })
    };
    let mut out = vec![project(&even)];
    if !odd.is_empty() {
        out.push(project(&odd));
    }
    out
}

fn eigen(m: &DMatrix<f64>) -> Result<Vec<C64>, LinearizationError> {
    let n = m.nrows();
    if n == 1 {
        return Ok(vec![C64::new(m[(0, 0)], 0.0)]);
    }
    for (eps, iters) in [(1e-14, 400 * n), (1e-12, 4000 * n)] {
        if let Some(s) = Schur::try_new(m.clone(), eps, iters) {
            return Ok(s.complex_eigenvalues().iter().copied().collect());
        }
    }
    Err(LinearizationError::Eigen(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairPhase {
    pub l: i64,
    /// Φ_l with 2Φ_l = φ_l + φ_{-l} reduced to (-π, π].
    pub phi: f64,
    /// False when either mode of the pair is below the oscillation floor.
    pub defined: bool,
}

pub fn pair_phases(state: &CombState) -> Vec<PairPhase> {
    let max = state.max_intensity();
    (1..=state.k as i64)
        .map(|l| {
            let (a, b) = (state.amplitude(l), state.amplitude(-l));
            let defined =
                max > 0.0 && a.norm_sqr() > MODE_FLOOR * max && b.norm_sqr() > MODE_FLOOR * max;
            PairPhase {
                l,
                phi: 0.5 * wrap(a.arg() + b.arg()),
                defined,
            }
        })
        .collect()
}

/// Reduce an angle to (-π, π].
fn wrap(x: f64) -> f64 {
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}

/// Translate the pattern so that A_l = A_{-l}; returns the shifted state and
/// the shift θc (A_l -> A_l e^{-ilθc}).
pub fn symmetric_frame(state: &CombState) -> Result<(CombState, f64), LinearizationError> {
    let k = state.k as i64;
    let c: Vec<C64> = (1..=k)
        .map(|l| state.amplitude(l) * state.amplitude(-l).conj())
        .collect();
    let objective = |th: f64| -> f64 {
        c.iter()
            .enumerate()
            .map(|(i, z)| (z * C64::from_polar(1.0, -2.0 * (i + 1) as f64 * th)).re)
            .sum()
    };
    let dominant = c
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .filter(|(_, z)| z.norm() > 0.0)
        .map(|(i, z)| (i as i64 + 1, z.arg()));
    let (ld, arg) = match dominant {
        Some(v) => v,
        None => return Ok((state.clone(), 0.0)),
    };
    // candidates maximize the dominant pair term; ties go to the frame with
    // the brightest peak at θ = 0, then to the smallest shift
    let mut best: Option<(f64, f64, f64)> = None;
    let mut theta = 0.0;
    for j in 0..2 * ld {
        let mut th = (arg + 2.0 * PI * j as f64) / (2.0 * ld as f64);
        for _ in 0..30 {
            let (mut d1, mut d2) = (0.0, 0.0);
            for (i, z) in c.iter().enumerate() {
                let m = 2.0 * (i + 1) as f64;
                let w = z * C64::from_polar(1.0, -m * th);
                d1 += m * w.im;
                d2 -= m * m * w.re;
            }
            if d2 >= 0.0 {
                break;
            }
            let step = d1 / d2;
            th -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        th = wrap(th);
        let peak: C64 = state.translated(th).amplitudes.iter().sum();
        let key = (objective(th), peak.norm_sqr(), th.abs());
        let better = match best {
            None => true,
            Some((o, p, t)) => {
                if (key.0 - o).abs() > 1e-9 * o.abs().max(1e-300) {
                    key.0 > o
                } else if (key.1 - p).abs() > 1e-9 * p.abs().max(1e-300) {
                    key.1 > p
                } else {
                    key.2 < t
                }
            }
        };
        if better {
            best = Some(key);
            theta = th;
        }
    }
    let shifted = state.translated(theta);
    let max = state.max_intensity().sqrt();
    let asym = (1..=k)
        .map(|l| (shifted.amplitude(l) - shifted.amplitude(-l)).norm())
        .fold(0.0, f64::max);
    if asym > 1e-6 * max {
        return Err(LinearizationError::NotSymmetric(asym / max));
    }
    Ok((shifted, theta))
}

/// Quadrature Jacobian acting on (q0_1..q0_K, q1_1..q1_K) where
/// q0 = 2 Re d_l, q1 = 2 Im d_l and d_l = (δa_l - δa_{-l})/√2, with each pair
/// rotated by its Φ_l so that angle 0 is the pair's own amplitude quadrature.
#[derive(Debug, Clone)]
pub struct QuadratureJacobian {
    pub k: usize,
    pub kappa: f64,
    pub u_plus: DMatrix<C64>,
    pub u_minus: DMatrix<C64>,
    /// Unrotated J_q = [[Re U+, -Im U+], [Im U-, Re U-]] (rad/s).
    pub jq_lab: DMatrix<f64>,
    /// J_q in the pair-rotated frame (rad/s).
    pub jq: DMatrix<f64>,
    /// Φ_l used for the rotation (0 for inactive pairs), index l-1.
    pub pair_phases: Vec<PairPhase>,
    /// Translation applied to reach the mirror-symmetric frame.
    pub theta_shift: f64,
}

impl QuadratureJacobian {
    /// Φ_l of pair l (1-based).
    pub fn phase(&self, l: usize) -> f64 {
        let p = self.pair_phases[l - 1];
        if p.defined {
            p.phi
        } else {
            0.0
        }
    }
}

pub fn build_quadrature_jacobian(
    state: &CombState,
) -> Result<QuadratureJacobian, LinearizationError> {
    if !(state.residual_norm <= RESIDUAL_GATE) {
        return Err(LinearizationError::Unconverged(state.residual_norm));
    }
    let (sym, theta_shift) = symmetric_frame(state)?;
    let jac = modal_jacobian_unchecked(&sym);
    let k = state.k;
    let kk = k as i64;
    let id = |l: i64| (l + kk) as usize;
    let mut u_plus = DMatrix::zeros(k, k);
    let mut u_minus = DMatrix::zeros(k, k);
    for l in 1..=kk {
        for p in 1..=kk {
            let dr = jac.r[(id(l), id(p))] - jac.r[(id(l), id(-p))];
            let ds = (jac.s[(id(l), id(p))] - jac.s[(id(l), id(-p))]).conj();
            u_plus[((l - 1) as usize, (p - 1) as usize)] = dr + ds;
            u_minus[((l - 1) as usize, (p - 1) as usize)] = dr - ds;
        }
    }
    let mut lab = DMatrix::zeros(2 * k, 2 * k);
    for a in 0..k {
        for b in 0..k {
            lab[(a, b)] = u_plus[(a, b)].re;
            lab[(a, k + b)] = -u_plus[(a, b)].im;
            lab[(k + a, b)] = u_minus[(a, b)].im;
            lab[(k + a, k + b)] = u_minus[(a, b)].re;
        }
    }
    let phases = pair_phases(&sym);
    // q' = T q with T_l = [[cos Φ, sin Φ], [-sin Φ, cos Φ]]
    let mut t = DMatrix::<f64>::zeros(2 * k, 2 * k);
    for (a, ph) in phases.iter().enumerate() {
        let phi = if ph.defined { ph.phi } else { 0.0 };
        let (s, c) = phi.sin_cos();
        t[(a, a)] = c;
        t[(a, k + a)] = s;
        t[(k + a, a)] = -s;
        t[(k + a, k + a)] = c;
    }
    let jq = &t * &lab * t.transpose();
    Ok(QuadratureJacobian {
        k,
        kappa: state.params.kappa,
        u_plus,
        u_minus,
        jq_lab: lab,
        jq,
        pair_phases: phases,
        theta_shift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThreeModeRates {
    pub l: u32,
    pub kappa_a: f64,
    pub kappa_p: f64,
}

pub fn three_mode_rates(state: &CombState) -> Result<ThreeModeRates, LinearizationError> {
    let rates = triplet_rates(state)?;
    let max = state.max_intensity();
    let active = state
        .amplitudes
        .iter()
        .filter(|a| a.norm_sqr() > MODE_FLOOR * max)
        .count();
    if active != 3 {
        return Err(LinearizationError::NotThreeMode(format!(
            "{} active modes",
            active
        )));
    }
    Ok(rates)
}

/// Three-mode rates from the pump and the ±L pair of a roll, ignoring any
/// harmonics. Equals `three_mode_rates` when the roll has exactly three modes.
pub fn triplet_rates(state: &CombState) -> Result<ThreeModeRates, LinearizationError> {
    let l = match state.pattern {
        Pattern::Roll(l) => l as i64,
        other => return Err(LinearizationError::NotThreeMode(other.to_string())),
    };
    let max = state.max_intensity();
    if state.amplitude(l).norm_sqr() <= MODE_FLOOR * max {
        return Err(LinearizationError::NotThreeMode(format!(
            "mode {} is dark",
            l
        )));
    }
    let a0 = state.amplitude(0);
    let phi = 0.5 * (state.amplitude(l).arg() + state.amplitude(-l).arg());
    let x = 2.0 * a0.arg() - 2.0 * phi;
    let g0 = state.params.g0;
    let n0 = a0.norm_sqr();
    let nl = state.amplitude(l).norm_sqr();
    Ok(ThreeModeRates {
        l: l as u32,
        kappa_a: -g0 * n0 * x.sin(),
        kappa_p: g0 * (nl + n0 * x.cos()),
    })
}

/// Row-major complex matrix dump, Re/Im interleaved per entry.
pub fn write_complex_matrix_csv<W: Write>(
    m: &DMatrix<C64>,
    w: W,
) -> Result<(), LinearizationError> {
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    wr.write_record(&header)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .flat_map(|j| [fmt(m[(i, j)].re), fmt(m[(i, j)].im)])
            .collect();
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

/// Row-major real matrix dump; rows 0..K are q0_l (l = 1..K), then q1_l.
pub fn write_real_matrix_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<(), LinearizationError> {
    let mut wr = csv::Writer::from_writer(w);
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("c{j}")).collect();
    wr.write_record(&header)?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt(m[(i, j)])).collect();
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::steady_state::{
        propagate, refine, solve_flat_state, vector_field, BranchChoice, ModalParams, RefineOptions,
    };

    fn params(alpha: f64, f2: f64) -> ModalParams {
        ModalParams::normalized(alpha, -0.0059975, f2.sqrt(), 0.8)
    }

    fn three_mode_roll() -> CombState {
        let p = params(1.0, 1.05);
        let k = 18;
        let mut st = solve_flat_state(&p, BranchChoice::Adiabatic).to_state(&p, k);
        st.amplitudes[0] = C64::new(1e-3, 0.0);
        st.amplitudes[2 * k] = C64::new(1e-3, 0.0);
        let st = CombState::from_amplitudes(p, st.amplitudes);
        let run = propagate(&st, 2000.0, 0.05).unwrap().state;
        refine(&run, &RefineOptions::default()).unwrap()
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| {
            b.re.partial_cmp(&a.re)
                .unwrap()
                .then(b.im.partial_cmp(&a.im).unwrap())
        });
        v
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = params(1.3, 2.0);
        let amps: Vec<C64> = (0..9)
            .map(|i| C64::new(0.2 + 0.1 * i as f64, (0.7 * i as f64).sin() * 0.3))
            .collect();
        let st = CombState::from_amplitudes(p, amps.clone());
        let jac = modal_jacobian_unchecked(&st);
        let dir: Vec<C64> = (0..9)
            .map(|i| C64::new((1.1 * i as f64).cos(), 0.4 - 0.1 * i as f64))
            .collect();
        let h = 1e-5;
        let plus: Vec<C64> = amps.iter().zip(&dir).map(|(a, d)| a + h * d).collect();
        let minus: Vec<C64> = amps.iter().zip(&dir).map(|(a, d)| a - h * d).collect();
        let (fp, fm) = (vector_field(&p, &plus), vector_field(&p, &minus));
        let lin = jac.apply(&dir);
        for i in 0..9 {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!(
                (fd - lin[i]).norm() < 1e-8 * (1.0 + lin[i].norm()),
                "row {i}: {fd} vs {}",
                lin[i]
            );
        }
    }

    #[test]
    fn unconverged_states_are_refused() {
        let p = params(1.0, 1.0);
        let st = CombState::from_amplitudes(p, vec![C64::new(0.1, 0.0); 5]);
        assert!(matches!(
            build_modal_jacobian(&st),
            Err(LinearizationError::Unconverged(_))
        ));
    }

    #[test]
    fn flat_state_spectrum_matches_pair_formula() {
        // above threshold at α = 1: some pairs are MI-unstable
        let p = params(1.0, 1.6);
        let k = 24usize;
        let st = solve_flat_state(&p, BranchChoice::Adiabatic).to_state(&p, k);
        let spec = stability_spectrum(&build_modal_jacobian(&st).unwrap()).unwrap();
        let n = st.amplitude(0).norm_sqr();
        let mut expect = Vec::new();
        for l in 0..=k as i64 {
            let xi = p.sigma - 0.5 * p.zeta2 * (l * l) as f64 + 2.0 * p.g0 * n;
            let root = C64::new(p.g0 * p.g0 * n * n - xi * xi, 0.0).sqrt();
            let reps = if l == 0 { 1 } else { 2 };
            for _ in 0..reps {
                expect.push(-p.kappa + root);
                expect.push(-p.kappa - root);
            }
        }
        let (got, expect) = (sorted(spec.eigenvalues.clone()), sorted(expect));
        assert_eq!(got.len(), expect.len());
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).norm() < 1e-9, "{g} vs {e}");
        }
        assert!(!spec.stable);
        assert!(spec.blocks.iter().all(|&b| b <= 4));
    }

    #[test]
    fn split_spectrum_agrees_with_full_real_schur() {
        let st = three_mode_roll();
        let jac = build_modal_jacobian(&st).unwrap();
        let spec = stability_spectrum(&jac).unwrap();
        let full = Schur::new(jac.real_form()).complex_eigenvalues();
        let mut a: Vec<f64> = spec.eigenvalues.iter().map(|z| z.re).collect();
        let mut b: Vec<f64> = full.iter().map(|z| z.re).collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        b.sort_by(|x, y| x.partial_cmp(y).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        assert!(spec.blocks.len() > 2);
        // the Goldstone mode sits at zero and nothing grows
        assert!(spec.max_real.abs() < 1e-8, "{}", spec.max_real);
        assert!(spec.stable);
    }

    #[test]
    fn symmetric_frame_undoes_a_translation() {
        let st = three_mode_roll();
        let moved = st.translated(0.37);
        let (sym, theta) = symmetric_frame(&moved).unwrap();
        for l in 1..=st.k as i64 {
            assert!((sym.amplitude(l) - sym.amplitude(-l)).norm() < 1e-10);
        }
        assert!((sym.amplitude(0) - moved.amplitude(0)).norm() < 1e-15);
        let back = moved.translated(theta);
        assert!((back.amplitude(18) - sym.amplitude(18)).norm() < 1e-14);
    }

    #[test]
    fn quadrature_eigenvalues_are_odd_modal_eigenvalues() {
        let st = three_mode_roll();
        let q = build_quadrature_jacobian(&st).unwrap();
        let modal = stability_spectrum(&build_modal_jacobian(&st).unwrap())
            .unwrap()
            .eigenvalues;
        let eig = Schur::new(q.jq.clone()).complex_eigenvalues();
        for z in eig.iter() {
            let d = modal
                .iter()
                .map(|m| (m - z).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(d < 1e-8, "{z} not in modal spectrum");
        }
        // rotation is orthogonal
        let lab = Schur::new(q.jq_lab.clone()).complex_eigenvalues();
        let tr: f64 = lab.iter().map(|z| z.re).sum();
        assert!((tr - q.jq.trace()).abs() < 1e-9);
    }

    #[test]
    fn rotated_pair_block_is_three_mode_form() {
        let st = three_mode_roll();
        assert_eq!(st.pattern, Pattern::Roll(18));
        let rates = three_mode_rates(&st).unwrap();
        let q = build_quadrature_jacobian(&st).unwrap();
        let (i0, i1) = (17, st.k + 17);
        assert!(
            (q.jq[(i0, i0)] + 2.0 * rates.kappa_a).abs() < 1e-9,
            "{}",
            q.jq[(i0, i0)]
        );
        assert!((q.jq[(i1, i0)] + 2.0 * rates.kappa_p).abs() < 1e-9);
        assert!(q.jq[(i0, i1)].abs() < 1e-9 && q.jq[(i1, i1)].abs() < 1e-9);
        // at the stationary roll the amplitude quadrature damps at κ
        assert!((rates.kappa_a - st.params.kappa).abs() < 1e-8);
    }

    #[test]
    fn triplet_rates_ignore_harmonics() {
        let st = three_mode_roll();
        let exact = three_mode_rates(&st).unwrap();
        assert_eq!(triplet_rates(&st).unwrap(), exact);
        let mut wide = st.with_k(40);
        wide.amplitudes[40 + 36] = C64::new(1e-3, 0.0);
        wide.amplitudes[40 - 36] = C64::new(1e-3, 0.0);
        assert!(matches!(
            three_mode_rates(&wide),
            Err(LinearizationError::NotThreeMode(_))
        ));
        assert_eq!(triplet_rates(&wide).unwrap(), exact);
    }

    #[test]
    fn three_mode_rates_need_a_roll() {
        let p = params(1.0, 0.8);
        let st = solve_flat_state(&p, BranchChoice::Adiabatic).to_state(&p, 4);
        assert!(matches!(
            three_mode_rates(&st),
            Err(LinearizationError::NotThreeMode(_))
        ));
    }

    #[test]
    fn pair_phases_flag_dark_pairs() {
        let st = three_mode_roll();
        let ph = pair_phases(&st);
        assert!(ph[17].defined);
        assert!(!ph[0].defined);
    }

    #[test]
    fn matrix_dump_round_trips() {
        let m = DMatrix::from_fn(2, 2, |i, j| C64::new(i as f64 + 0.5, -(j as f64)));
        let mut buf = Vec::new();
        write_complex_matrix_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("re_0,im_0,re_1,im_1"));
    }
}

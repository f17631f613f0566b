//! Stationary Kerr comb states: flat-state algebra, split-step propagation of
//! the modal equations, bordered Newton refinement and pattern labels.
//!
//! Internally the field is integrated as u = A / s with s = sqrt(κ/g0) (s = 1
//! when g0 = 0) and time τ = κt, so every coefficient is O(1).

use crate::series::fmt;
use crate::spectral::Grid;
use crate::units::{self, LossBudget, ResonatorConfig, Topology, UnitsError};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::Write;
use thiserror::Error;

type C64 = Complex64;

const I: C64 = C64 { re: 0.0, im: 1.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error)]
pub enum SteadyStateError {
    #[error(transparent)]
    Units(#[from] UnitsError),
    #[error("field blew up at τ = {tau}; last finite state kept")]
    Divergence { tau: f64, last: Box<CombState> },
    #[error("initial residual {residual:.3e} is outside the Newton capture radius {radius:.1e}")]
    OutsideCaptureRadius {
        residual: f64,
        radius: f64,
        best: Box<CombState>,
    },
    #[error("Newton refinement stalled after {iterations} iterations (residual {residual:.3e})")]
    RefineFailed {
        iterations: usize,
        residual: f64,
        best: Box<CombState>,
    },
    #[error("singular Newton matrix")]
    Singular { best: Box<CombState> },
    #[error("no stationary state after τ = {tau} (residual {residual:.3e})")]
    NotConverged {
        tau: f64,
        residual: f64,
        best: Box<CombState>,
    },
    #[error("angle grid of {n} points cannot resolve K = {k}")]
    GridTooSmall { n: usize, k: usize },
    #[error("{0}")]
    Seed(String),
    #[error("truncation K = {k} still inadequate: |A_K|/max = {ratio:.2e}")]
    Truncation { k: usize, ratio: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl SteadyStateError {
    /// Best available iterate carried by the error, if any.
    pub fn best(&self) -> Option<&CombState> {
        match self {
            SteadyStateError::Divergence { last, .. } => Some(last),
            SteadyStateError::OutsideCaptureRadius { best, .. }
            | SteadyStateError::RefineFailed { best, .. }
            | SteadyStateError::Singular { best }
            | SteadyStateError::NotConverged { best, .. } => Some(best),
            _ => None,
        }
    }
}

/// Parameters of the modal equations, in physical units (rad/s, √photons).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModalParams {
    pub kappa: f64,
    /// Coupling rate of the port carrying the pump.
    pub kappa_t: f64,
    pub sigma: f64,
    pub zeta2: f64,
    pub g0: f64,
    /// Pump photon flux amplitude, s^(-1/2).
    pub a_in: f64,
    pub rho: f64,
    pub topology: Topology,
}

impl ModalParams {
    pub fn from_config(config: &ResonatorConfig) -> Result<Self, UnitsError> {
        let budget = units::derive_loss_budget(config)?;
        Self::from_budget(config, &budget)
    }

    pub fn from_budget(config: &ResonatorConfig, budget: &LossBudget) -> Result<Self, UnitsError> {
        Ok(ModalParams {
            kappa: budget.kappa,
            kappa_t: budget.kappa_t,
            sigma: config.detuning,
            zeta2: config.zeta2(),
            g0: config.g0(),
            a_in: units::pump_photon_flux(config.pump_power, config.omega_l())?,
            rho: budget.rho,
            topology: budget.topology,
        })
    }

    /// Dimensionless model: κ = g0 = 1, σ = -α, ζ₂ = -β and drive F.
    pub fn normalized(alpha: f64, beta: f64, f: f64, rho: f64) -> Self {
        ModalParams {
            kappa: 1.0,
            kappa_t: rho,
            sigma: -alpha,
            zeta2: -beta,
            g0: 1.0,
            a_in: f / (2.0 * rho).sqrt(),
            rho,
            topology: Topology::AddThrough,
        }
    }

    /// Field scale s: u = A/s is O(1).
    pub fn scale(&self) -> f64 {
        if self.g0 > 0.0 {
            (self.kappa / self.g0).sqrt()
        } else {
            1.0
        }
    }

    /// Drive term √(2κ_t)·A_in.
    pub fn drive(&self) -> f64 {
        (2.0 * self.kappa_t).sqrt() * self.a_in
    }

    /// F² = 2 g0 κ_t A_in² / κ³.
    pub fn f_squared(&self) -> f64 {
        2.0 * self.g0 * self.kappa_t * self.a_in * self.a_in / self.kappa.powi(3)
    }

    pub fn alpha(&self) -> f64 {
        -self.sigma / self.kappa
    }

    pub fn beta(&self) -> f64 {
        -self.zeta2 / self.kappa
    }

    /// Linear coefficient -[κ - i(σ - ζ₂l²/2)] in units of κ.
    fn linear(&self, l: i64) -> C64 {
        let l2 = (l * l) as f64;
        C64::new(-1.0, (self.sigma - 0.5 * self.zeta2 * l2) / self.kappa)
    }

    fn nonlinear(&self) -> f64 {
        if self.g0 > 0.0 {
            1.0
        } else {
            0.0
        }
    }

    fn scaled_drive(&self) -> f64 {
        self.drive() / (self.kappa * self.scale())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Pattern {
    Flat,
    Roll(u32),
    BrightSoliton,
    DarkSoliton,
    Unclassified,
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pattern::Flat => write!(f, "Flat"),
            Pattern::Roll(l) => write!(f, "Roll({l})"),
            Pattern::BrightSoliton => write!(f, "BrightSoliton"),
            Pattern::DarkSoliton => write!(f, "DarkSoliton"),
            Pattern::Unclassified => write!(f, "Unclassified"),
        }
    }
}

/// Modal amplitudes A_l, l = -K..=K, with solver metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CombState {
    pub k: usize,
    pub amplitudes: Vec<C64>,
    pub pattern: Pattern,
    /// ||dA/dt|| / (κ ||A||) of the modal equations.
    pub residual_norm: f64,
    pub params: ModalParams,
    pub seed: Option<u64>,
}

impl CombState {
    pub fn from_amplitudes(params: ModalParams, amplitudes: Vec<C64>) -> Self {
        assert!(amplitudes.len() % 2 == 1, "need 2K+1 amplitudes");
        let k = amplitudes.len() / 2;
        let mut s = CombState {
            k,
            amplitudes,
            pattern: Pattern::Unclassified,
            residual_norm: f64::NAN,
            params,
            seed: None,
        };
        s.residual_norm = residual_norm(&s.params, &s.amplitudes);
        s.pattern = classify(&s);
        s
    }

    pub fn amplitude(&self, l: i64) -> C64 {
        if l.unsigned_abs() as usize > self.k {
            ZERO
        } else {
            self.amplitudes[(l + self.k as i64) as usize]
        }
    }

    pub fn modes(&self) -> std::ops::RangeInclusive<i64> {
        -(self.k as i64)..=self.k as i64
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn photon_number(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn max_intensity(&self) -> f64 {
        self.amplitudes
            .iter()
            .map(|a| a.norm_sqr())
            .fold(0.0, f64::max)
    }

    /// Re-truncate to a new K, zero-filling new modes.
    pub fn with_k(&self, k: usize) -> CombState {
        let amps: Vec<C64> = (-(k as i64)..=k as i64)
            .map(|l| self.amplitude(l))
            .collect();
        let mut s = CombState {
            k,
            amplitudes: amps,
            ..self.clone()
        };
        s.residual_norm = residual_norm(&s.params, &s.amplitudes);
        s
    }

    /// Rigid rotation of the pattern: A_l -> A_l e^{-ilθ} (moves features to +θ).
    pub fn translated(&self, theta: f64) -> CombState {
        let amps = self
            .modes()
            .zip(&self.amplitudes)
            .map(|(l, a)| a * C64::from_polar(1.0, -(l as f64) * theta))
            .collect();
        CombState {
            amplitudes: amps,
            ..self.clone()
        }
    }

    /// |A_K| / max |A_l|, the truncation adequacy ratio.
    pub fn edge_ratio(&self) -> f64 {
        let max = self.max_intensity().sqrt();
        if max == 0.0 {
            return 0.0;
        }
        let edge = self.amplitudes[0]
            .norm()
            .max(self.amplitudes[2 * self.k].norm());
        edge / max
    }

    fn scaled(&self) -> Vec<C64> {
        let s = self.params.scale();
        self.amplitudes.iter().map(|a| a / s).collect()
    }

    fn unscaled(&self, u: &[C64]) -> Vec<C64> {
        let s = self.params.scale();
        u.iter().map(|a| a * s).collect()
    }
}

/// Deterministic vector field dA_l/dt in physical units.
pub fn vector_field(params: &ModalParams, amplitudes: &[C64]) -> Vec<C64> {
    let k = amplitudes.len() / 2;
    let s = params.scale();
    let u: Vec<C64> = amplitudes.iter().map(|a| a / s).collect();
    let mut grid = Grid::new(k);
    scaled_field(params, &u, &mut grid)
        .into_iter()
        .map(|f| f * params.kappa * s)
        .collect()
}

fn scaled_field(params: &ModalParams, u: &[C64], grid: &mut Grid) -> Vec<C64> {
    let k = grid.k as i64;
    let mut cubic = vec![ZERO; u.len()];
    let nl = params.nonlinear();
    if nl != 0.0 {
        grid.cubic(u, &mut cubic);
    }
    let mut f: Vec<C64> = (-k..=k)
        .zip(u.iter().zip(&cubic))
        .map(|(l, (&a, &c))| params.linear(l) * a + I * nl * c)
        .collect();
    f[k as usize] += params.scaled_drive();
    f
}

fn residual_norm(params: &ModalParams, amplitudes: &[C64]) -> f64 {
    let s = params.scale();
    let u: Vec<C64> = amplitudes.iter().map(|a| a / s).collect();
    let mut grid = Grid::new(amplitudes.len() / 2);
    let f = scaled_field(params, &u, &mut grid);
    let fn2 = l2(&f);
    let un = l2(&u);
    if un > 0.0 {
        fn2 / un
    } else {
        fn2
    }
}

fn l2(v: &[C64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BranchChoice {
    /// The branch reached by ramping the pump up from zero.
    Adiabatic,
    Upper,
}

/// Real roots of the flat-state cubic, ascending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlatStateBranches {
    /// Intracavity photon numbers N = |A0|².
    pub roots: Vec<f64>,
    /// Complex A0 for each root.
    #[serde(skip)]
    pub amplitudes: Vec<C64>,
    pub selected: usize,
    /// Linear stability of each root against every sidemode pair.
    pub stable: Vec<bool>,
}

impl FlatStateBranches {
    pub fn photons(&self) -> f64 {
        self.roots[self.selected]
    }

    pub fn a0(&self) -> C64 {
        self.amplitudes[self.selected]
    }

    pub fn to_state(&self, params: &ModalParams, k: usize) -> CombState {
        let mut amps = vec![ZERO; 2 * k + 1];
        amps[k] = self.a0();
        CombState::from_amplitudes(*params, amps)
    }
}

/// Real roots of x(1 + (x - α)²) = F², via the trigonometric/Cardano forms
/// followed by Newton polishing.
fn flat_cubic_roots(alpha: f64, f2: f64) -> Vec<f64> {
    if f2 == 0.0 {
        return vec![0.0];
    }
    // x³ + b x² + c x + d
    let b = -2.0 * alpha;
    let c = 1.0 + alpha * alpha;
    let d = -f2;
    let p = c - b * b / 3.0;
    let q = 2.0 * b.powi(3) / 27.0 - b * c / 3.0 + d;
    let shift = -b / 3.0;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let mut roots = if disc > 0.0 {
        let sq = disc.sqrt();
        vec![(-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt() + shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let phi = ((-q / 2.0) / r.powi(3)).clamp(-1.0, 1.0).acos();
        (0..3)
            .map(|j| 2.0 * r * ((phi - 2.0 * PI * j as f64) / 3.0).cos() + shift)
            .collect()
    };
    for x in &mut roots {
        for _ in 0..4 {
            let fx = ((*x + b) * *x + c) * *x + d;
            let dfx = (3.0 * *x + 2.0 * b) * *x + c;
            if dfx != 0.0 {
                *x -= fx / dfx;
            }
        }
    }
    roots.retain(|&x| x > 0.0);
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots
}

/// Stability of a flat state of photon number n against all sidemode pairs.
fn flat_is_stable(params: &ModalParams, n: f64) -> bool {
    let g = params.g0 * n;
    let k = params.kappa;
    let xi = |l: f64| params.sigma - 0.5 * params.zeta2 * l * l + 2.0 * g;
    let mut candidates = vec![0.0];
    if params.zeta2 != 0.0 {
        let r = 2.0 * (params.sigma + 2.0 * g) / params.zeta2;
        if r > 0.0 {
            let l = r.sqrt();
            candidates.push(l.floor());
            candidates.push(l.ceil());
        }
    }
    candidates.iter().all(|&l| {
        let x = xi(l);
        g * g - x * x <= k * k * (1.0 + 1e-12)
    })
}

pub fn solve_flat_state(params: &ModalParams, choice: BranchChoice) -> FlatStateBranches {
    let drive = params.drive();
    let k = params.kappa;
    let roots: Vec<f64> = if drive == 0.0 {
        vec![0.0]
    } else if params.g0 == 0.0 {
        vec![drive * drive / (k * k + params.sigma * params.sigma)]
    } else {
        flat_cubic_roots(params.alpha(), params.f_squared())
            .into_iter()
            .map(|x| x * k / params.g0)
            .collect()
    };
    let amplitudes = roots
        .iter()
        .map(|&n| drive / C64::new(k, -(params.sigma + params.g0 * n)))
        .collect();
    let stable = roots.iter().map(|&n| flat_is_stable(params, n)).collect();
    // ramping from P = 0 stays on the lowest branch while it exists
    let selected = match choice {
        BranchChoice::Adiabatic => 0,
        BranchChoice::Upper => roots.len() - 1,
    };
    FlatStateBranches {
        roots,
        amplitudes,
        selected,
        stable,
    }
}

/// Residual of the modulus-squared flat-state cubic relative to its largest term.
pub fn flat_cubic_residual(params: &ModalParams, n: f64) -> f64 {
    let g0 = params.g0;
    let s = params.sigma;
    let k = params.kappa;
    let rhs = params.drive().powi(2);
    let terms = [
        g0 * g0 * n.powi(3),
        2.0 * s * g0 * n * n,
        (k * k + s * s) * n,
        -rhs,
    ];
    let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
    let sum: f64 = terms.iter().sum();
    if scale == 0.0 {
        0.0
    } else {
        sum.abs() / scale
    }
}

#[derive(Debug, Clone)]
pub struct Propagated {
    pub state: CombState,
    /// max_l |dA_l/dt| at the end of the run (physical units).
    pub max_rate: f64,
    pub tau: f64,
}

/// Integrate the deterministic modal equations over `horizon` (units of 1/κ)
/// with Strang splitting: exact linear+pump flow in mode space, exact Kerr
/// phase in angle space.
pub fn propagate(
    initial: &CombState,
    horizon: f64,
    step: f64,
) -> Result<Propagated, SteadyStateError> {
    let mut p = Propagator::new(&initial.params, initial.k, step);
    let mut u = initial.scaled();
    let steps = (horizon / step).round().max(0.0) as usize;
    p.run(&mut u, steps)
        .map_err(|tau| SteadyStateError::Divergence {
            tau,
            last: Box::new(initial.clone()),
        })?;
    let amps = initial.unscaled(&u);
    let mut state = CombState {
        amplitudes: amps,
        ..initial.clone()
    };
    state.residual_norm = residual_norm(&state.params, &state.amplitudes);
    state.pattern = classify(&state);
    let s = state.params.scale() * state.params.kappa;
    let max_rate = scaled_field(&state.params, &u, &mut p.grid)
        .iter()
        .map(|f| f.norm() * s)
        .fold(0.0, f64::max);
    Ok(Propagated {
        state,
        max_rate,
        tau: steps as f64 * step,
    })
}

struct Propagator {
    grid: Grid,
    half: Vec<C64>,
    full: Vec<C64>,
    pump_half: C64,
    pump_full: C64,
    nl: f64,
    h: f64,
    buf: Vec<C64>,
}

impl Propagator {
    fn new(params: &ModalParams, k: usize, h: f64) -> Self {
        let grid = Grid::new(k);
        let n = grid.n;
        let mut half = vec![ZERO; n];
        let mut full = vec![ZERO; n];
        for l in -(k as i64)..=k as i64 {
            let c = params.linear(l);
            half[grid.slot(l)] = (c * 0.5 * h).exp();
            full[grid.slot(l)] = (c * h).exp();
        }
        let c0 = params.linear(0);
        let f = params.scaled_drive();
        Propagator {
            pump_half: f * ((c0 * 0.5 * h).exp() - 1.0) / c0,
            pump_full: f * ((c0 * h).exp() - 1.0) / c0,
            half,
            full,
            nl: params.nonlinear(),
            h,
            buf: vec![ZERO; n],
            grid,
        }
    }

    fn linear(&mut self, full: bool) {
        let (e, p) = if full {
            (&self.full, self.pump_full)
        } else {
            (&self.half, self.pump_half)
        };
        self.buf.iter_mut().zip(e).for_each(|(x, m)| *x *= m);
        self.buf[0] += p;
    }

    fn kerr(&mut self) {
        self.grid.to_angle(&mut self.buf);
        let a = self.nl * self.h;
        for x in self.buf.iter_mut() {
            *x *= C64::from_polar(1.0, a * x.norm_sqr());
        }
        self.grid.to_modes(&mut self.buf);
        self.grid.truncate(&mut self.buf);
    }

    /// Advance `steps` steps; Err carries τ of the first non-finite value.
    fn run(&mut self, u: &mut [C64], steps: usize) -> Result<(), f64> {
        if steps == 0 {
            return Ok(());
        }
        let mut buf = std::mem::take(&mut self.buf);
        self.grid.load(u, &mut buf);
        self.buf = buf;
        self.linear(false);
        for i in 0..steps {
            if self.nl != 0.0 {
                self.kerr();
            }
            if i + 1 < steps {
                self.linear(true);
            } else {
                self.linear(false);
            }
            if i % 256 == 255
                && !self
                    .buf
                    .iter()
                    .all(|x| x.re.is_finite() && x.im.is_finite())
            {
                return Err((i + 1) as f64 * self.h);
            }
        }
        if !self
            .buf
            .iter()
            .all(|x| x.re.is_finite() && x.im.is_finite())
        {
            return Err(steps as f64 * self.h);
        }
        self.grid.store(&self.buf, u);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RefineOptions {
    pub max_iterations: usize,
    /// Target ||F|| / (κ ||A||).
    pub tolerance: f64,
    /// Largest initial ||F|| / (κ ||A||) accepted.
    pub capture_radius: f64,
}

impl Default for RefineOptions {
    fn default() -> Self {
        RefineOptions {
            max_iterations: 40,
            tolerance: 1e-12,
            capture_radius: 0.05,
        }
    }
}

/// Real 2n×2n Newton matrix of the scaled field at u.
fn newton_matrix(params: &ModalParams, u: &[C64], grid: &mut Grid) -> DMatrix<f64> {
    let n = u.len();
    let k = grid.k as i64;
    let nl = params.nonlinear();
    let (pk, qk) = grid.kernels(u);
    let off = 2 * k;
    let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for (i, l) in (-k..=k).enumerate() {
        for (j, p) in (-k..=k).enumerate() {
            let mut r = 2.0 * I * nl * pk[(l - p + off) as usize];
            if i == j {
                r += params.linear(l);
            }
            let s = I * nl * qk[(l + p + off) as usize];
            m[(i, j)] = r.re + s.re;
            m[(i, n + j)] = -r.im + s.im;
            m[(n + i, j)] = r.im + s.im;
            m[(n + i, n + j)] = r.re - s.re;
        }
    }
    m
}

/// Newton iteration on the modal algebraic system. When sidemodes are
/// present the translation mode is removed by bordering with its tangent.
pub fn refine(state: &CombState, options: &RefineOptions) -> Result<CombState, SteadyStateError> {
    let params = state.params;
    let mut grid = Grid::new(state.k);
    let mut u = state.scaled();
    let n = u.len();
    let mut f = scaled_field(&params, &u, &mut grid);
    let rel = |f: &[C64], u: &[C64]| {
        let un = l2(u);
        if un > 0.0 {
            l2(f) / un
        } else {
            l2(f)
        }
    };
    let mut res = rel(&f, &u);
    let pack = |u: &[C64], res: f64| {
        let mut s = CombState {
            amplitudes: state.unscaled(u),
            ..state.clone()
        };
        s.residual_norm = res;
        s.pattern = classify(&s);
        s
    };
    if !(res <= options.capture_radius) {
        return Err(SteadyStateError::OutsideCaptureRadius {
            residual: res,
            radius: options.capture_radius,
            best: Box::new(pack(&u, res)),
        });
    }
    let mut iterations = 0;
    while res > options.tolerance {
        if iterations == options.max_iterations {
            return Err(SteadyStateError::RefineFailed {
                iterations,
                residual: res,
                best: Box::new(pack(&u, res)),
            });
        }
        iterations += 1;
        let m = newton_matrix(&params, &u, &mut grid);
        let bordered = has_sidemodes(&u);
        let dim = if bordered { 2 * n + 1 } else { 2 * n };
        let mut a = DMatrix::<f64>::zeros(dim, dim);
        a.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&m);
        let mut rhs = DVector::<f64>::zeros(dim);
        for i in 0..n {
            rhs[i] = -f[i].re;
            rhs[n + i] = -f[i].im;
        }
        if bordered {
            let k = state.k as i64;
            let t: Vec<C64> = (-k..=k).zip(&u).map(|(l, a)| I * l as f64 * a).collect();
            let tn = l2(&t);
            for i in 0..n {
                let (re, im) = (t[i].re / tn, t[i].im / tn);
                a[(i, 2 * n)] = re;
                a[(n + i, 2 * n)] = im;
                a[(2 * n, i)] = re;
                a[(2 * n, n + i)] = im;
            }
        }
        let dx = match a.lu().solve(&rhs) {
            Some(x) if x.iter().all(|v| v.is_finite()) => x,
            _ => {
                return Err(SteadyStateError::Singular {
                    best: Box::new(pack(&u, res)),
                })
            }
        };
        // backtracking keeps the iteration from wandering off
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial: Vec<C64> = (0..n)
                .map(|i| u[i] + lambda * C64::new(dx[i], dx[n + i]))
                .collect();
            let ft = scaled_field(&params, &trial, &mut grid);
            let rt = rel(&ft, &trial);
            if rt < res {
                u = trial;
                f = ft;
                res = rt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(SteadyStateError::RefineFailed {
                iterations,
                residual: res,
                best: Box::new(pack(&u, res)),
            });
        }
    }
    let mut out = pack(&u, res);
    out.seed = state.seed;
    Ok(out)
}

/// Oscillation floor on |A_l|² relative to the strongest mode.
pub const MODE_FLOOR: f64 = 1e-12;

fn has_sidemodes(u: &[C64]) -> bool {
    let k = u.len() / 2;
    let max = u.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
    max > 0.0
        && u.iter()
            .enumerate()
            .any(|(i, a)| i != k && a.norm_sqr() > MODE_FLOOR * max)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Pattern label from the mode content and the angle-domain intensity.
pub fn classify(state: &CombState) -> Pattern {
    let max = state.max_intensity();
    if max == 0.0 {
        return Pattern::Flat;
    }
    let active: Vec<u64> = state
        .modes()
        .zip(&state.amplitudes)
        .filter(|(l, a)| *l != 0 && a.norm_sqr() > MODE_FLOOR * max)
        .map(|(l, _)| l.unsigned_abs())
        .collect();
    if active.is_empty() {
        return Pattern::Flat;
    }
    let g = active.iter().fold(0, |g, &l| gcd(g, l));
    if g >= 2 {
        return Pattern::Roll(g as u32);
    }
    let n = (8 * state.k + 8).next_power_of_two().max(256);
    let field = match field_on_circle(state, n) {
        Ok(f) => f,
        Err(_) => return Pattern::Unclassified,
    };
    let mut intensity: Vec<f64> = field.iter().map(|a| a.norm_sqr()).collect();
    let imax = intensity.iter().cloned().fold(f64::MIN, f64::max);
    let imin = intensity.iter().cloned().fold(f64::MAX, f64::min);
    intensity.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = intensity[n / 2];
    let above = intensity
        .iter()
        .filter(|&&x| x > median + 0.5 * (imax - median))
        .count() as f64
        / n as f64;
    let below = intensity
        .iter()
        .filter(|&&x| x < median - 0.5 * (median - imin))
        .count() as f64
        / n as f64;
    let zeta2 = state.params.zeta2;
    if imax - median > median - imin && above < 0.25 && zeta2 > 0.0 {
        Pattern::BrightSoliton
    } else if median - imin > imax - median && below < 0.25 && zeta2 < 0.0 {
        Pattern::DarkSoliton
    } else if count_maxima(&field) == 1 {
        Pattern::Roll(1)
    } else {
        Pattern::Unclassified
    }
}

/// Local maxima of |A|² on the circle whose prominence (height above the
/// higher of the two flanking minima) exceeds 1e-3 of the intensity span.
/// Tail ripples of a soliton are not counted.
fn count_maxima(field: &[C64]) -> usize {
    let n = field.len();
    let i: Vec<f64> = field.iter().map(|a| a.norm_sqr()).collect();
    let hi = i.iter().cloned().fold(f64::MIN, f64::max);
    let lo = i.iter().cloned().fold(f64::MAX, f64::min);
    let floor = 1e-3 * (hi - lo);
    if !(floor > 0.0) {
        return 0;
    }
    let at = |j: isize| i[j.rem_euclid(n as isize) as usize];
    let descend = |start: isize, dir: isize| {
        let mut j = start;
        let mut steps = 0;
        while at(j + dir) <= at(j) && steps < n {
            j += dir;
            steps += 1;
        }
        at(j)
    };
    (0..n as isize)
        .filter(|&j| at(j) > at(j - 1) && at(j) >= at(j + 1))
        .filter(|&j| at(j) - descend(j, -1).max(descend(j, 1)) > floor)
        .count()
}

/// Samples of A(θ) = Σ A_l e^{ilθ} at θ_j = 2πj/n.
pub fn field_on_circle(state: &CombState, n_points: usize) -> Result<Vec<C64>, SteadyStateError> {
    if n_points < 2 * state.k + 1 {
        return Err(SteadyStateError::GridTooSmall {
            n: n_points,
            k: state.k,
        });
    }
    let mut buf = vec![ZERO; n_points];
    for (l, a) in state.modes().zip(&state.amplitudes) {
        buf[l.rem_euclid(n_points as i64) as usize] = *a;
    }
    let mut planner = rustfft::FftPlanner::new();
    planner.plan_fft_inverse(n_points).process(&mut buf);
    Ok(buf)
}

/// Counts strict local maxima of the intensity on an n-point grid.
pub fn count_intensity_maxima(
    state: &CombState,
    n_points: usize,
) -> Result<usize, SteadyStateError> {
    Ok(count_maxima(&field_on_circle(state, n_points)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Seed {
    /// Flat branch plus uniform complex noise of the given size (scaled units)
    /// on every sidemode.
    Noise { amplitude: f64, rng_seed: u64 },
    /// Lower-branch background plus sqrt(2α)·sech(θ/w) with w = sqrt(|β|/2α).
    BrightSoliton,
    /// Upper-branch background with a tanh kink pair of the given half-width (rad).
    DarkSoliton { half_width: f64 },
}

/// Initial field for a seed on the (2K+1)-mode grid.
pub fn seed_state(
    params: &ModalParams,
    k: usize,
    seed: &Seed,
) -> Result<CombState, SteadyStateError> {
    let s = params.scale();
    match *seed {
        Seed::Noise {
            amplitude,
            rng_seed,
        } => {
            let flat = solve_flat_state(params, BranchChoice::Adiabatic);
            let mut st = flat.to_state(params, k);
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            for (l, a) in (-(k as i64)..=k as i64).zip(st.amplitudes.iter_mut()) {
                let z = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                if l != 0 {
                    *a += amplitude * s * z;
                }
            }
            st.seed = Some(rng_seed);
            st.residual_norm = residual_norm(params, &st.amplitudes);
            st.pattern = classify(&st);
            Ok(st)
        }
        Seed::BrightSoliton | Seed::DarkSoliton { .. } => {
            let alpha = params.alpha();
            if !(alpha > 0.0) || params.zeta2 == 0.0 {
                return Err(SteadyStateError::Seed(
                    "soliton seeds need σ < 0 and ζ₂ ≠ 0".into(),
                ));
            }
            let flat = solve_flat_state(params, BranchChoice::Adiabatic);
            let low = flat.amplitudes[0] / s;
            let up = flat.amplitudes[flat.roots.len() - 1] / s;
            let w = (params.beta().abs() / (2.0 * alpha)).sqrt();
            let n = (4 * k + 1).next_power_of_two().max(64);
            let field: Vec<C64> = (0..n)
                .map(|j| {
                    let mut th = 2.0 * PI * j as f64 / n as f64;
                    if th > PI {
                        th -= 2.0 * PI;
                    }
                    match *seed {
                        Seed::DarkSoliton { half_width } => {
                            let box_ = 0.5
                                * (((th + half_width) / w).tanh() - ((th - half_width) / w).tanh());
                            up + (low - up) * box_
                        }
                        _ => low + (2.0 * alpha).sqrt() / (th / w).cosh(),
                    }
                })
                .collect();
            let mut buf = field;
            let mut planner = rustfft::FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut buf);
            let amps = (-(k as i64)..=k as i64)
                .map(|l| buf[l.rem_euclid(n as i64) as usize] * (s / n as f64))
                .collect();
            Ok(CombState::from_amplitudes(*params, amps))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Normalized split-step size.
    pub step: f64,
    /// Propagation chunk between convergence checks (units of 1/κ).
    pub chunk: f64,
    pub max_horizon: f64,
    /// Hand over to Newton when max|dA/dt| < handover·κ||A||.
    pub handover: f64,
    /// ... or when the relative change per unit time falls below this and
    /// is still decreasing.
    pub drift_handover: f64,
    /// Enlarge K until |A_K|/max|A_l| drops below this.
    pub edge_tolerance: f64,
    pub max_k: usize,
    pub refine: RefineOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            step: 1e-3,
            chunk: 25.0,
            max_horizon: 20_000.0,
            handover: 1e-8,
            drift_handover: 1e-6,
            edge_tolerance: 1e-8,
            max_k: 1024,
            refine: RefineOptions::default(),
        }
    }
}

/// Default truncation: K = max(4L, 64) when a roll order is predicted, else 128.
pub fn default_k(params: &ModalParams, seed: &Seed) -> usize {
    match seed {
        Seed::Noise { .. } => {
            match units::predicted_roll_order(params.sigma, params.kappa, params.zeta2) {
                Ok(l) => (4 * l as usize).max(64),
                Err(_) => 64,
            }
        }
        _ => 128,
    }
}

/// Propagate until quasi-stationary, refine, and grow K until the comb edge
/// is below `edge_tolerance`.
pub fn find_steady_state(
    params: &ModalParams,
    seed: &Seed,
    k: Option<usize>,
    options: &SolveOptions,
) -> Result<CombState, SteadyStateError> {
    let k = k.unwrap_or_else(|| default_k(params, seed));
    let mut state = seed_state(params, k, seed)?;
    let seed_tag = match seed {
        Seed::Noise { rng_seed, .. } => Some(*rng_seed),
        _ => None,
    };
    state.seed = seed_tag;
    let mut tau = 0.0;
    loop {
        let (refined, t) = relax(&state, options, options.max_horizon - tau)?;
        tau += t;
        let ratio = refined.edge_ratio();
        if ratio < options.edge_tolerance {
            let mut out = refined;
            out.seed = seed_tag;
            return Ok(out);
        }
        let next = (refined.k + refined.k / 2).min(options.max_k);
        if next == refined.k {
            return Err(SteadyStateError::Truncation {
                k: refined.k,
                ratio,
            });
        }
        state = refined.with_k(next);
    }
}

/// Split-step until the state settles, then Newton. Returns the refined state
/// and the propagation time used.
///
/// Newton is only tried once the field has stopped moving and the drift is
/// shrinking; a sidemode seed sitting on an unstable flat state also has a
/// tiny drift, so a refined flat state is rejected when that flat state is
/// modulationally unstable.
fn relax(
    state: &CombState,
    options: &SolveOptions,
    budget: f64,
) -> Result<(CombState, f64), SteadyStateError> {
    let mut current = state.clone();
    let mut tau = 0.0;
    let mut prev_drift = f64::INFINITY;
    let mut retry_below = options.drift_handover;
    let mut last_err = None;
    while tau < budget {
        let chunk = options.chunk.min(budget - tau);
        let before = current.scaled();
        let run = propagate(&current, chunk, options.step)?;
        tau += run.tau;
        let after = run.state.scaled();
        let drift = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / (run.tau * l2(&after).max(1e-300));
        current = run.state;
        let rate = run.max_rate / (current.params.kappa * current.norm().max(1e-300));
        let settled = rate < options.handover || (drift < retry_below && drift < prev_drift);
        prev_drift = drift;
        if !settled {
            continue;
        }
        match refine(&current, &options.refine) {
            Ok(r) if acceptable(&r) => return Ok((r, tau)),
            Ok(_) => {}
            Err(e) => last_err = Some(e),
        }
        retry_below = 0.1 * drift;
    }
    let residual = current.residual_norm;
    Err(match last_err {
        Some(e) => e,
        None => SteadyStateError::NotConverged {
            tau,
            residual,
            best: Box::new(current),
        },
    })
}

fn acceptable(state: &CombState) -> bool {
    match state.pattern {
        Pattern::Flat => flat_is_stable(&state.params, state.amplitude(0).norm_sqr()),
        _ => true,
    }
}

/// CSV with columns l, Re A_l, Im A_l, |A_l|².
pub fn write_modes_csv<W: Write>(state: &CombState, w: W) -> Result<(), SteadyStateError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "l",
        "re_A_sqrt_photons",
        "im_A_sqrt_photons",
        "abs_A_sq_photons",
    ])?;
    for (l, a) in state.modes().zip(&state.amplitudes) {
        wr.write_record([l.to_string(), fmt(a.re), fmt(a.im), fmt(a.norm_sqr())])?;
    }
    wr.flush()?;
    Ok(())
}

/// CSV with columns theta, |A(θ)|².
pub fn write_intensity_csv<W: Write>(
    state: &CombState,
    n_points: usize,
    w: W,
) -> Result<(), SteadyStateError> {
    let field = field_on_circle(state, n_points)?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["theta_rad", "intensity_photons"])?;
    for (j, a) in field.iter().enumerate() {
        wr.write_record([
            fmt(2.0 * PI * j as f64 / n_points as f64),
            fmt(a.norm_sqr()),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::{prop_assert, proptest};
    use rand::Rng;

    fn norm_params(alpha: f64, f2: f64) -> ModalParams {
        ModalParams::normalized(alpha, -0.0059975, f2.sqrt(), 0.8)
    }

    #[test]
    fn zero_pump_gives_empty_cavity() {
        let p = norm_params(1.0, 0.0);
        let b = solve_flat_state(&p, BranchChoice::Adiabatic);
        assert_eq!(b.roots, vec![0.0]);
        assert_eq!(b.a0(), ZERO);
    }

    #[test]
    fn roots_satisfy_cubic_and_are_sorted() {
        // α = 2.5, F² = 5.3/2.0618: three roots
        let p = norm_params(2.5, 5.3 / 2.0618);
        let b = solve_flat_state(&p, BranchChoice::Adiabatic);
        assert_eq!(b.roots.len(), 3);
        for w in b.roots.windows(2) {
            assert!(w[0] < w[1]);
        }
        for &n in &b.roots {
            assert!(flat_cubic_residual(&p, n) < 1e-10);
        }
        assert_eq!(b.selected, 0);
        assert_eq!(solve_flat_state(&p, BranchChoice::Upper).selected, 2);
        // middle branch of an S-curve is unstable
        assert!(!b.stable[1]);
    }

    #[test]
    fn flat_amplitude_solves_complex_equation() {
        let p = norm_params(1.3, 0.7);
        let b = solve_flat_state(&p, BranchChoice::Adiabatic);
        let st = b.to_state(&p, 4);
        assert!(st.residual_norm < 1e-14, "{}", st.residual_norm);
        assert_eq!(st.pattern, Pattern::Flat);
    }

    #[test]
    fn very_weak_pumping_linear_response() {
        let p = ModalParams {
            a_in: 1e-3,
            ..norm_params(0.0, 1.0)
        };
        let b = solve_flat_state(&p, BranchChoice::Adiabatic);
        let lin = 2.0 * p.kappa_t * p.a_in * p.a_in / (p.kappa * p.kappa);
        assert_relative_eq!(b.photons(), lin, max_relative = 1e-5);
    }

    #[test]
    fn linear_cavity_relaxation_is_exact() {
        let p = ModalParams {
            g0: 0.0,
            sigma: 0.0,
            ..norm_params(0.0, 1.0)
        };
        let st = CombState::from_amplitudes(p, vec![ZERO; 9]);
        let t = 1.7;
        let out = propagate(&st, t, 0.01).unwrap().state;
        let expect = p.drive() / p.kappa * (1.0 - (-p.kappa * t).exp());
        assert!((out.amplitude(0) - expect).norm() < 1e-13);
    }

    #[test]
    fn below_threshold_relaxes_to_flat_root() {
        let p = norm_params(1.0, 0.9);
        let b = solve_flat_state(&p, BranchChoice::Adiabatic);
        let st = seed_state(
            &p,
            16,
            &Seed::Noise {
                amplitude: 1e-6,
                rng_seed: 3,
            },
        )
        .unwrap();
        let err = |dt: f64| (propagate(&st, 60.0, dt).unwrap().state.amplitude(0) - b.a0()).norm();
        let (coarse, fine) = (err(0.02), err(0.01));
        assert!(fine < 1e-4);
        // second-order splitting: halving the step quarters the offset
        assert!((coarse / fine - 4.0).abs() < 0.2, "{coarse:e} {fine:e}");
    }

    #[test]
    fn exact_flat_state_is_a_newton_fixed_point() {
        let p = norm_params(1.0, 0.9);
        let st = solve_flat_state(&p, BranchChoice::Adiabatic).to_state(&p, 8);
        let r = refine(&st, &RefineOptions::default()).unwrap();
        assert_eq!(r.amplitudes, st.amplitudes);
    }

    #[test]
    fn far_perturbation_fails_cleanly() {
        let p = norm_params(1.0, 1.2);
        let mut st = solve_flat_state(&p, BranchChoice::Adiabatic).to_state(&p, 8);
        for a in st.amplitudes.iter_mut() {
            *a += C64::new(0.7, -0.4);
        }
        let e = refine(&st, &RefineOptions::default()).unwrap_err();
        assert!(matches!(e, SteadyStateError::OutsideCaptureRadius { .. }));
        assert!(e.best().is_some());
    }

    #[test]
    fn field_on_circle_simple_cases() {
        let p = norm_params(1.0, 0.5);
        let mut amps = vec![ZERO; 3];
        amps[1] = C64::new(1.0, 0.0);
        let st = CombState::from_amplitudes(p, amps);
        for v in field_on_circle(&st, 16).unwrap() {
            assert!((v - 1.0).norm() < 1e-15);
        }
        let st = CombState::from_amplitudes(p, vec![C64::new(0.5, 0.0), ZERO, C64::new(0.5, 0.0)]);
        for (j, v) in field_on_circle(&st, 32).unwrap().iter().enumerate() {
            let th = 2.0 * PI * j as f64 / 32.0;
            assert!((v - th.cos()).norm() < 1e-15);
        }
        assert!(field_on_circle(&st, 2).is_err());
    }

    #[test]
    fn classify_roll_from_harmonics() {
        let p = norm_params(1.0, 1.2);
        let mut amps = vec![ZERO; 2 * 60 + 1];
        amps[60] = C64::new(1.0, 0.0);
        for (l, a) in [(20i64, 0.1), (40, 0.01)] {
            amps[(60 + l) as usize] = C64::new(a, 0.0);
            amps[(60 - l) as usize] = C64::new(a, 0.0);
        }
        let st = CombState::from_amplitudes(p, amps);
        assert_eq!(st.pattern, Pattern::Roll(20));
        assert_eq!(count_intensity_maxima(&st, 512).unwrap(), 20);
    }

    proptest! {
        #[test]
        fn parseval_on_the_circle(seed in 0u64..1000, k in 1usize..12) {
            let p = norm_params(1.0, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amps: Vec<C64> = (0..2 * k + 1).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let st = CombState::from_amplitudes(p, amps);
            let n = 4 * k + 3;
            let f = field_on_circle(&st, n).unwrap();
            let lhs: f64 = f.iter().map(|a| a.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((lhs - st.photon_number()).abs() <= 1e-10 * st.photon_number());
        }

        #[test]
        fn cubic_roots_are_roots(alpha in -3.0f64..6.0, f2 in 0.01f64..20.0) {
            let p = norm_params(alpha, f2);
            let b = solve_flat_state(&p, BranchChoice::Adiabatic);
            prop_assert!(!b.roots.is_empty() && b.roots.len() <= 3);
            for &n in &b.roots {
                prop_assert!(flat_cubic_residual(&p, n) < 1e-10);
            }
        }
    }
}

//! Mode-space <-> angle-space transforms on a zero-padded grid.
//!
//! Modes l = -K..=K are stored as a dense vector indexed by l + K. The angle
//! grid has N >= 4K+1 points so products of up to four band-limited factors
//! (the Jacobian kernels) and the cubic term are alias-free.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

pub(crate) struct Grid {
    pub k: usize,
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
}

impl Grid {
    pub fn new(k: usize) -> Self {
        let n = (4 * k + 1).next_power_of_two().max(8);
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let len = fwd
            .get_inplace_scratch_len()
            .max(inv.get_inplace_scratch_len());
        Grid {
            k,
            n,
            fwd,
            inv,
            scratch: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    /// FFT-order index of mode l.
    #[inline]
    pub fn slot(&self, l: i64) -> usize {
        l.rem_euclid(self.n as i64) as usize
    }

    /// Scatter dense modes into FFT order (zero elsewhere).
    pub fn load(&self, modes: &[Complex64], buf: &mut [Complex64]) {
        buf.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        let k = self.k as i64;
        for (i, &a) in modes.iter().enumerate() {
            buf[self.slot(i as i64 - k)] = a;
        }
    }

    pub fn store(&self, buf: &[Complex64], modes: &mut [Complex64]) {
        let k = self.k as i64;
        for (i, m) in modes.iter_mut().enumerate() {
            *m = buf[self.slot(i as i64 - k)];
        }
    }

    /// Modes (FFT order) -> field samples A(θ_j) = Σ A_l e^{ilθ_j}.
    pub fn to_angle(&mut self, buf: &mut [Complex64]) {
        self.inv.process_with_scratch(buf, &mut self.scratch);
    }

    /// Field samples -> mode coefficients (FFT order), normalized.
    pub fn to_modes(&mut self, buf: &mut [Complex64]) {
        self.fwd.process_with_scratch(buf, &mut self.scratch);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|x| *x *= s);
    }

    /// Zero every slot with |l| > K.
    pub fn truncate(&self, buf: &mut [Complex64]) {
        let k = self.k;
        let n = self.n;
        for x in &mut buf[k + 1..n - k] {
            *x = Complex64::new(0.0, 0.0);
        }
    }

    /// Fourier coefficients of |A|²A for |l| <= K, dense order.
    pub fn cubic(&mut self, modes: &[Complex64], out: &mut [Complex64]) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        self.load(modes, &mut buf);
        self.to_angle(&mut buf);
        buf.iter_mut().for_each(|a| *a *= a.norm_sqr());
        self.to_modes(&mut buf);
        self.store(&buf, out);
    }

    /// Coefficients P_d of |A(θ)|² and Q_q of A(θ)² for d, q in -2K..=2K,
    /// indexed by d + 2K.
    ///
    /// P_d = Σ_{m-n=d} A_m A_n*, Q_q = Σ_{m+n=q} A_m A_n.
    pub fn kernels(&mut self, modes: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        self.load(modes, &mut buf);
        self.to_angle(&mut buf);
        let mut sq: Vec<Complex64> = buf.iter().map(|a| a * a).collect();
        buf.iter_mut()
            .for_each(|a| *a = Complex64::new(a.norm_sqr(), 0.0));
        self.to_modes(&mut buf);
        self.to_modes(&mut sq);
        let k2 = 2 * self.k as i64;
        let p = (-k2..=k2).map(|d| buf[self.slot(d)]).collect();
        let q = (-k2..=k2).map(|d| sq[self.slot(d)]).collect();
        (p, q)
    }
}

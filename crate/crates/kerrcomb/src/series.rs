//! Sampled spectra on a frequency grid in units of κ.

use num_complex::Complex64;
use serde::Serialize;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumSeries {
    /// ω/κ.
    pub omega: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSeries {
    pub omega: Vec<f64>,
    pub values: Vec<Complex64>,
    pub label: String,
}

impl SpectrumSeries {
    pub fn new(omega: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Self {
        assert_eq!(omega.len(), values.len());
        SpectrumSeries {
            omega,
            values,
            label: label.into(),
        }
    }

    pub fn min(&self) -> (f64, f64) {
        self.omega
            .iter()
            .zip(&self.values)
            .fold((f64::NAN, f64::INFINITY), |acc, (&w, &v)| {
                if v < acc.1 {
                    (w, v)
                } else {
                    acc
                }
            })
    }

    pub fn max(&self) -> (f64, f64) {
        self.omega
            .iter()
            .zip(&self.values)
            .fold((f64::NAN, f64::NEG_INFINITY), |acc, (&w, &v)| {
                if v > acc.1 {
                    (w, v)
                } else {
                    acc
                }
            })
    }

    /// Two-column CSV; `value_header` names the value column with its unit.
    pub fn write_csv<W: Write>(&self, value_header: &str, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["omega_over_kappa", value_header])?;
        for (o, v) in self.omega.iter().zip(&self.values) {
            wr.write_record([fmt(*o), fmt(*v)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl ComplexSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["omega_over_kappa", "re_C", "im_C"])?;
        for (o, v) in self.omega.iter().zip(&self.values) {
            wr.write_record([fmt(*o), fmt(v.re), fmt(v.im)])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Uniform grid of n points on [a, b].
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n)
            .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Scientific notation, 15 significant digits; infinities stay "inf".
pub fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.14e}")
    } else if x > 0.0 {
        "inf".into()
    } else if x < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

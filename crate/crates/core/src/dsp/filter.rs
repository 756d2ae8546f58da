//! Chebyshev type I band-pass design and zero-phase filtering.
//!
//! The analog low-pass prototype is moved to a band-pass with the standard
//! `s -> (s² + ω0²) / (s·B)` substitution, discretised with the bilinear
//! transform (band edges pre-warped), and realised as cascaded second-order
//! sections. A prototype of order `n` gives a band-pass of order `2n` made
//! of `n` sections, each with zeros at `z = 1` and `z = -1`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSettings {
    pub low_cut: f64,
    pub high_cut: f64,
    pub order: usize,
    pub passband_ripple: f64,
}

impl Default for FilterSettings {
    fn default() -> Self {
        FilterSettings {
            low_cut: 2.0,
            high_cut: 40.0,
            order: 4,
            passband_ripple: 0.5,
        }
    }
}

/// One second-order section, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }

    /// Steady-state direct-form-II-transposed state for a unit step input.
    fn step_state(&self) -> [f64; 2] {
        let [b0, b1, b2] = self.b;
        let [_, a1, a2] = self.a;
        let r0 = b1 - a1 * b0;
        let r1 = b2 - a2 * b0;
        let z0 = (r0 + r1) / (1.0 + a1 + a2);
        [z0, r1 - a2 * z0]
    }

    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    /// Prototype order; the band-pass has twice this order.
    pub order: usize,
    pub passband_ripple: f64,
    pub sampling_rate: f64,
    pub sections: Vec<Biquad>,
}

fn bilinear(s: Complex64, fs2: f64) -> Complex64 {
    (fs2 + s) / (fs2 - s)
}

pub fn design_cheby1_bandpass(
    low: f64,
    high: f64,
    order: usize,
    ripple_db: f64,
    fs: f64,
) -> Result<FilterSpec> {
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::validation(format!("sampling rate must be positive, got {fs}")));
    }
    let nyquist = fs / 2.0;
    if !(low.is_finite() && high.is_finite() && 0.0 < low && low < high && high < nyquist) {
        return Err(Error::validation(format!(
            "band edges must satisfy 0 < low < high < fs/2 = {nyquist}; got [{low}, {high}]"
        )));
    }
    if !(2..=10).contains(&order) {
        return Err(Error::validation(format!("filter order must be in [2, 10], got {order}")));
    }
    if !(ripple_db.is_finite() && ripple_db > 0.0) {
        return Err(Error::validation(format!(
            "passband ripple must be positive, got {ripple_db} dB"
        )));
    }

    let eps = (10f64.powf(ripple_db / 10.0) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / order as f64;
    let fs2 = 2.0 * fs;
    let w_low = fs2 * (PI * low / fs).tan();
    let w_high = fs2 * (PI * high / fs).tan();
    let bw = w_high - w_low;
    let w0_sq = w_low * w_high;

    let mut poles = Vec::with_capacity(2 * order);
    for k in 1..=order {
        let theta = PI * (2 * k - 1) as f64 / (2 * order) as f64;
        let p = Complex64::new(-mu.sinh() * theta.sin(), mu.cosh() * theta.cos());
        let half = p * (bw / 2.0);
        let root = (half * half - w0_sq).sqrt();
        poles.push(bilinear(half + root, fs2));
        poles.push(bilinear(half - root, fs2));
    }

    let mut sections = pair_poles(&poles)?;
    if sections.len() != order {
        return Err(Error::Numerical("pole pairing produced the wrong number of sections".into()));
    }

    // Normalise at the band centre, where the prototype's DC gain lands.
    let centre = 2.0 * (w0_sq.sqrt() / fs2).atan();
    let target = if order % 2 == 1 { 1.0 } else { 1.0 / (1.0 + eps * eps).sqrt() };
    let raw = cascade_response(&sections, centre).norm();
    if !(raw.is_finite() && raw > 0.0) {
        return Err(Error::Numerical("degenerate band-pass gain".into()));
    }
    for c in sections[0].b.iter_mut() {
        *c *= target / raw;
    }

    let spec = FilterSpec {
        low_cut: low,
        high_cut: high,
        order,
        passband_ripple: ripple_db,
        sampling_rate: fs,
        sections,
    };
    if spec.max_pole_radius() >= 1.0 {
        return Err(Error::Numerical("designed filter is unstable".into()));
    }
    Ok(spec)
}

/// Group poles into conjugate pairs (or pairs of real poles), one section each.
fn pair_poles(poles: &[Complex64]) -> Result<Vec<Biquad>> {
    let tol = 1e-10;
    let mut sections = Vec::new();
    let mut reals = Vec::new();
    let mut upper: Vec<Complex64> = Vec::new();
    let mut lower = 0usize;
    for &p in poles {
        if p.im.abs() <= tol * p.norm().max(1.0) {
            reals.push(p.re);
        } else if p.im > 0.0 {
            upper.push(p);
        } else {
            lower += 1;
        }
    }
    if upper.len() != lower || reals.len() % 2 != 0 {
        return Err(Error::Numerical("poles are not in conjugate pairs".into()));
    }
    let zeros = [1.0, 0.0, -1.0];
    for p in upper {
        sections.push(Biquad {
            b: zeros,
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        });
    }
    reals.sort_by(f64::total_cmp);
    for pair in reals.chunks(2) {
        sections.push(Biquad {
            b: zeros,
            a: [1.0, -(pair[0] + pair[1]), pair[0] * pair[1]],
        });
    }
    Ok(sections)
}

fn cascade_response(sections: &[Biquad], omega: f64) -> Complex64 {
    let z_inv = Complex64::from_polar(1.0, -omega);
    sections
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
}

/// Roots of a monic quadratic `z² + a1 z + a2`.
fn quadratic_roots(a1: f64, a2: f64) -> [Complex64; 2] {
    let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
    [(-a1 + disc) / 2.0, (-a1 - disc) / 2.0]
}

impl FilterSpec {
    pub fn from_settings(settings: &FilterSettings, fs: f64) -> Result<FilterSpec> {
        design_cheby1_bandpass(
            settings.low_cut,
            settings.high_cut,
            settings.order,
            settings.passband_ripple,
            fs,
        )
    }

    /// Single-pass magnitude response at `freq` Hz.
    pub fn gain_at(&self, freq: f64) -> f64 {
        cascade_response(&self.sections, 2.0 * PI * freq / self.sampling_rate).norm()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.sections
            .iter()
            .flat_map(|s| quadratic_roots(s.a[1], s.a[2]))
            .collect()
    }

    pub fn max_pole_radius(&self) -> f64 {
        self.poles().iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Order of the realised band-pass transfer function.
    pub fn filter_order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Expanded transfer function `(numerator, denominator)` in powers of `z⁻¹`.
    pub fn coefficients(&self) -> (Vec<f64>, Vec<f64>) {
        let mut num = vec![1.0];
        let mut den = vec![1.0];
        for s in &self.sections {
            num = poly_mul(&num, &s.b);
            den = poly_mul(&den, &s.a);
        }
        (num, den)
    }

    /// Reflection padding used by [`filtfilt`]: `3 × (filter order + 1)`.
    pub fn pad_len(&self) -> usize {
        3 * (self.filter_order() + 1)
    }
}

fn poly_mul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &x) in p.iter().enumerate() {
        for (j, &y) in q.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Run the cascade over `x` starting from steady state for a constant input
/// equal to `x0`.
fn sosfilt_steady(sections: &[Biquad], x: &mut [f64], x0: f64) {
    let mut scale = 1.0;
    for s in sections {
        let zi = s.step_state();
        let mut z = [zi[0] * scale * x0, zi[1] * scale * x0];
        scale *= s.dc_gain();
        let [b0, b1, b2] = s.b;
        let [_, a1, a2] = s.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Zero-phase forward-backward filtering with odd reflection padding.
pub fn filtfilt(spec: &FilterSpec, signal: &[f64]) -> Result<Vec<f64>> {
    let pad = spec.pad_len();
    let n = signal.len();
    if n <= pad {
        return Err(Error::Length(format!(
            "signal of {n} samples is too short for zero-phase filtering; need more than {pad}"
        )));
    }
    let first = signal[0];
    let last = signal[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * first - signal[i]));
    ext.extend_from_slice(signal);
    ext.extend((1..=pad).map(|i| 2.0 * last - signal[n - 1 - i]));

    let x0 = ext[0];
    sosfilt_steady(&spec.sections, &mut ext, x0);
    ext.reverse();
    let y0 = ext[0];
    sosfilt_steady(&spec.sections, &mut ext, y0);
    ext.reverse();
    Ok(ext[pad..pad + n].to_vec())
}

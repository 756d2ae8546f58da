//! Welch power spectral density estimate.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fmt_g9, parse_f64, parse_usize, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
    Rectangular,
}

impl Window {
    /// Periodic (DFT-even) window coefficients.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let arg = |i: usize| 2.0 * PI * i as f64 / n as f64;
        match self {
            Window::Hann => (0..n).map(|i| 0.5 - 0.5 * arg(i).cos()).collect(),
            Window::Hamming => (0..n).map(|i| 0.54 - 0.46 * arg(i).cos()).collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Hann => "hann",
            Window::Hamming => "hamming",
            Window::Rectangular => "rectangular",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Window> {
        match s {
            "hann" => Ok(Window::Hann),
            "hamming" => Ok(Window::Hamming),
            "rectangular" | "boxcar" => Ok(Window::Rectangular),
            other => Err(Error::validation(format!("unknown window `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelchSettings {
    /// Segment length in seconds.
    pub segment_seconds: f64,
    pub overlap: f64,
    pub window: Window,
}

impl Default for WelchSettings {
    fn default() -> Self {
        WelchSettings {
            segment_seconds: 1.0,
            overlap: 0.5,
            window: Window::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    /// One-sided power per Hz.
    pub power: Vec<f64>,
    pub segment_length: usize,
    pub overlap: f64,
    pub window: Window,
    pub sampling_rate: f64,
}

/// Average of mean-removed, windowed periodograms over overlapping segments.
pub fn welch_psd(
    signal: &[f64],
    fs: f64,
    segment_length: usize,
    overlap: f64,
    window: Window,
) -> Result<PsdEstimate> {
    if segment_length < 2 {
        return Err(Error::validation("Welch segment must hold at least 2 samples"));
    }
    if segment_length > signal.len() {
        return Err(Error::Length(format!(
            "Welch segment of {segment_length} samples exceeds the {}-sample signal",
            signal.len()
        )));
    }
    if !(0.0..=0.9).contains(&overlap) {
        return Err(Error::validation(format!("overlap must be in [0, 0.9], got {overlap}")));
    }
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::validation(format!("sampling rate must be positive, got {fs}")));
    }

    let step = segment_length - (overlap * segment_length as f64).floor() as usize;
    let win = window.coefficients(segment_length);
    let win_power: f64 = win.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_length);
    let n_bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); segment_length];
    let mut segments = 0usize;
    let mut start = 0;
    while start + segment_length <= signal.len() {
        let seg = &signal[start..start + segment_length];
        let mean = seg.iter().sum::<f64>() / segment_length as f64;
        for ((b, &x), &w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * win_power * segments as f64);
    let even = segment_length.is_multiple_of(2);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = k != 0 && !(even && k == n_bins - 1);
            p * scale * if one_sided { 2.0 } else { 1.0 }
        })
        .collect();
    let frequencies = (0..n_bins)
        .map(|k| k as f64 * fs / segment_length as f64)
        .collect();
    Ok(PsdEstimate {
        frequencies,
        power,
        segment_length,
        overlap,
        window,
        sampling_rate: fs,
    })
}

impl PsdEstimate {
    /// Frequency resolution in Hz.
    pub fn resolution(&self) -> f64 {
        self.sampling_rate / self.segment_length as f64
    }

    /// Index of the bin closest to `freq`.
    pub fn bin_of(&self, freq: f64) -> usize {
        let k = (freq / self.resolution()).round().max(0.0) as usize;
        k.min(self.power.len() - 1)
    }

    /// Integrated power (rectangle rule over bins).
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution()
    }

    /// Indices of bins whose centre lies in `[lo, hi]`.
    pub fn band(&self, lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
        let r = self.resolution();
        let first = (lo / r).ceil() as usize;
        let last = ((hi / r).floor() as usize).min(self.power.len() - 1);
        first..=last
    }

    pub fn to_delimited(&self, provenance: &str) -> String {
        let mut out = String::new();
        out.push_str(provenance);
        out.push_str(&format!("# window={}\n", self.window));
        out.push_str(&format!("# segment_length={}\n", self.segment_length));
        out.push_str(&format!("# overlap={}\n", fmt_g9(self.overlap)));
        out.push_str(&format!("# fs={}\n", fmt_g9(self.sampling_rate)));
        out.push_str("frequency,power\n");
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            out.push_str(&format!("{},{}\n", fmt_g9(*f), fmt_g9(*p)));
        }
        out
    }

    pub fn from_delimited(input: &str) -> Result<PsdEstimate> {
        let table = Table::parse(input)?;
        table.expect_header(&["frequency", "power"])?;
        let mut frequencies = Vec::with_capacity(table.rows.len());
        let mut power = Vec::with_capacity(table.rows.len());
        for (line, row) in &table.rows {
            frequencies.push(parse_f64(&row[0], *line)?);
            power.push(parse_f64(&row[1], *line)?);
        }
        if power.is_empty() {
            return Err(Error::parse(0, "PSD table has no rows"));
        }
        let window = table
            .meta("window")
            .ok_or_else(|| Error::parse(0, "missing metadata `window`"))?
            .parse()
            .map_err(|e: Error| Error::parse(0, e.to_string()))?;
        let segment_length = parse_usize(
            table
                .meta("segment_length")
                .ok_or_else(|| Error::parse(0, "missing metadata `segment_length`"))?,
            0,
        )?;
        if segment_length == 0 {
            return Err(Error::parse(0, "segment_length must be positive"));
        }
        Ok(PsdEstimate {
            frequencies,
            power,
            segment_length,
            overlap: table.meta_f64("overlap")?,
            window,
            sampling_rate: table.meta_f64("fs")?,
        })
    }
}

//! Synthetic dual-frequency evoked EEG.
//!
//! Every trial carries two steady-state responses (one per motion channel)
//! with harmonics, mixed into each electrode through a fixed gain, plus a
//! pink/white noise floor scaled to the requested SNR. A per-trial dominance
//! draw lets one of the two responses fade, so that only one spectral peak
//! stands out in some trials.
//!
//! All randomness comes from ChaCha8 streams; a trial is fully determined by
//! its 64-bit seed. Dataset trials derive their seeds with [`trial_seed`].

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::coding::{validate_plan, FrequencyPair, FrequencyPlan};
use crate::error::{Error, Result};

pub const DEFAULT_CHANNELS: [&str; 6] = ["Pz", "PO7", "PO3", "PO4", "PO8", "Oz"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Evoked-to-noise power ratio over all channels and samples.
    pub snr_db: f64,
    /// Generate noise only; the evoked component is exactly zero.
    #[serde(default)]
    pub noise_only: bool,
    /// Lower bound of the weaker response's relative amplitude.
    pub dominance_low: f64,
    pub n_harmonics: usize,
    /// Amplitude ratio between consecutive harmonics.
    pub harmonic_decay: f64,
    /// Trial length in seconds.
    pub duration: f64,
    /// Share of noise power that is pink (the rest is white).
    pub pink_fraction: f64,
    /// Per-electrode gain of the evoked source.
    pub channel_gains: Vec<f64>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            snr_db: -22.0,
            noise_only: false,
            dominance_low: 0.2,
            n_harmonics: 2,
            harmonic_decay: 0.5,
            duration: 3.5,
            pink_fraction: 0.5,
            channel_gains: vec![0.6, 0.7, 0.9, 0.9, 0.7, 1.0],
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::validation("snr_db must be finite (use noise_only for pure noise)"));
        }
        if !(self.dominance_low > 0.0 && self.dominance_low <= 1.0) {
            return Err(Error::validation(format!(
                "dominance_low must be in (0, 1], got {}",
                self.dominance_low
            )));
        }
        if self.n_harmonics == 0 {
            return Err(Error::validation("n_harmonics must be at least 1"));
        }
        if !(self.harmonic_decay.is_finite() && self.harmonic_decay > 0.0) {
            return Err(Error::validation("harmonic_decay must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::validation("trial duration must be positive"));
        }
        if !(0.0..=1.0).contains(&self.pink_fraction) {
            return Err(Error::validation("pink_fraction must be in [0, 1]"));
        }
        if self.channel_gains.is_empty() || self.channel_gains.iter().any(|g| !g.is_finite()) {
            return Err(Error::validation("channel_gains must be a non-empty list of finite values"));
        }
        Ok(())
    }
}

/// One labelled multi-channel trial; `samples` is channels × samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub id: String,
    pub class_index: usize,
    pub run: usize,
    pub sampling_rate: f64,
    pub channel_names: Vec<String>,
    pub samples: DMatrix<f64>,
    pub seed: Option<u64>,
}

impl TrialRecord {
    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    /// First `n` samples of every channel.
    pub fn truncated(&self, n: usize) -> Result<TrialRecord> {
        if n > self.n_samples() {
            return Err(Error::Length(format!(
                "cannot take {n} samples from a {}-sample trial",
                self.n_samples()
            )));
        }
        Ok(TrialRecord {
            samples: self.samples.columns(0, n).into_owned(),
            ..self.clone()
        })
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` of class `class`:
/// `splitmix64(master ^ splitmix64((class << 32) | trial))`.
pub fn trial_seed(master_seed: u64, class: usize, trial: usize) -> u64 {
    let key = ((class as u64) << 32) | (trial as u64 & 0xFFFF_FFFF);
    splitmix64(master_seed ^ splitmix64(key))
}

/// Unit-variance, zero-mean noise with a 1/f power spectrum.
///
/// White Gaussian noise is shaped in the frequency domain by `1/sqrt(f)`
/// (DC removed), transformed back and standardised.
pub fn pink_noise(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pink_from_rng(n, &mut rng)
}

fn pink_from_rng(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        // Symmetric in k <-> n-k, so the inverse stays real.
        let bin = k.min(n - k) as f64;
        *c /= bin.sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    standardise(&mut out);
    out
}

fn standardise(x: &mut [f64]) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in x.iter_mut() {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
}

/// Relative amplitudes of the two responses for one trial.
fn draw_dominance(rng: &mut ChaCha8Rng, low: f64) -> (f64, f64) {
    let u = if low < 1.0 { rng.random_range(low..=1.0) } else { 1.0 };
    if rng.random_bool(0.5) {
        (1.0, u)
    } else {
        (u, 1.0)
    }
}

/// Noise-free evoked source and the dominance factors used, sampled at
/// `t = i / fs`.
fn evoked_source(
    pair: FrequencyPair,
    config: &SynthConfig,
    fs: f64,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, (f64, f64)) {
    let alpha = draw_dominance(rng, config.dominance_low);
    let mut source = vec![0.0; m];
    for (freq, weight) in [(pair.a, alpha.0), (pair.b, alpha.1)] {
        let mut amp = weight;
        for h in 1..=config.n_harmonics {
            let phase = rng.random_range(0.0..2.0 * PI);
            let w = 2.0 * PI * h as f64 * freq / fs;
            for (i, s) in source.iter_mut().enumerate() {
                *s += amp * (w * i as f64 + phase).sin();
            }
            amp *= config.harmonic_decay;
        }
    }
    (source, alpha)
}

pub fn synth_trial(
    pair: FrequencyPair,
    class_index: usize,
    config: &SynthConfig,
    sampling_rate: f64,
    seed: u64,
) -> Result<TrialRecord> {
    config.validate()?;
    if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
        return Err(Error::validation(format!(
            "sampling rate must be positive, got {sampling_rate}"
        )));
    }
    let nyquist = sampling_rate / 2.0;
    for f in [pair.a, pair.b] {
        let top = f * config.n_harmonics as f64;
        if top >= nyquist {
            return Err(Error::Nyquist {
                what: format!("harmonic {} of {f} Hz", config.n_harmonics),
                frequency: top,
                nyquist,
            });
        }
    }
    let m = (sampling_rate * config.duration).round() as usize;
    if m < 2 {
        return Err(Error::validation("trial would contain fewer than 2 samples"));
    }
    let k = config.channel_gains.len();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (source, _) = evoked_source(pair, config, sampling_rate, m, &mut rng);

    let pink_w = config.pink_fraction.sqrt();
    let white_w = (1.0 - config.pink_fraction).sqrt();
    let mut noise = DMatrix::<f64>::zeros(k, m);
    for c in 0..k {
        let pink = pink_from_rng(m, &mut rng);
        for (i, p) in pink.iter().enumerate() {
            let white: f64 = StandardNormal.sample(&mut rng);
            noise[(c, i)] = pink_w * p + white_w * white;
        }
    }
    let noise_power = noise.norm_squared() / (k * m) as f64;

    let samples = if config.noise_only {
        noise / noise_power.sqrt()
    } else {
        let evoked = DMatrix::from_fn(k, m, |c, i| config.channel_gains[c] * source[i]);
        let evoked_power = evoked.norm_squared() / (k * m) as f64;
        if !(evoked_power > 0.0) {
            return Err(Error::validation("channel gains produce no evoked power"));
        }
        let target_noise = evoked_power / 10f64.powf(config.snr_db / 10.0);
        evoked + noise * (target_noise / noise_power).sqrt()
    };

    Ok(TrialRecord {
        id: format!("c{class_index}"),
        class_index,
        run: 0,
        sampling_rate,
        channel_names: default_channel_names(k),
        samples,
        seed: Some(seed),
    })
}

/// The six default parietal-occipital electrodes, extended with `ch<i>`
/// labels when more channels are configured.
pub fn default_channel_names(k: usize) -> Vec<String> {
    (0..k)
        .map(|i| {
            DEFAULT_CHANNELS
                .get(i)
                .map(|s| s.to_string())
                .unwrap_or_else(|| format!("ch{i}"))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sampling_rate: f64,
    pub duration: f64,
    pub channel_names: Vec<String>,
    pub plan: FrequencyPlan,
    pub synth: Option<SynthConfig>,
    pub master_seed: Option<u64>,
    pub trials: Vec<TrialRecord>,
}

impl Dataset {
    pub fn n_classes(&self) -> usize {
        self.plan.n_targets()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.trials.iter().map(|t| t.class_index).collect()
    }
}

/// Balanced dataset: `trials_per_class` trials per target, ordered by trial
/// index then class. Trial `j` of each class belongs to run
/// `j / trials_per_run`.
pub fn synth_dataset(
    plan: &FrequencyPlan,
    config: &SynthConfig,
    trials_per_class: usize,
    trials_per_run: usize,
    sampling_rate: f64,
    master_seed: u64,
) -> Result<Dataset> {
    let violations = validate_plan(plan);
    if let Some(v) = violations.first() {
        return Err(Error::validation(format!("invalid plan: {v}")));
    }
    config.validate()?;
    let per_run = trials_per_run.max(1);
    let n_classes = plan.n_targets();
    let jobs: Vec<(usize, usize)> = (0..trials_per_class)
        .flat_map(|j| (0..n_classes).map(move |c| (j, c)))
        .collect();
    let trials = jobs
        .par_iter()
        .map(|&(j, c)| {
            let seed = trial_seed(master_seed, c, j);
            let mut t = synth_trial(plan.pairs[c], c, config, sampling_rate, seed)?;
            t.id = format!("t{:04}_c{}", j, c);
            t.run = j / per_run;
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        sampling_rate,
        duration: config.duration,
        channel_names: default_channel_names(config.channel_gains.len()),
        plan: plan.clone(),
        synth: Some(config.clone()),
        master_seed: Some(master_seed),
        trials,
    })
}

//! Evaluation: confusion matrices, per-class indices, ITR, window sweeps,
//! one-way ANOVA and a paired t-test, plus their text tables.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::classify::{classify_trials, ClassifierConfig};
use crate::error::{Error, Result};
use crate::synth::Dataset;
use crate::text::fmt_g9;

/// Rest period between trials, seconds.
pub const DEFAULT_REST: f64 = 2.5;

/// One-vs-rest indices for a single class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassIndices {
    pub specificity: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub accuracy: f64,
}

impl ClassIndices {
    pub fn as_array(&self) -> [f64; 4] {
        [self.specificity, self.sensitivity, self.precision, self.accuracy]
    }
}

pub const INDEX_NAMES: [&str; 4] = ["specificity", "sensitivity", "precision", "accuracy"];

/// Confusion counts (rows = true class, columns = predicted) and the
/// quantities derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct Confusion {
    pub counts: Vec<Vec<usize>>,
    pub per_class: Vec<ClassIndices>,
    pub overall_accuracy: f64,
}

impl Confusion {
    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_and_indices(
    true_labels: &[usize],
    predicted_labels: &[usize],
    k: usize,
) -> Result<Confusion> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::validation(format!(
            "{} true labels but {} predictions",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    if k < 2 {
        return Err(Error::validation("need at least 2 classes"));
    }
    if true_labels.is_empty() {
        return Err(Error::validation("no labels to evaluate"));
    }
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        if t >= k || p >= k {
            return Err(Error::validation(format!(
                "label pair ({t}, {p}) outside 0..{k}"
            )));
        }
        counts[t][p] += 1;
    }
    let total = true_labels.len();
    let per_class = (0..k)
        .map(|c| {
            let tp = counts[c][c];
            let row: usize = counts[c].iter().sum();
            let col: usize = counts.iter().map(|r| r[c]).sum();
            let fn_ = row - tp;
            let fp = col - tp;
            let tn = total - tp - fn_ - fp;
            ClassIndices {
                specificity: ratio(tn, tn + fp),
                sensitivity: ratio(tp, tp + fn_),
                precision: ratio(tp, tp + fp),
                accuracy: ratio(tp + tn, total),
            }
        })
        .collect();
    let hits: usize = (0..k).map(|c| counts[c][c]).sum();
    Ok(Confusion {
        counts,
        per_class,
        overall_accuracy: ratio(hits, total),
    })
}

/// Which selection time enters the ITR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TRule {
    /// Window plus the rest period.
    WithRest,
    /// Window alone.
    WindowOnly,
}

impl TRule {
    pub fn period(self, window: f64, rest: f64) -> f64 {
        match self {
            TRule::WithRest => window + rest,
            TRule::WindowOnly => window,
        }
    }
}

impl fmt::Display for TRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TRule::WithRest => "with-rest",
            TRule::WindowOnly => "window-only",
        })
    }
}

impl FromStr for TRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<TRule> {
        match s {
            "with-rest" => Ok(TRule::WithRest),
            "window-only" => Ok(TRule::WindowOnly),
            other => Err(Error::validation(format!(
                "unknown T rule `{other}` (with-rest|window-only)"
            ))),
        }
    }
}

/// Information transfer rate in bits per minute.
///
/// `(60/T)·[log₂K + σlog₂σ + (1−σ)log₂((1−σ)/(K−1))]`, evaluated as
/// `σ·log₂(Kσ) + (1−σ)·log₂(1 + (1−Kσ)/(K−1))` so that chance level gives
/// exactly zero. The `σ = 0` and `σ = 1` terms take their limits.
pub fn itr(sigma: f64, k: usize, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::validation(format!("accuracy {sigma} outside [0, 1]")));
    }
    if k < 2 {
        return Err(Error::validation("ITR needs at least 2 classes"));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::validation(format!("selection time must be positive, got {t}")));
    }
    let kf = k as f64;
    let hit = if sigma > 0.0 { sigma * (kf * sigma).log2() } else { 0.0 };
    let miss = if sigma < 1.0 {
        (1.0 - sigma) * ((1.0 - kf * sigma) / (kf - 1.0)).ln_1p() / std::f64::consts::LN_2
    } else {
        0.0
    };
    Ok(60.0 / t * (hit + miss))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub confusion: Vec<Vec<usize>>,
    pub per_class: Vec<ClassIndices>,
    pub overall_accuracy: f64,
    pub itr_bits_per_min: f64,
    pub window_seconds: f64,
    pub trial_period_seconds: f64,
    pub t_rule: TRule,
    pub n_classes: usize,
}

pub fn evaluate(
    true_labels: &[usize],
    predicted_labels: &[usize],
    k: usize,
    window_seconds: f64,
    t_rule: TRule,
    rest: f64,
) -> Result<EvalReport> {
    let c = confusion_and_indices(true_labels, predicted_labels, k)?;
    let period = t_rule.period(window_seconds, rest);
    Ok(EvalReport {
        itr_bits_per_min: itr(c.overall_accuracy, k, period)?,
        confusion: c.counts,
        per_class: c.per_class,
        overall_accuracy: c.overall_accuracy,
        window_seconds,
        trial_period_seconds: period,
        t_rule,
        n_classes: k,
    })
}

/// `0.5, 1.0, …, 4.0` seconds.
pub fn default_windows() -> Vec<f64> {
    (1..=8).map(|i| i as f64 * 0.5).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub window_seconds: f64,
    pub trial_period_seconds: f64,
    pub accuracy: f64,
    pub itr_bits_per_min: f64,
}

/// Accuracy and ITR when only the first `window` seconds of each trial are
/// used.
pub fn time_window_sweep(
    dataset: &Dataset,
    config: &ClassifierConfig,
    windows: &[f64],
    t_rule: TRule,
    rest: f64,
) -> Result<Vec<SweepPoint>> {
    if windows.is_empty() {
        return Err(Error::validation("no sweep windows given"));
    }
    let shortest = dataset
        .trials
        .iter()
        .map(|t| t.n_samples())
        .min()
        .ok_or_else(|| Error::validation("dataset has no trials"))?;
    let fs = dataset.sampling_rate;
    let samples = |w: f64| (w * fs).round() as usize;
    let bad: Vec<String> = windows
        .iter()
        .filter(|&&w| !(w.is_finite() && w > 0.0) || samples(w) > shortest)
        .map(|w| format!("{w} s"))
        .collect();
    if !bad.is_empty() {
        return Err(Error::Length(format!(
            "windows {} exceed the {}-sample trials or are not positive",
            bad.join(", "),
            shortest
        )));
    }
    let truth = dataset.labels();
    let k = dataset.n_classes();
    windows
        .iter()
        .map(|&w| {
            let predicted = classify_trials(&dataset.trials, &dataset.plan, config, Some(samples(w)))
                .into_iter()
                .map(|r| r.map(|p| p.predicted))
                .collect::<Result<Vec<_>>>()?;
            let r = evaluate(&truth, &predicted, k, w, t_rule, rest)?;
            Ok(SweepPoint {
                window_seconds: w,
                trial_period_seconds: r.trial_period_seconds,
                accuracy: r.overall_accuracy,
                itr_bits_per_min: r.itr_bits_per_min,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anova {
    pub f: f64,
    pub p: f64,
    pub df_between: usize,
    pub df_within: usize,
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_upper_tail(f: f64, d1: f64, d2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    if f.is_infinite() {
        return 0.0;
    }
    beta_reg(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * f))
}

pub fn anova_oneway(groups: &[Vec<f64>]) -> Result<Anova> {
    if groups.len() < 2 {
        return Err(Error::validation("ANOVA needs at least 2 groups"));
    }
    if groups.iter().any(|g| g.len() < 2) {
        return Err(Error::validation("every ANOVA group needs at least 2 values"));
    }
    if groups.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::validation("ANOVA values must be finite"));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ssb = 0.0;
    let mut ssw = 0.0;
    for g in groups {
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        ssb += g.len() as f64 * (mean - grand).powi(2);
        ssw += g.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    }
    if ssb == 0.0 && ssw == 0.0 {
        return Err(Error::validation("all ANOVA values are identical"));
    }
    let df_between = groups.len() - 1;
    let df_within = n - groups.len();
    let f = if ssw == 0.0 {
        f64::INFINITY
    } else {
        (ssb / df_between as f64) / (ssw / df_within as f64)
    };
    Ok(Anova {
        f,
        p: f_upper_tail(f, df_between as f64, df_within as f64),
        df_between,
        df_within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// One-sided p-value for `mean(a − b) > 0`.
    pub p: f64,
}

/// Upper tail `P(T > t)` of Student's t distribution.
pub fn t_upper_tail(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let half = 0.5 * beta_reg(df / 2.0, 0.5, df / (df + t * t));
    if t >= 0.0 {
        half
    } else {
        1.0 - half
    }
}

/// Paired t-test of `a > b`.
pub fn paired_t_test_greater(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::validation("paired samples differ in length"));
    }
    if a.len() < 2 {
        return Err(Error::validation("paired t-test needs at least 2 pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 && mean == 0.0 {
        return Err(Error::validation("paired differences are all zero"));
    }
    let t = if var == 0.0 {
        mean.signum() * f64::INFINITY
    } else {
        mean / (var / n).sqrt()
    };
    let df = d.len() - 1;
    Ok(TTest {
        t,
        df,
        p: t_upper_tail(t, df as f64),
    })
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-class indices computed separately for each run.
pub fn indices_by_run(
    true_labels: &[usize],
    predicted_labels: &[usize],
    runs: &[usize],
    k: usize,
) -> Result<Vec<Vec<ClassIndices>>> {
    if runs.len() != true_labels.len() {
        return Err(Error::validation("run labels do not match the trial count"));
    }
    let mut ids: Vec<usize> = runs.to_vec();
    ids.sort_unstable();
    ids.dedup();
    ids.iter()
        .map(|&run| {
            let (t, p): (Vec<usize>, Vec<usize>) = runs
                .iter()
                .zip(true_labels.iter().zip(predicted_labels))
                .filter(|(r, _)| **r == run)
                .map(|(_, (t, p))| (*t, *p))
                .unzip();
            Ok(confusion_and_indices(&t, &p, k)?.per_class)
        })
        .collect()
}

/// Class × four indices, mean and std across runs.
pub fn class_table(by_run: &[Vec<ClassIndices>], echo: &str) -> String {
    let mut out = String::from(echo);
    out.push_str(&format!("# runs={}\n", by_run.len()));
    out.push_str("class");
    for name in INDEX_NAMES {
        out.push_str(&format!(",{name}_mean,{name}_std"));
    }
    out.push('\n');
    let k = by_run.first().map_or(0, Vec::len);
    for c in 0..k {
        out.push_str(&c.to_string());
        for i in 0..4 {
            let vals: Vec<f64> = by_run.iter().map(|r| r[c].as_array()[i]).collect();
            let (m, s) = mean_std(&vals);
            out.push_str(&format!(",{},{}", fmt_g9(m), fmt_g9(s)));
        }
        out.push('\n');
    }
    out
}

/// Method × accuracy / ITR.
pub fn method_table(rows: &[(String, EvalReport)], echo: &str) -> String {
    let mut out = String::from(echo);
    out.push_str("method,window_seconds,t_rule,trial_period_seconds,accuracy,itr_bits_per_min\n");
    for (name, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            name,
            fmt_g9(r.window_seconds),
            r.t_rule,
            fmt_g9(r.trial_period_seconds),
            fmt_g9(r.overall_accuracy),
            fmt_g9(r.itr_bits_per_min)
        ));
    }
    out
}

pub fn confusion_table(counts: &[Vec<usize>], echo: &str) -> String {
    let mut out = String::from(echo);
    out.push_str("true");
    for c in 0..counts.len() {
        out.push_str(&format!(",pred_{c}"));
    }
    out.push('\n');
    for (c, row) in counts.iter().enumerate() {
        out.push_str(&c.to_string());
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn sweep_table(points: &[SweepPoint], t_rule: TRule, echo: &str) -> String {
    let mut out = String::from(echo);
    out.push_str(&format!("# t_rule={t_rule}\n"));
    out.push_str("window_seconds,trial_period_seconds,accuracy,itr_bits_per_min\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_g9(p.window_seconds),
            fmt_g9(p.trial_period_seconds),
            fmt_g9(p.accuracy),
            fmt_g9(p.itr_bits_per_min)
        ));
    }
    out
}

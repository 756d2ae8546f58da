//! Canonical correlation analysis and the CCA / bifold-CCA classifiers.
//!
//! The largest canonical correlation between `X` (K×m) and `Y` (r×m) is the
//! largest singular value of the whitened cross-covariance
//! `Lx⁻¹ Cxy Ly⁻ᵀ`, where `Lx`, `Ly` are Cholesky factors of the
//! (optionally ridge-regularised) auto-covariances. Rows are mean-centred
//! within the window and covariances use the `1/(m-1)` normalisation.
//!
//! Reference matrices follow the harmonic sine/cosine layout
//! `[cos 2πft, sin 2πft, …, cos 2πN_h f t, sin 2πN_h f t]` with
//! `t = 1/fs, …, m/fs`. The bifold classifier scores each target against
//! three references (each motion frequency alone, and both together with
//! the sum-frequency pair) and ranks targets by the mean of the three
//! correlations.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::coding::FrequencyPlan;
use crate::error::{Error, Result};
use crate::synth::TrialRecord;
use crate::text::fmt_g9;

/// Default ridge, relative to the mean auto-covariance eigenvalue.
pub const DEFAULT_RIDGE: f64 = 1e-6;

pub fn reference_signals(f: f64, n_harmonics: usize, fs: f64, m: usize) -> Result<DMatrix<f64>> {
    if n_harmonics == 0 {
        return Err(Error::validation("at least one harmonic is required"));
    }
    if m < 2 {
        return Err(Error::Length(format!("reference window of {m} samples is too short")));
    }
    if !(f.is_finite() && f > 0.0 && fs.is_finite() && fs > 0.0) {
        return Err(Error::validation(format!(
            "reference frequency {f} Hz and sampling rate {fs} Hz must be positive"
        )));
    }
    let top = f * n_harmonics as f64;
    if top >= fs / 2.0 {
        return Err(Error::Nyquist {
            what: format!("harmonic {n_harmonics} of {f} Hz"),
            frequency: top,
            nyquist: fs / 2.0,
        });
    }
    Ok(harmonic_rows(&[f], n_harmonics, fs, m))
}

/// cos/sin row pairs for each frequency times each harmonic, in order.
fn harmonic_rows(freqs: &[f64], n_harmonics: usize, fs: f64, m: usize) -> DMatrix<f64> {
    let rows = 2 * n_harmonics * freqs.len();
    let mut y = DMatrix::zeros(rows, m);
    let mut r = 0;
    for &f in freqs {
        for h in 1..=n_harmonics {
            let w = 2.0 * std::f64::consts::PI * h as f64 * f;
            for i in 0..m {
                let t = (i + 1) as f64 / fs;
                let (s, c) = (w * t).sin_cos();
                y[(r, i)] = c;
                y[(r + 1, i)] = s;
            }
            r += 2;
        }
    }
    y
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifoldReference {
    pub y1: DMatrix<f64>,
    pub y2: DMatrix<f64>,
    /// `y1`, `y2` and the `(f1 + f2)` cos/sin rows, stacked vertically.
    pub yc: DMatrix<f64>,
}

pub fn bifold_references(
    f1: f64,
    f2: f64,
    n_harmonics: usize,
    fs: f64,
    m: usize,
) -> Result<BifoldReference> {
    let y1 = reference_signals(f1, n_harmonics, fs, m)?;
    let y2 = reference_signals(f2, n_harmonics, fs, m)?;
    let sum = f1 + f2;
    if sum >= fs / 2.0 {
        return Err(Error::Nyquist {
            what: format!("sum frequency {f1} + {f2} Hz"),
            frequency: sum,
            nyquist: fs / 2.0,
        });
    }
    let extra = harmonic_rows(&[sum], 1, fs, m);
    let rows = y1.nrows() + y2.nrows() + extra.nrows();
    let mut yc = DMatrix::zeros(rows, m);
    yc.rows_mut(0, y1.nrows()).copy_from(&y1);
    yc.rows_mut(y1.nrows(), y2.nrows()).copy_from(&y2);
    yc.rows_mut(y1.nrows() + y2.nrows(), 2).copy_from(&extra);
    Ok(BifoldReference { y1, y2, yc })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CcaResult {
    pub rho: f64,
    /// Projection weights for `X`; `w_xᵀX` has unit (regularised) variance.
    pub w_x: DVector<f64>,
    pub w_y: DVector<f64>,
}

/// One side of a CCA problem: centred rows and the Cholesky factor of their
/// regularised covariance.
#[derive(Debug, Clone)]
struct Whitened {
    centred: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

fn centre_rows(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    c
}

impl Whitened {
    fn new(x: &DMatrix<f64>, ridge: f64, label: &str) -> Result<Whitened> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(format!("{label} contains non-finite values")));
        }
        let m = x.ncols();
        let centred = centre_rows(x);
        let mut cov = &centred * centred.transpose() / (m as f64 - 1.0);
        if ridge > 0.0 {
            let dim = cov.nrows() as f64;
            let shift = ridge * cov.trace() / dim;
            for i in 0..cov.nrows() {
                cov[(i, i)] += shift;
            }
        }
        let hint = if ridge > 0.0 {
            "has a zero-variance row"
        } else {
            "is rank deficient; use a ridge > 0"
        };
        let chol = cov
            .cholesky()
            .ok_or_else(|| Error::Singular(format!("covariance of {label} {hint}")))?;
        Ok(Whitened {
            centred,
            chol_l: chol.l(),
        })
    }
}

fn check_ridge(ridge: f64) -> Result<()> {
    if !(ridge.is_finite() && ridge >= 0.0) {
        return Err(Error::validation(format!("ridge must be finite and >= 0, got {ridge}")));
    }
    Ok(())
}

fn solve_whitened(x: &Whitened, y: &Whitened) -> Result<CcaResult> {
    let m = x.centred.ncols();
    let cxy = &x.centred * y.centred.transpose() / (m as f64 - 1.0);
    let numerical = || Error::Numerical("triangular solve failed".into());
    // Lx⁻¹ Cxy, then (Ly⁻¹ (Lx⁻¹ Cxy)ᵀ)ᵀ.
    let a = x.chol_l.solve_lower_triangular(&cxy).ok_or_else(numerical)?;
    let t = y
        .chol_l
        .solve_lower_triangular(&a.transpose())
        .ok_or_else(numerical)?
        .transpose();
    let svd = SVD::try_new(t, true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("SVD did not converge".into()))?;
    let (best, &sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Numerical("empty SVD".into()))?;
    let u = svd.u.as_ref().expect("left vectors requested").column(best).into_owned();
    let v = svd.v_t.as_ref().expect("right vectors requested").row(best).transpose();
    let w_x = x
        .chol_l
        .transpose()
        .solve_upper_triangular(&u)
        .ok_or_else(numerical)?;
    let w_y = y
        .chol_l
        .transpose()
        .solve_upper_triangular(&v)
        .ok_or_else(numerical)?;
    Ok(CcaResult {
        rho: sigma.clamp(0.0, 1.0),
        w_x,
        w_y,
    })
}

fn check_shapes(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    if x.ncols() != y.ncols() {
        return Err(Error::validation(format!(
            "X has {} samples but Y has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let needed = x.nrows().max(y.nrows());
    if x.nrows() == 0 || y.nrows() == 0 || x.ncols() <= needed {
        return Err(Error::Length(format!(
            "CCA needs more samples ({}) than rows ({} and {})",
            x.ncols(),
            x.nrows(),
            y.nrows()
        )));
    }
    Ok(())
}

/// Largest canonical correlation between the rows of `x` and `y`.
pub fn cca_max_corr(x: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<CcaResult> {
    check_ridge(ridge)?;
    check_shapes(x, y)?;
    let wx = Whitened::new(x, ridge, "X")?;
    let wy = Whitened::new(y, ridge, "Y")?;
    solve_whitened(&wx, &wy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Single combined reference per target (both frequencies and their sum).
    Cca,
    /// Mean of the correlations against each single-frequency reference and
    /// the combined one.
    Bcca,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Cca => "cca",
            Method::Bcca => "bcca",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        match s {
            "cca" => Ok(Method::Cca),
            "bcca" => Ok(Method::Bcca),
            other => Err(Error::validation(format!("unknown classifier `{other}` (cca|bcca)"))),
        }
    }
}

struct PreparedTarget {
    y1: Whitened,
    y2: Whitened,
    yc: Whitened,
}

/// Per-target references for a fixed window, with their whitening factors.
/// Immutable once built; share it across trials and threads.
pub struct ReferenceBank {
    pub n_harmonics: usize,
    pub sampling_rate: f64,
    pub window_samples: usize,
    pub ridge: f64,
    pub references: Vec<BifoldReference>,
    prepared: Vec<PreparedTarget>,
}

impl fmt::Debug for ReferenceBank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReferenceBank")
            .field("n_targets", &self.references.len())
            .field("n_harmonics", &self.n_harmonics)
            .field("sampling_rate", &self.sampling_rate)
            .field("window_samples", &self.window_samples)
            .field("ridge", &self.ridge)
            .finish()
    }
}

impl ReferenceBank {
    pub fn new(
        plan: &FrequencyPlan,
        n_harmonics: usize,
        sampling_rate: f64,
        window_samples: usize,
        ridge: f64,
    ) -> Result<ReferenceBank> {
        check_ridge(ridge)?;
        let mut references = Vec::with_capacity(plan.n_targets());
        let mut prepared = Vec::with_capacity(plan.n_targets());
        for p in &plan.pairs {
            let r = bifold_references(p.a, p.b, n_harmonics, sampling_rate, window_samples)?;
            if window_samples <= r.yc.nrows() {
                return Err(Error::Length(format!(
                    "window of {window_samples} samples must exceed the {} reference rows",
                    r.yc.nrows()
                )));
            }
            prepared.push(PreparedTarget {
                y1: Whitened::new(&r.y1, ridge, "reference y1")?,
                y2: Whitened::new(&r.y2, ridge, "reference y2")?,
                yc: Whitened::new(&r.yc, ridge, "reference yc")?,
            });
            references.push(r);
        }
        Ok(ReferenceBank {
            n_harmonics,
            sampling_rate,
            window_samples,
            ridge,
            references,
            prepared,
        })
    }

    pub fn n_targets(&self) -> usize {
        self.references.len()
    }

    /// Score one trial whose window matches the bank.
    pub fn classify(&self, trial: &TrialRecord, method: Method) -> Result<ScoreVector> {
        self.classify_matrix(&trial.samples, trial.sampling_rate, method)
    }

    pub fn classify_matrix(
        &self,
        x: &DMatrix<f64>,
        sampling_rate: f64,
        method: Method,
    ) -> Result<ScoreVector> {
        if sampling_rate != self.sampling_rate {
            return Err(Error::validation(format!(
                "trial sampled at {sampling_rate} Hz but references built for {} Hz",
                self.sampling_rate
            )));
        }
        if x.ncols() != self.window_samples {
            return Err(Error::Length(format!(
                "trial has {} samples, references expect {}",
                x.ncols(),
                self.window_samples
            )));
        }
        if x.ncols() <= x.nrows() {
            return Err(Error::Length(format!(
                "trial window of {} samples must exceed its {} channels",
                x.ncols(),
                x.nrows()
            )));
        }
        let wx = Whitened::new(x, self.ridge, "trial")?;
        if self.n_targets() == 0 {
            return Err(Error::validation("plan has no targets"));
        }
        let mut targets = Vec::with_capacity(self.n_targets());
        for p in &self.prepared {
            let rho_c = solve_whitened(&wx, &p.yc)?.rho;
            let score = match method {
                Method::Cca => TargetScore {
                    rho1: None,
                    rho2: None,
                    rho_c,
                    rho_a: None,
                },
                Method::Bcca => {
                    let rho1 = solve_whitened(&wx, &p.y1)?.rho;
                    let rho2 = solve_whitened(&wx, &p.y2)?.rho;
                    TargetScore {
                        rho1: Some(rho1),
                        rho2: Some(rho2),
                        rho_c,
                        rho_a: Some(fuse(rho1, rho2, rho_c)),
                    }
                }
            };
            targets.push(score);
        }
        let predicted = argmax_lowest(targets.iter().map(TargetScore::decision));
        Ok(ScoreVector {
            method,
            targets,
            predicted,
        })
    }
}

/// Mean of the three bifold correlations.
pub fn fuse(rho1: f64, rho2: f64, rho_c: f64) -> f64 {
    (rho1 + rho2 + rho_c) / 3.0
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetScore {
    pub rho1: Option<f64>,
    pub rho2: Option<f64>,
    pub rho_c: f64,
    pub rho_a: Option<f64>,
}

impl TargetScore {
    /// Value the classifier ranks targets by.
    pub fn decision(&self) -> f64 {
        self.rho_a.unwrap_or(self.rho_c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    pub method: Method,
    pub targets: Vec<TargetScore>,
    pub predicted: usize,
}

impl ScoreVector {
    pub fn decision_value(&self) -> f64 {
        self.targets[self.predicted].decision()
    }

    /// Audit rows: `trial_id,target,rho1,rho2,rho_c,rho_a,predicted`.
    pub fn dump_rows(&self, trial_id: &str, out: &mut String) {
        let opt = |v: Option<f64>| v.map(fmt_g9).unwrap_or_else(|| "NA".to_string());
        for (i, t) in self.targets.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                trial_id,
                i,
                opt(t.rho1),
                opt(t.rho2),
                fmt_g9(t.rho_c),
                opt(t.rho_a),
                u8::from(i == self.predicted)
            ));
        }
    }
}

pub const SCORE_HEADER: &str = "trial_id,target,rho1,rho2,rho_c,rho_a,predicted";

fn classify_with(
    trial: &TrialRecord,
    plan: &FrequencyPlan,
    n_harmonics: usize,
    ridge: f64,
    method: Method,
) -> Result<ScoreVector> {
    let bank = ReferenceBank::new(plan, n_harmonics, trial.sampling_rate, trial.n_samples(), ridge)?;
    bank.classify(trial, method)
}

/// Baseline: rank targets by correlation with the combined reference only.
pub fn classify_cca(
    trial: &TrialRecord,
    plan: &FrequencyPlan,
    n_harmonics: usize,
    ridge: f64,
) -> Result<ScoreVector> {
    classify_with(trial, plan, n_harmonics, ridge, Method::Cca)
}

/// Bifold CCA; needs no training data.
pub fn classify_bcca(
    trial: &TrialRecord,
    plan: &FrequencyPlan,
    n_harmonics: usize,
    ridge: f64,
) -> Result<ScoreVector> {
    classify_with(trial, plan, n_harmonics, ridge, Method::Bcca)
}

//! Batch classification of trials and the predictions file.
//!
//! Each trial is optionally truncated to a leading window, band-pass
//! filtered with zero phase, then scored against a shared reference bank.
//! Truncation happens before filtering so a short window never sees
//! samples beyond its end.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::{Method, ReferenceBank, ScoreVector, DEFAULT_RIDGE};
use crate::coding::FrequencyPlan;
use crate::dsp::{filtfilt, FilterSettings, FilterSpec};
use crate::error::{Error, Result};
use crate::synth::TrialRecord;
use crate::text::{fmt_g9, parse_f64, parse_usize, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub method: Method,
    pub n_harmonics: usize,
    pub ridge: f64,
    /// Apply the band-pass before scoring.
    pub prefilter: bool,
    pub filter: FilterSettings,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            method: Method::Bcca,
            n_harmonics: 2,
            ridge: DEFAULT_RIDGE,
            prefilter: true,
            filter: FilterSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub trial_id: String,
    pub true_class: usize,
    pub run: usize,
    pub predicted: usize,
    /// Decision value of the predicted target.
    pub score: f64,
    pub scores: Option<ScoreVector>,
}

/// Truncate (when `window_samples` is set) and filter one trial.
pub fn preprocess(
    trial: &TrialRecord,
    filter: Option<&FilterSpec>,
    window_samples: Option<usize>,
) -> Result<TrialRecord> {
    let mut t = match window_samples {
        Some(n) => trial.truncated(n)?,
        None => trial.clone(),
    };
    if let Some(spec) = filter {
        for c in 0..t.samples.nrows() {
            let row: Vec<f64> = t.samples.row(c).iter().copied().collect();
            let y = filtfilt(spec, &row)?;
            for (i, v) in y.into_iter().enumerate() {
                t.samples[(c, i)] = v;
            }
        }
    }
    Ok(t)
}

/// Classify every trial in parallel. Results keep the input order; a failure
/// on one trial does not affect the others.
pub fn classify_trials(
    trials: &[TrialRecord],
    plan: &FrequencyPlan,
    config: &ClassifierConfig,
    window_samples: Option<usize>,
) -> Vec<Result<Prediction>> {
    let bank_for = |m: usize, fs: f64| {
        ReferenceBank::new(plan, config.n_harmonics, fs, m, config.ridge)
    };
    let filter_for = |fs: f64| FilterSpec::from_settings(&config.filter, fs);
    // Built once per distinct shape; failures are rebuilt per trial so each
    // trial reports its own error.
    let mut banks: BTreeMap<(usize, u64), Option<ReferenceBank>> = BTreeMap::new();
    let mut filters: BTreeMap<u64, Option<FilterSpec>> = BTreeMap::new();
    for t in trials {
        let m = window_samples.unwrap_or(t.n_samples());
        let fs = t.sampling_rate;
        banks
            .entry((m, fs.to_bits()))
            .or_insert_with(|| bank_for(m, fs).ok());
        if config.prefilter {
            filters.entry(fs.to_bits()).or_insert_with(|| filter_for(fs).ok());
        }
    }
    trials
        .par_iter()
        .map(|t| {
            let run = || -> Result<Prediction> {
                let m = window_samples.unwrap_or(t.n_samples());
                let fs = t.sampling_rate;
                let filter = match filters.get(&fs.to_bits()) {
                    Some(Some(spec)) => Some(spec),
                    Some(None) => return Err(filter_for(fs).unwrap_err()),
                    None => None,
                };
                let x = preprocess(t, filter, window_samples)?;
                let bank = match &banks[&(m, fs.to_bits())] {
                    Some(b) => b,
                    None => return Err(bank_for(m, fs).unwrap_err()),
                };
                let scores = bank.classify(&x, config.method)?;
                Ok(Prediction {
                    trial_id: t.id.clone(),
                    true_class: t.class_index,
                    run: t.run,
                    predicted: scores.predicted,
                    score: scores.decision_value(),
                    scores: Some(scores),
                })
            };
            run().map_err(|e| e.in_trial(&t.id))
        })
        .collect()
}

/// Per-trial predictions with the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub method: Method,
    pub window_seconds: f64,
    pub n_classes: usize,
    pub rows: Vec<Prediction>,
}

pub const PREDICTIONS_HEADER: &str = "trial_id,true_class,run,predicted,score";

impl Predictions {
    pub fn true_labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.true_class).collect()
    }

    pub fn predicted_labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.predicted).collect()
    }

    pub fn runs(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.run).collect()
    }

    /// Rows sorted by trial id, prefixed by `echo` (already commented).
    pub fn to_delimited(&self, echo: &str) -> String {
        let mut rows: Vec<&Prediction> = self.rows.iter().collect();
        rows.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
        let mut out = String::from(echo);
        out.push_str(&format!("# method={}\n", self.method));
        out.push_str(&format!("# window_seconds={}\n", fmt_g9(self.window_seconds)));
        out.push_str(&format!("# n_classes={}\n", self.n_classes));
        out.push_str(PREDICTIONS_HEADER);
        out.push('\n');
        for r in rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.trial_id,
                r.true_class,
                r.run,
                r.predicted,
                fmt_g9(r.score)
            ));
        }
        out
    }

    pub fn from_delimited(input: &str) -> Result<Predictions> {
        let table = Table::parse(input)?;
        table.expect_header(&["trial_id", "true_class", "run", "predicted", "score"])?;
        let method = table
            .meta("method")
            .ok_or_else(|| Error::parse(0, "missing metadata `method`"))?
            .parse()
            .map_err(|e: Error| Error::parse(0, e.to_string()))?;
        let window_seconds = table.meta_f64("window_seconds")?;
        let n_classes = parse_usize(
            table
                .meta("n_classes")
                .ok_or_else(|| Error::parse(0, "missing metadata `n_classes`"))?,
            0,
        )?;
        if n_classes < 2 {
            return Err(Error::parse(0, "n_classes must be at least 2"));
        }
        let mut rows = Vec::with_capacity(table.rows.len());
        for (line, row) in &table.rows {
            let p = Prediction {
                trial_id: row[0].clone(),
                true_class: parse_usize(&row[1], *line)?,
                run: parse_usize(&row[2], *line)?,
                predicted: parse_usize(&row[3], *line)?,
                score: parse_f64(&row[4], *line)?,
                scores: None,
            };
            if p.trial_id.is_empty() {
                return Err(Error::parse(*line, "empty trial id"));
            }
            if p.true_class >= n_classes || p.predicted >= n_classes {
                return Err(Error::parse(*line, format!("class index outside 0..{n_classes}")));
            }
            rows.push(p);
        }
        Ok(Predictions {
            method,
            window_seconds,
            n_classes,
            rows,
        })
    }
}

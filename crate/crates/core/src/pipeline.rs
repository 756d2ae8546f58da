//! Run configuration and the pipeline stages behind the command-line tool.
//!
//! Configuration is layered: built-in defaults, then a TOML file, then
//! command-line overrides. Every artifact starts with a commented echo of
//! the resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cca::{Method, SCORE_HEADER};
use crate::classify::{classify_trials, ClassifierConfig, Prediction, Predictions};
use crate::coding::{assign_target_pairs, toml_line, validate_plan, FrequencyPlan};
use crate::dataset::Manifest;
use crate::dsp::{welch_psd, PsdEstimate, WelchSettings};
use crate::error::{Error, Result};
use crate::metrics::{
    anova_oneway, class_table, confusion_table, default_windows, evaluate, indices_by_run,
    method_table, sweep_table, time_window_sweep, SweepPoint, TRule, DEFAULT_REST,
};
use crate::schedule::{dual_motion_schedule, FrameSchedule, ScheduleConfig};
use crate::synth::{synth_dataset, Dataset, SynthConfig, DEFAULT_CHANNELS};
use crate::text::{comment_block, fmt_g9};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub base_frequencies: Vec<f64>,
    pub refresh_rate: f64,
    pub sampling_rate: f64,
    pub channels: Vec<String>,
    pub trial_duration: f64,
    pub rest_duration: f64,
    pub trials_per_class: usize,
    /// Trials per class in one run (the grouping for dispersion across
    /// runs).
    pub trials_per_run: usize,
    pub master_seed: u64,
    /// Classification window in seconds; the whole trial when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    pub t_rule: TRule,
    /// Sweep grid; defaults to 0.5 s steps up to the trial duration.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep_windows: Option<Vec<f64>>,
    pub schedule: ScheduleConfig,
    /// `duration` here is ignored in favour of `trial_duration`.
    pub synth: SynthConfig,
    pub classifier: ClassifierConfig,
    pub psd: WelchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            base_frequencies: vec![5.0, 6.0, 7.0, 8.0, 9.0],
            refresh_rate: 60.0,
            sampling_rate: 500.0,
            channels: DEFAULT_CHANNELS.iter().map(|s| s.to_string()).collect(),
            trial_duration: 3.5,
            rest_duration: DEFAULT_REST,
            trials_per_class: 8,
            trials_per_run: 4,
            master_seed: 1,
            window: None,
            t_rule: TRule::WithRest,
            sweep_windows: None,
            schedule: ScheduleConfig::default(),
            synth: SynthConfig::default(),
            classifier: ClassifierConfig::default(),
            psd: WelchSettings {
                segment_seconds: 2.0,
                ..WelchSettings::default()
            },
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub master_seed: Option<u64>,
    pub method: Option<Method>,
    pub window: Option<f64>,
    pub t_rule: Option<TRule>,
}

impl RunConfig {
    pub fn from_document(input: &str) -> Result<RunConfig> {
        let cfg: RunConfig =
            toml::from_str(input).map_err(|e| Error::parse(toml_line(input, &e), e.message()))?;
        Ok(cfg)
    }

    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Defaults, then `file` if given, then `overrides`; validated.
    pub fn layered(file: Option<&Path>, overrides: &Overrides) -> Result<RunConfig> {
        let mut cfg = match file {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                RunConfig::from_document(&text).map_err(|e| e.in_file(path))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = overrides.master_seed {
            cfg.master_seed = s;
        }
        if let Some(m) = overrides.method {
            cfg.classifier.method = m;
        }
        if let Some(w) = overrides.window {
            cfg.window = Some(w);
        }
        if let Some(t) = overrides.t_rule {
            cfg.t_rule = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("{name} must be positive, got {v}")))
            }
        };
        positive("refresh_rate", self.refresh_rate)?;
        positive("sampling_rate", self.sampling_rate)?;
        positive("trial_duration", self.trial_duration)?;
        if !(self.rest_duration.is_finite() && self.rest_duration >= 0.0) {
            return Err(Error::validation("rest_duration must be >= 0"));
        }
        if self.trials_per_class == 0 || self.trials_per_run == 0 {
            return Err(Error::validation("trials_per_class and trials_per_run must be positive"));
        }
        if self.master_seed > i64::MAX as u64 {
            return Err(Error::validation(format!(
                "master_seed must not exceed {}",
                i64::MAX
            )));
        }
        if self.channels.is_empty() || self.channels.iter().any(|c| c.is_empty() || c.contains(',')) {
            return Err(Error::validation("channel names must be non-empty and comma-free"));
        }
        if self.channels.len() != self.synth.channel_gains.len() {
            return Err(Error::validation(format!(
                "{} channels but {} synth channel gains",
                self.channels.len(),
                self.synth.channel_gains.len()
            )));
        }
        if let Some(w) = self.window {
            positive("window", w)?;
            if w > self.trial_duration {
                return Err(Error::Length(format!(
                    "window {w} s exceeds the {} s trial",
                    self.trial_duration
                )));
            }
        }
        if self.classifier.n_harmonics == 0 {
            return Err(Error::validation("classifier needs at least one harmonic"));
        }
        self.resolved_synth().validate()
    }

    pub fn resolved_synth(&self) -> SynthConfig {
        SynthConfig {
            duration: self.trial_duration,
            ..self.synth.clone()
        }
    }

    pub fn window_seconds(&self) -> f64 {
        self.window.unwrap_or(self.trial_duration)
    }

    pub fn sweep_grid(&self) -> Vec<f64> {
        match &self.sweep_windows {
            Some(w) => w.clone(),
            None => default_windows()
                .into_iter()
                .filter(|&w| w <= self.trial_duration + 1e-9)
                .collect(),
        }
    }

    /// The resolved configuration as a comment block.
    pub fn echo(&self) -> String {
        comment_block(&self.to_document())
    }
}

pub fn build_plan(cfg: &RunConfig) -> Result<FrequencyPlan> {
    let plan = assign_target_pairs(&cfg.base_frequencies)?;
    for p in &plan.pairs {
        cfg.schedule.check_feasible(p.a, cfg.refresh_rate)?;
        cfg.schedule.check_feasible(p.b, cfg.refresh_rate)?;
    }
    Ok(plan)
}

/// Human-readable listing of the targets and any validator findings.
pub fn plan_summary(plan: &FrequencyPlan) -> String {
    let mut out = String::new();
    for (i, p) in plan.pairs.iter().enumerate() {
        out.push_str(&format!(
            "target {i}: zoom {} Hz, rotation {} Hz\n",
            fmt_g9(p.a),
            fmt_g9(p.b)
        ));
    }
    let violations = validate_plan(plan);
    if violations.is_empty() {
        out.push_str("validation: ok\n");
    } else {
        for v in violations {
            out.push_str(&format!("violation: {v}\n"));
        }
    }
    out
}

pub fn read_plan(path: &Path) -> Result<FrequencyPlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    FrequencyPlan::from_document(&text).map_err(|e| e.in_file(path))
}

pub fn build_schedule(
    plan: &FrequencyPlan,
    target: usize,
    duration: f64,
    cfg: &RunConfig,
) -> Result<FrameSchedule> {
    let p = plan.pairs.get(target).ok_or_else(|| {
        Error::validation(format!("target {target} outside 0..{}", plan.n_targets()))
    })?;
    dual_motion_schedule((p.a, p.b), cfg.refresh_rate, duration, &cfg.schedule)
}

pub fn build_dataset(plan: &FrequencyPlan, cfg: &RunConfig) -> Result<Dataset> {
    let mut ds = synth_dataset(
        plan,
        &cfg.resolved_synth(),
        cfg.trials_per_class,
        cfg.trials_per_run,
        cfg.sampling_rate,
        cfg.master_seed,
    )?;
    ds.channel_names = cfg.channels.clone();
    for t in &mut ds.trials {
        t.channel_names = cfg.channels.clone();
    }
    Ok(ds)
}

fn window_samples(window: f64, fs: f64) -> usize {
    (window * fs).round() as usize
}

pub struct ClassifyOutcome {
    pub predictions: Predictions,
    /// Per-target scores for every classified trial, sorted by trial id.
    pub scores: String,
    /// Trials that could not be read or scored.
    pub failures: Vec<Error>,
}

/// Classify every trial of a saved dataset. Unreadable trials are reported
/// in `failures` and do not stop the others.
pub fn classify_dataset_dir(dir: &Path, cfg: &RunConfig) -> Result<ClassifyOutcome> {
    let manifest = Manifest::load(dir)?;
    let mut failures = Vec::new();
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        match manifest.load_trial(dir, entry) {
            Ok(t) => trials.push(t),
            Err(e) => failures.push(e),
        }
    }
    let window = cfg.window_seconds();
    let window_n = window_samples(window, manifest.sampling_rate);
    let mut rows: Vec<Prediction> = Vec::with_capacity(trials.len());
    for r in classify_trials(&trials, &manifest.plan, &cfg.classifier, Some(window_n)) {
        match r {
            Ok(p) => rows.push(p),
            Err(e) => failures.push(e),
        }
    }
    rows.sort_by(|a, b| a.trial_id.cmp(&b.trial_id));
    let mut scores = cfg.echo();
    scores.push_str(SCORE_HEADER);
    scores.push('\n');
    for p in &rows {
        if let Some(s) = &p.scores {
            s.dump_rows(&p.trial_id, &mut scores);
        }
    }
    Ok(ClassifyOutcome {
        predictions: Predictions {
            method: cfg.classifier.method,
            window_seconds: window,
            n_classes: manifest.plan.n_targets(),
            rows,
        },
        scores,
        failures,
    })
}

pub fn read_predictions(path: &Path) -> Result<Predictions> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Predictions::from_delimited(&text).map_err(|e| e.in_file(path))
}

/// Report tables, keyed by output file name.
pub struct Reports {
    pub files: Vec<(String, String)>,
}

impl Reports {
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (name, body) in &self.files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, b)| b.as_str())
    }
}

/// Method, per-class, confusion and ANOVA tables for one predictions file.
pub fn evaluate_predictions(
    predictions: &Predictions,
    manifest: &Manifest,
    cfg: &RunConfig,
) -> Result<Reports> {
    let k = manifest.plan.n_targets();
    if predictions.n_classes != k {
        return Err(Error::validation(format!(
            "predictions cover {} classes, dataset has {k}",
            predictions.n_classes
        )));
    }
    if predictions.rows.len() != manifest.trials.len() {
        return Err(Error::validation(format!(
            "mismatched trial counts: {} predictions for {} trials",
            predictions.rows.len(),
            manifest.trials.len()
        )));
    }
    for p in &predictions.rows {
        let entry = manifest
            .trials
            .iter()
            .find(|t| t.id == p.trial_id)
            .ok_or_else(|| Error::validation(format!("trial {} is not in the dataset", p.trial_id)))?;
        if entry.class_index != p.true_class {
            return Err(Error::validation(format!(
                "trial {} is labelled {} in the dataset but {} in the predictions",
                p.trial_id, entry.class_index, p.true_class
            )));
        }
    }
    let truth = predictions.true_labels();
    let pred = predictions.predicted_labels();
    let runs = predictions.runs();
    let report = evaluate(
        &truth,
        &pred,
        k,
        predictions.window_seconds,
        cfg.t_rule,
        cfg.rest_duration,
    )?;
    let echo = cfg.echo();
    let by_run = indices_by_run(&truth, &pred, &runs, k)?;

    let mut anova = echo.clone();
    anova.push_str("# groups=per-class sensitivity across runs\n");
    let groups: Vec<Vec<f64>> = (0..k)
        .map(|c| by_run.iter().map(|r| r[c].sensitivity).collect())
        .collect();
    match anova_oneway(&groups) {
        Ok(a) => {
            anova.push_str("factor,f,p,df_between,df_within\n");
            anova.push_str(&format!(
                "class,{},{},{},{}\n",
                fmt_g9(a.f),
                fmt_g9(a.p),
                a.df_between,
                a.df_within
            ));
        }
        Err(e) => anova.push_str(&format!("# not computed: {e}\n")),
    }

    Ok(Reports {
        files: vec![
            (
                "methods.csv".into(),
                method_table(&[(predictions.method.to_string(), report.clone())], &echo),
            ),
            ("classes.csv".into(), class_table(&by_run, &echo)),
            ("confusion.csv".into(), confusion_table(&report.confusion, &echo)),
            ("anova.csv".into(), anova),
        ],
    })
}

pub fn sweep_dataset(dataset: &Dataset, cfg: &RunConfig) -> Result<(Vec<SweepPoint>, String)> {
    let points = time_window_sweep(
        dataset,
        &cfg.classifier,
        &cfg.sweep_grid(),
        cfg.t_rule,
        cfg.rest_duration,
    )?;
    let mut echo = cfg.echo();
    echo.push_str(&format!("# method={}\n", cfg.classifier.method));
    let table = sweep_table(&points, cfg.t_rule, &echo);
    Ok((points, table))
}

/// Welch PSD per class, averaged over channels and trials.
pub fn class_psd(dataset: &Dataset, cfg: &RunConfig) -> Result<Vec<PsdEstimate>> {
    let fs = dataset.sampling_rate;
    let seg = window_samples(cfg.psd.segment_seconds, fs);
    let mut out = Vec::with_capacity(dataset.n_classes());
    for c in 0..dataset.n_classes() {
        let mut acc: Option<PsdEstimate> = None;
        let mut count = 0usize;
        for t in dataset.trials.iter().filter(|t| t.class_index == c) {
            for ch in 0..t.samples.nrows() {
                let row: Vec<f64> = t.samples.row(ch).iter().copied().collect();
                let p = welch_psd(&row, fs, seg, cfg.psd.overlap, cfg.psd.window)
                    .map_err(|e| e.in_trial(&t.id))?;
                match &mut acc {
                    None => acc = Some(p),
                    Some(a) => {
                        for (x, y) in a.power.iter_mut().zip(&p.power) {
                            *x += y;
                        }
                    }
                }
                count += 1;
            }
        }
        let mut a = acc.ok_or_else(|| Error::validation(format!("class {c} has no trials")))?;
        for x in &mut a.power {
            *x /= count as f64;
        }
        out.push(a);
    }
    Ok(out)
}

/// `(file name, contents)` for each class PSD.
pub fn psd_files(dataset: &Dataset, cfg: &RunConfig) -> Result<Vec<(String, String)>> {
    let echo = cfg.echo();
    Ok(class_psd(dataset, cfg)?
        .into_iter()
        .enumerate()
        .map(|(c, p)| {
            let pair = dataset.plan.pairs[c];
            let head = format!(
                "{echo}# class={c}\n# pair={},{}\n",
                fmt_g9(pair.a),
                fmt_g9(pair.b)
            );
            (format!("psd_class{c}.csv"), p.to_delimited(&head))
        })
        .collect())
}

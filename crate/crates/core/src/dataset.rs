//! On-disk dataset container.
//!
//! A dataset directory holds `manifest.toml` plus one delimited file per
//! trial under `trials/`. Trial files have one row per sample and one column
//! per channel, values at nine significant digits:
//!
//! ```text
//! # id=t0000_c0
//! # class_index=0
//! # fs=500
//! Pz,PO7,PO3,PO4,PO8,Oz
//! 0.12,-0.4,...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coding::{toml_line, FrequencyPlan};
use crate::error::{Error, Result};
use crate::synth::{Dataset, SynthConfig, TrialRecord};
use crate::text::{fmt_g9, parse_f64, parse_usize, Table};

pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FORMAT_TAG: &str = "dfssmvep-dataset/1";

/// 64-bit seeds are stored as decimal strings; TOML integers are signed.
pub(crate) mod seed_str {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_str(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        raw.map(|s| s.parse::<u64>().map_err(D::Error::custom))
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub id: String,
    pub file: String,
    pub class_index: usize,
    #[serde(default)]
    pub run: usize,
    #[serde(default, with = "seed_str", skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub sampling_rate: f64,
    pub duration: f64,
    pub channels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_file: Option<String>,
    #[serde(default, with = "seed_str", skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    pub plan: FrequencyPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synth: Option<SynthConfig>,
    #[serde(default)]
    pub trials: Vec<TrialEntry>,
}

impl Manifest {
    pub fn to_document(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_document(input: &str) -> Result<Manifest> {
        let m: Manifest =
            toml::from_str(input).map_err(|e| Error::parse(toml_line(input, &e), e.message()))?;
        if m.format != FORMAT_TAG {
            return Err(Error::parse(0, format!("unsupported dataset format `{}`", m.format)));
        }
        if !(m.sampling_rate.is_finite() && m.sampling_rate > 0.0) {
            return Err(Error::parse(0, "sampling_rate must be positive"));
        }
        let n = m.plan.n_targets();
        if let Some(t) = m.trials.iter().find(|t| t.class_index >= n) {
            return Err(Error::parse(
                0,
                format!("trial {} has class {} but the plan has {n} targets", t.id, t.class_index),
            ));
        }
        Ok(m)
    }

    pub fn load(dir: &Path) -> Result<Manifest> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Manifest::from_document(&text).map_err(|e| e.in_file(&path))
    }

    pub fn trial_path(&self, dir: &Path, entry: &TrialEntry) -> PathBuf {
        dir.join(&entry.file)
    }

    /// Read one trial; errors name the trial file.
    pub fn load_trial(&self, dir: &Path, entry: &TrialEntry) -> Result<TrialRecord> {
        let path = self.trial_path(dir, entry);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut trial = parse_trial(&text).map_err(|e| e.in_file(&path))?;
        if trial.channel_names != self.channels {
            return Err(Error::parse(1, "trial channels differ from the manifest").in_file(&path));
        }
        if trial.sampling_rate != self.sampling_rate {
            return Err(
                Error::parse(0, "trial sampling rate differs from the manifest").in_file(&path)
            );
        }
        trial.id = entry.id.clone();
        trial.class_index = entry.class_index;
        trial.run = entry.run;
        trial.seed = entry.seed;
        Ok(trial)
    }
}

/// Serialise one trial as delimited text.
pub fn format_trial(trial: &TrialRecord) -> String {
    let (k, m) = trial.samples.shape();
    let mut out = String::with_capacity(m * k * 14 + 128);
    out.push_str(&format!("# id={}\n", trial.id));
    out.push_str(&format!("# class_index={}\n", trial.class_index));
    out.push_str(&format!("# fs={}\n", fmt_g9(trial.sampling_rate)));
    out.push_str(&trial.channel_names.join(","));
    out.push('\n');
    for i in 0..m {
        for c in 0..k {
            if c > 0 {
                out.push(',');
            }
            out.push_str(&fmt_g9(trial.samples[(c, i)]));
        }
        out.push('\n');
    }
    out
}

/// Parse a trial file. Only `fs` is required in the metadata; `class_index`
/// defaults to 0 and is normally overridden by the manifest.
pub fn parse_trial(input: &str) -> Result<TrialRecord> {
    let table = Table::parse(input)?;
    let k = table.header.len();
    if table.header.iter().any(|h| h.is_empty()) {
        return Err(Error::parse(1, "empty channel name"));
    }
    let m = table.rows.len();
    if m == 0 {
        return Err(Error::parse(0, "trial has no samples"));
    }
    let sampling_rate = table.meta_f64("fs")?;
    if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
        return Err(Error::parse(0, "fs must be positive"));
    }
    let class_index = match table.meta("class_index") {
        Some(v) => parse_usize(v, 0)?,
        None => 0,
    };
    let mut samples = DMatrix::<f64>::zeros(k, m);
    for (i, (line, row)) in table.rows.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let v = parse_f64(cell, *line)?;
            if !v.is_finite() {
                return Err(Error::parse(*line, format!("non-finite sample `{cell}`")));
            }
            samples[(c, i)] = v;
        }
    }
    Ok(TrialRecord {
        id: table.meta("id").unwrap_or_default().to_string(),
        class_index,
        run: 0,
        sampling_rate,
        channel_names: table.header.clone(),
        samples,
        seed: None,
    })
}

impl Dataset {
    pub fn manifest(&self, plan_file: Option<String>) -> Manifest {
        Manifest {
            format: FORMAT_TAG.to_string(),
            sampling_rate: self.sampling_rate,
            duration: self.duration,
            channels: self.channel_names.clone(),
            plan_file,
            master_seed: self.master_seed,
            plan: self.plan.clone(),
            synth: self.synth.clone(),
            trials: self
                .trials
                .iter()
                .map(|t| TrialEntry {
                    id: t.id.clone(),
                    file: format!("trials/{}.csv", t.id),
                    class_index: t.class_index,
                    run: t.run,
                    seed: t.seed,
                })
                .collect(),
        }
    }

    pub fn save(&self, dir: &Path, plan_file: Option<String>) -> Result<Manifest> {
        let trials_dir = dir.join("trials");
        fs::create_dir_all(&trials_dir).map_err(|e| Error::io(&trials_dir, e))?;
        let manifest = self.manifest(plan_file);
        for (trial, entry) in self.trials.iter().zip(&manifest.trials) {
            let path = dir.join(&entry.file);
            fs::write(&path, format_trial(trial)).map_err(|e| Error::io(&path, e))?;
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest.to_document()).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Load every trial, failing on the first unreadable one.
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest = Manifest::load(dir)?;
        let trials = manifest
            .trials
            .iter()
            .map(|e| manifest.load_trial(dir, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            sampling_rate: manifest.sampling_rate,
            duration: manifest.duration,
            channel_names: manifest.channels,
            plan: manifest.plan,
            synth: manifest.synth,
            master_seed: manifest.master_seed,
            trials,
        })
    }
}

//! Acceptance checks, one line per criterion. Exits non-zero when any
//! criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dfssmvep::cca::{cca_max_corr, Method};
use dfssmvep::classify::{classify_trials, ClassifierConfig};
use dfssmvep::coding::{validate_plan, FrequencyPair};
use dfssmvep::dsp::{filtfilt, welch_psd, FilterSettings, FilterSpec, Window};
use dfssmvep::metrics::{anova_oneway, itr, mean_std, paired_t_test_greater, time_window_sweep, TRule};
use dfssmvep::pipeline::{build_plan, RunConfig};
use dfssmvep::schedule::{measured_inversion_frequency, run_lengths, stimulus_sequence, ScheduleConfig};
use dfssmvep::synth::{synth_dataset, synth_trial, Dataset, SynthConfig};

type Check = Result<(bool, String), String>;

struct Criterion {
    id: usize,
    name: &'static str,
    budget: Duration,
    run: fn() -> Check,
}

const SEEDS: u64 = 30;
const SWEEP: [f64; 7] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5];

fn main() {
    let criteria = [
        Criterion { id: 1, name: "coding", budget: Duration::from_secs(1), run: coding },
        Criterion { id: 2, name: "itr", budget: Duration::from_secs(1), run: itr_values },
        Criterion { id: 3, name: "stimulus", budget: Duration::from_secs(1), run: stimulus },
        Criterion { id: 4, name: "cca", budget: Duration::from_secs(30), run: cca },
        Criterion { id: 5, name: "classifier ordering", budget: Duration::from_secs(300), run: ordering },
        Criterion { id: 6, name: "psd peaks", budget: Duration::from_secs(30), run: psd_peaks },
        Criterion { id: 7, name: "window sweep", budget: Duration::from_secs(300), run: window_sweep },
        Criterion { id: 8, name: "zero-phase filter", budget: Duration::from_secs(1), run: zero_phase },
        Criterion { id: 9, name: "anova", budget: Duration::from_secs(1), run: anova },
        Criterion { id: 10, name: "determinism", budget: Duration::from_secs(60), run: determinism },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run))
            .unwrap_or_else(|_| Err("panicked".to_string()));
        let elapsed = start.elapsed();
        let (pass, detail) = match outcome {
            Ok((ok, d)) if elapsed <= c.budget => (ok, d),
            Ok((_, d)) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {} {} ({:.2} s)",
            c.id,
            c.name,
            if pass { "PASS" } else { "FAIL" },
            detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn coding() -> Check {
    let plan = build_plan(&RunConfig::default()).map_err(err)?;
    let mut got: Vec<(f64, f64)> = plan.pairs.iter().map(|p| (p.a, p.b)).collect();
    got.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let want = vec![(5.0, 8.5), (6.0, 9.5), (7.0, 5.5), (8.0, 6.5), (9.0, 7.5)];
    let violations = validate_plan(&plan);
    Ok((
        got == want && violations.is_empty(),
        format!("pairs {got:?}, {} violations", violations.len()),
    ))
}

fn itr_values() -> Check {
    let v = itr(0.925, 5, 3.5).map_err(err)?;
    let mut chance = Vec::new();
    for k in 2..=10 {
        let z = itr(1.0 / k as f64, k, 3.5).map_err(err)?;
        if z != 0.0 {
            chance.push(format!("K={k}: {z:e}"));
        }
    }
    let close = (v - 30.70).abs() <= 0.05;
    Ok((
        close && chance.is_empty(),
        format!(
            "itr(0.925, 5, 3.5) = {v:.4} (target 30.70 ± 0.05); chance level {}",
            if chance.is_empty() { "exactly 0 for K = 2..10".to_string() } else { chance.join(", ") }
        ),
    ))
}

fn stimulus() -> Check {
    let cfg = ScheduleConfig::default();
    let mut worst_err: f64 = 0.0;
    let mut bad = Vec::new();
    for i in 0..10 {
        let f = 5.0 + 0.5 * i as f64;
        let seq = stimulus_sequence(f, 60.0, 3600, &cfg).map_err(err)?;
        let measured = measured_inversion_frequency(&seq, 60.0).map_err(err)?;
        worst_err = worst_err.max((measured - f).abs());
        let runs = run_lengths(&seq);
        let lo = *runs.iter().min().unwrap();
        let hi = *runs.iter().max().unwrap();
        if hi - lo > 1 || (measured - f).abs() > 0.02 {
            bad.push(format!("{f} Hz: measured {measured}, half-cycles {lo}..{hi}"));
        }
    }
    Ok((
        bad.is_empty(),
        if bad.is_empty() {
            format!("10 frequencies, max error {worst_err:.2e} Hz")
        } else {
            bad.join("; ")
        },
    ))
}

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn centred(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = a.clone();
    for mut row in c.row_iter_mut() {
        let mean = row.mean();
        row.add_scalar_mut(-mean);
    }
    c
}

/// Largest canonical correlation from the eigenvalues of
/// `Cxx⁻¹ Cxy Cyy⁻¹ Cyx`.
fn eigen_rho(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let (xc, yc) = (centred(x), centred(y));
    let cxx = &xc * xc.transpose();
    let cyy = &yc * yc.transpose();
    let cxy = &xc * yc.transpose();
    let left = cxx.lu().solve(&cxy).expect("invertible Cxx");
    let right = cyy.lu().solve(&cxy.transpose()).expect("invertible Cyy");
    (left * right)
        .complex_eigenvalues()
        .iter()
        .map(|z| z.re)
        .fold(0.0, f64::max)
        .sqrt()
}

fn cca() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut oracle_err, mut mix_err, mut scale_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..200 {
        let k = rng.random_range(1..=8);
        let r = rng.random_range(1..=12);
        let m = rng.random_range(50..=2000);
        let x = normal(k, m, &mut rng);
        let coupling: f64 = rng.random_range(0.0..1.0);
        let y = normal(r, k, &mut rng) * &x * coupling + normal(r, m, &mut rng);
        let rho = cca_max_corr(&x, &y, 0.0).map_err(err)?.rho;
        if !(0.0..=1.0).contains(&rho) {
            return Ok((false, format!("rho {rho} outside [0, 1]")));
        }
        oracle_err = oracle_err.max((rho - eigen_rho(&x, &y)).abs());
        let a = normal(k, k, &mut rng) + DMatrix::identity(k, k) * 3.0;
        let b = normal(r, r, &mut rng) + DMatrix::identity(r, r) * 3.0;
        let mixed = cca_max_corr(&(a * &x), &(b * &y), 0.0).map_err(err)?.rho;
        mix_err = mix_err.max((mixed - rho).abs());
        let scaled = cca_max_corr(&(&x * 1e3), &(&y * 1e-3), 0.0).map_err(err)?.rho;
        scale_err = scale_err.max((scaled - rho).abs());
    }
    let worst = oracle_err.max(mix_err).max(scale_err);
    Ok((
        worst <= 1e-8,
        format!("200 instances, max |Δ| oracle {oracle_err:.1e}, mixing {mix_err:.1e}, scale {scale_err:.1e}"),
    ))
}

fn benchmark(seed: u64) -> Result<Dataset, String> {
    let cfg = RunConfig::default();
    let plan = build_plan(&cfg).map_err(err)?;
    synth_dataset(&plan, &cfg.resolved_synth(), 8, 4, cfg.sampling_rate, seed).map_err(err)
}

fn accuracy(ds: &Dataset, method: Method) -> Result<f64, String> {
    let cfg = ClassifierConfig {
        method,
        ..ClassifierConfig::default()
    };
    let mut hits = 0;
    for p in classify_trials(&ds.trials, &ds.plan, &cfg, None) {
        let p = p.map_err(err)?;
        hits += usize::from(p.predicted == p.true_class);
    }
    Ok(hits as f64 / ds.trials.len() as f64)
}

fn ordering() -> Check {
    let (mut cca, mut bcca) = (Vec::new(), Vec::new());
    for seed in 1..=SEEDS {
        let ds = benchmark(seed)?;
        cca.push(accuracy(&ds, Method::Cca)?);
        bcca.push(accuracy(&ds, Method::Bcca)?);
    }
    let (mc, _) = mean_std(&cca);
    let (mb, _) = mean_std(&bcca);
    let t = paired_t_test_greater(&bcca, &cca).map_err(err)?;
    let in_band = (0.70..=0.90).contains(&mc);
    Ok((
        in_band && mb > mc && t.p < 0.05,
        format!(
            "{SEEDS} seeds at {} dB: CCA {mc:.4} (band [0.70, 0.90] {}), BCCA {mb:.4}, t = {:.3}, p = {:.4}",
            SynthConfig::default().snr_db,
            if in_band { "met" } else { "missed" },
            t.t,
            t.p
        ),
    ))
}

fn psd_peaks() -> Check {
    let cfg = SynthConfig {
        snr_db: 10.0,
        dominance_low: 1.0,
        ..SynthConfig::default()
    };
    let fs = 500.0;
    let oz = 5;
    let mut lines = Vec::new();
    let mut ok = true;
    for (class, (a, b)) in [(6.0, 9.5), (8.0, 6.5)].into_iter().enumerate() {
        let mut avg: Option<Vec<f64>> = None;
        let mut freqs = Vec::new();
        for seed in 0..20 {
            let t = synth_trial(FrequencyPair::new(a, b), class, &cfg, fs, seed).map_err(err)?;
            let row: Vec<f64> = t.samples.row(oz).iter().copied().collect();
            let p = welch_psd(&row, fs, 1000, 0.5, Window::Hann).map_err(err)?;
            freqs = p.frequencies.clone();
            match &mut avg {
                Some(acc) => acc.iter_mut().zip(&p.power).for_each(|(s, v)| *s += v / 20.0),
                None => avg = Some(p.power.iter().map(|v| v / 20.0).collect()),
            }
        }
        let power = avg.unwrap();
        let mut band: Vec<f64> = freqs
            .iter()
            .zip(&power)
            .filter(|(f, _)| (2.0..=40.0).contains(*f))
            .map(|(_, p)| *p)
            .collect();
        band.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let median = if band.len() % 2 == 1 {
            band[band.len() / 2]
        } else {
            (band[band.len() / 2 - 1] + band[band.len() / 2]) / 2.0
        };
        for f in [a, b] {
            let i = freqs
                .iter()
                .position(|&g| (g - f).abs() < 1e-9)
                .ok_or_else(|| format!("no bin at {f} Hz"))?;
            let local = power[i] > power[i - 1] && power[i] > power[i + 1];
            let db = 10.0 * (power[i] / median).log10();
            ok &= local && db >= 6.0;
            lines.push(format!("{f} Hz {db:.1} dB{}", if local { "" } else { " (not a local peak)" }));
        }
    }
    Ok((ok, format!("Oz, 20 seeds: {}", lines.join(", "))))
}

fn window_sweep() -> Check {
    let cfg = ClassifierConfig::default();
    let mut acc: Vec<Vec<f64>> = Vec::new();
    for seed in 1..=SEEDS {
        let ds = benchmark(seed)?;
        let points = time_window_sweep(&ds, &cfg, &SWEEP, TRule::WithRest, 2.5).map_err(err)?;
        acc.push(points.iter().map(|p| p.accuracy).collect());
    }
    let mut ok = true;
    let mut means = Vec::new();
    let mut worst = f64::INFINITY;
    for s in 0..SWEEP.len() {
        means.push(format!("{:.3}", mean_std(&acc.iter().map(|a| a[s]).collect::<Vec<_>>()).0));
        if s + 1 == SWEEP.len() {
            break;
        }
        let diffs: Vec<f64> = acc.iter().map(|a| a[s + 1] - a[s]).collect();
        let (m, sd) = mean_std(&diffs);
        let se = sd / (diffs.len() as f64).sqrt();
        worst = worst.min(m + se);
        ok &= m >= -se;
    }
    Ok((
        ok,
        format!("BCCA over {SEEDS} seeds, accuracy [{}], min (Δ + SE) {worst:.4}", means.join(", ")),
    ))
}

fn zero_phase() -> Check {
    let fs = 500.0;
    let spec = FilterSpec::from_settings(&FilterSettings::default(), fs).map_err(err)?;
    let n = 2500;
    let x: Vec<f64> = (0..n)
        .map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin())
        .collect();
    let y = filtfilt(&spec, &x).map_err(err)?;
    let xcorr = |lag: i64| -> f64 {
        (0..n as i64)
            .filter_map(|i| {
                let j = i + lag;
                (0..n as i64).contains(&j).then(|| x[i as usize] * y[j as usize])
            })
            .sum()
    };
    let best = (-25..=25)
        .max_by(|&a, &b| xcorr(a).partial_cmp(&xcorr(b)).unwrap())
        .unwrap();
    let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
    let mid = 500..2000;
    let gain_db = 20.0 * (rms(&y[mid.clone()]) / rms(&x[mid])).log10();
    let dc = vec![1.0; n];
    let yd = filtfilt(&spec, &dc).map_err(err)?;
    let dc_ratio = yd.iter().map(|v| v * v).sum::<f64>() / n as f64;
    Ok((
        best == 0 && gain_db.abs() <= 1.0 && dc_ratio < 0.01,
        format!("peak lag {best}, gain {gain_db:.3} dB, DC power kept {:.2e}", dc_ratio),
    ))
}

/// `P(F > f)` from Simpson integration of the beta density, normalised by
/// the same integral over [0, 1].
fn f_tail_quadrature(f: f64, d1: f64, d2: f64) -> f64 {
    let (a, b) = (d2 / 2.0, d1 / 2.0);
    // t = u^(1/a) removes the t^(a-1) factor.
    let integral = |upper: f64| {
        let top = upper.powf(a);
        let g = |u: f64| (1.0 - u.powf(1.0 / a)).max(0.0).powf(b - 1.0);
        let n = 200_000;
        let h = top / n as f64;
        let mut s = g(0.0) + g(top);
        for i in 1..n {
            s += g(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    integral(d2 / (d2 + d1 * f)) / integral(1.0)
}

fn anova() -> Check {
    let groups = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 4.0, 5.0]];
    let a = anova_oneway(&groups).map_err(err)?;
    let oracle = f_tail_quadrature(a.f, a.df_between as f64, a.df_within as f64);
    let shifted: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| g.iter().map(|v| 2.5 * v - 7.0).collect())
        .collect();
    let s = anova_oneway(&shifted).map_err(err)?;
    let invariant = (s.f - a.f).abs() <= 1e-12 * a.f;
    Ok((
        a.f == 3.0 && (a.p - oracle).abs() <= 1e-6 && invariant,
        format!(
            "F = {}, p = {:.9} vs quadrature {:.9}, shifted F = {}",
            a.f, a.p, oracle, s.f
        ),
    ))
}

fn cli(args: &[&str]) -> Result<(), String> {
    let mut argv = vec!["dfssmvep"];
    argv.extend_from_slice(args);
    match dfssmvep_cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("`{}` exited {code}", args.join(" "))),
    }
}

fn end_to_end(dir: &Path) -> Result<(), String> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let (ds, pred, scores, rep, sweep, psd) = (
        p("dataset"),
        p("predictions.csv"),
        p("scores.csv"),
        p("reports"),
        p("sweep.csv"),
        p("psd"),
    );
    cli(&["--seed", "7", "synth", "--out", &ds])?;
    cli(&["--seed", "7", "classify", "--dataset", &ds, "--out", &pred, "--scores", &scores])?;
    cli(&["--seed", "7", "evaluate", "--dataset", &ds, "--predictions", &pred, "--out", &rep])?;
    cli(&["--seed", "7", "sweep", "--dataset", &ds, "--out", &sweep])?;
    cli(&["--seed", "7", "psd", "--dataset", &ds, "--out", &psd])
}

fn files(root: &Path) -> Result<BTreeMap<PathBuf, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(err)? {
            let path = entry.map_err(err)?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).map_err(err)?);
            }
        }
    }
    Ok(out)
}

fn determinism() -> Check {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    end_to_end(a.path())?;
    end_to_end(b.path())?;
    let (fa, fb) = (files(a.path())?, files(b.path())?);
    let differing: Vec<String> = fa
        .keys()
        .chain(fb.keys())
        .filter(|k| fa.get(*k) != fb.get(*k))
        .map(|k| k.display().to_string())
        .collect();
    Ok((
        differing.is_empty() && !fa.is_empty(),
        if differing.is_empty() {
            format!("{} files byte-identical", fa.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    ))
}

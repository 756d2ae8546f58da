use nalgebra::DMatrix;
use proptest::prelude::*;

use dfssmvep::cca::cca_max_corr;
use dfssmvep::coding::{assign_target_pairs, validate_plan, FrequencyPlan};
use dfssmvep::dataset::{format_trial, parse_trial};
use dfssmvep::metrics::{anova_oneway, itr};
use dfssmvep::schedule::{dual_motion_schedule, FrameSchedule, ScheduleConfig};
use dfssmvep::synth::{synth_trial, SynthConfig};

/// `rows × cols` matrix from a flat vector of draws.
fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0f64..1.0, rows * cols)
        .prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

fn cca_case() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>, f64)> {
    (1usize..=4, 1usize..=6, 40usize..=120).prop_flat_map(|(k, r, m)| {
        (matrix(k, m), matrix(r, m), matrix(r, k), 0.0f64..2.0)
            .prop_map(|(x, noise, mix, c)| {
                let y = &mix * &x * c + noise;
                (x, y, c)
            })
    })
}

fn ascending_base() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1u32..=6, 5..=7).prop_map(|steps| {
        let mut f = 4.0;
        steps
            .into_iter()
            .map(|s| {
                f += 0.5 * s as f64;
                f
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cca_is_bounded_and_symmetric((x, y, _) in cca_case()) {
        let a = cca_max_corr(&x, &y, 0.0).unwrap().rho;
        let b = cca_max_corr(&y, &x, 0.0).unwrap().rho;
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn cca_ignores_scale_and_offset((x, y, _) in cca_case(), sx in 1e-3f64..1e3, sy in 1e-3f64..1e3, shift in -50.0f64..50.0) {
        let a = cca_max_corr(&x, &y, 0.0).unwrap().rho;
        let b = cca_max_corr(&(x.add_scalar(shift) * sx), &(&y * sy), 0.0).unwrap().rho;
        prop_assert!((a - b).abs() < 1e-8, "{} vs {}", a, b);
    }

    #[test]
    fn cca_ignores_invertible_mixing((x, y, _) in cca_case(), seed in matrix(4, 4)) {
        let k = x.nrows();
        let a = seed.view((0, 0), (k, k)).into_owned() + DMatrix::identity(k, k) * 2.0;
        let base = cca_max_corr(&x, &y, 0.0).unwrap().rho;
        let mixed = cca_max_corr(&(a * &x), &y, 0.0).unwrap().rho;
        prop_assert!((base - mixed).abs() < 1e-8);
    }

    #[test]
    fn itr_grows_with_accuracy(k in 2usize..=20, t in 0.5f64..10.0, u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let chance = 1.0 / k as f64;
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let map = |s: f64| chance + s * (1.0 - chance);
        let a = itr(map(lo), k, t).unwrap();
        let b = itr(map(hi), k, t).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!(b >= a - 1e-12);
    }

    #[test]
    fn anova_is_affine_invariant(groups in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 2..6), 2..5), scale in 0.1f64..10.0, shift in -100.0f64..100.0) {
        let base = match anova_oneway(&groups) {
            Ok(a) => a,
            Err(_) => return Ok(()),
        };
        let moved: Vec<Vec<f64>> = groups.iter().map(|g| g.iter().map(|v| v * scale + shift).collect()).collect();
        let a = anova_oneway(&moved).unwrap();
        if base.f.is_finite() && base.f < 1e6 {
            prop_assert!((a.f - base.f).abs() <= 1e-6 * base.f.max(1.0));
            prop_assert!((a.p - base.p).abs() <= 1e-6);
        }
        prop_assert!((0.0..=1.0).contains(&base.p));
    }

    #[test]
    fn plans_are_valid_or_refused(base in ascending_base()) {
        if let Ok(plan) = assign_target_pairs(&base) {
            prop_assert!(validate_plan(&plan).is_empty());
            prop_assert_eq!(plan.pairs.len(), base.len());
            let back = FrequencyPlan::from_document(&plan.to_document()).unwrap();
            prop_assert_eq!(back, plan);
        }
    }

    #[test]
    fn schedule_round_trips(a in 1u32..=18, b in 1u32..=18, frames in 1usize..200) {
        let cfg = ScheduleConfig::default();
        let duration = frames as f64 / 60.0;
        let s = dual_motion_schedule((a as f64 * 0.5, b as f64 * 0.5), 60.0, duration, &cfg).unwrap();
        let back = FrameSchedule::from_delimited(&s.to_delimited()).unwrap();
        prop_assert_eq!(back.to_delimited(), s.to_delimited());
        prop_assert_eq!(back.frames.len(), s.frames.len());
    }

    #[test]
    fn trial_text_round_trips(seed in any::<u64>()) {
        let cfg = SynthConfig { duration: 0.2, ..SynthConfig::default() };
        let t = synth_trial(dfssmvep::coding::FrequencyPair::new(6.0, 9.5), 1, &cfg, 250.0, seed).unwrap();
        let text = format_trial(&t);
        let back = parse_trial(&text).unwrap();
        prop_assert_eq!(format_trial(&back), text);
        prop_assert_eq!(back.samples.shape(), t.samples.shape());
    }
}

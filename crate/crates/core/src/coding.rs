//! Dual-frequency target coding.
//!
//! Given `N` ascending base frequencies `f_1 < … < f_N`, each consecutive
//! pair yields a derived frequency `g_i = (f_i + f_{i+1}) / 2`, and the last
//! one is `g_N = f_N + M` where `M` is half the smallest base gap. A derived
//! frequency `g_i` is *adjacent* to `f_i` and `f_{i+1}`.
//!
//! Targets then receive one base and one derived frequency (1-based):
//!
//! ```text
//! a = [f_1, f_3, f_4, …, f_N, f_2]
//! b = [g_{N-1}, g_1, g_2, …, g_{N-2}, g_N]
//! ```
//!
//! which guarantees that any two targets share at most one adjacency.
//! Internally everything is 0-based: target `i` here is target `i + 1` in
//! the 1-based notation above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for frequency equality.
pub const FREQ_TOL: f64 = 1e-9;

/// Smallest number of targets the pair assignment is defined for.
pub const MIN_TARGETS: usize = 5;

pub const DEFAULT_F_BOUNDS: (f64, f64) = (2.0, 40.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPair {
    /// Radial-zoom frequency, drawn from the base set.
    pub a: f64,
    /// Rotation frequency, drawn from the derived set.
    pub b: f64,
}

impl FrequencyPair {
    pub fn new(a: f64, b: f64) -> Self {
        FrequencyPair { a, b }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPlan {
    pub base: Vec<f64>,
    pub derived: Vec<f64>,
    pub min_half_gap: f64,
    pub pairs: Vec<FrequencyPair>,
    pub f_bounds: (f64, f64),
}

/// One finding from [`validate_plan`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NotAscending { index: usize },
    LengthMismatch { base: usize, derived: usize, pairs: usize },
    OutOfBounds { what: &'static str, index: usize, frequency: f64 },
    Duplicate { what: &'static str, frequency: f64, targets: (usize, usize) },
    UnknownFrequency { what: &'static str, target: usize, frequency: f64 },
    MissingFrequency { what: &'static str, frequency: f64 },
    DerivedMismatch { index: usize, expected: f64, found: f64 },
    Adjacency { targets: (usize, usize), relations: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NotAscending { index } => {
                write!(f, "base frequency {index} is not above its predecessor")
            }
            Violation::LengthMismatch { base, derived, pairs } => write!(
                f,
                "length mismatch: {base} base, {derived} derived, {pairs} pairs"
            ),
            Violation::OutOfBounds { what, index, frequency } => {
                write!(f, "{what}[{index}] = {frequency} Hz lies outside the admissible band")
            }
            Violation::Duplicate { what, frequency, targets } => write!(
                f,
                "{what} frequency {frequency} Hz used by targets {} and {}",
                targets.0, targets.1
            ),
            Violation::UnknownFrequency { what, target, frequency } => write!(
                f,
                "target {target}: {what} frequency {frequency} Hz is not in the plan's set"
            ),
            Violation::MissingFrequency { what, frequency } => {
                write!(f, "{what} frequency {frequency} Hz is not assigned to any target")
            }
            Violation::DerivedMismatch { index, expected, found } => write!(
                f,
                "derived[{index}] = {found} Hz, expected {expected} Hz"
            ),
            Violation::Adjacency { targets, relations } => write!(
                f,
                "targets {} and {} share {relations} adjacency relations",
                targets.0, targets.1
            ),
        }
    }
}

fn check_ascending(base: &[f64]) -> Result<()> {
    for (i, &f) in base.iter().enumerate() {
        if !f.is_finite() || f <= 0.0 {
            return Err(Error::validation(format!(
                "base frequency at index {i} ({f}) must be finite and positive"
            )));
        }
        if i > 0 && f <= base[i - 1] {
            return Err(Error::validation(format!(
                "base frequencies must be strictly ascending; index {i} ({f}) does not exceed index {} ({})",
                i - 1,
                base[i - 1]
            )));
        }
    }
    Ok(())
}

/// Derived frequencies and the minimum half gap `M`.
pub fn derive_adjacent_frequencies(base: &[f64]) -> Result<(Vec<f64>, f64)> {
    if base.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 base frequencies, got {}",
            base.len()
        )));
    }
    check_ascending(base)?;
    let min_half_gap = base
        .windows(2)
        .map(|w| (w[1] - w[0]) / 2.0)
        .fold(f64::INFINITY, f64::min);
    let mut derived: Vec<f64> = base.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect();
    derived.push(base[base.len() - 1] + min_half_gap);
    Ok((derived, min_half_gap))
}

/// Build the full plan with the default admissible band.
pub fn assign_target_pairs(base: &[f64]) -> Result<FrequencyPlan> {
    assign_target_pairs_within(base, DEFAULT_F_BOUNDS)
}

pub fn assign_target_pairs_within(base: &[f64], f_bounds: (f64, f64)) -> Result<FrequencyPlan> {
    let n = base.len();
    if n < MIN_TARGETS {
        return Err(Error::validation(format!(
            "pair assignment is only defined for N >= {MIN_TARGETS} targets, got {n}"
        )));
    }
    let (derived, min_half_gap) = derive_adjacent_frequencies(base)?;

    let a_index = |i: usize| match i {
        0 => 0,
        i if i == n - 1 => 1,
        i => i + 1,
    };
    let b_index = |i: usize| match i {
        0 => n - 2,
        i if i == n - 1 => n - 1,
        i => i - 1,
    };
    let pairs = (0..n)
        .map(|i| FrequencyPair::new(base[a_index(i)], derived[b_index(i)]))
        .collect();

    Ok(FrequencyPlan {
        base: base.to_vec(),
        derived,
        min_half_gap,
        pairs,
        f_bounds,
    })
}

fn position(set: &[f64], f: f64) -> Option<usize> {
    set.iter().position(|&x| (x - f).abs() <= FREQ_TOL)
}

/// Check a plan against its invariants. Never fails; returns every finding.
pub fn validate_plan(plan: &FrequencyPlan) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = plan.base.len();
    if plan.derived.len() != n || plan.pairs.len() != n {
        out.push(Violation::LengthMismatch {
            base: n,
            derived: plan.derived.len(),
            pairs: plan.pairs.len(),
        });
    }

    for i in 1..n {
        if !(plan.base[i] > plan.base[i - 1]) {
            out.push(Violation::NotAscending { index: i });
        }
    }

    if n >= 2 && plan.derived.len() == n {
        let half_gap = plan
            .base
            .windows(2)
            .map(|w| (w[1] - w[0]) / 2.0)
            .fold(f64::INFINITY, f64::min);
        for i in 0..n {
            let expected = if i + 1 < n {
                (plan.base[i] + plan.base[i + 1]) / 2.0
            } else {
                plan.base[n - 1] + half_gap
            };
            if (expected - plan.derived[i]).abs() > FREQ_TOL {
                out.push(Violation::DerivedMismatch {
                    index: i,
                    expected,
                    found: plan.derived[i],
                });
            }
        }
    }

    let (lo, hi) = plan.f_bounds;
    let in_band = |f: f64| f >= lo - FREQ_TOL && f <= hi + FREQ_TOL;
    for (what, set) in [("base", &plan.base), ("derived", &plan.derived)] {
        for (index, &frequency) in set.iter().enumerate() {
            if !in_band(frequency) {
                out.push(Violation::OutOfBounds { what, index, frequency });
            }
        }
    }

    // Each frequency value must be used by exactly one target, across both
    // motion channels.
    let all: Vec<(usize, &'static str, f64)> = plan
        .pairs
        .iter()
        .enumerate()
        .flat_map(|(t, p)| [(t, "a", p.a), (t, "b", p.b)])
        .collect();
    for (i, &(t1, what, f1)) in all.iter().enumerate() {
        for &(t2, _, f2) in &all[i + 1..] {
            if (f1 - f2).abs() <= FREQ_TOL {
                out.push(Violation::Duplicate {
                    what,
                    frequency: f1,
                    targets: (t1, t2),
                });
            }
        }
    }

    let mut a_pos = Vec::with_capacity(plan.pairs.len());
    let mut b_pos = Vec::with_capacity(plan.pairs.len());
    for (target, p) in plan.pairs.iter().enumerate() {
        let a = position(&plan.base, p.a);
        if a.is_none() {
            out.push(Violation::UnknownFrequency { what: "a", target, frequency: p.a });
        }
        let b = position(&plan.derived, p.b);
        if b.is_none() {
            out.push(Violation::UnknownFrequency { what: "b", target, frequency: p.b });
        }
        a_pos.push(a);
        b_pos.push(b);
    }
    for &f in &plan.base {
        if !plan.pairs.iter().any(|p| (p.a - f).abs() <= FREQ_TOL) {
            out.push(Violation::MissingFrequency { what: "base", frequency: f });
        }
    }
    for &g in &plan.derived {
        if !plan.pairs.iter().any(|p| (p.b - g).abs() <= FREQ_TOL) {
            out.push(Violation::MissingFrequency { what: "derived", frequency: g });
        }
    }

    // g_j is adjacent to f_j and f_{j+1}.
    let adjacent = |f: Option<usize>, g: Option<usize>| match (f, g) {
        (Some(f), Some(g)) => f == g || f == g + 1,
        _ => false,
    };
    for p in 0..plan.pairs.len() {
        for q in p + 1..plan.pairs.len() {
            let relations = usize::from(adjacent(a_pos[p], b_pos[q]))
                + usize::from(adjacent(a_pos[q], b_pos[p]));
            if relations > 1 {
                out.push(Violation::Adjacency { targets: (p, q), relations });
            }
        }
    }
    out
}

impl FrequencyPlan {
    pub fn n_targets(&self) -> usize {
        self.pairs.len()
    }

    /// Serialize as a TOML document. Floats are written in shortest
    /// round-trip form, so parsing the output reproduces the plan exactly.
    pub fn to_document(&self) -> String {
        let mut doc = String::from(
            "# Dual-frequency target plan.\n\
             # Targets are 0-based here; target i corresponds to target i+1 in 1-based notation.\n\
             # pairs[i].a drives the radial-zoom motion, pairs[i].b the rotation motion.\n",
        );
        doc.push_str(&toml::to_string(&PlanDocument::from(self)).expect("plan serializes"));
        doc
    }

    pub fn from_document(input: &str) -> Result<FrequencyPlan> {
        let doc: PlanDocument =
            toml::from_str(input).map_err(|e| Error::parse(toml_line(input, &e), e.message()))?;
        Ok(doc.into())
    }
}

#[derive(Serialize, Deserialize)]
struct PlanDocument {
    base: Vec<f64>,
    derived: Vec<f64>,
    min_half_gap: f64,
    f_bounds: [f64; 2],
    pairs: Vec<FrequencyPair>,
}

impl From<&FrequencyPlan> for PlanDocument {
    fn from(p: &FrequencyPlan) -> Self {
        PlanDocument {
            base: p.base.clone(),
            derived: p.derived.clone(),
            min_half_gap: p.min_half_gap,
            f_bounds: [p.f_bounds.0, p.f_bounds.1],
            pairs: p.pairs.clone(),
        }
    }
}

impl From<PlanDocument> for FrequencyPlan {
    fn from(d: PlanDocument) -> Self {
        FrequencyPlan {
            base: d.base,
            derived: d.derived,
            min_half_gap: d.min_half_gap,
            pairs: d.pairs,
            f_bounds: (d.f_bounds[0], d.f_bounds[1]),
        }
    }
}

/// 1-based line of a TOML error, 0 when unknown.
pub(crate) fn toml_line(input: &str, err: &toml::de::Error) -> usize {
    err.span()
        .map(|s| input[..s.start.min(input.len())].matches('\n').count() + 1)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs_of(plan: &FrequencyPlan) -> Vec<(f64, f64)> {
        plan.pairs.iter().map(|p| (p.a, p.b)).collect()
    }

    #[test]
    fn derived_for_unit_spacing() {
        let (g, m) = derive_adjacent_frequencies(&[5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(g, vec![5.5, 6.5, 7.5, 8.5, 9.5]);
        assert_eq!(m, 0.5);
    }

    #[test]
    fn derived_two_point() {
        let (f, d) = (3.25, 1.75);
        let (g, m) = derive_adjacent_frequencies(&[f, f + 2.0 * d]).unwrap();
        assert_eq!(m, d);
        assert!((g[0] - (f + d)).abs() < 1e-12);
        assert!((g[1] - (f + 3.0 * d)).abs() < 1e-12);
    }

    #[test]
    fn derived_uneven_spacing() {
        let base = [6.0, 8.0, 9.0, 11.0, 14.0];
        // Scalar recomputation, independent of the windowed implementation.
        let mut m = f64::INFINITY;
        for i in 0..4 {
            m = m.min((base[i + 1] - base[i]) / 2.0);
        }
        let expected = [
            (base[0] + base[1]) / 2.0,
            (base[1] + base[2]) / 2.0,
            (base[2] + base[3]) / 2.0,
            (base[3] + base[4]) / 2.0,
            base[4] + m,
        ];
        let (g, got_m) = derive_adjacent_frequencies(&base).unwrap();
        assert_eq!(got_m, 0.5);
        assert_eq!(m, 0.5);
        assert_eq!(g, expected.to_vec());
        assert_eq!(g, vec![7.0, 8.5, 10.0, 12.5, 14.5]);
    }

    #[test]
    fn derive_rejects_bad_input() {
        let err = derive_adjacent_frequencies(&[5.0, 7.0, 6.0]).unwrap_err();
        assert!(err.to_string().contains("index 2"), "{err}");
        let err = derive_adjacent_frequencies(&[-1.0, 2.0]).unwrap_err();
        assert!(err.to_string().contains("index 0"), "{err}");
        assert!(derive_adjacent_frequencies(&[5.0]).is_err());
        assert!(derive_adjacent_frequencies(&[5.0, f64::NAN]).is_err());
    }

    #[test]
    fn pairs_for_default_frequencies() {
        let plan = assign_target_pairs(&[5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        assert_eq!(
            pairs_of(&plan),
            vec![(5.0, 8.5), (7.0, 5.5), (8.0, 6.5), (9.0, 7.5), (6.0, 9.5)]
        );
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn pairs_for_uneven_frequencies() {
        let plan = assign_target_pairs(&[6.0, 8.0, 9.0, 11.0, 14.0]).unwrap();
        assert_eq!(
            pairs_of(&plan),
            vec![(6.0, 12.5), (9.0, 7.0), (11.0, 8.5), (14.0, 10.0), (8.0, 14.5)]
        );
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn fewer_than_five_targets_refused() {
        let err = assign_target_pairs(&[5.0, 6.0, 7.0, 8.0]).unwrap_err();
        assert!(err.to_string().contains("N >= 5"), "{err}");
    }

    #[test]
    fn exhaustive_adjacency_default_plan() {
        // Brute force over all C(5,2) target pairs with adjacency written out
        // by value: with 1 Hz spacing every g sits 0.5 Hz from its neighbours.
        let plan = assign_target_pairs(&[5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        let adj = |f: f64, g: f64| (g - f).abs() == 0.5;
        for p in 0..5 {
            for q in p + 1..5 {
                let (x, y) = (plan.pairs[p], plan.pairs[q]);
                let count = adj(x.a, y.b) as usize + adj(y.a, x.b) as usize;
                assert!(count <= 1, "targets {p},{q}");
            }
        }
    }

    #[test]
    fn duplicate_b_reported() {
        let mut plan = assign_target_pairs(&[5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        plan.pairs[0] = FrequencyPair::new(5.0, 5.5);
        plan.pairs[1] = FrequencyPair::new(6.0, 5.5);
        let v = validate_plan(&plan);
        assert!(
            v.iter().any(|v| matches!(v, Violation::Duplicate { frequency, .. } if *frequency == 5.5)),
            "{v:?}"
        );
    }

    #[test]
    fn out_of_bounds_reported() {
        let mut plan = assign_target_pairs(&[5.0, 6.0, 7.0, 8.0, 9.0]).unwrap();
        plan.f_bounds = (2.0, 8.6);
        let v = validate_plan(&plan);
        assert!(v
            .iter()
            .any(|v| matches!(v, Violation::OutOfBounds { what: "base", index: 4, .. })));
    }

    #[test]
    fn document_round_trip() {
        let plan = assign_target_pairs(&[5.1, 6.3, 7.7, 8.05, 9.9]).unwrap();
        let doc = plan.to_document();
        assert_eq!(FrequencyPlan::from_document(&doc).unwrap(), plan);
    }

    #[test]
    fn document_parse_error_has_line() {
        let err = FrequencyPlan::from_document("base = [1.0]\nderived = nope\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }
}

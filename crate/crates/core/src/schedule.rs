//! Frame-accurate stimulus sequences for a display with a fixed refresh rate.
//!
//! A target frequency rarely divides the refresh rate evenly, so half-cycles
//! are realised with a variable number of frames. Frame `i` carries state
//! `square(2π f i / R)`, where `square` is `+1` on `[0, π)` and `-1` on
//! `[π, 2π)` of each period; `square(0) = +1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::{fmt_g9, parse_f64, parse_i8_sign, parse_usize, Table};

/// Longest schedule accepted, in frames.
pub const MAX_FRAMES: usize = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    /// Minimum number of frames per half-cycle; bounds the feasible
    /// frequency at `refresh_rate / k_min`.
    pub k_min: u32,
    /// Radial-zoom scale range (unitless, around 1.0).
    pub zoom_scale: (f64, f64),
    /// Reciprocal rotation range in degrees.
    pub rot_angle: (f64, f64),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            k_min: 3,
            zoom_scale: (0.8, 1.2),
            rot_angle: (-45.0, 75.0),
        }
    }
}

impl ScheduleConfig {
    pub fn max_frequency(&self, refresh_rate: f64) -> f64 {
        refresh_rate / f64::from(self.k_min.max(1))
    }

    pub fn check_feasible(&self, frequency: f64, refresh_rate: f64) -> Result<()> {
        if !(refresh_rate.is_finite() && refresh_rate > 0.0) {
            return Err(Error::validation(format!(
                "refresh rate must be positive, got {refresh_rate}"
            )));
        }
        let max_frequency = self.max_frequency(refresh_rate);
        if !(frequency.is_finite() && frequency > 0.0) {
            return Err(Error::validation(format!(
                "stimulus frequency must be positive, got {frequency}"
            )));
        }
        if frequency > max_frequency {
            return Err(Error::Infeasible {
                frequency,
                refresh_rate,
                max_frequency,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub zoom_state: i8,
    pub rot_state: i8,
    pub zoom_scale: f64,
    pub rot_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSchedule {
    pub refresh_rate: f64,
    pub zoom_frequency: f64,
    pub rot_frequency: f64,
    pub duration: f64,
    pub frames: Vec<Frame>,
}

/// State of frame `i`: `+1` in the first half of each stimulus period.
fn square_state(frequency: f64, refresh_rate: f64, i: usize) -> i8 {
    // Count elapsed half-cycles; exact whenever 2·f·i/R is representable.
    let half_cycles = (2.0 * frequency * i as f64 / refresh_rate).floor();
    if half_cycles.rem_euclid(2.0) == 0.0 {
        1
    } else {
        -1
    }
}

/// Binary stimulus sequence of `n_frames` states for `frequency`.
pub fn stimulus_sequence(
    frequency: f64,
    refresh_rate: f64,
    n_frames: usize,
    config: &ScheduleConfig,
) -> Result<Vec<i8>> {
    config.check_feasible(frequency, refresh_rate)?;
    if n_frames == 0 {
        return Err(Error::validation("stimulus sequence needs at least one frame"));
    }
    if n_frames > MAX_FRAMES {
        return Err(Error::validation(format!(
            "{n_frames} frames exceeds the {MAX_FRAMES}-frame limit"
        )));
    }
    Ok((0..n_frames)
        .map(|i| square_state(frequency, refresh_rate, i))
        .collect())
}

/// Lengths of maximal constant runs, in order.
pub fn run_lengths(seq: &[i8]) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut iter = seq.iter();
    let Some(mut current) = iter.next() else {
        return runs;
    };
    let mut len = 1;
    for s in iter {
        if s == current {
            len += 1;
        } else {
            runs.push(len);
            current = s;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

/// Inversion frequency of a ±1 sequence: sign changes per second divided by
/// two. The sequence is treated as one period of a repeating stimulus, so
/// the change from the last frame back to the first is counted too.
pub fn measured_inversion_frequency(seq: &[i8], refresh_rate: f64) -> Result<f64> {
    if seq.len() < 2 {
        return Err(Error::Length(format!(
            "need at least 2 frames to measure an inversion frequency, got {}",
            seq.len()
        )));
    }
    let linear = seq.windows(2).filter(|w| w[0] != w[1]).count();
    if linear == 0 {
        return Ok(0.0);
    }
    if linear < 2 {
        return Err(Error::Length(
            "sequence is shorter than one full stimulus cycle".into(),
        ));
    }
    let wrap = usize::from(seq[seq.len() - 1] != seq[0]);
    let duration = seq.len() as f64 / refresh_rate;
    Ok((linear + wrap) as f64 / (2.0 * duration))
}

/// Continuous motion parameter following a state sequence.
///
/// Each half-cycle eases from one end of `range` to the other along a
/// half-cosine, reaching the far end on its last frame. `+1` runs move
/// towards `range.1`, `-1` runs towards `range.0`.
fn eased_parameter(states: &[i8], n: usize, range: (f64, f64)) -> Vec<f64> {
    let (lo, hi) = range;
    let span = hi - lo;
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    for len in run_lengths(states) {
        let state = states[start];
        for j in 0..len {
            if out.len() == n {
                return out;
            }
            let progress = (j + 1) as f64 / len as f64;
            let eased = (1.0 - (std::f64::consts::PI * progress).cos()) / 2.0;
            let v = if state > 0 {
                lo + span * eased
            } else {
                hi - span * eased
            };
            out.push(v.clamp(lo.min(hi), lo.max(hi)));
        }
        start += len;
    }
    out
}

/// Zoom at `pair.0`, rotation at `pair.1`, both phase-aligned at frame 0.
pub fn dual_motion_schedule(
    pair: (f64, f64),
    refresh_rate: f64,
    duration: f64,
    config: &ScheduleConfig,
) -> Result<FrameSchedule> {
    let (zoom_frequency, rot_frequency) = pair;
    config.check_feasible(zoom_frequency, refresh_rate)?;
    config.check_feasible(rot_frequency, refresh_rate)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::validation(format!(
            "schedule duration must be positive, got {duration}"
        )));
    }
    let n = (refresh_rate * duration).round();
    if n < 1.0 {
        return Err(Error::validation(format!(
            "duration {duration} s yields no frames at {refresh_rate} Hz"
        )));
    }
    if n > MAX_FRAMES as f64 {
        return Err(Error::validation(format!(
            "{n} frames exceeds the {MAX_FRAMES}-frame limit"
        )));
    }
    let n = n as usize;

    // Look ahead past the end so the last half-cycle keeps its full length.
    let slowest = zoom_frequency.min(rot_frequency);
    let lookahead = (refresh_rate / (2.0 * slowest)).ceil() as usize + 2;
    let zoom_ext = stimulus_sequence(zoom_frequency, refresh_rate, n + lookahead, config)?;
    let rot_ext = stimulus_sequence(rot_frequency, refresh_rate, n + lookahead, config)?;
    let zoom_scale = eased_parameter(&zoom_ext, n, config.zoom_scale);
    let rot_angle = eased_parameter(&rot_ext, n, config.rot_angle);

    let frames = (0..n)
        .map(|i| Frame {
            zoom_state: zoom_ext[i],
            rot_state: rot_ext[i],
            zoom_scale: zoom_scale[i],
            rot_angle: rot_angle[i],
        })
        .collect();
    Ok(FrameSchedule {
        refresh_rate,
        zoom_frequency,
        rot_frequency,
        duration,
        frames,
    })
}

impl FrameSchedule {
    pub fn zoom_states(&self) -> Vec<i8> {
        self.frames.iter().map(|f| f.zoom_state).collect()
    }

    pub fn rot_states(&self) -> Vec<i8> {
        self.frames.iter().map(|f| f.rot_state).collect()
    }

    /// Delimited export, one row per frame, floats at nine significant digits.
    pub fn to_delimited(&self) -> String {
        let mut out = String::with_capacity(48 * (self.frames.len() + 6));
        out.push_str(&format!("# refresh_rate={}\n", fmt_g9(self.refresh_rate)));
        out.push_str(&format!("# zoom_frequency={}\n", fmt_g9(self.zoom_frequency)));
        out.push_str(&format!("# rot_frequency={}\n", fmt_g9(self.rot_frequency)));
        out.push_str(&format!("# duration={}\n", fmt_g9(self.duration)));
        out.push_str("frame_index,zoom_state,rot_state,zoom_scale,rot_angle\n");
        for (i, f) in self.frames.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                f.zoom_state,
                f.rot_state,
                fmt_g9(f.zoom_scale),
                fmt_g9(f.rot_angle)
            ));
        }
        out
    }

    pub fn from_delimited(input: &str) -> Result<FrameSchedule> {
        let table = Table::parse(input)?;
        table.expect_header(&["frame_index", "zoom_state", "rot_state", "zoom_scale", "rot_angle"])?;
        let mut frames = Vec::with_capacity(table.rows.len());
        for (expected, (line, row)) in table.rows.iter().enumerate() {
            let index = parse_usize(&row[0], *line)?;
            if index != expected {
                return Err(Error::parse(
                    *line,
                    format!("frame index {index} out of sequence, expected {expected}"),
                ));
            }
            frames.push(Frame {
                zoom_state: parse_i8_sign(&row[1], *line)?,
                rot_state: parse_i8_sign(&row[2], *line)?,
                zoom_scale: parse_f64(&row[3], *line)?,
                rot_angle: parse_f64(&row[4], *line)?,
            });
        }
        Ok(FrameSchedule {
            refresh_rate: table.meta_f64("refresh_rate")?,
            zoom_frequency: table.meta_f64("zoom_frequency")?,
            rot_frequency: table.meta_f64("rot_frequency")?,
            duration: table.meta_f64("duration")?,
            frames,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScheduleConfig {
        ScheduleConfig::default()
    }

    /// Independent oracle: sign of the sine with the half-open square-wave
    /// convention, evaluated with exact rational phase `num/den` cycles.
    fn oracle_state(num: u64, den: u64) -> i8 {
        if (2 * num / den).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    #[test]
    fn six_hz_at_sixty() {
        let seq = stimulus_sequence(6.0, 60.0, 20, &cfg()).unwrap();
        let mut want = vec![1i8; 5];
        want.extend([-1; 5]);
        want.extend([1; 5]);
        want.extend([-1; 5]);
        assert_eq!(seq, want);
        for (i, &s) in seq.iter().enumerate() {
            assert_eq!(s, oracle_state(6 * i as u64, 60));
        }
    }

    #[test]
    fn quarter_rate_runs_of_two() {
        let seq = stimulus_sequence(15.0, 60.0, 40, &cfg()).unwrap();
        assert!(run_lengths(&seq).iter().all(|&l| l == 2));
        assert_eq!(seq[0], 1);
    }

    #[test]
    fn five_and_a_half_hz_over_a_minute() {
        let seq = stimulus_sequence(5.5, 60.0, 3600, &cfg()).unwrap();
        let runs = run_lengths(&seq);
        assert!(runs.iter().all(|&l| l == 5 || l == 6), "{runs:?}");
        // Brute-force inversion count with the exact rational oracle,
        // counting cyclically over the 60 s window.
        let states: Vec<i8> = (0..3600u64).map(|i| oracle_state(11 * i, 120)).collect();
        assert_eq!(states, seq);
        let inversions = (0..3600).filter(|&i| states[i] != states[(i + 1) % 3600]).count();
        assert_eq!(inversions, 660);
        let f = measured_inversion_frequency(&seq, 60.0).unwrap();
        assert!((f - 5.5).abs() < 0.02, "{f}");
    }

    #[test]
    fn six_hz_measures_exactly() {
        let seq = stimulus_sequence(6.0, 60.0, 600, &cfg()).unwrap();
        assert_eq!(measured_inversion_frequency(&seq, 60.0).unwrap(), 6.0);
    }

    #[test]
    fn constant_sequence_is_zero_hz() {
        assert_eq!(measured_inversion_frequency(&[1; 100], 60.0).unwrap(), 0.0);
    }

    #[test]
    fn short_sequence_rejected() {
        assert!(matches!(
            measured_inversion_frequency(&[1, 1, -1, -1], 60.0),
            Err(Error::Length(_))
        ));
        assert!(measured_inversion_frequency(&[1], 60.0).is_err());
    }

    #[test]
    fn infeasible_frequency_reports_maximum() {
        let err = stimulus_sequence(25.0, 60.0, 10, &cfg()).unwrap_err();
        match err {
            Error::Infeasible { max_frequency, .. } => assert_eq!(max_frequency, 20.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn default_target_schedule() {
        let s = dual_motion_schedule((5.0, 8.5), 60.0, 3.5, &cfg()).unwrap();
        assert_eq!(s.frames.len(), 210);
        let zoom = measured_inversion_frequency(&s.zoom_states(), 60.0).unwrap();
        let rot = measured_inversion_frequency(&s.rot_states(), 60.0).unwrap();
        assert!((zoom - 5.0).abs() < 1.0 / 3.5, "{zoom}");
        assert!((rot - 8.5).abs() < 1.0 / 3.5, "{rot}");
        assert_eq!(s.zoom_states(), stimulus_sequence(5.0, 60.0, 210, &cfg()).unwrap());
        assert_eq!(s.rot_states(), stimulus_sequence(8.5, 60.0, 210, &cfg()).unwrap());
    }

    #[test]
    fn equal_frequencies_give_equal_states() {
        let s = dual_motion_schedule((7.0, 7.0), 60.0, 2.0, &cfg()).unwrap();
        assert_eq!(s.zoom_states(), s.rot_states());
    }

    #[test]
    fn rotation_stays_in_range_and_hits_extremes() {
        let s = dual_motion_schedule((9.0, 7.5), 60.0, 10.0, &cfg()).unwrap();
        let angles: Vec<f64> = s.frames.iter().map(|f| f.rot_angle).collect();
        assert!(angles.iter().all(|&a| (-45.0..=75.0).contains(&a)));
        // Every complete cycle (8 frames at 7.5 Hz) reaches both ends.
        for cycle in angles.chunks_exact(8) {
            let max = cycle.iter().cloned().fold(f64::MIN, f64::max);
            let min = cycle.iter().cloned().fold(f64::MAX, f64::min);
            assert!((max - 75.0).abs() < 1e-9 && (min + 45.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_duration_rejected() {
        assert!(dual_motion_schedule((5.0, 5.5), 60.0, 0.0, &cfg()).is_err());
    }

    #[test]
    fn delimited_round_trip() {
        let s = dual_motion_schedule((6.0, 9.5), 60.0, 1.0, &cfg()).unwrap();
        let text = s.to_delimited();
        assert!(text.starts_with("# refresh_rate=60\n"));
        let back = FrameSchedule::from_delimited(&text).unwrap();
        assert_eq!(back.frames.len(), 60);
        assert_eq!(back.to_delimited(), text);
    }
}

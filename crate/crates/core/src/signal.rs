//! Vibration observations: accelerometer windows to binary floor samples.
//!
//! A 500 ms window of 3-axis acceleration is reduced to its magnitude,
//! high-pass filtered to strip gravity, and summarized by its RMS energy.
//! The energy is compared against a threshold to produce the observation.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bayes::Observation;
use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: f64 = 350.0;
pub const WINDOW_SECONDS: f64 = 0.5;
/// Samples per observation window.
pub const WINDOW_LEN: usize = 175;

/// First-order high-pass coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub cutoff_hz: f64,
    pub sample_rate_hz: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            a1: 0.20,
            a2: 0.60,
            a3: -0.60,
            cutoff_hz: 40.0,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FilterState {
    pub prev_filtered: f64,
    pub prev_raw: f64,
}

impl FilterState {
    /// State as if the input had been constant at `a0` forever, so a DC
    /// window produces no start-up transient.
    pub fn primed(a0: f64) -> Self {
        Self {
            prev_filtered: 0.0,
            prev_raw: a0,
        }
    }
}

pub type SignalWindow = Vec<[f64; 3]>;

pub fn magnitude(ax: f64, ay: f64, az: f64) -> f64 {
    (ax * ax + ay * ay + az * az).sqrt()
}

/// One step of `y_i = a1 * y_{i-1} + a2 * x_i + a3 * x_{i-1}`.
pub fn highpass_step(state: FilterState, a_i: f64, params: &FilterParams) -> (FilterState, f64) {
    // input terms first so a constant input cancels exactly when a2 = -a3
    let y = params.a1 * state.prev_filtered + (params.a2 * a_i + params.a3 * state.prev_raw);
    (
        FilterState {
            prev_filtered: y,
            prev_raw: a_i,
        },
        y,
    )
}

/// Root-mean-square of a non-empty sequence.
pub fn rms_energy(filtered: &[f64]) -> f64 {
    assert!(!filtered.is_empty(), "rms of an empty sequence");
    let sum_sq: f64 = filtered.iter().map(|v| v * v).sum();
    (sum_sq / filtered.len() as f64).sqrt()
}

/// RMS energy threshold. Energies strictly above it read as vibrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservationThreshold(f64);

impl ObservationThreshold {
    pub fn new(theta_e: f64) -> Result<Self> {
        if theta_e.is_finite() && theta_e > 0.0 {
            Ok(Self(theta_e))
        } else {
            Err(Error::Config(format!("theta_E = {theta_e} must be positive")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn observe(energy: f64, theta: ObservationThreshold) -> Observation {
    Observation::from_bit(energy > theta.0)
}

/// Filters the magnitude signal of one window and returns its energy.
///
/// The filter restarts at every window, primed with the window's first sample.
pub fn window_energy(window: &[[f64; 3]], params: &FilterParams) -> f64 {
    let mags: Vec<f64> = window.iter().map(|a| magnitude(a[0], a[1], a[2])).collect();
    let Some(&first) = mags.first() else {
        return 0.0;
    };
    let mut state = FilterState::primed(first);
    let filtered: Vec<f64> = mags
        .iter()
        .map(|&a| {
            let (next, y) = highpass_step(state, a, params);
            state = next;
            y
        })
        .collect();
    rms_energy(&filtered)
}

/// Full pipeline: window to observation.
pub fn observe_window(
    window: &[[f64; 3]],
    params: &FilterParams,
    theta: ObservationThreshold,
) -> Observation {
    observe(window_energy(window, params), theta)
}

/// Parameters of the synthetic accelerometer used in place of a real IMU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub vib_amplitude: f64,
    pub vib_freq_hz: f64,
    pub noise_sigma: f64,
    pub gravity: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            vib_amplitude: 4.0,
            vib_freq_hz: 70.0,
            noise_sigma: 1.2,
            gravity: 9.81,
        }
    }
}

/// Synthesizes one 500 ms window.
///
/// Gravity sits on the z axis. A vibrating tile adds a sinusoid of random
/// phase along z; every axis gets independent Gaussian noise.
pub fn synthesize_window<R: Rng + ?Sized>(
    tile_vibrating: bool,
    params: &SynthParams,
    rng: &mut R,
) -> SignalWindow {
    let phase = rng.random::<f64>() * 2.0 * PI;
    let noise = Normal::new(0.0, params.noise_sigma.max(0.0)).expect("finite sigma");
    (0..WINDOW_LEN)
        .map(|i| {
            let t = i as f64 / SAMPLE_RATE_HZ;
            let vib = if tile_vibrating {
                params.vib_amplitude * (2.0 * PI * params.vib_freq_hz * t + phase).sin()
            } else {
                0.0
            };
            [
                noise.sample(rng),
                noise.sample(rng),
                params.gravity + vib + noise.sample(rng),
            ]
        })
        .collect()
}

/// One candidate threshold in a calibration sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub theta: f64,
    pub fill_estimate: f64,
    pub fill_error: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub theta: f64,
    pub chosen: CalibrationRow,
    pub rows: Vec<CalibrationRow>,
}

/// Sweeps thresholds on multiples of `grid_step` covering the energy range
/// and picks the one whose implied fill ratio is closest to `true_fill`.
///
/// Ties go to the threshold with the smallest `|FP - FN|`, then the smallest
/// threshold.
pub fn calibrate_threshold(
    labeled: &[(f64, bool)],
    true_fill: f64,
    grid_step: f64,
) -> Result<Calibration> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::Calibration(format!(
            "grid step {grid_step} must be positive"
        )));
    }
    if labeled.is_empty() {
        return Err(Error::Calibration("no labeled samples".into()));
    }
    if labeled.iter().any(|(e, _)| !e.is_finite()) {
        return Err(Error::Calibration("non-finite energy in labeled data".into()));
    }
    let (lo, hi) = labeled.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(e, _)| {
        (lo.min(e), hi.max(e))
    });
    let k_lo = (lo / grid_step).floor() as i64;
    let k_hi = (hi / grid_step).ceil() as i64;
    if k_hi < k_lo {
        return Err(Error::Calibration("empty threshold grid".into()));
    }

    let n = labeled.len() as f64;
    let rows: Vec<CalibrationRow> = (k_lo..=k_hi)
        .map(|k| {
            let theta = k as f64 * grid_step;
            let (mut positives, mut fp, mut fn_) = (0usize, 0usize, 0usize);
            for &(e, vibrating) in labeled {
                let predicted = e > theta;
                positives += usize::from(predicted);
                fp += usize::from(predicted && !vibrating);
                fn_ += usize::from(!predicted && vibrating);
            }
            let fill_estimate = positives as f64 / n;
            CalibrationRow {
                theta,
                fill_estimate,
                fill_error: (fill_estimate - true_fill).abs(),
                fp,
                fn_,
            }
        })
        .collect();

    let chosen = *rows
        .iter()
        .min_by(|a, b| {
            a.fill_error
                .total_cmp(&b.fill_error)
                .then(a.fp.abs_diff(a.fn_).cmp(&b.fp.abs_diff(b.fn_)))
                .then((a.fp + a.fn_).cmp(&(b.fp + b.fn_)))
                .then(a.theta.total_cmp(&b.theta))
        })
        .ok_or_else(|| Error::Calibration("empty threshold grid".into()))?;
    Ok(Calibration {
        theta: chosen.theta,
        chosen,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub energy: f64,
    pub tile_bit: u8,
    pub x: f64,
    pub y: f64,
}

/// Reads labeled calibration data with header `energy,tile_bit,x,y`.
pub fn read_labeled_csv<R: Read>(reader: R) -> Result<Vec<LabeledSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for record in rdr.deserialize::<LabeledSample>() {
        let sample = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        if sample.tile_bit > 1 {
            return Err(Error::Parse {
                line: out.len() as u64 + 2,
                message: format!("tile_bit must be 0 or 1, got {}", sample.tile_bit),
            });
        }
        if !sample.energy.is_finite() || sample.energy < 0.0 {
            return Err(Error::Parse {
                line: out.len() as u64 + 2,
                message: format!("energy must be a nonnegative number, got {}", sample.energy),
            });
        }
        out.push(sample);
    }
    if out.is_empty() {
        return Err(Error::Calibration("labeled data file has no rows".into()));
    }
    Ok(out)
}

pub fn read_labeled_file(path: &Path) -> Result<Vec<LabeledSample>> {
    read_labeled_csv(std::fs::File::open(path)?)
}

pub fn write_labeled_csv<W: Write>(writer: W, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in samples {
        w.serialize(s)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-threshold table with columns `theta,fill_error,fp,fn`.
pub fn write_calibration_csv<W: Write>(writer: W, calibration: &Calibration) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["theta", "fill_error", "fp", "fn"])?;
    for row in &calibration.rows {
        w.write_record([
            format!("{:.3}", row.theta),
            row.fill_error.to_string(),
            row.fp.to_string(),
            row.fn_.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(0.0, 0.0, 0.0), 0.0);
        assert_eq!(magnitude(3.0, 4.0, 0.0), 5.0);
        assert!((magnitude(1.0, 1.0, 1.0) - 1.732_050_8).abs() < 1e-7);
    }

    #[test]
    fn highpass_unit_step() {
        let p = FilterParams::default();
        let (s, y0) = highpass_step(FilterState::default(), 1.0, &p);
        assert_eq!(y0, 0.6);
        let (_, y1) = highpass_step(s, 1.0, &p);
        assert!((y1 - 0.12).abs() < 1e-15);
    }

    #[test]
    fn highpass_rejects_dc() {
        let p = FilterParams::default();
        let mut s = FilterState::default();
        let mut prev = f64::INFINITY;
        for i in 0..60 {
            let (next, y) = highpass_step(s, 9.81, &p);
            if i > 0 {
                assert!(y.abs() <= 0.2 * prev.abs() + 1e-300);
            }
            prev = y;
            s = next;
        }
        assert!(prev.abs() < 1e-30);
    }

    #[test]
    fn rms_examples() {
        assert_eq!(rms_energy(&[0.0; WINDOW_LEN]), 0.0);
        assert_eq!(rms_energy(&[2.0; 10]), 2.0);
        assert!((rms_energy(&[3.0, 4.0]) - 3.535_533_9).abs() < 1e-7);
    }

    #[test]
    #[should_panic]
    fn rms_rejects_empty() {
        rms_energy(&[]);
    }

    #[test]
    fn observe_examples() {
        let t = ObservationThreshold::new(1.55).unwrap();
        assert_eq!(observe(1.60, t), Observation::One);
        assert_eq!(observe(1.55, t), Observation::Zero);
        assert_eq!(observe(0.0, t), Observation::Zero);
        assert!(ObservationThreshold::new(0.0).is_err());
    }

    #[test]
    fn quiet_tile_reads_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = SynthParams {
            noise_sigma: 0.0,
            ..SynthParams::default()
        };
        let w = synthesize_window(false, &params, &mut rng);
        assert_eq!(w.len(), WINDOW_LEN);
        let e = window_energy(&w, &FilterParams::default());
        assert!(e < 1e-6, "energy {e}");
        let t = ObservationThreshold::new(1.55).unwrap();
        assert_eq!(observe_window(&w, &FilterParams::default(), t), Observation::Zero);
    }

    #[test]
    fn vibrating_tile_matches_frequency_response() {
        // Oracle: steady-state gain of H(z) = (a2 + a3 z^-1) / (1 - a1 z^-1) at 70 Hz.
        let p = FilterParams::default();
        let w = 2.0 * PI * 70.0 / SAMPLE_RATE_HZ;
        let (num_re, num_im) = (p.a2 + p.a3 * w.cos(), -p.a3 * (-w).sin());
        let (den_re, den_im) = (1.0 - p.a1 * w.cos(), p.a1 * w.sin());
        let gain = ((num_re * num_re + num_im * num_im) / (den_re * den_re + den_im * den_im)).sqrt();
        let amplitude = 4.0;
        let expected = gain * amplitude / 2f64.sqrt();

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = SynthParams {
            vib_amplitude: amplitude,
            noise_sigma: 0.0,
            ..SynthParams::default()
        };
        let window = synthesize_window(true, &params, &mut rng);
        let e = window_energy(&window, &p);
        // Start-up transient decays by 0.2 per sample, so a few percent at most.
        assert!((e - expected).abs() / expected < 0.03, "{e} vs {expected}");
        let t = ObservationThreshold::new(1.55).unwrap();
        assert!(expected > 1.55);
        assert_eq!(observe(e, t), Observation::One);
    }

    #[test]
    fn synthesis_is_deterministic() {
        let params = SynthParams::default();
        let a = synthesize_window(true, &params, &mut ChaCha8Rng::seed_from_u64(11));
        let b = synthesize_window(true, &params, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
    }

    #[test]
    fn calibration_separable() {
        let mut labeled = Vec::new();
        for i in 0..50 {
            labeled.push((0.5 + i as f64 * 0.01, false));
            labeled.push((1.7 + i as f64 * 0.01, true));
        }
        let cal = calibrate_threshold(&labeled, 0.5, 0.025).unwrap();
        assert_eq!(cal.chosen.fill_error, 0.0);
        assert_eq!((cal.chosen.fp, cal.chosen.fn_), (0, 0));
        // max non-vibrating energy is 0.99; first grid point at or above it is 1.0
        assert!((cal.theta - 1.0).abs() < 1e-12, "{}", cal.theta);
    }

    #[test]
    fn calibration_single_point() {
        let cal = calibrate_threshold(&[(1.3, true)], 0.48, 0.025).unwrap();
        for row in cal.rows.iter().filter(|r| r.theta < 1.3) {
            assert!((row.fill_error - 0.52).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_rejects_bad_input() {
        assert!(calibrate_threshold(&[], 0.5, 0.025).is_err());
        assert!(calibrate_threshold(&[(1.0, true)], 0.5, 0.0).is_err());
        assert!(calibrate_threshold(&[(f64::NAN, true)], 0.5, 0.025).is_err());
    }

    #[test]
    fn calibration_balances_errors_on_overlapping_data() {
        // Two overlapping uniform clusters; the fill-error minimizer sits
        // where false positives and false negatives cancel.
        let mut labeled = Vec::new();
        for i in 0..100 {
            labeled.push((1.005 + i as f64 * 0.01, false)); // 1.005 .. 1.995
            labeled.push((1.505 + i as f64 * 0.01, true)); // 1.505 .. 2.495
        }
        let cal = calibrate_threshold(&labeled, 0.5, 0.025).unwrap();
        assert_eq!(cal.chosen.fill_error, 0.0);
        assert_eq!(cal.chosen.fp, cal.chosen.fn_);
    }

    #[test]
    fn labeled_csv_reports_line_numbers() {
        let data = "energy,tile_bit,x,y\n1.0,1,0.1,0.1\nabc,0,0.2,0.2\n";
        match read_labeled_csv(data.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        let data = "energy,tile_bit,x,y\n1.0,2,0.1,0.1\n";
        assert!(matches!(read_labeled_csv(data.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(read_labeled_csv("energy,tile_bit,x,y\n".as_bytes()).is_err());
        assert!(read_labeled_csv("".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn energy_monotone_in_amplitude(a in 0.0f64..9.0, bump in 0.0f64..0.8, seed in any::<u64>()) {
            let p = FilterParams::default();
            let base = SynthParams { vib_amplitude: a, noise_sigma: 0.0, ..SynthParams::default() };
            let louder = SynthParams { vib_amplitude: a + bump, ..base };
            let e0 = window_energy(&synthesize_window(true, &base, &mut ChaCha8Rng::seed_from_u64(seed)), &p);
            let e1 = window_energy(&synthesize_window(true, &louder, &mut ChaCha8Rng::seed_from_u64(seed)), &p);
            prop_assert!(e1 >= e0 - 1e-12);
        }

        #[test]
        fn observe_monotone(e in 0.0f64..5.0, de in 0.0f64..1.0, t in 0.01f64..5.0, dt in 0.0f64..1.0) {
            let th = ObservationThreshold::new(t).unwrap();
            prop_assert!(observe(e + de, th).bit() >= observe(e, th).bit());
            let higher = ObservationThreshold::new(t + dt).unwrap();
            prop_assert!(observe(e, higher).bit() <= observe(e, th).bit());
        }

        #[test]
        fn calibration_recovers_separator(sep_k in 20i64..100, offset in 0.0f64..0.025, n in 20usize..200) {
            let step = 0.025;
            let sep = sep_k as f64 * step + offset;
            // evenly spread on both sides so every grid cell holds samples
            let mut labeled = Vec::new();
            for j in 0..n {
                labeled.push(((sep - j as f64 * 0.004).max(0.0), false));
                labeled.push((sep + 1e-9 + j as f64 * 0.004, true));
            }
            let vib = labeled.iter().filter(|l| l.1).count() as f64 / labeled.len() as f64;
            let cal = calibrate_threshold(&labeled, vib, step).unwrap();
            prop_assert!((cal.theta - sep).abs() <= step);
        }
    }
}

//! Room-acoustic measurements used to check what shaping did to a response:
//! Schroeder energy decay, T30-style reverberation time and
//! direct-to-reverberant ratio.

use std::fmt::Write as _;

use crate::error::{param, Error, Result};
use crate::kv;
use crate::rir::{predicted_target_rt60, Rir, ShapingParams, Strategy};

/// Upper and lower levels of the decay-curve line fit, in dB.
pub const FIT_START_DB: f64 = -5.0;
pub const FIT_END_DB: f64 = -35.0;

/// Once the curve has crossed `FIT_END_DB`, the response must still carry
/// energy for as long as the fitted slope needs to fall this many more dB.
/// Responses that simply stop (full dereverberation, a bare impulse) fail
/// this and have no measurable decay.
pub const TAIL_MARGIN_DB: f64 = 20.0;

/// Schroeder backward-integrated energy decay, starting at the direct path.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    /// Seconds after the direct path.
    pub times: Vec<f64>,
    /// dB relative to total energy; `-inf` once the energy is exhausted.
    pub levels: Vec<f64>,
}

pub fn energy_decay_curve(h: &Rir) -> Result<DecayCurve> {
    let taps = &h.taps()[h.direct_index()..];
    let mut remaining = vec![0.0; taps.len()];
    let mut acc = 0.0;
    for (r, t) in remaining.iter_mut().zip(taps).rev() {
        acc += t * t;
        *r = acc;
    }
    let total = acc;
    if !(total > 0.0) {
        return Err(Error::DegenerateEnergy("impulse response has no energy after the direct path"));
    }
    let fs = h.sample_rate() as f64;
    let times = (0..taps.len()).map(|i| i as f64 / fs).collect();
    let levels = remaining
        .iter()
        .map(|&r| {
            if r > 0.0 {
                10.0 * (r / total).log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    Ok(DecayCurve { times, levels })
}

/// Least-squares line through the `-5 .. -35 dB` span of the decay curve,
/// extrapolated to 60 dB.
pub fn estimate_rt60(h: &Rir) -> Result<f64> {
    let edc = energy_decay_curve(h)?;
    rt60_from_curve(&edc)
}

pub fn rt60_from_curve(edc: &DecayCurve) -> Result<f64> {
    let end = edc
        .levels
        .iter()
        .position(|&l| l <= FIT_END_DB)
        .ok_or_else(|| {
            Error::UndefinedDecay(format!("decay curve never reaches {FIT_END_DB} dB"))
        })?;
    let (mut n, mut st, mut sl, mut stt, mut stl) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&t, &l) in edc.times.iter().zip(&edc.levels).take(end + 1) {
        if l <= FIT_START_DB && l >= FIT_END_DB {
            n += 1.0;
            st += t;
            sl += l;
            stt += t * t;
            stl += t * l;
        }
    }
    let denom = n * stt - st * st;
    if n < 2.0 || denom <= 0.0 {
        return Err(Error::UndefinedDecay(format!(
            "only {n} decay-curve points between {FIT_START_DB} and {FIT_END_DB} dB"
        )));
    }
    let slope = (n * stl - st * sl) / denom;
    if !(slope < 0.0) {
        return Err(Error::UndefinedDecay("decay curve is not decreasing".into()));
    }
    let last_energy = edc
        .levels
        .iter()
        .rposition(|l| l.is_finite())
        .expect("level at the direct path is finite");
    let needed = TAIL_MARGIN_DB / -slope;
    let available = edc.times[last_energy] - edc.times[end.min(last_energy)];
    if end > last_energy || available < needed {
        return Err(Error::UndefinedDecay(format!(
            "response ends {available:.4} s after reaching {FIT_END_DB} dB; no measurable tail"
        )));
    }
    Ok(-60.0 / slope)
}

/// Direct-to-reverberant ratio in dB, split at `boundary` seconds after the
/// direct path. Returns `f64::INFINITY` when there is no late energy.
pub fn drr(h: &Rir, boundary: f64) -> Result<f64> {
    if !(boundary > 0.0 && boundary.is_finite()) {
        return Err(param(format!("boundary must be positive, got {boundary}")));
    }
    let (mut early, mut late) = (0.0, 0.0);
    for (i, t) in h.taps().iter().enumerate() {
        if h.time_of(i) < boundary {
            early += t * t;
        } else {
            late += t * t;
        }
    }
    if late == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (early / late).log10())
}

/// Measured vs predicted effect of shaping one response.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapingReport {
    pub strategy: Strategy,
    pub r0_estimated: f64,
    pub r1_estimated: f64,
    /// Only defined for strategies that apply the decay function, or for
    /// the identity strategy.
    pub r1_predicted: Option<f64>,
    pub relative_deviation: Option<f64>,
    pub drr_boundary: f64,
    pub drr_before: f64,
    pub drr_after: f64,
}

impl ShapingReport {
    pub const CSV_HEADER: &'static str =
        "strategy,r0_estimated,r1_estimated,r1_predicted,relative_deviation,drr_boundary,drr_before,drr_after";

    pub fn to_text(&self) -> String {
        kv::format_lines([
            ("strategy", self.strategy.to_string()),
            ("r0_estimated", fmt_num(self.r0_estimated)),
            ("r1_estimated", fmt_num(self.r1_estimated)),
            ("r1_predicted", fmt_opt(self.r1_predicted)),
            ("relative_deviation", fmt_opt(self.relative_deviation)),
            ("drr_boundary", fmt_num(self.drr_boundary)),
            ("drr_before", fmt_num(self.drr_before)),
            ("drr_after", fmt_num(self.drr_after)),
        ])
    }

    pub fn to_csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.strategy,
            fmt_num(self.r0_estimated),
            fmt_num(self.r1_estimated),
            fmt_opt(self.r1_predicted),
            fmt_opt(self.relative_deviation),
            fmt_num(self.drr_boundary),
            fmt_num(self.drr_before),
            fmt_num(self.drr_after),
        );
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.6}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_else(|| "na".to_string())
}

/// Estimates R0 and R1 and compares R1 with the room-shrinking prediction.
pub fn verify_shaping(h0: &Rir, h1: &Rir, params: &ShapingParams) -> Result<ShapingReport> {
    params.validate()?;
    let r0 = estimate_rt60(h0)?;
    let r1 = estimate_rt60(h1)?;
    let predicted = match params.strategy {
        Strategy::NoDereverb => Some(r0),
        s if s.uses_decay() => Some(predicted_target_rt60(r0, params.rd)?),
        _ => None,
    };
    Ok(ShapingReport {
        strategy: params.strategy,
        r0_estimated: r0,
        r1_estimated: r1,
        r1_predicted: predicted,
        relative_deviation: predicted.map(|p| (r1 - p) / p),
        drr_boundary: params.t1,
        drr_before: drr(h0, params.t1)?,
        drr_after: drr(h1, params.t1)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rir::{shape_rir, synth_rir, PolackParams};

    fn envelope_rir(rt60: f64, seconds: f64) -> Rir {
        let fs = 48_000.0;
        let n = (seconds * fs) as usize;
        let taps = (0..n).map(|i| 10f64.powf(-3.0 * i as f64 / (fs * rt60))).collect();
        Rir::new(taps, 48_000, 0).unwrap()
    }

    #[test]
    fn edc_of_dirac_and_two_taps() {
        let edc = energy_decay_curve(&Rir::new(vec![1.0, 0.0, 0.0], 48_000, 0).unwrap()).unwrap();
        assert_eq!(edc.levels[0], 0.0);
        assert!(edc.levels[1..].iter().all(|l| *l == f64::NEG_INFINITY));

        let edc = energy_decay_curve(&Rir::new(vec![1.0, -1.0], 48_000, 0).unwrap()).unwrap();
        assert!((edc.levels[1] + 3.0103).abs() < 1e-4);
    }

    #[test]
    fn edc_is_nonincreasing() {
        let h = synth_rir(&PolackParams::new(0.7), 1).unwrap();
        let edc = energy_decay_curve(&h).unwrap();
        assert_eq!(edc.levels[0], 0.0);
        assert!(edc.levels.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn edc_slope_of_polack_rir() {
        let h = synth_rir(&PolackParams { n_early: 0, ..PolackParams::new(0.6) }, 4).unwrap();
        let rt = estimate_rt60(&h).unwrap();
        let slope = -60.0 / rt;
        assert!((slope + 100.0).abs() < 10.0, "slope {slope} dB/s");
    }

    #[test]
    fn estimate_noiseless_envelope() {
        for rt in [0.3, 0.6, 1.0, 1.5] {
            let est = estimate_rt60(&envelope_rir(rt, rt * 1.2)).unwrap();
            assert!((est - rt).abs() / rt < 0.01, "{rt}: {est}");
        }
    }

    #[test]
    fn estimate_polack() {
        let h = synth_rir(&PolackParams::new(0.5), 2024).unwrap();
        let est = estimate_rt60(&h).unwrap();
        assert!((0.45..=0.55).contains(&est), "{est}");
    }

    #[test]
    fn dirac_has_undefined_decay() {
        assert!(matches!(
            estimate_rt60(&Rir::dirac(48_000)),
            Err(Error::UndefinedDecay(_))
        ));
    }

    #[test]
    fn full_dereverb_has_undefined_decay() {
        for seed in 0..10 {
            let h0 = synth_rir(&PolackParams::new(0.8), seed).unwrap();
            let h1 = shape_rir(&h0, &ShapingParams::new(Strategy::FullDereverb)).unwrap();
            assert!(matches!(estimate_rt60(&h1), Err(Error::UndefinedDecay(_))));
        }
    }

    #[test]
    fn drr_cases() {
        let h = Rir::new(vec![1.0, 0.0, 0.0, 1.0], 1000, 0).unwrap();
        assert!(drr(&h, 0.002).unwrap().abs() < 1e-12);
        let dry = Rir::new(vec![1.0, 0.5, 0.0, 0.0], 1000, 0).unwrap();
        assert_eq!(drr(&dry, 0.002).unwrap(), f64::INFINITY);
        assert!(drr(&h, 0.0).is_err());
    }

    #[test]
    fn verify_identity_strategy() {
        let h0 = synth_rir(&PolackParams::new(0.6), 8).unwrap();
        let p = ShapingParams::new(Strategy::NoDereverb);
        let h1 = shape_rir(&h0, &p).unwrap();
        let r = verify_shaping(&h0, &h1, &p).unwrap();
        assert_eq!(r.r0_estimated, r.r1_estimated);
        assert_eq!(r.relative_deviation, Some(0.0));
        assert!(r.to_text().contains("strategy=none\n"));
        assert_eq!(r.to_csv_row().split(',').count(), ShapingReport::CSV_HEADER.split(',').count());
    }

    #[test]
    fn verify_decayed_strategy() {
        for (r0, seed) in [(1.0, 1), (0.2, 2)] {
            let h0 = synth_rir(&PolackParams::new(r0), seed).unwrap();
            let p = ShapingParams::new(Strategy::DecayedDereverb);
            let h1 = shape_rir(&h0, &p).unwrap();
            let r = verify_shaping(&h0, &h1, &p).unwrap();
            let predicted = predicted_target_rt60(r.r0_estimated, 0.2).unwrap();
            assert_eq!(r.r1_predicted, Some(predicted));
            assert!(r.relative_deviation.unwrap().abs() < 0.15, "{r:?}");
        }
    }
}

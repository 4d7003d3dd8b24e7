//! Room impulse responses, the decay and attenuation shaping functions and
//! the four training-target strategies built from them.
//!
//! Shaping time is measured from the direct-path tap, so recorded responses
//! with a pre-delay are handled the same way as synthetic ones. Taps before
//! the direct path are passed through unchanged.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{param, Error, Result};
use crate::kv::{self, Record};

/// Boundary between early reflections and late reverberation, in seconds.
pub const DEFAULT_T0: f64 = 0.020;
/// End of the attenuation transition, in seconds.
pub const DEFAULT_T1: f64 = 0.030;
/// Decay time of the shaping exponential, in seconds.
pub const DEFAULT_RD: f64 = 0.200;
/// Late-tail amplitude factor of the attenuated targets (about -8 dB).
pub const DEFAULT_ALPHA: f64 = 0.4;

/// An impulse response with an identified direct-path tap.
#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    taps: Vec<f64>,
    sample_rate: u32,
    direct_index: usize,
}

impl Rir {
    pub fn new(taps: Vec<f64>, sample_rate: u32, direct_index: usize) -> Result<Self> {
        if sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        if direct_index >= taps.len() {
            return Err(param(format!(
                "direct index {direct_index} out of bounds for {} taps",
                taps.len()
            )));
        }
        if let Some(i) = taps.iter().position(|t| !t.is_finite()) {
            return Err(param(format!("non-finite tap at index {i}")));
        }
        if taps.iter().all(|&t| t == 0.0) {
            return Err(Error::DegenerateEnergy("impulse response has zero energy"));
        }
        Ok(Rir {
            taps,
            sample_rate,
            direct_index,
        })
    }

    /// Builds a response whose direct path is its largest-magnitude tap.
    pub fn from_taps(taps: Vec<f64>, sample_rate: u32) -> Result<Self> {
        let direct = peak_index(&taps);
        Self::new(taps, sample_rate, direct)
    }

    /// Unit impulse at index 0.
    pub fn dirac(sample_rate: u32) -> Self {
        Rir {
            taps: vec![1.0],
            sample_rate,
            direct_index: 0,
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn direct_index(&self) -> usize {
        self.direct_index
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t * t).sum()
    }

    /// Time of tap `i` relative to the direct path, in seconds.
    pub fn time_of(&self, i: usize) -> f64 {
        (i as f64 - self.direct_index as f64) / self.sample_rate as f64
    }

    /// Replaces the taps, keeping sample rate and direct index.
    pub fn with_taps(&self, taps: Vec<f64>) -> Result<Rir> {
        if taps.len() != self.taps.len() {
            return Err(Error::Shape(format!(
                "expected {} taps, got {}",
                self.taps.len(),
                taps.len()
            )));
        }
        Rir::new(taps, self.sample_rate, self.direct_index)
    }
}

fn peak_index(taps: &[f64]) -> usize {
    let mut best = 0;
    for (i, t) in taps.iter().enumerate() {
        if t.abs() > taps[best].abs() {
            best = i;
        }
    }
    best
}

/// Which target response the training label is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Target keeps the full reverberation: `h1 = h0`.
    NoDereverb,
    /// Late reverberation removed: `h1 = A·h0` with `alpha = 0`.
    FullDereverb,
    /// Room shrunk: `h1 = D·h0`.
    DecayedDereverb,
    /// Room shrunk and microphone moved closer: `h1 = A·D·h0`.
    AttenuatedDecayedDereverb,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::NoDereverb,
        Strategy::FullDereverb,
        Strategy::DecayedDereverb,
        Strategy::AttenuatedDecayedDereverb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::NoDereverb => "none",
            Strategy::FullDereverb => "full",
            Strategy::DecayedDereverb => "decayed",
            Strategy::AttenuatedDecayedDereverb => "attenuated-decayed",
        }
    }

    pub fn uses_attenuation(self) -> bool {
        matches!(
            self,
            Strategy::FullDereverb | Strategy::AttenuatedDecayedDereverb
        )
    }

    pub fn uses_decay(self) -> bool {
        matches!(
            self,
            Strategy::DecayedDereverb | Strategy::AttenuatedDecayedDereverb
        )
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "no-dereverb" => Ok(Strategy::NoDereverb),
            "full" | "full-dereverb" => Ok(Strategy::FullDereverb),
            "decayed" | "decayed-dereverb" => Ok(Strategy::DecayedDereverb),
            "attenuated-decayed" | "attenuated-decayed-dereverb" => {
                Ok(Strategy::AttenuatedDecayedDereverb)
            }
            _ => Err(param(format!(
                "unknown strategy {s:?} (expected none, full, decayed or attenuated-decayed)"
            ))),
        }
    }
}

/// Strategy plus the shaping constants. Times are in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapingParams {
    pub strategy: Strategy,
    pub t0: f64,
    pub t1: f64,
    pub alpha: f64,
    pub rd: f64,
}

impl ShapingParams {
    /// Default constants for each strategy.
    pub fn new(strategy: Strategy) -> Self {
        let alpha = match strategy {
            Strategy::FullDereverb => 0.0,
            Strategy::AttenuatedDecayedDereverb => DEFAULT_ALPHA,
            _ => 1.0,
        };
        ShapingParams {
            strategy,
            t0: DEFAULT_T0,
            t1: DEFAULT_T1,
            alpha,
            rd: DEFAULT_RD,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.t0, self.t1, self.alpha, self.rd]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(param("shaping parameters must be finite"));
        }
        if !(self.t0 >= 0.0 && self.t1 > self.t0) {
            return Err(param(format!(
                "need T1 > T0 >= 0, got T0={} T1={}",
                self.t0, self.t1
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(param(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.rd <= 0.0 {
            return Err(param(format!("RD must be positive, got {}", self.rd)));
        }
        Ok(())
    }

    /// Combined multiplier applied at time `t` by this strategy.
    pub fn gain_at(&self, t: f64) -> f64 {
        let mut g = 1.0;
        if self.strategy.uses_attenuation() {
            g *= attenuation_function(t, self);
        }
        if self.strategy.uses_decay() {
            g *= decay_function(t, self);
        }
        g
    }

    pub fn to_record(&self) -> Vec<(&'static str, String)> {
        vec![
            ("strategy", self.strategy.to_string()),
            ("t0", self.t0.to_string()),
            ("t1", self.t1.to_string()),
            ("alpha", self.alpha.to_string()),
            ("rd", self.rd.to_string()),
        ]
    }

    /// Reads `strategy` and optional `t0`/`t1`/`alpha`/`rd` overrides.
    pub fn from_record(origin: &str, rec: &Record, fallback: Strategy) -> Result<Self> {
        let strategy = match rec.get("strategy") {
            Some(s) => s.parse()?,
            None => fallback,
        };
        let mut p = ShapingParams::new(strategy);
        if let Some(v) = rec.parse(origin, "t0")? {
            p.t0 = v;
        }
        if let Some(v) = rec.parse(origin, "t1")? {
            p.t1 = v;
        }
        if let Some(v) = rec.parse(origin, "alpha")? {
            p.alpha = v;
        }
        if let Some(v) = rec.parse(origin, "rd")? {
            p.rd = v;
        }
        p.validate()?;
        Ok(p)
    }
}

impl Default for ShapingParams {
    fn default() -> Self {
        ShapingParams::new(Strategy::AttenuatedDecayedDereverb)
    }
}

/// `D(t)`: 1 before `T0`, then an exponential reaching -60 dB after `RD`.
pub fn decay_function(t: f64, params: &ShapingParams) -> f64 {
    if t < params.t0 {
        1.0
    } else {
        10f64.powf(-3.0 * (t - params.t0) / params.rd)
    }
}

/// `A(t)`: 1 before `T0`, `alpha` after `T1`, raised-cosine in between.
pub fn attenuation_function(t: f64, params: &ShapingParams) -> f64 {
    let a = params.alpha;
    if t < params.t0 {
        1.0
    } else if t > params.t1 {
        a
    } else {
        let phase = PI * (t - params.t0) / (params.t1 - params.t0);
        (1.0 + a) / 2.0 + (1.0 - a) / 2.0 * phase.cos()
    }
}

/// Multiplies every tap at or after the direct path by the strategy's
/// shaping gain.
pub fn shape_rir(h0: &Rir, params: &ShapingParams) -> Result<Rir> {
    params.validate()?;
    if params.strategy == Strategy::NoDereverb {
        return Ok(h0.clone());
    }
    let taps = h0
        .taps
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i < h0.direct_index {
                v
            } else {
                v * params.gain_at(h0.time_of(i))
            }
        })
        .collect();
    Ok(Rir {
        taps,
        sample_rate: h0.sample_rate,
        direct_index: h0.direct_index,
    })
}

/// Stochastic (Polack) room model: unit direct impulse, a few sparse early
/// reflections before `T0`, and an exponentially decaying Gaussian tail.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolackParams {
    pub rt60: f64,
    /// Minimum delay between the direct path and the first early reflection.
    pub early_gap: f64,
    pub n_early: usize,
    /// Total length in seconds.
    pub length: f64,
    /// Expected energy of the diffuse tail relative to the direct path.
    pub tail_energy: f64,
    pub sample_rate: u32,
}

impl PolackParams {
    pub fn new(rt60: f64) -> Self {
        PolackParams {
            rt60,
            early_gap: 0.001,
            n_early: 6,
            length: (1.2 * rt60).max(0.1),
            tail_energy: 1.0,
            sample_rate: crate::dsp::SAMPLE_RATE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.05..=3.0).contains(&self.rt60) {
            return Err(param(format!("rt60 must lie in [0.05, 3.0] s, got {}", self.rt60)));
        }
        if !(self.length >= self.rt60 && self.length <= 30.0) {
            return Err(param(format!(
                "length must lie in [rt60, 30] s, got {} for rt60 {}",
                self.length, self.rt60
            )));
        }
        if !(0.0..DEFAULT_T0).contains(&self.early_gap) {
            return Err(param(format!(
                "early gap must lie in [0, {DEFAULT_T0}) s, got {}",
                self.early_gap
            )));
        }
        if !(self.tail_energy.is_finite() && self.tail_energy >= 0.0) {
            return Err(param("tail energy must be finite and nonnegative"));
        }
        if self.sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        Ok(())
    }

    /// Amplitude envelope `10^(-3t/rt60)` at tap `n`.
    pub fn envelope(&self, n: usize) -> f64 {
        10f64.powf(-3.0 * n as f64 / (self.sample_rate as f64 * self.rt60))
    }
}

pub fn synth_rir(params: &PolackParams, seed: u64) -> Result<Rir> {
    params.validate()?;
    let fs = params.sample_rate as f64;
    let len = (params.length * fs).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let env_energy: f64 = (1..len).map(|n| params.envelope(n).powi(2)).sum();
    let sigma = if env_energy > 0.0 {
        (params.tail_energy / env_energy).sqrt()
    } else {
        0.0
    };
    let mut taps = vec![0.0; len];
    taps[0] = 1.0;
    for (n, tap) in taps.iter_mut().enumerate().skip(1) {
        let z: f64 = StandardNormal.sample(&mut rng);
        *tap = sigma * z * params.envelope(n);
    }

    let first = ((params.early_gap * fs).ceil() as usize).max(1);
    let last = ((DEFAULT_T0 * fs).ceil() as usize).saturating_sub(1).min(len - 1);
    if first <= last {
        for _ in 0..params.n_early {
            let idx = rng.random_range(first..=last);
            let amp = rng.random_range(0.1..=0.7);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            taps[idx] += sign * amp;
        }
    }

    // Keep the direct path strictly dominant.
    let peak = taps[1..].iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if peak >= 1.0 {
        let k = 0.99 / peak;
        taps[1..].iter_mut().for_each(|t| *t *= k);
    }
    Rir::new(taps, params.sample_rate, 0)
}

/// Reverberation time of the shaped room: `(1/R0 + 1/RD)^-1`.
pub fn predicted_target_rt60(r0: f64, rd: f64) -> Result<f64> {
    if !(r0 > 0.0) || !(rd > 0.0 && rd.is_finite()) {
        return Err(param(format!("R0 and RD must be positive, got {r0} and {rd}")));
    }
    Ok(1.0 / (1.0 / r0 + 1.0 / rd))
}

/// Equivalent source distance after attenuating the late tail by `alpha`.
pub fn predicted_target_distance(d0: f64, alpha: f64) -> Result<f64> {
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(param(format!("distance must be positive, got {d0}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(param(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(alpha * d0)
}

/// Sidecar record stored next to an impulse-response WAV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RirMeta {
    pub direct_index: usize,
    pub sample_rate: u32,
    pub nominal_rt60: Option<f64>,
    pub seed: Option<u64>,
    pub shaping: Option<ShapingParams>,
}

impl RirMeta {
    pub fn for_rir(rir: &Rir) -> Self {
        RirMeta {
            direct_index: rir.direct_index,
            sample_rate: rir.sample_rate,
            ..Default::default()
        }
    }

    pub fn to_text(&self) -> String {
        let mut pairs: Vec<(&str, String)> = vec![
            ("direct_index", self.direct_index.to_string()),
            ("sample_rate", self.sample_rate.to_string()),
        ];
        if let Some(rt) = self.nominal_rt60 {
            pairs.push(("nominal_rt60", rt.to_string()));
        }
        if let Some(seed) = self.seed {
            pairs.push(("seed", seed.to_string()));
        }
        if let Some(p) = &self.shaping {
            pairs.extend(p.to_record());
        }
        kv::format_lines(pairs)
    }

    pub fn from_text(origin: &str, text: &str) -> Result<Self> {
        let rec = kv::parse_flat(origin, text)?;
        rec.check_keys(
            origin,
            &[
                "direct_index",
                "sample_rate",
                "nominal_rt60",
                "seed",
                "strategy",
                "t0",
                "t1",
                "alpha",
                "rd",
            ],
        )?;
        let shaping = if rec.get("strategy").is_some() {
            Some(ShapingParams::from_record(origin, &rec, Strategy::NoDereverb)?)
        } else {
            None
        };
        Ok(RirMeta {
            direct_index: rec.require(origin, "direct_index")?,
            sample_rate: rec.require(origin, "sample_rate")?,
            nominal_rt60: rec.parse(origin, "nominal_rt60")?,
            seed: rec.parse(origin, "seed")?,
            shaping,
        })
    }
}

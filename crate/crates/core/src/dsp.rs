//! Waveform container and the basic signal operations everything else is
//! built from: linear convolution, SNR-controlled mixing and the 50%-overlap
//! short-time analysis/synthesis pair.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{param, Error, Result};
use crate::rir::Rir;

/// Default sample rate of every file this toolkit reads or writes.
pub const SAMPLE_RATE: u32 = 48_000;

/// Below this many taps in either operand the direct sum beats the FFT.
const DIRECT_CONV_MAX: usize = 32;

/// A finite mono waveform at a fixed sample rate. Amplitudes are full-scale
/// ±1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(param(format!("non-finite sample at index {i}")));
        }
        Ok(Signal {
            samples,
            sample_rate,
        })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Signal {
            samples: vec![0.0; len],
            sample_rate,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole signal.
    pub fn power(&self) -> f64 {
        mean_square(&self.samples)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn scaled(&self, gain: f64) -> Signal {
        Signal {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Keeps the first `len` samples, zero-padding if the signal is shorter.
    pub fn truncated(mut self, len: usize) -> Signal {
        self.samples.resize(len, 0.0);
        self
    }
}

pub fn mean_square(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|s| s * s).sum::<f64>() / x.len() as f64
}

/// Linear convolution `x ⋆ h`; output has `len(x) + len(h) - 1` samples.
pub fn convolve(x: &Signal, h: &Rir) -> Result<Signal> {
    if x.sample_rate != h.sample_rate() {
        return Err(Error::RateMismatch(x.sample_rate, h.sample_rate()));
    }
    if x.is_empty() {
        return Err(Error::TooShort { len: 0, needed: 1 });
    }
    Ok(Signal {
        samples: convolve_slices(&x.samples, h.taps()),
        sample_rate: x.sample_rate,
    })
}

/// Picks the direct sum for short kernels and the FFT path otherwise.
pub fn convolve_slices(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.len().min(h.len()) <= DIRECT_CONV_MAX {
        convolve_direct(x, h)
    } else {
        convolve_fft(x, h)
    }
}

/// O(N·M) reference convolution.
pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (yj, &hj) in y[i..i + h.len()].iter_mut().zip(h) {
            *yj += xi * hj;
        }
    }
    y
}

/// Single-block FFT convolution, zero-padded to the next power of two.
pub fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    // Pack both real inputs into one complex FFT: z = x + i·h.
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    for (zi, &xi) in z.iter_mut().zip(x) {
        zi.re = xi;
    }
    for (zi, &hi) in z.iter_mut().zip(h) {
        zi.im = hi;
    }
    fwd.process(&mut z);

    // X[k] = (Z[k] + Z*[n-k]) / 2, H[k] = (Z[k] - Z*[n-k]) / 2i, so
    // X·H = (Z[k]² - Z*[n-k]²) / 4i.
    let mut prod = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let a = z[k];
        let b = z[(n - k) % n].conj();
        prod[k] = (a * a - b * b) * Complex64::new(0.0, -0.25);
    }
    inv.process(&mut prod);
    let scale = 1.0 / n as f64;
    prod[..out_len].iter().map(|c| c.re * scale).collect()
}

/// Convolves one signal with two kernels of equal length using a single
/// forward transform per operand pair and one inverse transform: both
/// real outputs come back as the real and imaginary parts.
pub fn convolve_pair(x: &[f64], h0: &[f64], h1: &[f64]) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(h0.len(), h1.len(), "kernel lengths differ");
    if x.len().min(h0.len()) <= DIRECT_CONV_MAX {
        return (convolve_direct(x, h0), convolve_direct(x, h1));
    }
    let out_len = x.len() + h0.len() - 1;
    let n = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);

    let mut xs = vec![Complex64::new(0.0, 0.0); n];
    for (c, &v) in xs.iter_mut().zip(x) {
        c.re = v;
    }
    let mut hs = vec![Complex64::new(0.0, 0.0); n];
    for ((c, &a), &b) in hs.iter_mut().zip(h0).zip(h1) {
        *c = Complex64::new(a, b);
    }
    fwd.process(&mut xs);
    fwd.process(&mut hs);
    // X·(H0 + i·H1) is the spectrum of y0 + i·y1 because x is real.
    for (h, x) in hs.iter_mut().zip(&xs) {
        *h *= x;
    }
    inv.process(&mut hs);
    let scale = 1.0 / n as f64;
    hs[..out_len]
        .iter()
        .map(|c| (c.re * scale, c.im * scale))
        .unzip()
}

/// Fits `noise` to `len` samples: shorter noise is looped, longer noise is
/// cropped starting at an offset drawn from `seed`.
pub fn fit_noise(noise: &[f64], len: usize, seed: u64) -> Vec<f64> {
    if noise.len() <= len {
        noise.iter().copied().cycle().take(len).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = rng.random_range(0..=noise.len() - len);
        noise[start..start + len].to_vec()
    }
}

/// Adds `noise` to `speech` scaled so that the full-signal mean-square ratio
/// equals `snr_db`. Returns the mixture and the applied noise gain.
pub fn mix_at_snr(speech: &Signal, noise: &Signal, snr_db: f64, seed: u64) -> Result<(Signal, f64)> {
    if speech.sample_rate != noise.sample_rate {
        return Err(Error::RateMismatch(speech.sample_rate, noise.sample_rate));
    }
    if !snr_db.is_finite() {
        return Err(param(format!("snr_db must be finite, got {snr_db}")));
    }
    let p_speech = speech.power();
    if p_speech <= 0.0 {
        return Err(Error::DegenerateEnergy("speech has zero energy"));
    }
    if noise.power() <= 0.0 {
        return Err(Error::DegenerateEnergy("noise has zero energy"));
    }
    let fitted = fit_noise(&noise.samples, speech.len(), seed);
    let p_noise = mean_square(&fitted);
    if p_noise <= 0.0 {
        return Err(Error::DegenerateEnergy("selected noise segment has zero energy"));
    }
    let gain = (p_speech / (p_noise * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = speech
        .samples
        .iter()
        .zip(&fitted)
        .map(|(s, n)| s + gain * n)
        .collect();
    Ok((
        Signal {
            samples,
            sample_rate: speech.sample_rate,
        },
        gain,
    ))
}

/// Framing profile of the short-time transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameProfile {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl FrameProfile {
    /// 20 ms window, 10 ms hop, FFT size equal to the window.
    pub fn for_rate(sample_rate: u32) -> Result<Self> {
        let window_len = (sample_rate as f64 * 0.020).round() as usize;
        if window_len < 4 || window_len % 2 != 0 {
            return Err(param(format!(
                "sample rate {sample_rate} Hz gives an unusable 20 ms window of {window_len} samples"
            )));
        }
        Ok(FrameProfile {
            sample_rate,
            window_len,
            hop: window_len / 2,
            fft_size: window_len,
        })
    }

    pub fn with_fft_size(mut self, fft_size: usize) -> Result<Self> {
        if fft_size < self.window_len || fft_size % 2 != 0 {
            return Err(param(format!(
                "fft size {fft_size} must be even and at least the window length {}",
                self.window_len
            )));
        }
        self.fft_size = fft_size;
        Ok(self)
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of full frames that fit in `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn hop_ms(&self) -> f64 {
        1000.0 * self.hop as f64 / self.sample_rate as f64
    }

    pub fn window_ms(&self) -> f64 {
        1000.0 * self.window_len as f64 / self.sample_rate as f64
    }
}

/// Vorbis power-complementary window: `w[n]² + w[n + N/2]² = 1`.
pub fn vorbis_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| {
            let s = (PI * (n as f64 + 0.5) / len as f64).sin();
            (0.5 * PI * s * s).sin()
        })
        .collect()
}

/// Half spectra (`fft_size / 2 + 1` bins) of consecutive analysis frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSpectra {
    pub frames: Vec<Vec<Complex64>>,
    pub profile: FrameProfile,
}

impl FrameSpectra {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn fft_size(&self) -> usize {
        self.profile.fft_size
    }

    pub fn frame_advance_ms(&self) -> f64 {
        self.profile.hop_ms()
    }

    pub fn window_ms(&self) -> f64 {
        self.profile.window_ms()
    }

    fn check(&self) -> Result<()> {
        let bins = self.profile.n_bins();
        if let Some((i, f)) = self.frames.iter().enumerate().find(|(_, f)| f.len() != bins) {
            return Err(Error::MalformedSpectra(format!(
                "frame {i} has {} bins, expected {bins}",
                f.len()
            )));
        }
        Ok(())
    }
}

/// Analysis/synthesis pair with cached FFT plans.
#[derive(Clone)]
pub struct Stft {
    profile: FrameProfile,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("profile", &self.profile).finish()
    }
}

impl Stft {
    pub fn new(profile: FrameProfile) -> Self {
        let mut planner = FftPlanner::new();
        Stft {
            profile,
            window: vorbis_window(profile.window_len),
            fwd: planner.plan_fft_forward(profile.fft_size),
            inv: planner.plan_fft_inverse(profile.fft_size),
        }
    }

    pub fn for_rate(sample_rate: u32) -> Result<Self> {
        Ok(Self::new(FrameProfile::for_rate(sample_rate)?))
    }

    pub fn profile(&self) -> &FrameProfile {
        &self.profile
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn analyze(&self, signal: &Signal) -> Result<FrameSpectra> {
        let p = &self.profile;
        if signal.sample_rate != p.sample_rate {
            return Err(Error::RateMismatch(signal.sample_rate, p.sample_rate));
        }
        if signal.len() < p.window_len {
            return Err(Error::TooShort {
                len: signal.len(),
                needed: p.window_len,
            });
        }
        let n_frames = p.n_frames(signal.len());
        let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
        let mut frames = Vec::with_capacity(n_frames);
        for l in 0..n_frames {
            let seg = &signal.samples[l * p.hop..l * p.hop + p.window_len];
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for ((b, &s), &w) in buf.iter_mut().zip(seg).zip(&self.window) {
                b.re = s * w;
            }
            self.fwd.process(&mut buf);
            frames.push(buf[..p.n_bins()].to_vec());
        }
        Ok(FrameSpectra {
            frames,
            profile: *p,
        })
    }

    /// Windowed overlap-add inverse of [`Stft::analyze`].
    pub fn synthesize(&self, spectra: &FrameSpectra) -> Result<Signal> {
        if spectra.profile != self.profile {
            return Err(Error::MalformedSpectra(
                "spectra were produced with a different frame profile".into(),
            ));
        }
        spectra.check()?;
        let p = &self.profile;
        let n = p.fft_size;
        if spectra.frames.is_empty() {
            return Ok(Signal::zeros(0, p.sample_rate));
        }
        let out_len = (spectra.frames.len() - 1) * p.hop + p.window_len;
        let mut out = vec![0.0; out_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for (l, frame) in spectra.frames.iter().enumerate() {
            buf[..frame.len()].copy_from_slice(frame);
            for k in 1..n / 2 {
                buf[n - k] = frame[k].conj();
            }
            self.inv.process(&mut buf);
            let seg = &mut out[l * p.hop..l * p.hop + p.window_len];
            for ((o, b), &w) in seg.iter_mut().zip(&buf).zip(&self.window) {
                *o += b.re * scale * w;
            }
        }
        Ok(Signal {
            samples: out,
            sample_rate: p.sample_rate,
        })
    }
}

/// Analysis with the default 20 ms / 10 ms profile for the signal's rate.
pub fn analyze(signal: &Signal) -> Result<FrameSpectra> {
    Stft::for_rate(signal.sample_rate)?.analyze(signal)
}

pub fn synthesize(spectra: &FrameSpectra) -> Result<Signal> {
    Stft::new(spectra.profile).synthesize(spectra)
}

//! 32-band ERB triangular filterbank, per-band energies and the ideal
//! ratio-mask gains computed from them.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::dsp::FrameSpectra;
use crate::error::{param, Error, Result};
use crate::kv;

pub const N_BANDS: usize = 32;

/// Energies below this (full-scale units) are treated as silence.
pub const ENERGY_FLOOR: f64 = 1e-9;

/// ERB-rate in Cams: `21.4·log10(1 + 0.00437·f)`.
pub fn erb_rate(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

pub fn erb_rate_to_hz(cams: f64) -> f64 {
    (10f64.powf(cams / 21.4) - 1.0) / 0.00437
}

/// Per-band, per-bin weights over the half spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct Filterbank {
    fft_size: usize,
    sample_rate: u32,
    centers: Vec<f64>,
    /// `weights[b][k]`
    weights: Vec<Vec<f64>>,
}

impl Filterbank {
    /// Triangles between neighbouring centres, spaced uniformly on the
    /// ERB-rate scale from 0 Hz to Nyquist. Every bin's weights sum to 1.
    pub fn erb(fft_size: usize, sample_rate: u32) -> Result<Self> {
        if fft_size < 64 || fft_size % 2 != 0 {
            return Err(param(format!("fft size must be even and >= 64, got {fft_size}")));
        }
        if sample_rate == 0 {
            return Err(param("sample rate must be positive"));
        }
        let nyquist = sample_rate as f64 / 2.0;
        let step = erb_rate(nyquist) / (N_BANDS - 1) as f64;
        let mut centers: Vec<f64> = (0..N_BANDS).map(|b| erb_rate_to_hz(b as f64 * step)).collect();
        centers[0] = 0.0;
        centers[N_BANDS - 1] = nyquist;

        let n_bins = fft_size / 2 + 1;
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = vec![vec![0.0; n_bins]; N_BANDS];
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            // Band whose centre is the last one at or below f.
            let b = centers.partition_point(|&c| c <= f).saturating_sub(1);
            if b + 1 >= N_BANDS {
                weights[N_BANDS - 1][k] = 1.0;
                continue;
            }
            let upper = (f - centers[b]) / (centers[b + 1] - centers[b]);
            weights[b][k] = 1.0 - upper;
            weights[b + 1][k] = upper;
        }
        Ok(Filterbank {
            fft_size,
            sample_rate,
            centers,
            weights,
        })
    }

    /// Same bands with each bin assigned wholly to the band holding its
    /// largest triangular weight (ties go to the lower band).
    pub fn rectangular(&self) -> Filterbank {
        let n_bins = self.n_bins();
        let mut weights = vec![vec![0.0; n_bins]; N_BANDS];
        for k in 0..n_bins {
            weights[self.owner(k)][k] = 1.0;
        }
        Filterbank {
            weights,
            ..self.clone()
        }
    }

    fn owner(&self, bin: usize) -> usize {
        let mut best = 0;
        for b in 1..N_BANDS {
            if self.weights[b][bin] > self.weights[best][bin] {
                best = b;
            }
        }
        best
    }

    pub fn n_bands(&self) -> usize {
        N_BANDS
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn band_centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weight(&self, band: usize, bin: usize) -> f64 {
        self.weights[band][bin]
    }

    /// Per-bin gain interpolated from per-band gains.
    fn bin_gains(&self, gains: &[f64], mode: GainMode) -> Vec<f64> {
        (0..self.n_bins())
            .map(|k| match mode {
                GainMode::Triangular => (0..N_BANDS).map(|b| gains[b] * self.weights[b][k]).sum(),
                GainMode::Rectangular => gains[self.owner(k)],
            })
            .collect()
    }

    fn check_spectra(&self, spectra: &FrameSpectra) -> Result<()> {
        if spectra.fft_size() != self.fft_size {
            return Err(Error::Shape(format!(
                "spectra fft size {} does not match filterbank fft size {}",
                spectra.fft_size(),
                self.fft_size
            )));
        }
        if let Some(f) = spectra.frames.iter().find(|f| f.len() != self.n_bins()) {
            return Err(Error::Shape(format!(
                "frame has {} bins, filterbank expects {}",
                f.len(),
                self.n_bins()
            )));
        }
        Ok(())
    }
}

pub fn design_erb_filterbank(fft_size: usize, sample_rate: u32) -> Result<Filterbank> {
    Filterbank::erb(fft_size, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandRole {
    Energy,
    Gain,
}

/// Frames × bands matrix of nonnegative values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    pub role: BandRole,
    pub n_frames: usize,
    pub n_bands: usize,
    pub values: Vec<f64>,
}

impl BandMatrix {
    pub fn new(role: BandRole, n_frames: usize, n_bands: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_frames * n_bands {
            return Err(Error::Shape(format!(
                "{} values for a {n_frames}x{n_bands} matrix",
                values.len()
            )));
        }
        let ok = match role {
            BandRole::Energy => values.iter().all(|v| *v >= 0.0 && v.is_finite()),
            BandRole::Gain => values.iter().all(|v| (0.0..=1.0).contains(v)),
        };
        if !ok {
            return Err(param(format!("values out of range for {role:?} matrix")));
        }
        Ok(BandMatrix {
            role,
            n_frames,
            n_bands,
            values,
        })
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.n_bands..(frame + 1) * self.n_bands]
    }

    pub fn get(&self, frame: usize, band: usize) -> f64 {
        self.values[frame * self.n_bands + band]
    }

    fn same_shape(&self, other: &BandMatrix) -> Result<()> {
        if self.n_frames != other.n_frames || self.n_bands != other.n_bands {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.n_frames, self.n_bands, other.n_frames, other.n_bands
            )));
        }
        Ok(())
    }

    /// CSV with a header naming the band centres, 9 significant digits.
    pub fn to_csv(&self, centers: &[f64]) -> String {
        let mut s = String::new();
        let header: Vec<String> = centers.iter().map(|c| format!("band_{c:.1}Hz")).collect();
        let _ = writeln!(s, "{}", header.join(","));
        for l in 0..self.n_frames {
            let row: Vec<String> = self.row(l).iter().map(|v| format_sig9(*v)).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    /// Raw little-endian f32 values plus a `key=value` sidecar.
    pub fn write_binary(&self, path: &Path, sample_rate: u32, hop: usize) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            bytes.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = sidecar_path(path);
        let text = kv::format_lines([
            ("frames", self.n_frames.to_string()),
            ("bands", self.n_bands.to_string()),
            ("sample_rate", sample_rate.to_string()),
            ("hop", hop.to_string()),
        ]);
        let mut f = std::fs::File::create(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&sidecar, e))
    }

    pub fn read_binary(path: &Path, role: BandRole) -> Result<Self> {
        let sidecar = sidecar_path(path);
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let origin = sidecar.display().to_string();
        let rec = kv::parse_flat(&origin, &text)?;
        let frames: usize = rec.require(&origin, "frames")?;
        let bands: usize = rec.require(&origin, "bands")?;
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() != frames * bands * 4 {
            return Err(Error::Shape(format!(
                "{} bytes for a {frames}x{bands} f32 matrix",
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        BandMatrix::new(role, frames, bands, values)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    s.into()
}

fn format_sig9(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    // 9 significant digits, trailing zeros trimmed.
    let s = format!("{v:.8e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let fixed = format!("{v:.decimals$}");
        if fixed.contains('.') {
            fixed.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            fixed
        }
    } else {
        let mant = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{mant}e{exp}")
    }
}

/// `sqrt(Σ_k w_b(k)·|S_l(k)|²)` for every frame and band.
pub fn band_energies(spectra: &FrameSpectra, fb: &Filterbank) -> Result<BandMatrix> {
    fb.check_spectra(spectra)?;
    let mut values = Vec::with_capacity(spectra.n_frames() * N_BANDS);
    for frame in &spectra.frames {
        let power: Vec<f64> = frame.iter().map(|c| c.norm_sqr()).collect();
        for w in &fb.weights {
            let e: f64 = w.iter().zip(&power).map(|(w, p)| w * p).sum();
            values.push(e.sqrt());
        }
    }
    Ok(BandMatrix {
        role: BandRole::Energy,
        n_frames: spectra.n_frames(),
        n_bands: N_BANDS,
        values,
    })
}

/// Target-over-noisy band ratio without clamping. Silent noisy bands get 0
/// if the target is silent too, else 1.
pub fn ideal_gains_unclamped(target: &BandMatrix, noisy: &BandMatrix) -> Result<Vec<f64>> {
    target.same_shape(noisy)?;
    if target.role != BandRole::Energy || noisy.role != BandRole::Energy {
        return Err(Error::Shape("ideal gains need two energy matrices".into()));
    }
    Ok(target
        .values
        .iter()
        .zip(&noisy.values)
        .map(|(&x, &y)| {
            if y < ENERGY_FLOOR {
                if x < ENERGY_FLOOR {
                    0.0
                } else {
                    1.0
                }
            } else {
                x / y
            }
        })
        .collect())
}

/// Ideal ratio-mask gains clamped to `[0, 1]`.
pub fn ideal_gains(target: &BandMatrix, noisy: &BandMatrix) -> Result<BandMatrix> {
    let raw = ideal_gains_unclamped(target, noisy)?;
    Ok(BandMatrix {
        role: BandRole::Gain,
        n_frames: target.n_frames,
        n_bands: target.n_bands,
        values: raw.into_iter().map(|g| g.clamp(0.0, 1.0)).collect(),
    })
}

/// How band gains are spread back onto FFT bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Each bin takes the gain of the band owning its peak weight.
    Rectangular,
    /// Each bin takes the weight-interpolated gain of its two bands.
    Triangular,
}

impl std::str::FromStr for GainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rectangular" => Ok(GainMode::Rectangular),
            "triangular" => Ok(GainMode::Triangular),
            _ => Err(param(format!("unknown gain mode {s:?}"))),
        }
    }
}

/// Scales every bin by its interpolated band gain, keeping phase.
pub fn apply_gains(
    noisy: &FrameSpectra,
    gains: &[f64],
    n_frames: usize,
    fb: &Filterbank,
    mode: GainMode,
) -> Result<FrameSpectra> {
    fb.check_spectra(noisy)?;
    if n_frames != noisy.n_frames() || gains.len() != n_frames * N_BANDS {
        return Err(Error::Shape(format!(
            "{} gains for {} frames of {N_BANDS} bands",
            gains.len(),
            noisy.n_frames()
        )));
    }
    if let Some(g) = gains.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
        return Err(param(format!("gains must be finite and nonnegative, got {g}")));
    }
    let frames = noisy
        .frames
        .iter()
        .zip(gains.chunks_exact(N_BANDS))
        .map(|(frame, g)| {
            let per_bin = fb.bin_gains(g, mode);
            frame
                .iter()
                .zip(per_bin)
                .map(|(c, g)| c * g)
                .collect::<Vec<Complex64>>()
        })
        .collect();
    Ok(FrameSpectra {
        frames,
        profile: noisy.profile,
    })
}

/// [`apply_gains`] for a gain-role matrix.
pub fn apply_gain_matrix(
    noisy: &FrameSpectra,
    gains: &BandMatrix,
    fb: &Filterbank,
    mode: GainMode,
) -> Result<FrameSpectra> {
    if gains.n_bands != N_BANDS {
        return Err(Error::Shape(format!("expected {N_BANDS} bands, got {}", gains.n_bands)));
    }
    apply_gains(noisy, &gains.values, gains.n_frames, fb, mode)
}

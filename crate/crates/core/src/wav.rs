//! Mono WAV reading and writing. 16/24-bit integer PCM and 32-bit float are
//! accepted on input; integer samples map to `i / 2^(bits-1)` so an integer
//! read followed by a same-depth write is bit-exact.

use std::path::Path;
use std::str::FromStr;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::dsp::Signal;
use crate::error::{param, Error, Result};
use crate::rir::{Rir, RirMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavFormat {
    Pcm16,
    Pcm24,
    #[default]
    Float32,
}

impl WavFormat {
    fn spec(self, sample_rate: u32) -> WavSpec {
        let (bits_per_sample, sample_format) = match self {
            WavFormat::Pcm16 => (16, SampleFormat::Int),
            WavFormat::Pcm24 => (24, SampleFormat::Int),
            WavFormat::Float32 => (32, SampleFormat::Float),
        };
        WavSpec {
            channels: 1,
            sample_rate,
            bits_per_sample,
            sample_format,
        }
    }
}

impl FromStr for WavFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pcm16" | "i16" => Ok(WavFormat::Pcm16),
            "pcm24" | "i24" => Ok(WavFormat::Pcm24),
            "f32" | "float32" => Ok(WavFormat::Float32),
            _ => Err(param(format!("unknown wav format {s:?} (pcm16, pcm24 or f32)"))),
        }
    }
}

fn wav_err(path: &Path) -> impl FnOnce(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads a mono file, returning the samples and the stored format.
pub fn read_wav(path: &Path) -> Result<(Signal, WavFormat)> {
    let reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(param(format!(
            "{}: expected mono, found {} channels",
            path.display(),
            spec.channels
        )));
    }
    let (samples, format) = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => {
            let s: std::result::Result<Vec<f64>, _> =
                reader.into_samples::<f32>().map(|r| r.map(f64::from)).collect();
            (s.map_err(wav_err(path))?, WavFormat::Float32)
        }
        (SampleFormat::Int, bits @ (16 | 24)) => {
            let scale = 1.0 / (1u32 << (bits - 1)) as f64;
            let s: std::result::Result<Vec<f64>, _> = reader
                .into_samples::<i32>()
                .map(|r| r.map(|v| v as f64 * scale))
                .collect();
            let fmt = if bits == 16 {
                WavFormat::Pcm16
            } else {
                WavFormat::Pcm24
            };
            (s.map_err(wav_err(path))?, fmt)
        }
        (fmt, bits) => {
            return Err(param(format!(
                "{}: unsupported sample format {fmt:?} with {bits} bits",
                path.display()
            )))
        }
    };
    Ok((Signal::new(samples, spec.sample_rate)?, format))
}

/// Writes mono samples; integer formats round and saturate.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32, format: WavFormat) -> Result<()> {
    let mut w = WavWriter::create(path, format.spec(sample_rate)).map_err(wav_err(path))?;
    match format {
        WavFormat::Float32 => {
            for &s in samples {
                w.write_sample(s as f32).map_err(wav_err(path))?;
            }
        }
        WavFormat::Pcm16 | WavFormat::Pcm24 => {
            let bits = format.spec(sample_rate).bits_per_sample;
            let full = (1i64 << (bits - 1)) as f64;
            for &s in samples {
                let v = (s * full).round().clamp(-full, full - 1.0) as i32;
                w.write_sample(v).map_err(wav_err(path))?;
            }
        }
    }
    w.finalize().map_err(wav_err(path))
}

pub fn write_signal(path: &Path, signal: &Signal, format: WavFormat) -> Result<()> {
    write_wav(path, signal.samples(), signal.sample_rate(), format)
}

/// Path of the metadata sidecar for an impulse-response file.
pub fn meta_path(wav: &Path) -> std::path::PathBuf {
    wav.with_extension("meta.txt")
}

/// Reads an impulse response, taking the direct index from the sidecar when
/// one exists and from the peak tap otherwise.
pub fn read_rir(path: &Path) -> Result<(Rir, WavFormat, Option<RirMeta>)> {
    let (signal, format) = read_wav(path)?;
    let sr = signal.sample_rate();
    let sidecar = meta_path(path);
    let meta = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(RirMeta::from_text(&sidecar.display().to_string(), &text)?)
    } else {
        None
    };
    let rir = match &meta {
        Some(m) => Rir::new(signal.into_samples(), sr, m.direct_index)?,
        None => Rir::from_taps(signal.into_samples(), sr)?,
    };
    Ok((rir, format, meta))
}

/// Writes the taps and a sidecar describing them.
pub fn write_rir(path: &Path, rir: &Rir, meta: &RirMeta, format: WavFormat) -> Result<()> {
    write_wav(path, rir.taps(), rir.sample_rate(), format)?;
    let sidecar = meta_path(path);
    std::fs::write(&sidecar, meta.to_text()).map_err(|e| Error::io(&sidecar, e))
}

//! Manifest-driven generation of (reverberant noisy input, shaped target,
//! ideal band gains) training examples.
//!
//! Per-entry randomness comes from a ChaCha stream keyed by the global seed
//! and the entry index, so results do not depend on how entries are
//! scheduled across worker threads.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::acoustics::estimate_rt60;
use crate::bands::{band_energies, ideal_gains, BandMatrix, Filterbank};
use crate::dsp::{convolve_pair, convolve_slices, mix_at_snr, Signal, Stft, SAMPLE_RATE};
use crate::error::{param, Error, Result};
use crate::kv::{self, Record};
use crate::rir::{shape_rir, synth_rir, PolackParams, Rir, ShapingParams, Strategy};
use crate::wav::{self, WavFormat};

/// Convolution tail kept after the end of the speech, in seconds.
pub const DEFAULT_TAIL_SECONDS: f64 = 0.5;
pub const DEFAULT_SNR_RANGE: (f64, f64) = (-5.0, 45.0);
pub const DEFAULT_P_NOISE_FREE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalConfig {
    pub seed: u64,
    pub snr_range: (f64, f64),
    pub p_noise_free: f64,
    pub tail_seconds: f64,
    pub format: WavFormat,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            seed: 0,
            snr_range: DEFAULT_SNR_RANGE,
            p_noise_free: DEFAULT_P_NOISE_FREE,
            tail_seconds: DEFAULT_TAIL_SECONDS,
            format: WavFormat::Float32,
        }
    }
}

impl GlobalConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(param(format!("invalid snr range [{lo}, {hi}]")));
        }
        if !(0.0..=1.0).contains(&self.p_noise_free) {
            return Err(param(format!("p_noise_free must lie in [0, 1], got {}", self.p_noise_free)));
        }
        if !(self.tail_seconds >= 0.0 && self.tail_seconds.is_finite()) {
            return Err(param(format!("tail must be nonnegative, got {}", self.tail_seconds)));
        }
        Ok(())
    }
}

/// Draws for one manifest entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryRandomness {
    pub snr_db: f64,
    pub noise_free: bool,
    pub rir_seed: u64,
}

/// Stream `entry_index` of the ChaCha generator seeded with `global_seed`.
/// Draw order is fixed: SNR, noise-free flag, RIR seed.
pub fn sample_entry_randomness(global_seed: u64, entry_index: u64, config: &GlobalConfig) -> EntryRandomness {
    let mut rng = ChaCha8Rng::seed_from_u64(global_seed);
    rng.set_stream(entry_index);
    let (lo, hi) = config.snr_range;
    let u: f64 = rng.random();
    let snr_db = lo + (hi - lo) * u;
    let noise_free = rng.random::<f64>() < config.p_noise_free;
    let rir_seed = rng.random();
    EntryRandomness {
        snr_db,
        noise_free,
        rir_seed,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RirSource {
    File(PathBuf),
    Synth(PolackParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SnrSpec {
    Fixed(f64),
    Sample,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: String,
    pub speech: PathBuf,
    pub noise: Option<PathBuf>,
    pub rir: RirSource,
    pub snr: SnrSpec,
    pub shaping: ShapingParams,
    pub seed: Option<u64>,
}

/// Parsed manifest.
///
/// ```text
/// global seed=7 snr_min=-5 snr_max=45 p_noise_free=0.05 tail=0.5 format=f32
/// entry id=a speech=clean/a.wav noise=noise/n.wav rir=rirs/r.wav snr=sample strategy=attenuated-decayed
/// entry id=b speech=clean/b.wav rir_rt60=0.6 snr=10 strategy=decayed rd=0.3 seed=11
/// ```
///
/// Relative paths resolve against the manifest's directory. Entries without
/// `noise` are noise-free. `rir_rt60` (with optional `rir_n_early`,
/// `rir_gap`, `rir_length`, `rir_tail_energy`) synthesizes the response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub global: GlobalConfig,
    pub entries: Vec<ManifestEntry>,
}

const GLOBAL_KEYS: &[&str] = &["seed", "snr_min", "snr_max", "p_noise_free", "tail", "format"];
const ENTRY_KEYS: &[&str] = &[
    "id",
    "speech",
    "noise",
    "rir",
    "rir_rt60",
    "rir_n_early",
    "rir_gap",
    "rir_length",
    "rir_tail_energy",
    "snr",
    "strategy",
    "t0",
    "t1",
    "alpha",
    "rd",
    "seed",
];

impl DatasetManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&path.display().to_string(), &text, base)
    }

    pub fn parse(origin: &str, text: &str, base: &Path) -> Result<Self> {
        let mut m = DatasetManifest::default();
        let mut seen_global = false;
        for rec in kv::parse_records(origin, text)? {
            match rec.tag.as_deref() {
                Some("global") => {
                    if seen_global {
                        return Err(parse_err(origin, &rec, "more than one global record"));
                    }
                    if !m.entries.is_empty() {
                        return Err(parse_err(origin, &rec, "global record must precede entries"));
                    }
                    seen_global = true;
                    m.global = parse_global(origin, &rec)?;
                }
                Some("entry") => {
                    let idx = m.entries.len();
                    m.entries.push(parse_entry(origin, &rec, base, idx)?);
                }
                other => {
                    return Err(parse_err(
                        origin,
                        &rec,
                        &format!("expected a global or entry record, got {other:?}"),
                    ))
                }
            }
        }
        let mut ids = std::collections::HashSet::new();
        for e in &m.entries {
            if !ids.insert(e.id.as_str()) {
                return Err(param(format!("{origin}: duplicate entry id {:?}", e.id)));
            }
        }
        Ok(m)
    }
}

fn parse_err(origin: &str, rec: &Record, msg: &str) -> Error {
    Error::Parse {
        path: format!("{origin}:{}", rec.line),
        msg: msg.to_string(),
    }
}

fn parse_global(origin: &str, rec: &Record) -> Result<GlobalConfig> {
    rec.check_keys(origin, GLOBAL_KEYS)?;
    let d = GlobalConfig::default();
    let g = GlobalConfig {
        seed: rec.parse(origin, "seed")?.unwrap_or(d.seed),
        snr_range: (
            rec.parse(origin, "snr_min")?.unwrap_or(d.snr_range.0),
            rec.parse(origin, "snr_max")?.unwrap_or(d.snr_range.1),
        ),
        p_noise_free: rec.parse(origin, "p_noise_free")?.unwrap_or(d.p_noise_free),
        tail_seconds: rec.parse(origin, "tail")?.unwrap_or(d.tail_seconds),
        format: match rec.get("format") {
            Some(f) => f.parse()?,
            None => d.format,
        },
    };
    g.validate()?;
    Ok(g)
}

fn parse_entry(origin: &str, rec: &Record, base: &Path, index: usize) -> Result<ManifestEntry> {
    rec.check_keys(origin, ENTRY_KEYS)?;
    let resolve = |p: &str| {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let rir = match (rec.get("rir"), rec.parse::<f64>(origin, "rir_rt60")?) {
        (Some(path), None) => RirSource::File(resolve(path)),
        (None, Some(rt60)) => {
            let mut p = PolackParams::new(rt60);
            if let Some(v) = rec.parse(origin, "rir_n_early")? {
                p.n_early = v;
            }
            if let Some(v) = rec.parse(origin, "rir_gap")? {
                p.early_gap = v;
            }
            if let Some(v) = rec.parse(origin, "rir_length")? {
                p.length = v;
            }
            if let Some(v) = rec.parse(origin, "rir_tail_energy")? {
                p.tail_energy = v;
            }
            p.validate()?;
            RirSource::Synth(p)
        }
        _ => return Err(parse_err(origin, rec, "entry needs exactly one of rir or rir_rt60")),
    };
    let snr = match rec.get("snr") {
        None | Some("sample") => SnrSpec::Sample,
        Some(_) => {
            let v: f64 = rec.require(origin, "snr")?;
            if !v.is_finite() {
                return Err(parse_err(origin, rec, "snr must be finite"));
            }
            SnrSpec::Fixed(v)
        }
    };
    Ok(ManifestEntry {
        id: rec
            .get("id")
            .map(str::to_string)
            .unwrap_or_else(|| format!("entry{index:05}")),
        speech: resolve(rec.get("speech").ok_or_else(|| parse_err(origin, rec, "missing speech"))?),
        noise: rec.get("noise").map(resolve),
        rir,
        snr,
        shaping: ShapingParams::from_record(origin, rec, Strategy::AttenuatedDecayedDereverb)?,
        seed: rec.parse(origin, "seed")?,
    })
}

/// Everything recorded about how an example was made.
#[derive(Debug, Clone, PartialEq)]
pub struct ExampleMeta {
    pub seed: u64,
    /// `None` for noise-free examples.
    pub snr_db: Option<f64>,
    pub noise_gain: f64,
    pub shaping: ShapingParams,
    pub r0_estimated: Option<f64>,
    pub r1_estimated: Option<f64>,
    pub n_frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub input: Signal,
    pub target: Signal,
    pub gains: BandMatrix,
    pub meta: ExampleMeta,
}

/// Builds one example with the default convolution tail.
pub fn generate_example(
    speech: &Signal,
    noise: Option<&Signal>,
    h0: &Rir,
    params: &ShapingParams,
    snr_db: Option<f64>,
    seed: u64,
) -> Result<Example> {
    generate_example_with_tail(speech, noise, h0, params, snr_db, seed, DEFAULT_TAIL_SECONDS)
}

/// `input = speech ⋆ h0 (+ noise at snr_db)`, `target = speech ⋆ shape(h0)`,
/// both truncated to the speech length plus `tail_seconds`; `gains` are the
/// ideal band gains from input to target. `snr_db = None` means noise-free.
pub fn generate_example_with_tail(
    speech: &Signal,
    noise: Option<&Signal>,
    h0: &Rir,
    params: &ShapingParams,
    snr_db: Option<f64>,
    seed: u64,
    tail_seconds: f64,
) -> Result<Example> {
    if speech.sample_rate() != SAMPLE_RATE {
        return Err(Error::RateMismatch(speech.sample_rate(), SAMPLE_RATE));
    }
    if h0.sample_rate() != speech.sample_rate() {
        return Err(Error::RateMismatch(speech.sample_rate(), h0.sample_rate()));
    }
    if speech.is_empty() {
        return Err(Error::TooShort { len: 0, needed: 1 });
    }
    let h1 = shape_rir(h0, params)?;
    let (rev, tgt) = if h1 == *h0 {
        let y = convolve_slices(speech.samples(), h0.taps());
        (y.clone(), y)
    } else {
        convolve_pair(speech.samples(), h0.taps(), h1.taps())
    };
    let keep = speech.len() + (tail_seconds * speech.sample_rate() as f64).round() as usize;
    let keep = keep.min(rev.len());
    let reverberant = Signal::new(rev, speech.sample_rate())?.truncated(keep);
    let target = Signal::new(tgt, speech.sample_rate())?.truncated(keep);

    let (input, noise_gain) = match snr_db {
        None => (reverberant, 0.0),
        Some(snr) => {
            let noise = noise.ok_or(Error::MissingNoise)?;
            mix_at_snr(&reverberant, noise, snr, seed)?
        }
    };

    let stft = Stft::for_rate(speech.sample_rate())?;
    let fb = Filterbank::erb(stft.profile().fft_size, speech.sample_rate())?;
    let x = band_energies(&stft.analyze(&target)?, &fb)?;
    let y = band_energies(&stft.analyze(&input)?, &fb)?;
    let gains = ideal_gains(&x, &y)?;

    Ok(Example {
        meta: ExampleMeta {
            seed,
            snr_db,
            noise_gain,
            shaping: *params,
            r0_estimated: estimate_rt60(h0).ok(),
            r1_estimated: estimate_rt60(&h1).ok(),
            n_frames: gains.n_frames,
        },
        input,
        target,
        gains,
    })
}

/// Writes `<id>.input.wav`, `<id>.target.wav`, `<id>.gains.csv` and
/// `<id>.meta.txt` into `dir`.
pub fn write_example(dir: &Path, id: &str, ex: &Example, format: WavFormat, extra: &[(&str, String)]) -> Result<()> {
    wav::write_signal(&dir.join(format!("{id}.input.wav")), &ex.input, format)?;
    wav::write_signal(&dir.join(format!("{id}.target.wav")), &ex.target, format)?;
    let fb = Filterbank::erb(
        crate::dsp::FrameProfile::for_rate(ex.input.sample_rate())?.fft_size,
        ex.input.sample_rate(),
    )?;
    let gains = dir.join(format!("{id}.gains.csv"));
    std::fs::write(&gains, ex.gains.to_csv(fb.band_centers())).map_err(|e| Error::io(&gains, e))?;

    let m = &ex.meta;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "none".into());
    let mut pairs: Vec<(&str, String)> = vec![("id", id.to_string())];
    pairs.extend(extra.iter().cloned());
    pairs.extend([
        ("seed", m.seed.to_string()),
        ("noise_free", m.snr_db.is_none().to_string()),
        ("snr_db", opt(m.snr_db)),
        ("noise_gain", m.noise_gain.to_string()),
    ]);
    pairs.extend(m.shaping.to_record());
    pairs.extend([
        ("r0_estimated", opt(m.r0_estimated)),
        ("r1_estimated", opt(m.r1_estimated)),
        ("samples", ex.input.len().to_string()),
        ("sample_rate", ex.input.sample_rate().to_string()),
        ("frames", m.n_frames.to_string()),
    ]);
    let meta = dir.join(format!("{id}.meta.txt"));
    std::fs::write(&meta, kv::format_lines(pairs)).map_err(|e| Error::io(&meta, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntryOutcome {
    pub id: String,
    pub result: std::result::Result<ExampleMeta, String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSummary {
    pub outcomes: Vec<EntryOutcome>,
}

/// Width of the RT60 histogram bins, in seconds.
const HIST_BIN: f64 = 0.1;

impl DatasetSummary {
    pub fn total(&self) -> usize {
        self.outcomes.len()
    }

    pub fn ok(&self) -> usize {
        self.outcomes.iter().filter(|o| o.result.is_ok()).count()
    }

    pub fn failed(&self) -> usize {
        self.total() - self.ok()
    }

    pub fn failures(&self) -> impl Iterator<Item = (&str, &str)> {
        self.outcomes.iter().filter_map(|o| match &o.result {
            Err(e) => Some((o.id.as_str(), e.as_str())),
            Ok(_) => None,
        })
    }

    /// Counts of estimated source-room RT60 per 100 ms bin, keyed by bin
    /// start in milliseconds.
    pub fn rt60_histogram(&self) -> BTreeMap<u32, usize> {
        let mut h = BTreeMap::new();
        for o in &self.outcomes {
            if let Ok(Some(rt)) = o.result.as_ref().map(|m| m.r0_estimated) {
                let bin = (rt / HIST_BIN).floor() as u32 * (HIST_BIN * 1000.0) as u32;
                *h.entry(bin).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn to_text(&self) -> String {
        let mut s = kv::format_lines([
            ("total", self.total().to_string()),
            ("ok", self.ok().to_string()),
            ("failed", self.failed().to_string()),
        ]);
        for (bin, n) in self.rt60_histogram() {
            let _ = writeln!(s, "rt60_{bin}ms={n}");
        }
        for (id, reason) in self.failures() {
            let _ = writeln!(s, "failure id={id} reason={:?}", reason);
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,status,snr_db,noise_free,r0_estimated,r1_estimated,reason\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for o in &self.outcomes {
            match &o.result {
                Ok(m) => {
                    let _ = writeln!(
                        s,
                        "{},ok,{},{},{},{},",
                        o.id,
                        opt(m.snr_db),
                        m.snr_db.is_none(),
                        opt(m.r0_estimated),
                        opt(m.r1_estimated)
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{},failed,,,,,\"{}\"", o.id, e.replace('"', "'"));
                }
            }
        }
        s
    }
}

fn load_signal(path: &Path) -> Result<Signal> {
    wav::read_wav(path).map(|(s, _)| s)
}

fn run_entry(index: usize, entry: &ManifestEntry, global: &GlobalConfig, out_dir: &Path) -> Result<ExampleMeta> {
    let draws = sample_entry_randomness(global.seed, index as u64, global);
    let seed = entry.seed.unwrap_or(draws.rir_seed);
    let speech = load_signal(&entry.speech)?;
    let noise = entry.noise.as_deref().map(load_signal).transpose()?;
    let h0 = match &entry.rir {
        RirSource::File(p) => wav::read_rir(p)?.0,
        RirSource::Synth(p) => synth_rir(p, seed)?,
    };
    let snr = if noise.is_none() || draws.noise_free {
        None
    } else {
        Some(match entry.snr {
            SnrSpec::Fixed(v) => v,
            SnrSpec::Sample => draws.snr_db,
        })
    };
    let ex = generate_example_with_tail(
        &speech,
        noise.as_ref(),
        &h0,
        &entry.shaping,
        snr,
        seed,
        global.tail_seconds,
    )?;
    let rir_desc = match &entry.rir {
        RirSource::File(p) => p.display().to_string(),
        RirSource::Synth(p) => format!("synth:rt60={}", p.rt60),
    };
    let extra = [
        ("speech", entry.speech.display().to_string()),
        (
            "noise",
            entry
                .noise
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_else(|| "none".into()),
        ),
        ("rir", rir_desc),
    ];
    write_example(out_dir, &entry.id, &ex, global.format, &extra)?;
    Ok(ex.meta)
}

/// Generates every entry into `out_dir` using `workers` threads and writes
/// `summary.txt` / `summary.csv`. Entry failures are recorded in the summary.
pub fn build_dataset(manifest: &DatasetManifest, out_dir: &Path, workers: usize) -> Result<DatasetSummary> {
    manifest.global.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| param(format!("cannot start worker pool: {e}")))?;
    let outcomes = pool.install(|| {
        manifest
            .entries
            .par_iter()
            .enumerate()
            .map(|(i, e)| EntryOutcome {
                id: e.id.clone(),
                result: run_entry(i, e, &manifest.global, out_dir).map_err(|err| err.to_string()),
            })
            .collect::<Vec<_>>()
    });
    let summary = DatasetSummary { outcomes };
    let txt = out_dir.join("summary.txt");
    std::fs::write(&txt, summary.to_text()).map_err(|e| Error::io(&txt, e))?;
    let csv = out_dir.join("summary.csv");
    std::fs::write(&csv, summary.to_csv()).map_err(|e| Error::io(&csv, e))?;
    Ok(summary)
}

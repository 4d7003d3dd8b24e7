//! `rirshape` command-line tool.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rirshape::acoustics::{drr, energy_decay_curve, estimate_rt60, verify_shaping, ShapingReport};
use rirshape::bands::{apply_gains, band_energies, ideal_gains, Filterbank, GainMode};
use rirshape::kv;
use rirshape::pipeline::{build_dataset, DatasetManifest};
use rirshape::rir::{attenuation_function, decay_function, shape_rir, synth_rir, PolackParams, RirMeta};
use rirshape::wav::{read_rir, read_wav, write_rir, write_signal, WavFormat};
use rirshape::{ShapingParams, Stft, Strategy};

const OUT_DIR_ENV: &str = "RIRSHAPE_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "rirshape", version, about = "Shaped-RIR dereverberation training data", args_override_self = true)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// File of key=value lines used as default flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for outputs not given an explicit path.
    #[arg(long, global = true, env = OUT_DIR_ENV, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply a target strategy to an impulse response.
    Shape {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        shaping: ShapingArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Output sample format; defaults to the input's.
        #[arg(long)]
        format: Option<WavFormat>,
    },
    /// Synthesize a stochastic impulse response.
    SynthRir {
        #[arg(long)]
        rt60: f64,
        #[arg(long)]
        n_early: Option<usize>,
        /// Earliest reflection delay, seconds.
        #[arg(long)]
        gap: Option<f64>,
        /// Length in seconds.
        #[arg(long)]
        length: Option<f64>,
        #[arg(long)]
        tail_energy: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "f32")]
        format: WavFormat,
    },
    /// Decay curve, RT60 and DRR of an impulse response.
    AnalyzeRir {
        #[arg(long, short)]
        input: PathBuf,
        /// Early/late split for the DRR, seconds after the direct path.
        #[arg(long, default_value_t = rirshape::rir::DEFAULT_T1)]
        boundary: f64,
        /// Also write the decay curve as CSV.
        #[arg(long, value_name = "CSV")]
        edc: Option<PathBuf>,
    },
    /// Ideal band gains from a noisy signal to its target.
    Gains {
        #[arg(long)]
        target: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also write the gains as little-endian f32 with a text sidecar.
        #[arg(long, value_name = "PATH")]
        binary: Option<PathBuf>,
        /// Resynthesize the input with the gains applied.
        #[arg(long, value_name = "WAV")]
        enhanced: Option<PathBuf>,
        /// Rectangular measures and applies on a hard band partition.
        #[arg(long, default_value = "triangular")]
        mode: GainMode,
    },
    /// Generate every entry of a manifest.
    MakeDataset {
        #[arg(long, short)]
        manifest: PathBuf,
        #[arg(long, short)]
        workers: Option<usize>,
    },
    /// Compare measured and predicted target reverberation.
    Verify {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        shaping: ShapingArgs,
        /// Append the report as a CSV row.
        #[arg(long, value_name = "CSV")]
        csv: Option<PathBuf>,
    },
    /// CSV data for the shaping-function and shaped-tail curves.
    PlotData {
        #[arg(long, short)]
        function: PlotFunction,
        #[command(flatten)]
        shaping: ShapingArgs,
        /// Reverberation time of the envelope under the shaped tails.
        #[arg(long, default_value_t = 1.0)]
        r0: f64,
        #[arg(long, default_value_t = 0.5)]
        duration: f64,
        /// Rows per second.
        #[arg(long, default_value_t = 1000)]
        rate: u32,
        /// Defaults to standard output.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug, Clone)]
struct ShapingArgs {
    #[arg(long, default_value = "attenuated-decayed")]
    strategy: Strategy,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    rd: Option<f64>,
}

impl ShapingArgs {
    fn params(&self) -> Result<ShapingParams, Failure> {
        let mut p = ShapingParams::new(self.strategy);
        p.t0 = self.t0.unwrap_or(p.t0);
        p.t1 = self.t1.unwrap_or(p.t1);
        p.alpha = self.alpha.unwrap_or(p.alpha);
        p.rd = self.rd.unwrap_or(p.rd);
        p.validate()?;
        Ok(p)
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq)]
#[value(rename_all = "kebab-case")]
enum PlotFunction {
    #[value(alias = "D")]
    D,
    #[value(alias = "A")]
    A,
    ShapedTail,
}

struct Failure {
    kind: String,
    message: String,
    code: u8,
}

impl Failure {
    fn new(kind: &str, message: impl Into<String>) -> Self {
        Failure {
            kind: kind.into(),
            message: message.into(),
            code: 1,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::new("io", format!("{}: {e}", path.display()))
    }
}

impl From<rirshape::Error> for Failure {
    fn from(e: rirshape::Error) -> Self {
        Failure::new(e.kind(), e.to_string())
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn usage(e: clap::Error) -> Failure {
    let text = e.to_string();
    let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
    Failure {
        kind: "usage".into(),
        message: one_line(first),
        code: 2,
    }
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    match parse(args).and_then(run) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: kind={} message={}", f.kind, one_line(&f.message));
            ExitCode::from(f.code)
        }
    }
}

fn parse(args: Vec<OsString>) -> Result<Cli, Failure> {
    let args = match config_arg(&args) {
        Some(path) => with_defaults(args, config_flags(&path)?),
        None => args,
    };
    match Cli::try_parse_from(&args) {
        Ok(c) => Ok(c),
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            std::process::exit(0);
        }
        Err(e) => Err(usage(e)),
    }
}

fn config_arg(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let a = a.to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// `key=value` lines become `--key=value` flags; underscores map to dashes.
fn config_flags(path: &Path) -> Result<Vec<OsString>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let rec = kv::parse_flat(&path.display().to_string(), &text)?;
    let mut flags = Vec::new();
    for (k, v) in rec.fields {
        let k = k.replace('_', "-");
        if k == "config" {
            return Err(Failure::new("usage", format!("{}: config files cannot nest", path.display())));
        }
        flags.push(OsString::from(format!("--{k}={v}")));
    }
    Ok(flags)
}

/// Reorders to `prog <subcommand> <defaults> <user args>` so explicit flags
/// win over config values.
fn with_defaults(args: Vec<OsString>, defaults: Vec<OsString>) -> Vec<OsString> {
    let mut it = args.into_iter();
    let prog = it.next().unwrap_or_default();
    let mut rest: Vec<OsString> = it.collect();
    let mut i = 0;
    while i < rest.len() {
        let a = rest[i].to_string_lossy();
        if matches!(a.as_ref(), "--seed" | "--config" | "--out-dir") {
            i += 2;
        } else if a.starts_with('-') {
            i += 1;
        } else {
            break;
        }
    }
    if i >= rest.len() {
        return std::iter::once(prog).chain(rest).collect();
    }
    let sub = rest.remove(i);
    let mut out = vec![prog, sub];
    out.extend(defaults);
    out.extend(rest);
    out
}

fn output(explicit: Option<PathBuf>, out_dir: Option<&Path>, name: String) -> Result<PathBuf, Failure> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    let dir = out_dir.unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Failure::io(dir, e))?;
    Ok(dir.join(name))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::io(path, e))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out_dir = cli.out_dir.as_deref();
    let seed = cli.seed;
    match cli.command {
        Command::Shape {
            input,
            shaping,
            out,
            format,
        } => {
            let params = shaping.params()?;
            let (h0, in_format, meta) = read_rir(&input)?;
            let h1 = shape_rir(&h0, &params)?;
            let stem = input.file_stem().unwrap_or_default().to_string_lossy();
            let out = output(out, out_dir, format!("{stem}.{}.wav", params.strategy))?;
            let meta = RirMeta {
                shaping: Some(params),
                ..meta.unwrap_or_else(|| RirMeta::for_rir(&h1))
            };
            write_rir(&out, &h1, &meta, format.unwrap_or(in_format))?;
            println!("wrote={}", out.display());
        }
        Command::SynthRir {
            rt60,
            n_early,
            gap,
            length,
            tail_energy,
            out,
            format,
        } => {
            let mut p = PolackParams::new(rt60);
            p.n_early = n_early.unwrap_or(p.n_early);
            p.early_gap = gap.unwrap_or(p.early_gap);
            p.length = length.unwrap_or(p.length);
            p.tail_energy = tail_energy.unwrap_or(p.tail_energy);
            let seed = seed.unwrap_or(0);
            let h = synth_rir(&p, seed)?;
            let out = output(out, out_dir, format!("rir_rt{rt60}_s{seed}.wav"))?;
            let meta = RirMeta {
                nominal_rt60: Some(rt60),
                seed: Some(seed),
                ..RirMeta::for_rir(&h)
            };
            write_rir(&out, &h, &meta, format)?;
            println!("wrote={}", out.display());
        }
        Command::AnalyzeRir { input, boundary, edc } => {
            let (h, _, _) = read_rir(&input)?;
            let rt60 = match estimate_rt60(&h) {
                Ok(v) => v.to_string(),
                Err(rirshape::Error::UndefinedDecay(_)) => "undefined".into(),
                Err(e) => return Err(e.into()),
            };
            let d = drr(&h, boundary)?;
            print!(
                "{}",
                kv::format_lines([
                    ("samples", h.len().to_string()),
                    ("sample_rate", h.sample_rate().to_string()),
                    ("direct_index", h.direct_index().to_string()),
                    ("energy", h.energy().to_string()),
                    ("rt60", rt60),
                    ("drr_boundary", boundary.to_string()),
                    ("drr_db", if d.is_infinite() { "inf".into() } else { d.to_string() }),
                ])
            );
            if let Some(path) = edc {
                let curve = energy_decay_curve(&h)?;
                let mut s = String::from("t,level_db\n");
                for (t, l) in curve.times.iter().zip(&curve.levels) {
                    s.push_str(&format!("{t},{l}\n"));
                }
                write_file(&path, &s)?;
            }
        }
        Command::Gains {
            target,
            input,
            out,
            binary,
            enhanced,
            mode,
        } => {
            let (x, _) = read_wav(&target)?;
            let (y, _) = read_wav(&input)?;
            if x.sample_rate() != y.sample_rate() {
                return Err(rirshape::Error::RateMismatch(x.sample_rate(), y.sample_rate()).into());
            }
            let stft = Stft::for_rate(y.sample_rate())?;
            let mut fb = Filterbank::erb(stft.profile().fft_size, y.sample_rate())?;
            if mode == GainMode::Rectangular {
                fb = fb.rectangular();
            }
            let ys = stft.analyze(&y)?;
            let gains = ideal_gains(&band_energies(&stft.analyze(&x)?, &fb)?, &band_energies(&ys, &fb)?)?;
            let stem = input.file_stem().unwrap_or_default().to_string_lossy();
            let out = output(out, out_dir, format!("{stem}.gains.csv"))?;
            write_file(&out, &gains.to_csv(fb.band_centers()))?;
            println!("wrote={}", out.display());
            if let Some(path) = binary {
                gains.write_binary(&path, y.sample_rate(), stft.profile().hop)?;
                println!("wrote={}", path.display());
            }
            if let Some(path) = enhanced {
                let z = apply_gains(&ys, &gains.values, gains.n_frames, &fb, mode)?;
                let z = stft.synthesize(&z)?.truncated(y.len());
                write_signal(&path, &z, WavFormat::Float32)?;
                println!("wrote={}", path.display());
            }
        }
        Command::MakeDataset { manifest, workers } => {
            let mut m = DatasetManifest::from_file(&manifest)?;
            if let Some(s) = seed {
                m.global.seed = s;
            }
            let dir = out_dir.ok_or_else(|| {
                Failure::new("usage", format!("make-dataset needs --out-dir or {OUT_DIR_ENV}"))
            })?;
            let workers = workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let summary = build_dataset(&m, dir, workers)?;
            print!("{}", summary.to_text());
            for (id, reason) in summary.failures() {
                eprintln!("error: kind=entry id={id} message={}", one_line(reason));
            }
            if summary.failed() > 0 {
                return Err(Failure::new(
                    "entries-failed",
                    format!("{} of {} entries failed", summary.failed(), summary.total()),
                ));
            }
        }
        Command::Verify { input, shaping, csv } => {
            let params = shaping.params()?;
            let (h0, _, _) = read_rir(&input)?;
            let h1 = shape_rir(&h0, &params)?;
            let report = verify_shaping(&h0, &h1, &params)?;
            print!("{}", report.to_text());
            if let Some(path) = csv {
                let fresh = !path.exists();
                let mut f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&path)
                    .map_err(|e| Failure::io(&path, e))?;
                let mut s = String::new();
                if fresh {
                    s.push_str(ShapingReport::CSV_HEADER);
                    s.push('\n');
                }
                s.push_str(&report.to_csv_row());
                s.push('\n');
                f.write_all(s.as_bytes()).map_err(|e| Failure::io(&path, e))?;
            }
        }
        Command::PlotData {
            function,
            shaping,
            r0,
            duration,
            rate,
            out,
        } => {
            let csv = plot_data(function, &shaping, r0, duration, rate)?;
            match out {
                Some(path) => {
                    write_file(&path, &csv)?;
                    println!("wrote={}", path.display());
                }
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}

fn plot_data(function: PlotFunction, shaping: &ShapingArgs, r0: f64, duration: f64, rate: u32) -> Result<String, Failure> {
    let p = shaping.params()?;
    if !(duration > 0.0 && duration.is_finite()) || rate == 0 {
        return Err(Failure::new("param", "duration and rate must be positive"));
    }
    if !(r0 > 0.0 && r0.is_finite()) {
        return Err(Failure::new("param", format!("r0 must be positive, got {r0}")));
    }
    let rows = (duration * rate as f64).round() as usize;
    let mut s = String::new();
    let mut push = |header: &str, f: &dyn Fn(f64) -> Vec<f64>| {
        s.push_str(header);
        s.push('\n');
        for i in 0..=rows {
            let t = i as f64 / rate as f64;
            let vals: Vec<String> = f(t).iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{t},{}\n", vals.join(",")));
        }
    };
    match function {
        PlotFunction::D => push("t,d", &|t| vec![decay_function(t, &p)]),
        PlotFunction::A => push("t,a", &|t| vec![attenuation_function(t, &p)]),
        PlotFunction::ShapedTail => {
            let full = ShapingParams {
                strategy: Strategy::FullDereverb,
                alpha: 0.0,
                ..p
            };
            let decayed = ShapingParams {
                strategy: Strategy::DecayedDereverb,
                ..p
            };
            let att = ShapingParams {
                strategy: Strategy::AttenuatedDecayedDereverb,
                alpha: shaping.alpha.unwrap_or(rirshape::rir::DEFAULT_ALPHA),
                ..p
            };
            push("t,full,decayed,attenuated_decayed", &|t| {
                let env = 10f64.powf(-3.0 * t / r0);
                vec![env * full.gain_at(t), env * decayed.gain_at(t), env * att.gain_at(t)]
            })
        }
    }
    Ok(s)
}

mod common;

use std::path::Path;

use common::{ks_uniform, speech_like, white, FS};
use rirshape::pipeline::{GlobalConfig, SnrSpec};
use rirshape::wav::{write_signal, WavFormat};
use rirshape::*;

fn fixture(dir: &Path) {
    write_signal(&dir.join("s.wav"), &speech_like(0.6, 1), WavFormat::Float32).unwrap();
    write_signal(&dir.join("n.wav"), &white(0.3, 2, 0.1), WavFormat::Float32).unwrap();
}

#[test]
fn empty_manifest_gives_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let m = DatasetManifest::parse("empty", "# nothing\n", dir.path()).unwrap();
    let s = build_dataset(&m, &dir.path().join("out"), 2).unwrap();
    assert_eq!((s.total(), s.ok(), s.failed()), (0, 0, 0));
    assert!(dir.path().join("out/summary.txt").exists());
}

#[test]
fn broken_entry_is_reported_and_others_finish() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let text = "global seed=3\n\
                entry id=a speech=s.wav noise=n.wav rir_rt60=0.4 snr=10\n\
                entry id=b speech=missing.wav rir_rt60=0.4\n\
                entry id=c speech=s.wav rir_rt60=0.7 strategy=decayed\n";
    let m = DatasetManifest::parse("m", text, dir.path()).unwrap();
    let out = dir.path().join("out");
    let s = build_dataset(&m, &out, 3).unwrap();
    assert_eq!((s.total(), s.ok(), s.failed()), (3, 2, 1));
    let failures: Vec<_> = s.failures().collect();
    assert_eq!(failures[0].0, "b");
    assert!(failures[0].1.contains("missing.wav"), "{}", failures[0].1);
    for id in ["a", "c"] {
        for ext in ["input.wav", "target.wav", "gains.csv", "meta.txt"] {
            assert!(out.join(format!("{id}.{ext}")).exists());
        }
    }
    assert!(!out.join("b.input.wav").exists());
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("b,failed")));
}

#[test]
fn sampled_snrs_are_uniform_and_reproducible() {
    let m = DatasetManifest::parse("m", "global seed=11 snr_min=0 snr_max=30 p_noise_free=0\n", Path::new(".")).unwrap();
    let g: GlobalConfig = m.global;
    let snrs: Vec<f64> = (0..1000).map(|i| sample_entry_randomness(g.seed, i, &g).snr_db).collect();
    assert!(snrs.iter().all(|s| (0.0..=30.0).contains(s)));
    let (d, p) = ks_uniform(&snrs, 0.0, 30.0);
    assert!(p > 0.01, "KS D={d} p={p}");
    let again: Vec<f64> = (0..1000).map(|i| sample_entry_randomness(g.seed, i, &g).snr_db).collect();
    assert_eq!(snrs, again);
    // entry draws do not depend on how many entries precede them
    assert_eq!(sample_entry_randomness(11, 500, &g), sample_entry_randomness(11, 500, &g));
    assert_ne!(sample_entry_randomness(11, 0, &g), sample_entry_randomness(12, 0, &g));
}

#[test]
fn noise_free_probability_is_respected() {
    let g = GlobalConfig {
        p_noise_free: 0.2,
        ..GlobalConfig::default()
    };
    let n = (0..5000).filter(|&i| sample_entry_randomness(1, i, &g).noise_free).count();
    assert!((n as f64 / 5000.0 - 0.2).abs() < 0.03, "{n}");
    let never = GlobalConfig {
        p_noise_free: 0.0,
        ..g
    };
    assert!((0..500).all(|i| !sample_entry_randomness(1, i, &never).noise_free));
}

#[test]
fn manifest_parses_sources_and_defaults() {
    let text = "entry speech=a.wav rir=r.wav\nentry id=x speech=/abs/b.wav noise=n.wav rir_rt60=0.5 rir_n_early=0 snr=12.5 strategy=full alpha=0.2\n";
    let m = DatasetManifest::parse("m", text, Path::new("/base")).unwrap();
    assert_eq!(m.entries[0].id, "entry00000");
    assert_eq!(m.entries[0].speech, Path::new("/base/a.wav"));
    assert_eq!(m.entries[0].snr, SnrSpec::Sample);
    assert_eq!(m.entries[0].shaping.strategy, Strategy::AttenuatedDecayedDereverb);
    assert_eq!(m.entries[1].speech, Path::new("/abs/b.wav"));
    assert_eq!(m.entries[1].snr, SnrSpec::Fixed(12.5));
    assert_eq!(m.entries[1].shaping.alpha, 0.2);
    assert!(DatasetManifest::parse("m", "entry speech=a.wav\n", Path::new(".")).is_err());
    assert!(DatasetManifest::parse("m", "entry speech=a.wav rir=r.wav bogus=1\n", Path::new(".")).is_err());
    assert!(DatasetManifest::parse("m", "entry id=a speech=a rir=r\nentry id=a speech=b rir=r\n", Path::new(".")).is_err());
}

#[test]
fn generated_example_lines_up() {
    let speech = speech_like(1.0, 4);
    let noise = white(2.0, 5, 0.05);
    let h0 = synth_rir(&PolackParams::new(0.6), 9).unwrap();
    let p = ShapingParams::new(Strategy::AttenuatedDecayedDereverb);
    let ex = generate_example(&speech, Some(&noise), &h0, &p, Some(5.0), 1).unwrap();
    let keep = speech.len() + FS as usize / 2;
    assert_eq!(ex.input.len(), keep);
    assert_eq!(ex.target.len(), keep);
    assert_eq!(ex.gains.n_frames, FrameProfile::for_rate(FS).unwrap().n_frames(keep));
    assert!(ex.gains.values.iter().all(|g| (0.0..=1.0).contains(g)));
    assert!(ex.target.energy() < ex.input.energy());
    let r1 = ex.meta.r1_estimated.unwrap();
    assert!(r1 < ex.meta.r0_estimated.unwrap());

    // same inputs, same bits
    let again = generate_example(&speech, Some(&noise), &h0, &p, Some(5.0), 1).unwrap();
    assert_eq!(ex.input, again.input);
    assert_eq!(ex.gains, again.gains);

    assert!(matches!(
        generate_example(&speech, None, &h0, &p, Some(5.0), 1),
        Err(Error::MissingNoise)
    ));
    let slow = Signal::new(vec![0.1; 1000], 16_000).unwrap();
    assert!(matches!(
        generate_example(&slow, None, &h0, &p, None, 1),
        Err(Error::RateMismatch(..))
    ));
}

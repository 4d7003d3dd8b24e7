#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rirshape::Signal;

pub const FS: u32 = 48_000;

/// Voiced-speech stand-in: harmonic series on a random pitch with a
/// syllable-rate amplitude envelope and a little breath noise.
pub fn speech_like(seconds: f64, seed: u64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.random_range(90.0..250.0);
    let syllable = rng.random_range(3.0..6.0);
    let n = (seconds * FS as f64) as usize;
    let amps: Vec<f64> = (1..=20).map(|k| rng.random_range(0.2..1.0) / k as f64).collect();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / FS as f64;
            let env = (0.5 - 0.5 * (2.0 * PI * syllable * t).cos()).powi(2);
            let voiced: f64 = amps
                .iter()
                .enumerate()
                .map(|(k, a)| a * (2.0 * PI * f0 * (k + 1) as f64 * t).sin())
                .sum();
            0.15 * env * voiced + 0.002 * rng.random_range(-1.0..1.0)
        })
        .collect();
    Signal::new(samples, FS).unwrap()
}

pub fn white(seconds: f64, seed: u64, scale: f64) -> Signal {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (seconds * FS as f64) as usize;
    Signal::new((0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect(), FS).unwrap()
}

pub fn random_vec(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn peak(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn rms(a: &[f64]) -> f64 {
    (a.iter().map(|x| x * x).sum::<f64>() / a.len() as f64).sqrt()
}

/// Kolmogorov-Smirnov statistic of `xs` against Uniform(lo, hi) and its
/// asymptotic p-value.
pub fn ks_uniform(xs: &[f64], lo: f64, hi: f64) -> (f64, f64) {
    let mut u: Vec<f64> = xs.iter().map(|x| (x - lo) / (hi - lo)).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).max((i + 1) as f64 / n - v))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        p += 2.0 * (-1f64).powf(j - 1.0) * (-2.0 * j * j * lambda * lambda).exp();
    }
    (d, p.clamp(0.0, 1.0))
}

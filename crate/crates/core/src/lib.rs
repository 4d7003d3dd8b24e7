//! Supervised dereverberation training data.
//!
//! Impulse responses are shaped with an exponential decay and a raised-cosine
//! attenuation to build progressively drier target rooms; reverberant noisy
//! inputs are paired with the shaped targets and with the ideal ERB-band
//! gains that map one onto the other.
//!
//! * [`dsp`]: waveforms, convolution, SNR mixing, short-time analysis.
//! * [`rir`]: impulse responses, shaping functions and target strategies.
//! * [`acoustics`]: decay curves, RT60 and DRR measurement.
//! * [`bands`]: ERB filterbank, band energies and ideal gains.
//! * [`pipeline`]: manifest-driven dataset generation.

pub mod acoustics;
pub mod bands;
pub mod dsp;
pub mod error;
pub mod kv;
pub mod pipeline;
pub mod rir;
pub mod wav;

pub use acoustics::{drr, energy_decay_curve, estimate_rt60, verify_shaping, DecayCurve, ShapingReport};
pub use bands::{
    apply_gains, band_energies, design_erb_filterbank, ideal_gains, BandMatrix, BandRole, Filterbank, GainMode,
};
pub use dsp::{analyze, convolve, mix_at_snr, synthesize, FrameProfile, FrameSpectra, Signal, Stft, SAMPLE_RATE};
pub use error::{Error, Result};
pub use pipeline::{build_dataset, generate_example, sample_entry_randomness, DatasetManifest, Example};
pub use rir::{
    attenuation_function, decay_function, predicted_target_distance, predicted_target_rt60, shape_rir, synth_rir,
    PolackParams, Rir, ShapingParams, Strategy,
};

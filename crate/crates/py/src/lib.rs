//! Python module `rirshape`.

use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rirshape::bands::{band_energies, ideal_gains, Filterbank};
use rirshape::dsp::{convolve_slices, mix_at_snr, Signal, Stft};
use rirshape::pipeline::{build_dataset, generate_example, DatasetManifest};
use rirshape::{acoustics, rir};

create_exception!(rirshape, RirShapeError, PyValueError);

fn err(e: rirshape::Error) -> PyErr {
    RirShapeError::new_err(format!("{}: {e}", e.kind()))
}

trait OrRaise<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> OrRaise<T> for rirshape::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(err)
    }
}

/// Shaping strategy and constants. Times in seconds.
#[pyclass(name = "ShapingParams", from_py_object)]
#[derive(Clone)]
struct PyShapingParams {
    inner: rir::ShapingParams,
}

#[pymethods]
impl PyShapingParams {
    #[new]
    #[pyo3(signature = (strategy="attenuated-decayed", t0=None, t1=None, alpha=None, rd=None))]
    fn new(strategy: &str, t0: Option<f64>, t1: Option<f64>, alpha: Option<f64>, rd: Option<f64>) -> PyResult<Self> {
        let mut p = rir::ShapingParams::new(strategy.parse().py()?);
        p.t0 = t0.unwrap_or(p.t0);
        p.t1 = t1.unwrap_or(p.t1);
        p.alpha = alpha.unwrap_or(p.alpha);
        p.rd = rd.unwrap_or(p.rd);
        p.validate().py()?;
        Ok(PyShapingParams { inner: p })
    }

    #[getter]
    fn strategy(&self) -> &'static str {
        self.inner.strategy.name()
    }
    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0
    }
    #[getter]
    fn t1(&self) -> f64 {
        self.inner.t1
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }
    #[getter]
    fn rd(&self) -> f64 {
        self.inner.rd
    }

    /// Combined shaping gain at time `t` after the direct path.
    fn gain_at(&self, t: f64) -> f64 {
        self.inner.gain_at(t)
    }

    fn decay(&self, t: f64) -> f64 {
        rir::decay_function(t, &self.inner)
    }

    fn attenuation(&self, t: f64) -> f64 {
        rir::attenuation_function(t, &self.inner)
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "ShapingParams(strategy={:?}, t0={}, t1={}, alpha={}, rd={})",
            p.strategy.name(),
            p.t0,
            p.t1,
            p.alpha,
            p.rd
        )
    }
}

fn params_or_default(p: Option<PyShapingParams>) -> rir::ShapingParams {
    p.map(|p| p.inner).unwrap_or_default()
}

/// Impulse response with a marked direct path.
#[pyclass(name = "Rir", from_py_object)]
#[derive(Clone)]
struct PyRir {
    inner: rir::Rir,
}

#[pymethods]
impl PyRir {
    /// `direct_index` defaults to the peak tap.
    #[new]
    #[pyo3(signature = (taps, sample_rate=48000, direct_index=None))]
    fn new(taps: Vec<f64>, sample_rate: u32, direct_index: Option<usize>) -> PyResult<Self> {
        let inner = match direct_index {
            Some(i) => rir::Rir::new(taps, sample_rate, i),
            None => rir::Rir::from_taps(taps, sample_rate),
        }
        .py()?;
        Ok(PyRir { inner })
    }

    /// Stochastic room with the given reverberation time.
    #[staticmethod]
    #[pyo3(signature = (rt60, seed=0, n_early=None, length=None))]
    fn synth(rt60: f64, seed: u64, n_early: Option<usize>, length: Option<f64>) -> PyResult<Self> {
        let mut p = rir::PolackParams::new(rt60);
        p.n_early = n_early.unwrap_or(p.n_early);
        p.length = length.unwrap_or(p.length);
        Ok(PyRir {
            inner: rir::synth_rir(&p, seed).py()?,
        })
    }

    #[getter]
    fn taps(&self) -> Vec<f64> {
        self.inner.taps().to_vec()
    }
    #[getter]
    fn sample_rate(&self) -> u32 {
        self.inner.sample_rate()
    }
    #[getter]
    fn direct_index(&self) -> usize {
        self.inner.direct_index()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn energy(&self) -> f64 {
        self.inner.energy()
    }

    #[pyo3(signature = (params=None))]
    fn shape(&self, params: Option<PyShapingParams>) -> PyResult<PyRir> {
        Ok(PyRir {
            inner: rir::shape_rir(&self.inner, &params_or_default(params)).py()?,
        })
    }

    fn rt60(&self) -> PyResult<f64> {
        acoustics::estimate_rt60(&self.inner).py()
    }

    /// Direct-to-reverberant ratio in dB; `inf` without late energy.
    #[pyo3(signature = (boundary=rir::DEFAULT_T1))]
    fn drr(&self, boundary: f64) -> PyResult<f64> {
        acoustics::drr(&self.inner, boundary).py()
    }

    /// `(times, levels_db)` of the Schroeder decay curve.
    fn decay_curve(&self) -> PyResult<(Vec<f64>, Vec<f64>)> {
        let c = acoustics::energy_decay_curve(&self.inner).py()?;
        Ok((c.times, c.levels))
    }
}

#[pyfunction]
fn predicted_target_rt60(r0: f64, rd: f64) -> PyResult<f64> {
    rir::predicted_target_rt60(r0, rd).py()
}

#[pyfunction]
fn predicted_target_distance(d0: f64, alpha: f64) -> PyResult<f64> {
    rir::predicted_target_distance(d0, alpha).py()
}

/// Measured vs predicted target reverberation as a dict.
#[pyfunction]
#[pyo3(signature = (h0, params=None))]
fn verify_shaping<'py>(py: Python<'py>, h0: &PyRir, params: Option<PyShapingParams>) -> PyResult<Bound<'py, PyDict>> {
    let p = params_or_default(params);
    let h1 = rir::shape_rir(&h0.inner, &p).py()?;
    let r = acoustics::verify_shaping(&h0.inner, &h1, &p).py()?;
    let d = PyDict::new(py);
    d.set_item("strategy", r.strategy.name())?;
    d.set_item("r0_estimated", r.r0_estimated)?;
    d.set_item("r1_estimated", r.r1_estimated)?;
    d.set_item("r1_predicted", r.r1_predicted)?;
    d.set_item("relative_deviation", r.relative_deviation)?;
    d.set_item("drr_boundary", r.drr_boundary)?;
    d.set_item("drr_before", r.drr_before)?;
    d.set_item("drr_after", r.drr_after)?;
    Ok(d)
}

#[pyfunction]
fn convolve(x: Vec<f64>, h: Vec<f64>) -> Vec<f64> {
    convolve_slices(&x, &h)
}

/// Returns `(mixture, noise_gain)`.
#[pyfunction]
#[pyo3(signature = (speech, noise, snr_db, seed=0, sample_rate=48000))]
fn mix(speech: Vec<f64>, noise: Vec<f64>, snr_db: f64, seed: u64, sample_rate: u32) -> PyResult<(Vec<f64>, f64)> {
    let s = Signal::new(speech, sample_rate).py()?;
    let n = Signal::new(noise, sample_rate).py()?;
    let (m, g) = mix_at_snr(&s, &n, snr_db, seed).py()?;
    Ok((m.into_samples(), g))
}

fn energies(stft: &Stft, fb: &Filterbank, x: Vec<f64>, sr: u32) -> PyResult<rirshape::BandMatrix> {
    band_energies(&stft.analyze(&Signal::new(x, sr).py()?).py()?, fb).py()
}

fn rows(m: &rirshape::BandMatrix) -> Vec<Vec<f64>> {
    (0..m.n_frames).map(|f| m.row(f).to_vec()).collect()
}

/// Per-frame ERB band energies.
#[pyfunction]
#[pyo3(signature = (x, sample_rate=48000))]
fn erb_band_energies(x: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let stft = Stft::for_rate(sample_rate).py()?;
    let fb = Filterbank::erb(stft.profile().fft_size, sample_rate).py()?;
    Ok(rows(&energies(&stft, &fb, x, sample_rate)?))
}

/// Per-frame ideal band gains from `noisy` to `target`.
#[pyfunction]
#[pyo3(signature = (target, noisy, sample_rate=48000))]
fn ideal_band_gains(target: Vec<f64>, noisy: Vec<f64>, sample_rate: u32) -> PyResult<Vec<Vec<f64>>> {
    let stft = Stft::for_rate(sample_rate).py()?;
    let fb = Filterbank::erb(stft.profile().fft_size, sample_rate).py()?;
    let x = energies(&stft, &fb, target, sample_rate)?;
    let y = energies(&stft, &fb, noisy, sample_rate)?;
    Ok(rows(&ideal_gains(&x, &y).py()?))
}

/// One training example as a dict with `input`, `target`, `gains`.
#[pyfunction]
#[pyo3(signature = (speech, h0, params=None, noise=None, snr_db=None, seed=0))]
fn make_example<'py>(
    py: Python<'py>,
    speech: Vec<f64>,
    h0: &PyRir,
    params: Option<PyShapingParams>,
    noise: Option<Vec<f64>>,
    snr_db: Option<f64>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let sr = h0.inner.sample_rate();
    let s = Signal::new(speech, sr).py()?;
    let n = noise.map(|n| Signal::new(n, sr)).transpose().py()?;
    let ex = generate_example(&s, n.as_ref(), &h0.inner, &params_or_default(params), snr_db, seed).py()?;
    let d = PyDict::new(py);
    d.set_item("gains", rows(&ex.gains))?;
    d.set_item("input", ex.input.into_samples())?;
    d.set_item("target", ex.target.into_samples())?;
    d.set_item("r0_estimated", ex.meta.r0_estimated)?;
    d.set_item("r1_estimated", ex.meta.r1_estimated)?;
    Ok(d)
}

/// Builds a manifest into `out_dir`; returns `(ok, failed)`.
#[pyfunction]
#[pyo3(signature = (manifest, out_dir, workers=1))]
fn make_dataset(py: Python<'_>, manifest: PathBuf, out_dir: PathBuf, workers: usize) -> PyResult<(usize, usize)> {
    let m = DatasetManifest::from_file(&manifest).py()?;
    let s = py.detach(|| build_dataset(&m, &out_dir, workers)).py()?;
    Ok((s.ok(), s.failed()))
}

#[pymodule]
#[pyo3(name = "rirshape")]
fn py_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("RirShapeError", m.py().get_type::<RirShapeError>())?;
    m.add("STRATEGIES", rir::Strategy::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    m.add_class::<PyShapingParams>()?;
    m.add_class::<PyRir>()?;
    m.add_function(wrap_pyfunction!(predicted_target_rt60, m)?)?;
    m.add_function(wrap_pyfunction!(predicted_target_distance, m)?)?;
    m.add_function(wrap_pyfunction!(verify_shaping, m)?)?;
    m.add_function(wrap_pyfunction!(convolve, m)?)?;
    m.add_function(wrap_pyfunction!(mix, m)?)?;
    m.add_function(wrap_pyfunction!(erb_band_energies, m)?)?;
    m.add_function(wrap_pyfunction!(ideal_band_gains, m)?)?;
    m.add_function(wrap_pyfunction!(make_example, m)?)?;
    m.add_function(wrap_pyfunction!(make_dataset, m)?)?;
    Ok(())
}

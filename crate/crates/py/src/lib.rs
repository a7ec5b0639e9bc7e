//! Python bindings: tensors, the super-resolution model, the degradation
//! pipeline and the quality metrics. Mirrors the Rust API closely; data
//! crosses the boundary as plain lists of floats.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ddcn_core::model::{forward, init_params, ModelConfig as CoreConfig, ModelParams};
use ddcn_core::train::{load_checkpoint, save_checkpoint};
use ddcn_core::video::FrameSequence;
use ddcn_core::{metrics, ops, parallel, video, Tensor as CoreTensor};

fn to_py(e: ddcn_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Dense row-major f64 tensor.
#[pyclass(name = "Tensor", skip_from_py_object)]
#[derive(Clone)]
pub struct Tensor {
    inner: CoreTensor,
}

#[pymethods]
impl Tensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Tensor> {
        Ok(Tensor { inner: CoreTensor::from_vec(shape, data).map_err(to_py)? })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> Tensor {
        Tensor { inner: CoreTensor::zeros(&shape) }
    }

    #[staticmethod]
    fn full(shape: Vec<usize>, value: f64) -> Tensor {
        Tensor { inner: CoreTensor::full(&shape, value) }
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    #[getter]
    fn numel(&self) -> usize {
        self.inner.numel()
    }

    /// Flat row-major copy of the values.
    fn tolist(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn get(&self, index: Vec<usize>) -> PyResult<f64> {
        let shape = self.inner.shape();
        if index.len() != shape.len() || index.iter().zip(shape).any(|(i, s)| i >= s) {
            return Err(PyValueError::new_err(format!(
                "index {index:?} out of range for shape {shape:?}"
            )));
        }
        Ok(self.inner.get(&index))
    }

    fn item(&self) -> PyResult<f64> {
        if self.inner.numel() != 1 {
            return Err(PyValueError::new_err(format!(
                "item() needs a single-element tensor, shape is {:?}",
                self.inner.shape()
            )));
        }
        Ok(self.inner.item())
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }

    fn __len__(&self) -> usize {
        self.inner.numel()
    }
}

/// Architecture hyperparameters; defaults match the full-size network.
#[pyclass(name = "ModelConfig", skip_from_py_object)]
#[derive(Clone)]
pub struct ModelConfig {
    inner: CoreConfig,
}

#[pymethods]
impl ModelConfig {
    #[new]
    #[pyo3(signature = (
        t = 2,
        base_channels = 64,
        inner_growth = 16,
        outer_growth = 64,
        inner_units = 4,
        outer_blocks_3d = 3,
        outer_blocks_2d = 3,
        scale = 4,
        attention_in_extraction = true,
        attention_in_fusion = true,
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        t: usize,
        base_channels: usize,
        inner_growth: usize,
        outer_growth: usize,
        inner_units: usize,
        outer_blocks_3d: usize,
        outer_blocks_2d: usize,
        scale: usize,
        attention_in_extraction: bool,
        attention_in_fusion: bool,
    ) -> PyResult<ModelConfig> {
        let inner = CoreConfig {
            t,
            base_channels,
            inner_growth,
            outer_growth,
            inner_units,
            outer_blocks_3d,
            outer_blocks_2d,
            scale,
            attention_in_extraction,
            attention_in_fusion,
        };
        inner.validate().map_err(to_py)?;
        Ok(ModelConfig { inner })
    }

    #[getter]
    fn t(&self) -> usize {
        self.inner.t
    }

    #[getter]
    fn base_channels(&self) -> usize {
        self.inner.base_channels
    }

    #[getter]
    fn inner_growth(&self) -> usize {
        self.inner.inner_growth
    }

    #[getter]
    fn outer_growth(&self) -> usize {
        self.inner.outer_growth
    }

    #[getter]
    fn inner_units(&self) -> usize {
        self.inner.inner_units
    }

    #[getter]
    fn outer_blocks_3d(&self) -> usize {
        self.inner.outer_blocks_3d
    }

    #[getter]
    fn outer_blocks_2d(&self) -> usize {
        self.inner.outer_blocks_2d
    }

    #[getter]
    fn scale(&self) -> usize {
        self.inner.scale
    }

    #[getter]
    fn attention_in_extraction(&self) -> bool {
        self.inner.attention_in_extraction
    }

    #[getter]
    fn attention_in_fusion(&self) -> bool {
        self.inner.attention_in_fusion
    }

    /// Input window length 2T+1.
    fn frames(&self) -> usize {
        self.inner.frames()
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelConfig(t={}, base_channels={}, frames={})",
            self.inner.t,
            self.inner.base_channels,
            self.inner.frames()
        )
    }
}

/// A parameter set bound to its architecture; the unit that checkpoints
/// store and inference runs on.
#[pyclass(name = "Model")]
pub struct Model {
    params: ModelParams,
    config: CoreConfig,
    #[pyo3(get)]
    epoch: u32,
}

fn collect_frames(py: Python<'_>, frames: Vec<Py<Tensor>>) -> PyResult<FrameSequence> {
    let tensors: Vec<CoreTensor> =
        frames.iter().map(|f| f.borrow(py).inner.clone()).collect();
    FrameSequence::new(tensors).map_err(to_py)
}

#[pymethods]
impl Model {
    /// Fresh seeded initialization.
    #[staticmethod]
    fn init(config: PyRef<'_, ModelConfig>, seed: u64) -> PyResult<Model> {
        let params = init_params(&config.inner, seed).map_err(to_py)?;
        Ok(Model { params, config: config.inner, epoch: 0 })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Model> {
        let ckpt = load_checkpoint(&path).map_err(to_py)?;
        Ok(Model { params: ckpt.params, config: ckpt.config, epoch: ckpt.epoch })
    }

    /// Write a checkpoint (without optimizer state).
    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.params, &self.config, None, self.epoch, &path).map_err(to_py)
    }

    #[getter]
    fn config(&self) -> ModelConfig {
        ModelConfig { inner: self.config }
    }

    fn parameter_names(&self) -> Vec<String> {
        self.params.names().cloned().collect()
    }

    fn parameter(&self, name: &str) -> PyResult<Tensor> {
        Ok(Tensor { inner: self.params.get(name).map_err(to_py)?.clone() })
    }

    fn scalar_count(&self) -> usize {
        self.params.scalar_count()
    }

    /// Super-resolve the center frame of a 2T+1 window of [3,H,W] frames.
    fn forward(&self, py: Python<'_>, frames: Vec<Py<Tensor>>) -> PyResult<Tensor> {
        let seq = collect_frames(py, frames)?;
        Ok(Tensor { inner: forward(&seq, &self.params, &self.config).map_err(to_py)? })
    }

    fn __repr__(&self) -> String {
        format!(
            "Model(frames={}, parameters={}, epoch={})",
            self.config.frames(),
            self.params.scalar_count(),
            self.epoch
        )
    }
}

/// Keys cubic interpolation (a = -0.5) to `scale` times the spatial size.
#[pyfunction]
fn bicubic_resize(input: PyRef<'_, Tensor>, scale: f64) -> PyResult<Tensor> {
    Ok(Tensor { inner: ops::bicubic_resize(&input.inner, scale).map_err(to_py)? })
}

/// Separable Gaussian blur with reflect padding.
#[pyfunction]
fn gaussian_blur(input: PyRef<'_, Tensor>, sigma: f64) -> PyResult<Tensor> {
    Ok(Tensor { inner: ops::gaussian_blur(&input.inner, sigma).map_err(to_py)? })
}

/// Rearrange r^2 channel groups into an r-times larger spatial grid.
#[pyfunction]
fn pixel_shuffle(input: PyRef<'_, Tensor>, factor: usize) -> PyResult<Tensor> {
    Ok(Tensor { inner: ops::pixel_shuffle(&input.inner, factor).map_err(to_py)? })
}

/// BT.601 limited-range luma, [16,235] for [0,1] RGB.
#[pyfunction]
fn rgb_to_y(frame: PyRef<'_, Tensor>) -> PyResult<Tensor> {
    Ok(Tensor { inner: video::rgb_to_y(&frame.inner).map_err(to_py)? })
}

/// Y-channel PSNR in dB (identical inputs cap at 100).
#[pyfunction]
fn psnr_y(a: PyRef<'_, Tensor>, b: PyRef<'_, Tensor>) -> PyResult<f64> {
    metrics::psnr_y(&a.inner, &b.inner).map_err(to_py)
}

/// Single-scale Y-channel SSIM, 11x11 Gaussian windows.
#[pyfunction]
fn ssim_y(a: PyRef<'_, Tensor>, b: PyRef<'_, Tensor>) -> PyResult<f64> {
    metrics::ssim_y(&a.inner, &b.inner).map_err(to_py)
}

/// Blur-then-decimate every frame of an HR window.
#[pyfunction]
#[pyo3(signature = (frames, sigma = 1.6, scale = 4))]
fn degrade(
    py: Python<'_>,
    frames: Vec<Py<Tensor>>,
    sigma: f64,
    scale: usize,
) -> PyResult<Vec<Tensor>> {
    let seq = collect_frames(py, frames)?;
    let config = video::DegradationConfig { sigma, scale, crop: 64 * scale };
    let lr = video::degrade(&seq, &config).map_err(to_py)?;
    Ok(lr.frames().iter().map(|f| Tensor { inner: f.clone() }).collect())
}

/// Load a binary PPM as a [3,H,W] tensor in [0,1].
#[pyfunction]
fn load_frame(path: PathBuf) -> PyResult<Tensor> {
    Ok(Tensor { inner: video::load_frame(&path).map_err(to_py)? })
}

/// Save a [3,H,W] tensor in [0,1] as binary PPM.
#[pyfunction]
fn save_frame(frame: PyRef<'_, Tensor>, path: PathBuf) -> PyResult<()> {
    video::save_frame(&frame.inner, &path).map_err(to_py)
}

/// Worker threads for tensor kernels; 0 means all cores. Results are
/// bit-identical for any value.
#[pyfunction]
fn set_threads(threads: usize) {
    parallel::set_threads(threads);
}

#[pymodule]
fn ddcn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Tensor>()?;
    m.add_class::<ModelConfig>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(bicubic_resize, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_blur, m)?)?;
    m.add_function(wrap_pyfunction!(pixel_shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(rgb_to_y, m)?)?;
    m.add_function(wrap_pyfunction!(psnr_y, m)?)?;
    m.add_function(wrap_pyfunction!(ssim_y, m)?)?;
    m.add_function(wrap_pyfunction!(degrade, m)?)?;
    m.add_function(wrap_pyfunction!(load_frame, m)?)?;
    m.add_function(wrap_pyfunction!(save_frame, m)?)?;
    m.add_function(wrap_pyfunction!(set_threads, m)?)?;
    Ok(())
}

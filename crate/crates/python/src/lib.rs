//! Python bindings. Arrays cross the boundary as flat lists or little-endian
//! f64 bytes in storage order (first index fastest); indices are 1-based as
//! in the Rust API.

use lfbp_core::{self as core, Dims5, Dtype};
use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn to_py(e: core::Error) -> PyErr {
    let msg = format!("{}: {e}", e.kind_name());
    match e {
        core::Error::Io(_) => PyIOError::new_err(msg),
        core::Error::Index { .. } => PyIndexError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn dims5(d: (usize, usize, usize, usize, usize)) -> PyResult<Dims5> {
    Dims5::new(d.0, d.1, d.2, d.3, d.4).map_err(to_py)
}

fn dtype(name: &str) -> PyResult<Dtype> {
    match name {
        "f32" => Ok(Dtype::F32),
        "f64" => Ok(Dtype::F64),
        _ => Err(PyValueError::new_err(format!("dtype must be 'f32' or 'f64', got '{name}'"))),
    }
}

fn f64_bytes<'py>(py: Python<'py>, values: &[f64]) -> Bound<'py, PyBytes> {
    let raw: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    PyBytes::new(py, &raw)
}

fn from_f64_bytes(raw: &[u8]) -> PyResult<Vec<f64>> {
    if !raw.len().is_multiple_of(8) {
        return Err(PyValueError::new_err(format!("byte length {} is not a multiple of 8", raw.len())));
    }
    Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

fn check_index(i: usize, n: usize) -> PyResult<()> {
    if (1..=n).contains(&i) {
        Ok(())
    } else {
        Err(PyIndexError::new_err(format!("index {i} outside 1..={n}")))
    }
}

fn plane_rows(p: &core::Plane) -> Vec<Vec<f64>> {
    (1..=p.rows()).map(|i| (1..=p.cols()).map(|j| p.get(i, j)).collect()).collect()
}

macro_rules! lf_array_class {
    ($py_name:literal, $name:ident, $inner:ty, { $($extra:tt)* }) => {
        #[pyclass(name = $py_name, module = "lfbp")]
        pub struct $name {
            inner: $inner,
        }

        #[pymethods]
        impl $name {
            /// Array of `dims` from flat `data` in storage order, or filled
            /// with `fill` when `data` is omitted.
            #[new]
            #[pyo3(signature = (dims, data = None, fill = 0.0))]
            fn new(dims: (usize, usize, usize, usize, usize), data: Option<Vec<f64>>, fill: f64) -> PyResult<Self> {
                let d = dims5(dims)?;
                let inner = match data {
                    Some(v) => <$inner>::from_vec(d, v),
                    None => <$inner>::new(d, fill),
                }
                .map_err(to_py)?;
                Ok(Self { inner })
            }

            #[staticmethod]
            fn from_bytes(dims: (usize, usize, usize, usize, usize), raw: &[u8]) -> PyResult<Self> {
                let inner = <$inner>::from_vec(dims5(dims)?, from_f64_bytes(raw)?).map_err(to_py)?;
                Ok(Self { inner })
            }

            #[staticmethod]
            fn load(path: &str) -> PyResult<Self> {
                Ok(Self { inner: <$inner>::load(path).map_err(to_py)? })
            }

            #[pyo3(signature = (path, dtype = "f64"))]
            fn save(&self, path: &str, dtype: &str) -> PyResult<()> {
                self.inner.save(path, self::dtype(dtype)?).map_err(to_py)
            }

            #[getter]
            fn dims(&self) -> (usize, usize, usize, usize, usize) {
                let [a, b, c, d, e] = self.inner.dims().to_array();
                (a, b, c, d, e)
            }

            fn get(&self, s: usize, t: usize, x: usize, y: usize, z: usize) -> PyResult<f64> {
                let d = self.inner.dims();
                for (i, n) in [(s, d.n_s()), (t, d.n_t()), (x, d.n_x()), (y, d.n_y()), (z, d.n_z())] {
                    check_index(i, n)?;
                }
                Ok(self.inner.get(s, t, x, y, z))
            }

            fn to_list(&self) -> Vec<f64> {
                self.inner.data().to_vec()
            }

            fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
                f64_bytes(py, self.inner.data())
            }

            fn plane_total(&self, z: usize) -> PyResult<f64> {
                self.inner.plane_total(z).map_err(to_py)
            }

            fn __len__(&self) -> usize {
                self.inner.data().len()
            }

            fn __eq__(&self, other: &Self) -> bool {
                self.inner == other.inner
            }

            fn __repr__(&self) -> String {
                format!("{}(dims={})", $py_name, self.inner.dims())
            }

            $($extra)*
        }
    };
}

lf_array_class!("PsfArray", PyPsfArray, core::PsfArray, {
    /// Row lists of the summed forward plane, indexed `[s - 1][t - 1]`.
    fn sum_forward_plane(&self, z: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(plane_rows(&self.inner.sum_forward_plane(z).map_err(to_py)?))
    }
});

lf_array_class!("BackprojArray", PyBackprojArray, core::BackprojArray, {
    fn sum_backward_plane(&self, z: usize) -> PyResult<Vec<Vec<f64>>> {
        Ok(plane_rows(&self.inner.sum_backward_plane(z).map_err(to_py)?))
    }
});

#[pyclass(name = "Volume", module = "lfbp")]
pub struct PyVolume {
    inner: core::Volume,
}

#[pymethods]
impl PyVolume {
    #[new]
    #[pyo3(signature = (n_x, n_y, n_z, data = None))]
    fn new(n_x: usize, n_y: usize, n_z: usize, data: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match data {
            Some(v) => core::Volume::from_vec(n_x, n_y, n_z, v).map_err(to_py)?,
            None => core::Volume::zeros(n_x, n_y, n_z),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: core::Volume::load(path).map_err(to_py)? })
    }

    #[pyo3(signature = (path, dtype = "f64"))]
    fn save(&self, path: &str, dtype: &str) -> PyResult<()> {
        self.inner.save(path, self::dtype(dtype)?).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize, usize) {
        let [a, b, c] = self.inner.shape();
        (a, b, c)
    }

    fn get(&self, x: usize, y: usize, z: usize) -> PyResult<f64> {
        let [n_x, n_y, n_z] = self.inner.shape();
        check_index(x, n_x)?;
        check_index(y, n_y)?;
        check_index(z, n_z)?;
        Ok(self.inner.get(x, y, z))
    }

    fn set(&mut self, x: usize, y: usize, z: usize, value: f64) -> PyResult<()> {
        let [n_x, n_y, n_z] = self.inner.shape();
        check_index(x, n_x)?;
        check_index(y, n_y)?;
        check_index(z, n_z)?;
        self.inner.set(x, y, z, value);
        Ok(())
    }

    /// 1-based coordinates of the largest value.
    fn argmax(&self) -> (usize, usize, usize) {
        let data = self.inner.data();
        let best = (0..data.len()).max_by(|&a, &b| data[a].total_cmp(&data[b])).unwrap_or(0);
        self.inner.coords(best)
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        f64_bytes(py, self.inner.data())
    }

    fn __repr__(&self) -> String {
        format!("Volume(shape={:?})", self.inner.shape())
    }
}

#[pyclass(name = "Image", module = "lfbp")]
pub struct PyImage {
    inner: core::Image,
}

#[pymethods]
impl PyImage {
    #[new]
    #[pyo3(signature = (n_s, n_t, data = None))]
    fn new(n_s: usize, n_t: usize, data: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = match data {
            Some(v) => core::Image::from_vec(n_s, n_t, v).map_err(to_py)?,
            None => core::Image::zeros(n_s, n_t),
        };
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: core::Image::load(path).map_err(to_py)? })
    }

    #[pyo3(signature = (path, dtype = "f64"))]
    fn save(&self, path: &str, dtype: &str) -> PyResult<()> {
        self.inner.save(path, self::dtype(dtype)?).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        let [a, b] = self.inner.shape();
        (a, b)
    }

    fn get(&self, s: usize, t: usize) -> PyResult<f64> {
        let [n_s, n_t] = self.inner.shape();
        check_index(s, n_s)?;
        check_index(t, n_t)?;
        Ok(self.inner.get(s, t))
    }

    fn set(&mut self, s: usize, t: usize, value: f64) -> PyResult<()> {
        let [n_s, n_t] = self.inner.shape();
        check_index(s, n_s)?;
        check_index(t, n_t)?;
        self.inner.set(s, t, value);
        Ok(())
    }

    fn to_list(&self) -> Vec<f64> {
        self.inner.data().to_vec()
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        f64_bytes(py, self.inner.data())
    }

    fn __repr__(&self) -> String {
        format!("Image(shape={:?})", self.inner.shape())
    }
}

#[pyfunction]
fn compute_backprojection(h: &PyPsfArray) -> PyBackprojArray {
    PyBackprojArray { inner: core::compute_backprojection(&h.inner) }
}

#[pyfunction]
fn compute_psf_from_backprojection(ht: &PyBackprojArray) -> PyResult<PyPsfArray> {
    Ok(PyPsfArray { inner: core::compute_psf_from_backprojection(&ht.inner).map_err(to_py)? })
}

#[pyfunction]
fn oracle_backprojection(h: &PyPsfArray) -> PyBackprojArray {
    PyBackprojArray { inner: core::oracle_backprojection(&h.inner) }
}

#[pyfunction]
#[pyo3(signature = (dims, density = 0.5, seed = 0))]
fn random_psf(dims: (usize, usize, usize, usize, usize), density: f64, seed: u64) -> PyResult<PyPsfArray> {
    Ok(PyPsfArray { inner: core::random_psf(dims5(dims)?, density, seed).map_err(to_py)? })
}

/// Elementary cell `(n_x, n_y)` of a lenslet layout.
#[pyfunction]
fn layout_cell(layout: &str, pitch: f64) -> PyResult<(usize, usize)> {
    let kind: core::LayoutKind = layout.parse().map_err(to_py)?;
    Ok(core::MlaLayout::new(kind, pitch).map_err(to_py)?.cell())
}

/// Synthetic PSF of shape `(n_s, n_t, n_x, n_y, n_z)` with the cell taken
/// from the layout. Optics keyword arguments override the defaults.
#[pyfunction]
#[pyo3(signature = (layout, pitch, n_s, n_t, n_z, native_plane = None, f_number = None, z_spacing = None, spot_sigma = None, parallax = None, parallax_per_plane = None))]
#[allow(clippy::too_many_arguments)]
fn synth_psf(
    layout: &str,
    pitch: f64,
    n_s: usize,
    n_t: usize,
    n_z: usize,
    native_plane: Option<f64>,
    f_number: Option<f64>,
    z_spacing: Option<f64>,
    spot_sigma: Option<f64>,
    parallax: Option<f64>,
    parallax_per_plane: Option<f64>,
) -> PyResult<PyPsfArray> {
    let kind: core::LayoutKind = layout.parse().map_err(to_py)?;
    let layout = core::MlaLayout::new(kind, pitch).map_err(to_py)?;
    let (n_x, n_y) = layout.cell();
    let d = core::Optics::default();
    let optics = core::Optics {
        native_plane: native_plane.unwrap_or(d.native_plane),
        f_number: f_number.unwrap_or(d.f_number),
        z_spacing: z_spacing.unwrap_or(d.z_spacing),
        spot_sigma: spot_sigma.unwrap_or(d.spot_sigma),
        parallax: parallax.unwrap_or(d.parallax),
        parallax_per_plane: parallax_per_plane.unwrap_or(d.parallax_per_plane),
        ..d
    };
    let dims = Dims5::new(n_s, n_t, n_x, n_y, n_z).map_err(to_py)?;
    Ok(PyPsfArray { inner: core::synth_psf(&layout, dims, &optics).map_err(to_py)? })
}

#[pyfunction]
fn forward_project(h: &PyPsfArray, g: &PyVolume) -> PyResult<PyImage> {
    Ok(PyImage { inner: core::forward_project(&h.inner, &g.inner).map_err(to_py)? })
}

#[pyfunction]
fn backproject_adjoint(h: &PyPsfArray, f: &PyImage) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: core::backproject_adjoint(&h.inner, &f.inner).map_err(to_py)? })
}

#[pyfunction]
fn backproject_via_ht(ht: &PyBackprojArray, f: &PyImage) -> PyResult<PyVolume> {
    Ok(PyVolume { inner: core::backproject_via_ht(&ht.inner, &f.inner).map_err(to_py)? })
}

/// Richardson-Lucy; returns the estimate and the reprojection MSE of every
/// iterate, starting with the initial one.
#[pyfunction]
#[pyo3(signature = (h, ht, f, iters = 20, eps = 1e-12))]
fn rl_run(h: &PyPsfArray, ht: &PyBackprojArray, f: &PyImage, iters: usize, eps: f64, py: Python<'_>) -> PyResult<(PyVolume, Vec<f64>)> {
    let opts = core::RlOptions { iters, eps, initial: None };
    let state = py.detach(|| core::rl_run(&h.inner, &ht.inner, &f.inner, &opts)).map_err(to_py)?;
    Ok((PyVolume { inner: state.estimate }, state.history))
}

/// Storage offset of a 1-based `(s, t, x, y, z)`.
#[pyfunction]
fn offset(dims: (usize, usize, usize, usize, usize), index: (usize, usize, usize, usize, usize)) -> PyResult<usize> {
    let d = dims5(dims)?;
    let (s, t, x, y, z) = index;
    for (i, n) in [(s, d.n_s()), (t, d.n_t()), (x, d.n_x()), (y, d.n_y()), (z, d.n_z())] {
        check_index(i, n)?;
    }
    Ok(d.offset(s, t, x, y, z))
}

#[pyfunction]
fn index_of(dims: (usize, usize, usize, usize, usize), offset: usize) -> PyResult<(usize, usize, usize, usize, usize)> {
    let [s, t, x, y, z] = dims5(dims)?.index_of(offset).map_err(to_py)?;
    Ok((s, t, x, y, z))
}

#[pymodule]
fn lfbp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPsfArray>()?;
    m.add_class::<PyBackprojArray>()?;
    m.add_class::<PyVolume>()?;
    m.add_class::<PyImage>()?;
    m.add_function(wrap_pyfunction!(compute_backprojection, m)?)?;
    m.add_function(wrap_pyfunction!(compute_psf_from_backprojection, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_backprojection, m)?)?;
    m.add_function(wrap_pyfunction!(random_psf, m)?)?;
    m.add_function(wrap_pyfunction!(layout_cell, m)?)?;
    m.add_function(wrap_pyfunction!(synth_psf, m)?)?;
    m.add_function(wrap_pyfunction!(forward_project, m)?)?;
    m.add_function(wrap_pyfunction!(backproject_adjoint, m)?)?;
    m.add_function(wrap_pyfunction!(backproject_via_ht, m)?)?;
    m.add_function(wrap_pyfunction!(rl_run, m)?)?;
    m.add_function(wrap_pyfunction!(offset, m)?)?;
    m.add_function(wrap_pyfunction!(index_of, m)?)?;
    Ok(())
}

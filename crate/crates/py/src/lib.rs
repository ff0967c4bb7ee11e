//! Python bindings. Images cross the boundary as `(width, height, channels,
//! bytes)` with interleaved 8-bit samples.

use ::mpijpeg as core;
use core::jpeg::{ChromaSubsampling, JpegConfig};
use core::mpi::{composite, render_novel_view, MpiManifest};
use core::train::Model;
use core::{Image, RelativePose};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

type Pixels<'py> = (usize, usize, usize, Bound<'py, PyBytes>);

fn to_py(e: core::Error) -> PyErr {
    match e {
        core::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn image(width: usize, height: usize, channels: usize, data: &[u8]) -> PyResult<Image> {
    Image::from_u8_interleaved(width, height, channels, data).map_err(to_py)
}

fn pixels<'py>(py: Python<'py>, img: &Image) -> Pixels<'py> {
    (
        img.width(),
        img.height(),
        img.channels(),
        PyBytes::new(py, &img.to_u8_interleaved()),
    )
}

fn jpeg_config(quality: u8, subsampling: &str) -> PyResult<JpegConfig> {
    let sub: ChromaSubsampling = subsampling.parse().map_err(to_py)?;
    let cfg = JpegConfig::new(quality, sub);
    cfg.validate().map_err(to_py)?;
    Ok(cfg)
}

/// Baseline JFIF bytes for an 8-bit image with 1 or 3 channels.
#[pyfunction]
#[pyo3(signature = (width, height, channels, data, quality = 90, subsampling = "420"))]
fn jpeg_encode<'py>(
    py: Python<'py>,
    width: usize,
    height: usize,
    channels: usize,
    data: &[u8],
    quality: u8,
    subsampling: &str,
) -> PyResult<Bound<'py, PyBytes>> {
    let img = image(width, height, channels, data)?;
    let bytes =
        core::jpeg::jpeg_encode(&img, &jpeg_config(quality, subsampling)?).map_err(to_py)?;
    Ok(PyBytes::new(py, &bytes))
}

#[pyfunction]
fn jpeg_decode<'py>(py: Python<'py>, data: &[u8]) -> PyResult<Pixels<'py>> {
    let img = core::jpeg::jpeg_decode(data).map_err(to_py)?;
    Ok(pixels(py, &img))
}

/// Over-composite of the planes described by a manifest.
#[pyfunction]
fn composite_manifest<'py>(py: Python<'py>, manifest: &str) -> PyResult<Pixels<'py>> {
    let (mpi, _) = MpiManifest::load(manifest).map_err(to_py)?;
    Ok(pixels(py, &composite(&mpi)))
}

/// Novel view at a translation and intrinsic XYZ Euler angles in degrees.
#[pyfunction]
#[pyo3(signature = (manifest, translation = (0.0, 0.0, 0.0), rotation_deg = (0.0, 0.0, 0.0)))]
fn render<'py>(
    py: Python<'py>,
    manifest: &str,
    translation: (f64, f64, f64),
    rotation_deg: (f64, f64, f64),
) -> PyResult<Pixels<'py>> {
    let (mpi, cam) = MpiManifest::load(manifest).map_err(to_py)?;
    let (tx, ty, tz) = translation;
    let (rx, ry, rz) = rotation_deg;
    let pose = RelativePose::from_euler_deg([tx, ty, tz], rx, ry, rz);
    Ok(pixels(
        py,
        &render_novel_view(&mpi, &pose, &cam).map_err(to_py)?,
    ))
}

/// PSNR in dB of two 8-bit images, capped for identical inputs.
#[pyfunction]
fn psnr(width: usize, height: usize, channels: usize, a: &[u8], b: &[u8]) -> PyResult<f64> {
    let (a, b) = (
        image(width, height, channels, a)?,
        image(width, height, channels, b)?,
    );
    core::metrics::psnr(&a, &b).map_err(to_py)
}

#[pyfunction]
fn ssim(width: usize, height: usize, channels: usize, a: &[u8], b: &[u8]) -> PyResult<f64> {
    let (a, b) = (
        image(width, height, channels, a)?,
        image(width, height, channels, b)?,
    );
    core::metrics::ssim(&a, &b).map_err(to_py)
}

/// Embeds the manifest's MPI and returns the JPEG bytes.
#[pyfunction]
#[pyo3(signature = (checkpoint, manifest, reference_png, quality = None))]
fn embed<'py>(
    py: Python<'py>,
    checkpoint: &str,
    manifest: &str,
    reference_png: &str,
    quality: Option<u8>,
) -> PyResult<Bound<'py, PyBytes>> {
    let model = Model::load(checkpoint).map_err(to_py)?;
    let (mpi, _) = MpiManifest::load(manifest).map_err(to_py)?;
    let reference = Image::load_png(reference_png)
        .and_then(|r| r.take_channels(3))
        .map_err(to_py)?;
    let mut cfg = model.jpeg;
    if let Some(q) = quality {
        cfg.quality = q;
        cfg.validate().map_err(to_py)?;
    }
    let out = model.embed(&mpi, &reference).map_err(to_py)?;
    let bytes = core::jpeg::jpeg_encode(&out, &cfg).map_err(to_py)?;
    Ok(PyBytes::new(py, &bytes))
}

/// Restores the planes hidden in JPEG bytes and writes them as a manifest
/// directory; returns the manifest path.
#[pyfunction]
fn restore(checkpoint: &str, jpeg: &[u8], out_dir: &str) -> PyResult<String> {
    let model = Model::load(checkpoint).map_err(to_py)?;
    let img = core::jpeg::jpeg_decode(jpeg).map_err(to_py)?;
    let mpi = model.restore(&img).map_err(to_py)?;
    let cam = core::CameraModel::default_for(mpi.width(), mpi.height());
    let path = core::mpi::save_mpi(out_dir, &mpi, &cam).map_err(to_py)?;
    Ok(path.to_string_lossy().into_owned())
}

#[pymodule]
#[pyo3(name = "mpijpeg")]
fn mpijpeg_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NUM_PLANES", core::NUM_PLANES)?;
    m.add("EMBEDDING_BITS_PER_PIXEL", core::EMBEDDING_BITS_PER_PIXEL)?;
    m.add_function(wrap_pyfunction!(jpeg_encode, m)?)?;
    m.add_function(wrap_pyfunction!(jpeg_decode, m)?)?;
    m.add_function(wrap_pyfunction!(composite_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(restore, m)?)?;
    Ok(())
}

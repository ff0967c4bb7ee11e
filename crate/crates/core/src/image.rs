//! Planar floating point images.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use mpijpeg_tensor::{Scalar, Tensor};

use crate::error::{Error, Result};

/// An `H x W x C` image with values nominally in `[0, 1]`.
///
/// Samples are stored channel-planar (`C` planes of `H x W`, row-major),
/// which is the layout the networks consume.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::shape(format!(
                "empty image {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "image buffer has {} samples, expected {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        Image::new(
            width,
            height,
            channels,
            vec![value; width * height * channels],
        )
        .expect("non-empty image")
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, c));
                }
            }
        }
        Image::new(width, height, channels, data).expect("non-empty image")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.dims() == other.dims()
    }

    pub fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Sub-image `[x0, x0 + w) x [y0, y0 + h)`.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if w == 0 || h == 0 || x0 + w > self.width || y0 + h > self.height {
            return Err(Error::shape(format!(
                "crop {w}x{h}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Ok(Image::from_fn(w, h, self.channels, |x, y, c| {
            self.get(x0 + x, y0 + y, c)
        }))
    }

    pub fn flip_horizontal(&self) -> Image {
        Image::from_fn(self.width, self.height, self.channels, |x, y, c| {
            self.get(self.width - 1 - x, y, c)
        })
    }

    pub fn clamp01(mut self) -> Image {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        self
    }

    /// Keeps only the first `channels` channels.
    pub fn take_channels(&self, channels: usize) -> Result<Image> {
        if channels > self.channels {
            return Err(Error::shape(format!(
                "image has {} channels, asked for {channels}",
                self.channels
            )));
        }
        let n = self.width * self.height;
        Image::new(
            self.width,
            self.height,
            channels,
            self.data[..channels * n].to_vec(),
        )
    }

    /// `1 x C x H x W` tensor.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::from_vec(
            self.data
                .iter()
                .map(|&v| T::from_f64_lossy(v as f64))
                .collect(),
            &[1, self.channels, self.height, self.width],
        )
    }

    /// Stacks same-shaped images into an `N x C x H x W` tensor.
    pub fn batch_to_tensor<T: Scalar>(images: &[&Image]) -> Result<Tensor<T>> {
        let first = images
            .first()
            .ok_or_else(|| Error::shape("empty image batch"))?;
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for im in images {
            first.ensure_same_shape(im, "image batch")?;
            data.extend(im.data.iter().map(|&v| T::from_f64_lossy(v as f64)));
        }
        Ok(Tensor::from_vec(
            data,
            &[images.len(), first.channels, first.height, first.width],
        ))
    }

    /// Image `index` of an `N x C x H x W` tensor.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, index: usize) -> Result<Image> {
        let [n, c, h, w] = *t.shape() else {
            return Err(Error::shape(format!(
                "expected NCHW tensor, got {:?}",
                t.shape()
            )));
        };
        if index >= n {
            return Err(Error::shape(format!("batch index {index} out of {n}")));
        }
        let len = c * h * w;
        let data = t.data()[index * len..(index + 1) * len]
            .iter()
            .map(|v| v.as_f64() as f32)
            .collect();
        Image::new(w, h, c, data)
    }

    /// 8-bit samples in interleaved order, rounding to nearest and clamping.
    pub fn to_u8_interleaved(&self) -> Vec<u8> {
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(n * self.channels);
        for i in 0..n {
            for c in 0..self.channels {
                out.push(to_u8(self.data[c * n + i]));
            }
        }
        out
    }

    pub fn from_u8_interleaved(
        width: usize,
        height: usize,
        channels: usize,
        bytes: &[u8],
    ) -> Result<Image> {
        if bytes.len() != width * height * channels {
            return Err(Error::shape(format!(
                "{} bytes for a {width}x{height}x{channels} image",
                bytes.len()
            )));
        }
        let n = width * height;
        let mut data = vec![0.0; n * channels];
        for i in 0..n {
            for c in 0..channels {
                data[c * n + i] = bytes[i * channels + c] as f32 / 255.0;
            }
        }
        Image::new(width, height, channels, data)
    }

    /// Reads an 8-bit (or 16-bit, scaled) gray, gray-alpha, RGB or RGBA PNG.
    pub fn load_png(path: impl AsRef<Path>) -> Result<Image> {
        let path = path.as_ref();
        let png_err = |e: png::DecodingError| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut decoder = png::Decoder::new(BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(png_err)?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        let channels = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Indexed => {
                return Err(Error::Png {
                    path: path.to_path_buf(),
                    message: "palette images are not expanded".into(),
                })
            }
        };
        let (w, h) = (info.width as usize, info.height as usize);
        buf.truncate(info.buffer_size());
        Image::from_u8_interleaved(w, h, channels, &buf)
    }

    /// Writes an 8-bit PNG with 1, 2, 3 or 4 channels.
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            2 => png::ColorType::GrayscaleAlpha,
            3 => png::ColorType::Rgb,
            4 => png::ColorType::Rgba,
            c => return Err(Error::shape(format!("cannot write a {c}-channel PNG"))),
        };
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut encoder =
            png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Png {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = encoder.write_header().map_err(png_err)?;
        writer
            .write_image_data(&self.to_u8_interleaved())
            .map_err(png_err)?;
        writer.finish().map_err(png_err)
    }
}

pub(crate) fn to_u8(v: f32) -> u8 {
    (v as f64 * 255.0).round().clamp(0.0, 255.0) as u8
}

//! Image types, MATLAB-convention bicubic resampling, PNG I/O, dataset
//! ingestion, patch sampling, and augmentation.
//!
//! Images exist in two forms: [`Image`] holds interleaved 8-bit samples for
//! I/O, [`ImageF`] holds planar f64 samples in the 0..255 range for
//! processing. Quantization rounds half away from zero and clamps.

use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::{Shape, Tensor, TensorError};

mod bicubic;
mod dataset;
mod io;

pub use bicubic::{bicubic_resize, bicubic_resize_f};
pub use dataset::{
    augment, compute_dataset_mean, degrade, load_or_compute_mean, png_files, sample_patch,
    DatasetSpec, ImagePair, Split, MEAN_CACHE_FILE,
};
pub use io::{load_image, save_image};

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("cannot read {path}: {message}")]
    Read { path: PathBuf, message: String },
    #[error("cannot write {path}: {message}")]
    Write { path: PathBuf, message: String },
    #[error("{path}: unsupported bit depth or color type ({found}); only 8-bit gray/RGB PNG is supported")]
    UnsupportedFormat { path: PathBuf, found: String },
    #[error("output size must be at least 1x1")]
    ZeroOutputSize,
    #[error("image {width}x{height} is too small for scale {scale}")]
    TooSmallForScale {
        width: usize,
        height: usize,
        scale: usize,
    },
    #[error("image {width}x{height} is too small for a {patch} pixel patch")]
    TooSmallForPatch {
        width: usize,
        height: usize,
        patch: usize,
    },
    #[error("patch size {patch} is not divisible by scale {scale}")]
    PatchNotDivisible { patch: usize, scale: usize },
    #[error("mean has {mean_channels} channels but image has {image_channels}")]
    MeanChannels {
        mean_channels: usize,
        image_channels: usize,
    },
    #[error("dataset {dir}: {message}")]
    Dataset { dir: PathBuf, message: String },
    #[error("empty dataset in {0}")]
    EmptyDataset(PathBuf),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// 8-bit image, row-major and channel-interleaved.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Image {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        assert_eq!(data.len(), width * height * channels);
        Image {
            width,
            height,
            channels,
            data,
        }
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

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn sample(&self, x: usize, y: usize, c: usize) -> u8 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Planar float copy in the 0..255 range.
    pub fn to_float(&self) -> ImageF {
        let plane = self.width * self.height;
        let mut planes = vec![0.0; plane * self.channels];
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    planes[c * plane + y * self.width + x] =
                        f64::from(self.sample(x, y, c));
                }
            }
        }
        ImageF {
            width: self.width,
            height: self.height,
            channels: self.channels,
            planes,
        }
    }

    /// Top-left anchored crop.
    pub fn crop(&self, width: usize, height: usize) -> Image {
        assert!(width <= self.width && height <= self.height);
        let mut data = Vec::with_capacity(width * height * self.channels);
        for y in 0..height {
            let row = (y * self.width) * self.channels;
            data.extend_from_slice(&self.data[row..row + width * self.channels]);
        }
        Image::new(width, height, self.channels, data)
    }
}

/// Round half away from zero and clamp to the u8 range.
#[inline]
pub fn quantize_u8(v: f64) -> u8 {
    let rounded = if v >= 0.0 {
        (v + 0.5).floor()
    } else {
        (v - 0.5).ceil()
    };
    rounded.clamp(0.0, 255.0) as u8
}

/// Planar f64 image in the 0..255 range; plane `c` is `width*height`
/// samples row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageF {
    width: usize,
    height: usize,
    channels: usize,
    planes: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize, channels: usize, planes: Vec<f64>) -> ImageF {
        assert_eq!(planes.len(), width * height * channels);
        ImageF {
            width,
            height,
            channels,
            planes,
        }
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> ImageF {
        ImageF::new(width, height, channels, vec![0.0; width * height * channels])
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

    pub fn planes(&self) -> &[f64] {
        &self.planes
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.planes[c * plane..(c + 1) * plane]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.planes[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        self.planes[(c * self.height + y) * self.width + x] = v;
    }

    /// Quantize to an 8-bit image (round half away from zero, clamp).
    pub fn quantize(&self) -> Image {
        let mut data = vec![0u8; self.width * self.height * self.channels];
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    data[(y * self.width + x) * self.channels + c] =
                        quantize_u8(self.get(x, y, c));
                }
            }
        }
        Image::new(self.width, self.height, self.channels, data)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> ImageF {
        assert!(x0 + width <= self.width && y0 + height <= self.height);
        let mut out = ImageF::zeros(width, height, self.channels);
        for c in 0..self.channels {
            for y in 0..height {
                for x in 0..width {
                    out.set(x, y, c, self.get(x0 + x, y0 + y, c));
                }
            }
        }
        out
    }

    pub fn flip_horizontal(&self) -> ImageF {
        let mut out = ImageF::zeros(self.width, self.height, self.channels);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(x, y, c, self.get(self.width - 1 - x, y, c));
                }
            }
        }
        out
    }

    pub fn flip_vertical(&self) -> ImageF {
        let mut out = ImageF::zeros(self.width, self.height, self.channels);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(x, y, c, self.get(x, self.height - 1 - y, c));
                }
            }
        }
        out
    }

    /// Rotate 90 degrees counter-clockwise.
    pub fn rotate90(&self) -> ImageF {
        let mut out = ImageF::zeros(self.height, self.width, self.channels);
        for c in 0..self.channels {
            for y in 0..self.height {
                for x in 0..self.width {
                    out.set(y, self.width - 1 - x, c, self.get(x, y, c));
                }
            }
        }
        out
    }

    /// View as a single-sample tensor of shape `(1, channels, h, w)`.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_values(
            Shape::new(1, self.channels, self.height, self.width),
            self.planes.clone(),
        )
        .expect("plane buffer matches shape")
    }

    /// Rebuild from sample `n` of a tensor batch.
    pub fn from_tensor(tensor: &Tensor, n: usize) -> ImageF {
        let s = tensor.shape();
        assert!(n < s.n);
        let sample = s.c * s.h * s.w;
        let planes =
            tensor.with_values(|v| v[n * sample..(n + 1) * sample].to_vec());
        ImageF::new(s.w, s.h, s.c, planes)
    }
}

/// Subtract a per-channel mean (0..255 units).
pub fn normalize(img: &ImageF, mean: &[f64]) -> Result<ImageF, ImageError> {
    apply_mean(img, mean, -1.0)
}

/// Add a per-channel mean back.
pub fn denormalize(img: &ImageF, mean: &[f64]) -> Result<ImageF, ImageError> {
    apply_mean(img, mean, 1.0)
}

fn apply_mean(img: &ImageF, mean: &[f64], sign: f64) -> Result<ImageF, ImageError> {
    if mean.len() != img.channels {
        return Err(ImageError::MeanChannels {
            mean_channels: mean.len(),
            image_channels: img.channels,
        });
    }
    let mut out = img.clone();
    let plane = img.width * img.height;
    for (c, &m) in mean.iter().enumerate() {
        for v in &mut out.planes[c * plane..(c + 1) * plane] {
            *v += sign * m;
        }
    }
    Ok(out)
}

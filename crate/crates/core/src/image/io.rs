//! Lossless PNG read/write for 8-bit grayscale and RGB images.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::{Image, ImageError};

/// Load an 8-bit PNG. RGBA/LumaA inputs have the alpha channel stripped
/// with a warning on stderr; 16-bit and other depths are rejected.
pub fn load_image(path: &Path) -> Result<Image, ImageError> {
    let decoded = image::ImageReader::open(path)
        .map_err(|e| ImageError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .decode()
        .map_err(|e| ImageError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;

    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    match decoded {
        DynamicImage::ImageLuma8(img) => {
            Ok(Image::new(width, height, 1, img.into_raw()))
        }
        DynamicImage::ImageRgb8(img) => {
            Ok(Image::new(width, height, 3, img.into_raw()))
        }
        DynamicImage::ImageRgba8(img) => {
            eprintln!(
                "warning: {}: stripping alpha channel from RGBA input",
                path.display()
            );
            let raw = img.into_raw();
            let mut data = Vec::with_capacity(width * height * 3);
            for px in raw.chunks_exact(4) {
                data.extend_from_slice(&px[..3]);
            }
            Ok(Image::new(width, height, 3, data))
        }
        DynamicImage::ImageLumaA8(img) => {
            eprintln!(
                "warning: {}: stripping alpha channel from gray+alpha input",
                path.display()
            );
            let raw = img.into_raw();
            let data = raw.chunks_exact(2).map(|px| px[0]).collect();
            Ok(Image::new(width, height, 1, data))
        }
        other => Err(ImageError::UnsupportedFormat {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

/// Write an image as PNG.
pub fn save_image(img: &Image, path: &Path) -> Result<(), ImageError> {
    let err = |e: image::ImageError| ImageError::Write {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.channels() {
        1 => image::GrayImage::from_raw(w, h, img.data().to_vec())
            .expect("buffer matches dimensions")
            .save_with_format(path, ImageFormat::Png)
            .map_err(err),
        3 => image::RgbImage::from_raw(w, h, img.data().to_vec())
            .expect("buffer matches dimensions")
            .save_with_format(path, ImageFormat::Png)
            .map_err(err),
        other => unreachable!("Image invariant allows 1 or 3 channels, got {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let img = Image::new(5, 4, 3, (0..60).map(|i| (i * 7 % 256) as u8).collect());
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back, img);

        let gray = Image::new(4, 4, 1, (0..16).map(|i| (i * 16) as u8).collect());
        let gray_path = dir.path().join("gray.png");
        save_image(&gray, &gray_path).unwrap();
        assert_eq!(load_image(&gray_path).unwrap(), gray);
    }

    #[test]
    fn sixteen_bit_png_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let img = image::ImageBuffer::<image::Luma<u16>, _>::from_fn(3, 3, |x, y| {
            image::Luma([(x * 1000 + y) as u16])
        });
        img.save_with_format(&path, ImageFormat::Png).unwrap();
        assert!(matches!(
            load_image(&path),
            Err(ImageError::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn rgba_alpha_is_stripped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgba.png");
        let img = image::RgbaImage::from_fn(2, 2, |x, y| {
            image::Rgba([x as u8 * 100, y as u8 * 100, 7, 128])
        });
        img.save_with_format(&path, ImageFormat::Png).unwrap();
        let loaded = load_image(&path).unwrap();
        assert_eq!(loaded.channels(), 3);
        assert_eq!(loaded.sample(1, 0, 0), 100);
        assert_eq!(loaded.sample(0, 1, 1), 100);
        assert_eq!(loaded.sample(0, 0, 2), 7);
    }

    #[test]
    fn unreadable_file_is_an_io_error() {
        assert!(matches!(
            load_image(Path::new("/nonexistent/nope.png")),
            Err(ImageError::Read { .. })
        ));
    }
}

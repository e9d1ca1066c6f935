//! Dataset ingestion, HR/LR pairing, degradation, patch sampling, and
//! augmentation.
//!
//! Directory layout: `<root>/HR/*.png` plus optional `<root>/LR_x{r}/*.png`
//! with matching file stems. All randomness is drawn from a caller-supplied
//! ChaCha stream through `next_u64`, so the patch/augment sequence is a pure
//! function of the seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::{bicubic_resize_f, load_image, Image, ImageError, ImageF};

/// File name of the cached per-channel mean, stored beside the dataset's
/// image directories.
pub const MEAN_CACHE_FILE: &str = "mean_rgb.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Where a dataset lives and how to pair HR with LR.
#[derive(Clone, Debug)]
pub struct DatasetSpec {
    pub hr_dir: PathBuf,
    /// When absent, LR images are generated on the fly by bicubic
    /// degradation.
    pub lr_dir: Option<PathBuf>,
    pub scale: usize,
    pub split: Split,
}

/// Aligned HR/LR pair. The HR side is pre-cropped (top-left anchored) so
/// both extents are divisible by the scale; the LR side is exactly
/// `hr / scale` in both dimensions.
#[derive(Clone, Debug)]
pub struct ImagePair {
    pub hr: Image,
    pub lr: Image,
    pub scale: usize,
    pub source_id: String,
}

/// Crop HR to scale-divisible extents and produce the bicubic LR,
/// quantized to 8 bits.
pub fn degrade(hr: &Image, scale: usize) -> Result<ImagePair, ImageError> {
    degrade_with_id(hr, scale, String::new())
}

pub fn degrade_with_id(
    hr: &Image,
    scale: usize,
    source_id: String,
) -> Result<ImagePair, ImageError> {
    if hr.width() < scale || hr.height() < scale {
        return Err(ImageError::TooSmallForScale {
            width: hr.width(),
            height: hr.height(),
            scale,
        });
    }
    let cropped_w = hr.width() - hr.width() % scale;
    let cropped_h = hr.height() - hr.height() % scale;
    let hr_cropped = hr.crop(cropped_w, cropped_h);
    let lr = bicubic_resize_f(&hr_cropped.to_float(), cropped_h / scale, cropped_w / scale)?
        .quantize();
    Ok(ImagePair {
        hr: hr_cropped,
        lr,
        scale,
        source_id,
    })
}

impl DatasetSpec {
    /// Load every pair, sorted by file stem.
    pub fn ingest(&self) -> Result<Vec<ImagePair>, ImageError> {
        let hr_files = png_files(&self.hr_dir)?;
        if hr_files.is_empty() {
            return Err(ImageError::EmptyDataset(self.hr_dir.clone()));
        }

        let lr_files = match &self.lr_dir {
            Some(dir) => {
                let files = png_files(dir)?;
                let hr_stems: Vec<&String> = hr_files.keys().collect();
                let lr_stems: Vec<&String> = files.keys().collect();
                if hr_stems != lr_stems {
                    return Err(ImageError::Dataset {
                        dir: dir.clone(),
                        message: format!(
                            "LR stems do not match HR stems one-to-one ({} HR vs {} LR)",
                            hr_stems.len(),
                            lr_stems.len()
                        ),
                    });
                }
                Some(files)
            }
            None => None,
        };

        let mut pairs = Vec::with_capacity(hr_files.len());
        for (stem, hr_path) in &hr_files {
            let hr = load_image(hr_path)?;
            let pair = match &lr_files {
                None => degrade_with_id(&hr, self.scale, stem.clone())?,
                Some(files) => {
                    let lr = load_image(&files[stem])?;
                    let cropped_w = hr.width() - hr.width() % self.scale;
                    let cropped_h = hr.height() - hr.height() % self.scale;
                    if lr.width() != cropped_w / self.scale
                        || lr.height() != cropped_h / self.scale
                    {
                        return Err(ImageError::Dataset {
                            dir: self.lr_dir.clone().unwrap(),
                            message: format!(
                                "{stem}: LR is {}x{} but scale {} of a {}x{} HR needs {}x{}",
                                lr.width(),
                                lr.height(),
                                self.scale,
                                hr.width(),
                                hr.height(),
                                cropped_w / self.scale,
                                cropped_h / self.scale,
                            ),
                        });
                    }
                    ImagePair {
                        hr: hr.crop(cropped_w, cropped_h),
                        lr,
                        scale: self.scale,
                        source_id: stem.clone(),
                    }
                }
            };
            pairs.push(pair);
        }
        Ok(pairs)
    }
}

/// PNG files of a directory keyed by stem, sorted.
pub fn png_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, ImageError> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(dir).map_err(|e| ImageError::Read {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })?;
    for entry in entries {
        let path = entry
            .map_err(|e| ImageError::Read {
                path: dir.to_path_buf(),
                message: e.to_string(),
            })?
            .path();
        if path.extension().and_then(|e| e.to_str()) == Some("png") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), path);
            }
        }
    }
    Ok(out)
}

/// Uniform random aligned crop: an HR patch of `patch_hr` square and the
/// corresponding LR patch of `patch_hr / scale` square. HR offsets are
/// `scale` times the LR offsets by construction.
pub fn sample_patch(
    pair: &ImagePair,
    patch_hr: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(ImageF, ImageF), ImageError> {
    if patch_hr % pair.scale != 0 {
        return Err(ImageError::PatchNotDivisible {
            patch: patch_hr,
            scale: pair.scale,
        });
    }
    if pair.hr.width() < patch_hr || pair.hr.height() < patch_hr {
        return Err(ImageError::TooSmallForPatch {
            width: pair.hr.width(),
            height: pair.hr.height(),
            patch: patch_hr,
        });
    }
    let patch_lr = patch_hr / pair.scale;
    let max_x = pair.lr.width() - patch_lr;
    let max_y = pair.lr.height() - patch_lr;
    let lr_x = (rng.next_u64() % (max_x as u64 + 1)) as usize;
    let lr_y = (rng.next_u64() % (max_y as u64 + 1)) as usize;
    let hr_x = lr_x * pair.scale;
    let hr_y = lr_y * pair.scale;

    let lr_patch = pair
        .lr
        .to_float()
        .crop(lr_x, lr_y, patch_lr, patch_lr);
    let hr_patch = pair
        .hr
        .to_float()
        .crop(hr_x, hr_y, patch_hr, patch_hr);
    Ok((lr_patch, hr_patch))
}

/// Three independent fair coin flips: horizontal flip, vertical flip, 90
/// degree rotation, each applied identically to both patches.
pub fn augment(
    lr_patch: ImageF,
    hr_patch: ImageF,
    rng: &mut ChaCha20Rng,
) -> (ImageF, ImageF) {
    let mut lr = lr_patch;
    let mut hr = hr_patch;
    if rng.next_u64() & 1 == 1 {
        lr = lr.flip_horizontal();
        hr = hr.flip_horizontal();
    }
    if rng.next_u64() & 1 == 1 {
        lr = lr.flip_vertical();
        hr = hr.flip_vertical();
    }
    if rng.next_u64() & 1 == 1 {
        lr = lr.rotate90();
        hr = hr.rotate90();
    }
    (lr, hr)
}

/// Per-channel arithmetic mean over all pixels of all HR images, streamed
/// in f64.
pub fn compute_dataset_mean(spec: &DatasetSpec) -> Result<Vec<f64>, ImageError> {
    let files = png_files(&spec.hr_dir)?;
    if files.is_empty() {
        return Err(ImageError::EmptyDataset(spec.hr_dir.clone()));
    }
    let mut sums: Option<Vec<f64>> = None;
    let mut count = 0u64;
    for path in files.values() {
        let img = load_image(path)?;
        let sums = sums.get_or_insert_with(|| vec![0.0; img.channels()]);
        for y in 0..img.height() {
            for x in 0..img.width() {
                for (c, sum) in sums.iter_mut().enumerate() {
                    *sum += f64::from(img.sample(x, y, c));
                }
            }
        }
        count += (img.width() * img.height()) as u64;
    }
    Ok(sums
        .unwrap()
        .into_iter()
        .map(|s| s / count as f64)
        .collect())
}

#[derive(Serialize, Deserialize)]
struct MeanCache {
    mean_rgb: Vec<f64>,
}

/// Cached dataset mean: reads `mean_rgb.json` beside the dataset root if
/// present, otherwise computes and writes it.
pub fn load_or_compute_mean(spec: &DatasetSpec, root: &Path) -> Result<Vec<f64>, ImageError> {
    let cache_path = root.join(MEAN_CACHE_FILE);
    if let Ok(raw) = std::fs::read_to_string(&cache_path) {
        if let Ok(cache) = serde_json::from_str::<MeanCache>(&raw) {
            return Ok(cache.mean_rgb);
        }
    }
    let mean = compute_dataset_mean(spec)?;
    let json = serde_json::to_string_pretty(&MeanCache {
        mean_rgb: mean.clone(),
    })
    .expect("mean serializes");
    std::fs::write(&cache_path, json).map_err(|e| ImageError::Write {
        path: cache_path,
        message: e.to_string(),
    })?;
    Ok(mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::save_image;
    use rand_chacha::rand_core::SeedableRng;

    fn checker(width: usize, height: usize, period: usize) -> Image {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let v = if (x / period + y / period) % 2 == 0 { 200 } else { 40 };
                data.extend_from_slice(&[v, v / 2, 255 - v]);
            }
        }
        Image::new(width, height, 3, data)
    }

    #[test]
    fn degrade_crops_to_divisible_extents() {
        let hr = checker(101, 97, 5);
        let pair = degrade(&hr, 4).unwrap();
        assert_eq!((pair.hr.width(), pair.hr.height()), (100, 96));
        assert_eq!((pair.lr.width(), pair.lr.height()), (25, 24));
    }

    #[test]
    fn degrade_constant_stays_constant() {
        let hr = Image::new(16, 16, 3, vec![77; 16 * 16 * 3]);
        let pair = degrade(&hr, 2).unwrap();
        assert!(pair.lr.data().iter().all(|&v| v == 77));
    }

    #[test]
    fn degrade_rejects_tiny_images() {
        let hr = Image::new(3, 2, 3, vec![0; 18]);
        assert!(degrade(&hr, 4).is_err());
    }

    #[test]
    fn patches_are_aligned_and_sized() {
        let pair = degrade(&checker(64, 48, 3), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..20 {
            let (lr, hr) = sample_patch(&pair, 16, &mut rng).unwrap();
            assert_eq!((lr.width(), lr.height()), (8, 8));
            assert_eq!((hr.width(), hr.height()), (16, 16));
        }
    }

    #[test]
    fn patch_stream_is_seeded() {
        let pair = degrade(&checker(64, 64, 4), 2).unwrap();
        let collect = |seed: u64| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| {
                    let (lr, _) = sample_patch(&pair, 8, &mut rng).unwrap();
                    lr.planes().to_vec()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(collect(3), collect(3));
        assert_ne!(collect(3), collect(4));
    }

    #[test]
    fn augment_identity_when_no_draw_fires() {
        // Find a seed whose next three draws are all even.
        let mut seed = 0u64;
        loop {
            let mut probe = ChaCha20Rng::seed_from_u64(seed);
            if (0..3).all(|_| probe.next_u64() & 1 == 0) {
                break;
            }
            seed += 1;
        }
        let img = ImageF::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let (lr, hr) = augment(img.clone(), img.clone(), &mut rng);
        assert_eq!(lr, img);
        assert_eq!(hr, img);
    }

    #[test]
    fn augment_frequencies_are_near_half() {
        let mut rng = ChaCha20Rng::seed_from_u64(123);
        let mut fired = [0u32; 3];
        let trials = 10_000;
        for _ in 0..trials {
            for f in fired.iter_mut() {
                if rng.next_u64() & 1 == 1 {
                    *f += 1;
                }
            }
        }
        for f in fired {
            let rate = f64::from(f) / f64::from(trials);
            assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
        }
    }

    #[test]
    fn dataset_mean_matches_two_pass_oracle() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        std::fs::create_dir(&hr_dir).unwrap();
        let mut all: Vec<Vec<f64>> = vec![Vec::new(); 3];
        for i in 0..5 {
            let img = checker(17 + i, 13 + i, 2 + i);
            for y in 0..img.height() {
                for x in 0..img.width() {
                    for (c, bucket) in all.iter_mut().enumerate() {
                        bucket.push(f64::from(img.sample(x, y, c)));
                    }
                }
            }
            save_image(&img, &hr_dir.join(format!("img{i}.png"))).unwrap();
        }
        let spec = DatasetSpec {
            hr_dir,
            lr_dir: None,
            scale: 2,
            split: Split::Train,
        };
        let mean = compute_dataset_mean(&spec).unwrap();
        for c in 0..3 {
            let oracle: f64 = all[c].iter().sum::<f64>() / all[c].len() as f64;
            assert!((mean[c] - oracle).abs() < 1e-9, "channel {c}");
        }
    }

    #[test]
    fn single_constant_image_mean_is_its_value() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        std::fs::create_dir(&hr_dir).unwrap();
        let img = Image::new(8, 8, 3, vec![123; 192]);
        save_image(&img, &hr_dir.join("c.png")).unwrap();
        let spec = DatasetSpec {
            hr_dir,
            lr_dir: None,
            scale: 2,
            split: Split::Train,
        };
        assert_eq!(compute_dataset_mean(&spec).unwrap(), vec![123.0; 3]);
    }

    #[test]
    fn empty_dataset_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let spec = DatasetSpec {
            hr_dir: dir.path().to_path_buf(),
            lr_dir: None,
            scale: 2,
            split: Split::Train,
        };
        assert!(matches!(
            compute_dataset_mean(&spec),
            Err(ImageError::EmptyDataset(_))
        ));
    }

    #[test]
    fn lr_dir_stem_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        let lr_dir = dir.path().join("LR_x2");
        std::fs::create_dir(&hr_dir).unwrap();
        std::fs::create_dir(&lr_dir).unwrap();
        save_image(&checker(16, 16, 2), &hr_dir.join("a.png")).unwrap();
        save_image(&checker(8, 8, 2), &lr_dir.join("b.png")).unwrap();
        let spec = DatasetSpec {
            hr_dir,
            lr_dir: Some(lr_dir),
            scale: 2,
            split: Split::Train,
        };
        assert!(spec.ingest().is_err());
    }

    #[test]
    fn lr_dir_wrong_scale_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let hr_dir = dir.path().join("HR");
        let lr_dir = dir.path().join("LR_x2");
        std::fs::create_dir(&hr_dir).unwrap();
        std::fs::create_dir(&lr_dir).unwrap();
        save_image(&checker(16, 16, 2), &hr_dir.join("a.png")).unwrap();
        // 4x4 is the x4 degradation, not x2.
        save_image(&checker(4, 4, 2), &lr_dir.join("a.png")).unwrap();
        let spec = DatasetSpec {
            hr_dir,
            lr_dir: Some(lr_dir),
            scale: 2,
            split: Split::Train,
        };
        assert!(spec.ingest().is_err());
    }
}

//! PSNR and SSIM under benchmark conventions: BT.601 studio-swing luma,
//! border shaving, 11x11 Gaussian-windowed SSIM with the reference
//! constants.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{load_image, Image, ImageError, ImageF};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("shave {shave} leaves no pixels of a {width}x{height} image")]
    ShaveTooLarge {
        shave: usize,
        width: usize,
        height: usize,
    },
    #[error("evaluated region {width}x{height} is smaller than the {window}x{window} SSIM window")]
    RegionTooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Which samples the metrics are computed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    /// BT.601 studio-swing luma.
    Y,
    /// All channels pooled (PSNR) or per-channel averaged (SSIM).
    Rgb,
}

impl std::fmt::Display for ChannelMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ChannelMode::Y => write!(f, "y"),
            ChannelMode::Rgb => write!(f, "rgb"),
        }
    }
}

/// PSNR/SSIM of one comparison. `psnr_db` is `f64::INFINITY` when the
/// evaluated regions are identical.
#[derive(Clone, Copy, Debug)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub channel_mode: ChannelMode,
    pub shave: usize,
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 6.5025; // (0.01 * 255)^2
const SSIM_C2: f64 = 58.5225; // (0.03 * 255)^2

/// BT.601 studio-swing luma of an RGB image (0..255 float in, 16..235
/// float out). Grayscale input is passed through unchanged.
pub fn rgb_to_y(img: &ImageF) -> Vec<f64> {
    if img.channels() == 1 {
        return img.plane(0).to_vec();
    }
    let (r, g, b) = (img.plane(0), img.plane(1), img.plane(2));
    r.iter()
        .zip(g)
        .zip(b)
        .map(|((&r, &g), &b)| 16.0 + (65.481 * r + 128.553 * g + 24.966 * b) / 255.0)
        .collect()
}

/// Shave `shave` pixels off every border of each plane.
fn shave_plane(plane: &[f64], width: usize, height: usize, shave: usize) -> Vec<f64> {
    let w = width - 2 * shave;
    let h = height - 2 * shave;
    let mut out = Vec::with_capacity(w * h);
    for y in shave..height - shave {
        let row = y * width + shave;
        out.extend_from_slice(&plane[row..row + w]);
    }
    out
}

fn check_pair(reference: &Image, test: &Image, shave: usize) -> Result<(), MetricError> {
    if reference.width() != test.width() || reference.height() != test.height() {
        return Err(MetricError::DimensionMismatch(
            reference.width(),
            reference.height(),
            test.width(),
            test.height(),
        ));
    }
    if 2 * shave >= reference.width() || 2 * shave >= reference.height() {
        return Err(MetricError::ShaveTooLarge {
            shave,
            width: reference.width(),
            height: reference.height(),
        });
    }
    Ok(())
}

/// Planes to evaluate after shaving and channel conversion, with their
/// extents.
fn evaluation_planes(
    img: &Image,
    shave: usize,
    mode: ChannelMode,
) -> (Vec<Vec<f64>>, usize, usize) {
    let f = img.to_float();
    let w = img.width() - 2 * shave;
    let h = img.height() - 2 * shave;
    let planes = match mode {
        ChannelMode::Y => vec![shave_plane(
            &rgb_to_y(&f),
            img.width(),
            img.height(),
            shave,
        )],
        ChannelMode::Rgb => (0..img.channels())
            .map(|c| shave_plane(f.plane(c), img.width(), img.height(), shave))
            .collect(),
    };
    (planes, w, h)
}

/// Peak signal-to-noise ratio in decibels: `10*log10(255^2 / MSE)` over the
/// shaved region, `+inf` for identical inputs.
pub fn psnr(
    reference: &Image,
    test: &Image,
    shave: usize,
    mode: ChannelMode,
) -> Result<f64, MetricError> {
    check_pair(reference, test, shave)?;
    let (ref_planes, _, _) = evaluation_planes(reference, shave, mode);
    let (test_planes, _, _) = evaluation_planes(test, shave, mode);
    let mut sq_sum = 0.0;
    let mut count = 0usize;
    for (rp, tp) in ref_planes.iter().zip(&test_planes) {
        for (a, b) in rp.iter().zip(tp) {
            let d = a - b;
            sq_sum += d * d;
        }
        count += rp.len();
    }
    let mse = sq_sum / count as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            w.push((-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    w
}

fn ssim_plane(reference: &[f64], test: &[f64], width: usize, height: usize) -> f64 {
    let window = gaussian_window();
    let mut total = 0.0;
    let mut windows = 0usize;
    for y0 in 0..=height - SSIM_WINDOW {
        for x0 in 0..=width - SSIM_WINDOW {
            let mut mu_x = 0.0;
            let mut mu_y = 0.0;
            let mut xx = 0.0;
            let mut yy = 0.0;
            let mut xy = 0.0;
            let mut k = 0;
            for wy in 0..SSIM_WINDOW {
                let row = (y0 + wy) * width + x0;
                for wx in 0..SSIM_WINDOW {
                    let w = window[k];
                    k += 1;
                    let a = reference[row + wx];
                    let b = test[row + wx];
                    mu_x += w * a;
                    mu_y += w * b;
                    xx += w * a * a;
                    yy += w * b * b;
                    xy += w * a * b;
                }
            }
            let var_x = xx - mu_x * mu_x;
            let var_y = yy - mu_y * mu_y;
            let cov = xy - mu_x * mu_y;
            let value = ((2.0 * mu_x * mu_y + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (var_x + var_y + SSIM_C2));
            total += value;
            windows += 1;
        }
    }
    total / windows as f64
}

/// Mean SSIM over all valid 11x11 Gaussian windows (sigma 1.5, population
/// moments, no padding), on luma or averaged over channels.
pub fn ssim(
    reference: &Image,
    test: &Image,
    shave: usize,
    mode: ChannelMode,
) -> Result<f64, MetricError> {
    check_pair(reference, test, shave)?;
    let (ref_planes, w, h) = evaluation_planes(reference, shave, mode);
    let (test_planes, _, _) = evaluation_planes(test, shave, mode);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricError::RegionTooSmall {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let per_plane: Vec<f64> = ref_planes
        .iter()
        .zip(&test_planes)
        .map(|(rp, tp)| ssim_plane(rp, tp, w, h))
        .collect();
    Ok(per_plane.iter().sum::<f64>() / per_plane.len() as f64)
}

/// Both metrics at once.
pub fn report(
    reference: &Image,
    test: &Image,
    shave: usize,
    mode: ChannelMode,
) -> Result<MetricReport, MetricError> {
    Ok(MetricReport {
        psnr_db: psnr(reference, test, shave, mode)?,
        ssim: ssim(reference, test, shave, mode)?,
        channel_mode: mode,
        shave,
    })
}

/// One row of a directory evaluation.
#[derive(Clone, Debug)]
pub struct ImageScore {
    pub image_id: String,
    pub report: MetricReport,
}

/// Result of comparing two directories of stem-matched images.
#[derive(Debug)]
pub struct DirEvaluation {
    pub scores: Vec<ImageScore>,
    /// Stems present in one directory but not the other.
    pub missing: Vec<String>,
    pub scale: usize,
    pub channel_mode: ChannelMode,
    pub shave: usize,
}

impl DirEvaluation {
    /// Arithmetic means over images. Infinite PSNR values are excluded
    /// unless every image is identical, in which case the average keeps
    /// the sentinel.
    pub fn average(&self) -> MetricReport {
        let finite: Vec<f64> = self
            .scores
            .iter()
            .map(|s| s.report.psnr_db)
            .filter(|p| p.is_finite())
            .collect();
        let psnr_db = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        let ssim = self.scores.iter().map(|s| s.report.ssim).sum::<f64>()
            / self.scores.len().max(1) as f64;
        MetricReport {
            psnr_db,
            ssim,
            channel_mode: self.channel_mode,
            shave: self.shave,
        }
    }

    /// CSV with one row per image plus an AVERAGE row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,psnr_db,ssim,scale,channel_mode,shave\n");
        let mut push = |id: &str, psnr_db: f64, ssim: f64| {
            out.push_str(&format!(
                "{},{},{:.6},{},{},{}\n",
                id,
                format_psnr(psnr_db),
                ssim,
                self.scale,
                self.channel_mode,
                self.shave
            ));
        };
        for score in &self.scores {
            push(&score.image_id, score.report.psnr_db, score.report.ssim);
        }
        let avg = self.average();
        push("AVERAGE", avg.psnr_db, avg.ssim);
        out
    }
}

fn format_psnr(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".to_string()
    }
}

/// Compare stem-matched PNGs of two directories; `shave` defaults to the
/// scale under the benchmark convention. Files missing a counterpart are
/// listed in `missing` and skipped.
pub fn evaluate_dir(
    ref_dir: &Path,
    test_dir: &Path,
    scale: usize,
    mode: ChannelMode,
    shave: usize,
) -> Result<DirEvaluation, MetricError> {
    let ref_files = crate::image::png_files(ref_dir)?;
    let test_files = crate::image::png_files(test_dir)?;

    let mut missing = Vec::new();
    for stem in ref_files.keys() {
        if !test_files.contains_key(stem) {
            missing.push(format!("{stem} (missing in {})", test_dir.display()));
        }
    }
    for stem in test_files.keys() {
        if !ref_files.contains_key(stem) {
            missing.push(format!("{stem} (missing in {})", ref_dir.display()));
        }
    }

    let common: BTreeMap<&String, (&std::path::PathBuf, &std::path::PathBuf)> = ref_files
        .iter()
        .filter_map(|(stem, rp)| test_files.get(stem).map(|tp| (stem, (rp, tp))))
        .collect();

    let mut scores = Vec::new();
    for (stem, (ref_path, test_path)) in common {
        let reference = load_image(ref_path)?;
        let test = load_image(test_path)?;
        scores.push(ImageScore {
            image_id: stem.clone(),
            report: report(&reference, &test, shave, mode)?,
        });
    }
    Ok(DirEvaluation {
        scores,
        missing,
        scale,
        channel_mode: mode,
        shave,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(width: usize, height: usize, value: u8) -> Image {
        Image::new(width, height, 3, vec![value; width * height * 3])
    }

    #[test]
    fn luma_coefficients() {
        let white = uniform(1, 1, 255).to_float();
        assert!((rgb_to_y(&white)[0] - 235.0).abs() < 1e-9);
        let black = uniform(1, 1, 0).to_float();
        assert!((rgb_to_y(&black)[0] - 16.0).abs() < 1e-9);
        let gray = uniform(1, 1, 100).to_float();
        assert!((rgb_to_y(&gray)[0] - 101.88).abs() < 0.005);
    }

    #[test]
    fn psnr_identical_is_infinite() {
        let img = uniform(16, 16, 77);
        assert_eq!(
            psnr(&img, &img, 0, ChannelMode::Rgb).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn psnr_uniform_closed_form() {
        let a = uniform(16, 16, 0);
        let b = uniform(16, 16, 128);
        let got = psnr(&a, &b, 0, ChannelMode::Rgb).unwrap();
        let want = 20.0 * (255.0f64 / 128.0).log10();
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        assert!((got - 5.9867).abs() < 1e-3);
    }

    #[test]
    fn psnr_rejects_dimension_mismatch() {
        let a = uniform(8, 8, 0);
        let b = uniform(8, 9, 0);
        assert!(psnr(&a, &b, 0, ChannelMode::Y).is_err());
    }

    #[test]
    fn psnr_is_symmetric_and_monotone_in_noise() {
        let base = Image::new(
            24,
            24,
            3,
            (0..24 * 24 * 3).map(|i| (i * 31 % 251) as u8).collect(),
        );
        let noisy = |amp: i32| {
            let data = base
                .data()
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let n = ((i * 2654435761) >> 7) as i32 % (2 * amp + 1) - amp;
                    (v as i32 + n).clamp(0, 255) as u8
                })
                .collect();
            Image::new(24, 24, 3, data)
        };
        let mut last = f64::INFINITY;
        for amp in [4, 16, 48] {
            let n = noisy(amp);
            let p1 = psnr(&base, &n, 2, ChannelMode::Y).unwrap();
            let p2 = psnr(&n, &base, 2, ChannelMode::Y).unwrap();
            assert!((p1 - p2).abs() < 1e-12);
            assert!(p1 < last, "amp {amp}: {p1} !< {last}");
            last = p1;
        }
    }

    #[test]
    fn ssim_identical_is_exactly_one() {
        let img = Image::new(
            20,
            20,
            3,
            (0..1200).map(|i| (i * 7 % 256) as u8).collect(),
        );
        assert_eq!(ssim(&img, &img, 0, ChannelMode::Y).unwrap(), 1.0);
        assert_eq!(ssim(&img, &img, 2, ChannelMode::Rgb).unwrap(), 1.0);
    }

    #[test]
    fn ssim_constant_pair_closed_form() {
        // Variances and covariance vanish; only the luminance term is left.
        let a = uniform(16, 16, 100);
        let b = uniform(16, 16, 110);
        let got = ssim(&a, &b, 0, ChannelMode::Rgb).unwrap();
        let want = (2.0 * 100.0 * 110.0 + SSIM_C1) / (100.0f64.powi(2) + 110.0f64.powi(2) + SSIM_C1);
        assert!((got - want).abs() < 1e-12);
        assert!((got - 0.99548).abs() < 1e-4);
    }

    #[test]
    fn ssim_region_smaller_than_window_rejected() {
        let img = uniform(10, 10, 5);
        assert!(matches!(
            ssim(&img, &img, 0, ChannelMode::Y),
            Err(MetricError::RegionTooSmall { .. })
        ));
    }

    #[test]
    fn ssim_in_range_and_symmetric() {
        let a = Image::new(
            20,
            20,
            3,
            (0..1200).map(|i| (i * 13 % 256) as u8).collect(),
        );
        let b = Image::new(
            20,
            20,
            3,
            (0..1200).map(|i| (255 - (i * 29 % 256)) as u8).collect(),
        );
        let s1 = ssim(&a, &b, 0, ChannelMode::Y).unwrap();
        let s2 = ssim(&b, &a, 0, ChannelMode::Y).unwrap();
        assert!((s1 - s2).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&s1));
        assert!(s1 < 1.0);
    }

    #[test]
    fn dir_average_equals_per_image_loop() {
        use crate::image::save_image;
        let dir = tempfile::tempdir().unwrap();
        let ref_dir = dir.path().join("ref");
        let test_dir = dir.path().join("test");
        std::fs::create_dir(&ref_dir).unwrap();
        std::fs::create_dir(&test_dir).unwrap();
        let mut expected_psnr = Vec::new();
        let mut expected_ssim = Vec::new();
        for i in 0..5u8 {
            let a = Image::new(
                20,
                20,
                3,
                (0..1200).map(|j| ((j as u32 * (i as u32 + 3)) % 256) as u8).collect(),
            );
            let b = Image::new(
                20,
                20,
                3,
                a.data().iter().map(|&v| v.saturating_add(i + 1)).collect(),
            );
            save_image(&a, &ref_dir.join(format!("img{i}.png"))).unwrap();
            save_image(&b, &test_dir.join(format!("img{i}.png"))).unwrap();
            expected_psnr.push(psnr(&a, &b, 2, ChannelMode::Y).unwrap());
            expected_ssim.push(ssim(&a, &b, 2, ChannelMode::Y).unwrap());
        }
        let eval = evaluate_dir(&ref_dir, &test_dir, 2, ChannelMode::Y, 2).unwrap();
        assert!(eval.missing.is_empty());
        assert_eq!(eval.scores.len(), 5);
        let avg = eval.average();
        let want_psnr = expected_psnr.iter().sum::<f64>() / 5.0;
        let want_ssim = expected_ssim.iter().sum::<f64>() / 5.0;
        assert!((avg.psnr_db - want_psnr).abs() < 1e-12);
        assert!((avg.ssim - want_ssim).abs() < 1e-12);

        let csv = eval.to_csv();
        assert!(csv.starts_with("image_id,psnr_db,ssim,scale,channel_mode,shave\n"));
        assert!(csv.contains("AVERAGE"));
    }

    #[test]
    fn dir_compared_to_itself_is_perfect() {
        use crate::image::save_image;
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().join("imgs");
        std::fs::create_dir(&d).unwrap();
        let img = Image::new(
            16,
            16,
            3,
            (0..768).map(|i| (i % 256) as u8).collect(),
        );
        save_image(&img, &d.join("one.png")).unwrap();
        let eval = evaluate_dir(&d, &d, 2, ChannelMode::Y, 2).unwrap();
        assert_eq!(eval.scores.len(), 1);
        assert_eq!(eval.scores[0].report.psnr_db, f64::INFINITY);
        assert_eq!(eval.scores[0].report.ssim, 1.0);
        // Single image: the average equals the single value (sentinel kept).
        assert_eq!(eval.average().psnr_db, f64::INFINITY);
    }

    #[test]
    fn missing_counterparts_are_listed() {
        use crate::image::save_image;
        let dir = tempfile::tempdir().unwrap();
        let ref_dir = dir.path().join("ref");
        let test_dir = dir.path().join("test");
        std::fs::create_dir(&ref_dir).unwrap();
        std::fs::create_dir(&test_dir).unwrap();
        let img = uniform(16, 16, 10);
        save_image(&img, &ref_dir.join("a.png")).unwrap();
        save_image(&img, &ref_dir.join("b.png")).unwrap();
        save_image(&img, &test_dir.join("a.png")).unwrap();
        let eval = evaluate_dir(&ref_dir, &test_dir, 2, ChannelMode::Y, 2).unwrap();
        assert_eq!(eval.scores.len(), 1);
        assert_eq!(eval.missing.len(), 1);
        assert!(eval.missing[0].starts_with("b "));
    }
}

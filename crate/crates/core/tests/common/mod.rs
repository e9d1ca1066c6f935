//! Shared helpers for integration tests: a seeded generator of structured
//! synthetic photographs (smooth backgrounds, anti-aliased shapes, stripes)
//! that a small SR model can learn from, plus dataset writers.

use std::path::Path;

use mlrn::image::{save_image, Image, ImageF};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn unit(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn range(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + unit(rng) * (hi - lo)
}

/// Coverage of a point against a soft edge: 1 inside, 0 outside, linear
/// over one pixel.
fn soft(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

/// A structured synthetic photo: gradient background, random anti-aliased
/// rectangles, disks, and stripe bands.
pub fn synth_image(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut img = ImageF::zeros(width, height, 3);

    // Background gradient.
    let base: [f64; 3] = [
        range(&mut rng, 40.0, 200.0),
        range(&mut rng, 40.0, 200.0),
        range(&mut rng, 40.0, 200.0),
    ];
    let gx: [f64; 3] = [
        range(&mut rng, -0.8, 0.8),
        range(&mut rng, -0.8, 0.8),
        range(&mut rng, -0.8, 0.8),
    ];
    let gy: [f64; 3] = [
        range(&mut rng, -0.8, 0.8),
        range(&mut rng, -0.8, 0.8),
        range(&mut rng, -0.8, 0.8),
    ];
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                img.set(x, y, c, base[c] + gx[c] * x as f64 + gy[c] * y as f64);
            }
        }
    }

    // Stripe band with a random orientation.
    let angle = range(&mut rng, 0.0, std::f64::consts::PI);
    let period = range(&mut rng, 6.0, 18.0);
    let amp: [f64; 3] = [
        range(&mut rng, 5.0, 30.0),
        range(&mut rng, 5.0, 30.0),
        range(&mut rng, 5.0, 30.0),
    ];
    let (sin_a, cos_a) = angle.sin_cos();
    for y in 0..height {
        for x in 0..width {
            let t = (x as f64 * cos_a + y as f64 * sin_a) / period;
            let s = (t * std::f64::consts::TAU).sin();
            for c in 0..3 {
                let v = img.get(x, y, c) + amp[c] * s;
                img.set(x, y, c, v);
            }
        }
    }

    // Shapes: rectangles and disks with soft (1 px) edges.
    let shapes = 6 + (rng.next_u64() % 5) as usize;
    for _ in 0..shapes {
        let color: [f64; 3] = [
            range(&mut rng, 10.0, 245.0),
            range(&mut rng, 10.0, 245.0),
            range(&mut rng, 10.0, 245.0),
        ];
        let kind = rng.next_u64() % 2;
        if kind == 0 {
            let cx = range(&mut rng, 0.0, width as f64);
            let cy = range(&mut rng, 0.0, height as f64);
            let r = range(&mut rng, 4.0, width as f64 / 4.0);
            for y in 0..height {
                for x in 0..width {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt() - r;
                    let a = soft(d);
                    if a > 0.0 {
                        for c in 0..3 {
                            let v = img.get(x, y, c) * (1.0 - a) + color[c] * a;
                            img.set(x, y, c, v);
                        }
                    }
                }
            }
        } else {
            let x0 = range(&mut rng, 0.0, width as f64 * 0.8);
            let y0 = range(&mut rng, 0.0, height as f64 * 0.8);
            let w = range(&mut rng, 6.0, width as f64 / 2.5);
            let h = range(&mut rng, 6.0, height as f64 / 2.5);
            for y in 0..height {
                for x in 0..width {
                    let dx = (x0 - x as f64).max(x as f64 - (x0 + w));
                    let dy = (y0 - y as f64).max(y as f64 - (y0 + h));
                    let a = soft(dx.max(dy));
                    if a > 0.0 {
                        for c in 0..3 {
                            let v = img.get(x, y, c) * (1.0 - a) + color[c] * a;
                            img.set(x, y, c, v);
                        }
                    }
                }
            }
        }
    }

    img.quantize()
}

/// A flat-color scene full of hard (not anti-aliased) axis-aligned
/// rectangles, disks, and thin lines. Bicubic upscaling blurs the step
/// edges badly, which is exactly the structure a small SR model can learn
/// to re-sharpen.
pub fn synth_image_hard(seed: u64, width: usize, height: usize) -> Image {
    let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b97f4a7c15));
    let mut img = ImageF::zeros(width, height, 3);

    let base: [f64; 3] = [
        range(&mut rng, 30.0, 220.0),
        range(&mut rng, 30.0, 220.0),
        range(&mut rng, 30.0, 220.0),
    ];
    for y in 0..height {
        for x in 0..width {
            for c in 0..3 {
                img.set(x, y, c, base[c]);
            }
        }
    }

    let shapes = 10 + (rng.next_u64() % 6) as usize;
    for _ in 0..shapes {
        let color: [f64; 3] = [
            range(&mut rng, 5.0, 250.0),
            range(&mut rng, 5.0, 250.0),
            range(&mut rng, 5.0, 250.0),
        ];
        match rng.next_u64() % 3 {
            0 => {
                // Hard-edged disk.
                let cx = range(&mut rng, 0.0, width as f64);
                let cy = range(&mut rng, 0.0, height as f64);
                let r2 = range(&mut rng, 4.0, width as f64 / 4.0).powi(2);
                for y in 0..height {
                    for x in 0..width {
                        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
                        if d2 <= r2 {
                            for c in 0..3 {
                                img.set(x, y, c, color[c]);
                            }
                        }
                    }
                }
            }
            1 => {
                // Hard-edged rectangle.
                let x0 = (rng.next_u64() % width as u64) as usize;
                let y0 = (rng.next_u64() % height as u64) as usize;
                let w = 4 + (rng.next_u64() % (width as u64 / 2)) as usize;
                let h = 4 + (rng.next_u64() % (height as u64 / 2)) as usize;
                for y in y0..(y0 + h).min(height) {
                    for x in x0..(x0 + w).min(width) {
                        for c in 0..3 {
                            img.set(x, y, c, color[c]);
                        }
                    }
                }
            }
            _ => {
                // Thin line, horizontal or vertical, 1-2 px.
                let thickness = 1 + (rng.next_u64() % 2) as usize;
                if rng.next_u64() & 1 == 0 {
                    let y0 = (rng.next_u64() % height as u64) as usize;
                    for y in y0..(y0 + thickness).min(height) {
                        for x in 0..width {
                            for c in 0..3 {
                                img.set(x, y, c, color[c]);
                            }
                        }
                    }
                } else {
                    let x0 = (rng.next_u64() % width as u64) as usize;
                    for x in x0..(x0 + thickness).min(width) {
                        for y in 0..height {
                            for c in 0..3 {
                                img.set(x, y, c, color[c]);
                            }
                        }
                    }
                }
            }
        }
    }

    img.quantize()
}

/// Write `count` synthetic HR images into `dir` as HR PNGs.
pub fn write_synth_hr_dir(dir: &Path, count: usize, seed: u64, width: usize, height: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        let img = synth_image(seed.wrapping_add(i as u64), width, height);
        save_image(&img, &dir.join(format!("synth{i:03}.png"))).unwrap();
    }
}

/// Write `count` hard-edged synthetic HR images into `dir`.
pub fn write_hard_hr_dir(dir: &Path, count: usize, seed: u64, width: usize, height: usize) {
    std::fs::create_dir_all(dir).unwrap();
    for i in 0..count {
        let img = synth_image_hard(seed.wrapping_add(i as u64), width, height);
        save_image(&img, &dir.join(format!("synth{i:03}.png"))).unwrap();
    }
}

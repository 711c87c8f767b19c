//! Procedural clean scenes: a sky gradient over textured ground with
//! buildings and round objects. They stand in for photographs so the whole
//! pipeline runs without external data.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{save_image, Image, WeatherError};
use crate::tensor::{Shape, Tensor};

fn color(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> [f64; 3] {
    [0, 1, 2].map(|_| rng.gen_range(lo..hi))
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] * (1.0 - t) + b[c] * t)
}

enum Object {
    Building {
        x0: f64,
        x1: f64,
        top: f64,
        base: f64,
        wall: [f64; 3],
        window: [f64; 3],
        cell: f64,
    },
    Disc {
        cx: f64,
        cy: f64,
        r: f64,
        fill: [f64; 3],
    },
}

pub fn procedural_scene(height: usize, width: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (height as f64, width as f64);
    let horizon = rng.gen_range(0.35..0.6) * h;
    let sky_top = color(&mut rng, 0.1, 0.6);
    let sky_low = color(&mut rng, 0.4, 0.9);
    let ground_near = color(&mut rng, 0.05, 0.5);
    let ground_far = color(&mut rng, 0.2, 0.7);
    let freq = [rng.gen_range(0.1..0.5), rng.gen_range(0.1..0.5)];
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let texture = rng.gen_range(0.03..0.12);

    let mut objects = Vec::new();
    for _ in 0..rng.gen_range(2..6) {
        let bw = rng.gen_range(0.08..0.3) * w;
        let x0 = rng.gen_range(-0.1..0.95) * w;
        let base = horizon + rng.gen_range(0.0..0.15) * h;
        objects.push(Object::Building {
            x0,
            x1: x0 + bw,
            top: base - rng.gen_range(0.15..0.5) * h,
            base,
            wall: color(&mut rng, 0.15, 0.75),
            window: color(&mut rng, 0.0, 1.0),
            cell: rng.gen_range(3.0..7.0),
        });
    }
    for _ in 0..rng.gen_range(1..5) {
        objects.push(Object::Disc {
            cx: rng.gen_range(0.0..w),
            cy: rng.gen_range(0.2..1.0) * h,
            r: rng.gen_range(0.04..0.15) * w.min(h),
            fill: color(&mut rng, 0.0, 1.0),
        });
    }

    Tensor::from_fn(Shape::new(1, height, width, 3), |_, i, j, c| {
        let (y, x) = (i as f64 + 0.5, j as f64 + 0.5);
        let mut px = if y < horizon {
            mix(sky_top, sky_low, y / horizon)
        } else {
            let t = (y - horizon) / (h - horizon).max(1.0);
            let g = mix(ground_far, ground_near, t);
            let wave = texture * ((x * freq[0] + phase).sin() * (y * freq[1]).cos());
            g.map(|v| v + wave)
        };
        for obj in &objects {
            match *obj {
                Object::Building {
                    x0,
                    x1,
                    top,
                    base,
                    wall,
                    window,
                    cell,
                } => {
                    if x >= x0 && x < x1 && y >= top && y < base {
                        let (u, v) = (((x - x0) / cell).fract(), ((y - top) / cell).fract());
                        px = if (0.3..0.7).contains(&u) && (0.3..0.7).contains(&v) {
                            window
                        } else {
                            wall
                        };
                    }
                }
                Object::Disc { cx, cy, r, fill } => {
                    let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                    let a = (r + 0.5 - d).clamp(0.0, 1.0);
                    px = mix(px, fill, a);
                }
            }
        }
        px[c].clamp(0.0, 1.0) as f32
    })
}

/// Writes `count` scenes as `scene_{k:04}.png` and returns their paths.
pub fn write_scenes(dir: &Path, count: usize, height: usize, width: usize, seed: u64) -> Result<Vec<PathBuf>, WeatherError> {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let path = dir.join(format!("scene_{k:04}.png"));
            save_image(&path, &procedural_scene(height, width, seeds.gen()))?;
            Ok(path)
        })
        .collect()
}

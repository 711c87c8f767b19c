//! WebAssembly bindings for a single static page. Each export returns plain
//! numbers or RGBA bytes that the page draws onto a canvas.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use tanet::tensor::kernels::{channel_avg_pool, channel_max_pool, expand, strip_pool_h, strip_pool_v};
use tanet::train::cosine_lr;
use tanet::weather::{apply, scene, Degradation, DegradationSpec, Image, WeatherKind};

fn to_rgba(panels: &[&Image]) -> Vec<u8> {
    let s = panels[0].shape();
    let width = s.width * panels.len();
    let mut out = vec![255u8; s.height * width * 4];
    for (p, img) in panels.iter().enumerate() {
        let c = img.shape().channels;
        for i in 0..s.height {
            for j in 0..s.width {
                let px = (i * width + p * s.width + j) * 4;
                for k in 0..3 {
                    let v = img.at(0, i, j, if c == 1 { 0 } else { k });
                    out[px + k] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                }
            }
        }
    }
    out
}

/// Stretches a single-channel map to [0, 1] for display.
fn normalize(map: &Image) -> Image {
    let (lo, hi) = map
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = (hi - lo).max(1e-6);
    map.map(|v| (v - lo) / span)
}

/// Clean scene and its degraded copy. `strength` in [0, 2] scales the
/// randomly drawn haze density, rain intensity or snow opacity.
pub fn weather_pair(kind: &str, seed: u32, size: usize, strength: f64) -> Result<(Image, Image), String> {
    let kind: WeatherKind = kind.parse().map_err(|e| format!("{e}"))?;
    if !(8..=512).contains(&size) {
        return Err(format!("size {size} outside 8..=512"));
    }
    let strength = strength.clamp(0.0, 2.0);
    let clean = scene::procedural_scene(size, size, seed as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64 ^ 0x5eed);
    let mut spec = DegradationSpec::random(kind, size, size, &mut rng);
    match &mut spec.degradation {
        Degradation::Haze(p) => p.beta *= strength,
        Degradation::Rain(p) => p.intensity = (p.intensity * strength).min(1.0),
        Degradation::Snow(p) => p.transparency = (p.transparency * strength).min(1.0),
    }
    let degraded = apply(&clean, &spec).map_err(|e| e.to_string())?;
    Ok((clean, degraded))
}

/// Parameter-free inputs of the two spatial attentions on a degraded image:
/// channel mean and channel max (local pixel-wise branch) and the summed
/// horizontal and vertical strip means (global strip-wise branch).
pub fn pooling_maps(kind: &str, seed: u32, size: usize) -> Result<[Image; 4], String> {
    let (_, degraded) = weather_pair(kind, seed, size, 1.0)?;
    let avg = normalize(&channel_avg_pool(&degraded));
    let (max, _) = channel_max_pool(&degraded);
    let s = degraded.shape();
    let h = expand(&strip_pool_h(&degraded), s.height, s.width).map_err(|e| e.to_string())?;
    let v = expand(&strip_pool_v(&degraded), s.height, s.width).map_err(|e| e.to_string())?;
    let strips = normalize(&channel_avg_pool(&h.zip_map(&v, |a, b| a + b).map_err(|e| e.to_string())?));
    Ok([degraded, avg, normalize(&max), strips])
}

/// `samples` evenly spaced points of the cosine schedule, endpoints included.
pub fn lr_points(total_steps: u32, lr0: f64, lr_min: f64, samples: u32) -> Vec<f64> {
    let n = samples.max(2) as usize;
    (0..n)
        .map(|k| {
            let step = (k as f64 * total_steps as f64 / (n - 1) as f64).round() as usize;
            cosine_lr(step, total_steps as usize, lr0, lr_min)
        })
        .collect()
}

/// RGBA, `2 * size` wide: clean on the left, degraded on the right.
#[wasm_bindgen]
pub fn weather_preview(kind: &str, seed: u32, size: usize, strength: f64) -> Result<Vec<u8>, JsError> {
    let (clean, degraded) = weather_pair(kind, seed, size, strength).map_err(|e| JsError::new(&e))?;
    Ok(to_rgba(&[&clean, &degraded]))
}

/// RGBA, `4 * size` wide: degraded input, channel mean, channel max, strips.
#[wasm_bindgen]
pub fn attention_preview(kind: &str, seed: u32, size: usize) -> Result<Vec<u8>, JsError> {
    let maps = pooling_maps(kind, seed, size).map_err(|e| JsError::new(&e))?;
    Ok(to_rgba(&maps.iter().collect::<Vec<_>>()))
}

#[wasm_bindgen]
pub fn lr_curve(total_steps: u32, lr0: f64, lr_min: f64, samples: u32) -> Vec<f64> {
    lr_points(total_steps, lr0, lr_min, samples)
}

//! Procedural haze, rain and snow applied to clean images in [0, 1].

use std::fmt;
use std::hash::Hasher;
use std::str::FromStr;

use fnv::FnvHasher;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Image, WeatherError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WeatherKind {
    Haze,
    Rain,
    Snow,
}

impl WeatherKind {
    pub const ALL: [WeatherKind; 3] = [WeatherKind::Haze, WeatherKind::Rain, WeatherKind::Snow];

    pub fn name(self) -> &'static str {
        match self {
            WeatherKind::Haze => "haze",
            WeatherKind::Rain => "rain",
            WeatherKind::Snow => "snow",
        }
    }
}

impl fmt::Display for WeatherKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for WeatherKind {
    type Err = WeatherError;

    fn from_str(s: &str) -> Result<Self, WeatherError> {
        match s {
            "haze" => Ok(WeatherKind::Haze),
            "rain" => Ok(WeatherKind::Rain),
            "snow" => Ok(WeatherKind::Snow),
            other => Err(WeatherError::Param(format!("unknown weather kind '{other}'"))),
        }
    }
}

/// Synthetic scene depth in [0.1, 1]; transmission is `exp(-beta * depth)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DepthMap {
    /// Depth grows linearly along direction `angle_deg` (0 = top is far).
    Linear { angle_deg: f64 },
    /// Depth shrinks with distance from a vanishing point given in relative
    /// image coordinates.
    Radial { cx: f64, cy: f64 },
}

pub const MIN_DEPTH: f64 = 0.1;

impl DepthMap {
    pub fn at(&self, i: usize, j: usize, h: usize, w: usize) -> f64 {
        let y = if h > 1 { i as f64 / (h - 1) as f64 } else { 0.5 };
        let x = if w > 1 { j as f64 / (w - 1) as f64 } else { 0.5 };
        let unit = match *self {
            DepthMap::Linear { angle_deg } => {
                let a = angle_deg.to_radians();
                // Project onto the "up" direction rotated by angle; map [-1, 1] to [0, 1].
                let (dx, dy) = (a.sin(), -a.cos());
                let p = (x - 0.5) * dx + (y - 0.5) * dy;
                let reach = 0.5 * (dx.abs() + dy.abs());
                0.5 + 0.5 * p / reach
            }
            DepthMap::Radial { cx, cy } => {
                let d = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
                let far = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
                    .iter()
                    .map(|&(px, py): &(f64, f64)| ((px - cx).powi(2) + (py - cy).powi(2)).sqrt())
                    .fold(0.0, f64::max);
                1.0 - d / far
            }
        };
        MIN_DEPTH + (1.0 - MIN_DEPTH) * unit.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazeParams {
    pub beta: f64,
    pub airlight: [f64; 3],
    pub depth: DepthMap,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RainParams {
    pub streak_count: usize,
    /// Streak length in pixels.
    pub length: f64,
    /// Lean from vertical in degrees, positive to the right going down.
    pub angle_deg: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnowParams {
    pub flake_count: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    pub transparency: f64,
    /// Gaussian sigma in pixels; 0 disables the blur.
    pub blur_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degradation {
    Haze(HazeParams),
    Rain(RainParams),
    Snow(SnowParams),
}

/// A fully specified corruption. Same spec, same image: same output bits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationSpec {
    pub degradation: Degradation,
    pub seed: u64,
}

fn param_err(msg: String) -> WeatherError {
    WeatherError::Param(msg)
}

impl DegradationSpec {
    pub fn kind(&self) -> WeatherKind {
        match self.degradation {
            Degradation::Haze(_) => WeatherKind::Haze,
            Degradation::Rain(_) => WeatherKind::Rain,
            Degradation::Snow(_) => WeatherKind::Snow,
        }
    }

    pub fn validate(&self) -> Result<(), WeatherError> {
        match &self.degradation {
            Degradation::Haze(p) => {
                if !(p.beta >= 0.0) {
                    return Err(param_err(format!("haze beta must be >= 0, got {}", p.beta)));
                }
                if p.airlight.iter().any(|a| !(0.7..=1.0).contains(a)) {
                    return Err(param_err(format!("airlight {:?} outside [0.7, 1.0]", p.airlight)));
                }
            }
            Degradation::Rain(p) => {
                if !(p.length > 0.0) || !p.length.is_finite() {
                    return Err(param_err(format!("rain length must be > 0, got {}", p.length)));
                }
                if !(-30.0..=30.0).contains(&p.angle_deg) {
                    return Err(param_err(format!("rain angle {} outside [-30, 30]", p.angle_deg)));
                }
                if !(0.0..=1.0).contains(&p.intensity) {
                    return Err(param_err(format!("rain intensity {} outside [0, 1]", p.intensity)));
                }
            }
            Degradation::Snow(p) => {
                if !(p.radius_min > 0.0) || !(p.radius_max >= p.radius_min) || !p.radius_max.is_finite() {
                    return Err(param_err(format!(
                        "snow radius range [{}, {}] is invalid",
                        p.radius_min, p.radius_max
                    )));
                }
                if !(0.0..=1.0).contains(&p.transparency) {
                    return Err(param_err(format!("snow transparency {} outside [0, 1]", p.transparency)));
                }
                if !(p.blur_radius >= 0.0) || !p.blur_radius.is_finite() {
                    return Err(param_err(format!("snow blur radius must be >= 0, got {}", p.blur_radius)));
                }
            }
        }
        Ok(())
    }

    /// Stable 64-bit digest of the spec, hex encoded.
    pub fn hash_hex(&self) -> String {
        let mut h = FnvHasher::default();
        h.write(format!("{:?}", self).as_bytes());
        format!("{:016x}", h.finish())
    }

    /// Random spec of the given kind, scaled to an `height x width` image.
    pub fn random(kind: WeatherKind, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let area = (height * width) as f64;
        let degradation = match kind {
            WeatherKind::Haze => {
                let base = rng.gen_range(0.75..0.95);
                let tint = [0, 1, 2].map(|_| (base + rng.gen_range(-0.05..0.05f64)).clamp(0.7, 1.0));
                let depth = if rng.gen_bool(0.5) {
                    DepthMap::Linear {
                        angle_deg: rng.gen_range(-40.0..40.0),
                    }
                } else {
                    DepthMap::Radial {
                        cx: rng.gen_range(0.2..0.8),
                        cy: rng.gen_range(0.1..0.6),
                    }
                };
                Degradation::Haze(HazeParams {
                    beta: rng.gen_range(0.6..2.0),
                    airlight: tint,
                    depth,
                })
            }
            WeatherKind::Rain => Degradation::Rain(RainParams {
                streak_count: rng.gen_range((area / 200.0) as usize..=(area / 80.0) as usize).max(1),
                length: rng.gen_range(8.0..20.0),
                angle_deg: rng.gen_range(-30.0..30.0),
                intensity: rng.gen_range(0.5..0.9),
            }),
            WeatherKind::Snow => {
                let radius_min = rng.gen_range(0.8..1.5);
                Degradation::Snow(SnowParams {
                    flake_count: rng.gen_range((area / 150.0) as usize..=(area / 60.0) as usize).max(1),
                    radius_min,
                    radius_max: radius_min + rng.gen_range(0.5..2.0),
                    transparency: rng.gen_range(0.6..0.95),
                    blur_radius: rng.gen_range(0.0..1.0),
                })
            }
        };
        Self {
            degradation,
            seed: rng.gen(),
        }
    }
}

fn check_image(img: &Image) -> Result<(), WeatherError> {
    let s = img.shape();
    if s.batch != 1 || s.channels != 3 {
        return Err(WeatherError::Param(format!("expected a single RGB image, got {s}")));
    }
    Ok(())
}

/// Atmospheric scattering: `I = J t + A (1 - t)` with `t = exp(-beta d)`.
pub fn synth_haze(clean: &Image, p: &HazeParams) -> Result<Image, WeatherError> {
    check_image(clean)?;
    DegradationSpec {
        degradation: Degradation::Haze(*p),
        seed: 0,
    }
    .validate()?;
    let s = clean.shape();
    Ok(Tensor::from_fn(s, |_, i, j, c| {
        let t = (-p.beta * p.depth.at(i, j, s.height, s.width)).exp();
        let v = clean.at(0, i, j, c) as f64 * t + p.airlight[c] * (1.0 - t);
        v.clamp(0.0, 1.0) as f32
    }))
}

/// Adds `weight` at a sub-pixel position with bilinear splatting.
fn splat(layer: &mut [f64], h: usize, w: usize, x: f64, y: f64, weight: f64) {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let (yy, xx) = (y0 as isize + dy, x0 as isize + dx);
            if yy >= 0 && xx >= 0 && (yy as usize) < h && (xx as usize) < w {
                layer[yy as usize * w + xx as usize] += weight * wy * wx;
            }
        }
    }
}

/// Streak layer in [0, 1]: seeded drop positions, each smeared into a line
/// segment along the rain direction.
pub fn rain_layer(h: usize, w: usize, p: &RainParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = vec![0.0; h * w];
    let a = p.angle_deg.to_radians();
    let (dx, dy) = (a.sin(), a.cos());
    let step = 0.25;
    let samples = (p.length / step).round().max(1.0) as usize;
    for _ in 0..p.streak_count {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let brightness = rng.gen_range(0.6..1.0);
        for k in 0..=samples {
            let t = -p.length / 2.0 + k as f64 * p.length / samples as f64;
            splat(&mut layer, h, w, cx + t * dx, cy + t * dy, brightness * step * 2.0);
        }
    }
    layer.iter_mut().for_each(|v| *v = v.min(1.0));
    layer
}

/// Screen-blends a streak layer over the clean image.
pub fn synth_rain(clean: &Image, p: &RainParams, seed: u64) -> Result<Image, WeatherError> {
    check_image(clean)?;
    DegradationSpec {
        degradation: Degradation::Rain(*p),
        seed,
    }
    .validate()?;
    if p.streak_count == 0 || p.intensity == 0.0 {
        return Ok(clean.clone());
    }
    let s = clean.shape();
    let layer = rain_layer(s.height, s.width, p, seed);
    Ok(Tensor::from_fn(s, |_, i, j, c| {
        let l = p.intensity * layer[i * s.width + j];
        let v = 1.0 - (1.0 - clean.at(0, i, j, c) as f64) * (1.0 - l);
        v.clamp(0.0, 1.0) as f32
    }))
}

/// Separable Gaussian blur with clamped borders.
pub fn gaussian_blur(layer: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return layer.to_vec();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-r..=r).map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            tmp[i * w + j] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| {
                    let jj = (j as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                    kv * layer[i * w + jj]
                })
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            out[i * w + j] = kernel
                .iter()
                .enumerate()
                .map(|(k, kv)| {
                    let ii = (i as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                    kv * tmp[ii * w + j]
                })
                .sum();
        }
    }
    out
}

/// Flake coverage in [0, 1]: anti-aliased ellipses of random radius and
/// orientation, then blurred.
pub fn snow_layer(h: usize, w: usize, p: &SnowParams, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = vec![0.0f64; h * w];
    for _ in 0..p.flake_count {
        let cx = rng.gen_range(0.0..w as f64);
        let cy = rng.gen_range(0.0..h as f64);
        let r = if p.radius_max > p.radius_min {
            rng.gen_range(p.radius_min..p.radius_max)
        } else {
            p.radius_min
        };
        let aspect = rng.gen_range(0.6..1.0);
        let theta = rng.gen_range(0.0..std::f64::consts::PI);
        let opacity = rng.gen_range(0.6..1.0);
        let (ct, st) = (theta.cos(), theta.sin());
        let reach = r.ceil() as isize + 1;
        for yy in (cy as isize - reach)..=(cy as isize + reach) {
            for xx in (cx as isize - reach)..=(cx as isize + reach) {
                if yy < 0 || xx < 0 || yy as usize >= h || xx as usize >= w {
                    continue;
                }
                let (px, py) = (xx as f64 + 0.5 - cx, yy as f64 + 0.5 - cy);
                let u = px * ct + py * st;
                let v = (-px * st + py * ct) / aspect;
                let dist = (u * u + v * v).sqrt();
                let cover = (r + 0.5 - dist).clamp(0.0, 1.0) * opacity;
                let slot = &mut layer[yy as usize * w + xx as usize];
                *slot = slot.max(cover);
            }
        }
    }
    gaussian_blur(&layer, h, w, p.blur_radius)
}

/// Alpha-composites white flakes over the clean image.
pub fn synth_snow(clean: &Image, p: &SnowParams, seed: u64) -> Result<Image, WeatherError> {
    check_image(clean)?;
    DegradationSpec {
        degradation: Degradation::Snow(*p),
        seed,
    }
    .validate()?;
    if p.flake_count == 0 || p.transparency == 0.0 {
        return Ok(clean.clone());
    }
    let s = clean.shape();
    let layer = snow_layer(s.height, s.width, p, seed);
    Ok(Tensor::from_fn(s, |_, i, j, c| {
        let a = p.transparency * layer[i * s.width + j];
        let v = clean.at(0, i, j, c) as f64 * (1.0 - a) + a;
        v.clamp(0.0, 1.0) as f32
    }))
}

/// Applies any spec. Specs may be chained to compose weather.
pub fn apply(clean: &Image, spec: &DegradationSpec) -> Result<Image, WeatherError> {
    match &spec.degradation {
        Degradation::Haze(p) => synth_haze(clean, p),
        Degradation::Rain(p) => synth_rain(clean, p, spec.seed),
        Degradation::Snow(p) => synth_snow(clean, p, spec.seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::psnr;
    use crate::tensor::Shape;
    use crate::weather::scene::procedural_scene;

    fn haze(beta: f64) -> HazeParams {
        HazeParams {
            beta,
            airlight: [1.0, 0.9, 0.8],
            depth: DepthMap::Linear { angle_deg: 0.0 },
        }
    }

    #[test]
    fn haze_limits() {
        let clean = procedural_scene(16, 16, 1);
        assert_eq!(synth_haze(&clean, &haze(0.0)).unwrap(), clean);
        let thick = synth_haze(&clean, &haze(1e4)).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(thick.at(0, i, j, 0), 1.0);
                assert!((thick.at(0, i, j, 2) - 0.8).abs() < 1e-7);
            }
        }
        assert!(synth_haze(&clean, &haze(-0.1)).is_err());
    }

    #[test]
    fn haze_hand_pixel() {
        // Single pixel: depth is the midpoint, choose beta so that t = 0.5.
        let clean = Tensor::full(Shape::new(1, 1, 1, 3), 0.2f32);
        let d = DepthMap::Linear { angle_deg: 0.0 }.at(0, 0, 1, 1);
        let p = HazeParams {
            beta: (2.0f64).ln() / d,
            airlight: [1.0; 3],
            depth: DepthMap::Linear { angle_deg: 0.0 },
        };
        let out = synth_haze(&clean, &p).unwrap();
        assert!((out.at(0, 0, 0, 0) - 0.6).abs() < 1e-6);
    }

    #[test]
    fn depth_maps_stay_in_range() {
        for map in [
            DepthMap::Linear { angle_deg: 35.0 },
            DepthMap::Linear { angle_deg: -90.0 },
            DepthMap::Radial { cx: 0.3, cy: 0.2 },
        ] {
            for i in 0..10 {
                for j in 0..13 {
                    let d = map.at(i, j, 10, 13);
                    assert!((MIN_DEPTH..=1.0).contains(&d), "{d}");
                }
            }
        }
    }

    #[test]
    fn zero_strength_rain_and_snow_are_noops() {
        let clean = procedural_scene(24, 24, 2);
        let rain = RainParams {
            streak_count: 20,
            length: 10.0,
            angle_deg: 10.0,
            intensity: 0.0,
        };
        assert_eq!(synth_rain(&clean, &rain, 3).unwrap(), clean);
        let none = RainParams { streak_count: 0, intensity: 0.8, ..rain };
        assert_eq!(synth_rain(&clean, &none, 3).unwrap(), clean);
        let snow = SnowParams {
            flake_count: 30,
            radius_min: 1.0,
            radius_max: 2.0,
            transparency: 0.0,
            blur_radius: 0.5,
        };
        assert_eq!(synth_snow(&clean, &snow, 3).unwrap(), clean);
    }

    #[test]
    fn random_specs_degrade_and_are_deterministic() {
        let clean = procedural_scene(48, 48, 5);
        for kind in WeatherKind::ALL {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let spec = DegradationSpec::random(kind, 48, 48, &mut rng);
            spec.validate().unwrap();
            let a = apply(&clean, &spec).unwrap();
            let b = apply(&clean, &spec).unwrap();
            assert_eq!(a, b);
            assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(psnr(&a, &clean, 1.0).unwrap() < 60.0, "{kind}");
            if kind != WeatherKind::Haze {
                assert!(a.mean() >= clean.mean());
            }
        }
    }

    /// Orientation from vertical of the principal axis of `weights`, plus
    /// the number of 8-connected components of its support.
    fn streak_geometry(weights: &[f64], h: usize, w: usize) -> (f64, usize) {
        let total: f64 = weights.iter().sum();
        let (mut mx, mut my) = (0.0, 0.0);
        for (k, &v) in weights.iter().enumerate() {
            mx += v * (k % w) as f64;
            my += v * (k / w) as f64;
        }
        let (mx, my) = (mx / total, my / total);
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (k, &v) in weights.iter().enumerate() {
            let (dx, dy) = ((k % w) as f64 - mx, (k / w) as f64 - my);
            sxx += v * dx * dx;
            syy += v * dy * dy;
            sxy += v * dx * dy;
        }
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let (mut ex, mut ey) = (theta.cos(), theta.sin());
        if ey < 0.0 {
            (ex, ey) = (-ex, -ey);
        }
        let angle = ex.atan2(ey).to_degrees();

        let mut label = vec![false; h * w];
        let mut components = 0;
        for start in 0..h * w {
            if weights[start] <= 0.0 || label[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            label[start] = true;
            while let Some(k) = stack.pop() {
                let (i, j) = ((k / w) as isize, (k % w) as isize);
                for di in -1..=1 {
                    for dj in -1..=1 {
                        let (ii, jj) = (i + di, j + dj);
                        if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                            continue;
                        }
                        let n = ii as usize * w + jj as usize;
                        if weights[n] > 0.0 && !label[n] {
                            label[n] = true;
                            stack.push(n);
                        }
                    }
                }
            }
        }
        (angle, components)
    }

    #[test]
    fn single_streak_is_one_line_at_the_requested_angle() {
        let (h, w) = (64, 64);
        let clean = Tensor::full(Shape::new(1, h, w, 3), 0.3f32);
        for (seed, angle) in [(1u64, 0.0), (2, 17.0), (3, -25.0), (4, 30.0), (5, -8.5)] {
            let p = RainParams {
                streak_count: 1,
                length: 24.0,
                angle_deg: angle,
                intensity: 0.9,
            };
            let out = synth_rain(&clean, &p, seed).unwrap();
            let diff: Vec<f64> = (0..h * w)
                .map(|k| (out.at(0, k / w, k % w, 0) - clean.at(0, k / w, k % w, 0)) as f64)
                .collect();
            let (measured, components) = streak_geometry(&diff, h, w);
            assert_eq!(components, 1, "seed {seed}");
            assert!((measured - angle).abs() <= 1.0, "wanted {angle}, measured {measured}");
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let clean = procedural_scene(8, 8, 0);
        let rain = RainParams {
            streak_count: 1,
            length: 5.0,
            angle_deg: 45.0,
            intensity: 0.5,
        };
        assert!(synth_rain(&clean, &rain, 0).is_err());
        let snow = SnowParams {
            flake_count: 1,
            radius_min: 2.0,
            radius_max: 1.0,
            transparency: 0.5,
            blur_radius: 0.0,
        };
        assert!(synth_snow(&clean, &snow, 0).is_err());
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in WeatherKind::ALL {
            assert_eq!(k.name().parse::<WeatherKind>().unwrap(), k);
        }
        assert!("fog".parse::<WeatherKind>().is_err());
    }
}

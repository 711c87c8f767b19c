use rand::Rng;

use super::{Image, WeatherError};
use crate::tensor::{Shape, Tensor};

/// Square crop, optional horizontal flip, then `rot` counter-clockwise
/// quarter turns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Transform {
    pub top: usize,
    pub left: usize,
    pub size: usize,
    pub flip: bool,
    pub rot: u8,
}

impl Transform {
    pub fn identity(size: usize) -> Self {
        Self {
            top: 0,
            left: 0,
            size,
            flip: false,
            rot: 0,
        }
    }

    pub fn random(height: usize, width: usize, crop: usize, rng: &mut impl Rng) -> Result<Self, WeatherError> {
        if crop == 0 || height < crop || width < crop {
            return Err(WeatherError::Param(format!(
                "image {height}x{width} is smaller than crop {crop}; resize the image or lower the crop"
            )));
        }
        Ok(Self {
            top: rng.gen_range(0..=height - crop),
            left: rng.gen_range(0..=width - crop),
            size: crop,
            flip: rng.gen_bool(0.5),
            rot: rng.gen_range(0..4),
        })
    }

    fn source(&self, mut i: usize, mut j: usize) -> (usize, usize) {
        let last = self.size - 1;
        // Undo the rotations, then the flip.
        for _ in 0..self.rot % 4 {
            (i, j) = (j, last - i);
        }
        if self.flip {
            j = last - j;
        }
        (self.top + i, self.left + j)
    }

    pub fn apply(&self, img: &Image) -> Result<Image, WeatherError> {
        let s = img.shape();
        if self.top + self.size > s.height || self.left + self.size > s.width {
            return Err(WeatherError::Param(format!(
                "crop window {}+{} x {}+{} exceeds image {}x{}; resize the image or lower the crop",
                self.top, self.size, self.left, self.size, s.height, s.width
            )));
        }
        Ok(Tensor::from_fn(Shape::new(s.batch, self.size, self.size, s.channels), |b, i, j, c| {
            let (si, sj) = self.source(i, j);
            img.at(b, si, sj, c)
        }))
    }
}

/// Applies one random transform identically to both images of a pair.
pub fn augment(degraded: &Image, clean: &Image, crop: usize, rng: &mut impl Rng) -> Result<(Image, Image), WeatherError> {
    if degraded.shape() != clean.shape() {
        return Err(WeatherError::Param(format!(
            "pair shapes differ: {} vs {}",
            degraded.shape(),
            clean.shape()
        )));
    }
    let s = degraded.shape();
    let t = Transform::random(s.height, s.width, crop, rng)?;
    Ok((t.apply(degraded)?, t.apply(clean)?))
}

use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder, ImageFormat, RgbImage};

use super::{Image, WeatherError};
use crate::tensor::{Shape, Tensor};

fn image_err(path: &Path, e: impl std::fmt::Display) -> WeatherError {
    WeatherError::Image {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn format_for(path: &Path) -> Result<ImageFormat, WeatherError> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => Ok(ImageFormat::Png),
        Some("ppm") | Some("pnm") => Ok(ImageFormat::Pnm),
        _ => Err(image_err(path, "unsupported extension, expected .png or .ppm")),
    }
}

/// Reads an 8-bit PNG or PPM as RGB in [0, 1].
pub fn load_image(path: &Path) -> Result<Image, WeatherError> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| WeatherError::io(path, e))?;
    let rgb = image::load_from_memory_with_format(&bytes, format)
        .map_err(|e| image_err(path, e))?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Ok(Tensor::from_vec(Shape::new(1, h as usize, w as usize, 3), data)?)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Rounds to the 8-bit grid, so in-memory data matches what a round trip
/// through disk would give.
pub fn quantize(img: &Image) -> Image {
    img.map(|v| to_u8(v) as f32 / 255.0)
}

/// Writes the first image of the batch as 8-bit PNG or binary PPM.
pub fn save_image(path: &Path, img: &Image) -> Result<(), WeatherError> {
    let s = img.shape();
    if s.channels != 3 {
        return Err(WeatherError::Param(format!("can only save RGB images, got {s}")));
    }
    let format = format_for(path)?;
    let n = s.height * s.width * 3;
    let raw: Vec<u8> = img.data()[..n].iter().map(|&v| to_u8(v)).collect();
    let buf = RgbImage::from_raw(s.width as u32, s.height as u32, raw).expect("buffer matches dimensions");
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| WeatherError::io(dir, e))?;
    }
    if format == ImageFormat::Pnm {
        let file = std::fs::File::create(path).map_err(|e| WeatherError::io(path, e))?;
        let writer = std::io::BufWriter::new(file);
        PnmEncoder::new(writer)
            .with_subtype(PnmSubtype::Pixmap(SampleEncoding::Binary))
            .write_image(buf.as_raw(), s.width as u32, s.height as u32, ExtendedColorType::Rgb8)
            .map_err(|e| image_err(path, e))
    } else {
        buf.save_with_format(path, format).map_err(|e| image_err(path, e))
    }
}

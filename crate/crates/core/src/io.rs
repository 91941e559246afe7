//! Reading and writing 8-bit grayscale PNG and binary PGM files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::image_core::GrayImage;
use crate::scalar::Scalar;

/// File extensions accepted as image inputs.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "pgm"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Loads an image as grayscale. Colour images are reduced to the plain mean
/// of their red, green and blue channels.
pub fn read_image<T: Scalar>(path: &Path) -> Result<GrayImage<T>> {
    let err = |source| Error::Image { path: path.to_path_buf(), source };
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(err)?;
    from_dynamic(&decoded)
}

fn from_dynamic<T: Scalar>(img: &DynamicImage) -> Result<GrayImage<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<T> = if img.color().has_color() {
        img.to_rgb8()
            .pixels()
            .map(|p| T::lit((p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0))
            .collect()
    } else {
        img.to_luma8().pixels().map(|p| T::lit(p[0] as f64)).collect()
    };
    GrayImage::new(w, h, data)
}

/// Writes an image as 8-bit grayscale, rounding and clamping to `[0, 255]`.
/// The format follows the extension: `.pgm` gives binary PGM, anything else PNG.
pub fn write_image<T: Scalar>(path: &Path, img: &GrayImage<T>) -> Result<()> {
    let err = |source| Error::Image { path: path.to_path_buf(), source };
    let buf = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_u8())
        .expect("buffer length matches dimensions");
    let is_pgm = path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    if !is_pgm {
        return buf.save_with_format(path, ImageFormat::Png).map_err(err);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(buf.as_raw(), buf.width(), buf.height(), ExtendedColorType::L8)
        .map_err(err)?;
    out.flush().map_err(|e| Error::io(path, e))
}

//! 8-bit grayscale slice export (PGM P5 or PNG, chosen by file extension).

use std::io::Write;
use std::path::Path;

use tfus_core::ScalarField3D;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            _ => Err(Error::Argument(format!("axis must be x, y or z, got '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorScale {
    Linear,
    /// `ln(1 + 99 t) / ln(100)` of the min-max normalized value `t`.
    Log,
}

/// A row-major 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.pixels[col + self.width * row]
    }
}

/// Extracts slice `index` normal to `axis`, min-max scaled to 0..=255.
///
/// Pixel `(col, row)` is voxel `(col, row, index)` for `z`, `(col, index, row)`
/// for `y` and `(index, col, row)` for `x`. A constant slice is mid-gray.
pub fn slice_image(field: &ScalarField3D, axis: Axis, index: usize, scale: ColorScale) -> Result<GrayImage> {
    let [nx, ny, nz] = field.dims();
    let (n_axis, width, height) = match axis {
        Axis::X => (nx, ny, nz),
        Axis::Y => (ny, nx, nz),
        Axis::Z => (nz, nx, ny),
    };
    if index >= n_axis {
        return Err(Error::Argument(format!("slice index {index} out of range for axis of length {n_axis}")));
    }
    let values: Vec<f32> = (0..height)
        .flat_map(|row| (0..width).map(move |col| (col, row)))
        .map(|(col, row)| match axis {
            Axis::X => field.get(index, col, row),
            Axis::Y => field.get(col, index, row),
            Axis::Z => field.get(col, row, index),
        })
        .collect();
    let (lo, hi) = values.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let pixels = values
        .iter()
        .map(|&v| {
            if hi <= lo {
                return 128;
            }
            let t = ((v - lo) as f64 / (hi - lo) as f64).clamp(0.0, 1.0);
            let t = match scale {
                ColorScale::Linear => t,
                ColorScale::Log => (1.0 + 99.0 * t).ln() / 100f64.ln(),
            };
            (t * 255.0).round() as u8
        })
        .collect();
    Ok(GrayImage { width, height, pixels })
}

/// Writes a slice image; `.pgm` gives binary PGM, `.png` gives PNG.
pub fn export_slice_image(
    field: &ScalarField3D,
    axis: Axis,
    index: usize,
    path: &Path,
    scale: ColorScale,
) -> Result<()> {
    let img = slice_image(field, axis, index, scale)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => super::write_atomic(path, |w| {
            write!(w, "P5\n{} {}\n255\n", img.width, img.height).map_err(|e| Error::io(path, e))?;
            w.write_all(&img.pixels).map_err(|e| Error::io(path, e))
        }),
        Some("png") => super::write_atomic(path, |w| {
            let mut enc = png::Encoder::new(w, img.width as u32, img.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
            writer.write_image_data(&img.pixels).map_err(|e| Error::format(path, e.to_string()))?;
            writer.finish().map_err(|e| Error::format(path, e.to_string()))
        }),
        _ => Err(Error::Argument(format!("{}: image path must end in .pgm or .png", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tfus_core::{GridSpec, Units};

    #[test]
    fn constant_slice_is_mid_gray() {
        let f = ScalarField3D::filled(GridSpec::isotropic([4, 3, 2], 1.0).unwrap(), 7.0, Units::Pascal);
        let img = slice_image(&f, Axis::Z, 1, ColorScale::Linear).unwrap();
        assert_eq!((img.width, img.height), (4, 3));
        assert!(img.pixels.iter().all(|&p| p == 128));
    }

    #[test]
    fn log_scale_keeps_endpoints() {
        let g = GridSpec::isotropic([3, 1, 1], 1.0).unwrap();
        let f = ScalarField3D::new(g, vec![0.0, 0.1, 1.0], Units::Pascal).unwrap();
        let img = slice_image(&f, Axis::Z, 0, ColorScale::Log).unwrap();
        assert_eq!(img.pixels[0], 0);
        assert_eq!(img.pixels[2], 255);
        assert!(img.pixels[1] > 26);
    }

    #[test]
    fn axes_map_to_expected_pixels() {
        let g = GridSpec::isotropic([4, 5, 6], 1.0).unwrap();
        let f = ScalarField3D::from_fn(g, Units::Pascal, |i, j, k| if (i, j, k) == (1, 2, 3) { 1.0 } else { 0.0 })
            .unwrap();
        assert_eq!(slice_image(&f, Axis::X, 1, ColorScale::Linear).unwrap().get(2, 3), 255);
        assert_eq!(slice_image(&f, Axis::Y, 2, ColorScale::Linear).unwrap().get(1, 3), 255);
        assert_eq!(slice_image(&f, Axis::Z, 3, ColorScale::Linear).unwrap().get(1, 2), 255);
    }
}

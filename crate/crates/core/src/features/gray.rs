use std::path::Path;

use image::{DynamicImage, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Single-channel integer image with an explicit maximum pixel value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    rows: usize,
    cols: usize,
    max_value: u16,
    pixels: Vec<u16>,
}

impl GrayImage {
    pub fn new(rows: usize, cols: usize, max_value: u16, pixels: Vec<u16>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::contract("gray image must have at least one row and column"));
        }
        if max_value == 0 {
            return Err(Error::contract("maximum pixel value must be positive"));
        }
        if pixels.len() != rows * cols {
            return Err(Error::contract(format!(
                "expected {} pixels for {rows}x{cols}, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|&&p| p > max_value) {
            return Err(Error::contract(format!("pixel value {p} exceeds maximum {max_value}")));
        }
        Ok(GrayImage {
            rows,
            cols,
            max_value,
            pixels,
        })
    }

    /// 8-bit image from a row/column function.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                pixels.push(f(r, c) as u16);
            }
        }
        GrayImage::new(rows, cols, 255, pixels).expect("valid 8-bit image")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn max_value(&self) -> u16 {
        self.max_value
    }

    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.pixels[row * self.cols + col]
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => GrayImage {
                rows: g.height() as usize,
                cols: g.width() as usize,
                max_value: 255,
                pixels: g.as_raw().iter().map(|&p| p as u16).collect(),
            },
            DynamicImage::ImageLuma16(g) => GrayImage {
                rows: g.height() as usize,
                cols: g.width() as usize,
                max_value: u16::MAX,
                pixels: g.as_raw().clone(),
            },
            other => to_gray(&other.to_rgb8()),
        }
    }
}

/// Luma with weights 0.299 / 0.587 / 0.114, rounded half up.
pub fn to_gray(image: &RgbImage) -> GrayImage {
    let pixels = image
        .pixels()
        .map(|p| {
            let [r, g, b] = p.0.map(u32::from);
            ((299 * r + 587 * g + 114 * b + 500) / 1000) as u16
        })
        .collect();
    GrayImage {
        rows: image.height() as usize,
        cols: image.width() as usize,
        max_value: 255,
        pixels,
    }
}

pub fn load_gray(path: &Path) -> Result<GrayImage> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    Ok(GrayImage::from_dynamic(&img))
}

/// Mean normalized intensity, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Brightness<T>(pub T);

impl<T: Real> Brightness<T> {
    pub fn value(self) -> T {
        self.0
    }

    pub fn distance(self, other: Self) -> T {
        (self.0 - other.0).abs()
    }
}

/// `B = (1 / MN) * sum_ij I_ij / I_max`.
///
/// The pixel sum is accumulated as an integer, so the only rounding is the
/// final division.
pub fn brightness<T: Real>(g: &GrayImage) -> Brightness<T> {
    let sum: u64 = g.pixels.iter().map(|&p| p as u64).sum();
    let denom = T::of_u64(g.max_value as u64) * T::of_u64((g.rows * g.cols) as u64);
    Brightness(T::of_u64(sum) / denom)
}

use image::{GrayImage as LumaImage, Luma};

use super::GrayImage;
use crate::error::{Error, Result};

const TIE_TOLERANCE: f64 = 1e-9;

/// Thresholds are on the 8-bit gradient-magnitude scale (L2 norm of the
/// 3x3 Sobel response); 16-bit inputs are rescaled to 8-bit range first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannyParams {
    pub t_low: f64,
    pub t_high: f64,
    pub sigma: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        CannyParams {
            t_low: 100.0,
            t_high: 200.0,
            sigma: 1.4,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_low > 0.0 && self.t_low < self.t_high && self.t_high.is_finite()) {
            return Err(Error::contract(format!(
                "canny thresholds must satisfy 0 < low < high, got low={} high={}",
                self.t_low, self.t_high
            )));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::contract(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Binary edge image.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMap {
    rows: usize,
    cols: usize,
    edges: Vec<bool>,
    pub t_low: f64,
    pub t_high: f64,
}

impl EdgeMap {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.edges[row * self.cols + col]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.edges
    }

    pub fn count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// 255 on edges, 0 elsewhere.
    pub fn to_luma(&self) -> LumaImage {
        LumaImage::from_fn(self.cols as u32, self.rows as u32, |x, y| {
            Luma([if self.get(y as usize, x as usize) { 255 } else { 0 }])
        })
    }
}

/// Intermediate buffers, exposed for inspection and testing.
#[derive(Debug, Clone)]
pub struct CannyStages {
    /// Gradient magnitude after smoothing.
    pub magnitude: Vec<f64>,
    /// Local maxima along the gradient direction with magnitude >= `t_low`.
    pub candidates: Vec<bool>,
    pub edges: EdgeMap,
}

pub fn canny(g: &GrayImage, params: &CannyParams) -> Result<EdgeMap> {
    Ok(canny_stages(g, params)?.edges)
}

pub fn canny_stages(g: &GrayImage, params: &CannyParams) -> Result<CannyStages> {
    params.validate()?;
    let (rows, cols) = (g.rows(), g.cols());
    let (gx, gy) = sobel(g, params.sigma);
    let magnitude: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect();

    // Outside the image the magnitude is zero.
    let mag = |r: isize, c: isize| -> f64 {
        if r < 0 || c < 0 || r >= rows as isize || c >= cols as isize {
            0.0
        } else {
            magnitude[r as usize * cols + c as usize]
        }
    };
    // Magnitudes this close count as equal, so float noise from the blur
    // cannot break a symmetric tie.
    let tol = TIE_TOLERANCE * magnitude.iter().fold(0.0, |a: f64, &b| a.max(b));
    let tan_22_5 = (std::f64::consts::PI / 8.0).tan();
    let tan_67_5 = (3.0 * std::f64::consts::PI / 8.0).tan();

    let mut candidates = vec![false; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            let m = magnitude[i];
            if m < params.t_low {
                continue;
            }
            let (ax, ay) = (gx[i].abs(), gy[i].abs());
            let (ri, ci) = (r as isize, c as isize);
            // (before, after) neighbours across the edge; ties keep the first
            // pixel of a plateau so a symmetric ridge stays one pixel wide.
            let (before, after) = if ay <= ax * tan_22_5 {
                (mag(ri, ci - 1), mag(ri, ci + 1))
            } else if ay > ax * tan_67_5 {
                (mag(ri - 1, ci), mag(ri + 1, ci))
            } else if (gx[i] > 0.0) == (gy[i] > 0.0) {
                (mag(ri - 1, ci - 1), mag(ri + 1, ci + 1))
            } else {
                (mag(ri - 1, ci + 1), mag(ri + 1, ci - 1))
            };
            candidates[i] = m > before + tol && m >= after - tol;
        }
    }

    let mut edges = vec![false; rows * cols];
    let mut stack = Vec::new();
    for seed in 0..rows * cols {
        if !candidates[seed] || edges[seed] || magnitude[seed] < params.t_high {
            continue;
        }
        edges[seed] = true;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / cols, i % cols);
            for nr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
                for nc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                    let j = nr * cols + nc;
                    if candidates[j] && !edges[j] {
                        edges[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }

    Ok(CannyStages {
        magnitude,
        candidates,
        edges: EdgeMap {
            rows,
            cols,
            edges,
            t_low: params.t_low,
            t_high: params.t_high,
        },
    })
}

/// Smoothed Sobel gradient magnitude on the 8-bit scale.
pub fn gradient_magnitude(g: &GrayImage, sigma: f64) -> Vec<f64> {
    let (gx, gy) = sobel(g, sigma);
    gx.iter().zip(&gy).map(|(x, y)| x.hypot(*y)).collect()
}

fn sobel(g: &GrayImage, sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let (rows, cols) = (g.rows(), g.cols());
    let scale = 255.0 / g.max_value() as f64;
    let mut img: Vec<f64> = g.pixels().iter().map(|&p| p as f64 * scale).collect();
    if sigma > 0.0 {
        img = gaussian_blur(&img, rows, cols, sigma);
    }
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, rows as isize - 1) as usize;
        let c = c.clamp(0, cols as isize - 1) as usize;
        img[r * cols + c]
    };
    let mut gx = vec![0.0; rows * cols];
    let mut gy = vec![0.0; rows * cols];
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            let i = r as usize * cols + c as usize;
            gx[i] = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r, c - 1) + at(r + 1, c - 1));
            gy[i] = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1))
                - (at(r - 1, c - 1) + 2.0 * at(r - 1, c) + at(r - 1, c + 1));
        }
    }
    (gx, gy)
}

/// Separable Gaussian with radius `ceil(3 sigma)` and replicated borders.
fn gaussian_blur(img: &[f64], rows: usize, cols: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(w, k)| w * img[r * cols + (c as isize + k).clamp(0, cols as isize - 1) as usize])
                .sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .zip(-radius..=radius)
                .map(|(w, k)| w * tmp[(r as isize + k).clamp(0, rows as isize - 1) as usize * cols + c])
                .sum();
        }
    }
    out
}

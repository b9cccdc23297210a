//! Mean structural similarity over sliding windows.

use super::filters::gaussian_kernel;
use super::{same_dims, MetricError};
use crate::image::GrayImage;

const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SsimWindow {
    /// Every 8x8 block position, equal weights.
    #[default]
    Uniform8,
    /// 11x11 Gaussian with sigma 1.5, valid positions only.
    Gaussian11,
}

impl SsimWindow {
    pub fn size(self) -> usize {
        match self {
            SsimWindow::Uniform8 => 8,
            SsimWindow::Gaussian11 => 11,
        }
    }
}

pub fn ssim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    ssim_with(a, b, SsimWindow::Uniform8)
}

pub fn ssim_with(a: &GrayImage, b: &GrayImage, window: SsimWindow) -> Result<f64, MetricError> {
    same_dims(a, b)?;
    super::min_side(a, window.size())?;
    let map = match window {
        SsimWindow::Uniform8 => uniform_map(a, b, 8),
        SsimWindow::Gaussian11 => gaussian_map(a, b),
    };
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

#[inline]
fn local(mx: f64, my: f64, vx: f64, vy: f64, cxy: f64) -> f64 {
    ((2.0 * mx * my + C1) * (2.0 * cxy + C2)) / ((mx * mx + my * my + C1) * (vx + vy + C2))
}

/// Summed-area tables of x, y, x^2, y^2 and xy.
fn uniform_map(a: &GrayImage, b: &GrayImage, win: usize) -> Vec<f64> {
    let (w, h) = a.dims();
    let stride = w + 1;
    let mut tables = vec![[0.0f64; 5]; stride * (h + 1)];
    for y in 0..h {
        let mut row = [0.0f64; 5];
        for x in 0..w {
            let p = a.get(x, y) as f64;
            let q = b.get(x, y) as f64;
            let vals = [p, q, p * p, q * q, p * q];
            for k in 0..5 {
                row[k] += vals[k];
                tables[(y + 1) * stride + x + 1][k] = tables[y * stride + x + 1][k] + row[k];
            }
        }
    }
    let n = (win * win) as f64;
    let mut out = Vec::with_capacity((w - win + 1) * (h - win + 1));
    for y in 0..=h - win {
        for x in 0..=w - win {
            let mut s = [0.0; 5];
            for (k, v) in s.iter_mut().enumerate() {
                *v = tables[(y + win) * stride + x + win][k] - tables[y * stride + x + win][k]
                    - tables[(y + win) * stride + x][k]
                    + tables[y * stride + x][k];
                *v /= n;
            }
            let (mx, my) = (s[0], s[1]);
            out.push(local(mx, my, s[2] - mx * mx, s[3] - my * my, s[4] - mx * my));
        }
    }
    out
}

fn gaussian_map(a: &GrayImage, b: &GrayImage) -> Vec<f64> {
    let (w, h) = a.dims();
    let g = gaussian_kernel(11, 1.5);
    let (ad, bd) = (a.to_f64(), b.to_f64());
    let mut out = Vec::with_capacity((w - 10) * (h - 10));
    for y in 0..=h - 11 {
        for x in 0..=w - 11 {
            let (mut mx, mut my, mut xx, mut yy, mut xy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..11 {
                for kx in 0..11 {
                    let wgt = g[ky] * g[kx];
                    let i = (y + ky) * w + x + kx;
                    let (p, q) = (ad[i], bd[i]);
                    mx += wgt * p;
                    my += wgt * q;
                    xx += wgt * p * p;
                    yy += wgt * q * q;
                    xy += wgt * p * q;
                }
            }
            out.push(local(mx, my, xx - mx * mx, yy - my * my, xy - mx * my));
        }
    }
    out
}

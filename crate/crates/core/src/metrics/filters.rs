//! Separable convolution helpers on `f64` planes.

use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Out-of-range samples read as zero (MATLAB `conv2(..., 'same')`).
    Zero,
    /// Mirror without repeating the edge sample.
    Reflect,
}

/// Normalized 1-D Gaussian taps of odd length `size`.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - m }) as usize
}

fn convolve_1d(src: &[f64], dst: &mut [f64], len: usize, stride: usize, count: usize, inner: usize, kernel: &[f64], border: Border) {
    let half = (kernel.len() / 2) as isize;
    for line in 0..count {
        let base = line * inner;
        for i in 0..len {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let j = i as isize + k as isize - half;
                let j = if j < 0 || j >= len as isize {
                    match border {
                        Border::Zero => continue,
                        Border::Reflect => reflect(j, len),
                    }
                } else {
                    j as usize
                };
                acc += w * src[base + j * stride];
            }
            dst[base + i * stride] = acc;
        }
    }
}

/// Applies `kernel` along rows then columns ("same" output size).
pub fn separable(data: &[f64], width: usize, height: usize, kernel: &[f64], border: Border) -> Vec<f64> {
    let mut tmp = vec![0.0; data.len()];
    convolve_1d(data, &mut tmp, width, 1, height, width, kernel, border);
    let mut out = vec![0.0; data.len()];
    // Columns: `height` samples with stride `width`, one line per column.
    for x in 0..width {
        let col: Vec<f64> = (0..height).map(|y| tmp[y * width + x]).collect();
        let mut res = vec![0.0; height];
        convolve_1d(&col, &mut res, height, 1, 1, height, kernel, border);
        for y in 0..height {
            out[y * width + x] = res[y];
        }
    }
    out
}

/// Full 2-D correlation with a small dense kernel (`kw` x `kh`, centered).
pub fn correlate2d(data: &[f64], width: usize, height: usize, kernel: &[f64], kw: usize, kh: usize, border: Border) -> Vec<f64> {
    let (hx, hy) = ((kw / 2) as isize, (kh / 2) as isize);
    let mut out = vec![0.0; data.len()];
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            for ky in 0..kh {
                for kx in 0..kw {
                    let sx = x as isize + kx as isize - hx;
                    let sy = y as isize + ky as isize - hy;
                    let inside = sx >= 0 && sy >= 0 && sx < width as isize && sy < height as isize;
                    let v = if inside {
                        data[sy as usize * width + sx as usize]
                    } else {
                        match border {
                            Border::Zero => continue,
                            Border::Reflect => data[reflect(sy, height) * width + reflect(sx, width)],
                        }
                    };
                    acc += kernel[ky * kw + kx] * v;
                }
            }
            out[y * width + x] = acc;
        }
    }
    out
}

/// Gaussian blur with a `2 * ceil(3 sigma) + 1` tap kernel and mirrored borders.
pub fn gaussian_blur(img: &GrayImage, sigma: f64) -> GrayImage {
    if sigma <= 0.0 {
        return img.clone();
    }
    let size = 2 * (3.0 * sigma).ceil() as usize + 1;
    let k = gaussian_kernel(size, sigma);
    let out = separable(&img.to_f64(), img.width(), img.height(), &k, Border::Reflect);
    GrayImage::from_f64(img.width(), img.height(), &out).expect("same dims")
}

/// Halves each dimension by averaging 2x2 blocks (odd trailing row/column dropped).
pub fn downsample2(data: &[f64], width: usize, height: usize) -> (Vec<f64>, usize, usize) {
    let (w2, h2) = (width / 2, height / 2);
    let mut out = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let i = 2 * y * width + 2 * x;
            out.push(0.25 * (data[i] + data[i + 1] + data[i + width] + data[i + width + 1]));
        }
    }
    (out, w2, h2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_normalized_and_symmetric() {
        let k = gaussian_kernel(7, 7.0 / 6.0);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!((k[i] - k[6 - i]).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_preserved_under_reflect() {
        let data = vec![3.0; 20];
        let out = separable(&data, 5, 4, &gaussian_kernel(5, 1.0), Border::Reflect);
        assert!(out.iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn separable_matches_dense() {
        let data: Vec<f64> = (0..35).map(|i| ((i * 37) % 11) as f64).collect();
        let k = gaussian_kernel(3, 0.8);
        let dense: Vec<f64> = (0..9).map(|i| k[i / 3] * k[i % 3]).collect();
        for border in [Border::Zero, Border::Reflect] {
            let a = separable(&data, 7, 5, &k, border);
            let b = correlate2d(&data, 7, 5, &dense, 3, 3, border);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
    }
}

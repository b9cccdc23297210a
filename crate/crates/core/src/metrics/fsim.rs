//! Grayscale feature similarity: phase congruency from a log-Gabor filter
//! bank combined with Scharr gradient-magnitude similarity.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use super::filters::{correlate2d, Border};
use super::{same_dims, MetricError};
use crate::image::GrayImage;

pub const FSIM_MIN_SIDE: usize = 32;
const T1: f64 = 0.85;
const T2: f64 = 160.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FsimParams {
    pub scales: usize,
    pub orientations: usize,
    pub min_wavelength: f64,
    pub mult: f64,
    pub sigma_on_f: f64,
    pub d_theta_on_sigma: f64,
    /// Noise threshold in standard deviations.
    pub k: f64,
    pub epsilon: f64,
}

impl Default for FsimParams {
    fn default() -> Self {
        FsimParams {
            scales: 4,
            orientations: 4,
            min_wavelength: 6.0,
            mult: 2.0,
            sigma_on_f: 0.55,
            d_theta_on_sigma: 1.2,
            k: 2.0,
            epsilon: 1e-4,
        }
    }
}

pub fn fsim(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    fsim_with(a, b, &FsimParams::default())
}

pub fn fsim_with(a: &GrayImage, b: &GrayImage, params: &FsimParams) -> Result<f64, MetricError> {
    same_dims(a, b)?;
    super::min_side(a, FSIM_MIN_SIDE)?;
    let (ya, w, h) = prescale(a);
    let (yb, _, _) = prescale(b);

    let bank = FilterBank::new(w, h, params);
    let pc1 = bank.phase_congruency(&ya);
    let pc2 = bank.phase_congruency(&yb);
    let g1 = gradient_magnitude(&ya, w, h);
    let g2 = gradient_magnitude(&yb, w, h);

    let mut num = 0.0;
    let mut den = 0.0;
    let mut plain = 0.0;
    for i in 0..w * h {
        let s_pc = (2.0 * pc1[i] * pc2[i] + T1) / (pc1[i] * pc1[i] + pc2[i] * pc2[i] + T1);
        let s_g = (2.0 * g1[i] * g2[i] + T2) / (g1[i] * g1[i] + g2[i] * g2[i] + T2);
        let pcm = pc1[i].max(pc2[i]);
        num += s_pc * s_g * pcm;
        den += pcm;
        plain += s_pc * s_g;
    }
    // Featureless pairs (no phase congruency anywhere) fall back to the
    // unweighted mean similarity.
    if den <= f64::MIN_POSITIVE {
        return Ok(plain / (w * h) as f64);
    }
    Ok(num / den)
}

/// Average-filters and subsamples by `max(1, round(min_side / 256))`.
fn prescale(img: &GrayImage) -> (Vec<f64>, usize, usize) {
    let (w, h) = img.dims();
    let f = ((w.min(h) as f64 / 256.0).round() as usize).max(1);
    let data = img.to_f64();
    if f == 1 {
        return (data, w, h);
    }
    let kernel = vec![1.0 / (f * f) as f64; f * f];
    let smooth = correlate2d(&data, w, h, &kernel, f, f, Border::Zero);
    let (w2, h2) = (w.div_ceil(f), h.div_ceil(f));
    let mut out = Vec::with_capacity(w2 * h2);
    for y in (0..h).step_by(f) {
        for x in (0..w).step_by(f) {
            out.push(smooth[y * w + x]);
        }
    }
    (out, w2, h2)
}

fn gradient_magnitude(data: &[f64], w: usize, h: usize) -> Vec<f64> {
    // Scharr operators written as convolution kernels, applied as correlation
    // with the kernel flipped.
    let dx = [-3.0, 0.0, 3.0, -10.0, 0.0, 10.0, -3.0, 0.0, 3.0].map(|v: f64| v / 16.0);
    let dy = [-3.0, -10.0, -3.0, 0.0, 0.0, 0.0, 3.0, 10.0, 3.0].map(|v: f64| v / 16.0);
    let gx = correlate2d(data, w, h, &dx, 3, 3, Border::Zero);
    let gy = correlate2d(data, w, h, &dy, 3, 3, Border::Zero);
    gx.iter().zip(&gy).map(|(x, y)| (x * x + y * y).sqrt()).collect()
}

struct Fft2 {
    w: usize,
    h: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(w: usize, h: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            w,
            h,
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
        }
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        let (rows, cols) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for row in data.chunks_exact_mut(self.w) {
            rows.process(row);
        }
        let mut col = vec![Complex64::new(0.0, 0.0); self.h];
        for x in 0..self.w {
            for y in 0..self.h {
                col[y] = data[y * self.w + x];
            }
            cols.process(&mut col);
            for y in 0..self.h {
                data[y * self.w + x] = col[y];
            }
        }
        if inverse {
            let norm = 1.0 / (self.w * self.h) as f64;
            data.iter_mut().for_each(|v| *v *= norm);
        }
    }
}

/// Normalized frequency coordinates in FFT (unshifted) order.
fn freq_axis(n: usize) -> Vec<f64> {
    let centered: Vec<f64> = if n % 2 == 1 {
        let half = (n as f64 - 1.0) / 2.0;
        (0..n).map(|i| (i as f64 - half) / (n as f64 - 1.0)).collect()
    } else {
        (0..n).map(|i| (i as f64 - (n / 2) as f64) / n as f64).collect()
    };
    // ifftshift
    let shift = n / 2;
    (0..n).map(|i| centered[(i + shift) % n]).collect()
}

/// Precomputed log-Gabor filters and noise statistics for one image size.
struct FilterBank {
    w: usize,
    h: usize,
    params: FsimParams,
    fft: Fft2,
    /// `filters[o][s]`, frequency domain, real-valued.
    filters: Vec<Vec<Vec<f64>>>,
    /// Per orientation: sum(|ifft filter|^2), cross-scale products and
    /// mean squared filter value at the finest scale.
    noise_terms: Vec<(f64, f64, f64)>,
}

impl FilterBank {
    fn new(w: usize, h: usize, params: &FsimParams) -> Self {
        let fx = freq_axis(w);
        let fy = freq_axis(h);
        let n = w * h;
        let mut radius = vec![0.0; n];
        let mut sin_t = vec![0.0; n];
        let mut cos_t = vec![0.0; n];
        let mut lowpass = vec![0.0; n];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let r = (fx[x] * fx[x] + fy[y] * fy[y]).sqrt();
                lowpass[i] = 1.0 / (1.0 + (r / 0.45).powi(30));
                radius[i] = r;
                let theta = (-fy[y]).atan2(fx[x]);
                sin_t[i] = theta.sin();
                cos_t[i] = theta.cos();
            }
        }
        radius[0] = 1.0;

        let log_sig = 2.0 * params.sigma_on_f.ln().powi(2);
        let radial: Vec<Vec<f64>> = (0..params.scales)
            .map(|s| {
                let fo = 1.0 / (params.min_wavelength * params.mult.powi(s as i32));
                let mut g: Vec<f64> = radius
                    .iter()
                    .zip(&lowpass)
                    .map(|(&r, &lp)| (-(r / fo).ln().powi(2) / log_sig).exp() * lp)
                    .collect();
                g[0] = 0.0;
                g
            })
            .collect();

        let theta_sigma = PI / params.orientations as f64 / params.d_theta_on_sigma;
        let fft = Fft2::new(w, h);
        let mut filters = Vec::with_capacity(params.orientations);
        let mut noise_terms = Vec::with_capacity(params.orientations);
        for o in 0..params.orientations {
            let angle = o as f64 * PI / params.orientations as f64;
            let (sa, ca) = angle.sin_cos();
            let spread: Vec<f64> = (0..n)
                .map(|i| {
                    let ds = sin_t[i] * ca - cos_t[i] * sa;
                    let dc = cos_t[i] * ca + sin_t[i] * sa;
                    let d = ds.atan2(dc).abs();
                    (-d * d / (2.0 * theta_sigma * theta_sigma)).exp()
                })
                .collect();
            let per_scale: Vec<Vec<f64>> = radial
                .iter()
                .map(|g| g.iter().zip(&spread).map(|(a, b)| a * b).collect())
                .collect();

            let spatial: Vec<Vec<f64>> = per_scale
                .iter()
                .map(|f| {
                    let mut buf: Vec<Complex64> = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
                    fft.transform(&mut buf, true);
                    let scale = (n as f64).sqrt();
                    buf.iter().map(|c| c.re * scale).collect()
                })
                .collect();
            let sum_an2: f64 = spatial.iter().flatten().map(|v| v * v).sum();
            let mut sum_ai_aj = 0.0;
            for si in 0..spatial.len() {
                for sj in si + 1..spatial.len() {
                    sum_ai_aj += spatial[si].iter().zip(&spatial[sj]).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            let em_n: f64 = per_scale[0].iter().map(|v| v * v).sum();
            noise_terms.push((sum_an2, sum_ai_aj, em_n));
            filters.push(per_scale);
        }
        FilterBank {
            w,
            h,
            params: *params,
            fft,
            filters,
            noise_terms,
        }
    }

    fn phase_congruency(&self, image: &[f64]) -> Vec<f64> {
        let n = self.w * self.h;
        let mut spectrum: Vec<Complex64> = image.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft.transform(&mut spectrum, false);

        let eps = self.params.epsilon;
        let mut energy_all = vec![0.0; n];
        let mut an_all = vec![0.0; n];
        for (o, per_scale) in self.filters.iter().enumerate() {
            let responses: Vec<Vec<Complex64>> = per_scale
                .iter()
                .map(|f| {
                    let mut eo: Vec<Complex64> = spectrum.iter().zip(f).map(|(c, &g)| c * g).collect();
                    self.fft.transform(&mut eo, true);
                    eo
                })
                .collect();
            let mut sum_e = vec![0.0; n];
            let mut sum_o = vec![0.0; n];
            for eo in &responses {
                for i in 0..n {
                    sum_e[i] += eo[i].re;
                    sum_o[i] += eo[i].im;
                    an_all[i] += eo[i].norm();
                }
            }
            let mut energy = vec![0.0; n];
            for i in 0..n {
                let x_energy = (sum_e[i] * sum_e[i] + sum_o[i] * sum_o[i]).sqrt() + eps;
                let (me, mo) = (sum_e[i] / x_energy, sum_o[i] / x_energy);
                for eo in &responses {
                    let (e, od) = (eo[i].re, eo[i].im);
                    energy[i] += e * me + od * mo - (e * mo - od * me).abs();
                }
            }

            let mut e2: Vec<f64> = responses[0].iter().map(|c| c.norm_sqr()).collect();
            let median = median(&mut e2);
            let mean_e2n = -median / 0.5f64.ln();
            let (sum_an2, sum_ai_aj, em_n) = self.noise_terms[o];
            let noise_power = mean_e2n / em_n;
            let est_noise_energy2 = 2.0 * noise_power * sum_an2 + 4.0 * noise_power * sum_ai_aj;
            let tau = (est_noise_energy2 / 2.0).max(0.0).sqrt();
            let est_noise = tau * (PI / 2.0).sqrt();
            let est_sigma = ((2.0 - PI / 2.0) * tau * tau).sqrt();
            let threshold = (est_noise + self.params.k * est_sigma) / 1.7;
            for i in 0..n {
                energy_all[i] += (energy[i] - threshold).max(0.0);
            }
        }
        energy_all
            .iter()
            .zip(&an_all)
            .map(|(&e, &a)| if a > 0.0 { e / a } else { 0.0 })
            .collect()
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Phase congruency map of an image, in `[0, 1]`.
pub fn phase_congruency(img: &GrayImage, params: &FsimParams) -> Vec<f64> {
    let bank = FilterBank::new(img.width(), img.height(), params);
    bank.phase_congruency(&img.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::filters::gaussian_blur;

    fn texture() -> GrayImage {
        GrayImage::from_fn(48, 40, |x, y| {
            let v = 128.0 + 60.0 * ((x as f64) * 0.7).sin() * ((y as f64) * 0.45).cos()
                + if (x / 6 + y / 6) % 2 == 0 { 40.0 } else { -40.0 };
            v.clamp(0.0, 255.0) as u8
        })
    }

    #[test]
    fn freq_axis_layout() {
        assert_eq!(freq_axis(4), vec![0.0, 0.25, -0.5, -0.25]);
        assert_eq!(freq_axis(5), vec![0.0, 0.25, 0.5, -0.5, -0.25]);
    }

    #[test]
    fn identity_and_symmetry() {
        let a = texture();
        assert!((fsim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let b = gaussian_blur(&a, 1.0);
        let ab = fsim(&a, &b).unwrap();
        let ba = fsim(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab > 0.0 && ab < 1.0);
    }

    #[test]
    fn monotone_in_blur() {
        let a = texture();
        let light = fsim(&a, &gaussian_blur(&a, 0.8)).unwrap();
        let heavy = fsim(&a, &gaussian_blur(&a, 3.0)).unwrap();
        assert!(heavy < light, "heavy {heavy} light {light}");
    }

    #[test]
    fn pc_in_unit_range() {
        let pc = phase_congruency(&texture(), &FsimParams::default());
        assert!(pc.iter().all(|&v| (0.0..=1.0 + 1e-9).contains(&v)));
        assert!(pc.iter().any(|&v| v > 0.1));
    }

    #[test]
    fn constant_images() {
        let a = GrayImage::filled(32, 32, 90);
        assert_eq!(fsim(&a, &a).unwrap(), 1.0);
        assert!(matches!(fsim(&GrayImage::new(31, 40), &GrayImage::new(31, 40)), Err(MetricError::ImageTooSmall { .. })));
    }
}

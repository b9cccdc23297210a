//! BRISQUE natural-scene statistics: MSCN coefficients, generalized Gaussian
//! fits at two scales, and an RBF support-vector regressor.
//!
//! Model files are plain text:
//!
//! ```text
//! brisque-svr 1
//! gamma <f64>
//! rho <f64>
//! feature_min <36 x f64>
//! feature_max <36 x f64>
//! sv <coef> <36 x f64>     (one line per support vector)
//! ```
//!
//! Features are mapped to `[-1, 1]` with the min/max rows and the score is
//! `sum_i coef_i * exp(-gamma * |x - sv_i|^2) - rho`.

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use statrs::function::gamma::gamma;

use super::filters::{downsample2, gaussian_kernel, separable, Border};
use super::MetricError;
use crate::image::GrayImage;

pub const BRISQUE_MIN_SIDE: usize = 64;
pub const FEATURE_COUNT: usize = 36;

/// Shape reported for an all-zero input, where no fit exists.
pub const DEGENERATE_SHAPE: f64 = 0.0;

const SHAPE_MIN: f64 = 0.2;
const SHAPE_STEP: f64 = 0.001;
const SHAPE_STEPS: usize = 9801;

#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueFeatures(pub [f64; FEATURE_COUNT]);

impl BrisqueFeatures {
    pub fn values(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Generalized Gaussian fit: shape `alpha` and variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
}

/// Asymmetric generalized Gaussian fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub mean: f64,
    pub left_variance: f64,
    pub right_variance: f64,
}

fn shape_grid() -> &'static [(f64, f64, f64)] {
    static GRID: OnceLock<Vec<(f64, f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        (0..SHAPE_STEPS)
            .map(|i| {
                let g = SHAPE_MIN + SHAPE_STEP * i as f64;
                let (g1, g2, g3) = (gamma(1.0 / g), gamma(2.0 / g), gamma(3.0 / g));
                // (shape, GGD ratio, AGGD ratio)
                (g, g1 * g3 / (g2 * g2), g2 * g2 / (g1 * g3))
            })
            .collect()
    })
}

/// Moment-matching GGD fit over a grid of shapes in `[0.2, 10]`.
pub fn fit_ggd(values: &[f64]) -> GgdFit {
    let n = values.len().max(1) as f64;
    let variance = values.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    if mean_abs <= f64::MIN_POSITIVE {
        return GgdFit {
            shape: DEGENERATE_SHAPE,
            variance: 0.0,
        };
    }
    let rho = variance / (mean_abs * mean_abs);
    let shape = shape_grid()
        .iter()
        .min_by(|a, b| (rho - a.1).abs().total_cmp(&(rho - b.1).abs()))
        .map(|g| g.0)
        .unwrap();
    GgdFit { shape, variance }
}

/// Moment-matching AGGD fit with separate left/right scales.
pub fn fit_aggd(values: &[f64]) -> AggdFit {
    let mean_sq = |it: &mut dyn Iterator<Item = f64>| -> f64 {
        let (mut s, mut c) = (0.0, 0usize);
        for v in it {
            s += v * v;
            c += 1;
        }
        if c == 0 {
            0.0
        } else {
            s / c as f64
        }
    };
    let left = mean_sq(&mut values.iter().copied().filter(|&v| v < 0.0)).sqrt();
    let right = mean_sq(&mut values.iter().copied().filter(|&v| v > 0.0)).sqrt();
    let n = values.len().max(1) as f64;
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq_all = values.iter().map(|v| v * v).sum::<f64>() / n;
    if mean_sq_all <= f64::MIN_POSITIVE {
        return AggdFit {
            shape: DEGENERATE_SHAPE,
            mean: 0.0,
            left_variance: 0.0,
            right_variance: 0.0,
        };
    }
    let r_hat = mean_abs * mean_abs / mean_sq_all;
    // With one side empty the asymmetry correction tends to 1.
    let r_norm = if left > 0.0 && right > 0.0 {
        let g = left / right;
        r_hat * (g.powi(3) + 1.0) * (g + 1.0) / (g * g + 1.0).powi(2)
    } else {
        r_hat
    };
    let shape = shape_grid()
        .iter()
        .min_by(|a, b| (a.2 - r_norm).powi(2).total_cmp(&(b.2 - r_norm).powi(2)))
        .map(|g| g.0)
        .unwrap();
    let (g1, g2, g3) = (gamma(1.0 / shape), gamma(2.0 / shape), gamma(3.0 / shape));
    let mean = (right - left) * (g2 / g1) * (g1.sqrt() / g3.sqrt());
    AggdFit {
        shape,
        mean,
        left_variance: left * left,
        right_variance: right * right,
    }
}

/// Mean-subtracted contrast-normalized coefficients, `(I - mu) / (sigma + 1)`
/// with 7x7 Gaussian (sigma 7/6) local moments.
pub fn mscn(data: &[f64], width: usize, height: usize) -> Vec<f64> {
    let k = gaussian_kernel(7, 7.0 / 6.0);
    let mu = separable(data, width, height, &k, Border::Reflect);
    let sq: Vec<f64> = data.iter().map(|v| v * v).collect();
    let mu_sq = separable(&sq, width, height, &k, Border::Reflect);
    data.iter()
        .zip(mu.iter().zip(&mu_sq))
        .map(|(&v, (&m, &m2))| {
            let sigma = (m2 - m * m).abs().sqrt();
            (v - m) / (sigma + 1.0)
        })
        .collect()
}

fn scale_features(data: &[f64], w: usize, h: usize, out: &mut Vec<f64>) {
    let coeffs = mscn(data, w, h);
    let ggd = fit_ggd(&coeffs);
    out.push(ggd.shape);
    out.push(ggd.variance);
    // Horizontal, vertical, main diagonal, anti-diagonal neighbours (circular).
    let shifts: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (-1, 1)];
    for (dy, dx) in shifts {
        let mut prod = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let sy = (y as isize - dy).rem_euclid(h as isize) as usize;
                let sx = (x as isize - dx).rem_euclid(w as isize) as usize;
                prod.push(coeffs[y * w + x] * coeffs[sy * w + sx]);
            }
        }
        let a = fit_aggd(&prod);
        out.extend_from_slice(&[a.shape, a.mean, a.left_variance, a.right_variance]);
    }
}

/// 18 statistics at full and at half resolution.
pub fn brisque_features(img: &GrayImage) -> Result<BrisqueFeatures, MetricError> {
    super::min_side(img, BRISQUE_MIN_SIDE)?;
    let (w, h) = img.dims();
    let mut feats = Vec::with_capacity(FEATURE_COUNT);
    let full = img.to_f64();
    scale_features(&full, w, h, &mut feats);
    let (half, w2, h2) = downsample2(&full, w, h);
    scale_features(&half, w2, h2, &mut feats);
    let arr: [f64; FEATURE_COUNT] = feats.try_into().expect("36 features");
    debug_assert!(arr.iter().all(|v| v.is_finite()));
    Ok(BrisqueFeatures(arr))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrisqueModel {
    pub gamma: f64,
    pub rho: f64,
    pub feature_min: [f64; FEATURE_COUNT],
    pub feature_max: [f64; FEATURE_COUNT],
    pub support: Vec<(f64, [f64; FEATURE_COUNT])>,
}

impl BrisqueModel {
    pub fn load(path: &Path) -> Result<Self, MetricError> {
        let text = fs::read_to_string(path).map_err(|_| MetricError::ModelMissing(path.to_path_buf()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, MetricError> {
        let bad = |m: String| MetricError::ModelMalformed(m);
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some("brisque-svr 1") {
            return Err(bad("missing `brisque-svr 1` header".into()));
        }
        let nums = |rest: &str| -> Result<Vec<f64>, MetricError> {
            rest.split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number {t:?}"))))
                .collect()
        };
        let vector = |v: Vec<f64>, what: &str| -> Result<[f64; FEATURE_COUNT], MetricError> {
            v.try_into().map_err(|v: Vec<f64>| bad(format!("{what}: {} values, expected 36", v.len())))
        };
        let (mut gamma_v, mut rho, mut lo, mut hi) = (None, None, None, None);
        let mut support = Vec::new();
        for line in lines {
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let v = nums(rest)?;
            match key {
                "gamma" => gamma_v = v.first().copied(),
                "rho" => rho = v.first().copied(),
                "feature_min" => lo = Some(vector(v, "feature_min")?),
                "feature_max" => hi = Some(vector(v, "feature_max")?),
                "sv" => {
                    let (coef, sv) = v.split_first().ok_or_else(|| bad("empty sv line".into()))?;
                    support.push((*coef, vector(sv.to_vec(), "sv")?));
                }
                other => return Err(bad(format!("unknown key {other:?}"))),
            }
        }
        let model = BrisqueModel {
            gamma: gamma_v.ok_or_else(|| bad("missing gamma".into()))?,
            rho: rho.ok_or_else(|| bad("missing rho".into()))?,
            feature_min: lo.ok_or_else(|| bad("missing feature_min".into()))?,
            feature_max: hi.ok_or_else(|| bad("missing feature_max".into()))?,
            support,
        };
        if model.support.is_empty() {
            return Err(bad("no support vectors".into()));
        }
        Ok(model)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let mut out = format!(
            "brisque-svr 1\ngamma {:e}\nrho {:e}\nfeature_min {}\nfeature_max {}\n",
            self.gamma,
            self.rho,
            join(&self.feature_min),
            join(&self.feature_max)
        );
        for (coef, sv) in &self.support {
            out.push_str(&format!("sv {:e} {}\n", coef, join(sv)));
        }
        out
    }

    /// Maps raw features onto `[-1, 1]` per dimension.
    pub fn rescale(&self, f: &BrisqueFeatures) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for i in 0..FEATURE_COUNT {
            let span = self.feature_max[i] - self.feature_min[i];
            out[i] = if span > 0.0 {
                -1.0 + 2.0 * (f.0[i] - self.feature_min[i]) / span
            } else {
                0.0
            };
        }
        out
    }
}

pub fn brisque_score(features: &BrisqueFeatures, model: &BrisqueModel) -> f64 {
    let x = model.rescale(features);
    model
        .support
        .iter()
        .map(|(coef, sv)| {
            let d2: f64 = x.iter().zip(sv).map(|(a, b)| (a - b) * (a - b)).sum();
            coef * (-model.gamma * d2).exp()
        })
        .sum::<f64>()
        - model.rho
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Gamma, Normal};

    /// Draws GGD(shape) samples via |x|^shape ~ Gamma(1/shape).
    fn ggd_samples(shape: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let g = Gamma::new(1.0 / shape, 1.0).unwrap();
        (0..n)
            .map(|i| {
                let mag = g.sample(&mut rng).powf(1.0 / shape);
                if i % 2 == 0 {
                    mag
                } else {
                    -mag
                }
            })
            .collect()
    }

    #[test]
    fn ggd_recovers_known_shapes() {
        for (shape, seed) in [(0.8, 1), (1.0, 2), (2.0, 3), (3.0, 4)] {
            let fit = fit_ggd(&ggd_samples(shape, 200_000, seed));
            assert!((fit.shape - shape).abs() / shape < 0.05, "shape {shape}: fitted {}", fit.shape);
        }
    }

    #[test]
    fn gaussian_shape_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let normal = Normal::new(0.0, 1.5).unwrap();
        let v: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
        let g = fit_ggd(&v);
        assert!((g.shape - 2.0).abs() < 0.2);
        assert!((g.variance - 2.25).abs() < 0.05);
        let a = fit_aggd(&v);
        assert!((a.shape - 2.0).abs() < 0.2);
        assert!(a.mean.abs() < 0.05);
    }

    #[test]
    fn constant_image_is_guarded() {
        let img = GrayImage::filled(64, 64, 120);
        let f = brisque_features(&img).unwrap();
        assert!(f.values().iter().all(|v| v.is_finite()));
        assert_eq!(f.values()[0], DEGENERATE_SHAPE);
        assert_eq!(f.values()[1], 0.0);
        let m = mscn(&img.to_f64(), 64, 64);
        assert!(m.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn feature_vector_shape() {
        let img = GrayImage::from_fn(80, 64, |x, y| ((x * 7 + y * 13) % 256) as u8);
        let f = brisque_features(&img).unwrap();
        assert_eq!(f.values().len(), 36);
        assert_eq!(brisque_features(&img).unwrap(), f);
        assert!(matches!(
            brisque_features(&GrayImage::new(63, 100)),
            Err(MetricError::ImageTooSmall { min: 64, .. })
        ));
    }

    #[test]
    fn model_text_round_trip() {
        let model = BrisqueModel {
            gamma: 0.05,
            rho: -1.25,
            feature_min: [0.0; 36],
            feature_max: [2.0; 36],
            support: vec![(1.0, [0.5; 36]), (-0.5, [-0.25; 36])],
        };
        let parsed = BrisqueModel::parse(&model.to_text()).unwrap();
        assert_eq!(parsed, model);
        assert!(matches!(BrisqueModel::parse("nope"), Err(MetricError::ModelMalformed(_))));
        assert!(matches!(
            BrisqueModel::load(Path::new("/nonexistent/model.txt")),
            Err(MetricError::ModelMissing(_))
        ));
        // At the feature midpoint every scaled coordinate is 0.
        let f = BrisqueFeatures([1.0; 36]);
        let expected = 1.0 * (-0.05f64 * 36.0 * 0.25).exp() - 0.5 * (-0.05f64 * 36.0 * 0.0625).exp() + 1.25;
        assert!((brisque_score(&f, &model) - expected).abs() < 1e-12);
    }
}

use std::fmt;

use super::{same_dims, MetricError};
use crate::image::GrayImage;

/// Peak signal-to-noise ratio. Identical images have no finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    /// The dB value, with `Identical` mapped to `+inf`.
    pub fn value(self) -> f64 {
        match self {
            Psnr::Db(v) => v,
            Psnr::Identical => f64::INFINITY,
        }
    }

    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }
}

impl fmt::Display for Psnr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4}"),
            Psnr::Identical => f.write_str("inf"),
        }
    }
}

pub fn mse(a: &GrayImage, b: &GrayImage) -> Result<f64, MetricError> {
    same_dims(a, b)?;
    let sum: u64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as i64 - y as i64;
            (d * d) as u64
        })
        .sum();
    Ok(sum as f64 / a.data().len().max(1) as f64)
}

/// `10 * log10(255^2 / MSE)`.
pub fn psnr(a: &GrayImage, b: &GrayImage) -> Result<Psnr, MetricError> {
    let mse = mse(a, b)?;
    if mse == 0.0 {
        return Ok(Psnr::Identical);
    }
    Ok(Psnr::Db(10.0 * (255.0f64 * 255.0 / mse).log10()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_sentinel() {
        let a = GrayImage::from_fn(9, 7, |x, y| (x * 13 + y * 7) as u8);
        assert_eq!(psnr(&a, &a).unwrap(), Psnr::Identical);
        assert_eq!(Psnr::Identical.value(), f64::INFINITY);
    }

    #[test]
    fn constant_offset() {
        let a = GrayImage::from_fn(16, 16, |x, y| (x * 5 + y * 3) as u8);
        let b = GrayImage::from_fn(16, 16, |x, y| (x * 5 + y * 3 + 16) as u8);
        let v = psnr(&a, &b).unwrap().value();
        let expected = 10.0 * (65025.0f64 / 256.0).log10();
        assert!((v - expected).abs() < 1e-12);
        assert!((v - 24.05).abs() < 0.01);
        assert_eq!(psnr(&b, &a).unwrap(), psnr(&a, &b).unwrap());
    }

    #[test]
    fn dimension_mismatch() {
        let a = GrayImage::new(4, 4);
        let b = GrayImage::new(4, 5);
        assert!(matches!(psnr(&a, &b), Err(MetricError::DimensionMismatch(..))));
    }
}

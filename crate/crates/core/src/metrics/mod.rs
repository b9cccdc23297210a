//! Full-reference (PSNR, SSIM, FSIM) and no-reference (BRISQUE) image
//! quality, plus nearest-timestamp pairing of ground truth and reconstructions.

pub mod brisque;
pub mod filters;
pub mod fsim;
pub mod matching;
pub mod psnr;
pub mod ssim;

use std::path::PathBuf;

use thiserror::Error;

use crate::image::GrayImage;

pub use brisque::{brisque_features, brisque_score, BrisqueFeatures, BrisqueModel};
pub use fsim::{fsim, fsim_with, FsimParams};
pub use matching::match_closest_timestamp;
pub use psnr::{psnr, Psnr};
pub use ssim::{ssim, ssim_with, SsimWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("image {got:?} smaller than the {min} pixel minimum side")]
    ImageTooSmall { min: usize, got: (usize, usize) },
    #[error("BRISQUE model not found: {0}")]
    ModelMissing(PathBuf),
    #[error("BRISQUE model malformed: {0}")]
    ModelMalformed(String),
    #[error("cannot match against an empty frame list")]
    EmptyList,
}

impl MetricError {
    pub fn kind(&self) -> &'static str {
        match self {
            MetricError::DimensionMismatch(..) => "DimensionMismatch",
            MetricError::ImageTooSmall { .. } => "ImageTooSmall",
            MetricError::ModelMissing(_) => "ModelMissing",
            MetricError::ModelMalformed(_) => "ModelMalformed",
            MetricError::EmptyList => "EmptyList",
        }
    }
}

pub(crate) fn same_dims(a: &GrayImage, b: &GrayImage) -> Result<(), MetricError> {
    if a.dims() != b.dims() {
        return Err(MetricError::DimensionMismatch(a.dims(), b.dims()));
    }
    Ok(())
}

pub(crate) fn min_side(img: &GrayImage, min: usize) -> Result<(), MetricError> {
    if img.width() < min || img.height() < min {
        return Err(MetricError::ImageTooSmall { min, got: img.dims() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BrisqueResult {
    Score(f64),
    /// Features were computed but no regression model was supplied.
    FeaturesOnly,
}

/// Per-pair scores; a metric is `None` when the image is too small for it.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityReport {
    pub psnr: Psnr,
    pub ssim: Option<f64>,
    pub fsim: Option<f64>,
    pub brisque: Option<BrisqueResult>,
}

/// Scores `recon` against `gt`; BRISQUE is taken on `recon` alone.
pub fn evaluate_pair(
    gt: &GrayImage,
    recon: &GrayImage,
    model: Option<&BrisqueModel>,
) -> Result<QualityReport, MetricError> {
    same_dims(gt, recon)?;
    let psnr = psnr(gt, recon)?;
    let ssim = ssim(gt, recon).ok();
    let fsim = fsim(gt, recon).ok();
    let brisque = match brisque_features(recon) {
        Ok(f) => Some(match model {
            Some(m) => BrisqueResult::Score(brisque_score(&f, m)),
            None => BrisqueResult::FeaturesOnly,
        }),
        Err(_) => None,
    };
    Ok(QualityReport { psnr, ssim, fsim, brisque })
}

/// Sample mean and standard deviation (n - 1 denominator).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

//! Adversarial and L1 objectives with their gradients.

use crate::tensor::{CganError, Tensor4};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_CLAMP: f64 = 1e-12;

pub const DEFAULT_LAMBDA: f64 = 100.0;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(max(sigmoid(x), 1e-12))` and its derivative in `x`.
pub fn log_sigmoid(x: f64) -> (f64, f64) {
    let s = sigmoid(x);
    if s > LOG_CLAMP {
        (s.ln(), sigmoid(-x))
    } else {
        (LOG_CLAMP.ln(), 0.0)
    }
}

/// `ln(max(1 - sigmoid(x), 1e-12))` and its derivative in `x`.
pub fn log_one_minus_sigmoid(x: f64) -> (f64, f64) {
    let q = sigmoid(-x);
    if q > LOG_CLAMP {
        (q.ln(), -sigmoid(x))
    } else {
        (LOG_CLAMP.ln(), 0.0)
    }
}

fn finite(values: &[f64], what: &str) -> Result<(), CganError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(CganError::NonFinite(what.to_string()))
    }
}

/// `mean log D(real) + mean log(1 - D(fake))` over batch and patches.
pub fn loss_egan(d_real: &[f64], d_fake: &[f64]) -> Result<f64, CganError> {
    Ok(loss_egan_with_grad(d_real, d_fake)?.0)
}

/// Value plus gradients with respect to the real and fake logits.
pub fn loss_egan_with_grad(d_real: &[f64], d_fake: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>), CganError> {
    finite(d_real, "real logits")?;
    finite(d_fake, "fake logits")?;
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(CganError::ShapeMismatch("empty logit set".into()));
    }
    let (nr, nf) = (d_real.len() as f64, d_fake.len() as f64);
    let mut value = 0.0;
    let mut g_real = Vec::with_capacity(d_real.len());
    for &x in d_real {
        let (v, d) = log_sigmoid(x);
        value += v / nr;
        g_real.push(d / nr);
    }
    let mut g_fake = Vec::with_capacity(d_fake.len());
    let mut fake = 0.0;
    for &x in d_fake {
        let (v, d) = log_one_minus_sigmoid(x);
        fake += v / nf;
        g_fake.push(d / nf);
    }
    Ok((value + fake, g_real, g_fake))
}

/// Mean absolute difference.
pub fn loss_l1(generated: &Tensor4, target: &Tensor4) -> Result<f64, CganError> {
    if generated.dims() != target.dims() {
        return Err(CganError::ShapeMismatch(format!(
            "generated {:?} vs target {:?}",
            generated.dims(),
            target.dims()
        )));
    }
    Ok(l1_slices(generated.data(), target.data()))
}

pub(crate) fn l1_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len().max(1) as f64
}

/// Subgradient of `sum |a - b| * scale` with respect to `a` (0 at ties).
pub fn l1_grad(a: &[f64], b: &[f64], scale: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x > y {
                scale
            } else if x < y {
                -scale
            } else {
                0.0
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_egan: f64,
    pub l_l1: f64,
    pub lambda: f64,
    pub total: f64,
}

pub fn total_objective(l_egan: f64, l_l1: f64, lambda: f64) -> LossBreakdown {
    LossBreakdown {
        l_egan,
        l_l1,
        lambda,
        total: l_egan + lambda * l_l1,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_half_discriminator() {
        let v = loss_egan(&[0.0; 8], &[0.0; 8]).unwrap();
        assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!((v + 1.3863).abs() < 1e-4);
    }

    #[test]
    fn perfect_discriminator_tends_to_zero() {
        let v = loss_egan(&[40.0, 50.0], &[-40.0, -60.0]).unwrap();
        assert!(v <= 0.0 && v > -1e-15);
        let sat = loss_egan(&[-1e4], &[1e4]).unwrap();
        assert!((sat - 2.0 * LOG_CLAMP.ln()).abs() < 1e-9);
        assert!(loss_egan(&[f64::NAN], &[0.0]).is_err());
    }

    #[test]
    fn l1_forced_cases() {
        let a = Tensor4::from_vec([1, 1, 2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        assert_eq!(loss_l1(&a, &a).unwrap(), 0.0);
        let b = Tensor4::from_vec([1, 1, 2, 2], a.data().iter().map(|v| v + 0.5).collect()).unwrap();
        assert!((loss_l1(&a, &b).unwrap() - 0.5).abs() < 1e-15);
        let c = Tensor4::zeros([1, 1, 2, 3]);
        assert!(loss_l1(&a, &c).is_err());
    }

    #[test]
    fn objective_identity() {
        let lb = total_objective(-1.0, 0.5, 100.0);
        assert_eq!(lb.total, 49.0);
        assert_eq!(total_objective(-0.7, 0.3, 0.0).total, -0.7);
        let mut prev = f64::NEG_INFINITY;
        for lambda in [0.0, 0.5, 1.0, 10.0, 100.0] {
            let t = total_objective(-1.0, 0.2, lambda).total;
            assert!(t > prev);
            prev = t;
        }
    }
}

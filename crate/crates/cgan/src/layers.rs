//! Convolution, ELU, nearest-neighbour upsampling and their backward passes
//! on single `(c, h, w)` samples.

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Square-kernel 2-D convolution with zero padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    /// `[cout][cin][k][k]`
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrad {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrad {
    pub fn add(&mut self, other: &ConvGrad) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += b;
        }
    }
}

impl Conv2d {
    /// Normal initialization with standard deviation `gain / sqrt(fan_in)`.
    pub fn new(
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        gain: f64,
        rng: &mut impl Rng,
    ) -> Self {
        let std = gain / ((cin * k * k) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        Conv2d {
            name: name.to_string(),
            cin,
            cout,
            k,
            stride,
            pad,
            weight: (0..cout * cin * k * k).map(|_| normal.sample(rng)).collect(),
            bias: vec![0.0; cout],
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn zero_grad(&self) -> ConvGrad {
        ConvGrad {
            weight: vec![0.0; self.weight.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Output columns `ox` whose input column `ox * s + kx - pad` lies in `0..w`.
    fn col_range(&self, kx: usize, w: usize, ow: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if kx >= self.pad { 0 } else { (self.pad - kx).div_ceil(s) };
        // ox * s + kx - pad <= w - 1
        let lim = w + self.pad - 1;
        let hi = if lim < kx { 0 } else { ((lim - kx) / s + 1).min(ow) };
        (lo, hi.max(lo))
    }

    pub fn forward(&self, input: &[f64], h: usize, w: usize) -> (Vec<f64>, usize, usize) {
        debug_assert_eq!(input.len(), self.cin * h * w);
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad);
        let mut out = vec![0.0; self.cout * oh * ow];
        for co in 0..self.cout {
            let plane = &mut out[co * oh * ow..(co + 1) * oh * ow];
            plane.fill(self.bias[co]);
            for ci in 0..self.cin {
                let src = &input[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = self.weight[((co * self.cin + ci) * k + ky) * k + kx];
                        let (lo, hi) = self.col_range(kx, w, ow);
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &src[iy as usize * w..(iy as usize + 1) * w];
                            let dst = &mut plane[oy * ow..(oy + 1) * ow];
                            if s == 1 {
                                let off = kx as isize - p as isize;
                                let ins = &row[(lo as isize + off) as usize..(hi as isize + off) as usize];
                                for (d, &x) in dst[lo..hi].iter_mut().zip(ins) {
                                    *d += wv * x;
                                }
                            } else {
                                for ox in lo..hi {
                                    dst[ox] += wv * row[ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
        (out, oh, ow)
    }

    /// Accumulates parameter gradients into `grad` and, when requested,
    /// returns the gradient with respect to the input.
    pub fn backward(
        &self,
        input: &[f64],
        h: usize,
        w: usize,
        d_out: &[f64],
        grad: &mut ConvGrad,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let (oh, ow) = self.out_dims(h, w);
        let (k, s, p) = (self.k, self.stride, self.pad);
        let mut d_in = want_input.then(|| vec![0.0; self.cin * h * w]);
        for co in 0..self.cout {
            let dplane = &d_out[co * oh * ow..(co + 1) * oh * ow];
            grad.bias[co] += dplane.iter().sum::<f64>();
            for ci in 0..self.cin {
                let src = &input[ci * h * w..(ci + 1) * h * w];
                for ky in 0..k {
                    for kx in 0..k {
                        let widx = ((co * self.cin + ci) * k + ky) * k + kx;
                        let wv = self.weight[widx];
                        let (lo, hi) = self.col_range(kx, w, ow);
                        let mut acc = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - p as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            let drow = &dplane[oy * ow..(oy + 1) * ow];
                            let row = &src[iy * w..(iy + 1) * w];
                            if s == 1 {
                                let off = kx as isize - p as isize;
                                let a = (lo as isize + off) as usize;
                                let b = (hi as isize + off) as usize;
                                acc += drow[lo..hi].iter().zip(&row[a..b]).map(|(d, x)| d * x).sum::<f64>();
                                if let Some(di) = d_in.as_mut() {
                                    let dst = &mut di[ci * h * w + iy * w..ci * h * w + (iy + 1) * w];
                                    for (t, &d) in dst[a..b].iter_mut().zip(&drow[lo..hi]) {
                                        *t += wv * d;
                                    }
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * s + kx - p;
                                    acc += drow[ox] * row[ix];
                                    if let Some(di) = d_in.as_mut() {
                                        di[ci * h * w + iy * w + ix] += wv * drow[ox];
                                    }
                                }
                            }
                        }
                        grad.weight[widx] += acc;
                    }
                }
            }
        }
        d_in
    }
}

pub fn elu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { v.exp_m1() }).collect()
}

/// ELU backward given the activation output `y`.
pub fn elu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(dy)
        .map(|(&y, &d)| if y > 0.0 { d } else { d * (y + 1.0) })
        .collect()
}

/// Nearest-neighbour 2x upsampling of a `(c, h, w)` tensor.
pub fn upsample2(x: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h2 * w2];
    for ch in 0..c {
        for y in 0..h2 {
            for xx in 0..w2 {
                out[(ch * h2 + y) * w2 + xx] = x[(ch * h + y / 2) * w + xx / 2];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: sums each 2x2 block.
pub fn upsample2_backward(d: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (h2, w2) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h2 {
            for xx in 0..w2 {
                out[(ch * h + y / 2) * w + xx / 2] += d[(ch * h2 + y) * w2 + xx];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Direct definition of zero-padded strided correlation.
    fn conv_oracle(c: &Conv2d, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = c.out_dims(h, w);
        let mut out = vec![0.0; c.cout * oh * ow];
        for co in 0..c.cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = c.bias[co];
                    for ci in 0..c.cin {
                        for ky in 0..c.k {
                            for kx in 0..c.k {
                                let iy = (oy * c.stride + ky) as isize - c.pad as isize;
                                let ix = (ox * c.stride + kx) as isize - c.pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < h && (ix as usize) < w {
                                    acc += c.weight[((co * c.cin + ci) * c.k + ky) * c.k + kx]
                                        * x[(ci * h + iy as usize) * w + ix as usize];
                                }
                            }
                        }
                    }
                    out[(co * oh + oy) * ow + ox] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (k, s, p, h, w) in [(3, 1, 1, 6, 5), (4, 2, 1, 8, 8), (3, 2, 1, 7, 9), (3, 1, 0, 5, 5)] {
            let mut c = Conv2d::new("t", 2, 3, k, s, p, 1.0, &mut rng);
            c.bias = vec![0.1, -0.2, 0.3];
            let x: Vec<f64> = (0..2 * h * w).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
            let (got, _, _) = c.forward(&x, h, w);
            let want = conv_oracle(&c, &x, h, w);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_is_adjoint() {
        // <conv(x), r> is linear in x and in the weights, so the backward pass
        // must reproduce it exactly via inner products.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for (k, s, p) in [(3, 1, 1), (4, 2, 1), (3, 2, 1)] {
            let (h, w) = (8, 6);
            let mut c = Conv2d::new("t", 2, 3, k, s, p, 1.0, &mut rng);
            c.bias = vec![0.0; 3];
            let x: Vec<f64> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (y, _, _) = c.forward(&x, h, w);
            let r: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let yr: f64 = y.iter().zip(&r).map(|(a, b)| a * b).sum();
            let mut g = c.zero_grad();
            let dx = c.backward(&x, h, w, &r, &mut g, true).unwrap();
            let xdx: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            let wdw: f64 = c.weight.iter().zip(&g.weight).map(|(a, b)| a * b).sum();
            assert!((yr - xdx).abs() < 1e-10);
            assert!((yr - wdw).abs() < 1e-10);
            assert!((g.bias[0] - r[..y.len() / 3].iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn upsample_adjoint() {
        let x: Vec<f64> = (0..2 * 3 * 2).map(|i| i as f64).collect();
        let u = upsample2(&x, 2, 3, 2);
        assert_eq!(u.len(), 48);
        assert_eq!(u[0..4], [0.0, 0.0, 1.0, 1.0]);
        let back = upsample2_backward(&u, 2, 3, 2);
        assert!(back.iter().zip(&x).all(|(b, x)| (b - 4.0 * x).abs() < 1e-12));
    }

    #[test]
    fn elu_values() {
        let y = elu(&[-1.0, 0.0, 2.0]);
        assert!((y[0] - (-1.0f64).exp_m1()).abs() < 1e-15);
        assert_eq!(y[1..], [0.0, 2.0]);
        let d = elu_backward(&y, &[1.0, 1.0, 1.0]);
        assert!((d[0] - (-1.0f64).exp()).abs() < 1e-15);
    }
}

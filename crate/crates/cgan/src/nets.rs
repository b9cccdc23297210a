//! Skip-connected encoder/decoder generator and a patch discriminator.
//!
//! Generator, for `c = n + 1` input channels (stack plus a noise channel):
//!
//! ```text
//! enc1 3x3/1  c -> 8   ELU            H
//! enc2 3x3/2  8 -> 16  ELU            H/2
//! enc3 3x3/2 16 -> 32  ELU            H/4
//! dec2 up2, 3x3/1 32 -> 16 ELU, concat enc2   H/2
//! dec1 up2, 3x3/1 32 -> 8  ELU, concat enc1   H
//! out  3x3/1 16 -> 1   tanh
//! ```
//!
//! Discriminator on `n + 1` channels (condition plus candidate image): three
//! 4x4 stride-2 convolutions (16, 32, 32 channels, ELU) and a 3x3 head giving
//! an `H/8 x W/8` grid of logits.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::layers::{elu, elu_backward, upsample2, upsample2_backward, Conv2d, ConvGrad};
use crate::tensor::{CganError, Tensor4};

/// Parameters of either network as an ordered list of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub layers: Vec<Conv2d>,
}

pub type Grads = Vec<ConvGrad>;

impl Params {
    pub fn zero_grads(&self) -> Grads {
        self.layers.iter().map(Conv2d::zero_grad).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv2d::param_count).sum()
    }

    /// Flat view index -> value, weights before biases, layer by layer.
    pub fn get_flat(&self, mut i: usize) -> f64 {
        for l in &self.layers {
            if i < l.weight.len() {
                return l.weight[i];
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                return l.bias[i];
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn set_flat(&mut self, mut i: usize, v: f64) {
        for l in &mut self.layers {
            if i < l.weight.len() {
                l.weight[i] = v;
                return;
            }
            i -= l.weight.len();
            if i < l.bias.len() {
                l.bias[i] = v;
                return;
            }
            i -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

pub fn grad_flat(grads: &Grads, mut i: usize) -> f64 {
    for g in grads {
        if i < g.weight.len() {
            return g.weight[i];
        }
        i -= g.weight.len();
        if i < g.bias.len() {
            return g.bias[i];
        }
        i -= g.bias.len();
    }
    panic!("gradient index out of range")
}

/// Sums per-sample gradients in sample order.
pub fn sum_grads(parts: Vec<Grads>, zero: Grads) -> Grads {
    parts.into_iter().fold(zero, |mut acc, g| {
        for (a, b) in acc.iter_mut().zip(&g) {
            a.add(b);
        }
        acc
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub n: usize,
    pub params: Params,
}

/// Activations of one generator sample kept for the backward pass.
pub struct GenCache {
    h: usize,
    w: usize,
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    u3: Vec<f64>,
    a4: Vec<f64>,
    u2: Vec<f64>,
    a5: Vec<f64>,
    cat1: Vec<f64>,
    pub y: Vec<f64>,
}

impl Generator {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = std::f64::consts::SQRT_2;
        let layers = vec![
            Conv2d::new("g.enc1", n + 1, 8, 3, 1, 1, he, &mut rng),
            Conv2d::new("g.enc2", 8, 16, 3, 2, 1, he, &mut rng),
            Conv2d::new("g.enc3", 16, 32, 3, 2, 1, he, &mut rng),
            Conv2d::new("g.dec2", 32, 16, 3, 1, 1, he, &mut rng),
            Conv2d::new("g.dec1", 32, 8, 3, 1, 1, he, &mut rng),
            Conv2d::new("g.out", 16, 1, 3, 1, 1, 0.5, &mut rng),
        ];
        Generator {
            n,
            params: Params { layers },
        }
    }

    pub fn from_params(n: usize, params: Params) -> Result<Self, CganError> {
        let reference = Generator::new(n, 0);
        check_layout(&reference.params, &params)?;
        Ok(Generator { n, params })
    }

    fn check_input(&self, stack: &Tensor4, noise: &Tensor4) -> Result<(), CganError> {
        let [b, c, h, w] = stack.dims();
        if c != self.n {
            return Err(CganError::ShapeMismatch(format!("stack has {c} channels, generator expects {}", self.n)));
        }
        if noise.dims() != [b, 1, h, w] {
            return Err(CganError::ShapeMismatch(format!(
                "noise dims {:?} do not match stack {:?}",
                noise.dims(),
                stack.dims()
            )));
        }
        if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
            return Err(CganError::ShapeMismatch(format!("spatial size {h}x{w} must be a positive multiple of 4")));
        }
        Ok(())
    }

    /// Single-sample forward on the `(n + 1, h, w)` concatenation.
    pub fn forward_sample(&self, x: Vec<f64>, h: usize, w: usize) -> GenCache {
        let l = &self.params.layers;
        let (z1, _, _) = l[0].forward(&x, h, w);
        let a1 = elu(&z1);
        let (z2, h2, w2) = l[1].forward(&a1, h, w);
        let a2 = elu(&z2);
        let (z3, h3, w3) = l[2].forward(&a2, h2, w2);
        let a3 = elu(&z3);
        let u3 = upsample2(&a3, 32, h3, w3);
        let (z4, _, _) = l[3].forward(&u3, h2, w2);
        let a4 = elu(&z4);
        let cat2 = [a4.as_slice(), a2.as_slice()].concat();
        let u2 = upsample2(&cat2, 32, h2, w2);
        let (z5, _, _) = l[4].forward(&u2, h, w);
        let a5 = elu(&z5);
        let cat1 = [a5.as_slice(), a1.as_slice()].concat();
        let (z6, _, _) = l[5].forward(&cat1, h, w);
        let y = z6.iter().map(|v| v.tanh()).collect();
        GenCache {
            h,
            w,
            x,
            a1,
            a2,
            a3,
            u3,
            a4,
            u2,
            a5,
            cat1,
            y,
        }
    }

    /// Parameter gradients for an upstream gradient `dy` on the output.
    pub fn backward_sample(&self, c: &GenCache, dy: &[f64]) -> Grads {
        let l = &self.params.layers;
        let mut g = self.params.zero_grads();
        let (h, w) = (c.h, c.w);
        let (h2, w2) = (h / 2, w / 2);
        let (h3, w3) = (h / 4, w / 4);
        let dz6: Vec<f64> = c.y.iter().zip(dy).map(|(y, d)| d * (1.0 - y * y)).collect();
        let dcat1 = l[5].backward(&c.cat1, h, w, &dz6, &mut g[5], true).unwrap();
        let (da5, da1_skip) = dcat1.split_at(8 * h * w);
        let dz5 = elu_backward(&c.a5, da5);
        let du2 = l[4].backward(&c.u2, h, w, &dz5, &mut g[4], true).unwrap();
        let dcat2 = upsample2_backward(&du2, 32, h2, w2);
        let (da4, da2_skip) = dcat2.split_at(16 * h2 * w2);
        let dz4 = elu_backward(&c.a4, da4);
        let du3 = l[3].backward(&c.u3, h2, w2, &dz4, &mut g[3], true).unwrap();
        let da3 = upsample2_backward(&du3, 32, h3, w3);
        let dz3 = elu_backward(&c.a3, &da3);
        let mut da2 = l[2].backward(&c.a2, h2, w2, &dz3, &mut g[2], true).unwrap();
        for (a, b) in da2.iter_mut().zip(da2_skip) {
            *a += b;
        }
        let dz2 = elu_backward(&c.a2, &da2);
        let mut da1 = l[1].backward(&c.a1, h, w, &dz2, &mut g[1], true).unwrap();
        for (a, b) in da1.iter_mut().zip(da1_skip) {
            *a += b;
        }
        let dz1 = elu_backward(&c.a1, &da1);
        l[0].backward(&c.x, h, w, &dz1, &mut g[0], false);
        g
    }

    pub fn forward_batch(&self, stack: &Tensor4, noise: &Tensor4) -> Result<Vec<GenCache>, CganError> {
        self.check_input(stack, noise)?;
        let [b, _, h, w] = stack.dims();
        let caches: Vec<GenCache> = (0..b)
            .into_par_iter()
            .map(|i| self.forward_sample(concat_channels(stack.sample(i), noise.sample(i)), h, w))
            .collect();
        Ok(caches)
    }

    /// `(batch, 1, h, w)` output in `(-1, 1)`.
    pub fn forward(&self, stack: &Tensor4, noise: &Tensor4) -> Result<Tensor4, CganError> {
        let [b, _, h, w] = stack.dims();
        let caches = self.forward_batch(stack, noise)?;
        let out = Tensor4::from_vec([b, 1, h, w], caches.into_iter().flat_map(|c| c.y).collect())?;
        out.check_finite("generator output")?;
        Ok(out)
    }
}

pub fn concat_channels(a: &[f64], b: &[f64]) -> Vec<f64> {
    [a, b].concat()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    pub n: usize,
    pub params: Params,
}

pub struct DiscCache {
    h: usize,
    w: usize,
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    a3: Vec<f64>,
    pub logits: Vec<f64>,
}

impl Discriminator {
    pub fn new(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let he = std::f64::consts::SQRT_2;
        let layers = vec![
            Conv2d::new("d.conv1", n + 1, 16, 4, 2, 1, he, &mut rng),
            Conv2d::new("d.conv2", 16, 32, 4, 2, 1, he, &mut rng),
            Conv2d::new("d.conv3", 32, 32, 4, 2, 1, he, &mut rng),
            Conv2d::new("d.head", 32, 1, 3, 1, 1, 1.0, &mut rng),
        ];
        Discriminator {
            n,
            params: Params { layers },
        }
    }

    pub fn from_params(n: usize, params: Params) -> Result<Self, CganError> {
        let reference = Discriminator::new(n, 0);
        check_layout(&reference.params, &params)?;
        Ok(Discriminator { n, params })
    }

    pub fn patch_dims(h: usize, w: usize) -> (usize, usize) {
        (h / 8, w / 8)
    }

    pub fn forward_sample(&self, x: Vec<f64>, h: usize, w: usize) -> DiscCache {
        let l = &self.params.layers;
        let (z1, h1, w1) = l[0].forward(&x, h, w);
        let a1 = elu(&z1);
        let (z2, h2, w2) = l[1].forward(&a1, h1, w1);
        let a2 = elu(&z2);
        let (z3, h3, w3) = l[2].forward(&a2, h2, w2);
        let a3 = elu(&z3);
        let (logits, _, _) = l[3].forward(&a3, h3, w3);
        DiscCache {
            h,
            w,
            x,
            a1,
            a2,
            a3,
            logits,
        }
    }

    /// Backward from logit gradients. Parameter gradients go into `grads`
    /// when given; the input gradient is returned when `want_input`.
    pub fn backward_sample(
        &self,
        c: &DiscCache,
        d_logits: &[f64],
        grads: Option<&mut Grads>,
        want_input: bool,
    ) -> Option<Vec<f64>> {
        let l = &self.params.layers;
        let mut scratch;
        let g = match grads {
            Some(g) => g,
            None => {
                scratch = self.params.zero_grads();
                &mut scratch
            }
        };
        let (h1, w1) = l[0].out_dims(c.h, c.w);
        let (h2, w2) = l[1].out_dims(h1, w1);
        let (h3, w3) = l[2].out_dims(h2, w2);
        let da3 = l[3].backward(&c.a3, h3, w3, d_logits, &mut g[3], true).unwrap();
        let dz3 = elu_backward(&c.a3, &da3);
        let da2 = l[2].backward(&c.a2, h2, w2, &dz3, &mut g[2], true).unwrap();
        let dz2 = elu_backward(&c.a2, &da2);
        let da1 = l[1].backward(&c.a1, h1, w1, &dz2, &mut g[1], true).unwrap();
        let dz1 = elu_backward(&c.a1, &da1);
        l[0].backward(&c.x, c.h, c.w, &dz1, &mut g[0], want_input)
    }

    fn check_input(&self, stack: &Tensor4, image: &Tensor4) -> Result<(), CganError> {
        let [b, c, h, w] = stack.dims();
        if c != self.n {
            return Err(CganError::ShapeMismatch(format!(
                "condition has {c} channels, discriminator expects {}",
                self.n
            )));
        }
        if image.dims() != [b, 1, h, w] {
            return Err(CganError::ShapeMismatch(format!(
                "image dims {:?} do not match condition {:?}",
                image.dims(),
                stack.dims()
            )));
        }
        if h % 8 != 0 || w % 8 != 0 || h < 16 || w < 16 {
            return Err(CganError::ShapeMismatch(format!(
                "spatial size {h}x{w} must be a multiple of 8 and at least 16"
            )));
        }
        Ok(())
    }

    /// `(batch, 1, h/8, w/8)` patch logits.
    pub fn forward(&self, stack: &Tensor4, image: &Tensor4) -> Result<Tensor4, CganError> {
        self.check_input(stack, image)?;
        let [b, _, h, w] = stack.dims();
        let (ph, pw) = Self::patch_dims(h, w);
        let logits: Vec<f64> = (0..b)
            .into_par_iter()
            .map(|i| self.forward_sample(concat_channels(stack.sample(i), image.sample(i)), h, w).logits)
            .collect::<Vec<_>>()
            .concat();
        let out = Tensor4::from_vec([b, 1, ph, pw], logits)?;
        out.check_finite("discriminator logits")?;
        Ok(out)
    }
}

fn check_layout(reference: &Params, got: &Params) -> Result<(), CganError> {
    let shape = |l: &Conv2d| (l.name.clone(), l.cin, l.cout, l.k, l.stride, l.pad, l.weight.len(), l.bias.len());
    let a: Vec<_> = reference.layers.iter().map(shape).collect();
    let b: Vec<_> = got.layers.iter().map(shape).collect();
    if a != b {
        return Err(CganError::ShapeMismatch("parameter layout does not match the architecture".into()));
    }
    Ok(())
}

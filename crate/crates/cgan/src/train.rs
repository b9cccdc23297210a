//! Alternating discriminator/generator updates with momentum SGD.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use evstack_core::dataset::TrainingPair;
use evstack_core::image::GrayImage;
use evstack_core::stacking::NormalizedStack;

use crate::config::TrainConfig;
use crate::loss::{l1_grad, l1_slices, log_one_minus_sigmoid, log_sigmoid, loss_egan_with_grad, total_objective, LossBreakdown};
use crate::nets::{concat_channels, sum_grads, Discriminator, Generator, Grads, Params};
use crate::tensor::{CganError, Tensor4};

pub const MIN_PAIRS: usize = 100;

/// Seed offset for the fixed noise used on held-out pairs.
const HOLDOUT_NOISE_SALT: u64 = 0x5eed_0b5e;

/// Stack values as `(n, h, w)` reals.
pub fn stack_sample(stack: &NormalizedStack) -> Vec<f64> {
    stack.values.iter().map(|&v| v as f64).collect()
}

/// Intensities mapped from `0..=255` onto `[-1, 1]`.
pub fn image_sample(img: &GrayImage) -> Vec<f64> {
    img.data().iter().map(|&v| v as f64 / 127.5 - 1.0).collect()
}

/// Maps generator output onto 8-bit intensities via `(v + 1) * 127.5`.
pub fn output_to_gray(values: &[f64], width: usize, height: usize) -> Result<GrayImage, CganError> {
    let scaled: Vec<f64> = values.iter().map(|v| (v + 1.0) * 127.5).collect();
    GrayImage::from_f64(width, height, &scaled).map_err(|e| CganError::ShapeMismatch(e.to_string()))
}

pub fn noise_sample(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

/// Generator output for one stack, with the noise channel drawn from `seed`.
pub fn infer(g: &Generator, stack: &NormalizedStack, seed: u64) -> Result<GrayImage, CganError> {
    if stack.n != g.n {
        return Err(CganError::ShapeMismatch(format!(
            "stack has {} frames, generator expects {}",
            stack.n, g.n
        )));
    }
    let (h, w) = (stack.height, stack.width);
    let s = Tensor4::from_vec([1, g.n, h, w], stack_sample(stack))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Tensor4::from_vec([1, 1, h, w], noise_sample(&mut rng, h * w))?;
    let out = g.forward(&s, &z)?;
    output_to_gray(out.data(), w, h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Means over the epoch's steps; `total` recomputed from the means.
    pub loss: LossBreakdown,
    pub holdout_l1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub initial_holdout_l1: f64,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<LossBreakdown>,
    pub train_pairs: usize,
    pub holdout_pairs: usize,
}

impl TrainOutcome {
    pub fn final_holdout_l1(&self) -> f64 {
        self.epochs.last().map_or(self.initial_holdout_l1, |e| e.holdout_l1)
    }
}

/// Training stopped early; `last_good` holds the state before the failing step.
#[derive(Debug)]
pub struct TrainHalt {
    pub error: CganError,
    pub last_good: Option<Box<TrainOutcome>>,
}

impl From<CganError> for TrainHalt {
    fn from(error: CganError) -> Self {
        TrainHalt { error, last_good: None }
    }
}

struct Momentum {
    velocity: Grads,
    beta: f64,
    lr: f64,
}

impl Momentum {
    fn new(params: &Params, beta: f64, lr: f64) -> Self {
        Momentum {
            velocity: params.zero_grads(),
            beta,
            lr,
        }
    }

    /// `v = beta * v + g; p -= lr * v`
    fn step(&mut self, params: &mut Params, grads: &Grads) {
        for ((layer, v), g) in params.layers.iter_mut().zip(&mut self.velocity).zip(grads) {
            update(&mut layer.weight, &mut v.weight, &g.weight, self.beta, self.lr);
            update(&mut layer.bias, &mut v.bias, &g.bias, self.beta, self.lr);
        }
    }
}

fn update(p: &mut [f64], v: &mut [f64], g: &[f64], beta: f64, lr: f64) {
    for ((p, v), g) in p.iter_mut().zip(v.iter_mut()).zip(g) {
        *v = beta * *v + g;
        *p -= lr * *v;
    }
}

struct Sample {
    stack: Vec<f64>,
    target: Vec<f64>,
}

fn to_samples(pairs: &[TrainingPair], n: usize, dims: (usize, usize)) -> Result<Vec<Sample>, CganError> {
    pairs
        .iter()
        .map(|p| {
            if p.input.n != n || (p.input.width, p.input.height) != dims || p.target.dims() != dims {
                return Err(CganError::ShapeMismatch(format!(
                    "pair at t={} does not match {n} frames of {}x{}",
                    p.t, dims.0, dims.1
                )));
            }
            Ok(Sample {
                stack: stack_sample(&p.input),
                target: image_sample(&p.target),
            })
        })
        .collect()
}

/// Mean generator L1 over `samples` with noise fixed by `seed`.
fn holdout_l1(g: &Generator, samples: &[Sample], h: usize, w: usize, seed: u64) -> f64 {
    if samples.is_empty() {
        return f64::NAN;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ HOLDOUT_NOISE_SALT);
    let noises: Vec<Vec<f64>> = samples.iter().map(|_| noise_sample(&mut rng, h * w)).collect();
    let per: Vec<f64> = samples
        .par_iter()
        .zip(&noises)
        .map(|(s, z)| l1_slices(&g.forward_sample(concat_channels(&s.stack, z), h, w).y, &s.target))
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

/// Per-sample results of one step; gathered in sample order.
struct DiscPart {
    grads: Grads,
    real_logits: Vec<f64>,
    fake_logits: Vec<f64>,
}

/// Trains a fresh generator/discriminator pair on `pairs`.
///
/// The last `holdout_fraction` of the pairs is never trained on and is used
/// to report generator L1 after every epoch.
pub fn train_toy(pairs: &[TrainingPair], config: &TrainConfig) -> Result<TrainOutcome, TrainHalt> {
    config.validate()?;
    if pairs.len() < MIN_PAIRS {
        return Err(CganError::DatasetTooSmall {
            min: MIN_PAIRS,
            got: pairs.len(),
        }
        .into());
    }
    let first = &pairs[0];
    let n = first.input.n;
    let (w, h) = (first.input.width, first.input.height);
    let holdout_count = ((pairs.len() as f64) * config.holdout_fraction).ceil() as usize;
    let split = pairs.len() - holdout_count;
    let train = to_samples(&pairs[..split], n, (w, h))?;
    let holdout = to_samples(&pairs[split..], n, (w, h))?;

    let mut g = Generator::new(n, config.seed);
    let mut d = Discriminator::new(n, config.seed.wrapping_add(1));
    // Shape checks on a dummy batch before committing to the loop.
    g.forward(&Tensor4::zeros([1, n, h, w]), &Tensor4::zeros([1, 1, h, w]))?;
    d.forward(&Tensor4::zeros([1, n, h, w]), &Tensor4::zeros([1, 1, h, w]))?;

    let mut opt_g = Momentum::new(&g.params, config.momentum, config.lr_g);
    let mut opt_d = Momentum::new(&d.params, config.momentum, config.lr_d);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let initial = holdout_l1(&g, &holdout, h, w, config.seed);
    info!("training on {} pairs, {} held out; initial held-out L1 {initial:.4}", train.len(), holdout.len());

    let mut outcome = TrainOutcome {
        generator: g.clone(),
        discriminator: d.clone(),
        initial_holdout_l1: initial,
        epochs: Vec::new(),
        steps: Vec::new(),
        train_pairs: train.len(),
        holdout_pairs: holdout.len(),
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let pix = (h * w) as f64;
    let (ph, pw) = Discriminator::patch_dims(h, w);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = (0.0, 0.0);
        let mut step_count = 0usize;
        for batch in order.chunks(config.batch_size) {
            let b = batch.len();
            let noises: Vec<Vec<f64>> = batch.iter().map(|_| noise_sample(&mut rng, h * w)).collect();
            let gen: Vec<_> = batch
                .par_iter()
                .zip(&noises)
                .map(|(&i, z)| g.forward_sample(concat_channels(&train[i].stack, z), h, w))
                .collect();

            // Discriminator ascends L_eGAN: minimize its negative.
            let per_logits = (b * ph * pw) as f64;
            let parts: Vec<DiscPart> = batch
                .par_iter()
                .zip(&gen)
                .map(|(&i, gc)| {
                    let s = &train[i];
                    let real = d.forward_sample(concat_channels(&s.stack, &s.target), h, w);
                    let fake = d.forward_sample(concat_channels(&s.stack, &gc.y), h, w);
                    let mut grads = d.params.zero_grads();
                    let dr: Vec<f64> = real.logits.iter().map(|&x| -log_sigmoid(x).1 / per_logits).collect();
                    let df: Vec<f64> = fake.logits.iter().map(|&x| -log_one_minus_sigmoid(x).1 / per_logits).collect();
                    d.backward_sample(&real, &dr, Some(&mut grads), false);
                    d.backward_sample(&fake, &df, Some(&mut grads), false);
                    DiscPart {
                        grads,
                        real_logits: real.logits,
                        fake_logits: fake.logits,
                    }
                })
                .collect();
            let real: Vec<f64> = parts.iter().flat_map(|p| p.real_logits.iter().copied()).collect();
            let fake: Vec<f64> = parts.iter().flat_map(|p| p.fake_logits.iter().copied()).collect();
            let (l_egan, _, _) = loss_egan_with_grad(&real, &fake).map_err(|e| halt(e, &outcome))?;
            let l_l1 = batch
                .iter()
                .zip(&gen)
                .map(|(&i, gc)| l1_slices(&gc.y, &train[i].target))
                .sum::<f64>()
                / b as f64;
            let d_grads = sum_grads(parts.into_iter().map(|p| p.grads).collect(), d.params.zero_grads());
            opt_d.step(&mut d.params, &d_grads);

            // Generator descends log(1 - D(fake)) + lambda * L1 through the updated D.
            let g_parts: Vec<Grads> = batch
                .par_iter()
                .zip(&gen)
                .map(|(&i, gc)| {
                    let s = &train[i];
                    let fake = d.forward_sample(concat_channels(&s.stack, &gc.y), h, w);
                    let dl: Vec<f64> = fake.logits.iter().map(|&x| log_one_minus_sigmoid(x).1 / per_logits).collect();
                    let d_in = d.backward_sample(&fake, &dl, None, true).unwrap();
                    let mut dy = d_in[n * h * w..].to_vec();
                    let l1 = l1_grad(&gc.y, &s.target, config.lambda / (b as f64 * pix));
                    for (a, c) in dy.iter_mut().zip(&l1) {
                        *a += c;
                    }
                    g.backward_sample(gc, &dy)
                })
                .collect();
            let g_grads = sum_grads(g_parts, g.params.zero_grads());
            opt_g.step(&mut g.params, &g_grads);

            let step = total_objective(l_egan, l_l1, config.lambda);
            if !(step.total.is_finite() && g.params.all_finite() && d.params.all_finite()) {
                return Err(halt(CganError::NonFinite(format!("epoch {epoch} step {step_count}")), &outcome));
            }
            outcome.steps.push(step);
            sums.0 += l_egan;
            sums.1 += l_l1;
            step_count += 1;
        }
        let k = step_count.max(1) as f64;
        let holdout_l1 = holdout_l1(&g, &holdout, h, w, config.seed);
        let record = EpochRecord {
            epoch,
            loss: total_objective(sums.0 / k, sums.1 / k, config.lambda),
            holdout_l1,
        };
        debug!(
            "epoch {epoch}: l_egan {:.4} l_l1 {:.4} held-out L1 {holdout_l1:.4}",
            record.loss.l_egan, record.loss.l_l1
        );
        outcome.epochs.push(record);
        outcome.generator = g.clone();
        outcome.discriminator = d.clone();
    }
    Ok(outcome)
}

fn halt(error: CganError, last: &TrainOutcome) -> TrainHalt {
    TrainHalt {
        error,
        last_good: Some(Box::new(last.clone())),
    }
}

use evstack_cgan::checkpoint::Checkpoint;
use evstack_cgan::data::{toy_pairs, ToyDataSpec};
use evstack_cgan::train::output_to_gray;
use evstack_cgan::{infer, train_toy, CganError, Discriminator, Generator, Tensor4, TrainConfig};
use evstack_core::stacking::NormalizedStack;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(dims: [usize; 4], seed: u64) -> Tensor4 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = dims.iter().product();
    Tensor4::from_vec(dims, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

#[test]
fn generator_shape_and_determinism() {
    let g = Generator::new(3, 1);
    let s = random([4, 3, 32, 32], 2);
    let z = random([4, 1, 32, 32], 3);
    let y = g.forward(&s, &z).unwrap();
    assert_eq!(y.dims(), [4, 1, 32, 32]);
    assert!(y.data().iter().all(|v| v.abs() < 1.0));
    assert_eq!(g.forward(&s, &z).unwrap(), y);
    assert_eq!(Generator::new(3, 1).forward(&s, &z).unwrap(), y);
    assert!(matches!(g.forward(&random([1, 2, 32, 32], 0), &z), Err(CganError::ShapeMismatch(_))));
    for size in [32, 64] {
        let y = g.forward(&random([1, 3, size, size], 4), &random([1, 1, size, size], 5)).unwrap();
        assert_eq!(y.dims(), [1, 1, size, size]);
    }
}

#[test]
fn discriminator_patches_and_batch_order() {
    let d = Discriminator::new(3, 1);
    let s = random([3, 3, 32, 32], 6);
    let img = random([3, 1, 32, 32], 7);
    let out = d.forward(&s, &img).unwrap();
    let [_, _, ph, pw] = out.dims();
    assert!(ph >= 2 && pw >= 2);
    // Reversed batch gives reversed outputs.
    let rev = |t: &Tensor4| {
        let [b, c, h, w] = t.dims();
        let data: Vec<f64> = (0..b).rev().flat_map(|i| t.sample(i).to_vec()).collect();
        Tensor4::from_vec([b, c, h, w], data).unwrap()
    };
    assert_eq!(d.forward(&rev(&s), &rev(&img)).unwrap(), rev(&out));
}

#[test]
fn output_mapping_extremes() {
    let black = output_to_gray(&[-1.0; 16], 4, 4).unwrap();
    assert!(black.data().iter().all(|&v| v == 0));
    let white = output_to_gray(&[1.0; 16], 4, 4).unwrap();
    assert!(white.data().iter().all(|&v| v == 255));
    assert_eq!(output_to_gray(&[0.0], 1, 1).unwrap().data(), &[128]);
}

#[test]
fn infer_keeps_stack_shape() {
    let g = Generator::new(2, 0);
    for size in [32, 64] {
        let stack = NormalizedStack {
            width: size,
            height: size,
            n: 2,
            values: vec![0.25; 2 * size * size],
        };
        let img = infer(&g, &stack, 9).unwrap();
        assert_eq!(img.dims(), (size, size));
        assert_eq!(infer(&g, &stack, 9).unwrap(), img);
    }
    let wrong = NormalizedStack {
        width: 32,
        height: 32,
        n: 3,
        values: vec![0.0; 3 * 1024],
    };
    assert!(infer(&g, &wrong, 0).is_err());
}

fn small_set() -> Vec<evstack_core::dataset::TrainingPair> {
    let pairs = toy_pairs(&ToyDataSpec {
        scenes: 12,
        ..Default::default()
    });
    pairs[..100].to_vec()
}

#[test]
fn training_contracts() {
    let pairs = small_set();
    assert!(matches!(
        train_toy(&pairs[..99], &TrainConfig::default()).map_err(|h| h.error),
        Err(CganError::DatasetTooSmall { min: 100, got: 99 })
    ));

    let zero = TrainConfig {
        epochs: 0,
        seed: 4,
        ..Default::default()
    };
    let out = train_toy(&pairs, &zero).unwrap();
    assert_eq!(out.generator, Generator::new(3, 4));
    assert!(out.steps.is_empty());

    let cfg = TrainConfig {
        epochs: 1,
        seed: 4,
        ..Default::default()
    };
    let a = train_toy(&pairs, &cfg).unwrap();
    let b = train_toy(&pairs, &cfg).unwrap();
    assert_eq!(a.steps, b.steps);
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(
        Checkpoint {
            generator: a.generator.clone(),
            discriminator: a.discriminator.clone()
        }
        .to_bytes(),
        Checkpoint {
            generator: b.generator,
            discriminator: b.discriminator
        }
        .to_bytes()
    );
    assert_eq!(a.steps.len(), 80usize.div_ceil(cfg.batch_size));
    for s in &a.steps {
        assert_eq!(s.total, s.l_egan + s.lambda * s.l_l1);
        assert!(s.l_l1 >= 0.0 && s.l_egan <= 0.0);
    }
}

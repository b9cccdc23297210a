//! Simulator-generated training pairs for the toy model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evstack_core::dataset::{build_pairs, PairConfig, PairMode, TrainingPair};
use evstack_core::simulator::{generate_events, Motion, Pattern, SceneSpec, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDataSpec {
    pub scenes: usize,
    pub size: usize,
    /// Frames per SBT stack.
    pub n: usize,
    /// Simulated duration per scene; frames every 30.3 ms.
    pub duration: i64,
    /// Pattern speed range in pixels per second.
    pub speed: (f64, f64),
    /// Probability of a checkerboard (otherwise a gradient) scene.
    pub checker_share: f64,
    pub seed: u64,
}

impl Default for ToyDataSpec {
    fn default() -> Self {
        ToyDataSpec {
            scenes: 25,
            size: 32,
            n: 3,
            duration: 300_000,
            speed: (300.0, 500.0),
            checker_share: 1.0,
            seed: 0,
        }
    }
}

/// Random moving scene `index` of the family selected by `seed`.
pub fn toy_scene(spec: &ToyDataSpec, index: usize) -> SceneSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(index as u64));
    let pattern = if rng.random_bool(spec.checker_share) {
        Pattern::Checkerboard {
            cell: rng.random_range(5.0..11.0),
        }
    } else {
        Pattern::Gradient
    };
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let speed: f64 = rng.random_range(spec.speed.0..spec.speed.1);
    SceneSpec {
        pattern,
        motion: Motion::Translate {
            vx: speed * angle.cos(),
            vy: speed * angle.sin(),
        },
        low: rng.random_range(20.0..60.0),
        high: rng.random_range(170.0..230.0),
        radiance_scale: 1.0,
        duration: spec.duration,
        width: spec.size,
        height: spec.size,
        seed: rng.random(),
    }
}

/// Pairs each ground-truth frame with the SBT stack since the previous one,
/// scene by scene in order.
pub fn toy_pairs(spec: &ToyDataSpec) -> Vec<TrainingPair> {
    let config = PairConfig {
        mode: PairMode::Sbt { n: spec.n },
        saturation: None,
        blur_filtered: false,
    };
    (0..spec.scenes)
        .flat_map(|i| {
            let scene = toy_scene(spec, i);
            let sim = generate_events(&scene, &SimConfig::default()).expect("toy scenes are valid");
            build_pairs(&sim.stream, &sim.gt_frames, &config)
                .expect("simulator frames match the sensor")
                .pairs
        })
        .collect()
}

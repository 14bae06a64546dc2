//! Seeded Gaussian-blob datasets for the desk-scale training loop. Known
//! classes appear in both splits; held-out classes appear only in the test
//! split, relabeled as the open super-class.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::table::Label;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthConfig {
    pub num_known_classes: usize,
    pub num_open_classes: usize,
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Standard deviation of the class-center distribution.
    pub class_center_spread: f64,
    /// Standard deviation of the per-sample noise around its center.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_known_classes == 0 {
            return Err(Error::InvalidParameter("need at least one known class".into()));
        }
        if self.samples_per_class == 0 {
            return Err(Error::InvalidParameter("samples_per_class must be positive".into()));
        }
        if self.input_dim == 0 {
            return Err(Error::InvalidParameter("input_dim must be positive".into()));
        }
        if !(self.class_center_spread > 0.0) || !(self.noise_sigma > 0.0) {
            return Err(Error::InvalidParameter(
                "center spread and noise sigma must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSample {
    pub features: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestSample {
    pub features: Vec<f64>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthData {
    pub train: Vec<TrainSample>,
    pub test: Vec<TestSample>,
}

/// Draws one Gaussian blob per class, deterministic under the seed. The
/// training split contains known classes only; the test split adds fresh
/// known-class draws plus the open classes.
pub fn generate_synth(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let center_dist = Normal::new(0.0, config.class_center_spread)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let noise = Normal::new(0.0, config.noise_sigma)
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;

    let total_classes = config.num_known_classes + config.num_open_classes;
    let centers: Vec<Vec<f64>> = (0..total_classes)
        .map(|_| (0..config.input_dim).map(|_| center_dist.sample(&mut rng)).collect())
        .collect();

    let draw = |center: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        center.iter().map(|&c| c + noise.sample(rng)).collect()
    };

    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..config.num_known_classes {
        for _ in 0..config.samples_per_class {
            train.push(TrainSample {
                features: draw(&centers[class], &mut rng),
                label: class,
            });
        }
        for _ in 0..config.samples_per_class {
            test.push(TestSample {
                features: draw(&centers[class], &mut rng),
                label: Label::Known(class),
            });
        }
    }
    for open_class in 0..config.num_open_classes {
        let center = &centers[config.num_known_classes + open_class];
        for _ in 0..config.samples_per_class {
            test.push(TestSample {
                features: draw(center, &mut rng),
                label: Label::Open,
            });
        }
    }
    Ok(SynthData { train, test })
}

//! A two-layer perceptron with manual backpropagation.
//!
//! The network is deliberately split into a feature map (first dense layer
//! with tanh) and a scoring head (second dense layer): open features are
//! synthesized in the feature space and scored by the head alone. Outputs
//! follow the open-high direction: the score for class `c` is evidence
//! *against* `c`, the predicted class is the argmin, and the open-set score
//! is the minimum output.

use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
    /// Feature layer, row-major `hidden_dim x input_dim`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// Scoring head, row-major `num_classes x hidden_dim`.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl MlpModel {
    pub fn new_random(
        input_dim: usize,
        hidden_dim: usize,
        num_classes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let normal = |rng: &mut dyn rand::RngCore, scale: f64| -> f64 {
            // Box-Muller on two uniforms keeps us off the distribution
            // crate's internals for reproducibility across versions.
            let u1: f64 = rng.random::<f64>().max(1e-12);
            let u2: f64 = rng.random::<f64>();
            scale * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        let s1 = 1.0 / (input_dim as f64).sqrt();
        let s2 = 1.0 / (hidden_dim as f64).sqrt();
        MlpModel {
            input_dim,
            hidden_dim,
            num_classes,
            w1: (0..hidden_dim * input_dim).map(|_| normal(rng, s1)).collect(),
            b1: vec![0.0; hidden_dim],
            w2: (0..num_classes * hidden_dim).map(|_| normal(rng, s2)).collect(),
            b2: vec![0.0; num_classes],
        }
    }

    /// Pre-activation and activated feature vector of the first layer.
    pub fn forward_pre(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        debug_assert_eq!(x.len(), self.input_dim);
        let mut z1 = self.b1.clone();
        for h in 0..self.hidden_dim {
            let row = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            z1[h] += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
        let a1 = z1.iter().map(|v| v.tanh()).collect();
        (z1, a1)
    }

    /// Class scores of the head applied to a feature vector.
    pub fn forward_post(&self, features: &[f64]) -> Vec<f64> {
        debug_assert_eq!(features.len(), self.hidden_dim);
        let mut z2 = self.b2.clone();
        for c in 0..self.num_classes {
            let row = &self.w2[c * self.hidden_dim..(c + 1) * self.hidden_dim];
            z2[c] += row.iter().zip(features).map(|(w, v)| w * v).sum::<f64>();
        }
        z2
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let (_, a1) = self.forward_pre(x);
        self.forward_post(&a1)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Flattened parameters in the order w1, b1, w2, b2.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }

    pub fn set_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut offset = 0;
        for dst in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            let len = dst.len();
            dst.copy_from_slice(&params[offset..offset + len]);
            offset += len;
        }
    }
}

/// Gradient buffers matching [`MlpModel`]'s parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; model.b1.len()],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; model.b2.len()],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(
            self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len(),
        );
        out.extend_from_slice(&self.w1);
        out.extend_from_slice(&self.b1);
        out.extend_from_slice(&self.w2);
        out.extend_from_slice(&self.b2);
        out
    }
}

/// One plain gradient-descent step.
pub fn sgd_step(model: &mut MlpModel, grads: &Gradients, learning_rate: f64) {
    for (dst, src) in [
        (&mut model.w1, &grads.w1),
        (&mut model.b1, &grads.b1),
        (&mut model.w2, &grads.w2),
        (&mut model.b2, &grads.b2),
    ] {
        for (p, g) in dst.iter_mut().zip(src) {
            *p -= learning_rate * g;
        }
    }
}

pub fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_decomposes_into_pre_and_post() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let model = MlpModel::new_random(2, 4, 3, &mut rng);
        let x = [0.3, -0.7];
        let (_, a1) = model.forward_pre(&x);
        assert_eq!(model.forward(&x), model.forward_post(&a1));
    }

    #[test]
    fn params_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut model = MlpModel::new_random(3, 5, 2, &mut rng);
        let params = model.params();
        let mut perturbed = params.clone();
        perturbed[7] += 1.5;
        model.set_params(&perturbed);
        assert_eq!(model.params(), perturbed);
        assert_eq!(model.param_count(), params.len());
    }
}

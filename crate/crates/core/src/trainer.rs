//! End-to-end optimization of the gated pairwise ranking risk on synthetic
//! data: open features are synthesized per batch by mixing feature-space
//! representations of differently-labeled samples, and the objective couples
//! a close-set likelihood term with a square-surrogate ranking term switched
//! per sample by a correctness gate frozen at each epoch boundary.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mlp::{argmin, sgd_step, Gradients, MlpModel};
use crate::ranking::openauc_pair_stats;
use crate::synth::{SynthData, TestSample, TrainSample};
use crate::table::{Label, ScoreConvention, ScoredSample, ScoreTable};

/// Continuous stand-in for the ranking indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Surrogate {
    /// `l(t) = (1 - t)^2`, gradient `-2 (1 - t)`.
    Square,
}

impl Surrogate {
    pub fn loss(self, t: f64) -> f64 {
        match self {
            Surrogate::Square => (1.0 - t) * (1.0 - t),
        }
    }

    pub fn grad(self, t: f64) -> f64 {
        match self {
            Surrogate::Square => -2.0 * (1.0 - t),
        }
    }
}

/// Close-set classification loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CloseLoss {
    /// Negative log-likelihood of class-membership probabilities obtained by
    /// a softmax over the negated scores (scores are evidence against).
    NegLogLikelihood,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    /// Weight of the ranking term.
    pub lambda: f64,
    /// Beta distribution parameter for the mixing coefficient.
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub seed: u64,
    pub surrogate: Surrogate,
    pub close_loss: CloseLoss,
    /// When false the correctness gate is fixed to 1 for every sample (the
    /// decoupled accuracy-plus-ranking ablation).
    pub gated: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.2,
            alpha: 2.0,
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.05,
            hidden_dim: 24,
            seed: 0,
            surrogate: Surrogate::Square,
            close_loss: CloseLoss::NegLogLikelihood,
            gated: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::InvalidParameter("lambda must be non-negative".into()));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::InvalidParameter("alpha must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size < 2 || self.hidden_dim == 0 {
            return Err(Error::InvalidParameter(
                "epochs, hidden_dim must be positive and batch_size at least 2".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParameter("learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// One synthesized open sample: the batch slots it was mixed from and the
/// mixing coefficient. Features are re-derived from the current model so
/// gradients can flow through both parents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixupPair {
    pub i: usize,
    pub j: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixupBatch {
    pub pairs: Vec<MixupPair>,
    /// Mixed feature vectors under the model passed to [`mixup_batch`].
    pub features: Vec<Vec<f64>>,
}

/// Pairs the batch with a shuffled copy of itself slot by slot, drops
/// same-label pairs, and mixes the remaining feature vectors with fresh
/// Beta-distributed coefficients. Linear in the batch size. An all-same-label
/// batch yields an empty result.
pub fn mixup_batch(
    batch: &[TrainSample],
    model: &MlpModel,
    alpha: f64,
    rng: &mut impl Rng,
) -> Result<MixupBatch> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("alpha must be positive".into()));
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut partner: Vec<usize> = (0..batch.len()).collect();
    partner.shuffle(rng);

    let mut pairs = Vec::new();
    let mut features = Vec::new();
    for (i, &j) in partner.iter().enumerate() {
        if batch[i].label == batch[j].label {
            continue;
        }
        let lambda = beta.sample(rng);
        let (_, a_i) = model.forward_pre(&batch[i].features);
        let (_, a_j) = model.forward_pre(&batch[j].features);
        let mixed: Vec<f64> = a_i
            .iter()
            .zip(&a_j)
            .map(|(x, y)| lambda * x + (1.0 - lambda) * y)
            .collect();
        pairs.push(MixupPair { i, j, lambda });
        features.push(mixed);
    }
    Ok(MixupBatch { pairs, features })
}

#[derive(Debug, Clone)]
pub struct RiskOutput {
    pub loss: f64,
    pub close_loss: f64,
    pub ranking_loss: f64,
    pub grads: Gradients,
}

/// Evaluates the batch objective and its gradients by manual
/// backpropagation:
/// mean close-set loss plus `lambda / (n_close * n_open)` times the gated
/// square-surrogate sum over all (close, generated-open) pairs in the batch.
/// The gate vector is treated as a constant. Mixed open features are
/// recomputed from the pair list so the ranking term's gradient reaches the
/// feature layer through both parents.
pub fn openauc_risk(
    batch: &[TrainSample],
    open_batch: &MixupBatch,
    model: &MlpModel,
    frozen_gates: &[bool],
    lambda: f64,
    surrogate: Surrogate,
) -> Result<RiskOutput> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("risk needs a non-empty close batch".into()));
    }
    if frozen_gates.len() != batch.len() {
        return Err(Error::InvalidParameter(
            "gate vector length must match the batch".into(),
        ));
    }
    let n_close = batch.len();
    let n_open = open_batch.pairs.len();
    let c = model.num_classes;
    let mut grads = Gradients::zeros_like(model);

    // Forward pass over the close batch.
    let mut acts = Vec::with_capacity(n_close);
    for sample in batch {
        let (_, a1) = model.forward_pre(&sample.features);
        let z2 = model.forward_post(&a1);
        acts.push((a1, z2));
    }

    // Close-set term: softmax over negated scores, NLL of the true class.
    let mut close_loss = 0.0;
    let mut dz2: Vec<Vec<f64>> = vec![vec![0.0; c]; n_close];
    let close_scale = 1.0 / n_close as f64;
    for (idx, sample) in batch.iter().enumerate() {
        let z2 = &acts[idx].1;
        let max_u = z2.iter().map(|v| -v).fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z2.iter().map(|v| (-v - max_u).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let p_true = exps[sample.label] / sum;
        close_loss += -(p_true.max(f64::MIN_POSITIVE)).ln();
        for k in 0..c {
            let p_k = exps[k] / sum;
            let indicator = if k == sample.label { 1.0 } else { 0.0 };
            dz2[idx][k] += close_scale * (indicator - p_k);
        }
    }
    close_loss *= close_scale;

    // Ranking term over all (close, open) slots of this batch.
    let mut ranking_loss = 0.0;
    let mut open_feats: Vec<Vec<f64>> = Vec::with_capacity(n_open);
    let mut open_scores: Vec<(Vec<f64>, usize)> = Vec::with_capacity(n_open);
    let mut d_r_open = vec![0.0; n_open];
    let mut d_r_close = vec![0.0; n_close];
    if lambda > 0.0 && n_open > 0 {
        for pair in &open_batch.pairs {
            let a_i = &acts[pair.i].0;
            let a_j = &acts[pair.j].0;
            let mixed: Vec<f64> = a_i
                .iter()
                .zip(a_j)
                .map(|(x, y)| pair.lambda * x + (1.0 - pair.lambda) * y)
                .collect();
            let z2 = model.forward_post(&mixed);
            let m = argmin(&z2);
            open_feats.push(mixed);
            open_scores.push((z2, m));
        }
        let pair_scale = lambda / (n_close * n_open) as f64;
        for i in 0..n_close {
            if !frozen_gates[i] {
                continue;
            }
            let z2_i = &acts[i].1;
            let r_i = z2_i[argmin(z2_i)];
            for j in 0..n_open {
                let r_j = open_scores[j].0[open_scores[j].1];
                let t = r_j - r_i;
                ranking_loss += pair_scale * surrogate.loss(t);
                let g = pair_scale * surrogate.grad(t);
                d_r_open[j] += g;
                d_r_close[i] -= g;
            }
        }
    }

    // Backward pass: close samples first (close term + their r gradient).
    let mut da1: Vec<Vec<f64>> = vec![vec![0.0; model.hidden_dim]; n_close];
    for i in 0..n_close {
        let z2 = &acts[i].1;
        if d_r_close[i] != 0.0 {
            dz2[i][argmin(z2)] += d_r_close[i];
        }
        let a1 = &acts[i].0;
        for k in 0..c {
            let g = dz2[i][k];
            if g == 0.0 {
                continue;
            }
            grads.b2[k] += g;
            let row = &mut grads.w2[k * model.hidden_dim..(k + 1) * model.hidden_dim];
            for (h, slot) in row.iter_mut().enumerate() {
                *slot += g * a1[h];
            }
            let w_row = &model.w2[k * model.hidden_dim..(k + 1) * model.hidden_dim];
            for (h, w) in w_row.iter().enumerate() {
                da1[i][h] += g * w;
            }
        }
    }

    // Open features: gradient enters at the head and splits to both parents.
    for j in 0..open_feats.len() {
        let g_r = d_r_open[j];
        if g_r == 0.0 {
            continue;
        }
        let m = open_scores[j].1;
        let feat = &open_feats[j];
        grads.b2[m] += g_r;
        let row = &mut grads.w2[m * model.hidden_dim..(m + 1) * model.hidden_dim];
        for (h, slot) in row.iter_mut().enumerate() {
            *slot += g_r * feat[h];
        }
        let w_row = &model.w2[m * model.hidden_dim..(m + 1) * model.hidden_dim];
        let pair = open_batch.pairs[j];
        for (h, w) in w_row.iter().enumerate() {
            let du = g_r * w;
            da1[pair.i][h] += pair.lambda * du;
            da1[pair.j][h] += (1.0 - pair.lambda) * du;
        }
    }

    // Through the tanh feature layer into the first-layer parameters.
    for i in 0..n_close {
        let a1 = &acts[i].0;
        let x = &batch[i].features;
        for h in 0..model.hidden_dim {
            let dz1 = da1[i][h] * (1.0 - a1[h] * a1[h]);
            if dz1 == 0.0 {
                continue;
            }
            grads.b1[h] += dz1;
            let row = &mut grads.w1[h * model.input_dim..(h + 1) * model.input_dim];
            for (d, slot) in row.iter_mut().enumerate() {
                *slot += dz1 * x[d];
            }
        }
    }

    Ok(RiskOutput {
        loss: close_loss + ranking_loss,
        close_loss,
        ranking_loss,
        grads,
    })
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub close: f64,
    pub ranking: f64,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: MlpModel,
    pub epoch: usize,
    /// Correctness gates captured at the last epoch boundary.
    pub frozen_gates: Vec<bool>,
    pub loss_history: Vec<EpochLoss>,
    /// One hash of the gate vector per epoch; gates never change inside an
    /// epoch, so this is the complete gate trace.
    pub gate_hashes: Vec<u64>,
    /// Batches whose mixup output was empty (all labels equal).
    pub skipped_mixup_batches: usize,
    pub rng: ChaCha8Rng,
}

fn gate_hash(gates: &[bool]) -> u64 {
    let mut hasher = DefaultHasher::new();
    gates.hash(&mut hasher);
    hasher.finish()
}

fn compute_gates(model: &MlpModel, samples: &[TrainSample]) -> Vec<bool> {
    samples
        .iter()
        .map(|s| argmin(&model.forward(&s.features)) == s.label)
        .collect()
}

/// Runs the epoch loop: refreeze gates, shuffle, synthesize open features
/// per batch, take one gradient step per batch. Deterministic under the
/// config seed.
pub fn train(train_set: &[TrainSample], config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set is empty".into()));
    }
    let input_dim = train_set[0].features.len();
    let num_classes = train_set.iter().map(|s| s.label).max().unwrap() + 1;
    if train_set.iter().any(|s| s.features.len() != input_dim) {
        return Err(Error::MalformedInput("inconsistent feature dimensions".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::new_random(input_dim, config.hidden_dim, num_classes, &mut rng);
    let mut state_gates = vec![false; train_set.len()];
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut gate_hashes = Vec::with_capacity(config.epochs);
    let mut skipped = 0usize;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        state_gates = if config.gated {
            compute_gates(&model, train_set)
        } else {
            vec![true; train_set.len()]
        };
        gate_hashes.push(gate_hash(&state_gates));

        order.shuffle(&mut rng);
        let mut epoch_total = 0.0;
        let mut epoch_close = 0.0;
        let mut epoch_ranking = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<TrainSample> =
                chunk.iter().map(|&i| train_set[i].clone()).collect();
            let gates: Vec<bool> = chunk.iter().map(|&i| state_gates[i]).collect();
            let open_batch = if config.lambda > 0.0 {
                let generated = mixup_batch(&batch, &model, config.alpha, &mut rng)?;
                if generated.pairs.is_empty() {
                    skipped += 1;
                }
                generated
            } else {
                MixupBatch {
                    pairs: Vec::new(),
                    features: Vec::new(),
                }
            };
            let out = openauc_risk(
                &batch,
                &open_batch,
                &model,
                &gates,
                config.lambda,
                config.surrogate,
            )?;
            if !out.loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            sgd_step(&mut model, &out.grads, config.learning_rate);
            epoch_total += out.loss;
            epoch_close += out.close_loss;
            epoch_ranking += out.ranking_loss;
            batches += 1;
        }
        loss_history.push(EpochLoss {
            epoch,
            total: epoch_total / batches as f64,
            close: epoch_close / batches as f64,
            ranking: epoch_ranking / batches as f64,
        });
    }

    Ok(TrainState {
        model,
        epoch: config.epochs,
        frozen_gates: state_gates,
        loss_history,
        gate_hashes,
        skipped_mixup_batches: skipped,
        rng,
    })
}

/// Scores labeled test inputs into an open-high score table: class scores
/// are the raw model outputs and the open score is their minimum.
pub fn score_table_from_model(model: &MlpModel, test: &[TestSample]) -> Result<ScoreTable> {
    let samples = test
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let scores = model.forward(&s.features);
            ScoredSample::with_derived_open_score(format!("test_{i:05}"), s.label, scores)
        })
        .collect();
    ScoreTable::new(ScoreConvention::OpenHigh, model.num_classes, samples)
}

#[derive(Debug, Clone)]
pub struct GateAblation {
    pub gated_state: TrainState,
    pub ungated_state: TrainState,
    pub gated_openauc: f64,
    pub ungated_openauc: f64,
}

/// Trains twice with the same seed, once with the correctness gate and once
/// with the gate forced on, and reports test OpenAUC for both runs.
pub fn ablate_gate(data: &SynthData, config: &TrainConfig) -> Result<GateAblation> {
    let gated_cfg = TrainConfig {
        gated: true,
        ..*config
    };
    let ungated_cfg = TrainConfig {
        gated: false,
        ..*config
    };
    let gated_state = train(&data.train, &gated_cfg)?;
    let ungated_state = train(&data.train, &ungated_cfg)?;
    let gated_table = score_table_from_model(&gated_state.model, &data.test)?;
    let ungated_table = score_table_from_model(&ungated_state.model, &data.test)?;
    let value = |t: &ScoreTable| -> Result<f64> {
        let stats = openauc_pair_stats(t)?;
        Ok(stats.concordant_pairs as f64 / stats.total_pairs() as f64)
    };
    Ok(GateAblation {
        gated_openauc: value(&gated_table)?,
        ungated_openauc: value(&ungated_table)?,
        gated_state,
        ungated_state,
    })
}

/// Checks that the complement of the gated pair statistic equals the
/// pairwise average of `miss + hit * misrank` exactly, by enumerating every
/// pair. Returns false only if the two integer counts disagree.
pub fn verify_reformulation(table: &ScoreTable) -> Result<bool> {
    let stats = openauc_pair_stats(table)?;
    let lhs = stats.total_pairs() - stats.concordant_pairs;

    let mut rhs = 0u64;
    let samples = table.samples();
    for close in samples.iter().filter(|s| !s.true_label.is_open()) {
        let correct = match close.true_label {
            Label::Known(c) => close.argmin_class() == c,
            Label::Open => false,
        };
        for open in samples.iter().filter(|s| s.true_label.is_open()) {
            let ranked = open.open_score > close.open_score;
            let not_correct = u64::from(!correct);
            let term = not_correct + u64::from(correct) * u64::from(!ranked);
            rhs += term;
        }
    }
    Ok(lhs == rhs)
}

/// The four combinations of (correct, ranked) indicators evaluated through
/// both sides of the risk reformulation: `1 - i_k * i_u` against
/// `!i_k + i_k * !i_u`.
pub fn reformulation_truth_table() -> [(bool, bool, u8, u8); 4] {
    let mut rows = [(false, false, 0u8, 0u8); 4];
    let combos = [(true, true), (true, false), (false, true), (false, false)];
    for (slot, (i_k, i_u)) in rows.iter_mut().zip(combos) {
        let lhs = 1 - u8::from(i_k) * u8::from(i_u);
        let rhs = u8::from(!i_k) + u8::from(i_k) * u8::from(!i_u);
        *slot = (i_k, i_u, lhs, rhs);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synth, SynthConfig};

    fn tiny_model(seed: u64) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MlpModel::new_random(2, 4, 3, &mut rng)
    }

    fn batch_of(labels: &[usize]) -> Vec<TrainSample> {
        labels
            .iter()
            .enumerate()
            .map(|(i, &label)| TrainSample {
                features: vec![i as f64 * 0.25 - 0.5, (label as f64) * 0.5 - 0.5],
                label,
            })
            .collect()
    }

    #[test]
    fn mixup_midpoint_is_convex_midpoint() {
        // Direct check of the mixing arithmetic.
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        let mixed: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| 0.5 * x + 0.5 * y)
            .collect();
        assert_eq!(mixed, vec![0.5, 0.5]);
    }

    #[test]
    fn mixup_drops_same_label_pairs() {
        let model = tiny_model(0);
        let batch = batch_of(&[0, 0, 1, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = mixup_batch(&batch, &model, 2.0, &mut rng).unwrap();
        for pair in &out.pairs {
            assert_ne!(batch[pair.i].label, batch[pair.j].label);
        }
    }

    #[test]
    fn mixup_on_uniform_batch_is_empty() {
        let model = tiny_model(0);
        let batch = batch_of(&[1, 1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = mixup_batch(&batch, &model, 2.0, &mut rng).unwrap();
        assert!(out.pairs.is_empty());
    }

    #[test]
    fn beta_two_two_sample_mean_is_centered() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let beta = Beta::new(2.0, 2.0).unwrap();
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| beta.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn mixup_output_stays_in_convex_hull() {
        let model = tiny_model(1);
        let batch = batch_of(&[0, 1, 2, 0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = mixup_batch(&batch, &model, 2.0, &mut rng).unwrap();
        for (pair, feat) in out.pairs.iter().zip(&out.features) {
            let (_, a_i) = model.forward_pre(&batch[pair.i].features);
            let (_, a_j) = model.forward_pre(&batch[pair.j].features);
            for ((f, x), y) in feat.iter().zip(&a_i).zip(&a_j) {
                let lo = x.min(*y) - 1e-12;
                let hi = x.max(*y) + 1e-12;
                assert!(*f >= lo && *f <= hi);
            }
        }
    }

    #[test]
    fn all_gates_off_reduces_to_close_term() {
        let model = tiny_model(2);
        let batch = batch_of(&[0, 1, 2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let open = mixup_batch(&batch, &model, 2.0, &mut rng).unwrap();
        let gates = vec![false; batch.len()];
        let out = openauc_risk(&batch, &open, &model, &gates, 0.5, Surrogate::Square).unwrap();
        assert_eq!(out.ranking_loss, 0.0);
        assert_eq!(out.loss, out.close_loss);
    }

    #[test]
    fn surrogate_values_and_gradient() {
        assert_eq!(Surrogate::Square.loss(1.0), 0.0);
        assert_eq!(Surrogate::Square.loss(0.0), 1.0);
        assert_eq!(Surrogate::Square.grad(0.0), -2.0);
    }

    #[test]
    fn surrogate_upper_bounds_the_indicator() {
        // l(t) >= [t <= 0] for t <= 1.
        let mut t = -2.0;
        while t <= 1.0 {
            let indicator = if t <= 0.0 { 1.0 } else { 0.0 };
            assert!(Surrogate::Square.loss(t) >= indicator, "t = {t}");
            t += 1.0 / 64.0;
        }
    }

    #[test]
    fn empty_open_batch_contributes_nothing() {
        let model = tiny_model(2);
        let batch = batch_of(&[0, 1]);
        let empty = MixupBatch {
            pairs: Vec::new(),
            features: Vec::new(),
        };
        let gates = vec![true; 2];
        let out = openauc_risk(&batch, &empty, &model, &gates, 0.5, Surrogate::Square).unwrap();
        assert_eq!(out.ranking_loss, 0.0);
    }

    /// Central finite differences over every parameter of a small model.
    fn finite_difference_check(seed: u64, lambda: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // 10-parameter model: 1 input, 2 hidden, 2 classes.
        let mut model = MlpModel::new_random(1, 2, 2, &mut rng);
        let batch: Vec<TrainSample> = (0..6)
            .map(|i| TrainSample {
                features: vec![(i as f64) / 3.0 - 1.0],
                label: i % 2,
            })
            .collect();
        let open = mixup_batch(&batch, &model, 2.0, &mut rng).unwrap();
        let gates: Vec<bool> = (0..batch.len()).map(|i| i % 3 != 0).collect();

        let loss_at = |m: &MlpModel| -> f64 {
            openauc_risk(&batch, &open, m, &gates, lambda, Surrogate::Square)
                .unwrap()
                .loss
        };
        let analytic = openauc_risk(&batch, &open, &model, &gates, lambda, Surrogate::Square)
            .unwrap()
            .grads
            .flatten();

        let params = model.params();
        let h = 1e-5;
        let mut numeric = vec![0.0; params.len()];
        for k in 0..params.len() {
            let mut plus = params.clone();
            plus[k] += h;
            let mut minus = params.clone();
            minus[k] -= h;
            model.set_params(&plus);
            let up = loss_at(&model);
            model.set_params(&minus);
            let down = loss_at(&model);
            numeric[k] = (up - down) / (2.0 * h);
        }
        model.set_params(&params);

        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
        diff / norm.max(1e-12)
    }

    #[test]
    fn gradients_match_finite_differences_on_ten_parameter_model() {
        let rel = finite_difference_check(4, 0.4);
        assert!(rel <= 1e-4, "relative error {rel}");
    }

    fn small_config(seed: u64, lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            epochs: 4,
            batch_size: 16,
            hidden_dim: 8,
            seed,
            ..TrainConfig::default()
        }
    }

    fn small_data() -> SynthData {
        generate_synth(&SynthConfig {
            num_known_classes: 3,
            num_open_classes: 1,
            samples_per_class: 30,
            input_dim: 2,
            class_center_spread: 3.0,
            noise_sigma: 0.6,
            seed: 5,
        })
        .unwrap()
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let data = small_data();
        let a = train(&data.train, &small_config(11, 0.3)).unwrap();
        let b = train(&data.train, &small_config(11, 0.3)).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.model, b.model);
    }

    #[test]
    fn lambda_zero_matches_pure_close_set_baseline() {
        let data = small_data();
        let plain = train(&data.train, &small_config(3, 0.0)).unwrap();
        let ungated_zero = train(
            &data.train,
            &TrainConfig {
                gated: false,
                ..small_config(3, 0.0)
            },
        )
        .unwrap();
        // With no ranking term the gate has no effect at all.
        assert_eq!(plain.model, ungated_zero.model);
        assert!(plain.loss_history.iter().all(|l| l.ranking == 0.0));
    }

    #[test]
    fn gate_trace_has_one_hash_per_epoch() {
        let data = small_data();
        let state = train(&data.train, &small_config(7, 0.3)).unwrap();
        assert_eq!(state.gate_hashes.len(), 4);
        assert_eq!(state.frozen_gates.len(), data.train.len());
    }

    #[test]
    fn ablation_reports_both_variants() {
        let data = small_data();
        let ablation = ablate_gate(&data, &small_config(13, 0.3)).unwrap();
        assert!(ablation.gated_openauc > 0.0);
        assert!(ablation.ungated_openauc > 0.0);
    }

    #[test]
    fn reformulation_truth_table_rows() {
        let rows = reformulation_truth_table();
        assert_eq!(
            rows,
            [
                (true, true, 0, 0),
                (true, false, 1, 1),
                (false, true, 1, 1),
                (false, false, 1, 1),
            ]
        );
    }

    #[test]
    fn reformulation_holds_on_model_scores() {
        let data = small_data();
        let state = train(&data.train, &small_config(2, 0.2)).unwrap();
        let table = score_table_from_model(&state.model, &data.test).unwrap();
        assert!(verify_reformulation(&table).unwrap());
    }

    #[test]
    fn perfect_table_has_zero_risk_on_both_sides() {
        let samples = vec![
            ScoredSample::new("k", Label::Known(0), vec![0.1, 0.9], 0.1),
            ScoredSample::new("u", Label::Open, vec![0.9, 0.8], 0.8),
        ];
        let table = ScoreTable::new(ScoreConvention::OpenHigh, 2, samples).unwrap();
        let stats = openauc_pair_stats(&table).unwrap();
        assert_eq!(stats.total_pairs() - stats.concordant_pairs, 0);
        assert!(verify_reformulation(&table).unwrap());
    }
}

//! Adversarial objectives and the per-pair training bout.

use rand_distr::{Distribution, StandardNormal};

use crate::backend::{AdamConfig, Scalar};
use crate::coevolution::Individual;
use crate::error::{Error, Result};
use crate::experiment::data::SampleSource;
use crate::rng::StreamRng;

/// Probabilities are clamped to `[PROB_CLAMP, 1]` before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

fn clamped_log(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0).ln()
}

fn mean<T: Scalar>(values: &[T], f: impl Fn(f64) -> f64) -> f64 {
    values.iter().map(|&v| f(v.as_f64())).sum::<f64>() / values.len() as f64
}

/// Discriminator loss: `-mean(log D(x)) - mean(log(1 - D(G(z))))`.
pub fn d_loss<T: Scalar>(d_real: &[T], d_fake: &[T]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Empty("discriminator outputs"));
    }
    Ok(-mean(d_real, clamped_log) - mean(d_fake, |p| clamped_log(1.0 - p)))
}

/// Non-saturating generator loss: `-mean(log D(G(z)))`.
pub fn g_loss<T: Scalar>(d_fake: &[T]) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(Error::Empty("discriminator outputs"));
    }
    Ok(-mean(d_fake, clamped_log))
}

/// d/dp of `-mean(log clamp(p))`; zero inside the clamped region.
fn neg_log_grad<T: Scalar>(p: T, n: usize) -> T {
    let p = p.as_f64();
    if p < PROB_CLAMP {
        T::zero()
    } else {
        T::from_f64_lossy(-1.0 / (n as f64 * p))
    }
}

/// Gradients of [`d_loss`] with respect to each real and each fake probability.
pub fn d_loss_grad<T: Scalar>(d_real: &[T], d_fake: &[T]) -> (Vec<T>, Vec<T>) {
    let real = d_real.iter().map(|&p| neg_log_grad(p, d_real.len())).collect();
    let fake = d_fake
        .iter()
        .map(|&p| -neg_log_grad(T::one() - p, d_fake.len()))
        .collect();
    (real, fake)
}

/// Gradient of [`g_loss`] with respect to each fake probability.
pub fn g_loss_grad<T: Scalar>(d_fake: &[T]) -> Vec<T> {
    d_fake
        .iter()
        .map(|&p| neg_log_grad(p, d_fake.len()))
        .collect()
}

/// Standard-normal noise vectors for generator input.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    pub dimension: usize,
    pub rng: StreamRng,
}

impl NoiseSource {
    pub fn new(dimension: usize, rng: StreamRng) -> Self {
        assert!(dimension >= 1, "noise dimension must be positive");
        NoiseSource { dimension, rng }
    }

    pub fn sample(&mut self, n: usize) -> Vec<f32> {
        (0..n * self.dimension)
            .map(|_| StandardNormal.sample(&mut self.rng))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingBudget {
    pub batches_per_pair: usize,
    pub batch_size: usize,
}

impl Default for TrainingBudget {
    fn default() -> Self {
        TrainingBudget {
            batches_per_pair: 20,
            batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairingOutcome {
    pub generator: u64,
    pub discriminator: u64,
    /// Mean discriminator loss over the bout, measured before each update.
    pub d_loss: f64,
    /// Mean generator loss over the bout, measured before each update.
    pub g_loss: f64,
    pub batches: usize,
}

/// Trains one discriminator/generator pair for `budget.batches_per_pair` batches.
///
/// Each batch performs one discriminator Adam step on a fresh real batch and a
/// fresh fake batch, then one generator Adam step through another fresh fake batch.
pub fn train_pair(
    d: &mut Individual,
    g: &mut Individual,
    data: &mut dyn SampleSource,
    noise: &mut NoiseSource,
    budget: &TrainingBudget,
    adam: &AdamConfig,
) -> Result<PairingOutcome> {
    let n = budget.batch_size;
    if n == 0 || budget.batches_per_pair == 0 {
        return Err(Error::Empty("training budget"));
    }
    let sample_len = d.network.input_len();
    let mut d_total = 0.0;
    let mut g_total = 0.0;
    for _ in 0..budget.batches_per_pair {
        let real = data.next_batch(n)?;
        let fake = g.network.infer(&noise.sample(n), n)?;
        let mut joint = real;
        joint.extend_from_slice(&fake);
        debug_assert_eq!(joint.len(), 2 * n * sample_len);
        let probs = d.network.forward(&joint, 2 * n)?;
        let (p_real, p_fake) = probs.split_at(n);
        d_total += d_loss(p_real, p_fake)?;
        let (mut upstream, fake_grad) = d_loss_grad(p_real, p_fake);
        upstream.extend(fake_grad);
        let grads = d.network.backward(&upstream)?;
        d.network.apply_gradients(&grads, adam)?;

        let fake = g.network.forward(&noise.sample(n), n)?;
        let probs = d.network.forward(&fake, n)?;
        g_total += g_loss(&probs)?;
        let through_d = d.network.input_gradient(&g_loss_grad(&probs))?;
        let grads = g.network.backward(&through_d)?;
        g.network.apply_gradients(&grads, adam)?;

        d.batches_trained += 1;
        g.batches_trained += 1;
    }
    let batches = budget.batches_per_pair;
    Ok(PairingOutcome {
        generator: g.id,
        discriminator: d.id,
        d_loss: d_total / batches as f64,
        g_loss: g_total / batches as f64,
        batches,
    })
}

//! Trainable parameters keyed by layer identity, with Adam state.

use std::collections::BTreeMap;

use rand::Rng;

use super::Scalar;
use crate::error::{Error, Result};
use crate::genome::{LayerOp, LayerPlan, LayerSource, Shape};

pub type ParamKey = LayerSource;

/// What a layer's parameters were shaped for. Parameters only transfer between
/// layers with equal signatures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShapeSignature {
    pub op: LayerOp,
    pub input: Shape,
    pub output: Shape,
}

impl ShapeSignature {
    pub fn of(layer: &LayerPlan) -> Self {
        ShapeSignature {
            op: layer.op,
            input: layer.input,
            output: layer.op_output(),
        }
    }

    /// Rebuilds the plan fragment that determines tensor shapes.
    fn plan(&self) -> LayerPlan {
        LayerPlan {
            source: LayerSource::OutputAdapter,
            op: self.op,
            input: self.input,
            output: self.output,
            activation: None,
            crop_from: None,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.plan().weight_dims().iter().product()
    }

    pub fn bias_len(&self) -> usize {
        self.plan().bias_len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m_weights: Vec<T>,
    pub v_weights: Vec<T>,
    pub m_bias: Vec<T>,
    pub v_bias: Vec<T>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    fn zeros(weights: usize, bias: usize) -> Self {
        AdamState {
            m_weights: vec![T::zero(); weights],
            v_weights: vec![T::zero(); weights],
            m_bias: vec![T::zero(); bias],
            v_bias: vec![T::zero(); bias],
            step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub signature: ShapeSignature,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub adam: AdamState<T>,
}

impl<T: Scalar> ParamEntry<T> {
    /// Weights uniform in `(-a, a)` with `a = sqrt(1 / fan_in)`, zero bias, zero Adam state.
    pub fn fresh<R: Rng + ?Sized>(layer: &LayerPlan, rng: &mut R) -> Self {
        let signature = ShapeSignature::of(layer);
        let bound = (1.0 / layer.fan_in().max(1) as f64).sqrt();
        let weights = (0..signature.weight_len())
            .map(|_| T::from_f64_lossy(rng.random_range(-bound..bound)))
            .collect();
        let bias_len = signature.bias_len();
        ParamEntry {
            signature,
            weights,
            bias: vec![T::zero(); bias_len],
            adam: AdamState::zeros(signature.weight_len(), bias_len),
        }
    }

    /// Checks that tensor lengths agree with the signature.
    pub fn check(&self) -> Result<()> {
        let (w, b) = (self.signature.weight_len(), self.signature.bias_len());
        let adam = &self.adam;
        let ok = self.weights.len() == w
            && adam.m_weights.len() == w
            && adam.v_weights.len() == w
            && self.bias.len() == b
            && adam.m_bias.len() == b
            && adam.v_bias.len() == b;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "parameter tensors do not match signature {:?}",
                self.signature
            )))
        }
    }

    pub fn zero_grads(&self) -> LayerGrads<T> {
        LayerGrads {
            weights: vec![T::zero(); self.weights.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grads: &LayerGrads<T>, config: &AdamConfig) -> Result<()> {
        if grads.weights.len() != self.weights.len() || grads.bias.len() != self.bias.len() {
            return Err(Error::Shape(format!(
                "gradient {}+{} vs parameters {}+{}",
                grads.weights.len(),
                grads.bias.len(),
                self.weights.len(),
                self.bias.len()
            )));
        }
        let state = &mut self.adam;
        state.step += 1;
        let t = state.step as i32;
        let beta1 = T::from_f64_lossy(config.beta1);
        let beta2 = T::from_f64_lossy(config.beta2);
        let one = T::one();
        let correction1 = T::from_f64_lossy(1.0 - config.beta1.powi(t));
        let correction2 = T::from_f64_lossy(1.0 - config.beta2.powi(t));
        let lr = T::from_f64_lossy(config.learning_rate);
        let eps = T::from_f64_lossy(config.epsilon);
        let update = |params: &mut [T], m: &mut [T], v: &mut [T], g: &[T]| {
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (one - beta1) * g[i];
                v[i] = beta2 * v[i] + (one - beta2) * g[i] * g[i];
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        };
        update(
            &mut self.weights,
            &mut state.m_weights,
            &mut state.v_weights,
            &grads.weights,
        );
        update(
            &mut self.bias,
            &mut state.m_bias,
            &mut state.v_bias,
            &grads.bias,
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: BTreeMap<ParamKey, ParamEntry<T>>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            entries: BTreeMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &ParamKey) -> Option<&ParamEntry<T>> {
        self.entries.get(key)
    }

    pub fn get_mut(&mut self, key: &ParamKey) -> Option<&mut ParamEntry<T>> {
        self.entries.get_mut(key)
    }

    /// The entry for `key` if its signature matches.
    pub fn compatible(&self, key: &ParamKey, signature: &ShapeSignature) -> Option<&ParamEntry<T>> {
        self.entries
            .get(key)
            .filter(|entry| entry.signature == *signature)
    }

    pub fn insert(&mut self, key: ParamKey, entry: ParamEntry<T>) -> Result<()> {
        entry.check()?;
        self.entries.insert(key, entry);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParamKey, &ParamEntry<T>)> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.entries
            .values()
            .map(|e| e.weights.len() + e.bias.len())
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_entry(value: f64) -> ParamEntry<f64> {
        let layer = LayerPlan {
            source: LayerSource::OutputAdapter,
            op: LayerOp::Linear,
            input: Shape::Flat(1),
            output: Shape::Flat(1),
            activation: None,
            crop_from: None,
        };
        let mut entry = ParamEntry::fresh(&layer, &mut crate::rng::rng_from_seed(0));
        entry.weights[0] = value;
        entry
    }

    fn grads(g: f64) -> LayerGrads<f64> {
        LayerGrads {
            weights: vec![g],
            bias: vec![0.0],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut entry = scalar_entry(0.25);
        entry.adam_step(&grads(0.0), &AdamConfig::default()).unwrap();
        assert_eq!(entry.weights[0], 0.25);
        assert_eq!(entry.adam.step, 1);
    }

    #[test]
    fn first_step_magnitude() {
        let mut entry = scalar_entry(0.0);
        entry.adam_step(&grads(1.0), &AdamConfig::default()).unwrap();
        // m̂ = 1, v̂ = 1, so Δ = -lr / (1 + eps)
        let expected = -0.001 / (1.0 + 1e-8);
        assert!((entry.weights[0] - expected).abs() < 1e-15);
        assert!((entry.weights[0] + 0.000999999990).abs() < 1e-12);
    }

    #[test]
    fn repeated_gradient_steps_do_not_grow() {
        let mut entry = scalar_entry(0.0);
        let config = AdamConfig::default();
        let mut last = f64::INFINITY;
        let mut previous = entry.weights[0];
        for _ in 0..5 {
            entry.adam_step(&grads(0.7), &config).unwrap();
            let delta = (entry.weights[0] - previous).abs();
            assert!(delta <= last * (1.0 + 1e-12));
            last = delta;
            previous = entry.weights[0];
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut entry = scalar_entry(0.0);
        let bad = LayerGrads {
            weights: vec![1.0, 2.0],
            bias: vec![0.0],
        };
        assert!(entry.adam_step(&bad, &AdamConfig::default()).is_err());
    }
}

use std::collections::BTreeMap;

use rand::Rng;

use super::activation;
use super::conv::{conv_backward, conv_forward, deconv_backward, deconv_forward, ConvGeometry};
use super::params::{AdamConfig, LayerGrads, ParamEntry, ParamKey, ParamStore, ShapeSignature};
use super::scalar::{gemm, Mat};
use super::Scalar;
use crate::error::{Error, Result};
use crate::genome::{Genome, LayerOp, LayerPlan, LayerSource, Role, Shape, ShapePlan};

/// Which layers inherited parameters from the parent store and which were initialized fresh.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferReport {
    pub copied: Vec<ParamKey>,
    pub fresh: Vec<ParamKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: BTreeMap<ParamKey, LayerGrads<T>>,
    pub input: Vec<T>,
}

#[derive(Debug, Clone)]
struct ForwardCache<T> {
    batch: usize,
    /// `activations[i]` is the input of layer `i`; the last entry is the network output.
    activations: Vec<Vec<T>>,
}

/// A concrete network: shape plan plus the parameters it owns.
#[derive(Debug, Clone)]
pub struct Network<T: Scalar = f32> {
    plan: ShapePlan,
    params: ParamStore<T>,
    cache: Option<ForwardCache<T>>,
}

/// Builds the phenotype for `genome`, copying parameters (and their Adam state)
/// from `parent` for every layer whose key and shape signature match, and
/// initializing the rest.
pub fn build_network<T: Scalar, R: Rng + ?Sized>(
    genome: &Genome,
    plan: ShapePlan,
    parent: &ParamStore<T>,
    rng: &mut R,
) -> Result<(Network<T>, TransferReport)> {
    check_plan_matches(genome, &plan)?;
    plan.check_chain()?;
    let mut params = ParamStore::new();
    let mut report = TransferReport::default();
    for layer in &plan.layers {
        let signature = ShapeSignature::of(layer);
        let entry = match parent.compatible(&layer.source, &signature) {
            Some(entry) => {
                report.copied.push(layer.source);
                entry.clone()
            }
            None => {
                report.fresh.push(layer.source);
                ParamEntry::fresh(layer, rng)
            }
        };
        params.insert(layer.source, entry)?;
    }
    Ok((
        Network {
            plan,
            params,
            cache: None,
        },
        report,
    ))
}

fn check_plan_matches(genome: &Genome, plan: &ShapePlan) -> Result<()> {
    if genome.role != plan.role {
        return Err(Error::Construction(format!(
            "plan is for a {} but genome is a {}",
            plan.role.name(),
            genome.role.name()
        )));
    }
    let plan_ids: Vec<_> = plan
        .gene_layers()
        .map(|l| match l.source {
            LayerSource::Gene(id) => id,
            _ => unreachable!(),
        })
        .collect();
    let genome_ids: Vec<_> = genome.genes.iter().map(|g| g.innovation_id).collect();
    if plan_ids != genome_ids {
        return Err(Error::Construction(format!(
            "plan genes {plan_ids:?} do not match genome genes {genome_ids:?}"
        )));
    }
    for (gene, layer) in genome.genes.iter().zip(plan.gene_layers()) {
        if layer.activation != Some(gene.activation) {
            return Err(Error::Construction(format!(
                "activation of gene {} differs from plan",
                gene.innovation_id
            )));
        }
    }
    Ok(())
}

fn crop<T: Scalar>(full: Shape, target: Shape, src: &[T], dst: &mut [T]) {
    let (c, fh, fw) = full.dims().expect("spatial crop");
    let (_, th, tw) = target.dims().expect("spatial crop");
    for ch in 0..c {
        for y in 0..th {
            let from = (ch * fh + y) * fw;
            let to = (ch * th + y) * tw;
            dst[to..to + tw].copy_from_slice(&src[from..from + tw]);
        }
    }
}

fn uncrop<T: Scalar>(full: Shape, target: Shape, src: &[T], dst: &mut [T]) {
    dst.iter_mut().for_each(|v| *v = T::zero());
    let (c, fh, fw) = full.dims().expect("spatial crop");
    let (_, th, tw) = target.dims().expect("spatial crop");
    for ch in 0..c {
        for y in 0..th {
            let from = (ch * th + y) * tw;
            let to = (ch * fh + y) * fw;
            dst[to..to + tw].copy_from_slice(&src[from..from + tw]);
        }
    }
}

fn conv_geometry(layer: &LayerPlan) -> (ConvGeometry, usize) {
    match layer.op {
        LayerOp::Conv {
            kernel,
            stride,
            padding,
        } => {
            let (c, h, w) = layer.input.dims().expect("spatial");
            let (oc, _, _) = layer.op_output().dims().expect("spatial");
            (ConvGeometry::new(c, h, w, kernel, stride, padding), oc)
        }
        LayerOp::TransposeConv {
            kernel,
            stride,
            padding,
        } => {
            let (ic, _, _) = layer.input.dims().expect("spatial");
            let (oc, h, w) = layer.op_output().dims().expect("spatial");
            (ConvGeometry::new(oc, h, w, kernel, stride, padding), ic)
        }
        LayerOp::Linear => unreachable!("linear layers have no geometry"),
    }
}

fn layer_forward<T: Scalar>(
    layer: &LayerPlan,
    entry: &ParamEntry<T>,
    input: &[T],
    batch: usize,
) -> Vec<T> {
    let in_len = layer.input.numel();
    let full = layer.op_output();
    let out_len = full.numel();
    let mut out = vec![T::zero(); batch * out_len];
    match layer.op {
        LayerOp::Linear => {
            for row in out.chunks_mut(out_len) {
                row.copy_from_slice(&entry.bias);
            }
            gemm(
                Mat::row_major(input, batch, in_len),
                Mat::row_major(&entry.weights, out_len, in_len).t(),
                T::one(),
                &mut out,
            );
        }
        LayerOp::Conv { .. } => {
            let (geom, out_c) = conv_geometry(layer);
            let mut cols = Vec::new();
            for (x, y) in input.chunks(in_len).zip(out.chunks_mut(out_len)) {
                conv_forward(&geom, out_c, &entry.weights, &entry.bias, x, y, &mut cols);
            }
        }
        LayerOp::TransposeConv { .. } => {
            let (geom, in_c) = conv_geometry(layer);
            let mut cols = Vec::new();
            for (x, y) in input.chunks(in_len).zip(out.chunks_mut(out_len)) {
                deconv_forward(&geom, in_c, &entry.weights, &entry.bias, x, y, &mut cols);
            }
        }
    }
    if let Some(from) = layer.crop_from {
        let target_len = layer.output.numel();
        let mut cropped = vec![T::zero(); batch * target_len];
        for (src, dst) in out.chunks(out_len).zip(cropped.chunks_mut(target_len)) {
            crop(from, layer.output, src, dst);
        }
        out = cropped;
    }
    activation::apply(layer.activation, &mut out);
    out
}

/// Returns the gradient with respect to the layer input. `grad_out` is the
/// gradient with respect to the layer output and is consumed.
fn layer_backward<T: Scalar>(
    layer: &LayerPlan,
    entry: &ParamEntry<T>,
    input: &[T],
    output: &[T],
    mut grad_out: Vec<T>,
    batch: usize,
    param_grads: Option<&mut LayerGrads<T>>,
) -> Vec<T> {
    activation::backprop(layer.activation, output, &mut grad_out);
    let full = layer.op_output();
    let out_len = full.numel();
    if let Some(from) = layer.crop_from {
        let target_len = layer.output.numel();
        let mut padded = vec![T::zero(); batch * out_len];
        for (src, dst) in grad_out.chunks(target_len).zip(padded.chunks_mut(out_len)) {
            uncrop(from, layer.output, src, dst);
        }
        grad_out = padded;
    }
    let in_len = layer.input.numel();
    let mut grad_in = vec![T::zero(); batch * in_len];
    match layer.op {
        LayerOp::Linear => {
            let dy = Mat::row_major(&grad_out, batch, out_len);
            gemm(
                dy,
                Mat::row_major(&entry.weights, out_len, in_len),
                T::zero(),
                &mut grad_in,
            );
            if let Some(grads) = param_grads {
                gemm(
                    dy.t(),
                    Mat::row_major(input, batch, in_len),
                    T::one(),
                    &mut grads.weights,
                );
                for row in grad_out.chunks(out_len) {
                    for (gb, &g) in grads.bias.iter_mut().zip(row) {
                        *gb += g;
                    }
                }
            }
        }
        LayerOp::Conv { .. } | LayerOp::TransposeConv { .. } => {
            let (geom, channels) = conv_geometry(layer);
            let backward = if matches!(layer.op, LayerOp::Conv { .. }) {
                conv_backward::<T>
            } else {
                deconv_backward::<T>
            };
            let mut cols = Vec::new();
            let mut param_grads = param_grads;
            for ((x, dy), dx) in input
                .chunks(in_len)
                .zip(grad_out.chunks(out_len))
                .zip(grad_in.chunks_mut(in_len))
            {
                let params = param_grads
                    .as_deref_mut()
                    .map(|g| (g.weights.as_mut_slice(), g.bias.as_mut_slice()));
                backward(&geom, channels, &entry.weights, x, dy, params, dx, &mut cols);
            }
        }
    }
    grad_in
}

impl<T: Scalar> Network<T> {
    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn role(&self) -> Role {
        self.plan.role
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn input_len(&self) -> usize {
        self.plan.input.numel()
    }

    pub fn output_len(&self) -> usize {
        self.plan.output.numel()
    }

    fn check_input(&self, batch: &[T], n: usize) -> Result<()> {
        let expected = n * self.input_len();
        if n == 0 || batch.len() != expected {
            return Err(Error::Shape(format!(
                "batch of {n} samples needs {expected} values, got {}",
                batch.len()
            )));
        }
        Ok(())
    }

    fn run(&self, batch: &[T], n: usize, keep: bool) -> Result<(Vec<T>, Vec<Vec<T>>)> {
        self.check_input(batch, n)?;
        let mut kept = Vec::new();
        let mut current = batch.to_vec();
        for layer in &self.plan.layers {
            let entry = self
                .params
                .get(&layer.source)
                .ok_or_else(|| Error::Construction(format!("no parameters for {:?}", layer.source)))?;
            let next = layer_forward(layer, entry, &current, n);
            if keep {
                kept.push(std::mem::replace(&mut current, next));
            } else {
                current = next;
            }
        }
        Ok((current, kept))
    }

    /// Forward pass of `n` samples, caching intermediates for [`backward`](Self::backward).
    pub fn forward(&mut self, batch: &[T], n: usize) -> Result<Vec<T>> {
        let (output, mut activations) = self.run(batch, n, true)?;
        activations.push(output.clone());
        self.cache = Some(ForwardCache {
            batch: n,
            activations,
        });
        Ok(output)
    }

    /// Forward pass without caching.
    pub fn infer(&self, batch: &[T], n: usize) -> Result<Vec<T>> {
        self.run(batch, n, false).map(|(out, _)| out)
    }

    fn backprop(&mut self, upstream: &[T], with_params: bool) -> Result<Gradients<T>> {
        let cache = self.cache.take().ok_or(Error::NoForwardCache)?;
        let n = cache.batch;
        if upstream.len() != n * self.output_len() {
            let len = upstream.len();
            self.cache = Some(cache);
            return Err(Error::Shape(format!(
                "upstream gradient has {len} values, output has {}",
                n * self.output_len()
            )));
        }
        let mut layers = BTreeMap::new();
        let mut grad = upstream.to_vec();
        for (i, layer) in self.plan.layers.iter().enumerate().rev() {
            let entry = self.params.get(&layer.source).expect("checked in forward");
            let mut grads = with_params.then(|| entry.zero_grads());
            grad = layer_backward(
                layer,
                entry,
                &cache.activations[i],
                &cache.activations[i + 1],
                grad,
                n,
                grads.as_mut(),
            );
            if let Some(g) = grads {
                layers.insert(layer.source, g);
            }
        }
        Ok(Gradients {
            layers,
            input: grad,
        })
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to every parameter and the input.
    /// Consumes the cached forward pass.
    pub fn backward(&mut self, upstream: &[T]) -> Result<Gradients<T>> {
        self.backprop(upstream, true)
    }

    /// Like [`backward`](Self::backward) but only computes the input gradient.
    pub fn input_gradient(&mut self, upstream: &[T]) -> Result<Vec<T>> {
        self.backprop(upstream, false).map(|g| g.input)
    }

    /// Applies one Adam step per layer.
    pub fn apply_gradients(&mut self, grads: &Gradients<T>, config: &AdamConfig) -> Result<()> {
        for (key, g) in &grads.layers {
            let entry = self
                .params
                .get_mut(key)
                .ok_or_else(|| Error::Shape(format!("no parameters for {key:?}")))?;
            entry.adam_step(g, config)?;
        }
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{infer_shapes, ActivationKind, Gene, GeneKind};
    use crate::rng::rng_from_seed;

    fn linear_genome(role: Role, width: u32, act: ActivationKind) -> Genome {
        Genome {
            role,
            genes: vec![Gene {
                innovation_id: 1,
                kind: GeneKind::Linear { out_features: width },
                activation: act,
            }],
            max_len: 6,
        }
    }

    #[test]
    fn identity_linear_relu_passes_positive_input() {
        let genome = linear_genome(Role::Discriminator, 3, ActivationKind::ReLU);
        let plan = infer_shapes(&genome, Shape::spatial(1, 1, 3), 4).unwrap();
        let (mut net, _) =
            build_network::<f64, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(1))
                .unwrap();
        let entry = net.params_mut().get_mut(&LayerSource::Gene(1)).unwrap();
        entry.weights = vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        entry.bias = vec![0.0; 3];
        let layer = net.plan().layers[0].clone();
        let entry = net.params().get(&LayerSource::Gene(1)).unwrap();
        let x = [0.5, 1.5, 2.5];
        assert_eq!(layer_forward(&layer, entry, &x, 1), x.to_vec());
    }

    #[test]
    fn zero_conv_gives_zero_preactivation() {
        let genome = Genome {
            role: Role::Discriminator,
            genes: vec![Gene {
                innovation_id: 1,
                kind: GeneKind::Conv { out_channels: 4 },
                activation: ActivationKind::Tanh,
            }],
            max_len: 6,
        };
        let plan = infer_shapes(&genome, Shape::spatial(1, 8, 8), 4).unwrap();
        let (mut net, _) =
            build_network::<f64, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(1))
                .unwrap();
        let entry = net.params_mut().get_mut(&LayerSource::Gene(1)).unwrap();
        entry.weights.iter_mut().for_each(|w| *w = 0.0);
        let layer = net.plan().layers[0].clone();
        let entry = net.params().get(&LayerSource::Gene(1)).unwrap();
        let x: Vec<f64> = (0..64).map(|i| i as f64).collect();
        assert!(layer_forward(&layer, entry, &x, 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn discriminator_outputs_open_unit_interval() {
        let genome = linear_genome(Role::Discriminator, 16, ActivationKind::ELU);
        let plan = infer_shapes(&genome, Shape::spatial(1, 1, 2), 4).unwrap();
        let (net, _) =
            build_network::<f32, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(4))
                .unwrap();
        let out = net.infer(&[0.3, -0.7, 5.0, 1.0], 2).unwrap();
        assert!(out.iter().all(|&p| p > 0.0 && p < 1.0));
    }

    #[test]
    fn backward_without_forward_errors() {
        let genome = linear_genome(Role::Generator, 8, ActivationKind::ReLU);
        let plan = infer_shapes(&genome, Shape::spatial(1, 1, 2), 4).unwrap();
        let (mut net, _) =
            build_network::<f32, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(4))
                .unwrap();
        assert!(matches!(net.backward(&[0.0, 0.0]), Err(Error::NoForwardCache)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let genome = linear_genome(Role::Generator, 8, ActivationKind::Sigmoid);
        let plan = infer_shapes(&genome, Shape::spatial(1, 1, 2), 4).unwrap();
        let (mut net, _) =
            build_network::<f64, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(4))
                .unwrap();
        net.forward(&[0.1, 0.2, 0.3, 0.4], 1).unwrap();
        let grads = net.backward(&[0.0, 0.0]).unwrap();
        for g in grads.layers.values() {
            assert!(g.weights.iter().chain(&g.bias).all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_bias_gradient_equals_upstream() {
        // single linear gene followed by the sigmoid adapter; bias gradient of
        // the adapter equals the upstream gradient times σ'(z)
        let genome = linear_genome(Role::Discriminator, 2, ActivationKind::Tanh);
        let plan = infer_shapes(&genome, Shape::spatial(1, 1, 2), 4).unwrap();
        let (mut net, _) =
            build_network::<f64, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(9))
                .unwrap();
        let out = net.forward(&[0.4, -0.3], 1).unwrap();
        let grads = net.backward(&[1.7]).unwrap();
        let p = out[0];
        let adapter_bias = grads.layers[&LayerSource::OutputAdapter].bias[0];
        assert!((adapter_bias - 1.7 * p * (1.0 - p)).abs() < 1e-14);
    }

    #[test]
    fn mismatched_plan_rejected() {
        let genome = linear_genome(Role::Generator, 8, ActivationKind::ReLU);
        let other = linear_genome(Role::Discriminator, 8, ActivationKind::ReLU);
        let plan = infer_shapes(&other, Shape::spatial(1, 1, 2), 4).unwrap();
        assert!(matches!(
            build_network::<f32, _>(&genome, plan, &ParamStore::new(), &mut rng_from_seed(0)),
            Err(Error::Construction(_))
        ));
    }
}

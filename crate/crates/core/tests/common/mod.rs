#![allow(dead_code)]

use coegan_core::backend::{build_network, Network, ParamStore};
use coegan_core::genome::{infer_shapes, ActivationKind, Gene, GeneKind, Genome, Role, Shape};
use coegan_core::rng::{rng_from_seed, StreamRng};
use rand::Rng;

pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely rather than relatively.
pub const GRAD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

pub fn genome(role: Role, genes: &[(GeneKind, ActivationKind)]) -> Genome {
    Genome {
        role,
        genes: genes
            .iter()
            .enumerate()
            .map(|(i, &(kind, activation))| Gene {
                innovation_id: i as u64 + 1,
                kind,
                activation,
            })
            .collect(),
        max_len: 6,
    }
}

pub fn random_vec(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn network(genome: &Genome, data: Shape, noise_dim: usize, rng: &mut StreamRng) -> Network<f64> {
    let plan = infer_shapes(genome, data, noise_dim).unwrap();
    build_network(genome, plan, &ParamStore::new(), rng).unwrap().0
}

fn weighted_sum(net: &Network<f64>, input: &[f64], n: usize, upstream: &[f64]) -> f64 {
    net.infer(input, n)
        .unwrap()
        .iter()
        .zip(upstream)
        .map(|(y, u)| y * u)
        .sum()
}

/// Tolerance for the non-smoothness tests in [`GradientCheck::compare`].
pub const KINK_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, Default)]
pub struct GradientCheck {
    /// Largest relative error over all compared coordinates.
    pub worst: f64,
    pub checked: usize,
    /// Coordinates left out because a finite difference crossed a kink.
    pub skipped: usize,
}

impl GradientCheck {
    /// `eval(delta)` is the objective with one coordinate shifted by `delta`.
    /// Smooth coordinates give matching one-sided slopes and matching central
    /// differences at steps `h` and `h / 10`; a ReLU-style kink near the point
    /// breaks one or the other.
    fn compare(&mut self, analytic: f64, base: f64, mut eval: impl FnMut(f64) -> f64) {
        let small = STEP / 10.0;
        let (plus, minus) = (eval(STEP), eval(-STEP));
        let (plus_s, minus_s) = (eval(small), eval(-small));
        let central = (plus - minus) / (2.0 * STEP);
        let central_s = (plus_s - minus_s) / (2.0 * small);
        let forward = (plus_s - base) / small;
        let backward = (base - minus_s) / small;
        let differ = |a: f64, b: f64| (a - b).abs() > KINK_TOLERANCE * a.abs().max(b.abs()) + 1e-8;
        if differ(central, central_s) || (forward - backward).abs() > 1e-3 * forward.abs().max(backward.abs()).max(1.0) {
            self.skipped += 1;
            return;
        }
        self.checked += 1;
        self.worst = self.worst.max(relative_error(analytic, central));
    }

    pub fn merge(&mut self, other: GradientCheck) {
        self.worst = self.worst.max(other.worst);
        self.checked += other.checked;
        self.skipped += other.skipped;
    }
}

/// Compares backprop against central differences of `sum(upstream * output)`
/// over every parameter and every input element.
pub fn max_gradient_error(net: &mut Network<f64>, n: usize, rng: &mut StreamRng) -> GradientCheck {
    let input = random_vec(rng, n * net.input_len());
    let upstream = random_vec(rng, n * net.output_len());
    net.forward(&input, n).unwrap();
    let grads = net.backward(&upstream).unwrap();
    let base = weighted_sum(net, &input, n, &upstream);
    let mut check = GradientCheck::default();

    let keys: Vec<_> = net.params().iter().map(|(k, _)| *k).collect();
    for key in keys {
        let analytic = &grads.layers[&key];
        for (which, len) in [
            (0, net.params().get(&key).unwrap().weights.len()),
            (1, net.params().get(&key).unwrap().bias.len()),
        ] {
            for i in 0..len {
                let a = if which == 0 { analytic.weights[i] } else { analytic.bias[i] };
                check.compare(a, base, |delta| {
                    let entry = net.params_mut().get_mut(&key).unwrap();
                    let slot = if which == 0 { &mut entry.weights[i] } else { &mut entry.bias[i] };
                    let saved = *slot;
                    *slot = saved + delta;
                    let value = weighted_sum(net, &input, n, &upstream);
                    let entry = net.params_mut().get_mut(&key).unwrap();
                    let slot = if which == 0 { &mut entry.weights[i] } else { &mut entry.bias[i] };
                    *slot = saved;
                    value
                });
            }
        }
    }
    for i in 0..input.len() {
        check.compare(grads.input[i], base, |delta| {
            let mut shifted = input.clone();
            shifted[i] += delta;
            weighted_sum(net, &shifted, n, &upstream)
        });
    }
    check
}

/// A small random network whose single gene has the given kind and activation.
pub fn single_gene_network(kind: &str, activation: ActivationKind, rng: &mut StreamRng) -> Network<f64> {
    let channels = rng.random_range(1..=3);
    let side = rng.random_range(3..=9);
    let data = Shape::spatial(rng.random_range(1..=2), side, side);
    let noise_dim = rng.random_range(1..=6);
    let (role, gene) = match kind {
        "linear_d" => (Role::Discriminator, GeneKind::Linear { out_features: rng.random_range(1..=6) }),
        "linear_g" => (Role::Generator, GeneKind::Linear { out_features: rng.random_range(1..=12) }),
        "conv" => (Role::Discriminator, GeneKind::Conv { out_channels: channels }),
        "transpose_conv" => (Role::Generator, GeneKind::TransposeConv { out_channels: channels }),
        other => panic!("unknown layer kind {other}"),
    };
    network(&genome(role, &[(gene, activation)]), data, noise_dim, rng)
}

pub const LAYER_KINDS: [&str; 4] = ["linear_d", "linear_g", "conv", "transpose_conv"];

pub fn seeded(seed: u64) -> StreamRng {
    rng_from_seed(seed)
}

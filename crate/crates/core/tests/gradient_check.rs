mod common;

use coegan_core::gan::{d_loss, d_loss_grad, g_loss, g_loss_grad};
use coegan_core::genome::{ActivationKind, GeneKind, Role, Shape};
use common::*;

#[test]
fn every_layer_kind_and_activation() {
    let mut rng = seeded(11);
    for kind in LAYER_KINDS {
        for activation in ActivationKind::ALL {
            for _ in 0..5 {
                let mut net = single_gene_network(kind, activation, &mut rng);
                let check = max_gradient_error(&mut net, 3, &mut rng);
                assert!(check.worst < 1e-4, "{kind}/{}: {check:?}", activation.name());
                assert!(check.checked > 0 && check.skipped * 100 <= check.checked, "{check:?}");
            }
        }
    }
}

#[test]
fn deep_mixed_networks() {
    let mut rng = seeded(12);
    let d = genome(
        Role::Discriminator,
        &[
            (GeneKind::Conv { out_channels: 3 }, ActivationKind::LeakyReLU),
            (GeneKind::Conv { out_channels: 2 }, ActivationKind::ELU),
            (GeneKind::Linear { out_features: 5 }, ActivationKind::Tanh),
            (GeneKind::Linear { out_features: 4 }, ActivationKind::Sigmoid),
        ],
    );
    let g = genome(
        Role::Generator,
        &[
            (GeneKind::Linear { out_features: 7 }, ActivationKind::ReLU),
            (GeneKind::Linear { out_features: 9 }, ActivationKind::ELU),
            (GeneKind::TransposeConv { out_channels: 3 }, ActivationKind::LeakyReLU),
            (GeneKind::TransposeConv { out_channels: 2 }, ActivationKind::Tanh),
        ],
    );
    let data = Shape::spatial(1, 9, 9);
    for genome in [d, g] {
        let mut net = network(&genome, data, 4, &mut rng);
        let check = max_gradient_error(&mut net, 2, &mut rng);
        assert!(check.worst < 1e-4, "{:?}: {check:?}", genome.role);
        assert!(check.skipped * 100 <= check.checked, "{check:?}");
    }
}

/// Generator parameter gradients of the generator loss, taken through the discriminator.
#[test]
fn generator_loss_through_discriminator() {
    let mut rng = seeded(13);
    let data = Shape::spatial(1, 1, 2);
    let mut g = network(
        &genome(Role::Generator, &[(GeneKind::Linear { out_features: 6 }, ActivationKind::ELU)]),
        data,
        3,
        &mut rng,
    );
    let mut d = network(
        &genome(Role::Discriminator, &[(GeneKind::Linear { out_features: 5 }, ActivationKind::Tanh)]),
        data,
        3,
        &mut rng,
    );
    let n = 4;
    let z = random_vec(&mut rng, n * 3);
    let fake = g.forward(&z, n).unwrap();
    let probs = d.forward(&fake, n).unwrap();
    let through = d.input_gradient(&g_loss_grad(&probs)).unwrap();
    let grads = g.backward(&through).unwrap();

    let loss = |g: &coegan_core::backend::Network<f64>| g_loss(&d.infer(&g.infer(&z, n).unwrap(), n).unwrap()).unwrap();
    let keys: Vec<_> = g.params().iter().map(|(k, _)| *k).collect();
    for key in keys {
        for i in 0..g.params().get(&key).unwrap().weights.len() {
            let saved = g.params().get(&key).unwrap().weights[i];
            g.params_mut().get_mut(&key).unwrap().weights[i] = saved + STEP;
            let plus = loss(&g);
            g.params_mut().get_mut(&key).unwrap().weights[i] = saved - STEP;
            let minus = loss(&g);
            g.params_mut().get_mut(&key).unwrap().weights[i] = saved;
            let numeric = (plus - minus) / (2.0 * STEP);
            let err = relative_error(grads.layers[&key].weights[i], numeric);
            assert!(err < 1e-4, "{key:?}[{i}]: relative error {err}");
        }
    }
}

/// Discriminator parameter gradients of the discriminator loss on a joint real/fake batch.
#[test]
fn discriminator_loss() {
    let mut rng = seeded(14);
    let data = Shape::spatial(1, 4, 4);
    let mut d = network(
        &genome(
            Role::Discriminator,
            &[
                (GeneKind::Conv { out_channels: 2 }, ActivationKind::ELU),
                (GeneKind::Linear { out_features: 3 }, ActivationKind::Tanh),
            ],
        ),
        data,
        1,
        &mut rng,
    );
    let n = 3;
    let joint = random_vec(&mut rng, 2 * n * 16);
    let probs = d.forward(&joint, 2 * n).unwrap();
    let (real, fake) = probs.split_at(n);
    let (mut upstream, fake_grad) = d_loss_grad(real, fake);
    upstream.extend(fake_grad);
    let grads = d.backward(&upstream).unwrap();
    let loss = |d: &coegan_core::backend::Network<f64>| {
        let p = d.infer(&joint, 2 * n).unwrap();
        d_loss(&p[..n], &p[n..]).unwrap()
    };
    let keys: Vec<_> = d.params().iter().map(|(k, _)| *k).collect();
    for key in keys {
        for i in 0..d.params().get(&key).unwrap().weights.len() {
            let saved = d.params().get(&key).unwrap().weights[i];
            d.params_mut().get_mut(&key).unwrap().weights[i] = saved + STEP;
            let plus = loss(&d);
            d.params_mut().get_mut(&key).unwrap().weights[i] = saved - STEP;
            let minus = loss(&d);
            d.params_mut().get_mut(&key).unwrap().weights[i] = saved;
            let err = relative_error(grads.layers[&key].weights[i], (plus - minus) / (2.0 * STEP));
            assert!(err < 1e-4, "{key:?}[{i}]: relative error {err}");
        }
    }
}

use super::Scalar;
use crate::genome::ActivationKind;

pub const LEAKY_RELU_SLOPE: f64 = 0.2;
pub const ELU_ALPHA: f64 = 1.0;

pub fn apply<T: Scalar>(kind: Option<ActivationKind>, values: &mut [T]) {
    let Some(kind) = kind else { return };
    let zero = T::zero();
    let one = T::one();
    match kind {
        ActivationKind::ReLU => values.iter_mut().for_each(|x| *x = x.max(zero)),
        ActivationKind::LeakyReLU => {
            let slope = T::from_f64_lossy(LEAKY_RELU_SLOPE);
            values
                .iter_mut()
                .for_each(|x| *x = if *x > zero { *x } else { *x * slope });
        }
        ActivationKind::ELU => {
            let alpha = T::from_f64_lossy(ELU_ALPHA);
            values
                .iter_mut()
                .for_each(|x| *x = if *x > zero { *x } else { alpha * (x.exp() - one) });
        }
        ActivationKind::Sigmoid => values.iter_mut().for_each(|x| *x = sigmoid(*x)),
        ActivationKind::Tanh => values.iter_mut().for_each(|x| *x = x.tanh()),
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    let one = T::one();
    if x >= T::zero() {
        one / (one + (-x).exp())
    } else {
        let e = x.exp();
        e / (one + e)
    }
}

/// Multiplies `grad` in place by the activation derivative, expressed through the
/// activation's output.
pub fn backprop<T: Scalar>(kind: Option<ActivationKind>, output: &[T], grad: &mut [T]) {
    let Some(kind) = kind else { return };
    let zero = T::zero();
    let one = T::one();
    let pairs = grad.iter_mut().zip(output);
    match kind {
        ActivationKind::ReLU => pairs.for_each(|(g, &a)| {
            if a <= zero {
                *g = zero
            }
        }),
        ActivationKind::LeakyReLU => {
            let slope = T::from_f64_lossy(LEAKY_RELU_SLOPE);
            pairs.for_each(|(g, &a)| {
                if a <= zero {
                    *g *= slope
                }
            })
        }
        ActivationKind::ELU => {
            let alpha = T::from_f64_lossy(ELU_ALPHA);
            pairs.for_each(|(g, &a)| {
                if a <= zero {
                    *g *= a + alpha
                }
            })
        }
        ActivationKind::Sigmoid => pairs.for_each(|(g, &a)| *g *= a * (one - a)),
        ActivationKind::Tanh => pairs.for_each(|(g, &a)| *g *= one - a * a),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_of_zero_is_half() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(sigmoid(0.0f32), 0.5);
    }

    #[test]
    fn sigmoid_stays_open_interval_for_moderate_inputs() {
        for x in [-30.0f64, -5.0, 5.0, 30.0] {
            let s = sigmoid(x);
            assert!(s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn derivatives_match_difference_quotients() {
        let h = 1e-6;
        for kind in ActivationKind::ALL {
            for &z in &[-1.3f64, -0.2, 0.4, 2.1] {
                let mut lo = [z - h];
                let mut hi = [z + h];
                let mut at = [z];
                apply(Some(kind), &mut lo);
                apply(Some(kind), &mut hi);
                apply(Some(kind), &mut at);
                let numeric = (hi[0] - lo[0]) / (2.0 * h);
                let mut g = [1.0];
                backprop(Some(kind), &at, &mut g);
                assert!((g[0] - numeric).abs() < 1e-6, "{kind:?} at {z}");
            }
        }
    }
}

//! Fitness assignment and sample-quality metrics.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gan::PairingOutcome;
use crate::rng::StreamRng;
use crate::variation::{FitnessRecord, Orientation};

/// Maps a flattened sample into a fixed-dimension feature vector.
pub trait Embedding: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, sample: &[f32]) -> Vec<f64>;
}

/// Flattened sample values as features.
#[derive(Debug, Clone)]
pub struct IdentityEmbedding {
    sample_len: usize,
}

impl IdentityEmbedding {
    pub fn new(sample_len: usize) -> Self {
        IdentityEmbedding { sample_len }
    }
}

impl Embedding for IdentityEmbedding {
    fn name(&self) -> &str {
        "identity"
    }

    fn dim(&self) -> usize {
        self.sample_len
    }

    fn embed(&self, sample: &[f32]) -> Vec<f64> {
        sample.iter().map(|&v| v as f64).collect()
    }
}

/// Fixed Gaussian random projection, entries `N(0, 1/sample_len)`.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    sample_len: usize,
    dim: usize,
    weights: Vec<f64>,
}

pub const RANDOM_PROJECTION_DIM: usize = 64;

impl RandomProjection {
    pub fn new(sample_len: usize, dim: usize, rng: &mut StreamRng) -> Self {
        let scale = 1.0 / (sample_len as f64).sqrt();
        let weights = (0..dim * sample_len)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        RandomProjection {
            sample_len,
            dim,
            weights,
        }
    }
}

impl Embedding for RandomProjection {
    fn name(&self) -> &str {
        "randproj"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sample: &[f32]) -> Vec<f64> {
        self.weights
            .chunks(self.sample_len)
            .map(|row| row.iter().zip(sample).map(|(w, &x)| w * x as f64).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianSummary {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased, symmetrized sample covariance of the rows of `features`.
pub fn estimate_gaussian(features: &DMatrix<f64>) -> Result<GaussianSummary> {
    let n = features.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            available: n,
        });
    }
    let mean: DVector<f64> = features.row_mean().transpose();
    let mut centered = features.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let covariance = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianSummary { mean, covariance })
}

fn psd_sqrt(matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let eigen = SymmetricEigen::new(matrix.clone());
    let roots = eigen.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eigen.eigenvectors * DMatrix::from_diagonal(&roots) * eigen.eigenvectors.transpose()
}

/// `‖μa − μb‖² + Tr(Σa + Σb − 2(Σa Σb)^{1/2})`, clamped at zero.
///
/// The trace of the matrix root is taken from the eigenvalues of the symmetric
/// matrix `Σa^{1/2} Σb Σa^{1/2}`, which shares its spectrum with `Σa Σb`.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    let d = a.dim();
    if b.dim() != d || a.covariance.shape() != (d, d) || b.covariance.shape() != (d, d) {
        return Err(Error::Dimension(format!(
            "gaussians of dimension {d} and {}",
            b.dim()
        )));
    }
    let finite = |g: &GaussianSummary| {
        g.mean.iter().all(|v| v.is_finite()) && g.covariance.iter().all(|v| v.is_finite())
    };
    if !finite(a) || !finite(b) {
        return Err(Error::NonFinite("gaussian summary"));
    }
    let mean_term = (&a.mean - &b.mean).norm_squared();
    let root_a = psd_sqrt(&a.covariance);
    let product = &root_a * &b.covariance * &root_a;
    let product = (&product + product.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(product)
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt())
        .sum();
    let value = mean_term + a.covariance.trace() + b.covariance.trace() - 2.0 * cross;
    Ok(value.max(0.0))
}

fn check_samples(samples: &[f32], sample_len: usize, n: usize) -> Result<()> {
    let available = samples.len() / sample_len.max(1);
    if n > available {
        return Err(Error::InsufficientSamples {
            needed: n,
            available,
        });
    }
    Ok(())
}

/// Embeds the first `n` samples of a flattened sample array, one row per sample.
pub fn embed_samples(
    embedding: &dyn Embedding,
    samples: &[f32],
    sample_len: usize,
    n: usize,
) -> Result<DMatrix<f64>> {
    check_samples(samples, sample_len, n)?;
    let d = embedding.dim();
    let mut rows = Vec::with_capacity(n * d);
    for sample in samples.chunks(sample_len).take(n) {
        let features = embedding.embed(sample);
        if features.len() != d {
            return Err(Error::Dimension(format!(
                "embedding `{}` produced {} features, declared {d}",
                embedding.name(),
                features.len()
            )));
        }
        rows.extend(features);
    }
    Ok(DMatrix::from_row_slice(n, d, &rows))
}

/// Fréchet distance between embedded real and fake samples, `n` of each.
pub fn fid(
    embedding: &dyn Embedding,
    real: &[f32],
    fake: &[f32],
    sample_len: usize,
    n: usize,
) -> Result<f64> {
    let reference = estimate_gaussian(&embed_samples(embedding, real, sample_len, n)?)?;
    fid_against(&reference, embedding, fake, sample_len, n)
}

/// Like [`fid`] with a precomputed summary of the real samples.
pub fn fid_against(
    reference: &GaussianSummary,
    embedding: &dyn Embedding,
    fake: &[f32],
    sample_len: usize,
    n: usize,
) -> Result<f64> {
    let summary = estimate_gaussian(&embed_samples(embedding, fake, sample_len, n)?)?;
    frechet_distance(reference, &summary)
}

/// Root mean squared elementwise difference between the i-th fake and i-th real sample.
pub fn rmse_metric(fake: &[f32], real: &[f32], sample_len: usize, n: usize) -> Result<f64> {
    check_samples(fake, sample_len, n)?;
    check_samples(real, sample_len, n)?;
    if n == 0 || sample_len == 0 {
        return Err(Error::Empty("rmse samples"));
    }
    let count = n * sample_len;
    let sum: f64 = fake[..count]
        .iter()
        .zip(&real[..count])
        .map(|(&f, &r)| {
            let d = f as f64 - r as f64;
            d * d
        })
        .sum();
    Ok((sum / count as f64).sqrt())
}

/// Predicts a probability vector over a fixed set of classes.
pub trait Classifier {
    fn classes(&self) -> usize;
    fn predict(&self, sample: &[f32]) -> Vec<f64>;
}

const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// `exp(mean_i KL(p(y|x_i) ‖ p(y)))` over the first `n` samples.
pub fn classifier_score(
    classifier: &dyn Classifier,
    fake: &[f32],
    sample_len: usize,
    n: usize,
) -> Result<f64> {
    check_samples(fake, sample_len, n)?;
    if n == 0 {
        return Err(Error::Empty("classifier samples"));
    }
    let k = classifier.classes();
    let mut predictions = Vec::with_capacity(n);
    for (i, sample) in fake.chunks(sample_len).take(n).enumerate() {
        let p = classifier.predict(sample);
        let sum: f64 = p.iter().sum();
        if p.len() != k || (sum - 1.0).abs() > NORMALIZATION_TOLERANCE || p.iter().any(|&v| v < 0.0)
        {
            return Err(Error::NotNormalized { sample: i, sum });
        }
        predictions.push(p);
    }
    let mut marginal = vec![0.0; k];
    for p in &predictions {
        for (m, &v) in marginal.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let mean_kl: f64 = predictions
        .iter()
        .map(|p| {
            p.iter()
                .zip(&marginal)
                .filter(|(&pi, _)| pi > 0.0)
                .map(|(&pi, &mi)| pi * (pi.ln() - mi.ln()))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    Ok(mean_kl.exp())
}

/// Discriminator fitness is the mean `d_loss` over its pairings; generator
/// fitness is its FID. Both are lower-is-better.
pub fn assign_fitness(
    outcomes: &[PairingOutcome],
    discriminators: &[u64],
    fid_per_generator: &BTreeMap<u64, f64>,
) -> Result<BTreeMap<u64, FitnessRecord>> {
    let mut losses: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for outcome in outcomes {
        losses
            .entry(outcome.discriminator)
            .or_default()
            .push(outcome.d_loss);
    }
    let mut fitness = BTreeMap::new();
    for &id in discriminators {
        let values = losses.get_mut(&id).ok_or(Error::Unpaired(id))?;
        // order-independent summation
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        fitness.insert(id, FitnessRecord::new(mean, Orientation::LowerIsBetter));
    }
    for (&id, &value) in fid_per_generator {
        fitness.insert(id, FitnessRecord::new(value, Orientation::LowerIsBetter));
    }
    Ok(fitness)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_1d(mean: f64, var: f64) -> GaussianSummary {
        GaussianSummary {
            mean: DVector::from_element(1, mean),
            covariance: DMatrix::from_element(1, 1, var),
        }
    }

    #[test]
    fn constant_rows_have_zero_covariance() {
        let features = DMatrix::from_fn(5, 3, |_, j| j as f64 + 0.5);
        let g = estimate_gaussian(&features).unwrap();
        assert_eq!(g.mean, DVector::from_vec(vec![0.5, 1.5, 2.5]));
        assert!(g.covariance.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn unbiased_variance() {
        let g = estimate_gaussian(&DMatrix::from_vec(2, 1, vec![-1.0, 1.0])).unwrap();
        assert_eq!(g.mean[0], 0.0);
        assert_eq!(g.covariance[(0, 0)], 2.0);
    }

    #[test]
    fn too_few_rows_rejected() {
        assert!(estimate_gaussian(&DMatrix::from_vec(1, 1, vec![1.0])).is_err());
    }

    #[test]
    fn scalar_closed_forms() {
        let d = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(1.0, 1.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let d = frechet_distance(&gaussian_1d(0.0, 1.0), &gaussian_1d(0.0, 4.0)).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let g = gaussian_1d(3.0, 2.5);
        assert!(frechet_distance(&g, &g).unwrap() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let b = GaussianSummary {
            mean: DVector::zeros(2),
            covariance: DMatrix::identity(2, 2),
        };
        assert!(matches!(
            frechet_distance(&gaussian_1d(0.0, 1.0), &b),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            frechet_distance(&gaussian_1d(f64::NAN, 1.0), &gaussian_1d(0.0, 1.0)),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rmse_examples() {
        let real = [0.5f32, -0.25, 1.0, 0.0];
        assert_eq!(rmse_metric(&real, &real, 2, 2).unwrap(), 0.0);
        let shifted: Vec<f32> = real.iter().map(|v| v + 1.0).collect();
        assert!((rmse_metric(&shifted, &real, 2, 2).unwrap() - 1.0).abs() < 1e-9);
        let signs = [1.0f32, -1.0, -1.0, 1.0];
        let flipped: Vec<f32> = signs.iter().map(|v| -v).collect();
        assert!((rmse_metric(&flipped, &signs, 2, 2).unwrap() - 2.0).abs() < 1e-12);
        assert!(rmse_metric(&real, &real, 2, 3).is_err());
    }

    struct Fixed(Vec<Vec<f64>>);

    impl Classifier for Fixed {
        fn classes(&self) -> usize {
            self.0[0].len()
        }
        fn predict(&self, sample: &[f32]) -> Vec<f64> {
            self.0[sample[0] as usize].clone()
        }
    }

    #[test]
    fn classifier_score_examples() {
        let constant = Fixed(vec![vec![0.2, 0.3, 0.5]]);
        let samples = [0.0f32; 10];
        assert!((classifier_score(&constant, &samples, 1, 10).unwrap() - 1.0).abs() < 1e-12);

        let halves = Fixed(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let samples = [0.0f32, 1.0, 0.0, 1.0];
        assert!((classifier_score(&halves, &samples, 1, 4).unwrap() - 2.0).abs() < 1e-12);

        let bad = Fixed(vec![vec![0.5, 0.4]]);
        assert!(matches!(
            classifier_score(&bad, &[0.0], 1, 1),
            Err(Error::NotNormalized { .. })
        ));
    }

    fn outcome(g: u64, d: u64, d_loss: f64) -> PairingOutcome {
        PairingOutcome {
            generator: g,
            discriminator: d,
            d_loss,
            g_loss: 0.0,
            batches: 1,
        }
    }

    #[test]
    fn fitness_assignment() {
        let fids = BTreeMap::from([(10, 42.0)]);
        let single = assign_fitness(&[outcome(10, 1, 1.3)], &[1], &fids).unwrap();
        assert_eq!(single[&1].raw, 1.3);
        assert_eq!(single[&10].raw, 42.0);
        let double =
            assign_fitness(&[outcome(10, 1, 1.0), outcome(11, 1, 2.0)], &[1], &fids).unwrap();
        assert_eq!(double[&1].raw, 1.5);
        assert_eq!(double[&10].raw, 42.0);
        assert!(matches!(
            assign_fitness(&[outcome(10, 1, 1.0)], &[1, 2], &fids),
            Err(Error::Unpaired(2))
        ));
    }
}

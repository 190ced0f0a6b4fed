//! Configuration, datasets, persistence and the run driver behind the CLI.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod metrics;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};

pub use config::{load_config, ConfigOverrides, DatasetKind, EmbeddingKind, RunConfig};

use crate::backend::Network;
use crate::coevolution::{run_evolution, Environment, EvolutionState, GenerationSummary, Individual};
use crate::error::{Error, Result};
use crate::fitness::{
    embed_samples, estimate_gaussian, Embedding, IdentityEmbedding, RandomProjection,
    RANDOM_PROJECTION_DIM,
};
use crate::rng::{derive_seed, rng_from_seed, Stream, StreamRng};
use checkpoint::{load_checkpoint, read_checkpoint_config, write_checkpoint};
use data::{load_idx_dataset, pixel_byte, ring2d_dataset, NearestModeClassifier, SampleSource};
use metrics::{persist_metrics, persist_timing, truncate_lines, MetricsRecord, Timing, METRICS_FILE, TIMINGS_FILE};

/// Overrides the dataset directory from the configuration.
pub const DATA_DIR_ENV: &str = "COEGAN_DATA_DIR";
pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const SAMPLES_DIR: &str = "samples";
const DEFAULT_DATA_DIR: &str = "data";
const DUMPED_SAMPLES: usize = 16;

pub fn data_dir(config: &RunConfig) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .or_else(|| config.data_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_DIR))
}

fn open_dataset(config: &RunConfig) -> Result<(Box<dyn SampleSource>, Option<Vec<[f64; 2]>>, f64)> {
    let data_seed = Stream::Data.seed(config.seed);
    match config.dataset {
        DatasetKind::Ring2d => {
            let ring = ring2d_dataset(
                config.ring_modes,
                config.ring_radius,
                config.ring_sigma,
                rng_from_seed(data_seed),
            )
            .normalized();
            let centers = ring.centers();
            let capture = config.capture_radius * ring.scale;
            Ok((Box::new(ring), Some(centers), capture))
        }
        kind => {
            let dir = data_dir(config).join(kind.name());
            let images = dir.join("train-images-idx3-ubyte");
            let labels = dir.join("train-labels-idx1-ubyte");
            let labels = labels.exists().then_some(labels);
            let dataset = load_idx_dataset(&images, labels.as_deref(), data_seed)?;
            Ok((Box::new(dataset), None, 0.0))
        }
    }
}

/// Opens the dataset and fixes the reference statistics for a run.
pub fn build_environment(config: &RunConfig) -> Result<Environment> {
    let (data, mode_centers, capture_radius) = open_dataset(config)?;
    let sample_len = data.sample_len();
    let mut reference_rng = Stream::Reference.rng(config.seed);
    let fid_reference = data.reference_samples(config.fid_samples, &mut reference_rng)?;
    let rmse_reference = data.reference_samples(config.rmse_samples, &mut reference_rng)?;
    let embedding: Box<dyn Embedding> = match config.embedding {
        EmbeddingKind::Identity => Box::new(IdentityEmbedding::new(sample_len)),
        EmbeddingKind::RandomProjection => Box::new(RandomProjection::new(
            sample_len,
            RANDOM_PROJECTION_DIM,
            &mut Stream::Embedding.rng(config.seed),
        )),
    };
    let reference = estimate_gaussian(&embed_samples(
        embedding.as_ref(),
        &fid_reference,
        sample_len,
        config.fid_samples,
    )?)?;
    let classifier = mode_centers.clone().map(|centers| {
        Box::new(NearestModeClassifier { centers }) as Box<dyn crate::fitness::Classifier + Send + Sync>
    });
    Ok(Environment {
        data,
        embedding,
        reference,
        rmse_reference,
        classifier,
        mode_centers,
        capture_radius,
    })
}

/// Where a run stopped and what it produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub generation: usize,
    pub records: Vec<MetricsRecord>,
    pub samples: Vec<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Starts a fresh run in `config.out_dir`. With `stop_after`, stops once that
/// many generations are complete, leaving a checkpoint to resume from.
pub fn run(config: &RunConfig, stop_after: Option<usize>) -> Result<RunOutcome> {
    config.validate()?;
    let run_dir = config.out_dir.clone();
    create_dir(&run_dir)?;
    let echo = run_dir.join("config.toml");
    fs::write(&echo, config.to_toml()).map_err(|e| Error::io(&echo, e))?;
    for file in [METRICS_FILE, TIMINGS_FILE] {
        truncate_lines(&run_dir.join(file), 0)?;
    }
    let mut env = build_environment(config)?;
    let mut state = EvolutionState::initial(config, env.sample_shape())?;
    write_checkpoint(&state, config, &env.data.state(), &run_dir.join(CHECKPOINT_DIR))?;
    drive(&mut state, config, &mut env, &run_dir, stop_after)
}

/// Continues the run whose checkpoint directory is `checkpoint_dir`.
pub fn resume(checkpoint_dir: &Path, stop_after: Option<usize>) -> Result<RunOutcome> {
    let config = read_checkpoint_config(checkpoint_dir)?;
    let run_dir = checkpoint_dir
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let mut env = build_environment(&config)?;
    let (mut state, data_state) = load_checkpoint(checkpoint_dir, &config, env.sample_shape())?;
    env.data.restore_state(&data_state)?;
    for file in [METRICS_FILE, TIMINGS_FILE] {
        truncate_lines(&run_dir.join(file), state.generation)?;
    }
    drive(&mut state, &config, &mut env, &run_dir, stop_after)
}

fn drive(
    state: &mut EvolutionState,
    config: &RunConfig,
    env: &mut Environment,
    run_dir: &Path,
    stop_after: Option<usize>,
) -> Result<RunOutcome> {
    let until = stop_after.unwrap_or(config.generations).min(config.generations);
    let checkpoint_dir = run_dir.join(CHECKPOINT_DIR);
    let mut started = Instant::now();
    let mut observe = |state: &EvolutionState, env: &Environment, summary: &GenerationSummary| -> Result<()> {
        persist_metrics(&summary.record, run_dir)?;
        persist_timing(
            &Timing {
                generation: summary.record.generation,
                seconds: started.elapsed().as_secs_f64(),
            },
            run_dir,
        )?;
        started = Instant::now();
        write_checkpoint(state, config, &env.data.state(), &checkpoint_dir)
    };
    let records = run_evolution(state, config, env, until, &mut observe)?;
    let mut samples = Vec::new();
    if state.generation == config.generations && state.generation > 0 {
        if let Some(best) = best_generator(state) {
            let mut rng = rng_from_seed(derive_seed(Stream::Eval.seed(config.seed), state.generation as u64));
            samples = dump_samples(&best.network, DUMPED_SAMPLES, &run_dir.join(SAMPLES_DIR), &mut rng)?;
        }
    }
    Ok(RunOutcome {
        run_dir: run_dir.to_path_buf(),
        generation: state.generation,
        records,
        samples,
    })
}

fn best_generator(state: &EvolutionState) -> Option<&Individual> {
    let (g, _) = state.prev_best?;
    state.generators.members.iter().find(|m| m.id == g)
}

/// Writes `n` generator samples to `dir`: binary graymaps for images, or one
/// `x y` line per sample for two-element samples.
pub fn dump_samples(generator: &Network<f32>, n: usize, dir: &Path, rng: &mut StreamRng) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    let noise: Vec<f32> = (0..n * generator.input_len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let samples = generator.infer(&noise, n)?;
    let len = generator.output_len();
    if len == 2 {
        let path = dir.join("samples.txt");
        let text: String = samples.chunks(2).map(|p| format!("{} {}\n", p[0], p[1])).collect();
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        return Ok(vec![path]);
    }
    let (c, h, w) = generator
        .plan()
        .output
        .dims()
        .ok_or_else(|| Error::Shape("generator output is not an image".into()))?;
    let mut written = Vec::with_capacity(n);
    for (i, sample) in samples.chunks(len).enumerate() {
        let path = dir.join(format!("sample-{i:03}.pgm"));
        // channels are stacked vertically
        let mut bytes = format!("P5\n{w} {}\n255\n", c * h).into_bytes();
        bytes.extend(sample.iter().map(|&v| pixel_byte(v)));
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

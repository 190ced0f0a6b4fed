use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::backend::AdamConfig;
use crate::coevolution::PairingStrategy;
use crate::error::{Error, Result};
use crate::gan::TrainingBudget;
use crate::genome::GeneRanges;
use crate::variation::{BreedingConfig, MutationRates};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    FashionMnist,
    Ring2d,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::FashionMnist => "fashion-mnist",
            DatasetKind::Ring2d => "ring2d",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [DatasetKind::Mnist, DatasetKind::FashionMnist, DatasetKind::Ring2d]
            .into_iter()
            .find(|d| d.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Identity,
    RandomProjection,
}

impl EmbeddingKind {
    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Identity => "identity",
            EmbeddingKind::RandomProjection => "randproj",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [EmbeddingKind::Identity, EmbeddingKind::RandomProjection]
            .into_iter()
            .find(|e| e.name() == name)
    }
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub generations: usize,
    pub generator_population: usize,
    pub discriminator_population: usize,
    pub add_layer_rate: f64,
    pub remove_layer_rate: f64,
    pub change_layer_rate: f64,
    pub min_features: u32,
    pub max_features: u32,
    pub min_channels: u32,
    pub max_channels: u32,
    pub tournament_k: usize,
    pub fid_samples: usize,
    pub rmse_samples: usize,
    pub genome_limit: usize,
    pub species: usize,
    pub batch_size: usize,
    pub batches_per_pair: usize,
    pub learning_rate: f64,
    pub dataset: DatasetKind,
    pub pairing: PairingStrategy,
    pub embedding: EmbeddingKind,
    pub noise_dim: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    pub ring_modes: usize,
    pub ring_radius: f64,
    pub ring_sigma: f64,
    pub capture_radius: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            generations: 50,
            generator_population: 10,
            discriminator_population: 10,
            add_layer_rate: 0.20,
            remove_layer_rate: 0.10,
            change_layer_rate: 0.10,
            min_features: 32,
            max_features: 1024,
            min_channels: 16,
            max_channels: 128,
            tournament_k: 2,
            fid_samples: 1000,
            rmse_samples: 1000,
            genome_limit: 6,
            species: 3,
            batch_size: 64,
            batches_per_pair: 20,
            learning_rate: 0.001,
            dataset: DatasetKind::Mnist,
            pairing: PairingStrategy::AllVsAll,
            embedding: EmbeddingKind::RandomProjection,
            noise_dim: 100,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            data_dir: None,
            ring_modes: 8,
            ring_radius: 2.0,
            ring_sigma: 0.05,
            capture_radius: 0.15,
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub dataset: Option<DatasetKind>,
    pub seed: Option<u64>,
    pub generations: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub pairing: Option<PairingStrategy>,
    pub embedding: Option<EmbeddingKind>,
}

fn integer(key: &str, value: &toml::Value) -> Result<i64> {
    value
        .as_integer()
        .ok_or_else(|| Error::config(key, format!("expected an integer, got {value}")))
}

fn count(key: &str, value: &toml::Value) -> Result<usize> {
    let v = integer(key, value)?;
    if v < 1 {
        return Err(Error::config(key, format!("must be at least 1, got {v}")));
    }
    Ok(v as usize)
}

fn size(key: &str, value: &toml::Value) -> Result<u32> {
    let v = count(key, value)?;
    u32::try_from(v).map_err(|_| Error::config(key, format!("{v} is too large")))
}

fn real(key: &str, value: &toml::Value) -> Result<f64> {
    let v = match value {
        toml::Value::Float(f) => *f,
        toml::Value::Integer(i) => *i as f64,
        other => return Err(Error::config(key, format!("expected a number, got {other}"))),
    };
    if !v.is_finite() {
        return Err(Error::config(key, "must be finite"));
    }
    Ok(v)
}

fn rate(key: &str, value: &toml::Value) -> Result<f64> {
    let v = real(key, value)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(key, format!("must lie in [0, 1], got {v}")));
    }
    Ok(v)
}

fn positive(key: &str, value: &toml::Value) -> Result<f64> {
    let v = real(key, value)?;
    if v <= 0.0 {
        return Err(Error::config(key, format!("must be positive, got {v}")));
    }
    Ok(v)
}

fn non_negative(key: &str, value: &toml::Value) -> Result<f64> {
    let v = real(key, value)?;
    if v < 0.0 {
        return Err(Error::config(key, format!("must be non-negative, got {v}")));
    }
    Ok(v)
}

fn text<'a>(key: &str, value: &'a toml::Value) -> Result<&'a str> {
    value
        .as_str()
        .ok_or_else(|| Error::config(key, format!("expected a string, got {value}")))
}

fn named<T>(key: &str, value: &toml::Value, parse: fn(&str) -> Option<T>, choices: &str) -> Result<T> {
    let name = text(key, value)?;
    parse(name).ok_or_else(|| Error::config(key, format!("unknown value `{name}`, expected one of {choices}")))
}

impl RunConfig {
    /// Sets one field from its textual key.
    pub fn set(&mut self, key: &str, value: &toml::Value) -> Result<()> {
        match key {
            "generations" => self.generations = count(key, value)?,
            "generator_population" => self.generator_population = count(key, value)?,
            "discriminator_population" => self.discriminator_population = count(key, value)?,
            "add_layer_rate" => self.add_layer_rate = rate(key, value)?,
            "remove_layer_rate" => self.remove_layer_rate = rate(key, value)?,
            "change_layer_rate" => self.change_layer_rate = rate(key, value)?,
            "min_features" => self.min_features = size(key, value)?,
            "max_features" => self.max_features = size(key, value)?,
            "min_channels" => self.min_channels = size(key, value)?,
            "max_channels" => self.max_channels = size(key, value)?,
            "tournament_k" => self.tournament_k = count(key, value)?,
            "fid_samples" => {
                let n = count(key, value)?;
                if n < 2 {
                    return Err(Error::config(key, "at least 2 samples are needed for a covariance"));
                }
                self.fid_samples = n;
            }
            "rmse_samples" => self.rmse_samples = count(key, value)?,
            "genome_limit" => self.genome_limit = count(key, value)?,
            "species" => self.species = count(key, value)?,
            "batch_size" => self.batch_size = count(key, value)?,
            "batches_per_pair" => self.batches_per_pair = count(key, value)?,
            "learning_rate" => self.learning_rate = non_negative(key, value)?,
            "dataset" => {
                self.dataset = named(key, value, DatasetKind::from_name, "mnist, fashion-mnist, ring2d")?
            }
            "pairing" => {
                self.pairing = named(key, value, PairingStrategy::from_name, "all, random, best")?
            }
            "embedding" => {
                self.embedding = named(key, value, EmbeddingKind::from_name, "identity, randproj")?
            }
            "noise_dim" => self.noise_dim = count(key, value)?,
            "seed" => {
                let v = integer(key, value)?;
                self.seed = u64::try_from(v).map_err(|_| Error::config(key, "must be non-negative"))?;
            }
            "out_dir" => self.out_dir = PathBuf::from(text(key, value)?),
            "data_dir" => self.data_dir = Some(PathBuf::from(text(key, value)?)),
            "ring_modes" => self.ring_modes = count(key, value)?,
            "ring_radius" => self.ring_radius = positive(key, value)?,
            "ring_sigma" => self.ring_sigma = non_negative(key, value)?,
            "capture_radius" => self.capture_radius = positive(key, value)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Checks constraints between fields.
    pub fn validate(&self) -> Result<()> {
        if self.min_features > self.max_features {
            return Err(Error::config("min_features", "exceeds max_features"));
        }
        if self.min_channels > self.max_channels {
            return Err(Error::config("min_channels", "exceeds max_channels"));
        }
        if i64::try_from(self.seed).is_err() {
            return Err(Error::config("seed", "must fit in a signed 64-bit integer"));
        }
        Ok(())
    }

    /// Parses TOML text on top of the defaults.
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<file>", e.message().to_string()))?;
        let mut config = RunConfig::default();
        for (key, value) in &table {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        let mut out = String::new();
        let mut line = |key: &str, value: String| {
            let _ = writeln!(out, "{key} = {value}");
        };
        let quoted = |s: &str| toml::Value::String(s.to_string()).to_string();
        line("generations", self.generations.to_string());
        line("generator_population", self.generator_population.to_string());
        line("discriminator_population", self.discriminator_population.to_string());
        line("add_layer_rate", format!("{:?}", self.add_layer_rate));
        line("remove_layer_rate", format!("{:?}", self.remove_layer_rate));
        line("change_layer_rate", format!("{:?}", self.change_layer_rate));
        line("min_features", self.min_features.to_string());
        line("max_features", self.max_features.to_string());
        line("min_channels", self.min_channels.to_string());
        line("max_channels", self.max_channels.to_string());
        line("tournament_k", self.tournament_k.to_string());
        line("fid_samples", self.fid_samples.to_string());
        line("rmse_samples", self.rmse_samples.to_string());
        line("genome_limit", self.genome_limit.to_string());
        line("species", self.species.to_string());
        line("batch_size", self.batch_size.to_string());
        line("batches_per_pair", self.batches_per_pair.to_string());
        line("learning_rate", format!("{:?}", self.learning_rate));
        line("dataset", quoted(self.dataset.name()));
        line("pairing", quoted(self.pairing.name()));
        line("embedding", quoted(self.embedding.name()));
        line("noise_dim", self.noise_dim.to_string());
        line("seed", self.seed.to_string());
        line("out_dir", quoted(&self.out_dir.to_string_lossy()));
        if let Some(dir) = &self.data_dir {
            line("data_dir", quoted(&dir.to_string_lossy()));
        }
        line("ring_modes", self.ring_modes.to_string());
        line("ring_radius", format!("{:?}", self.ring_radius));
        line("ring_sigma", format!("{:?}", self.ring_sigma));
        line("capture_radius", format!("{:?}", self.capture_radius));
        out
    }

    pub fn apply(&mut self, overrides: &ConfigOverrides) {
        if let Some(d) = overrides.dataset {
            self.dataset = d;
        }
        if let Some(s) = overrides.seed {
            self.seed = s;
        }
        if let Some(g) = overrides.generations {
            self.generations = g;
        }
        if let Some(dir) = &overrides.out_dir {
            self.out_dir = dir.clone();
        }
        if let Some(p) = overrides.pairing {
            self.pairing = p;
        }
        if let Some(e) = overrides.embedding {
            self.embedding = e;
        }
    }

    pub fn mutation_rates(&self) -> MutationRates {
        MutationRates {
            add_layer: self.add_layer_rate,
            remove_layer: self.remove_layer_rate,
            change_layer: self.change_layer_rate,
        }
    }

    pub fn gene_ranges(&self) -> GeneRanges {
        GeneRanges {
            features: (self.min_features, self.max_features),
            channels: (self.min_channels, self.max_channels),
        }
    }

    pub fn budget(&self) -> TrainingBudget {
        TrainingBudget {
            batches_per_pair: self.batches_per_pair,
            batch_size: self.batch_size,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn breeding(&self, population_size: usize) -> BreedingConfig {
        BreedingConfig {
            population_size,
            rates: self.mutation_rates(),
            ranges: self.gene_ranges(),
            tournament_k: self.tournament_k,
        }
    }
}

/// Defaults, then the optional file, then command-line overrides.
pub fn load_config(path: Option<&Path>, overrides: &ConfigOverrides) -> Result<RunConfig> {
    let mut config = match path {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    config.apply(overrides);
    config.validate()?;
    Ok(config)
}

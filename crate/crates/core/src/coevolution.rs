//! One evolutionary run: pairing, training bouts, fitness, speciation and reproduction.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::backend::{build_network, Network, ParamStore};
use crate::error::{Error, Result};
use crate::experiment::data::{mode_coverage, SampleSource};
use crate::experiment::metrics::{MetricsRecord, PopulationMetrics};
use crate::experiment::RunConfig;
use crate::fitness::{
    assign_fitness, classifier_score, fid_against, rmse_metric, Classifier, Embedding,
    GaussianSummary,
};
use crate::gan::{train_pair, NoiseSource, PairingOutcome};
use crate::genome::{
    infer_shapes, new_minimal_genome, Genome, InnovationCounter, InnovationId, LayerSource, Role,
    Shape,
};
use crate::rng::{Stream, StreamRng};
use crate::variation::{next_generation, speciate, FitnessRecord, SpeciationState};

/// Generator samples are produced in chunks of this many during evaluation.
const EVAL_CHUNK: usize = 250;

#[derive(Debug, Clone)]
pub struct Individual {
    pub id: u64,
    pub genome: Genome,
    pub network: Network<f32>,
    pub fitness: Option<FitnessRecord>,
    pub batches_trained: u64,
    /// Per gene, how many consecutive generations its parameters were carried over.
    pub gene_reuse: BTreeMap<InnovationId, u32>,
}

impl Individual {
    /// Builds the phenotype of `genome`, inheriting compatible parameters from
    /// `parent` and bumping the reuse count of every inherited gene.
    pub fn spawn<R: Rng + ?Sized>(
        id: u64,
        genome: Genome,
        parent: Option<(&ParamStore<f32>, &BTreeMap<InnovationId, u32>)>,
        sample_shape: Shape,
        noise_dim: usize,
        rng: &mut R,
    ) -> Result<Individual> {
        let plan = infer_shapes(&genome, sample_shape, noise_dim)?;
        let empty = ParamStore::new();
        let no_reuse = BTreeMap::new();
        let (store, reuse) = parent.unwrap_or((&empty, &no_reuse));
        let (network, report) = build_network(&genome, plan, store, rng)?;
        let mut gene_reuse: BTreeMap<InnovationId, u32> =
            genome.genes.iter().map(|g| (g.innovation_id, 0)).collect();
        for key in &report.copied {
            if let LayerSource::Gene(id) = key {
                gene_reuse.insert(*id, reuse.get(id).copied().unwrap_or(0) + 1);
            }
        }
        Ok(Individual {
            id,
            genome,
            network,
            fitness: None,
            batches_trained: 0,
            gene_reuse,
        })
    }

    /// Restores an individual whose every parameter is supplied by `store`.
    pub fn restore(
        id: u64,
        genome: Genome,
        store: &ParamStore<f32>,
        gene_reuse: BTreeMap<InnovationId, u32>,
        sample_shape: Shape,
        noise_dim: usize,
    ) -> Result<Individual> {
        let plan = infer_shapes(&genome, sample_shape, noise_dim)?;
        // fresh initialization never happens when the store is complete, so the rng is unused
        let mut unused = crate::rng::rng_from_seed(0);
        let (network, report) = build_network(&genome, plan, store, &mut unused)?;
        if !report.fresh.is_empty() {
            return Err(Error::Construction(format!(
                "stored parameters for individual {id} are missing layers {:?}",
                report.fresh
            )));
        }
        Ok(Individual {
            id,
            genome,
            network,
            fitness: None,
            batches_trained: 0,
            gene_reuse,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairingStrategy {
    AllVsAll,
    Random,
    AllVsBest,
}

impl PairingStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PairingStrategy::AllVsAll => "all",
            PairingStrategy::Random => "random",
            PairingStrategy::AllVsBest => "best",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [PairingStrategy::AllVsAll, PairingStrategy::Random, PairingStrategy::AllVsBest]
            .into_iter()
            .find(|p| p.name() == name)
    }
}

/// Returns `(generator index, discriminator index)` pairs in training order.
///
/// `best` holds the indices of the best generator and discriminator; without it
/// the first individual of each population stands in.
pub fn make_pairs<R: Rng + ?Sized>(
    strategy: PairingStrategy,
    generators: usize,
    discriminators: usize,
    best: Option<(usize, usize)>,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    if generators == 0 {
        return Err(Error::Empty("generator population"));
    }
    if discriminators == 0 {
        return Err(Error::Empty("discriminator population"));
    }
    let pairs = match strategy {
        PairingStrategy::AllVsAll => (0..generators)
            .flat_map(|g| (0..discriminators).map(move |d| (g, d)))
            .collect(),
        PairingStrategy::AllVsBest => {
            let (best_g, best_d) = best.unwrap_or((0, 0));
            if best_g >= generators || best_d >= discriminators {
                return Err(Error::Dimension(format!(
                    "best indices ({best_g}, {best_d}) outside populations {generators}x{discriminators}"
                )));
            }
            (0..generators)
                .map(|g| (g, best_d))
                .chain((0..discriminators).map(|d| (best_g, d)))
                .collect()
        }
        PairingStrategy::Random => {
            // the smaller side is cycled to the larger side's length and shuffled,
            // giving a perfect matching when sizes agree
            let (large, small) = (generators.max(discriminators), generators.min(discriminators));
            let mut partners: Vec<usize> = (0..large).map(|i| i % small).collect();
            partners.shuffle(rng);
            let mut pairs: Vec<(usize, usize)> = partners
                .into_iter()
                .enumerate()
                .map(|(i, p)| if generators >= discriminators { (i, p) } else { (p, i) })
                .collect();
            pairs.sort();
            pairs
        }
    };
    Ok(pairs)
}

/// Data, reference statistics and metric plumbing shared by every generation.
pub struct Environment {
    pub data: Box<dyn SampleSource>,
    pub embedding: Box<dyn Embedding>,
    pub reference: GaussianSummary,
    pub rmse_reference: Vec<f32>,
    pub classifier: Option<Box<dyn Classifier + Send + Sync>>,
    pub mode_centers: Option<Vec<[f64; 2]>>,
    pub capture_radius: f64,
}

impl Environment {
    pub fn sample_shape(&self) -> Shape {
        self.data.sample_shape()
    }
}

/// Random streams consumed during evolution.
#[derive(Debug, Clone)]
pub struct Streams {
    pub evolution: StreamRng,
    pub pairing: StreamRng,
    pub init: StreamRng,
    pub eval: StreamRng,
    pub noise: NoiseSource,
}

impl Streams {
    pub fn new(seed: u64, noise_dim: usize) -> Self {
        Streams {
            evolution: Stream::Evolution.rng(seed),
            pairing: Stream::Pairing.rng(seed),
            init: Stream::Init.rng(seed),
            eval: Stream::Eval.rng(seed),
            noise: NoiseSource::new(noise_dim, Stream::Noise.rng(seed)),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Population {
    pub role: Role,
    pub members: Vec<Individual>,
    pub speciation: SpeciationState,
}

impl Population {
    fn index_of(&self, id: u64) -> Option<usize> {
        self.members.iter().position(|m| m.id == id)
    }

    fn ids(&self) -> Vec<u64> {
        self.members.iter().map(|m| m.id).collect()
    }
}

#[derive(Debug)]
pub struct EvolutionState {
    /// Number of completed generations.
    pub generation: usize,
    pub generators: Population,
    pub discriminators: Population,
    pub innovations: InnovationCounter,
    pub next_id: u64,
    /// Ids of the current individuals descended unchanged from last generation's best.
    pub prev_best: Option<(u64, u64)>,
    pub streams: Streams,
}

impl EvolutionState {
    /// Fresh populations of one-gene genomes.
    pub fn initial(config: &RunConfig, sample_shape: Shape) -> Result<EvolutionState> {
        let mut streams = Streams::new(config.seed, config.noise_dim);
        let innovations = InnovationCounter::default();
        let ranges = config.gene_ranges();
        let mut next_id = 1;
        let mut populate = |role: Role, size: usize, streams: &mut Streams| -> Result<Population> {
            let mut members = Vec::with_capacity(size);
            for _ in 0..size {
                let genome =
                    new_minimal_genome(role, config.genome_limit, &ranges, &innovations, &mut streams.evolution);
                members.push(Individual::spawn(
                    next_id,
                    genome,
                    None,
                    sample_shape,
                    config.noise_dim,
                    &mut streams.init,
                )?);
                next_id += 1;
            }
            Ok(Population {
                role,
                members,
                speciation: SpeciationState::new(config.species),
            })
        };
        let generators = populate(Role::Generator, config.generator_population, &mut streams)?;
        let discriminators =
            populate(Role::Discriminator, config.discriminator_population, &mut streams)?;
        Ok(EvolutionState {
            generation: 0,
            generators,
            discriminators,
            innovations,
            next_id,
            prev_best: None,
            streams,
        })
    }

    fn best_indices(&self) -> Option<(usize, usize)> {
        self.prev_best.map(|(g, d)| {
            (
                self.generators.index_of(g).unwrap_or(0),
                self.discriminators.index_of(d).unwrap_or(0),
            )
        })
    }
}

/// What one generation produced, besides the next population.
#[derive(Debug, Clone)]
pub struct GenerationSummary {
    pub record: MetricsRecord,
    pub outcomes: Vec<PairingOutcome>,
    /// Batches trained this generation by every individual that took part.
    pub batches_trained: BTreeMap<u64, u64>,
}

fn generate_samples(network: &Network<f32>, noise: &[f32], n: usize) -> Result<Vec<f32>> {
    let noise_dim = network.input_len();
    let mut out = Vec::with_capacity(n * network.output_len());
    let mut start = 0;
    while start < n {
        let count = EVAL_CHUNK.min(n - start);
        out.extend(network.infer(&noise[start * noise_dim..(start + count) * noise_dim], count)?);
        start += count;
    }
    Ok(out)
}

fn best_of(members: &[Individual]) -> usize {
    let mut best = 0;
    for (i, m) in members.iter().enumerate().skip(1) {
        let (a, b) = (m.fitness.expect("evaluated"), members[best].fitness.expect("evaluated"));
        if a.compare(&b).is_lt() {
            best = i;
        }
    }
    best
}

fn finite_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values
        .filter(|v| v.is_finite())
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn population_metrics(population: &Population, species: usize, threshold: f64) -> PopulationMetrics {
    let members = &population.members;
    let best = best_of(members);
    let genes: Vec<u32> = members.iter().flat_map(|m| m.gene_reuse.values().copied()).collect();
    PopulationMetrics {
        best_fitness: members[best].fitness.expect("evaluated").raw,
        mean_fitness: finite_mean(members.iter().map(|m| m.fitness.expect("evaluated").raw)),
        mean_layers: members.iter().map(|m| m.genome.len() as f64).sum::<f64>() / members.len() as f64,
        mean_gene_reuse: genes.iter().map(|&r| r as f64).sum::<f64>() / genes.len().max(1) as f64,
        species,
        threshold,
    }
}

/// Speciates `population`, breeds its successor and builds the new networks.
/// Returns the species count, the threshold used, and the new id of the best individual's elite copy.
fn reproduce(
    population: &mut Population,
    config: &RunConfig,
    sample_shape: Shape,
    innovations: &InnovationCounter,
    next_id: &mut u64,
    streams: &mut Streams,
) -> Result<(usize, f64, Option<u64>)> {
    let threshold = population.speciation.threshold;
    let genomes: BTreeMap<u64, Genome> =
        population.members.iter().map(|m| (m.id, m.genome.clone())).collect();
    let fitness: BTreeMap<u64, FitnessRecord> = population
        .members
        .iter()
        .map(|m| (m.id, m.fitness.expect("evaluated")))
        .collect();
    let order: Vec<(u64, &Genome)> = population.members.iter().map(|m| (m.id, &m.genome)).collect();
    let (mut species, next_state) = speciate(&order, &population.speciation);
    let species_count = species.len();
    let best_id = population.members[best_of(&population.members)].id;

    let breeding = config.breeding(population.members.len());
    let offspring = next_generation(
        &genomes,
        &mut species,
        &fitness,
        &breeding,
        innovations,
        &mut streams.evolution,
    );
    let parents: BTreeMap<u64, &Individual> = population.members.iter().map(|m| (m.id, m)).collect();
    let mut children = Vec::with_capacity(offspring.len());
    let mut best_copy = None;
    for child in offspring {
        let parent = parents[&child.parent];
        let id = *next_id;
        *next_id += 1;
        if child.elite && child.parent == best_id {
            best_copy = Some(id);
        }
        children.push(Individual::spawn(
            id,
            child.genome,
            Some((parent.network.params(), &parent.gene_reuse)),
            sample_shape,
            config.noise_dim,
            &mut streams.init,
        )?);
    }
    population.members = children;
    population.speciation = next_state;
    Ok((species_count, threshold, best_copy))
}

/// Trains every pair, evaluates both populations and replaces them with their offspring.
pub fn run_generation(
    state: &mut EvolutionState,
    config: &RunConfig,
    env: &mut Environment,
) -> Result<GenerationSummary> {
    let pairs = make_pairs(
        config.pairing,
        state.generators.members.len(),
        state.discriminators.members.len(),
        state.best_indices(),
        &mut state.streams.pairing,
    )?;
    let budget = config.budget();
    let adam = config.adam();
    for m in state.generators.members.iter_mut().chain(state.discriminators.members.iter_mut()) {
        m.batches_trained = 0;
    }
    let mut outcomes = Vec::with_capacity(pairs.len());
    for &(g, d) in &pairs {
        let generator = &mut state.generators.members[g];
        let discriminator = &mut state.discriminators.members[d];
        outcomes.push(train_pair(
            discriminator,
            generator,
            env.data.as_mut(),
            &mut state.streams.noise,
            &budget,
            &adam,
        )?);
    }

    // one shared noise batch so generators are compared on equal inputs
    let sample_len = env.sample_shape().numel();
    let eval_n = config.fid_samples.max(config.rmse_samples);
    let noise: Vec<f32> = (0..eval_n * config.noise_dim)
        .map(|_| StandardNormal.sample(&mut state.streams.eval))
        .collect();
    let mut fids = BTreeMap::new();
    let mut samples = BTreeMap::new();
    for g in &state.generators.members {
        let fake = generate_samples(&g.network, &noise, eval_n)?;
        let fid = match fid_against(&env.reference, env.embedding.as_ref(), &fake, sample_len, config.fid_samples) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        fids.insert(g.id, fid);
        samples.insert(g.id, fake);
    }
    let fitness = assign_fitness(&outcomes, &state.discriminators.ids(), &fids)?;
    for m in state.generators.members.iter_mut().chain(state.discriminators.members.iter_mut()) {
        m.fitness = fitness.get(&m.id).copied();
    }

    let best_g = &state.generators.members[best_of(&state.generators.members)];
    let best_samples = &samples[&best_g.id];
    let rmse = rmse_metric(best_samples, &env.rmse_reference, sample_len, config.rmse_samples)?;
    let score = match &env.classifier {
        Some(c) => Some(classifier_score(c.as_ref(), best_samples, sample_len, config.fid_samples)?),
        None => None,
    };
    let coverage = env
        .mode_centers
        .as_ref()
        .map(|centers| mode_coverage(&best_samples[..config.fid_samples * sample_len], centers, env.capture_radius));
    let batches_trained = state
        .generators
        .members
        .iter()
        .chain(&state.discriminators.members)
        .map(|m| (m.id, m.batches_trained))
        .collect();

    let sample_shape = env.sample_shape();
    let g_metrics_pre = population_metrics(&state.generators, 0, 0.0);
    let d_metrics_pre = population_metrics(&state.discriminators, 0, 0.0);
    let (g_species, g_threshold, g_best) = reproduce(
        &mut state.generators,
        config,
        sample_shape,
        &state.innovations,
        &mut state.next_id,
        &mut state.streams,
    )?;
    let (d_species, d_threshold, d_best) = reproduce(
        &mut state.discriminators,
        config,
        sample_shape,
        &state.innovations,
        &mut state.next_id,
        &mut state.streams,
    )?;
    state.prev_best = match (g_best, d_best) {
        (Some(g), Some(d)) => Some((g, d)),
        _ => None,
    };
    state.generation += 1;

    let record = MetricsRecord {
        generation: state.generation,
        generator: PopulationMetrics {
            species: g_species,
            threshold: g_threshold,
            ..g_metrics_pre
        },
        discriminator: PopulationMetrics {
            species: d_species,
            threshold: d_threshold,
            ..d_metrics_pre
        },
        best_fid: fids.values().copied().fold(f64::INFINITY, f64::min),
        rmse,
        classifier_score: score,
        mode_coverage: coverage,
        mean_d_loss: outcomes.iter().map(|o| o.d_loss).sum::<f64>() / outcomes.len() as f64,
        mean_g_loss: outcomes.iter().map(|o| o.g_loss).sum::<f64>() / outcomes.len() as f64,
        bouts: outcomes.len(),
    };
    Ok(GenerationSummary {
        record,
        outcomes,
        batches_trained,
    })
}

/// Runs generations until `until` are complete, calling `observe` after each.
/// Returns the records of the generations run in this call.
pub fn run_evolution(
    state: &mut EvolutionState,
    config: &RunConfig,
    env: &mut Environment,
    until: usize,
    observe: &mut dyn FnMut(&EvolutionState, &Environment, &GenerationSummary) -> Result<()>,
) -> Result<Vec<MetricsRecord>> {
    let mut history = Vec::new();
    while state.generation < until {
        let summary = run_generation(state, config, env)?;
        observe(state, env, &summary)?;
        history.push(summary.record);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn all_vs_all_is_generator_major() {
        let pairs = make_pairs(PairingStrategy::AllVsAll, 2, 2, None, &mut rng_from_seed(0)).unwrap();
        assert_eq!(pairs, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn all_vs_best_counts() {
        let pairs = make_pairs(PairingStrategy::AllVsBest, 3, 3, Some((2, 1)), &mut rng_from_seed(0)).unwrap();
        assert_eq!(pairs.len(), 6);
        assert!(pairs[..3].iter().all(|&(_, d)| d == 1));
        assert!(pairs[3..].iter().all(|&(g, _)| g == 2));
    }

    #[test]
    fn random_covers_everyone() {
        let mut rng = rng_from_seed(3);
        for (ng, nd) in [(10, 10), (3, 7), (7, 3), (1, 4)] {
            let pairs = make_pairs(PairingStrategy::Random, ng, nd, None, &mut rng).unwrap();
            assert_eq!(pairs.len(), ng.max(nd));
            for g in 0..ng {
                assert!(pairs.iter().any(|p| p.0 == g));
            }
            for d in 0..nd {
                assert!(pairs.iter().any(|p| p.1 == d));
            }
        }
        let pairs = make_pairs(PairingStrategy::Random, 10, 10, None, &mut rng).unwrap();
        let mut ds: Vec<_> = pairs.iter().map(|p| p.1).collect();
        ds.sort();
        assert_eq!(ds, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn empty_population_errors() {
        assert!(make_pairs(PairingStrategy::AllVsAll, 0, 2, None, &mut rng_from_seed(0)).is_err());
    }
}

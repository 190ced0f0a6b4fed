use rand::Rng;

use crate::genome::{
    new_minimal_genome, ActivationKind, Gene, GeneKind, GeneRanges, Genome, InnovationCounter,
    Role,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationRates {
    pub add_layer: f64,
    pub remove_layer: f64,
    pub change_layer: f64,
}

impl Default for MutationRates {
    fn default() -> Self {
        MutationRates {
            add_layer: 0.20,
            remove_layer: 0.10,
            change_layer: 0.10,
        }
    }
}

/// Which coin flips fired, and which of those actually changed the genome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MutationReport {
    pub add_drawn: bool,
    pub add_applied: bool,
    pub remove_drawn: bool,
    pub remove_applied: bool,
    pub change_drawn: bool,
    pub change_applied: bool,
}

fn add_layer<R: Rng + ?Sized>(
    genome: &mut Genome,
    ranges: &GeneRanges,
    innovations: &InnovationCounter,
    rng: &mut R,
) -> bool {
    if genome.genes.len() >= genome.max_len {
        return false;
    }
    let linear = rng.random_bool(0.5);
    let kind = if linear {
        GeneKind::Linear { out_features: 0 }
    } else {
        genome.role.spatial_kind(0)
    };
    let lead = genome.leading_section_len();
    let len = genome.genes.len();
    // insertion range of the section this kind belongs to
    let (lo, hi) = match (genome.role, linear) {
        (Role::Discriminator, false) | (Role::Generator, true) => (0, lead),
        (Role::Discriminator, true) | (Role::Generator, false) => (lead, len),
    };
    let position = rng.random_range(lo..=hi);
    let gene = Gene::random(kind, ranges, innovations, rng);
    genome.genes.insert(position, gene);
    true
}

fn remove_layer<R: Rng + ?Sized>(genome: &mut Genome, rng: &mut R) -> bool {
    if genome.genes.len() <= 1 {
        return false;
    }
    let index = rng.random_range(0..genome.genes.len());
    genome.genes.remove(index);
    true
}

fn change_layer<R: Rng + ?Sized>(genome: &mut Genome, ranges: &GeneRanges, rng: &mut R) -> bool {
    if genome.genes.is_empty() {
        return false;
    }
    let index = rng.random_range(0..genome.genes.len());
    let gene = &mut genome.genes[index];
    // 0: activation only, 1: size only, 2: both
    let which = rng.random_range(0..3);
    if which != 1 {
        gene.activation = ActivationKind::random(rng);
    }
    if which != 0 {
        let size = ranges.draw_size(&gene.kind, rng);
        gene.kind = gene.kind.with_size(size);
    }
    true
}

/// Applies add, remove and change as three independent draws, in that order.
/// Blocked mutations (add at the length limit, remove of the last gene) are skipped.
pub fn mutate<R: Rng + ?Sized>(
    genome: &Genome,
    rates: &MutationRates,
    ranges: &GeneRanges,
    innovations: &InnovationCounter,
    rng: &mut R,
) -> (Genome, MutationReport) {
    let mut child = genome.clone();
    let mut report = MutationReport::default();
    if rng.random_bool(rates.add_layer) {
        report.add_drawn = true;
        report.add_applied = add_layer(&mut child, ranges, innovations, rng);
    }
    if rng.random_bool(rates.remove_layer) {
        report.remove_drawn = true;
        report.remove_applied = remove_layer(&mut child, rng);
    }
    if rng.random_bool(rates.change_layer) {
        report.change_drawn = true;
        report.change_applied = change_layer(&mut child, ranges, rng);
    }
    (child, report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MutationFrequencies {
    pub add_layer: f64,
    pub remove_layer: f64,
    pub change_layer: f64,
    pub trials: usize,
}

/// Fraction of trials in which each mutation was drawn, each trial on a fresh minimal genome.
pub fn mutation_rate_statistics<R: Rng + ?Sized>(
    rates: &MutationRates,
    trials: usize,
    rng: &mut R,
) -> MutationFrequencies {
    let ranges = GeneRanges::default();
    let innovations = InnovationCounter::default();
    let mut counts = [0usize; 3];
    for i in 0..trials {
        let role = if i % 2 == 0 {
            Role::Discriminator
        } else {
            Role::Generator
        };
        let genome = new_minimal_genome(role, crate::genome::DEFAULT_MAX_LEN, &ranges, &innovations, rng);
        let (_, report) = mutate(&genome, rates, &ranges, &innovations, rng);
        counts[0] += report.add_drawn as usize;
        counts[1] += report.remove_drawn as usize;
        counts[2] += report.change_drawn as usize;
    }
    let freq = |c: usize| if trials == 0 { 0.0 } else { c as f64 / trials as f64 };
    MutationFrequencies {
        add_layer: freq(counts[0]),
        remove_layer: freq(counts[1]),
        change_layer: freq(counts[2]),
        trials,
    }
}

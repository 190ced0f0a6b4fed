//! Layer-level genotype: genes, genomes, validity rules and genome distance.

mod shape;
mod text;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

pub use shape::{infer_shapes, LayerOp, LayerPlan, LayerSource, Shape, ShapePlan};
pub use text::{parse_genome, write_genome};

pub type InnovationId = u64;

/// Default genome length limit.
pub const DEFAULT_MAX_LEN: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActivationKind {
    ReLU,
    LeakyReLU,
    ELU,
    Sigmoid,
    Tanh,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 5] = [
        ActivationKind::ReLU,
        ActivationKind::LeakyReLU,
        ActivationKind::ELU,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
    ];

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.random_range(0..Self::ALL.len())]
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::ReLU => "relu",
            ActivationKind::LeakyReLU => "leaky_relu",
            ActivationKind::ELU => "elu",
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneKind {
    Linear { out_features: u32 },
    Conv { out_channels: u32 },
    TransposeConv { out_channels: u32 },
}

impl GeneKind {
    pub fn is_linear(&self) -> bool {
        matches!(self, GeneKind::Linear { .. })
    }

    /// The size attribute subject to mutation.
    pub fn size(&self) -> u32 {
        match *self {
            GeneKind::Linear { out_features } => out_features,
            GeneKind::Conv { out_channels } | GeneKind::TransposeConv { out_channels } => {
                out_channels
            }
        }
    }

    pub fn with_size(&self, size: u32) -> GeneKind {
        match self {
            GeneKind::Linear { .. } => GeneKind::Linear { out_features: size },
            GeneKind::Conv { .. } => GeneKind::Conv { out_channels: size },
            GeneKind::TransposeConv { .. } => GeneKind::TransposeConv { out_channels: size },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GeneKind::Linear { .. } => "linear",
            GeneKind::Conv { .. } => "conv",
            GeneKind::TransposeConv { .. } => "transpose_conv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Gene {
    pub innovation_id: InnovationId,
    pub kind: GeneKind,
    pub activation: ActivationKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Discriminator,
    Generator,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Discriminator => "discriminator",
            Role::Generator => "generator",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "discriminator" => Some(Role::Discriminator),
            "generator" => Some(Role::Generator),
            _ => None,
        }
    }

    /// The spatial gene kind this role may carry, with a placeholder size.
    pub fn spatial_kind(self, size: u32) -> GeneKind {
        match self {
            Role::Discriminator => GeneKind::Conv { out_channels: size },
            Role::Generator => GeneKind::TransposeConv { out_channels: size },
        }
    }
}

/// Inclusive ranges for the mutable size attributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneRanges {
    pub features: (u32, u32),
    pub channels: (u32, u32),
}

impl Default for GeneRanges {
    fn default() -> Self {
        GeneRanges {
            features: (32, 1024),
            channels: (16, 128),
        }
    }
}

impl GeneRanges {
    pub fn draw_size<R: Rng + ?Sized>(&self, kind: &GeneKind, rng: &mut R) -> u32 {
        let (lo, hi) = match kind {
            GeneKind::Linear { .. } => self.features,
            _ => self.channels,
        };
        rng.random_range(lo..=hi)
    }
}

/// Monotonic source of innovation ids, shared by everything that creates genes in a run.
#[derive(Debug)]
pub struct InnovationCounter(AtomicU64);

impl InnovationCounter {
    pub fn new(next: InnovationId) -> Self {
        InnovationCounter(AtomicU64::new(next))
    }

    pub fn next_id(&self) -> InnovationId {
        self.0.fetch_add(1, Ordering::Relaxed)
    }

    /// The id the next call to [`next_id`](Self::next_id) will return.
    pub fn peek(&self) -> InnovationId {
        self.0.load(Ordering::Relaxed)
    }
}

impl Default for InnovationCounter {
    fn default() -> Self {
        InnovationCounter::new(1)
    }
}

impl Gene {
    /// Creates a gene of the given kind with a random size and activation and a fresh id.
    pub fn random<R: Rng + ?Sized>(
        kind: GeneKind,
        ranges: &GeneRanges,
        innovations: &InnovationCounter,
        rng: &mut R,
    ) -> Self {
        let size = ranges.draw_size(&kind, rng);
        Gene {
            innovation_id: innovations.next_id(),
            kind: kind.with_size(size),
            activation: ActivationKind::random(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Genome {
    pub role: Role,
    pub genes: Vec<Gene>,
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Empty,
    TooLong { len: usize, max_len: usize },
    ForbiddenKind { index: usize, kind: &'static str },
    Ordering { index: usize },
    ZeroSize { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "genome has no genes"),
            Violation::TooLong { len, max_len } => {
                write!(f, "genome has {len} genes, limit is {max_len}")
            }
            Violation::ForbiddenKind { index, kind } => {
                write!(f, "gene {index}: {kind} not allowed for this role")
            }
            Violation::Ordering { index } => write!(f, "gene {index} is out of section order"),
            Violation::ZeroSize { index } => write!(f, "gene {index} has zero size"),
        }
    }
}

impl Genome {
    /// Number of genes in the leading section (conv for discriminators, linear for generators).
    pub fn leading_section_len(&self) -> usize {
        self.genes
            .iter()
            .take_while(|g| self.is_leading(&g.kind))
            .count()
    }

    fn is_leading(&self, kind: &GeneKind) -> bool {
        match self.role {
            Role::Discriminator => matches!(kind, GeneKind::Conv { .. }),
            Role::Generator => kind.is_linear(),
        }
    }

    pub fn count_linear(&self) -> usize {
        self.genes.iter().filter(|g| g.kind.is_linear()).count()
    }

    pub fn count_spatial(&self) -> usize {
        self.genes.len() - self.count_linear()
    }

    pub fn innovation_ids(&self) -> BTreeSet<InnovationId> {
        self.genes.iter().map(|g| g.innovation_id).collect()
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }
}

/// A one-gene genome: a single randomly sized linear layer with a random activation.
pub fn new_minimal_genome<R: Rng + ?Sized>(
    role: Role,
    max_len: usize,
    ranges: &GeneRanges,
    innovations: &InnovationCounter,
    rng: &mut R,
) -> Genome {
    let gene = Gene::random(
        GeneKind::Linear { out_features: 0 },
        ranges,
        innovations,
        rng,
    );
    Genome {
        role,
        genes: vec![gene],
        max_len,
    }
}

/// Checks every genome invariant and reports all violations found.
pub fn validate(genome: &Genome) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    if genome.genes.is_empty() {
        violations.push(Violation::Empty);
    }
    if genome.genes.len() > genome.max_len {
        violations.push(Violation::TooLong {
            len: genome.genes.len(),
            max_len: genome.max_len,
        });
    }
    let mut left_leading = false;
    for (index, gene) in genome.genes.iter().enumerate() {
        let forbidden = matches!(
            (genome.role, &gene.kind),
            (Role::Discriminator, GeneKind::TransposeConv { .. })
                | (Role::Generator, GeneKind::Conv { .. })
        );
        if forbidden {
            violations.push(Violation::ForbiddenKind {
                index,
                kind: gene.kind.name(),
            });
            continue;
        }
        if gene.kind.size() == 0 {
            violations.push(Violation::ZeroSize { index });
        }
        if genome.is_leading(&gene.kind) {
            if left_leading {
                violations.push(Violation::Ordering { index });
            }
        } else {
            left_leading = true;
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

/// Number of innovation ids present in exactly one of the two genomes.
pub fn distance(a: &Genome, b: &Genome) -> usize {
    let ids_a = a.innovation_ids();
    let ids_b = b.innovation_ids();
    ids_a.symmetric_difference(&ids_b).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn gene(id: u64, kind: GeneKind) -> Gene {
        Gene {
            innovation_id: id,
            kind,
            activation: ActivationKind::ReLU,
        }
    }

    fn genome_with_ids(ids: &[u64]) -> Genome {
        Genome {
            role: Role::Discriminator,
            genes: ids
                .iter()
                .map(|&id| gene(id, GeneKind::Linear { out_features: 32 }))
                .collect(),
            max_len: 6,
        }
    }

    #[test]
    fn minimal_genomes_are_single_linear() {
        let counter = InnovationCounter::default();
        for role in [Role::Discriminator, Role::Generator] {
            let g = new_minimal_genome(
                role,
                6,
                &GeneRanges::default(),
                &counter,
                &mut rng_from_seed(1),
            );
            assert_eq!(g.genes.len(), 1);
            assert!(g.genes[0].kind.is_linear());
            assert!((32..=1024).contains(&g.genes[0].kind.size()));
            assert!(validate(&g).is_ok());
        }
    }

    #[test]
    fn distinct_calls_get_distinct_ids() {
        let counter = InnovationCounter::default();
        let ranges = GeneRanges::default();
        let a = new_minimal_genome(Role::Generator, 6, &ranges, &counter, &mut rng_from_seed(1));
        let b = new_minimal_genome(Role::Generator, 6, &ranges, &counter, &mut rng_from_seed(2));
        assert_ne!(a.genes[0].innovation_id, b.genes[0].innovation_id);
    }

    #[test]
    fn distance_examples() {
        let a = genome_with_ids(&[1, 2, 3]);
        assert_eq!(distance(&a, &a), 0);
        assert_eq!(distance(&a, &genome_with_ids(&[1, 2, 4])), 2);
        assert_eq!(distance(&genome_with_ids(&[1]), &genome_with_ids(&[2, 3])), 3);
    }

    #[test]
    fn distance_is_a_metric_on_small_sets() {
        // every subset of {1..5} except the empty set
        let sets: Vec<Vec<u64>> = (1u32..32)
            .map(|mask| (0..5).filter(|b| mask & (1 << b) != 0).map(|b| b as u64 + 1).collect())
            .collect();
        let genomes: Vec<Genome> = sets.iter().map(|s| genome_with_ids(s)).collect();
        for a in &genomes {
            assert_eq!(distance(a, a), 0);
            for b in &genomes {
                let ab = distance(a, b);
                assert_eq!(ab, distance(b, a));
                if a != b {
                    assert!(ab > 0);
                }
                for c in &genomes {
                    assert!(distance(a, c) <= ab + distance(b, c));
                }
            }
        }
    }

    #[test]
    fn ordering_violation_reported() {
        let g = Genome {
            role: Role::Discriminator,
            genes: vec![
                gene(1, GeneKind::Linear { out_features: 32 }),
                gene(2, GeneKind::Conv { out_channels: 16 }),
            ],
            max_len: 6,
        };
        assert_eq!(validate(&g), Err(vec![Violation::Ordering { index: 1 }]));
    }

    #[test]
    fn generator_ordering_and_kinds() {
        let ok = Genome {
            role: Role::Generator,
            genes: vec![
                gene(1, GeneKind::Linear { out_features: 32 }),
                gene(2, GeneKind::TransposeConv { out_channels: 16 }),
            ],
            max_len: 6,
        };
        assert!(validate(&ok).is_ok());
        let bad = Genome {
            role: Role::Generator,
            genes: vec![
                gene(2, GeneKind::TransposeConv { out_channels: 16 }),
                gene(1, GeneKind::Linear { out_features: 32 }),
                gene(3, GeneKind::Conv { out_channels: 16 }),
            ],
            max_len: 6,
        };
        assert_eq!(
            validate(&bad),
            Err(vec![
                Violation::Ordering { index: 1 },
                Violation::ForbiddenKind {
                    index: 2,
                    kind: "conv"
                },
            ])
        );
    }

    #[test]
    fn length_violation_reported_alongside_others() {
        let mut g = genome_with_ids(&[1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(
            validate(&g),
            Err(vec![Violation::TooLong { len: 7, max_len: 6 }])
        );
        g.genes.clear();
        assert_eq!(validate(&g), Err(vec![Violation::Empty]));
    }
}

//! Mutation, speciation and selection for one subpopulation.

mod mutation;
mod selection;
mod speciation;

use std::cmp::Ordering;

pub use mutation::{mutate, mutation_rate_statistics, MutationFrequencies, MutationRates, MutationReport};
pub use selection::{
    allocate_offspring, next_generation, rank_population, tournament_select, BreedingConfig,
    Offspring,
};
pub use speciation::{speciate, Species, SpeciationState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Orientation {
    LowerIsBetter,
    HigherIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessRecord {
    pub raw: f64,
    pub orientation: Orientation,
}

impl FitnessRecord {
    pub fn new(raw: f64, orientation: Orientation) -> Self {
        FitnessRecord { raw, orientation }
    }

    /// `Less` when `self` is better than `other`. NaN sorts last.
    pub fn compare(&self, other: &FitnessRecord) -> Ordering {
        match (self.raw.is_nan(), other.raw.is_nan()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Greater,
            (false, true) => return Ordering::Less,
            _ => {}
        }
        match self.orientation {
            Orientation::LowerIsBetter => self.raw.total_cmp(&other.raw),
            Orientation::HigherIsBetter => other.raw.total_cmp(&self.raw),
        }
    }
}

use crate::genome::{distance, Genome};

#[derive(Debug, Clone, PartialEq)]
pub struct Species {
    pub representative: Genome,
    pub members: Vec<u64>,
    /// Mean population-wide rank of the members; filled in during reproduction.
    pub mean_adjusted_fitness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeciationState {
    pub threshold: f64,
    pub target_species: usize,
    pub min_threshold: f64,
}

pub const THRESHOLD_GROWTH: f64 = 1.1;
pub const THRESHOLD_DECAY: f64 = 0.9;

impl Default for SpeciationState {
    fn default() -> Self {
        SpeciationState {
            threshold: 1.0,
            target_species: 3,
            min_threshold: 0.5,
        }
    }
}

impl SpeciationState {
    pub fn new(target_species: usize) -> Self {
        SpeciationState {
            target_species,
            ..Self::default()
        }
    }

    fn adjusted(&self, species: usize) -> SpeciationState {
        let threshold = match species.cmp(&self.target_species) {
            std::cmp::Ordering::Greater => self.threshold * THRESHOLD_GROWTH,
            std::cmp::Ordering::Less => (self.threshold * THRESHOLD_DECAY).max(self.min_threshold),
            std::cmp::Ordering::Equal => self.threshold,
        };
        SpeciationState { threshold, ..*self }
    }
}

/// Greedy clustering in input order: each individual joins the first species whose
/// representative is within the threshold, otherwise founds a new one. The
/// threshold is then nudged toward the target species count.
pub fn speciate(
    individuals: &[(u64, &Genome)],
    state: &SpeciationState,
) -> (Vec<Species>, SpeciationState) {
    let mut species: Vec<Species> = Vec::new();
    for &(id, genome) in individuals {
        let home = species
            .iter_mut()
            .find(|s| distance(&s.representative, genome) as f64 <= state.threshold);
        match home {
            Some(s) => s.members.push(id),
            None => species.push(Species {
                representative: genome.clone(),
                members: vec![id],
                mean_adjusted_fitness: 0.0,
            }),
        }
    }
    let next = state.adjusted(species.len());
    (species, next)
}

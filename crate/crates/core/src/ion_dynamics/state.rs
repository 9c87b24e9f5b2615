use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trap_model::{IonSpecies, TrapGeometry};
use crate::Vec3;

/// Phase-space state of the cloud plus clock and random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct CloudState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub species_index: Vec<u32>,
    pub species: Vec<IonSpecies>,
    /// s
    pub time: f64,
    pub rng: ChaCha8Rng,
}

impl CloudState {
    pub fn new(species: Vec<IonSpecies>, seed: u64) -> Self {
        Self::with_rng(species, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn with_rng(species: Vec<IonSpecies>, rng: ChaCha8Rng) -> Self {
        Self {
            positions: Vec::new(),
            velocities: Vec::new(),
            species_index: Vec::new(),
            species,
            time: 0.0,
            rng,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec3, velocity: Vec3, species: u32) {
        self.positions.push(position);
        self.velocities.push(velocity);
        self.species_index.push(species);
    }

    pub fn species_of(&self, ion: usize) -> &IonSpecies {
        &self.species[self.species_index[ion] as usize]
    }

    pub fn mass_of(&self, ion: usize) -> f64 {
        self.species_of(ion).mass
    }

    /// Number of ions per species-table entry.
    pub fn census(&self) -> Vec<usize> {
        let mut counts = vec![0; self.species.len()];
        for &s in &self.species_index {
            counts[s as usize] += 1;
        }
        counts
    }

    pub fn count_bound(&self, geometry: &TrapGeometry) -> usize {
        self.positions
            .iter()
            .filter(|p| geometry.contains(p))
            .count()
    }

    /// Drops ions outside the electrode box, keeping the order of the rest.
    /// Returns the number removed.
    pub fn remove_unbound(&mut self, geometry: &TrapGeometry) -> usize {
        let before = self.len();
        if self.positions.iter().all(|p| geometry.contains(p)) {
            return 0;
        }
        let keep: Vec<bool> = self
            .positions
            .iter()
            .map(|p| geometry.contains(p))
            .collect();
        let mut k = keep.iter();
        self.positions.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.velocities.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.species_index.retain(|_| *k.next().unwrap());
        before - self.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if self.velocities.len() != n || self.species_index.len() != n {
            return Err(Error::invalid("per-ion arrays have different lengths"));
        }
        if self
            .species_index
            .iter()
            .any(|&s| s as usize >= self.species.len())
        {
            return Err(Error::invalid("species index out of range"));
        }
        if self
            .positions
            .iter()
            .chain(&self.velocities)
            .flatten()
            .any(|c| !c.is_finite())
        {
            return Err(Error::invalid("non-finite position or velocity"));
        }
        for s in &self.species {
            s.validate()?;
        }
        Ok(())
    }
}

//! Versioned little-endian binary snapshot of a `CloudState`.
//!
//! Layout: magic `PTRAPCK\0`, u32 version, species table, ion arrays,
//! time, then the ChaCha generator as (seed, stream, word position).
//! Floats are stored as raw IEEE-754 bits, so a restored state continues
//! bit-identically.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::CloudState;
use crate::error::{Error, Result};
use crate::trap_model::IonSpecies;

const MAGIC: &[u8; 8] = b"PTRAPCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(state: &CloudState, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u32::<LittleEndian>(state.species.len() as u32)?;
    for s in &state.species {
        let name = s.name.as_bytes();
        w.write_u32::<LittleEndian>(name.len() as u32)?;
        w.write_all(name)?;
        w.write_f64::<LittleEndian>(s.mass)?;
        w.write_f64::<LittleEndian>(s.charge)?;
        w.write_u8(s.laser_cooled as u8)?;
    }
    w.write_u64::<LittleEndian>(state.len() as u64)?;
    for i in 0..state.len() {
        for c in state.positions[i].iter().chain(&state.velocities[i]) {
            w.write_f64::<LittleEndian>(*c)?;
        }
        w.write_u32::<LittleEndian>(state.species_index[i])?;
    }
    w.write_f64::<LittleEndian>(state.time)?;
    w.write_all(&state.rng.get_seed())?;
    w.write_u64::<LittleEndian>(state.rng.get_stream())?;
    w.write_u128::<LittleEndian>(state.rng.get_word_pos())?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CloudState> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let n_species = r.read_u32::<LittleEndian>()? as usize;
    let mut species = Vec::with_capacity(n_species);
    for _ in 0..n_species {
        let len = r.read_u32::<LittleEndian>()? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mass = r.read_f64::<LittleEndian>()?;
        let charge = r.read_f64::<LittleEndian>()?;
        let laser_cooled = r.read_u8()? != 0;
        species.push(IonSpecies {
            name,
            mass,
            charge,
            laser_cooled,
        });
    }
    let n = r.read_u64::<LittleEndian>()? as usize;
    let mut state = CloudState::new(species, 0);
    for _ in 0..n {
        let mut c = [0.0; 6];
        for x in c.iter_mut() {
            *x = r.read_f64::<LittleEndian>()?;
        }
        let s = r.read_u32::<LittleEndian>()?;
        state.push([c[0], c[1], c[2]], [c[3], c[4], c[5]], s);
    }
    state.time = r.read_f64::<LittleEndian>()?;
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(r.read_u64::<LittleEndian>()?);
    rng.set_word_pos(r.read_u128::<LittleEndian>()?);
    state.rng = rng;
    state
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(state)
}

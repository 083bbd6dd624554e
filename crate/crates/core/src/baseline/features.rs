//! Circular count fingerprints.
//!
//! Radius-0 identifiers hash the same atom invariant that seeds canonical
//! ranking. Each further round hashes an atom's previous identifier with the
//! sorted (bond, neighbour identifier) pairs. Every identifier of every
//! atom and radius is folded into `n_bits` buckets by multiply-shift with
//! `0x9E3779B97F4A7C15`; collisions simply add up.

use serde::{Deserialize, Serialize};

use crate::molparse::{parse_smiles, BondOrder, MolGraph, SmilesError};
use crate::rng::splitmix64;
use crate::standardize::atom_invariant;

pub const FOLD_MULTIPLIER: u64 = 0x9E37_79B9_7F4A_7C15;
pub const MAX_RADIUS: u8 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub counts: Vec<u32>,
    pub radius: u8,
}

impl FeatureVector {
    pub fn n_bits(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

fn mix(values: impl IntoIterator<Item = u64>) -> u64 {
    values.into_iter().fold(0x5EED, |h, v| splitmix64(h ^ v))
}

fn bond_code(order: BondOrder) -> u64 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Bucket of identifier `id` among `n_bits` (a power of two).
pub fn fold_id(id: u64, n_bits: usize) -> usize {
    let bits = n_bits.trailing_zeros();
    if bits == 0 {
        return 0;
    }
    (id.wrapping_mul(FOLD_MULTIPLIER) >> (64 - bits)) as usize
}

/// Panics unless `n_bits` is a power of two and `radius <= 3`.
pub fn featurize(g: &MolGraph, radius: u8, n_bits: usize) -> FeatureVector {
    assert!(n_bits.is_power_of_two(), "n_bits must be a power of two");
    assert!(radius <= MAX_RADIUS, "radius must be at most {MAX_RADIUS}");
    let n = g.atom_count();
    let mut counts = vec![0u32; n_bits];
    let mut ids: Vec<u64> = (0..n)
        .map(|i| mix(atom_invariant(g, i).iter().map(|&x| x as u64)))
        .collect();
    for &id in &ids {
        counts[fold_id(id, n_bits)] += 1;
    }
    for r in 1..=radius {
        ids = (0..n)
            .map(|i| {
                let mut env: Vec<(u64, u64)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(j, b)| (bond_code(g.bonds()[b].order), ids[j]))
                    .collect();
                env.sort_unstable();
                mix(std::iter::once(u64::from(r))
                    .chain(std::iter::once(ids[i]))
                    .chain(env.into_iter().flat_map(|(b, id)| [b, id])))
            })
            .collect();
        for &id in &ids {
            counts[fold_id(id, n_bits)] += 1;
        }
    }
    FeatureVector { counts, radius }
}

pub fn featurize_smiles(
    smiles: &str,
    radius: u8,
    n_bits: usize,
) -> Result<FeatureVector, SmilesError> {
    Ok(featurize(&parse_smiles(smiles)?, radius, n_bits))
}

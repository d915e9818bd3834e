//! ECFP-style circular fingerprints.
//!
//! Atom invariants are the usual ECFP set: atomic number, heavy degree,
//! total hydrogen count, formal charge, ring membership and aromaticity.
//! Each iteration rehashes an atom's identifier together with the sorted
//! `(bond order, neighbor identifier)` pairs. An environment is dropped when
//! its covered atom set was already produced by an earlier iteration, or by
//! an atom with a smaller identifier in the same iteration. Surviving
//! identifiers are folded into `width` bits.
//!
//! The hash is a fixed SplitMix64-based combiner over integer tuples, so
//! fingerprints are bit-identical across runs and platforms.

use std::collections::HashSet;
use std::fmt;

use thiserror::Error;

use super::smiles::Molecule;
use crate::rng::splitmix64;

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_WIDTH: usize = 1024;

const HASH_SEED: u64 = 0x243F_6A88_85A3_08D3;

/// Hash an integer tuple.
pub fn hash_tuple(values: &[u64]) -> u64 {
    values.iter().fold(HASH_SEED ^ values.len() as u64, |h, &v| {
        splitmix64(h.rotate_left(23) ^ splitmix64(v))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FingerprintError {
    #[error("fingerprint widths differ: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("width must be a power of two >= 64, got {0}")]
    InvalidWidth(usize),
}

/// A fixed-width bit set.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Fingerprint {
    width: usize,
    words: Vec<u64>,
}

impl Fingerprint {
    pub fn new(width: usize) -> Result<Self, FingerprintError> {
        if width < 64 || !width.is_power_of_two() {
            return Err(FingerprintError::InvalidWidth(width));
        }
        Ok(Fingerprint {
            width,
            words: vec![0; width / 64],
        })
    }

    pub fn from_bits(width: usize, bits: impl IntoIterator<Item = usize>) -> Result<Self, FingerprintError> {
        let mut fp = Fingerprint::new(width)?;
        for b in bits {
            assert!(b < width, "bit {b} out of range for width {width}");
            fp.set(b);
        }
        Ok(fp)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn set(&mut self, bit: usize) {
        self.words[bit / 64] |= 1u64 << (bit % 64);
    }

    pub fn contains(&self, bit: usize) -> bool {
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Set bit indices in increasing order.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    return None;
                }
                let tz = w.trailing_zeros() as usize;
                w &= w - 1;
                Some(i * 64 + tz)
            })
        })
    }

    pub fn is_subset(&self, other: &Fingerprint) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    /// Lowercase hex, most significant word last.
    pub fn to_hex(&self) -> String {
        self.words.iter().map(|w| format!("{w:016x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Option<Fingerprint> {
        if hex.len() % 16 != 0 || !hex.is_ascii() {
            return None;
        }
        let words = hex
            .as_bytes()
            .chunks(16)
            .map(|c| u64::from_str_radix(std::str::from_utf8(c).ok()?, 16).ok())
            .collect::<Option<Vec<u64>>>()?;
        let width = words.len() * 64;
        Fingerprint::new(width).ok()?;
        Some(Fingerprint { width, words })
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({}; ", self.width)?;
        f.debug_set().entries(self.ones()).finish()?;
        f.write_str(")")
    }
}

fn initial_invariant(mol: &Molecule, atom: usize) -> u64 {
    let a = &mol.atoms()[atom];
    let heavy_degree = mol
        .neighbors(atom)
        .iter()
        .filter(|(n, _)| mol.atoms()[*n].element.atomic_number() != 1)
        .count();
    hash_tuple(&[
        u64::from(a.element.atomic_number()),
        heavy_degree as u64,
        u64::from(a.total_h()),
        (i64::from(a.charge) + 128) as u64,
        u64::from(mol.in_ring(atom)),
        u64::from(a.aromatic),
    ])
}

/// Circular fingerprint of `mol` folded to `width` bits.
pub fn circular_fingerprint(mol: &Molecule, radius: usize, width: usize) -> Result<Fingerprint, FingerprintError> {
    let mut fp = Fingerprint::new(width)?;
    for id in environment_identifiers(mol, radius) {
        fp.set((id & (width as u64 - 1)) as usize);
    }
    Ok(fp)
}

/// Unfolded identifiers of all surviving environments up to `radius`.
pub fn environment_identifiers(mol: &Molecule, radius: usize) -> Vec<u64> {
    let n = mol.atom_count();
    let words = n.div_ceil(64).max(1);
    let mut ids: Vec<u64> = (0..n).map(|i| initial_invariant(mol, i)).collect();
    let mut covered: Vec<Vec<u64>> = (0..n)
        .map(|i| {
            let mut set = vec![0u64; words];
            set[i / 64] |= 1 << (i % 64);
            set
        })
        .collect();

    let mut seen: HashSet<Vec<u64>> = covered.iter().cloned().collect();
    let mut out = ids.clone();

    for iteration in 1..=radius {
        let mut next_ids = Vec::with_capacity(n);
        let mut next_cov = Vec::with_capacity(n);
        for i in 0..n {
            let mut pairs: Vec<(u64, u64)> = mol
                .neighbors(i)
                .iter()
                .map(|&(j, order)| (order.code(), ids[j]))
                .collect();
            pairs.sort_unstable();
            let mut tuple = Vec::with_capacity(2 + 2 * pairs.len());
            tuple.push(iteration as u64);
            tuple.push(ids[i]);
            for (o, id) in pairs {
                tuple.push(o);
                tuple.push(id);
            }
            next_ids.push(hash_tuple(&tuple));

            let mut cov = covered[i].clone();
            for &(j, _) in mol.neighbors(i) {
                for (w, x) in cov.iter_mut().zip(&covered[j]) {
                    *w |= x;
                }
            }
            next_cov.push(cov);
        }

        // Same-iteration duplicates keep the smallest identifier, which makes
        // the surviving set independent of atom numbering.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| next_ids[i]);
        let mut fresh = Vec::new();
        for i in order {
            if !seen.contains(&next_cov[i]) && !fresh.contains(&next_cov[i]) {
                fresh.push(next_cov[i].clone());
                out.push(next_ids[i]);
            }
        }
        seen.extend(fresh);
        ids = next_ids;
        covered = next_cov;
    }
    out
}

/// Intersection and union sizes of two fingerprints.
pub fn tanimoto_counts(a: &Fingerprint, b: &Fingerprint) -> Result<(u32, u32), FingerprintError> {
    if a.width != b.width {
        return Err(FingerprintError::WidthMismatch(a.width, b.width));
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .fold((0, 0), |(i, u), (x, y)| (i + (x & y).count_ones(), u + (x | y).count_ones())))
}

/// |a ∩ b| / |a ∪ b|; two empty fingerprints have similarity 0.
pub fn tanimoto(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    let (inter, union) = tanimoto_counts(a, b)?;
    Ok(if union == 0 {
        0.0
    } else {
        f64::from(inter) / f64::from(union)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_smiles;

    fn fp(s: &str) -> Fingerprint {
        circular_fingerprint(&parse_smiles(s).unwrap(), DEFAULT_RADIUS, DEFAULT_WIDTH).unwrap()
    }

    #[test]
    fn ethanol_written_both_ways() {
        assert_eq!(fp("CCO"), fp("OCC"));
    }

    #[test]
    fn single_atom_has_one_environment() {
        // radius 0 covers {C}; radius 1 and 2 cover the same set and are dropped
        let mol = parse_smiles("C").unwrap();
        assert_eq!(environment_identifiers(&mol, 2).len(), 1);
        assert_eq!(fp("C").count_ones(), 1);
    }

    #[test]
    fn ethane_environment_count() {
        // two identical radius-0 atoms share an identifier; at radius 1 both
        // atoms cover {0,1}, so one survives; radius 2 adds nothing
        let mol = parse_smiles("CC").unwrap();
        let ids = environment_identifiers(&mol, 2);
        assert_eq!(ids.len(), 3);
        assert_eq!(ids[0], ids[1]);
        assert_eq!(fp("CC").count_ones(), 2);
    }

    #[test]
    fn fingerprint_is_stable() {
        // Frozen so that changes to hashing are caught.
        let a = fp("c1ccccc1O");
        let b = fp("c1ccccc1O");
        assert_eq!(a, b);
        assert_eq!(a.to_hex(), Fingerprint::from_hex(&a.to_hex()).unwrap().to_hex());
    }

    #[test]
    fn distinguishes_isomers() {
        assert_ne!(fp("CCCO"), fp("CC(C)O"));
        assert_ne!(fp("C=CC"), fp("CCC"));
    }

    #[test]
    fn tanimoto_examples() {
        let a = Fingerprint::from_bits(64, [1, 2, 3]).unwrap();
        let b = Fingerprint::from_bits(64, [2, 3, 4]).unwrap();
        assert_eq!(tanimoto(&a, &b).unwrap(), 0.5);
        assert_eq!(tanimoto(&a, &a).unwrap(), 1.0);
        let c = Fingerprint::from_bits(64, [10, 11]).unwrap();
        assert_eq!(tanimoto(&a, &c).unwrap(), 0.0);
        let empty = Fingerprint::new(64).unwrap();
        assert_eq!(tanimoto(&empty, &empty).unwrap(), 0.0);
        let wide = Fingerprint::new(128).unwrap();
        assert_eq!(
            tanimoto(&a, &wide),
            Err(FingerprintError::WidthMismatch(64, 128))
        );
    }

    #[test]
    fn invalid_widths() {
        assert!(Fingerprint::new(32).is_err());
        assert!(Fingerprint::new(1000).is_err());
        assert!(Fingerprint::new(2048).is_ok());
    }

    #[test]
    fn ones_iterates_in_order() {
        let f = Fingerprint::from_bits(128, [127, 0, 64, 5]).unwrap();
        assert_eq!(f.ones().collect::<Vec<_>>(), vec![0, 5, 64, 127]);
        assert_eq!(f.count_ones(), 4);
    }
}

//! Molecule parsing and circular fingerprints.

mod element;
mod fingerprint;
mod smiles;
mod writer;

pub use element::Element;
pub use fingerprint::{
    circular_fingerprint, environment_identifiers, hash_tuple, tanimoto, tanimoto_counts, Fingerprint,
    FingerprintError, DEFAULT_RADIUS, DEFAULT_WIDTH,
};
pub use smiles::{parse_smiles, parse_smiles_bytes, Atom, Bond, BondOrder, Molecule, SmilesError, SmilesErrorKind};
pub use writer::write_smiles_shuffled;

/// Fingerprint settings shared by ingestion and analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FingerprintParams {
    pub radius: usize,
    pub width: usize,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        FingerprintParams {
            radius: DEFAULT_RADIUS,
            width: DEFAULT_WIDTH,
        }
    }
}

impl FingerprintParams {
    pub fn fingerprint(&self, mol: &Molecule) -> Result<Fingerprint, FingerprintError> {
        circular_fingerprint(mol, self.radius, self.width)
    }
}

//! Parser for a practical SMILES subset.
//!
//! Supported: organic-subset atoms (`B C N O P S F Cl Br I` and aromatic
//! `b c n o p s`), bracket atoms with isotope, chirality, explicit hydrogen
//! count, charge and atom class, bond symbols `- = # :`, branches, ring
//! closures (`1`-`9` and `%nn`) and `.` component separators. Directional
//! bonds `/` `\` are read as single bonds; chirality and isotopes are parsed
//! and dropped.

use std::collections::BTreeMap;

use thiserror::Error;

use super::element::Element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum (aromatic bonds count as 1, the
    /// extra pi electron is accounted for per atom).
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    /// Stable integer code used by fingerprint hashing.
    pub fn code(self) -> u64 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub element: Element,
    pub charge: i8,
    /// Hydrogens written inside brackets.
    pub explicit_h: u8,
    /// Hydrogens implied by the valence model (always 0 for bracket atoms).
    pub implicit_h: u8,
    pub aromatic: bool,
    pub bracket: bool,
}

impl Atom {
    pub fn total_h(&self) -> u8 {
        self.explicit_h + self.implicit_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// A parsed molecular graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    adjacency: Vec<Vec<(usize, BondOrder)>>,
    ring_atoms: Vec<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty input")]
    EmptyInput,
    #[error("ring closure {0} was never closed")]
    UnclosedRing(u32),
    #[error("unbalanced parenthesis")]
    UnbalancedParenthesis,
    #[error("unknown atom symbol")]
    UnknownAtomSymbol,
    #[error("valence exceeded")]
    ValenceViolation,
    #[error("unexpected character {0:#04x}")]
    UnexpectedCharacter(u8),
    #[error("malformed bracket atom")]
    InvalidBracketAtom,
    #[error("bond symbol without an atom on both sides")]
    DanglingBond,
    #[error("empty branch")]
    EmptyBranch,
    #[error("atom bonded to itself")]
    SelfBond,
    #[error("duplicate bond between the same atoms")]
    DuplicateBond,
    #[error("ring closure bond symbols disagree")]
    RingBondMismatch,
}

/// A SMILES parse failure at a byte offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{kind} at byte {offset}")]
pub struct SmilesError {
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

impl SmilesError {
    fn new(offset: usize, kind: SmilesErrorKind) -> Self {
        SmilesError { offset, kind }
    }
}

type Result<T> = std::result::Result<T, SmilesError>;

impl Molecule {
    /// Build a molecule from atoms and bonds, validating the graph and
    /// computing implicit hydrogens for non-bracket atoms.
    pub fn new(atoms: Vec<Atom>, bonds: Vec<Bond>) -> std::result::Result<Self, SmilesErrorKind> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for bond in &bonds {
            if bond.a >= atoms.len() || bond.b >= atoms.len() {
                return Err(SmilesErrorKind::DanglingBond);
            }
            if bond.a == bond.b {
                return Err(SmilesErrorKind::SelfBond);
            }
            if adjacency[bond.a].iter().any(|&(n, _)| n == bond.b) {
                return Err(SmilesErrorKind::DuplicateBond);
            }
            adjacency[bond.a].push((bond.b, bond.order));
            adjacency[bond.b].push((bond.a, bond.order));
        }
        let mut mol = Molecule {
            atoms,
            bonds,
            adjacency,
            ring_atoms: Vec::new(),
        };
        for i in 0..mol.atoms.len() {
            let h = mol.implicit_hydrogens(i).ok_or(SmilesErrorKind::ValenceViolation)?;
            mol.atoms[i].implicit_h = h;
        }
        mol.ring_atoms = mol.find_ring_atoms();
        Ok(mol)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn neighbors(&self, atom: usize) -> &[(usize, BondOrder)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn in_ring(&self, atom: usize) -> bool {
        self.ring_atoms[atom]
    }

    /// Relabel atoms so that old atom `i` becomes atom `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Molecule {
        assert_eq!(perm.len(), self.atoms.len());
        let mut atoms = self.atoms.clone();
        for (old, &new) in perm.iter().enumerate() {
            atoms[new] = self.atoms[old].clone();
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        Molecule::new(atoms, bonds).expect("permutation preserves validity")
    }

    fn implicit_hydrogens(&self, i: usize) -> Option<u8> {
        let atom = &self.atoms[i];
        let bond_sum: u8 = self.adjacency[i].iter().map(|(_, o)| o.valence()).sum();
        if atom.bracket {
            return Some(0);
        }
        let valences = atom.element.default_valences()?;
        let max = *valences.last().unwrap();
        if atom.aromatic {
            let needed = bond_sum + 1;
            match valences.iter().find(|&&v| v >= needed) {
                Some(&v) => Some(v - needed),
                None if bond_sum <= max => Some(0),
                None => None,
            }
        } else {
            valences.iter().find(|&&v| v >= bond_sum).map(|&v| v - bond_sum)
        }
    }

    /// Atoms on at least one cycle: endpoints of any non-bridge bond.
    fn find_ring_atoms(&self) -> Vec<bool> {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut in_ring = vec![false; n];
        let mut timer = 0usize;
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            // Iterative Tarjan bridge search: (atom, parent, next neighbor index).
            let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            while let Some(&mut (u, parent, ref mut next)) = stack.last_mut() {
                if *next < self.adjacency[u].len() {
                    let v = self.adjacency[u][*next].0;
                    *next += 1;
                    if v == parent {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, u, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                    }
                } else {
                    stack.pop();
                    if parent != usize::MAX {
                        low[parent] = low[parent].min(low[u]);
                        if low[u] <= disc[parent] {
                            // parent-u is not a bridge
                            in_ring[u] = true;
                            in_ring[parent] = true;
                        }
                    }
                }
            }
        }
        in_ring
    }
}

/// Parse a SMILES string into a [`Molecule`].
pub fn parse_smiles(text: &str) -> Result<Molecule> {
    parse_smiles_bytes(text.as_bytes())
}

/// Byte-level entry point; any non-ASCII byte is a typed error.
pub fn parse_smiles_bytes(input: &[u8]) -> Result<Molecule> {
    Parser::new(input).parse()
}

struct RingOpen {
    atom: usize,
    bond: Option<BondOrder>,
    offset: usize,
}

struct Parser<'a> {
    input: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    atom_offsets: Vec<usize>,
    bonds: Vec<Bond>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(Option<usize>, usize, usize)>,
    rings: BTreeMap<u32, RingOpen>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a [u8]) -> Self {
        Parser {
            input,
            pos: 0,
            atoms: Vec::new(),
            atom_offsets: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            pending: None,
            branches: Vec::new(),
            rings: BTreeMap::new(),
        }
    }

    fn err<T>(&self, offset: usize, kind: SmilesErrorKind) -> Result<T> {
        Err(SmilesError::new(offset, kind))
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn parse(mut self) -> Result<Molecule> {
        if self.input.is_empty() {
            return self.err(0, SmilesErrorKind::EmptyInput);
        }
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return self.err(at, SmilesErrorKind::UnexpectedCharacter(c));
                    }
                    if self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    self.branches.push((self.prev, at, self.atoms.len()));
                    self.pos += 1;
                }
                b')' => {
                    let Some((prev, _, atoms_before)) = self.branches.pop() else {
                        return self.err(at, SmilesErrorKind::UnbalancedParenthesis);
                    };
                    if self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    if self.atoms.len() == atoms_before {
                        return self.err(at, SmilesErrorKind::EmptyBranch);
                    }
                    self.prev = prev;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    let order = match c {
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        b':' => BondOrder::Aromatic,
                        _ => BondOrder::Single,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'.' => {
                    if self.prev.is_none() || self.pending.is_some() {
                        return self.err(at, SmilesErrorKind::DanglingBond);
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => self.ring_bond()?,
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.add_atom(atom, at)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.add_atom(atom, at)?;
                }
            }
        }
        if let Some(&(_, offset, _)) = self.branches.last() {
            return self.err(offset, SmilesErrorKind::UnbalancedParenthesis);
        }
        if let Some((_, offset)) = self.pending {
            return self.err(offset, SmilesErrorKind::DanglingBond);
        }
        if let Some((&num, open)) = self.rings.iter().min_by_key(|(_, r)| r.offset) {
            return self.err(open.offset, SmilesErrorKind::UnclosedRing(num));
        }
        if self.atoms.is_empty() {
            return self.err(0, SmilesErrorKind::EmptyInput);
        }
        let offsets = std::mem::take(&mut self.atom_offsets);
        let mut probe = Molecule {
            adjacency: vec![Vec::new(); self.atoms.len()],
            atoms: self.atoms,
            bonds: self.bonds,
            ring_atoms: Vec::new(),
        };
        for b in &probe.bonds {
            probe.adjacency[b.a].push((b.b, b.order));
            probe.adjacency[b.b].push((b.a, b.order));
        }
        for (i, &offset) in offsets.iter().enumerate() {
            match probe.implicit_hydrogens(i) {
                Some(h) => probe.atoms[i].implicit_h = h,
                None => return Err(SmilesError::new(offset, SmilesErrorKind::ValenceViolation)),
            }
        }
        probe.ring_atoms = probe.find_ring_atoms();
        Ok(probe)
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn connect(&mut self, a: usize, b: usize, order: BondOrder, offset: usize) -> Result<()> {
        if a == b {
            return self.err(offset, SmilesErrorKind::SelfBond);
        }
        if self
            .bonds
            .iter()
            .any(|x| (x.a == a && x.b == b) || (x.a == b && x.b == a))
        {
            return self.err(offset, SmilesErrorKind::DuplicateBond);
        }
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn add_atom(&mut self, atom: Atom, offset: usize) -> Result<()> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.atom_offsets.push(offset);
        if let Some(prev) = self.prev {
            let order = match self.pending.take() {
                Some((o, _)) => o,
                None => self.default_order(prev, idx),
            };
            self.connect(prev, idx, order, offset)?;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_bond(&mut self) -> Result<()> {
        let at = self.pos;
        let num = if self.input[at] == b'%' {
            let digits = self.input.get(at + 1..at + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
                }
                _ => return self.err(at, SmilesErrorKind::UnexpectedCharacter(b'%')),
            }
        } else {
            self.pos += 1;
            u32::from(self.input[at] - b'0')
        };
        let Some(current) = self.prev else {
            return self.err(at, SmilesErrorKind::DanglingBond);
        };
        let bond = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&num) {
            Some(open) => {
                let order = match (open.bond, bond) {
                    (Some(x), Some(y)) if x != y => {
                        return self.err(at, SmilesErrorKind::RingBondMismatch)
                    }
                    (Some(x), _) | (None, Some(x)) => x,
                    (None, None) => self.default_order(open.atom, current),
                };
                self.connect(open.atom, current, order, at)
            }
            None => {
                self.rings.insert(
                    num,
                    RingOpen {
                        atom: current,
                        bond,
                        offset: at,
                    },
                );
                Ok(())
            }
        }
    }

    fn organic_atom(&mut self) -> Result<Atom> {
        let at = self.pos;
        let c = self.input[at];
        let next = self.input.get(at + 1).copied();
        let (symbol, aromatic, len): (&str, bool, usize) = match (c, next) {
            (b'B', Some(b'r')) => ("Br", false, 2),
            (b'C', Some(b'l')) => ("Cl", false, 2),
            (b'B', _) => ("B", false, 1),
            (b'C', _) => ("C", false, 1),
            (b'N', _) => ("N", false, 1),
            (b'O', _) => ("O", false, 1),
            (b'P', _) => ("P", false, 1),
            (b'S', _) => ("S", false, 1),
            (b'F', _) => ("F", false, 1),
            (b'I', _) => ("I", false, 1),
            (b'b', _) => ("B", true, 1),
            (b'c', _) => ("C", true, 1),
            (b'n', _) => ("N", true, 1),
            (b'o', _) => ("O", true, 1),
            (b'p', _) => ("P", true, 1),
            (b's', _) => ("S", true, 1),
            (c, _) if c.is_ascii_alphabetic() || c == b'*' => {
                return self.err(at, SmilesErrorKind::UnknownAtomSymbol)
            }
            (c, _) => return self.err(at, SmilesErrorKind::UnexpectedCharacter(c)),
        };
        self.pos += len;
        Ok(Atom {
            element: Element::from_symbol(symbol).expect("organic subset symbol"),
            charge: 0,
            explicit_h: 0,
            implicit_h: 0,
            aromatic,
            bracket: false,
        })
    }

    fn digits(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) && self.pos - start < 3 {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.input[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }

    fn bracket_atom(&mut self) -> Result<Atom> {
        let open = self.pos;
        self.pos += 1;
        let bad = |p: &Self| p.err::<Atom>(open, SmilesErrorKind::InvalidBracketAtom);
        // isotope, ignored
        let _ = self.digits();

        let sym_at = self.pos;
        let Some(c0) = self.peek() else { return bad(self) };
        let (element, aromatic) = if c0.is_ascii_uppercase() {
            let two = self
                .input
                .get(sym_at + 1)
                .filter(|c| c.is_ascii_lowercase())
                .and_then(|&c1| {
                    let s = [c0, c1];
                    Element::from_symbol(std::str::from_utf8(&s).ok()?)
                });
            if let Some(e) = two {
                self.pos += 2;
                (e, false)
            } else if let Some(e) = Element::from_symbol(std::str::from_utf8(&[c0]).unwrap()) {
                self.pos += 1;
                (e, false)
            } else {
                return self.err(sym_at, SmilesErrorKind::UnknownAtomSymbol);
            }
        } else if c0.is_ascii_lowercase() {
            let rest = &self.input[sym_at..];
            let (sym, len) = if rest.starts_with(b"se") {
                ("Se", 2)
            } else if rest.starts_with(b"as") {
                ("As", 2)
            } else if rest.starts_with(b"te") {
                ("Te", 2)
            } else {
                match c0 {
                    b'b' => ("B", 1),
                    b'c' => ("C", 1),
                    b'n' => ("N", 1),
                    b'o' => ("O", 1),
                    b'p' => ("P", 1),
                    b's' => ("S", 1),
                    _ => return self.err(sym_at, SmilesErrorKind::UnknownAtomSymbol),
                }
            };
            self.pos += len;
            (Element::from_symbol(sym).unwrap(), true)
        } else if c0 == b'*' {
            return self.err(sym_at, SmilesErrorKind::UnknownAtomSymbol);
        } else {
            return bad(self);
        };
        debug_assert!(!aromatic || element.can_be_aromatic());

        // chirality, ignored
        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
            }
            while self.peek().is_some_and(|c| c.is_ascii_uppercase() && c != b'H') {
                self.pos += 1;
            }
            let _ = self.digits();
        }

        let mut explicit_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            explicit_h = match self.digits() {
                Some(n) if n <= 9 => n as u8,
                Some(_) => return bad(self),
                None => 1,
            };
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            if let Some(n) = self.digits() {
                if n > 15 {
                    return bad(self);
                }
                charge = unit * n as i32;
            } else {
                charge = unit;
                while self.peek() == Some(sign) && charge.abs() < 15 {
                    charge += unit;
                    self.pos += 1;
                }
            }
        }

        // atom class, ignored
        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.digits().is_none() {
                return bad(self);
            }
        }

        if self.peek() != Some(b']') {
            return bad(self);
        }
        self.pos += 1;
        Ok(Atom {
            element,
            charge: charge as i8,
            explicit_h,
            implicit_h: 0,
            aromatic,
            bracket: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(s: &str) -> SmilesErrorKind {
        parse_smiles(s).unwrap_err().kind
    }

    #[test]
    fn methane_has_four_implicit_hydrogens() {
        let m = parse_smiles("C").unwrap();
        assert_eq!(m.atom_count(), 1);
        assert_eq!(m.atoms()[0].implicit_h, 4);
    }

    #[test]
    fn cyclopropane_ring_closes() {
        let m = parse_smiles("C1CC1").unwrap();
        assert_eq!(m.atom_count(), 3);
        assert_eq!(m.bonds().len(), 3);
        assert!(m.bonds().iter().all(|b| b.order == BondOrder::Single));
        assert!((0..3).all(|i| m.in_ring(i)));
        assert!(m.atoms().iter().all(|a| a.implicit_h == 2));
    }

    #[test]
    fn unclosed_ring_reports_offset() {
        let err = parse_smiles("C1CC").unwrap_err();
        assert_eq!(err.kind, SmilesErrorKind::UnclosedRing(1));
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn error_kinds() {
        assert_eq!(kind(""), SmilesErrorKind::EmptyInput);
        assert_eq!(kind("C(C"), SmilesErrorKind::UnbalancedParenthesis);
        assert_eq!(kind("CC)C"), SmilesErrorKind::UnbalancedParenthesis);
        assert_eq!(kind("CXC"), SmilesErrorKind::UnknownAtomSymbol);
        assert_eq!(kind("[Xx]"), SmilesErrorKind::UnknownAtomSymbol);
        assert_eq!(kind("C(C)(C)(C)(C)C"), SmilesErrorKind::ValenceViolation);
        assert_eq!(kind("FF(F)"), SmilesErrorKind::ValenceViolation);
        assert_eq!(kind("C="), SmilesErrorKind::DanglingBond);
        assert_eq!(kind("=C"), SmilesErrorKind::DanglingBond);
        assert_eq!(kind("C()C"), SmilesErrorKind::EmptyBranch);
        assert_eq!(kind("C11"), SmilesErrorKind::SelfBond);
        assert_eq!(kind("C1C1"), SmilesErrorKind::DuplicateBond);
        assert_eq!(kind("C=1CC#1"), SmilesErrorKind::RingBondMismatch);
        assert_eq!(kind("[C"), SmilesErrorKind::InvalidBracketAtom);
        assert_eq!(kind("C C"), SmilesErrorKind::UnexpectedCharacter(b' '));
    }

    #[test]
    fn valence_error_points_at_atom() {
        let err = parse_smiles("CC(=O)(=O)C").unwrap_err();
        assert_eq!(err.kind, SmilesErrorKind::ValenceViolation);
        assert_eq!(err.offset, 1);
    }

    #[test]
    fn aromatic_hydrogens() {
        let benzene = parse_smiles("c1ccccc1").unwrap();
        assert!(benzene.bonds().iter().all(|b| b.order == BondOrder::Aromatic));
        assert!(benzene.atoms().iter().all(|a| a.implicit_h == 1));

        let pyridine = parse_smiles("n1ccccc1").unwrap();
        assert_eq!(pyridine.atoms()[0].implicit_h, 0);

        let furan = parse_smiles("o1cccc1").unwrap();
        assert_eq!(furan.atoms()[0].implicit_h, 0);

        let pyrrole = parse_smiles("[nH]1cccc1").unwrap();
        assert_eq!(pyrrole.atoms()[0].total_h(), 1);

        let naphthalene = parse_smiles("c1ccc2ccccc2c1").unwrap();
        let fused: Vec<u8> = naphthalene.atoms().iter().map(|a| a.implicit_h).collect();
        assert_eq!(fused.iter().filter(|&&h| h == 0).count(), 2);
    }

    #[test]
    fn bracket_atoms() {
        let m = parse_smiles("[NH4+]").unwrap();
        assert_eq!(m.atoms()[0].charge, 1);
        assert_eq!(m.atoms()[0].total_h(), 4);

        let m = parse_smiles("[13CH3:7][O-]").unwrap();
        assert_eq!(m.atoms()[0].total_h(), 3);
        assert_eq!(m.atoms()[1].charge, -1);

        let m = parse_smiles("[Fe++]").unwrap();
        assert_eq!(m.atoms()[0].charge, 2);
        let m = parse_smiles("[C@@H](F)(Cl)Br").unwrap();
        assert_eq!(m.atom_count(), 4);
        assert_eq!(m.atoms()[0].total_h(), 1);
    }

    #[test]
    fn stereo_bonds_read_as_single() {
        let m = parse_smiles("F/C=C\\F").unwrap();
        let orders: Vec<_> = m.bonds().iter().map(|b| b.order).collect();
        assert_eq!(
            orders,
            vec![BondOrder::Single, BondOrder::Double, BondOrder::Single]
        );
    }

    #[test]
    fn percent_ring_numbers_and_dots() {
        let m = parse_smiles("C%12CC%12.O").unwrap();
        assert_eq!(m.atom_count(), 4);
        assert_eq!(m.bonds().len(), 3);
        assert!(!m.in_ring(3));
    }

    #[test]
    fn ring_membership_excludes_chains() {
        let m = parse_smiles("CC1CCCCC1C").unwrap();
        assert!(!m.in_ring(0));
        assert!(m.in_ring(1));
        assert!(!m.in_ring(7));
    }

    #[test]
    fn branch_restores_previous_atom() {
        let m = parse_smiles("CC(O)N").unwrap();
        let n_bond = m.bonds().iter().find(|b| b.b == 3).unwrap();
        assert_eq!(n_bond.a, 1);
    }
}

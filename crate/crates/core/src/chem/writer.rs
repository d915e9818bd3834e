//! Non-canonical SMILES output with a caller-chosen traversal order.
//!
//! Useful for producing alternative spellings of the same molecule (atom
//! order permutations); the output re-parses to an isomorphic graph.

use rand::seq::SliceRandom;
use rand::Rng;

use super::smiles::{Atom, BondOrder, Molecule};

fn atom_text(atom: &Atom) -> String {
    let organic = atom.element.default_valences().is_some();
    if !atom.bracket && organic {
        let s = atom.element.symbol();
        return if atom.aromatic { s.to_lowercase() } else { s.to_string() };
    }
    let mut s = String::from("[");
    if atom.aromatic {
        s.push_str(&atom.element.symbol().to_lowercase());
    } else {
        s.push_str(atom.element.symbol());
    }
    match atom.explicit_h {
        0 => {}
        1 => s.push('H'),
        h => s.push_str(&format!("H{h}")),
    }
    match atom.charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => s.push_str(&format!("+{c}")),
        c => s.push_str(&format!("-{}", -c)),
    }
    s.push(']');
    s
}

fn bond_text(mol: &Molecule, a: usize, b: usize, order: BondOrder) -> &'static str {
    let both_aromatic = mol.atoms()[a].aromatic && mol.atoms()[b].aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(n: usize) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

/// Write `mol` as SMILES, visiting components, roots and neighbors in a
/// random order drawn from `rng`.
pub fn write_smiles_shuffled<R: Rng>(mol: &Molecule, rng: &mut R) -> String {
    let n = mol.atom_count();
    let mut neighbor_order: Vec<Vec<(usize, BondOrder)>> =
        (0..n).map(|i| mol.neighbors(i).to_vec()).collect();
    for list in &mut neighbor_order {
        list.shuffle(rng);
    }
    let mut roots: Vec<usize> = (0..n).collect();
    roots.shuffle(rng);

    // Pass 1: DFS tree and ring-closure edges.
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    // closures[u] lists (edge id, other atom, order) in the order they are emitted at u
    let mut closures: Vec<Vec<(usize, usize, BondOrder)>> = vec![Vec::new(); n];
    let mut component_roots = Vec::new();
    let mut edge_count = 0usize;
    let mut used = std::collections::HashSet::new();
    for &root in &roots {
        if visited[root] {
            continue;
        }
        component_roots.push(root);
        visited[root] = true;
        let mut stack = vec![(root, 0usize)];
        while let Some(&mut (u, ref mut next)) = stack.last_mut() {
            if *next >= neighbor_order[u].len() {
                stack.pop();
                continue;
            }
            let (v, order) = neighbor_order[u][*next];
            *next += 1;
            let key = (u.min(v), u.max(v));
            if used.contains(&key) {
                continue;
            }
            used.insert(key);
            if visited[v] {
                // v is an ancestor already written: open at v, close at u
                closures[v].push((edge_count, u, order));
                closures[u].push((edge_count, v, order));
                edge_count += 1;
            } else {
                visited[v] = true;
                children[u].push((v, order));
                stack.push((v, 0));
            }
        }
    }

    // Pass 2: emit in the same order, allocating ring digits as they open.
    let mut out = String::new();
    let mut digit_of_edge = std::collections::HashMap::new();
    let mut free_digits: Vec<usize> = (1..100).rev().collect();
    for (ci, &root) in component_roots.iter().enumerate() {
        if ci > 0 {
            out.push('.');
        }
        let mut stack: Vec<Emit> = vec![Emit::Atom(root, None)];
        while let Some(item) = stack.pop() {
            match item {
                Emit::Text(t) => out.push_str(t),
                Emit::Atom(u, via) => {
                    if let Some((parent, order)) = via {
                        out.push_str(bond_text(mol, parent, u, order));
                    }
                    out.push_str(&atom_text(&mol.atoms()[u]));
                    for &(edge, other, order) in &closures[u] {
                        if let Some(d) = digit_of_edge.remove(&edge) {
                            out.push_str(&ring_label(d));
                            free_digits.push(d);
                            free_digits.sort_unstable_by(|a, b| b.cmp(a));
                        } else {
                            let d = free_digits.pop().expect("fewer than 100 open rings");
                            digit_of_edge.insert(edge, d);
                            out.push_str(bond_text(mol, u, other, order));
                            out.push_str(&ring_label(d));
                        }
                    }
                    let kids = &children[u];
                    // push in reverse so the first child is emitted first
                    for (k, &(v, order)) in kids.iter().enumerate().rev() {
                        let last = k + 1 == kids.len();
                        if last {
                            stack.push(Emit::Atom(v, Some((u, order))));
                        } else {
                            stack.push(Emit::Text(")"));
                            stack.push(Emit::Atom(v, Some((u, order))));
                            stack.push(Emit::Text("("));
                        }
                    }
                }
            }
        }
    }
    out
}

enum Emit {
    Atom(usize, Option<(usize, BondOrder)>),
    Text(&'static str),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::{circular_fingerprint, parse_smiles};
    use crate::rng::seeded;

    #[test]
    fn shuffled_spellings_reparse_to_same_fingerprint() {
        let mut rng = seeded(3);
        for s in [
            "CC(=O)Oc1ccccc1C(=O)O",
            "C1CC2CCC1CC2",
            "c1ccc2c(c1)[nH]c1ccccc12",
            "[NH4+].[Cl-]",
            "C#CC(Br)=C/C",
        ] {
            let mol = parse_smiles(s).unwrap();
            let reference = circular_fingerprint(&mol, 2, 1024).unwrap();
            for _ in 0..20 {
                let text = write_smiles_shuffled(&mol, &mut rng);
                let again = parse_smiles(&text).unwrap_or_else(|e| panic!("{text}: {e}"));
                assert_eq!(again.atom_count(), mol.atom_count(), "{text}");
                assert_eq!(again.bonds().len(), mol.bonds().len(), "{text}");
                assert_eq!(circular_fingerprint(&again, 2, 1024).unwrap(), reference, "{s} vs {text}");
            }
        }
    }
}

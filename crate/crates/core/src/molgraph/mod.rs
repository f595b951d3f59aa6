//! Molecular graphs parsed from SMILES.
//!
//! Atoms and bonds are stored in flat vectors; bonds refer to atoms by index.
//! Aromatic bonds are kept as their own order kind (no kekulization), and
//! hydrogens are either implicit counts or, when written as `[H]`, full atoms.

mod smiles;

use std::collections::BTreeMap;
use std::fmt;

pub use smiles::{parse_smiles, SmilesError};

use crate::element;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondKind {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondKind {
    /// Numeric order; aromatic bonds count as 1.5.
    pub fn order(self) -> f64 {
        match self {
            BondKind::Single => 1.0,
            BondKind::Double => 2.0,
            BondKind::Triple => 3.0,
            BondKind::Aromatic => 1.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: &'static str,
    pub atomic_number: u8,
    pub formal_charge: i32,
    /// Hydrogens written inside a bracket atom, e.g. the 3 in `[NH3+]`.
    pub explicit_h: u8,
    /// Hydrogens implied by the default-valence rule (organic subset only).
    pub implicit_h: u8,
    pub is_aromatic: bool,
    pub index: usize,
    /// Written as a bracket atom.
    pub bracket: bool,
    /// Bond-order sum exceeded the default valence when hydrogens were assigned.
    pub overvalent: bool,
}

impl Atom {
    /// All hydrogens attached to this atom that are not graph nodes.
    pub fn total_h(&self) -> u32 {
        self.explicit_h as u32 + self.implicit_h as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub kind: BondKind,
}

impl Bond {
    pub fn other(&self, atom: usize) -> Option<usize> {
        if atom == self.a {
            Some(self.b)
        } else if atom == self.b {
            Some(self.a)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Molecule {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub name: Option<String>,
}

impl Molecule {
    /// Parse and assign implicit hydrogens in one step.
    pub fn from_smiles(text: &str) -> Result<Molecule, SmilesError> {
        parse_smiles(text).map(assign_implicit_hydrogens)
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    /// Neighbor lists, ordered by bond index.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            adj[bond.a].push(bond.b);
            adj[bond.b].push(bond.a);
        }
        adj
    }

    /// Bonds incident to `atom`.
    pub fn bonds_of(&self, atom: usize) -> impl Iterator<Item = &Bond> + '_ {
        self.bonds
            .iter()
            .filter(move |b| b.a == atom || b.b == atom)
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.bonds
            .iter()
            .find(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    pub fn total_formal_charge(&self) -> i32 {
        self.atoms.iter().map(|a| a.formal_charge).sum()
    }

    /// Connected components as sorted atom-index lists, ordered by smallest member.
    pub fn fragments(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut stack = vec![start];
            let mut comp = Vec::new();
            seen[start] = true;
            while let Some(u) = stack.pop() {
                comp.push(u);
                for &v in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Per-bond flag: true when the bond lies on a cycle (is not a bridge).
    pub fn ring_bond_flags(&self) -> Vec<bool> {
        ring_bond_flags(self.atoms.len(), &self.bonds)
    }
}

/// Bridge-finding (Tarjan low-link); every non-bridge bond is a ring bond.
pub(crate) fn ring_bond_flags(n_atoms: usize, bonds: &[Bond]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_atoms];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    let mut disc = vec![usize::MAX; n_atoms];
    let mut low = vec![0usize; n_atoms];
    let mut is_ring = vec![true; bonds.len()];
    let mut timer = 0;
    for root in 0..n_atoms {
        if disc[root] != usize::MAX {
            continue;
        }
        // iterative DFS: (vertex, parent edge, next neighbor cursor)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (u, pe, ref mut cursor)) = stack.last_mut() {
            if *cursor < adj[u].len() {
                let (v, e) = adj[u][*cursor];
                *cursor += 1;
                if e == pe {
                    continue;
                }
                if disc[v] == usize::MAX {
                    disc[v] = timer;
                    low[v] = timer;
                    timer += 1;
                    stack.push((v, e, 0));
                } else {
                    low[u] = low[u].min(disc[v]);
                }
            } else {
                stack.pop();
                if let Some(&(p, _, _)) = stack.last() {
                    low[p] = low[p].min(low[u]);
                    if low[u] > disc[p] {
                        is_ring[pe] = false;
                    }
                }
            }
        }
    }
    is_ring
}

/// Fill in `implicit_h` for organic-subset atoms from their default valence.
///
/// Aromatic bonds count 1.5 and the bond-order sum is rounded down. Bracket
/// atoms keep their written hydrogen count and get no implicit hydrogens.
pub fn assign_implicit_hydrogens(mut mol: Molecule) -> Molecule {
    let mut order_sum = vec![0.0f64; mol.atoms.len()];
    for bond in &mol.bonds {
        order_sum[bond.a] += bond.kind.order();
        order_sum[bond.b] += bond.kind.order();
    }
    for atom in &mut mol.atoms {
        atom.implicit_h = 0;
        atom.overvalent = false;
        if atom.bracket {
            continue;
        }
        let Some(valence) = element::default_valence(atom.atomic_number) else {
            continue;
        };
        // organic-subset atoms cannot carry a charge, so no charge adjustment applies
        let used = order_sum[atom.index].floor() as i64;
        let free = valence as i64 - used;
        if free < 0 {
            atom.overvalent = true;
            log::debug!(
                "atom {} ({}) is over-valent: bond order sum {} > {}",
                atom.index,
                atom.element,
                order_sum[atom.index],
                valence
            );
        }
        atom.implicit_h = free.max(0) as u8;
    }
    mol
}

/// Hill-order formula (C, then H, then alphabetical; alphabetical when no carbon).
pub fn molecular_formula(mol: &Molecule) -> String {
    let mut counts: BTreeMap<&str, u32> = BTreeMap::new();
    for atom in &mol.atoms {
        *counts.entry(atom.element).or_default() += 1;
        let h = atom.total_h();
        if h > 0 {
            *counts.entry("H").or_default() += h;
        }
    }
    let mut out = String::new();
    let mut push = |sym: &str, n: u32| {
        out.push_str(sym);
        if n > 1 {
            out.push_str(&n.to_string());
        }
    };
    if let Some(&c) = counts.get("C") {
        push("C", c);
        if let Some(&h) = counts.get("H") {
            push("H", h);
        }
        for (sym, &n) in &counts {
            if *sym != "C" && *sym != "H" {
                push(sym, n);
            }
        }
    } else {
        for (sym, &n) in &counts {
            push(sym, n);
        }
    }
    out
}

impl fmt::Display for Molecule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.name {
            Some(name) => write!(f, "{} ({})", name, molecular_formula(self)),
            None => write!(f, "{}", molecular_formula(self)),
        }
    }
}

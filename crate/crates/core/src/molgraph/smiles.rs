//! Recursive-descent-free SMILES reader for the subset the encoders need.
//!
//! Supported: organic-subset atoms, aromatic lowercase atoms, bracket atoms
//! (isotope, chirality and atom class are accepted and ignored), bond symbols
//! `- = # : / \`, branches, ring closures (`1`..`9`, `%nn`) and `.` fragments.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{ring_bond_flags, Atom, Bond, BondKind, Molecule};
use crate::element;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    EmptyInput,
    #[error("ring closure {label} opened at position {position} is never closed")]
    UnclosedRing { label: u32, position: usize },
    #[error("unbalanced parenthesis at position {position}")]
    UnbalancedParen { position: usize },
    #[error("unknown element '{symbol}' at position {position}")]
    UnknownElement { symbol: String, position: usize },
    #[error("unexpected character '{ch}' at position {position}")]
    UnexpectedChar { ch: char, position: usize },
    #[error("unterminated bracket atom starting at position {position}")]
    UnterminatedBracket { position: usize },
    #[error("bond at position {position} is not followed by an atom")]
    DanglingBond { position: usize },
    #[error("invalid ring bond at position {position} (self-loop or duplicate bond)")]
    InvalidRingBond { position: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/` or `\`: stereo markers, treated as an unspecified bond
    Directional,
}

impl BondSymbol {
    fn from_char(c: char) -> Option<BondSymbol> {
        match c {
            '-' => Some(BondSymbol::Single),
            '=' => Some(BondSymbol::Double),
            '#' => Some(BondSymbol::Triple),
            ':' => Some(BondSymbol::Aromatic),
            '/' | '\\' => Some(BondSymbol::Directional),
            _ => None,
        }
    }
}

struct RingOpen {
    atom: usize,
    bond: Option<BondSymbol>,
    position: usize,
}

struct Parser<'a> {
    chars: Vec<char>,
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Bonds whose kind came from the aromatic default rather than a ':' symbol.
    implicit_aromatic: Vec<bool>,
    _text: &'a str,
}

/// Parse SMILES text into a molecular graph. Implicit hydrogens are not yet
/// assigned; see [`super::assign_implicit_hydrogens`].
pub fn parse_smiles(text: &str) -> Result<Molecule, SmilesError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(SmilesError::EmptyInput);
    }
    let mut p = Parser {
        chars: trimmed.chars().collect(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        implicit_aromatic: Vec::new(),
        _text: trimmed,
    };
    p.run()?;
    let mut mol = Molecule {
        atoms: p.atoms,
        bonds: p.bonds,
        name: None,
    };
    // an unmarked bond between two aromatic atoms of different rings is single
    let ring = ring_bond_flags(mol.atoms.len(), &mol.bonds);
    for (i, bond) in mol.bonds.iter_mut().enumerate() {
        if p.implicit_aromatic[i] && !ring[i] {
            bond.kind = BondKind::Single;
        }
    }
    Ok(mol)
}

impl Parser<'_> {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSymbol, usize)> = None;
        let mut branches: Vec<(Option<usize>, usize)> = Vec::new();
        let mut rings: BTreeMap<u32, RingOpen> = BTreeMap::new();

        while let Some(c) = self.peek() {
            let here = self.pos;
            match c {
                '(' => {
                    if prev.is_none() || pending.is_some() {
                        return Err(SmilesError::UnexpectedChar { ch: c, position: here });
                    }
                    branches.push((prev, here));
                    self.pos += 1;
                }
                ')' => {
                    let Some((atom, _)) = branches.pop() else {
                        return Err(SmilesError::UnbalancedParen { position: here });
                    };
                    if let Some((_, p)) = pending {
                        return Err(SmilesError::DanglingBond { position: p });
                    }
                    prev = atom;
                    self.pos += 1;
                }
                '.' => {
                    if let Some((_, p)) = pending {
                        return Err(SmilesError::DanglingBond { position: p });
                    }
                    prev = None;
                    self.pos += 1;
                }
                '-' | '=' | '#' | ':' | '/' | '\\' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(SmilesError::UnexpectedChar { ch: c, position: here });
                    }
                    pending = BondSymbol::from_char(c).map(|b| (b, here));
                    self.pos += 1;
                }
                '0'..='9' | '%' => {
                    let Some(atom) = prev else {
                        return Err(SmilesError::UnexpectedChar { ch: c, position: here });
                    };
                    let label = self.ring_label()?;
                    let bond = pending.take().map(|(b, _)| b);
                    match rings.remove(&label) {
                        Some(open) => {
                            let sym = bond.or(open.bond);
                            if open.atom == atom || self.has_bond(open.atom, atom) {
                                return Err(SmilesError::InvalidRingBond { position: here });
                            }
                            self.add_bond(open.atom, atom, sym);
                        }
                        None => {
                            rings.insert(
                                label,
                                RingOpen {
                                    atom,
                                    bond,
                                    position: here,
                                },
                            );
                        }
                    }
                }
                '[' => {
                    let idx = self.bracket_atom()?;
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take().map(|(b, _)| b));
                    }
                    pending = None;
                    prev = Some(idx);
                }
                _ if c.is_ascii_alphabetic() || c == '*' => {
                    let idx = self.organic_atom()?;
                    if let Some(p) = prev {
                        self.add_bond(p, idx, pending.take().map(|(b, _)| b));
                    }
                    pending = None;
                    prev = Some(idx);
                }
                _ => return Err(SmilesError::UnexpectedChar { ch: c, position: here }),
            }
        }

        if let Some((_, position)) = branches.first() {
            return Err(SmilesError::UnbalancedParen { position: *position });
        }
        if let Some((_, position)) = pending {
            return Err(SmilesError::DanglingBond { position });
        }
        if let Some((&label, open)) = rings.iter().min_by_key(|(_, o)| o.position) {
            return Err(SmilesError::UnclosedRing {
                label,
                position: open.position,
            });
        }
        Ok(())
    }

    fn ring_label(&mut self) -> Result<u32, SmilesError> {
        let here = self.pos;
        let c = self.chars[self.pos];
        if c == '%' {
            let d1 = self.chars.get(here + 1).and_then(|c| c.to_digit(10));
            let d2 = self.chars.get(here + 2).and_then(|c| c.to_digit(10));
            match (d1, d2) {
                (Some(a), Some(b)) => {
                    self.pos += 3;
                    Ok(a * 10 + b)
                }
                _ => Err(SmilesError::UnexpectedChar { ch: '%', position: here }),
            }
        } else {
            self.pos += 1;
            Ok(c.to_digit(10).expect("digit"))
        }
    }

    fn has_bond(&self, a: usize, b: usize) -> bool {
        self.bonds
            .iter()
            .any(|bd| (bd.a == a && bd.b == b) || (bd.a == b && bd.b == a))
    }

    fn add_bond(&mut self, a: usize, b: usize, sym: Option<BondSymbol>) {
        let both_aromatic = self.atoms[a].is_aromatic && self.atoms[b].is_aromatic;
        let (kind, implicit) = match sym {
            Some(BondSymbol::Single) => (BondKind::Single, false),
            Some(BondSymbol::Double) => (BondKind::Double, false),
            Some(BondSymbol::Triple) => (BondKind::Triple, false),
            Some(BondSymbol::Aromatic) if both_aromatic => (BondKind::Aromatic, false),
            Some(BondSymbol::Aromatic) => (BondKind::Single, false),
            Some(BondSymbol::Directional) | None if both_aromatic => (BondKind::Aromatic, true),
            Some(BondSymbol::Directional) | None => (BondKind::Single, false),
        };
        self.bonds.push(Bond { a, b, kind });
        self.implicit_aromatic.push(implicit);
    }

    fn push_atom(&mut self, symbol: &'static str, aromatic: bool, bracket: bool) -> usize {
        let index = self.atoms.len();
        self.atoms.push(Atom {
            element: symbol,
            atomic_number: element::atomic_number(symbol).expect("validated symbol"),
            formal_charge: 0,
            explicit_h: 0,
            implicit_h: 0,
            is_aromatic: aromatic,
            index,
            bracket,
            overvalent: false,
        });
        index
    }

    fn organic_atom(&mut self) -> Result<usize, SmilesError> {
        let here = self.pos;
        let c = self.chars[here];
        let next = self.chars.get(here + 1).copied();
        let (symbol, aromatic, len): (&'static str, bool, usize) = match (c, next) {
            ('C', Some('l')) => ("Cl", false, 2),
            ('B', Some('r')) => ("Br", false, 2),
            ('B', _) => ("B", false, 1),
            ('C', _) => ("C", false, 1),
            ('N', _) => ("N", false, 1),
            ('O', _) => ("O", false, 1),
            ('P', _) => ("P", false, 1),
            ('S', _) => ("S", false, 1),
            ('F', _) => ("F", false, 1),
            ('I', _) => ("I", false, 1),
            ('b', _) => ("B", true, 1),
            ('c', _) => ("C", true, 1),
            ('n', _) => ("N", true, 1),
            ('o', _) => ("O", true, 1),
            ('p', _) => ("P", true, 1),
            ('s', _) => ("S", true, 1),
            _ => {
                return Err(SmilesError::UnknownElement {
                    symbol: c.to_string(),
                    position: here,
                })
            }
        };
        self.pos += len;
        Ok(self.push_atom(symbol, aromatic, false))
    }

    fn bracket_atom(&mut self) -> Result<usize, SmilesError> {
        let open = self.pos;
        let close = self.chars[open..]
            .iter()
            .position(|&c| c == ']')
            .map(|i| open + i)
            .ok_or(SmilesError::UnterminatedBracket { position: open })?;
        let mut i = open + 1;
        // isotope
        while i < close && self.chars[i].is_ascii_digit() {
            i += 1;
        }
        if i >= close {
            return Err(SmilesError::UnknownElement {
                symbol: String::new(),
                position: i,
            });
        }
        let sym_start = i;
        let first = self.chars[i];
        let second = self.chars.get(i + 1).copied().filter(|_| i + 1 < close);
        let (symbol, aromatic, len) = if first.is_ascii_lowercase() {
            // aromatic bracket symbols: two-letter forms first
            let two: Option<String> = second.map(|s| format!("{}{}", first.to_ascii_uppercase(), s));
            match two.as_deref() {
                Some("Se") | Some("As") | Some("Te") if second.is_some_and(|s| s.is_ascii_lowercase()) => {
                    (two.unwrap(), true, 2)
                }
                _ if matches!(first, 'b' | 'c' | 'n' | 'o' | 'p' | 's') => {
                    (first.to_ascii_uppercase().to_string(), true, 1)
                }
                _ => {
                    return Err(SmilesError::UnknownElement {
                        symbol: first.to_string(),
                        position: sym_start,
                    })
                }
            }
        } else if first.is_ascii_uppercase() {
            // prefer the two-letter element when the second char is lowercase and valid
            match second {
                Some(s) if s.is_ascii_lowercase() && element::atomic_number(&format!("{first}{s}")).is_some() => {
                    (format!("{first}{s}"), false, 2)
                }
                _ => (first.to_string(), false, 1),
            }
        } else {
            return Err(SmilesError::UnknownElement {
                symbol: first.to_string(),
                position: sym_start,
            });
        };
        let Some(z) = element::atomic_number(&symbol) else {
            return Err(SmilesError::UnknownElement {
                symbol,
                position: sym_start,
            });
        };
        let static_symbol = element::symbol(z).expect("valid atomic number");
        i += len;

        // chirality: '@', '@@', '@TH1', '@SP2', '@OH12' ...
        if i < close && self.chars[i] == '@' {
            while i < close && self.chars[i] == '@' {
                i += 1;
            }
            while i < close && self.chars[i].is_ascii_uppercase() && self.chars[i] != 'H' {
                i += 1;
            }
            while i < close && self.chars[i].is_ascii_digit() {
                i += 1;
            }
        }
        let mut h = 0u8;
        if i < close && self.chars[i] == 'H' {
            i += 1;
            h = 1;
            if i < close && self.chars[i].is_ascii_digit() {
                h = self.chars[i].to_digit(10).unwrap() as u8;
                i += 1;
            }
        }
        let mut charge = 0i32;
        if i < close && (self.chars[i] == '+' || self.chars[i] == '-') {
            let sign = if self.chars[i] == '+' { 1 } else { -1 };
            let sym = self.chars[i];
            i += 1;
            if i < close && self.chars[i].is_ascii_digit() {
                let mut n = 0i32;
                while i < close && self.chars[i].is_ascii_digit() {
                    n = n * 10 + self.chars[i].to_digit(10).unwrap() as i32;
                    i += 1;
                }
                charge = sign * n;
            } else {
                let mut n = 1;
                while i < close && self.chars[i] == sym {
                    n += 1;
                    i += 1;
                }
                charge = sign * n;
            }
        }
        // atom class
        if i < close && self.chars[i] == ':' {
            i += 1;
            while i < close && self.chars[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i != close {
            return Err(SmilesError::UnexpectedChar {
                ch: self.chars[i],
                position: i,
            });
        }
        self.pos = close + 1;
        let idx = self.push_atom(static_symbol, aromatic, true);
        self.atoms[idx].explicit_h = h;
        self.atoms[idx].formal_charge = charge;
        Ok(idx)
    }
}

//! Per-atom chemical annotations for the augmented image channels: bond
//! order, valence (explicit connections), hybridization and Gasteiger-Marsili
//! PEOE partial charges.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::element;
use crate::molgraph::{Bond, BondKind, Molecule};

/// Cation electronegativity used when hydrogen is the electron donor.
pub const HYDROGEN_CATION_CHI: f64 = 20.02;

pub const DEFAULT_PEOE_ITERATIONS: usize = 6;

const BUNDLED_PARAMS: &str = include_str!("../data/peoe_params.txt");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptError {
    #[error("atom index {index} out of range for molecule with {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no PEOE parameters for {element} ({hybridization})")]
    MissingParams {
        element: String,
        hybridization: Hybridization,
    },
    #[error("PEOE parameter table line {line}: {message}")]
    ParamsFormat { line: usize, message: String },
    #[error("reading PEOE parameters: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Hybridization {
    None,
    Sp,
    Sp2,
    Sp3,
}

impl Hybridization {
    /// Numeric code written into image channels: 0 none, 1 sp, 2 sp2, 3 sp3.
    pub fn code(self) -> f64 {
        match self {
            Hybridization::None => 0.0,
            Hybridization::Sp => 1.0,
            Hybridization::Sp2 => 2.0,
            Hybridization::Sp3 => 3.0,
        }
    }
}

impl fmt::Display for Hybridization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hybridization::None => "none",
            Hybridization::Sp => "sp",
            Hybridization::Sp2 => "sp2",
            Hybridization::Sp3 => "sp3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomAnnotations {
    pub valence: usize,
    pub hybridization: Hybridization,
    pub partial_charge: f64,
}

pub fn bond_order(bond: &Bond) -> f64 {
    bond.kind.order()
}

/// Number of graph neighbors. Implicit hydrogens are not counted; `[H]` atoms are.
pub fn valence(mol: &Molecule, atom: usize) -> Result<usize, PerceptError> {
    check_index(mol, atom)?;
    Ok(mol.bonds_of(atom).count())
}

pub fn hybridization(mol: &Molecule, atom: usize) -> Result<Hybridization, PerceptError> {
    check_index(mol, atom)?;
    let (mut double, mut triple, mut aromatic, mut degree) = (0, 0, 0, 0);
    for bond in mol.bonds_of(atom) {
        degree += 1;
        match bond.kind {
            BondKind::Double => double += 1,
            BondKind::Triple => triple += 1,
            BondKind::Aromatic => aromatic += 1,
            BondKind::Single => {}
        }
    }
    let a = &mol.atoms[atom];
    let hyb = if triple > 0 || double >= 2 {
        Hybridization::Sp
    } else if double > 0 || aromatic > 0 {
        Hybridization::Sp2
    } else if classifiable(a.atomic_number) && (degree > 0 || a.total_h() > 0) {
        Hybridization::Sp3
    } else {
        Hybridization::None
    };
    Ok(hyb)
}

/// Elements that receive an sp3 label when saturated and connected.
fn classifiable(z: u8) -> bool {
    // B C N O P S, plus bonded halogens
    matches!(z, 5 | 6 | 7 | 8 | 15 | 16 | 9 | 17 | 35 | 53)
}

fn check_index(mol: &Molecule, index: usize) -> Result<(), PerceptError> {
    if index >= mol.atoms.len() {
        return Err(PerceptError::IndexOutOfRange {
            index,
            len: mol.atoms.len(),
        });
    }
    Ok(())
}

/// Coefficients of χ(q) = a + b·q + c·q².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeoeCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl PeoeCoeffs {
    pub fn chi(&self, q: f64) -> f64 {
        self.a + self.b * q + self.c * q * q
    }

    /// χ at q = +1.
    pub fn cation_chi(&self) -> f64 {
        self.a + self.b + self.c
    }
}

/// PEOE parameter table keyed by (atomic number, hybridization). A `None`
/// hybridization key is the `*` wildcard row.
#[derive(Debug, Clone, PartialEq)]
pub struct PeoeParams {
    entries: BTreeMap<(u8, Option<Hybridization>), PeoeCoeffs>,
    pub hydrogen_cation_chi: f64,
}

impl Default for PeoeParams {
    fn default() -> Self {
        BUNDLED_PARAMS
            .parse()
            .expect("bundled PEOE parameter table is well-formed")
    }
}

impl FromStr for PeoeParams {
    type Err = PerceptError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| PerceptError::ParamsFormat {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", fields.len())));
            }
            let z = element::atomic_number(fields[0])
                .ok_or_else(|| err(format!("unknown element '{}'", fields[0])))?;
            let hyb = match fields[1] {
                "*" => None,
                "sp" => Some(Hybridization::Sp),
                "sp2" => Some(Hybridization::Sp2),
                "sp3" => Some(Hybridization::Sp3),
                other => return Err(err(format!("unknown hybridization '{other}'"))),
            };
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("'{s}': {e}")));
            let coeffs = PeoeCoeffs {
                a: num(fields[2])?,
                b: num(fields[3])?,
                c: num(fields[4])?,
            };
            if !(coeffs.a > 0.0) {
                return Err(err(format!("coefficient a must be positive, got {}", coeffs.a)));
            }
            if entries.insert((z, hyb), coeffs).is_some() {
                return Err(err("duplicate entry".to_string()));
            }
        }
        Ok(PeoeParams {
            entries,
            hydrogen_cation_chi: HYDROGEN_CATION_CHI,
        })
    }
}

impl PeoeParams {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PerceptError> {
        let text = std::fs::read_to_string(path).map_err(|e| PerceptError::Io(e.to_string()))?;
        text.parse()
    }

    /// Exact hybridization row first, then the wildcard row.
    pub fn get(&self, atomic_number: u8, hyb: Hybridization) -> Option<&PeoeCoeffs> {
        self.entries
            .get(&(atomic_number, Some(hyb)))
            .or_else(|| self.entries.get(&(atomic_number, None)))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup(&self, z: u8, hyb: Hybridization) -> Result<PeoeCoeffs, PerceptError> {
        self.get(z, hyb).copied().ok_or_else(|| PerceptError::MissingParams {
            element: element::symbol(z).unwrap_or("?").to_string(),
            hybridization: hyb,
        })
    }
}

/// Full PEOE output: heavy-atom charges, the summed charge of each atom's
/// attached (non-graph) hydrogens, and the total |Δq| moved at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PeoeResult {
    pub atom_charges: Vec<f64>,
    pub attached_h_charges: Vec<f64>,
    /// (owner atom, charge) for every attached hydrogen pseudo-atom.
    pub hydrogen_charges: Vec<(usize, f64)>,
    pub step_transfer: Vec<f64>,
}

impl PeoeResult {
    pub fn total_charge(&self) -> f64 {
        self.atom_charges.iter().sum::<f64>() + self.attached_h_charges.iter().sum::<f64>()
    }
}

/// Gasteiger-Marsili charges for the graph atoms. Attached hydrogens take part
/// in the equalization but their charges are not folded into the result.
pub fn gasteiger_charges(
    mol: &Molecule,
    params: &PeoeParams,
    iterations: usize,
) -> Result<Vec<f64>, PerceptError> {
    peoe(mol, params, iterations).map(|r| r.atom_charges)
}

pub fn peoe(
    mol: &Molecule,
    params: &PeoeParams,
    iterations: usize,
) -> Result<PeoeResult, PerceptError> {
    let n_atoms = mol.atoms.len();
    let h_coeffs = params.lookup(1, Hybridization::None)?;

    // pseudo-atom table: graph atoms first, then one entry per attached hydrogen
    let mut coeffs = Vec::with_capacity(n_atoms);
    let mut is_hydrogen = Vec::with_capacity(n_atoms);
    let mut charge = Vec::with_capacity(n_atoms);
    for (i, atom) in mol.atoms.iter().enumerate() {
        let isolated = atom.total_h() == 0 && mol.bonds_of(i).next().is_none();
        if isolated {
            // no bonds, so these coefficients are never evaluated
            coeffs.push(h_coeffs);
        } else {
            let hyb = hybridization(mol, i)?;
            coeffs.push(params.lookup(atom.atomic_number, hyb)?);
        }
        is_hydrogen.push(atom.atomic_number == 1);
        charge.push(atom.formal_charge as f64);
    }
    let mut edges: Vec<(usize, usize)> = mol.bonds.iter().map(|b| (b.a, b.b)).collect();
    let mut owner = Vec::new();
    for (i, atom) in mol.atoms.iter().enumerate() {
        for _ in 0..atom.total_h() {
            let h = coeffs.len();
            coeffs.push(h_coeffs);
            is_hydrogen.push(true);
            charge.push(0.0);
            edges.push((i, h));
            owner.push(i);
        }
    }
    let cation: Vec<f64> = coeffs
        .iter()
        .zip(&is_hydrogen)
        .map(|(c, &h)| if h { params.hydrogen_cation_chi } else { c.cation_chi() })
        .collect();

    let n = coeffs.len();
    let mut chi = vec![0.0; n];
    let mut delta = vec![0.0; n];
    let mut step_transfer = Vec::with_capacity(iterations);
    let mut damping = 1.0;
    for _ in 0..iterations {
        damping *= 0.5;
        for i in 0..n {
            chi[i] = coeffs[i].chi(charge[i]);
            delta[i] = 0.0;
        }
        let mut moved = 0.0;
        for &(i, j) in &edges {
            let (donor, acceptor) = if chi[i] < chi[j] {
                (i, j)
            } else if chi[j] < chi[i] {
                (j, i)
            } else {
                continue;
            };
            let dq = damping * (chi[acceptor] - chi[donor]) / cation[donor];
            delta[donor] += dq;
            delta[acceptor] -= dq;
            moved += dq;
        }
        for i in 0..n {
            charge[i] += delta[i];
        }
        step_transfer.push(moved);
    }

    let mut attached = vec![0.0; n_atoms];
    let mut hydrogen_charges = Vec::with_capacity(owner.len());
    for (k, &o) in owner.iter().enumerate() {
        attached[o] += charge[n_atoms + k];
        hydrogen_charges.push((o, charge[n_atoms + k]));
    }
    charge.truncate(n_atoms);
    Ok(PeoeResult {
        atom_charges: charge,
        attached_h_charges: attached,
        hydrogen_charges,
        step_transfer,
    })
}

/// Annotate every atom. Partial charges are computed only when `params` is
/// given; otherwise they are left at 0.
pub fn annotate(
    mol: &Molecule,
    params: Option<&PeoeParams>,
    iterations: usize,
) -> Result<Vec<AtomAnnotations>, PerceptError> {
    let charges = match params {
        Some(p) => gasteiger_charges(mol, p, iterations)?,
        None => vec![0.0; mol.atoms.len()],
    };
    (0..mol.atoms.len())
        .map(|i| {
            Ok(AtomAnnotations {
                valence: valence(mol, i)?,
                hybridization: hybridization(mol, i)?,
                partial_charge: charges[i],
            })
        })
        .collect()
}

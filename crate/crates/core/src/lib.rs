//! Molecular image encoding: SMILES → graph → chemical annotations → 2D
//! coordinates → multi-channel 80×80 images, plus dataset splitting and
//! evaluation metrics for training image-based property models.

pub mod element;
pub mod molgraph;
pub mod percept;
pub mod layout;
pub mod raster;
pub mod metrics;
pub mod dataset;
pub mod synth;
pub mod encode;

pub use molgraph::{
    assign_implicit_hydrogens, molecular_formula, parse_smiles, Atom, Bond, BondKind, Molecule,
    SmilesError,
};

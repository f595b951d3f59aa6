mod common;

use chemimg::molgraph::{Atom, Bond, Molecule};
use chemimg::percept::{
    gasteiger_charges, hybridization, peoe, valence, PeoeParams, DEFAULT_PEOE_ITERATIONS,
};
use proptest::prelude::*;

/// Reference values from an independent cheminformatics toolkit run with
/// explicit hydrogens: (heavy-atom charges, per-atom hydrogen charge).
const METHANE_REF: ([f64; 1], [f64; 1]) = ([-0.077558], [0.019389]);
const ETHANOL_REF: ([f64; 3], [f64; 3]) = ([-0.041838, 0.040221, -0.396664], [0.025373, 0.05607, 0.210022]);

fn check_against_reference(smiles: &str, heavy: &[f64], per_h: &[f64]) {
    let m = Molecule::from_smiles(smiles).unwrap();
    let r = peoe(&m, &PeoeParams::default(), DEFAULT_PEOE_ITERATIONS).unwrap();
    for (i, (&q, &want)) in r.atom_charges.iter().zip(heavy).enumerate() {
        assert!((q - want).abs() < 5e-3, "{smiles} atom {i}: {q} vs {want}");
    }
    for &(owner, q) in &r.hydrogen_charges {
        assert!((q - per_h[owner]).abs() < 5e-3, "{smiles} H on {owner}: {q} vs {}", per_h[owner]);
    }
}

#[test]
fn methane_and_ethanol_match_reference_toolkit() {
    check_against_reference("C", &METHANE_REF.0, &METHANE_REF.1);
    check_against_reference("CCO", &ETHANOL_REF.0, &ETHANOL_REF.1);
}

#[test]
fn corpus_conserves_formal_charge() {
    let params = PeoeParams::default();
    for (s, m) in common::corpus_molecules() {
        let r = peoe(&m, &params, DEFAULT_PEOE_ITERATIONS).unwrap_or_else(|e| panic!("{s}: {e}"));
        let formal = m.total_formal_charge() as f64;
        assert!((r.total_charge() - formal).abs() < 1e-9, "{s}: {} vs {formal}", r.total_charge());
        assert!(r.atom_charges.iter().all(|q| q.is_finite()));
    }
}

#[test]
fn damping_makes_transfer_shrink() {
    let params = PeoeParams::default();
    for (s, m) in common::corpus_molecules() {
        let r = peoe(&m, &params, 8).unwrap();
        for k in 2..r.step_transfer.len() {
            assert!(
                r.step_transfer[k] <= r.step_transfer[k - 1] + 1e-15,
                "{s}: step {k} moved {} after {}",
                r.step_transfer[k],
                r.step_transfer[k - 1]
            );
        }
    }
}

#[test]
fn symmetric_atoms_get_identical_charges() {
    let params = PeoeParams::default();
    let methane = peoe(&Molecule::from_smiles("C").unwrap(), &params, 6).unwrap();
    let h: Vec<f64> = methane.hydrogen_charges.iter().map(|p| p.1).collect();
    assert_eq!(h.len(), 4);
    assert!(h.iter().all(|q| (q - h[0]).abs() < 1e-12));

    let ethane = peoe(&Molecule::from_smiles("CC").unwrap(), &params, 6).unwrap();
    assert!((ethane.atom_charges[0] - ethane.atom_charges[1]).abs() < 1e-12);
    assert!(ethane.hydrogen_charges.iter().all(|p| (p.1 - ethane.hydrogen_charges[0].1).abs() < 1e-12));

    let benzene = gasteiger_charges(&Molecule::from_smiles("c1ccccc1").unwrap(), &params, 6).unwrap();
    assert!(benzene.iter().all(|q| (q - benzene[0]).abs() < 1e-12));
}

/// Relabel atoms with `perm[old] = new`.
fn permute(m: &Molecule, perm: &[usize]) -> Molecule {
    let mut atoms: Vec<Atom> = m.atoms.clone();
    for a in &m.atoms {
        let mut moved = a.clone();
        moved.index = perm[a.index];
        atoms[perm[a.index]] = moved;
    }
    let bonds = m
        .bonds
        .iter()
        .rev()
        .map(|b| Bond { a: perm[b.b], b: perm[b.a], kind: b.kind })
        .collect();
    Molecule { atoms, bonds, name: m.name.clone() }
}

const TWO_ATOM: [&str; 10] = ["[C]", "[N]", "[O]", "[F]", "[Cl]", "[Br]", "[I]", "[S]", "[P]", "[B]"];

proptest! {
    #[test]
    fn annotations_are_permutation_equivariant(idx in 0usize..100, seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mols = common::corpus_molecules();
        let (_, m) = &mols[idx % mols.len()];
        let mut perm: Vec<usize> = (0..m.atoms.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let p = permute(m, &perm);
        let params = PeoeParams::default();
        let q = gasteiger_charges(m, &params, 6).unwrap();
        let qp = gasteiger_charges(&p, &params, 6).unwrap();
        for i in 0..m.atoms.len() {
            prop_assert_eq!(valence(m, i).unwrap(), valence(&p, perm[i]).unwrap());
            prop_assert_eq!(hybridization(m, i).unwrap(), hybridization(&p, perm[i]).unwrap());
            prop_assert!((q[i] - qp[perm[i]]).abs() < 1e-12);
        }
    }

    #[test]
    fn more_electronegative_atom_ends_negative(i in 0usize..10, j in 0usize..10) {
        prop_assume!(i != j);
        let s = format!("{}{}", TWO_ATOM[i], TWO_ATOM[j]);
        let m = Molecule::from_smiles(&s).unwrap();
        let params = PeoeParams::default();
        let chi0 = |k: usize| {
            let h = hybridization(&m, k).unwrap();
            params.get(m.atoms[k].atomic_number, h).unwrap().a
        };
        let q = gasteiger_charges(&m, &params, 6).unwrap();
        let (c0, c1) = (chi0(0), chi0(1));
        if c0 > c1 {
            prop_assert!(q[0] < 0.0 && q[1] > 0.0, "{}: {:?}", s, q);
        } else if c1 > c0 {
            prop_assert!(q[1] < 0.0 && q[0] > 0.0, "{}: {:?}", s, q);
        }
        prop_assert!((q[0] + q[1]).abs() < 1e-12);
    }
}

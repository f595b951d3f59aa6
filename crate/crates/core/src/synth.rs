//! Random drug-like SMILES from a small template grammar: one scaffold with
//! up to three substituents on distinct ring or chain positions.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Scaffold atoms in SMILES order, with whether each may carry a substituent.
const SCAFFOLDS: &[&[(&str, bool)]] = &[
    &[("c1", true), ("c", true), ("c", true), ("c", true), ("c", true), ("c1", true)],
    &[("c1", true), ("c", true), ("c", true), ("n", false), ("c", true), ("c1", true)],
    &[("C1", true), ("C", true), ("C", true), ("C", true), ("C", true), ("C1", true)],
    &[("C1", true), ("C", true), ("C", true), ("C", true), ("C1", true)],
    &[("c1", true), ("c", true), ("c", true), ("s", false), ("c1", true)],
    &[("C1", true), ("C", true), ("N", false), ("C", true), ("C", true), ("O1", false)],
    &[
        ("c1", true),
        ("c", true),
        ("c", true),
        ("c2", false),
        ("c", true),
        ("c", true),
        ("c", true),
        ("c", true),
        ("c2", false),
        ("c1", true),
    ],
    &[("C", true), ("C", true), ("C", true)],
    &[("C", true), ("C", true), ("C", true), ("C", true), ("C", true)],
    &[("C", true), ("C", true), ("O", false), ("C", true), ("C", true)],
];

/// Substituents that are not carboxylic acids.
const SUBSTITUENTS: &[&str] = &[
    "C", "CC", "O", "N", "F", "Cl", "Br", "OC", "C#N", "C(F)(F)F", "[N+](=O)[O-]", "C(C)C", "C(=O)C", "C(=O)N",
    "C(=O)OC", "S", "NC(=O)C",
];

/// Substituents whose heavy-atom skeleton matches the acid group exactly
/// (a carbon with two terminal neighbours).
pub const ACID_ISOSTERES: &[&str] = &["C(C)C", "C(=O)C", "C(=O)N", "C(O)C", "C(=C)C"];

pub const ACID: &str = "C(=O)O";

fn assemble(scaffold: &[(&str, bool)], subs: &[&str], rng: &mut impl Rng) -> String {
    let slots: Vec<usize> = (0..scaffold.len()).filter(|&i| scaffold[i].1).collect();
    let chosen: Vec<usize> = slots.choose_multiple(rng, subs.len().min(slots.len())).copied().collect();
    let mut out = String::new();
    for (i, (atom, _)) in scaffold.iter().enumerate() {
        out.push_str(atom);
        if let Some(k) = chosen.iter().position(|&c| c == i) {
            out.push('(');
            out.push_str(subs[k]);
            out.push(')');
        }
    }
    out
}

/// One random molecule with 1–3 substituents.
pub fn random_smiles(rng: &mut impl Rng) -> String {
    let scaffold = SCAFFOLDS.choose(rng).unwrap();
    let n = rng.gen_range(1..=3);
    let subs: Vec<&str> = (0..n).map(|_| *SUBSTITUENTS.choose(rng).unwrap()).collect();
    assemble(scaffold, &subs, rng)
}

pub fn random_molecules(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_smiles(&mut rng)).collect()
}

/// Balanced task: label 1 iff the molecule carries a carboxylic acid. The
/// group's slot in a negative is filled by an acid isostere with probability
/// `isostere_rate`, otherwise by a random substituent; both classes then get
/// 0–2 further substituents from the same distribution.
pub fn functional_group_task(n: usize, isostere_rate: f64, seed: u64) -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2 == 0;
            let scaffold = SCAFFOLDS.choose(&mut rng).unwrap();
            let lead = if label {
                ACID
            } else if rng.gen_bool(isostere_rate) {
                ACID_ISOSTERES.choose(&mut rng).unwrap()
            } else {
                SUBSTITUENTS.choose(&mut rng).unwrap()
            };
            let mut subs = vec![lead];
            for _ in 0..rng.gen_range(0..=2) {
                subs.push(SUBSTITUENTS.choose(&mut rng).unwrap());
            }
            (assemble(scaffold, &subs, &mut rng), label)
        })
        .collect()
}

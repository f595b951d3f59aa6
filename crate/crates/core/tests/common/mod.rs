#![allow(dead_code)]

use chemimg::Molecule;

pub const CORPUS: &str = include_str!("../data/corpus.smi");

/// (smiles, name) rows of the test corpus.
pub fn corpus() -> Vec<(&'static str, &'static str)> {
    CORPUS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let mut parts = l.splitn(2, '\t');
            (parts.next().unwrap(), parts.next().unwrap_or(""))
        })
        .collect()
}

pub fn corpus_molecules() -> Vec<(String, Molecule)> {
    corpus()
        .into_iter()
        .map(|(s, name)| {
            let mut m = Molecule::from_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"));
            m.name = Some(name.to_string());
            (s.to_string(), m)
        })
        .collect()
}

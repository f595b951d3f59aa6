//! Print PEOE partial charges for each SMILES given on the command line.
//!
//! `cargo run -p chemimg --example charges -- CCO c1ccccc1`

use chemimg::percept::{peoe, PeoeParams, DEFAULT_PEOE_ITERATIONS};
use chemimg::Molecule;

fn main() {
    let params = PeoeParams::default();
    for s in std::env::args().skip(1) {
        let m = match Molecule::from_smiles(&s) {
            Ok(m) => m,
            Err(e) => {
                eprintln!("{s}: {e}");
                continue;
            }
        };
        let r = match peoe(&m, &params, DEFAULT_PEOE_ITERATIONS) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{s}: {e}");
                continue;
            }
        };
        println!("{s}");
        for (i, a) in m.atoms.iter().enumerate() {
            let h = a.total_h();
            let per_h = if h > 0 { r.attached_h_charges[i] / f64::from(h) } else { 0.0 };
            println!("  {:>3} {:<2} q = {:+.6}  ({h} H at {per_h:+.6} each)", i, a.element, r.atom_charges[i]);
        }
    }
}

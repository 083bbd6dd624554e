use std::path::PathBuf;

use solcur::molparse::{is_isomorphic, parse_smiles, write_smiles};
use solcur::rng::DetRng;
use solcur::standardize::{canonical_key, standardize_smiles, StandardizeOptions};

fn corpus() -> Vec<String> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/corpus.smi");
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

#[test]
fn corpus_parses_and_round_trips() {
    let smiles = corpus();
    assert!(smiles.len() >= 100);
    for s in &smiles {
        let g = parse_smiles(s).unwrap_or_else(|e| panic!("{s}: {e}"));
        let ranks: Vec<usize> = (0..g.atom_count()).collect();
        for stereo in [false, true] {
            let text = write_smiles(&g, &ranks, stereo);
            let back = parse_smiles(&text).unwrap_or_else(|e| panic!("{s} -> {text}: {e}"));
            assert!(is_isomorphic(&g, &back), "{s} -> {text}");
        }
    }
}

#[test]
fn keys_survive_renumbering() {
    let mut rng = DetRng::new(2024);
    for s in corpus() {
        let g = parse_smiles(&s).unwrap();
        let key = canonical_key(&g);
        let mut ranks: Vec<usize> = (0..g.atom_count()).collect();
        for _ in 0..40 {
            rng.shuffle(&mut ranks);
            let h = parse_smiles(&write_smiles(&g, &ranks, true)).unwrap();
            assert_eq!(canonical_key(&h), key, "{s}");
        }
    }
}

#[test]
fn canonical_output_is_a_fixpoint() {
    for s in corpus() {
        let key = canonical_key(&parse_smiles(&s).unwrap());
        let again = canonical_key(&parse_smiles(&key.stereo_key).unwrap());
        assert_eq!(again, key, "{s}");
        assert_eq!(
            canonical_key(&parse_smiles(&key.plain_key).unwrap()).plain_key,
            key.plain_key
        );
    }
}

#[test]
fn corpus_standardizes() {
    let mut rejected = Vec::new();
    for s in corpus() {
        let out = standardize_smiles(&s, StandardizeOptions::default());
        assert!(out.parse_error.is_none(), "{s}");
        if out.key.is_none() {
            rejected.push(s);
        }
    }
    // Chloride outweighs ammonium, leaving one heavy atom.
    assert_eq!(rejected, vec!["[NH4+].[Cl-]".to_string()]);
}

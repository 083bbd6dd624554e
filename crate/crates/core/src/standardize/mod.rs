//! Structure standardization: desalting, neutralization, organic filtering
//! and canonical identity keys.

mod canon;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::element::Element;
use crate::molparse::{components, parse_smiles, MolGraph, SmilesError, StereoNeighbor};
use crate::rounding::round_half_away;

pub(crate) use canon::atom_invariant;

/// Identity keys of a standardized structure. `plain_key` ignores stereo
/// and is what deduplication, weighting and fold assignment key on.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StructureKey {
    pub stereo_key: String,
    pub plain_key: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    Metal,
    SingleHeavyAtom,
    ParseError,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::Metal => "metal",
            RejectReason::SingleHeavyAtom => "single-heavy-atom",
            RejectReason::ParseError => "parse-error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StandardizeReport {
    pub removed_fragments: usize,
    pub neutralized_atoms: usize,
    pub rejected_reason: Option<RejectReason>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StandardizeOptions {
    pub neutralize: bool,
}

impl Default for StandardizeOptions {
    fn default() -> Self {
        StandardizeOptions { neutralize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StandardizeError {
    #[error("value {0} is not finite")]
    NonFiniteValue(f64),
}

/// Elements kept by the organic filter.
pub const ORGANIC_ELEMENTS: [Element; 13] = [
    Element::H,
    Element::B,
    Element::C,
    Element::N,
    Element::O,
    Element::F,
    Element::SI,
    Element::P,
    Element::S,
    Element::CL,
    Element::SE,
    Element::BR,
    Element::I,
];

/// Mass in 1e-4 Da units, summed as integers so equal formulas compare
/// equal regardless of atom order.
fn mass_units(g: &MolGraph) -> i64 {
    let h = (Element::H.mass() * 1e4).round() as i64;
    (0..g.atom_count())
        .map(|i| (g.atom(i).element.mass() * 1e4).round() as i64 + i64::from(g.implicit_h(i)) * h)
        .sum()
}

/// Removes hydrogen atoms that hang off a heavy atom and adds them to that
/// atom's hydrogen count. Isotopic or charged hydrogens are kept.
pub fn fold_hydrogens(g: &MolGraph) -> MolGraph {
    let foldable: Vec<bool> = (0..g.atom_count())
        .map(|i| {
            let a = g.atom(i);
            !a.is_heavy()
                && a.isotope.is_none()
                && a.formal_charge == 0
                && g.degree(i) == 1
                && g.atom(g.neighbors(i)[0].0).is_heavy()
        })
        .collect();
    if !foldable.iter().any(|&f| f) {
        return g.clone();
    }
    let mut g2 = g.clone();
    let extra: Vec<u8> = (0..g.atom_count())
        .map(|i| g.neighbors(i).iter().filter(|&&(n, _)| foldable[n]).count() as u8)
        .collect();
    let implicit: Vec<u8> = (0..g.atom_count()).map(|i| g.implicit_h(i)).collect();
    for (i, atom) in g2.atoms_mut().iter_mut().enumerate() {
        if extra[i] > 0 {
            atom.explicit_h = Some(implicit[i] + extra[i]);
            for n in &mut atom.stereo_neighbors {
                if let StereoNeighbor::Atom(j) = *n {
                    if foldable[j] {
                        *n = StereoNeighbor::ImplicitH;
                    }
                }
            }
        }
    }
    let keep: Vec<usize> = (0..g.atom_count()).filter(|&i| !foldable[i]).collect();
    g2.subgraph(&keep)
}

/// Keeps the fragment with the most heavy atoms; ties go to the larger
/// mass, then to the smaller canonical plain key.
pub fn strip_salts(g: &MolGraph) -> MolGraph {
    strip_salts_counted(g).0
}

fn strip_salts_counted(g: &MolGraph) -> (MolGraph, usize) {
    let parts = components(g);
    let removed = parts.len() - 1;
    if removed == 0 {
        return (g.clone(), 0);
    }
    let max_heavy = parts
        .iter()
        .map(MolGraph::heavy_atom_count)
        .max()
        .unwrap_or(0);
    let mut tied: Vec<(MolGraph, i64)> = parts
        .into_iter()
        .filter(|p| p.heavy_atom_count() == max_heavy)
        .map(|p| {
            let m = mass_units(&p);
            (p, m)
        })
        .collect();
    let max_mass = tied.iter().map(|(_, m)| *m).max().unwrap_or(0);
    tied.retain(|(_, m)| *m == max_mass);
    if tied.len() == 1 {
        return (tied.pop().unwrap().0, removed);
    }
    let best = tied
        .into_iter()
        .map(|(p, _)| {
            let key = canonical_key(&p).plain_key;
            (key, p)
        })
        .min_by(|a, b| a.0.cmp(&b.0))
        .unwrap()
        .1;
    (best, removed)
}

fn has_allowed_valence(g: &MolGraph, i: usize, h: u8) -> bool {
    let atom = g.atom(i);
    let total = g.bond_valence_sum(i) + h + u8::from(atom.aromatic);
    atom.element.default_valences().contains(&total)
}

/// Rule-based charge removal on a single fragment. Returns the edited
/// graph and how many atoms changed.
///
/// * `+1` with at least one hydrogen: drop a hydrogen.
/// * `-1` on N, O or S: add a hydrogen.
///
/// Atoms bonded to an opposite charge (zwitterion-style pairs such as
/// charge-separated nitro) are left alone, as is any change that would
/// leave the atom at a valence outside its neutral table.
pub fn neutralize(g: &MolGraph) -> (MolGraph, usize) {
    let mut edits: Vec<(usize, u8)> = Vec::new();
    for i in 0..g.atom_count() {
        let atom = g.atom(i);
        let charge = atom.formal_charge;
        if charge != 1 && charge != -1 {
            continue;
        }
        let paired = g
            .neighbors(i)
            .iter()
            .any(|&(n, _)| g.atom(n).formal_charge.signum() == -charge.signum());
        if paired {
            continue;
        }
        let h = g.implicit_h(i);
        let new_h = if charge == 1 {
            if h == 0 {
                continue;
            }
            h - 1
        } else {
            if !matches!(atom.element, Element::N | Element::O | Element::S) {
                continue;
            }
            h + 1
        };
        if has_allowed_valence(g, i, new_h) {
            edits.push((i, new_h));
        }
    }
    let mut out = g.clone();
    for &(i, h) in &edits {
        let atom = &mut out.atoms_mut()[i];
        atom.formal_charge = 0;
        atom.explicit_h = Some(h);
        if h == 0 {
            atom.stereo_neighbors
                .retain(|n| *n != StereoNeighbor::ImplicitH);
        }
    }
    (out, edits.len())
}

pub fn classify_organic(g: &MolGraph) -> Classification {
    if g.atoms()
        .iter()
        .any(|a| !ORGANIC_ELEMENTS.contains(&a.element))
    {
        Classification::Rejected(RejectReason::Metal)
    } else if g.heavy_atom_count() < 2 {
        Classification::Rejected(RejectReason::SingleHeavyAtom)
    } else {
        Classification::Accepted
    }
}

/// Canonical SMILES keys, with and without stereo marks.
pub fn canonical_key(g: &MolGraph) -> StructureKey {
    let folded = fold_hydrogens(g);
    let (plain_key, stereo_key) = canon::canonical_pair(&folded);
    StructureKey {
        stereo_key,
        plain_key,
    }
}

/// `plain_key|value` with the value rounded to two decimals, half away
/// from zero. Records with equal keys are duplicates.
pub fn record_key(key: &StructureKey, value: f64) -> Result<String, StandardizeError> {
    if !value.is_finite() {
        return Err(StandardizeError::NonFiniteValue(value));
    }
    Ok(format!("{}|{}", key.plain_key, round_half_away(value, 2)))
}

/// Outcome of running one SMILES through the whole standardization chain.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub key: Option<StructureKey>,
    pub graph: Option<MolGraph>,
    pub report: StandardizeReport,
    pub parse_error: Option<SmilesError>,
}

/// parse → fold hydrogens → strip salts → neutralize (optional) →
/// organic filter → canonical key.
pub fn standardize_smiles(text: &str, opts: StandardizeOptions) -> Standardized {
    let mut report = StandardizeReport::default();
    let g = match parse_smiles(text) {
        Ok(g) => g,
        Err(e) => {
            report.rejected_reason = Some(RejectReason::ParseError);
            return Standardized {
                key: None,
                graph: None,
                report,
                parse_error: Some(e),
            };
        }
    };
    let g = fold_hydrogens(&g);
    let (mut g, removed) = strip_salts_counted(&g);
    report.removed_fragments = removed;
    if opts.neutralize {
        let (n, changed) = neutralize(&g);
        g = n;
        report.neutralized_atoms = changed;
    }
    if let Classification::Rejected(reason) = classify_organic(&g) {
        report.rejected_reason = Some(reason);
        return Standardized {
            key: None,
            graph: Some(g),
            report,
            parse_error: None,
        };
    }
    let key = canonical_key(&g);
    Standardized {
        key: Some(key),
        graph: Some(g),
        report,
        parse_error: None,
    }
}

//! Molecular graphs and the SMILES reader/writer.
//!
//! Graphs keep hydrogens symbolic: an atom either carries an explicit
//! hydrogen count (bracket atoms) or leaves it implicit, in which case the
//! count is derived from the default valence table on demand.

mod iso;
mod parse;
mod write;

use std::collections::VecDeque;

use thiserror::Error;

use crate::element::Element;

pub use iso::is_isomorphic;
pub use parse::parse_smiles;
pub use parse::{SmilesError, SmilesErrorKind};
pub use write::write_smiles;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Chirality {
    #[default]
    None,
    /// `@`: neighbours seen anticlockwise when viewed from the first one.
    CounterClockwise,
    /// `@@`
    Clockwise,
}

impl Chirality {
    pub fn inverted(self) -> Chirality {
        match self {
            Chirality::None => Chirality::None,
            Chirality::CounterClockwise => Chirality::Clockwise,
            Chirality::Clockwise => Chirality::CounterClockwise,
        }
    }
}

/// A neighbour slot in the reference order of a tetrahedral centre.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StereoNeighbor {
    Atom(usize),
    /// The hydrogen written inside the centre's bracket.
    ImplicitH,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: Element,
    pub isotope: Option<u16>,
    pub formal_charge: i8,
    pub aromatic: bool,
    /// Bracket hydrogen count; `None` means implicit (derived from valence).
    pub explicit_h: Option<u8>,
    pub chirality: Chirality,
    /// Neighbour order the chirality mark refers to. Empty when unmarked.
    pub stereo_neighbors: Vec<StereoNeighbor>,
}

impl Atom {
    pub fn new(element: Element) -> Atom {
        Atom {
            element,
            isotope: None,
            formal_charge: 0,
            aromatic: false,
            explicit_h: None,
            chirality: Chirality::None,
            stereo_neighbors: Vec::new(),
        }
    }

    pub fn is_heavy(&self) -> bool {
        self.element != Element::H
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to the valence sum; aromatic bonds count one here and the
    /// aromatic atom itself accounts for the extra pi electron.
    pub fn valence(self) -> u8 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }
}

/// Directional single-bond mark for double-bond geometry. Stored relative
/// to the bond's `a -> b` direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum BondStereo {
    #[default]
    None,
    /// `/`
    Up,
    /// `\`
    Down,
}

impl BondStereo {
    pub fn flipped(self) -> BondStereo {
        match self {
            BondStereo::None => BondStereo::None,
            BondStereo::Up => BondStereo::Down,
            BondStereo::Down => BondStereo::Up,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub stereo: BondStereo,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }

    /// Stereo mark as seen when walking the bond starting from `from`.
    pub fn stereo_from(&self, from: usize) -> BondStereo {
        if from == self.a {
            self.stereo
        } else {
            self.stereo.flipped()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("bond {0} references atom {1} out of range")]
    AtomOutOfRange(usize, usize),
    #[error("bond {0} is a self loop")]
    SelfLoop(usize),
    #[error("duplicate bond between atoms {0} and {1}")]
    DuplicateBond(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MolGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    source_text: String,
    /// Per atom: (neighbour, bond index), in bond insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl MolGraph {
    pub fn new(
        atoms: Vec<Atom>,
        bonds: Vec<Bond>,
        source_text: impl Into<String>,
    ) -> Result<MolGraph, GraphError> {
        let mut adjacency = vec![Vec::new(); atoms.len()];
        for (i, bond) in bonds.iter().enumerate() {
            for end in [bond.a, bond.b] {
                if end >= atoms.len() {
                    return Err(GraphError::AtomOutOfRange(i, end));
                }
            }
            if bond.a == bond.b {
                return Err(GraphError::SelfLoop(i));
            }
            if adjacency[bond.a].iter().any(|&(n, _)| n == bond.b) {
                return Err(GraphError::DuplicateBond(bond.a, bond.b));
            }
            adjacency[bond.a].push((bond.b, i));
            adjacency[bond.b].push((bond.a, i));
        }
        Ok(MolGraph {
            atoms,
            bonds,
            source_text: source_text.into(),
            adjacency,
        })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &Atom {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn source_text(&self) -> &str {
        &self.source_text
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atoms.iter().filter(|a| a.is_heavy()).count()
    }

    /// (neighbour, bond index) pairs.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn heavy_degree(&self, i: usize) -> usize {
        self.adjacency[i]
            .iter()
            .filter(|&&(n, _)| self.atoms[n].is_heavy())
            .count()
    }

    pub fn bond_between(&self, i: usize, j: usize) -> Option<&Bond> {
        self.adjacency[i]
            .iter()
            .find(|&&(n, _)| n == j)
            .map(|&(_, b)| &self.bonds[b])
    }

    pub fn bond_valence_sum(&self, i: usize) -> u8 {
        self.adjacency[i]
            .iter()
            .map(|&(_, b)| self.bonds[b].order.valence())
            .sum()
    }

    /// Hydrogens implied by the default valence table for an unbracketed
    /// atom in this bonding context. Elements without table entries get 0.
    pub fn default_implicit_h(&self, i: usize) -> u8 {
        let atom = &self.atoms[i];
        let used = self.bond_valence_sum(i);
        let Some(&target) = atom.element.default_valences().iter().find(|&&v| v >= used) else {
            return 0;
        };
        let pi = u8::from(atom.aromatic);
        target.saturating_sub(used).saturating_sub(pi)
    }

    /// Hydrogen count not represented as graph atoms.
    pub fn implicit_h(&self, i: usize) -> u8 {
        match self.atoms[i].explicit_h {
            Some(h) => h,
            None => self.default_implicit_h(i),
        }
    }

    /// Symbolic hydrogens plus hydrogen atoms bonded in the graph.
    pub fn total_h(&self, i: usize) -> u8 {
        let attached = self.adjacency[i]
            .iter()
            .filter(|&&(n, _)| !self.atoms[n].is_heavy())
            .count() as u8;
        self.implicit_h(i) + attached
    }

    /// Molecular mass including symbolic hydrogens.
    pub fn total_mass(&self) -> f64 {
        (0..self.atoms.len())
            .map(|i| {
                self.atoms[i].element.mass() + f64::from(self.implicit_h(i)) * Element::H.mass()
            })
            .sum()
    }

    /// Atom index sets of connected components, ordered by smallest member.
    pub fn component_atoms(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut members = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for &(n, _) in &self.adjacency[v] {
                    if !seen[n] {
                        seen[n] = true;
                        members.push(n);
                        queue.push_back(n);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }

    /// Induced subgraph on `keep` (indices in any order; output preserves
    /// their relative order in the original graph).
    pub fn subgraph(&self, keep: &[usize]) -> MolGraph {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let atoms = keep
            .iter()
            .map(|&old| {
                let mut atom = self.atoms[old].clone();
                atom.stereo_neighbors = atom
                    .stereo_neighbors
                    .iter()
                    .filter_map(|n| match *n {
                        StereoNeighbor::Atom(j) if remap[j] != usize::MAX => {
                            Some(StereoNeighbor::Atom(remap[j]))
                        }
                        StereoNeighbor::Atom(_) => None,
                        StereoNeighbor::ImplicitH => Some(StereoNeighbor::ImplicitH),
                    })
                    .collect();
                atom
            })
            .collect();
        let bonds = self
            .bonds
            .iter()
            .filter(|b| remap[b.a] != usize::MAX && remap[b.b] != usize::MAX)
            .map(|b| Bond {
                a: remap[b.a],
                b: remap[b.b],
                ..b.clone()
            })
            .collect();
        MolGraph::new(atoms, bonds, self.source_text.clone())
            .expect("induced subgraph of a valid graph is valid")
    }

    /// Mutable access for standardization passes. Edits must not touch
    /// connectivity.
    pub(crate) fn atoms_mut(&mut self) -> &mut [Atom] {
        &mut self.atoms
    }

    /// Copy with every stereo mark removed.
    pub fn without_stereo(&self) -> MolGraph {
        let mut g = self.clone();
        for atom in &mut g.atoms {
            atom.chirality = Chirality::None;
            atom.stereo_neighbors.clear();
        }
        for bond in &mut g.bonds {
            bond.stereo = BondStereo::None;
        }
        g
    }
}

/// Splits a graph into its connected components. A single-component graph
/// comes back unchanged.
pub fn components(g: &MolGraph) -> Vec<MolGraph> {
    let parts = g.component_atoms();
    if parts.len() <= 1 {
        return vec![g.clone()];
    }
    parts.iter().map(|p| g.subgraph(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_rejects_bad_bonds() {
        let atoms = vec![Atom::new(Element::C), Atom::new(Element::O)];
        let bond = |a, b| Bond {
            a,
            b,
            order: BondOrder::Single,
            stereo: BondStereo::None,
        };
        assert_eq!(
            MolGraph::new(atoms.clone(), vec![bond(0, 2)], "").unwrap_err(),
            GraphError::AtomOutOfRange(0, 2)
        );
        assert_eq!(
            MolGraph::new(atoms.clone(), vec![bond(1, 1)], "").unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert_eq!(
            MolGraph::new(atoms, vec![bond(0, 1), bond(1, 0)], "").unwrap_err(),
            GraphError::DuplicateBond(1, 0)
        );
    }

    #[test]
    fn components_split_on_dots() {
        assert_eq!(components(&parse_smiles("CCO").unwrap()).len(), 1);
        let parts = components(&parse_smiles("CCO.Cl").unwrap());
        let sizes: Vec<_> = parts.iter().map(|p| p.heavy_atom_count()).collect();
        assert_eq!(sizes, vec![3, 1]);
        let parts = components(&parse_smiles("[O-2].[O-2].[Mg+2].[Ca+2]").unwrap());
        assert_eq!(parts.len(), 4);
        assert!(parts.iter().all(|p| p.atom_count() == 1));
    }

    #[test]
    fn implicit_hydrogens_follow_valence_table() {
        let g = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(
            (0..4).map(|i| g.implicit_h(i)).collect::<Vec<_>>(),
            vec![3, 0, 0, 1]
        );
        let g = parse_smiles("c1ccsc1").unwrap();
        assert_eq!(g.implicit_h(0), 1);
        assert_eq!(g.implicit_h(3), 0);
        let g = parse_smiles("c1ccc2ccccc2c1").unwrap();
        assert_eq!(g.implicit_h(3), 0);
        assert_eq!(g.implicit_h(4), 1);
        let g = parse_smiles("[Mo]").unwrap();
        assert_eq!(g.implicit_h(0), 0);
        let g = parse_smiles("S(=O)(=O)(C)C").unwrap();
        assert_eq!(g.implicit_h(0), 0);
        let g = parse_smiles("Br").unwrap();
        assert_eq!(g.implicit_h(0), 1);
    }

    #[test]
    fn mass_includes_symbolic_hydrogens() {
        let g = parse_smiles("O").unwrap();
        assert!((g.total_mass() - 18.015).abs() < 1e-9);
    }
}

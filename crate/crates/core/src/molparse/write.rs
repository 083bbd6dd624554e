use std::fmt::Write as _;

use super::{BondOrder, BondStereo, Chirality, MolGraph, StereoNeighbor};

/// Writes `g` as SMILES, traversing atoms in `ranks` order: every
/// component starts at its lowest-ranked atom and branches are taken in
/// ascending rank. The output depends only on the graph and the ranking.
///
/// `ranks` must be a permutation of `0..g.atom_count()`.
pub fn write_smiles(g: &MolGraph, ranks: &[usize], include_stereo: bool) -> String {
    write_traced(g, ranks, include_stereo).0
}

/// Like [`write_smiles`], also returning the atoms in the order written, so
/// atom `i` of the re-parsed string is `order[i]` of `g`.
pub(crate) fn write_traced(
    g: &MolGraph,
    ranks: &[usize],
    include_stereo: bool,
) -> (String, Vec<usize>) {
    let n = g.atom_count();
    assert_eq!(ranks.len(), n, "rank vector length must match atom count");
    debug_assert!({
        let mut seen = vec![false; n];
        ranks
            .iter()
            .all(|&r| r < n && !std::mem::replace(&mut seen[r], true))
    });

    let mut plan = Plan::new(g, ranks);
    let mut by_rank: Vec<usize> = (0..n).collect();
    by_rank.sort_unstable_by_key(|&i| ranks[i]);
    let mut roots = Vec::new();
    for &start in &by_rank {
        if !plan.visited[start] {
            roots.push(start);
            plan.visit(start, None);
        }
    }
    plan.order_ring_openings();

    let mut writer = Writer {
        g,
        plan: &plan,
        include_stereo,
        out: String::new(),
        // Slot 0 is never handed out.
        digits_in_use: vec![true],
        bond_digit: vec![None; g.bonds().len()],
    };
    for (i, &root) in roots.iter().enumerate() {
        if i > 0 {
            writer.out.push('.');
        }
        writer.emit(root, None);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by_key(|&i| plan.dfs_index[i]);
    (writer.out, order)
}

struct Plan<'g> {
    g: &'g MolGraph,
    ranks: &'g [usize],
    visited: Vec<bool>,
    dfs_index: Vec<usize>,
    next_index: usize,
    /// Tree children as (child, bond) in traversal order.
    children: Vec<Vec<(usize, usize)>>,
    /// Ring bonds closed at an atom, in discovery order.
    closings: Vec<Vec<usize>>,
    /// Ring bonds opened at an atom.
    openings: Vec<Vec<usize>>,
    ring_bond: Vec<bool>,
}

impl<'g> Plan<'g> {
    fn new(g: &'g MolGraph, ranks: &'g [usize]) -> Self {
        let n = g.atom_count();
        Plan {
            g,
            ranks,
            visited: vec![false; n],
            dfs_index: vec![usize::MAX; n],
            next_index: 0,
            children: vec![Vec::new(); n],
            closings: vec![Vec::new(); n],
            openings: vec![Vec::new(); n],
            ring_bond: vec![false; g.bonds().len()],
        }
    }

    fn visit(&mut self, v: usize, parent_bond: Option<usize>) {
        self.visited[v] = true;
        self.dfs_index[v] = self.next_index;
        self.next_index += 1;
        let mut nbrs = self.g.neighbors(v).to_vec();
        nbrs.sort_unstable_by_key(|&(w, _)| self.ranks[w]);
        for (w, b) in nbrs {
            if Some(b) == parent_bond || self.ring_bond[b] {
                continue;
            }
            if self.visited[w] {
                // w is an ancestor: the ring opens there and closes here.
                self.ring_bond[b] = true;
                self.openings[w].push(b);
                self.closings[v].push(b);
            } else {
                self.children[v].push((w, b));
                self.visit(w, Some(b));
            }
        }
    }

    fn order_ring_openings(&mut self) {
        let g = self.g;
        for (v, list) in self.openings.iter_mut().enumerate() {
            list.sort_unstable_by_key(|&b| self.dfs_index[g.bonds()[b].other(v)]);
        }
    }
}

struct Writer<'a> {
    g: &'a MolGraph,
    plan: &'a Plan<'a>,
    include_stereo: bool,
    out: String,
    digits_in_use: Vec<bool>,
    bond_digit: Vec<Option<usize>>,
}

impl Writer<'_> {
    fn emit(&mut self, v: usize, parent: Option<(usize, usize)>) {
        let g = self.g;
        let plan = self.plan;

        if let Some((from, b)) = parent {
            self.bond_symbol(b, from);
        }

        // Output neighbour order, needed to restate chirality.
        let mut nbr_order: Vec<StereoNeighbor> = Vec::new();
        if let Some((from, _)) = parent {
            nbr_order.push(StereoNeighbor::Atom(from));
        }
        let ring_bonds: Vec<usize> = plan.closings[v]
            .iter()
            .chain(plan.openings[v].iter())
            .copied()
            .collect();
        nbr_order.extend(
            ring_bonds
                .iter()
                .map(|&b| StereoNeighbor::Atom(g.bonds()[b].other(v))),
        );
        nbr_order.extend(
            plan.children[v]
                .iter()
                .map(|&(c, _)| StereoNeighbor::Atom(c)),
        );

        self.atom(v, &mut nbr_order, parent.is_some());

        let mut freed = Vec::new();
        for &b in &plan.closings[v] {
            let digit = self.bond_digit[b].expect("ring opened before it closes");
            self.push_digit(digit);
            freed.push(digit);
        }
        for &b in &plan.openings[v] {
            let digit = match (1..self.digits_in_use.len()).find(|&d| !self.digits_in_use[d]) {
                Some(d) => d,
                None => {
                    self.digits_in_use.push(false);
                    self.digits_in_use.len() - 1
                }
            };
            self.digits_in_use[digit] = true;
            self.bond_digit[b] = Some(digit);
            self.bond_symbol(b, v);
            self.push_digit(digit);
        }
        for d in freed {
            self.digits_in_use[d] = false;
        }

        let kids = &plan.children[v];
        for (i, &(c, b)) in kids.iter().enumerate() {
            if i + 1 < kids.len() {
                self.out.push('(');
                self.emit(c, Some((v, b)));
                self.out.push(')');
            } else {
                self.emit(c, Some((v, b)));
            }
        }
    }

    fn push_digit(&mut self, d: usize) {
        if d < 10 {
            self.out.push(char::from(b'0' + d as u8));
        } else {
            let _ = write!(self.out, "%{d:02}");
        }
    }

    fn bond_symbol(&mut self, b: usize, from: usize) {
        let bond = &self.g.bonds()[b];
        let both_aromatic = self.g.atom(bond.a).aromatic && self.g.atom(bond.b).aromatic;
        let symbol = match bond.order {
            BondOrder::Single => match bond.stereo_from(from) {
                BondStereo::Up if self.include_stereo => "/",
                BondStereo::Down if self.include_stereo => "\\",
                _ if both_aromatic => "-",
                _ => "",
            },
            BondOrder::Double => "=",
            BondOrder::Triple => "#",
            BondOrder::Aromatic if both_aromatic => "",
            BondOrder::Aromatic => ":",
        };
        self.out.push_str(symbol);
    }

    fn atom(&mut self, v: usize, nbr_order: &mut Vec<StereoNeighbor>, has_parent: bool) {
        let g = self.g;
        let atom = g.atom(v);
        let h = g.implicit_h(v);
        let chirality = if self.include_stereo && atom.chirality != Chirality::None {
            if h > 0 {
                let at = usize::from(has_parent);
                nbr_order.insert(at, StereoNeighbor::ImplicitH);
            }
            restate_chirality(atom.chirality, &atom.stereo_neighbors, nbr_order)
        } else {
            Chirality::None
        };

        let symbol = if atom.aromatic {
            atom.element.symbol().to_ascii_lowercase()
        } else {
            atom.element.symbol().to_string()
        };
        let bare = atom.element.is_organic_subset()
            && atom.formal_charge == 0
            && atom.isotope.is_none()
            && chirality == Chirality::None
            && h == g.default_implicit_h(v);
        if bare {
            self.out.push_str(&symbol);
            return;
        }
        self.out.push('[');
        if let Some(iso) = atom.isotope {
            let _ = write!(self.out, "{iso}");
        }
        self.out.push_str(&symbol);
        match chirality {
            Chirality::CounterClockwise => self.out.push('@'),
            Chirality::Clockwise => self.out.push_str("@@"),
            Chirality::None => {}
        }
        match h {
            0 => {}
            1 => self.out.push('H'),
            _ => {
                let _ = write!(self.out, "H{h}");
            }
        }
        match atom.formal_charge {
            0 => {}
            1 => self.out.push('+'),
            -1 => self.out.push('-'),
            c if c > 0 => {
                let _ = write!(self.out, "+{c}");
            }
            c => {
                let _ = write!(self.out, "-{}", -c);
            }
        }
        self.out.push(']');
    }
}

/// Re-expresses a chirality mark given relative to `reference` so that it
/// holds for the neighbour order `actual`. Falls back to the original mark
/// when the two orders do not list the same neighbours.
fn restate_chirality(
    mark: Chirality,
    reference: &[StereoNeighbor],
    actual: &[StereoNeighbor],
) -> Chirality {
    if reference.len() != actual.len() {
        return mark;
    }
    let mut perm = Vec::with_capacity(actual.len());
    for n in actual {
        match reference.iter().position(|r| r == n) {
            Some(p) => perm.push(p),
            None => return mark,
        }
    }
    // Parity by counting inversions.
    let mut inversions = 0;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        mark
    } else {
        mark.inverted()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molparse::{is_isomorphic, parse_smiles};

    fn identity(g: &MolGraph) -> Vec<usize> {
        (0..g.atom_count()).collect()
    }

    fn roundtrip(smiles: &str) -> String {
        let g = parse_smiles(smiles).unwrap();
        write_smiles(&g, &identity(&g), true)
    }

    #[test]
    fn identity_ranks_reproduce_simple_input() {
        for s in [
            "O",
            "CCO",
            "CC(=O)O",
            "c1ccccc1",
            "C#N",
            "[Na+].[Cl-]",
            "F/C=C/F",
            "N[C@@H](C)C(=O)O",
        ] {
            assert_eq!(roundtrip(s), s);
        }
        assert_eq!(roundtrip("[CH4]"), "C");
        assert_eq!(roundtrip("[NH4+]"), "[NH4+]");
        assert_eq!(roundtrip("c1cc[nH]c1"), "c1cc[nH]c1");
        assert_eq!(roundtrip("C%12CC%12"), "C1CC1");
    }

    #[test]
    fn stereo_can_be_omitted() {
        let g = parse_smiles("F/C=C\\F").unwrap();
        assert_eq!(write_smiles(&g, &identity(&g), false), "FC=CF");
        let g = parse_smiles("N[C@@H](C)C(=O)O").unwrap();
        assert_eq!(write_smiles(&g, &identity(&g), false), "NC(C)C(=O)O");
    }

    #[test]
    fn ethanol_from_two_orders() {
        let g = parse_smiles("CCO").unwrap();
        let a = write_smiles(&g, &[0, 1, 2], false);
        let b = write_smiles(&g, &[2, 1, 0], false);
        assert_eq!(a, "CCO");
        assert_eq!(b, "OCC");
        for s in [a, b] {
            assert!(is_isomorphic(&g, &parse_smiles(&s).unwrap()));
        }
    }

    #[test]
    fn benzene_roundtrip_is_one_aromatic_ring() {
        let g = parse_smiles("c1ccccc1").unwrap();
        let s = write_smiles(&g, &[3, 1, 4, 0, 5, 2], false);
        let h = parse_smiles(&s).unwrap();
        assert_eq!(h.atom_count(), 6);
        assert!(h.atoms().iter().all(|a| a.aromatic));
        assert_eq!(h.component_atoms().len(), 1);
        assert!((0..6).all(|i| h.degree(i) == 2));
        assert!(is_isomorphic(&g, &h));
    }

    /// Writes `g` with `ranks`, re-parses, and checks that the copy writes
    /// identically (stereo included) under a second ranking.
    fn stereo_preserved(smiles: &str, ranks: &[usize], probe: &[usize]) {
        let g = parse_smiles(smiles).unwrap();
        let (s, order) = write_traced(&g, ranks, true);
        let h = parse_smiles(&s).unwrap();
        let probe_h: Vec<usize> = order.iter().map(|&i| probe[i]).collect();
        assert_eq!(
            write_smiles(&g, probe, true),
            write_smiles(&h, &probe_h, true),
            "{smiles} via {s}"
        );
    }

    #[test]
    fn chirality_survives_reordering() {
        let ala = "N[C@@H](C)C(=O)O";
        stereo_preserved(ala, &[5, 1, 4, 2, 3, 0], &[0, 1, 2, 3, 4, 5]);
        stereo_preserved(ala, &[2, 0, 5, 1, 4, 3], &[3, 1, 2, 0, 5, 4]);
        stereo_preserved("[C@]1(F)(Cl)CC1", &[4, 0, 1, 2, 3], &[0, 1, 2, 3, 4]);
        stereo_preserved("F/C=C/F", &[3, 2, 1, 0], &[0, 1, 2, 3]);
        stereo_preserved("F/C=C\\F", &[1, 0, 3, 2], &[0, 1, 2, 3]);

        let g = parse_smiles(ala).unwrap();
        let mirror = parse_smiles("N[C@H](C)C(=O)O").unwrap();
        let r: Vec<usize> = (0..6).collect();
        assert_ne!(write_smiles(&g, &r, true), write_smiles(&mirror, &r, true));
    }

    #[test]
    fn double_digit_rings() {
        // Eleven simultaneous ring openings force %nn closures.
        let mut s = String::from("C");
        for i in 1..=11 {
            s.push_str(&format!("%{i:02}"));
        }
        s.push('C');
        for i in 1..=11 {
            s.push_str(&format!("C%{i:02}"));
        }
        let g = parse_smiles(&s).unwrap();
        let out = write_smiles(&g, &identity(&g), false);
        assert!(out.contains("%10"));
        assert!(is_isomorphic(&g, &parse_smiles(&out).unwrap()));
    }

    #[test]
    fn restate_chirality_parity() {
        use StereoNeighbor::Atom as A;
        let r = [A(0), A(1), A(2), A(3)];
        assert_eq!(
            restate_chirality(Chirality::Clockwise, &r, &r),
            Chirality::Clockwise
        );
        assert_eq!(
            restate_chirality(Chirality::Clockwise, &r, &[A(1), A(0), A(2), A(3)]),
            Chirality::CounterClockwise
        );
        assert_eq!(
            restate_chirality(Chirality::Clockwise, &r, &[A(1), A(2), A(0), A(3)]),
            Chirality::Clockwise
        );
    }
}

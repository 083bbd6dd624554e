//! Canonical atom ranking.
//!
//! Atoms start from an invariant built from element, degree, charge,
//! hydrogen count, aromaticity and isotope. Classes are refined by the
//! sorted multiset of neighbour classes until stable. Remaining ties are
//! broken by individualizing each member of the first non-singleton class
//! in turn and keeping the branch whose written SMILES is smallest.
//! Automorphisms discovered along the way prune equivalent branches.

use crate::molparse::{write_smiles, BondOrder, MolGraph};

/// Canonical SMILES without and with stereo marks.
pub(crate) fn canonical_pair(g: &MolGraph) -> (String, String) {
    let n = g.atom_count();
    if n == 0 {
        return (String::new(), String::new());
    }
    let plain = g.without_stereo();
    let has_stereo = g
        .atoms()
        .iter()
        .any(|a| a.chirality != crate::molparse::Chirality::None)
        || g.bonds()
            .iter()
            .any(|b| b.stereo != crate::molparse::BondStereo::None);
    let initial = refine(&plain, initial_classes(&plain));
    let mut search = Search {
        plain: &plain,
        full: g,
        has_stereo,
        best: None,
        automorphisms: Vec::new(),
    };
    let mut path = Vec::new();
    search.descend(initial, &mut path);
    let best = search.best.expect("search visits at least one leaf");
    (best.plain, best.stereo)
}

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Atom invariant used to seed refinement and by the fingerprint.
pub(crate) fn atom_invariant(g: &MolGraph, i: usize) -> [i64; 6] {
    let a = g.atom(i);
    [
        i64::from(a.element.atomic_number()),
        g.degree(i) as i64,
        i64::from(a.formal_charge),
        i64::from(g.total_h(i)),
        i64::from(a.aromatic),
        a.isotope.map_or(0, i64::from),
    ]
}

/// Assigns each atom the number of atoms with a strictly smaller key, so a
/// class value is the start index of its cell in sorted order.
fn classes_from_keys<K: Ord>(keys: &[K]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&x, &y| keys[x].cmp(&keys[y]));
    let mut classes = vec![0; keys.len()];
    for pos in 1..idx.len() {
        classes[idx[pos]] = if keys[idx[pos]] == keys[idx[pos - 1]] {
            classes[idx[pos - 1]]
        } else {
            pos
        };
    }
    classes
}

fn initial_classes(g: &MolGraph) -> Vec<usize> {
    let keys: Vec<[i64; 6]> = (0..g.atom_count()).map(|i| atom_invariant(g, i)).collect();
    classes_from_keys(&keys)
}

fn distinct(classes: &[usize]) -> usize {
    let mut v = classes.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn refine(g: &MolGraph, mut classes: Vec<usize>) -> Vec<usize> {
    let mut count = distinct(&classes);
    loop {
        let keys: Vec<(usize, Vec<(usize, u8)>)> = (0..g.atom_count())
            .map(|i| {
                let mut nb: Vec<(usize, u8)> = g
                    .neighbors(i)
                    .iter()
                    .map(|&(w, b)| (classes[w], bond_code(g.bonds()[b].order)))
                    .collect();
                nb.sort_unstable();
                (classes[i], nb)
            })
            .collect();
        let next = classes_from_keys(&keys);
        let next_count = distinct(&next);
        classes = next;
        if next_count == count {
            return classes;
        }
        count = next_count;
    }
}

struct Leaf {
    plain: String,
    stereo: String,
    ranks: Vec<usize>,
}

struct Search<'a> {
    plain: &'a MolGraph,
    full: &'a MolGraph,
    has_stereo: bool,
    best: Option<Leaf>,
    automorphisms: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn descend(&mut self, classes: Vec<usize>, path: &mut Vec<usize>) {
        let n = classes.len();
        let mut sizes = vec![0usize; n];
        for &c in &classes {
            sizes[c] += 1;
        }
        let Some(target) = (0..n).find(|&c| sizes[c] > 1) else {
            self.leaf(classes);
            return;
        };
        let cell: Vec<usize> = (0..n).filter(|&i| classes[i] == target).collect();
        let mut explored: Vec<usize> = Vec::new();
        for &u in &cell {
            if !explored.is_empty() && self.equivalent_to_explored(u, &explored, path) {
                continue;
            }
            let mut next = classes.clone();
            for &v in &cell {
                if v != u {
                    next[v] = target + 1;
                }
            }
            let next = refine(self.plain, next);
            path.push(u);
            self.descend(next, path);
            path.pop();
            explored.push(u);
        }
    }

    /// True when a known automorphism fixing `path` pointwise links `u` to
    /// an already explored sibling (orbits of the generated group).
    fn equivalent_to_explored(&self, u: usize, explored: &[usize], path: &[usize]) -> bool {
        let n = self.plain.atom_count();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut any = false;
        for perm in &self.automorphisms {
            if path.iter().any(|&p| perm[p] != p) {
                continue;
            }
            any = true;
            for (x, &y) in perm.iter().enumerate() {
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx] = ry;
                }
            }
        }
        if !any {
            return false;
        }
        let ru = find(&mut parent, u);
        explored.iter().any(|&w| find(&mut parent, w) == ru)
    }

    fn leaf(&mut self, ranks: Vec<usize>) {
        let plain = write_smiles(self.plain, &ranks, false);
        let stereo = if self.has_stereo {
            write_smiles(self.full, &ranks, true)
        } else {
            plain.clone()
        };
        match &self.best {
            None => {
                self.best = Some(Leaf {
                    plain,
                    stereo,
                    ranks,
                });
            }
            Some(best) => match (plain.as_str(), stereo.as_str())
                .cmp(&(best.plain.as_str(), best.stereo.as_str()))
            {
                std::cmp::Ordering::Less => {
                    self.best = Some(Leaf {
                        plain,
                        stereo,
                        ranks,
                    });
                }
                std::cmp::Ordering::Equal => {
                    // Same output from two labellings: the map between them
                    // is a candidate automorphism.
                    let n = ranks.len();
                    let mut by_rank = vec![0; n];
                    for (atom, &r) in ranks.iter().enumerate() {
                        by_rank[r] = atom;
                    }
                    let perm: Vec<usize> = best.ranks.iter().map(|&r| by_rank[r]).collect();
                    if is_automorphism(self.plain, &perm) {
                        self.automorphisms.push(perm);
                    }
                }
                std::cmp::Ordering::Greater => {}
            },
        }
    }
}

fn is_automorphism(g: &MolGraph, perm: &[usize]) -> bool {
    let same_atoms = (0..g.atom_count()).all(|i| {
        let (a, b) = (g.atom(i), g.atom(perm[i]));
        a.element == b.element
            && a.formal_charge == b.formal_charge
            && a.aromatic == b.aromatic
            && a.isotope == b.isotope
            && g.implicit_h(i) == g.implicit_h(perm[i])
    });
    same_atoms
        && g.bonds().iter().all(|bond| {
            g.bond_between(perm[bond.a], perm[bond.b])
                .is_some_and(|other| other.order == bond.order)
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molparse::parse_smiles;

    #[test]
    fn cell_start_classes() {
        assert_eq!(classes_from_keys(&[3, 1, 3, 2]), vec![2, 0, 2, 1]);
    }

    #[test]
    fn refinement_separates_chain_positions() {
        let g = parse_smiles("CCCC").unwrap();
        let c = refine(&g, initial_classes(&g));
        assert_eq!(c[0], c[3]);
        assert_eq!(c[1], c[2]);
        assert_ne!(c[0], c[1]);
    }

    #[test]
    fn symmetric_molecules_finish() {
        for s in [
            "C(C(C)(C)C)(C(C)(C)C)(C(C)(C)C)C(C)(C)C",
            "C12C3C4C1C5C2C3C45",
            "c1cc2ccc3ccc4ccc5ccc6ccc1c7c2c3c4c5c67",
        ] {
            let g = parse_smiles(s).unwrap();
            let (plain, _) = canonical_pair(&g);
            assert!(!plain.is_empty());
        }
    }
}

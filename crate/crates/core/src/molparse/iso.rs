use std::collections::HashMap;

use super::{BondOrder, MolGraph};

type Label = (u8, i8, bool, Option<u16>, u8);

fn label(g: &MolGraph, i: usize) -> Label {
    let a = g.atom(i);
    (
        a.element.atomic_number(),
        a.formal_charge,
        a.aromatic,
        a.isotope,
        g.implicit_h(i),
    )
}

/// Exact graph isomorphism on atom labels (element, charge, aromaticity,
/// isotope, symbolic hydrogens) and bond orders. Stereo marks are ignored.
///
/// Colour refinement over the disjoint union prunes candidates; a
/// backtracking search then confirms a full mapping.
pub fn is_isomorphic(a: &MolGraph, b: &MolGraph) -> bool {
    if a.atom_count() != b.atom_count() || a.bonds().len() != b.bonds().len() {
        return false;
    }
    let n = a.atom_count();
    if n == 0 {
        return true;
    }

    let (colors_a, colors_b) = joint_refine(a, b);
    let mut hist_a = colors_a.clone();
    let mut hist_b = colors_b.clone();
    hist_a.sort_unstable();
    hist_b.sort_unstable();
    if hist_a != hist_b {
        return false;
    }

    // Map atoms of `a` in BFS order so each new atom usually has a mapped
    // neighbour to constrain it.
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        order.push(start);
        let mut head = order.len() - 1;
        while head < order.len() {
            let v = order[head];
            head += 1;
            for &(w, _) in a.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    order.push(w);
                }
            }
        }
    }

    let mut map = vec![usize::MAX; n];
    let mut used = vec![false; n];
    extend(a, b, &colors_a, &colors_b, &order, 0, &mut map, &mut used)
}

#[allow(clippy::too_many_arguments)]
fn extend(
    a: &MolGraph,
    b: &MolGraph,
    ca: &[usize],
    cb: &[usize],
    order: &[usize],
    depth: usize,
    map: &mut [usize],
    used: &mut [bool],
) -> bool {
    if depth == order.len() {
        return true;
    }
    let v = order[depth];
    for w in 0..b.atom_count() {
        if used[w] || cb[w] != ca[v] || a.degree(v) != b.degree(w) {
            continue;
        }
        let consistent = a.neighbors(v).iter().all(|&(x, bond)| {
            let mx = map[x];
            if mx == usize::MAX {
                return true;
            }
            b.bond_between(w, mx)
                .is_some_and(|other| other.order == a.bonds()[bond].order)
        });
        if !consistent {
            continue;
        }
        map[v] = w;
        used[w] = true;
        if extend(a, b, ca, cb, order, depth + 1, map, used) {
            return true;
        }
        map[v] = usize::MAX;
        used[w] = false;
    }
    false
}

fn bond_code(order: BondOrder) -> u8 {
    match order {
        BondOrder::Single => 1,
        BondOrder::Double => 2,
        BondOrder::Triple => 3,
        BondOrder::Aromatic => 4,
    }
}

/// Own colour plus the sorted (neighbour colour, bond code) list.
type Signature = (usize, Vec<(usize, u8)>);

/// Refines both graphs with a shared colour dictionary so colours are
/// comparable across them.
fn joint_refine(a: &MolGraph, b: &MolGraph) -> (Vec<usize>, Vec<usize>) {
    let graphs = [a, b];
    let mut dict: HashMap<Label, usize> = HashMap::new();
    let mut colors: Vec<Vec<usize>> = graphs
        .iter()
        .map(|g| {
            (0..g.atom_count())
                .map(|i| {
                    let next = dict.len();
                    *dict.entry(label(g, i)).or_insert(next)
                })
                .collect()
        })
        .collect();
    let mut classes = dict.len();
    loop {
        let mut dict: HashMap<Signature, usize> = HashMap::new();
        let mut keys: Vec<Vec<Signature>> = Vec::new();
        for (g, col) in graphs.iter().zip(&colors) {
            keys.push(
                (0..g.atom_count())
                    .map(|i| {
                        let mut nb: Vec<(usize, u8)> = g
                            .neighbors(i)
                            .iter()
                            .map(|&(w, bd)| (col[w], bond_code(g.bonds()[bd].order)))
                            .collect();
                        nb.sort_unstable();
                        (col[i], nb)
                    })
                    .collect(),
            );
        }
        // Sort keys so colour ids do not depend on atom order.
        let mut all: Vec<&(usize, Vec<(usize, u8)>)> = keys.iter().flatten().collect();
        all.sort();
        all.dedup();
        for (id, k) in all.into_iter().enumerate() {
            dict.insert(k.clone(), id);
        }
        let next: Vec<Vec<usize>> = keys
            .iter()
            .map(|ks| ks.iter().map(|k| dict[k]).collect())
            .collect();
        let count = dict.len();
        colors = next;
        if count == classes {
            break;
        }
        classes = count;
    }
    let mut it = colors.into_iter();
    (it.next().unwrap(), it.next().unwrap())
}

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Atom, Bond, BondOrder, BondStereo, Chirality, MolGraph, StereoNeighbor};
use crate::element::Element;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesErrorKind {
    #[error("empty input")]
    EmptyInput,
    #[error("unbalanced branch parenthesis")]
    UnbalancedBranch,
    #[error("ring bond {0} was never closed")]
    UnclosedRing(u32),
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("unexpected character `{0}`")]
    UnexpectedCharacter(char),
    #[error("unsupported notation: {0}")]
    Unsupported(&'static str),
    #[error("bond symbol is not followed by an atom")]
    DanglingBond,
    #[error("ring closure bond symbols disagree")]
    RingBondMismatch,
    #[error("duplicate bond or ring closure onto the same atom")]
    DuplicateBond,
    #[error("malformed bracket atom")]
    BadBracketAtom,
}

/// A SMILES syntax error at a byte offset of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("SMILES error at byte {offset}: {kind}")]
pub struct SmilesError {
    pub offset: usize,
    pub kind: SmilesErrorKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    Up,
    Down,
}

impl BondSymbol {
    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single | BondSymbol::Up | BondSymbol::Down => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }

    fn stereo(self) -> BondStereo {
        match self {
            BondSymbol::Up => BondStereo::Up,
            BondSymbol::Down => BondStereo::Down,
            _ => BondStereo::None,
        }
    }
}

struct RingOpen {
    atom: usize,
    symbol: Option<BondSymbol>,
    /// Placeholder slot in the opener's neighbour order.
    slot: usize,
    offset: usize,
}

struct Parser<'a> {
    text: &'a str,
    body: &'a str,
    input: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    order: Vec<Vec<StereoNeighbor>>,
    rings: BTreeMap<u32, RingOpen>,
}

const PLACEHOLDER: StereoNeighbor = StereoNeighbor::Atom(usize::MAX);

/// Parses a SMILES string into a molecular graph.
///
/// Atoms appear in the order they are written. Parsing stops at the first
/// whitespace character (anything after it is treated as a title).
pub fn parse_smiles(text: &str) -> Result<MolGraph, SmilesError> {
    let trimmed_start = text.len() - text.trim_start().len();
    let body = &text[trimmed_start..];
    let end = body.find(|c: char| c.is_whitespace()).unwrap_or(body.len());
    let body = &body[..end];
    if body.is_empty() {
        return Err(SmilesError {
            offset: 0,
            kind: SmilesErrorKind::EmptyInput,
        });
    }
    let mut parser = Parser {
        text,
        body,
        input: body.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        order: Vec::new(),
        rings: BTreeMap::new(),
    };
    parser.run().map_err(|mut e| {
        e.offset += trimmed_start;
        e
    })?;
    parser.finish()
}

impl<'a> Parser<'a> {
    fn err(&self, kind: SmilesErrorKind) -> SmilesError {
        SmilesError {
            offset: self.pos,
            kind,
        }
    }

    fn peek(&self) -> Option<u8> {
        self.input.get(self.pos).copied()
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        let mut prev: Option<usize> = None;
        let mut pending: Option<(BondSymbol, usize)> = None;
        let mut branches: Vec<(usize, usize)> = Vec::new();

        while let Some(c) = self.peek() {
            match c {
                b'(' => {
                    let Some(p) = prev else {
                        return Err(self.err(SmilesErrorKind::UnbalancedBranch));
                    };
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    branches.push((p, self.pos));
                    self.pos += 1;
                }
                b')' => {
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    let Some((p, _)) = branches.pop() else {
                        return Err(self.err(SmilesErrorKind::UnbalancedBranch));
                    };
                    prev = Some(p);
                    self.pos += 1;
                }
                b'.' => {
                    if pending.is_some() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    if !branches.is_empty() {
                        return Err(self.err(SmilesErrorKind::Unsupported("dot inside a branch")));
                    }
                    prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if pending.is_some() || prev.is_none() {
                        return Err(self.err(SmilesErrorKind::DanglingBond));
                    }
                    let symbol = match c {
                        b'-' => BondSymbol::Single,
                        b'=' => BondSymbol::Double,
                        b'#' => BondSymbol::Triple,
                        b':' => BondSymbol::Aromatic,
                        b'/' => BondSymbol::Up,
                        _ => BondSymbol::Down,
                    };
                    pending = Some((symbol, self.pos));
                    self.pos += 1;
                }
                b'$' => return Err(self.err(SmilesErrorKind::Unsupported("quadruple bond"))),
                b'0'..=b'9' | b'%' => {
                    let Some(p) = prev else {
                        return Err(self.err(SmilesErrorKind::UnexpectedCharacter(c as char)));
                    };
                    let start = self.pos;
                    let number = self.ring_number()?;
                    self.ring_bond(p, number, pending.take().map(|(s, _)| s), start)?;
                }
                b'*' => return Err(self.err(SmilesErrorKind::Unsupported("wildcard atom"))),
                b'>' => return Err(self.err(SmilesErrorKind::Unsupported("reaction notation"))),
                _ => {
                    let atom = if c == b'[' {
                        self.bracket_atom()?
                    } else {
                        self.organic_atom()?
                    };
                    let idx = self.push_atom(atom);
                    if let Some(p) = prev {
                        let symbol = pending.take().map(|(s, _)| s);
                        self.add_bond(p, idx, symbol);
                        self.order[p].push(StereoNeighbor::Atom(idx));
                        self.order[idx].insert(0, StereoNeighbor::Atom(p));
                    }
                    prev = Some(idx);
                }
            }
        }

        if let Some((_, offset)) = pending {
            return Err(SmilesError {
                offset,
                kind: SmilesErrorKind::DanglingBond,
            });
        }
        if let Some(&(_, offset)) = branches.last() {
            return Err(SmilesError {
                offset,
                kind: SmilesErrorKind::UnbalancedBranch,
            });
        }
        if let Some((&number, open)) = self.rings.iter().next() {
            return Err(SmilesError {
                offset: open.offset,
                kind: SmilesErrorKind::UnclosedRing(number),
            });
        }
        Ok(())
    }

    fn push_atom(&mut self, atom: Atom) -> usize {
        let mut order = Vec::new();
        if atom.chirality != Chirality::None && atom.explicit_h.unwrap_or(0) > 0 {
            order.push(StereoNeighbor::ImplicitH);
        }
        self.atoms.push(atom);
        self.order.push(order);
        self.atoms.len() - 1
    }

    fn add_bond(&mut self, a: usize, b: usize, symbol: Option<BondSymbol>) {
        let order = match symbol {
            Some(s) => s.order(),
            None if self.atoms[a].aromatic && self.atoms[b].aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        self.bonds.push(Bond {
            a,
            b,
            order,
            stereo: symbol.map_or(BondStereo::None, BondSymbol::stereo),
        });
    }

    fn ring_number(&mut self) -> Result<u32, SmilesError> {
        let c = self.input[self.pos];
        if c == b'%' {
            let digits = self.input.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    Ok(u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0'))
                }
                _ => Err(self.err(SmilesErrorKind::UnexpectedCharacter('%'))),
            }
        } else {
            self.pos += 1;
            Ok(u32::from(c - b'0'))
        }
    }

    fn ring_bond(
        &mut self,
        atom: usize,
        number: u32,
        symbol: Option<BondSymbol>,
        offset: usize,
    ) -> Result<(), SmilesError> {
        let Some(open) = self.rings.remove(&number) else {
            let slot = self.order[atom].len();
            self.order[atom].push(PLACEHOLDER);
            self.rings.insert(
                number,
                RingOpen {
                    atom,
                    symbol,
                    slot,
                    offset,
                },
            );
            return Ok(());
        };
        let dup = open.atom == atom
            || self
                .bonds
                .iter()
                .any(|b| (b.a == open.atom && b.b == atom) || (b.a == atom && b.b == open.atom));
        if dup {
            return Err(SmilesError {
                offset,
                kind: SmilesErrorKind::DuplicateBond,
            });
        }
        // Stored as opener -> closer; a mark written at the closer reads the
        // other way round.
        let resolved = match (open.symbol, symbol) {
            (Some(a), Some(b)) => {
                let b_fwd = match b {
                    BondSymbol::Up => BondSymbol::Down,
                    BondSymbol::Down => BondSymbol::Up,
                    other => other,
                };
                if a.order() != b.order()
                    || (a != b_fwd
                        && a.stereo() != BondStereo::None
                        && b.stereo() != BondStereo::None)
                {
                    return Err(SmilesError {
                        offset,
                        kind: SmilesErrorKind::RingBondMismatch,
                    });
                }
                Some(if a.stereo() != BondStereo::None {
                    a
                } else {
                    b_fwd
                })
            }
            (Some(a), None) => Some(a),
            (None, Some(b)) => Some(match b {
                BondSymbol::Up => BondSymbol::Down,
                BondSymbol::Down => BondSymbol::Up,
                other => other,
            }),
            (None, None) => None,
        };
        self.add_bond(open.atom, atom, resolved);
        self.order[open.atom][open.slot] = StereoNeighbor::Atom(atom);
        self.order[atom].push(StereoNeighbor::Atom(open.atom));
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, SmilesError> {
        let rest = &self.input[self.pos..];
        let (element, aromatic, len) = match rest {
            [b'C', b'l', ..] => (Element::CL, false, 2),
            [b'B', b'r', ..] => (Element::BR, false, 2),
            [b'B', ..] => (Element::B, false, 1),
            [b'C', ..] => (Element::C, false, 1),
            [b'N', ..] => (Element::N, false, 1),
            [b'O', ..] => (Element::O, false, 1),
            [b'P', ..] => (Element::P, false, 1),
            [b'S', ..] => (Element::S, false, 1),
            [b'F', ..] => (Element::F, false, 1),
            [b'I', ..] => (Element::I, false, 1),
            [b'b', ..] => (Element::B, true, 1),
            [b'c', ..] => (Element::C, true, 1),
            [b'n', ..] => (Element::N, true, 1),
            [b'o', ..] => (Element::O, true, 1),
            [b'p', ..] => (Element::P, true, 1),
            [b's', ..] => (Element::S, true, 1),
            [c, ..] if c.is_ascii_uppercase() => {
                let len = if rest.get(1).is_some_and(u8::is_ascii_lowercase) {
                    2
                } else {
                    1
                };
                let symbol = String::from_utf8_lossy(&rest[..len]).into_owned();
                return Err(self.err(SmilesErrorKind::UnknownElement(symbol)));
            }
            _ => {
                let ch = self.body[self.pos..].chars().next().unwrap_or('?');
                return Err(self.err(SmilesErrorKind::UnexpectedCharacter(ch)));
            }
        };
        self.pos += len;
        let mut atom = Atom::new(element);
        atom.aromatic = aromatic;
        Ok(atom)
    }

    fn bracket_atom(&mut self) -> Result<Atom, SmilesError> {
        let open = self.pos;
        let close = self.input[open..]
            .iter()
            .position(|&c| c == b']')
            .map(|p| open + p)
            .ok_or(SmilesError {
                offset: open,
                kind: SmilesErrorKind::BadBracketAtom,
            })?;
        self.pos += 1;

        let isotope = self.number();
        let mut atom = self.bracket_symbol()?;
        if let Some(iso) = isotope {
            atom.isotope =
                Some(u16::try_from(iso).map_err(|_| self.err(SmilesErrorKind::BadBracketAtom))?);
        }

        if self.peek() == Some(b'@') {
            self.pos += 1;
            if self.peek() == Some(b'@') {
                self.pos += 1;
                atom.chirality = Chirality::Clockwise;
            } else if self.input[self.pos..].starts_with(b"TH1") {
                self.pos += 3;
                atom.chirality = Chirality::CounterClockwise;
            } else if self.input[self.pos..].starts_with(b"TH2") {
                self.pos += 3;
                atom.chirality = Chirality::Clockwise;
            } else if [&b"TB"[..], b"SP", b"OH", b"AL"]
                .iter()
                .any(|p| self.input[self.pos..].starts_with(p))
            {
                return Err(self.err(SmilesErrorKind::Unsupported(
                    "non-tetrahedral chirality class",
                )));
            } else {
                atom.chirality = Chirality::CounterClockwise;
            }
        }

        atom.explicit_h = Some(0);
        if self.peek() == Some(b'H') {
            self.pos += 1;
            let count = self.number().unwrap_or(1);
            atom.explicit_h =
                Some(u8::try_from(count).map_err(|_| self.err(SmilesErrorKind::BadBracketAtom))?);
        }

        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let unit: i32 = if sign == b'+' { 1 } else { -1 };
            let magnitude = if let Some(n) = self.number() {
                n as i32
            } else {
                let mut n = 1;
                while self.peek() == Some(sign) {
                    self.pos += 1;
                    n += 1;
                }
                n
            };
            let charge = unit * magnitude;
            atom.formal_charge = i8::try_from(charge)
                .ok()
                .filter(|c| c.abs() <= 15)
                .ok_or_else(|| self.err(SmilesErrorKind::BadBracketAtom))?;
        }

        if self.peek() == Some(b':') {
            self.pos += 1;
            if self.number().is_none() {
                return Err(self.err(SmilesErrorKind::BadBracketAtom));
            }
        }

        if self.pos != close {
            return Err(self.err(SmilesErrorKind::BadBracketAtom));
        }
        self.pos += 1;
        Ok(atom)
    }

    fn bracket_symbol(&mut self) -> Result<Atom, SmilesError> {
        let rest = &self.input[self.pos..];
        for (text, element) in [
            (&b"se"[..], Element::SE),
            (b"as", Element::from_symbol("As").unwrap()),
            (b"te", Element::from_symbol("Te").unwrap()),
        ] {
            if rest.starts_with(text) {
                self.pos += 2;
                let mut atom = Atom::new(element);
                atom.aromatic = true;
                return Ok(atom);
            }
        }
        match rest.first() {
            Some(b'*') => Err(self.err(SmilesErrorKind::Unsupported("wildcard atom"))),
            Some(&c) if matches!(c, b'b' | b'c' | b'n' | b'o' | b'p' | b's') => {
                self.pos += 1;
                let symbol = (c.to_ascii_uppercase() as char).to_string();
                let mut atom = Atom::new(Element::from_symbol(&symbol).unwrap());
                atom.aromatic = true;
                Ok(atom)
            }
            Some(&c) if c.is_ascii_uppercase() => {
                if let Some(&l) = rest.get(1).filter(|l| l.is_ascii_lowercase()) {
                    let two = format!("{}{}", c as char, l as char);
                    if let Some(e) = Element::from_symbol(&two) {
                        self.pos += 2;
                        return Ok(Atom::new(e));
                    }
                }
                let one = (c as char).to_string();
                match Element::from_symbol(&one) {
                    Some(e) => {
                        self.pos += 1;
                        Ok(Atom::new(e))
                    }
                    None => {
                        let len = if rest.get(1).is_some_and(u8::is_ascii_lowercase) {
                            2
                        } else {
                            1
                        };
                        Err(self.err(SmilesErrorKind::UnknownElement(
                            String::from_utf8_lossy(&rest[..len]).into_owned(),
                        )))
                    }
                }
            }
            Some(&c) if c.is_ascii_lowercase() => {
                let len = if rest.get(1).is_some_and(u8::is_ascii_lowercase) {
                    2
                } else {
                    1
                };
                Err(self.err(SmilesErrorKind::UnknownElement(
                    String::from_utf8_lossy(&rest[..len]).into_owned(),
                )))
            }
            _ => Err(self.err(SmilesErrorKind::BadBracketAtom)),
        }
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        let mut value: u32 = 0;
        while let Some(c) = self.peek().filter(u8::is_ascii_digit) {
            value = value.saturating_mul(10).saturating_add(u32::from(c - b'0'));
            self.pos += 1;
        }
        (self.pos > start).then_some(value)
    }

    fn finish(self) -> Result<MolGraph, SmilesError> {
        let Parser {
            text,
            mut atoms,
            bonds,
            order,
            ..
        } = self;
        for (atom, order) in atoms.iter_mut().zip(order) {
            if atom.chirality != Chirality::None {
                atom.stereo_neighbors = order;
            }
        }
        MolGraph::new(atoms, bonds, text).map_err(|_| SmilesError {
            offset: 0,
            kind: SmilesErrorKind::DuplicateBond,
        })
    }
}

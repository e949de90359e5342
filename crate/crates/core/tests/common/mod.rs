//! Deliberately unoptimized reference implementations used to cross-check
//! the fast persistence code. Everything here goes through the public
//! complex API only and shares no code with the implementation under test.

// Textbook-style indexed loops are the point of a reference implementation.
#![allow(clippy::needless_range_loop)]

use std::collections::{BTreeSet, HashMap};

use topodigit::cubical::FilteredCubicalComplex;
use topodigit::persistence::PersistenceDiagram;

/// A raw persistence pairing from the reference reduction: `death` is
/// `f64::INFINITY` for essential classes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaivePoint {
    pub dim: u8,
    pub birth: f64,
    pub death: f64,
}

/// Textbook column reduction of the full boundary matrix, one column per
/// cell in filtration order, no clearing, sets instead of sorted vectors.
/// Returns all pairs with positive persistence plus all essential classes,
/// for dimensions 0 and 1.
pub fn naive_persistence(complex: &FilteredCubicalComplex) -> Vec<NaivePoint> {
    let n = complex.len();
    let mut columns: Vec<BTreeSet<u32>> = Vec::with_capacity(n);
    let mut owner_of_low: HashMap<u32, usize> = HashMap::new();
    let mut killed = vec![false; n]; // cell appears as a low (its class dies)
    let mut is_death = vec![false; n]; // cell's column stayed non-empty

    for i in 0..n {
        let mut col: BTreeSet<u32> = complex.faces_of(i).iter().copied().collect();
        while let Some(&low) = col.iter().next_back() {
            match owner_of_low.get(&low) {
                Some(&j) => {
                    let other = columns[j].clone();
                    for f in other {
                        if !col.remove(&f) {
                            col.insert(f);
                        }
                    }
                }
                None => break,
            }
        }
        if let Some(&low) = col.iter().next_back() {
            owner_of_low.insert(low, i);
            killed[low as usize] = true;
            is_death[i] = true;
        }
        columns.push(col);
    }

    let mut out = Vec::new();
    for (&low, &death_cell) in &owner_of_low {
        let birth_cell = &complex.cells[low as usize];
        let death = complex.cells[death_cell].value;
        if birth_cell.dimension <= 1 && death > birth_cell.value {
            out.push(NaivePoint {
                dim: birth_cell.dimension,
                birth: birth_cell.value,
                death,
            });
        }
    }
    for i in 0..n {
        if !killed[i] && !is_death[i] && complex.cells[i].dimension <= 1 {
            out.push(NaivePoint {
                dim: complex.cells[i].dimension,
                birth: complex.cells[i].value,
                death: f64::INFINITY,
            });
        }
    }
    out
}

/// Expand a diagram (pre-finalization: essential deaths are `+inf`) into a
/// sorted multiset of `(birth_bits, death_bits)` for exact comparison.
pub fn diagram_multiset(diag: &PersistenceDiagram) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    for p in &diag.points {
        let death = if p.essential { f64::INFINITY } else { p.death };
        for _ in 0..p.multiplicity {
            out.push((p.birth.to_bits(), death.to_bits()));
        }
    }
    out.sort_unstable();
    out
}

/// The dimension-`dim` part of a naive pairing as the same kind of multiset.
pub fn naive_multiset(points: &[NaivePoint], dim: u8) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = points
        .iter()
        .filter(|p| p.dim == dim)
        .map(|p| (p.birth.to_bits(), p.death.to_bits()))
        .collect();
    out.sort_unstable();
    out
}

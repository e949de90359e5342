//! Persistent homology of filtered cubical complexes.
//!
//! [`compute_persistence`] runs Z/2 boundary-matrix column reduction in
//! filtration order with the clearing optimization: square columns are
//! reduced first, and every edge paired there is skipped in the edge pass
//! (its column would reduce to zero). [`h0_union_find`] is an independent
//! elder-rule implementation for dimension 0, kept as an oracle.
//!
//! Diagrams come out raw: essential classes carry an infinite death until
//! [`finalize_diagram`] replaces it with the field maximum. Zero-persistence
//! pairs are dropped, but essential classes are always kept — even when the
//! substitution leaves them with equal birth and death — because they carry
//! the component and loop counts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubical::FilteredCubicalComplex;
use crate::filtration::FieldTag;

#[derive(Debug, Error, PartialEq)]
pub enum PersistenceError {
    #[error("complex violates filtration order at cell {index}: {reason}")]
    ContractViolation { index: usize, reason: String },
}

/// Which homology dimension(s) a diagram holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagramDim {
    Zero,
    One,
    /// Union of dimensions 0 and 1, treated as a single diagram.
    Fused,
}

/// A birth/death pair with multiplicity. `death == f64::INFINITY` marks an
/// essential class awaiting [`finalize_diagram`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagramPoint {
    pub birth: f64,
    pub death: f64,
    pub essential: bool,
    pub multiplicity: u32,
}

impl DiagramPoint {
    pub fn persistence(&self) -> f64 {
        self.death - self.birth
    }
}

/// A persistence diagram: merged points sorted by `(birth, death, essential)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceDiagram {
    pub dim: DiagramDim,
    pub points: Vec<DiagramPoint>,
    /// Maximum value of the originating field; the essential death after
    /// finalization.
    pub field_max: f64,
    pub provenance: FieldTag,
}

impl PersistenceDiagram {
    pub fn empty(dim: DiagramDim, field_max: f64, provenance: FieldTag) -> Self {
        PersistenceDiagram {
            dim,
            points: Vec::new(),
            field_max,
            provenance,
        }
    }

    /// Total point count, multiplicities included.
    pub fn total_multiplicity(&self) -> u32 {
        self.points.iter().map(|p| p.multiplicity).sum()
    }

    /// Merge two diagrams (for the fused strategy). Both must be finalized
    /// views of the same field.
    pub fn fuse(&self, other: &PersistenceDiagram) -> PersistenceDiagram {
        let mut raw: Vec<(f64, f64, bool, u32)> = Vec::new();
        for p in self.points.iter().chain(&other.points) {
            raw.push((p.birth, p.death, p.essential, p.multiplicity));
        }
        PersistenceDiagram {
            dim: DiagramDim::Fused,
            points: merge_points(raw),
            field_max: self.field_max.max(other.field_max),
            provenance: self.provenance.clone(),
        }
    }
}

/// An unmerged diagram entry: `(birth, death, essential, multiplicity)`.
pub(crate) type RawPoint = (f64, f64, bool, u32);

/// Sort raw `(birth, death, essential, multiplicity)` entries and merge equal
/// `(birth, death, essential)` triples into multiplicities.
pub(crate) fn merge_points(mut raw: Vec<RawPoint>) -> Vec<DiagramPoint> {
    raw.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut points: Vec<DiagramPoint> = Vec::new();
    for (birth, death, essential, multiplicity) in raw {
        match points.last_mut() {
            Some(last)
                if last.birth == birth && last.death == death && last.essential == essential =>
            {
                last.multiplicity += multiplicity;
            }
            _ => points.push(DiagramPoint {
                birth,
                death,
                essential,
                multiplicity,
            }),
        }
    }
    points
}

fn validate_sorted(complex: &FilteredCubicalComplex) -> Result<(), PersistenceError> {
    for i in 0..complex.len() {
        if i > 0 {
            let (prev, cur) = (complex.cells[i - 1].value, complex.cells[i].value);
            if prev.total_cmp(&cur) == std::cmp::Ordering::Greater {
                return Err(PersistenceError::ContractViolation {
                    index: i,
                    reason: format!("value {cur} follows larger value {prev}"),
                });
            }
        }
        for &face in complex.faces_of(i) {
            if face as usize >= i {
                return Err(PersistenceError::ContractViolation {
                    index: i,
                    reason: format!("face at position {face} does not precede its coface"),
                });
            }
        }
    }
    Ok(())
}

/// Symmetric difference of two sorted index lists (Z/2 column addition).
fn xor_into(a: &mut Vec<u32>, b: &[u32]) {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    *a = out;
}

/// Compute raw H0 and H1 diagrams by column reduction with clearing.
pub fn compute_persistence(
    complex: &FilteredCubicalComplex,
) -> Result<(PersistenceDiagram, PersistenceDiagram), PersistenceError> {
    validate_sorted(complex)?;
    let n = complex.len();
    let value = |i: u32| complex.cells[i as usize].value;
    let field_max = complex.cells.last().map_or(0.0, |c| c.value);

    const UNOWNED: u32 = u32::MAX;
    let mut low_owner = vec![UNOWNED; n];
    let mut columns: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut cleared = vec![false; n];
    let mut raw0: Vec<(f64, f64, bool, u32)> = Vec::new();
    let mut raw1: Vec<(f64, f64, bool, u32)> = Vec::new();

    // Square pass: pairs (edge, square) are dimension-1 deaths. An edge
    // claimed as a low here is a loop creator whose column would reduce to
    // zero, so the edge pass can skip ("clear") it.
    for i in 0..n {
        if complex.cells[i].dimension != 2 {
            continue;
        }
        let mut col: Vec<u32> = complex.faces_of(i).to_vec();
        col.sort_unstable();
        while let Some(&low) = col.last() {
            let owner = low_owner[low as usize];
            if owner == UNOWNED {
                break;
            }
            xor_into(&mut col, &columns[owner as usize]);
        }
        let low = *col
            .last()
            .expect("square column cannot vanish in a planar complex");
        low_owner[low as usize] = i as u32;
        cleared[low as usize] = true;
        if value(low) < complex.cells[i].value {
            raw1.push((value(low), complex.cells[i].value, false, 1));
        }
        columns[i] = col;
    }

    // Edge pass: pairs (vertex, edge) are dimension-0 deaths; a column that
    // reduces to zero here is a loop no square ever fills — essential H1.
    for i in 0..n {
        if complex.cells[i].dimension != 1 || cleared[i] {
            continue;
        }
        let mut col: Vec<u32> = complex.faces_of(i).to_vec();
        col.sort_unstable();
        while let Some(&low) = col.last() {
            let owner = low_owner[low as usize];
            if owner == UNOWNED {
                break;
            }
            xor_into(&mut col, &columns[owner as usize]);
        }
        match col.last() {
            Some(&low) => {
                low_owner[low as usize] = i as u32;
                if value(low) < complex.cells[i].value {
                    raw0.push((value(low), complex.cells[i].value, false, 1));
                }
                columns[i] = col;
            }
            None => raw1.push((complex.cells[i].value, f64::INFINITY, true, 1)),
        }
    }

    // Vertices never paired by an edge are essential components.
    for (cell, &owner) in complex.cells.iter().zip(&low_owner) {
        if cell.dimension == 0 && owner == UNOWNED {
            raw0.push((cell.value, f64::INFINITY, true, 1));
        }
    }

    let diagram = |dim, raw| PersistenceDiagram {
        dim,
        points: merge_points(raw),
        field_max,
        provenance: complex.provenance.clone(),
    };
    Ok((
        diagram(DiagramDim::Zero, raw0),
        diagram(DiagramDim::One, raw1),
    ))
}

/// Elder-rule union-find for dimension 0, independent of the reduction.
///
/// Walking cells in filtration order: a vertex starts its own component; an
/// edge joining two components kills the younger one (larger creating index),
/// emitting `(birth of younger, edge value)`.
pub fn h0_union_find(complex: &FilteredCubicalComplex) -> PersistenceDiagram {
    let n = complex.len();
    let field_max = complex.cells.last().map_or(0.0, |c| c.value);
    let mut parent: Vec<u32> = (0..n as u32).collect();

    fn find(parent: &mut [u32], mut x: u32) -> u32 {
        while parent[x as usize] != x {
            parent[x as usize] = parent[parent[x as usize] as usize];
            x = parent[x as usize];
        }
        x
    }

    let mut raw: Vec<(f64, f64, bool, u32)> = Vec::new();
    for i in 0..n {
        if complex.cells[i].dimension != 1 {
            continue;
        }
        let faces = complex.faces_of(i);
        let a = find(&mut parent, faces[0]);
        let b = find(&mut parent, faces[1]);
        if a == b {
            continue; // loop edge; not dimension 0's business
        }
        let (elder, younger) = if a < b { (a, b) } else { (b, a) };
        parent[younger as usize] = elder;
        let birth = complex.cells[younger as usize].value;
        let death = complex.cells[i].value;
        if birth < death {
            raw.push((birth, death, false, 1));
        }
    }
    for i in 0..n {
        if complex.cells[i].dimension == 0 && find(&mut parent, i as u32) == i as u32 {
            raw.push((complex.cells[i].value, f64::INFINITY, true, 1));
        }
    }
    PersistenceDiagram {
        dim: DiagramDim::Zero,
        points: merge_points(raw),
        field_max,
        provenance: complex.provenance.clone(),
    }
}

/// Count of classes alive at `t` in one diagram: `birth ≤ t < death`, with
/// essential classes alive forever regardless of their recorded death.
pub fn betti_of_diagram(diag: &PersistenceDiagram, t: f64) -> usize {
    diag.points
        .iter()
        .filter(|p| p.birth <= t && (p.essential || t < p.death))
        .map(|p| p.multiplicity as usize)
        .sum()
}

/// Betti numbers `(β0, β1)` of the sublevel complex at `t`.
///
/// Panics if the complex is not in filtration order; complexes from
/// `build_complex` always are.
pub fn betti_at(complex: &FilteredCubicalComplex, t: f64) -> (usize, usize) {
    let (d0, d1) = compute_persistence(complex).expect("complex in filtration order");
    (betti_of_diagram(&d0, t), betti_of_diagram(&d1, t))
}

/// Replace every essential class's infinite death with `field_max`. Essential
/// classes are retained even when this leaves `birth == death`.
pub fn finalize_diagram(diag: &PersistenceDiagram, field_max: f64) -> PersistenceDiagram {
    let raw = diag
        .points
        .iter()
        .map(|p| {
            let death = if p.death.is_infinite() {
                field_max
            } else {
                p.death
            };
            (p.birth, death, p.essential, p.multiplicity)
        })
        .collect();
    PersistenceDiagram {
        dim: diag.dim,
        points: merge_points(raw),
        field_max: diag.field_max,
        provenance: diag.provenance.clone(),
    }
}

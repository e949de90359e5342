//! Filtered cubical complexes over image grids (V-construction).
//!
//! Pixels are vertices, edges join 4-adjacent pixels, and unit squares fill
//! 2x2 blocks. Each cell inherits the maximum value of its vertices, so the
//! sublevel set at any threshold is a valid subcomplex. Cells are kept sorted
//! by `(value, dimension, anchor, orientation)`; breaking value ties by lower
//! dimension guarantees faces precede cofaces.

use crate::filtration::{FieldTag, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Orientation {
    /// Edge from `(row, col)` to `(row, col + 1)`.
    Horizontal,
    /// Edge from `(row, col)` to `(row + 1, col)`.
    Vertical,
}

/// One cube of the complex: a vertex, edge, or unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub dimension: u8,
    /// `(row, col)` of the cell's top-left vertex.
    pub anchor: (u16, u16),
    /// Present only for edges.
    pub orientation: Option<Orientation>,
    pub value: f64,
}

/// All cells of a grid, sorted in filtration order, with face indices.
#[derive(Debug, Clone)]
pub struct FilteredCubicalComplex {
    pub cells: Vec<Cell>,
    pub vertex_count: usize,
    pub edge_count: usize,
    pub square_count: usize,
    /// Copied from the originating field so diagrams can carry it along.
    pub provenance: FieldTag,
    faces: Vec<u32>,
    face_offsets: Vec<u32>,
}

impl FilteredCubicalComplex {
    /// Indices (into `cells`) of cell `i`'s codimension-1 faces: the two
    /// endpoints of an edge, the four sides of a square, nothing for a vertex.
    pub fn faces_of(&self, i: usize) -> &[u32] {
        &self.faces[self.face_offsets[i] as usize..self.face_offsets[i + 1] as usize]
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `(vertices, edges, squares)` with value ≤ `t`.
    pub fn sublevel_counts(&self, t: f64) -> (usize, usize, usize) {
        let mut counts = [0usize; 3];
        for cell in &self.cells {
            if cell.value > t {
                break; // cells are sorted by value
            }
            counts[cell.dimension as usize] += 1;
        }
        (counts[0], counts[1], counts[2])
    }

    /// Sorted cell list as tab-separated text, one cell per line
    /// (`value dim row col orientation`), for diffing in debug workflows.
    pub fn cells_tsv(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for cell in &self.cells {
            let orient = match cell.orientation {
                None => "-",
                Some(Orientation::Horizontal) => "h",
                Some(Orientation::Vertical) => "v",
            };
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                cell.value, cell.dimension, cell.anchor.0, cell.anchor.1, orient
            )
            .unwrap();
        }
        out
    }
}

fn sort_key(cell: &Cell) -> (f64, u8, (u16, u16), u8) {
    let orient = match cell.orientation {
        None => 0,
        Some(Orientation::Horizontal) => 1,
        Some(Orientation::Vertical) => 2,
    };
    (cell.value, cell.dimension, cell.anchor, orient)
}

/// Build the full-grid filtered complex of a scalar field.
pub fn build_complex(field: &ScalarField) -> FilteredCubicalComplex {
    let (w, h) = (field.width, field.height);
    assert!(w > 0 && h > 0, "field must be nonempty");
    let vertex_count = w * h;
    let h_edges = h * (w - 1);
    let v_edges = (h - 1) * w;
    let edge_count = h_edges + v_edges;
    let square_count = (h - 1) * (w - 1);
    let total = vertex_count + edge_count + square_count;

    // Provisional ids: vertices, then horizontal edges, then vertical edges,
    // then squares, each block in row-major order.
    let vid = |row: usize, col: usize| row * w + col;
    let hid = |row: usize, col: usize| vertex_count + row * (w - 1) + col;
    let tid = |row: usize, col: usize| vertex_count + h_edges + row * w + col;
    let sid = |row: usize, col: usize| vertex_count + edge_count + row * (w - 1) + col;

    let mut cells: Vec<Cell> = Vec::with_capacity(total);
    let mut prov_faces: Vec<[u32; 4]> = vec![[0; 4]; total];
    for row in 0..h {
        for col in 0..w {
            let v = field.get(row, col);
            assert!(v.is_finite(), "field value at ({row}, {col}) not finite");
            cells.push(Cell {
                dimension: 0,
                anchor: (row as u16, col as u16),
                orientation: None,
                value: v,
            });
        }
    }
    for row in 0..h {
        for col in 0..w - 1 {
            cells.push(Cell {
                dimension: 1,
                anchor: (row as u16, col as u16),
                orientation: Some(Orientation::Horizontal),
                value: field.get(row, col).max(field.get(row, col + 1)),
            });
            prov_faces[hid(row, col)] = [vid(row, col) as u32, vid(row, col + 1) as u32, 0, 0];
        }
    }
    for row in 0..h - 1 {
        for col in 0..w {
            cells.push(Cell {
                dimension: 1,
                anchor: (row as u16, col as u16),
                orientation: Some(Orientation::Vertical),
                value: field.get(row, col).max(field.get(row + 1, col)),
            });
            prov_faces[tid(row, col)] = [vid(row, col) as u32, vid(row + 1, col) as u32, 0, 0];
        }
    }
    for row in 0..h - 1 {
        for col in 0..w - 1 {
            let value = field
                .get(row, col)
                .max(field.get(row, col + 1))
                .max(field.get(row + 1, col))
                .max(field.get(row + 1, col + 1));
            cells.push(Cell {
                dimension: 2,
                anchor: (row as u16, col as u16),
                orientation: None,
                value,
            });
            prov_faces[sid(row, col)] = [
                hid(row, col) as u32,
                hid(row + 1, col) as u32,
                tid(row, col) as u32,
                tid(row, col + 1) as u32,
            ];
        }
    }

    // Sort into filtration order and remap face ids. The key is unique per
    // cell (dimension + anchor + orientation identify it), so the order is
    // deterministic.
    let mut perm: Vec<u32> = (0..total as u32).collect();
    perm.sort_unstable_by(|&a, &b| {
        let (va, da, aa, oa) = sort_key(&cells[a as usize]);
        let (vb, db, ab, ob) = sort_key(&cells[b as usize]);
        va.total_cmp(&vb)
            .then(da.cmp(&db))
            .then(aa.cmp(&ab))
            .then(oa.cmp(&ob))
    });
    let mut new_index = vec![0u32; total];
    for (new, &old) in perm.iter().enumerate() {
        new_index[old as usize] = new as u32;
    }

    let mut sorted_cells = Vec::with_capacity(total);
    let mut faces = Vec::with_capacity(2 * edge_count + 4 * square_count);
    let mut face_offsets = Vec::with_capacity(total + 1);
    face_offsets.push(0);
    for &old in &perm {
        let cell = cells[old as usize].clone();
        let n_faces = 2 * cell.dimension as usize;
        for &f in &prov_faces[old as usize][..n_faces] {
            faces.push(new_index[f as usize]);
        }
        face_offsets.push(faces.len() as u32);
        sorted_cells.push(cell);
    }

    FilteredCubicalComplex {
        cells: sorted_cells,
        vertex_count,
        edge_count,
        square_count,
        provenance: field.provenance.clone(),
        faces,
        face_offsets,
    }
}

#[cfg(test)]
impl FilteredCubicalComplex {
    /// Reorder cells within runs of equal `(value, dimension)` and remap face
    /// indices accordingly. Any such reordering is still a legal filtration
    /// order (faces stay before cofaces), so persistence results with positive
    /// persistence must not depend on it.
    pub(crate) fn permuted_within_ties(&self, seed: u64) -> FilteredCubicalComplex {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;

        let n = self.len();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<u32> = (0..n as u32).collect();
        let mut start = 0;
        while start < n {
            let key = |i: usize| (self.cells[i].value, self.cells[i].dimension);
            let mut end = start + 1;
            while end < n && key(end) == key(start) {
                end += 1;
            }
            perm[start..end].shuffle(&mut rng);
            start = end;
        }
        let mut new_index = vec![0u32; n];
        for (new, &old) in perm.iter().enumerate() {
            new_index[old as usize] = new as u32;
        }
        let mut faces = Vec::with_capacity(self.faces.len());
        let mut face_offsets = Vec::with_capacity(n + 1);
        face_offsets.push(0);
        let mut cells = Vec::with_capacity(n);
        for &old in &perm {
            for &f in self.faces_of(old as usize) {
                faces.push(new_index[f as usize]);
            }
            face_offsets.push(faces.len() as u32);
            cells.push(self.cells[old as usize].clone());
        }
        FilteredCubicalComplex {
            cells,
            vertex_count: self.vertex_count,
            edge_count: self.edge_count,
            square_count: self.square_count,
            provenance: self.provenance.clone(),
            faces,
            face_offsets,
        }
    }
}

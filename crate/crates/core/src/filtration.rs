//! Scalar fields that drive sublevel filtrations of a binarized image.
//!
//! Each binary mask yields 18 fields: 8 height (directional sweeps), 9 radial
//! (distance from fixed centers), and 1 inverted density. Pixel coordinates
//! are `p = (x, y)` with `x` the column and `y` the row, so the direction
//! `(1, 0)` sweeps left to right and `(0, 1)` top to bottom.

use serde::{Deserialize, Serialize};

use crate::imageio::BinaryImage;
use crate::imageio::GrayImage;

/// How a [`ScalarField`] was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldTag {
    /// Directional sweep; the integer vector is normalized before use.
    Height { direction: [i32; 2] },
    /// Euclidean distance from a fixed pixel `(x, y)`.
    Radial { center: [i32; 2] },
    /// Inverted neighbor count within a Euclidean radius.
    Density { radius: f64 },
    /// Raw intensities (or any ad-hoc field) taken as-is.
    Grayscale,
}

/// A real-valued image driving one sublevel filtration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub width: usize,
    pub height: usize,
    /// Row-major, `values[row * width + col]`; finite and ≥ 0.
    pub values: Vec<f64>,
    pub provenance: FieldTag,
    /// Set when the source mask had no foreground; such fields are all zero.
    pub degenerate: bool,
}

impl ScalarField {
    /// Wrap raw values as a field with [`FieldTag::Grayscale`] provenance.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height);
        ScalarField {
            width,
            height,
            values,
            provenance: FieldTag::Grayscale,
            degenerate: false,
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Maximum value over all pixels (0 for an empty field).
    pub fn max_value(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, &v| m.max(v))
    }
}

/// Parameters for field construction. [`FiltrationConfig::default`] is the
/// standard setup for 28x28 digits: 8 axis/diagonal directions, 9 centers on
/// the {6, 13, 20}^2 grid, density radius 6, binarization threshold 0.4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiltrationConfig {
    pub directions: Vec<[i32; 2]>,
    pub centers: Vec<[i32; 2]>,
    pub density_radius: f64,
    pub binarize_threshold: f64,
}

impl Default for FiltrationConfig {
    fn default() -> Self {
        FiltrationConfig {
            directions: vec![
                [0, 1],
                [0, -1],
                [1, 0],
                [-1, 0],
                [1, 1],
                [1, -1],
                [-1, 1],
                [-1, -1],
            ],
            centers: vec![
                [13, 6],
                [6, 13],
                [13, 13],
                [20, 13],
                [13, 20],
                [6, 6],
                [6, 20],
                [20, 6],
                [20, 20],
            ],
            density_radius: 6.0,
            binarize_threshold: 0.4,
        }
    }
}

impl FiltrationConfig {
    /// Number of fields produced by [`make_all_fields`].
    pub fn field_count(&self) -> usize {
        self.directions.len() + self.centers.len() + 1
    }

    /// Provenance tags in the canonical field order.
    pub fn field_tags(&self) -> Vec<FieldTag> {
        let mut tags = Vec::with_capacity(self.field_count());
        tags.extend(
            self.directions
                .iter()
                .map(|&direction| FieldTag::Height { direction }),
        );
        tags.extend(
            self.centers
                .iter()
                .map(|&center| FieldTag::Radial { center }),
        );
        tags.push(FieldTag::Density {
            radius: self.density_radius,
        });
        tags
    }
}

/// Number of fields in the default configuration.
pub const FIELD_COUNT: usize = 18;

fn zero_field(img: &BinaryImage, provenance: FieldTag) -> ScalarField {
    ScalarField {
        width: img.width,
        height: img.height,
        values: vec![0.0; img.width * img.height],
        provenance,
        degenerate: true,
    }
}

/// Height field: foreground pixel `p` gets `<p, v>` for the unit vector `v`
/// along `direction`, shifted so the foreground minimum is 0; background
/// pixels get the foreground maximum (the H-infinity rule), so they enter the
/// filtration last.
pub fn height_field(img: &BinaryImage, direction: [i32; 2]) -> ScalarField {
    let provenance = FieldTag::Height { direction };
    if img.foreground_count() == 0 {
        return zero_field(img, provenance);
    }
    let norm = f64::hypot(direction[0] as f64, direction[1] as f64);
    assert!(norm > 0.0, "direction must be nonzero");
    let (vx, vy) = (direction[0] as f64 / norm, direction[1] as f64 / norm);

    let inner = |row: usize, col: usize| col as f64 * vx + row as f64 * vy;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for row in 0..img.height {
        for col in 0..img.width {
            if img.get(row, col) {
                let v = inner(row, col);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    let h_inf = hi - lo;
    let mut values = Vec::with_capacity(img.width * img.height);
    for row in 0..img.height {
        for col in 0..img.width {
            values.push(if img.get(row, col) {
                inner(row, col) - lo
            } else {
                h_inf
            });
        }
    }
    ScalarField {
        width: img.width,
        height: img.height,
        values,
        provenance,
        degenerate: false,
    }
}

/// Radial field: foreground pixel `p` gets `|p - c|`; background pixels get
/// the maximum foreground distance (the R-infinity rule).
pub fn radial_field(img: &BinaryImage, center: [i32; 2]) -> ScalarField {
    let provenance = FieldTag::Radial { center };
    if img.foreground_count() == 0 {
        return zero_field(img, provenance);
    }
    let dist = |row: usize, col: usize| {
        f64::hypot(col as f64 - center[0] as f64, row as f64 - center[1] as f64)
    };
    let mut r_inf = 0.0_f64;
    for row in 0..img.height {
        for col in 0..img.width {
            if img.get(row, col) {
                r_inf = r_inf.max(dist(row, col));
            }
        }
    }
    let mut values = Vec::with_capacity(img.width * img.height);
    for row in 0..img.height {
        for col in 0..img.width {
            values.push(if img.get(row, col) {
                dist(row, col)
            } else {
                r_inf
            });
        }
    }
    ScalarField {
        width: img.width,
        height: img.height,
        values,
        provenance,
        degenerate: false,
    }
}

/// Raw density: for every pixel, the number of foreground pixels within
/// Euclidean distance `radius` (a foreground pixel counts itself).
pub fn density_counts(img: &BinaryImage, radius: f64) -> Vec<u32> {
    assert!(radius > 0.0);
    // Stamp a precomputed disk of offsets around each foreground pixel;
    // cheaper than scanning all pixel pairs.
    let r = radius.floor() as i64;
    let r2 = radius * radius;
    let mut disk = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if (dx * dx + dy * dy) as f64 <= r2 {
                disk.push((dy, dx));
            }
        }
    }
    let (w, h) = (img.width as i64, img.height as i64);
    let mut counts = vec![0u32; img.width * img.height];
    for row in 0..img.height {
        for col in 0..img.width {
            if !img.get(row, col) {
                continue;
            }
            for &(dy, dx) in &disk {
                let (y, x) = (row as i64 + dy, col as i64 + dx);
                if y >= 0 && y < h && x >= 0 && x < w {
                    counts[(y * w + x) as usize] += 1;
                }
            }
        }
    }
    counts
}

/// Density field: raw counts inverted as `max - count`, so dense stroke
/// regions enter the sublevel filtration first and empty background last.
pub fn density_field(img: &BinaryImage, radius: f64) -> ScalarField {
    let provenance = FieldTag::Density { radius };
    if img.foreground_count() == 0 {
        return zero_field(img, provenance);
    }
    let counts = density_counts(img, radius);
    let max = *counts.iter().max().unwrap();
    ScalarField {
        width: img.width,
        height: img.height,
        values: counts.iter().map(|&c| f64::from(max - c)).collect(),
        provenance,
        degenerate: false,
    }
}

/// Binarize `img` at the configured threshold and build all fields in the
/// canonical order: heights in direction order, then radials in center order,
/// then density.
pub fn make_all_fields(img: &GrayImage, cfg: &FiltrationConfig) -> Vec<ScalarField> {
    let mask = crate::imageio::binarize(img, cfg.binarize_threshold);
    let mut fields = Vec::with_capacity(cfg.field_count());
    for &direction in &cfg.directions {
        fields.push(height_field(&mask, direction));
    }
    for &center in &cfg.centers {
        fields.push(radial_field(&mask, center));
    }
    fields.push(density_field(&mask, cfg.density_radius));
    fields
}

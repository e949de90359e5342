//! Fixed-length feature vectors from finalized persistence diagrams.
//!
//! Five representations: Betti curve, landscape, power-weighted silhouette,
//! persistence image, and heat kernel. Curve-like kinds sample r points over
//! a per-channel `(lo, hi)` range fitted from training data; grid-like kinds
//! produce r×r grids. [`assemble`] concatenates per-field channels under one
//! of four strategies: dimension 0 only, dimension 1 only, the fused union
//! of both, or both side by side ("concat").
//!
//! All vectorizers are pure and deterministic; an empty diagram always maps
//! to a zero vector so degenerate channels cannot poison a batch.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persistence::{DiagramDim, DiagramPoint, PersistenceDiagram};

#[derive(Debug, Error, PartialEq)]
pub enum VectorizeError {
    #[error("invalid vectorizer config: {0}")]
    InvalidConfig(String),
    #[error("expected diagrams for {expected} fields, got {got}")]
    WrongDiagramCount { expected: usize, got: usize },
    #[error("no training diagrams to fit sample ranges from")]
    EmptyTrainingSet,
    #[error("inconsistent field counts in training diagrams: {0} vs {1}")]
    InconsistentFieldCount(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VectorizerKind {
    BettiCurve,
    Landscape,
    Silhouette,
    PersistenceImage,
    HeatKernel,
}

impl fmt::Display for VectorizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VectorizerKind::BettiCurve => "betti",
            VectorizerKind::Landscape => "landscape",
            VectorizerKind::Silhouette => "silhouette",
            VectorizerKind::PersistenceImage => "persistence-image",
            VectorizerKind::HeatKernel => "heat-kernel",
        })
    }
}

impl FromStr for VectorizerKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "betti" | "betti-curve" => Ok(VectorizerKind::BettiCurve),
            "landscape" => Ok(VectorizerKind::Landscape),
            "silhouette" => Ok(VectorizerKind::Silhouette),
            "persistence-image" | "image" => Ok(VectorizerKind::PersistenceImage),
            "heat-kernel" | "heat" => Ok(VectorizerKind::HeatKernel),
            other => Err(format!(
                "unknown vectorizer '{other}' (expected betti, landscape, silhouette, \
                 persistence-image, or heat-kernel)"
            )),
        }
    }
}

/// How per-field diagrams combine into one feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    H0,
    H1,
    Fused,
    Concat,
}

impl Strategy {
    /// Channels contributed per field.
    pub fn channels_per_field(self) -> usize {
        match self {
            Strategy::Concat => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::H0 => "h0",
            Strategy::H1 => "h1",
            Strategy::Fused => "fused",
            Strategy::Concat => "concat",
        })
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "h0" => Ok(Strategy::H0),
            "h1" => Ok(Strategy::H1),
            "fused" => Ok(Strategy::Fused),
            "concat" => Ok(Strategy::Concat),
            other => Err(format!(
                "unknown strategy '{other}' (expected h0, h1, fused, or concat)"
            )),
        }
    }
}

/// Parameters of one vectorizer. Unused knobs (e.g. `sigma` for the Betti
/// curve) are carried but ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorizerConfig {
    pub kind: VectorizerKind,
    /// Samples per curve, or side length of a grid.
    pub resolution: usize,
    /// Landscape layers.
    pub layers: usize,
    /// Silhouette weight exponent.
    pub power: f64,
    /// Gaussian smoothing width for persistence image and heat kernel,
    /// expressed as a fraction of the sampled window: the blur standard
    /// deviation in grid cells is `sigma * resolution`, so the default 0.1
    /// smooths a 10×10 grid by exactly one cell regardless of the absolute
    /// scale of the channel.
    pub sigma: f64,
}

impl VectorizerConfig {
    /// Standard parameters: r = 75 for curve-like kinds, r = 10 for
    /// grid-like; one landscape layer; silhouette power 1; sigma 0.1.
    pub fn new(kind: VectorizerKind) -> Self {
        let resolution = match kind {
            VectorizerKind::PersistenceImage | VectorizerKind::HeatKernel => 10,
            _ => 75,
        };
        VectorizerConfig {
            kind,
            resolution,
            layers: 1,
            power: 1.0,
            sigma: 0.1,
        }
    }

    pub fn with_layers(mut self, layers: usize) -> Self {
        self.layers = layers;
        self
    }

    pub fn validate(&self) -> Result<(), VectorizeError> {
        if self.resolution < 2 {
            return Err(VectorizeError::InvalidConfig(format!(
                "resolution {} < 2",
                self.resolution
            )));
        }
        if self.layers < 1 {
            return Err(VectorizeError::InvalidConfig("layers < 1".into()));
        }
        if self.sigma <= 0.0 || self.sigma.is_nan() {
            return Err(VectorizeError::InvalidConfig(format!(
                "sigma {} must be > 0",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Output length for a single diagram channel.
    pub fn channel_len(&self) -> usize {
        let r = self.resolution;
        match self.kind {
            VectorizerKind::BettiCurve | VectorizerKind::Silhouette => r,
            VectorizerKind::Landscape => self.layers * r,
            VectorizerKind::PersistenceImage | VectorizerKind::HeatKernel => r * r,
        }
    }

    /// Total feature length for `field_count` fields under `strategy`.
    pub fn vector_len(&self, strategy: Strategy, field_count: usize) -> usize {
        field_count * strategy.channels_per_field() * self.channel_len()
    }
}

/// Sampling window of one channel; `flagged` marks a channel that had no
/// training points and fell back to `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelRange {
    pub lo: f64,
    pub hi: f64,
    pub flagged: bool,
}

/// Fitted `(lo, hi)` windows for every `(field, dimension-or-fused)` channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRanges {
    pub field_count: usize,
    /// Indexed `field * 3 + c` with `c`: 0 = H0, 1 = H1, 2 = fused.
    pub ranges: Vec<ChannelRange>,
}

impl SampleRanges {
    pub fn get(&self, field: usize, dim: DiagramDim) -> ChannelRange {
        let c = match dim {
            DiagramDim::Zero => 0,
            DiagramDim::One => 1,
            DiagramDim::Fused => 2,
        };
        self.ranges[field * 3 + c]
    }
}

/// Finalized H0 and H1 diagrams of one field.
pub type FieldPair = (PersistenceDiagram, PersistenceDiagram);

/// Fit per-channel sampling windows from training diagrams: `lo` = least
/// birth, `hi` = greatest death seen in the channel. Channels with no points
/// fall back to `(0, 1)` and are flagged; degenerate spans widen to `lo + 1`.
pub fn fit_sample_ranges<I>(images: I) -> Result<SampleRanges, VectorizeError>
where
    I: IntoIterator,
    I::Item: AsRef<[FieldPair]>,
{
    let mut field_count: Option<usize> = None;
    // (lo, hi, saw_any_point) per channel
    let mut acc: Vec<(f64, f64, bool)> = Vec::new();
    for image in images {
        let pairs = image.as_ref();
        match field_count {
            None => {
                field_count = Some(pairs.len());
                acc = vec![(f64::INFINITY, f64::NEG_INFINITY, false); pairs.len() * 3];
            }
            Some(n) if n != pairs.len() => {
                return Err(VectorizeError::InconsistentFieldCount(n, pairs.len()));
            }
            Some(_) => {}
        }
        for (field, (d0, d1)) in pairs.iter().enumerate() {
            for (c, diag) in [(0, d0), (1, d1)] {
                for p in &diag.points {
                    for idx in [field * 3 + c, field * 3 + 2] {
                        let slot = &mut acc[idx];
                        slot.0 = slot.0.min(p.birth);
                        slot.1 = slot.1.max(p.death);
                        slot.2 = true;
                    }
                }
            }
        }
    }
    let field_count = field_count.ok_or(VectorizeError::EmptyTrainingSet)?;
    let ranges = acc
        .into_iter()
        .map(|(lo, hi, seen)| {
            if !seen {
                ChannelRange {
                    lo: 0.0,
                    hi: 1.0,
                    flagged: true,
                }
            } else if lo == hi {
                ChannelRange {
                    lo,
                    hi: lo + 1.0,
                    flagged: false,
                }
            } else {
                ChannelRange {
                    lo,
                    hi,
                    flagged: false,
                }
            }
        })
        .collect();
    Ok(SampleRanges {
        field_count,
        ranges,
    })
}

/// Points in a fixed order regardless of how the diagram was stored, so that
/// summation order — and therefore the exact floating-point output — is a
/// function of the multiset alone.
fn canonical_points(diag: &PersistenceDiagram) -> Vec<DiagramPoint> {
    let mut points = diag.points.clone();
    points.sort_by(|a, b| {
        a.birth
            .total_cmp(&b.birth)
            .then(a.death.total_cmp(&b.death))
            .then(a.essential.cmp(&b.essential))
    });
    points
}

/// `i`-th of `r` evenly spaced samples covering `[lo, hi]` inclusive.
fn sample_at(lo: f64, hi: f64, r: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (r - 1) as f64
}

fn tent(birth: f64, death: f64, t: f64) -> f64 {
    (t - birth).min(death - t).max(0.0)
}

/// Number of intervals containing each sample: `B(ε) = #{(b, d) : b ≤ ε < d}`.
pub fn betti_curve(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    let points = canonical_points(diag);
    (0..cfg.resolution)
        .map(|i| {
            let eps = sample_at(range.lo, range.hi, cfg.resolution, i);
            points
                .iter()
                .filter(|p| p.birth <= eps && eps < p.death)
                .map(|p| f64::from(p.multiplicity))
                .sum()
        })
        .collect()
}

/// Landscape layers: at each sample, the k-th largest tent value over all
/// interval instances (multiplicity counted), layers concatenated.
pub fn landscape(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    let points = canonical_points(diag);
    let mut out = vec![0.0; cfg.layers * cfg.resolution];
    let mut tents: Vec<f64> = Vec::new();
    for i in 0..cfg.resolution {
        let t = sample_at(range.lo, range.hi, cfg.resolution, i);
        tents.clear();
        for p in &points {
            let v = tent(p.birth, p.death, t);
            for _ in 0..p.multiplicity {
                tents.push(v);
            }
        }
        tents.sort_unstable_by(|a, b| b.total_cmp(a));
        for k in 0..cfg.layers {
            out[k * cfg.resolution + i] = tents.get(k).copied().unwrap_or(0.0);
        }
    }
    out
}

/// Power-weighted silhouette: the `|d - b|^p`-weighted average of the tent
/// functions. Zero total weight (empty diagram, or only zero-persistence
/// points) yields the zero vector.
pub fn silhouette(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    let points = canonical_points(diag);
    let weight: Vec<f64> = points
        .iter()
        .map(|p| f64::from(p.multiplicity) * (p.death - p.birth).abs().powf(cfg.power))
        .collect();
    let total: f64 = weight.iter().sum();
    if total <= 0.0 {
        return vec![0.0; cfg.resolution];
    }
    (0..cfg.resolution)
        .map(|i| {
            let t = sample_at(range.lo, range.hi, cfg.resolution, i);
            let acc: f64 = points
                .iter()
                .zip(&weight)
                .map(|(p, w)| w * tent(p.birth, p.death, t))
                .sum();
            acc / total
        })
        .collect()
}

/// Index of the cell containing `x` on an axis split into `r` equal cells
/// over `[lo, hi]`. Values outside the range are clamped into the edge
/// cells so every diagram point lands somewhere on the grid.
fn cell_index(lo: f64, hi: f64, r: usize, x: f64) -> usize {
    let t = (x - lo) / (hi - lo) * r as f64;
    (t.floor().max(0.0) as usize).min(r - 1)
}

/// Border handling for the grid blur: read off-grid cells as zero, or
/// reflect indices back into the grid (half-sample symmetry) so no mass
/// leaks past the border.
#[derive(Clone, Copy)]
enum Border {
    Zero,
    Reflect,
}

/// Normalized 1-D Gaussian tap weights for a separable blur whose standard
/// deviation is `sigma_cells` grid cells. The support is truncated at four
/// standard deviations (`radius = ⌊4σ + ½⌋`), so sub-half-cell widths
/// collapse to the identity kernel and the grid reduces to exact per-cell
/// counts.
fn blur_taps(sigma_cells: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_cells + 0.5).floor() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma_cells * sigma_cells)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// In-place separable blur of an r×r grid with the given 1-D taps.
fn blur_grid(grid: &mut [f64], r: usize, taps: &[f64], border: Border) {
    if taps.len() <= 1 {
        return;
    }
    let radius = (taps.len() / 2) as isize;
    let pass = |src: &[f64], dst: &mut [f64], row_stride: usize, col_stride: usize| {
        for a in 0..r {
            for b in 0..r {
                let mut acc = 0.0;
                for (k, w) in taps.iter().enumerate() {
                    let mut bb = b as isize + k as isize - radius;
                    if let Border::Reflect = border {
                        if bb < 0 {
                            bb = -1 - bb;
                        }
                        if bb >= r as isize {
                            bb = 2 * r as isize - 1 - bb;
                        }
                        bb = bb.clamp(0, r as isize - 1);
                    }
                    if bb >= 0 && (bb as usize) < r {
                        acc += w * src[a * row_stride + bb as usize * col_stride];
                    }
                }
                dst[a * row_stride + b * col_stride] = acc;
            }
        }
    };
    let mut tmp = vec![0.0; r * r];
    pass(grid, &mut tmp, r, 1); // along rows
    pass(&tmp, grid, 1, r); // along columns
}

/// The blur width in grid cells: `sigma` is a fraction of the sampled
/// window, so multiplying by the resolution converts it to cells. The
/// default `sigma = 0.1` on a 10×10 grid is a one-cell-wide Gaussian,
/// independent of the absolute scale of the channel being sampled.
fn sigma_cells(cfg: &VectorizerConfig) -> f64 {
    cfg.sigma * cfg.resolution as f64
}

/// Persistence image: points move to birth–persistence coordinates
/// `(b, d - b)` and each deposits its (constant-weight) mass into the cell
/// of an r×r grid that contains it; the grid is then smoothed by a Gaussian
/// whose standard deviation is the fraction `sigma` of the sampled window.
/// The grid spans `range` on the birth axis and `(0, range.hi - range.lo)`
/// on the persistence axis; rows scan the persistence axis. Off-grid blur
/// mass is dropped, mirroring the constant border of the reference
/// convolution.
pub fn persistence_image(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    let points = canonical_points(diag);
    let r = cfg.resolution;
    let span = range.hi - range.lo;
    let mut out = vec![0.0; r * r];
    for p in &points {
        let xi = cell_index(range.lo, range.hi, r, p.birth);
        let yi = cell_index(0.0, span, r, p.death - p.birth);
        out[yi * r + xi] += f64::from(p.multiplicity);
    }
    blur_grid(&mut out, r, &blur_taps(sigma_cells(cfg)), Border::Zero);
    out
}

/// Heat kernel: each point deposits positive mass at `(b, d)` and the same
/// mass negated at the mirrored position `(d, b)` on an r×r grid over
/// `range` on both axes, and the signed grid is smoothed by a Gaussian
/// whose standard deviation is the fraction `sigma` of the sampled window —
/// the discrete analogue of a heat source next to a matching sink reflected
/// across the diagonal. Rows scan the death axis; the blur reflects at the
/// borders so no mass leaks off the grid. Mass from a point and its mirror
/// landing in the same cell cancels, so sub-cell persistence contributes
/// nothing.
pub fn heat_kernel(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    let points = canonical_points(diag);
    let r = cfg.resolution;
    let mut out = vec![0.0; r * r];
    for p in &points {
        let bi = cell_index(range.lo, range.hi, r, p.birth);
        let di = cell_index(range.lo, range.hi, r, p.death);
        let m = f64::from(p.multiplicity);
        out[di * r + bi] += m;
        out[bi * r + di] -= m;
    }
    blur_grid(&mut out, r, &blur_taps(sigma_cells(cfg)), Border::Reflect);
    out
}

/// Apply the configured vectorizer to one diagram channel.
pub fn vectorize_diagram(
    diag: &PersistenceDiagram,
    cfg: &VectorizerConfig,
    range: ChannelRange,
) -> Vec<f64> {
    match cfg.kind {
        VectorizerKind::BettiCurve => betti_curve(diag, cfg, range),
        VectorizerKind::Landscape => landscape(diag, cfg, range),
        VectorizerKind::Silhouette => silhouette(diag, cfg, range),
        VectorizerKind::PersistenceImage => persistence_image(diag, cfg, range),
        VectorizerKind::HeatKernel => heat_kernel(diag, cfg, range),
    }
}

/// Where one diagram channel landed inside an assembled feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDescriptor {
    pub field: usize,
    pub dim: DiagramDim,
    pub kind: VectorizerKind,
    pub offset: usize,
    pub length: usize,
}

/// One image's assembled features with their channel layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Vec<ChannelDescriptor>,
}

/// Vectorize all of an image's field diagrams and concatenate them in
/// canonical field order under the given strategy.
pub fn assemble(
    diagrams: &[FieldPair],
    cfg: &VectorizerConfig,
    strategy: Strategy,
    ranges: &SampleRanges,
) -> Result<FeatureVector, VectorizeError> {
    cfg.validate()?;
    if diagrams.len() != ranges.field_count {
        return Err(VectorizeError::WrongDiagramCount {
            expected: ranges.field_count,
            got: diagrams.len(),
        });
    }
    let mut values = Vec::with_capacity(cfg.vector_len(strategy, diagrams.len()));
    let mut layout = Vec::new();
    let push = |field: usize,
                dim: DiagramDim,
                chunk: Vec<f64>,
                values: &mut Vec<f64>,
                layout: &mut Vec<ChannelDescriptor>| {
        layout.push(ChannelDescriptor {
            field,
            dim,
            kind: cfg.kind,
            offset: values.len(),
            length: chunk.len(),
        });
        values.extend(chunk);
    };
    for (field, (d0, d1)) in diagrams.iter().enumerate() {
        match strategy {
            Strategy::H0 => {
                let chunk = vectorize_diagram(d0, cfg, ranges.get(field, DiagramDim::Zero));
                push(field, DiagramDim::Zero, chunk, &mut values, &mut layout);
            }
            Strategy::H1 => {
                let chunk = vectorize_diagram(d1, cfg, ranges.get(field, DiagramDim::One));
                push(field, DiagramDim::One, chunk, &mut values, &mut layout);
            }
            Strategy::Fused => {
                let fused = d0.fuse(d1);
                let chunk = vectorize_diagram(&fused, cfg, ranges.get(field, DiagramDim::Fused));
                push(field, DiagramDim::Fused, chunk, &mut values, &mut layout);
            }
            Strategy::Concat => {
                let chunk = vectorize_diagram(d0, cfg, ranges.get(field, DiagramDim::Zero));
                push(field, DiagramDim::Zero, chunk, &mut values, &mut layout);
                let chunk = vectorize_diagram(d1, cfg, ranges.get(field, DiagramDim::One));
                push(field, DiagramDim::One, chunk, &mut values, &mut layout);
            }
        }
    }
    Ok(FeatureVector { values, layout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtration::FieldTag;
    use proptest::prelude::*;

    // Disambiguate from proptest's `Strategy` trait, which stays usable
    // method-wise via the anonymous import.
    use super::Strategy;
    use proptest::strategy::Strategy as _;

    fn diagram(dim: DiagramDim, pts: &[(f64, f64, u32)]) -> PersistenceDiagram {
        PersistenceDiagram {
            dim,
            points: pts
                .iter()
                .map(|&(birth, death, multiplicity)| DiagramPoint {
                    birth,
                    death,
                    essential: false,
                    multiplicity,
                })
                .collect(),
            field_max: pts.iter().fold(0.0, |m, p| m.max(p.1)),
            provenance: FieldTag::Grayscale,
        }
    }

    fn range(lo: f64, hi: f64) -> ChannelRange {
        ChannelRange {
            lo,
            hi,
            flagged: false,
        }
    }

    #[test]
    fn betti_curve_counts_half_open_intervals() {
        let d = diagram(DiagramDim::Zero, &[(0.0, 2.0, 1), (1.0, 3.0, 1)]);
        let mut cfg = VectorizerConfig::new(VectorizerKind::BettiCurve);
        cfg.resolution = 4;
        assert_eq!(
            betti_curve(&d, &cfg, range(0.0, 3.0)),
            vec![1.0, 2.0, 1.0, 0.0]
        );

        let empty = diagram(DiagramDim::Zero, &[]);
        assert_eq!(betti_curve(&empty, &cfg, range(0.0, 3.0)), vec![0.0; 4]);
    }

    #[test]
    fn landscape_tents_and_layers() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::Landscape);
        cfg.resolution = 3;
        let single = diagram(DiagramDim::Zero, &[(0.0, 2.0, 1)]);
        assert_eq!(
            landscape(&single, &cfg, range(0.0, 2.0)),
            vec![0.0, 1.0, 0.0]
        );

        let two_layers = cfg.clone().with_layers(2);
        let out = landscape(&single, &two_layers, range(0.0, 2.0));
        assert_eq!(
            &out[3..],
            &[0.0, 0.0, 0.0],
            "second layer empty for one point"
        );

        // Two overlapping tents at t = 1.5 both evaluate to 0.5.
        let mut cfg7 = cfg.clone().with_layers(2);
        cfg7.resolution = 7;
        let d = diagram(DiagramDim::Zero, &[(0.0, 2.0, 1), (1.0, 3.0, 1)]);
        let out = landscape(&d, &cfg7, range(0.0, 3.0));
        assert_eq!(out[3], 0.5, "lambda_1 at t = 1.5");
        assert_eq!(out[7 + 3], 0.5, "lambda_2 at t = 1.5");
    }

    #[test]
    fn silhouette_is_tent_for_single_point() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::Silhouette);
        cfg.resolution = 5;
        let single = diagram(DiagramDim::Zero, &[(0.0, 2.0, 1)]);
        let doubled = diagram(DiagramDim::Zero, &[(0.0, 2.0, 2)]);
        let expected = vec![0.0, 0.5, 1.0, 0.5, 0.0];
        assert_eq!(silhouette(&single, &cfg, range(0.0, 2.0)), expected);
        assert_eq!(silhouette(&doubled, &cfg, range(0.0, 2.0)), expected);
    }

    #[test]
    fn silhouette_weighted_average_by_persistence() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::Silhouette);
        cfg.resolution = 5;
        let d = diagram(DiagramDim::Zero, &[(0.0, 4.0, 1), (1.0, 2.0, 1)]);
        let out = silhouette(&d, &cfg, range(0.0, 4.0));
        // t = 1: tents are 1 (weight |4-0| = 4) and 0 (weight 1) -> 0.8.
        assert_eq!(out[1], 0.8);
    }

    #[test]
    fn silhouette_zero_weight_returns_zeros() {
        let cfg = VectorizerConfig::new(VectorizerKind::Silhouette);
        let empty = diagram(DiagramDim::Zero, &[]);
        assert_eq!(silhouette(&empty, &cfg, range(0.0, 1.0)), vec![0.0; 75]);
        let degenerate = diagram(DiagramDim::Zero, &[(0.5, 0.5, 3)]);
        assert_eq!(
            silhouette(&degenerate, &cfg, range(0.0, 1.0)),
            vec![0.0; 75]
        );
    }

    #[test]
    fn persistence_image_mass_and_linearity() {
        // With a sub-cell blur width the image is a pure histogram: one
        // unit-weight point puts mass exactly 1 in the cell containing
        // (birth, persistence) = (1, 1) on the [0, 2] x [0, 2] grid.
        let mut cfg = VectorizerConfig::new(VectorizerKind::PersistenceImage);
        cfg.resolution = 20;
        cfg.sigma = 0.001;
        let single = diagram(DiagramDim::Zero, &[(1.0, 2.0, 1)]);
        let crisp = persistence_image(&single, &cfg, range(0.0, 2.0));
        assert_eq!(crisp[10 * 20 + 10], 1.0);
        let mass: f64 = crisp.iter().sum();
        assert_eq!(mass, 1.0);

        // At the default width (a tenth of the window = 2 cells here) the
        // mass still sums to 1 because the kernel taps are normalized and
        // the point sits away from the borders, and the peak stays at the
        // depositing cell.
        cfg.sigma = 0.1;
        let out = persistence_image(&single, &cfg, range(0.0, 2.0));
        let mass: f64 = out.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        let peak = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out[10 * 20 + 10], peak);
        assert!(peak > 0.0 && peak < 1.0, "peak {peak}");

        let doubled = diagram(DiagramDim::Zero, &[(1.0, 2.0, 2)]);
        let out2 = persistence_image(&doubled, &cfg, range(0.0, 2.0));
        for (a, b) in out.iter().zip(&out2) {
            assert_eq!(2.0 * a, *b, "doubling a point doubles the image exactly");
        }

        let empty = diagram(DiagramDim::Zero, &[]);
        assert_eq!(
            persistence_image(&empty, &cfg, range(0.0, 2.0)),
            vec![0.0; 400]
        );
    }

    #[test]
    fn wide_sigma_smooths_and_preserves_mass() {
        // A one-cell-wide Gaussian (sigma 1/11 of the window at resolution
        // 11) spreads a centered deposit over its neighborhood
        // symmetrically without losing mass.
        let mut cfg = VectorizerConfig::new(VectorizerKind::PersistenceImage);
        cfg.resolution = 11;
        cfg.sigma = 1.0 / 11.0;
        let single = diagram(DiagramDim::Zero, &[(0.5, 1.0, 1)]);
        let out = persistence_image(&single, &cfg, range(0.0, 1.0));
        // (birth, persistence) = (0.5, 0.5) -> cell (5, 5) of the 11x11 grid.
        let center = out[5 * 11 + 5];
        assert!(center > 0.0 && center < 1.0, "center {center}");
        assert!(out[5 * 11 + 4] > 0.0 && out[5 * 11 + 4] < center);
        assert_eq!(out[5 * 11 + 4], out[5 * 11 + 6]);
        assert_eq!(out[4 * 11 + 5], out[6 * 11 + 5]);
        let mass: f64 = out.iter().sum();
        assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
    }

    #[test]
    fn points_outside_the_range_clamp_to_edge_cells() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::PersistenceImage);
        cfg.sigma = 0.001; // sub-cell width: no smoothing
        let d = diagram(DiagramDim::Zero, &[(-5.0, -4.75, 1), (9.0, 9.25, 1)]);
        let out = persistence_image(&d, &cfg, range(0.0, 1.0));
        assert_eq!(out[2 * 10], 1.0, "far-left birth lands in column 0");
        assert_eq!(out[2 * 10 + 9], 1.0, "far-right birth lands in column 9");
    }

    #[test]
    fn heat_kernel_cancels_on_diagonal() {
        let cfg = VectorizerConfig::new(VectorizerKind::HeatKernel);
        let on_diagonal = diagram(DiagramDim::One, &[(0.7, 0.7, 1)]);
        let out = heat_kernel(&on_diagonal, &cfg, range(0.0, 1.0));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_kernel_positive_at_source() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::HeatKernel);
        cfg.resolution = 10;
        cfg.sigma = 0.001; // sub-cell width: pure signed histogram
                           // Point (0.25, 0.75) lands in cell (birth 2, death 7) of the
                           // [0, 1]^2 grid: +1 there, -1 at the mirrored cell, 0 elsewhere.
        let d = diagram(DiagramDim::One, &[(0.25, 0.75, 1)]);
        let out = heat_kernel(&d, &cfg, range(0.0, 1.0));
        assert_eq!(out[7 * 10 + 2], 1.0);
        assert_eq!(out[2 * 10 + 7], -1.0);
        let rest: f64 = out.iter().map(|v| v.abs()).sum();
        assert_eq!(rest, 2.0, "no other cell is touched");
    }

    #[test]
    fn heat_kernel_default_width_spreads_antisymmetrically() {
        let cfg = VectorizerConfig::new(VectorizerKind::HeatKernel);
        let d = diagram(DiagramDim::One, &[(0.25, 0.75, 1)]);
        let out = heat_kernel(&d, &cfg, range(0.0, 1.0));
        // The smoothed field peaks at the depositing cell (death 7,
        // birth 2) and troughs at its mirror.
        let peak = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(out[7 * 10 + 2], peak);
        assert!(peak > 0.0 && peak < 1.0, "peak {peak}");
        // Antisymmetry across the diagonal and zero net mass: the border
        // reflection keeps every tap on the grid, so the source and sink
        // blobs stay exactly balanced.
        for i in 0..10 {
            for j in 0..10 {
                let diff = (out[i * 10 + j] + out[j * 10 + i]).abs();
                assert!(diff < 1e-12, "cells ({i},{j}) break antisymmetry");
            }
        }
        let net: f64 = out.iter().sum();
        assert!(net.abs() < 1e-12, "net {net}");
    }

    #[test]
    fn fit_ranges_examples() {
        let img = |pts0: &[(f64, f64, u32)]| {
            vec![(
                diagram(DiagramDim::Zero, pts0),
                diagram(DiagramDim::One, &[]),
            )]
        };
        let train = [img(&[(0.0, 2.0, 1)]), img(&[(1.0, 3.0, 1)])];
        let ranges = fit_sample_ranges(&train).unwrap();
        assert_eq!(ranges.field_count, 1);
        let ch = ranges.get(0, DiagramDim::Zero);
        assert_eq!((ch.lo, ch.hi, ch.flagged), (0.0, 3.0, false));
        // H1 never saw a point; fused saw H0's.
        let h1 = ranges.get(0, DiagramDim::One);
        assert_eq!((h1.lo, h1.hi, h1.flagged), (0.0, 1.0, true));
        let fused = ranges.get(0, DiagramDim::Fused);
        assert_eq!((fused.lo, fused.hi, fused.flagged), (0.0, 3.0, false));

        // Degenerate span widens.
        let constant = [img(&[(0.5, 0.5, 1)])];
        let ch = fit_sample_ranges(&constant)
            .unwrap()
            .get(0, DiagramDim::Zero);
        assert_eq!((ch.lo, ch.hi), (0.5, 1.5));

        assert_eq!(
            fit_sample_ranges(std::iter::empty::<Vec<FieldPair>>()),
            Err(VectorizeError::EmptyTrainingSet)
        );
    }

    fn toy_pairs(n_fields: usize) -> Vec<FieldPair> {
        (0..n_fields)
            .map(|f| {
                (
                    diagram(DiagramDim::Zero, &[(0.0, 1.0 + f as f64, 1)]),
                    diagram(DiagramDim::One, &[(0.5, 1.0, 1)]),
                )
            })
            .collect()
    }

    #[test]
    fn assemble_lengths_match_strategy() {
        let pairs = toy_pairs(18);
        let ranges = fit_sample_ranges([&pairs]).unwrap();

        let betti = VectorizerConfig::new(VectorizerKind::BettiCurve);
        let fv = assemble(&pairs, &betti, Strategy::Concat, &ranges).unwrap();
        assert_eq!(fv.values.len(), 2700);
        assert_eq!(fv.layout.len(), 36);
        assert_eq!(fv.layout[0].dim, DiagramDim::Zero);
        assert_eq!(fv.layout[1].dim, DiagramDim::One);
        assert_eq!(fv.layout[35].offset + fv.layout[35].length, 2700);

        let heat = VectorizerConfig::new(VectorizerKind::HeatKernel);
        let fv = assemble(&pairs, &heat, Strategy::Fused, &ranges).unwrap();
        assert_eq!(fv.values.len(), 1800);

        let landscape3 = VectorizerConfig::new(VectorizerKind::Landscape).with_layers(3);
        let fv = assemble(&pairs, &landscape3, Strategy::H0, &ranges).unwrap();
        assert_eq!(fv.values.len(), 4050);

        assert_eq!(
            assemble(&pairs[..5], &betti, Strategy::H0, &ranges),
            Err(VectorizeError::WrongDiagramCount {
                expected: 18,
                got: 5
            })
        );
    }

    #[test]
    fn parse_names() {
        assert_eq!("betti".parse(), Ok(VectorizerKind::BettiCurve));
        assert_eq!("heat-kernel".parse(), Ok(VectorizerKind::HeatKernel));
        assert!("bogus"
            .parse::<VectorizerKind>()
            .unwrap_err()
            .contains("bogus"));
        assert_eq!("fused".parse(), Ok(Strategy::Fused));
        assert!("both".parse::<Strategy>().is_err());
        for kind in [
            VectorizerKind::BettiCurve,
            VectorizerKind::Landscape,
            VectorizerKind::Silhouette,
            VectorizerKind::PersistenceImage,
            VectorizerKind::HeatKernel,
        ] {
            assert_eq!(kind.to_string().parse(), Ok(kind));
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = VectorizerConfig::new(VectorizerKind::BettiCurve);
        cfg.resolution = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = VectorizerConfig::new(VectorizerKind::HeatKernel);
        cfg.sigma = 0.0;
        assert!(cfg.validate().is_err());
        assert!(VectorizerConfig::new(VectorizerKind::Landscape)
            .with_layers(0)
            .validate()
            .is_err());
    }

    fn arb_diagram() -> impl proptest::strategy::Strategy<Value = PersistenceDiagram> {
        proptest::collection::vec((0.0f64..3.0, 0.0f64..3.0, 1u32..3), 0..8).prop_map(|raw| {
            diagram(
                DiagramDim::Zero,
                &raw.iter()
                    .map(|&(b, p, m)| (b, b + p, m))
                    .collect::<Vec<_>>(),
            )
        })
    }

    proptest! {
        // Shuffling stored point order never changes any output bit.
        #[test]
        fn permutation_invariance(d in arb_diagram(), seed in 0u64..100) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = d.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.points.shuffle(&mut rng);
            let r = range(0.0, 6.0);
            for kind in [
                VectorizerKind::BettiCurve,
                VectorizerKind::Landscape,
                VectorizerKind::Silhouette,
                VectorizerKind::PersistenceImage,
                VectorizerKind::HeatKernel,
            ] {
                let mut cfg = VectorizerConfig::new(kind);
                cfg.resolution = 8;
                prop_assert_eq!(
                    vectorize_diagram(&d, &cfg, r),
                    vectorize_diagram(&shuffled, &cfg, r)
                );
            }
        }

        // Betti counting is additive over disjoint union at a shared range.
        #[test]
        fn betti_additive_over_fusion(a in arb_diagram(), b in arb_diagram()) {
            let mut cfg = VectorizerConfig::new(VectorizerKind::BettiCurve);
            cfg.resolution = 16;
            let r = range(0.0, 6.0);
            let mut b1 = b.clone();
            b1.dim = DiagramDim::One;
            let fused = a.fuse(&b1);
            let va = betti_curve(&a, &cfg, r);
            let vb = betti_curve(&b1, &cfg, r);
            let vf = betti_curve(&fused, &cfg, r);
            for i in 0..16 {
                prop_assert_eq!(vf[i], va[i] + vb[i]);
            }
        }

        #[test]
        fn landscape_layers_are_ordered(d in arb_diagram()) {
            let cfg = VectorizerConfig::new(VectorizerKind::Landscape).with_layers(4);
            let out = landscape(&d, &cfg, range(0.0, 6.0));
            let r = cfg.resolution;
            for i in 0..r {
                for k in 1..4 {
                    prop_assert!(out[k * r + i] <= out[(k - 1) * r + i]);
                    prop_assert!(out[k * r + i] >= 0.0);
                }
            }
        }

        // The silhouette is a weighted average, so it stays inside the tent
        // envelope at every sample.
        #[test]
        fn silhouette_between_tent_extremes(d in arb_diagram()) {
            prop_assume!(!d.points.is_empty());
            let mut cfg = VectorizerConfig::new(VectorizerKind::Silhouette);
            cfg.resolution = 16;
            let r = range(0.0, 6.0);
            let total: f64 = d
                .points
                .iter()
                .map(|p| f64::from(p.multiplicity) * (p.death - p.birth).abs())
                .sum();
            prop_assume!(total > 0.0);
            let out = silhouette(&d, &cfg, r);
            for (i, &v) in out.iter().enumerate() {
                let t = sample_at(0.0, 6.0, 16, i);
                let tents: Vec<f64> = d.points.iter().map(|p| tent(p.birth, p.death, t)).collect();
                let lo = tents.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = tents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }

        // Reflecting every point across the diagonal negates the heat field.
        #[test]
        fn heat_kernel_antisymmetry(d in arb_diagram()) {
            let mut cfg = VectorizerConfig::new(VectorizerKind::HeatKernel);
            cfg.resolution = 6;
            let mut mirrored = d.clone();
            for p in &mut mirrored.points {
                std::mem::swap(&mut p.birth, &mut p.death);
            }
            let a = heat_kernel(&d, &cfg, range(0.0, 6.0));
            let b = heat_kernel(&mirrored, &cfg, range(0.0, 6.0));
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x + y).abs() < 1e-12);
            }
        }
    }
}

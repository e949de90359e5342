//! End-to-end glue: run the image → fields → complexes → diagrams pipeline,
//! cache diagrams and feature matrices on disk, and expose fold-safe feature
//! streams for evaluation.
//!
//! Cache files are a single JSON header line followed by a little-endian
//! `f32` payload. Diagram records are `(field_index, dimension, birth,
//! death)` with multiplicities expanded, in canonical order, so identical
//! inputs always produce byte-identical files.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cubical::build_complex;
use crate::filtration::{make_all_fields, FieldTag, FiltrationConfig};
use crate::imageio::GrayImage;
use crate::learn::StreamSource;
use crate::persistence::{
    compute_persistence, finalize_diagram, merge_points, DiagramDim, PersistenceDiagram,
    PersistenceError, RawPoint,
};
use crate::vectorize::{
    assemble, fit_sample_ranges, FieldPair, SampleRanges, Strategy, VectorizeError,
    VectorizerConfig,
};

pub const CACHE_VERSION: u32 = 2;
pub const DIAGRAM_CACHE_KIND: &str = "diagram-cache";
pub const FEATURE_CACHE_KIND: &str = "feature-cache";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt cache file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Vectorize(#[from] VectorizeError),
    #[error("worker pool: {0}")]
    Workers(String),
}

impl PipelineError {
    /// True when the underlying cause is a missing file (callers can then
    /// suggest the command that would create it).
    pub fn is_not_found(&self) -> bool {
        matches!(self, PipelineError::Io { source, .. }
            if source.kind() == std::io::ErrorKind::NotFound)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn corrupt(path: &Path, reason: impl Into<String>) -> PipelineError {
    PipelineError::Corrupt {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Run a closure on a dedicated pool of `workers` threads, or on the global
/// pool when unspecified.
pub fn with_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    match workers {
        Some(w) if w > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| PipelineError::Workers(e.to_string()))
            .map(|pool| pool.install(f)),
        _ => Ok(f()),
    }
}

/// All 18 finalized `(H0, H1)` diagram pairs for one image.
pub fn extract_image_diagrams(
    img: &GrayImage,
    cfg: &FiltrationConfig,
) -> Result<Vec<FieldPair>, PipelineError> {
    let fields = make_all_fields(img, cfg);
    let mut out = Vec::with_capacity(fields.len());
    for field in &fields {
        let complex = build_complex(field);
        let (d0, d1) = compute_persistence(&complex)?;
        let max = field.max_value();
        out.push((finalize_diagram(&d0, max), finalize_diagram(&d1, max)));
    }
    Ok(out)
}

/// Extract diagrams for a whole dataset in parallel, preserving image order.
pub fn extract_dataset(
    images: &[GrayImage],
    cfg: &FiltrationConfig,
    workers: Option<usize>,
) -> Result<Vec<Vec<FieldPair>>, PipelineError> {
    with_pool(workers, || {
        images
            .par_iter()
            .map(|img| extract_image_diagrams(img, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagramCacheHeader {
    pub kind: String,
    pub version: u32,
    pub dataset_fingerprint: String,
    pub filtration: FiltrationConfig,
    pub field_tags: Vec<FieldTag>,
    pub image_count: usize,
    pub field_count: usize,
    /// Number of 16-byte records for each image, in order.
    pub counts: Vec<u32>,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(io_err(&tmp))?;
    f.write_all(bytes).map_err(io_err(&tmp))?;
    f.sync_all().map_err(io_err(&tmp))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Serialize diagrams to `path`; returns the header that was written.
pub fn write_diagram_cache(
    path: &Path,
    dataset_fingerprint: &str,
    filtration: &FiltrationConfig,
    diagrams: &[Vec<FieldPair>],
) -> Result<DiagramCacheHeader, PipelineError> {
    let mut counts = Vec::with_capacity(diagrams.len());
    let mut payload: Vec<u8> = Vec::new();
    for image in diagrams {
        let mut n = 0u32;
        for (f, (d0, d1)) in image.iter().enumerate() {
            for (dim, diag) in [(0u8, d0), (1u8, d1)] {
                for p in &diag.points {
                    for _ in 0..p.multiplicity {
                        for v in [f as f32, dim as f32, p.birth as f32, p.death as f32] {
                            payload.extend_from_slice(&v.to_le_bytes());
                        }
                        n += 1;
                    }
                }
            }
        }
        counts.push(n);
    }
    let header = DiagramCacheHeader {
        kind: DIAGRAM_CACHE_KIND.into(),
        version: CACHE_VERSION,
        dataset_fingerprint: dataset_fingerprint.into(),
        filtration: filtration.clone(),
        field_tags: filtration.field_tags(),
        image_count: diagrams.len(),
        field_count: filtration.field_count(),
        counts,
    };
    let mut bytes = serde_json::to_vec(&header).expect("header serializes");
    bytes.push(b'\n');
    bytes.extend_from_slice(&payload);
    write_atomic(path, &bytes)?;
    Ok(header)
}

fn split_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize), PipelineError> {
    match bytes.iter().position(|&b| b == b'\n') {
        Some(nl) => Ok((nl, nl + 1)),
        None => Err(corrupt(path, "missing header line")),
    }
}

/// Read a diagram cache back into finalized per-image diagram pairs.
///
/// Births and deaths were stored as `f32`, and essential markers are not
/// stored; reconstructed diagrams are feature-equivalent, and rewriting them
/// reproduces the file byte for byte.
pub fn read_diagram_cache(
    path: &Path,
) -> Result<(DiagramCacheHeader, Vec<Vec<FieldPair>>), PipelineError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let (nl, payload_at) = split_header(path, &bytes)?;
    let header: DiagramCacheHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| corrupt(path, format!("bad header: {e}")))?;
    if header.kind != DIAGRAM_CACHE_KIND {
        return Err(corrupt(
            path,
            format!("kind '{}' is not a diagram cache", header.kind),
        ));
    }
    if header.version != CACHE_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported version {}", header.version),
        ));
    }
    if header.counts.len() != header.image_count || header.field_tags.len() != header.field_count {
        return Err(corrupt(path, "header counts are inconsistent"));
    }
    let total: u64 = header.counts.iter().map(|&c| c as u64).sum();
    let payload = &bytes[payload_at..];
    if payload.len() as u64 != total * 16 {
        return Err(corrupt(
            path,
            format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                total * 16
            ),
        ));
    }

    let read_f32 = |at: usize| f32::from_le_bytes(payload[at..at + 4].try_into().unwrap());
    let mut diagrams = Vec::with_capacity(header.image_count);
    let mut at = 0usize;
    for &count in &header.counts {
        let mut raw: Vec<[Vec<RawPoint>; 2]> = (0..header.field_count)
            .map(|_| Default::default())
            .collect();
        for _ in 0..count {
            let f = read_f32(at);
            let dim = read_f32(at + 4);
            let birth = read_f32(at + 8) as f64;
            let death = read_f32(at + 12) as f64;
            at += 16;
            let fi = f as usize;
            if f.fract() != 0.0 || fi >= header.field_count {
                return Err(corrupt(path, format!("bad field index {f}")));
            }
            if dim != 0.0 && dim != 1.0 {
                return Err(corrupt(path, format!("bad dimension {dim}")));
            }
            if !birth.is_finite() || !death.is_finite() {
                return Err(corrupt(path, "non-finite birth or death"));
            }
            raw[fi][dim as usize].push((birth, death, false, 1));
        }
        let mut image = Vec::with_capacity(header.field_count);
        for (fi, pair) in raw.into_iter().enumerate() {
            let tag = header.field_tags[fi].clone();
            let [raw0, raw1] = pair;
            let mut field_max = 0.0f64;
            for &(_, d, _, _) in raw0.iter().chain(&raw1) {
                field_max = field_max.max(d);
            }
            let build = |dim, raw| PersistenceDiagram {
                dim,
                points: merge_points(raw),
                field_max,
                provenance: tag.clone(),
            };
            image.push((build(DiagramDim::Zero, raw0), build(DiagramDim::One, raw1)));
        }
        diagrams.push(image);
    }
    Ok((header, diagrams))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCacheHeader {
    pub kind: String,
    pub version: u32,
    pub dataset_fingerprint: String,
    pub diagram_fingerprint: String,
    pub vectorizer: String,
    pub strategy: String,
    pub config: VectorizerConfig,
    pub ranges: SampleRanges,
    pub rows: usize,
    pub cols: usize,
}

/// Write a feature matrix (row-major `f32`) under the given header.
pub fn write_feature_matrix(
    path: &Path,
    header: &FeatureCacheHeader,
    matrix: &Array2<f32>,
) -> Result<(), PipelineError> {
    assert_eq!(
        (header.rows, header.cols),
        matrix.dim(),
        "header/matrix shape"
    );
    let mut bytes = serde_json::to_vec(header).expect("header serializes");
    bytes.push(b'\n');
    bytes.reserve(matrix.len() * 4);
    for &v in matrix.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_feature_matrix(
    path: &Path,
) -> Result<(FeatureCacheHeader, Array2<f32>), PipelineError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    let (nl, payload_at) = split_header(path, &bytes)?;
    let header: FeatureCacheHeader = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| corrupt(path, format!("bad header: {e}")))?;
    if header.kind != FEATURE_CACHE_KIND {
        return Err(corrupt(
            path,
            format!("kind '{}' is not a feature cache", header.kind),
        ));
    }
    if header.version != CACHE_VERSION {
        return Err(corrupt(
            path,
            format!("unsupported version {}", header.version),
        ));
    }
    let payload = &bytes[payload_at..];
    if payload.len() != header.rows * header.cols * 4 {
        return Err(corrupt(
            path,
            format!(
                "payload is {} bytes, expected {}",
                payload.len(),
                header.rows * header.cols * 4
            ),
        ));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = Array2::from_shape_vec((header.rows, header.cols), values)
        .map_err(|e| corrupt(path, e.to_string()))?;
    Ok((header, matrix))
}

/// Image pixels as a dense `(n, width*height)` matrix (values already in
/// `[0, 1]`).
pub fn image_matrix(images: &[GrayImage]) -> Array2<f32> {
    let cols = images.first().map_or(0, |im| im.values.len());
    let mut out = Array2::<f32>::zeros((images.len(), cols));
    for (i, im) in images.iter().enumerate() {
        for (j, &v) in im.values.iter().enumerate() {
            out[(i, j)] = v as f32;
        }
    }
    out
}

/// Vectorize the given image rows under fixed sample ranges, in parallel.
pub fn assemble_rows(
    diagrams: &[Vec<FieldPair>],
    rows: &[usize],
    cfg: &VectorizerConfig,
    strategy: Strategy,
    ranges: &SampleRanges,
) -> Result<Array2<f32>, VectorizeError> {
    let width = cfg.vector_len(strategy, ranges.field_count);
    let assembled: Vec<Vec<f32>> = rows
        .par_iter()
        .map(|&i| {
            assemble(&diagrams[i], cfg, strategy, ranges)
                .map(|fv| fv.values.iter().map(|&v| v as f32).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut out = Array2::<f32>::zeros((rows.len(), width));
    for (r, row) in assembled.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            out[(r, c)] = v;
        }
    }
    Ok(out)
}

/// Fit sample ranges on `fit_rows` only, then vectorize every image in
/// dataset order — the shape of the cached feature-matrix artifact.
pub fn feature_matrix(
    diagrams: &[Vec<FieldPair>],
    fit_rows: &[usize],
    cfg: &VectorizerConfig,
    strategy: Strategy,
    workers: Option<usize>,
) -> Result<(SampleRanges, Array2<f32>), PipelineError> {
    let ranges = fit_sample_ranges(fit_rows.iter().map(|&i| &diagrams[i]))?;
    let all: Vec<usize> = (0..diagrams.len()).collect();
    let matrix = with_pool(workers, || {
        assemble_rows(diagrams, &all, cfg, strategy, &ranges)
    })??;
    Ok((ranges, matrix))
}

/// Topological feature stream: sample ranges are refit on the fold's
/// training rows before any row is vectorized, so held-out rows never
/// influence the sampling windows.
pub struct TopoSource<'a> {
    diagrams: &'a [Vec<FieldPair>],
    config: VectorizerConfig,
    strategy: Strategy,
}

impl<'a> TopoSource<'a> {
    pub fn new(
        diagrams: &'a [Vec<FieldPair>],
        config: VectorizerConfig,
        strategy: Strategy,
    ) -> Result<Self, VectorizeError> {
        config.validate()?;
        let fields = diagrams.first().map_or(0, Vec::len);
        if let Some(odd) = diagrams.iter().find(|d| d.len() != fields) {
            return Err(VectorizeError::InconsistentFieldCount(fields, odd.len()));
        }
        Ok(TopoSource {
            diagrams,
            config,
            strategy,
        })
    }

    pub fn field_count(&self) -> usize {
        self.diagrams.first().map_or(0, Vec::len)
    }
}

impl StreamSource for TopoSource<'_> {
    fn dim(&self) -> usize {
        self.config.vector_len(self.strategy, self.field_count())
    }

    fn features(&self, fit: &[usize], emit: &[usize]) -> Array2<f32> {
        let ranges = fit_sample_ranges(fit.iter().map(|&i| &self.diagrams[i]))
            .expect("fit rows are non-empty");
        assemble_rows(self.diagrams, emit, &self.config, self.strategy, &ranges)
            .expect("source was validated at construction")
    }
}

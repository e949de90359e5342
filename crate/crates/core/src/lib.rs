//! Topological feature extraction and classification for MNIST digits.
//!
//! The pipeline runs in stages:
//!
//! 1. [`imageio`] loads MNIST IDX files, draws stratified subsets, and
//!    binarizes images at a fixed threshold.
//! 2. [`filtration`] turns each binary image into 18 scalar fields
//!    (8 height directions, 9 radial centers, 1 density field).
//! 3. [`cubical`] builds a filtered cubical complex over each field:
//!    pixels are vertices, each higher cell takes the max of its vertices.
//! 4. [`persistence`] reduces the boundary matrix over Z/2 to obtain H0 and
//!    H1 persistence diagrams, with a union-find oracle for dimension 0.
//! 5. [`vectorize`] converts diagrams into fixed-length feature vectors via
//!    Betti curves, landscapes, silhouettes, persistence images, and heat
//!    kernels, combined per-image under several strategies.
//! 6. [`learn`] trains small dense softmax classifiers (one or two input
//!    streams) and evaluates them with seeded stratified cross-validation.
//!
//! [`pipeline`] glues the stages together and owns the on-disk cache formats.

pub mod cubical;
pub mod filtration;
pub mod imageio;
pub mod learn;
pub mod persistence;
pub mod pipeline;
pub mod vectorize;

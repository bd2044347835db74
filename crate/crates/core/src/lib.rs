//! Approximation of the modulus of a finite Blaschke product by products of
//! interpolating Blaschke products.
//!
//! The pipeline builds a Carleson contour around the region where `|B|` is
//! small, splits `B = B₁·B₂` along it, computes the harmonic measure that the
//! zeros of `B₁` induce on each contour component, replaces `B₁` by one zero
//! per unit-mass arc, and verifies the result.

pub mod blaschke;
pub mod contour;
pub mod discretize;
pub mod dyadic;
pub mod error;
pub mod geometry;
pub mod harmonic;
pub mod pipeline;
pub mod verify;

pub use blaschke::{BlaschkeProduct, SplitResult};
pub use contour::{Component, Contour, ContourConfig, ContourParams};
pub use discretize::{ArcSegment, DiscretizationResult};
pub use dyadic::{CarlesonSquare, DyadicSquare, Region};
pub use error::{Error, Result};
pub use geometry::{DiskPoint, HyperbolicNet};
pub use harmonic::BoundaryMeasure;
pub use pipeline::{PipelineRecord, RunConfig};

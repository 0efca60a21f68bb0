//! Physically plausible glass-fracture corruption for camera imagery.
//!
//! The crate simulates fracture as stress propagation over a
//! particle-sampled triangular mesh, extracts the crack as a minimum
//! spanning tree over the stressed nodes, rasterizes it with photometric
//! shading, and composites the result onto source images as a reproducible
//! camera-failure corruption with a per-image localization mask.
//!
//! ```
//! use glassfrac::{pipeline, pipeline::PipelineConfig};
//!
//! let cfg = PipelineConfig { particle_count: 1000, ..PipelineConfig::default() };
//! let source = pipeline::synthetic_image(320, 240);
//! let processed = pipeline::process_image(&source, 7, &cfg).unwrap();
//! assert!(processed.pattern.is_tree());
//! ```

pub mod analysis;
pub mod error;
pub mod geom;
pub mod mesh;
pub mod pipeline;
pub mod raster;
pub mod render;
pub mod spatial;
pub mod stress;

pub use error::{Error, Result};
pub use geom::Point2;
pub use mesh::{Extent, ParticleSet, TriMesh};
pub use pipeline::{BoundingBox, Manifest, PipelineConfig};
pub use raster::{BinaryMask, CrackImage};
pub use render::{FocusMode, LightSource, OverlayResult, RenderConfig};
pub use spatial::NeighborIndex;
pub use stress::{CrackPattern, ImpactSpec, StressField};

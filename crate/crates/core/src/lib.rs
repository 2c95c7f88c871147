//! TOF-PET list-mode reconstruction: scanner geometry, an on-the-fly TOF
//! Joseph projector, a list-mode simulator, classical iterative
//! reconstructors, image-quality metrics and the binary file formats.

pub mod error;
pub mod geometry;
pub mod image;
pub mod io;
pub mod metrics;
pub mod projector;
pub mod recon;
pub mod simulate;
pub mod tof;

pub use error::{Error, Result};
pub use geometry::{geometry_hash, lor_of, tof_bin_center, Lor, Point2, ScannerGeometry, TofSpec};
pub use image::{Grid, Image2D};
pub use projector::{BinEnumeration, Event, EventList, Projector, SparseRow};
pub use recon::{Algorithm, ReconConfig, ReconOutput, ReconProblem};
pub use simulate::{Phantom, PhantomKind, SimConfig};
pub use tof::{erf_approx, tof_weight, TofKernelInput};

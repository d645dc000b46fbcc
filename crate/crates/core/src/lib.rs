//! Brownian motion on compact matrix Lie groups, the left and right Itô
//! maps, quasi-invariance densities of translated Wiener measure and the
//! Brownian-measure and energy representations of the path group.

pub mod cli;
pub mod error;
pub mod lie;
pub mod linalg;
pub mod flow;
pub mod girsanov;
pub mod heat;
pub mod mc;
pub mod noise;
pub mod path;
pub mod report;
pub mod repr;
pub mod stats;
pub mod suites;

pub use error::{Error, Result};
pub use lie::{AlgebraVector, CasimirData, GroupElement, GroupKind, LieGroupSpec};
pub use linalg::Mat;
pub use path::{
    AlgebraPath, CameronMartinPath, GridTranslation, GroupPath, Orientation, StepFunction, TimeGrid,
};

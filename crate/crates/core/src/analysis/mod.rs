//! Two-dimensional projections of probe vectors and CSV output.

mod csv;
mod pca;

pub use self::csv::{write_projection_csv, write_round_csv, PROJECTION_HEADER, ROUND_HEADER};
pub use pca::{jacobi_eigen, pca_project, Pca, ProjectedPoint, Projection2D};

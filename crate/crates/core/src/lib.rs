pub mod backward;
pub mod dataset;
pub mod error;
pub mod geometry;
pub mod group_stats;
pub mod linalg;
pub mod model;
pub mod session;
pub mod solvers;

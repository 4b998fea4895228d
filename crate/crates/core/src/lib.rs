pub mod cli;
pub mod config;
pub mod curvature;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod ladder;
pub mod linalg;
pub mod monitors;
pub mod radial;
pub mod scenario;
pub mod solver;

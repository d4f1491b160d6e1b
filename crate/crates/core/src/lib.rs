//! Bohmian mechanics on discretized wave functions: evolution, guided
//! trajectories, actual values and weak actual values, ensemble statistics
//! and the evanescent-step analysis.

pub mod calculus;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod guidance;
pub mod interp;
pub mod io;
pub mod operators;
pub mod potential;
pub mod registry;
pub mod scenario;
pub mod waveguide;
pub mod wavefunction;

pub use error::{BohmError, Result};
pub use grid::{Axis, Boundary, Grid, Point};
pub use wavefunction::{Units, WaveFunction};

//! Classical reference solutions: explicit finite differences, Monte Carlo
//! on the SDE itself, and the closed-form Gaussian kernel.

mod euler;
mod kernel;
mod monte_carlo;

pub use euler::{euler_evolve, euler_evolve_source, stability_number};
pub use kernel::{
    analytic_kernel, analytic_kernel_general, constant_kernel_masses, cell_masses, kernel_cell_masses, kernel_nodal, CellQuadrature,
};
pub use monte_carlo::{mc_simulate, mc_snapshots, simulate_positions, Histogram, McSettings};

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::SdeSystem;

/// Density of the correlated heat equation `u_t = rho u_xy + u_xx/2 + u_yy/2`
/// started from a point mass at `(x0, y0)`.
pub fn analytic_kernel(x: f64, y: f64, t: f64, rho: f64, x0: f64, y0: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel time must be positive, got {t}")));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidParameter(format!("kernel needs |rho| < 1, got {rho}")));
    }
    let (dx, dy) = (x - x0, y - y0);
    let q = 1.0 - rho * rho;
    let exponent = (rho * (x0 - x) * dy + 0.5 * dx * dx + 0.5 * dy * dy) / (t * q);
    Ok((-exponent).exp() / (2.0 * PI * t * q.sqrt()))
}

/// Kernel of `u_t = A u_xy + B u_xx + C u_yy - r u`.
pub fn analytic_kernel_general(
    x: f64,
    y: f64,
    t: f64,
    (a, b, c, r): (f64, f64, f64, f64),
    x0: f64,
    y0: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel time must be positive, got {t}")));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel needs B > 0, got {b}")));
    }
    let delta = 4.0 * b * c - a * a;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("kernel needs 4BC - A^2 > 0, got {delta}")));
    }
    let (dx, dy) = (x - x0, y - y0);
    let shear = a / (2.0 * b) * dx - dy;
    let exponent = b / (delta * t) * shear * shear + dx * dx / (4.0 * b * t);
    Ok((-r * t).exp() / (2.0 * PI * t * delta.sqrt()) * (-exponent).exp())
}

/// Composite two-point Gauss rule over each cell, with periodic images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellQuadrature {
    /// Subintervals per axis inside one cell.
    pub subdivisions: usize,
    /// Periodic copies summed in each direction (`-k..=k`).
    pub images: i32,
}

impl Default for CellQuadrature {
    fn default() -> Self {
        Self {
            subdivisions: 16,
            images: 2,
        }
    }
}

/// Integral of a density over the cell `[x_i - h/2, x_i + h/2]^D` around
/// every node, summing periodic images of the density.
pub fn cell_masses<F>(grid: &Grid, density: F, quad: CellQuadrature) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let dims = grid.dims();
    if dims > 2 {
        return Err(Error::DimensionCost(dims));
    }
    let sub = quad.subdivisions.max(1);
    let g = 0.5 / 3f64.sqrt();
    // Offsets and weights of the composite rule on [-1/2, 1/2].
    let nodes: Vec<(f64, f64)> = (0..sub)
        .flat_map(|k| {
            let mid = -0.5 + (k as f64 + 0.5) / sub as f64;
            let half = 1.0 / sub as f64;
            [(mid - g * half, 0.5 / sub as f64), (mid + g * half, 0.5 / sub as f64)]
        })
        .collect();
    let images: Vec<i32> = (-quad.images..=quad.images).collect();
    let h = grid.spacings();
    let periods: Vec<f64> = (0..dims).map(|d| grid.period(d)).collect();

    let mut out = Vec::with_capacity(grid.len());
    let mut point = vec![0.0; dims];
    for k in 0..grid.len() {
        let centre = grid.coordinate(k);
        let mut total = 0.0;
        let mut index = vec![0usize; dims];
        loop {
            let mut w = 1.0;
            for d in 0..dims {
                let (off, wd) = nodes[index[d]];
                point[d] = centre[d] + off * h[d];
                w *= wd * h[d];
            }
            let mut value = 0.0;
            let mut img = vec![0usize; dims];
            loop {
                let shifted: Vec<f64> = (0..dims)
                    .map(|d| point[d] + images[img[d]] as f64 * periods[d])
                    .collect();
                value += density(&shifted)?;
                if !advance(&mut img, images.len()) {
                    break;
                }
            }
            total += w * value;
            if !advance(&mut index, nodes.len()) {
                break;
            }
        }
        out.push(total);
    }
    Ok(out)
}

fn advance(index: &mut [usize], base: usize) -> bool {
    for slot in index.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Cell masses of the correlated heat kernel on a 2D grid.
pub fn kernel_cell_masses(grid: &Grid, t: f64, rho: f64, centre: [f64; 2], quad: CellQuadrature) -> Result<Vec<f64>> {
    crate::error::check_len(2, grid.dims(), "kernel grid dimension")?;
    cell_masses(grid, |p| analytic_kernel(p[0], p[1], t, rho, centre[0], centre[1]), quad)
}

/// Kernel density at every node, with `images` periodic copies per side.
pub fn kernel_nodal(grid: &Grid, t: f64, rho: f64, centre: [f64; 2], images: i32) -> Result<Vec<f64>> {
    crate::error::check_len(2, grid.dims(), "kernel grid dimension")?;
    let (lx, ly) = (grid.period(0), grid.period(1));
    grid.nodes()
        .map(|p| {
            let mut s = 0.0;
            for i in -images..=images {
                for j in -images..=images {
                    let x = p[0] + i as f64 * lx;
                    let y = p[1] + j as f64 * ly;
                    s += analytic_kernel(x, y, t, rho, centre[0], centre[1])?;
                }
            }
            Ok(s)
        })
        .collect()
}

/// Cell masses at time `t` of the fundamental solution of a constant
/// system started from a point mass at `centre` at time 0: a Gaussian with
/// mean `centre + mu t`, covariance `Sigma Sigma^T t`, weighted by `e^{-rt}`.
pub fn constant_kernel_masses(
    sde: &SdeSystem,
    grid: &Grid,
    t: f64,
    centre: &[f64],
    quad: CellQuadrature,
) -> Result<Vec<f64>> {
    if !sde.is_constant() {
        return Err(Error::InvalidParameter("closed-form kernel needs constant coefficients".into()));
    }
    crate::error::check_len(sde.dims(), grid.dims(), "kernel grid dimension")?;
    crate::error::check_len(sde.dims(), centre.len(), "kernel centre")?;
    let mu = sde.drift_at(centre, 0.0)?;
    let a = sde.covariance_at(centre, 0.0)? * 0.5;
    let r = sde.discount_at(centre, 0.0);
    let mean: Vec<f64> = centre.iter().zip(&mu).map(|(c, m)| c + m * t).collect();
    match sde.dims() {
        1 => {
            let var = 2.0 * a[(0, 0)] * t;
            if !(var > 0.0) {
                return Err(Error::InvalidParameter(format!("kernel needs positive variance, got {var}")));
            }
            let norm = (-r * t).exp() / (2.0 * PI * var).sqrt();
            cell_masses(grid, |p| Ok(norm * (-(p[0] - mean[0]).powi(2) / (2.0 * var)).exp()), quad)
        }
        2 => {
            let abc = (2.0 * a[(0, 1)], a[(0, 0)], a[(1, 1)], r);
            cell_masses(grid, |p| analytic_kernel_general(p[0], p[1], t, abc, mean[0], mean[1]), quad)
        }
        d => Err(Error::DimensionCost(d)),
    }
}

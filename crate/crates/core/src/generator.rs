//! Periodic finite-difference discretization of the generator.
//!
//! Couplings out of node `j` use the coefficients sampled at `j`, so every
//! column sums to `-r(j)` even when the coefficients vary in space. This is the
//! flux form of the forward (density) equation: probability leaving a node is
//! exactly the probability arriving at its neighbours.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::model::CoefficientField;

/// Largest qubit count [`SparseGenerator::to_dense`] will materialize.
pub const DENSE_QUBIT_LIMIT: usize = 12;

/// Square real matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseGenerator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseGenerator {
    /// Build from `(row, col, value)` triples; duplicates are summed.
    pub fn from_triplets(dim: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        if !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        if let Some(&(r, c, _)) = triplets.iter().find(|(r, c, _)| *r >= dim || *c >= dim) {
            return Err(Error::InvalidParameter(format!(
                "entry ({r}, {c}) outside a {dim}x{dim} matrix"
            )));
        }
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0; dim + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(Self {
            dim,
            row_ptr,
            cols,
            values,
        })
    }

    /// The all-zero operator.
    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_triplets(dim, Vec::new())
    }

    /// `lambda * I`.
    pub fn scaled_identity(dim: usize, lambda: f64) -> Result<Self> {
        Self::from_triplets(dim, (0..dim).map(|i| (i, i, lambda)).collect())
    }

    /// Keeps every entry with nonzero magnitude.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        check_len(m.nrows(), m.ncols(), "dense matrix must be square")?;
        let mut triplets = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != 0.0 {
                    triplets.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), triplets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn qubits(&self) -> usize {
        self.dim.trailing_zeros() as usize
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Stored entries of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.dim)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|r| self.get(r, r)).collect()
    }

    pub fn max_abs_diagonal(&self) -> f64 {
        self.diagonal().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for (i, &c) in self.cols.iter().enumerate() {
            sums[c] += self.values[i];
        }
        sums
    }

    pub fn max_nonzeros_per_row(&self) -> usize {
        self.row_ptr.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
    }

    pub fn transpose(&self) -> Self {
        let t = self.triplets().into_iter().map(|(r, c, v)| (c, r, v)).collect();
        Self::from_triplets(self.dim, t).expect("transpose keeps the dimension")
    }

    /// `self * u`.
    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim];
        self.apply_into(u, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        check_len(self.dim, u.len(), "generator apply input")?;
        check_len(self.dim, out.len(), "generator apply output")?;
        let row = |r: usize| self.row(r).map(|(c, v)| v * u[c]).sum::<f64>();
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if self.dim >= 4096 {
                out.par_iter_mut().enumerate().for_each(|(r, o)| *o = row(r));
                return Ok(());
            }
        }
        for (r, o) in out.iter_mut().enumerate() {
            *o = row(r);
        }
        Ok(())
    }

    /// Complex matrix-vector product (real matrix, complex vector).
    pub fn apply_complex(&self, u: &[num_complex::Complex64]) -> Result<Vec<num_complex::Complex64>> {
        check_len(self.dim, u.len(), "generator apply input")?;
        Ok((0..self.dim)
            .map(|r| self.row(r).map(|(c, v)| u[c] * v).sum())
            .collect())
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        if self.qubits() > DENSE_QUBIT_LIMIT {
            return Err(Error::DenseGuard {
                qubits: self.qubits(),
                limit: DENSE_QUBIT_LIMIT,
            });
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        Ok(m)
    }

    /// `[[row, col, value], ...]`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self.triplets()).expect("triples serialize")
    }
}

/// Sign used on the diagonal of the second-difference stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagonalSign {
    /// `-sum_d (Sigma Sigma^T)_dd / dx_d^2 - r`, the consistent second difference.
    #[default]
    Stencil,
    /// `+sum_d (Sigma Sigma^T)_dd / dx_d^2 - r`; kept only to show that it blows up.
    Flipped,
}

/// Discretize the generator with the standard stencil.
pub fn discretize(coeffs: &CoefficientField, grid: &Grid) -> Result<SparseGenerator> {
    discretize_with(coeffs, grid, DiagonalSign::Stencil)
}

pub fn discretize_with(
    coeffs: &CoefficientField,
    grid: &Grid,
    sign: DiagonalSign,
) -> Result<SparseGenerator> {
    if coeffs.grid() != grid {
        return Err(Error::InvalidGrid(
            "coefficient field was sampled on a different grid".into(),
        ));
    }
    let dims = grid.dims();
    let n = grid.len();
    let h = grid.spacings();
    let n_m = grid.points_per_dim();
    let mut triplets = Vec::with_capacity(n * (1 + 2 * dims + 2 * dims * dims));
    let mut offset = vec![0i64; dims];

    for j in 0..n {
        let mut diag = -coeffs.discount(j);
        for d in 0..dims {
            let t_dd = 2.0 * coeffs.diffusion(j, d, d);
            let mu = coeffs.drift(j)[d];
            let second = 0.5 * t_dd / (h[d] * h[d]);
            let first = 0.5 * mu / h[d];
            diag -= 2.0 * second;
            offset[d] = 1;
            triplets.push((grid.shifted(j, &offset), j, second + first));
            offset[d] = -1;
            triplets.push((grid.shifted(j, &offset), j, second - first));
            offset[d] = 0;

            for e in d + 1..dims {
                let t_de = coeffs.diffusion(j, d, e) + coeffs.diffusion(j, e, d);
                if t_de == 0.0 {
                    continue;
                }
                if n_m < 3 {
                    return Err(Error::StencilOverlap(format!(
                        "mixed derivative in dimensions {d} and {e} needs at least 3 points per dimension, grid has {n_m}"
                    )));
                }
                let corner = 0.25 * t_de / (h[d] * h[e]);
                for (sd, se) in [(1, 1), (-1, -1), (1, -1), (-1, 1)] {
                    offset[d] = sd;
                    offset[e] = se;
                    triplets.push((grid.shifted(j, &offset), j, (sd * se) as f64 * corner));
                }
                offset[d] = 0;
                offset[e] = 0;
            }
        }
        if sign == DiagonalSign::Flipped {
            diag = -diag - 2.0 * coeffs.discount(j);
        }
        triplets.push((j, j, diag));
    }
    let gen = SparseGenerator::from_triplets(n, triplets)?;
    if gen.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("discretized generator"));
    }
    Ok(gen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{evaluate_coefficients, preset_system, Preset, SdeSystem};
    use approx::assert_abs_diff_eq;
    use std::collections::BTreeMap;

    fn heat1d(qubits: usize, a: f64, mu: f64, r: f64, dx: f64) -> SparseGenerator {
        let sde = SdeSystem::constant(
            vec![mu],
            DMatrix::from_element(1, 1, (2.0 * a).sqrt()),
            r,
        )
        .unwrap();
        let grid = Grid::uniform(1, qubits, dx).unwrap();
        discretize(&evaluate_coefficients(&sde, &grid, 0.0).unwrap(), &grid).unwrap()
    }

    fn correlated(qubits: usize, rho: f64) -> (Grid, SparseGenerator) {
        let params: BTreeMap<String, f64> = [("rho".to_string(), rho)].into();
        let sde = preset_system(Preset::Heat2dCorrelated, &params).unwrap();
        let grid = Grid::uniform(2, qubits, 1.0).unwrap();
        let gen = discretize(&evaluate_coefficients(&sde, &grid, 0.0).unwrap(), &grid).unwrap();
        (grid, gen)
    }

    #[test]
    fn one_dimensional_circulant() {
        let gen = heat1d(2, 0.5, 0.0, 0.0, 1.0);
        let dense = gen.to_dense().unwrap();
        let expected = [-1.0, 0.5, 0.0, 0.5];
        for r in 0..4 {
            for c in 0..4 {
                assert_abs_diff_eq!(dense[(r, c)], expected[(c + 4 - r) % 4], epsilon = 1e-15);
            }
        }
        assert_eq!(dense, dense.transpose());
        let e0 = gen.apply(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(e0, vec![-1.0, 0.5, 0.0, 0.5]);
        assert_eq!(gen.apply(&[1.0; 4]).unwrap(), vec![0.0; 4]);
        assert_eq!(gen.apply(&[0.0; 4]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn corner_couplings() {
        let (grid, gen) = correlated(6, 1.0 / 3.0);
        let from = grid.flat_index(&[3, 3]);
        assert_abs_diff_eq!(gen.get(grid.flat_index(&[4, 4]), from), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gen.get(grid.flat_index(&[2, 2]), from), 1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gen.get(grid.flat_index(&[4, 2]), from), -1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gen.get(grid.flat_index(&[2, 4]), from), -1.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gen.get(from, from), -2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gen.get(grid.flat_index(&[4, 3]), from), 0.5, epsilon = 1e-15);
        assert_eq!(gen.max_nonzeros_per_row(), 9);
    }

    #[test]
    fn mixed_coefficient_recovers_rho() {
        // Applied to f = x*y, the stencil returns exactly the mixed-derivative
        // coefficient rho (away from the wrap).
        let rho = 1.0 / 3.0;
        let (grid, gen) = correlated(6, rho);
        let u: Vec<f64> = grid.nodes().map(|x| x[0] * x[1]).collect();
        let gu = gen.apply(&u).unwrap();
        assert_abs_diff_eq!(gu[grid.flat_index(&[3, 4])], rho, epsilon = 1e-12);
        let v: Vec<f64> = grid.nodes().map(|x| x[0] * x[0]).collect();
        let gv = gen.apply(&v).unwrap();
        assert_abs_diff_eq!(gv[grid.flat_index(&[3, 4])], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn discount_shifts_diagonal() {
        let base = heat1d(3, 0.5, 0.0, 0.0, 1.0);
        let shifted = heat1d(3, 0.5, 0.0, 0.07, 1.0);
        for (a, b) in base.diagonal().iter().zip(shifted.diagonal()) {
            assert_abs_diff_eq!(a - b, 0.07, epsilon = 1e-15);
        }
    }

    #[test]
    fn columns_sum_to_zero() {
        let (_, gen) = correlated(6, -0.6);
        assert!(gen.column_sums().iter().all(|s| s.abs() <= 1e-12));
        let drifted = heat1d(4, 0.3, 0.8, 0.0, 0.5);
        assert!(drifted.column_sums().iter().all(|s| s.abs() <= 1e-12));
    }

    #[test]
    fn variable_coefficients_conserve_mass() {
        let params: BTreeMap<String, f64> =
            [("theta".to_string(), 0.7), ("sigma".to_string(), 0.5)].into();
        let sde = preset_system(Preset::OrnsteinUhlenbeck1d, &params).unwrap();
        let grid = Grid::new(1, 5, vec![0.2], vec![-3.2]).unwrap();
        let gen = discretize(&evaluate_coefficients(&sde, &grid, 0.0).unwrap(), &grid).unwrap();
        assert!(gen.column_sums().iter().all(|s| s.abs() <= 1e-12));
    }

    #[test]
    fn drift_moves_mass_downstream() {
        // A bump advected with mu > 0 must move towards larger x.
        let gen = heat1d(5, 1e-3, 1.0, 0.0, 0.1);
        let grid = Grid::uniform(1, 5, 0.1).unwrap();
        let mut u: Vec<f64> = grid.axis(0).iter().map(|x| (-(x - 1.0f64).powi(2) / 0.05).exp()).collect();
        let mean = |u: &[f64]| {
            let xs = grid.axis(0);
            u.iter().zip(&xs).map(|(p, x)| p * x).sum::<f64>() / u.iter().sum::<f64>()
        };
        let before = mean(&u);
        for _ in 0..50 {
            let gu = gen.apply(&u).unwrap();
            u.iter_mut().zip(gu).for_each(|(a, b)| *a += 0.005 * b);
        }
        let moved = mean(&u) - before;
        assert_abs_diff_eq!(moved, 0.25, epsilon = 0.01);
    }

    #[test]
    fn tiny_grid_rejects_mixed_terms() {
        let params: BTreeMap<String, f64> = [("rho".to_string(), 0.5)].into();
        let sde = preset_system(Preset::Heat2dCorrelated, &params).unwrap();
        let grid = Grid::uniform(2, 2, 1.0).unwrap();
        let field = evaluate_coefficients(&sde, &grid, 0.0).unwrap();
        assert!(matches!(discretize(&field, &grid), Err(Error::StencilOverlap(_))));

        let params: BTreeMap<String, f64> = [("rho".to_string(), 0.0)].into();
        let sde = preset_system(Preset::Heat2dCorrelated, &params).unwrap();
        let field = evaluate_coefficients(&sde, &grid, 0.0).unwrap();
        let gen = discretize(&field, &grid).unwrap();
        assert!(gen.column_sums().iter().all(|s| s.abs() <= 1e-12));
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let (grid, _) = correlated(6, 0.2);
        let params: BTreeMap<String, f64> = [("rho".to_string(), 0.2)].into();
        let sde = preset_system(Preset::Heat2dCorrelated, &params).unwrap();
        let other = Grid::uniform(2, 4, 1.0).unwrap();
        let field = evaluate_coefficients(&sde, &other, 0.0).unwrap();
        assert!(discretize(&field, &grid).is_err());
    }

    #[test]
    fn sparse_dense_round_trip() {
        let single = SparseGenerator::from_triplets(4, vec![(0, 0, -1.0)]).unwrap();
        let d = single.to_dense().unwrap();
        assert_eq!(d[(0, 0)], -1.0);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 1);

        let (_, gen) = correlated(6, 1.0 / 3.0);
        let back = SparseGenerator::from_dense(&gen.to_dense().unwrap()).unwrap();
        assert_eq!(back.triplets(), gen.triplets());
        assert_eq!(gen.transpose().transpose(), gen);
    }

    #[test]
    fn duplicates_accumulate_and_guard_holds() {
        let g = SparseGenerator::from_triplets(2, vec![(1, 0, 0.5), (1, 0, 0.25)]).unwrap();
        assert_eq!(g.get(1, 0), 0.75);
        assert_eq!(g.nnz(), 1);
        assert!(matches!(SparseGenerator::zeros(3), Err(Error::NotPowerOfTwo(3))));
        let big = SparseGenerator::zeros(1 << 13).unwrap();
        assert!(matches!(big.to_dense(), Err(Error::DenseGuard { .. })));
        assert!(g.apply(&[1.0]).is_err());
    }

    #[test]
    fn json_triples() {
        let g = SparseGenerator::from_triplets(2, vec![(0, 1, 0.5)]).unwrap();
        assert_eq!(g.to_json().to_string(), "[[0,1,0.5]]");
    }
}

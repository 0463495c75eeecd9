//! Periodic hypercube mesh indexed by computational basis states.
//!
//! A grid on `n_q` qubits in `D` dimensions has `n_m = 2^(n_q/D)` points per
//! dimension. The flat index of node `(i_1, ..., i_D)` is row-major with `i_1`
//! slowest, so dimension 1 owns the most significant `n_q/D` bits of the
//! basis-state label.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dims: usize,
    qubits: usize,
    points_per_dim: usize,
    spacings: Vec<f64>,
    origin: Vec<f64>,
}

impl Grid {
    pub fn new(dims: usize, qubits: usize, spacings: Vec<f64>, origin: Vec<f64>) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidGrid("dimension count must be positive".into()));
        }
        if qubits == 0 || !qubits.is_multiple_of(dims) {
            return Err(Error::InvalidGrid(format!(
                "{qubits} qubits cannot be split evenly over {dims} dimensions"
            )));
        }
        if qubits > 30 {
            return Err(Error::QubitRange(qubits));
        }
        if spacings.len() != dims || origin.len() != dims {
            return Err(Error::InvalidGrid(format!(
                "expected {dims} spacings and origins, got {} and {}",
                spacings.len(),
                origin.len()
            )));
        }
        if let Some(bad) = spacings.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
            return Err(Error::InvalidGrid(format!("spacing must be positive, got {bad}")));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        Ok(Self {
            dims,
            qubits,
            points_per_dim: 1 << (qubits / dims),
            spacings,
            origin,
        })
    }

    /// Grid with the same spacing in every dimension and origin at zero.
    pub fn uniform(dims: usize, qubits: usize, spacing: f64) -> Result<Self> {
        Self::new(dims, qubits, vec![spacing; dims], vec![0.0; dims])
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn qubits_per_dim(&self) -> usize {
        self.qubits / self.dims
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Number of nodes, `2^n_q`.
    pub fn len(&self) -> usize {
        1 << self.qubits
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Product of the spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    /// Length of the periodic domain along dimension `d`.
    pub fn period(&self, d: usize) -> f64 {
        self.points_per_dim as f64 * self.spacings[d]
    }

    /// Stride of dimension `d` in the flat index.
    pub fn stride(&self, d: usize) -> usize {
        self.points_per_dim.pow((self.dims - 1 - d) as u32)
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        debug_assert_eq!(multi.len(), self.dims);
        multi
            .iter()
            .fold(0, |acc, &i| acc * self.points_per_dim + i)
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims];
        self.multi_index_into(flat, &mut out);
        out
    }

    pub fn multi_index_into(&self, mut flat: usize, out: &mut [usize]) {
        for slot in out.iter_mut().rev() {
            *slot = flat % self.points_per_dim;
            flat /= self.points_per_dim;
        }
    }

    pub fn coordinate(&self, flat: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dims];
        self.coordinate_into(flat, &mut out);
        out
    }

    pub fn coordinate_into(&self, mut flat: usize, out: &mut [f64]) {
        for d in (0..self.dims).rev() {
            let i = flat % self.points_per_dim;
            flat /= self.points_per_dim;
            out[d] = self.origin[d] + i as f64 * self.spacings[d];
        }
    }

    /// Node coordinates along one dimension.
    pub fn axis(&self, d: usize) -> Vec<f64> {
        (0..self.points_per_dim)
            .map(|i| self.origin[d] + i as f64 * self.spacings[d])
            .collect()
    }

    /// Flat index of `flat + offset` with periodic wrap in every dimension.
    pub fn shifted(&self, flat: usize, offset: &[i64]) -> usize {
        let n = self.points_per_dim as i64;
        let mut multi = self.multi_index(flat);
        for (m, o) in multi.iter_mut().zip(offset) {
            *m = (*m as i64 + o).rem_euclid(n) as usize;
        }
        self.flat_index(&multi)
    }

    /// Nearest node to a point, wrapping periodically.
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let n = self.points_per_dim as i64;
        x.iter().enumerate().fold(0usize, |acc, (d, &xd)| {
            let i = ((xd - self.origin[d]) / self.spacings[d]).round() as i64;
            acc * self.points_per_dim + i.rem_euclid(n) as usize
        })
    }

    /// Every node's coordinates, flat-index order.
    pub fn nodes(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len()).map(move |k| self.coordinate(k))
    }
}

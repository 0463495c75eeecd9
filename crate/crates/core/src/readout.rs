//! Expectations and moments of a scaled solution `p = alpha v`.
//!
//! The quantum route estimates `|sum_i p_i f_i|` from the overlap of `v`
//! with the normalized target `f / C`, which hardware reads through a
//! Hadamard test on `C^{n-1}Z` after mapping `f / C` to `|0>`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{projector_overlap, Estimator, StateVector};
use crate::error::{check_len, Error, Result};
use crate::grid::Grid;

/// Tolerance on `|| f / C ||_2 - 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

/// A solution written as `alpha |v>` with `|v>` of unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledState {
    pub alpha: f64,
    pub state: StateVector,
}

impl ScaledState {
    pub fn new(alpha: f64, state: StateVector) -> Self {
        Self { alpha, state }
    }

    /// Split a real solution vector into its 2-norm and direction.
    pub fn from_solution(p: &[f64]) -> Result<Self> {
        if !p.len().is_power_of_two() {
            return Err(Error::NotPowerOfTwo(p.len()));
        }
        let alpha = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        if alpha == 0.0 {
            return Err(Error::ZeroTarget);
        }
        let v: Vec<f64> = p.iter().map(|x| x / alpha).collect();
        Ok(Self {
            alpha,
            state: StateVector::from_real(&v),
        })
    }

    pub fn solution(&self) -> Vec<f64> {
        self.state.0.iter().map(|a| self.alpha * a.re).collect()
    }
}

/// A function sampled on the grid, stored as `f / C` with `C = ||f||_2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub values: Vec<f64>,
    pub norm: f64,
    /// Axis of a moment observable, if this is one.
    pub component: Option<usize>,
    pub estimator: Estimator,
}

impl ObservableSpec {
    pub fn new(f: &[f64], estimator: Estimator) -> Result<Self> {
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroTarget);
        }
        if !norm.is_finite() {
            return Err(Error::NonFinite("observable values"));
        }
        Ok(Self {
            values: f.iter().map(|v| v / norm).collect(),
            norm,
            component: None,
            estimator,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (n - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::Unnormalized(n));
        }
        self.estimator.validate()
    }
}

/// `sum_i p_i f_i`.
pub fn direct_expectation(p: &[f64], f: &[f64]) -> Result<f64> {
    check_len(p.len(), f.len(), "observable length vs solution")?;
    Ok(p.iter().zip(f).map(|(a, b)| a * b).sum())
}

/// Result of a readout through `S_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    /// Estimate of `|sum_i p_i f_i|`.
    pub value: f64,
    pub std_error: f64,
    /// The signed direct sum is negative, so `value` has lost its sign.
    pub negative: bool,
}

/// `C alpha |<f/C|v>|`, exactly or from shot-sampled projector overlaps.
pub fn expectation_via_sf<R: Rng + ?Sized>(
    state: &ScaledState,
    spec: &ObservableSpec,
    rng: &mut R,
) -> Result<Readout> {
    spec.validate()?;
    check_len(state.state.len(), spec.values.len(), "observable length vs state")?;
    let overlap: f64 = state.state.0.iter().zip(&spec.values).map(|(a, f)| a.re * f).sum();
    let negative = state.alpha * overlap < 0.0;
    let scale = spec.norm * state.alpha.abs();
    match spec.estimator {
        Estimator::Exact => Ok(Readout {
            value: scale * overlap.abs(),
            std_error: 0.0,
            negative,
        }),
        Estimator::Shots(_) => {
            let q = projector_overlap(&state.state, &spec.values, spec.estimator, rng)?;
            let root = q.value.max(0.0).sqrt();
            // Delta method through the square root; undefined at zero.
            let se = if root > 0.0 { q.std_error / (2.0 * root) } else { q.std_error.sqrt() };
            Ok(Readout {
                value: scale * root,
                std_error: scale * se,
                negative,
            })
        }
    }
}

/// Observable `x_axis / (C sqrt(2^{n - n/D}))`, a normalized axis ramp on
/// the chosen dimension tensored with uniform vectors on the others.
pub fn moment_spec(grid: &Grid, axis: usize, estimator: Estimator) -> Result<ObservableSpec> {
    if axis >= grid.dims() {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} out of range for a {}-dimensional grid",
            grid.dims()
        )));
    }
    let coords = grid.axis(axis);
    let c = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
    if c == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let ramp: Vec<f64> = coords.iter().map(|x| x / c).collect();
    let m = grid.points_per_dim();
    let uniform = vec![1.0 / (m as f64).sqrt(); m];
    let mut values = vec![1.0];
    for d in 0..grid.dims() {
        values = kron(&values, if d == axis { &ramp } else { &uniform });
    }
    let others = (grid.len() / m) as f64;
    Ok(ObservableSpec {
        values,
        norm: c * others.sqrt(),
        component: Some(axis),
        estimator,
    })
}

/// `E[X_axis]` through the `S_f` route.
pub fn moment_component<R: Rng + ?Sized>(
    state: &ScaledState,
    grid: &Grid,
    axis: usize,
    estimator: Estimator,
    rng: &mut R,
) -> Result<Readout> {
    let spec = moment_spec(grid, axis, estimator)?;
    expectation_via_sf(state, &spec, rng)
}

fn kron(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

/// Single-qubit factor of a dyadic block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockGate {
    I,
    X,
    H,
}

impl BlockGate {
    fn on_zero(self) -> [f64; 2] {
        match self {
            BlockGate::I => [1.0, 0.0],
            BlockGate::X => [0.0, 1.0],
            BlockGate::H => [std::f64::consts::FRAC_1_SQRT_2; 2],
        }
    }
}

/// `2^{k/2} (X^{s} tensor H^{tensor k}) |0>`: ones on `2^k` consecutive indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadicBlock {
    pub start: usize,
    pub log_size: usize,
    pub weight: f64,
    /// One factor per qubit, most significant first.
    pub gates: Vec<BlockGate>,
}

impl DyadicBlock {
    fn new(start: usize, log_size: usize, n: usize) -> Self {
        let gates = (0..n)
            .map(|q| {
                let bit = n - 1 - q;
                if bit < log_size {
                    BlockGate::H
                } else if start >> bit & 1 == 1 {
                    BlockGate::X
                } else {
                    BlockGate::I
                }
            })
            .collect();
        Self {
            start,
            log_size,
            weight: 2f64.powf(log_size as f64 / 2.0),
            gates,
        }
    }

    /// The weighted product state, built factor by factor.
    pub fn apply_to_zero(&self) -> Vec<f64> {
        let mut out = vec![self.weight];
        for g in &self.gates {
            out = kron(&out, &g.on_zero());
        }
        out
    }
}

/// `S_chi[0,a]` as a sum of disjoint dyadic blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalOperator {
    pub qubits: usize,
    pub end: usize,
    pub blocks: Vec<DyadicBlock>,
}

impl IntervalOperator {
    /// Indicator of the index range `0..=end`.
    pub fn apply_to_zero(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1 << self.qubits];
        for b in &self.blocks {
            out.iter_mut().zip(b.apply_to_zero()).for_each(|(o, v)| *o += v);
        }
        out
    }
}

/// Decompose `[0, a]` into blocks following the binary expansion of `a + 1`.
pub fn interval_operator(a_over_dx: usize, n: usize) -> Result<IntervalOperator> {
    if n == 0 || n > 30 {
        return Err(Error::QubitRange(n));
    }
    if a_over_dx >= 1 << n {
        return Err(Error::IntervalRange { a: a_over_dx, n });
    }
    let count = a_over_dx + 1;
    let mut blocks = Vec::new();
    let mut start = 0;
    for k in (0..=n).rev() {
        if count >> k & 1 == 1 {
            blocks.push(DyadicBlock::new(start, k, n));
            start += 1 << k;
        }
    }
    Ok(IntervalOperator {
        qubits: n,
        end: a_over_dx,
        blocks,
    })
}

/// Indicator of `lo..=hi` as a difference of two prefix intervals.
fn range_indicator(lo: usize, hi: usize, n: usize) -> Result<Vec<f64>> {
    let mut v = interval_operator(hi, n)?.apply_to_zero();
    if lo > 0 {
        let below = interval_operator(lo - 1, n)?.apply_to_zero();
        v.iter_mut().zip(below).for_each(|(a, b)| *a -= b);
    }
    Ok(v)
}

/// Anything that can report partial derivatives for a Taylor expansion.
pub trait TaylorSource {
    /// `d^gamma f` at `point`, with `gamma` one entry per dimension.
    fn derivative(&self, point: &[f64], gamma: &[usize]) -> f64;
}

impl<F: Fn(&[f64], &[usize]) -> f64> TaylorSource for F {
    fn derivative(&self, point: &[f64], gamma: &[usize]) -> f64 {
        self(point, gamma)
    }
}

/// `sum_k c_k x^{m_k}` with exact derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polynomial {
    pub terms: Vec<(Vec<usize>, f64)>,
}

impl Polynomial {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| c * m.iter().zip(x).map(|(p, v)| v.powi(*p as i32)).product::<f64>())
            .sum()
    }
}

impl TaylorSource for Polynomial {
    fn derivative(&self, point: &[f64], gamma: &[usize]) -> f64 {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut v = *c;
                for ((p, g), x) in m.iter().zip(gamma).zip(point) {
                    if g > p {
                        return 0.0;
                    }
                    v *= falling(*p, *g) * x.powi((p - g) as i32);
                }
                v
            })
            .sum()
    }
}

fn falling(p: usize, g: usize) -> f64 {
    (p - g + 1..=p).map(|k| k as f64).product()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// Piece count per axis and Taylor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PiecewiseTaylor {
    pub pieces: usize,
    pub order: usize,
}

/// `S_f |0>` from a piecewise Taylor model of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaylorSf {
    pub values: Vec<f64>,
    /// Number of (piece, monomial) terms in the operator sum.
    pub terms: usize,
}

/// Expand `f` to order `L` around the lower corner of each of the `d^D`
/// pieces and sum `coeff * (x - a)^beta` masked by the piece indicator.
pub fn piecewise_taylor_sf<S: TaylorSource + ?Sized>(
    grid: &Grid,
    source: &S,
    settings: PiecewiseTaylor,
) -> Result<TaylorSf> {
    let dims = grid.dims();
    if dims > 2 {
        return Err(Error::DimensionCost(dims));
    }
    let m = grid.points_per_dim();
    let nq = grid.qubits_per_dim();
    if settings.pieces == 0 || settings.pieces > m {
        return Err(Error::InvalidParameter(format!(
            "piece count must be in 1..={m}, got {}",
            settings.pieces
        )));
    }
    let bounds: Vec<usize> = (0..=settings.pieces).map(|k| k * m / settings.pieces).collect();
    let axis_indicators: Vec<Vec<f64>> = (0..settings.pieces)
        .map(|k| range_indicator(bounds[k], bounds[k + 1] - 1, nq))
        .collect::<Result<_>>()?;
    let exponents = multi_indices(dims, settings.order);

    let mut values = vec![0.0; grid.len()];
    let mut terms = 0;
    let mut piece = vec![0usize; dims];
    let mut coords = vec![0.0; dims];
    loop {
        let corner: Vec<f64> = (0..dims)
            .map(|d| grid.origin()[d] + bounds[piece[d]] as f64 * grid.spacings()[d])
            .collect();
        let mut mask = vec![1.0];
        for d in 0..dims {
            mask = kron(&mask, &axis_indicators[piece[d]]);
        }
        for beta in &exponents {
            let denom: f64 = beta.iter().map(|b| factorial(*b)).product();
            let coeff = source.derivative(&corner, beta) / denom;
            if coeff == 0.0 {
                continue;
            }
            terms += 1;
            for (k, out) in values.iter_mut().enumerate() {
                if mask[k] == 0.0 {
                    continue;
                }
                grid.coordinate_into(k, &mut coords);
                let mono: f64 = (0..dims).map(|d| (coords[d] - corner[d]).powi(beta[d] as i32)).product();
                *out += mask[k] * coeff * mono;
            }
        }
        if !next_index(&mut piece, settings.pieces) {
            break;
        }
    }
    Ok(TaylorSf { values, terms })
}

fn multi_indices(dims: usize, order: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx = vec![0usize; dims];
    loop {
        if idx.iter().sum::<usize>() <= order {
            out.push(idx.clone());
        }
        if !next_index(&mut idx, order + 1) {
            break;
        }
    }
    out
}

fn next_index(idx: &mut [usize], base: usize) -> bool {
    for slot in idx.iter_mut().rev() {
        *slot += 1;
        if *slot < base {
            return true;
        }
        *slot = 0;
    }
    false
}

/// Truncation bound `deriv_bound * h^{D(L+1)}`; the Lagrange constant
/// `1/gamma!` and the multinomial count are folded into `deriv_bound`.
pub fn taylor_error_bound(order: usize, h: f64, dims: usize, deriv_bound: f64) -> f64 {
    deriv_bound * h.powi((dims * (order + 1)) as i32)
}

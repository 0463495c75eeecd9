//! Variational imaginary-time evolution of scaled states `alpha |v(theta)>`
//! under `d/dt psi = G psi`.
//!
//! Parameters are packed as one vector with the scale at index 0 and the gate
//! angles at `1..=N`. McLachlan's principle gives `M x' = V` with
//!
//! - `M_00 = 1`, `M_0j = alpha Re<v|d_j v>`, `M_kj = alpha^2 Re<d_k v|d_j v>`
//! - `V_0 = alpha Re<v|G v>`, `V_k = alpha^2 Re<d_k v|G v>`.

use std::borrow::Cow;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::circuit::{hadamard_overlap, projector_overlap, Ansatz, Estimator, Part, StateVector};
use crate::error::{check_len, Error, Result};
use crate::generator::SparseGenerator;
use crate::optimize::{bfgs, BfgsOptions};
use crate::pauli::{decompose_real, PauliSum};
use crate::rng::{stage, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMethod {
    #[default]
    ForwardEuler,
    Rk4,
}

/// How `V` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VMode {
    /// Inner products with the sparse generator applied to the statevector.
    #[default]
    Statevector,
    /// Sum of Hadamard tests over the Pauli decomposition of the generator.
    PauliTerms(Estimator),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarQiteConfig {
    pub dt: f64,
    pub steps: usize,
    pub method: OdeMethod,
    /// Singular values below `cutoff * sigma_max` are dropped.
    pub cutoff: f64,
    pub enforce_l1: bool,
    pub l1_estimator: Estimator,
    pub v_mode: VMode,
    /// Random starts for the initial fit.
    pub init_starts: usize,
    pub seed: u64,
}

impl Default for VarQiteConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            steps: 100,
            method: OdeMethod::ForwardEuler,
            cutoff: 1e-8,
            enforce_l1: true,
            l1_estimator: Estimator::Exact,
            v_mode: VMode::Statevector,
            init_starts: 20,
            seed: 0,
        }
    }
}

impl VarQiteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "pseudo-inverse cutoff must lie in (0, 1), got {}",
                self.cutoff
            )));
        }
        if self.init_starts == 0 {
            return Err(Error::InvalidParameter("at least one initialization start is needed".into()));
        }
        self.l1_estimator.validate()?;
        if let VMode::PauliTerms(e) = self.v_mode {
            e.validate()?;
        }
        Ok(())
    }

    /// Total evolution time.
    pub fn horizon(&self) -> f64 {
        self.dt * self.steps as f64
    }
}

/// `|v>`, `d_k|v>` and the Y-marked states behind them.
#[derive(Debug, Clone)]
pub struct Tangent {
    pub v: StateVector,
    pub marked: Vec<StateVector>,
    pub derivatives: Vec<StateVector>,
}

pub fn tangent(ansatz: &Ansatz, theta: &[f64]) -> Result<Tangent> {
    let v = ansatz.prepare(theta)?;
    let marked = (0..ansatz.num_params())
        .map(|k| ansatz.marked(theta, k))
        .collect::<Result<Vec<_>>>()?;
    let factor = Complex64::new(0.0, -0.5);
    let derivatives = marked
        .iter()
        .map(|m| StateVector(m.0.iter().map(|a| a * factor).collect()))
        .collect();
    Ok(Tangent {
        v,
        marked,
        derivatives,
    })
}

fn m_from_tangent(t: &Tangent, alpha: f64) -> DMatrix<f64> {
    let n = t.derivatives.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m[(0, 0)] = 1.0;
    for j in 0..n {
        let x = alpha * t.v.inner(&t.derivatives[j].0).re;
        m[(0, j + 1)] = x;
        m[(j + 1, 0)] = x;
        for k in 0..=j {
            let y = alpha * alpha * t.derivatives[k].inner(&t.derivatives[j].0).re;
            m[(k + 1, j + 1)] = y;
            m[(j + 1, k + 1)] = y;
        }
    }
    m
}

fn v_from_tangent(t: &Tangent, alpha: f64, gv: &[Complex64]) -> DVector<f64> {
    let n = t.derivatives.len();
    let mut v = DVector::zeros(n + 1);
    v[0] = alpha * t.v.inner(gv).re;
    for k in 0..n {
        v[k + 1] = alpha * alpha * t.derivatives[k].inner(gv).re;
    }
    v
}

/// McLachlan matrix at `(theta, alpha)`.
pub fn assemble_m(ansatz: &Ansatz, theta: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    Ok(m_from_tangent(&tangent(ansatz, theta)?, alpha))
}

/// McLachlan vector from statevector inner products.
pub fn assemble_v(ansatz: &Ansatz, theta: &[f64], alpha: f64, gen: &SparseGenerator) -> Result<DVector<f64>> {
    check_len(1 << ansatz.qubits(), gen.dim(), "generator size vs ansatz")?;
    let t = tangent(ansatz, theta)?;
    let gv = gen.apply_complex(&t.v.0)?;
    Ok(v_from_tangent(&t, alpha, &gv))
}

/// McLachlan vector from Hadamard tests on every Pauli term; returns the
/// estimate and its per-entry standard error.
///
/// With `d_k v = -i/2 phi_k`, `<d_k v|P|v> = i/2 <phi_k|P|v>`.
pub fn assemble_v_terms(
    tangent: &Tangent,
    alpha: f64,
    pauli: &PauliSum,
    estimator: Estimator,
    seed: u64,
    stream: &[u64],
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len(tangent.v.qubits(), pauli.qubits(), "Pauli sum width vs ansatz")?;
    let n = tangent.marked.len();
    let mut value = DVector::zeros(n + 1);
    let mut var = DVector::zeros(n + 1);
    let v = &tangent.v.0;
    for (h, (lambda, p)) in pauli.terms().enumerate() {
        let pv = p.apply(v);
        let mut entry = |a: usize, bra: &[Complex64], scale: Complex64| -> Result<()> {
            // Re(c * z) = Re(c) Re(z) - Im(c) Im(z) with c = scale * lambda.
            let c = scale * lambda;
            for (part, weight) in [(Part::Real, c.re), (Part::Imag, -c.im)] {
                if weight.abs() < 1e-15 {
                    continue;
                }
                let mut path = stream.to_vec();
                path.extend([a as u64, h as u64, part as u64]);
                let mut rng = substream(seed, &path);
                let e = hadamard_overlap(bra, &pv, part, estimator, &mut rng)?;
                value[a] += weight * e.value;
                var[a] += weight * weight * e.std_error * e.std_error;
            }
            Ok(())
        };
        entry(0, v, Complex64::new(alpha, 0.0))?;
        for k in 0..n {
            entry(k + 1, &tangent.marked[k].0, Complex64::new(0.0, 0.5 * alpha * alpha))?;
        }
    }
    Ok((value, var.map(f64::sqrt)))
}

/// Diagnostics of one pseudo-inverse solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveInfo {
    /// `sigma_max / sigma_min` over all singular values.
    pub condition: f64,
    /// Singular values kept.
    pub rank: usize,
}

/// Solve `M x = V` by SVD, zeroing singular values below `cutoff * sigma_max`.
pub fn solve_mclachlan(m: &DMatrix<f64>, v: &DVector<f64>, cutoff: f64) -> Result<(DVector<f64>, SolveInfo)> {
    check_len(m.nrows(), v.len(), "McLachlan system size")?;
    if m.iter().chain(v.iter()).any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("McLachlan system"));
    }
    let svd = m.clone().svd(true, true);
    let s = &svd.singular_values;
    let s_max = s.max();
    let s_min = s.min();
    if !(s_max > 0.0) {
        return Err(Error::DegenerateSystem(s_max));
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut coeffs = u.transpose() * v;
    let mut rank = 0;
    for (i, c) in coeffs.iter_mut().enumerate() {
        if s[i] >= cutoff * s_max {
            *c /= s[i];
            rank += 1;
        } else {
            *c = 0.0;
        }
    }
    if rank == 0 {
        return Err(Error::DegenerateSystem(s_max));
    }
    Ok((
        vt.transpose() * coeffs,
        SolveInfo {
            condition: s_max / s_min,
            rank,
        },
    ))
}

/// One explicit step of `x' = f(t, x)` where `f` assembles and solves the
/// McLachlan system; RK4 re-assembles at every stage.
pub fn step<F>(x: &DVector<f64>, t: f64, dt: f64, method: OdeMethod, mut f: F) -> Result<(DVector<f64>, SolveInfo)>
where
    F: FnMut(usize, f64, &DVector<f64>) -> Result<(DVector<f64>, SolveInfo)>,
{
    match method {
        OdeMethod::ForwardEuler => {
            let (k1, info) = f(0, t, x)?;
            Ok((x + k1 * dt, info))
        }
        OdeMethod::Rk4 => {
            let (k1, info) = f(0, t, x)?;
            let (k2, _) = f(1, t + 0.5 * dt, &(x + &k1 * (0.5 * dt)))?;
            let (k3, _) = f(2, t + 0.5 * dt, &(x + &k2 * (0.5 * dt)))?;
            let (k4, _) = f(3, t + dt, &(x + &k3 * dt))?;
            Ok((x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0), info))
        }
    }
}

/// Result of rescaling to unit l1 mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Outcome {
    pub alpha: f64,
    /// Estimated `|sum_i alpha v_i|` before rescaling.
    pub mass: f64,
    pub std_error: f64,
}

/// Rescale `alpha` so that `sum_i alpha v_i` has magnitude one.
///
/// In shot mode the mass comes from the overlap with the uniform state,
/// `|sum_i v_i|^2 / 2^n`, read out through a Hadamard layer.
pub fn enforce_l1<R: rand::Rng + ?Sized>(
    state: &StateVector,
    alpha: f64,
    estimator: Estimator,
    rng: &mut R,
) -> Result<L1Outcome> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("scale must be positive, got {alpha}")));
    }
    let (sum_abs, se) = match estimator {
        Estimator::Exact => (state.0.iter().map(|a| a.re).sum::<f64>().abs(), 0.0),
        Estimator::Shots(_) => {
            let dim = state.len() as f64;
            let uniform = vec![1.0 / dim.sqrt(); state.len()];
            let q = projector_overlap(state, &uniform, estimator, rng)?;
            let root = (q.value.max(0.0) * dim).sqrt();
            let se = if root > 0.0 { dim * q.std_error / (2.0 * root) } else { 0.0 };
            (root, se)
        }
    };
    let mass = sum_abs * alpha;
    if mass == 0.0 {
        return Err(Error::ZeroMass);
    }
    let new_alpha = if (mass - 1.0).abs() < 1e-12 { alpha } else { alpha / mass };
    Ok(L1Outcome {
        alpha: new_alpha,
        mass,
        std_error: se * alpha,
    })
}

/// Fitted starting point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Initialization {
    pub theta: Vec<f64>,
    pub alpha: f64,
    /// `|| v(theta) - u0/|u0| ||_2`.
    pub residual: f64,
}

/// Residual above which the initial fit is reported as poor.
pub const INIT_WARN_RESIDUAL: f64 = 0.05;

/// Fit `alpha |v(theta)>` to `target` by multistart BFGS.
///
/// The origin is tried first, then `starts` points drawn uniformly from
/// `[-pi, pi]^N`; the best local minimum wins.
pub fn initialize(ansatz: &Ansatz, target: &[f64], starts: usize, seed: u64) -> Result<Initialization> {
    use rand::Rng;
    check_len(1 << ansatz.qubits(), target.len(), "initial condition length")?;
    let alpha = target.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(alpha > 0.0) {
        return Err(Error::ZeroTarget);
    }
    let unit: Vec<f64> = target.iter().map(|v| v / alpha).collect();
    let n = ansatz.num_params();

    let objective = |x: &[f64]| -> (f64, Vec<f64>) {
        let t = tangent(ansatz, x).expect("parameter count fixed");
        let diff: Vec<f64> = t.v.0.iter().zip(&unit).map(|(a, u)| a.re - u).collect();
        let f = diff.iter().map(|d| d * d).sum();
        let g = t
            .derivatives
            .iter()
            .map(|d| 2.0 * d.0.iter().zip(&diff).map(|(a, e)| a.re * e).sum::<f64>())
            .collect();
        (f, g)
    };

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last_err = None;
    let pi = std::f64::consts::PI;
    for start in 0..=starts {
        let x0 = if start == 0 {
            vec![0.0; n]
        } else {
            let mut rng = substream(seed, &[stage::INIT, start as u64]);
            (0..n).map(|_| rng.random_range(-pi..pi)).collect()
        };
        match bfgs(objective, x0, BfgsOptions::default()) {
            Ok(m) if best.as_ref().is_none_or(|(f, _)| m.f < f - 1e-15) => best = Some((m.f, m.x)),
            Ok(_) => {}
            Err(e) => {
                debug!("initialization start {start} failed: {e}");
                last_err = Some(e);
            }
        }
    }
    let Some((f, theta)) = best else {
        return Err(last_err.unwrap_or_else(|| Error::Optimizer("no start converged".into())));
    };
    Ok(Initialization {
        theta,
        alpha,
        residual: f.max(0.0).sqrt(),
    })
}

/// Supplies the generator at a given absolute time.
pub trait GeneratorSource {
    fn generator(&self, t: f64) -> Result<Cow<'_, SparseGenerator>>;
    fn is_time_dependent(&self) -> bool;
}

impl GeneratorSource for SparseGenerator {
    fn generator(&self, _t: f64) -> Result<Cow<'_, SparseGenerator>> {
        Ok(Cow::Borrowed(self))
    }

    fn is_time_dependent(&self) -> bool {
        false
    }
}

/// Generator rebuilt from a closure at every requested time.
pub struct TimeDependent<F>(pub F);

impl<F> GeneratorSource for TimeDependent<F>
where
    F: Fn(f64) -> Result<SparseGenerator>,
{
    fn generator(&self, t: f64) -> Result<Cow<'_, SparseGenerator>> {
        Ok(Cow::Owned((self.0)(t)?))
    }

    fn is_time_dependent(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub step: usize,
    pub time: f64,
    pub theta: Vec<f64>,
    pub alpha: f64,
    /// `alpha * v(theta)`.
    pub solution: Vec<f64>,
    /// `sum_i |p_i|`.
    pub l1: f64,
    /// `sum_i p_i`.
    pub mass: f64,
    pub l2: f64,
    /// Condition number of the McLachlan matrix that produced this record
    /// (absent for the initial record).
    pub condition: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarQiteTrajectory {
    pub records: Vec<TrajectoryRecord>,
    pub init_residual: f64,
    pub warnings: Vec<String>,
}

impl VarQiteTrajectory {
    pub fn last(&self) -> &TrajectoryRecord {
        self.records.last().expect("trajectory has its initial record")
    }
}

fn record(ansatz: &Ansatz, step: usize, time: f64, x: &DVector<f64>, condition: Option<f64>) -> Result<TrajectoryRecord> {
    let theta: Vec<f64> = x.iter().skip(1).copied().collect();
    let alpha = x[0];
    let v = ansatz.prepare(&theta)?;
    let solution: Vec<f64> = v.0.iter().map(|a| alpha * a.re).collect();
    Ok(TrajectoryRecord {
        step,
        time,
        theta,
        alpha,
        l1: solution.iter().map(|p| p.abs()).sum(),
        mass: solution.iter().sum(),
        l2: solution.iter().map(|p| p * p).sum::<f64>().sqrt(),
        solution,
        condition,
    })
}

/// Threshold on `max_j |Re<v|d_j v>|` beyond which the omitted phase terms
/// would matter.
const PHASE_FIX_TOLERANCE: f64 = 1e-8;

/// Fit the initial condition at `t0` and integrate for `config.steps` steps.
pub fn evolve<G: GeneratorSource + ?Sized>(
    source: &G,
    u0: &[f64],
    t0: f64,
    ansatz: &Ansatz,
    config: &VarQiteConfig,
) -> Result<VarQiteTrajectory> {
    let init = initialize(ansatz, u0, config.init_starts, config.seed)?;
    evolve_from(source, &init, t0, ansatz, config)
}

/// Integrate from an already fitted starting point.
pub fn evolve_from<G: GeneratorSource + ?Sized>(
    source: &G,
    init: &Initialization,
    t0: f64,
    ansatz: &Ansatz,
    config: &VarQiteConfig,
) -> Result<VarQiteTrajectory> {
    config.validate()?;
    let mut warnings = Vec::new();
    if init.residual >= INIT_WARN_RESIDUAL {
        let msg = format!(
            "initial fit residual {:.4} exceeds {INIT_WARN_RESIDUAL}",
            init.residual
        );
        warn!("{msg}");
        warnings.push(msg);
    }

    let n = ansatz.num_params();
    let mut x = DVector::from_iterator(n + 1, std::iter::once(init.alpha).chain(init.theta.iter().copied()));
    let mut records = vec![record(ansatz, 0, t0, &x, None)?];

    // Pauli decompositions are reused while the generator is fixed.
    let fixed_pauli = match (config.v_mode, source.is_time_dependent()) {
        (VMode::PauliTerms(_), false) => Some(decompose_real(&source.generator(t0)?.to_dense()?)?),
        _ => None,
    };
    let mut phase_warned = false;

    for s in 1..=config.steps {
        let t = t0 + (s - 1) as f64 * config.dt;
        let mut rhs = |stage_idx: usize, ts: f64, xs: &DVector<f64>| -> Result<(DVector<f64>, SolveInfo)> {
            let alpha = xs[0];
            let theta: Vec<f64> = xs.iter().skip(1).copied().collect();
            let tan = tangent(ansatz, &theta)?;
            let m = m_from_tangent(&tan, alpha);
            let phase = (1..=n).map(|j| m[(0, j)].abs()).fold(0.0, f64::max);
            if phase > PHASE_FIX_TOLERANCE * alpha.abs().max(1.0) && !phase_warned {
                phase_warned = true;
                warn!("Re<v|d_j v> = {phase:e}; global-phase terms are not negligible");
            }
            let gen = source.generator(ts)?;
            let v = match config.v_mode {
                VMode::Statevector => v_from_tangent(&tan, alpha, &gen.apply_complex(&tan.v.0)?),
                VMode::PauliTerms(estimator) => {
                    let owned;
                    let pauli = match &fixed_pauli {
                        Some(p) => p,
                        None => {
                            owned = decompose_real(&gen.to_dense()?)?;
                            &owned
                        }
                    };
                    let stream = [stage::VARQITE_V, s as u64, stage_idx as u64];
                    assemble_v_terms(&tan, alpha, pauli, estimator, config.seed, &stream)?.0
                }
            };
            solve_mclachlan(&m, &v, config.cutoff)
        };
        let (mut next, info) = step(&x, t, config.dt, config.method, &mut rhs)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("VarQITE parameters"));
        }
        debug!("step {s}: condition {:.3e}, rank {}", info.condition, info.rank);

        if config.enforce_l1 {
            let theta: Vec<f64> = next.iter().skip(1).copied().collect();
            let v = ansatz.prepare(&theta)?;
            let mut rng = substream(config.seed, &[stage::L1, s as u64]);
            match enforce_l1(&v, next[0], config.l1_estimator, &mut rng) {
                Ok(out) => next[0] = out.alpha,
                Err(Error::ZeroMass) => {
                    let msg = format!("step {s}: l1 enforcement skipped, state mass is zero");
                    warn!("{msg}");
                    warnings.push(msg);
                }
                Err(e) => return Err(e),
            }
        }
        x = next;
        records.push(record(ansatz, s, t0 + s as f64 * config.dt, &x, Some(info.condition))?);
    }
    if phase_warned {
        warnings.push("global-phase terms exceeded tolerance during evolution".into());
    }
    Ok(VarQiteTrajectory {
        records,
        init_residual: init.residual,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Entangler;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn ansatz(n: usize) -> Ansatz {
        Ansatz::new(n, Entangler::Circular).unwrap()
    }

    fn random_theta(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
    }

    #[test]
    fn m_structure() {
        let a = ansatz(4);
        let theta = random_theta(1, 8);
        let m1 = assemble_m(&a, &theta, 1.0).unwrap();
        let m2 = assemble_m(&a, &theta, 2.0).unwrap();
        assert_eq!(m1[(0, 0)], 1.0);
        assert_eq!(m2[(0, 0)], 1.0);
        for j in 1..9 {
            assert!(m1[(0, j)].abs() < 1e-12);
            for k in 1..9 {
                assert_abs_diff_eq!(m2[(k, j)], 4.0 * m1[(k, j)], epsilon = 1e-12);
                assert_eq!(m1[(k, j)], m1[(j, k)]);
            }
        }
        let block = m1.view((1, 1), (8, 8)).into_owned();
        let eig = block.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10);
    }

    #[test]
    fn v_for_scaled_identity() {
        let a = ansatz(3);
        let theta = random_theta(2, 6);
        let lambda = -0.7;
        let gen = SparseGenerator::scaled_identity(8, lambda).unwrap();
        let v = assemble_v(&a, &theta, 1.5, &gen).unwrap();
        assert_abs_diff_eq!(v[0], lambda * 1.5, epsilon = 1e-12);
        for k in 1..7 {
            assert!(v[k].abs() < 1e-12);
        }
        let zero = SparseGenerator::zeros(8).unwrap();
        assert_eq!(assemble_v(&a, &theta, 1.5, &zero).unwrap(), DVector::zeros(7));
        let wrong = SparseGenerator::zeros(16).unwrap();
        assert!(assemble_v(&a, &theta, 1.0, &wrong).is_err());
    }

    #[test]
    fn pauli_terms_match_statevector() {
        let a = ansatz(3);
        let theta = random_theta(3, 6);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let triplets: Vec<_> = (0..30)
            .map(|_| (rng.random_range(0..8), rng.random_range(0..8), rng.random_range(-1.0..1.0)))
            .collect();
        let gen = SparseGenerator::from_triplets(8, triplets).unwrap();
        let pauli = decompose_real(&gen.to_dense().unwrap()).unwrap();
        let exact = assemble_v(&a, &theta, 0.8, &gen).unwrap();
        let t = tangent(&a, &theta).unwrap();
        let (terms, se) = assemble_v_terms(&t, 0.8, &pauli, Estimator::Exact, 0, &[]).unwrap();
        assert!((exact - terms).amax() < 1e-10);
        assert_eq!(se.amax(), 0.0);
    }

    #[test]
    fn euler_step_with_identity() {
        let m = DMatrix::identity(3, 3);
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let x = DVector::zeros(3);
        let (next, _) = step(&x, 0.0, 0.1, OdeMethod::ForwardEuler, |_, _, _| {
            solve_mclachlan(&m, &v, 1e-8)
        })
        .unwrap();
        assert!((next - &v * 0.1).amax() < 1e-15);
    }

    #[test]
    fn pseudo_inverse_drops_null_directions() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1e-12, 1.0]));
        let v = DVector::from_vec(vec![2.0, 5.0, 3.0]);
        let (x, info) = solve_mclachlan(&m, &v, 1e-8).unwrap();
        assert_eq!(info.rank, 2);
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_eq!(x[1], 0.0);
        assert_abs_diff_eq!(x[2], 3.0, epsilon = 1e-14);
        let residual = &m * &x - &v;
        // The residual lives entirely in the dropped direction.
        assert!(residual[0].abs() < 1e-14 && residual[2].abs() < 1e-14);
        assert!(matches!(
            solve_mclachlan(&DMatrix::zeros(2, 2), &DVector::zeros(2), 1e-8),
            Err(Error::DegenerateSystem(_))
        ));
    }

    #[test]
    fn l1_enforcement() {
        let mut rng = substream(0, &[]);
        let dim = 16;
        let v = StateVector::from_real(&vec![0.25; dim]);
        // alpha * v_i = 1/16 when alpha = 0.25.
        let out = enforce_l1(&v, 0.25, Estimator::Exact, &mut rng).unwrap();
        assert_eq!(out.alpha, 0.25);
        let out = enforce_l1(&v, 0.25 * 0.9, Estimator::Exact, &mut rng).unwrap();
        assert_abs_diff_eq!(out.alpha, 0.25, epsilon = 1e-15);
        let mass: f64 = v.0.iter().map(|a| a.re * out.alpha).sum();
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-12);

        let cancel = StateVector::from_real(&[0.5, -0.5, 0.5, -0.5]);
        assert!(matches!(
            enforce_l1(&cancel, 1.0, Estimator::Exact, &mut rng),
            Err(Error::ZeroMass)
        ));
        let shots = enforce_l1(&v, 0.25 * 0.9, Estimator::Shots(1_000_000), &mut rng).unwrap();
        assert!((shots.mass - 0.9).abs() < 5.0 * shots.std_error.max(1e-4));
    }

    #[test]
    fn initialize_reachable_targets() {
        let a = ansatz(3);
        let mut e0 = vec![0.0; 8];
        e0[0] = 1.0;
        let init = initialize(&a, &e0, 4, 1).unwrap();
        assert_eq!(init.theta, vec![0.0; 6]);
        assert_eq!(init.residual, 0.0);
        e0[0] = 2.0;
        let init = initialize(&a, &e0, 4, 1).unwrap();
        assert_eq!(init.alpha, 2.0);

        let uniform = vec![1.0 / 8f64.sqrt(); 8];
        let init = initialize(&a, &uniform, 20, 1).unwrap();
        assert!(init.residual < 1e-6, "{}", init.residual);
        assert!(matches!(initialize(&a, &[0.0; 8], 3, 0), Err(Error::ZeroTarget)));
    }

    #[test]
    fn zero_generator_keeps_parameters() {
        let a = ansatz(3);
        let gen = SparseGenerator::zeros(8).unwrap();
        let u0: Vec<f64> = a.prepare(&random_theta(4, 6)).unwrap().real_parts();
        let config = VarQiteConfig {
            steps: 5,
            enforce_l1: false,
            init_starts: 2,
            ..Default::default()
        };
        let traj = evolve(&gen, &u0, 0.0, &a, &config).unwrap();
        assert_eq!(traj.records.len(), 6);
        for r in &traj.records {
            assert_eq!(r.theta, traj.records[0].theta);
            assert_eq!(r.alpha, traj.records[0].alpha);
        }
    }

    #[test]
    fn time_dependent_source_is_queried() {
        let a = ansatz(2);
        let calls = std::cell::Cell::new(0);
        let source = TimeDependent(|t: f64| {
            calls.set(calls.get() + 1);
            SparseGenerator::scaled_identity(4, -t)
        });
        let config = VarQiteConfig {
            dt: 0.1,
            steps: 3,
            enforce_l1: false,
            init_starts: 1,
            ..Default::default()
        };
        let traj = evolve(&source, &[1.0, 0.0, 0.0, 0.0], 1.0, &a, &config).unwrap();
        assert_eq!(calls.get(), 3);
        // Forward Euler on alpha' = -t alpha from t = 1.
        let expected = (1.0 - 0.1 * 1.0) * (1.0 - 0.1 * 1.1) * (1.0 - 0.1 * 1.2);
        assert_abs_diff_eq!(traj.last().alpha, expected, epsilon = 1e-12);
    }
}

//! SDE systems and the coefficient fields of their Feynman-Kac generators.
//!
//! A system `dX = mu(X,t) dt + Sigma(X,t) dW` with discount `r(X,t)` has
//! generator `1/2 sum_ij (Sigma Sigma^T)_ij d_i d_j + sum_i mu_i d_i - r`.
//! Coefficients are callables sampled on grid nodes; nothing here is symbolic.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

pub type VectorField = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync>;
pub type ScalarField = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type Scalar1D = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `dX = mu dt + Sigma dW` in `dims` dimensions driven by `brownians` Wiener
/// processes, discounted at rate `r`.
#[derive(Clone)]
pub struct SdeSystem {
    dims: usize,
    brownians: usize,
    drift: VectorField,
    diffusion: MatrixField,
    discount: ScalarField,
    constant: bool,
}

impl fmt::Debug for SdeSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSystem")
            .field("dims", &self.dims)
            .field("brownians", &self.brownians)
            .field("constant", &self.constant)
            .finish_non_exhaustive()
    }
}

impl SdeSystem {
    pub fn new(
        dims: usize,
        brownians: usize,
        drift: VectorField,
        diffusion: MatrixField,
        discount: ScalarField,
    ) -> Result<Self> {
        if dims == 0 || brownians == 0 {
            return Err(Error::InvalidParameter(
                "an SDE system needs at least one dimension and one Brownian motion".into(),
            ));
        }
        Ok(Self {
            dims,
            brownians,
            drift,
            diffusion,
            discount,
            constant: false,
        })
    }

    /// Constant drift, diffusion and discount.
    pub fn constant(drift: Vec<f64>, diffusion: DMatrix<f64>, discount: f64) -> Result<Self> {
        let dims = diffusion.nrows();
        crate::error::check_len(dims, drift.len(), "drift length vs diffusion rows")?;
        let brownians = diffusion.ncols();
        let mut sde = Self::new(
            dims,
            brownians,
            Arc::new(move |_, _| drift.clone()),
            Arc::new(move |_, _| diffusion.clone()),
            Arc::new(move |_, _| discount),
        )?;
        sde.constant = true;
        Ok(sde)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn brownians(&self) -> usize {
        self.brownians
    }

    /// Whether every coefficient is independent of position and time.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn drift_at(&self, x: &[f64], t: f64) -> Result<Vec<f64>> {
        let mu = (self.drift)(x, t);
        crate::error::check_len(self.dims, mu.len(), "drift output")?;
        Ok(mu)
    }

    pub fn diffusion_at(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let sigma = (self.diffusion)(x, t);
        crate::error::check_len(self.dims, sigma.nrows(), "diffusion rows")?;
        crate::error::check_len(self.brownians, sigma.ncols(), "diffusion columns")?;
        Ok(sigma)
    }

    pub fn discount_at(&self, x: &[f64], t: f64) -> f64 {
        (self.discount)(x, t)
    }

    /// `Sigma Sigma^T` at a point.
    pub fn covariance_at(&self, x: &[f64], t: f64) -> Result<DMatrix<f64>> {
        let sigma = self.diffusion_at(x, t)?;
        Ok(&sigma * sigma.transpose())
    }

    /// Shape and positive-semidefiniteness of `Sigma Sigma^T` at the given
    /// points; returns the smallest eigenvalue seen.
    pub fn check_covariance(&self, points: &[Vec<f64>], t: f64) -> Result<f64> {
        let mut min_eig = f64::INFINITY;
        for x in points {
            crate::error::check_len(self.dims, x.len(), "sample point")?;
            let cov = self.covariance_at(x, t)?;
            let eig = cov.symmetric_eigenvalues();
            let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
            if lo < -1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "Sigma Sigma^T has eigenvalue {lo} at {x:?}"
                )));
            }
            min_eig = min_eig.min(lo);
        }
        Ok(min_eig)
    }

    /// One-dimensional PDE coefficients `a = sigma^2/2`, `b = mu`, `c = r`.
    pub fn coefficients_1d(&self) -> Result<Coefficients1D> {
        if self.dims != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                actual: self.dims,
                context: "one-dimensional coefficients",
            });
        }
        let diffusion = self.diffusion.clone();
        let drift = self.drift.clone();
        let discount = self.discount.clone();
        Ok(Coefficients1D {
            a: Arc::new(move |x, t| {
                let s = diffusion(&[x], t);
                0.5 * s.row(0).dot(&s.row(0))
            }),
            b: Arc::new(move |x, t| drift(&[x], t)[0]),
            c: Arc::new(move |x, t| discount(&[x], t)),
        })
    }
}

/// Named systems with their coefficient specializations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Heat2dCorrelated,
    Heat1d,
    OrnsteinUhlenbeck1d,
    BlackScholes1d,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Heat2dCorrelated => "heat2d_correlated",
            Preset::Heat1d => "heat1d",
            Preset::OrnsteinUhlenbeck1d => "ornstein_uhlenbeck1d",
            Preset::BlackScholes1d => "black_scholes1d",
        }
    }

    pub fn dims(self) -> usize {
        match self {
            Preset::Heat2dCorrelated => 2,
            _ => 1,
        }
    }

    fn allowed(self) -> &'static [&'static str] {
        match self {
            Preset::Heat2dCorrelated => &["rho", "sigma1", "sigma2", "r"],
            Preset::Heat1d => &["sigma", "r"],
            Preset::OrnsteinUhlenbeck1d => &["theta", "sigma", "mean", "r"],
            Preset::BlackScholes1d => &["sigma", "r"],
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "heat2d_correlated" => Preset::Heat2dCorrelated,
            "heat1d" => Preset::Heat1d,
            "ornstein_uhlenbeck1d" => Preset::OrnsteinUhlenbeck1d,
            "black_scholes1d" => Preset::BlackScholes1d,
            other => return Err(Error::UnknownPreset(other.to_string())),
        })
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn param(
    preset: Preset,
    params: &BTreeMap<String, f64>,
    key: &str,
    default: Option<f64>,
) -> Result<f64> {
    match params.get(key).copied().or(default) {
        Some(v) if v.is_finite() => Ok(v),
        Some(v) => Err(Error::InvalidParameter(format!("{key} = {v} is not finite"))),
        None => Err(Error::MissingParameter {
            preset: preset.name().into(),
            param: key.into(),
        }),
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{key} must be positive, got {v}")))
    }
}

/// Build a named system from its parameters.
///
/// | preset | required | optional (default) |
/// |---|---|---|
/// | `heat2d_correlated` | `rho` | `sigma1` (1), `sigma2` (1), `r` (0) |
/// | `heat1d` | | `sigma` (1), `r` (0) |
/// | `ornstein_uhlenbeck1d` | `theta`, `sigma` | `mean` (0), `r` (0) |
/// | `black_scholes1d` | `sigma`, `r` | |
pub fn preset_system(preset: Preset, params: &BTreeMap<String, f64>) -> Result<SdeSystem> {
    if let Some(unknown) = params.keys().find(|k| !preset.allowed().contains(&k.as_str())) {
        return Err(Error::InvalidParameter(format!(
            "`{unknown}` is not a parameter of {preset}"
        )));
    }
    match preset {
        Preset::Heat2dCorrelated => {
            let rho = param(preset, params, "rho", None)?;
            if rho.abs() > 1.0 {
                return Err(Error::InvalidParameter(format!("|rho| must be <= 1, got {rho}")));
            }
            let s1 = positive("sigma1", param(preset, params, "sigma1", Some(1.0))?)?;
            let s2 = positive("sigma2", param(preset, params, "sigma2", Some(1.0))?)?;
            let r = param(preset, params, "r", Some(0.0))?;
            let sigma = DMatrix::from_row_slice(
                2,
                2,
                &[
                    s1.sqrt(),
                    0.0,
                    s2.sqrt() * rho,
                    s2.sqrt() * (1.0 - rho * rho).sqrt(),
                ],
            );
            SdeSystem::constant(vec![0.0, 0.0], sigma, r)
        }
        Preset::Heat1d => {
            let s = positive("sigma", param(preset, params, "sigma", Some(1.0))?)?;
            let r = param(preset, params, "r", Some(0.0))?;
            SdeSystem::constant(vec![0.0], DMatrix::from_element(1, 1, s), r)
        }
        Preset::OrnsteinUhlenbeck1d => {
            let theta = positive("theta", param(preset, params, "theta", None)?)?;
            let s = positive("sigma", param(preset, params, "sigma", None)?)?;
            let mean = param(preset, params, "mean", Some(0.0))?;
            let r = param(preset, params, "r", Some(0.0))?;
            SdeSystem::new(
                1,
                1,
                Arc::new(move |x, _| vec![theta * (mean - x[0])]),
                Arc::new(move |_, _| DMatrix::from_element(1, 1, s)),
                Arc::new(move |_, _| r),
            )
        }
        Preset::BlackScholes1d => {
            let s = positive("sigma", param(preset, params, "sigma", None)?)?;
            let r = param(preset, params, "r", None)?;
            SdeSystem::new(
                1,
                1,
                Arc::new(move |x, _| vec![r * x[0]]),
                Arc::new(move |x, _| DMatrix::from_element(1, 1, s * x[0])),
                Arc::new(move |_, _| r),
            )
        }
    }
}

/// Nodal samples of the generator's coefficients at a fixed time.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    grid: Grid,
    /// `1/2 Sigma Sigma^T`, row-major `D x D` per node.
    diffusion_tensor: Vec<f64>,
    drift: Vec<f64>,
    discount: Vec<f64>,
}

impl CoefficientField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `(1/2 Sigma Sigma^T)_{ij}` at node `k`.
    pub fn diffusion(&self, k: usize, i: usize, j: usize) -> f64 {
        let d = self.grid.dims();
        self.diffusion_tensor[k * d * d + i * d + j]
    }

    pub fn drift(&self, k: usize) -> &[f64] {
        let d = self.grid.dims();
        &self.drift[k * d..(k + 1) * d]
    }

    pub fn discount(&self, k: usize) -> f64 {
        self.discount[k]
    }

    /// Largest asymmetry of the diffusion tensor over all nodes.
    pub fn max_asymmetry(&self) -> f64 {
        let d = self.grid.dims();
        let mut worst: f64 = 0.0;
        for k in 0..self.grid.len() {
            for i in 0..d {
                for j in 0..i {
                    worst = worst.max((self.diffusion(k, i, j) - self.diffusion(k, j, i)).abs());
                }
            }
        }
        worst
    }
}

/// Sample `1/2 Sigma Sigma^T`, `mu` and `r` on every node at time `t`.
pub fn evaluate_coefficients(sde: &SdeSystem, grid: &Grid, t: f64) -> Result<CoefficientField> {
    crate::error::check_len(sde.dims(), grid.dims(), "grid dimension vs SDE dimension")?;
    let d = grid.dims();
    let n = grid.len();
    let mut diffusion_tensor = Vec::with_capacity(n * d * d);
    let mut drift = Vec::with_capacity(n * d);
    let mut discount = Vec::with_capacity(n);
    let mut x = vec![0.0; d];
    for k in 0..n {
        grid.coordinate_into(k, &mut x);
        let cov = sde.covariance_at(&x, t)?;
        for i in 0..d {
            for j in 0..d {
                diffusion_tensor.push(0.5 * cov[(i, j)]);
            }
        }
        drift.extend(sde.drift_at(&x, t)?);
        discount.push(sde.discount_at(&x, t));
    }
    Ok(CoefficientField {
        grid: grid.clone(),
        diffusion_tensor,
        drift,
        discount,
    })
}

/// Coefficients of `u_t + a u_xx + b u_x = c u`.
#[derive(Clone)]
pub struct Coefficients1D {
    pub a: Scalar1D,
    pub b: Scalar1D,
    pub c: Scalar1D,
}

impl fmt::Debug for Coefficients1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Coefficients1D { .. }")
    }
}

impl Coefficients1D {
    pub fn new(
        a: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        b: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        c: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            a: Arc::new(a),
            b: Arc::new(b),
            c: Arc::new(c),
        }
    }
}

/// Cumulative trapezoid of `b/(2a)` from the left grid edge, zero at the edge.
fn drift_integral(coeffs: &Coefficients1D, xs: &[f64], dx: f64, t: f64) -> Vec<f64> {
    let q: Vec<f64> = xs
        .iter()
        .map(|&x| (coeffs.b)(x, t) / (2.0 * (coeffs.a)(x, t)))
        .collect();
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(xs.len());
    out.push(0.0);
    for w in q.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        out.push(acc);
    }
    out
}

/// Potential left after removing the first-order term by `u = e^g v`:
///
/// `w = -d/dt int b/(2a) dx - b^2/(4a) - a/2 d/dx (b/a) - c`.
pub fn wick_potential(coeffs: &Coefficients1D, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    crate::error::check_len(1, grid.dims(), "wick potential grid dimension")?;
    let xs = grid.axis(0);
    let dx = grid.spacings()[0];
    for &x in &xs {
        let a = (coeffs.a)(x, t);
        if !(a > 0.0) {
            return Err(Error::NonPositiveDiffusion { x, value: a });
        }
    }
    let ht = 1e-6 * t.abs().max(1.0);
    let forward = drift_integral(coeffs, &xs, dx, t + ht);
    let backward = drift_integral(coeffs, &xs, dx, t - ht);
    let ratio = |x: f64| (coeffs.b)(x, t) / (coeffs.a)(x, t);

    let w = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let a = (coeffs.a)(x, t);
            let b = (coeffs.b)(x, t);
            let c = (coeffs.c)(x, t);
            let dt_integral = (forward[k] - backward[k]) / (2.0 * ht);
            let hx = 1e-5 * x.abs().max(1.0);
            let dx_ratio = (ratio(x + hx) - ratio(x - hx)) / (2.0 * hx);
            -dt_integral - b * b / (4.0 * a) - 0.5 * a * dx_ratio - c
        })
        .collect::<Vec<_>>();
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("wick potential"));
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn correlated_heat_covariance() {
        let sde = preset_system(Preset::Heat2dCorrelated, &params(&[("rho", 1.0 / 3.0)])).unwrap();
        let cov = sde.covariance_at(&[0.3, -2.0], 0.5).unwrap();
        assert_abs_diff_eq!(cov[(0, 0)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cov[(1, 1)], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cov[(0, 1)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(cov[(1, 0)], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn uncorrelated_heat_is_identity() {
        let sde = preset_system(Preset::Heat2dCorrelated, &params(&[("rho", 0.0)])).unwrap();
        let cov = sde.covariance_at(&[1.0, 1.0], 0.0).unwrap();
        assert_abs_diff_eq!((cov - DMatrix::identity(2, 2)).abs().max(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn black_scholes_coefficients() {
        let (sigma, r) = (0.3, 0.05);
        let sde = preset_system(Preset::BlackScholes1d, &params(&[("sigma", sigma), ("r", r)])).unwrap();
        let c = sde.coefficients_1d().unwrap();
        for x in [0.5, 1.0, 2.7] {
            assert_abs_diff_eq!((c.a)(x, 0.0), 0.5 * sigma * sigma * x * x, epsilon = 1e-14);
            assert_abs_diff_eq!((c.b)(x, 0.0), r * x, epsilon = 1e-14);
            assert_abs_diff_eq!((c.c)(x, 0.0), r, epsilon = 1e-14);
        }
    }

    #[test]
    fn preset_errors() {
        assert!(matches!("nope".parse::<Preset>(), Err(Error::UnknownPreset(_))));
        let bad_rho = preset_system(Preset::Heat2dCorrelated, &params(&[("rho", 1.5)]));
        assert!(matches!(bad_rho, Err(Error::InvalidParameter(_))));
        let bad_var = preset_system(
            Preset::Heat2dCorrelated,
            &params(&[("rho", 0.2), ("sigma1", -1.0)]),
        );
        assert!(matches!(bad_var, Err(Error::InvalidParameter(_))));
        let missing = preset_system(Preset::BlackScholes1d, &params(&[("sigma", 0.2)]));
        assert!(matches!(missing, Err(Error::MissingParameter { .. })));
        let typo = preset_system(Preset::Heat1d, &params(&[("sgima", 0.2)]));
        assert!(typo.is_err());
    }

    #[test]
    fn presets_have_psd_covariance() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let points2: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)])
            .collect();
        let points1: Vec<Vec<f64>> = points2.iter().map(|p| vec![p[0]]).collect();
        let cases = [
            (Preset::Heat2dCorrelated, params(&[("rho", -0.9), ("sigma1", 2.0)]), &points2),
            (Preset::Heat1d, params(&[]), &points1),
            (Preset::OrnsteinUhlenbeck1d, params(&[("theta", 1.0), ("sigma", 0.4)]), &points1),
            (Preset::BlackScholes1d, params(&[("sigma", 0.2), ("r", 0.01)]), &points1),
        ];
        for (preset, p, pts) in cases {
            let sde = preset_system(preset, &p).unwrap();
            let lo = sde.check_covariance(pts, 0.3).unwrap();
            assert!(lo >= -1e-10, "{preset}: {lo}");
        }
    }

    #[test]
    fn nodal_coefficients() {
        let sde = preset_system(Preset::Heat2dCorrelated, &params(&[("rho", 1.0 / 3.0)])).unwrap();
        let grid = Grid::uniform(2, 4, 1.0).unwrap();
        let field = evaluate_coefficients(&sde, &grid, 0.0).unwrap();
        for k in 0..grid.len() {
            assert_abs_diff_eq!(field.diffusion(k, 0, 0), 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(field.diffusion(k, 1, 1), 0.5, epsilon = 1e-14);
            assert_abs_diff_eq!(field.diffusion(k, 0, 1), 1.0 / 6.0, epsilon = 1e-14);
            assert_eq!(field.drift(k), &[0.0, 0.0]);
            assert_eq!(field.discount(k), 0.0);
        }
        assert!(field.max_asymmetry() <= 1e-12);
        let wrong = Grid::uniform(1, 4, 1.0).unwrap();
        assert!(evaluate_coefficients(&sde, &wrong, 0.0).is_err());
    }

    #[test]
    fn wick_potential_reduces_to_minus_potential() {
        let grid = Grid::new(1, 5, vec![0.25], vec![-4.0]).unwrap();
        let coeffs = Coefficients1D::new(|_, _| 0.5, |_, _| 0.0, |x, _| x * x + 1.0);
        let w = wick_potential(&coeffs, &grid, 0.7).unwrap();
        for (wk, x) in w.iter().zip(grid.axis(0)) {
            assert_abs_diff_eq!(*wk, -(x * x + 1.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn wick_potential_heat_is_zero() {
        let grid = Grid::uniform(1, 4, 0.5).unwrap();
        let coeffs = Coefficients1D::new(|_, _| 1.0, |_, _| 0.0, |_, _| 0.0);
        let w = wick_potential(&coeffs, &grid, 0.0).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn wick_potential_constant_drift() {
        let (dc, mu0) = (0.8, 1.3);
        let grid = Grid::new(1, 6, vec![0.1], vec![-3.0]).unwrap();
        let coeffs = Coefficients1D::new(move |_, _| dc, move |_, _| mu0, |_, _| 0.0);
        let w = wick_potential(&coeffs, &grid, 2.0).unwrap();
        let expected = -mu0 * mu0 / (4.0 * dc);
        for wk in &w {
            assert_abs_diff_eq!(*wk, expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn wick_potential_time_dependent_drift() {
        // b = t x, a = 1/2: int b/(2a) = t x^2 / 2 (anchored at 0 when the
        // grid starts at 0), so w = -x^2/2 - t^2 x^2 / 2 - t/2.
        let grid = Grid::new(1, 6, vec![1.0 / 32.0], vec![0.0]).unwrap();
        let coeffs = Coefficients1D::new(|_, _| 0.5, |x, t| t * x, |_, _| 0.0);
        let t = 0.6;
        let w = wick_potential(&coeffs, &grid, t).unwrap();
        for (wk, x) in w.iter().zip(grid.axis(0)) {
            let expected = -0.5 * x * x - 0.5 * t * t * x * x - 0.5 * t;
            assert_abs_diff_eq!(*wk, expected, epsilon = 1e-5);
        }
    }

    #[test]
    fn wick_potential_rejects_nonpositive_a() {
        let grid = Grid::new(1, 3, vec![1.0], vec![-4.0]).unwrap();
        let coeffs = Coefficients1D::new(|x, _| x, |_, _| 0.0, |_, _| 0.0);
        assert!(matches!(
            wick_potential(&coeffs, &grid, 0.0),
            Err(Error::NonPositiveDiffusion { .. })
        ));
    }
}

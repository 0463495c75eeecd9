use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::grid::Grid;
use crate::model::SdeSystem;
use crate::rng::{stage, substream};

/// Paths simulated per random substream.
const CHUNK: u64 = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSettings {
    pub paths: u64,
    pub seed: u64,
}

/// Nearest-node counts of path positions at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    grid: Grid,
    counts: Vec<u64>,
    paths: u64,
    seed: u64,
    time: f64,
}

impl Histogram {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn paths(&self) -> u64 {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Fraction of paths per node.
    pub fn masses(&self) -> Vec<f64> {
        let n = self.paths as f64;
        self.counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// Coefficients at a point, with a fast path for constant systems.
enum Coeffs<'a> {
    Constant { mu: Vec<f64>, sigma: Vec<f64> },
    Variable(&'a SdeSystem),
}

impl Coeffs<'_> {
    fn new<'s>(sde: &'s SdeSystem, x0: &[f64], t: f64) -> Result<Coeffs<'s>> {
        if sde.is_constant() {
            let mu = sde.drift_at(x0, t)?;
            let s = sde.diffusion_at(x0, t)?;
            let sigma = (0..s.nrows())
                .flat_map(|i| (0..s.ncols()).map(move |j| (i, j)))
                .map(|(i, j)| s[(i, j)])
                .collect();
            Ok(Coeffs::Constant { mu, sigma })
        } else {
            Ok(Coeffs::Variable(sde))
        }
    }
}

struct Wrap {
    lo: Vec<f64>,
    period: Vec<f64>,
}

/// Euler-Maruyama for `steps` steps from `x`, calling `visit(step, x)` after
/// each one.
#[allow(clippy::too_many_arguments)]
fn run_path<R: Rng>(
    coeffs: &Coeffs<'_>,
    sde: &SdeSystem,
    x: &mut [f64],
    t_start: f64,
    dt: f64,
    steps: usize,
    wrap: Option<&Wrap>,
    rng: &mut R,
    mut visit: impl FnMut(usize, &[f64]),
) -> Result<()> {
    let dims = sde.dims();
    let nb = sde.brownians();
    let sqrt_dt = dt.sqrt();
    let mut dw = vec![0.0; nb];
    for s in 1..=steps {
        for w in dw.iter_mut() {
            let z: f64 = rng.sample(StandardNormal);
            *w = z * sqrt_dt;
        }
        match coeffs {
            Coeffs::Constant { mu, sigma } => {
                for d in 0..dims {
                    let noise: f64 = (0..nb).map(|j| sigma[d * nb + j] * dw[j]).sum();
                    x[d] += mu[d] * dt + noise;
                }
            }
            Coeffs::Variable(sde) => {
                let t = t_start + (s - 1) as f64 * dt;
                let mu = sde.drift_at(x, t)?;
                let sigma = sde.diffusion_at(x, t)?;
                for d in 0..dims {
                    let noise: f64 = (0..nb).map(|j| sigma[(d, j)] * dw[j]).sum();
                    x[d] += mu[d] * dt + noise;
                }
            }
        }
        if let Some(w) = wrap {
            for d in 0..dims {
                x[d] = w.lo[d] + (x[d] - w.lo[d]).rem_euclid(w.period[d]);
            }
        }
        visit(s, x);
    }
    Ok(())
}

fn chunks(paths: u64) -> Vec<(u64, u64)> {
    (0..paths.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(paths - c * CHUNK)))
        .collect()
}

fn map_chunks<T: Send>(paths: u64, f: impl Fn(u64, u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let list = chunks(paths);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        list.into_par_iter().map(|(c, n)| f(c, n)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        list.into_iter().map(|(c, n)| f(c, n)).collect()
    }
}

fn validate(sde: &SdeSystem, x0: &[f64], dt: f64, paths: u64) -> Result<()> {
    check_len(sde.dims(), x0.len(), "Monte Carlo start point")?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("Monte Carlo time step must be positive, got {dt}")));
    }
    if paths == 0 {
        return Err(Error::InvalidParameter("Monte Carlo needs at least one path".into()));
    }
    Ok(())
}

/// Histograms after each step listed in `record_steps` (strictly increasing),
/// starting every path at `x0` at time `t_start`. Paths wrap periodically
/// onto the grid's cells.
#[allow(clippy::too_many_arguments)]
pub fn mc_snapshots(
    sde: &SdeSystem,
    x0: &[f64],
    t_start: f64,
    dt: f64,
    record_steps: &[usize],
    paths: u64,
    grid: &Grid,
    seed: u64,
) -> Result<Vec<Histogram>> {
    validate(sde, x0, dt, paths)?;
    check_len(sde.dims(), grid.dims(), "grid dimension vs SDE dimension")?;
    if record_steps.is_empty() || record_steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "record steps must be non-empty and strictly increasing".into(),
        ));
    }
    let steps = *record_steps.last().expect("non-empty");
    let coeffs = Coeffs::new(sde, x0, t_start)?;
    let wrap = Wrap {
        lo: (0..grid.dims())
            .map(|d| grid.origin()[d] - 0.5 * grid.spacings()[d])
            .collect(),
        period: (0..grid.dims()).map(|d| grid.period(d)).collect(),
    };
    let cells = grid.len();
    let mut slot_of_step = vec![usize::MAX; steps + 1];
    for (i, &s) in record_steps.iter().enumerate() {
        slot_of_step[s] = i;
    }
    let start_cell = grid.nearest_node(x0);

    let per_chunk = map_chunks(paths, |chunk, n| {
        let mut rng = substream(seed, &[stage::MONTE_CARLO, chunk]);
        let mut counts = vec![0u64; record_steps.len() * cells];
        let mut x = vec![0.0; x0.len()];
        for _ in 0..n {
            x.copy_from_slice(x0);
            if slot_of_step[0] != usize::MAX {
                counts[start_cell] += 1;
            }
            run_path(&coeffs, sde, &mut x, t_start, dt, steps, Some(&wrap), &mut rng, |s, pos| {
                let slot = slot_of_step[s];
                if slot != usize::MAX {
                    counts[slot * cells + grid.nearest_node(pos)] += 1;
                }
            })?;
        }
        Ok(counts)
    })?;

    let mut total = vec![0u64; record_steps.len() * cells];
    for counts in per_chunk {
        total.iter_mut().zip(counts).for_each(|(a, b)| *a += b);
    }
    Ok(record_steps
        .iter()
        .enumerate()
        .map(|(i, &s)| Histogram {
            grid: grid.clone(),
            counts: total[i * cells..(i + 1) * cells].to_vec(),
            paths,
            seed,
            time: t_start + s as f64 * dt,
        })
        .collect())
}

/// Histogram at time `t` after `steps` Euler-Maruyama steps from `x0` at 0.
pub fn mc_simulate(
    sde: &SdeSystem,
    x0: &[f64],
    t: f64,
    paths: u64,
    steps: usize,
    grid: &Grid,
    seed: u64,
) -> Result<Histogram> {
    if !(t > 0.0) || steps == 0 {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs positive horizon and step count, got t = {t}, steps = {steps}"
        )));
    }
    let mut h = mc_snapshots(sde, x0, 0.0, t / steps as f64, &[steps], paths, grid, seed)?;
    Ok(h.remove(0))
}

/// Unwrapped terminal positions of `paths` paths, path-major.
pub fn simulate_positions(
    sde: &SdeSystem,
    x0: &[f64],
    t: f64,
    paths: u64,
    steps: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if !(t > 0.0) || steps == 0 {
        return Err(Error::InvalidParameter("positive horizon and step count required".into()));
    }
    let dt = t / steps as f64;
    validate(sde, x0, dt, paths)?;
    let coeffs = Coeffs::new(sde, x0, 0.0)?;
    let per_chunk = map_chunks(paths, |chunk, n| {
        let mut rng = substream(seed, &[stage::MONTE_CARLO, chunk]);
        let mut out = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let mut x = x0.to_vec();
            run_path(&coeffs, sde, &mut x, 0.0, dt, steps, None, &mut rng, |_, _| {})?;
            out.push(x);
        }
        Ok(out)
    })?;
    Ok(per_chunk.into_iter().flatten().collect())
}

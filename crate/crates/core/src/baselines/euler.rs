use log::warn;

use crate::error::{check_len, Error, Result};
use crate::generator::SparseGenerator;
use crate::varqite::GeneratorSource;

/// `dt * max |G_ii|`; explicit Euler needs this at most 1.
pub fn stability_number(gen: &SparseGenerator, dt: f64) -> f64 {
    dt * gen.max_abs_diagonal()
}

fn check_stability(gen: &SparseGenerator, dt: f64) -> Result<()> {
    let s = stability_number(gen, dt);
    if s > 1.0 {
        return Err(Error::Unstable(s));
    }
    if s > 0.5 {
        warn!("forward Euler stability number {s:.3} exceeds 0.5");
    }
    Ok(())
}

/// `u <- u + dt G u`, returning all `steps + 1` states.
pub fn euler_evolve(gen: &SparseGenerator, u0: &[f64], dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
    euler_evolve_source(gen, u0, 0.0, dt, steps, false)
}

/// Forward Euler with the generator re-evaluated at the start of every step.
/// With `normalize`, each state is rescaled to unit mass `sum_i u_i = 1`.
pub fn euler_evolve_source<G: GeneratorSource + ?Sized>(
    source: &G,
    u0: &[f64],
    t0: f64,
    dt: f64,
    steps: usize,
    normalize: bool,
) -> Result<Vec<Vec<f64>>> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    let mut gen = source.generator(t0)?;
    check_len(gen.dim(), u0.len(), "initial condition length")?;
    check_stability(&gen, dt)?;

    let mut out = Vec::with_capacity(steps + 1);
    out.push(u0.to_vec());
    let mut u = u0.to_vec();
    let mut gu = vec![0.0; u.len()];
    for s in 0..steps {
        if s > 0 && source.is_time_dependent() {
            gen = source.generator(t0 + s as f64 * dt)?;
            check_stability(&gen, dt)?;
        }
        gen.apply_into(&u, &mut gu)?;
        u.iter_mut().zip(&gu).for_each(|(a, b)| *a += dt * b);
        if normalize {
            let mass: f64 = u.iter().sum();
            if mass == 0.0 {
                return Err(Error::ZeroMass);
            }
            u.iter_mut().for_each(|a| *a /= mass);
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("forward Euler state"));
        }
        out.push(u.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circulant() -> SparseGenerator {
        let mut t = Vec::new();
        for j in 0..4 {
            t.push((j, j, -1.0));
            t.push(((j + 1) % 4, j, 0.5));
            t.push(((j + 3) % 4, j, 0.5));
        }
        SparseGenerator::from_triplets(4, t).unwrap()
    }

    #[test]
    fn single_step_by_hand() {
        let traj = euler_evolve(&circulant(), &[1.0, 0.0, 0.0, 0.0], 0.01, 1).unwrap();
        let expected = [1.0 - 0.01, 0.005, 0.0, 0.005];
        for (a, b) in traj[1].iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_generator_is_constant() {
        let zero = SparseGenerator::zeros(4).unwrap();
        let traj = euler_evolve(&zero, &[0.1, 0.2, 0.3, 0.4], 0.1, 5).unwrap();
        assert!(traj.iter().all(|u| u == &traj[0]));
    }

    #[test]
    fn conserves_mass() {
        let traj = euler_evolve(&circulant(), &[0.7, 0.1, 0.2, 0.0], 0.1, 100).unwrap();
        for u in &traj {
            assert_abs_diff_eq!(u.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn stability_guard() {
        assert!(matches!(
            euler_evolve(&circulant(), &[1.0, 0.0, 0.0, 0.0], 1.5, 1),
            Err(Error::Unstable(_))
        ));
        assert!(euler_evolve(&circulant(), &[1.0, 0.0, 0.0, 0.0], 0.8, 1).is_ok());
    }
}

//! Browser bindings for the demo page in `www/`.
//!
//! Every surface is returned row-major as cell masses on a periodic
//! `side x side` grid with unit spacing, started from a point mass at the
//! middle of the box. The plain functions in [`surfaces`] carry the logic so
//! they can be tested natively; the `wasm_bindgen` wrappers only convert errors.

use wasm_bindgen::prelude::*;

pub mod surfaces {
    use std::collections::BTreeMap;

    use fkvarqite::baselines::{constant_kernel_masses, euler_evolve, mc_simulate, CellQuadrature};
    use fkvarqite::circuit::{Ansatz, Entangler};
    use fkvarqite::model::evaluate_coefficients;
    use fkvarqite::varqite::{evolve, evolve_from, Initialization, VarQiteConfig};
    use fkvarqite::{discretize, preset_system, Grid, Preset, SdeSystem, SparseGenerator};

    pub type Result<T> = std::result::Result<T, String>;

    /// Evolution starts from the closed-form solution at this time.
    pub const T0: f64 = 0.1;
    pub const DT: f64 = 0.01;

    fn system(rho: f64) -> Result<SdeSystem> {
        let params: BTreeMap<String, f64> = [("rho".to_string(), rho)].into();
        preset_system(Preset::Heat2dCorrelated, &params).map_err(|e| e.to_string())
    }

    fn grid(qubits_per_axis: usize) -> Result<(Grid, [f64; 2])> {
        if !(2..=5).contains(&qubits_per_axis) {
            return Err(format!("qubits per axis must be 2..=5, got {qubits_per_axis}"));
        }
        let g = Grid::uniform(2, 2 * qubits_per_axis, 1.0).map_err(|e| e.to_string())?;
        let c = (g.points_per_dim() as f64 - 1.0) / 2.0;
        Ok((g, [c, c]))
    }

    fn start(sde: &SdeSystem, g: &Grid, centre: &[f64; 2]) -> Result<Vec<f64>> {
        let mut u = constant_kernel_masses(sde, g, T0, centre, CellQuadrature::default()).map_err(|e| e.to_string())?;
        let total: f64 = u.iter().sum();
        u.iter_mut().for_each(|v| *v /= total);
        Ok(u)
    }

    fn generator(sde: &SdeSystem, g: &Grid) -> Result<SparseGenerator> {
        discretize(&evaluate_coefficients(sde, g, T0).map_err(|e| e.to_string())?, g).map_err(|e| e.to_string())
    }

    /// Closed-form solution at absolute time `t`.
    pub fn kernel(rho: f64, t: f64, qubits_per_axis: usize) -> Result<Vec<f64>> {
        let sde = system(rho)?;
        let (g, c) = grid(qubits_per_axis)?;
        constant_kernel_masses(&sde, &g, t, &c, CellQuadrature::default()).map_err(|e| e.to_string())
    }

    /// Forward Euler from `T0` for `steps` steps of `DT`.
    pub fn euler(rho: f64, steps: usize, qubits_per_axis: usize) -> Result<Vec<f64>> {
        let sde = system(rho)?;
        let (g, c) = grid(qubits_per_axis)?;
        let u0 = start(&sde, &g, &c)?;
        let traj = euler_evolve(&generator(&sde, &g)?, &u0, DT, steps).map_err(|e| e.to_string())?;
        Ok(traj.into_iter().last().unwrap_or(u0))
    }

    /// Monte Carlo histogram at absolute time `t`, one Euler-Maruyama step
    /// per `DT`.
    pub fn monte_carlo(rho: f64, t: f64, paths: u32, seed: u32, qubits_per_axis: usize) -> Result<Vec<f64>> {
        let sde = system(rho)?;
        let (g, c) = grid(qubits_per_axis)?;
        let steps = ((t / DT).round() as usize).max(1);
        let h = mc_simulate(&sde, &c, t, paths as u64, steps, &g, seed as u64).map_err(|e| e.to_string())?;
        Ok(h.masses())
    }

    /// VarQITE and forward Euler advanced side by side.
    pub struct Session {
        generator: SparseGenerator,
        ansatz: Ansatz,
        config: VarQiteConfig,
        init: Initialization,
        solution: Vec<f64>,
        euler: Vec<f64>,
        steps: usize,
        init_residual: f64,
    }

    impl Session {
        pub fn new(rho: f64, qubits_per_axis: usize, seed: u64) -> Result<Self> {
            let sde = system(rho)?;
            let (g, c) = grid(qubits_per_axis)?;
            let u0 = start(&sde, &g, &c)?;
            let generator = generator(&sde, &g)?;
            let ansatz = Ansatz::new(g.qubits(), Entangler::Circular).map_err(|e| e.to_string())?;
            let config = VarQiteConfig {
                steps: 0,
                init_starts: 8,
                seed,
                ..VarQiteConfig::default()
            };
            let traj = evolve(&generator, &u0, T0, &ansatz, &config).map_err(|e| e.to_string())?;
            let last = traj.last();
            Ok(Self {
                init: Initialization {
                    theta: last.theta.clone(),
                    alpha: last.alpha,
                    residual: traj.init_residual,
                },
                solution: last.solution.clone(),
                init_residual: traj.init_residual,
                generator,
                ansatz,
                config,
                euler: u0,
                steps: 0,
            })
        }

        pub fn advance(&mut self, steps: usize) -> Result<()> {
            if steps == 0 {
                return Ok(());
            }
            let config = VarQiteConfig {
                steps,
                ..self.config.clone()
            };
            let traj = evolve_from(&self.generator, &self.init, self.time(), &self.ansatz, &config)
                .map_err(|e| e.to_string())?;
            let last = traj.last();
            self.init.theta.clone_from(&last.theta);
            self.init.alpha = last.alpha;
            self.solution.clone_from(&last.solution);
            let e = euler_evolve(&self.generator, &self.euler, DT, steps).map_err(|e| e.to_string())?;
            self.euler = e.into_iter().last().expect("at least one state");
            self.steps += steps;
            Ok(())
        }

        pub fn time(&self) -> f64 {
            T0 + DT * self.steps as f64
        }

        pub fn steps(&self) -> usize {
            self.steps
        }

        pub fn init_residual(&self) -> f64 {
            self.init_residual
        }

        pub fn solution(&self) -> &[f64] {
            &self.solution
        }

        pub fn euler(&self) -> &[f64] {
            &self.euler
        }

        pub fn l2_gap(&self) -> f64 {
            self.solution
                .iter()
                .zip(&self.euler)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        }
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen(js_name = kernelSurface)]
pub fn kernel_surface(rho: f64, t: f64, qubits_per_axis: usize) -> Result<Vec<f64>, JsError> {
    surfaces::kernel(rho, t, qubits_per_axis).map_err(js)
}

#[wasm_bindgen(js_name = eulerSurface)]
pub fn euler_surface(rho: f64, steps: usize, qubits_per_axis: usize) -> Result<Vec<f64>, JsError> {
    surfaces::euler(rho, steps, qubits_per_axis).map_err(js)
}

#[wasm_bindgen(js_name = monteCarloSurface)]
pub fn monte_carlo_surface(rho: f64, t: f64, paths: u32, seed: u32, qubits_per_axis: usize) -> Result<Vec<f64>, JsError> {
    surfaces::monte_carlo(rho, t, paths, seed, qubits_per_axis).map_err(js)
}

#[wasm_bindgen]
pub struct VarQiteSession(surfaces::Session);

#[wasm_bindgen]
impl VarQiteSession {
    #[wasm_bindgen(constructor)]
    pub fn new(rho: f64, qubits_per_axis: usize, seed: u32) -> Result<VarQiteSession, JsError> {
        surfaces::Session::new(rho, qubits_per_axis, seed as u64).map(Self).map_err(js)
    }

    pub fn advance(&mut self, steps: usize) -> Result<(), JsError> {
        self.0.advance(steps).map_err(js)
    }

    pub fn time(&self) -> f64 {
        self.0.time()
    }

    pub fn steps(&self) -> usize {
        self.0.steps()
    }

    #[wasm_bindgen(js_name = initResidual)]
    pub fn init_residual(&self) -> f64 {
        self.0.init_residual()
    }

    pub fn solution(&self) -> Vec<f64> {
        self.0.solution().to_vec()
    }

    pub fn euler(&self) -> Vec<f64> {
        self.0.euler().to_vec()
    }

    #[wasm_bindgen(js_name = l2Gap)]
    pub fn l2_gap(&self) -> f64 {
        self.0.l2_gap()
    }
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circuit::{Entangler, Estimator};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{preset_system, Preset, SdeSystem};
use crate::varqite::{OdeMethod, VMode, VarQiteConfig};

/// Methods a run can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Varqite,
    Euler,
    MonteCarlo,
    Analytic,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Varqite, Method::Euler, Method::MonteCarlo, Method::Analytic];

    pub fn name(self) -> &'static str {
        match self {
            Method::Varqite => "varqite",
            Method::Euler => "euler",
            Method::MonteCarlo => "monte_carlo",
            Method::Analytic => "analytic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub preset: Preset,
    pub params: BTreeMap<String, f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Heat2dCorrelated,
            params: [("rho".to_string(), 1.0 / 3.0)].into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Total qubits, split evenly over the dimensions.
    pub qubits: usize,
    /// One spacing for every axis, or one per axis.
    pub spacings: Vec<f64>,
    /// Coordinate of node 0 on each axis; zeros when absent.
    pub origin: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            qubits: 6,
            spacings: vec![1.0],
            origin: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    /// Time at which the kernel start is sampled; the run clock begins here.
    pub t0: f64,
    /// Start point of the paths; the middle of the periodic box when absent.
    pub centre: Option<Vec<f64>>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { t0: 0.1, centre: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub steps: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { dt: 0.01, steps: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnsatzConfig {
    pub entangler: Entangler,
}

/// The VarQITE fields not already fixed by the evolution section and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarQiteSection {
    pub method: OdeMethod,
    pub cutoff: f64,
    pub enforce_l1: bool,
    pub l1_estimator: Estimator,
    pub v_mode: VMode,
    pub init_starts: usize,
}

impl Default for VarQiteSection {
    fn default() -> Self {
        let d = VarQiteConfig::default();
        Self {
            method: d.method,
            cutoff: d.cutoff,
            enforce_l1: d.enforce_l1,
            l1_estimator: d.l1_estimator,
            v_mode: d.v_mode,
            init_starts: d.init_starts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub paths: u64,
    /// Euler-Maruyama steps per evolution step.
    pub substeps: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            paths: 1_000_000,
            substeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Absolute times of surface snapshots; `t0 + {0, 0.2, ..., 1.0}` when absent.
    pub snapshot_times: Option<Vec<f64>>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            snapshot_times: None,
        }
    }
}

/// Function on the grid whose expectation is read out at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableKind {
    /// `f = 1`.
    Mass,
    /// `f = x_axis`.
    Moment,
    /// Indicator of node indices `0..=upper` along `axis`.
    Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub kind: ObservableKind,
    #[serde(default)]
    pub axis: usize,
    /// Last node index of an interval observable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<usize>,
    #[serde(default)]
    pub estimator: Estimator,
}

impl ObservableConfig {
    pub fn new(name: &str, kind: ObservableKind, axis: usize) -> Self {
        Self {
            name: name.into(),
            kind,
            axis,
            upper: None,
            estimator: Estimator::Exact,
        }
    }
}

/// Acceptance thresholds evaluated in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub init_residual: f64,
    pub l2_varqite_euler: f64,
    pub max_abs_surface: f64,
    pub l1_deviation: f64,
    pub euler_l1_range: [f64; 2],
    pub readout_identity: f64,
    /// Shot-mode readouts must agree within this many standard errors.
    pub readout_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            init_residual: 0.05,
            l2_varqite_euler: 0.05,
            max_abs_surface: 0.02,
            l1_deviation: 0.05,
            euler_l1_range: [0.99, 1.05],
            readout_identity: 1e-10,
            readout_sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub methods: Vec<Method>,
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub initial: InitialConfig,
    pub evolution: EvolutionConfig,
    pub ansatz: AnsatzConfig,
    pub varqite: VarQiteSection,
    pub monte_carlo: MonteCarloConfig,
    pub output: OutputConfig,
    pub observables: Vec<ObservableConfig>,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 20240601,
            methods: Method::ALL.to_vec(),
            model: ModelConfig::default(),
            grid: GridConfig::default(),
            initial: InitialConfig::default(),
            evolution: EvolutionConfig::default(),
            ansatz: AnsatzConfig::default(),
            varqite: VarQiteSection::default(),
            monte_carlo: MonteCarloConfig::default(),
            output: OutputConfig::default(),
            observables: vec![
                ObservableConfig::new("mass", ObservableKind::Mass, 0),
                ObservableConfig::new("mean_x1", ObservableKind::Moment, 0),
                ObservableConfig::new("mean_x2", ObservableKind::Moment, 1),
            ],
            tolerances: Tolerances::default(),
        }
    }
}

/// Everything derived from a validated configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub sde: SdeSystem,
    pub grid: Grid,
    pub centre: Vec<f64>,
    pub snapshot_steps: Vec<usize>,
    pub mc_offset: usize,
}

impl RunConfig {
    /// Parse TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn has(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    pub fn varqite_config(&self) -> VarQiteConfig {
        VarQiteConfig {
            dt: self.evolution.dt,
            steps: self.evolution.steps,
            method: self.varqite.method,
            cutoff: self.varqite.cutoff,
            enforce_l1: self.varqite.enforce_l1,
            l1_estimator: self.varqite.l1_estimator,
            v_mode: self.varqite.v_mode,
            init_starts: self.varqite.init_starts,
            seed: self.seed,
        }
    }

    /// Absolute time of `step`, rounded to 12 decimals so artifacts do not
    /// carry accumulation noise like `0.30000000000000004`.
    pub fn time_of(&self, step: usize) -> f64 {
        let t = self.initial.t0 + step as f64 * self.evolution.dt;
        (t * 1e12).round() / 1e12
    }

    /// Check every section before any numerical work.
    pub fn validate(&self) -> Result<Resolved> {
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        let sde = preset_system(self.model.preset, &self.model.params)?;
        let dims = sde.dims();
        if self.grid.qubits == 0 || !self.grid.qubits.is_multiple_of(dims) {
            return Err(Error::Config(format!(
                "{} qubits cannot be split evenly over {dims} dimensions",
                self.grid.qubits
            )));
        }
        let spacings = match self.grid.spacings.len() {
            1 => vec![self.grid.spacings[0]; dims],
            n if n == dims => self.grid.spacings.clone(),
            n => {
                return Err(Error::Config(format!("expected 1 or {dims} grid spacings, got {n}")));
            }
        };
        let origin = self.grid.origin.clone().unwrap_or_else(|| vec![0.0; dims]);
        let grid = Grid::new(dims, self.grid.qubits, spacings, origin)?;

        let t0 = self.initial.t0;
        if !(t0 > 0.0 && t0.is_finite()) {
            return Err(Error::Config(format!("t0 must be positive, got {t0}")));
        }
        let centre = match &self.initial.centre {
            Some(c) if c.len() == dims => c.clone(),
            Some(c) => {
                return Err(Error::Config(format!("centre has {} entries for {dims} dimensions", c.len())));
            }
            None => (0..dims)
                .map(|d| grid.origin()[d] - 0.5 * grid.spacings()[d] + 0.5 * grid.period(d))
                .collect(),
        };

        let vq = self.varqite_config();
        vq.validate()?;
        if self.evolution.steps == 0 {
            return Err(Error::Config("at least one evolution step is required".into()));
        }

        let dt = self.evolution.dt;
        let last = self.evolution.steps;
        let times = self.output.snapshot_times.clone().unwrap_or_else(|| {
            (0..=5)
                .map(|k| t0 + 0.2 * k as f64)
                .filter(|t| *t <= self.time_of(last) + 1e-9)
                .collect()
        });
        let mut snapshot_steps = Vec::with_capacity(times.len());
        for t in times {
            let s = (t - t0) / dt;
            let k = s.round();
            if (s - k).abs() > 1e-6 || k < 0.0 || k as usize > last {
                return Err(Error::Config(format!(
                    "snapshot time {t} is not a step time in [{t0}, {}]",
                    self.time_of(last)
                )));
            }
            snapshot_steps.push(k as usize);
        }
        snapshot_steps.sort_unstable();
        snapshot_steps.dedup();

        let mut mc_offset = 0;
        if self.has(Method::MonteCarlo) {
            let mc = &self.monte_carlo;
            if mc.paths == 0 || mc.substeps == 0 {
                return Err(Error::Config("Monte Carlo needs positive paths and substeps".into()));
            }
            let h = dt / mc.substeps as f64;
            let k = (t0 / h).round();
            if (t0 / h - k).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "t0 = {t0} is not a whole number of Monte Carlo steps of {h}"
                )));
            }
            mc_offset = k as usize;
            let discounted = grid.nodes().any(|x| sde.discount_at(&x, t0) != 0.0);
            if discounted {
                return Err(Error::Config(
                    "Monte Carlo histograms carry no discount weighting; drop `monte_carlo` or set r = 0".into(),
                ));
            }
        }
        if self.has(Method::Analytic) && !sde.is_constant() {
            return Err(Error::Config(format!(
                "no closed-form solution for preset `{}`",
                self.model.preset.name()
            )));
        }
        if self.has(Method::Analytic) && dims > 2 {
            return Err(Error::DimensionCost(dims));
        }

        let m = grid.points_per_dim();
        let mut names = std::collections::BTreeSet::new();
        for o in &self.observables {
            if !names.insert(o.name.as_str()) {
                return Err(Error::Config(format!("duplicate observable name `{}`", o.name)));
            }
            o.estimator.validate()?;
            if o.axis >= dims {
                return Err(Error::Config(format!("observable `{}`: axis {} out of range", o.name, o.axis)));
            }
            match (o.kind, o.upper) {
                (ObservableKind::Interval, None) => {
                    return Err(Error::Config(format!("observable `{}`: interval needs `upper`", o.name)));
                }
                (ObservableKind::Interval, Some(u)) if u >= m => {
                    return Err(Error::Config(format!(
                        "observable `{}`: upper index {u} exceeds {}",
                        o.name,
                        m - 1
                    )));
                }
                (ObservableKind::Interval, Some(_)) | (_, None) => {}
                (_, Some(_)) => {
                    return Err(Error::Config(format!("observable `{}`: `upper` only applies to intervals", o.name)));
                }
            }
        }
        let t = &self.tolerances;
        let positive = [
            t.init_residual,
            t.l2_varqite_euler,
            t.max_abs_surface,
            t.l1_deviation,
            t.readout_identity,
            t.readout_sigmas,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(t.euler_l1_range[0] < t.euler_l1_range[1]) {
            return Err(Error::Config("tolerances must be positive and ranges ordered".into()));
        }

        Ok(Resolved {
            sde,
            grid,
            centre,
            snapshot_steps,
            mc_offset,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_default_experiment() {
        let c = RunConfig::from_toml("").unwrap();
        assert_eq!(c, RunConfig::default());
        let r = c.validate().unwrap();
        assert_eq!(r.grid.points_per_dim(), 8);
        assert_eq!(r.centre, vec![3.5, 3.5]);
        assert_eq!(r.snapshot_steps, vec![0, 20, 40, 60, 80, 100]);
        assert_eq!(r.mc_offset, 10);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(RunConfig::from_toml("[grid]\nqbits = 6").is_err());
        assert!(RunConfig::from_toml("colour = 1").is_err());
        assert!(RunConfig::from_json(r#"{"evolution": {"dt": 0.1, "stpes": 3}}"#).is_err());
    }

    #[test]
    fn observables_parse() {
        let c = RunConfig::from_toml(
            r#"
            [[observables]]
            name = "left"
            kind = "interval"
            axis = 1
            upper = 3
            estimator = { shots = 1000 }
            "#,
        )
        .unwrap();
        assert_eq!(c.observables[0].kind, ObservableKind::Interval);
        assert_eq!((c.observables[0].axis, c.observables[0].upper), (1, Some(3)));
        assert_eq!(c.observables[0].estimator, Estimator::Shots(1000));
        c.validate().unwrap();
    }

    #[test]
    fn validation_failures() {
        let bad = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate().unwrap_err()
        };
        assert!(bad(&|c| c.grid.qubits = 5).is_validation());
        bad(&|c| c.initial.t0 = 0.0);
        bad(&|c| c.output.snapshot_times = Some(vec![0.155]));
        bad(&|c| c.output.snapshot_times = Some(vec![5.0]));
        bad(&|c| c.model.params.clear());
        bad(&|c| c.monte_carlo.paths = 0);
        bad(&|c| c.initial.t0 = 0.105);
        bad(&|c| {
            c.observables.push(ObservableConfig::new("far", ObservableKind::Moment, 2))
        });
        bad(&|c| {
            c.observables.push(c.observables[0].clone());
        });
        bad(&|c| c.varqite.l1_estimator = Estimator::Shots(0));
        bad(&|c| {
            c.model.params.insert("r".into(), 0.1);
        });
        bad(&|c| c.methods.clear());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("quantum".parse::<Method>().is_err());
    }
}

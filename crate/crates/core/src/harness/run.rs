use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::{Method, ObservableConfig, ObservableKind, Resolved, RunConfig};
use crate::baselines::{constant_kernel_masses, euler_evolve, mc_snapshots, stability_number, CellQuadrature};
use crate::circuit::{Ansatz, Estimator};
use crate::error::{Error, Result};
use crate::generator::{discretize, SparseGenerator};
use crate::grid::Grid;
use crate::model::{evaluate_coefficients, SdeSystem};
use crate::readout::{direct_expectation, expectation_via_sf, interval_operator, moment_spec, ObservableSpec, Readout, ScaledState};
use crate::rng::{stage, substream};
use crate::varqite::{evolve, VarQiteTrajectory};

/// Version of the `summary.json` layout.
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Solutions keyed by step index.
pub type Series = BTreeMap<usize, Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    /// Pass when `value < bound`.
    Below(f64),
    /// Pass when `lo <= value <= hi`.
    Within([f64; 2]),
}

impl Tolerance {
    pub fn check(self, value: f64) -> bool {
        match self {
            Tolerance::Below(b) => value < b,
            Tolerance::Within([lo, hi]) => lo <= value && value <= hi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    pub value: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Metric {
    fn new(name: impl Into<String>, time: Option<f64>, value: f64, tolerance: Tolerance) -> Self {
        Self {
            name: name.into(),
            time,
            value,
            tolerance,
            pass: tolerance.check(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub preset: String,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub steps: usize,
    pub final_time: f64,
    pub metrics: Vec<Metric>,
    pub warnings: Vec<String>,
    pub all_pass: bool,
}

impl Summary {
    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableResult {
    pub name: String,
    pub kind: ObservableKind,
    pub axis: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<usize>,
    pub estimator: Estimator,
    /// `sum_i p_i f_i` on each method's final solution.
    pub direct: BTreeMap<String, f64>,
    /// VarQITE readout through `S_f`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub via_sf: Option<Readout>,
}

/// In-memory result of a run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub config: RunConfig,
    pub grid: Grid,
    pub generator: SparseGenerator,
    pub initial: Vec<f64>,
    pub snapshot_steps: Vec<usize>,
    pub solutions: BTreeMap<Method, Series>,
    pub varqite: Option<VarQiteTrajectory>,
    pub observables: Vec<ObservableResult>,
    pub summary: Summary,
}

impl RunData {
    pub fn time_of(&self, step: usize) -> f64 {
        self.config.time_of(step)
    }

    pub fn series(&self, m: Method) -> Option<&Series> {
        self.solutions.get(&m)
    }
}

pub fn l1(u: &[f64]) -> f64 {
    u.iter().map(|v| v.abs()).sum()
}

pub fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Analytic start at `t0`, scaled to unit mass; coefficients are frozen at
/// `centre` when they vary in space.
pub fn initial_condition(sde: &SdeSystem, grid: &Grid, t0: f64, centre: &[f64]) -> Result<(Vec<f64>, f64)> {
    let frozen;
    let system = if sde.is_constant() {
        sde
    } else {
        frozen = SdeSystem::constant(
            sde.drift_at(centre, 0.0)?,
            sde.diffusion_at(centre, 0.0)?,
            sde.discount_at(centre, 0.0),
        )?;
        &frozen
    };
    let mut u = constant_kernel_masses(system, grid, t0, centre, CellQuadrature::default())?;
    let mass: f64 = u.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    u.iter_mut().for_each(|v| *v /= mass);
    Ok((u, mass))
}

fn observable_values(grid: &Grid, o: &ObservableConfig) -> Result<ObservableSpec> {
    let m = grid.points_per_dim();
    match o.kind {
        ObservableKind::Mass => ObservableSpec::new(&vec![1.0; grid.len()], o.estimator),
        ObservableKind::Moment => moment_spec(grid, o.axis, o.estimator),
        ObservableKind::Interval => {
            let upper = o.upper.ok_or_else(|| Error::Config(format!("observable `{}` needs `upper`", o.name)))?;
            let chi = interval_operator(upper, grid.qubits_per_dim())?.apply_to_zero();
            let mut f = vec![0.0; grid.len()];
            for (k, slot) in f.iter_mut().enumerate() {
                let idx = grid.multi_index(k);
                *slot = chi[idx[o.axis]];
            }
            debug_assert_eq!(chi.len(), m);
            ObservableSpec::new(&f, o.estimator)
        }
    }
}

/// Execute every selected method without touching the filesystem.
pub fn execute(config: &RunConfig) -> Result<RunData> {
    let Resolved {
        sde,
        grid,
        centre,
        snapshot_steps,
        mc_offset,
    } = config.validate()?;
    let t0 = config.initial.t0;
    let dt = config.evolution.dt;
    let steps = config.evolution.steps;
    let tol = &config.tolerances;

    let generator = discretize(&evaluate_coefficients(&sde, &grid, t0)?, &grid)?;
    if config.has(Method::Euler) {
        let s = stability_number(&generator, dt);
        if s > 1.0 {
            return Err(Error::Config(format!(
                "forward Euler is unstable for dt = {dt}: dt * max|G_ii| = {s}"
            )));
        }
    }
    let (initial, initial_mass) = initial_condition(&sde, &grid, t0, &centre)?;

    let mut solutions: BTreeMap<Method, Series> = BTreeMap::new();
    let mut warnings = Vec::new();
    let mut metrics = Vec::new();
    let mut varqite = None;

    if config.has(Method::Varqite) {
        info!("running VarQITE");
        let ansatz = Ansatz::new(grid.qubits(), config.ansatz.entangler)?;
        let traj = evolve(&generator, &initial, t0, &ansatz, &config.varqite_config())?;
        metrics.push(Metric::new(
            "varqite.init_residual",
            Some(t0),
            traj.init_residual,
            Tolerance::Below(tol.init_residual),
        ));
        warnings.extend(traj.warnings.iter().cloned());
        solutions.insert(
            Method::Varqite,
            traj.records.iter().map(|r| (r.step, r.solution.clone())).collect(),
        );
        varqite = Some(traj);
    }
    if config.has(Method::Euler) {
        info!("running forward Euler");
        let states = euler_evolve(&generator, &initial, dt, steps)?;
        solutions.insert(Method::Euler, states.into_iter().enumerate().collect());
    }
    if config.has(Method::MonteCarlo) {
        info!("running Monte Carlo with {} paths", config.monte_carlo.paths);
        let sub = config.monte_carlo.substeps;
        let record: Vec<usize> = (0..=steps).map(|s| mc_offset + s * sub).collect();
        let hist = mc_snapshots(
            &sde,
            &centre,
            0.0,
            dt / sub as f64,
            &record,
            config.monte_carlo.paths,
            &grid,
            config.seed,
        )?;
        solutions.insert(
            Method::MonteCarlo,
            hist.iter().enumerate().map(|(s, h)| (s, h.masses())).collect(),
        );
    }
    if config.has(Method::Analytic) {
        let mut wanted = snapshot_steps.clone();
        wanted.push(steps);
        wanted.sort_unstable();
        wanted.dedup();
        let mut series = Series::new();
        for s in wanted {
            let mut u = constant_kernel_masses(&sde, &grid, config.time_of(s), &centre, CellQuadrature::default())?;
            u.iter_mut().for_each(|v| *v /= initial_mass);
            series.insert(s, u);
        }
        solutions.insert(Method::Analytic, series);
    }

    // l1 preservation.
    for (&m, series) in &solutions {
        if m == Method::Analytic {
            continue;
        }
        let dev = series.values().map(|u| (l1(u) - 1.0).abs()).fold(0.0, f64::max);
        metrics.push(Metric::new(
            format!("l1_deviation.{}", m.name()),
            None,
            dev,
            Tolerance::Below(tol.l1_deviation),
        ));
        if m == Method::Euler {
            let norms: Vec<f64> = series.values().map(|u| l1(u)).collect();
            let lo = norms.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = norms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            metrics.push(Metric::new("l1_euler.min", None, lo, Tolerance::Within(tol.euler_l1_range)));
            metrics.push(Metric::new("l1_euler.max", None, hi, Tolerance::Within(tol.euler_l1_range)));
        }
    }

    if let (Some(v), Some(e)) = (solutions.get(&Method::Varqite), solutions.get(&Method::Euler)) {
        let (worst_step, worst) = v
            .iter()
            .map(|(s, u)| (*s, l2_diff(u, &e[s])))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        metrics.push(Metric::new(
            "l2_varqite_euler.max",
            Some(config.time_of(worst_step)),
            worst,
            Tolerance::Below(tol.l2_varqite_euler),
        ));
    }

    let pairs = [
        (Method::Varqite, Method::MonteCarlo),
        (Method::Varqite, Method::Euler),
        (Method::Varqite, Method::Analytic),
        (Method::Euler, Method::Analytic),
        (Method::MonteCarlo, Method::Analytic),
    ];
    for &s in &snapshot_steps {
        for (a, b) in pairs {
            if let (Some(x), Some(y)) = (solutions.get(&a).and_then(|m| m.get(&s)), solutions.get(&b).and_then(|m| m.get(&s))) {
                metrics.push(Metric::new(
                    format!("max_abs.{}_{}", a.name(), b.name()),
                    Some(config.time_of(s)),
                    max_abs_diff(x, y),
                    Tolerance::Below(tol.max_abs_surface),
                ));
            }
        }
    }

    let mut observables = Vec::with_capacity(config.observables.len());
    for (k, o) in config.observables.iter().enumerate() {
        let spec = observable_values(&grid, o)?;
        let f: Vec<f64> = spec.values.iter().map(|v| v * spec.norm).collect();
        let mut direct = BTreeMap::new();
        for (&m, series) in &solutions {
            if let Some(u) = series.get(&steps) {
                direct.insert(m.name().to_string(), direct_expectation(u, &f)?);
            }
        }
        let via_sf = match &varqite {
            Some(traj) => {
                let last = traj.last();
                let ansatz = Ansatz::new(grid.qubits(), config.ansatz.entangler)?;
                let state = ScaledState::new(last.alpha, ansatz.prepare(&last.theta)?);
                let mut rng = substream(config.seed, &[stage::READOUT, k as u64]);
                let r = expectation_via_sf(&state, &spec, &mut rng)?;
                let reference = direct[Method::Varqite.name()];
                let bound = match o.estimator {
                    Estimator::Exact => tol.readout_identity,
                    Estimator::Shots(_) => (tol.readout_sigmas * r.std_error).max(tol.readout_identity),
                };
                metrics.push(Metric::new(
                    format!("readout.{}", o.name),
                    Some(config.time_of(steps)),
                    (r.value - reference.abs()).abs(),
                    Tolerance::Below(bound),
                ));
                if r.negative {
                    warnings.push(format!("observable `{}`: direct sum is negative, S_f readout gives its magnitude", o.name));
                }
                Some(r)
            }
            None => None,
        };
        observables.push(ObservableResult {
            name: o.name.clone(),
            kind: o.kind,
            axis: o.axis,
            upper: o.upper,
            estimator: o.estimator,
            direct,
            via_sf,
        });
    }

    let all_pass = metrics.iter().all(|m| m.pass);
    let mut methods = config.methods.clone();
    methods.sort_unstable();
    methods.dedup();
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        preset: config.model.preset.name().to_string(),
        seed: config.seed,
        methods,
        steps,
        final_time: config.time_of(steps),
        metrics,
        warnings,
        all_pass,
    };
    Ok(RunData {
        config: config.clone(),
        grid,
        generator,
        initial,
        snapshot_steps,
        solutions,
        varqite,
        observables,
        summary,
    })
}

/// Grid description written next to every surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub dims: usize,
    pub qubits: usize,
    pub points_per_dim: usize,
    pub spacings: Vec<f64>,
    pub origin: Vec<f64>,
    /// Flat index `k = sum_d i_d * points^(D-1-d)`: the first axis varies slowest.
    pub layout: String,
}

impl GridMeta {
    pub fn of(grid: &Grid) -> Self {
        Self {
            dims: grid.dims(),
            qubits: grid.qubits(),
            points_per_dim: grid.points_per_dim(),
            spacings: grid.spacings().to_vec(),
            origin: grid.origin().to_vec(),
            layout: "row-major".into(),
        }
    }
}

#[derive(Serialize)]
struct Snapshot<'a> {
    time: f64,
    step: usize,
    grid: GridMeta,
    surfaces: BTreeMap<&'static str, &'a [f64]>,
    max_abs_differences: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct VarQiteStep {
    step: usize,
    time: f64,
    alpha: f64,
    theta: Vec<f64>,
    l1: f64,
    mass: f64,
    condition: Option<f64>,
}

#[derive(Serialize)]
struct Sidecar {
    method: &'static str,
    grid: GridMeta,
    t0: f64,
    dt: f64,
    steps: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    varqite: Option<VarQiteSidecar>,
    #[serde(skip_serializing_if = "Option::is_none")]
    monte_carlo: Option<McSidecar>,
}

#[derive(Serialize)]
struct VarQiteSidecar {
    ode: crate::varqite::OdeMethod,
    entangler: crate::circuit::Entangler,
    init_residual: f64,
    warnings: Vec<String>,
    records: Vec<VarQiteStep>,
}

#[derive(Serialize)]
struct McSidecar {
    paths: u64,
    substeps: usize,
    seed: u64,
}

/// Files produced by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct RunReport {
    pub data: RunData,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Execute and write all artifacts into `config.output.dir`.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    let data = execute(config)?;
    let dir = config.output.dir.clone();
    let files = write_outputs(&data, &dir)?;
    Ok(RunReport { data, dir, files })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Serde(format!("{}: {e}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Label used in snapshot file names: `0.3`, `1.1`, `0.25`.
pub fn time_label(t: f64) -> String {
    let s = format!("{t:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub fn write_outputs(data: &RunData, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut files = Vec::new();
    let steps = data.config.evolution.steps;
    let get = |m: Method, s: usize| data.solutions.get(&m).and_then(|x| x.get(&s));

    let path = dir.join("norms.csv");
    {
        let mut w = csv_writer(&path)?;
        w.write_record([
            "step",
            "time",
            "l1_varqite",
            "l1_euler",
            "l1_mc",
            "l2_diff_varqite_euler",
            "l2_diff_varqite_mc",
        ])
        .map_err(csv_err(&path))?;
        for s in 0..=steps {
            let v = get(Method::Varqite, s);
            let e = get(Method::Euler, s);
            let mc = get(Method::MonteCarlo, s);
            w.write_record([
                s.to_string(),
                data.time_of(s).to_string(),
                opt(v.map(|u| l1(u))),
                opt(e.map(|u| l1(u))),
                opt(mc.map(|u| l1(u))),
                opt(v.zip(e).map(|(a, b)| l2_diff(a, b))),
                opt(v.zip(mc).map(|(a, b)| l2_diff(a, b))),
            ])
            .map_err(csv_err(&path))?;
        }
        w.flush().map_err(io_err(&path))?;
    }
    files.push(path);

    let meta = GridMeta::of(&data.grid);
    for (&m, series) in &data.solutions {
        let path = dir.join(format!("trajectory_{}.csv", m.name()));
        {
            let mut w = csv_writer(&path)?;
            let mut header = vec!["step".to_string(), "time".to_string()];
            header.extend((0..data.grid.len()).map(|k| format!("u{k}")));
            w.write_record(&header).map_err(csv_err(&path))?;
            for (s, u) in series {
                let mut row = vec![s.to_string(), data.time_of(*s).to_string()];
                row.extend(u.iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        files.push(path);

        let sidecar = Sidecar {
            method: m.name(),
            grid: meta.clone(),
            t0: data.config.initial.t0,
            dt: data.config.evolution.dt,
            steps: series.keys().copied().collect(),
            varqite: (m == Method::Varqite).then(|| {
                let traj = data.varqite.as_ref().expect("VarQITE series implies a trajectory");
                VarQiteSidecar {
                    ode: data.config.varqite.method,
                    entangler: data.config.ansatz.entangler,
                    init_residual: traj.init_residual,
                    warnings: traj.warnings.clone(),
                    records: traj
                        .records
                        .iter()
                        .map(|r| VarQiteStep {
                            step: r.step,
                            time: r.time,
                            alpha: r.alpha,
                            theta: r.theta.clone(),
                            l1: r.l1,
                            mass: r.mass,
                            condition: r.condition,
                        })
                        .collect(),
                }
            }),
            monte_carlo: (m == Method::MonteCarlo).then_some(McSidecar {
                paths: data.config.monte_carlo.paths,
                substeps: data.config.monte_carlo.substeps,
                seed: data.config.seed,
            }),
        };
        let path = dir.join(format!("trajectory_{}.json", m.name()));
        write_json(&path, &sidecar)?;
        files.push(path);
    }

    if let Some(traj) = &data.varqite {
        let path = dir.join("varqite_params.csv");
        {
            let mut w = csv_writer(&path)?;
            let n = traj.records.first().map_or(0, |r| r.theta.len());
            let mut header: Vec<String> = ["step", "time", "alpha", "l1", "l2"].map(String::from).into();
            header.extend((1..=n).map(|k| format!("theta_{k}")));
            w.write_record(&header).map_err(csv_err(&path))?;
            for r in &traj.records {
                let mut row = vec![
                    r.step.to_string(),
                    r.time.to_string(),
                    r.alpha.to_string(),
                    r.l1.to_string(),
                    r.l2.to_string(),
                ];
                row.extend(r.theta.iter().map(|v| v.to_string()));
                w.write_record(&row).map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
        }
        files.push(path);
    }

    for &s in &data.snapshot_steps {
        let mut surfaces = BTreeMap::new();
        for m in Method::ALL {
            if let Some(u) = get(m, s) {
                surfaces.insert(m.name(), u.as_slice());
            }
        }
        let names: Vec<&'static str> = surfaces.keys().copied().collect();
        let mut diffs = BTreeMap::new();
        for (i, a) in names.iter().enumerate() {
            for b in &names[i + 1..] {
                diffs.insert(format!("{a}-{b}"), max_abs_diff(surfaces[a], surfaces[b]));
            }
        }
        let t = data.time_of(s);
        let snap = Snapshot {
            time: t,
            step: s,
            grid: meta.clone(),
            surfaces,
            max_abs_differences: diffs,
        };
        let path = dir.join(format!("solution_t{}.json", time_label(t)));
        write_json(&path, &snap)?;
        files.push(path);
    }

    #[derive(Serialize)]
    struct Observables<'a> {
        time: f64,
        observables: &'a [ObservableResult],
    }
    let path = dir.join("observables.json");
    write_json(
        &path,
        &Observables {
            time: data.time_of(steps),
            observables: &data.observables,
        },
    )?;
    files.push(path);

    let path = dir.join("summary.json");
    write_json(&path, &data.summary)?;
    files.push(path);
    Ok(files)
}

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use fkvarqite::baselines::{constant_kernel_masses, CellQuadrature};
use fkvarqite::decompose::structured_decompose;
use fkvarqite::harness::{self, GridMeta, Method, RunConfig};
use fkvarqite::model::evaluate_coefficients;
use fkvarqite::pauli::decompose_real;
use fkvarqite::{discretize, Error};

#[derive(Parser)]
#[command(name = "fkvarqite", version, about = "Feynman-Kac PDEs by variational imaginary-time evolution")]
struct Cli {
    /// Log verbosity (error, warn, info, debug, trace); RUST_LOG also works.
    #[arg(long, global = true, default_value = "warn")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// TOML or JSON run configuration; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods and write all artifacts.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated subset of varqite, euler, monte_carlo, analytic.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated absolute snapshot times.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
    },
    /// Per-step differences between methods of one run, or between two runs.
    Compare {
        run: PathBuf,
        other: Option<PathBuf>,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump the generator's Pauli decomposition as JSON.
    Decompose {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_enum, default_value = "structured")]
        method: Decomposition,
        /// Polynomial order for coefficient profiles (structured only).
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the sparse generator in triplet form.
        #[arg(long)]
        sparse: Option<PathBuf>,
    },
    /// Closed-form solution from the configured start, as cell masses.
    Kernel {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Absolute time.
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    DefaultConfig,
}

#[derive(Clone, Copy, ValueEnum)]
enum Decomposition {
    Structured,
    Dense,
}

fn load(args: &ConfigArgs) -> Result<RunConfig, Error> {
    let mut c = match &args.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        c.seed = s;
    }
    Ok(c)
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), Error> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| Error::Io { path, source }
    };
    match path {
        Some(p) => std::fs::write(p, text).map_err(io(p)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(io(Path::new("<stdout>"))),
    }
}

fn json(value: &serde_json::Value) -> Result<String, Error> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log)
        .parse_default_env()
        .init();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Run {
            cfg,
            methods,
            out,
            snapshot_times,
        } => {
            let mut c = load(&cfg)?;
            if let Some(m) = methods {
                c.methods = m;
            }
            if let Some(o) = out {
                c.output.dir = o;
            }
            if let Some(t) = snapshot_times {
                c.output.snapshot_times = Some(t);
            }
            let report = harness::run(&c)?;
            let s = &report.data.summary;
            for m in &s.metrics {
                let at = m.time.map(|t| format!(" @ t={}", harness::time_label(t))).unwrap_or_default();
                println!("{} {}{at}: {:.6e}", if m.pass { "PASS" } else { "FAIL" }, m.name, m.value);
            }
            for w in &s.warnings {
                println!("warning: {w}");
            }
            println!("wrote {} files to {}", report.files.len(), report.dir.display());
            Ok(())
        }
        Command::Compare { run, other, out } => {
            let rows = harness::compare(&run, other.as_deref())?;
            let mut buf = Vec::new();
            harness::write_rows(&rows, &mut buf)?;
            emit(out.as_deref(), &String::from_utf8_lossy(&buf))
        }
        Command::Decompose {
            cfg,
            method,
            order,
            out,
            sparse,
        } => {
            let c = load(&cfg)?;
            let r = c.validate()?;
            let gen = discretize(&evaluate_coefficients(&r.sde, &r.grid, c.initial.t0)?, &r.grid)?;
            if let Some(p) = sparse {
                emit(Some(&p), &json(&gen.to_json())?)?;
            }
            let sum = match method {
                Decomposition::Structured => structured_decompose(&gen, &r.grid, order)?,
                Decomposition::Dense => decompose_real(&gen.to_dense()?)?,
            };
            log::info!("{} Pauli terms", sum.len());
            emit(out.as_deref(), &json(&sum.to_json())?)
        }
        Command::Kernel { cfg, time, out } => {
            let c = load(&cfg)?;
            let r = c.validate()?;
            let masses = constant_kernel_masses(&r.sde, &r.grid, time, &r.centre, CellQuadrature::default())?;
            let doc = serde_json::json!({
                "time": time,
                "centre": r.centre,
                "grid": GridMeta::of(&r.grid),
                "masses": masses,
            });
            emit(out.as_deref(), &json(&doc)?)
        }
        Command::DefaultConfig => {
            let text = toml::to_string(&RunConfig::default()).map_err(|e| Error::Serde(e.to_string()))?;
            emit(None, &text)
        }
    }
}

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use hibem::adaptivity::RefinementMode;
use hibem::checks::{random_refine, run_check};
use hibem::config::RunConfig;
use hibem::experiment::{run, summary};
use hibem::geometry::BoundaryGeometry;
use hibem::{Error, Result};

/// Adaptive isogeometric boundary elements for the Laplace single-layer
/// equation on NURBS surfaces.
#[derive(Parser)]
#[command(name = "hibem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its convergence history as CSV.
    Run(Box<RunArgs>),
    /// Run a randomized property suite (or `all`).
    Check {
        suite: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Print the active elements of a mesh, one `patch level i1 i2` per line.
    MeshDump {
        geometry: String,
        #[arg(long, default_value_t = 0)]
        p: usize,
        /// Uniform refinements applied to the initial mesh.
        #[arg(long, default_value_t = 0)]
        uniform: usize,
        /// Random refinement steps (one marked element each) applied afterwards.
        #[arg(long = "random_steps", alias = "random-steps", default_value_t = 0)]
        random_steps: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Fixture name (`cube`, `quarter_pipe`) or geometry file.
    geometry: Option<String>,
    /// JSON file with run configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    mode: Option<RefinementMode>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long = "n_far", alias = "n-far")]
    n_far: Option<usize>,
    #[arg(long = "n_reg", alias = "n-reg")]
    n_reg: Option<usize>,
    #[arg(long = "n_sing", alias = "n-sing")]
    n_sing: Option<usize>,
    #[arg(long = "rho_near", alias = "rho-near")]
    rho_near: Option<f64>,
    #[arg(long = "rho_far", alias = "rho-far")]
    rho_far: Option<f64>,
    #[arg(long = "n_rhs", alias = "n-rhs")]
    n_rhs: Option<usize>,
    #[arg(long = "interpolation_degree", alias = "interpolation-degree")]
    interpolation_degree: Option<usize>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fill the `seconds` column.
    #[arg(long)]
    timing: bool,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(p, mode, theta, budget, tolerance, n_far, n_reg, n_sing, rho_near, rho_far, n_rhs, seed);
        if let Some(g) = self.geometry {
            c.geometry = g;
        }
        if self.interpolation_degree.is_some() {
            c.interpolation_degree = self.interpolation_degree;
        }
        if self.output.is_some() {
            c.output = self.output;
        }
        c.timing |= self.timing;
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(if e.is_numerical() { 2 } else { 1 })
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let out = run(&cfg, |_| {})?;
    match &cfg.output {
        Some(path) => {
            std::fs::write(path, &out.csv)?;
            println!("{}", summary(&out.trace));
        }
        None => {
            print!("{}", out.csv);
            eprintln!("{}", summary(&out.trace));
        }
    }
    Ok(())
}

fn cmd_check(suite: &str, seed: u64) -> Result<bool> {
    let reports = run_check(suite, seed)?;
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed))
}

fn cmd_mesh_dump(geometry: &str, p: usize, uniform: usize, random_steps: usize, seed: u64) -> Result<()> {
    if p > 2 {
        return Err(Error::Config(format!("p = {p} is not one of 0, 1, 2")));
    }
    let geom = BoundaryGeometry::by_name(geometry)?;
    let mut mesh = geom.initial_mesh(p)?;
    for _ in 0..uniform {
        mesh = mesh.uniform_refine();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_steps {
        mesh = random_refine(&mesh, &mut rng, 1)?;
    }
    let mesh = Arc::new(mesh);
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", mesh.dump())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Check { suite, seed } => match cmd_check(&suite, seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Command::MeshDump { geometry, p, uniform, random_steps, seed } => {
            cmd_mesh_dump(&geometry, p, uniform, random_steps, seed)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

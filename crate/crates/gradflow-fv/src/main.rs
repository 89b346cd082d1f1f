//! Batch driver: mesh generation, trajectory solving, energy-dissipation
//! audits, continuum lifts, special-function tables, and convergence studies,
//! all from INI configs to CSV outputs.
//!
//! Exit codes: 0 on success, 1 on validation or parse failures, 2 on
//! numerical failures (positivity loss, non-convergence, study thresholds).
//! Every failure prints one `ERROR <code>: message` line to standard error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use gradflow::config::{self, ConfigError, InitialKind, RunConfig};
use gradflow::functionals::{self, FunctionalError};
use gradflow::mesh::{build_cartesian, write_fvmesh, MeshError};
use gradflow::potential::{discretize, DiscretizeOptions, PotentialError};
use gradflow::reconstruct::{LiftedFlux, ReconstructError};
use gradflow::scheme::{self, SchemeConfig, SchemeError};
use gradflow::special;
use gradflow::study::{self, StudyError};
use gradflow::trajio::{self, TrajIoError};

#[derive(Parser)]
#[command(name = "gradflow-fv", version, about = "Finite-volume gradient-flow toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a Cartesian mesh file.
    Mesh {
        /// Dimension then per-axis bounds then spacing: `1d 0 1 0.25`.
        #[arg(long, num_args = 2.., allow_negative_numbers = true, value_name = "DIM LO HI .. H")]
        cartesian: Vec<String>,
        /// Mesh file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the configured problem and persist the trajectory.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Trajectory directory (falls back to the config's [output] dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the solver's diffusion strength.
        #[arg(long)]
        eps: Option<f64>,
        /// Override the seed of random initial data.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit the energy-dissipation balance of a stored trajectory.
    Audit {
        #[arg(long)]
        traj: PathBuf,
        /// Audit at this diffusion strength instead of the stored one.
        #[arg(long)]
        eps: Option<f64>,
        /// CSV to write (default: audit.csv inside the trajectory directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Lift stored states to cell-density tables per record time.
    Lift {
        #[arg(long)]
        traj: PathBuf,
        /// CSV to write (default: fields.csv inside the trajectory directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate one special function over a parameter grid.
    SpecialTable {
        /// Function name, e.g. `bernoulli`, `alpha_star`, `beta`.
        #[arg(long = "fn")]
        func: String,
        /// Comma-separated axes: `a=0:4:5,b=2,xi=-1:1:9,eps=0.5`.
        #[arg(long)]
        grid: String,
        /// CSV to write (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the configured convergence study and write its report.
    Study {
        #[arg(long)]
        config: PathBuf,
        /// Report directory for report.csv and report.txt.
        #[arg(long)]
        out: PathBuf,
        /// Concurrent levels (beats the GRADFLOW_THREADS environment variable
        /// and the config's own setting; never changes the numbers).
        #[arg(long)]
        threads: Option<usize>,
    },
}

// ---------------------------------------------------------------------------
// failure mapping
// ---------------------------------------------------------------------------

struct Failure {
    code: &'static str,
    exit: u8,
    msg: String,
}

fn fail(code: &'static str, exit: u8, msg: impl Into<String>) -> Failure {
    Failure { code, exit, msg: msg.into() }
}

fn usage(msg: impl Into<String>) -> Failure {
    fail("usage", 1, msg)
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail("io", 1, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                fail("config_not_found", 1, io.to_string())
            }
            ConfigError::Io(io) => io.into(),
            ConfigError::Parse { .. } => fail("config_parse", 1, e.to_string()),
            ConfigError::Invalid(_) | ConfigError::Missing { .. } => {
                fail("config_invalid", 1, e.to_string())
            }
            ConfigError::Table(p) => p.into(),
        }
    }
}

impl From<PotentialError> for Failure {
    fn from(e: PotentialError) -> Self {
        match e {
            PotentialError::Io(io) => io.into(),
            PotentialError::Parse { .. } => fail("config_parse", 1, e.to_string()),
            _ => fail("config_invalid", 1, e.to_string()),
        }
    }
}

impl From<MeshError> for Failure {
    fn from(e: MeshError) -> Self {
        match e {
            MeshError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                fail("config_not_found", 1, io.to_string())
            }
            MeshError::Io(io) => io.into(),
            MeshError::Parse { .. } => fail("mesh_parse", 1, e.to_string()),
            MeshError::Invalid(_) => fail("mesh_invalid", 1, e.to_string()),
        }
    }
}

impl From<SchemeError> for Failure {
    fn from(e: SchemeError) -> Self {
        match e {
            SchemeError::Invalid(_) => fail("config_invalid", 1, e.to_string()),
            SchemeError::NegativeDensity { .. } => fail("negative_density", 2, e.to_string()),
            SchemeError::NonConvergence { .. } => fail("non_convergence", 2, e.to_string()),
        }
    }
}

impl From<TrajIoError> for Failure {
    fn from(e: TrajIoError) -> Self {
        match e {
            TrajIoError::Io(io) if io.kind() == std::io::ErrorKind::NotFound => {
                fail("config_not_found", 1, io.to_string())
            }
            TrajIoError::Io(io) => io.into(),
            TrajIoError::Parse { .. } => fail("config_parse", 1, e.to_string()),
            TrajIoError::Invalid(_) => fail("config_invalid", 1, e.to_string()),
            TrajIoError::Mesh(m) => m.into(),
            TrajIoError::Config(c) => c.into(),
        }
    }
}

impl From<StudyError> for Failure {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Invalid(_) => fail("config_invalid", 1, e.to_string()),
            StudyError::Mesh(m) => m.into(),
            StudyError::Potential(p) => p.into(),
            StudyError::Scheme(s) => s.into(),
            StudyError::Reconstruct(r) => r.into(),
            StudyError::Functional(f) => f.into(),
        }
    }
}

impl From<FunctionalError> for Failure {
    fn from(e: FunctionalError) -> Self {
        fail("config_invalid", 1, e.to_string())
    }
}

impl From<ReconstructError> for Failure {
    fn from(e: ReconstructError) -> Self {
        fail("config_invalid", 1, e.to_string())
    }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprintln!("ERROR usage: {e}");
            return ExitCode::from(1);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("ERROR {}: {}", f.code, f.msg);
            ExitCode::from(f.exit)
        }
    }
}

fn run(cmd: Cmd) -> Result<(), Failure> {
    match cmd {
        Cmd::Mesh { cartesian, out } => cmd_mesh(&cartesian, &out),
        Cmd::Solve { config, out, eps, seed } => cmd_solve(&config, out, eps, seed),
        Cmd::Audit { traj, eps, out } => cmd_audit(&traj, eps, out),
        Cmd::Lift { traj, out } => cmd_lift(&traj, out),
        Cmd::SpecialTable { func, grid, out } => cmd_special_table(&func, &grid, out),
        Cmd::Study { config, out, threads } => cmd_study(&config, &out, threads),
    }
}

fn cmd_mesh(cartesian: &[String], out: &Path) -> Result<(), Failure> {
    let dim: usize = match cartesian.first().map(String::as_str) {
        Some("1d") | Some("1") => 1,
        Some("2d") | Some("2") => 2,
        Some("3d") | Some("3") => 3,
        other => {
            return Err(usage(format!(
                "--cartesian starts with the dimension (1d, 2d, or 3d), got {other:?}"
            )))
        }
    };
    if cartesian.len() != 2 * dim + 2 {
        return Err(usage(format!(
            "--cartesian for {dim}d takes {} numbers (per-axis lo hi, then h), got {}",
            2 * dim + 1,
            cartesian.len() - 1
        )));
    }
    let nums: Vec<f64> = cartesian[1..]
        .iter()
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| usage(format!("--cartesian expects numbers, got `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let bounds: Vec<(f64, f64)> = nums[..2 * dim].chunks(2).map(|c| (c[0], c[1])).collect();
    let h = nums[2 * dim];
    let tess = build_cartesian(dim, &bounds, h)?;
    write_fvmesh(out, &tess)?;
    println!(
        "wrote {}: {} cells, {} faces, max diameter {:.6e}",
        out.display(),
        tess.n_cells(),
        tess.n_faces(),
        tess.h()
    );
    Ok(())
}

/// Build the shared pieces of a run: mesh, sampled potentials, initial data.
fn prepare(
    cfg: &RunConfig,
) -> Result<(Arc<gradflow::mesh::Tessellation>, gradflow::potential::DiscretePotentials, Vec<f64>), Failure>
{
    let tess = Arc::new(config::build_mesh(&cfg.mesh)?);
    let opts = DiscretizeOptions {
        lipschitz_v: cfg.potential.lipschitz_v,
        lipschitz_w: cfg.potential.lipschitz_w,
        ..DiscretizeOptions::default()
    };
    let pots = discretize(&tess, &cfg.potential.v, &cfg.potential.w, &opts)?;
    let rho0 = study::initial_state(&tess, &pots, &cfg.initial, cfg.solver.eps)?;
    Ok((tess, pots, rho0))
}

fn cmd_solve(
    config: &Path,
    out: Option<PathBuf>,
    eps: Option<f64>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = config::load_run_config(config)?;
    if let Some(e) = eps {
        cfg.solver.eps = e;
    }
    if let Some(s) = seed {
        match cfg.initial.kind {
            InitialKind::Random { .. } => cfg.initial.kind = InitialKind::Random { seed: s },
            _ => return Err(usage("--seed applies only to random initial data")),
        }
    }
    let out = out
        .or(cfg.output.clone())
        .ok_or_else(|| usage("no output directory: pass --out or set [output] dir"))?;
    let (tess, pots, rho0) = prepare(&cfg)?;
    let scfg = SchemeConfig {
        kind: cfg.solver.kind,
        eps: cfg.solver.eps,
        step: cfg.solver.step,
        integrator: cfg.solver.integrator,
        t_end: cfg.solver.t_end,
        record_every: cfg.solver.record_every,
    };
    let traj = scheme::solve(&tess, &pots, &rho0, &scfg)?;
    trajio::save_trajectory(&out, &traj, &cfg.potential)?;
    let rho_t = traj.final_state();
    let mass: f64 = rho_t.iter().sum();
    println!(
        "solved to t = {}: {} records, mass {:.16e}, energy {:.16e} -> {}",
        scfg.t_end,
        traj.len(),
        mass,
        functionals::energy(&tess, &pots, rho_t, scfg.eps),
        out.display()
    );
    Ok(())
}

fn cmd_audit(traj_dir: &Path, eps: Option<f64>, out: Option<PathBuf>) -> Result<(), Failure> {
    let mut loaded = trajio::load_trajectory(traj_dir)?;
    if let Some(e) = eps {
        loaded.traj.eps = e;
    }
    let opts = DiscretizeOptions {
        lipschitz_v: loaded.potential.lipschitz_v,
        lipschitz_w: loaded.potential.lipschitz_w,
        ..DiscretizeOptions::default()
    };
    let pots = discretize(
        loaded.traj.mesh(),
        &loaded.potential.v,
        &loaded.potential.w,
        &opts,
    )?;
    let rows = functionals::audit(&loaded.traj, &pots)?;
    let mut csv = String::from("t,E,R,D,residual_cum\n");
    for r in &rows {
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            r.t, r.energy, r.r, r.d, r.residual_cum
        ));
    }
    let out = out.unwrap_or_else(|| traj_dir.join("audit.csv"));
    std::fs::write(&out, csv)?;
    let total = rows.last().map_or(0.0, |r| r.residual_cum);
    let worst = rows.iter().map(|r| r.residual_cum.abs()).fold(0.0, f64::max);
    let monotone = rows.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-15);
    println!("audited {} records -> {}", rows.len(), out.display());
    println!("residual over [0,T]: {total:.6e} (max |residual|: {worst:.6e})");
    println!(
        "energy: {:.6e} -> {:.6e}, nonincreasing: {monotone}",
        rows[0].energy,
        rows.last().expect("audit of a nonempty trajectory").energy
    );
    Ok(())
}

fn cmd_lift(traj_dir: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let loaded = trajio::load_trajectory(traj_dir)?;
    let tess = loaded.traj.mesh().clone();
    let mut csv = String::from("t,cell,x0,x1,x2,volume,u\n");
    for i in 0..loaded.traj.len() {
        let t = loaded.traj.times()[i];
        let u = tess.densities(loaded.traj.state(i));
        for (k, c) in tess.cells().iter().enumerate() {
            csv.push_str(&format!(
                "{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                t, k, c.x[0], c.x[1], c.x[2], c.volume, u[k]
            ));
        }
    }
    let out = out.unwrap_or_else(|| traj_dir.join("fields.csv"));
    std::fs::write(&out, csv)?;
    let last_flux = LiftedFlux::new(tess.clone(), loaded.traj.flux(loaded.traj.len() - 1).to_vec());
    println!(
        "lifted {} records x {} cells -> {}",
        loaded.traj.len(),
        tess.n_cells(),
        out.display()
    );
    println!("final flux total variation: {:.6e}", last_flux.total_variation());
    Ok(())
}

// ---------------------------------------------------------------------------
// special-function tables
// ---------------------------------------------------------------------------

struct GridAxis {
    name: &'static str,
    values: Vec<f64>,
}

fn parse_axis_values(spec: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.len() {
        1 => Ok(vec![parts[0]
            .parse()
            .map_err(|_| usage(format!("bad grid number `{}`", parts[0])))?]),
        3 => {
            let lo: f64 = parts[0]
                .parse()
                .map_err(|_| usage(format!("bad grid number `{}`", parts[0])))?;
            let hi: f64 = parts[1]
                .parse()
                .map_err(|_| usage(format!("bad grid number `{}`", parts[1])))?;
            let n: usize = parts[2]
                .parse()
                .map_err(|_| usage(format!("bad grid count `{}`", parts[2])))?;
            if n == 0 {
                return Err(usage("grid counts must be at least 1"));
            }
            if n == 1 {
                return Ok(vec![lo]);
            }
            Ok((0..n)
                .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
                .collect())
        }
        _ => Err(usage(format!(
            "grid axes are `name=value` or `name=lo:hi:count`, got `{spec}`"
        ))),
    }
}

fn cmd_special_table(func: &str, grid: &str, out: Option<PathBuf>) -> Result<(), Failure> {
    type Eval = fn(&[f64]) -> f64;
    let (params, eval): (&[&'static str], Eval) = match func {
        "bernoulli" => (&["s"], |v| special::bernoulli(v[0])),
        "log_mean" => (&["a", "b"], |v| special::log_mean(v[0], v[1])),
        "harm_log_mean" => (&["a", "b"], |v| special::harm_log_mean(v[0], v[1])),
        "alpha_star" => (&["a", "b", "xi", "eps"], |v| special::alpha_star(v[0], v[1], v[2], v[3])),
        "alpha_star_d1" => {
            (&["a", "b", "xi", "eps"], |v| special::alpha_star_d1(v[0], v[1], v[2], v[3]))
        }
        "alpha_star_d2" => {
            (&["a", "b", "xi", "eps"], |v| special::alpha_star_d2(v[0], v[1], v[2], v[3]))
        }
        "alpha_dual" => (&["a", "b", "j", "eps"], |v| special::alpha_dual(v[0], v[1], v[2], v[3])),
        "beta" => (&["a", "b", "eps"], |v| special::beta(v[0], v[1], v[2])),
        "psi_star" => (&["s", "eps"], |v| special::psi_star(v[0], v[1])),
        "h_kernel" => (&["s"], |v| special::h_kernel(v[0])),
        "hh_kernel" => (&["a", "b", "q", "eps"], |v| special::hh_kernel(v[0], v[1], v[2], v[3])),
        other => return Err(usage(format!("unknown special function `{other}`"))),
    };

    let mut axes: Vec<GridAxis> = params.iter().map(|p| GridAxis { name: p, values: vec![] }).collect();
    for part in grid.split(',') {
        let Some((name, spec)) = part.split_once('=') else {
            return Err(usage(format!("grid axes are `name=values`, got `{part}`")));
        };
        let name = name.trim();
        let axis = axes
            .iter_mut()
            .find(|a| a.name == name)
            .ok_or_else(|| usage(format!("`{func}` has no parameter `{name}`")))?;
        if !axis.values.is_empty() {
            return Err(usage(format!("parameter `{name}` given twice")));
        }
        axis.values = parse_axis_values(spec.trim())?;
    }
    for a in &axes {
        if a.values.is_empty() {
            return Err(usage(format!("`{func}` needs a grid for parameter `{}`", a.name)));
        }
        for &v in &a.values {
            if !v.is_finite() {
                return Err(usage(format!("parameter `{}` must be finite", a.name)));
            }
            if (a.name == "a" || a.name == "b") && v < 0.0 {
                return Err(usage(format!("density parameter `{}` must be nonnegative", a.name)));
            }
            if a.name == "eps" && v < 0.0 {
                return Err(usage("eps must be nonnegative"));
            }
            if a.name == "eps" && v == 0.0 && func == "hh_kernel" {
                return Err(usage("hh_kernel needs eps > 0"));
            }
        }
    }

    let mut csv = String::new();
    csv.push_str(&params.join(","));
    csv.push_str(",value\n");
    let mut idx = vec![0usize; axes.len()];
    'rows: loop {
        let vals: Vec<f64> = axes.iter().zip(&idx).map(|(a, &i)| a.values[i]).collect();
        for v in &vals {
            csv.push_str(&format!("{v:.16e},"));
        }
        csv.push_str(&format!("{:.16e}\n", eval(&vals)));
        // odometer, last axis fastest
        for d in (0..axes.len()).rev() {
            idx[d] += 1;
            if idx[d] < axes[d].values.len() {
                continue 'rows;
            }
            idx[d] = 0;
        }
        break;
    }
    match out {
        Some(p) => {
            std::fs::write(&p, csv)?;
            let rows: usize = axes.iter().map(|a| a.values.len()).product();
            println!("wrote {rows} rows -> {}", p.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_study(config: &Path, out: &Path, threads: Option<usize>) -> Result<(), Failure> {
    let mut cfg = config::load_run_config(config)?;
    let threads = threads.or_else(|| {
        std::env::var("GRADFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let (Some(t), Some(study)) = (threads, cfg.study.as_mut()) {
        study.threads = Some(t.max(1));
    }
    let report = study::run_study(&cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.csv"), report.to_csv())?;
    std::fs::write(out.join("report.txt"), report.summary())?;
    print!("{}", report.summary());
    if !report.passed {
        return Err(fail("threshold_failed", 2, report.failures.join("; ")));
    }
    Ok(())
}

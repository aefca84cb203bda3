use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dompo::dynamics::{integrate_with, ClassicalState, IntegratorOptions};
use dompo::scan::{
    classification_grid, fmt_num, run_effective_map, write_boundary_csv, write_grid_csv, write_map_csv, ScanConfig,
    INTENSITY_AXIS,
};
use dompo::stability::{classify, phase_boundary};
use dompo::steady::{reconstruct_amplitudes, residuals, steady_states};
use dompo::verify::{run_verify, VerifyOptions};
use dompo::{Error, ModelParams, SteadyState, Tolerances};

#[derive(Parser)]
#[command(name = "dompo", version, about = "Degenerate optomechanical parametric oscillator analysis")]
struct Cli {
    /// JSON file: model parameters, or a scan description for the map commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for grid evaluation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone, Copy)]
struct Drive {
    /// Pump injection; lists every stationary state it supports.
    #[arg(long, conflicts_with = "i_s")]
    sigma: Option<f64>,
    /// Signal intensity of a nontrivial state (0 selects the trivial state).
    #[arg(long = "I_s")]
    i_s: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary states.
    Steady(Drive),
    /// Eigenvalues and classification of each stationary state.
    Stability(Drive),
    /// Turning point and Hopf points along the upper branch.
    Hopf {
        /// Upper end of the intensity search interval.
        #[arg(long, default_value_t = 300.0)]
        i_max: f64,
    },
    /// Stability boundaries and classification grid over a (g, I_s) scan.
    PhaseDiagram,
    /// Effective phonon number and squeezing over a scan.
    EffectiveMap,
    /// Integrates the classical equations from a perturbed stationary state.
    Simulate {
        #[command(flatten)]
        drive: Drive,
        #[arg(long, default_value_t = 100.0)]
        tau_end: f64,
        /// Size of the random initial kick.
        #[arg(long, default_value_t = 1e-3)]
        eps: f64,
        #[arg(long, default_value_t = 1e-9)]
        rtol: f64,
        #[arg(long, default_value_t = 1e-12)]
        atol: f64,
        /// Output spacing; every accepted step when omitted.
        #[arg(long)]
        sample_dt: Option<f64>,
    },
    /// Cross-checks the analytic routines against independent numerics.
    Verify {
        #[arg(long, default_value_t = 30)]
        points: usize,
        #[arg(long, default_value_t = 1024)]
        trajectories: usize,
        #[arg(long, hide = true)]
        covariance_factor: Option<f64>,
    },
}

enum Failure {
    Lib(Error),
    Verification,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(Error::Io(e))
    }
}

type Out = Box<dyn Write>;

fn open_out(path: Option<&Path>) -> Result<Out, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_config(path: &Path) -> Result<String, Failure> {
    Ok(std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?)
}

/// Point commands accept either bare parameters or a scan file (its `base`).
fn load_params(path: Option<&Path>) -> Result<ModelParams, Failure> {
    let Some(path) = path else { return Ok(ModelParams::default()) };
    let text = read_config(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Validation(e.to_string()))?;
    if value.get("base").is_some() {
        Ok(ScanConfig::from_json_str(&text)?.base)
    } else {
        Ok(ModelParams::from_json_str(&text)?)
    }
}

fn load_scan(path: Option<&Path>) -> Result<ScanConfig, Failure> {
    let path = path.ok_or_else(|| Error::Validation("this command needs --config with a scan description".into()))?;
    Ok(ScanConfig::from_json_str(&read_config(path)?)?)
}

fn select_states(params: &ModelParams, drive: Drive, tol: &Tolerances) -> Result<(ModelParams, Vec<SteadyState>), Failure> {
    match drive.i_s {
        Some(i) if i < 0.0 || !i.is_finite() => {
            Err(Error::Validation(format!("I_s must be finite and >= 0, got {i}")).into())
        }
        Some(i) if i == 0.0 => Ok((*params, steady_states(params, tol)?.into_iter().take(1).collect())),
        Some(i) => {
            let ss = reconstruct_amplitudes(params, i, 1)?;
            Ok((params.with_sigma(ss.sigma), vec![ss]))
        }
        None => {
            let p = drive.sigma.map_or(*params, |s| params.with_sigma(s));
            p.check()?;
            Ok((p, steady_states(&p, tol)?))
        }
    }
}

fn cmd_steady(params: &ModelParams, drive: Drive, tol: &Tolerances, mut w: Out) -> Result<(), Failure> {
    let (p, states) = select_states(params, drive, tol)?;
    writeln!(w, "branch,sigma,I_s,I_p,x_bar,re_beta_p,im_beta_p,re_beta_s,im_beta_s,phi_p,phi_s,residual_p,residual_s")?;
    for ss in &states {
        let (rp, rs) = residuals(&p, ss);
        let cols = [
            ss.sigma, ss.i_s, ss.i_p, ss.x_bar, ss.beta_p.re, ss.beta_p.im, ss.beta_s.re, ss.beta_s.im, ss.phi_p, ss.phi_s, rp, rs,
        ];
        let row: Vec<String> = cols.iter().map(|&v| fmt_num(v)).collect();
        writeln!(w, "{},{}", ss.branch.as_str(), row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_stability(params: &ModelParams, drive: Drive, tol: &Tolerances, mut w: Out) -> Result<(), Failure> {
    let (p, states) = select_states(params, drive, tol)?;
    writeln!(w, "branch,I_s,classification,margin,index,re_lambda,im_lambda")?;
    for ss in &states {
        let rep = classify(&p, ss, tol)?;
        for (k, ev) in rep.eigenvalues.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{k},{},{}",
                ss.branch.as_str(),
                fmt_num(ss.i_s),
                rep.classification.as_str(),
                fmt_num(rep.margin),
                fmt_num(ev.re),
                fmt_num(ev.im)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_hopf(params: &ModelParams, i_max: f64, tol: &Tolerances, w: Out) -> Result<(), Failure> {
    params.check()?;
    if !(i_max.is_finite() && i_max > 0.0) {
        return Err(Error::Validation(format!("--i-max must be > 0, got {i_max}")).into());
    }
    let points = phase_boundary(params, &[params.g], i_max, tol)?;
    write_boundary_csv(&points, w)?;
    Ok(())
}

fn grid_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.grid.csv"))
}

fn cmd_phase_diagram(cfg: &ScanConfig, out: Option<&Path>, tol: &Tolerances) -> Result<(), Failure> {
    let out = out.ok_or_else(|| Error::Validation("phase-diagram needs --out (the grid goes next to it)".into()))?;
    let (g_axis, i_axis) = match (cfg.axis1.name.as_str(), cfg.axis2.name.as_str()) {
        ("g", INTENSITY_AXIS) => (&cfg.axis1, &cfg.axis2),
        (INTENSITY_AXIS, "g") => (&cfg.axis2, &cfg.axis1),
        _ => return Err(Error::Validation(format!("phase-diagram needs axes 'g' and '{INTENSITY_AXIS}'")).into()),
    };
    let boundary = phase_boundary(&cfg.base, &g_axis.values(), i_axis.max, tol)?;
    write_boundary_csv(&boundary, open_out(Some(out))?)?;
    let grid = classification_grid(cfg, tol)?;
    write_grid_csv(&grid, open_out(Some(&grid_path(out)))?)?;
    Ok(())
}

fn cmd_effective_map(cfg: &ScanConfig, tol: &Tolerances, w: Out) -> Result<(), Failure> {
    let cells = run_effective_map(cfg, tol)?;
    write_map_csv(&cells, &cfg.outputs, w)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    params: &ModelParams,
    drive: Drive,
    tau_end: f64,
    eps: f64,
    opts: &IntegratorOptions,
    seed: u64,
    tol: &Tolerances,
    mut w: Out,
) -> Result<(), Failure> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Validation(format!("--eps must be >= 0, got {eps}")).into());
    }
    if !(tau_end.is_finite() && tau_end > 0.0) {
        return Err(Error::Validation(format!("--tau-end must be > 0, got {tau_end}")).into());
    }
    let (p, states) = select_states(params, drive, tol)?;
    // the highest-intensity state is the physically relevant one above threshold
    let ss = states.last().expect("the trivial state always exists");
    let mut init = ClassicalState::from_steady(ss).to_array();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in init.iter_mut() {
        *v += eps * rng.random_range(-1.0..1.0);
    }
    let tr = integrate_with(&p, &ClassicalState::from_array(&init), tau_end, opts)?;
    tr.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let tol = Tolerances::default();
    let config = cli.config.as_deref();
    let out = cli.out.as_deref();
    match cli.cmd {
        Command::Steady(drive) => cmd_steady(&load_params(config)?, drive, &tol, open_out(out)?),
        Command::Stability(drive) => cmd_stability(&load_params(config)?, drive, &tol, open_out(out)?),
        Command::Hopf { i_max } => cmd_hopf(&load_params(config)?, i_max, &tol, open_out(out)?),
        Command::PhaseDiagram => {
            let cfg = load_scan(config)?;
            with_threads(cli.threads.or(cfg.threads), || cmd_phase_diagram(&cfg, out, &tol))
        }
        Command::EffectiveMap => {
            let cfg = load_scan(config)?;
            with_threads(cli.threads.or(cfg.threads), || cmd_effective_map(&cfg, &tol, open_out(out)?))
        }
        Command::Simulate { drive, tau_end, eps, rtol, atol, sample_dt } => {
            let opts = IntegratorOptions { rtol, atol, sample_dt, ..Default::default() };
            let params = load_params(config)?;
            cmd_simulate(&params, drive, tau_end, eps, &opts, cli.seed.unwrap_or(0), &tol, open_out(out)?)
        }
        Command::Verify { points, trajectories, covariance_factor } => {
            let mut opts = VerifyOptions { n_points: points, n_traj: trajectories, ..Default::default() };
            if let Some(seed) = cli.seed {
                opts.seed = seed;
            }
            if let Some(f) = covariance_factor {
                opts.covariance_factor = f;
            }
            let report = with_threads(cli.threads, || Ok(run_verify(&opts, &tol)?))?;
            let mut w = open_out(out)?;
            writeln!(w, "{report}")?;
            w.flush()?;
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Verification)
            }
        }
    }
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(0) => Err(Error::Validation("--threads must be >= 1".into()).into()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?
            .install(f),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification) => {
            eprintln!("verification failed");
            ExitCode::from(4)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}

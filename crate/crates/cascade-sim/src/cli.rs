//! Command-line front end: configuration ingestion, engine selection,
//! figure-data emission, trajectory ensembles, and concurrence
//! reconstruction, all writing deterministic CSV/JSON.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 for
//! numerical failures.

use crate::analytic;
use crate::lindblad::{evolve_master, DensityMatrix5};
use crate::model::{
    basis, config::cascade_from_json, AmplitudeState, CascadeParams, SubsystemParams,
};
use crate::observables::{self, DetectorConfig, ReconstructionFlag, DEFAULT_NOISE_FLOOR};
use crate::ode::{self, IntegratorConfig, OdeError};
use crate::trajectories::{run_ensemble, EnsembleConfig, JumpChannel};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cascade-sim",
    version,
    about = "Simulate single-photon emission from two cascaded atom-cavity subsystems"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the one-excitation state on a uniform grid and write the
    /// amplitude/population series as CSV.
    Evolve {
        /// JSON parameter file
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Engine::Analytic)]
        engine: Engine,
        /// End of the time grid (units 1/K)
        #[arg(long = "t-max")]
        t_max: f64,
        /// Number of grid points (>= 2)
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit the data behind the two reference figures with the standard
    /// parameters baked in (g/K=5, kappa/K=0.9, kappa'/K=0.1, Delta/K=0.1,
    /// Gamma/K=0.2, phi=0), or with --config overriding them.
    Figure {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a quantum-jump ensemble: JSON summary plus click-histogram and
    /// population-series CSVs, written as <out>.summary.json, <out>.clicks.csv
    /// and <out>.populations.csv.
    Trajectories {
        #[arg(long)]
        config: PathBuf,
        /// Number of trajectories
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        /// Click-histogram bins over [0, horizon]
        #[arg(long, default_value_t = 200)]
        bins: usize,
        /// Output prefix
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct the concurrence from two measured click-probability
    /// series (CSV with header `t,value`): the two-cavity P_D and the
    /// single-cavity P_D'.
    Reconstruct {
        #[arg(long)]
        pd: PathBuf,
        #[arg(long = "pd-prime")]
        pd_prime: PathBuf,
        /// Detector quantum efficiency
        #[arg(long)]
        eta: f64,
        /// Detector time resolution T
        #[arg(long = "t-bin")]
        t_bin: f64,
        /// Cavity output rate used in P_D' = eta kappa T |beta|^2
        #[arg(long)]
        kappa: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Engine {
    Analytic,
    Ode,
    Lindblad,
}

impl Engine {
    fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Ode => "ode",
            Engine::Lindblad => "lindblad",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Fig2,
    Fig3,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<crate::trajectories::TrajectoryError> for CliError {
    fn from(e: crate::trajectories::TrajectoryError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<observables::ObservableError> for CliError {
    fn from(e: observables::ObservableError) -> Self {
        match e {
            observables::ObservableError::GridMismatch { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cascade-sim: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// CASCADE_SIM_THREADS caps worker parallelism; 0 or unset means automatic.
fn configure_threads() {
    if let Ok(v) = std::env::var("CASCADE_SIM_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    tool_version: &'static str,
    command: &'static str,
    engine: Option<&'static str>,
    config_sha256: String,
    grid: String,
    seed: Option<u64>,
    outputs: Vec<String>,
}

fn sha256_hex(chunks: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for c in chunks {
        hasher.update(c);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        write!(out, "{byte:02x}").unwrap();
    }
    out
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_manifest(base: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let mut path = base.as_os_str().to_owned();
    path.push(".manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    write_file(Path::new(&path), &(text + "\n"))
}

fn read_config(path: &Path) -> Result<(CascadeParams, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&bytes);
    let params = cascade_from_json(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok((params, bytes))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Evolve {
            config,
            engine,
            t_max,
            steps,
            out,
        } => cmd_evolve(&config, engine, t_max, steps, &out),
        Command::Figure { which, config, out } => cmd_figure(which, config.as_deref(), &out),
        Command::Trajectories {
            config,
            n,
            seed,
            horizon,
            bins,
            out,
        } => cmd_trajectories(&config, n, seed, horizon, bins, &out),
        Command::Reconstruct {
            pd,
            pd_prime,
            eta,
            t_bin,
            kappa,
            out,
        } => cmd_reconstruct(&pd, &pd_prime, eta, t_bin, kappa, &out),
    }
}

const EVOLVE_HEADER: &str = "t,re_alpha,im_alpha,re_beta,im_beta,re_gamma,im_gamma,re_delta,im_delta,prob_a,prob_b,prob_c,prob_d,prob_e";

fn evolve_row(out: &mut String, s: &AmplitudeState) {
    let pops = s.populations();
    writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        s.t,
        s.alpha.re,
        s.alpha.im,
        s.beta.re,
        s.beta.im,
        s.gamma.re,
        s.gamma.im,
        s.delta.re,
        s.delta.im,
        pops[0],
        pops[1],
        pops[2],
        pops[3],
        pops[4],
    )
    .unwrap();
}

fn cmd_evolve(
    config: &Path,
    engine: Engine,
    t_max: f64,
    steps: usize,
    out: &Path,
) -> Result<(), CliError> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(CliError::Usage(format!(
            "--t-max must be positive, got {t_max}"
        )));
    }
    if steps < 2 {
        return Err(CliError::Usage(format!(
            "--steps must be at least 2, got {steps}"
        )));
    }
    let (params, config_bytes) = read_config(config)?;
    let grid = linspace(0.0, t_max, steps);
    let mut text = String::from(EVOLVE_HEADER);
    text.push('\n');
    match engine {
        Engine::Analytic => {
            for &t in &grid {
                evolve_row(&mut text, &analytic::amplitudes_general(&params, t));
            }
        }
        Engine::Ode => {
            let states = ode::integrate(
                &params,
                &grid,
                &AmplitudeState::initial(),
                &IntegratorConfig::default(),
            )?;
            for s in &states {
                evolve_row(&mut text, s);
            }
        }
        Engine::Lindblad => {
            let rho0 = DensityMatrix5::basis_state(basis::ATOM_A);
            let rhos = evolve_master(&params, &grid, &rho0, &IntegratorConfig::default())?;
            for (rho, &t) in rhos.iter().zip(&grid) {
                let p = rho.populations();
                writeln!(
                    text,
                    "{t},NaN,NaN,NaN,NaN,NaN,NaN,NaN,NaN,{},{},{},{},{}",
                    p[0], p[1], p[2], p[3], p[4]
                )
                .unwrap();
            }
        }
    }
    write_file(out, &text)?;
    write_manifest(
        out,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "evolve",
            engine: Some(engine.name()),
            config_sha256: sha256_hex(&[&config_bytes]),
            grid: format!("linspace(0,{t_max},{steps})"),
            seed: None,
            outputs: vec![out.display().to_string()],
        },
    )
}

/// The reference parameter set used by the figures when no config is given.
fn figure_default_params() -> CascadeParams {
    let s = SubsystemParams::new(5.0, 0.9, 0.1, 0.2, 0.1).expect("valid defaults");
    CascadeParams::equal(s, 0.0).expect("valid defaults")
}

fn without_atom(b: &SubsystemParams) -> SubsystemParams {
    SubsystemParams::new(0.0, b.kappa(), b.kappa_loss(), b.gamma(), b.delta()).expect("valid")
}

fn without_cavity(b: &SubsystemParams) -> SubsystemParams {
    SubsystemParams::new(b.g(), 0.0, 0.0, b.gamma(), b.delta()).expect("valid")
}

fn cmd_figure(which: Which, config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let (params, config_bytes) = match config {
        Some(path) => read_config(path)?,
        None => {
            let p = figure_default_params();
            (p, serde_json::to_vec(&p).expect("params serialize"))
        }
    };
    let phi = params.phi();
    let gb0 = CascadeParams::new(*params.a(), without_atom(params.b()), phi).expect("valid");
    let mut text = String::from("t,value,variant\n");
    let grid_desc;
    match which {
        Which::Fig2 => {
            // interference term 2 Re[beta* delta e^{-i phi}] for the full
            // system and for no atom in the second cavity
            let grid = linspace(0.0, 10.0, 1001);
            grid_desc = "fig2:linspace(0,10,1001)";
            for (p, variant) in [(&params, "full"), (&gb0, "gb0")] {
                for &t in &grid {
                    let s = analytic::amplitudes_general(p, t);
                    writeln!(
                        text,
                        "{t},{},{variant}",
                        observables::interference_term(&s, phi)
                    )
                    .unwrap();
                }
            }
        }
        Which::Fig3 => {
            // radiated-mode amplitude envelope zeta(t) sqrt(p_rad(inf)/kappa)
            // = sqrt(<J1^dag J1>(t)/kappa_a)
            let grid = linspace(0.0, 20.0, 2001);
            grid_desc = "fig3:linspace(0,20,2001)";
            let kb0 =
                CascadeParams::new(*params.a(), without_cavity(params.b()), phi).expect("valid");
            let kappa = params.a().kappa();
            if kappa <= 0.0 {
                return Err(CliError::Usage(
                    "fig3 needs a nonzero cavity output rate kappa_a".into(),
                ));
            }
            for (p, variant) in [(&params, "full"), (&gb0, "gb0"), (&kb0, "kb0")] {
                for &t in &grid {
                    let s = analytic::amplitudes_general(p, t);
                    let value = (observables::emission_flux(p, &s) / kappa).sqrt();
                    writeln!(text, "{t},{value},{variant}").unwrap();
                }
            }
        }
    }
    write_file(out, &text)?;
    write_manifest(
        out,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "figure",
            engine: Some("analytic"),
            config_sha256: sha256_hex(&[&config_bytes]),
            grid: grid_desc.to_string(),
            seed: None,
            outputs: vec![out.display().to_string()],
        },
    )
}

#[derive(Serialize)]
struct TrajectorySummaryOut {
    n_traj: usize,
    base_seed: u64,
    horizon: f64,
    histogram_bins: usize,
    /// Per-channel jump counts in the fixed order 1..=5.
    channel_counts: [u64; 5],
    no_jump_count: u64,
    /// Channel-1 fraction: the Monte Carlo estimate of p_rad(infinity).
    p_rad_estimate: f64,
    p_rad_std_error: f64,
}

fn cmd_trajectories(
    config: &Path,
    n: usize,
    seed: u64,
    horizon: f64,
    bins: usize,
    out: &Path,
) -> Result<(), CliError> {
    if n < 1 {
        return Err(CliError::Usage("--n must be at least 1".into()));
    }
    if bins < 1 {
        return Err(CliError::Usage("--bins must be at least 1".into()));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(CliError::Usage(format!(
            "--horizon must be positive, got {horizon}"
        )));
    }
    let (params, config_bytes) = read_config(config)?;
    let mut cfg = EnsembleConfig::new(horizon, n, seed);
    cfg.histogram_bins = bins;
    let summary = run_ensemble(&params, &cfg)?;

    let p_hat = summary.channel_fraction(JumpChannel::CavityOutput);
    let out_summary = TrajectorySummaryOut {
        n_traj: summary.n_traj,
        base_seed: seed,
        horizon,
        histogram_bins: bins,
        channel_counts: summary.channel_counts,
        no_jump_count: summary.no_jump_count,
        p_rad_estimate: p_hat,
        p_rad_std_error: (p_hat * (1.0 - p_hat) / n as f64).sqrt(),
    };

    let prefix = out.as_os_str().to_owned();
    let with_suffix = |suffix: &str| {
        let mut p = prefix.clone();
        p.push(suffix);
        PathBuf::from(p)
    };
    let summary_path = with_suffix(".summary.json");
    let clicks_path = with_suffix(".clicks.csv");
    let pops_path = with_suffix(".populations.csv");

    let text = serde_json::to_string_pretty(&out_summary).expect("summary serializes");
    write_file(&summary_path, &(text + "\n"))?;

    let mut clicks = String::from("bin_lo,bin_hi,count\n");
    let width = horizon / bins as f64;
    for (i, &count) in summary.click_histogram.iter().enumerate() {
        writeln!(
            clicks,
            "{},{},{count}",
            i as f64 * width,
            (i + 1) as f64 * width
        )
        .unwrap();
    }
    write_file(&clicks_path, &clicks)?;

    let mut pops = String::from("t,pop_a,pop_b,pop_c,pop_d,pop_e\n");
    for (t, row) in summary.t_grid.iter().zip(&summary.population_series) {
        writeln!(
            pops,
            "{t},{},{},{},{},{}",
            row[0], row[1], row[2], row[3], row[4]
        )
        .unwrap();
    }
    write_file(&pops_path, &pops)?;

    write_manifest(
        out,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "trajectories",
            engine: Some("quantum-jump"),
            config_sha256: sha256_hex(&[&config_bytes]),
            grid: format!("horizon={horizon},bins={bins}"),
            seed: Some(seed),
            outputs: vec![
                summary_path.display().to_string(),
                clicks_path.display().to_string(),
                pops_path.display().to_string(),
            ],
        },
    )
}

/// Parse a two-column CSV with header `t,value`.
fn read_series(path: &Path) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == "t,value" => {}
        other => {
            return Err(CliError::Usage(format!(
                "{}: expected header `t,value`, got {:?}",
                path.display(),
                other.unwrap_or("")
            )));
        }
    }
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.splitn(2, ',');
        let parse = |s: Option<&str>| {
            s.and_then(|x| x.trim().parse::<f64>().ok()).ok_or_else(|| {
                CliError::Usage(format!(
                    "{}: bad row at line {}",
                    path.display(),
                    lineno + 2
                ))
            })
        };
        ts.push(parse(parts.next())?);
        vs.push(parse(parts.next())?);
    }
    Ok((ts, vs))
}

fn cmd_reconstruct(
    pd_path: &Path,
    pd_prime_path: &Path,
    eta: f64,
    t_bin: f64,
    kappa: f64,
    out: &Path,
) -> Result<(), CliError> {
    let det = DetectorConfig::new(eta, t_bin).map_err(|e| CliError::Usage(e.to_string()))?;
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(CliError::Usage(format!(
            "--kappa must be positive, got {kappa}"
        )));
    }
    let pd_bytes = std::fs::read(pd_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", pd_path.display())))?;
    let pdp_bytes = std::fs::read(pd_prime_path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", pd_prime_path.display())))?;
    let (t_pd, pd) = read_series(pd_path)?;
    let (t_pdp, pd_prime) = read_series(pd_prime_path)?;
    if t_pd != t_pdp {
        return Err(CliError::Usage(format!(
            "time grids of {} and {} do not match",
            pd_path.display(),
            pd_prime_path.display()
        )));
    }
    let points =
        observables::reconstruct_concurrence(&pd, &pd_prime, &det, kappa, DEFAULT_NOISE_FLOOR)?;
    let mut text = String::from("t,beta_abs,delta_abs,concurrence_est,flag\n");
    for (t, p) in t_pd.iter().zip(&points) {
        let flag = match p.flag {
            ReconstructionFlag::Ok => "ok",
            ReconstructionFlag::RegimeViolation => "regime",
            ReconstructionFlag::BelowFloor => "undefined",
        };
        writeln!(
            text,
            "{t},{},{},{},{flag}",
            p.beta_abs, p.delta_abs, p.concurrence
        )
        .unwrap();
    }
    write_file(out, &text)?;
    write_manifest(
        out,
        &RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "reconstruct",
            engine: None,
            config_sha256: sha256_hex(&[&pd_bytes, &pdp_bytes]),
            grid: format!("points={}", t_pd.len()),
            seed: None,
            outputs: vec![out.display().to_string()],
        },
    )
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use jeans_lab_cli::config::{EquivalenceSpec, FamilyChoice, ProfileSpec};
use jeans_lab_cli::{run, CliError, Command, RunConfig};

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum ProfileKind {
    Homogeneous,
    Cosine,
    SquareWave,
}

/// Blowup pipeline for the sourced Euler-Poisson system. Every flag overrides
/// the matching field of the JSON configuration.
#[derive(Parser, Debug)]
#[command(name = "jeans-lab", version, about, allow_negative_numbers = true)]
struct Cli {
    /// Subcommand; taken from the configuration when omitted.
    #[arg(value_enum)]
    command: Option<Command>,

    /// JSON run configuration, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    k_tilde: Option<f64>,
    /// Sets K̃ from the equation-of-state root ι³.
    #[arg(long)]
    iota3: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    a_time: Option<f64>,
    /// Accept ι³ above the certified range.
    #[arg(long)]
    force: bool,

    /// Contrast cap of the reference ODE.
    #[arg(long)]
    f_cap: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,

    /// Built-in initial data for `simulate`.
    #[arg(long, value_enum)]
    profile: Option<ProfileKind>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    sharpness: Option<f64>,
    /// CSV with columns zeta,d,v on [0,1).
    #[arg(long)]
    profile_table: Option<PathBuf>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    c_ode: Option<f64>,
    /// Stop the PDE once the reference contrast reaches this value.
    #[arg(long)]
    f_stop: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,

    /// Exact-solution family for `residuals`.
    #[arg(long, value_enum)]
    family: Option<FamilyChoice>,
    #[arg(long, value_delimiter = ',')]
    times: Option<Vec<f64>>,
    #[arg(long)]
    points: Option<usize>,
    /// Finite-difference step of the residual stencils.
    #[arg(long)]
    h: Option<f64>,

    /// K̃ values for `iota`.
    #[arg(long, value_delimiter = ',')]
    k_values: Option<Vec<f64>>,

    /// Sandwich samples for `fuchsian-check`.
    #[arg(long)]
    samples: Option<usize>,
    /// Fixed ball radius instead of the search.
    #[arg(long)]
    r_tilde: Option<f64>,
    /// Also measure the PDE–Fuchsian defect around this time.
    #[arg(long)]
    equivalence_at: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn build_config(cli: Cli) -> Result<RunConfig, CliError> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => {
            let Some(cmd) = cli.command else {
                return Err(CliError::Usage("a subcommand or --config is required".into()));
            };
            RunConfig { command: cmd, ..Default::default() }
        }
    };
    set(&mut c.command, cli.command);
    set(&mut c.output_dir, cli.out);
    set(&mut c.seed, cli.seed);
    set(&mut c.params.k_tilde, cli.k_tilde);
    if cli.k_tilde.is_some() {
        c.iota3 = None;
    }
    if cli.iota3.is_some() {
        c.iota3 = cli.iota3;
    }
    set(&mut c.params.beta, cli.beta);
    set(&mut c.params.gamma, cli.gamma);
    set(&mut c.params.lambda, cli.lambda);
    set(&mut c.params.a_time, cli.a_time);
    c.params.force |= cli.force;
    set(&mut c.f_cap, cli.f_cap);
    set(&mut c.tolerances.rel_tol, cli.rel_tol);
    set(&mut c.tolerances.abs_tol, cli.abs_tol);

    let eps = cli.eps.or(c.profile.amplitude()).unwrap_or(1e-3);
    match (cli.profile, cli.profile_table) {
        (Some(_), Some(_)) => return Err(CliError::Usage("--profile and --profile-table are exclusive".into())),
        (Some(ProfileKind::Homogeneous), None) => c.profile = ProfileSpec::Homogeneous,
        (Some(ProfileKind::Cosine), None) => c.profile = ProfileSpec::Cosine { eps },
        (Some(ProfileKind::SquareWave), None) => c.profile = ProfileSpec::SquareWave { eps, sharpness: cli.sharpness.unwrap_or(3.0) },
        (None, Some(path)) => c.profile = ProfileSpec::Table { path },
        (None, None) => match &mut c.profile {
            ProfileSpec::Cosine { eps: e } => set(e, cli.eps),
            ProfileSpec::SquareWave { eps: e, sharpness } => {
                set(e, cli.eps);
                set(sharpness, cli.sharpness);
            }
            _ => {}
        },
    }
    set(&mut c.grid, cli.grid);
    set(&mut c.evolve.cfl, cli.cfl);
    set(&mut c.evolve.c_ode, cli.c_ode);
    set(&mut c.evolve.f_stop, cli.f_stop);
    if cli.t_end.is_some() {
        c.evolve.t_end = cli.t_end;
    }
    set(&mut c.evolve.snapshot_times, cli.snapshot_times);

    set(&mut c.residuals.family, cli.family);
    set(&mut c.residuals.times, cli.times);
    set(&mut c.residuals.points, cli.points);
    set(&mut c.residuals.h, cli.h);
    set(&mut c.k_values, cli.k_values);
    set(&mut c.check.samples, cli.samples);
    if cli.r_tilde.is_some() {
        c.check.r_tilde = cli.r_tilde;
    }
    if let Some(t) = cli.equivalence_at {
        c.equivalence = Some(EquivalenceSpec { t_centre: t, ..Default::default() });
    }
    Ok(c)
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let config = match build_config(Cli::parse()) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    match run(&config) {
        Ok(outcome) => {
            for v in &outcome.summary.verdicts {
                println!("{} {}: {}", if v.holds { "PASS" } else { "FAIL" }, v.name, v.detail);
            }
            println!("artifacts in {}", config.output_dir.display());
            if outcome.summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => fail(e),
    }
}

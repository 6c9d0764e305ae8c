//! `kinmix`: relax traffic mixtures to equilibrium, sweep fundamental diagrams
//! and query the closed-form free-phase equilibria.

mod output;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kinmix::diagrams::{default_scatter, run_sweep, uniform_grid, SweepMode, SweepSpec};
use kinmix::oracle::{critical_space, free_phase_equilibrium, max_flux};
use kinmix::*;

use output::{num, write_diagram, write_scatter, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "kinmix", version, about = "Kinetic models of heterogeneous traffic mixtures")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Flags override the config file.
#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON configuration document with `model` and `numerics` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent. A manifest is written next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    t_max: Option<f64>,
    /// Fixed time step instead of 0.5 / (eta * rho).
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    gamma: Option<f64>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    /// Number of equispaced car speed classes.
    #[arg(long, global = true)]
    nc: Option<usize>,
    /// Number of truck speed classes (a prefix of the car lattice).
    #[arg(long, global = true)]
    nt: Option<usize>,
    /// Top car speed, km/h.
    #[arg(long, global = true)]
    v_max: Option<f64>,
    /// Explicit car lattice, e.g. `0,50,80,100`.
    #[arg(long, global = true, value_delimiter = ',')]
    car_speeds: Option<Vec<f64>>,
    /// Car length, km.
    #[arg(long, global = true)]
    car_length: Option<f64>,
    /// Truck length, km.
    #[arg(long, global = true)]
    truck_length: Option<f64>,
    /// Intervals of the occupancy grid.
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Random mixtures per occupancy value.
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Relax one mixture to equilibrium and write its trajectory.
    Relax(RelaxArgs),
    /// Sweep occupancy and write one diagram point per mixture.
    Sweep(SweepArgs),
    /// Closed-form critical occupancy, maximum flux and free-phase equilibrium.
    Oracle(OracleArgs),
    /// Rerun the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
struct RelaxArgs {
    /// Car density (veh/km, or normalized with --single).
    #[arg(long, allow_negative_numbers = true)]
    rho_c: f64,
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.0)]
    rho_t: f64,
    /// One population with jam density 1 and `--n` classes up to `--v-max` (default 1).
    #[arg(long)]
    single: bool,
    /// Speed classes of the single population.
    #[arg(long)]
    n: Option<usize>,
    /// Freeze the loss term at the nominal density.
    #[arg(long)]
    naive: bool,
    /// Start from `rho * (1 - perturb)`.
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
    /// Write every n-th step (the final state is always written).
    #[arg(long, default_value_t = 1)]
    every: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Mode {
    Table2,
    Random,
    SinglePop,
    AblationSpeeds,
    AblationLengths,
    Macroscopic,
}

impl From<Mode> for SweepMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Table2 => SweepMode::Table2,
            Mode::Random => SweepMode::Random,
            Mode::SinglePop => SweepMode::SinglePop,
            Mode::AblationSpeeds => SweepMode::AblationSpeeds,
            Mode::AblationLengths => SweepMode::AblationLengths,
            Mode::Macroscopic => SweepMode::Macroscopic,
        }
    }
}

/// Intended plot; every diagram is derivable from the same columns.
#[derive(Clone, Copy, Debug, ValueEnum)]
enum Diagram {
    FluxSpace,
    FluxDensity,
    SpeedDensity,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, value_enum, default_value = "flux-density")]
    diagram: Diagram,
    /// Also write per-bin scatter statistics to this file.
    #[arg(long)]
    scatter: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long, allow_negative_numbers = true)]
    rho_c: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    rho_t: Option<f64>,
    /// Occupancy fixing `R`; defaults to the occupancy of the densities.
    #[arg(long, allow_negative_numbers = true)]
    s: Option<f64>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    NotConverged(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Validation(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(m) => write!(f, "invalid input: {m}"),
            Failure::NotConverged(m) => write!(f, "not converged: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::NumericalFailure { .. } => Failure::Numerical(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match dispatch(cli, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kinmix: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli, args: Vec<String>) -> Result<(), Failure> {
    if let Command::Replay(replay) = &cli.command {
        let manifest = RunManifest::read(&replay.manifest)
            .map_err(|e| Failure::Validation(format!("{}: {e}", replay.manifest.display())))?;
        let mut argv = vec!["kinmix".to_string()];
        argv.extend(manifest.args.iter().cloned());
        let mut recorded = Cli::try_parse_from(&argv).map_err(|e| Failure::Validation(e.to_string()))?;
        if matches!(recorded.command, Command::Replay(_)) {
            return Err(Failure::Validation("a manifest cannot record a replay".into()));
        }
        let mut recorded_args = manifest.args.clone();
        if let Some(out) = cli.common.out {
            recorded.common.out = Some(out.clone());
            recorded_args = with_out(&recorded_args, &out);
        }
        return run(recorded, recorded_args, Some(manifest.config));
    }
    run(cli, args, None)
}

/// `args` with `--out` replaced by `out`.
fn with_out(args: &[String], out: &std::path::Path) -> Vec<String> {
    let mut result = Vec::with_capacity(args.len() + 2);
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--out" {
            skip = true;
        } else if !a.starts_with("--out=") {
            result.push(a.clone());
        }
    }
    result.push("--out".into());
    result.push(out.display().to_string());
    result
}

fn run(cli: Cli, args: Vec<String>, snapshot: Option<Config>) -> Result<(), Failure> {
    let start = Instant::now();
    let config = match snapshot {
        Some(config) => config,
        None => build_config(&cli)?,
    };
    let common = &cli.common;
    let (name, outputs, result) = match &cli.command {
        Command::Relax(a) => ("relax", vec![], cmd_relax(&config, common, a)),
        Command::Sweep(a) => ("sweep", a.scatter.iter().cloned().collect(), cmd_sweep(&config, common, a)),
        Command::Oracle(a) => ("oracle", vec![], cmd_oracle(&config, common, a)),
        Command::Replay(_) => unreachable!("replays are resolved before running"),
    };
    // a non-converged relaxation still leaves a trajectory worth reproducing
    if let (Some(out), Ok(()) | Err(Failure::NotConverged(_))) = (&common.out, &result) {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: name.into(),
            args,
            seed: config.numerics.seed,
            config,
            outputs: std::iter::once(out.clone()).chain(outputs).collect(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        let path = manifest.write(out)?;
        log::info!("manifest written to {}", path.display());
    }
    result
}

/// Default reference mixture, then the config file, then flag overrides.
fn build_config(cli: &Cli) -> Result<Config, Failure> {
    let c = &cli.common;
    let mut config = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
            load_config(&text)?.0
        }
        None => Config::default(),
    };

    if let Command::Relax(RelaxArgs { single: true, n, .. }) = &cli.command {
        let classes = n.or(c.nc).unwrap_or(2);
        config.model = ModelParams::single_population(classes, c.v_max.unwrap_or(1.0), 1.0)?;
    } else {
        apply_lattice_overrides(&mut config.model, c)?;
    }

    let model = &mut config.model;
    if let Some(a) = c.alpha {
        model.alpha = a;
    }
    if let Some(g) = c.gamma {
        model.gamma = g;
    }
    if let Some(e) = c.eta {
        model.eta = e;
    }
    for (idx, length) in [(0, c.car_length), (1, c.truck_length)] {
        if let Some(l) = length {
            let pop = model
                .populations
                .get_mut(idx)
                .ok_or_else(|| Failure::Validation(format!("no population {} to set the length of", idx + 1)))?;
            *pop = PopulationSpec::new(pop.name.clone(), l, pop.lattice.clone())?;
        }
    }
    for w in model.validate()? {
        log::warn!("{w}");
    }

    let numerics = &mut config.numerics;
    if let Some(seed) = c.seed {
        numerics.seed = seed;
    }
    if let Some(tol) = c.tol {
        numerics.tol = tol;
    }
    if let Some(t_max) = c.t_max {
        numerics.t_max = t_max;
    }
    if c.dt.is_some() {
        numerics.dt = c.dt;
    }
    if let Some(steps) = c.steps {
        numerics.s_steps = steps;
    }
    if let Some(samples) = c.samples {
        numerics.samples_per_s = samples;
    }
    numerics.validate()?;
    Ok(config)
}

fn apply_lattice_overrides(model: &mut ModelParams, c: &Common) -> Result<(), Failure> {
    let cars = &model.populations[0].lattice;
    let new_cars = match (&c.car_speeds, c.nc, c.v_max) {
        (Some(speeds), None, None) => Some(SpeedLattice::new(speeds.clone())?),
        (Some(_), _, _) => return Err(Failure::Validation("--car-speeds excludes --nc and --v-max".into())),
        (None, None, None) => None,
        (None, nc, v_max) => Some(SpeedLattice::equispaced(nc.unwrap_or(cars.len()), v_max.unwrap_or(cars.v_max()))?),
    };
    let changed = new_cars.is_some();
    if let Some(lattice) = new_cars {
        model.populations[0].lattice = lattice;
    }
    if let Some(trucks) = model.populations.get(1) {
        if changed || c.nt.is_some() {
            let n_t = c.nt.unwrap_or(trucks.lattice.len());
            model.populations[1].lattice = model.populations[0].lattice.prefix(n_t)?;
        }
    } else if c.nt.is_some() {
        return Err(Failure::Validation("--nt needs a second population".into()));
    }
    Ok(())
}

fn open_output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_relax(config: &Config, common: &Common, a: &RelaxArgs) -> Result<(), Failure> {
    let model = &config.model;
    let pops = &model.populations;
    let nominal: Vec<f64> = match pops.len() {
        1 if a.rho_t != 0.0 => return Err(Failure::Validation("--rho-t needs a second population".into())),
        1 => vec![a.rho_c],
        _ => vec![a.rho_c, a.rho_t],
    };
    if nominal.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Failure::Validation(format!("densities must be non-negative, got {nominal:?}")));
    }
    if !admissible(&nominal, pops) {
        return Err(Failure::Validation(format!("occupancy {} exceeds 1", occupancy(&nominal, pops))));
    }
    if !(0.0..1.0).contains(&a.perturb) {
        return Err(Failure::Validation(format!("--perturb must lie in [0, 1), got {}", a.perturb)));
    }
    if a.every == 0 {
        return Err(Failure::Validation("--every must be positive".into()));
    }

    let masses: Vec<f64> = nominal.iter().map(|r| r * (1.0 - a.perturb)).collect();
    let classes: Vec<usize> = pops.iter().map(|p| p.lattice.len()).collect();
    let initial = MixtureState::uniform(&masses, &classes)?;
    let system = if a.naive {
        let rho = nominal.iter().sum();
        KineticSystem::for_densities(model, &nominal, LossForm::Naive { rho })?
    } else {
        KineticSystem::for_densities(model, &masses, LossForm::WellBalanced)?
    };
    let lattices: Vec<&SpeedLattice> = pops.iter().map(|p| &p.lattice).collect();

    let mut w = open_output(&common.out)?;
    let mut header = vec!["t".to_string(), "residual".to_string()];
    for p in pops {
        header.extend((1..=p.lattice.len()).map(|j| format!("f_{}_{j}", p.name)));
    }
    for p in pops {
        header.push(format!("rho_{}", p.name));
        header.push(format!("q_{}", p.name));
    }
    header.push("q_total".into());
    writeln!(w, "{}", header.join(","))?;

    let row = |t: f64, state: &MixtureState, residual: f64| -> String {
        let mut cells = vec![num(t), num(residual)];
        cells.extend(state.as_slices().iter().flatten().map(|&x| num(x)));
        match moments(state, &lattices) {
            Ok(m) => {
                for pm in &m.populations {
                    cells.push(num(pm.rho));
                    cells.push(num(pm.q));
                }
                cells.push(num(m.total.q));
            }
            Err(_) => cells.extend(std::iter::repeat_n("nan".to_string(), 2 * pops.len() + 1)),
        }
        cells.join(",")
    };

    let mut rows = Vec::new();
    let mut last = None;
    let mut count = 0usize;
    let result = kinmix::relax_with(&system, &initial, &config.numerics, |t, state, residual| {
        if count.is_multiple_of(a.every) {
            rows.push(row(t, state, residual));
            last = None;
        } else {
            last = Some(row(t, state, residual));
        }
        count += 1;
    });
    rows.extend(last);
    for r in &rows {
        writeln!(w, "{r}")?;
    }
    w.flush()?;

    let res = result?;
    let final_dist: Vec<String> = res.final_state.as_slices().iter().map(|f| format!("{f:?}")).collect();
    eprintln!(
        "converged: {}, residual {:e}, t = {}, steps {}, mass drift {:?}, final {}",
        res.converged,
        res.residual,
        res.t_final,
        res.steps,
        res.mass_drift,
        final_dist.join(" | ")
    );
    if res.converged {
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "residual {:e} after t = {}, mass drift {:?}",
            res.residual, res.t_final, res.mass_drift
        )))
    }
}

fn cmd_sweep(config: &Config, common: &Common, a: &SweepArgs) -> Result<(), Failure> {
    let numerics = &config.numerics;
    let spec = SweepSpec {
        mode: a.mode.into(),
        s_grid: uniform_grid(numerics.s_steps),
        samples_per_s: numerics.samples_per_s,
        seed: numerics.seed,
        gamma: None,
        alpha: None,
    };
    if config.model.populations.len() < 2 && spec.mode != SweepMode::SinglePop {
        return Err(Failure::Validation(format!("mode {} needs two populations", spec.mode.as_str())));
    }
    log::info!("sweep {} for a {:?} diagram", spec.mode.as_str(), a.diagram);
    let points = run_sweep(&spec, &config.model, numerics, common.jobs);
    let unconverged = points.iter().filter(|p| !p.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} of {} points did not converge", points.len());
    }
    write_diagram(open_output(&common.out)?, &points)?;
    if let Some(path) = &a.scatter {
        let report = default_scatter(&points, &spec.effective_params(&config.model));
        for (lo, phase, n) in &report.skipped {
            log::info!("bin at {lo} ({phase:?}) skipped with {n} point(s)");
        }
        write_scatter(BufWriter::new(File::create(path)?), &report)?;
    }
    Ok(())
}

fn cmd_oracle(config: &Config, common: &Common, a: &OracleArgs) -> Result<(), Failure> {
    let model = &config.model;
    let pops = &model.populations;
    let cars = &pops[0];
    let s_c = critical_space(model.gamma);
    let mut lines = vec![
        "quantity,value".to_string(),
        format!("s_c,{}", num(s_c)),
        format!("q_max,{}", num(max_flux(model.gamma, cars.lattice.v_max(), cars.rho_max))),
    ];
    if a.rho_c.is_some() || a.rho_t.is_some() || a.s.is_some() {
        if model.alpha != 1.0 {
            return Err(Failure::Validation(format!("the closed form needs alpha = 1, got {}", model.alpha)));
        }
        let trucks = pops.get(1).ok_or_else(|| Failure::Validation("the oracle needs two populations".into()))?;
        let (rho_c, rho_t) = (a.rho_c.unwrap_or(0.0), a.rho_t.unwrap_or(0.0));
        if !(rho_c >= 0.0 && rho_t >= 0.0) {
            return Err(Failure::Validation(format!("densities must be non-negative, got ({rho_c}, {rho_t})")));
        }
        let s = a.s.unwrap_or_else(|| occupancy(&[rho_c, rho_t], pops));
        let r = 1.0 - TransitionProbabilities::at_occupancy(s, model.alpha, model.gamma)?.p;
        let eq = free_phase_equilibrium(rho_c, rho_t, &cars.lattice, &trucks.lattice, r)?;
        lines.push(format!("s,{}", num(s)));
        lines.push(format!("R,{}", num(r)));
        lines.push(format!("valid,{}", eq.valid));
        if eq.valid {
            lines.extend(eq.f_cars.iter().enumerate().map(|(j, f)| format!("f_{}_{},{}", cars.name, j + 1, num(*f))));
            lines.extend(eq.f_trucks.iter().enumerate().map(|(j, f)| format!("f_{}_{},{}", trucks.name, j + 1, num(*f))));
            lines.push(format!("flux,{}", num(eq.flux)));
        } else {
            log::warn!("R = {r} > 1/2: outside the free phase, no closed-form equilibrium");
            eprintln!("warning: valid=false (R = {r} > 1/2)");
        }
    }
    let mut w = open_output(&common.out)?;
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

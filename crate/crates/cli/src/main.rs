mod table;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mrme::estimation::{bootstrap, fit, godambe_variance, BootstrapResult, FitOptions, FitResult, GodambeResult, Method};
use mrme::study::{acf, preset, run_study, StudyReport, StudySpec, PRESET_NAMES};
use mrme::{
    g_density, h_density, occupation_density, read_track, regular_grid, resting_atom, round_track, simulate_mrme, tau,
    transition_density, write_track_to, Error, IncrementQuery, InitialState, ModelParams, StateKind, Track, TrackFile,
    PARAM_NAMES,
};
use table::{num, Table};

const DEFAULT_SEED: u64 = 1;

#[derive(Parser)]
#[command(
    name = "mrme",
    version,
    about = "Simulate and fit the moving-resting movement model with measurement error",
    long_about = "Simulate and fit the moving-resting movement model with measurement error.\n\n\
        Times are read as hours and lengths as kilometres by convention. Units are labels only: \
        no conversion is ever applied, so rates come out per unit of the input time column."
)]
struct Cli {
    /// Seed for every random draw; a fixed seed makes the output reproducible.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for replicate loops (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write the machine-readable result here (JSON, or CSV for tracks).
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,

    /// What to print on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a noisy track on a regular grid and write it as CSV.
    Simulate(SimulateArgs),
    /// Fit the model to a track by maximum (composite) likelihood.
    Fit(FitArgs),
    /// Fit, then estimate standard errors by parametric bootstrap.
    Bootstrap(BootstrapArgs),
    /// Evaluate model densities for every pair of start and end states.
    Density(DensityArgs),
    /// Run a simulation study from a preset or a TOML config.
    Study(StudyArgs),
    /// Autocorrelation of absolute increments of a long simulated track.
    Acf(AcfArgs),
    /// Round track coordinates to a grid.
    Round(RoundArgs),
}

#[derive(Args)]
struct ParamArgs {
    /// Rate of leaving the moving state.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    lambda1: f64,
    /// Rate of leaving the resting state.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.5)]
    lambda0: f64,
    /// Brownian volatility while moving.
    #[arg(long, allow_negative_numbers = true, default_value_t = 1.0)]
    sigma: f64,
    /// Standard deviation of the location noise.
    #[arg(long, allow_negative_numbers = true, default_value_t = 0.01)]
    sigma_eps: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<ModelParams, Error> {
        ModelParams::new(self.lambda1, self.lambda0, self.sigma, self.sigma_eps)
    }
}

#[derive(Args)]
struct InputArgs {
    /// Track CSV with columns time,x,y[,...].
    #[arg(long, short)]
    input: PathBuf,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
}

impl InputArgs {
    fn read(&self) -> Result<Track, Error> {
        let mut f = TrackFile::new(&self.input);
        f.has_header = !self.no_header;
        read_track(&f)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StartState {
    Stationary,
    Moving,
    Resting,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Length of the observation period.
    #[arg(long, default_value_t = 500.0)]
    horizon: f64,
    /// Time between observations.
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    /// Spatial dimension.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Round coordinates to this grid after adding noise.
    #[arg(long)]
    rounding: Option<f64>,
    /// State at the first observation.
    #[arg(long, value_enum, default_value_t = StartState::Stationary)]
    initial: StartState,
    /// Also write the hidden state at each observation (CSV: time,state).
    #[arg(long)]
    states: Option<PathBuf>,
}

#[derive(Args)]
struct FitControl {
    /// Objective: twopiece, marginal, or mr (noise-free exact likelihood).
    #[arg(long, short, default_value = "twopiece")]
    method: Method,
    /// Starting values lambda1,lambda0,sigma[,sigma_eps]; default is a moment heuristic.
    #[arg(long, value_delimiter = ',', num_args = 3..=4)]
    init: Option<Vec<f64>>,
    /// Simplex iteration budget.
    #[arg(long, default_value_t = 2000)]
    max_iters: usize,
}

impl FitControl {
    fn options(&self) -> Result<FitOptions, Error> {
        let init = match &self.init {
            None => None,
            Some(v) => {
                let se = match (self.method, v.get(3)) {
                    (Method::NoiseFree, Some(&s)) if s != 0.0 => {
                        return Err(Error::InvalidArgument("--init: the mr method fixes sigma_eps at 0".into()))
                    }
                    (Method::NoiseFree, _) => 0.0,
                    (_, Some(&s)) => s,
                    (_, None) => {
                        return Err(Error::InvalidArgument("--init: sigma_eps is required for this method".into()))
                    }
                };
                Some(ModelParams::new(v[0], v[1], v[2], se)?)
            }
        };
        Ok(FitOptions { method: self.method, init, max_iters: self.max_iters, ..Default::default() })
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    control: FitControl,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    control: FitControl,
    /// Number of simulated replicates.
    #[arg(long, short, default_value_t = 100)]
    replicates: usize,
    /// Also compute the Godambe sandwich variance from the same number of
    /// simulated gradients.
    #[arg(long)]
    godambe: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum DensityKind {
    /// Switching probability over `dt`.
    Tau,
    /// Density of the moving time `w` within `dt`.
    Occupation,
    /// Noise-free increment density over `dt`.
    H,
    /// Noisy increment density over a window `dt` (no preceding gap).
    G,
    /// Noisy increment density over a window `dt` after a gap `gap`.
    Transition,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, value_enum)]
    kind: DensityKind,
    /// Increment vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0")]
    dz: Vec<f64>,
    /// Window length.
    #[arg(long, default_value_t = 1.0)]
    dt: f64,
    /// Time from the state anchor to the window start (transition only).
    #[arg(long, default_value_t = 0.0)]
    gap: f64,
    /// Moving time (occupation only).
    #[arg(long, default_value_t = 0.5)]
    w: f64,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["preset", "config"])))]
struct StudyArgs {
    /// Built-in configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,
    /// TOML file holding one study table, or an array `[[study]]` of them.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the replicate count of every row.
    #[arg(long)]
    replicates: Option<usize>,
    /// Override the bootstrap size of every row.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Run only rows whose label contains this text.
    #[arg(long)]
    only: Option<String>,
    /// Leave per-replicate records out of the JSON report.
    #[arg(long)]
    summary_only: bool,
}

#[derive(Args)]
struct AcfArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 100_000.0)]
    horizon: f64,
    #[arg(long)]
    interval: f64,
    #[arg(long, default_value_t = 2)]
    dim: usize,
}

#[derive(Args)]
struct RoundArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Rounding grid, in length units.
    #[arg(long)]
    grid: f64,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}

type Outcome = Result<u8, Error>;

fn run(cli: &Cli) -> Outcome {
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Simulate(a) => simulate_cmd(cli, a, seed),
        Command::Fit(a) => fit_cmd(cli, a),
        Command::Bootstrap(a) => bootstrap_cmd(cli, a, seed),
        Command::Density(a) => density_cmd(cli, a),
        Command::Study(a) => study_cmd(cli, a),
        Command::Acf(a) => acf_cmd(cli, a, seed),
        Command::Round(a) => round_cmd(cli, a),
    }
}

/// Send `value` to `--output` as JSON and print the table (or the JSON) on
/// stdout.
fn emit<T: Serialize>(cli: &Cli, value: &T, table: &str) -> Result<(), Error> {
    let json = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    if let Some(path) = &cli.output {
        fs::write(path, &json)?;
    }
    let mut out = io::stdout().lock();
    match cli.format {
        Format::Table => out.write_all(table.as_bytes())?,
        Format::Json => out.write_all(json.as_bytes())?,
    }
    Ok(())
}

/// Tracks go out as CSV; without `--output` the CSV itself is printed.
fn emit_track(cli: &Cli, track: &Track, summary: &str) -> Result<(), Error> {
    match &cli.output {
        Some(path) => {
            write_track_to(fs::File::create(path)?, track)?;
            io::stdout().lock().write_all(summary.as_bytes())?;
        }
        None => write_track_to(io::stdout().lock(), track)?,
    }
    Ok(())
}

fn zero_increments(t: &Track) -> usize {
    (1..t.len()).filter(|&k| t.increment(k).iter().all(|&x| x == 0.0)).count()
}

fn track_summary(t: &Track, path: Option<&Path>) -> String {
    let mut tab = Table::new(["track", "value"]);
    if let Some(p) = path {
        tab.row(["file".to_string(), p.display().to_string()]);
    }
    tab.row(["points".to_string(), t.len().to_string()]);
    tab.row(["dimension".to_string(), t.dim().to_string()]);
    tab.row(["time span".to_string(), num(t.times()[t.len() - 1] - t.times()[0])]);
    tab.row(["zero increments".to_string(), zero_increments(t).to_string()]);
    tab.render()
}

fn simulate_cmd(cli: &Cli, a: &SimulateArgs, seed: u64) -> Outcome {
    let p = a.params.params()?;
    let times = regular_grid(a.horizon, a.interval)?;
    let init = match a.initial {
        StartState::Stationary => InitialState::Stationary,
        StartState::Moving => InitialState::Fixed(StateKind::Moving),
        StartState::Resting => InitialState::Fixed(StateKind::Resting),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sim = simulate_mrme(&p, &times, a.dim, init, &mut rng)?;
    let track = match a.rounding {
        Some(g) => round_track(&sim.track, g)?,
        None => sim.track,
    };
    if let Some(path) = &a.states {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["time", "state"])?;
        for (t, s) in times.iter().zip(&sim.states) {
            w.write_record([t.to_string(), (*s as u8).to_string()])?;
        }
        w.flush()?;
    }
    emit_track(cli, &track, &track_summary(&track, cli.output.as_deref()))?;
    Ok(0)
}

fn param_table(rows: &[(&str, Vec<f64>)], n: usize) -> String {
    let mut head = vec!["parameter".to_string()];
    head.extend(rows.iter().map(|(h, _)| h.to_string()));
    let mut tab = Table::new(head);
    for (i, name) in PARAM_NAMES.iter().enumerate().take(n) {
        let mut r = vec![name.to_string()];
        r.extend(rows.iter().map(|(_, v)| v.get(i).map_or("-".into(), |&x| num(x))));
        tab.row(r);
    }
    tab.render()
}

fn fit_status(r: &FitResult) -> String {
    format!(
        "method {}  objective {}  converged {}  diverged {}  evaluations {}\n",
        r.method.name(),
        num(r.objective),
        r.converged,
        r.diverged,
        r.n_evals
    )
}

#[derive(Serialize)]
struct FitReport<'a> {
    input: &'a Path,
    n_points: usize,
    dim: usize,
    fit: &'a FitResult,
}

fn fit_cmd(cli: &Cli, a: &FitArgs) -> Outcome {
    let track = a.input.read()?;
    let r = fit(&track, &a.control.options()?)?;
    let n = r.method.n_params();
    let table = param_table(&[("estimate", r.estimate.to_array().to_vec()), ("start", r.init.to_array().to_vec())], n)
        + &fit_status(&r);
    emit(cli, &FitReport { input: &a.input.input, n_points: track.len(), dim: track.dim(), fit: &r }, &table)?;
    if !r.converged {
        eprintln!("warning: the fit did not converge");
        return Ok(3);
    }
    Ok(0)
}

#[derive(Serialize)]
struct BootstrapReport<'a> {
    input: &'a Path,
    fit: &'a FitResult,
    bootstrap: &'a BootstrapResult,
    godambe: Option<&'a GodambeResult>,
}

fn bootstrap_cmd(cli: &Cli, a: &BootstrapArgs, seed: u64) -> Outcome {
    let track = a.input.read()?;
    let opts = a.control.options()?;
    let r = fit(&track, &opts)?;
    if !r.converged {
        return Err(Error::Numerical("the fit to the data did not converge; nothing to bootstrap".into()));
    }
    let b = bootstrap(track.times(), track.dim(), &r.estimate, a.replicates, &opts, seed)?;
    let g = if a.godambe {
        Some(godambe_variance(&track, &r.estimate, a.replicates, &opts, seed.wrapping_add(1 << 40))?)
    } else {
        None
    };
    let n = r.method.n_params();
    let mut cols = vec![
        ("estimate", r.estimate.to_array().to_vec()),
        ("boot se", b.se.to_vec()),
        ("ci 2.5%", b.ci.iter().map(|c| c.0).collect()),
        ("ci 97.5%", b.ci.iter().map(|c| c.1).collect()),
    ];
    if let Some(g) = &g {
        cols.push(("godambe se", g.se.clone()));
    }
    let mut table = param_table(&cols, n) + &fit_status(&r);
    table += &format!("bootstrap replicates {}  failed {}\n", b.n_requested, b.n_failed);
    if b.low_replicates {
        table += "warning: few replicates; standard errors are unreliable\n";
    }
    if b.degraded {
        table += "warning: more than half of the refits failed\n";
    }
    emit(cli, &BootstrapReport { input: &a.input.input, fit: &r, bootstrap: &b, godambe: g.as_ref() }, &table)?;
    Ok(if b.degraded { 3 } else { 0 })
}

#[derive(Serialize)]
struct DensityReport {
    kind: DensityKind,
    params: ModelParams,
    dz: Vec<f64>,
    dt: f64,
    gap: f64,
    w: f64,
    /// Rows are the start state (moving, resting), columns the end state.
    matrix: [[f64; 2]; 2],
    /// Probability mass at `dz = 0` of staying at rest (h only).
    resting_atom: Option<f64>,
}

fn density_cmd(cli: &Cli, a: &DensityArgs) -> Outcome {
    let p = a.params.params()?;
    let states = [StateKind::Moving, StateKind::Resting];
    let mut matrix = [[0.0; 2]; 2];
    for (i, &from) in states.iter().enumerate() {
        for (j, &to) in states.iter().enumerate() {
            matrix[i][j] = match a.kind {
                DensityKind::Tau => tau(from, to, a.dt, p.rates)?,
                DensityKind::Occupation => occupation_density(from, to, a.w, a.dt, p.rates)?,
                DensityKind::H => h_density(from, to, IncrementQuery::new(&a.dz, a.dt)?, &p)?,
                DensityKind::G => g_density(from, to, IncrementQuery::new(&a.dz, a.dt)?, &p)?,
                DensityKind::Transition => transition_density(from, to, &a.dz, a.gap, a.dt, &p)?,
            };
        }
    }
    let atom = (a.kind == DensityKind::H).then(|| resting_atom(a.dt, &p));
    let mut tab = Table::new(["from \\ to", "moving", "resting"]);
    for (i, name) in ["moving", "resting"].iter().enumerate() {
        tab.row([name.to_string(), num(matrix[i][0]), num(matrix[i][1])]);
    }
    let mut text = tab.render();
    if let Some(x) = atom {
        text += &format!("resting atom at dz = 0: {}\n", num(x));
    }
    let report = DensityReport { kind: a.kind, params: p, dz: a.dz.clone(), dt: a.dt, gap: a.gap, w: a.w, matrix, resting_atom: atom };
    emit(cli, &report, &text)?;
    Ok(0)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StudyConfig {
    Many { study: Vec<StudySpec> },
    One(StudySpec),
}

fn load_specs(a: &StudyArgs, seed: Option<u64>) -> Result<Vec<StudySpec>, Error> {
    let mut specs = match (&a.preset, &a.config) {
        (Some(name), _) => preset(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            match toml::from_str::<StudyConfig>(&text) {
                Ok(StudyConfig::Many { study }) => study,
                Ok(StudyConfig::One(s)) => vec![s],
                // Report the single-table error, which is the more specific one.
                Err(_) => vec![toml::from_str::<StudySpec>(&text)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?],
            }
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    if let Some(f) = &a.only {
        specs.retain(|s| s.label.contains(f.as_str()));
        if specs.is_empty() {
            return Err(Error::InvalidArgument(format!("no study row label contains '{f}'")));
        }
    }
    for s in &mut specs {
        if let Some(r) = a.replicates {
            s.replicates = r;
        }
        if let Some(b) = a.bootstrap {
            s.bootstrap = b;
        }
        if let Some(sd) = seed {
            s.seed = sd;
        }
        s.validate()?;
    }
    Ok(specs)
}

fn study_table(reports: &[StudyReport]) -> String {
    let mut tab = Table::new([
        "row", "method", "conv%", "lambda1", "lambda0", "sigma", "sigma_eps", "sd l1", "sd l0", "sd s", "sd se",
    ]);
    let mut extra = Table::new(["row", "method", "ase l1", "ase l0", "ase s", "ase se", "cov l1", "cov l0", "cov s", "cov se"]);
    let mut any_boot = false;
    for r in reports {
        let label = format!("{} {}", r.spec.study, r.spec.label).trim().to_string();
        for s in &r.summaries {
            let mut row = vec![label.clone(), s.method.name().to_string(), format!("{:.1}", s.convergence_pct)];
            row.extend(s.mean.iter().map(|&x| num(x)));
            row.extend(s.sd.iter().map(|&x| num(x)));
            tab.row(row);
            if s.ase.iter().any(|x| !x.is_nan()) {
                any_boot = true;
                let mut row = vec![label.clone(), s.method.name().to_string()];
                row.extend(s.ase.iter().map(|&x| num(x)));
                row.extend(s.coverage_wald.iter().map(|&x| num(x)));
                extra.row(row);
            }
        }
    }
    let mut out = tab.render();
    if any_boot {
        out += "\n";
        out += &extra.render();
    }
    out
}

fn study_cmd(cli: &Cli, a: &StudyArgs) -> Outcome {
    let specs = load_specs(a, cli.seed)?;
    let mut reports = Vec::with_capacity(specs.len());
    for s in &specs {
        let mut r = run_study(s)?;
        if a.summary_only {
            r.replicates.clear();
        }
        reports.push(r);
    }
    emit(cli, &reports, &study_table(&reports))?;
    Ok(0)
}

fn acf_cmd(cli: &Cli, a: &AcfArgs, seed: u64) -> Outcome {
    let p = a.params.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = acf(&p, a.horizon, a.interval, a.dim, &mut rng)?;
    let mut tab = Table::new(["lag", "acf"]);
    tab.row(["1".to_string(), num(r.acf1)]);
    tab.row(["2".to_string(), num(r.acf2)]);
    let text = tab.render() + &format!("increments {}\n", r.n_increments);
    emit(cli, &r, &text)?;
    Ok(0)
}

fn round_cmd(cli: &Cli, a: &RoundArgs) -> Outcome {
    let track = a.input.read()?;
    let rounded = round_track(&track, a.grid)?;
    emit_track(cli, &rounded, &track_summary(&rounded, cli.output.as_deref()))?;
    Ok(0)
}

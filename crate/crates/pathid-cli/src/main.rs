//! Command-line front end: parse setup files, run simulations, sweeps,
//! analyses and graph operations, and emit deterministic line-oriented text.
//!
//! Exit codes: 0 success, 1 usage, 2 parse or validation failure, 3
//! numerically degenerate case (no signal at any order, divergent cavity,
//! vanishing selection).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use pathid::analysis::{
    cavity_transmission, concurrence, equivalent_wavelength, fit_sinusoid, spectral_fringe,
    two_qubit_matrix, SpectroscopyConfig,
};
use pathid::element::Bindings;
use pathid::engine::{
    polarization_degree, postselect, sweep, DetectionPattern, ExperimentSetup,
};
use pathid::fock::{FockState, ModeLabel, Path, PureState};
use pathid::graph::{from_experiment, ghz_feasibility_search, random_network, Feasibility};
use pathid::setup::{parse_pattern, SetupDocument};
use pathid::{sig9, sig9_complex, Error};

#[derive(Parser)]
#[command(name = "pathid", version, about = "Photon-pair network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a setup file and report amplitudes and the detected component
    Simulate(SimulateArgs),
    /// Scan one parameter and tabulate the detection rate
    Sweep(SweepArgs),
    /// Derived quantities from a setup or from closed-form models
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Convert a crystal network to its graph and operate on it
    Graph(GraphArgs),
    /// Search for a graph with d disjoint perfect matchings on n vertices
    Feasibility(FeasibilityArgs),
}

#[derive(Args)]
struct SetupSource {
    /// Setup file to load
    file: PathBuf,
    /// Bind a parameter, repeatable: --set name=value
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Override the truncation order from the file
    #[arg(long)]
    order: Option<u32>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: SetupSource,
    /// Detection pattern, e.g. "a,b" or "a=2:H"; default is one photon on
    /// every detector
    #[arg(long)]
    pattern: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SetupSource,
    /// Parameter to scan
    #[arg(long)]
    param: String,
    #[arg(long, default_value_t = 0.0)]
    start: f64,
    #[arg(long, default_value_t = std::f64::consts::TAU)]
    stop: f64,
    /// Grid points, endpoints included
    #[arg(long, default_value_t = 17)]
    steps: usize,
    #[arg(long)]
    pattern: Option<String>,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Sweep a phase over one period and fit the fringe
    Visibility {
        #[command(flatten)]
        source: SetupSource,
        #[arg(long)]
        param: String,
        /// Sample points over [0, 2pi)
        #[arg(long, default_value_t = 16)]
        steps: usize,
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Degree of polarization of the photon detected on one path
    Dop {
        #[command(flatten)]
        source: SetupSource,
        #[arg(long)]
        path: String,
    },
    /// Concurrence of a path-encoded photon pair in the detected state
    Concurrence {
        #[command(flatten)]
        source: SetupSource,
        /// Two paths carrying the first photon, e.g. "d1,d1'"
        #[arg(long, value_name = "P0,P1")]
        qubit_a: String,
        /// Two paths carrying the second photon
        #[arg(long, value_name = "P0,P1")]
        qubit_b: String,
    },
    /// Interferometric fringe of the two-crystal spectroscopy model
    Spectrogram(SpectrogramArgs),
    /// Equivalent wavelength of a signal/idler pair
    Eqwl {
        /// Signal wavelength in meters
        #[arg(long)]
        signal: f64,
        /// Idler wavelength in meters
        #[arg(long)]
        idler: f64,
    },
    /// Transmission of a two-mirror cavity in the idler arm
    Cavity {
        /// Back mirror amplitude reflectivity
        #[arg(long)]
        r1: f64,
        /// Outcoupler amplitude reflectivity
        #[arg(long)]
        r2: f64,
        /// Outcoupler amplitude transmissivity
        #[arg(long)]
        t2: f64,
        #[arg(long, default_value_t = 64)]
        rounds: usize,
    },
}

#[derive(Args)]
struct SpectrogramArgs {
    /// Signal wavelength in meters
    #[arg(long, default_value_t = 810e-9)]
    lambda_s: f64,
    /// Idler wavelength in meters
    #[arg(long, default_value_t = 1550e-9)]
    lambda_i: f64,
    /// Pump wavelength in meters; derived from signal and idler if absent
    #[arg(long)]
    lambda_p: Option<f64>,
    #[arg(long, default_value_t = 1.8)]
    n_p: f64,
    #[arg(long, default_value_t = 1.4)]
    n_s: f64,
    #[arg(long, default_value_t = 1.45)]
    n_i: f64,
    /// Crystal length in meters
    #[arg(long, default_value_t = 2e-3)]
    len_crystal: f64,
    /// Sample length in meters
    #[arg(long, default_value_t = 1e-3)]
    len_medium: f64,
    /// Sample absorption per meter
    #[arg(long, default_value_t = 0.0)]
    alpha_m: f64,
    /// Signal emission angle in radians
    #[arg(long, default_value_t = 0.05)]
    theta_s: f64,
    /// Phase offsets sampled over [0, 2pi)
    #[arg(long, default_value_t = 16)]
    offsets: usize,
}

#[derive(Args)]
struct GraphArgs {
    #[command(subcommand)]
    action: GraphAction,
}

#[derive(Subcommand)]
enum GraphAction {
    /// DOT source of the graph
    Export(GraphSource),
    /// List every perfect matching with its weight
    Matchings(GraphSource),
    /// Weighted sum over perfect matchings
    Hafnian(GraphSource),
    /// Post-selected state the graph encodes
    State(GraphSource),
}

#[derive(Args)]
struct GraphSource {
    /// Setup file holding a crystal network
    #[arg(required_unless_present = "random", conflicts_with = "random")]
    file: Option<PathBuf>,
    /// Bind a parameter, repeatable: --set name=value
    #[arg(long = "set", value_name = "NAME=VALUE")]
    set: Vec<String>,
    /// Generate the complete network on this many parties instead
    #[arg(long)]
    random: Option<usize>,
    /// Edge amplitude of the generated network
    #[arg(long, default_value_t = 0.1)]
    edge_prob: f64,
    /// Keep each edge with probability edge-prob, reproducibly
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FeasibilityArgs {
    /// Photon count (even)
    n: usize,
    /// Required number of disjoint perfect matchings
    d: usize,
    /// Largest vertex count the exhaustive search accepts
    #[arg(long, default_value_t = 8)]
    bound: usize,
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::DegenerateSweep(_)
            | Error::DegenerateSelection(_)
            | Error::CavityDivergence
            | Error::ZeroNorm
            | Error::GrazingAngle => 3,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(output) => print!("{output}"),
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            std::process::exit(failure.code);
        }
    }
}

fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Analyze { what } => cmd_analyze(what),
        Command::Graph(args) => cmd_graph(args),
        Command::Feasibility(args) => cmd_feasibility(args),
    }
}

/// Loaded setup plus the header lines every report starts with.
struct Loaded {
    setup: ExperimentSetup,
    overrides: Bindings,
    header: String,
}

fn parse_bindings(pairs: &[String]) -> Result<Bindings, Failure> {
    let mut bindings = Bindings::new();
    for raw in pairs {
        let (name, value) = raw
            .split_once('=')
            .ok_or_else(|| invalid(format!("--set expects name=value, got `{raw}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| invalid(format!("--set {name}: `{value}` is not a number")))?;
        bindings.insert(name.trim().to_string(), value);
    }
    Ok(bindings)
}

fn load(source: &SetupSource, command: &str) -> Result<Loaded, Failure> {
    let text = fs::read_to_string(&source.file)
        .map_err(|e| invalid(format!("{}: {e}", source.file.display())))?;
    let digest = Sha256::digest(text.as_bytes());
    let hash: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    let doc = SetupDocument::parse(&text)?;
    let mut setup = doc.compile();
    if let Some(k) = source.order {
        setup.truncation = Some(k);
    }
    let overrides = parse_bindings(&source.set)?;
    let mut header = format!(
        "# pathid {command}\n# setup {} sha256 {hash}\n",
        source.file.display()
    );
    for (name, value) in &overrides {
        writeln!(header, "# set {name}={}", sig9(*value)).unwrap();
    }
    Ok(Loaded {
        setup,
        overrides,
        header,
    })
}

fn pattern_for(setup: &ExperimentSetup, requested: &Option<String>) -> Result<(DetectionPattern, String), Failure> {
    match requested {
        Some(text) => Ok((parse_pattern(text)?, text.clone())),
        None => {
            if setup.detectors.is_empty() {
                return Err(invalid(
                    "setup lists no detectors; pass --pattern to select photons",
                ));
            }
            let text = setup
                .detectors
                .iter()
                .map(|d| d.as_str().to_string())
                .collect::<Vec<_>>()
                .join(",");
            Ok((DetectionPattern::coincidence(&setup.detectors), text))
        }
    }
}

fn amplitude_rows(state: &PureState, indent: &str) -> String {
    let mut out = String::new();
    for (order, amps) in state.amplitudes_by_order() {
        for (fock, amp) in amps {
            if amp.norm() > 1e-12 {
                writeln!(out, "{indent}{order} {fock} {}", sig9_complex(amp)).unwrap();
            }
        }
    }
    out
}

/// Squared overlap between the detected component and the phase-aligned
/// flat superposition over its support; 1 for an ideally balanced
/// GHZ-like selection.
fn uniform_support_fidelity(state: &PureState) -> f64 {
    let amps = state.fock_amplitudes();
    let magnitudes: Vec<f64> = amps
        .values()
        .map(|a| a.norm())
        .filter(|n| *n > 1e-12)
        .collect();
    if magnitudes.is_empty() {
        return 0.0;
    }
    let total: f64 = magnitudes.iter().sum();
    let norm_sq: f64 = magnitudes.iter().map(|n| n * n).sum();
    total * total / (magnitudes.len() as f64 * norm_sq)
}

fn cmd_simulate(args: SimulateArgs) -> Result<String, Failure> {
    let loaded = load(&args.source, "simulate")?;
    let setup = &loaded.setup;
    let select = match (&args.pattern, setup.detectors.is_empty()) {
        (None, true) => None,
        _ => Some(pattern_for(setup, &args.pattern)?),
    };
    let state = setup.simulate_for(&loaded.overrides, select.as_ref().map(|(p, _)| p))?;
    let mut out = loaded.header;
    writeln!(
        out,
        "# order {}",
        setup.effective_truncation(select.as_ref().map(|(p, _)| p))
    )
    .unwrap();
    writeln!(out, "norm {}", sig9(state.norm())).unwrap();
    out.push_str("state\n");
    out.push_str(&amplitude_rows(&state, "  "));
    if let Some((pattern, text)) = select {
        let ps = postselect(&state, &pattern);
        writeln!(out, "selection {text}").unwrap();
        writeln!(out, "probability {}", sig9(ps.probability)).unwrap();
        match ps.order {
            Some(order) => {
                writeln!(out, "order {order}").unwrap();
                writeln!(out, "fidelity {}", sig9(uniform_support_fidelity(&ps.state))).unwrap();
                out.push_str("detected\n");
                out.push_str(&amplitude_rows(&ps.state, "  "));
            }
            None => out.push_str("order none\n"),
        }
    }
    Ok(out)
}

fn cmd_sweep(args: SweepArgs) -> Result<String, Failure> {
    if args.steps < 2 {
        return Err(invalid("sweep needs at least two steps"));
    }
    let loaded = load(&args.source, "sweep")?;
    let (pattern, pattern_text) = pattern_for(&loaded.setup, &args.pattern)?;
    let values: Vec<f64> = (0..args.steps)
        .map(|i| args.start + (args.stop - args.start) * i as f64 / (args.steps - 1) as f64)
        .collect();
    let result = sweep(
        &loaded.setup,
        &args.param,
        &values,
        &pattern,
        &loaded.overrides,
    )?;
    let mut out = loaded.header;
    writeln!(out, "# param {}", result.param).unwrap();
    writeln!(out, "# pattern {pattern_text}").unwrap();
    writeln!(out, "# order {}", result.order).unwrap();
    writeln!(out, "# truncation {}", result.truncation).unwrap();
    for (value, rate) in result.values.iter().zip(&result.rates) {
        writeln!(out, "{} {}", sig9(*value), sig9(*rate)).unwrap();
    }
    Ok(out)
}

fn cmd_analyze(what: AnalyzeCommand) -> Result<String, Failure> {
    match what {
        AnalyzeCommand::Visibility {
            source,
            param,
            steps,
            pattern,
        } => {
            if steps < 3 {
                return Err(invalid("a fringe fit needs at least three points"));
            }
            let loaded = load(&source, "analyze visibility")?;
            let (pattern, pattern_text) = pattern_for(&loaded.setup, &pattern)?;
            let values: Vec<f64> = (0..steps)
                .map(|i| std::f64::consts::TAU * i as f64 / steps as f64)
                .collect();
            let result = sweep(&loaded.setup, &param, &values, &pattern, &loaded.overrides)?;
            let fit = fit_sinusoid(&result.values, &result.rates)?;
            let mut out = loaded.header;
            writeln!(out, "# param {param}").unwrap();
            writeln!(out, "# pattern {pattern_text}").unwrap();
            writeln!(out, "# order {}", result.order).unwrap();
            writeln!(out, "offset {}", sig9(fit.offset)).unwrap();
            writeln!(out, "amplitude {}", sig9(fit.amplitude)).unwrap();
            writeln!(out, "phase {}", sig9(fit.phase0)).unwrap();
            writeln!(out, "residual {}", sig9(fit.max_residual)).unwrap();
            writeln!(out, "visibility {}", sig9(fit.visibility())).unwrap();
            Ok(out)
        }
        AnalyzeCommand::Dop { source, path } => {
            let loaded = load(&source, "analyze dop")?;
            let state = loaded.setup.simulate(&loaded.overrides)?;
            let degree = polarization_degree(&state, &Path::new(path.clone()))?;
            let mut out = loaded.header;
            writeln!(out, "# path {path}").unwrap();
            writeln!(out, "degree {}", sig9(degree)).unwrap();
            Ok(out)
        }
        AnalyzeCommand::Concurrence {
            source,
            qubit_a,
            qubit_b,
        } => {
            let loaded = load(&source, "analyze concurrence")?;
            let a = split_pair(&qubit_a, "--qubit-a")?;
            let b = split_pair(&qubit_b, "--qubit-b")?;
            let state = loaded.setup.simulate(&loaded.overrides)?;
            // First order carrying one photon on each qubit's path pair:
            // that component is the detected pair.
            let pair_count = |f: &FockState, (p, q): &(Path, Path)| {
                f.photons_on(p) + f.photons_on(q)
            };
            let order = state
                .amplitudes_by_order()
                .into_iter()
                .find_map(|(order, amps)| {
                    amps.iter()
                        .any(|(f, amp)| {
                            amp.norm() > 1e-12
                                && pair_count(f, &a) == 1
                                && pair_count(f, &b) == 1
                        })
                        .then_some(order)
                })
                .ok_or(Error::DegenerateSelection(state.poly.truncation()))?;
            let keep: BTreeSet<Path> = [a.0.clone(), a.1.clone(), b.0.clone(), b.1.clone()].into();
            let rho = state.at_order(order).partial_trace(&keep)?;
            let pair = |p: &Path, q: &Path| {
                FockState::vacuum()
                    .with(ModeLabel::plain(p.clone()), 1)
                    .with(ModeLabel::plain(q.clone()), 1)
            };
            let basis = [
                pair(&a.0, &b.0),
                pair(&a.0, &b.1),
                pair(&a.1, &b.0),
                pair(&a.1, &b.1),
            ];
            let matrix = two_qubit_matrix(&rho, &basis)?;
            let value = concurrence(&matrix)?;
            let mut out = loaded.header;
            writeln!(out, "# qubits {},{} x {},{}", a.0, a.1, b.0, b.1).unwrap();
            writeln!(out, "concurrence {}", sig9(value)).unwrap();
            Ok(out)
        }
        AnalyzeCommand::Spectrogram(args) => cmd_spectrogram(args),
        AnalyzeCommand::Eqwl { signal, idler } => {
            let value = equivalent_wavelength(signal, idler)?;
            Ok(format!(
                "# pathid analyze eqwl\nequivalent wavelength {}\n",
                sig9(value)
            ))
        }
        AnalyzeCommand::Cavity { r1, r2, t2, rounds } => {
            let result = cavity_transmission(
                pathid::C64::new(r1, 0.0),
                pathid::C64::new(r2, 0.0),
                pathid::C64::new(t2, 0.0),
                rounds,
            )?;
            let mut out = String::from("# pathid analyze cavity\n");
            writeln!(out, "# rounds {rounds}").unwrap();
            writeln!(out, "closed form {}", sig9(result.closed_form)).unwrap();
            writeln!(out, "truncated {}", sig9(result.truncated_total)).unwrap();
            Ok(out)
        }
    }
}

fn split_pair(text: &str, flag: &str) -> Result<(Path, Path), Failure> {
    let (p, q) = text
        .split_once(',')
        .ok_or_else(|| invalid(format!("{flag} expects two paths like d1,d1'")))?;
    if p.trim().is_empty() || q.trim().is_empty() {
        return Err(invalid(format!("{flag} expects two nonempty paths")));
    }
    Ok((Path::new(p.trim()), Path::new(q.trim())))
}

fn cmd_spectrogram(args: SpectrogramArgs) -> Result<String, Failure> {
    if args.offsets < 3 {
        return Err(invalid("a fringe fit needs at least three offsets"));
    }
    let lambda_p = match args.lambda_p {
        Some(l) => l,
        None => 1.0 / (1.0 / args.lambda_s + 1.0 / args.lambda_i),
    };
    let cfg = SpectroscopyConfig::new(
        lambda_p,
        args.lambda_s,
        args.lambda_i,
        args.n_p,
        args.n_s,
        args.n_i,
        args.len_crystal,
        args.len_medium,
        args.alpha_m,
        args.theta_s,
    )?;
    let offsets: Vec<f64> = (0..args.offsets)
        .map(|i| std::f64::consts::TAU * i as f64 / args.offsets as f64)
        .collect();
    let fringe = spectral_fringe(&cfg, args.lambda_s, args.theta_s, &offsets)?;
    let fit = fit_sinusoid(&fringe.phases, &fringe.intensities)?;
    let mut out = String::from("# pathid analyze spectrogram\n");
    writeln!(out, "# transmissivity {}", sig9(cfg.transmissivity())).unwrap();
    for (phase, intensity) in fringe.phases.iter().zip(&fringe.intensities) {
        writeln!(out, "{} {}", sig9(*phase), sig9(*intensity)).unwrap();
    }
    writeln!(out, "visibility {}", sig9(fit.visibility())).unwrap();
    Ok(out)
}

fn cmd_graph(args: GraphArgs) -> Result<String, Failure> {
    let (source, action_name) = match &args.action {
        GraphAction::Export(s) => (s, "export"),
        GraphAction::Matchings(s) => (s, "matchings"),
        GraphAction::Hafnian(s) => (s, "hafnian"),
        GraphAction::State(s) => (s, "state"),
    };
    let (graph, mut header) = match (&source.file, source.random) {
        (Some(file), None) => {
            let loaded = load(
                &SetupSource {
                    file: file.clone(),
                    set: source.set.clone(),
                    order: None,
                },
                &format!("graph {action_name}"),
            )?;
            let graph = from_experiment(&loaded.setup, &loaded.overrides)?;
            (graph, loaded.header)
        }
        (None, Some(n)) => {
            let network = random_network(n, source.edge_prob, source.seed)?;
            let mut header = format!("# pathid graph {action_name}\n");
            writeln!(
                header,
                "# random n={n} edge-prob={}",
                sig9(source.edge_prob)
            )
            .unwrap();
            if let Some(seed) = source.seed {
                writeln!(header, "# seed {seed}").unwrap();
            }
            (network.graph, header)
        }
        _ => {
            return Err(invalid(
                "pass a setup file or --random N, not both and not neither",
            ))
        }
    };
    match args.action {
        GraphAction::Export(_) => Ok(graph.dot()),
        GraphAction::Matchings(_) => {
            let matchings = graph.perfect_matchings();
            let vertices = graph.vertices();
            let edges = graph.edges();
            for (i, m) in matchings.iter().enumerate() {
                let body = m
                    .iter()
                    .map(|&e| format!("{}-{}", vertices[edges[e].u], vertices[edges[e].v]))
                    .collect::<Vec<_>>()
                    .join(" ");
                writeln!(
                    header,
                    "matching {} weight {}: {body}",
                    i + 1,
                    sig9_complex(graph.matching_weight(m))
                )
                .unwrap();
            }
            writeln!(header, "count {}", matchings.len()).unwrap();
            Ok(header)
        }
        GraphAction::Hafnian(_) => {
            writeln!(
                header,
                "matching sum {}",
                sig9_complex(graph.weighted_matching_sum())
            )
            .unwrap();
            writeln!(header, "matchings {}", graph.perfect_matchings().len()).unwrap();
            Ok(header)
        }
        GraphAction::State(_) => {
            let state = graph.to_state();
            writeln!(header, "norm {}", sig9(state.norm())).unwrap();
            header.push_str("state\n");
            header.push_str(&amplitude_rows(&state, "  "));
            Ok(header)
        }
    }
}

fn cmd_feasibility(args: FeasibilityArgs) -> Result<String, Failure> {
    let verdict = ghz_feasibility_search(args.n, args.d, args.bound)?;
    let mut out = String::from("# pathid feasibility\n");
    match verdict {
        Feasibility::Feasible { n, d, edges } => {
            writeln!(out, "FEASIBLE n={n} d={d}").unwrap();
            let body = edges
                .iter()
                .map(|(u, v)| format!("{u}-{v}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "edges {body}").unwrap();
        }
        Feasibility::Infeasible { n, d, searched } => {
            writeln!(out, "INFEASIBLE n={n} d={d} searched={searched}").unwrap();
        }
    }
    Ok(out)
}

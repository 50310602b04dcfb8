//! `ripple`: generate fixture networks, inspect encodings, synthesize
//! attacks, run campaigns and re-check saved results.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ripple_core::attack::{run_campaign, synthesize, verify, AttackStatus, Scenario, VerifyReason};
use ripple_core::bb_solver::SolverConfig;
use ripple_core::encoder::encode;
use ripple_core::{ActivationKind, AttackConfig, AttackResult, LayerSpec, Network};

const EXIT_SUCCESS: u8 = 0;
const EXIT_NO_ATTACK: u8 = 1;
const EXIT_TIMED_OUT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(name = "ripple", version, about = "Minimal input perturbations that steer ReLU network outputs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded random network.
    Gen(GenArgs),
    /// Print the MILP listing for an attack configuration.
    Encode(EncodeArgs),
    /// Synthesize one attack over the configuration's allowed inputs.
    Attack(AttackArgs),
    /// Run every k-subset of inputs for each k.
    Campaign(CampaignArgs),
    /// Re-check a saved attack result against a network.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FinalActivation {
    Linear,
    Relu,
}

#[derive(Args)]
struct GenArgs {
    /// Layer widths from input to output, e.g. 5-25-25-3.
    #[arg(long)]
    shape: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FinalActivation::Relu)]
    final_activation: FinalActivation,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveFlags {
    /// Solver budget in seconds; takes precedence over the config file.
    #[arg(long)]
    time_limit: Option<f64>,
    /// Ordering margin; takes precedence over the config file.
    #[arg(long)]
    eps: Option<f64>,
    /// Print one line per branch-and-bound node to standard error.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    attack_config: PathBuf,
    #[arg(long)]
    eps: Option<f64>,
    /// Write the listing here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    attack_config: PathBuf,
    /// Result JSON path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solve: SolveFlags,
}

#[derive(Args)]
struct CampaignArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long)]
    attack_config: PathBuf,
    /// CSV report path. The JSON summary goes next to it with a `.json`
    /// extension.
    #[arg(long)]
    out: PathBuf,
    /// Scenario sizes, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    jobs: Option<usize>,
    #[command(flatten)]
    solve: SolveFlags,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    network: PathBuf,
    /// Result JSON written by `ripple attack`.
    #[arg(long)]
    result: PathBuf,
}

/// What `ripple attack` writes, whatever the outcome.
#[derive(Debug, Serialize, Deserialize)]
struct ResultFile {
    network: String,
    config: Option<AttackConfig>,
    result: Option<AttackResult>,
    error: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Gen(a) => report(cmd_gen(&a)),
        Command::Encode(a) => report(cmd_encode(&a)),
        Command::Attack(a) => cmd_attack(&a),
        Command::Campaign(a) => report(cmd_campaign(&a)),
        Command::Verify(a) => cmd_verify(&a),
    };
    ExitCode::from(code)
}

fn report(r: Result<()>) -> u8 {
    match r {
        Ok(()) => EXIT_SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    let widths = s
        .split('-')
        .map(|w| w.trim().parse::<usize>().with_context(|| format!("bad layer width {w:?}")))
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 {
        bail!("shape needs at least an input and an output width");
    }
    if widths.contains(&0) {
        bail!("layer widths must be at least 1");
    }
    Ok(widths)
}

fn generate(widths: &[usize], seed: u64, final_act: ActivationKind) -> Result<Network> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for (k, w) in widths.windows(2).enumerate() {
        let weights = (0..w[1])
            .map(|_| (0..w[0]).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        let biases = (0..w[1]).map(|_| rng.gen_range(-0.5..=0.5)).collect();
        let act = if k + 2 == widths.len() { final_act } else { ActivationKind::Relu };
        layers.push(LayerSpec::new(weights, biases, act));
    }
    Ok(Network::new(widths[0], layers)?)
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let widths = parse_shape(&a.shape)?;
    let act = match a.final_activation {
        FinalActivation::Linear => ActivationKind::Linear,
        FinalActivation::Relu => ActivationKind::Relu,
    };
    let net = generate(&widths, a.seed, act)?;
    fs::write(&a.out, net.to_json_string()).with_context(|| format!("writing {}", a.out.display()))
}

fn load_network(p: &Path) -> Result<Network> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Network::from_json_str(&text).with_context(|| format!("parsing {}", p.display()))
}

fn load_config(p: &Path, flags: Option<&SolveFlags>, eps: Option<f64>) -> Result<AttackConfig> {
    let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let mut cfg = AttackConfig::from_json_str(&text).with_context(|| format!("parsing {}", p.display()))?;
    if let Some(e) = eps {
        cfg.eps = Some(e);
    }
    if let Some(t) = flags.and_then(|f| f.time_limit) {
        cfg.solver.time_limit = Some(t);
    }
    Ok(cfg)
}

fn solver_config(flags: &SolveFlags) -> SolverConfig {
    SolverConfig {
        trace: flags.trace,
        ..SolverConfig::default()
    }
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let net = load_network(&a.network)?;
    let cfg = load_config(&a.attack_config, None, a.eps)?;
    cfg.validate(&net)?;
    let n = net.input_dim();
    let pert = cfg.perturbation(n, &cfg.allowed_indices(n))?;
    let mut ea = encode(&net, &pert)?;
    ea.add_attack_constraint(cfg.effective_constraint())?;
    ea.set_objective(cfg.objective)?;
    let listing = ea.model.to_string();
    match &a.out {
        Some(p) => fs::write(p, listing).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut out = std::io::stdout().lock();
            match out.write_all(listing.as_bytes()).and_then(|()| out.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => return Err(e.into()),
                _ => {}
            }
        }
    }
    Ok(())
}

fn write_json<S: Serialize>(p: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(p, text).with_context(|| format!("writing {}", p.display()))
}

fn cmd_attack(a: &AttackArgs) -> u8 {
    let mut file = ResultFile {
        network: a.network.display().to_string(),
        config: None,
        result: None,
        error: None,
    };
    let outcome = (|| -> Result<AttackResult> {
        let net = load_network(&a.network)?;
        let cfg = load_config(&a.attack_config, Some(&a.solve), a.solve.eps)?;
        file.config = Some(cfg.clone());
        cfg.validate(&net)?;
        let scenario = Scenario {
            id: 0,
            indices: cfg.allowed_indices(net.input_dim()),
        };
        Ok(synthesize(&net, &cfg, &scenario, &solver_config(&a.solve))?)
    })();
    let code = match outcome {
        Ok(mut r) => {
            for line in r.trace.drain(..) {
                eprintln!("{line}");
            }
            let code = match r.status {
                AttackStatus::Success => EXIT_SUCCESS,
                AttackStatus::NoAttackExists => EXIT_NO_ATTACK,
                AttackStatus::TimedOut => EXIT_TIMED_OUT,
            };
            eprintln!("{} after {} nodes in {:.3} s", r.status.as_str(), r.nodes, r.wall_time);
            file.result = Some(r);
            code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            file.error = Some(format!("{e:#}"));
            EXIT_CONFIG
        }
    };
    if let Err(e) = write_json(&a.out, &file) {
        eprintln!("error: {e:#}");
        return EXIT_CONFIG;
    }
    code
}

fn cmd_campaign(a: &CampaignArgs) -> Result<()> {
    let net = load_network(&a.network)?;
    let cfg = load_config(&a.attack_config, Some(&a.solve), a.solve.eps)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut solver = solver_config(&a.solve);
    // Per-scenario logs would interleave across threads.
    solver.trace = false;
    let rep = run_campaign(&net, &cfg, &a.k, &solver, jobs)?;
    let csv = fs::File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    rep.write_csv(std::io::BufWriter::new(csv))?;
    write_json(&a.out.with_extension("json"), &rep)?;
    let t = &rep.totals;
    eprintln!(
        "{}/{} successful ({} timed out, {} errors), peak {:.3} s, mean {:.3} s",
        t.successful, t.total, t.timed_out, t.errors, rep.peak_time, rep.mean_time
    );
    if a.solve.trace {
        for row in &rep.rows {
            eprintln!("k={} [{}] {}", row.k, row.scenario, row.status_str());
        }
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> u8 {
    let checked = (|| -> Result<Option<VerifyReason>> {
        let net = load_network(&a.network)?;
        let text = fs::read_to_string(&a.result).with_context(|| format!("reading {}", a.result.display()))?;
        let file: ResultFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", a.result.display()))?;
        let (Some(cfg), Some(result)) = (file.config, file.result) else {
            bail!("result file holds no attack result");
        };
        Ok(verify(&net, &result, &cfg).reason)
    })();
    match checked {
        Ok(None) => {
            eprintln!("verified");
            EXIT_SUCCESS
        }
        Ok(Some(VerifyReason::DimensionMismatch)) => {
            eprintln!("error: result does not match the network's dimensions");
            EXIT_CONFIG
        }
        Ok(Some(reason)) => {
            eprintln!("not verified: {reason}");
            EXIT_NO_ATTACK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use convlab::ir::{compile, lower, to_text};
use convlab::layers::{LayerSpec, LAYERS};
use convlab::report::{build_report, expand_variant, variant_config, ReportRequest};
use convlab::sim::MachineConfig;
use convlab::tune::{tune, SearchSpace};
use convlab::verify::{summary, verify_layer, VerifyOptions};
use convlab::{AlgoConfig, Algorithm, Error};

#[derive(Parser)]
#[command(
    name = "convlab",
    version,
    about = "Simulate, verify and tune GPU convolution algorithms on ResNet layers"
)]
struct Cli {
    /// Seed for random operands.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Channel cap for simulated and verified layers: 8, 16, 32 or 64.
    #[arg(long, global = true, default_value_t = 64)]
    scale: usize,
    /// Machine preset (dedicated, integrated, embedded) or a key = value file.
    /// Repeat to report on several machines.
    #[arg(long, global = true)]
    machine: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare every algorithm against the oracle on random operands.
    Verify(VerifyArgs),
    /// Simulate layers and write the metrics CSV.
    Report(ReportArgs),
    /// Search an algorithm's configuration space for the fewest cycles.
    Tune(TuneArgs),
    /// Print the kernel programs of one algorithm in text form.
    DumpIr(DumpArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Layers to check (default: all).
    #[arg(long, value_delimiter = ',')]
    layers: Vec<String>,
    #[arg(long, hide = true)]
    ilpm_kcrs_filters: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "conv2.x,conv3.x,conv4.x,conv5.x"
    )]
    layers: Vec<String>,
    /// Algorithm variants; `direct` means both filter caching choices.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    algorithms: Vec<String>,
    /// CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write `algorithm cycles` plot data here.
    #[arg(long)]
    plot: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    algorithm: String,
    #[arg(long, default_value = "conv4.x")]
    layer: String,
    /// Tile edge candidates.
    #[arg(long, value_delimiter = ',')]
    tiles: Option<Vec<usize>>,
    /// Output channels per thread candidates (direct).
    #[arg(long, value_delimiter = ',')]
    ocpt: Option<Vec<usize>>,
    /// GEMM tile candidates (im2col, winograd, fused_unroll).
    #[arg(long, value_delimiter = ',')]
    gemm_tiles: Option<Vec<usize>>,
    /// Filter caching candidates (direct).
    #[arg(long, value_delimiter = ',')]
    cache: Option<Vec<bool>>,
    /// Output transpose candidates (ilpm).
    #[arg(long, value_delimiter = ',')]
    transpose: Option<Vec<bool>>,
    /// Audit CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[arg(long)]
    algorithm: String,
    #[arg(long, default_value = "conv4.x")]
    layer: String,
    /// Print the lowering before unrolling and pipelining.
    #[arg(long)]
    lowered: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code and a short machine-readable kind.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            kind: "usage",
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Parse(_) | Error::Config(_) | Error::Shape(_) | Error::Unsupported(_) => {
                (2, "usage")
            }
            Error::Launch(_) | Error::EmptySpace => (3, "resource"),
            Error::Layout(_) | Error::Exec(_) => (1, "verification"),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.kind, f.message.replace('\n', " "));
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> CliResult {
    if !convlab::layers::CHANNEL_SCALES.contains(&cli.scale) {
        return Err(Failure::usage(format!(
            "--scale must be one of {:?}",
            convlab::layers::CHANNEL_SCALES
        )));
    }
    match &cli.command {
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Report(a) => cmd_report(cli, a),
        Command::Tune(a) => cmd_tune(cli, a),
        Command::DumpIr(a) => cmd_dump(cli, a),
    }
}

fn machines(cli: &Cli) -> Result<Vec<MachineConfig>, Failure> {
    if cli.machine.is_empty() {
        return Ok(vec![MachineConfig::embedded()]);
    }
    cli.machine
        .iter()
        .map(|m| match MachineConfig::preset(m) {
            Some(p) => Ok(p),
            None if Path::new(m).is_file() => Ok(MachineConfig::load(Path::new(m))?),
            None => Err(Failure::usage(format!(
                "unknown machine '{m}': not a preset or a file"
            ))),
        })
        .collect()
}

fn one_machine(cli: &Cli) -> Result<MachineConfig, Failure> {
    let mut ms = machines(cli)?;
    if ms.len() != 1 {
        return Err(Failure::usage("this command takes a single --machine"));
    }
    Ok(ms.remove(0))
}

fn layers(names: &[String]) -> Result<Vec<LayerSpec>, Failure> {
    if names.is_empty() {
        return Ok(LAYERS.to_vec());
    }
    let set: Result<BTreeSet<_>, _> = names.iter().map(|n| LayerSpec::by_name(n)).collect();
    Ok(set?.into_iter().collect())
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure {
            code: 3,
            kind: "resource",
            message: format!("{}: {e}", p.display()),
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> CliResult {
    let opts = VerifyOptions {
        scale: cli.scale,
        seed: cli.seed,
        ilpm_kcrs_filters: a.ilpm_kcrs_filters,
    };
    let mut cases = Vec::new();
    for layer in layers(&a.layers)? {
        cases.extend(verify_layer(&layer, &opts)?);
    }
    print!("{}", summary(&cases));
    let failed: Vec<_> = cases.iter().filter(|c| !c.passed()).collect();
    if let Some(first) = failed.first() {
        for c in &failed[1..] {
            eprintln!("failing case: {}", c.dump());
        }
        return Err(Failure {
            code: 1,
            kind: "verification",
            message: format!("tolerance exceeded: {}", first.dump()),
        });
    }
    Ok(())
}

fn cmd_report(cli: &Cli, a: &ReportArgs) -> CliResult {
    let mut variants = Vec::new();
    for name in &a.algorithms {
        for v in expand_variant(name)? {
            if !variants.contains(&v) {
                variants.push(v);
            }
        }
    }
    let req = ReportRequest {
        layers: layers(&a.layers)?,
        variants,
        machines: machines(cli)?,
        scale: cli.scale,
    };
    let report = build_report(&req)?;
    write_out(a.out.as_deref(), &report.to_csv())?;
    if let Some(p) = &a.plot {
        write_out(Some(p), &report.plot_data())?;
    }
    Ok(())
}

fn cmd_tune(cli: &Cli, a: &TuneArgs) -> CliResult {
    let algorithm: Algorithm = a.algorithm.parse()?;
    if algorithm == Algorithm::Oracle {
        return Err(Failure::usage("the oracle has no configurations to tune"));
    }
    let machine = one_machine(cli)?;
    let shape = LayerSpec::by_name(&a.layer)?.scaled(cli.scale)?;
    let mut space = SearchSpace::default();
    if let Some(v) = &a.tiles {
        space.tiles = v.clone();
    }
    if let Some(v) = &a.ocpt {
        space.out_channels_per_thread = v.clone();
    }
    if let Some(v) = &a.gemm_tiles {
        space.gemm_tiles = v.clone();
    }
    if let Some(v) = &a.cache {
        space.cache_filter = v.clone();
    } else if a.algorithm == "direct_cache" || a.algorithm == "direct_nocache" {
        space.cache_filter = vec![a.algorithm == "direct_cache"];
    }
    if let Some(v) = &a.transpose {
        space.transpose_output = v.clone();
    }
    let r = tune(algorithm, &shape, &machine, &space)?;
    println!(
        "best {} cycles={} on {} {} C={} K={}",
        r.best.describe(),
        r.best_metrics.cycles,
        machine.name,
        a.layer,
        shape.in_channels,
        shape.out_channels
    );
    let labels: BTreeSet<String> = r.trials.iter().map(|t| t.config.label()).collect();
    if labels.len() > 1 {
        for label in labels {
            if let Some(t) = r.best_with_label(&label) {
                println!(
                    "best {} cycles={}",
                    t.config.describe(),
                    t.cycles.unwrap_or_default()
                );
            }
        }
    }
    write_out(a.out.as_deref(), &r.audit_csv())
}

fn cmd_dump(cli: &Cli, a: &DumpArgs) -> CliResult {
    let shape = LayerSpec::by_name(&a.layer)?.scaled(cli.scale)?;
    let variant = expand_variant(&a.algorithm)?;
    let mut text = String::new();
    for v in variant {
        let cfg: AlgoConfig = variant_config(v, &shape)?;
        let kernels = if a.lowered {
            lower(&cfg, &shape)?
        } else {
            compile(&cfg, &shape)?
        };
        text.push_str(&format!("# {}\n", cfg.describe()));
        for k in &kernels.kernels {
            text.push_str(&to_text(k));
        }
    }
    write_out(a.out.as_deref(), &text)
}

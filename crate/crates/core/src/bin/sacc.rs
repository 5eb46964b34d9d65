use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sacc_core::cost::{network_cost_with_threads, sweep};
use sacc_core::io::runner::{execute, parse_layer_range, NetworkRun, RunPlan};
use sacc_core::io::{
    compare_to_paper, dump_trace, emit_report, load_config, run_network, write_tensor,
    ReportFormat, RunManifest, RunMode,
};
use sacc_core::{vgg16_conv_preset, ArchConfig, NetworkSpec};

#[derive(Parser)]
#[command(
    name = "sacc",
    version,
    about = "Serial-accumulation CNN accelerator model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Config file whose [arch] table overrides the reference design.
    #[arg(long)]
    arch: Option<PathBuf>,
    /// `vgg16` or a config file with [[layer]] entries.
    #[arg(long, default_value = "vgg16")]
    net: String,
    /// 1-based inclusive layer selection, e.g. `1-2` or `5`.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args, Clone)]
struct SimArgs {
    #[command(flatten)]
    common: Common,
    /// Seed for the input tensor and per-layer weights.
    #[arg(long, default_value_t = sacc_core::io::runner::DEFAULT_SEED)]
    seed: u64,
    /// Enable engine-internal invariant checks.
    #[arg(long)]
    checked: bool,
    /// Write the DRAM transaction log as CSV.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the final output tensor (after host ops).
    #[arg(short = 'o', long)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic latency, traffic and throughput per layer.
    Cost {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
    },
    /// Cycle-accurate simulation with seeded data.
    Simulate(SimArgs),
    /// Simulation checked against the golden convolution.
    Verify(SimArgs),
    /// Total cost over a grid of SRAM depths and unit counts.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "224,448,896")]
        depths: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "64")]
        units: Vec<usize>,
    },
    /// Simulate and dump the DRAM transaction log.
    Trace {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = sacc_core::io::runner::DEFAULT_SEED)]
        seed: u64,
        #[arg(short = 'o', long)]
        output: PathBuf,
    },
    /// Compare the VGG-16 cost against the published reference figures.
    ComparePaper {
        #[arg(long)]
        arch: Option<PathBuf>,
    },
    /// Execute a TOML run manifest.
    Run { manifest: PathBuf },
}

fn load_arch(path: Option<&Path>) -> Result<ArchConfig> {
    Ok(match path {
        Some(p) => load_config(p)?.arch()?,
        None => ArchConfig::default(),
    })
}

fn load_net(spec: &str) -> Result<NetworkSpec> {
    if spec == "vgg16" {
        return Ok(vgg16_conv_preset());
    }
    Ok(load_config(Path::new(spec))?.network()?)
}

fn plan(mode: RunMode, common: &Common) -> Result<RunPlan> {
    let arch = load_arch(common.arch.as_deref())?;
    let net = load_net(&common.net)?;
    let mut plan = RunPlan::new(mode, arch, net);
    if let Some(text) = &common.layers {
        plan.layers = parse_layer_range(text, plan.net.len())?;
    }
    plan.threads = common.threads.max(1);
    Ok(plan)
}

fn write_or_print(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn print_sim(run: &NetworkRun) {
    println!("layer,cycles,analytic_cycles,stall_cycles,weights_bytes,inputs_bytes,outputs_bytes,utilization,mismatches");
    for l in &run.layers {
        let Some(s) = &l.sim else { continue };
        println!(
            "{},{},{},{},{},{},{},{:.6},{}",
            l.name,
            s.cycles,
            s.analytic_cycles,
            s.stall_cycles,
            s.trace.weights_read,
            s.trace.inputs_read,
            s.trace.outputs_written,
            s.utilization,
            l.mismatches.map_or(String::new(), |m| m.to_string())
        );
    }
}

fn simulate(mode: RunMode, args: &SimArgs) -> Result<ExitCode> {
    let mut p = plan(mode, &args.common)?;
    p.weights = sacc_core::io::runner::WeightSource::Seeded(args.seed);
    p.input = sacc_core::io::runner::InputSource::Seeded(args.seed);
    p.checked = args.checked;
    p.log_transactions = args.trace_out.is_some();
    let run = execute(&p)?;
    print_sim(&run);
    if let Some(path) = &args.trace_out {
        dump_trace(&run.traces(), path)?;
    }
    if let (Some(path), Some(t)) = (&args.output, &run.output) {
        write_tensor(path, t)?;
    }
    if mode == RunMode::Verify {
        let ok = run.verified();
        eprintln!("verify: {}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            return Ok(ExitCode::FAILURE);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Cost {
            common,
            format,
            output,
        } => {
            let p = plan(RunMode::Cost, &common)?;
            let net = p.net.slice(p.layers.clone())?;
            let report = network_cost_with_threads(&net, &p.arch, p.threads)?;
            write_or_print(&emit_report(&report, format)?, output.as_deref())?;
        }
        Command::Simulate(args) => return simulate(RunMode::Simulate, &args),
        Command::Verify(args) => return simulate(RunMode::Verify, &args),
        Command::Sweep {
            common,
            depths,
            units,
        } => {
            let p = plan(RunMode::Cost, &common)?;
            let net = p.net.slice(p.layers.clone())?;
            println!("sram_depth,u,cycles,latency_ms,weights_bytes,inputs_bytes,outputs_bytes,total_bytes,gops,skipped_layers,error");
            for row in sweep(&net, &p.arch, &depths, &units)? {
                match row.outcome {
                    Ok(pt) => println!(
                        "{},{},{},{},{},{},{},{},{},{},",
                        row.sram_depth,
                        row.u,
                        pt.cycles,
                        pt.latency_ms,
                        pt.traffic.weights_read,
                        pt.traffic.inputs_read,
                        pt.traffic.outputs_written,
                        pt.traffic.total,
                        pt.gops,
                        pt.skipped_layers
                    ),
                    Err(e) => println!(
                        "{},{},,,,,,,,,\"{}\"",
                        row.sram_depth,
                        row.u,
                        e.replace('"', "'")
                    ),
                }
            }
        }
        Command::Trace {
            common,
            seed,
            output,
        } => {
            let mut p = plan(RunMode::Simulate, &common)?;
            p.weights = sacc_core::io::runner::WeightSource::Seeded(seed);
            p.input = sacc_core::io::runner::InputSource::Seeded(seed);
            p.log_transactions = true;
            let run = execute(&p)?;
            dump_trace(&run.traces(), &output)?;
        }
        Command::ComparePaper { arch } => {
            let arch = load_arch(arch.as_deref())?;
            let report = network_cost_with_threads(&vgg16_conv_preset(), &arch, 1)?;
            let cmp = compare_to_paper(&report)?;
            println!("{cmp}");
            if !cmp.pass {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Run { manifest } => {
            let m = RunManifest::load(&manifest)?;
            let run = run_network(&m)?;
            if m.mode == RunMode::Cost {
                print!("{}", emit_report(&run.cost, ReportFormat::Csv)?);
            } else {
                print_sim(&run);
            }
            if m.mode == RunMode::Verify && !run.verified() {
                eprintln!("verify: FAIL");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

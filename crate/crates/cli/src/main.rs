use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gari_core::decoder::{decode_with_graph, DecoderConfig, DecoderGraph, StopCriterion, ALPHA_DEFAULT, MAX_ITERS_DEFAULT, MAGNITUDE_CAP_DEFAULT};
use gari_core::ensemble::{ensemble_decode_with_graph, EnsembleConfig};
use gari_core::gari::{build_correlated, structure_report, verify_equivalence, GariModel, MemoryBasis};
use gari_core::harness::{run_experiment, run_experiment_with_records, Decoding, ExperimentConfig, ExperimentReport, LatencyParams};
use gari_core::ObsMask;
use serde::Serialize;

mod input;
mod model_io;

use input::{load_typed_dem, parse_syndrome_line, TypingArgs};

/// Worker threads for shot-level parallelism; defaults to all cores.
const WORKERS_ENV: &str = "GARI_WORKERS";

#[derive(Parser)]
#[command(name = "gari", version, about = "Graph-augmented decoding of correlated detector error models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print sizes, densities and 4-cycle counts of the decoding matrices.
    Inspect(InspectArgs),
    /// Build the augmented model and write it to a directory.
    Transform(TransformArgs),
    /// Decode syndromes read from a file, one shot per line.
    Decode(DecodeArgs),
    /// Run a Monte-Carlo memory experiment.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Basis {
    Z,
    X,
}

impl From<Basis> for MemoryBasis {
    fn from(b: Basis) -> Self {
        match b {
            Basis::Z => MemoryBasis::Z,
            Basis::X => MemoryBasis::X,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct DemArgs {
    /// Flattened detector error model, plain or gzipped.
    #[arg(long)]
    dem: PathBuf,
    #[command(flatten)]
    typing: TypingArgs,
    /// Which logical observables the experiment protects.
    #[arg(long, value_enum, default_value = "z")]
    memory: Basis,
}

#[derive(Args)]
struct InspectArgs {
    #[command(flatten)]
    dem: DemArgs,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also check the variable change on this many random assignments.
    #[arg(long, default_value_t = 0)]
    verify: usize,
}

#[derive(Args)]
struct TransformArgs {
    #[command(flatten)]
    dem: DemArgs,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct DecoderArgs {
    /// Normalization factor of check messages.
    #[arg(long, default_value_t = ALPHA_DEFAULT)]
    alpha: f64,
    #[arg(long, default_value_t = MAX_ITERS_DEFAULT)]
    max_iters: usize,
    #[arg(long, default_value_t = MAGNITUDE_CAP_DEFAULT)]
    magnitude_cap: f64,
    /// Stop only when both syndromes are satisfied.
    #[arg(long)]
    both_syndromes: bool,
    /// Run the D_X and D_Z units on two threads.
    #[arg(long)]
    parallel_units: bool,
    /// Number of ensemble members; omit for a single decoder.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Ensemble base seed; defaults to --seed.
    #[arg(long)]
    base_seed: Option<u64>,
}

impl DecoderArgs {
    fn config(&self, seed: u64) -> DecoderConfig {
        DecoderConfig {
            alpha: self.alpha,
            max_iters: self.max_iters,
            seed,
            magnitude_cap: self.magnitude_cap,
            stop: if self.both_syndromes { StopCriterion::BothSyndromes } else { StopCriterion::MemorySyndrome },
            parallel_units: self.parallel_units,
        }
    }
}

#[derive(Args)]
struct DecodeArgs {
    /// Directory written by `transform`.
    #[arg(long)]
    model: PathBuf,
    /// One `<s_X> <s_Z>` pair per line; `-` reads standard input.
    #[arg(long)]
    syndromes: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    decoder: DecoderArgs,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    dem: DemArgs,
    #[arg(long)]
    shots: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Syndrome rounds; defaults to `rounds=N` in the DEM header, else 1.
    #[arg(long)]
    rounds: Option<u32>,
    /// Physical error rate recorded in the report.
    #[arg(long)]
    p_label: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Time per decoding iteration, for the latency projection.
    #[arg(long)]
    per_iter_ns: Option<f64>,
    /// Decoding time budget per round.
    #[arg(long, requires = "per_iter_ns")]
    budget_ns: Option<f64>,
    /// Write one CSV line per shot to this file.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    decoder: DecoderArgs,
}

fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v.parse().with_context(|| format!("{WORKERS_ENV}={v:?} is not a count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_models(args: &DemArgs) -> Result<(gari_core::CorrelatedModel, GariModel, Option<u32>)> {
    let loaded = load_typed_dem(&args.dem, &args.typing)?;
    let cm = build_correlated(&loaded.model, args.memory.into())?;
    let gm = GariModel::from_correlated(&cm)?;
    Ok((cm, gm, loaded.rounds))
}

#[derive(Serialize)]
struct InspectOutput {
    source: String,
    memory_basis: MemoryBasis,
    num_detectors: usize,
    num_observables: usize,
    blocks: Blocks,
    #[serde(flatten)]
    stats: gari_core::gari::StructureReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivalence: Option<gari_core::gari::EquivalenceReport>,
}

#[derive(Serialize)]
struct Blocks {
    e_z: usize,
    e_x: usize,
    e_y: usize,
}

fn inspect(args: InspectArgs) -> Result<()> {
    let (cm, gm, _) = load_models(&args.dem)?;
    let stats = structure_report(&cm, &gm);
    let equivalence = (args.verify > 0).then(|| verify_equivalence(&cm, &gm, args.verify, 0));
    let mut out = output(None)?;
    match args.format {
        Format::Json => {
            let o = InspectOutput {
                source: args.dem.dem.display().to_string(),
                memory_basis: cm.memory_basis,
                num_detectors: cm.matrix.num_rows() + cm.dropped_detectors.len(),
                num_observables: cm.num_observables,
                blocks: Blocks { e_z: cm.num_z_cols, e_x: cm.num_x_cols, e_y: cm.num_y_cols },
                stats,
                equivalence: equivalence.clone(),
            };
            serde_json::to_writer_pretty(&mut out, &o)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "matrix,rows,cols,nnz,avg_row_weight,num_4cycles")?;
            for (name, s) in [("D_X", &stats.d_x), ("D_Z", &stats.d_z), ("D_XYZ", &stats.d_xyz), ("bottom", &stats.bottom)] {
                writeln!(out, "{name},{},{},{},{:.2},{}", s.num_rows, s.num_cols, s.nnz, s.avg_row_weight, s.num_4cycles)?;
            }
        }
    }
    if let Some(eq) = equivalence {
        if !eq.passed() {
            anyhow::bail!("variable change failed on {} of {} assignments", eq.failures, eq.trials);
        }
    }
    out.flush()?;
    Ok(())
}

fn transform(args: TransformArgs) -> Result<()> {
    let (cm, gm, rounds) = load_models(&args.dem)?;
    let m = model_io::write_model(&args.out, &cm, &gm, rounds, Some(args.dem.dem.display().to_string()))?;
    log::info!(
        "wrote {}: {} augmented columns, {} edges (D_XYZ has {})",
        args.out.display(),
        m.layout.total(),
        m.stats.augmented_nnz,
        m.stats.d_xyz.nnz
    );
    Ok(())
}

#[derive(Serialize)]
struct DecodeLine {
    converged: bool,
    iterations: usize,
    observable_mask: ObsMask,
    weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    member: Option<usize>,
}

fn decode(args: DecodeArgs) -> Result<()> {
    let (gm, _) = model_io::read_model(&args.model)?;
    let graph = DecoderGraph::new(&gm);
    let reader: Box<dyn BufRead> = if args.syndromes.as_os_str() == "-" {
        Box::new(BufReader::new(io::stdin().lock()))
    } else {
        Box::new(BufReader::new(
            File::open(&args.syndromes).with_context(|| format!("opening {}", args.syndromes.display()))?,
        ))
    };
    let cfg = args.decoder.config(args.seed);
    let mut out = output(None)?;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let input = parse_syndrome_line(line, graph.num_x_checks(), graph.num_z_checks())
            .with_context(|| format!("{} line {}", args.syndromes.display(), i + 1))?;
        let (o, member) = match args.decoder.ensemble {
            Some(size) => {
                let ec = EnsembleConfig { size, base_seed: args.decoder.base_seed.unwrap_or(args.seed), decoder: cfg.clone() };
                let e = ensemble_decode_with_graph(&graph, &input, &ec)?;
                (e.outcome, Some(e.member))
            }
            None => (decode_with_graph(&graph, &input, &cfg)?, None),
        };
        let line = DecodeLine {
            converged: o.converged,
            iterations: o.iterations,
            observable_mask: o.predicted_obs,
            weight: o.weight,
            member,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

fn write_report(out: &mut dyn Write, report: &ExperimentReport, format: Format) -> Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, report)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "{}", ExperimentReport::CSV_HEADER)?;
            writeln!(out, "{}", report.csv_row())?;
        }
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (cm, gm, header_rounds) = load_models(&args.dem)?;
    let graph = DecoderGraph::new(&gm);
    let cfg = ExperimentConfig {
        shots: args.shots,
        rounds: args.rounds.or(header_rounds).unwrap_or(1),
        physical_p_label: args.p_label,
        seed: args.seed,
        decoder: args.decoder.config(args.seed),
        decoding: match args.decoder.ensemble {
            Some(size) => Decoding::Ensemble { size, base_seed: args.decoder.base_seed.unwrap_or(args.seed) },
            None => Decoding::Single,
        },
        latency: args.per_iter_ns.map(|per_iter_ns| LatencyParams { per_iter_ns, budget_ns_per_round: args.budget_ns }),
    };
    let report = match &args.records {
        Some(path) => {
            let (report, records) = run_experiment_with_records(&cm, &graph, &cfg)?;
            let mut w = output(Some(path))?;
            writeln!(w, "shot,converged,iterations,member,failed")?;
            for r in records {
                writeln!(w, "{},{},{},{},{}", r.shot, r.converged as u8, r.iterations, r.member, r.failed as u8)?;
            }
            w.flush()?;
            report
        }
        None => run_experiment(&cm, &graph, &cfg)?,
    };
    let mut out = output(args.out.as_deref())?;
    write_report(&mut out, &report, args.format)?;
    out.flush()?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    init_workers()?;
    match cli.command {
        Command::Inspect(a) => inspect(a),
        Command::Transform(a) => transform(a),
        Command::Decode(a) => decode(a),
        Command::Simulate(a) => simulate(a),
    }
}

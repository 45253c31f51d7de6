//! `mgpc`: toy data, training, compression and multi-generation experiments.

mod fsutil;
mod plan;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use mgpc_core::codec::{bpp_from_bytes, decompress, Codec, CodecModel, IdempotentControlCodec, LearnedCodec};
use mgpc_core::multigen::{
    average_dcr, drop_curves, parse_trace_csv, run_multigen, summary_deltas, summary_endpoints, trace_rows,
    write_trace_csv, GenerationTrace, TraceRow,
};
use mgpc_core::pointcloud::{parse_ply, toy_cloud, write_ply, PlyFormat};
use mgpc_core::training::{log_csv, ConstraintSet, TrainConfig, Trainer, LOG_HEADER, RATE_POINTS};
use rayon::prelude::*;

use fsutil::{read, read_text, write_atomic};
use plan::{parse_plan, Cell, CodecRef};

#[derive(Parser)]
#[command(name = "mgpc", version, about = "Learned point-cloud attribute codec and multi-generation lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Binary,
}

impl From<Format> for PlyFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Ascii => PlyFormat::Ascii,
            Format::Binary => PlyFormat::BinaryLe,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic colored cube-surface cloud.
    MakeToyData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        points: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
    },
    /// Train a codec model from a flat key = value config.
    Train {
        /// Training config; omitted keys take the reference defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training clouds (PLY); repeatable.
        #[arg(long = "data", required = true)]
        data: Vec<PathBuf>,
        /// Overrides the config's constraint set.
        #[arg(long)]
        constraint: Option<ConstraintSet>,
        /// Overrides the config's lambda.
        #[arg(long)]
        lambda: Option<f64>,
        /// Overrides the config's epoch count.
        #[arg(long)]
        epochs: Option<usize>,
        /// Start from the settings of the small-scale preset.
        #[arg(long)]
        desk: bool,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Training log CSV; appended to when resuming.
        #[arg(long)]
        log: PathBuf,
    },
    /// Compress a cloud's colors.
    Compress {
        #[arg(long)]
        input: PathBuf,
        /// Checkpoint path, or `control` for the idempotent reference codec.
        #[arg(long)]
        model: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Decode colors onto the geometry of a reference cloud.
    Decompress {
        #[arg(long)]
        input: PathBuf,
        /// PLY supplying point positions (colors are ignored).
        #[arg(long)]
        geometry: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value = "binary")]
        format: Format,
    },
    /// Run the cells of an experiment plan.
    Multigen {
        #[arg(long)]
        plan: PathBuf,
        /// Overrides the plan's `jobs`.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Aggregate trace CSVs into summary tables and plot data.
    Report {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Usage/validation failures exit with 2, everything else with 1.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type CmdResult = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn load_cloud(path: &Path) -> anyhow::Result<mgpc_core::pointcloud::PointCloud> {
    parse_ply(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn load_codec(model: &str) -> anyhow::Result<(Box<dyn Codec>, Option<CodecModel>)> {
    if model == "control" {
        return Ok((Box::new(IdempotentControlCodec::new()), None));
    }
    let m = CodecModel::from_checkpoint(&read(Path::new(model))?).with_context(|| format!("loading {model}"))?;
    Ok((Box::new(LearnedCodec::new(model, m.clone())), Some(m)))
}

fn rate_point_label(lambda_id: u8) -> String {
    RATE_POINTS
        .get(lambda_id as usize)
        .map(|l| format!("lambda{l}"))
        .unwrap_or_else(|| "custom".into())
}

fn cmd_make_toy_data(out: &Path, points: usize, seed: u64, format: Format) -> CmdResult {
    if points == 0 {
        return Err(usage("--points must be positive"));
    }
    let cloud = toy_cloud(points, seed).map_err(|e| anyhow!(e))?;
    write_atomic(out, &write_ply(&cloud, format.into()).map_err(|e| anyhow!(e))?)?;
    println!("wrote {} points to {}", cloud.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    config: Option<&Path>,
    data: &[PathBuf],
    constraint: Option<ConstraintSet>,
    lambda: Option<f64>,
    epochs: Option<usize>,
    desk: bool,
    resume: Option<&Path>,
    checkpoint: &Path,
    log: &Path,
) -> CmdResult {
    let mut cfg = if desk {
        TrainConfig::desk(ConstraintSet::Baseline, 1000.0)
    } else {
        TrainConfig::default()
    };
    if let Some(path) = config {
        cfg.apply_text(&read_text(path)?).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(c) = constraint {
        cfg.constraint = c;
    }
    if let Some(l) = lambda {
        cfg.set("lambda", &l.to_string()).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let clouds = data.iter().map(|p| load_cloud(p)).collect::<anyhow::Result<Vec<_>>>()?;
    let mut trainer = match resume {
        Some(p) => Trainer::from_checkpoint(cfg.clone(), &read(p)?).map_err(|e| anyhow!(e))?,
        None => Trainer::new(cfg.clone()).map_err(|e| anyhow!(e))?,
    };
    let mut entries = Vec::new();
    while !trainer.finished() {
        let e = trainer.run_epoch(&clouds).map_err(|e| anyhow!(e))?;
        eprintln!(
            "epoch {:>4}  lr {:.2e}  rate {:.4}  D {:.6}  total {:.4}",
            e.epoch, e.lr, e.rate, e.distortion, e.total
        );
        entries.push(e);
    }
    write_atomic(checkpoint, &trainer.checkpoint().map_err(|e| anyhow!(e))?)?;

    let fresh = log_csv(&entries);
    let text = match (resume, std::fs::read_to_string(log)) {
        (Some(_), Ok(existing)) if existing.starts_with(LOG_HEADER) => {
            let mut s = existing;
            if !s.ends_with('\n') {
                s.push('\n');
            }
            s.push_str(fresh.split_once('\n').map_or("", |(_, body)| body));
            s
        }
        _ => fresh,
    };
    write_atomic(log, text.as_bytes())?;
    println!(
        "trained {} ({} epochs, lambda {}) -> {}",
        cfg.constraint,
        trainer.epoch(),
        cfg.weights.lambda,
        checkpoint.display()
    );
    Ok(())
}

fn cmd_compress(input: &Path, model: &str, output: &Path) -> CmdResult {
    let cloud = load_cloud(input)?;
    let (codec, _) = load_codec(model)?;
    let bytes = codec.compress(&cloud).map_err(|e| anyhow!(e))?;
    write_atomic(output, &bytes)?;
    let bpp = bpp_from_bytes(bytes.len(), cloud.len()).map_err(|e| anyhow!(e))?;
    println!("points {} bytes {} bpp {bpp:.6}", cloud.len(), bytes.len());
    Ok(())
}

fn cmd_decompress(input: &Path, geometry: &Path, model: &str, output: &Path, format: Format) -> CmdResult {
    let bytes = read(input)?;
    let geom = load_cloud(geometry)?;
    let cloud = match load_codec(model)? {
        (_, Some(m)) => {
            let out = decompress(&m, &bytes, geom.positions()).map_err(|e| anyhow!(e))?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            out.cloud
        }
        (codec, None) => codec.decompress(&bytes, geom.positions()).map_err(|e| anyhow!(e))?,
    };
    write_atomic(output, &write_ply(&cloud, format.into()).map_err(|e| anyhow!(e))?)?;
    println!("decoded {} points to {}", cloud.len(), output.display());
    Ok(())
}

struct CellOutcome {
    cell: Cell,
    rate_point: String,
    trace: GenerationTrace,
}

fn run_cell(cell: &Cell) -> anyhow::Result<CellOutcome> {
    let cloud = load_cloud(&cell.input)?;
    let (codec, model) = match &cell.codec {
        CodecRef::Control => load_codec("control")?,
        CodecRef::Checkpoint(p) => load_codec(&p.to_string_lossy())?,
    };
    let rate_point = cell.rate_point.clone().unwrap_or_else(|| match &model {
        Some(m) => rate_point_label(m.lambda_id()),
        None => "lossless".into(),
    });
    let trace = run_multigen(&cloud, codec.as_ref(), cell.generations).with_context(|| format!("cell `{}`", cell.label))?;
    Ok(CellOutcome {
        cell: cell.clone(),
        rate_point,
        trace,
    })
}

fn cmd_multigen(plan_path: &Path, jobs: Option<usize>) -> CmdResult {
    let base = plan_path.parent().unwrap_or(Path::new("."));
    let plan = parse_plan(&read_text(plan_path).map_err(|e| usage(format!("{e:#}")))?, base).map_err(usage)?;
    let jobs = jobs.unwrap_or(plan.jobs).max(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| anyhow!(e))?;
    let outcomes: Vec<CellOutcome> =
        pool.install(|| plan.cells.par_iter().map(run_cell).collect::<anyhow::Result<Vec<_>>>())?;

    // The convergence-rate normalizer is the largest drop across the plan.
    let max_drop = outcomes.iter().map(|o| o.trace.max_drop()).fold(0.0, f64::max);
    let mut all_rows: Vec<TraceRow> = Vec::new();
    for o in &outcomes {
        let rows = trace_rows(&o.cell.sequence, &o.cell.method, &o.rate_point, &o.trace, max_drop);
        let path = plan.output_dir.join("traces").join(format!("{}.csv", o.cell.label));
        write_atomic(&path, write_trace_csv(&rows).as_bytes())?;
        all_rows.extend(rows);
    }
    write_atomic(&plan.output_dir.join("summary_endpoints.csv"), summary_endpoints(&all_rows).as_bytes())?;
    write_atomic(&plan.output_dir.join("summary_deltas.csv"), summary_deltas(&all_rows).as_bytes())?;
    for o in &outcomes {
        let k = o.trace.len();
        println!(
            "{:<16} {:<10} bpp {:>8.4}  psnr_y_1 {:>7.3}  drop_{k} {:.4}",
            o.cell.label,
            o.cell.method,
            o.trace.generations[0].bpp,
            o.trace.generations[0].psnr_y,
            o.trace.drop(k).unwrap_or(0.0)
        );
    }
    Ok(())
}

fn cmd_report(traces: &Path, out: &Path) -> CmdResult {
    let mut files: Vec<PathBuf> = std::fs::read_dir(traces)
        .map_err(|e| usage(format!("reading {}: {e}", traces.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("no trace CSVs in {}", traces.display())));
    }
    let mut rows = Vec::new();
    for f in &files {
        rows.extend(parse_trace_csv(&read_text(f)?).map_err(|e| anyhow!("{}: {e}", f.display()))?);
    }

    // Recompute the convergence rate against the maximum drop of this set.
    let max_drop = rows.iter().map(|r| r.drop).fold(0.0, f64::max);
    for r in &mut rows {
        r.dcr = r.delta.map(|d| mgpc_core::multigen::drop_convergence_rate(d, max_drop));
    }
    write_atomic(&out.join("aggregate.csv"), write_trace_csv(&rows).as_bytes())?;
    write_atomic(&out.join("summary_endpoints.csv"), summary_endpoints(&rows).as_bytes())?;
    write_atomic(&out.join("summary_deltas.csv"), summary_deltas(&rows).as_bytes())?;
    write_atomic(&out.join("drop_curves.dat"), drop_curves(&rows).as_bytes())?;
    let mut dcr = String::from("# index method mean_drop_convergence_rate samples\n");
    for (i, (m, mean, n)) in average_dcr(&rows).into_iter().enumerate() {
        let v = mean.map(|v| v.to_string()).unwrap_or_else(|| "NaN".into());
        dcr.push_str(&format!("{i} {m} {v} {n}\n"));
    }
    write_atomic(&out.join("average_dcr.dat"), dcr.as_bytes())?;
    println!("aggregated {} traces ({} rows) into {}", files.len(), rows.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakeToyData {
            out,
            points,
            seed,
            format,
        } => cmd_make_toy_data(out, *points, *seed, *format),
        Command::Train {
            config,
            data,
            constraint,
            lambda,
            epochs,
            desk,
            resume,
            checkpoint,
            log,
        } => cmd_train(
            config.as_deref(),
            data,
            *constraint,
            *lambda,
            *epochs,
            *desk,
            resume.as_deref(),
            checkpoint,
            log,
        ),
        Command::Compress { input, model, output } => cmd_compress(input, model, output),
        Command::Decompress {
            input,
            geometry,
            model,
            output,
            format,
        } => cmd_decompress(input, geometry, model, output, *format),
        Command::Multigen { plan, jobs } => cmd_multigen(plan, *jobs),
        Command::Report { traces, out } => cmd_report(traces, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

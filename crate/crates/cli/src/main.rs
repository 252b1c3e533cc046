//! Command-line runner: train, evaluate, plot, and compare runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pcdgan_core::config::{ModelKind, TrainConfig};
use pcdgan_core::eval::EvalProtocol;
use pcdgan_core::nn::Checkpoint;
use pcdgan_core::plot;
use pcdgan_core::synthetic::ExampleId;
use pcdgan_core::train;

/// Continuous-conditional GAN laboratory on 2D mixture benchmarks.
#[derive(Parser)]
#[command(name = "pcdgan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write its run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint over the condition sweep.
    Eval(EvalArgs),
    /// Emit SVG plots for finished runs.
    Plot(PlotArgs),
    /// Tabulate metrics across runs into one CSV.
    Compare(CompareArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Benchmark example (1 = uniform data, 2 = imbalanced data).
    #[arg(long)]
    example: Option<u8>,
    /// Model variant.
    #[arg(long)]
    model: Option<String>,
    /// Random seed (controls data, init, and training).
    #[arg(long)]
    seed: Option<u64>,
    /// Flat key=value config file; CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Extra key=value overrides (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output root (default: $PCDGAN_OUT or ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run directory name (default: ex<e>-<model>-s<seed>).
    #[arg(long)]
    run_id: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Use the full reported protocol (100 conditions, 10 repeats).
    #[arg(long)]
    full_protocol: bool,
    /// Number of sweep conditions.
    #[arg(long)]
    conditions: Option<usize>,
    /// Repeats per condition.
    #[arg(long)]
    repeats: Option<usize>,
    /// Generated samples per condition.
    #[arg(long)]
    samples: Option<usize>,
    /// Disable the parallel sweep (results are identical either way).
    #[arg(long)]
    sequential: bool,
    /// Where to write the report (default: the checkpoint's directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    /// Run directories (need eval_report.csv and checkpoint_final.txt).
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    /// Condition for the design scatter.
    #[arg(long, default_value_t = 0.4)]
    condition: f64,
    /// Points in the scatter.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Directory for the cross-run metric SVGs.
    #[arg(long, default_value = "plots")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Run directories with eval summaries.
    #[arg(long, required = true, num_args = 1..)]
    runs: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

fn out_root(cli_value: Option<PathBuf>) -> PathBuf {
    cli_value
        .or_else(|| std::env::var_os("PCDGAN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Plot(args) => cmd_plot(args),
        Command::Compare(args) => cmd_compare(args),
    }
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::from_file(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => {
            let (Some(example), Some(model), Some(seed)) =
                (args.example, args.model.as_deref(), args.seed)
            else {
                bail!("without --config, all of --example, --model, --seed are required");
            };
            TrainConfig::new(ExampleId::from_u8(example)?, model.parse::<ModelKind>()?, seed)
        }
    };
    if let Some(example) = args.example {
        cfg.example = ExampleId::from_u8(example)?;
    }
    if let Some(model) = args.model.as_deref() {
        cfg.model = model.parse()?;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(steps) = args.steps {
        cfg.steps = steps;
    }
    for kv in &args.sets {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.apply_kv(k.trim(), v.trim())?;
    }
    cfg.enforce_model_constraints();
    cfg.validate()?;

    let root = out_root(args.out);
    let output = train::train(&cfg, &root, args.run_id.as_deref())?;
    println!("run directory: {}", output.run_dir.display());
    println!("checkpoint:    {}", output.checkpoint.display());
    println!("loss log:      {}", output.log.display());
    if output.vicinity_resamples > 0 {
        println!("vicinity resamples: {}", output.vicinity_resamples);
    }
    if output.jitter_escalations > 0 {
        println!("jitter escalations: {}", output.jitter_escalations);
    }
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let mut protocol = if args.full_protocol {
        EvalProtocol::full()
    } else {
        EvalProtocol::desk()
    };
    if let Some(v) = args.conditions {
        protocol.n_conditions = v;
    }
    if let Some(v) = args.repeats {
        protocol.repeats = v;
    }
    if let Some(v) = args.samples {
        protocol.samples_per_condition = v;
    }
    if args.sequential {
        protocol.parallel = false;
        protocol.diversity.parallel = false;
    }
    let (report, csv, summary) =
        train::evaluate_checkpoint(&args.checkpoint, &protocol, args.out.as_deref())?;
    println!("report:  {}", csv.display());
    println!("summary: {}", summary.display());
    println!(
        "label_error {:.4} +/- {:.4} | likelihood {:.3} +/- {:.3} | diversity {:.2} +/- {:.2}",
        report.label_error.mean,
        report.label_error.std,
        report.likelihood.mean,
        report.likelihood.std,
        report.diversity.mean,
        report.diversity.std
    );
    Ok(())
}

fn run_label(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| dir.display().to_string())
}

fn cmd_plot(args: PlotArgs) -> Result<()> {
    use pcdgan_core::eval::{EvalCell, EvalReport};

    let mut per_run: Vec<(String, Vec<EvalCell>)> = Vec::new();
    for dir in &args.runs {
        let report_path = dir.join("eval_report.csv");
        if !report_path.exists() {
            bail!(
                "{} has no eval_report.csv; run `pcdgan eval` on its checkpoint first",
                dir.display()
            );
        }
        let cells = EvalReport::read_cells(&report_path)?;
        per_run.push((run_label(dir), cells));

        // Per-run scatter over the performance contour.
        let ckpt_path = dir.join("checkpoint_final.txt");
        if ckpt_path.exists() {
            let ckpt = Checkpoint::load(&ckpt_path)?;
            let seed = ckpt
                .meta_value("seed")
                .and_then(|s| s.parse::<u64>().ok())
                .unwrap_or(0);
            let pts = train::sample_designs(&ckpt, args.condition, args.samples, seed)?;
            let path = dir.join(format!("scatter_c{}.svg", args.condition));
            plot::scatter_svg(&pts, args.condition, &run_label(dir), &path)?;
            println!("wrote {}", path.display());
        }
    }

    std::fs::create_dir_all(&args.out)?;
    let metrics: [(&str, fn(&EvalCell) -> f64); 3] = [
        ("label_error", |c| c.label_error),
        ("likelihood", |c| c.likelihood),
        ("diversity", |c| c.diversity),
    ];
    for (name, metric) in metrics {
        let curves: Vec<plot::MetricCurve> = per_run
            .iter()
            .map(|(label, cells)| plot::curve_from_cells(label, cells, metric))
            .collect();
        let path = args.out.join(format!("{name}.svg"));
        plot::metric_curves_svg(name, &curves, &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let mut summaries = Vec::new();
    for dir in &args.runs {
        summaries.push(
            plot::load_run_summary(dir)
                .with_context(|| format!("loading run summary from {}", dir.display()))?,
        );
    }
    plot::write_comparison_csv(&summaries, &args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sparsemf_harness::output::{AGGREGATE_FILE, RESULTS_FILE};
use sparsemf_harness::{load_spec, report, run_and_export, AggregateRow, Kind, Overrides, RunOptions, SpecFile};

/// Sparse matrix factorization experiments.
#[derive(Parser)]
#[command(name = "sparsemf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One tuned run with a per-iteration trace.
    Single(RunArgs),
    /// Grid over rho and H.
    Sweep(RunArgs),
    /// Grid over the noise level.
    SigmaSweep(RunArgs),
    /// Runs with k held fixed, relative to each trial's tuned k or at given values.
    FixedK(RunArgs),
    /// Factorize a grayscale PGM image.
    Image(ImageArgs),
    /// Rebuild the aggregate CSV from a stored results file.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec (flat TOML).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// One worker, no timing fields: reruns are byte-identical.
    #[arg(long)]
    serial: bool,
    /// Record every n-th iteration in traces.
    #[arg(long)]
    stride: Option<u64>,
}

#[derive(Args)]
struct ImageArgs {
    #[command(flatten)]
    run: RunArgs,
    /// PGM file; overrides the spec's `image`.
    #[arg(long)]
    image: Option<PathBuf>,
}

fn print_rows(rows: &[AggregateRow]) {
    println!(
        "{:<40} {:>5} {:>6} {:>12} {:>12} {:>12} {:>10} {:>10}",
        "cell", "runs", "failed", "rmse_a", "rmse_b", "rmse_v", "sparsity", "truth"
    );
    let f = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.5}"));
    for r in rows {
        println!(
            "{:<40} {:>5} {:>6} {:>12} {:>12} {:>12} {:>10} {:>10}",
            r.cell.label(),
            r.runs,
            r.failed,
            f(r.rmse_a.mean),
            f(r.rmse_b.mean),
            f(r.rmse_v.mean),
            f(r.sparsity_b.mean),
            f(r.truth_zero_fraction.mean),
        );
    }
}

fn execute(kind: Kind, args: RunArgs, image: Option<PathBuf>) -> Result<bool, Box<dyn std::error::Error>> {
    let file = match &args.spec {
        Some(p) => load_spec(p)?,
        None => SpecFile::default(),
    };
    let ov = Overrides {
        seed: args.seed,
        out: args.out,
        stride: args.stride,
        image,
    };
    let spec = file.resolve(kind, &ov)?;
    let mut opts = if args.serial {
        RunOptions::serial()
    } else {
        RunOptions::default()
    };
    if let (Some(w), false) = (args.workers, args.serial) {
        opts.workers = w;
    }
    let outcome = run_and_export(&spec, opts)?;
    print_rows(&sparsemf_harness::aggregate(&outcome.records));
    for r in outcome.records.iter().filter(|r| !r.succeeded()) {
        eprintln!(
            "{} trial {}: {}",
            r.cell.label(),
            r.trial,
            r.error.as_deref().unwrap_or("")
        );
    }
    if let Some(rho) = spec.rho_grid.first().filter(|_| !spec.kind.is_image()) {
        println!("reference zero fraction: rho = {rho}; slab-weight reading 1 - rho = {:.4}", 1.0 - rho);
    }
    println!(
        "wrote {} and {} under {}",
        RESULTS_FILE,
        AGGREGATE_FILE,
        spec.output_dir.display()
    );
    Ok(outcome.all_succeeded())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Single(a) => execute(Kind::SingleRun, a, None),
        Command::Sweep(a) => execute(Kind::RhoHSweep, a, None),
        Command::SigmaSweep(a) => execute(Kind::SigmaSweep, a, None),
        Command::FixedK(a) => execute(Kind::FixedKAblation, a, None),
        Command::Image(a) => execute(Kind::ImageRun, a.run, a.image),
        Command::Report { out } => report(&out)
            .map(|rows| {
                print_rows(&rows);
                rows.iter().all(|r| r.failed == 0)
            })
            .map_err(Into::into),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

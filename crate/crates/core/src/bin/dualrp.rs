use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dualrp::cli::{config_from_table, exit_code_for, parse_config_text, parse_value, run_experiment};
use dualrp::io::write_dataset_csv;
use dualrp::model::{make_decaying_spectrum, make_low_rank, LabelRule};
use dualrp::sketch::{gaussian_matrix, write_sketch_matrix};
use dualrp::Error;

#[derive(Parser)]
#[command(name = "dualrp", about = "Sketched regularized ERM with dual recovery", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in a config file
    Run(Common),
    /// Recover the solution from one sketch (naive, drp or ridge-closed)
    Recover(Common),
    /// Iterative dual recovery
    Iterate(Common),
    /// Compare naive and dual recovery on the same sketch
    NaiveVsDrp(Common),
    /// Error of the sketched solution as a measurement of the full one
    Measurement(Common),
    /// In-span error of the naive recovery
    SpanError(Common),
    /// Spectral deviation of Gaussian matrices
    Concentration(Common),
    /// Sample-size bounds
    Bounds(Common),
    /// Dual recovery on a full-rank decaying spectrum
    FullRank(Common),
    /// Write a generated dataset as CSV
    Generate(Generate),
    /// Write a Gaussian sketch matrix to a binary file
    Sketch(SketchArgs),
}

#[derive(Args, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<String>,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    decay: Option<String>,
    #[arg(long)]
    labels: Option<String>,
    #[arg(long = "data-file")]
    data_file: Option<String>,
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Integer, `bound` or `identity`
    #[arg(long = "sketch-dim")]
    sketch_dim: Option<String>,
    #[arg(long = "sketch-file")]
    sketch_file: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    iters: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long = "max-iters")]
    max_iters: Option<String>,
    #[arg(long)]
    trials: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "full-rank")]
    full_rank: bool,
    #[arg(long)]
    spectrum: Option<String>,
    /// Skip the exact reference solve
    #[arg(long = "no-reference")]
    no_reference: bool,
}

#[derive(Args)]
struct Generate {
    #[arg(long, default_value = "low_rank")]
    dataset: String,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, default_value_t = 1.0)]
    decay: f64,
    #[arg(long, default_value = "sign_of_plant")]
    labels: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SketchArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

fn table_from(experiment: Option<&str>, args: &Common) -> dualrp::Result<toml::Table> {
    let mut table = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            parse_config_text(&text)?
        }
        None => toml::Table::new(),
    };
    if let Some(e) = experiment {
        table.insert("experiment".into(), toml::Value::String(e.into()));
    }
    let flags = [
        ("output", &args.output),
        ("format", &args.format),
        ("dataset", &args.dataset),
        ("d", &args.d),
        ("n", &args.n),
        ("rank", &args.rank),
        ("decay", &args.decay),
        ("labels", &args.labels),
        ("data_file", &args.data_file),
        ("loss", &args.loss),
        ("lambda", &args.lambda),
        ("sketch_dim", &args.sketch_dim),
        ("sketch_file", &args.sketch_file),
        ("epsilon", &args.eps),
        ("delta", &args.delta),
        ("c", &args.c),
        ("method", &args.method),
        ("iters", &args.iters),
        ("tol", &args.tol),
        ("max_iters", &args.max_iters),
        ("trials", &args.trials),
        ("seed", &args.seed),
        ("spectrum_file", &args.spectrum),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            let parsed = match key {
                // paths and names stay strings even when they look numeric
                "output" | "data_file" | "sketch_file" | "spectrum_file" | "loss" => toml::Value::String(v.clone()),
                _ => parse_value(v),
            };
            table.insert(key.into(), parsed);
        }
    }
    if args.full_rank {
        table.insert("full_rank".into(), toml::Value::Boolean(true));
    }
    if args.no_reference {
        table.insert("reference".into(), toml::Value::Boolean(false));
    }
    Ok(table)
}

fn run(experiment: Option<&str>, args: &Common) -> i32 {
    let outcome = table_from(experiment, args)
        .and_then(|t| config_from_table(&t))
        .and_then(|config| run_experiment(&config).map(|report| (config, report)));
    let (config, report) = match outcome {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    let rendered = report.render(config.format);
    match &config.output {
        Some(path) => {
            if let Err(e) = report.write(path, config.format) {
                eprintln!("error: {e}");
                return exit_code_for(&e);
            }
        }
        None => {
            // a closed pipe (e.g. `| head`) is not an error
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{rendered}");
        }
    }
    for r in report.records.iter().filter(|r| r.error.is_some()) {
        eprintln!("trial {} (seed {}) failed: {}", r.trial, r.seed, r.error.as_deref().unwrap_or(""));
    }
    report.exit_code()
}

fn generate(args: &Generate) -> dualrp::Result<()> {
    let data = match args.dataset.as_str() {
        "low_rank" => make_low_rank(args.d, args.n, args.rank, args.labels.parse::<LabelRule>()?, args.seed)?,
        "decaying" => make_decaying_spectrum(args.d, args.n, args.decay, args.seed)?,
        other => {
            return Err(Error::Config {
                key: "dataset".into(),
                reason: format!("expected low_rank or decaying, got `{other}`"),
            })
        }
    };
    write_dataset_csv(&args.output, &data)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Run(a) => {
            if a.config.is_none() {
                eprintln!("error: run needs --config");
                2
            } else {
                run(None, a)
            }
        }
        Command::Recover(a) => run(Some("recover"), a),
        Command::Iterate(a) => run(Some("iterate"), a),
        Command::NaiveVsDrp(a) => run(Some("naive_vs_drp"), a),
        Command::Measurement(a) => run(Some("measurement"), a),
        Command::SpanError(a) => run(Some("span_error"), a),
        Command::Concentration(a) => run(Some("concentration"), a),
        Command::Bounds(a) => run(Some("bounds"), a),
        Command::FullRank(a) => run(Some("full_rank"), a),
        Command::Generate(g) => match generate(g) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
        Command::Sketch(s) => match gaussian_matrix(s.d, s.m, s.seed).and_then(|r| write_sketch_matrix(&s.output, &r, s.seed)) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                exit_code_for(&e)
            }
        },
    };
    ExitCode::from(code as u8)
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use punn::constructive::{FitConfig, FitNet};
use punn_cli::density::{run_density, DensitySetup, Target};
use punn_cli::experiment::write_records;
use punn_cli::export::{explain, write_grid};
use punn_cli::{ablate, run_and_write, CliError, ExperimentConfig, ModelFile, Sweep};

#[derive(Parser)]
#[command(name = "punn", version, about = "Train and inspect partition of unity classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Partitions,
    Harmonics,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate the experiment in a config file.
    Run {
        config: PathBuf,
        /// Overrides the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the gate-by-gate decision for one input.
    Explain {
        model: PathBuf,
        /// Comma-separated raw feature values.
        #[arg(long, allow_hyphen_values = true)]
        input: String,
        #[arg(long)]
        json: bool,
    },
    /// Evaluate a 2-D model on a grid and write CSV.
    ExportGrid {
        model: PathBuf,
        /// x1_min,x1_max,x2_min,x2_max in raw units.
        #[arg(long, allow_hyphen_values = true)]
        bounds: String,
        #[arg(long, default_value_t = 300)]
        resolution: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Refit a known probability map with MLP gates of increasing width.
    DensityDemo {
        #[arg(long, value_enum, default_value_t = Target::RandomPunn)]
        target: Target,
        #[arg(long, default_value_t = 3)]
        partitions: usize,
        #[arg(long, default_value_t = 40)]
        resolution: usize,
        /// Comma-separated hidden widths.
        #[arg(long, default_value = "2,4,8,16")]
        widths: String,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// JSON lines output; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the number of partitions or the harmonic degree.
    Ablate {
        config: PathBuf,
        #[arg(long, value_enum)]
        sweep: SweepArg,
        /// Comma-separated values.
        #[arg(long)]
        values: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{what}: '{v}' is not a valid value")))
        })
        .collect()
}

fn load_config(path: &PathBuf, out: Option<PathBuf>) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = load_config(&config, out)?;
            let (outputs, summary) = run_and_write(&cfg)?;
            let test = summary
                .test_accuracy
                .map_or_else(|| "n/a".to_string(), |t| format!("{} ± {}", pct(t.mean), pct(t.std)));
            println!(
                "{}: {} seeds, params {}, train {} ± {}, test {}",
                cfg.name,
                summary.runs.len(),
                summary.runs[0].param_count,
                pct(summary.train_accuracy.mean),
                pct(summary.train_accuracy.std),
                test
            );
            println!("metrics: {}", outputs.metrics.display());
            for p in outputs.models.iter().chain(&outputs.grids) {
                println!("wrote {}", p.display());
            }
        }
        Command::Explain { model, input, json } => {
            let file = ModelFile::load(&model)?;
            let x: Vec<f64> = parse_list(&input, "input")?;
            let e = explain(&file, &x)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&e).expect("explanation serializes"));
            } else {
                print!("{}", e.render());
            }
        }
        Command::ExportGrid { model, bounds, resolution, out } => {
            let file = ModelFile::load(&model)?;
            let b: Vec<f64> = parse_list(&bounds, "bounds")?;
            let b: [f64; 4] = b
                .try_into()
                .map_err(|_| CliError::Config("bounds: expected four values".into()))?;
            let rows = write_grid(&file, b, resolution, &out)?;
            println!("wrote {rows} grid rows to {}", out.display());
        }
        Command::DensityDemo { target, partitions, resolution, widths, epochs, lr, seed, out } => {
            let setup = DensitySetup {
                target,
                partitions,
                resolution,
                widths: parse_list(&widths, "widths")?,
                fit: FitConfig {
                    net: FitNet::Mlp { hidden: vec![] },
                    epochs,
                    learning_rate: lr,
                    batch_size: None,
                    seed,
                },
                ..DensitySetup::default()
            };
            let points = run_density(&setup)?;
            let lines: Vec<String> = points
                .iter()
                .map(|p| serde_json::to_string(p).expect("sweep point serializes"))
                .collect();
            match out {
                Some(path) => {
                    std::fs::write(&path, lines.join("\n") + "\n")?;
                    for p in &points {
                        println!(
                            "hidden {:?}: sup error {:.5} (bound {:.5}, {} params)",
                            p.hidden, p.sup_error, p.telescoping_bound, p.param_count
                        );
                    }
                }
                None => lines.iter().for_each(|l| println!("{l}")),
            }
        }
        Command::Ablate { config, sweep, values, out } => {
            let cfg = load_config(&config, out)?;
            let sweep = match sweep {
                SweepArg::Partitions => Sweep::Partitions,
                SweepArg::Harmonics => Sweep::HarmonicDegree,
            };
            let rows = ablate(&cfg, sweep, &parse_list(&values, "values")?)?;
            std::fs::create_dir_all(&cfg.output_dir)?;
            let path = cfg.output_dir.join(format!("{}.ablation.jsonl", cfg.name));
            let records: Vec<_> = rows.iter().flat_map(|r| r.records.clone()).collect();
            write_records(&path, &records)?;
            println!("{:>6} {:>8} {:>16}", "value", "params", "test acc (%)");
            for r in &rows {
                println!("{:>6} {:>8} {:>9} ± {:<5}", r.value, r.params, pct(r.test_mean), pct(r.test_std));
            }
            println!("metrics: {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

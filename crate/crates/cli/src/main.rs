use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use srclass::classifiers::ClassifierKind;
use srclass_cli::{cmd_benchmark, cmd_fit, cmd_predict, cmd_tally, FitArgs};

#[derive(Parser)]
#[command(name = "srclass", version, about = "Symbolic-regression classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one classifier on an 80/20 split and save the model
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// Label column name or zero-based index
        #[arg(long, default_value = "target")]
        label: String,
        /// GPLearnClf, CartesianClf or ClaSyCo
        #[arg(long)]
        classifier: ClassifierKind,
        /// e.g. n_pop=50,n_gens=30 or n_rows=2,n_columns=20,maxiter=300
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Print one predicted label per data row
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run replicate hyperparameter studies described by a config file
    Benchmark {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print each classifier's share of benchmark wins
    Tally {
        #[arg(long)]
        records: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Fit {
            data,
            label,
            classifier,
            params,
            seed,
            out: model_out,
            test_fraction,
        } => cmd_fit(
            &FitArgs {
                data,
                label,
                classifier,
                params,
                seed,
                out: model_out,
                test_fraction,
            },
            &mut out,
        ),
        Command::Predict { model, data } => cmd_predict(&model, &data, &mut out),
        Command::Benchmark { config } => cmd_benchmark(&config, &mut out),
        Command::Tally { records } => cmd_tally(&records, &mut out),
    };
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

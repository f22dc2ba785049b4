mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::{Run, Split};
use config::RunConfig;
use error::{CliError, CliResult};

/// Train, evaluate and inspect tree tensor network image classifiers.
#[derive(Parser, Debug)]
#[command(name = "ttn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model for a class pair, or one yes/no model per class.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory for models, traces and the manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy and confusion matrix of a trained run.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Directory written by `train`.
        #[arg(long)]
        models: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Defaults to the models directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fidelities between class states and their entanglement entropies.
    Analyze {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Per-layer renormalized vectors of every sample, one CSV per layer.
    ExportEmbeddings {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        models: PathBuf,
        /// Class whose model is used; defaults to the first.
        #[arg(long)]
        class: Option<usize>,
        /// Layers to export, e.g. `0,2,4` or `0-4`; defaults to all.
        #[arg(long)]
        layers: Option<String>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

/// Settings shared by the data-driven commands. Each flag overrides the
/// matching key of `--config`.
#[derive(Args, Debug, Default)]
struct RunArgs {
    /// `key=value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["mnist", "cifar10"])]
    dataset: Option<String>,
    /// Falls back to the TTN_DATA_DIR environment variable.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Class labels, e.g. `0,1` (binary) or `0-9`.
    #[arg(long)]
    classes: Option<String>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    test_samples_per_class: Option<usize>,
    /// Pixel feature dimension.
    #[arg(long)]
    d: Option<usize>,
    /// Virtual bond dimension.
    #[arg(long)]
    chi: Option<usize>,
    /// Image side after rescaling (power of 2).
    #[arg(long)]
    side: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    /// Relative cost change that stops training.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Train on unit-normalized intermediate vectors.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    normalize: Option<bool>,
    /// Weight samples so yes and no targets count equally.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    balance: Option<bool>,
}

impl RunArgs {
    /// Config file entries followed by flag entries.
    fn overrides(&self) -> CliResult<Vec<(String, String)>> {
        let mut out = Vec::new();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            out = config::entries(&text, &path.display().to_string())?;
        }
        let mut flag = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                out.push((key.to_string(), v));
            }
        };
        flag("dataset", self.dataset.clone());
        flag("data_dir", self.data_dir.as_ref().map(|p| p.display().to_string()));
        flag("classes", self.classes.clone());
        flag("samples_per_class", self.samples_per_class.map(|v| v.to_string()));
        flag(
            "test_samples_per_class",
            self.test_samples_per_class.map(|v| v.to_string()),
        );
        flag("d", self.d.map(|v| v.to_string()));
        flag("chi", self.chi.map(|v| v.to_string()));
        flag("side", self.side.map(|v| v.to_string()));
        flag("sweeps", self.sweeps.map(|v| v.to_string()));
        flag("tol", self.tol.map(|v| v.to_string()));
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("threads", self.threads.map(|v| v.to_string()));
        flag("normalize", self.normalize.map(|v| v.to_string()));
        flag("balance", self.balance.map(|v| v.to_string()));
        Ok(out)
    }

    fn config(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::default();
        for (k, v) in self.overrides()? {
            cfg.set(&k, &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Caps the worker pool. Results do not depend on the count.
fn set_threads(n: Option<usize>) -> CliResult<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(format!("threads: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { run, out } => {
            let cfg = run.config()?;
            set_threads(cfg.threads)?;
            commands::train_cmd(&cfg, &out)
        }
        Command::Eval {
            run,
            models,
            split,
            out,
        } => {
            let r = Run::open(&models, &run.overrides()?)?;
            set_threads(r.config.threads)?;
            commands::eval_cmd(&r, split.into(), out.as_ref().unwrap_or(&models)).map(|_| ())
        }
        Command::Analyze { models, out, threads } => {
            let r = Run::open(&models, &[])?;
            set_threads(threads.or(r.config.threads))?;
            commands::analyze_cmd(&r, out.as_ref().unwrap_or(&models))
        }
        Command::ExportEmbeddings {
            run,
            models,
            class,
            layers,
            split,
            out,
        } => {
            let r = Run::open(&models, &run.overrides()?)?;
            set_threads(r.config.threads)?;
            let layers = layers.map(|l| config::parse_list("layers", &l)).transpose()?;
            commands::export_cmd(
                &r,
                class,
                layers.as_deref(),
                split.into(),
                out.as_ref().unwrap_or(&models),
            )
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}

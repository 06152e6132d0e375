use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scamsweeper::config::{Overrides, PipelineConfig, ResolveError};
use scamsweeper::core::train::Ablation;
use scamsweeper::pipeline::{self, PipelineError, Run, SplitSide};
use scamsweeper::report;

#[derive(Parser)]
#[command(name = "scamsweeper", version, about = "Malicious-account detection on transaction graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML pipeline config; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for generation, sampling, splitting and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    structural_window: Option<usize>,
    /// Interval width in seconds.
    #[arg(long, global = true)]
    interval_width: Option<u64>,
    #[arg(long, global = true)]
    walks_per_node: Option<usize>,
    #[arg(long, global = true, value_enum)]
    ablation: Option<AblationArg>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    NoGraphLayer,
    ConventionalTransformer,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::None => Ablation::None,
            AblationArg::NoGraphLayer => Ablation::NoGraphLayer,
            AblationArg::ConventionalTransformer => Ablation::ConventionalTransformer,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Train,
    Test,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic transaction graph.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Parse transaction and label files into a binary graph.
    Ingest {
        #[arg(long)]
        transactions: PathBuf,
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Sample walk subgraph sequences into a walk cache.
    Sample {
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model and write its checkpoint and held-out metrics.
    Train {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        walks: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Score a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        walks: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SideArg,
        #[command(flatten)]
        common: Common,
    },
    /// Train the full model and both ablations on a shared split.
    Ablate {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        walks: PathBuf,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Synth { common }
            | Command::Ingest { common, .. }
            | Command::Sample { common, .. }
            | Command::Train { common, .. }
            | Command::Eval { common, .. }
            | Command::Ablate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Ingest { .. } => "ingest",
            Command::Sample { .. } => "sample",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
        }
    }
}

fn run(cmd: &Command) -> Result<String, PipelineError> {
    let c = cmd.common();
    let overrides = Overrides {
        seed: c.seed,
        structural_window: c.structural_window,
        interval_width: c.interval_width,
        walks_per_node: c.walks_per_node,
        ablation: c.ablation.map(Into::into),
        threads: c.threads,
    };
    let cfg = PipelineConfig::resolve(c.config.as_deref(), &overrides).map_err(|e| match e {
        ResolveError::Io(e) => PipelineError::Io(e),
        ResolveError::Config(e) => PipelineError::Config(e),
    })?;
    let run = Run::new(cfg, c.config.clone());
    let out = &c.out;
    Ok(match cmd {
        Command::Synth { .. } => pipeline::summary_table(&run.synth(out)?),
        Command::Ingest { transactions, labels, .. } => pipeline::summary_table(&run.ingest(transactions, labels.as_deref(), out)?),
        Command::Sample { graph, .. } => {
            let s = run.sample(graph, out)?;
            format!("starts {}  walks {}  mean subgraphs per walk {:.2}  tau {:.1}s\n", s.starts, s.walks, s.mean_subgraphs, s.tau)
        }
        Command::Train { graph, walks, .. } => {
            let s = run.train(graph, walks, out)?;
            format!("best epoch {} of {}\n{}", s.best_epoch, s.epochs_run, report::metrics_table(&s.report))
        }
        Command::Eval { checkpoint, graph, walks, split, .. } => {
            let side = match split {
                SideArg::Train => SplitSide::Train,
                SideArg::Test => SplitSide::Test,
                SideArg::All => SplitSide::All,
            };
            let m = run.eval(checkpoint, graph, walks, side, out)?;
            let table: Vec<String> = m
                .per_class
                .iter()
                .map(|(k, v)| format!("{k:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}", v.precision, v.recall, v.f1, v.support))
                .collect();
            format!("{}\nweighted f1 {:.4}  macro f1 {:.4}\n", table.join("\n"), m.weighted_f1, m.macro_f1)
        }
        Command::Ablate { graph, walks, .. } => report::ablation_table(&run.ablate(graph, walks, out)?.rows),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(table) => {
            print!("{table}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let line = serde_json::json!({
                "error": e.kind(),
                "code": e.exit_code(),
                "command": cli.command.name(),
                "message": e.to_string(),
            });
            eprintln!("{line}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irtree_fuzzy::eval::AucScore;
use irtree_fuzzy::fuzzy::Domain;
use irtree_fuzzy::pipeline::{self, PipelineConfig, PipelineError, Shape};

/// Fit IRTree models to rating data and map responses to fuzzy numbers.
#[derive(Parser)]
#[command(name = "irtree-fuzzy", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate ratings and response times for one scenario.
    Simulate(Common),
    /// Fit an IRTree model by marginal maximum likelihood.
    Fit(Common),
    /// Turn a fit into one fuzzy number per observed rating.
    Fuzzify(Common),
    /// Summarize a fuzzy table per person and overall.
    Summarize(Common),
    /// Score how well fuzzy precision predicts fast responses.
    Evaluate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ratings CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Tree JSON, builtin:<linear3|nested5|six_schema1|six_schema2>, or linear:<M>.
    #[arg(long)]
    tree: Option<String>,
    /// common, per_node_independent, per_node_correlated, or a model JSON.
    #[arg(long)]
    model: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// beta, tri-moment or tri-quantile.
    #[arg(long)]
    shape: Option<Shape>,
    /// Probability threshold for quantile triangles.
    #[arg(long)]
    tau: Option<f64>,
    /// Replications per scenario.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    quad_nodes: Option<usize>,
    /// Scenario JSON (one cell, or a list for evaluate).
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Fit document to fuzzify.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Fuzzy table to summarize.
    #[arg(long)]
    fuzzy: Option<PathBuf>,
    /// normalized or raw.
    #[arg(long)]
    domain: Option<Domain>,
    /// Also write membership curves.
    #[arg(long)]
    curves: bool,
    /// classified or probability.
    #[arg(long)]
    score: Option<AucScore>,
    /// Report progress on stderr.
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn config(self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v.into(); })*
            };
        }
        set!(
            data => data,
            tree => tree,
            model => model,
            out => out,
            seed => seed,
            scenario => scenario,
            fit => fit_result,
            fuzzy => fuzzy,
            reps => evaluate.reps,
            shape => fuzzify.shape,
            tau => fuzzify.tau,
            domain => fuzzify.domain,
            quad_nodes => fit.quad_nodes,
            score => evaluate.score,
        );
        cfg.fuzzify.curves |= self.curves;
        cfg.verbosity = cfg.verbosity.max(self.verbose);
        Ok(cfg)
    }
}

fn run(command: Command) -> Result<(), PipelineError> {
    match command {
        Command::Simulate(c) => pipeline::cmd_simulate(&c.config()?).map(drop),
        Command::Fit(c) => pipeline::cmd_fit(&c.config()?).map(drop),
        Command::Fuzzify(c) => pipeline::cmd_fuzzify(&c.config()?).map(drop),
        Command::Summarize(c) => pipeline::cmd_summarize(&c.config()?).map(drop),
        Command::Evaluate(c) => pipeline::cmd_evaluate(&c.config()?).map(drop),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use statemerge::experiment::{
    cmd_bigram, cmd_eval, cmd_inspect, cmd_merge, cmd_synth, render_report, RunConfig,
    SynthOutputs, MODEL_FILE, SUMMARY_FILE, TRACE_FILE,
};
use statemerge::inference::{OovPolicy, ScoreMode};
use statemerge::synth::SynthParams;

#[derive(Parser)]
#[command(
    name = "statemerge",
    version,
    about = "Markov model induction by state merging"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the word-bigram baseline and report its log perplexity.
    Bigram(RunArgs),
    /// Run state merging and write model, trace and summary.
    Merge(RunArgs),
    /// Score a corpus with a stored model.
    Eval(EvalArgs),
    /// Sample a random generator model and a corpus from it.
    Synth(SynthArgs),
    /// Print statistics of a stored model.
    Inspect { model: PathBuf },
}

/// Every flag overrides the config-file key of the same name.
#[derive(Args)]
struct RunArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, alias = "train_path")]
    train_path: Option<String>,
    #[arg(long, alias = "test_path")]
    test_path: Option<String>,
    #[arg(long, alias = "extra_test_path")]
    extra_test_path: Option<String>,
    #[arg(long, alias = "lexicon_path")]
    lexicon_path: Option<String>,
    /// e.g. `unigram:12500,none`
    #[arg(long)]
    schedule: Option<String>,
    /// target_states:N | max_merges:N | train_lp_threshold:X | held_out_minimum:PATIENCE
    #[arg(long)]
    stop: Option<String>,
    /// trivial | bigram
    #[arg(long)]
    start: Option<String>,
    /// viterbi | forward
    #[arg(long)]
    mode: Option<String>,
    /// floor | strict
    #[arg(long, alias = "oov_policy")]
    oov_policy: Option<String>,
    #[arg(long, alias = "smoothing_alpha")]
    smoothing_alpha: Option<String>,
    #[arg(long, alias = "log_every")]
    log_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long, alias = "output_dir")]
    output_dir: Option<String>,
    #[arg(long, alias = "reviterbi_every")]
    reviterbi_every: Option<String>,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let flags = [
            ("train_path", &self.train_path),
            ("test_path", &self.test_path),
            ("extra_test_path", &self.extra_test_path),
            ("lexicon_path", &self.lexicon_path),
            ("schedule", &self.schedule),
            ("stop", &self.stop),
            ("start", &self.start),
            ("mode", &self.mode),
            ("oov_policy", &self.oov_policy),
            ("smoothing_alpha", &self.smoothing_alpha),
            ("log_every", &self.log_every),
            ("seed", &self.seed),
            ("output_dir", &self.output_dir),
            ("reviterbi_every", &self.reviterbi_every),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "viterbi")]
    mode: ScoreMode,
    #[arg(long, alias = "oov_policy", default_value = "floor")]
    oov_policy: OovPolicy,
    #[arg(long, alias = "smoothing_alpha", default_value_t = 0.0)]
    smoothing_alpha: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    states: usize,
    #[arg(long)]
    alphabet: usize,
    #[arg(long)]
    utterances: usize,
    #[arg(long, alias = "test_utterances", default_value_t = 0)]
    test_utterances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Training corpus output.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, alias = "test_out")]
    test_out: Option<PathBuf>,
    /// Generator model output.
    #[arg(long, alias = "model_out")]
    model_out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Bigram(args) => {
            let report = cmd_bigram(&args.config()?)?;
            print!("{report}");
        }
        Command::Merge(args) => {
            let cfg = args.config()?;
            let summary = cmd_merge(&cfg)?;
            print!("{summary}");
            for f in [MODEL_FILE, TRACE_FILE, SUMMARY_FILE] {
                println!("wrote {}", cfg.output_dir.join(f).display());
            }
        }
        Command::Eval(a) => {
            let report = cmd_eval(&a.model, &a.corpus, a.mode, a.oov_policy, a.smoothing_alpha)?;
            print!("{}", render_report(&report));
        }
        Command::Synth(a) => {
            if a.test_utterances > 0 && a.test_out.is_none() {
                anyhow::bail!(statemerge::Error::Config(
                    "--test-utterances needs --test-out".into()
                ));
            }
            let params = SynthParams {
                states: a.states,
                alphabet: a.alphabet,
                utterances: a.utterances,
                test_utterances: a.test_utterances,
                seed: a.seed,
            };
            let out = SynthOutputs {
                train: a.out,
                test: a.test_out,
                model: a.model_out,
            };
            let s = cmd_synth(&params, &out)?;
            println!("utterances = {}", s.train.len());
            println!("test_utterances = {}", s.test.len());
            println!("tokens = {}", s.train.iter().map(Vec::len).sum::<usize>());
            println!("generator_states = {}", s.generator.num_states());
        }
        Command::Inspect { model } => {
            print!("{}", cmd_inspect(&model)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<statemerge::Error>())
        .map_or(2, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

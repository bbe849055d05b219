mod commands;
mod config;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::*;

/// Speech-driven gesture generation: corpus preparation, training,
/// synthesis and evaluation.
#[derive(Parser)]
#[command(name = "gesture", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic speech/gesture corpus in the on-disk clip layout
    MakeCorpus(MakeCorpusFlags),
    /// Validate, normalize, window and split a clip corpus
    Preprocess(PreprocessFlags),
    /// Train the gesture generator
    Train(TrainFlags),
    /// Train the autoencoder whose features define FGD
    TrainExtractor(ExtractorFlags),
    /// Generate an animation for a transcript and audio file
    Synthesize(SynthesizeFlags),
    /// Score generated gestures against a corpus split
    Evaluate(EvaluateFlags),
    /// Measure metric responses to synthetic noise on human motion
    NoiseBench(NoiseBenchFlags),
    /// Per-speaker style statistics on one speech sample
    StyleMap(StyleMapFlags),
    /// FGD between outputs before and after word substitutions
    TextAlter(TextAlterFlags),
}

fn class_of(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<gesture_core::Error>() {
            return c.class();
        }
        if cause.is::<run::Locked>() {
            return "locked";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "usage"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MakeCorpus(f) => make_corpus(f),
        Command::Preprocess(f) => preprocess(f),
        Command::Train(f) => train(f),
        Command::TrainExtractor(f) => train_extractor(f),
        Command::Synthesize(f) => synthesize(f),
        Command::Evaluate(f) => evaluate(f),
        Command::NoiseBench(f) => noise_bench(f),
        Command::StyleMap(f) => style_map(f),
        Command::TextAlter(f) => text_alter(f),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error[{}]: {msg}", class_of(&e));
            ExitCode::FAILURE
        }
    }
}

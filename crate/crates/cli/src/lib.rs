//! Command-line surface: `decode`, `bench`, `verify`, and `tune`.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 verification
//! failure. Set `MPG_LOG=info` or `MPG_LOG=debug` for decode event logs.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use mpg_core::baselines::DecoderKind;
use mpg_core::bench::{run_benchmark, synthetic_prompts};
use mpg_core::model::{load_model_file, LanguageModel, TokenSequence, ToyModel};
use mpg_core::verify::run_builtin_suite;
use mpg_core::{Error, RunConfig};

#[derive(Parser)]
#[command(
    name = "mpg",
    about = "Multi-preference decoding: speculative chunk-level rejection sampling over toy and remote language models",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a continuation for a prompt and print tokens plus statistics
    /// as JSON.
    Decode(DecodeArgs),
    /// Run decoders over a prompt set and report efficiency metrics.
    Bench(BenchArgs),
    /// Compare samplers against the brute-force oracle; exits 2 on breach.
    Verify(VerifyArgs),
    /// Coordinate-search the preference weights against a synthetic
    /// accuracy target.
    Tune(TuneArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Comma-separated model files; the first is the reference, the rest
    /// are preference models.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<PathBuf>,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    models: ModelArgs,
    /// Run-configuration JSON file (defaults apply when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Prompt as space-separated token ids (empty when omitted).
    #[arg(long)]
    prompt: Option<String>,
    /// Override the configured preference weights.
    #[arg(long)]
    alphas: Option<String>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the JSON output to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    models: ModelArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Decoders to benchmark.
    #[arg(long, value_delimiter = ',', default_values_t = DecoderKind::ALL)]
    decoders: Vec<DecoderKind>,
    /// Number of synthetic prompts.
    #[arg(long, default_value_t = 100)]
    prompts: usize,
    /// Explicit prompt (token ids) instead of synthetic prompts.
    #[arg(long)]
    prompt: Option<String>,
    /// Override max_new_tokens.
    #[arg(long = "max-new")]
    max_new: Option<usize>,
    #[arg(long)]
    alphas: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the JSON report to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name: seq-rs-exactness, chunk-conditional, identity-reduction,
    /// or all.
    #[arg(long, default_value = "all")]
    suite: String,
    /// Override the per-suite sample count.
    #[arg(long)]
    samples: Option<u64>,
    /// Override the per-suite TV threshold.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the verification report JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TuneArgs {
    /// Hidden optimum of the synthetic accuracy callback.
    #[arg(long, default_value = "1,0,-9,-3")]
    optimum: String,
    /// Starting weights.
    #[arg(long, default_value = "1,1,1,1")]
    init: String,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long = "step-size", default_value_t = 0.1)]
    step_size: f64,
    /// Write the full tuning trajectory JSON to this path.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Errors carrying the process exit code.
enum CliError {
    Config(String),
    Verification,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json error: {e}"))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Config(format!("io error: {e}"))
    }
}

/// Entry point shared by the binary and tests; returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Decode(args) => run_decode(args),
        Command::Bench(args) => run_bench(args),
        Command::Verify(args) => run_verify(args),
        Command::Tune(args) => run_tune(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Config(message)) => {
            eprintln!("error: {message}");
            1
        }
        Err(CliError::Verification) => 2,
    }
}

fn parse_csv_f64(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("invalid {what} entry {part:?}")))
        })
        .collect()
}

fn parse_prompt(text: &str) -> Result<Vec<u32>, CliError> {
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    text.split_whitespace()
        .map(|part| {
            part.parse::<u32>()
                .map_err(|_| CliError::Config(format!("invalid prompt token {part:?}")))
        })
        .collect()
}

fn load_run_config(path: &Option<PathBuf>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            Ok(RunConfig::from_json(&text)?)
        }
        None => Ok(RunConfig::default()),
    }
}

struct LoadedModels {
    reference: ToyModel,
    preferences: Vec<ToyModel>,
}

impl LoadedModels {
    fn load(paths: &[PathBuf]) -> Result<Self, CliError> {
        if paths.is_empty() {
            return Err(CliError::Config("at least one model file required".into()));
        }
        let reference = load_model_file(&paths[0])?;
        let mut preferences = Vec::with_capacity(paths.len() - 1);
        for path in &paths[1..] {
            let model = load_model_file(path)?;
            if !reference.vocab().compatible(model.vocab()) {
                return Err(CliError::Config(format!(
                    "model {} does not share the reference vocabulary",
                    path.display()
                )));
            }
            preferences.push(model);
        }
        Ok(Self {
            reference,
            preferences,
        })
    }

    fn pref_refs(&self) -> Vec<&dyn LanguageModel> {
        self.preferences
            .iter()
            .map(|m| m as &dyn LanguageModel)
            .collect()
    }
}

fn apply_overrides(
    config: &mut RunConfig,
    alphas: &Option<String>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    if let Some(text) = alphas {
        config.alphas = parse_csv_f64(text, "alphas")?;
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    Ok(())
}

/// Print without panicking when stdout is a closed pipe (e.g. `| head`).
fn print_text(text: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<(), CliError> {
    print_text(text);
    if let Some(path) = out {
        fs::write(path, text)?;
    }
    Ok(())
}

fn run_decode(args: DecodeArgs) -> Result<(), CliError> {
    let mut config = load_run_config(&args.config)?;
    apply_overrides(&mut config, &args.alphas, args.seed)?;
    let models = LoadedModels::load(&args.models.models)?;
    // With no preference models the reference scores itself: all density
    // ratios are one and the run reduces to reference sampling.
    let prefs = if models.preferences.is_empty() && config.decoder != DecoderKind::Base {
        vec![&models.reference as &dyn LanguageModel]
    } else {
        models.pref_refs()
    };
    if config.decoder != DecoderKind::Base && prefs.len() != config.alphas.len() {
        return Err(CliError::Config(format!(
            "{} preference models for {} weights",
            prefs.len(),
            config.alphas.len()
        )));
    }
    let prompt_tokens = parse_prompt(args.prompt.as_deref().unwrap_or(""))?;
    let prompt = TokenSequence::checked(prompt_tokens, models.reference.vocab())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = config.decode_config();
    let mut rng = rand::rngs::StdRng::seed_from_u64(config.seed);

    let (sequence, stats) = match config.decoder {
        DecoderKind::Base => mpg_core::base_decode(&models.reference, &cfg, &prompt, &mut rng)?,
        DecoderKind::Mod => mpg_core::mod_decode(
            &models.reference,
            &prefs,
            &config.alphas,
            &cfg,
            &prompt,
            &mut rng,
        )?,
        DecoderKind::SeqRs => {
            let weights = config.weights()?;
            let log_m = mpg_core::oracle::max_log_score(
                &models.reference,
                &prefs,
                &weights,
                &prompt,
                cfg.max_new_tokens,
            )? + cfg.gamma.ln();
            mpg_core::seq_rs_decode(
                &models.reference,
                &prefs,
                &weights,
                &cfg,
                &prompt,
                log_m,
                &mut rng,
            )?
        }
        DecoderKind::TokenRs => {
            let weights = config.weights()?;
            mpg_core::token_rs_decode(&models.reference, &prefs, &weights, &cfg, &prompt, &mut rng)?
        }
        DecoderKind::Scr => {
            let weights = config.weights()?;
            mpg_core::decode(&models.reference, &prefs, &weights, &cfg, &prompt, &mut rng)?
        }
    };

    let continuation = &sequence.tokens()[prompt.len()..];
    let mut output = serde_json::json!({
        "decoder": config.decoder.name(),
        "prompt": prompt.tokens(),
        "tokens": sequence.tokens(),
        "continuation": continuation,
        "stats": stats,
    });
    if models.reference.vocab().labels().is_some() {
        output["display"] = serde_json::Value::String(sequence.display(models.reference.vocab()));
    }
    emit(&serde_json::to_string_pretty(&output)?, &args.out)
}

fn run_bench(args: BenchArgs) -> Result<(), CliError> {
    let mut config = load_run_config(&args.config)?;
    apply_overrides(&mut config, &args.alphas, args.seed)?;
    if let Some(max_new) = args.max_new {
        config.max_new_tokens = max_new;
    }
    let models = LoadedModels::load(&args.models.models)?;
    let prefs = if models.preferences.is_empty() {
        vec![&models.reference as &dyn LanguageModel]
    } else {
        models.pref_refs()
    };
    let cfg = config.decode_config();
    let prompts = match &args.prompt {
        Some(text) => {
            let tokens = parse_prompt(text)?;
            let prompt = TokenSequence::checked(tokens, models.reference.vocab())
                .map_err(|e| CliError::Config(e.to_string()))?;
            vec![prompt]
        }
        None => synthetic_prompts(models.reference.vocab(), args.prompts, config.seed),
    };
    let report = run_benchmark(
        &models.reference,
        &prefs,
        &config.alphas,
        &cfg,
        &prompts,
        &args.decoders,
    )?;
    print_text(report.to_table().trim_end());
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn run_verify(args: VerifyArgs) -> Result<(), CliError> {
    let report = run_builtin_suite(&args.suite, args.samples, args.threshold, args.seed)?;
    for result in &report.results {
        print_text(&format!(
            "{}: {} - tv = {:.5} (threshold {}, {} samples, seed {})",
            result.name,
            if result.pass { "PASS" } else { "FAIL" },
            result.tv,
            result.threshold,
            result.samples,
            result.seed
        ));
    }
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Verification)
    }
}

fn run_tune(args: TuneArgs) -> Result<(), CliError> {
    let optimum = parse_csv_f64(&args.optimum, "optimum")?;
    let init = parse_csv_f64(&args.init, "init")?;
    if optimum.len() != init.len() {
        return Err(CliError::Config(format!(
            "optimum has {} entries but init has {}",
            optimum.len(),
            init.len()
        )));
    }
    let state = mpg_core::tune_alpha(
        |alphas| {
            Ok(alphas
                .iter()
                .zip(&optimum)
                .map(|(a, o)| -(a - o).powi(2))
                .collect())
        },
        &init,
        args.steps,
        args.step_size,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    let best = state.best().expect("non-empty history");
    print_text(&format!(
        "best alphas {:?} (mean accuracy {:.6}) after {} steps / {} evaluations",
        best.alphas,
        best.mean_accuracy,
        state.steps_completed,
        state.history.len()
    ));
    if let Some(path) = &args.out {
        fs::write(path, serde_json::to_string_pretty(&state)?)?;
    }
    Ok(())
}

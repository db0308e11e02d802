use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use descopt_core::config::{ConfigFile, EmbedderSpec, Session};
use descopt_core::embed::{mock_archives, EmbeddingArchive, MockArchiveSpec};
use descopt_core::evolution::RunOutputs;
use descopt_core::scoring::{feedback_to_text, visual_feedback};
use descopt_core::{ClassLabel, DescriptorSet, Error, LabeledEmbedding, PromptStyle, VisualFeedback};
use serde_json::json;

#[derive(Parser)]
#[command(name = "descopt", version, about = "Evolve per-class text descriptors for zero-shot classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the optimizer described by a config file.
    Optimize(OptimizeArgs),
    /// Score a descriptor set on an image archive and print a JSON report.
    Evaluate(EvalArgs),
    /// Print the feedback text given to the LLM, then the same data as JSON.
    Feedback(EvalArgs),
    /// Write synthetic text and image archives.
    EmbedMock(EmbedMockArgs),
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides n_iterations.
    #[arg(long)]
    iterations: Option<u32>,
    /// Overrides rng_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue from a checkpoint; without a path, the latest one in the output directory.
    #[arg(long, num_args = 0..=1, value_name = "CHECKPOINT")]
    resume: Option<Option<PathBuf>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Style {
    Plain,
    PhotoPrefix,
}

impl From<Style> for PromptStyle {
    fn from(s: Style) -> Self {
        match s {
            Style::Plain => PromptStyle::Plain,
            Style::PhotoPrefix => PromptStyle::PhotoPrefix,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    descriptors: PathBuf,
    #[arg(long)]
    images: PathBuf,
    /// `mock:<dim>`, `archive:<path>` or `command:<program> [args]`.
    #[arg(long)]
    text_embedder: String,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, default_value_t = 3)]
    top_m: usize,
    #[arg(long, value_enum, default_value_t = Style::Plain)]
    style: Style,
}

#[derive(Args)]
struct EmbedMockArgs {
    /// File with one class name per line.
    #[arg(long)]
    classes: PathBuf,
    /// Descriptor set whose prompts are added to the text archive.
    #[arg(long)]
    descriptors: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    dimension: usize,
    #[arg(long, default_value_t = 20)]
    images_per_class: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Style::Plain)]
    style: Style,
    /// Directory receiving text.emb and images.emb.
    #[arg(long)]
    out: PathBuf,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Provider(_) | Error::Parse(_) | Error::Iteration { .. } => 2,
        _ => 3,
    }
}

fn optimize(args: OptimizeArgs) -> Result<(), Error> {
    let mut config = ConfigFile::load(&args.config)?;
    if let Some(n) = args.iterations {
        config.run.n_iterations = n;
    }
    if let Some(seed) = args.seed {
        config.run.rng_seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    config.run.validate()?;
    let resume = match args.resume {
        None => None,
        Some(Some(path)) => Some(path),
        Some(None) => Some(
            RunOutputs::new(&config.out_dir)
                .latest_checkpoint()?
                .ok_or_else(|| Error::Config(format!("no checkpoint under {}", config.out_dir.display())))?,
        ),
    };
    let session = Session::open(config)?;
    let outcome = session.run(resume.as_deref())?;

    let mut summary = json!({
        "iterations": outcome.state.iteration,
        "best_fitness": outcome.best_fitness,
        "final_fitness": outcome.log.last().map(|l| l.fitness),
        "tokens": outcome.state.tokens_used,
        "final_descriptors": RunOutputs::new(&session.config.out_dir).final_descriptors_path(),
    });
    if let Some(test_path) = &session.config.test_archive {
        let test = EmbeddingArchive::read(test_path)?.into_records();
        let mut cache = session.cache.clone();
        let style = session.config.run.prompt_style;
        cache.ensure_set(&outcome.best, style, session.embedder.as_ref())?;
        let fb = visual_feedback(&test, &outcome.best, &cache, style, session.config.run.lambda, session.config.run.top_m)?;
        summary["test_accuracy"] = json!(fb.overall_accuracy);
    }
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn evaluate_feedback(args: &EvalArgs) -> Result<(VisualFeedback, usize), Error> {
    let ds = DescriptorSet::load(&args.descriptors)?;
    let images: Vec<LabeledEmbedding> = EmbeddingArchive::read(&args.images)?.into_records();
    let mut missing: Vec<&ClassLabel> = images.iter().map(|i| &i.label).filter(|c| !ds.contains(c)).collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        let names: Vec<&str> = missing.iter().map(|c| c.as_str()).collect();
        return Err(Error::Data(format!("descriptors missing for classes: {}", names.join(", "))));
    }
    if images.is_empty() {
        return Err(Error::Data(format!("{} holds no images", args.images.display())));
    }
    let style = args.style.into();
    let (embedder, mut cache) = EmbedderSpec::parse(&args.text_embedder, Path::new("."))?.build()?;
    cache.ensure_set(&ds, style, embedder.as_ref())?;
    let fb = visual_feedback(&images, &ds, &cache, style, args.lambda, args.top_m)?;
    Ok((fb, images.len()))
}

fn evaluate(args: EvalArgs) -> Result<(), Error> {
    let (fb, n) = evaluate_feedback(&args)?;
    let report = json!({
        "n_images": n,
        "overall_accuracy": fb.overall_accuracy,
        "per_class_accuracy": fb.per_class_accuracy,
        "confusion_rows": fb.confusion_rows,
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    Ok(())
}

fn feedback(args: EvalArgs) -> Result<(), Error> {
    let (fb, _) = evaluate_feedback(&args)?;
    print!("{}", feedback_to_text(&fb));
    println!("{}", serde_json::to_string_pretty(&fb).expect("feedback serializes"));
    Ok(())
}

fn embed_mock(args: EmbedMockArgs) -> Result<(), Error> {
    let text = std::fs::read_to_string(&args.classes).map_err(|e| Error::io(&args.classes, e))?;
    let classes = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(ClassLabel::new)
        .collect::<Result<Vec<_>, _>>()?;
    let descriptors = args.descriptors.as_deref().map(DescriptorSet::load).transpose()?;
    let spec = MockArchiveSpec {
        dimension: args.dimension,
        images_per_class: args.images_per_class,
        sigma: args.sigma,
        seed: args.seed,
        style: args.style.into(),
    };
    let (texts, images) = mock_archives(&classes, descriptors.as_ref(), &spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    texts.write(&args.out.join("text.emb"))?;
    images.write(&args.out.join("images.emb"))?;
    log::info!("wrote {} prompts and {} images to {}", texts.len(), images.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Optimize(a) => optimize(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Feedback(a) => feedback(a),
        Command::EmbedMock(a) => embed_mock(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("descopt: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

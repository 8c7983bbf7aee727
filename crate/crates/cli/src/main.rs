use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use chimera_core::analysis::{profile, ProfileAxis, DEFAULT_CUTOFF};
use chimera_core::cache::{load_cache, save_cache, FeatureCache};
use chimera_core::config::{BackendKind, MorphConfig};
use chimera_core::denoiser::TextConditioning;
use chimera_core::engine::{Engine, ID_A, ID_B};
use chimera_core::io::{load_image_as, load_sequence};
use chimera_core::metrics::{
    evaluate, EmbeddingCosine, EuclideanDistance, EvalOptions, MorphPair, ProjectionEmbedder, Providers,
};
use chimera_core::pipeline::{
    acquire_prompts, build_backend, caption_pair, run_pair, text_encoder, vlm_client, PromptSource, RunError,
    RunRequest,
};
use chimera_core::prompting::{PromptTexts, PromptTriplet};
use chimera_core::Error;

const EXIT_INPUT: u8 = 2;
const EXIT_BACKEND: u8 = 3;
const EXIT_VLM: u8 = 4;
const VLM_URL_ENV: &str = "CHIMERA_VLM_URL";

#[derive(Parser)]
#[command(name = "chimera", version, about = "Zero-shot diffusion image morphing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a morph sequence between two images.
    Run(RunArgs),
    /// Score a stored sequence.
    Eval(EvalArgs),
    /// Ask a vision-language model for the anchor prompt and captions.
    Caption(CaptionArgs),
    /// Frequency-band profile of cached inversion features.
    AnalyzeFreq(FreqArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat JSON config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Toy backend weight seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Inversion and denoising step count.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Toy,
    Adapter,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
    pair: Vec<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Disable anchor-prompt attention.
    #[arg(long)]
    no_sap: bool,
    /// Cache injection weight for every stage.
    #[arg(long)]
    lambda: Option<f64>,
    /// Prompt triplet JSON, skipping the VLM.
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    vlm_url: Option<String>,
    #[arg(long)]
    contact_sheet: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value = "embed")]
    provider: String,
    /// Output directory for metrics.json and metrics.csv (defaults to --seq).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CaptionArgs {
    #[arg(long, num_args = 2, value_names = ["A", "B"], required = true)]
    pair: Vec<PathBuf>,
    #[arg(long)]
    vlm_url: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Triplet JSON destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Layer,
    Timestep,
}

#[derive(Args)]
struct FreqArgs {
    /// Invert this pair to build the cache.
    #[arg(long, num_args = 2, value_names = ["A", "B"], conflicts_with = "cache")]
    pair: Vec<PathBuf>,
    /// Read a saved .chimcache instead.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Keep the cache built from --pair.
    #[arg(long)]
    save_cache: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "layer")]
    axis: AxisArg,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: e.to_string(),
        }
    }

    fn backend(e: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_BACKEND,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn load_config(args: &ConfigArgs) -> Result<MorphConfig, Failure> {
    let mut cfg = match &args.config {
        Some(p) => MorphConfig::from_file(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        None => MorphConfig::default(),
    };
    if let Some(b) = args.backend {
        cfg.backend = match b {
            BackendArg::Toy => BackendKind::Toy,
            BackendArg::Adapter => BackendKind::Adapter,
        };
    }
    if let Some(s) = args.seed {
        cfg.toy_seed = s;
    }
    if let Some(n) = args.steps {
        cfg.n_inv = n;
        cfg.n_dng = n;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn env_vlm_url(flag: &Option<String>) -> Option<String> {
    flag.clone()
        .or_else(|| std::env::var(VLM_URL_ENV).ok().filter(|s| !s.is_empty()))
}

fn read_prompts(path: &Path) -> Result<PromptTexts, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let mut cfg = load_config(&args.cfg)?;
    if let Some(k) = args.frames {
        cfg.frames = k;
    }
    if let Some(l) = args.lambda {
        cfg.set_lambda_all(l);
    }
    if args.no_sap {
        cfg.sap = false;
    }
    cfg.validate().map_err(Failure::input)?;
    let (a, b) = (&args.pair[0], &args.pair[1]);
    for p in [a, b] {
        if !p.is_file() {
            return Err(Failure::input(format!("cannot read {}", p.display())));
        }
    }
    let (prompts, source) = match &args.prompts {
        Some(p) => (read_prompts(p)?, PromptSource::Given),
        None => {
            let client = vlm_client(&cfg, env_vlm_url(&args.vlm_url).as_deref());
            acquire_prompts(client.as_ref(), a, b, &cfg.vlm_model)
        }
    };
    let req = RunRequest {
        path_a: a,
        path_b: b,
        out_dir: &args.out,
        prompts,
        prompt_source: source,
        contact_sheet: args.contact_sheet,
    };
    let manifest = run_pair(&cfg, req).map_err(|e| match e {
        RunError::Input(e) => Failure::input(e),
        RunError::Backend(e) => Failure::backend(e),
    })?;
    info!("wrote {} frames to {}", manifest.frames.len(), args.out.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    if !matches!(args.provider.as_str(), "embed" | "cosine") {
        return Err(Failure::input(format!(
            "unknown provider `{}` (expected `embed`)",
            args.provider
        )));
    }
    let seq = load_sequence(&args.seq).map_err(Failure::input)?;
    let embedder = ProjectionEmbedder::default();
    let similarity = EmbeddingCosine::new(ProjectionEmbedder::default());
    let providers = Providers {
        similarity: &similarity,
        embedder: &embedder,
        distance: &EuclideanDistance,
    };
    let pair = MorphPair {
        a: &seq.a,
        b: &seq.b,
        frames: &seq.frames,
    };
    let opts = EvalOptions {
        gamma: args.gamma,
        ..EvalOptions::default()
    };
    let report = evaluate(pair, seq.latents.as_deref(), &providers, opts).map_err(Failure::input)?;
    let out = args.out.unwrap_or(args.seq);
    std::fs::create_dir_all(&out).map_err(Failure::input)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(out.join("metrics.json"), json).map_err(Failure::input)?;
    std::fs::write(out.join("metrics.csv"), report.to_csv()).map_err(Failure::input)?;
    println!(
        "GLCS {:.3} (GCS {:.3}, LCS {:.3})",
        report.glcs_display, report.gcs_display, report.lcs_display
    );
    Ok(())
}

fn cmd_caption(args: CaptionArgs) -> CmdResult {
    let cfg = match &args.config {
        Some(p) => MorphConfig::from_file(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        None => MorphConfig::default(),
    };
    let Some(client) = vlm_client(&cfg, env_vlm_url(&args.vlm_url).as_deref()) else {
        return Err(Failure::input(format!(
            "no VLM endpoint: pass --vlm-url or set {VLM_URL_ENV}"
        )));
    };
    let model = args.model.unwrap_or_else(|| cfg.vlm_model.clone());
    let texts = caption_pair(&client, &args.pair[0], &args.pair[1], &model).map_err(|e| match e {
        Error::Io(_) => Failure::input(e),
        other => Failure {
            code: EXIT_VLM,
            message: other.to_string(),
        },
    })?;
    let json = serde_json::to_string_pretty(&texts).expect("prompts serialize");
    match args.out {
        Some(p) => std::fs::write(&p, json).map_err(Failure::input)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn build_cache(cfg: &MorphConfig, a: &Path, b: &Path) -> Result<FeatureCache, Failure> {
    let backend = build_backend(cfg).map_err(Failure::backend)?;
    let shape = backend.descriptor().image_shape;
    let img_a = load_image_as(a, shape).map_err(Failure::input)?;
    let img_b = load_image_as(b, shape).map_err(Failure::input)?;
    let prompts =
        PromptTriplet::embed(PromptTexts::new("", "", ""), &text_encoder(backend.as_ref())).map_err(Failure::input)?;
    let engine = Engine::new(backend.as_ref(), cfg.clone()).map_err(Failure::input)?;
    let mut cache = engine.new_cache();
    engine
        .invert(&img_a, &TextConditioning::single(&prompts.e_a), ID_A, &mut cache)
        .map_err(Failure::backend)?;
    engine
        .invert(&img_b, &TextConditioning::single(&prompts.e_b), ID_B, &mut cache)
        .map_err(Failure::backend)?;
    Ok(cache)
}

fn cmd_analyze_freq(args: FreqArgs) -> CmdResult {
    let cache = match (&args.cache, args.pair.as_slice()) {
        (Some(p), _) => load_cache(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?,
        (None, [a, b]) => {
            let cfg = load_config(&args.cfg)?;
            let cache = build_cache(&cfg, a, b)?;
            if let Some(p) = &args.save_cache {
                save_cache(&cache, p).map_err(Failure::input)?;
            }
            cache
        }
        _ => return Err(Failure::input("pass --pair A B or --cache FILE")),
    };
    let axis = match args.axis {
        AxisArg::Layer => ProfileAxis::Layer,
        AxisArg::Timestep => ProfileAxis::Timestep,
    };
    let prof = profile(&cache, axis, args.cutoff).map_err(Failure::input)?;
    match args.out {
        Some(p) => std::fs::write(&p, prof.to_csv()).map_err(Failure::input)?,
        None => print!("{}", prof.to_csv()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Caption(a) => cmd_caption(a),
        Command::AnalyzeFreq(a) => cmd_analyze_freq(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

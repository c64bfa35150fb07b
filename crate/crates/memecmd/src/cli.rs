//! Command-line interface: one binary, six subcommands.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error. All randomness
//! flows from `--seed`; `--mock` swaps every backend for the
//! deterministic offline ones and performs no network operations.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{ArgAction, Parser, Subcommand, ValueEnum};

use memecmd_core::aligner::{rank_top_k, score_distribution, Histogram, ImplicitSign};
use memecmd_core::backend::{embed_unit, ChatBackend, EmbeddingBackend, VisionBackend};
use memecmd_core::dialogue::TurnSummary;
use memecmd_core::library::{default_stopwords, keyword_stats, parse_stopwords, Dimension};
use memecmd_core::mock::{HashChat, HashEmbedding, HashVision};

use crate::config::{
    load_file_config, AlignerFileConfig, FileConfig, DEFAULT_MOCK_DIM,
};
use crate::evaluate::{
    consistency_tsv, evaluate_dataset_consistency, evaluate_dataset_judge, judge_tsv,
    load_sessions, summary_block, DatasetLabel,
};
use crate::http::{HttpChat, HttpEmbedding, HttpVision};
use crate::ops::{annotate_library, embed_library};
use crate::persist::{load_library, load_news, load_role_pairs, save_library};
use crate::pipeline::{run_batch, Backends, Mode, PipelineConfig, Sources, Strategy};

#[derive(Debug, Parser)]
#[command(
    name = "memecmd",
    version,
    about = "Generate Chinese multi-turn chat datasets with contextually retrieved memes"
)]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Global RNG seed; every random decision derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the deterministic offline backends; no network access.
    #[arg(long, global = true)]
    mock: bool,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    News,
    Role,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Greedy,
    Sampling,
    Random,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SignArg {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Consistency,
    Judge,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DimensionArg {
    SPlus,
    SMinus,
    Emotion,
    Motivation,
}

impl From<DimensionArg> for Dimension {
    fn from(d: DimensionArg) -> Dimension {
        match d {
            DimensionArg::SPlus => Dimension::SPlus,
            DimensionArg::SMinus => Dimension::SMinus,
            DimensionArg::Emotion => Dimension::Emotion,
            DimensionArg::Motivation => Dimension::Motivation,
        }
    }
}

fn parse_weights(s: &str) -> Result<[f64; 4], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        return Err("expected four comma-separated weights, e.g. 0.25,0.25,0.25,0.25".into());
    }
    let mut out = [0.0; 4];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad weight {part:?}: {e}"))?;
        if !slot.is_finite() {
            return Err(format!("weight {part:?} is not finite"));
        }
    }
    Ok(out)
}

/// Aligner flags shared by `generate`, `retrieve`, and `stats --scores`.
#[derive(Debug, Clone, Default, clap::Args)]
struct AlignerFlags {
    #[arg(long, allow_negative_numbers = true)]
    theta0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Top-K candidate count.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Sign of the implicit (emotion) component.
    #[arg(long, value_enum)]
    implicit_sign: Option<SignArg>,
    /// Component weights as w_scenario,w_penalty,w_implicit,w_motivation.
    #[arg(long, value_parser = parse_weights, allow_hyphen_values = true)]
    weights: Option<[f64; 4]>,
}

impl AlignerFlags {
    fn as_file_config(&self) -> AlignerFileConfig {
        AlignerFileConfig {
            theta0: self.theta0,
            delta: self.delta,
            lambda: self.lambda,
            k: self.k,
            strategy: self.strategy.map(|s| match s {
                StrategyArg::Greedy => Strategy::Greedy,
                StrategyArg::Sampling => Strategy::Sampling,
                StrategyArg::Random => Strategy::Random,
            }),
            implicit_sign: self.implicit_sign.map(|s| match s {
                SignArg::Positive => ImplicitSign::Positive,
                SignArg::Negative => ImplicitSign::Negative,
            }),
            weights: self.weights,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Annotate a directory of meme images into a library file.
    Annotate {
        /// Directory of png/jpg/jpeg/gif/webp files.
        #[arg(long)]
        images: PathBuf,
        /// Library file to write.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Provenance note stored in the library.
        #[arg(long)]
        source_manifest: Option<String>,
    },
    /// Embed the four annotation dimensions of every record.
    Embed {
        #[arg(long)]
        library: Option<PathBuf>,
        /// Output path; defaults to rewriting the input library.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Embedding dimension (mock backend only).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Generate a dataset of meme-enhanced dialogues.
    Generate {
        #[arg(long)]
        library: Option<PathBuf>,
        /// Dataset output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// News items file (JSONL), for news mode.
        #[arg(long)]
        news: Option<PathBuf>,
        /// Role pairs file (JSONL), for role mode.
        #[arg(long)]
        roles: Option<PathBuf>,
        #[arg(long)]
        turns: Option<u32>,
        #[arg(long)]
        sessions: Option<u32>,
        #[arg(long)]
        reply_limit: Option<usize>,
        #[arg(long)]
        scenarios_per_pair: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        #[command(flatten)]
        aligner: AlignerFlags,
    },
    /// Rank the Top-K memes for one (scenario, emotion, motivation) triple.
    Retrieve {
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        emotion: String,
        #[arg(long)]
        motivation: String,
        /// Table file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        aligner: AlignerFlags,
    },
    /// Score a generated dataset (cross-modal consistency or judge).
    Evaluate {
        /// Dataset directories (repeatable).
        #[arg(long = "dataset", required = true)]
        datasets: Vec<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "consistency")]
        method: MethodArg,
        /// Report file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keyword tables over annotations, or retrieval-score histograms.
    Stats {
        #[arg(long)]
        library: Option<PathBuf>,
        /// Restrict the keyword table to one dimension.
        #[arg(long, value_enum)]
        dimension: Option<DimensionArg>,
        /// Custom stop-token list (one token per line).
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// Dataset directory: compute the retrieval-score histogram over
        /// its logged summaries instead of keyword tables.
        #[arg(long, value_name = "DATASET")]
        scores: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        aligner: AlignerFlags,
    },
}

/// Parses `argv` and runs the selected command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    1
                }
            };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("memecmd: error: {e:#}");
            2
        }
    }
}

/// Resolved global settings: config file merged under the global flags.
struct Globals {
    file: FileConfig,
    seed: u64,
    mock: bool,
}

impl Globals {
    fn new(cli: &Cli) -> anyhow::Result<Self> {
        let file = match &cli.config {
            Some(path) => load_file_config(path)?,
            None => FileConfig::default(),
        };
        Ok(Globals {
            seed: cli.seed.or(file.seed).unwrap_or(0),
            mock: cli.mock || file.mock.unwrap_or(false),
            file,
        })
    }

    fn workers(&self, flag: Option<usize>) -> usize {
        flag.or(self.file.workers).unwrap_or(4).max(1)
    }

    fn embedding_dim(&self) -> usize {
        self.file
            .backends
            .embedding
            .as_ref()
            .and_then(|e| e.dim)
            .unwrap_or(DEFAULT_MOCK_DIM)
    }

    fn chat_backend(&self) -> anyhow::Result<Box<dyn ChatBackend>> {
        if self.mock {
            return Ok(Box::new(HashChat));
        }
        let cfg = self
            .file
            .backends
            .chat
            .clone()
            .unwrap_or_default()
            .to_http_config("chat")
            .map_err(|e| anyhow!(e))?;
        Ok(Box::new(HttpChat::new(cfg)?))
    }

    fn vision_backend(&self) -> anyhow::Result<Box<dyn VisionBackend>> {
        if self.mock {
            return Ok(Box::new(HashVision));
        }
        let cfg = self
            .file
            .backends
            .vision
            .clone()
            .unwrap_or_default()
            .to_http_config("vision")
            .map_err(|e| anyhow!(e))?;
        Ok(Box::new(HttpVision::new(cfg)?))
    }

    fn embedding_backend(&self) -> anyhow::Result<Box<dyn EmbeddingBackend>> {
        if self.mock {
            return Ok(Box::new(HashEmbedding::new(self.embedding_dim())));
        }
        let emb = self.file.backends.embedding.clone().unwrap_or_default();
        let dim = emb
            .dim
            .ok_or_else(|| anyhow!("missing embedding dimension (set [backends.embedding].dim)"))?;
        let cfg = emb.http.to_http_config("embedding").map_err(|e| anyhow!(e))?;
        Ok(Box::new(HttpEmbedding::new(cfg, dim)?))
    }

    /// Embedding backend whose dimension must line up with the library's
    /// stored vectors (retrieval paths).
    fn embedding_backend_for(
        &self,
        lib: &memecmd_core::library::MemeLibrary,
    ) -> anyhow::Result<Box<dyn EmbeddingBackend>> {
        let lib_dim = lib
            .embedding_dim
            .ok_or_else(|| anyhow!("library is not embedded; run `memecmd embed` first"))?;
        if self.mock {
            return Ok(Box::new(HashEmbedding::new(lib_dim)));
        }
        let backend = self.embedding_backend()?;
        if backend.dim() != lib_dim {
            bail!(
                "configured embedding dimension {} does not match the library's {}",
                backend.dim(),
                lib_dim
            );
        }
        Ok(backend)
    }

    fn backend_label(&self) -> String {
        if self.mock {
            "mock".to_string()
        } else {
            let name = |c: &Option<crate::config::HttpFileConfig>| {
                c.as_ref()
                    .and_then(|c| c.model.clone())
                    .unwrap_or_else(|| "?".into())
            };
            format!(
                "http chat={} vision={} embedding={}",
                name(&self.file.backends.chat),
                name(&self.file.backends.vision),
                self.file
                    .backends
                    .embedding
                    .as_ref()
                    .and_then(|e| e.http.model.clone())
                    .unwrap_or_else(|| "?".into())
            )
        }
    }
}

fn required_path(
    flag: Option<PathBuf>,
    file_value: &Option<PathBuf>,
    what: &str,
    hint: &str,
) -> anyhow::Result<PathBuf> {
    flag.or_else(|| file_value.clone())
        .ok_or_else(|| anyhow!("missing {what}; pass {hint} or set it in the config file"))
}

fn emit(out: &Option<PathBuf>, content: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let globals = Globals::new(&cli)?;
    match cli.command {
        Command::Annotate {
            images,
            out,
            workers,
            source_manifest,
        } => {
            let vision = globals.vision_backend()?;
            let workers = globals.workers(workers);
            let (mut lib, failures) = annotate_library(&images, vision.as_ref(), workers)?;
            // Image paths are stored relative to the library file so the
            // library stays resolvable wherever it is consumed.
            let image_prefix = image_dir_relative_to(&images, &out);
            for record in &mut lib.records {
                record.image_path = image_prefix
                    .join(&record.image_path)
                    .to_string_lossy()
                    .into_owned();
            }
            lib.source_manifest =
                source_manifest.unwrap_or_else(|| format!("annotated from {}", images.display()));
            save_library(&lib, &out)?;
            println!(
                "annotated {} memes into {} ({} failures)",
                lib.len(),
                out.display(),
                failures.len()
            );
            for f in &failures {
                eprintln!("  failed {}: {}", f.file, f.error);
            }
            Ok(())
        }
        Command::Embed {
            library,
            out,
            dim,
            workers,
        } => {
            let library = required_path(library, &globals.file.library, "library path", "--library")?;
            let lib = load_library(&library)?;
            let backend: Box<dyn EmbeddingBackend> = if globals.mock {
                Box::new(HashEmbedding::new(dim.unwrap_or_else(|| globals.embedding_dim())))
            } else {
                if dim.is_some() {
                    bail!("--dim only applies to the mock backend; set [backends.embedding].dim instead");
                }
                globals.embedding_backend()?
            };
            let workers = globals.workers(workers);
            let embedded = embed_library(&lib, backend.as_ref(), workers)?;
            let target = out.unwrap_or(library);
            save_library(&embedded, &target)?;
            println!(
                "embedded {} records at dim {} into {}",
                embedded.len(),
                backend.dim(),
                target.display()
            );
            Ok(())
        }
        Command::Generate {
            library,
            out,
            mode,
            news,
            roles,
            turns,
            sessions,
            reply_limit,
            scenarios_per_pair,
            workers,
            aligner,
        } => {
            let library_path =
                required_path(library, &globals.file.library, "library path", "--library")?;
            let out_dir = required_path(out, &globals.file.out, "output directory", "--out")?;
            let lib = load_library(&library_path)?;
            let mode = mode
                .map(|m| match m {
                    ModeArg::News => Mode::News,
                    ModeArg::Role => Mode::Role,
                })
                .or(globals.file.mode)
                .unwrap_or(Mode::News);
            let defaults = PipelineConfig::default();
            let cfg = PipelineConfig {
                mode,
                turns: turns.or(globals.file.turns).unwrap_or(defaults.turns),
                sessions: sessions
                    .or(globals.file.sessions)
                    .unwrap_or(defaults.sessions),
                seed: globals.seed,
                reply_limit: reply_limit
                    .or(globals.file.reply_limit)
                    .unwrap_or(defaults.reply_limit),
                scenarios_per_pair: scenarios_per_pair
                    .or(globals.file.scenarios_per_pair)
                    .unwrap_or(defaults.scenarios_per_pair),
                aligner: globals.file.aligner.resolve(&aligner.as_file_config()),
            };
            let sources = match mode {
                Mode::News => {
                    let path =
                        required_path(news, &globals.file.news, "news file", "--news")?;
                    Sources::News(load_news(&path)?)
                }
                Mode::Role => {
                    let path =
                        required_path(roles, &globals.file.roles, "role pairs file", "--roles")?;
                    Sources::Roles(load_role_pairs(&path)?)
                }
            };
            let chat = globals.chat_backend()?;
            let embedding = globals.embedding_backend_for(&lib)?;
            let manifest = run_batch(
                &cfg,
                &lib,
                &library_path,
                &sources,
                &out_dir,
                Backends {
                    chat: chat.as_ref(),
                    embedding: embedding.as_ref(),
                },
                &globals.backend_label(),
                globals.workers(workers),
            )?;
            println!(
                "generated {} sessions ({} failed), {} turns, {} memes into {}",
                manifest.counts.sessions_ok,
                manifest.counts.sessions_failed,
                manifest.counts.turns,
                manifest.counts.memes,
                out_dir.display()
            );
            Ok(())
        }
        Command::Retrieve {
            library,
            scenario,
            emotion,
            motivation,
            out,
            aligner,
        } => {
            let library_path =
                required_path(library, &globals.file.library, "library path", "--library")?;
            let lib = load_library(&library_path)?;
            if !lib.is_embedded() {
                bail!(
                    "library {} is not embedded; run `memecmd embed --library {}` first",
                    library_path.display(),
                    library_path.display()
                );
            }
            let backend = globals.embedding_backend_for(&lib)?;
            let params = globals.file.aligner.resolve(&aligner.as_file_config());
            let mut summary = TurnSummary::from_texts(scenario, emotion, motivation);
            summary.scenario_vec = Some(embed_unit(backend.as_ref(), &summary.scenario)?);
            summary.emotion_vec = Some(embed_unit(backend.as_ref(), &summary.emotion)?);
            summary.motivation_vec = Some(embed_unit(backend.as_ref(), &summary.motivation)?);
            let ranked = rank_top_k(
                &summary,
                &lib,
                &params.weights,
                params.implicit_sign,
                params.top_k,
            )?;
            let mut table = String::from("rank\tmeme_id\talpha\tdelta\tbeta\tgamma\ttotal\n");
            for (i, s) in ranked.iter().enumerate() {
                let _ = writeln!(
                    table,
                    "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    i + 1,
                    s.meme_id,
                    s.alpha,
                    s.delta,
                    s.beta,
                    s.gamma,
                    s.total
                );
            }
            emit(&out, &table)
        }
        Command::Evaluate {
            datasets,
            library,
            method,
            out,
        } => {
            let library_path =
                required_path(library, &globals.file.library, "library path", "--library")?;
            let lib = load_library(&library_path)?;
            let image_root = library_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_else(|| PathBuf::from("."));
            let mut body = String::new();
            let mut means: Vec<(DatasetLabel, f64)> = Vec::new();
            match method {
                MethodArg::Consistency => {
                    let backend = globals.embedding_backend()?;
                    for dataset in &datasets {
                        let report = evaluate_dataset_consistency(
                            dataset,
                            &lib,
                            &image_root,
                            backend.as_ref(),
                        )?;
                        body.push_str(&consistency_tsv(&report));
                        means.push((report.dataset.clone(), report.mean));
                    }
                }
                MethodArg::Judge => {
                    let judge = globals.vision_backend()?;
                    for dataset in &datasets {
                        let report =
                            evaluate_dataset_judge(dataset, &lib, &image_root, judge.as_ref())?;
                        body.push_str(&judge_tsv(&report));
                        means.push((report.dataset.clone(), report.mean));
                    }
                }
            }
            body.push_str(&summary_block(&means));
            emit(&out, &body)
        }
        Command::Stats {
            library,
            dimension,
            stopwords,
            scores,
            out,
            aligner,
        } => {
            let library_path =
                required_path(library, &globals.file.library, "library path", "--library")?;
            let lib = load_library(&library_path)?;
            if let Some(dataset) = scores {
                if !lib.is_embedded() {
                    bail!(
                        "library {} is not embedded; run `memecmd embed` first",
                        library_path.display()
                    );
                }
                let params = globals.file.aligner.resolve(&aligner.as_file_config());
                let sessions = load_sessions(&dataset)?;
                let summaries: Vec<TurnSummary> = sessions
                    .iter()
                    .flat_map(|s| s.retrieval.iter().map(|r| r.summary.clone()))
                    .collect();
                if summaries.is_empty() {
                    bail!(
                        "dataset {} has no logged summaries (random-strategy runs have none)",
                        dataset.display()
                    );
                }
                let hist =
                    score_distribution(&lib, &summaries, &params.weights, params.implicit_sign)?;
                emit(&out, &histogram_table(&hist))
            } else {
                let stops = match stopwords {
                    Some(path) => parse_stopwords(
                        &std::fs::read_to_string(&path)
                            .with_context(|| format!("reading {}", path.display()))?,
                    ),
                    None => default_stopwords(),
                };
                let dims: Vec<Dimension> = match dimension {
                    Some(d) => vec![d.into()],
                    None => Dimension::ALL.to_vec(),
                };
                let mut table = String::from("dimension\ttoken\tcount\n");
                for dim in dims {
                    let stats = keyword_stats(&lib, dim, &stops)?;
                    for (token, count) in &stats.entries {
                        let _ = writeln!(table, "{}\t{}\t{}", dim.as_str(), token, count);
                    }
                }
                emit(&out, &table)
            }
        }
    }
}

/// Path of the image directory relative to the library file's directory,
/// falling back to the absolute image directory when it is not nested.
fn image_dir_relative_to(images: &Path, library_out: &Path) -> PathBuf {
    let lib_dir = library_out.parent().unwrap_or_else(|| Path::new("."));
    let canon_images = images.canonicalize().unwrap_or_else(|_| images.to_path_buf());
    let canon_lib = lib_dir.canonicalize().unwrap_or_else(|_| lib_dir.to_path_buf());
    match canon_images.strip_prefix(&canon_lib) {
        Ok(rel) => rel.to_path_buf(),
        Err(_) => canon_images,
    }
}

/// Histogram as a delimited text table.
fn histogram_table(hist: &Histogram) -> String {
    let mut out = String::from("bin_lo\tbin_hi\tcount\n");
    for (i, count) in hist.counts.iter().enumerate() {
        let _ = writeln!(
            out,
            "{:.6}\t{:.6}\t{}",
            hist.edges[i],
            hist.edges[i + 1],
            count
        );
    }
    let _ = writeln!(
        out,
        "# mean={:.6} stddev={:.6} n={} peaks={}",
        hist.mean,
        hist.stddev,
        hist.n,
        hist.peaks(5, 0.05).len()
    );
    out
}

//! `prism` command-line front end.
//!
//! Exit codes: 0 when everything completed, 1 on errors or topology
//! violations, 3 when a batch finished with failed cells or cases.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use prism_core::clock::Clock;
use prism_core::expert::{
    default_personas, diagnose, load_cases, load_ontology, truth_leaks, DiagnoseConfig,
};
use prism_core::exploration::Lexicon;
use prism_core::fanout::bounded_map;
use prism_core::graph::{validate_topology, EpistemicGraph};
use prism_core::harness::{run_experiment, write_report, ExperimentProviders, ExperimentSpec, RunOptions};
use prism_core::json::{to_canonical_string, to_jsonl};
use prism_core::metrics::{mean_rank, recall_at_k};
use prism_core::persistence::{atomic_write, ArtifactStore, SCHEMA_GRAPH};
use prism_core::providers::http::handles_from_env;
use prism_core::providers::{make_mock_suite, MockFixture, RetryPolicy};
use prism_core::synthesis::{run_pipeline, Mode, PipelineConfig, Providers, RunSink, SeedSource};

const INCOMPLETE: u8 = 3;

#[derive(Parser)]
#[command(name = "prism", version, about = "Pluralistic reasoning pipeline")]
struct Cli {
    /// Use the deterministic mock providers instead of HTTP endpoints.
    #[arg(long, global = true)]
    mock: bool,
    /// Mock fixture directory (manifest.json and optional chat.json).
    #[arg(long, global = true, env = "PRISM_FIXTURE")]
    fixture: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Vanilla,
    FlatRag,
    Prism,
}

impl From<CliMode> for Mode {
    fn from(m: CliMode) -> Self {
        match m {
            CliMode::Vanilla => Mode::Vanilla,
            CliMode::FlatRag => Mode::FlatRag,
            CliMode::Prism => Mode::Prism,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment spec; one manifest per sweep value.
    Run {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; defaults to `experiments/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute report.json and CSV files from a manifest.
    Report {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Run one query end to end.
    Pipeline {
        #[arg(long)]
        query: String,
        #[arg(long, value_enum, default_value = "prism")]
        mode: CliMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON pipeline config; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Noun list, one per line; the bundled list when absent.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long, default_value = "runs")]
        runs_root: PathBuf,
    },
    /// Diagnose JSON-lines cases with the expert panel.
    Diagnose {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        ontology: Option<PathBuf>,
        #[arg(long, default_value = "diagnosis")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Cases diagnosed concurrently.
        #[arg(long, default_value_t = 2)]
        workers: usize,
    },
    /// Check a graph.json against the topology rules.
    Validate {
        #[arg(long)]
        graph: PathBuf,
    },
}

struct Suite {
    chat: prism_core::providers::ProviderHandle,
    search: prism_core::providers::ProviderHandle,
    embed: prism_core::providers::ProviderHandle,
    clock: Clock,
}

fn suite(mock: bool, fixture: Option<&Path>, seed: u64) -> Result<Suite> {
    if mock {
        let fx = match fixture {
            Some(dir) => MockFixture::load(dir)?,
            None => MockFixture::default(),
        };
        let s = make_mock_suite(seed, &fx);
        return Ok(Suite {
            chat: s.chat,
            search: s.search,
            embed: s.embed,
            clock: Clock::Fixed(0),
        });
    }
    let (chat, embed, search) =
        handles_from_env(&RetryPolicy::default()).context("configuring providers from the environment")?;
    Ok(Suite {
        chat,
        search,
        embed,
        clock: Clock::System,
    })
}

fn store() -> Result<Option<ArtifactStore>> {
    match std::env::var_os("PRISM_STORE") {
        Some(p) => Ok(Some(ArtifactStore::open(PathBuf::from(p))?)),
        None => Ok(None),
    }
}

fn lexicon(path: Option<&Path>) -> Result<Lexicon> {
    Ok(match path {
        Some(p) => {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("lexicon");
            Lexicon::load(p, id)?
        }
        None => Lexicon::builtin(),
    })
}

fn cmd_run(cli: &Cli, spec_path: &Path, out: Option<&Path>) -> Result<u8> {
    let spec = ExperimentSpec::load(spec_path)?;
    let mock = cli.mock || spec.providers.mock;
    let fixture = cli.fixture.clone().or_else(|| spec.providers.fixture.clone());
    let s = suite(mock, fixture.as_deref(), spec.rng_seed)?;
    let base = out.map_or_else(
        || PathBuf::from("experiments").join(&spec.name),
        Path::to_path_buf,
    );
    let subs = spec.expand_sweep();
    let swept = subs.len() > 1;
    let mut code = 0;
    for sub in subs {
        let out_dir = if swept { base.join(&sub.name) } else { base.clone() };
        let providers = ExperimentProviders {
            chat: s.chat.clone(),
            search: s.search.clone(),
            embed: s.embed.clone(),
        };
        let opts = RunOptions {
            out_dir: out_dir.clone(),
            clock: s.clock,
            store: store()?,
        };
        let m = run_experiment(&sub, &providers, &opts)?;
        let failed = m.failed_cells().count();
        println!("{}", out_dir.join("manifest.json").display());
        if !m.complete {
            warn!(
                "{}: {failed} of {} cells failed, {} other failures",
                sub.name,
                m.cells.len(),
                m.failures.len()
            );
            code = INCOMPLETE;
        }
    }
    Ok(code)
}

fn cmd_report(manifest: &Path) -> Result<u8> {
    let r = write_report(manifest)?;
    let dir = manifest.parent().unwrap_or_else(|| Path::new("."));
    println!("{}", dir.join("report.json").display());
    if !r.complete {
        warn!(
            "report covers an incomplete run: {} of {} cells failed",
            r.cells.failed, r.cells.total
        );
    }
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_pipeline(
    cli: &Cli,
    query: &str,
    mode: CliMode,
    seed: u64,
    config: Option<&Path>,
    lexicon_path: Option<&Path>,
    runs_root: &Path,
) -> Result<u8> {
    let mut cfg: PipelineConfig = match config {
        Some(p) => {
            serde_json::from_str(&std::fs::read_to_string(p).with_context(|| p.display().to_string())?)
                .with_context(|| format!("parsing {}", p.display()))?
        }
        None => PipelineConfig::default(),
    };
    cfg.mode = mode.into();
    cfg.rng_seed = seed;
    let s = suite(cli.mock, cli.fixture.as_deref(), seed)?;
    let lex = lexicon(lexicon_path)?;
    let sink = RunSink {
        runs_root: Some(runs_root.to_owned()),
        store: store()?,
        clock: s.clock,
    };
    let providers = Providers {
        chat: s.chat,
        search: s.search,
    };
    let out = run_pipeline(query, &cfg, SeedSource::Lexicon(&lex), &providers, &sink)?;
    for w in &out.warnings {
        warn!("{w}");
    }
    if let Some(dir) = &out.run_dir {
        info!("artifacts in {}", dir.display());
    }
    println!("{}", out.run_id);
    println!("{}", out.record.output);
    Ok(0)
}

fn cmd_diagnose(
    cli: &Cli,
    cases_path: &Path,
    ontology: Option<&Path>,
    out: &Path,
    seed: u64,
    top_n: usize,
    workers: usize,
) -> Result<u8> {
    let cases = load_cases(cases_path)?;
    if cases.is_empty() {
        bail!("{} holds no cases", cases_path.display());
    }
    let ont = ontology.map(load_ontology).transpose()?;
    let s = suite(cli.mock, cli.fixture.as_deref(), seed)?;
    let personas = default_personas();
    let cfg = DiagnoseConfig {
        top_n,
        pipeline: PipelineConfig {
            rng_seed: seed,
            ..Default::default()
        },
        ..Default::default()
    };
    let outcomes = bounded_map(&cases, workers, |_, case| {
        let (chat, log) = s.chat.capturing();
        let providers = Providers {
            chat,
            search: s.search.clone(),
        };
        diagnose(case, &personas, ont.as_ref(), &providers, &cfg).map(|o| {
            let leaks = truth_leaks(&log.requests(), &case.truth).len();
            (o, leaks)
        })
    });

    let mut results = Vec::new();
    let mut failed = 0;
    let mut leaks = 0;
    for (case, outcome) in cases.iter().zip(outcomes) {
        match outcome {
            Ok((o, n)) => {
                leaks += n;
                let body = to_canonical_string(&o);
                atomic_write(
                    &out.join("cases").join(format!("{}.json", case.case_id)),
                    body.as_bytes(),
                )?;
                results.push(o.result);
            }
            Err(e) => {
                warn!("{e}");
                failed += 1;
            }
        }
    }
    atomic_write(&out.join("results.jsonl"), to_jsonl(&results).as_bytes())?;
    let mr = mean_rank(&results).ok();
    let summary = serde_json::json!({
        "cases": cases.len(),
        "diagnosed": results.len(),
        "failed": failed,
        "recall_at_1": recall_at_k(&results, 1),
        "recall_at_10": recall_at_k(&results, 10),
        "mean_rank": mr.as_ref().map(|m| m.mean),
        "hits": mr.as_ref().map(|m| m.hits),
        "truth_leaks": leaks,
    });
    atomic_write(
        &out.join("summary.json"),
        to_canonical_string(&summary).as_bytes(),
    )?;
    println!("{}", serde_json::to_string(&summary)?);
    if leaks > 0 {
        bail!("{leaks} prompt(s) contained a case's ground truth outside evidence blocks");
    }
    Ok(if failed > 0 { INCOMPLETE } else { 0 })
}

fn cmd_validate(path: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(path).with_context(|| path.display().to_string())?;
    let graph = EpistemicGraph::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if graph.schema != SCHEMA_GRAPH {
        bail!(
            "{}: schema `{}`, expected `{SCHEMA_GRAPH}`",
            path.display(),
            graph.schema
        );
    }
    let violations = validate_topology(&graph);
    for v in &violations {
        println!("{v}");
    }
    if violations.is_empty() {
        println!(
            "ok: {} context, {} spark, {} bridges",
            graph.context_nodes.len(),
            graph.spark_nodes.len(),
            graph.edges.len()
        );
        Ok(0)
    } else {
        Ok(1)
    }
}

fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run { spec, out } => cmd_run(cli, spec, out.as_deref()),
        Command::Report { manifest } => cmd_report(manifest),
        Command::Pipeline {
            query,
            mode,
            seed,
            config,
            lexicon,
            runs_root,
        } => cmd_pipeline(
            cli,
            query,
            *mode,
            *seed,
            config.as_deref(),
            lexicon.as_deref(),
            runs_root,
        ),
        Command::Diagnose {
            cases,
            ontology,
            out,
            seed,
            top_n,
            workers,
        } => cmd_diagnose(cli, cases, ontology.as_deref(), out, *seed, *top_n, *workers),
        Command::Validate { graph } => cmd_validate(graph),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

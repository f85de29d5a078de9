//! `mercator`: command-line driver for the forecasting pipeline.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use mercator_core::clock::FixedClock;
use mercator_core::corpus::{store_corpus, Article, EventRegistry, EventSpec};
use mercator_core::embedding::server::FixtureEmbedServer;
use mercator_core::embedding::{EmbedBackend, RelevanceThreshold, DEFAULT_DIM, DEFAULT_TAU};
use mercator_core::pipeline::{
    filter, ingest, load_labels, run_calibration, run_crowd, run_kmeans, run_pca, run_pipeline,
    run_zeroshot, PipelineOptions, Relevant, DEFAULT_BUDGET, DEFAULT_SEED,
};
use mercator_core::report::{collect_forecasts, emit_report, emit_summary, SummaryRow};
use mercator_core::zeroshot::{ChatClient, FixtureChatClient, HttpChatClient};
use mercator_core::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_UPSTREAM: u8 = 3;
const EXIT_ABSTENTION_ONLY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "mercator",
    version,
    about = "Ensemble probabilities for binary economic events"
)]
struct Cli {
    /// Event registry (`{"events": [...]}`).
    #[arg(long, global = true, default_value = "events.json")]
    config: PathBuf,
    /// Restrict to one event id; every event when omitted.
    #[arg(long, global = true)]
    event: Option<String>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Serve news, markets and LLM replies from files in this directory.
    #[arg(long, global = true)]
    fixture_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Backend::Stub)]
    embed_backend: Backend,
    #[arg(long, global = true, env = "MERCATOR_EMBED_URL")]
    embed_url: Option<String>,
    #[arg(long, global = true, default_value_t = DEFAULT_DIM)]
    embed_dim: usize,
    /// Relevance threshold on cosine similarity.
    #[arg(long, global = true, default_value_t = DEFAULT_TAU)]
    tau: f64,
    /// Forecast date (YYYY-MM-DD); defaults to the last day of each event's window.
    #[arg(long, global = true)]
    as_of: Option<NaiveDate>,
    /// Labels file (`article_id,outcome`) overriding the fixture lookup.
    #[arg(long, global = true)]
    labels: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Backend {
    Stub,
    Service,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch articles and store them under the output directory.
    Ingest,
    /// Report how many articles pass the relevance filter.
    Filter,
    /// Run one news-analysis submodule.
    Sna {
        #[command(subcommand)]
        method: SnaMethod,
    },
    /// Crowd probability from prediction markets.
    Crowd,
    /// Threshold probability for continuous events.
    Calibrate,
    /// Full pipeline; writes per-event reports and a summary.
    Forecast {
        /// Use only the analyst prior.
        #[arg(long)]
        macro_only: bool,
        #[command(flatten)]
        zs: ZeroShotArgs,
    },
    /// Rebuild the summary table from forecasts under the output directory.
    Report,
    /// Serve the embedding wire contract from the stub embedder.
    ServeEmbed {
        #[arg(long, default_value = "127.0.0.1:8077")]
        addr: String,
    },
}

#[derive(Subcommand)]
enum SnaMethod {
    Pca,
    Kmeans,
    Zeroshot {
        #[command(flatten)]
        zs: ZeroShotArgs,
        /// Scripted replies file used instead of the LLM endpoint.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct ZeroShotArgs {
    /// Maximum number of articles sent to the LLM.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: usize,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Parse { .. }) => EXIT_CONFIG,
        Some(err) if err.is_upstream() => EXIT_UPSTREAM,
        _ => 1,
    }
}

fn options(cli: &Cli) -> anyhow::Result<PipelineOptions> {
    let backend = match cli.embed_backend {
        Backend::Stub => EmbedBackend::Stub { dim: cli.embed_dim },
        Backend::Service => EmbedBackend::Service {
            url: cli.embed_url.clone().ok_or_else(|| {
                Error::Config("--embed-url or MERCATOR_EMBED_URL is required".into())
            })?,
            dim: cli.embed_dim,
        },
    };
    Ok(PipelineOptions {
        fixture_dir: cli.fixture_dir.clone(),
        seed: cli.seed,
        as_of: cli.as_of.map(|d| FixedClock::end_of_day(d).0),
        backend,
        tau: RelevanceThreshold::new(cli.tau)?,
        labels: cli.labels.clone(),
        ..Default::default()
    })
}

fn events(cli: &Cli) -> anyhow::Result<Vec<EventSpec>> {
    let registry = EventRegistry::load(&cli.config)?;
    Ok(match &cli.event {
        Some(id) => vec![registry.get(id)?.clone()],
        None => registry.events,
    })
}

fn print(value: serde_json::Value) {
    println!("{value}");
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Command::ServeEmbed { addr } = &cli.command {
        let server = FixtureEmbedServer::start(addr, cli.embed_dim)?;
        eprintln!("serving stub embeddings at {}", server.url());
        server.join();
        return Ok(0);
    }
    if let Command::Report = &cli.command {
        return report(&cli.out, cli);
    }
    let mut opts = options(cli)?;
    let events = events(cli)?;
    match &cli.command {
        Command::Ingest => {
            for event in &events {
                let articles = ingest(event, &opts)?;
                let path = cli.out.join(&event.id).join("corpus.jsonl");
                store_corpus(&articles, &path)?;
                print(json!({"event": event.id, "articles": articles.len(), "path": path}));
            }
        }
        Command::Filter => {
            for event in &events {
                let (articles, relevant) = prepare(event, &opts)?;
                print(json!({
                    "event": event.id,
                    "ingested": articles.len(),
                    "relevant": relevant.articles.len(),
                    "tau": opts.tau.value(),
                }));
            }
        }
        Command::Sna { method } => {
            for event in &events {
                sna(event, method, &mut opts)?;
            }
        }
        Command::Crowd => {
            for event in &events {
                let estimate = run_crowd(event, &opts)?;
                print(json!({"event": event.id, "crowd": estimate}));
            }
        }
        Command::Calibrate => {
            for event in &events {
                let out = run_calibration(event, &opts)?;
                print(json!({"event": event.id, "calibration": out}));
            }
        }
        Command::Forecast { macro_only, zs } => {
            opts.macro_only = *macro_only;
            opts.budget = zs.budget;
            let mut abstained = Vec::new();
            for event in &events {
                let run = run_pipeline(event, &opts)
                    .with_context(|| format!("forecasting {}", event.id))?;
                emit_report(&run, &cli.out)?;
                let f = &run.forecast;
                if f.is_abstention_only() && !macro_only {
                    abstained.push(event.id.clone());
                }
                print(json!({"event": event.id, "p_yes": f.p_yes_final, "p_no": f.p_no_final}));
            }
            let code = report(&cli.out, cli)?;
            if !abstained.is_empty() {
                eprintln!("only the prior reported for: {}", abstained.join(", "));
                return Ok(EXIT_ABSTENTION_ONLY);
            }
            return Ok(code);
        }
        Command::Report | Command::ServeEmbed { .. } => unreachable!("handled above"),
    }
    Ok(0)
}

fn prepare(event: &EventSpec, opts: &PipelineOptions) -> anyhow::Result<(Vec<Article>, Relevant)> {
    let articles = ingest(event, opts)?;
    let relevant = filter(event, &articles, opts)?;
    Ok((articles, relevant))
}

fn sna(event: &EventSpec, method: &SnaMethod, opts: &mut PipelineOptions) -> anyhow::Result<()> {
    let clock = opts.clock(event);
    let (articles, relevant) = prepare(event, opts)?;
    let labels = load_labels(event, &articles, opts)?;
    match method {
        SnaMethod::Pca => {
            let pca = run_pca(&relevant, &labels, &clock)?;
            print(json!({
                "event": event.id,
                "p_yes": pca.p_yes,
                "k_star": pca.selection.k_star(),
                "tau_pca": pca.selection.tau_pca,
                "top_features": pca.selection.top_features.len(),
                "components_for_95pct": pca.explained.n95,
            }));
        }
        SnaMethod::Kmeans => {
            let pca = match run_pca(&relevant, &labels, &clock) {
                Ok(p) => Some(p),
                Err(e) if e.is_no_signal() => None,
                Err(e) => return Err(e.into()),
            };
            let km = run_kmeans(
                &relevant,
                &labels,
                pca.as_ref().map(|p| &p.selection),
                opts.seed,
                &clock,
            )?;
            print(json!({
                "event": event.id,
                "p_yes": km.p_yes,
                "yes_cluster": km.map.yes_cluster_number(),
                "cluster_sizes": km.model.cluster_sizes(),
                "iterations": km.model.iterations,
            }));
        }
        SnaMethod::Zeroshot { zs, fixture } => {
            opts.budget = zs.budget;
            let client: Box<dyn ChatClient> = match fixture {
                Some(path) => Box::new(FixtureChatClient::load(path)?),
                None => match opts.fixture_file(event, mercator_core::pipeline::ZEROSHOT_FILE) {
                    Some(path) => Box::new(FixtureChatClient::load(&path)?),
                    None => Box::new(HttpChatClient::from_env()?),
                },
            };
            let out = run_zeroshot(event, &relevant, client.as_ref(), opts)?;
            print(json!({
                "event": event.id,
                "p_yes": out.p_yes,
                "classified": out.batch.verdicts.len(),
                "errors": out.batch.errors.len(),
            }));
        }
    }
    Ok(())
}

/// Writes `summary.md` and `summary.csv` for every forecast under `out`.
fn report(out: &Path, cli: &Cli) -> anyhow::Result<u8> {
    let forecasts = collect_forecasts(out)?;
    if forecasts.is_empty() {
        return Err(Error::Config(format!("no forecasts under {}", out.display())).into());
    }
    let registry = EventRegistry::load(&cli.config).ok();
    let rows: Vec<SummaryRow> = forecasts
        .iter()
        .map(|f| {
            let kind = registry
                .as_ref()
                .and_then(|r| r.get(&f.event_id).ok())
                .map(|e| e.kind);
            SummaryRow::from_forecast(f, kind)
        })
        .collect();
    emit_summary(&rows, out)?;
    eprintln!("{} forecasts summarized in {}", rows.len(), out.display());
    Ok(0)
}

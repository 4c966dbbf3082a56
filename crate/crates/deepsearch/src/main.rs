//! Command-line surface: benchmark runs, question synthesis, evaluation
//! over trajectory logs, SFT export, and log replay.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use deepsearch::cache::DiskCache;
use deepsearch::config::RunConfig;
use deepsearch::dataset::{load_dataset, QuestionRecord};
use deepsearch::evaluation::{self, ReportConfig};
use deepsearch::gateways::http::{HttpGenerator, HttpSearchProvider, LlmEndpoint, WikiLinkProvider};
use deepsearch::gateways::mock::{HeuristicJudge, MockFixture, ScriptedGenerator};
use deepsearch::gateways::{
    Gateways, Judge, LinkProvider, LlmJudge, LlmSummarizer, SearchPipeline,
};
use deepsearch::orchestrator::{
    run_batch, BudgetState, GatewayFactory, RunMode, RunPolicy, RunRecord,
};
use deepsearch::prompts::PromptSet;
use deepsearch::report::{emit_report, read_log, RunLog};
use deepsearch::synthesis::{
    export_sft, generate_trajectories, SftFormat, SynthesisPipeline, TrajectorySample,
    TRAJECTORY_SAMPLES,
};

#[derive(Parser)]
#[command(name = "deepsearch", version, about = "Hybrid deep-search agent harness")]
struct Cli {
    /// Config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonFlags {
    #[arg(long)]
    mode: Option<RunMode>,
    #[arg(long)]
    max_turns: Option<usize>,
    #[arg(long)]
    max_calls: Option<usize>,
    #[arg(long)]
    concurrency: Option<usize>,
    #[arg(long)]
    parallel_runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Mock-fixture JSON; replaces all live gateways.
    #[arg(long)]
    mock: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Disable the cross-run disk cache.
    #[arg(long)]
    no_cache: bool,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Benchmark a dataset: run the agent loop and emit metrics.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Build hybrid-hop questions from single-hop seeds and sample
    /// trajectories.
    Synthesize {
        /// Seed dataset JSONL ({id, question, answer}).
        #[arg(long)]
        dataset: PathBuf,
        /// Trajectory samples per verified question.
        #[arg(long, default_value_t = TRAJECTORY_SAMPLES)]
        samples: usize,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Compute metrics over an existing trajectory log.
    Evaluate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
    /// Export masked SFT data from a trajectory-sample JSONL file.
    ExportSft {
        /// TrajectorySample JSONL (from `synthesize`).
        #[arg(long)]
        samples: PathBuf,
        #[arg(long, default_value = "sft.jsonl")]
        out: PathBuf,
    },
    /// Re-parse an existing log, verify stored accounting, and re-score.
    Replay {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        common: CommonFlags,
    },
}

/// Mock gateway factory. Programs may be keyed per mode
/// (`"{id}@{mode}"`) so one fixture can script both hybrid and
/// single-query transcripts; lookup falls back to the plain id.
struct MockFactory {
    fixture: Arc<MockFixture>,
    top_k: usize,
    mode_key: &'static str,
}

impl GatewayFactory for MockFactory {
    fn gateways(&self, question_id: &str) -> Gateways {
        let keyed = format!("{question_id}@{}", self.mode_key);
        let program = match self.fixture.programs.get(&keyed) {
            Some(p) => p.clone(),
            None => self.fixture.program_for(question_id),
        };
        Gateways {
            generator: Arc::new(ScriptedGenerator::new(program)),
            pipeline: SearchPipeline {
                provider: self.fixture.search_provider(),
                summarizer: self.fixture.summarizer(),
                top_k: self.top_k,
            },
            judge: Arc::new(HeuristicJudge),
        }
    }
}

fn mode_key(mode: RunMode) -> &'static str {
    match mode {
        RunMode::Hybrid => "hybrid",
        RunMode::SingleQuery => "single_query",
    }
}

struct LiveBackends {
    factory: Box<dyn GatewayFactory>,
    judge: Arc<dyn Judge>,
    link_provider: Option<Arc<dyn LinkProvider>>,
    fixture: Option<Arc<MockFixture>>,
}

fn endpoint(
    base: Option<&str>,
    key: Option<&str>,
    model: Option<&str>,
    role: &str,
) -> Result<LlmEndpoint> {
    Ok(LlmEndpoint {
        base_url: base
            .with_context(|| format!("no API base configured for the {role} role"))?
            .to_owned(),
        api_key: key.unwrap_or_default().to_owned(),
        model: model.unwrap_or("default").to_owned(),
    })
}

fn build_backends(config: &RunConfig) -> Result<LiveBackends> {
    if let Some(fixture_path) = &config.gateways.mock_fixture {
        let fixture = Arc::new(
            MockFixture::load(fixture_path)
                .with_context(|| format!("loading mock fixture {}", fixture_path.display()))?,
        );
        let link_provider: Arc<dyn LinkProvider> = fixture.link_provider();
        return Ok(LiveBackends {
            factory: Box::new(MockFactory {
                fixture: fixture.clone(),
                top_k: config.top_k,
                mode_key: mode_key(config.mode),
            }),
            judge: Arc::new(HeuristicJudge),
            link_provider: Some(link_provider),
            fixture: Some(fixture),
        });
    }

    let g = &config.gateways;
    let base = endpoint(
        g.llm_api_base.as_deref(),
        g.llm_api_key.as_deref(),
        g.llm_model.as_deref(),
        "generator",
    )?;
    let summarizer_ep = LlmEndpoint {
        base_url: g.summarizer.api_base.clone().unwrap_or(base.base_url.clone()),
        api_key: g.summarizer.api_key.clone().unwrap_or(base.api_key.clone()),
        model: g.summarizer.model.clone().unwrap_or(base.model.clone()),
    };
    let judge_ep = LlmEndpoint {
        base_url: g.judge.api_base.clone().unwrap_or(base.base_url.clone()),
        api_key: g.judge.api_key.clone().unwrap_or(base.api_key.clone()),
        model: g.judge.model.clone().unwrap_or(base.model.clone()),
    };
    let search = HttpSearchProvider {
        base_url: g
            .search_endpoint
            .clone()
            .context("no search endpoint configured")?,
        api_key: g.search_api_key.clone().unwrap_or_default(),
        timeout: std::time::Duration::from_secs(60),
    };
    let gateways = Gateways {
        generator: Arc::new(HttpGenerator::new(base)),
        pipeline: SearchPipeline {
            provider: Arc::new(search),
            summarizer: Arc::new(LlmSummarizer::new(Arc::new(HttpGenerator::new(
                summarizer_ep,
            )))),
            top_k: config.top_k,
        },
        judge: Arc::new(LlmJudge::new(Arc::new(HttpGenerator::new(judge_ep)))),
    };
    let judge = gateways.judge.clone();
    Ok(LiveBackends {
        factory: Box::new(deepsearch::orchestrator::SharedGateways(gateways)),
        judge,
        link_provider: Some(Arc::new(WikiLinkProvider::default())),
        fixture: None,
    })
}

fn resolve_config(path: Option<&Path>, common: &CommonFlags) -> Result<RunConfig> {
    let env = |name: &str| std::env::var(name).ok();
    let mut config = match path {
        Some(p) => RunConfig::load(p, &env)?,
        None => {
            let mut c = RunConfig::default();
            c.apply_env(&env);
            c
        }
    };
    if let Some(mode) = common.mode {
        config.mode = mode;
    }
    if let Some(v) = common.max_turns {
        config.max_turns = v;
    }
    if let Some(v) = common.max_calls {
        config.max_calls = v;
    }
    if let Some(v) = common.concurrency {
        config.concurrency = v;
    }
    if let Some(v) = common.parallel_runs {
        config.parallel_runs = v;
    }
    if let Some(v) = common.seed {
        config.seed = v;
    }
    if let Some(v) = &common.mock {
        config.gateways.mock_fixture = Some(v.clone());
        config.gateways.llm_api_base = None;
        config.gateways.search_endpoint = None;
    }
    if let Some(v) = &common.cache_dir {
        config.cache_dir = Some(v.clone());
    }
    if common.no_cache {
        config.cache_dir = None;
    }
    config.validate()?;
    Ok(config)
}

fn policy_from(config: &RunConfig) -> Result<RunPolicy> {
    let mut prompts = PromptSet::default();
    if let Some(dir) = &config.prompt_dir {
        prompts.load_overrides(dir)?;
    }
    Ok(RunPolicy {
        mode: config.mode,
        concurrency: config.concurrency,
        sampling: config.sampling,
        prompts,
        seed: config.seed,
        ..RunPolicy::default()
    })
}

fn open_cache(config: &RunConfig) -> Result<Option<Arc<DiskCache>>> {
    Ok(match &config.cache_dir {
        Some(dir) => Some(Arc::new(DiskCache::open(dir)?)),
        None => None,
    })
}

async fn score_and_report(
    records: &[RunRecord],
    dataset: &[QuestionRecord],
    backends: &LiveBackends,
    config: &RunConfig,
    dataset_name: &str,
    out: &Path,
) -> Result<()> {
    let mbe = evaluation::mbe(records, dataset, backends.judge.as_ref()).await?;
    let has_links = dataset.iter().any(|q| q.gold_evidence_links.is_some());
    let coverage = match (&backends.link_provider, has_links) {
        (Some(provider), true) => Some(
            evaluation::mean_evidence_coverage(records, dataset, provider.as_ref(), config.top_k)
                .await?,
        ),
        _ => None,
    };
    let report = evaluation::build_report(
        records,
        dataset,
        &mbe,
        coverage.as_ref(),
        &ReportConfig {
            dataset_name: dataset_name.to_owned(),
            mode: mode_key(config.mode).to_owned(),
            max_turns: config.max_turns,
            max_calls: config.max_calls,
        },
    )?;
    let files = emit_report(&report, out)?;
    for f in files {
        println!("wrote {}", f.display());
    }
    println!(
        "n={} mean_f1={:.4} mean_mbe={:.4} mean_turns={:.2} mean_calls={:.2} auc_turns={:.4} auc_calls={:.4}",
        report.n,
        report.aggregates.mean_f1,
        report.aggregates.mean_mbe,
        report.aggregates.mean_turns,
        report.aggregates.mean_calls,
        report.aggregates.auc_turns,
        report.aggregates.auc_calls,
    );
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_owned())
}

async fn cmd_run(dataset_path: &Path, common: &CommonFlags, config: &RunConfig) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let backends = build_backends(config)?;
    let policy = policy_from(config)?;
    let budget = BudgetState::new(config.max_turns, config.max_calls);
    let cache = open_cache(config)?;

    let records = run_batch(
        &dataset,
        budget,
        &policy,
        config.parallel_runs,
        backends.factory.as_ref(),
        cache,
    )
    .await;

    std::fs::create_dir_all(&common.out)?;
    let log_path = common.out.join("trajectory_log.jsonl");
    if log_path.exists() {
        std::fs::remove_file(&log_path)?;
    }
    let log = RunLog::create(&log_path)?;
    for record in &records {
        log.append(record)?;
    }
    println!("wrote {}", log_path.display());

    score_and_report(
        &records,
        &dataset,
        &backends,
        config,
        &dataset_name(dataset_path),
        &common.out,
    )
    .await
}

fn records_from_log(
    log_path: &Path,
    dataset: &[QuestionRecord],
    config: &RunConfig,
) -> Result<Vec<RunRecord>> {
    read_log(log_path)?
        .into_iter()
        .map(|line| {
            let question = dataset
                .iter()
                .find(|q| q.id == line.question_id)
                .map(|q| q.question.clone())
                .with_context(|| format!("log row {} is not in the dataset", line.question_id))?;
            line.into_record(&question, config.max_turns, config.max_calls)
                .map_err(|e| anyhow::anyhow!("bad trajectory in log: {e}"))
        })
        .collect()
}

async fn cmd_evaluate(
    log_path: &Path,
    dataset_path: &Path,
    common: &CommonFlags,
    config: &RunConfig,
) -> Result<()> {
    let dataset = load_dataset(dataset_path)?;
    let backends = build_backends(config)?;
    let records = records_from_log(log_path, &dataset, config)?;
    score_and_report(
        &records,
        &dataset,
        &backends,
        config,
        &dataset_name(dataset_path),
        &common.out,
    )
    .await
}

async fn cmd_replay(
    log_path: &Path,
    dataset_path: &Path,
    common: &CommonFlags,
    config: &RunConfig,
) -> Result<()> {
    load_dataset(dataset_path)?; // validate the dataset before replaying
    let lines = read_log(log_path)?;
    let mut mismatches = 0usize;
    for line in &lines {
        let reparsed = deepsearch::protocol::parse_stream(&line.trajectory)
            .map_err(|e| anyhow::anyhow!("row {}: {e}", line.question_id))?;
        let trajectory = deepsearch::protocol::Trajectory::new(reparsed);
        let round_trip = trajectory.serialize();
        if round_trip != line.trajectory
            || trajectory.turns() != line.turns
            || trajectory.calls() != line.calls
        {
            mismatches += 1;
            eprintln!(
                "row {}: stored accounting disagrees with re-parse (turns {} vs {}, calls {} vs {})",
                line.question_id,
                line.turns,
                trajectory.turns(),
                line.calls,
                trajectory.calls(),
            );
        }
    }
    println!(
        "replayed {} rows, {} accounting mismatches",
        lines.len(),
        mismatches
    );
    cmd_evaluate(log_path, dataset_path, common, config).await
}

/// Per-seed synthesis generator: a dedicated script under the key
/// `"{id}/synthesis"`, falling back to the fixture default program.
fn synthesis_pipeline_for(
    fixture: &Arc<MockFixture>,
    seed_id: &str,
    config: &RunConfig,
) -> SynthesisPipeline {
    let key = format!("{seed_id}/synthesis");
    let program = fixture
        .programs
        .get(&key)
        .cloned()
        .unwrap_or_else(|| fixture.default_program.clone());
    SynthesisPipeline {
        generator: Arc::new(ScriptedGenerator::new(program)),
        search: SearchPipeline {
            provider: fixture.search_provider(),
            summarizer: fixture.summarizer(),
            top_k: config.top_k,
        },
        judge: Arc::new(HeuristicJudge),
        related_provider: fixture.related_provider(),
        prompts: PromptSet::default(),
        seed: config.seed,
    }
}

async fn cmd_synthesize(
    dataset_path: &Path,
    samples: usize,
    common: &CommonFlags,
    config: &RunConfig,
) -> Result<()> {
    let seeds = load_dataset(dataset_path)?;
    let backends = build_backends(config)?;
    let Some(fixture) = &backends.fixture else {
        bail!("`synthesize` currently requires --mock; the live related-questions backend needs credentials");
    };
    let policy = policy_from(config)?;
    let budget = BudgetState::new(config.max_turns, config.max_calls);
    let cache = open_cache(config)?;
    std::fs::create_dir_all(&common.out)?;

    let mut questions = Vec::new();
    let mut all_samples: Vec<TrajectorySample> = Vec::new();
    for seed in &seeds {
        let pipeline = synthesis_pipeline_for(fixture, &seed.id, config);
        let question = pipeline.synthesize(seed).await?;
        if question.verified {
            let trajectories = generate_trajectories(
                &question,
                samples,
                budget,
                &policy,
                backends.factory.as_ref(),
                cache.clone(),
            )
            .await;
            all_samples.extend(trajectories);
        }
        questions.push(question);
    }

    let questions_path = common.out.join("synthetic_questions.jsonl");
    write_jsonl(&questions_path, &questions)?;
    let samples_path = common.out.join("trajectory_samples.jsonl");
    write_jsonl(&samples_path, &all_samples)?;
    let sft_path = common.out.join("sft.jsonl");
    let mut sft_file = std::fs::File::create(&sft_path)?;
    let exported = export_sft(
        &all_samples,
        SftFormat::Jsonl,
        &policy.prompts.response_generation,
        &mut sft_file,
    )?;

    let verified = questions.iter().filter(|q| q.verified).count();
    println!(
        "seeds={} verified={} samples={} correct={} exported={}",
        seeds.len(),
        verified,
        all_samples.len(),
        all_samples.iter().filter(|s| s.correct).count(),
        exported,
    );
    for p in [&questions_path, &samples_path, &sft_path] {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_export_sft(samples_path: &Path, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(samples_path)?;
    let samples: Vec<TrajectorySample> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    let mut file = std::fs::File::create(out)?;
    let exported = export_sft(
        &samples,
        SftFormat::Jsonl,
        &PromptSet::default().response_generation,
        &mut file,
    )?;
    println!("exported {exported} examples to {}", out.display());
    Ok(())
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    for row in rows {
        serde_json::to_writer(&mut file, row)?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run { common, .. }
        | Command::Synthesize { common, .. }
        | Command::Evaluate { common, .. }
        | Command::Replay { common, .. } => common.clone(),
        Command::ExportSft { .. } => CommonFlags {
            mode: None,
            max_turns: None,
            max_calls: None,
            concurrency: None,
            parallel_runs: None,
            seed: None,
            mock: None,
            cache_dir: None,
            no_cache: false,
            out: PathBuf::from("out"),
        },
    };
    let config = resolve_config(cli.config.as_deref(), &common)?;

    // Mock runs use a paused clock on a single-threaded runtime: simulated
    // latencies auto-advance, so wall times in the log are deterministic.
    let mock = config.gateways.mock_fixture.is_some();
    let runtime = if mock {
        tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .start_paused(true)
            .build()?
    } else {
        tokio::runtime::Builder::new_multi_thread().enable_all().build()?
    };

    runtime.block_on(async {
        match &cli.command {
            Command::Run { dataset, common } => cmd_run(dataset, common, &config).await,
            Command::Synthesize {
                dataset,
                samples,
                common,
            } => cmd_synthesize(dataset, *samples, common, &config).await,
            Command::Evaluate {
                log,
                dataset,
                common,
            } => cmd_evaluate(log, dataset, common, &config).await,
            Command::ExportSft { samples, out } => cmd_export_sft(samples, out),
            Command::Replay {
                log,
                dataset,
                common,
            } => cmd_replay(log, dataset, common, &config).await,
        }
    })
}

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use tvg_anchor::ingest::{tasks_to_records, write_charades_style, write_jsonl};
use tvg_anchor::pipeline::{read_corpus, to_sft_example, StatsAccumulator};
use tvg_anchor::{
    evaluate, gen_synthetic, load_jsonl, score_corpus, train_loop, CorpusEntry, FilterCriteria,
    GridPolicy, GroundingTask, GrpoConfig, RewardConfig, ScoredRecord, TimeInterval,
    DEFAULT_THRESHOLDS,
};
use tvg_anchor_service::{ServiceConfig, DEFAULT_MAX_BATCH, DEFAULT_PORT};

/// Score, filter and evaluate timestamp-anchored grounding traces.
#[derive(Parser)]
#[command(name = "tvg-anchor", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score every corpus line and write one result line per record.
    Score(ScoreArgs),
    /// Keep the corpus lines that pass the quality filter.
    Filter(FilterArgs),
    /// Score, filter and write accepted traces as an SFT dataset.
    Export(FilterArgs),
    /// Mean IoU and R1 at IoU thresholds over prediction/ground-truth pairs.
    Eval(EvalArgs),
    /// Generate synthetic grounding tasks.
    Synth(SynthArgs),
    /// Run the toy GRPO simulation and write its training log.
    TrainSim(TrainArgs),
    /// Start the HTTP scoring service.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct RewardArgs {
    /// Weight of the anchor-count penalty.
    #[arg(long, default_value_t = 5.0)]
    beta: f64,
    /// Weight of the refinement term.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Anchor count with no penalty.
    #[arg(long, default_value_t = 2)]
    target_anchors: usize,
    /// Reward for a well-formed trace.
    #[arg(long, default_value_t = 3.0)]
    format_score: f64,
}

impl RewardArgs {
    fn config(&self) -> anyhow::Result<RewardConfig> {
        let cfg = RewardConfig {
            beta: self.beta,
            gamma: self.gamma,
            target_anchor_count: self.target_anchors,
            format_score: self.format_score,
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct CriteriaArgs {
    /// Totals must be strictly greater than this.
    #[arg(long, default_value_t = 6.4)]
    min_total: f64,
    /// Minimum number of anchors.
    #[arg(long, default_value_t = 2)]
    min_anchors: usize,
    /// First-anchor soft IoU must be strictly greater than this.
    #[arg(long, default_value_t = 0.5)]
    min_siou1: f64,
    /// Second-anchor soft IoU must be strictly greater than this.
    #[arg(long, default_value_t = 0.7)]
    min_siou2: f64,
}

impl CriteriaArgs {
    fn criteria(&self) -> FilterCriteria {
        FilterCriteria {
            min_total_reward: self.min_total,
            min_anchor_count: self.min_anchors,
            min_siou_anchor1: self.min_siou1,
            min_siou_anchor2: self.min_siou2,
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    /// Corpus file, one JSON object per line.
    #[arg(short, long)]
    input: PathBuf,
    /// Output file; standard output when omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    reward: RewardArgs,
    #[command(flatten)]
    criteria: CriteriaArgs,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    #[command(flatten)]
    reward: RewardArgs,
    #[command(flatten)]
    criteria: CriteriaArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Pairs file: lines of {"pred_start", "pred_end", "gt_start", "gt_end"}.
    #[arg(short, long)]
    input: PathBuf,
    /// IoU thresholds for R1.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_THRESHOLDS.to_vec())]
    thresholds: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskFormat {
    Jsonl,
    Charades,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(short, long)]
    output: PathBuf,
    #[arg(short, long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 20.0)]
    min_duration: f64,
    #[arg(long, default_value_t = 40.0)]
    max_duration: f64,
    #[arg(long, default_value_t = 3.0)]
    min_segment: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TaskFormat::Jsonl)]
    format: TaskFormat,
}

#[derive(Args)]
struct TrainArgs {
    /// Task file (JSON lines with durations); synthetic tasks when omitted.
    #[arg(long)]
    tasks: Option<PathBuf>,
    /// Number of synthetic tasks when no task file is given.
    #[arg(long, default_value_t = 16)]
    synthetic_tasks: usize,
    /// Seed for synthetic task generation.
    #[arg(long, default_value_t = 7)]
    task_seed: u64,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    group_size: usize,
    #[arg(long, default_value_t = 12)]
    bins: usize,
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.01)]
    kl: f64,
    /// Updates between refreshes of the sampling policy.
    #[arg(long, default_value_t = 1)]
    refresh: usize,
    /// Training log, one JSON object per step.
    #[arg(long)]
    log: PathBuf,
    /// Tab-separated reward curves.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[command(flatten)]
    reward: RewardArgs,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "TVG_ANCHOR_HOST", default_value = "127.0.0.1")]
    host: IpAddr,
    #[arg(long, env = "TVG_ANCHOR_PORT", default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, env = "TVG_ANCHOR_MAX_BATCH", default_value_t = DEFAULT_MAX_BATCH)]
    max_batch: usize,
    #[command(flatten)]
    reward: RewardArgs,
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Internal(anyhow::Error),
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Data(e) | Failure::Internal(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Failure::Usage(msg.into()).into()
}

fn data(e: impl Into<anyhow::Error>) -> anyhow::Error {
    Failure::Data(e.into()).into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Failure>() {
        Some(Failure::Usage(_)) => 1,
        Some(Failure::Data(_)) => 2,
        Some(Failure::Internal(_)) | None => 3,
    }
}

/// Output file written through a temporary sibling and moved into place by
/// [`AtomicOutput::commit`]; dropped uncommitted, it leaves nothing behind.
struct AtomicOutput {
    path: PathBuf,
    writer: BufWriter<tempfile::NamedTempFile>,
}

impl AtomicOutput {
    fn create(path: &Path) -> anyhow::Result<Self> {
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = tempfile::NamedTempFile::new_in(dir)
            .with_context(|| format!("cannot create output in {}", dir.display()))
            .map_err(data)?;
        Ok(Self {
            path: path.to_path_buf(),
            writer: BufWriter::new(tmp),
        })
    }

    fn commit(self) -> anyhow::Result<()> {
        let tmp = self.writer.into_inner().map_err(|e| data(e.into_error()))?;
        tmp.persist(&self.path)
            .with_context(|| format!("cannot write {}", self.path.display()))
            .map_err(data)?;
        Ok(())
    }
}

impl Write for AtomicOutput {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.writer.write(buf)
    }
    fn flush(&mut self) -> io::Result<()> {
        self.writer.flush()
    }
}

fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    let mut out = AtomicOutput::create(path)?;
    out.write_all(contents.as_bytes()).map_err(data)?;
    out.commit()
}

/// Streams the corpus, warning about undecodable lines on stderr.
fn corpus(path: &Path) -> anyhow::Result<impl Iterator<Item = CorpusEntry>> {
    let lines = read_corpus(path).map_err(data)?;
    Ok(lines.filter_map(|line| match line {
        Ok(entry) => Some(entry),
        Err(bad) => {
            eprintln!("warning: line {}: {}", bad.line, bad.message);
            None
        }
    }))
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    index: usize,
    video_id: &'a str,
    accepted: bool,
    reject_reason: Option<tvg_anchor::RejectReason>,
    verdict: &'a tvg_anchor::FormatVerdict,
    breakdown: Option<&'a tvg_anchor::RewardBreakdown>,
    thinking_length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

fn score_line(r: &ScoredRecord) -> String {
    serde_json::to_string(&ScoreLine {
        index: r.index,
        video_id: &r.entry.video_id,
        accepted: r.accepted,
        reject_reason: r.reject_reason,
        verdict: r.trace.verdict(),
        breakdown: r.breakdown.as_ref(),
        thinking_length: r.trace.thinking_length(),
        error: r.error.as_deref(),
    })
    .expect("score lines serialize")
}

fn print_stats(stats: &StatsAccumulator) {
    let s = stats.finish();
    eprintln!(
        "records {} accepted {:.1}% format failures {:.1}% mean thinking length {:.2}",
        s.total,
        s.acceptance_rate * 100.0,
        s.format_failure_rate * 100.0,
        s.mean_thinking_length
    );
}

fn run_score(args: ScoreArgs) -> anyhow::Result<()> {
    let cfg = args.reward.config()?;
    let criteria = args.criteria.criteria();
    let mut stats = StatsAccumulator::default();
    let records = score_corpus(corpus(&args.input)?, &cfg, &criteria);
    match &args.output {
        Some(path) => {
            let mut out = AtomicOutput::create(path)?;
            for r in records {
                stats.push(&r);
                writeln!(out, "{}", score_line(&r)).map_err(data)?;
            }
            out.commit()?;
        }
        None => {
            let stdout = io::stdout();
            let mut out = stdout.lock();
            for r in records {
                stats.push(&r);
                writeln!(out, "{}", score_line(&r))?;
            }
        }
    }
    print_stats(&stats);
    Ok(())
}

fn run_filter(args: FilterArgs, export: bool) -> anyhow::Result<()> {
    let cfg = args.reward.config()?;
    let criteria = args.criteria.criteria();
    let mut stats = StatsAccumulator::default();
    let mut out = AtomicOutput::create(&args.output)?;
    let mut kept = 0usize;
    for r in score_corpus(corpus(&args.input)?, &cfg, &criteria) {
        stats.push(&r);
        if !r.accepted {
            continue;
        }
        let line = if export {
            serde_json::to_string(&to_sft_example(&r).map_err(data)?)?
        } else {
            serde_json::to_string(&r.entry)?
        };
        writeln!(out, "{line}").map_err(data)?;
        kept += 1;
    }
    out.commit()?;
    print_stats(&stats);
    eprintln!("wrote {kept} records to {}", args.output.display());
    Ok(())
}

#[derive(Deserialize)]
struct PairLine {
    pred_start: f64,
    pred_end: f64,
    gt_start: f64,
    gt_end: f64,
}

fn read_pairs(path: &Path) -> anyhow::Result<Vec<(TimeInterval, TimeInterval)>> {
    let file = File::open(path)
        .with_context(|| format!("cannot open {}", path.display()))
        .map_err(data)?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |e: String| data(anyhow!("{}:{}: {e}", path.display(), i + 1));
        let p: PairLine = serde_json::from_str(&line).map_err(|e| at(e.to_string()))?;
        let pred = TimeInterval::new(p.pred_start, p.pred_end).map_err(|e| at(e.to_string()))?;
        let gt = TimeInterval::new(p.gt_start, p.gt_end).map_err(|e| at(e.to_string()))?;
        pairs.push((pred, gt));
    }
    Ok(pairs)
}

fn run_eval(args: EvalArgs) -> anyhow::Result<()> {
    if let Some(t) = args.thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(usage(format!("threshold {t} must lie in (0, 1]")));
    }
    let pairs = read_pairs(&args.input)?;
    let report = evaluate(&pairs, &args.thresholds).map_err(data)?;
    print!("{report}");
    println!("{}", report.machine_line());
    Ok(())
}

fn run_synth(args: SynthArgs) -> anyhow::Result<()> {
    let tasks = gen_synthetic(
        args.n,
        (args.min_duration, args.max_duration),
        args.min_segment,
        args.seed,
    )
    .map_err(|e| usage(e.to_string()))?;
    let records = tasks_to_records(&tasks);
    let text = match args.format {
        TaskFormat::Jsonl => write_jsonl(&records),
        TaskFormat::Charades => write_charades_style(&records),
    };
    write_file(&args.output, &text)?;
    eprintln!("wrote {} tasks to {}", tasks.len(), args.output.display());
    Ok(())
}

fn load_tasks(args: &TrainArgs) -> anyhow::Result<Vec<GroundingTask>> {
    let Some(path) = &args.tasks else {
        return gen_synthetic(args.synthetic_tasks, (20.0, 40.0), 3.0, args.task_seed)
            .map_err(|e| usage(e.to_string()));
    };
    let loaded = load_jsonl(path).map_err(data)?;
    if let Some(bad) = loaded.rejects.first() {
        return Err(data(anyhow!(
            "{}:{}: {}",
            path.display(),
            bad.line,
            bad.kind
        )));
    }
    let tasks: Option<Vec<GroundingTask>> = loaded.records.iter().map(|r| r.to_task()).collect();
    tasks.ok_or_else(|| data(anyhow!("{}: every task needs a duration", path.display())))
}

fn run_train(args: TrainArgs) -> anyhow::Result<()> {
    let cfg = GrpoConfig {
        group_size: args.group_size,
        kl_coefficient: args.kl,
        learning_rate: args.learning_rate,
        steps: args.steps,
        seed: args.seed,
        bins: args.bins,
        old_refresh_interval: args.refresh,
        reward: args.reward.config()?,
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let tasks = load_tasks(&args)?;
    let outcome = train_loop(&tasks, &cfg, &GridPolicy::uniform(cfg.bins))
        .map_err(|e| Failure::Internal(e.into()))?;
    write_file(&args.log, &outcome.log.to_jsonl())?;
    if let Some(plot) = &args.plot {
        write_file(plot, &outcome.log.plot_columns())?;
    }
    if let (Some(first), Some(last)) = (outcome.log.records.first(), outcome.log.records.last()) {
        eprintln!(
            "{} steps over {} tasks, reward {:.3} -> {:.3}",
            outcome.log.records.len(),
            tasks.len(),
            first.reward_mean,
            last.reward_mean
        );
    }
    Ok(())
}

fn run_serve(args: ServeArgs) -> anyhow::Result<()> {
    let cfg = ServiceConfig {
        max_batch: args.max_batch,
        reward: args.reward.config()?,
    };
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("cannot bind {addr}"))
            .map_err(data)?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        tvg_anchor_service::serve(listener, cfg).await?;
        Ok(())
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Score(a) => run_score(a),
        Command::Filter(a) => run_filter(a, false),
        Command::Export(a) => run_filter(a, true),
        Command::Eval(a) => run_eval(a),
        Command::Synth(a) => run_synth(a),
        Command::TrainSim(a) => run_train(a),
        Command::Serve(a) => run_serve(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

mod config;
mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use ctxaug::corpus::{read_m2, read_parallel, write_jsonl, CorpusError, ParallelExample};
use ctxaug::denoise::{relabel, relabel_diff_stats, Corrector, DenoiseError, IdentityCorrector, OracleCorrector, RelabelOptions};
use ctxaug::eval::{compare_pools, error_rate, score, EvalError};
use ctxaug::genbackend::{assemble_input, GenError, Generator, StubGenerator};
use ctxaug::mix::{mix, ratio_sweep, MixError, StagePlan};
use ctxaug::pattern::{build_pool_from, merge_pools, PatternError, PatternPool, PatternSampler, PoolStats};
use ctxaug::synth::{planted_pool, read_samples, synthesize, write_samples, SynthConfig, SynthError};

use config::{check_rate, check_width, default_workers, pick, ConfigError, CorrectorBackend, FileConfig, GenBackend};
use manifest::{sidecar, write_json, ManifestBuilder};

static QUIET: AtomicBool = AtomicBool::new(false);

/// Contextual data augmentation for grammatical error correction corpora.
#[derive(Parser)]
#[command(name = "ctxaug", version, about)]
struct Cli {
    /// JSON settings file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Suppress the JSON stage events on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an error-pattern pool from a parallel corpus (TSV, JSONL or M2).
    Extract(ExtractArgs),
    /// Merge pattern pools and print their statistics.
    Pool(PoolArgs),
    /// Draw pattern sets and write the generation requests they produce.
    Sample(SampleArgs),
    /// Generate contexts for sampled patterns and plant the errors.
    Synthesize(SynthArgs),
    /// Relabel synthetic sources with a corrector.
    Denoise(DenoiseArgs),
    /// Mix real and synthetic corpora according to a stage plan.
    Mix(MixArgs),
    /// Compare a corpus's pattern distribution with a reference pool.
    Stats(StatsArgs),
    /// Score hypotheses against M2 gold edits.
    Score(ScoreArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Pattern width (1, 3 or 5).
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PoolArgs {
    #[arg(long = "in", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print this many most frequent patterns.
    #[arg(long)]
    top_k: Option<usize>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    error_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    backend: Option<GenBackend>,
    /// Total generation attempts allowed (default three per sample).
    #[arg(long)]
    attempt_budget: Option<usize>,
    /// Make the stub drop each pattern with this probability.
    #[arg(long)]
    stub_drop_rate: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DenoiseArgs {
    /// Synthetic samples as written by `synthesize`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<CorrectorBackend>,
    /// Resume file of finished pairs.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MixArgs {
    #[arg(long)]
    plan: PathBuf,
    /// Overrides the plan's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated synthetic caps; `--out` is then a directory.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    ref_pool: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    top_k: Option<usize>,
    /// Count planted patterns of a synthetic corpus instead of re-extracting.
    #[arg(long)]
    planted: bool,
    #[arg(long)]
    out: PathBuf,
    /// Frequency vectors as CSV (default: beside `--out`).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    hyp: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    beta: Option<f64>,
    /// Also write the report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn event(stage: &str, status: &str, extra: Value) {
    if QUIET.load(Ordering::Relaxed) {
        return;
    }
    let mut e = json!({ "stage": stage, "status": status });
    if let (Value::Object(m), Value::Object(x)) = (&mut e, extra) {
        m.extend(x);
    }
    eprintln!("{e}");
}

struct Ctx {
    file: FileConfig,
    workers: usize,
}

impl Ctx {
    fn width(&self, flag: Option<usize>) -> Result<usize, ConfigError> {
        check_width(pick(flag, self.file.n, 3))
    }

    fn seed(&self, flag: Option<u64>, command: &'static str) -> Result<u64, ConfigError> {
        flag.or(self.file.seed).ok_or(ConfigError::MissingSeed(command))
    }
}

fn basename(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Parallel pairs from TSV/JSONL, or the first annotator's corrections
/// from an M2 file.
fn load_pairs(path: &Path) -> Result<Vec<ParallelExample>> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("m2")) {
        let mut out = Vec::new();
        for ex in read_m2(path)? {
            let ex = ex?;
            let target = match ex.annotations.first() {
                Some((a, _)) => ex.corrected(*a).expect("annotator exists"),
                None => ex.source.clone(),
            };
            out.push(ParallelExample {
                id: ex.id,
                source: ex.source,
                target,
                meta: Default::default(),
            });
        }
        Ok(out)
    } else {
        Ok(read_parallel(path)?)
    }
}

fn cmd_extract(ctx: &Ctx, a: ExtractArgs) -> Result<()> {
    let n = ctx.width(a.n)?;
    event("extract", "start", json!({ "input": basename(&a.input), "n": n }));
    let pairs = load_pairs(&a.input)?;
    let pool = build_pool_from(&pairs, n, ctx.workers)?.with_provenance(basename(&a.input));
    pool.write_jsonl(&a.out)?;
    let stats = PoolStats::from(&pool);
    let errorful = pairs.iter().filter(|p| p.is_errorful()).count();
    ManifestBuilder::new("extract", json!({ "n": n }))
        .input(&a.input)
        .output(&a.out)
        .counts(json!({
            "pairs": pairs.len(),
            "errorful_pairs": errorful,
            "patterns": stats.patterns,
            "occurrences": stats.total,
            "sendable_patterns": stats.sendable_patterns,
        }))
        .write(&a.out)?;
    event("extract", "done", json!({ "pairs": pairs.len(), "patterns": stats.patterns }));
    Ok(())
}

fn cmd_pool(a: PoolArgs) -> Result<()> {
    let pools = a
        .inputs
        .iter()
        .map(|p| PatternPool::read_jsonl(p, None))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_pools(&pools)?;
    let stats = PoolStats::from(&merged);
    let mut report = serde_json::to_value(&stats)?;
    if let Some(k) = a.top_k {
        report["top"] = merged
            .top_k(k)
            .into_iter()
            .map(|(p, c)| json!({ "wrong": p.wrong, "correct": p.correct, "count": c }))
            .collect();
    }
    if let Some(out) = &a.out {
        merged.write_jsonl(out)?;
        let mut m = ManifestBuilder::new("pool", json!({ "n": merged.n() }));
        for p in &a.inputs {
            m = m.input(p);
        }
        m.output(out).counts(serde_json::to_value(&stats)?).write(out)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_sample(ctx: &Ctx, a: SampleArgs) -> Result<()> {
    let seed = ctx.seed(a.seed, "sample")?;
    let count = pick(a.count, ctx.file.count, 100);
    let pool = PatternPool::read_jsonl(&a.pool, None)?.sendable();
    let sampler = PatternSampler::new(&pool)?;
    let out = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = BufWriter::new(out);
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let correct: Vec<_> = sampler.draw(&mut rng).into_iter().map(|p| p.correct).collect();
        let request = assemble_input(i.to_string(), &correct, &mut rng)?;
        writeln!(w, "{}", serde_json::to_string(&request)?)?;
    }
    w.flush()?;
    ManifestBuilder::new("sample", json!({ "count": count }))
        .seed(seed)
        .input(&a.pool)
        .output(&a.out)
        .counts(json!({ "requests": count }))
        .write(&a.out)?;
    Ok(())
}

fn cmd_synthesize(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let seed = ctx.seed(a.seed, "synthesize")?;
    let count = pick(a.count, ctx.file.count, 1000);
    let error_rate = check_rate(pick(a.error_rate, ctx.file.error_rate, 0.5))?;
    let backend_kind = pick(a.backend, ctx.file.backend, GenBackend::Stub);
    let drop_rate = check_rate(pick(a.stub_drop_rate, ctx.file.stub_drop_rate, 0.0))?;
    let budget = a.attempt_budget.or(ctx.file.attempt_budget);

    let pool = PatternPool::read_jsonl(&a.pool, None)?;
    let backend: Box<dyn Generator> = match backend_kind {
        GenBackend::Stub => Box::new(StubGenerator::new(seed).with_drop_rate(drop_rate)),
        GenBackend::Http => http_generator()?,
    };
    let config = SynthConfig {
        count,
        error_rate,
        seed,
        workers: ctx.workers,
        attempt_budget: budget,
    };
    event("synthesize", "start", json!({ "count": count, "generator": backend.id() }));
    let output = synthesize(&pool, backend.as_ref(), &config)?;
    write_samples(&output.samples, &a.out)?;
    let stats_path = sidecar(&a.out, "stats.json");
    write_json(&stats_path, &output.stats.report())?;
    ManifestBuilder::new(
        "synthesize",
        json!({
            "count": count,
            "error_rate": error_rate,
            "backend": backend.id(),
            "attempt_budget": config.budget(),
        }),
    )
    .seed(seed)
    .input(&a.pool)
    .output(&a.out)
    .output(&stats_path)
    .counts(output.stats.report())
    .write(&a.out)?;
    event(
        "synthesize",
        "done",
        json!({ "samples": output.stats.samples, "attempts": output.stats.attempts }),
    );
    Ok(())
}

#[cfg(feature = "http")]
fn http_generator() -> Result<Box<dyn Generator>> {
    use ctxaug::genbackend::{HttpGenerator, HttpGeneratorConfig, GEN_URL_ENV};
    let cfg = HttpGeneratorConfig::from_env().ok_or_else(|| ConfigError::Other(format!("{GEN_URL_ENV} is not set")))?;
    Ok(Box::new(HttpGenerator::new(cfg)))
}

#[cfg(not(feature = "http"))]
fn http_generator() -> Result<Box<dyn Generator>> {
    Err(ConfigError::Other("built without HTTP support".into()).into())
}

#[cfg(feature = "http")]
fn http_corrector() -> Result<Box<dyn Corrector>> {
    use ctxaug::denoise::{HttpCorrector, CORRECTOR_URL_ENV};
    let c = HttpCorrector::from_env().ok_or_else(|| ConfigError::Other(format!("{CORRECTOR_URL_ENV} is not set")))?;
    Ok(Box::new(c))
}

#[cfg(not(feature = "http"))]
fn http_corrector() -> Result<Box<dyn Corrector>> {
    Err(ConfigError::Other("built without HTTP support".into()).into())
}

fn cmd_denoise(ctx: &Ctx, a: DenoiseArgs) -> Result<()> {
    let samples = read_samples(&a.input)?;
    let kind = pick(a.backend, ctx.file.corrector, CorrectorBackend::Identity);
    let corrector: Box<dyn Corrector> = match kind {
        CorrectorBackend::Identity => Box::new(IdentityCorrector),
        CorrectorBackend::Oracle => Box::new(OracleCorrector::new(&samples)),
        CorrectorBackend::Http => http_corrector()?,
    };
    event("denoise", "start", json!({ "samples": samples.len(), "corrector": corrector.id() }));
    let options = RelabelOptions {
        workers: ctx.workers,
        checkpoint: a.checkpoint.clone(),
    };
    let relabeled = relabel(&samples, corrector.as_ref(), &options)?;
    write_jsonl(&relabeled, &a.out)?;
    let before: Vec<_> = samples.iter().map(|s| s.to_parallel()).collect();
    let diff = relabel_diff_stats(&before, &relabeled)?;
    let diff_path = sidecar(&a.out, "diff.json");
    write_json(&diff_path, &diff)?;
    ManifestBuilder::new("denoise", json!({ "corrector": corrector.id() }))
        .input(&a.input)
        .output(&a.out)
        .output(&diff_path)
        .counts(serde_json::to_value(&diff)?)
        .write(&a.out)?;
    event("denoise", "done", json!({ "pairs": relabeled.len(), "changed": diff.changed_targets }));
    Ok(())
}

fn cmd_mix(a: MixArgs) -> Result<()> {
    let mut plan = StagePlan::read(&a.plan)?;
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    let plan_config = json!({
        "stage": plan.stage,
        "synthetic_count": plan.synthetic_count,
        "sweep": a.sweep,
    });
    let mut manifest = ManifestBuilder::new("mix", plan_config).seed(plan.seed).input(&a.plan);
    for p in plan.real_corpora.iter().chain(plan.synthetic_corpus.as_ref()) {
        manifest = manifest.input(p);
    }
    event("mix", "start", json!({ "stage": plan.stage }));
    match &a.sweep {
        Some(caps) => {
            std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
            let rows = ratio_sweep(&plan, caps, &a.out)?;
            let summary = a.out.join("sweep-summary.json");
            for row in &rows {
                manifest = manifest.output(a.out.join(&row.file));
            }
            manifest
                .output(&summary)
                .counts(json!(rows.iter().map(|r| json!({ "cap": r.cap, "total": r.manifest.total })).collect::<Vec<_>>()))
                .write(&summary)?;
            event("mix", "done", json!({ "files": rows.len() }));
        }
        None => {
            let mixed = mix(&plan)?;
            mixed.write(&a.out)?;
            manifest
                .output(&a.out)
                .counts(serde_json::to_value(&mixed.manifest)?)
                .write(&a.out)?;
            event("mix", "done", json!({ "total": mixed.manifest.total }));
        }
    }
    Ok(())
}

fn cmd_stats(ctx: &Ctx, a: StatsArgs) -> Result<()> {
    let top_k = pick(a.top_k, ctx.file.top_k, 100);
    let reference = PatternPool::read_jsonl(&a.ref_pool, None)?;
    let (candidate, pairs, rate) = if a.planted {
        let samples = read_samples(&a.corpus)?;
        let pairs: Vec<_> = samples.iter().map(|s| s.to_parallel()).collect();
        (planted_pool(&samples, reference.n())?, pairs.len(), error_rate(&pairs))
    } else {
        let pairs = load_pairs(&a.corpus)?;
        let pool = build_pool_from(&pairs, reference.n(), ctx.workers)?;
        (pool, pairs.len(), error_rate(&pairs))
    };
    let report = compare_pools(&reference, &candidate, top_k)?;
    let mut out = serde_json::to_value(&report)?;
    out["corpus_pairs"] = pairs.into();
    out["error_rate"] = rate.into();
    write_json(&a.out, &out)?;

    let csv_path = a.csv.clone().unwrap_or_else(|| sidecar(&a.out, "csv"));
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["rank", "wrong", "correct", "reference", "candidate"])?;
    for (i, p) in report.patterns.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            p.wrong.join(" "),
            p.correct.join(" "),
            report.reference_freqs[i].to_string(),
            report.candidate_freqs[i].to_string(),
        ])?;
    }
    w.flush()?;
    ManifestBuilder::new("stats", json!({ "top_k": top_k, "planted": a.planted }))
        .input(&a.ref_pool)
        .input(&a.corpus)
        .output(&a.out)
        .output(&csv_path)
        .counts(json!({ "cosine": report.cosine, "spearman": report.spearman, "error_rate": rate }))
        .write(&a.out)?;
    event("stats", "done", json!({ "cosine": report.cosine, "spearman": report.spearman }));
    Ok(())
}

fn cmd_score(ctx: &Ctx, a: ScoreArgs) -> Result<()> {
    let beta = pick(a.beta, ctx.file.beta, 0.5);
    let hyp = load_pairs(&a.hyp)?;
    let gold = read_m2(&a.gold)?.collect::<Result<Vec<_>, _>>()?;
    let report = score(&hyp, &gold, beta)?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_json(out, &report)?;
        ManifestBuilder::new("score", json!({ "beta": beta }))
            .input(&a.hyp)
            .input(&a.gold)
            .output(out)
            .counts(json!({ "tp": report.counts.tp, "fp": report.counts.fp, "fn": report.counts.fn_ }))
            .write(out)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let workers = pick(cli.workers, file.workers, default_workers()).max(1);
    let ctx = Ctx { file, workers };
    let started = Instant::now();
    match cli.command {
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Pool(a) => cmd_pool(a),
        Command::Sample(a) => cmd_sample(&ctx, a),
        Command::Synthesize(a) => cmd_synthesize(&ctx, a),
        Command::Denoise(a) => cmd_denoise(&ctx, a),
        Command::Mix(a) => cmd_mix(a),
        Command::Stats(a) => cmd_stats(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
    }?;
    event("run", "done", json!({ "elapsed_ms": started.elapsed().as_millis() as u64 }));
    Ok(())
}

/// Short machine-readable class of an error, taken from the first typed
/// error found in its chain.
fn error_code(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return "config";
        }
        if cause.is::<CorpusError>() {
            return "input";
        }
        if cause.is::<PatternError>() {
            return "pattern";
        }
        if cause.is::<GenError>() || cause.is::<SynthError>() {
            return "synth";
        }
        if cause.is::<DenoiseError>() {
            return "denoise";
        }
        if cause.is::<MixError>() {
            return "mix";
        }
        if cause.is::<EvalError>() {
            return "eval";
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return "io";
        }
    }
    "internal"
}

/// The error and its causes on one line, skipping causes whose text is
/// already part of the message.
fn one_line(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if msg.contains(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage] {}", first.split_whitespace().collect::<Vec<_>>().join(" "));
            return ExitCode::from(2);
        }
    };
    QUIET.store(cli.quiet, Ordering::Relaxed);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = error_code(&err);
            eprintln!("error[{code}] {}", one_line(&err));
            ExitCode::from(if code == "config" { 2 } else { 1 })
        }
    }
}

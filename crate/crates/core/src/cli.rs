//! The `liverec` operator command line: crawl, top-up, filter, train,
//! evaluate, serve and export.
//!
//! Each command reads and writes only the paths given on the command line and
//! delegates to the library; the binary is a thin wrapper around
//! [`dispatch`]. Exit status is 0 on success, 2 on a usage error and 1 when a
//! command fails at runtime.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::dataset::{
    build_interaction_matrix, filter_min_interactions, ingest_reader, split_holdout, top_up_merge, write_events,
    Dataset, InteractionMatrix,
};
use crate::recommend::{
    evaluate, read_model_file, train_mf_with, train_multvae_with, write_model_file, Model, ModelBundle, ModelKind,
    PopularityScorer, TrainingConfig,
};
use crate::scrobble::{CrawlPlan, ScrobbleApiConfig, ScrobbleClient, ScrobbleError};
use crate::study::{export_records, replay_file, serve, write_ndjson, DateRange, StudyConfig, StudyService};

#[derive(Debug, Parser)]
#[command(name = "liverec", version, about = "Operate a live music-recommendation study")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crawl the social graph from seed users and download their histories.
    Crawl(CrawlArgs),
    /// Merge a freshly crawled event file into an existing one.
    Topup(TopupArgs),
    /// Drop tracks with too few listening events.
    Filter(FilterArgs),
    /// Train one or more model variants concurrently.
    Train(TrainArgs),
    /// Score a trained model on held-out users.
    Evaluate(EvaluateArgs),
    /// Run the study service.
    Serve(ServeArgs),
    /// Export recorded responses from a response log.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct CrawlArgs {
    /// Service config file; its [scrobble] table supplies the API settings.
    #[arg(long, required_unless_present = "api_url")]
    config: Option<PathBuf>,
    /// Scrobble API base URL; overrides the config file.
    #[arg(long)]
    api_url: Option<String>,
    #[arg(long = "seed-user", required = true)]
    seed_users: Vec<String>,
    #[arg(long)]
    target: usize,
    #[arg(long, default_value_t = 50)]
    max_friends: usize,
    #[arg(long)]
    seed: u64,
    /// Only keep events at or after this unix timestamp.
    #[arg(long)]
    since: Option<u64>,
    /// Event file to write.
    #[arg(long)]
    out: PathBuf,
    /// Also write the crawled usernames, one per line.
    #[arg(long)]
    users_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TopupArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    fresh: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: u64,
}

#[derive(Debug, Args)]
struct FilterArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep tracks with strictly more than this many events.
    #[arg(long)]
    min_le: u64,
}

/// Which users a model trains on, and which are held out for evaluation.
#[derive(Debug, Clone, Args)]
struct SplitArgs {
    /// Apply the minimum-interaction filter before building the matrix.
    #[arg(long)]
    min_le: Option<u64>,
    /// Fraction of users withheld from training for evaluation.
    #[arg(long, default_value_t = 0.0)]
    validation_fraction: f64,
    /// Fraction of each validation user's items hidden from the model.
    #[arg(long, default_value_t = 0.2)]
    holdout_fraction: f64,
    /// Seed of the user split.
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Variant file (JSON); repeat to train several variants concurrently.
    #[arg(long = "variant", required = true)]
    variants: Vec<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides every variant's `rng_seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Also report the popularity baseline.
    #[arg(long)]
    baseline: bool,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    log: PathBuf,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Earliest answer time, unix milliseconds (inclusive).
    #[arg(long)]
    from: Option<u64>,
    /// Latest answer time, unix milliseconds (exclusive).
    #[arg(long)]
    to: Option<u64>,
}

/// A training variant file: the model kind, an optional name (defaults to
/// the file stem) and any [`TrainingConfig`] fields.
///
/// ```json
/// {"kind": "multvae", "name": "vae-h64", "hidden": 64, "latent": 16, "epochs": 40}
/// ```
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Variant {
    pub kind: ModelKind,
    pub name: Option<String>,
    #[serde(flatten)]
    pub config: TrainingConfig,
}

/// Failure of one command, tagged with the stage that failed.
#[derive(Debug)]
struct Failure {
    stage: String,
    message: String,
}

impl Failure {
    fn new(stage: impl Into<String>, e: impl std::fmt::Display) -> Self {
        Self {
            stage: stage.into(),
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

/// Runs one command line. `args` includes the program name.
pub fn dispatch<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(err, "{}", e.render());
                    2
                }
            };
        }
    };
    let result = match cli.command {
        Command::Crawl(a) => crawl(a, out),
        Command::Topup(a) => topup(a, out),
        Command::Filter(a) => filter(a, out),
        Command::Train(a) => train(a, out),
        Command::Evaluate(a) => evaluate_cmd(a, out),
        Command::Serve(a) => serve_cmd(a, out),
        Command::Export(a) => export(a, out),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}: {}", f.stage, f.message);
            1
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, Failure> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::new("runtime", e))
}

fn print(out: &mut dyn Write, text: &str) -> CmdResult {
    writeln!(out, "{text}").map_err(|e| Failure::new("output", e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report serializes")
}

/// Reads an event file; malformed lines are reported on the log and skipped.
pub fn read_events(path: &Path) -> Result<Dataset, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (ds, report) = ingest_reader(BufReader::new(file)).map_err(|e| format!("{}: {e}", path.display()))?;
    if !report.malformed.is_empty() {
        tracing::warn!(
            path = %path.display(),
            malformed = report.malformed.len(),
            first = ?report.malformed.first(),
            "skipped malformed lines"
        );
    }
    Ok(ds)
}

pub fn write_event_file(path: &Path, ds: &Dataset) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_events(&mut w, ds.events())?;
    w.flush()
}

#[derive(Serialize)]
struct CrawlSummary {
    users: usize,
    events: usize,
    skipped: usize,
    exhausted: bool,
}

fn crawl(a: CrawlArgs, out: &mut dyn Write) -> CmdResult {
    let mut api = match &a.config {
        Some(p) => StudyConfig::load(p).map_err(|e| Failure::new("config", e))?.scrobble,
        None => ScrobbleApiConfig::default(),
    };
    if let Some(url) = &a.api_url {
        api.base_url = url.clone();
    }
    let client = ScrobbleClient::new(api).map_err(|e| Failure::new("config", e))?;
    let plan = CrawlPlan {
        seed_usernames: a.seed_users.clone(),
        target_user_count: a.target,
        rng_seed: a.seed,
        max_friends_per_user: a.max_friends,
    };
    let (result, events, skipped) = runtime()?.block_on(async {
        let result = client
            .crawl_social_graph(&plan)
            .await
            .map_err(|e| Failure::new("crawl", e))?;
        let mut events = Vec::new();
        let mut skipped = 0;
        for user in &result.usernames {
            match client.fetch_user_history(user, a.since).await {
                Ok(history) => events.extend(history),
                Err(e @ (ScrobbleError::UserNotFound(_) | ScrobbleError::PrivateAccount(_))) => {
                    tracing::warn!(user, error = %e, "skipping user");
                    skipped += 1;
                }
                Err(e) => return Err(Failure::new(format!("fetch {user}"), e)),
            }
        }
        Ok((result, events, skipped))
    })?;
    let ds = Dataset::from_events(events);
    write_event_file(&a.out, &ds).map_err(|e| Failure::new("write events", e))?;
    if let Some(p) = &a.users_out {
        let text: String = result.usernames.iter().map(|u| format!("{u}\n")).collect();
        std::fs::write(p, text).map_err(|e| Failure::new("write users", e))?;
    }
    print(
        out,
        &to_json(&CrawlSummary {
            users: result.usernames.len(),
            events: ds.n_events(),
            skipped,
            exhausted: result.exhausted,
        }),
    )
}

#[derive(Serialize)]
struct DatasetSummary {
    users: usize,
    tracks: usize,
    events: usize,
}

impl DatasetSummary {
    fn of(ds: &Dataset) -> Self {
        Self {
            users: ds.n_users(),
            tracks: ds.n_tracks(),
            events: ds.n_events(),
        }
    }
}

fn topup(a: TopupArgs, out: &mut dyn Write) -> CmdResult {
    let base = read_events(&a.base).map_err(|e| Failure::new("read base", e))?;
    let fresh = read_events(&a.fresh).map_err(|e| Failure::new("read fresh", e))?;
    let merged = top_up_merge(&base, &fresh, a.seed);
    write_event_file(&a.out, &merged).map_err(|e| Failure::new("write", e))?;
    print(out, &to_json(&DatasetSummary::of(&merged)))
}

fn filter(a: FilterArgs, out: &mut dyn Write) -> CmdResult {
    let ds = read_events(&a.input).map_err(|e| Failure::new("read", e))?;
    let (kept, report) = filter_min_interactions(&ds, a.min_le);
    write_event_file(&a.out, &kept).map_err(|e| Failure::new("write", e))?;
    print(out, &to_json(&report))
}

/// Loads the event file and builds the matrix a model trains and is
/// evaluated on.
fn load_matrix(input: &Path, split: &SplitArgs) -> Result<(Dataset, InteractionMatrix), Failure> {
    let mut ds = read_events(input).map_err(|e| Failure::new("read", e))?;
    if let Some(min_le) = split.min_le {
        ds = filter_min_interactions(&ds, min_le).0;
    }
    let m = build_interaction_matrix(&ds, false);
    Ok((ds, m))
}

fn read_variant(path: &Path) -> Result<(String, Variant), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::new(format!("variant {}", path.display()), e))?;
    let v: Variant = serde_json::from_str(&text).map_err(|e| Failure::new(format!("variant {}", path.display()), e))?;
    let name = v.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned())
    });
    Ok((name, v))
}

/// Trains one variant, writing one log line per iteration or epoch to `log`.
pub fn train_variant<W: Write>(
    m: &InteractionMatrix,
    kind: ModelKind,
    cfg: &TrainingConfig,
    mut log: W,
) -> Result<Model, String> {
    let mut io_err = None;
    let mut line = |text: String| {
        if io_err.is_none() {
            io_err = writeln!(log, "{text}").err();
        }
    };
    let model = match kind {
        ModelKind::Mf => {
            train_mf_with(m, cfg, |it, obj| line(format!("iteration {it} objective {obj:.6}"))).map(Model::Mf)
        }
        ModelKind::MultVae => {
            train_multvae_with(m, cfg, |ep, loss| line(format!("epoch {ep} loss {loss:.6}"))).map(Model::MultVae)
        }
    }
    .map_err(|e| e.to_string())?;
    if let Some(e) = io_err {
        return Err(format!("log: {e}"));
    }
    log.flush().map_err(|e| format!("log: {e}"))?;
    Ok(model)
}

#[derive(Serialize)]
struct Trained {
    name: String,
    kind: ModelKind,
    model: PathBuf,
    log: PathBuf,
}

fn train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let (ds, m) = load_matrix(&a.input, &a.split)?;
    let train_m = if a.split.validation_fraction > 0.0 {
        split_holdout(
            &m,
            a.split.validation_fraction,
            a.split.holdout_fraction,
            a.split.split_seed,
        )
        .map_err(|e| Failure::new("split", e))?
        .train
    } else {
        m
    };
    let mut variants = Vec::new();
    for path in &a.variants {
        let (name, mut v) = read_variant(path)?;
        if let Some(seed) = a.seed {
            v.config.rng_seed = seed;
        }
        v.config
            .validate()
            .map_err(|e| Failure::new(format!("variant {name}"), e))?;
        if variants.iter().any(|(n, _): &(String, Variant)| *n == name) {
            return Err(Failure::new("train", format!("duplicate variant name {name:?}")));
        }
        variants.push((name, v));
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Failure::new("out-dir", e))?;
    let keys = ds.track_keys();

    // one thread per variant; variants share only the read-only matrix
    let results: Vec<Result<Trained, Failure>> = std::thread::scope(|scope| {
        let handles: Vec<_> = variants
            .iter()
            .map(|(name, v)| {
                let (train_m, keys, out_dir) = (&train_m, &keys, &a.out_dir);
                scope.spawn(move || -> Result<Trained, Failure> {
                    let stage = format!("train {name}");
                    let log_path = out_dir.join(format!("{name}.log"));
                    let model_path = out_dir.join(format!("{name}.lrs"));
                    let log = BufWriter::new(File::create(&log_path).map_err(|e| Failure::new(&stage, e))?);
                    let model = train_variant(train_m, v.kind, &v.config, log).map_err(|e| Failure::new(&stage, e))?;
                    let bundle = ModelBundle::new(model, v.config.clone(), keys.clone());
                    write_model_file(&model_path, &bundle).map_err(|e| Failure::new(&stage, e))?;
                    Ok(Trained {
                        name: name.clone(),
                        kind: v.kind,
                        model: model_path,
                        log: log_path,
                    })
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Failure::new("train", "variant panicked")))
            })
            .collect()
    });
    for r in results {
        let t = r?;
        print(out, &serde_json::to_string(&t).expect("serializable"))?;
    }
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs, out: &mut dyn Write) -> CmdResult {
    let bundle = read_model_file(&a.model).map_err(|e| Failure::new("read model", e))?;
    let (ds, m) = load_matrix(&a.input, &a.split)?;
    if bundle.item_keys != ds.track_keys() {
        return Err(Failure::new(
            "evaluate",
            "the model's item catalog differs from the input's; use the same event file and --min-le as in training",
        ));
    }
    let split = split_holdout(
        &m,
        a.split.validation_fraction,
        a.split.holdout_fraction,
        a.split.split_seed,
    )
    .map_err(|e| Failure::new("split", e))?;
    let report = evaluate(&bundle.model, &split, a.k).map_err(|e| Failure::new("evaluate", e))?;
    print(out, &serde_json::to_string(&report).expect("serializable"))?;
    if a.baseline {
        let pop = PopularityScorer::fit(&split.train);
        let report = evaluate(&pop, &split, a.k).map_err(|e| Failure::new("evaluate baseline", e))?;
        print(out, &serde_json::to_string(&report).expect("serializable"))?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs, out: &mut dyn Write) -> CmdResult {
    let cfg = StudyConfig::load(&a.config).map_err(|e| Failure::new("config", e))?;
    let bind = format!("{}:{}", cfg.bind, cfg.port);
    runtime()?.block_on(async {
        let service = StudyService::from_config(cfg).map_err(|e| Failure::new("startup", e))?;
        let server = serve(service, &bind).await.map_err(|e| Failure::new("bind", e))?;
        print(out, &format!("listening on {}", server.base_url()))?;
        out.flush().map_err(|e| Failure::new("output", e))?;
        tokio::select! {
            _ = server.join() => Err(Failure::new("serve", "server stopped")),
            r = tokio::signal::ctrl_c() => r.map_err(|e| Failure::new("signal", e)),
        }
    })
}

fn export(a: ExportArgs, out: &mut dyn Write) -> CmdResult {
    let sessions = replay_file(&a.log).map_err(|e| Failure::new("replay", e))?;
    let records = export_records(sessions.values(), DateRange { from: a.from, to: a.to });
    match &a.out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).map_err(|e| Failure::new("write", e))?);
            write_ndjson(&mut w, &records)
                .and_then(|_| w.flush())
                .map_err(|e| Failure::new("write", e))
        }
        None => write_ndjson(out, &records).map_err(|e| Failure::new("output", e)),
    }
}

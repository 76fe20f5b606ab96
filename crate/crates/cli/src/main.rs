use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use graphlet_core::baseline::{combined_baseline_distribution, mhrw_sample, naive_sample, Method};
use graphlet_core::bench::{run_benchmark, BenchConfig, BenchMethod};
use graphlet_core::dataset::{
    generate_dataset, gnm_random_graph, read_dataset, read_graph, write_dataset,
};
use graphlet_core::exact::exact_distribution_for;
use graphlet_core::gnns::{
    estimate_distribution, train, write_log_csv, EstimateConfig, GnnsConfig, GnnsModel, Weighting,
};
use graphlet_core::{configure_workers, Error, FrequencyDistribution, Graph};

#[derive(Parser)]
#[command(name = "graphlet", version, about = "4- and 5-node graphlet frequency estimation")]
struct Cli {
    /// Worker threads (1 gives fully deterministic scheduling).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact distribution by enumeration.
    Exact(ExactArgs),
    /// Estimated distribution from a sampler.
    Sample(SampleArgs),
    /// Train the learned sampler on a dataset's training split.
    Train(TrainArgs),
    /// Generate a degree-preserving random dataset from a source graph.
    GenDataset(GenArgs),
    /// Score samplers against the exact oracle on a dataset split.
    Bench(BenchArgs),
    /// Print a summary of a trained checkpoint.
    InspectCheckpoint(InspectArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SampleMethod {
    Naive,
    #[value(alias = "mcmc")]
    Mhrw,
    Gnns,
}

#[derive(Args)]
struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Also write a per-type histogram CSV for plotting.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct ExactArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Graphlet sizes, e.g. `4`, `5` or `4,5`.
    #[arg(long, value_delimiter = ',', default_value = "4,5")]
    k: Vec<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, value_enum)]
    method: SampleMethod,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "4,5")]
    k: Vec<usize>,
    /// Draws (naive), recorded steps (mhrw) per size, or sampling slots
    /// (gnns).
    #[arg(long, default_value_t = 10_000)]
    samples: u64,
    /// MHRW burn-in steps (default 10 x edges).
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained model (gnns only).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Weighting of kept subgraphs (gnns only).
    #[arg(long, default_value = "inverse-inclusion")]
    weighting: String,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// Subgraphs drawn per graph per step.
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 256)]
    embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    mlp_hidden: usize,
    #[arg(long, default_value_t = 16)]
    types: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 0.5)]
    tau: f64,
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    #[arg(long, default_value_t = 4.5)]
    size_target: f64,
    #[arg(long, default_value_t = 0.1)]
    size_weight: f64,
}

#[derive(Args)]
struct GenArgs {
    /// Source graph (edge list).
    #[arg(long, required_unless_present = "random_source")]
    graph: Option<PathBuf>,
    /// Use a uniform random source graph instead, given as NODES:EDGES.
    #[arg(long, conflicts_with = "graph")]
    random_source: Option<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    count: usize,
    /// Successful swaps per graph (default 10 x edges).
    #[arg(long)]
    swaps: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset_dir: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, value_delimiter = ',', default_value = "naive,mhrw,gnns")]
    methods: Vec<String>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Sampling slots for gnns; draws per size for the baselines when
    /// counts are not matched.
    #[arg(long, default_value_t = 4096)]
    samples: u64,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Give baselines a fixed budget instead of the gnns kept count.
    #[arg(long)]
    no_match_kept: bool,
    /// Only the first N graphs of the split.
    #[arg(long)]
    limit: Option<usize>,
    /// Directory for report.json and report.csv (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", error_message(&e));
            let code = e
                .chain()
                .find_map(|c| c.downcast_ref::<Error>())
                .map_or(3, Error::exit_code);
            ExitCode::from(code)
        }
    }
}

/// Joins the error chain, skipping causes already quoted by their parent.
fn error_message(e: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if msg.ends_with(&text) {
            continue;
        }
        if !msg.is_empty() {
            msg.push_str(": ");
        }
        msg.push_str(&text);
    }
    msg
}

fn print_stdout(text: &str) -> anyhow::Result<()> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(Error::Config("--workers must be positive".into()).into());
        }
        configure_workers(w)?;
    }
    match cli.command {
        Command::Exact(a) => cmd_exact(a),
        Command::Sample(a) => cmd_sample(a, cli.workers),
        Command::Train(a) => cmd_train(a),
        Command::GenDataset(a) => cmd_gen(a),
        Command::Bench(a) => cmd_bench(a, cli.workers),
        Command::InspectCheckpoint(a) => cmd_inspect(a),
    }
}

fn load_graph(path: &Path) -> anyhow::Result<Graph> {
    read_graph(path).with_context(|| format!("reading {}", path.display()))
}

fn check_ks(ks: &[usize]) -> Result<Vec<usize>, Error> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks.iter().any(|k| !matches!(k, 4 | 5)) {
        return Err(Error::Config(format!("--k must be 4, 5 or 4,5; got {ks:?}")));
    }
    Ok(ks)
}

fn write_out(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => print_stdout(text)?,
    }
    Ok(())
}

/// Label-per-row frequencies, most frequent first.
fn histogram_csv(d: &FrequencyDistribution) -> String {
    let mut out = String::from("rank,label,code,freq\n");
    for (i, (code, e)) in d.sorted_entries().iter().enumerate() {
        let label = code.alias().map_or_else(|| code.to_string(), str::to_string);
        out.push_str(&format!("{},{},{},{}\n", i + 1, label, code, e.freq));
    }
    out
}

fn emit(d: &FrequencyDistribution, meta: Option<Value>, o: &OutputArgs) -> anyhow::Result<()> {
    let text = match o.format {
        Format::Json => {
            let mut v = serde_json::to_value(d.to_json())?;
            if let Some(m) = meta {
                v["meta"] = m;
            }
            serde_json::to_string_pretty(&v)? + "\n"
        }
        Format::Csv => d.to_csv(),
    };
    write_out(o.out.as_deref(), &text)?;
    if let Some(h) = &o.histogram {
        write_out(Some(h), &histogram_csv(d))?;
    }
    Ok(())
}

fn cmd_exact(a: ExactArgs) -> anyhow::Result<()> {
    let ks = check_ks(&a.k)?;
    let g = load_graph(&a.graph)?;
    let d = exact_distribution_for(&g, &ks)?;
    emit(&d, None, &a.output)
}

fn cmd_sample(a: SampleArgs, workers: Option<usize>) -> anyhow::Result<()> {
    let ks = check_ks(&a.k)?;
    if a.samples == 0 {
        return Err(Error::Config("--samples must be positive".into()).into());
    }
    let g = load_graph(&a.graph)?;
    let start = Instant::now();
    let (dist, meta) = match a.method {
        SampleMethod::Naive | SampleMethod::Mhrw => {
            let method = match a.method {
                SampleMethod::Naive => Method::Naive,
                _ => Method::Mhrw,
            };
            if ks.len() == 1 {
                let (run, burn_in) = match method {
                    Method::Naive => (naive_sample(&g, ks[0], a.samples, a.seed)?, None),
                    Method::Mhrw => {
                        let r = mhrw_sample(&g, ks[0], a.samples, a.burn_in, a.seed)?;
                        (r.run, Some(r.burn_in))
                    }
                };
                let rate = run.acceptance_rate;
                (run.dist, json!({"burn_in": burn_in, "acceptance_rate": rate}))
            } else {
                let r = combined_baseline_distribution(
                    &g, method, a.samples, a.samples, a.burn_in, a.seed,
                )?;
                let rate = r.acceptance_rate();
                (
                    r.dist,
                    json!({
                        "burn_in": r.burn_in,
                        "acceptance_rate": rate,
                        "ratio_5_to_4": r.ratio_5_to_4,
                    }),
                )
            }
        }
        SampleMethod::Gnns => {
            let ck = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("--method gnns needs --checkpoint".into()))?;
            let model = GnnsModel::load_for(ck, g.n_nodes())
                .with_context(|| format!("loading {}", ck.display()))?;
            let cfg = EstimateConfig {
                samples: a.samples as usize,
                seed: a.seed,
                workers,
                weighting: a.weighting.parse::<Weighting>()?,
                ..EstimateConfig::default()
            };
            let est = estimate_distribution(&model, &g, &cfg)?;
            let dist = if ks.len() == 1 {
                est.dist.restrict_to_k(ks[0])
            } else {
                est.dist
            };
            (
                dist,
                json!({
                    "burn_in": null,
                    "acceptance_rate": est.kept_fraction,
                    "kept_fraction": est.kept_fraction,
                    "m_effective": est.m_effective,
                }),
            )
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let mut meta = meta;
    meta["method"] = json!(match a.method {
        SampleMethod::Naive => "naive",
        SampleMethod::Mhrw => "mhrw",
        SampleMethod::Gnns => "gnns",
    });
    meta["S"] = json!(a.samples);
    meta["seed"] = json!(a.seed);
    meta["wall_time_s"] = json!(wall);
    if dist.is_empty() {
        eprintln!("warning: no subgraph of the requested sizes was kept");
    }
    emit(&dist, Some(meta), &a.output)
}

fn cmd_train(a: TrainArgs) -> anyhow::Result<()> {
    let ds = read_dataset(&a.dataset_dir)
        .with_context(|| format!("reading dataset {}", a.dataset_dir.display()))?;
    let cfg = GnnsConfig {
        hidden: a.hidden,
        embed_dim: a.embed_dim,
        mlp_hidden: a.mlp_hidden,
        n_types: a.types,
        samples: a.samples,
        tau: a.tau,
        theta: a.theta,
        learning_rate: a.lr,
        epochs: a.epochs,
        seed: a.seed,
        size_target: a.size_target,
        size_weight: a.size_weight,
        ..GnnsConfig::default()
    };
    cfg.validate()?;
    let (model, logs) = train(&ds.train, &cfg)?;
    model.save(&a.out)?;
    if let Some(p) = &a.log {
        write_log_csv(fs::File::create(p)?, &logs)?;
    }
    if let (Some(first), Some(last)) = (logs.first(), logs.last()) {
        eprintln!(
            "trained {} epochs on {} graphs: loss {:.4} -> {:.4}",
            logs.len(),
            ds.train.len(),
            first.mean_loss,
            last.mean_loss
        );
    }
    Ok(())
}

fn parse_random_source(s: &str) -> Result<(usize, usize), Error> {
    let bad = || Error::Config(format!("--random-source expects NODES:EDGES, got {s:?}"));
    let (n, m) = s.split_once(':').ok_or_else(bad)?;
    Ok((n.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?))
}

fn cmd_gen(a: GenArgs) -> anyhow::Result<()> {
    let g = match (&a.graph, &a.random_source) {
        (Some(p), _) => load_graph(p)?,
        (None, Some(spec)) => {
            let (n, m) = parse_random_source(spec)?;
            gnm_random_graph(n, m, a.seed)?
        }
        (None, None) => bail!(Error::Config("need --graph or --random-source".into())),
    };
    if a.count < 10 {
        return Err(Error::Config("--count must be at least 10".into()).into());
    }
    let ds = generate_dataset(&g, a.count, a.swaps, a.seed)?;
    write_dataset(&a.out, &ds)?;
    eprintln!(
        "wrote {} graphs ({} / {} / {}) to {}; fewest swaps achieved {}",
        ds.len(),
        ds.train.len(),
        ds.valid.len(),
        ds.test.len(),
        a.out.display(),
        ds.provenance.min_swaps_achieved
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs, workers: Option<usize>) -> anyhow::Result<()> {
    let ds = read_dataset(&a.dataset_dir)
        .with_context(|| format!("reading dataset {}", a.dataset_dir.display()))?;
    let graphs = match a.split.as_str() {
        "train" => ds.train,
        "valid" => ds.valid,
        "test" => ds.test,
        "all" => ds.train.into_iter().chain(ds.valid).chain(ds.test).collect(),
        other => bail!(Error::Config(format!("unknown split '{other}'"))),
    };
    let graphs = match a.limit {
        Some(n) => graphs.into_iter().take(n).collect(),
        None => graphs,
    };
    let methods = a
        .methods
        .iter()
        .map(|m| m.parse::<BenchMethod>().map_err(|e| Error::Config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let name = a
        .dataset_dir
        .file_name()
        .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    let cfg = BenchConfig {
        dataset: format!("{name}/{}", a.split),
        methods,
        samples: a.samples,
        burn_in: a.burn_in,
        seed: a.seed,
        checkpoint: a.checkpoint,
        match_kept: !a.no_match_kept,
        workers,
        ..BenchConfig::default()
    };
    let report = run_benchmark(&graphs, &cfg)?;
    match a.out {
        Some(dir) => {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("report.json"), report.to_json_string()? + "\n")?;
            fs::write(dir.join("report.csv"), report.to_csv())?;
        }
        None => match a.format {
            Format::Json => print_stdout(&(report.to_json_string()? + "\n"))?,
            Format::Csv => print_stdout(&report.to_csv())?,
        },
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> anyhow::Result<()> {
    let m = GnnsModel::load(&a.checkpoint)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let w = &m.params.weights;
    let registry: Vec<Value> = m
        .registry
        .codes()
        .iter()
        .enumerate()
        .map(|(i, c)| json!({"slot": i, "code": c.to_string(), "alias": c.alias()}))
        .collect();
    let v = json!({
        "n_nodes": m.n_nodes,
        "hidden": w.hidden(),
        "embed_dim": w.embed_dim(),
        "mlp_hidden": w.mlp_hidden(),
        "n_types": w.n_types(),
        "tau": m.params.tau,
        "theta": m.params.theta,
        "n_params": w.n_params(),
        "registry": registry,
        "overflow_slot": m.registry.overflow_index(),
    });
    print_stdout(&(serde_json::to_string_pretty(&v)? + "\n"))
}

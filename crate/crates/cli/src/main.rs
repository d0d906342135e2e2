//! Command-line front end. Each stage reads and writes plain text artifacts
//! so runs can be inspected or resumed piecemeal; `run` drives a whole
//! sweep from a config file.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use netrecon::community::{detect, DetectorConfig};
use netrecon::epidemic::{evaluate_strategy, select_immunized, SirParams, StrategySpec};
use netrecon::experiment::{run_pipeline, DistKind, ExperimentConfig, GSpec, RunOptions, Source, Stage, StrategyChoice};
use netrecon::graph::load_edge_list;
use netrecon::metrics::{coalescing_precision, community_precision, nmi, project};
use netrecon::netgen::{assign_attributes, generate_lfr_like, make_assortative, realized_mixing};
use netrecon::reconstruct::{ReconstructConfig, Reconstruction};
use netrecon::rng::derive_seed;
use netrecon::sampler::{sample, SampleSize, SamplerConfig};
use netrecon::{AttributeMap, CategoryDistribution, CoalesceLog, Graph, Partition, SampleForest, SamplingMethod, SealedTruth};

#[derive(Parser)]
#[command(name = "netrecon", version, about = "Reconstruct networks from path samples and evaluate the result")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic network with planted communities and attributes.
    Generate(GenerateArgs),
    /// Draw a path sample with friend descriptions.
    Sample(SampleArgs),
    /// Coalesce a sample forest into a network of a given size.
    Reconstruct(ReconstructArgs),
    /// Detect communities in a network.
    Communities(CommunitiesArgs),
    /// Compute evaluation measures from stage artifacts.
    Metrics(MetricsArgs),
    /// Simulate SIR outbreaks under an immunization choice.
    Epidemic(EpidemicArgs),
    /// Run a full sweep from a config file.
    Run(RunArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Config file supplying generator parameters (first value of each axis).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mu: Option<f64>,
    /// Category count, or `n` for one per vertex.
    #[arg(long)]
    g: Option<GSpec>,
    #[arg(long)]
    distribution: Option<DistKind>,
    #[arg(long)]
    assortative: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Edge list; integer labels are vertex ids.
    #[arg(long)]
    network: PathBuf,
    /// `vertex category` lines.
    #[arg(long)]
    attributes: PathBuf,
    /// Category count; defaults to the largest category present.
    #[arg(long)]
    g: Option<u32>,
    #[arg(long, default_value = "rpm")]
    method: SamplingMethod,
    /// Exact respondent count.
    #[arg(long, conflicts_with = "true_size", required_unless_present = "true_size")]
    respondents: Option<usize>,
    /// Sample until this many distinct vertices are covered.
    #[arg(long)]
    true_size: Option<usize>,
    #[arg(long, default_value_t = 5)]
    f: usize,
    #[arg(long, default_value_t = 1)]
    c: u32,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    forest: PathBuf,
    /// Population attributes used for description frequencies.
    #[arg(long)]
    attributes: PathBuf,
    #[arg(long)]
    g: Option<u32>,
    /// Target vertex count.
    #[arg(long)]
    n_t: usize,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CommunitiesArgs {
    #[arg(long)]
    network: PathBuf,
    /// Vertex count when the highest ids are isolated.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    resolution: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Partition file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MetricsArgs {
    /// Occurrence to vertex table of the sample.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Merge log for coalescing precision.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long)]
    provenance: Option<PathBuf>,
    /// Communities of the reconstructed network.
    #[arg(long)]
    partition: Option<PathBuf>,
    /// Reference communities of the underlying network.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Two partitions of one vertex set to compare by NMI.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    nmi: Option<Vec<PathBuf>>,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EpidemicArgs {
    #[arg(long)]
    network: PathBuf,
    /// Vertices to immunize, one per line.
    #[arg(long, conflicts_with = "strategy")]
    immunize: Option<PathBuf>,
    /// underlying-top:PROPERTY or random-whole.
    #[arg(long, requires = "budget")]
    strategy: Option<StrategyChoice>,
    #[arg(long)]
    budget: Option<usize>,
    /// Communities used by k_out and embeddedness rankings; detected when absent.
    #[arg(long)]
    partition: Option<PathBuf>,
    #[arg(long, default_value_t = 0.002)]
    init_frac: f64,
    #[arg(long, default_value_t = 0.08)]
    beta: f64,
    #[arg(long, default_value_t = 4)]
    steps: u32,
    #[arg(long, default_value_t = 200)]
    runs: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// precision, community, rank, epidemic or all.
    #[arg(long, default_value = "all")]
    stage: Stage,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .with_context(|| format!("cannot open {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("cannot create {}", path.display()))
}

fn read_with<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> netrecon::Result<T>) -> Result<T> {
    f(open(path)?).map_err(|e| e.at_path(path)).map_err(Into::into)
}

/// Reads an edge list whose non-negative integer labels are the vertex ids.
fn read_network(path: &Path, min_n: usize) -> Result<Graph> {
    let loaded = read_with(path, load_edge_list)?;
    let mut ids = Vec::with_capacity(loaded.labels.len());
    for &l in &loaded.labels {
        match usize::try_from(l) {
            Ok(id) => ids.push(id),
            Err(_) => bail!("{}: vertex label {l} is negative", path.display()),
        }
    }
    let n = ids.iter().map(|&i| i + 1).max().unwrap_or(0).max(min_n);
    let edges: Vec<(usize, usize)> = loaded.graph.edges().map(|(u, v)| (ids[u], ids[v])).collect();
    Ok(Graph::from_edges_lossy(n, edges))
}

fn read_attributes(path: &Path, g: Option<u32>) -> Result<AttributeMap> {
    read_with(path, |r| AttributeMap::read(r, g))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> netrecon::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    f(&mut w).map_err(|e| e.at_path(path))?;
    w.flush()?;
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    let Source::Lfr(template) = cfg.source else {
        bail!("generate needs a synthetic network source");
    };
    let mu = args.mu.unwrap_or(cfg.mu[0]);
    let (g, planted) = generate_lfr_like(&template.with(mu, derive_seed(args.seed, "network")))?;
    let categories = args.g.unwrap_or(cfg.g[0]).resolve(g.n());
    let dist = args.distribution.unwrap_or(cfg.distribution[0]).build(categories);
    let mut attrs = assign_attributes(&g, &dist, derive_seed(args.seed, "attributes"));
    if args.assortative {
        let attempts = cfg.assortative_attempts.unwrap_or(100 * g.n());
        attrs = make_assortative(&g, &attrs, attempts, derive_seed(args.seed, "assortative"));
    }
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_file(&args.out.join("network.edges"), |w| g.write_edge_list(w))?;
    write_file(&args.out.join("communities.txt"), |w| planted.write(w))?;
    write_file(&args.out.join("attributes.txt"), |w| attrs.write(w))?;
    println!(
        "n={} m={} communities={} realized_mixing={:.4}",
        g.n(),
        g.m(),
        planted.count(),
        realized_mixing(&g, &planted)
    );
    Ok(())
}

fn sample_cmd(args: SampleArgs) -> Result<()> {
    let attrs = read_attributes(&args.attributes, args.g)?;
    let g = read_network(&args.network, attrs.len())?;
    let size = match (args.respondents, args.true_size) {
        (Some(r), _) => SampleSize::Respondents(r),
        (None, Some(t)) => SampleSize::TrueNetwork(t),
        (None, None) => unreachable!("clap requires one of the size flags"),
    };
    let cfg = SamplerConfig {
        method: args.method,
        size,
        f: args.f,
        c: args.c,
    };
    let s = sample(&g, &attrs, &cfg, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("cannot create {}", args.out.display()))?;
    write_file(&args.out.join("forest.txt"), |w| s.forest.write(w))?;
    write_file(&args.out.join("truth.txt"), |w| s.truth.write(w))?;
    println!(
        "respondents={} friends={} trees={}{}",
        s.forest.respondent_count(),
        s.forest.friend_count(),
        s.forest.tree_count(),
        if s.seed_fallback { " (unrestricted seeds)" } else { "" }
    );
    Ok(())
}

fn write_reconstruction(dir: &Path, r: &Reconstruction) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    write_file(&dir.join("reconstructed.edges"), |w| r.graph.write_edge_list(w))?;
    write_file(&dir.join("provenance.txt"), |w| r.write_provenance(w))?;
    write_file(&dir.join("coalesce_log.csv"), |w| r.log.write_csv(w))?;
    Ok(())
}

fn reconstruct_cmd(args: ReconstructArgs) -> Result<()> {
    let forest = read_with(&args.forest, SampleForest::read)?;
    let attrs = read_attributes(&args.attributes, args.g)?;
    let dist = CategoryDistribution::empirical(&attrs);
    let cfg = ReconstructConfig {
        n_t: args.n_t,
        seed: args.seed,
        max_attempts: args.max_attempts,
    };
    match netrecon::reconstruct(&forest, &dist, &cfg) {
        Ok(r) => {
            write_reconstruction(&args.out, &r)?;
            println!("vertices={} edges={} merges={}", r.graph.n(), r.graph.m(), r.log.len());
            Ok(())
        }
        Err(netrecon::Error::Incomplete { target, reason, partial }) => {
            write_reconstruction(&args.out, &partial)?;
            bail!(
                "stopped at {} vertices, target {target} ({reason}); partial result written to {}",
                partial.graph.n(),
                args.out.display()
            )
        }
        Err(e) => Err(e.into()),
    }
}

fn communities(args: CommunitiesArgs) -> Result<()> {
    let g = read_network(&args.network, args.n.unwrap_or(0))?;
    let cfg = DetectorConfig {
        resolution: args.resolution,
        ..DetectorConfig::with_seed(args.seed)
    };
    let p = detect(&g, &cfg)?;
    write_file(&args.out, |w| p.write(w))?;
    println!("communities={} modularity={}", p.count(), netrecon::modularity(&g, &p).unwrap_or(0.0));
    Ok(())
}

fn metrics(args: MetricsArgs) -> Result<()> {
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let truth = args
        .truth
        .as_deref()
        .map(|p| read_with(p, SealedTruth::read))
        .transpose()?;
    if let Some(log_path) = &args.log {
        let Some(truth) = &truth else { bail!("--log needs --truth") };
        let log = read_with(log_path, CoalesceLog::read_csv)?;
        rows.push(("coalescing_precision", coalescing_precision(&log, truth)?));
    }
    if let (Some(prov), Some(part), Some(reference)) = (&args.provenance, &args.partition, &args.reference) {
        let (Some(truth), Some(forest)) = (&truth, &args.forest) else {
            bail!("community precision needs --truth and --forest")
        };
        let forest = read_with(forest, SampleForest::read)?;
        let provenance = read_with(prov, Reconstruction::read_provenance)?;
        let n = provenance.iter().map(|&v| v + 1).max().unwrap_or(0);
        let mut groups = vec![Vec::new(); n];
        for (occ, &v) in provenance.iter().enumerate() {
            groups[v].push(occ);
        }
        let proj = project(&groups, &forest, truth);
        let part = read_with(part, Partition::read)?;
        let reference = read_with(reference, Partition::read)?;
        rows.push(("community_precision", community_precision(&part, &reference, &proj)?));
    }
    if let Some(pair) = &args.nmi {
        let a = read_with(&pair[0], Partition::read)?;
        let b = read_with(&pair[1], Partition::read)?;
        rows.push(("nmi", nmi(&a, &b)?));
    }
    if rows.is_empty() {
        bail!("nothing to compute: give --truth with --log, --provenance/--partition/--reference, or --nmi");
    }
    let mut w: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(w, "metric,value")?;
    for (name, value) in rows {
        writeln!(w, "{name},{value}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_vertex_list(path: &Path) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        out.push(
            t.parse()
                .with_context(|| format!("{}:{}: not a vertex id: {t:?}", path.display(), i + 1))?,
        );
    }
    Ok(out)
}

fn epidemic(args: EpidemicArgs) -> Result<()> {
    let g = read_network(&args.network, 0)?;
    let params = SirParams {
        init_frac: args.init_frac,
        beta: args.beta,
        infectious_steps: args.steps,
        runs: args.runs,
        seed: args.seed,
    };
    let (label, immunized) = match (&args.immunize, args.strategy) {
        (Some(p), _) => ("list".to_string(), read_vertex_list(p)?),
        (None, Some(choice)) => {
            if choice.kind.uses_ensemble() {
                bail!("{} needs reconstructions; use `run` with an epidemic stage", choice.kind);
            }
            let partition = match &args.partition {
                Some(p) => read_with(p, Partition::read)?,
                None => detect(&g, &DetectorConfig::with_seed(derive_seed(args.seed, "detect")))?,
            };
            let spec = StrategySpec {
                kind: choice.kind,
                property: choice.property.unwrap_or(netrecon::epidemic::RankProperty::Degree),
                budget: args.budget.unwrap_or(0),
            };
            let chosen = select_immunized(&spec, &g, &partition, &[], derive_seed(args.seed, "strategy"))?;
            (choice.to_string(), chosen)
        }
        (None, None) => ("none".to_string(), Vec::new()),
    };
    let pool = rayon_pool(args.jobs)?;
    let summary = pool.install(|| evaluate_strategy(&g, &immunized, &params))?;
    let mut w: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(w, "strategy,budget,mean_size,stddev,runs")?;
    writeln!(
        w,
        "{label},{},{},{},{}",
        immunized.len(),
        summary.mean,
        summary.stddev,
        summary.runs
    )?;
    w.flush()?;
    Ok(())
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker threads")
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    let opts = RunOptions {
        stage: args.stage,
        jobs: args.jobs,
    };
    let (tables, written) = run_pipeline(&cfg, &opts)?;
    for path in &written {
        println!("{}", path.display());
    }
    let errors = tables.error_count();
    if errors > 0 {
        eprintln!("{errors} rows recorded an error; see the error column");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Generate(a) => generate(a),
        Command::Sample(a) => sample_cmd(a),
        Command::Reconstruct(a) => reconstruct_cmd(a),
        Command::Communities(a) => communities(a),
        Command::Metrics(a) => metrics(a),
        Command::Epidemic(a) => epidemic(a),
        Command::Run(a) => run(a),
    }
}

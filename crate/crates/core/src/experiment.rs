//! Sweep configuration and the end-to-end pipeline.
//!
//! A config is flat `key = value` text. List-valued keys are the sweep axes;
//! the pipeline runs every combination for a number of repetitions and emits
//! one table per result family. All randomness is derived from the master
//! seed and the labelled coordinates of the work item, so permuting axis
//! values or changing the worker count leaves every row unchanged.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::community::{detect, DetectorConfig};
use crate::epidemic::{
    evaluate_strategy, select_immunized, EnsembleMember, EpidemicSummary, RankProperty, SirParams, StrategyKind,
    StrategySpec,
};
use crate::error::{Error, Result};
use crate::graph::{load_edge_list, AttributeMap, Graph, Partition};
use crate::metrics::{
    align_partitions, coalescing_precision, community_precision, nmi, project, rank_correlation, ProjectedView,
    ProjectionMap, Property,
};
use crate::netgen::{assign_attributes, generate_lfr_like, make_assortative, CategoryDistribution, LfrParams};
use crate::reconstruct::{reconstruct, ReconstructConfig, Reconstruction};
use crate::rng::{derive_indexed, derive_seed};
use crate::sampler::{sample, true_network, Sample, SampleSize, SamplerConfig, SamplingMethod, TrueNetwork};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LfrTemplate {
    pub n: usize,
    pub k_avg: f64,
    pub k_max: usize,
    pub tau1: f64,
    pub tau2: f64,
    pub c_min: usize,
    pub c_max: usize,
}

impl Default for LfrTemplate {
    fn default() -> Self {
        let p = LfrParams::benchmark_1460(0.1, 0);
        LfrTemplate {
            n: p.n,
            k_avg: p.k_avg,
            k_max: p.k_max,
            tau1: p.tau1,
            tau2: p.tau2,
            c_min: p.c_min,
            c_max: p.c_max,
        }
    }
}

impl LfrTemplate {
    pub fn with(&self, mu: f64, seed: u64) -> LfrParams {
        LfrParams {
            n: self.n,
            k_avg: self.k_avg,
            k_max: self.k_max,
            mu,
            tau1: self.tau1,
            tau2: self.tau2,
            c_min: self.c_min,
            c_max: self.c_max,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Lfr(LfrTemplate),
    File(PathBuf),
}

/// Category count, possibly tied to the network size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GSpec {
    Count(u32),
    N,
}

impl GSpec {
    pub fn resolve(&self, n: usize) -> u32 {
        match *self {
            GSpec::Count(g) => g,
            GSpec::N => n as u32,
        }
    }
}

impl fmt::Display for GSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GSpec::Count(g) => write!(f, "{g}"),
            GSpec::N => f.write_str("n"),
        }
    }
}

impl FromStr for GSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "n" {
            return Ok(GSpec::N);
        }
        match s.parse::<u32>() {
            Ok(g) if g >= 1 => Ok(GSpec::Count(g)),
            _ => Err(Error::invalid(format!("g must be a positive integer or `n`, got {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    Uniform,
    Normal,
}

impl DistKind {
    pub fn build(&self, g: u32) -> CategoryDistribution {
        match self {
            DistKind::Uniform => CategoryDistribution::uniform(g),
            DistKind::Normal => CategoryDistribution::normal(g),
        }
    }
}

impl fmt::Display for DistKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistKind::Uniform => "uniform",
            DistKind::Normal => "normal",
        })
    }
}

impl FromStr for DistKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(DistKind::Uniform),
            "normal" => Ok(DistKind::Normal),
            _ => Err(Error::invalid(format!("unknown distribution {s:?}"))),
        }
    }
}

/// How the reconstruction target size is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NtRule {
    /// The sampled true network's vertex count.
    TrueNetworkSize,
    /// `round(nt · n)`.
    FractionOfN,
}

impl fmt::Display for NtRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NtRule::TrueNetworkSize => "true-network-size",
            NtRule::FractionOfN => "fraction-of-n",
        })
    }
}

impl FromStr for NtRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "true-network-size" => Ok(NtRule::TrueNetworkSize),
            "fraction-of-n" => Ok(NtRule::FractionOfN),
            _ => Err(Error::invalid(format!("unknown n_t rule {s:?}"))),
        }
    }
}

/// Result family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Precision,
    Community,
    Rank,
    Epidemic,
    All,
}

impl Stage {
    pub fn includes(&self, other: Stage) -> bool {
        *self == Stage::All || *self == other
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Precision => "precision",
            Stage::Community => "community",
            Stage::Rank => "rank",
            Stage::Epidemic => "epidemic",
            Stage::All => "all",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precision" => Ok(Stage::Precision),
            "community" => Ok(Stage::Community),
            "rank" => Ok(Stage::Rank),
            "epidemic" => Ok(Stage::Epidemic),
            "all" => Ok(Stage::All),
            _ => Err(Error::invalid(format!(
                "unknown stage {s:?} (expected precision, community, rank, epidemic or all)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategyChoice {
    pub kind: StrategyKind,
    pub property: Option<RankProperty>,
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.property {
            Some(p) => write!(f, "{}:{p}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, property) = match s.split_once(':') {
            Some((k, p)) => (k.parse::<StrategyKind>()?, Some(p.parse::<RankProperty>()?)),
            None => (s.parse::<StrategyKind>()?, None),
        };
        match (kind.uses_property(), property) {
            (true, None) => Err(Error::invalid(format!("strategy {kind} needs a property, e.g. {kind}:degree"))),
            (false, Some(_)) => Err(Error::invalid(format!("strategy {kind} takes no property"))),
            _ => Ok(StrategyChoice { kind, property }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: Source,
    pub mu: Vec<f64>,
    pub g: Vec<GSpec>,
    pub distribution: Vec<DistKind>,
    pub assortative: Vec<bool>,
    /// Swap attempts for assortative labelings; `None` means 100·n.
    pub assortative_attempts: Option<usize>,
    pub method: Vec<SamplingMethod>,
    pub f: Vec<usize>,
    pub c: Vec<u32>,
    /// Sample size as a fraction of n.
    pub nt: Vec<f64>,
    pub nt_rule: NtRule,
    /// When set, sample exactly `round(respondents · n)` respondents instead
    /// of sampling until the true network reaches `round(nt · n)` vertices.
    pub respondents: Option<f64>,
    pub repetitions: usize,
    pub ensemble: usize,
    pub epidemic_repetitions: usize,
    pub strategies: Vec<StrategyChoice>,
    /// Immunization budgets as fractions of n.
    pub budgets: Vec<f64>,
    pub sir: SirParams,
    pub resolution: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub artifacts: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            source: Source::Lfr(LfrTemplate::default()),
            mu: vec![0.1],
            g: vec![GSpec::N],
            distribution: vec![DistKind::Normal],
            assortative: vec![false],
            assortative_attempts: None,
            method: vec![SamplingMethod::Rpm],
            f: vec![5],
            c: vec![1],
            nt: vec![0.08],
            nt_rule: NtRule::TrueNetworkSize,
            respondents: None,
            repetitions: 20,
            ensemble: 100,
            epidemic_repetitions: 1,
            strategies: vec![
                "underlying-top:degree".parse().expect("valid"),
                "reconstructed-top:degree".parse().expect("valid"),
                "reconstructed-frequency-random".parse().expect("valid"),
                "random-whole".parse().expect("valid"),
            ],
            budgets: vec![0.01],
            sir: SirParams::default(),
            resolution: 1.0,
            seed: 1,
            out: PathBuf::from("results"),
            artifacts: false,
        }
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return Err(Error::invalid(format!("{key}: empty list")));
    }
    items
        .into_iter()
        .map(|s| s.parse::<T>().map_err(|e| Error::invalid(format!("{key}: {s:?}: {e}"))))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::invalid(format!("{key}: {value:?}: {e}")))
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| e.at_path(path))?;
        if let Source::File(p) = &cfg.source {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.source = Source::File(dir.join(p));
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut template = LfrTemplate::default();
        let mut source: Option<String> = None;
        let mut edge_list: Option<PathBuf> = None;
        let mut lfr_keys = false;
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(lineno, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(first) = seen.insert(key.to_string(), lineno) {
                return Err(Error::parse(lineno, format!("{key} already set on line {first}")));
            }
            let at = |e: Error| match e {
                Error::InvalidParameter(m) => Error::parse(lineno, m),
                other => other,
            };
            match key {
                "source" => source = Some(value.to_string()),
                "edge_list" => edge_list = Some(PathBuf::from(value)),
                "n" | "k_avg" | "k_max" | "tau1" | "tau2" | "c_min" | "c_max" => {
                    lfr_keys = true;
                    match key {
                        "n" => template.n = parse_one(key, value).map_err(at)?,
                        "k_avg" => template.k_avg = parse_one(key, value).map_err(at)?,
                        "k_max" => template.k_max = parse_one(key, value).map_err(at)?,
                        "tau1" => template.tau1 = parse_one(key, value).map_err(at)?,
                        "tau2" => template.tau2 = parse_one(key, value).map_err(at)?,
                        "c_min" => template.c_min = parse_one(key, value).map_err(at)?,
                        _ => template.c_max = parse_one(key, value).map_err(at)?,
                    }
                }
                "mu" => cfg.mu = parse_list(key, value).map_err(at)?,
                "g" => cfg.g = parse_list(key, value).map_err(at)?,
                "distribution" => cfg.distribution = parse_list(key, value).map_err(at)?,
                "assortative" => cfg.assortative = parse_list(key, value).map_err(at)?,
                "assortative_attempts" => cfg.assortative_attempts = Some(parse_one(key, value).map_err(at)?),
                "method" => cfg.method = parse_list(key, value).map_err(at)?,
                "f" => cfg.f = parse_list(key, value).map_err(at)?,
                "c" => cfg.c = parse_list(key, value).map_err(at)?,
                "nt" => cfg.nt = parse_list(key, value).map_err(at)?,
                "nt_rule" => cfg.nt_rule = parse_one(key, value).map_err(at)?,
                "respondents" => cfg.respondents = Some(parse_one(key, value).map_err(at)?),
                "repetitions" => cfg.repetitions = parse_one(key, value).map_err(at)?,
                "ensemble" => cfg.ensemble = parse_one(key, value).map_err(at)?,
                "epidemic_repetitions" => cfg.epidemic_repetitions = parse_one(key, value).map_err(at)?,
                "strategies" => cfg.strategies = parse_list(key, value).map_err(at)?,
                "budgets" => cfg.budgets = parse_list(key, value).map_err(at)?,
                "sir_runs" => cfg.sir.runs = parse_one(key, value).map_err(at)?,
                "sir_init_frac" => cfg.sir.init_frac = parse_one(key, value).map_err(at)?,
                "sir_beta" => cfg.sir.beta = parse_one(key, value).map_err(at)?,
                "sir_infectious_steps" => cfg.sir.infectious_steps = parse_one(key, value).map_err(at)?,
                "resolution" => cfg.resolution = parse_one(key, value).map_err(at)?,
                "seed" => cfg.seed = parse_one(key, value).map_err(at)?,
                "out" => cfg.out = PathBuf::from(value),
                "artifacts" => cfg.artifacts = parse_one(key, value).map_err(at)?,
                _ => return Err(Error::parse(lineno, format!("unknown key {key:?}"))),
            }
        }
        cfg.source = match source.as_deref() {
            None | Some("lfr") => {
                if edge_list.is_some() {
                    return Err(Error::invalid("edge_list given but source is not `file`"));
                }
                Source::Lfr(template)
            }
            Some("file") => {
                if lfr_keys {
                    return Err(Error::invalid("generator keys given with source = file"));
                }
                Source::File(edge_list.ok_or_else(|| Error::invalid("source = file needs edge_list"))?)
            }
            Some(other) => return Err(Error::invalid(format!("unknown source {other:?}"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Source::Lfr(t) = &self.source {
            for &mu in &self.mu {
                t.with(mu, 0).validate()?;
            }
        }
        if self.mu.iter().any(|m| !(0.0..1.0).contains(m)) {
            return Err(Error::invalid("mu values must lie in [0, 1)"));
        }
        if self.c.contains(&0) {
            return Err(Error::invalid("c must be at least 1"));
        }
        if self.nt.iter().any(|x| !(*x > 0.0 && *x <= 1.0)) {
            return Err(Error::invalid("nt fractions must lie in (0, 1]"));
        }
        if let Some(r) = self.respondents {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::invalid("respondents fraction must lie in (0, 1]"));
            }
        }
        if self.budgets.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::invalid("budgets must lie in [0, 1)"));
        }
        if self.repetitions == 0 || self.ensemble == 0 || self.epidemic_repetitions == 0 {
            return Err(Error::invalid("repetitions, ensemble and epidemic_repetitions must be positive"));
        }
        if self.resolution.is_nan() || self.resolution <= 0.0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        self.sir.validate()
    }

    /// Every combination of axis values, in axis order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mus: Vec<Option<f64>> = match self.source {
            Source::Lfr(_) => self.mu.iter().copied().map(Some).collect(),
            Source::File(_) => vec![None],
        };
        let mut points = Vec::new();
        for &mu in &mus {
            for &g in &self.g {
                for &distribution in &self.distribution {
                    for &assortative in &self.assortative {
                        for &method in &self.method {
                            for &f in &self.f {
                                for &c in &self.c {
                                    for &nt in &self.nt {
                                        points.push(SweepPoint {
                                            index: points.len(),
                                            mu,
                                            g,
                                            distribution,
                                            assortative,
                                            method,
                                            f,
                                            c,
                                            nt,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        points
    }

    fn detector(&self, seed: u64) -> DetectorConfig {
        DetectorConfig {
            resolution: self.resolution,
            ..DetectorConfig::with_seed(seed)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// Absent for loaded networks.
    pub mu: Option<f64>,
    pub g: GSpec,
    pub distribution: DistKind,
    pub assortative: bool,
    pub method: SamplingMethod,
    pub f: usize,
    pub c: u32,
    pub nt: f64,
}

impl SweepPoint {
    fn network_label(&self, rep: usize) -> String {
        match self.mu {
            Some(mu) => format!("mu={mu}/rep={rep}"),
            None => format!("file/rep={rep}"),
        }
    }

    fn attribute_label(&self, rep: usize) -> String {
        format!(
            "{}/g={}/dist={}/assortative={}",
            self.network_label(rep),
            self.g,
            self.distribution,
            self.assortative
        )
    }

    fn sample_label(&self, rep: usize) -> String {
        format!(
            "{}/method={}/f={}/c={}/nt={}",
            self.attribute_label(rep),
            self.method,
            self.f,
            self.c,
            self.nt
        )
    }
}

/// Seeds of every random stage for one (point, repetition).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub network: u64,
    pub attributes: u64,
    pub assortative: u64,
    pub sample: u64,
    pub reconstruct: u64,
    pub detect_underlying: u64,
    pub detect_true: u64,
    pub detect_reconstructed: u64,
    pub strategy: u64,
    pub sir: u64,
}

impl StageSeeds {
    pub fn new(master: u64, point: &SweepPoint, rep: usize) -> Self {
        let net = point.network_label(rep);
        let attr = point.attribute_label(rep);
        let smp = point.sample_label(rep);
        let s = |stage: &str, label: &str| derive_seed(master, &format!("{stage}/{label}"));
        StageSeeds {
            network: s("network", &net),
            attributes: s("attributes", &attr),
            assortative: s("assortative", &attr),
            sample: s("sample", &smp),
            reconstruct: s("reconstruct", &smp),
            detect_underlying: s("detect-underlying", &net),
            detect_true: s("detect-true", &smp),
            detect_reconstructed: s("detect-reconstructed", &smp),
            strategy: s("strategy", &smp),
            sir: s("sir", &smp),
        }
    }

    /// Seeds for the `i`-th ensemble member.
    pub fn member(&self, i: usize) -> StageSeeds {
        StageSeeds {
            sample: derive_indexed(self.sample, "ensemble", i as u64),
            reconstruct: derive_indexed(self.reconstruct, "ensemble", i as u64),
            detect_reconstructed: derive_indexed(self.detect_reconstructed, "ensemble", i as u64),
            ..*self
        }
    }
}

/// The underlying network of one repetition with its labeling.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: Graph,
    /// Planted communities when the network is synthetic.
    pub planted: Option<Partition>,
    pub attributes: AttributeMap,
    /// Category frequencies the reconstructor is allowed to know.
    pub population: CategoryDistribution,
}

pub fn build_instance(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    seeds: &StageSeeds,
    loaded: Option<&Graph>,
) -> Result<Instance> {
    let (graph, planted) = match (&cfg.source, loaded) {
        (Source::Lfr(t), _) => {
            let mu = point.mu.expect("synthetic points carry mu");
            let (g, p) = generate_lfr_like(&t.with(mu, seeds.network))?;
            (g, Some(p))
        }
        (Source::File(_), Some(g)) => (g.clone(), None),
        (Source::File(p), None) => return Err(Error::invalid(format!("network {} not loaded", p.display()))),
    };
    let g = point.g.resolve(graph.n());
    let mut attributes = assign_attributes(&graph, &point.distribution.build(g), seeds.attributes);
    if point.assortative {
        let attempts = cfg.assortative_attempts.unwrap_or(100 * graph.n());
        attributes = make_assortative(&graph, &attributes, attempts, seeds.assortative);
    }
    let population = CategoryDistribution::empirical(&attributes);
    Ok(Instance {
        graph,
        planted,
        attributes,
        population,
    })
}

/// Sample, true network and reconstruction of one repetition.
#[derive(Debug, Clone)]
pub struct Observed {
    pub sample: Sample,
    pub true_net: TrueNetwork,
    pub reconstruction: Reconstruction,
}

pub fn sampler_config(cfg: &ExperimentConfig, point: &SweepPoint, n: usize) -> SamplerConfig {
    let size = match cfg.respondents {
        Some(r) => SampleSize::Respondents((r * n as f64).round() as usize),
        None => SampleSize::TrueNetwork(((point.nt * n as f64).round() as usize).max(1)),
    };
    SamplerConfig {
        method: point.method,
        size,
        f: point.f,
        c: point.c,
    }
}

pub fn target_size(cfg: &ExperimentConfig, point: &SweepPoint, n: usize, true_net: &TrueNetwork) -> usize {
    match cfg.nt_rule {
        NtRule::TrueNetworkSize => true_net.graph.n(),
        NtRule::FractionOfN => ((point.nt * n as f64).round() as usize).max(1),
    }
}

pub fn observe(cfg: &ExperimentConfig, point: &SweepPoint, seeds: &StageSeeds, inst: &Instance) -> Result<Observed> {
    let n = inst.graph.n();
    let sample = sample(&inst.graph, &inst.attributes, &sampler_config(cfg, point, n), seeds.sample)?;
    let true_net = true_network(&sample.forest, &sample.truth)?;
    let rc = ReconstructConfig {
        n_t: target_size(cfg, point, n, &true_net),
        seed: seeds.reconstruct,
        max_attempts: None,
    };
    let reconstruction = reconstruct(&sample.forest, &inst.population, &rc)?;
    Ok(Observed {
        sample,
        true_net,
        reconstruction,
    })
}

/// Rows of one output table.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(metric_columns: &[&str]) -> Self {
        let header = PARAM_COLUMNS
            .iter()
            .chain(metric_columns)
            .chain(&["error"])
            .map(|s| s.to_string())
            .collect();
        Table {
            header,
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::from(e).at_path(path))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush().map_err(|e| Error::from(e).at_path(path))?;
        Ok(())
    }
}

pub const PARAM_COLUMNS: [&str; 13] = [
    "point",
    "repetition",
    "source",
    "n",
    "mu",
    "g",
    "distribution",
    "assortative",
    "method",
    "f",
    "c",
    "nt",
    "nt_rule",
];

pub const PRECISION_COLUMNS: [&str; 6] = [
    "respondents",
    "occurrences",
    "true_size",
    "n_t",
    "merges",
    "coalescing_precision",
];
pub const COMMUNITY_COLUMNS: [&str; 5] = [
    "true_communities",
    "reconstructed_communities",
    "community_precision_true",
    "community_precision_reconstructed",
    "nmi",
];
pub const RANK_COLUMNS: [&str; 4] = ["property", "reconstructed_vs_true", "reconstructed_vs_underlying", "true_vs_underlying"];
pub const EPIDEMIC_COLUMNS: [&str; 7] = [
    "strategy",
    "property",
    "budget",
    "ensemble_used",
    "mean_size",
    "stddev",
    "runs",
];

fn param_cells(cfg: &ExperimentConfig, point: &SweepPoint, rep: usize, n: Option<usize>) -> Vec<String> {
    let source = match cfg.source {
        Source::Lfr(_) => "lfr",
        Source::File(_) => "file",
    };
    vec![
        point.index.to_string(),
        rep.to_string(),
        source.to_string(),
        n.map(|n| n.to_string()).unwrap_or_default(),
        point.mu.map(|m| m.to_string()).unwrap_or_default(),
        point.g.to_string(),
        point.distribution.to_string(),
        point.assortative.to_string(),
        point.method.to_string(),
        point.f.to_string(),
        point.c.to_string(),
        point.nt.to_string(),
        cfg.nt_rule.to_string(),
    ]
}

/// Collects metric cells, leaving a blank and noting the error when a value
/// is undefined.
struct Cells {
    cells: Vec<String>,
    errors: Vec<String>,
}

impl Cells {
    fn new(prefix: Vec<String>) -> Self {
        Cells {
            cells: prefix,
            errors: Vec::new(),
        }
    }

    fn push(&mut self, value: impl ToString) {
        self.cells.push(value.to_string());
    }

    fn push_result<T: ToString>(&mut self, name: &str, value: Result<T>) {
        match value {
            Ok(v) => self.cells.push(v.to_string()),
            Err(e) => {
                self.cells.push(String::new());
                self.errors.push(format!("{name}: {e}"));
            }
        }
    }

    fn failed(mut self, width: usize, e: &Error) -> Vec<String> {
        self.cells.resize(width - 1, String::new());
        self.errors.push(e.to_string());
        self.finish()
    }

    fn finish(mut self) -> Vec<String> {
        self.cells.push(self.errors.join("; "));
        self.cells
    }
}

/// Tables produced by one pipeline execution.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tables {
    pub precision: Option<Table>,
    pub community: Option<Table>,
    pub rank: Option<Table>,
    pub epidemic: Option<Table>,
}

impl Tables {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &Table)> {
        [
            ("precision", &self.precision),
            ("community", &self.community),
            ("rank", &self.rank),
            ("epidemic", &self.epidemic),
        ]
        .into_iter()
        .filter_map(|(name, t)| t.as_ref().map(|t| (name, t)))
    }

    /// Writes `<family>.csv` for every produced table.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at_path(dir))?;
        let mut written = Vec::new();
        for (name, table) in self.iter() {
            let path = dir.join(format!("{name}.csv"));
            table.write_csv(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn error_count(&self) -> usize {
        self.iter()
            .map(|(_, t)| t.rows.iter().filter(|r| !r.last().is_some_and(String::is_empty)).count())
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub stage: Stage,
    /// Worker threads; 0 picks the machine default.
    pub jobs: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            stage: Stage::All,
            jobs: 0,
        }
    }
}

struct RepRows {
    precision: Vec<String>,
    community: Vec<String>,
    rank: Vec<Vec<String>>,
}

fn measure_rep(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    rep: usize,
    loaded: Option<&Graph>,
    stage: Stage,
) -> RepRows {
    let seeds = StageSeeds::new(cfg.seed, point, rep);
    let built = build_instance(cfg, point, &seeds, loaded);
    let n = built.as_ref().ok().map(|i| i.graph.n());
    let prefix = || param_cells(cfg, point, rep, n);
    let widths = (
        PARAM_COLUMNS.len() + PRECISION_COLUMNS.len() + 1,
        PARAM_COLUMNS.len() + COMMUNITY_COLUMNS.len() + 1,
        PARAM_COLUMNS.len() + RANK_COLUMNS.len() + 1,
    );
    let observed = built.and_then(|inst| observe(cfg, point, &seeds, &inst).map(|o| (inst, o)));
    let (inst, obs) = match observed {
        Ok(v) => v,
        Err(e) => {
            let rank = Property::ALL
                .iter()
                .map(|p| {
                    let mut c = Cells::new(prefix());
                    c.push(p.name());
                    c.failed(widths.2, &e)
                })
                .collect();
            return RepRows {
                precision: Cells::new(prefix()).failed(widths.0, &e),
                community: Cells::new(prefix()).failed(widths.1, &e),
                rank,
            };
        }
    };
    if cfg.artifacts {
        // a failed dump must not alter the measurements
        let _ = dump_artifacts(cfg, point, rep, &seeds, &inst, &obs);
    }
    let forest = &obs.sample.forest;
    let recon = &obs.reconstruction;

    let mut p = Cells::new(prefix());
    p.push(forest.respondent_count());
    p.push(forest.len());
    p.push(obs.true_net.graph.n());
    p.push(recon.graph.n());
    p.push(recon.log.len());
    p.push_result("coalescing_precision", coalescing_precision(&recon.log, &obs.sample.truth));

    let mut community = Vec::new();
    let mut rank = Vec::new();
    if stage.includes(Stage::Community) || stage.includes(Stage::Rank) {
        let tn_part = detect(&obs.true_net.graph, &cfg.detector(seeds.detect_true));
        let rc_part = detect(&recon.graph, &cfg.detector(seeds.detect_reconstructed));
        let un_part = detect(&inst.graph, &cfg.detector(seeds.detect_underlying));
        let rc_proj = project(&recon.groups, forest, &obs.sample.truth);
        let tn_proj = ProjectionMap::identity_of(obs.true_net.underlying.clone());
        let un_proj = ProjectionMap::identity_of((0..inst.graph.n()).collect());
        // planted communities when known, detected ones on loaded networks
        let reference = match (&inst.planted, &un_part) {
            (Some(p), _) => Ok(p.clone()),
            (None, Ok(p)) => Ok(p.clone()),
            (None, Err(e)) => Err(Error::invalid(format!("underlying detection failed: {e}"))),
        };

        let mut c = Cells::new(prefix());
        c.push_result("true_communities", tn_part.as_ref().map(Partition::count).map_err(clone_err));
        c.push_result("reconstructed_communities", rc_part.as_ref().map(Partition::count).map_err(clone_err));
        let cp = |part: &Result<Partition>, proj: &ProjectionMap| match (part, &reference) {
            (Ok(part), Ok(r)) => community_precision(part, r, proj),
            (Err(e), _) | (_, Err(e)) => Err(clone_err(e)),
        };
        c.push_result("community_precision_true", cp(&tn_part, &tn_proj));
        c.push_result("community_precision_reconstructed", cp(&rc_part, &rc_proj));
        let nmi_value = match (&rc_part, &tn_part) {
            (Ok(a), Ok(b)) => {
                let (_, pa, pb) = align_partitions(a, &rc_proj, b, &tn_proj);
                nmi(&pa, &pb)
            }
            (Err(e), _) | (_, Err(e)) => Err(clone_err(e)),
        };
        c.push_result("nmi", nmi_value);
        community = c.finish();

        for property in Property::ALL {
            let mut c = Cells::new(prefix());
            c.push(property.name());
            match (&rc_part, &tn_part, &un_part) {
                (Ok(rp), Ok(tp), Ok(up)) => {
                    let rv = ProjectedView {
                        graph: &recon.graph,
                        partition: rp,
                        projection: &rc_proj,
                    };
                    let tv = ProjectedView {
                        graph: &obs.true_net.graph,
                        partition: tp,
                        projection: &tn_proj,
                    };
                    let uv = ProjectedView {
                        graph: &inst.graph,
                        partition: up,
                        projection: &un_proj,
                    };
                    c.push_result("reconstructed_vs_true", rank_correlation(rv, tv, property));
                    c.push_result("reconstructed_vs_underlying", rank_correlation(rv, uv, property));
                    c.push_result("true_vs_underlying", rank_correlation(tv, uv, property));
                    rank.push(c.finish());
                }
                (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => rank.push(c.failed(widths.2, e)),
            }
        }
    }
    RepRows {
        precision: p.finish(),
        community,
        rank,
    }
}

fn clone_err(e: &Error) -> Error {
    Error::invalid(e.to_string())
}

fn dump_artifacts(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    rep: usize,
    seeds: &StageSeeds,
    inst: &Instance,
    obs: &Observed,
) -> Result<()> {
    let dir = cfg.out.join("artifacts").join(format!("p{}_r{}", point.index, rep));
    fs::create_dir_all(&dir).map_err(|e| Error::from(e).at_path(&dir))?;
    let create = |name: &str| -> Result<BufWriter<File>> {
        let path = dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Error::from(e).at_path(path))
    };
    inst.graph.write_edge_list(create("network.edges")?)?;
    inst.attributes.write(create("attributes.txt")?)?;
    if let Some(p) = &inst.planted {
        p.write(create("communities.txt")?)?;
    }
    obs.sample.forest.write(create("forest.txt")?)?;
    obs.sample.truth.write(create("truth.txt")?)?;
    obs.reconstruction.graph.write_edge_list(create("reconstructed.edges")?)?;
    obs.reconstruction.write_provenance(create("provenance.txt")?)?;
    obs.reconstruction.log.write_csv(create("coalesce_log.csv")?)?;
    let mut w = create("seeds.txt")?;
    writeln!(w, "g = {}", inst.attributes.g())?;
    writeln!(w, "method = {}", point.method)?;
    writeln!(w, "f = {}", point.f)?;
    writeln!(w, "c = {}", point.c)?;
    match sampler_config(cfg, point, inst.graph.n()).size {
        SampleSize::Respondents(r) => writeln!(w, "respondents = {r}")?,
        SampleSize::TrueNetwork(t) => writeln!(w, "true_size = {t}")?,
    }
    writeln!(w, "n_t = {}", obs.reconstruction.graph.n())?;
    writeln!(w, "sample = {}", seeds.sample)?;
    writeln!(w, "reconstruct = {}", seeds.reconstruct)?;
    writeln!(w, "detect_reconstructed = {}", seeds.detect_reconstructed)?;
    w.flush()?;
    Ok(())
}

/// Builds the reconstruction ensemble feeding the immunization strategies.
/// Members whose reconstruction fails are left out.
pub fn build_ensemble(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    seeds: &StageSeeds,
    inst: &Instance,
) -> Vec<EnsembleMember> {
    let members: Vec<Option<EnsembleMember>> = (0..cfg.ensemble)
        .into_par_iter()
        .map(|i| {
            let s = seeds.member(i);
            let obs = observe(cfg, point, &s, inst).ok()?;
            let partition = detect(&obs.reconstruction.graph, &cfg.detector(s.detect_reconstructed)).ok()?;
            let projection = project(&obs.reconstruction.groups, &obs.sample.forest, &obs.sample.truth);
            Some(EnsembleMember {
                graph: obs.reconstruction.graph,
                partition,
                projection,
            })
        })
        .collect();
    members.into_iter().flatten().collect()
}

/// Strategy results for one (point, repetition), in strategy then budget
/// order.
pub fn epidemic_rep(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    rep: usize,
    loaded: Option<&Graph>,
) -> Result<Vec<(StrategyChoice, usize, usize, EpidemicSummary)>> {
    let seeds = StageSeeds::new(cfg.seed, point, rep);
    let inst = build_instance(cfg, point, &seeds, loaded)?;
    let n = inst.graph.n();
    let needs_ensemble = cfg.strategies.iter().any(|s| s.kind.uses_ensemble());
    let ensemble = if needs_ensemble {
        build_ensemble(cfg, point, &seeds, &inst)
    } else {
        Vec::new()
    };
    let underlying_part = detect(&inst.graph, &cfg.detector(seeds.detect_underlying))?;
    let sir = SirParams {
        seed: seeds.sir,
        ..cfg.sir
    };
    let mut out = Vec::new();
    for choice in &cfg.strategies {
        for &fraction in &cfg.budgets {
            let budget = (fraction * n as f64).round() as usize;
            let spec = StrategySpec {
                kind: choice.kind,
                property: choice.property.unwrap_or(RankProperty::Degree),
                budget,
            };
            let immunized = select_immunized(&spec, &inst.graph, &underlying_part, &ensemble, seeds.strategy)?;
            out.push((*choice, budget, ensemble.len(), evaluate_strategy(&inst.graph, &immunized, &sir)?));
        }
    }
    Ok(out)
}

fn epidemic_rows(cfg: &ExperimentConfig, point: &SweepPoint, rep: usize, loaded: Option<&Graph>) -> Vec<Vec<String>> {
    let n = match (&cfg.source, loaded) {
        (Source::Lfr(t), _) => Some(t.n),
        (_, Some(g)) => Some(g.n()),
        _ => None,
    };
    let width = PARAM_COLUMNS.len() + EPIDEMIC_COLUMNS.len() + 1;
    match epidemic_rep(cfg, point, rep, loaded) {
        Ok(results) => results
            .into_iter()
            .map(|(choice, budget, used, s)| {
                let mut c = Cells::new(param_cells(cfg, point, rep, n));
                c.push(choice.kind);
                c.push(choice.property.map(|p| p.to_string()).unwrap_or_default());
                c.push(budget);
                c.push(used);
                c.push(s.mean);
                c.push(s.stddev);
                c.push(s.runs);
                c.finish()
            })
            .collect(),
        Err(e) => vec![Cells::new(param_cells(cfg, point, rep, n)).failed(width, &e)],
    }
}

/// Runs every sweep point and repetition and returns the tables in
/// (point, repetition) order.
pub fn run_tables(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Tables> {
    cfg.validate()?;
    let loaded = match &cfg.source {
        Source::File(path) => {
            let file = File::open(path).map_err(|e| Error::from(e).at_path(path))?;
            Some(load_edge_list(BufReader::new(file)).map_err(|e| e.at_path(path))?.graph)
        }
        Source::Lfr(_) => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let points = cfg.points();
    let stage = opts.stage;
    pool.install(|| {
        let mut tables = Tables::default();
        let wants_measures = [Stage::Precision, Stage::Community, Stage::Rank]
            .iter()
            .any(|s| stage.includes(*s));
        if wants_measures {
            let jobs: Vec<(SweepPoint, usize)> = points
                .iter()
                .flat_map(|p| (0..cfg.repetitions).map(move |r| (*p, r)))
                .collect();
            let reps: Vec<RepRows> = jobs
                .par_iter()
                .map(|(p, r)| measure_rep(cfg, p, *r, loaded.as_ref(), stage))
                .collect();
            if stage.includes(Stage::Precision) {
                let mut t = Table::new(&PRECISION_COLUMNS);
                t.rows = reps.iter().map(|r| r.precision.clone()).collect();
                tables.precision = Some(t);
            }
            if stage.includes(Stage::Community) {
                let mut t = Table::new(&COMMUNITY_COLUMNS);
                t.rows = reps.iter().map(|r| r.community.clone()).collect();
                tables.community = Some(t);
            }
            if stage.includes(Stage::Rank) {
                let mut t = Table::new(&RANK_COLUMNS);
                t.rows = reps.iter().flat_map(|r| r.rank.iter().cloned()).collect();
                tables.rank = Some(t);
            }
        }
        if stage.includes(Stage::Epidemic) && !cfg.strategies.is_empty() {
            let jobs: Vec<(SweepPoint, usize)> = points
                .iter()
                .flat_map(|p| (0..cfg.epidemic_repetitions).map(move |r| (*p, r)))
                .collect();
            let mut t = Table::new(&EPIDEMIC_COLUMNS);
            t.rows = jobs
                .par_iter()
                .map(|(p, r)| epidemic_rows(cfg, p, *r, loaded.as_ref()))
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect();
            tables.epidemic = Some(t);
        }
        Ok(tables)
    })
}

/// Runs the pipeline and writes the tables into `cfg.out`.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<(Tables, Vec<PathBuf>)> {
    let tables = run_tables(cfg, opts)?;
    let written = tables.write(&cfg.out)?;
    Ok((tables, written))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig::parse(
            "n = 300\nk_avg = 8\nk_max = 16\nc_min = 10\nc_max = 30\n\
             g = 30\nrepetitions = 2\nensemble = 3\nsir_runs = 5\nbudgets = 0, 0.02\nseed = 7\n",
        )
        .unwrap()
    }

    #[test]
    fn parse_defaults_and_lists() {
        let cfg = ExperimentConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg = ExperimentConfig::parse("g = 182, 365, n\nmethod = rpm,hpm\nassortative = false, true\n").unwrap();
        assert_eq!(cfg.g, vec![GSpec::Count(182), GSpec::Count(365), GSpec::N]);
        assert_eq!(cfg.method, vec![SamplingMethod::Rpm, SamplingMethod::Hpm]);
        assert_eq!(cfg.points().len(), 12);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [
            ("g = 5\nbogus = 1\n", 2),
            ("g = 5\ng = 6\n", 2),
            ("g =\n", 1),
            ("f = five\n", 1),
            ("no equals sign\n", 1),
            ("strategies = underlying-top\n", 1),
        ] {
            match ExperimentConfig::parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
        assert!(ExperimentConfig::parse("source = file\n").is_err());
        assert!(ExperimentConfig::parse("source = file\nedge_list = x\nn = 5\n").is_err());
        assert!(ExperimentConfig::parse("edge_list = x\n").is_err());
        assert!(ExperimentConfig::parse("mu = 1.0\n").is_err());
        assert!(ExperimentConfig::parse("c_min = 40\nc_max = 30\n").is_err());
    }

    #[test]
    fn file_source_has_no_mu_axis() {
        let cfg = ExperimentConfig::parse("source = file\nedge_list = net.txt\nmu = 0.1, 0.3\n").unwrap();
        assert_eq!(cfg.points().len(), 1);
        assert_eq!(cfg.points()[0].mu, None);
    }

    #[test]
    fn seeds_depend_on_values_not_positions() {
        let a = ExperimentConfig::parse("g = 10, 20\n").unwrap().points();
        let b = ExperimentConfig::parse("g = 20, 10\n").unwrap().points();
        assert_eq!(StageSeeds::new(1, &a[0], 3), StageSeeds::new(1, &b[1], 3));
        assert_ne!(StageSeeds::new(1, &a[0], 3), StageSeeds::new(1, &a[1], 3));
        let s = StageSeeds::new(1, &a[0], 0);
        // the network depends only on mu and the repetition
        assert_eq!(s.network, StageSeeds::new(1, &a[1], 0).network);
        assert_ne!(s.member(0).sample, s.member(1).sample);
    }

    #[test]
    fn single_point_tables() {
        let cfg = small();
        let tables = run_tables(
            &cfg,
            &RunOptions {
                stage: Stage::All,
                jobs: 2,
            },
        )
        .unwrap();
        let precision = tables.precision.as_ref().unwrap();
        assert_eq!(precision.rows.len(), 2);
        assert!(precision.rows.iter().all(|r| r.len() == precision.header.len()));
        let col = precision.column("coalescing_precision").unwrap();
        for row in &precision.rows {
            let v: f64 = row[col].parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(tables.rank.as_ref().unwrap().rows.len(), 6);
        let epi = tables.epidemic.as_ref().unwrap();
        assert_eq!(epi.rows.len(), 4 * 2);
        assert!(epi.rows.iter().all(|r| r.last().unwrap().is_empty()), "{:?}", epi.rows);
    }

    #[test]
    fn stage_filter_and_thread_count_do_not_change_rows() {
        let cfg = small();
        let all = run_tables(&cfg, &RunOptions { stage: Stage::All, jobs: 3 }).unwrap();
        let only = run_tables(
            &cfg,
            &RunOptions {
                stage: Stage::Precision,
                jobs: 1,
            },
        )
        .unwrap();
        assert_eq!(all.precision, only.precision);
        assert!(only.community.is_none() && only.epidemic.is_none());
    }

    #[test]
    fn stage_errors_become_rows() {
        // a handful of respondents cannot reach half the network
        let mut cfg = small();
        cfg.respondents = Some(0.01);
        cfg.nt_rule = NtRule::FractionOfN;
        cfg.nt = vec![0.5];
        let t = run_tables(&cfg, &RunOptions { stage: Stage::Precision, jobs: 1 }).unwrap();
        let p = t.precision.unwrap();
        assert_eq!(p.rows.len(), 2);
        assert!(p.rows.iter().all(|r| !r.last().unwrap().is_empty()));
        assert!(p.rows.iter().all(|r| r.len() == p.header.len()));
    }
}

//! SIR spread on the underlying network and immunization strategies.
//!
//! Time is discrete and updates are synchronous: every vertex infectious at
//! step `t` gets one independent transmission attempt per susceptible
//! neighbor, and the newly infected start transmitting at `t + 1`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::metrics::{vertex_properties, Property, ProjectionMap};
use crate::rng::{derive_indexed, rng_from_seed};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirParams {
    /// Fraction of vertices infected at step 0.
    pub init_frac: f64,
    /// Per-neighbor, per-step transmission probability.
    pub beta: f64,
    /// Steps a vertex stays infectious before recovering.
    pub infectious_steps: u32,
    pub runs: usize,
    pub seed: u64,
}

impl Default for SirParams {
    fn default() -> Self {
        SirParams {
            init_frac: 0.002,
            beta: 0.08,
            infectious_steps: 4,
            runs: 200,
            seed: 0,
        }
    }
}

impl SirParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.init_frac > 0.0 && self.init_frac <= 1.0) {
            return Err(Error::invalid(format!("init_frac {} not in (0, 1]", self.init_frac)));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta {} not in [0, 1]", self.beta)));
        }
        if self.infectious_steps == 0 {
            return Err(Error::invalid("infectious_steps must be at least 1"));
        }
        if self.runs == 0 {
            return Err(Error::invalid("runs must be at least 1"));
        }
        Ok(())
    }

    /// `max(1, round(init_frac · n))`.
    pub fn initial_count(&self, n: usize) -> usize {
        ((self.init_frac * n as f64).round() as usize).max(1)
    }
}

fn immunity_mask(n: usize, immunized: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; n];
    for &v in immunized {
        if v >= n {
            return Err(Error::VertexOutOfRange { vertex: v, n });
        }
        mask[v] = true;
    }
    Ok(mask)
}

/// One outbreak; returns the vertices ever infected in infection order.
pub fn sir_trace(g: &Graph, immunized: &[usize], params: &SirParams, seed: u64) -> Result<Vec<usize>> {
    params.validate()?;
    let n = g.n();
    let immune = immunity_mask(n, immunized)?;
    let eligible: Vec<usize> = (0..n).filter(|&v| !immune[v]).collect();
    if eligible.is_empty() {
        return Err(Error::AllImmunized);
    }
    let mut rng = rng_from_seed(seed);
    let k = params.initial_count(n).min(eligible.len());
    let mut infected = vec![false; n];
    let mut order: Vec<usize> = sample_indices(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    order.sort_unstable();
    for &v in &order {
        infected[v] = true;
    }
    // (vertex, steps left infectious)
    let mut active: Vec<(usize, u32)> = order.iter().map(|&v| (v, params.infectious_steps)).collect();
    let mut fresh = Vec::new();
    while !active.is_empty() {
        for &(u, _) in &active {
            for &w in g.neighbors(u) {
                if !infected[w] && !immune[w] && rng.random::<f64>() < params.beta {
                    infected[w] = true;
                    fresh.push(w);
                }
            }
        }
        active.retain_mut(|(_, left)| {
            *left -= 1;
            *left > 0
        });
        order.extend_from_slice(&fresh);
        active.extend(fresh.drain(..).map(|v| (v, params.infectious_steps)));
    }
    Ok(order)
}

/// Epidemic size: number of vertices ever infected in one run.
pub fn sir_run(g: &Graph, immunized: &[usize], params: &SirParams, seed: u64) -> Result<usize> {
    sir_trace(g, immunized, params, seed).map(|t| t.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpidemicSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub stddev: f64,
    pub runs: usize,
}

impl EpidemicSummary {
    pub fn from_sizes(sizes: &[usize]) -> Self {
        let runs = sizes.len();
        let mean = sizes.iter().sum::<usize>() as f64 / runs as f64;
        let stddev = if runs < 2 {
            0.0
        } else {
            let ss: f64 = sizes.iter().map(|&s| (s as f64 - mean).powi(2)).sum();
            (ss / (runs - 1) as f64).sqrt()
        };
        EpidemicSummary { mean, stddev, runs }
    }

    pub fn std_error(&self) -> f64 {
        self.stddev / (self.runs as f64).sqrt()
    }
}

/// Epidemic sizes of `params.runs` independent outbreaks, in run order.
pub fn run_sizes(g: &Graph, immunized: &[usize], params: &SirParams) -> Result<Vec<usize>> {
    params.validate()?;
    (0..params.runs)
        .into_par_iter()
        .map(|i| sir_run(g, immunized, params, derive_indexed(params.seed, "sir", i as u64)))
        .collect()
}

pub fn evaluate_strategy(g: &Graph, immunized: &[usize], params: &SirParams) -> Result<EpidemicSummary> {
    Ok(EpidemicSummary::from_sizes(&run_sizes(g, immunized, params)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    UnderlyingTop,
    ReconstructedTop,
    RandomWhole,
    ReconstructedFrequencyRandom,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::UnderlyingTop,
        StrategyKind::ReconstructedTop,
        StrategyKind::RandomWhole,
        StrategyKind::ReconstructedFrequencyRandom,
    ];

    pub fn uses_property(&self) -> bool {
        matches!(self, StrategyKind::UnderlyingTop | StrategyKind::ReconstructedTop)
    }

    pub fn uses_ensemble(&self) -> bool {
        matches!(
            self,
            StrategyKind::ReconstructedTop | StrategyKind::ReconstructedFrequencyRandom
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StrategyKind::UnderlyingTop => "underlying-top",
            StrategyKind::ReconstructedTop => "reconstructed-top",
            StrategyKind::RandomWhole => "random-whole",
            StrategyKind::ReconstructedFrequencyRandom => "reconstructed-frequency-random",
        })
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown strategy {s:?}")))
    }
}

/// Property used to rank candidates. Embeddedness is ranked ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RankProperty {
    Degree,
    KOut,
    EmbeddednessLow,
}

impl RankProperty {
    pub const ALL: [RankProperty; 3] = [RankProperty::Degree, RankProperty::KOut, RankProperty::EmbeddednessLow];

    fn property(&self) -> Property {
        match self {
            RankProperty::Degree => Property::Degree,
            RankProperty::KOut => Property::KOut,
            RankProperty::EmbeddednessLow => Property::Embeddedness,
        }
    }

    /// Higher is a better immunization target.
    fn score(&self, value: f64) -> f64 {
        match self {
            RankProperty::EmbeddednessLow => -value,
            _ => value,
        }
    }
}

impl fmt::Display for RankProperty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankProperty::Degree => "degree",
            RankProperty::KOut => "k_out",
            RankProperty::EmbeddednessLow => "embeddedness-low",
        })
    }
}

impl FromStr for RankProperty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RankProperty::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown property {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrategySpec {
    pub kind: StrategyKind,
    pub property: RankProperty,
    pub budget: usize,
}

/// One reconstruction with its detected communities and projection.
#[derive(Debug, Clone)]
pub struct EnsembleMember {
    pub graph: Graph,
    pub partition: Partition,
    pub projection: ProjectionMap,
}

/// Per underlying vertex: appearances across the ensemble and the property
/// averaged over the instances where it appears.
pub fn ensemble_profile(ensemble: &[EnsembleMember], property: RankProperty) -> BTreeMap<usize, (usize, f64)> {
    let mut acc: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for member in ensemble {
        let props = vertex_properties(&member.graph, &member.partition);
        for (id, v) in member.projection.representatives() {
            let e = acc.entry(id).or_insert((0, 0.0));
            e.0 += 1;
            e.1 += props[v].get(property.property());
        }
    }
    for e in acc.values_mut() {
        e.1 /= e.0 as f64;
    }
    acc
}

fn take_budget(ranked: Vec<usize>, budget: usize) -> Result<Vec<usize>> {
    if budget > ranked.len() {
        return Err(Error::BudgetTooLarge {
            budget,
            pool: ranked.len(),
        });
    }
    let mut chosen = ranked;
    chosen.truncate(budget);
    Ok(chosen)
}

/// Vertices to immunize, best first. `underlying_partition` supplies the
/// communities for k_out and embeddedness on the underlying graph.
pub fn select_immunized(
    spec: &StrategySpec,
    underlying: &Graph,
    underlying_partition: &Partition,
    ensemble: &[EnsembleMember],
    seed: u64,
) -> Result<Vec<usize>> {
    let n = underlying.n();
    if spec.budget >= n {
        return Err(Error::invalid(format!("budget {} must be below n = {n}", spec.budget)));
    }
    if spec.kind.uses_ensemble() && ensemble.is_empty() {
        return Err(Error::invalid(format!("{} needs a nonempty ensemble", spec.kind)));
    }
    let mut rng = rng_from_seed(seed);
    match spec.kind {
        StrategyKind::UnderlyingTop => {
            if underlying_partition.len() != n {
                return Err(Error::MismatchedElements(underlying_partition.len(), n));
            }
            let scores: Vec<f64> = vertex_properties(underlying, underlying_partition)
                .iter()
                .map(|p| spec.property.score(p.get(spec.property.property())))
                .collect();
            let mut ranked: Vec<usize> = (0..n).collect();
            ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
            take_budget(ranked, spec.budget)
        }
        StrategyKind::ReconstructedTop => {
            let profile = ensemble_profile(ensemble, spec.property);
            let mut ranked: Vec<(usize, usize, f64)> =
                profile.into_iter().map(|(id, (freq, value))| (id, freq, spec.property.score(value))).collect();
            ranked.sort_by(|a, b| b.2.total_cmp(&a.2).then(b.1.cmp(&a.1)).then(a.0.cmp(&b.0)));
            take_budget(ranked.into_iter().map(|r| r.0).collect(), spec.budget)
        }
        StrategyKind::RandomWhole => Ok(sample_indices(&mut rng, n, spec.budget).into_vec()),
        StrategyKind::ReconstructedFrequencyRandom => {
            let profile = ensemble_profile(ensemble, RankProperty::Degree);
            let mut ranked: Vec<(usize, usize)> = profile.into_iter().map(|(id, (freq, _))| (id, freq)).collect();
            // shuffle then stable sort: equal frequencies end up in random order
            ranked.shuffle(&mut rng);
            ranked.sort_by(|a, b| b.1.cmp(&a.1));
            take_budget(ranked.into_iter().map(|r| r.0).collect(), spec.budget)
        }
    }
}

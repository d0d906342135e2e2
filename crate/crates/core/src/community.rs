//! Community detection behind a method-keyed interface.
//!
//! The default detector is greedy modularity optimization in the Louvain
//! style: local vertex moves, aggregation of communities into super-vertices,
//! repeat, and a closing round of vertex moves on the original graph. Moves
//! only ever target a neighbor's community, so no community spans two
//! connected components and isolated vertices stay singletons.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectorMethod {
    /// Agglomerative modularity optimization with vertex-move refinement.
    #[default]
    Louvain,
}

impl fmt::Display for DetectorMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("louvain")
    }
}

impl FromStr for DetectorMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "louvain" | "modularity" => Ok(DetectorMethod::Louvain),
            other => Err(Error::invalid(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub method: DetectorMethod,
    pub resolution: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            method: DetectorMethod::Louvain,
            resolution: 1.0,
            seed: 0,
        }
    }
}

impl DetectorConfig {
    pub fn with_seed(seed: u64) -> Self {
        DetectorConfig {
            seed,
            ..Default::default()
        }
    }
}

pub trait CommunityDetector {
    fn detect(&self, g: &Graph) -> Partition;
}

/// Runs the configured detector.
pub fn detect(g: &Graph, cfg: &DetectorConfig) -> Result<Partition> {
    if !(cfg.resolution > 0.0 && cfg.resolution.is_finite()) {
        return Err(Error::invalid(format!(
            "resolution must be positive, got {}",
            cfg.resolution
        )));
    }
    if g.n() == 0 {
        return Err(Error::invalid("cannot detect communities in an empty graph"));
    }
    Ok(match cfg.method {
        DetectorMethod::Louvain => Louvain {
            resolution: cfg.resolution,
            seed: cfg.seed,
        }
        .detect(g),
    })
}

/// Newman-Girvan modularity `Σ_c (e_c / m − (d_c / 2m)²)`.
pub fn modularity(g: &Graph, p: &Partition) -> Result<f64> {
    if g.m() == 0 {
        return Err(Error::Undefined("modularity"));
    }
    if p.len() != g.n() {
        return Err(Error::MismatchedElements(p.len(), g.n()));
    }
    let m = g.m() as f64;
    let mut internal = vec![0usize; p.count()];
    let mut degree = vec![0usize; p.count()];
    for v in 0..g.n() {
        degree[p.of(v)] += g.deg(v);
    }
    for (u, v) in g.edges() {
        if p.of(u) == p.of(v) {
            internal[p.of(u)] += 1;
        }
    }
    Ok(internal
        .iter()
        .zip(&degree)
        .map(|(&e, &d)| e as f64 / m - (d as f64 / (2.0 * m)).powi(2))
        .sum())
}

pub struct Louvain {
    pub resolution: f64,
    pub seed: u64,
}

/// Weighted graph with self-loop weights, used for aggregated levels.
struct Level {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
}

impl Level {
    fn from_graph(g: &Graph) -> Self {
        Level {
            adj: (0..g.n())
                .map(|v| g.neighbors(v).iter().map(|&u| (u, 1.0)).collect())
                .collect(),
            self_loop: vec![0.0; g.n()],
        }
    }

    fn n(&self) -> usize {
        self.adj.len()
    }

    /// Weighted degree; a self-loop counts twice.
    fn strength(&self, v: usize) -> f64 {
        self.adj[v].iter().map(|(_, w)| w).sum::<f64>() + 2.0 * self.self_loop[v]
    }

    fn aggregate(&self, community: &[usize], count: usize) -> Level {
        let mut self_loop = vec![0.0; count];
        let mut maps: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); count];
        for v in 0..self.n() {
            let cv = community[v];
            self_loop[cv] += self.self_loop[v];
            for &(u, w) in &self.adj[v] {
                let cu = community[u];
                if cu == cv {
                    // each internal edge is seen from both ends
                    self_loop[cv] += w / 2.0;
                } else {
                    *maps[cv].entry(cu).or_insert(0.0) += w;
                }
            }
        }
        Level {
            adj: maps.into_iter().map(|m| m.into_iter().collect()).collect(),
            self_loop,
        }
    }
}

impl Louvain {
    /// Local moving on one level. Returns whether any vertex moved.
    fn move_vertices(&self, level: &Level, community: &mut [usize], rng: &mut crate::rng::Rng) -> bool {
        let n = level.n();
        let strength: Vec<f64> = (0..n).map(|v| level.strength(v)).collect();
        let two_m: f64 = strength.iter().sum();
        if two_m == 0.0 {
            return false;
        }
        let mut total = vec![0.0; n];
        for v in 0..n {
            total[community[v]] += strength[v];
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut weight_to = vec![0.0; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any = false;
        loop {
            let mut moved = false;
            for &v in &order {
                let own = community[v];
                for &(u, w) in &level.adj[v] {
                    let c = community[u];
                    if weight_to[c] == 0.0 {
                        touched.push(c);
                    }
                    weight_to[c] += w;
                }
                total[own] -= strength[v];
                let gain = |c: usize, w_in: f64| w_in - self.resolution * total[c] * strength[v] / two_m;
                let mut best = own;
                let mut best_gain = gain(own, weight_to[own]);
                for &c in &touched {
                    let g = gain(c, weight_to[c]);
                    if g > best_gain + 1e-12 {
                        best = c;
                        best_gain = g;
                    }
                }
                total[best] += strength[v];
                if best != own {
                    community[v] = best;
                    moved = true;
                    any = true;
                }
                for c in touched.drain(..) {
                    weight_to[c] = 0.0;
                }
                weight_to[own] = 0.0;
            }
            if !moved {
                break;
            }
        }
        any
    }
}

fn relabel(community: &mut [usize]) -> usize {
    let p = Partition::from_labels(community);
    community.copy_from_slice(p.as_slice());
    p.count()
}

impl CommunityDetector for Louvain {
    fn detect(&self, g: &Graph) -> Partition {
        let mut rng = rng_from_seed(self.seed);
        let n = g.n();
        let mut membership: Vec<usize> = (0..n).collect();
        let mut level = Level::from_graph(g);
        loop {
            let mut community: Vec<usize> = (0..level.n()).collect();
            let improved = self.move_vertices(&level, &mut community, &mut rng);
            let count = relabel(&mut community);
            for m in membership.iter_mut() {
                *m = community[*m];
            }
            if !improved || count == level.n() {
                break;
            }
            level = level.aggregate(&community, count);
        }
        let base = Level::from_graph(g);
        self.move_vertices(&base, &mut membership, &mut rng);
        Partition::from_labels(&membership)
    }
}

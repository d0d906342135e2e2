//! Two-phase network sampling.
//!
//! Phase one grows vertex-disjoint paths of respondents through the hidden
//! graph, either by uniform neighbor choice (RPM) or by always taking the
//! highest-degree unvisited neighbor (HPM). Phase two asks every respondent
//! for up to `f` friends, each reported only through a window of `c`
//! consecutive categories containing the friend's true category.
//!
//! The observable result is a [`SampleForest`]. The identity of every
//! occurrence lives in a separate [`SealedTruth`], which only evaluation code
//! reads.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{AttributeMap, Graph};
use crate::rng::{derive_seed, rng_from_seed, Rng};

/// Minimum degree of an HPM seed.
pub const HPM_MIN_SEED_DEGREE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingMethod {
    /// Random Path Method: uniform successor among unvisited neighbors.
    Rpm,
    /// High-degree Path Method: highest-degree unvisited neighbor.
    Hpm,
}

impl fmt::Display for SamplingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMethod::Rpm => "rpm",
            SamplingMethod::Hpm => "hpm",
        })
    }
}

impl FromStr for SamplingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rpm" | "random" => Ok(SamplingMethod::Rpm),
            "hpm" | "high-degree" => Ok(SamplingMethod::Hpm),
            other => Err(Error::invalid(format!("unknown sampling method {other:?}"))),
        }
    }
}

/// Closed interval of categories `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Description {
    lo: u32,
    hi: u32,
}

impl Description {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo == 0 || lo > hi {
            return Err(Error::EmptyDescription { lo, hi });
        }
        Ok(Description { lo, hi })
    }

    pub fn exact(category: u32) -> Self {
        Description {
            lo: category,
            hi: category,
        }
    }

    pub fn lo(&self) -> u32 {
        self.lo
    }

    pub fn hi(&self) -> u32 {
        self.hi
    }

    pub fn width(&self) -> u32 {
        self.hi - self.lo + 1
    }

    pub fn contains(&self, category: u32) -> bool {
        (self.lo..=self.hi).contains(&category)
    }

    pub fn intersect(&self, other: &Description) -> Option<Description> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Description { lo, hi })
    }

    /// Random window of `min(c, g)` consecutive categories inside `1..=g`
    /// that contains `category`, offset uniform over valid placements.
    pub fn random_window(category: u32, c: u32, g: u32, rng: &mut Rng) -> Self {
        debug_assert!((1..=g).contains(&category) && c >= 1);
        let w = c.min(g);
        let first = category.saturating_sub(w - 1).max(1);
        let last = category.min(g - w + 1);
        let lo = rng.random_range(first..=last);
        Description { lo, hi: lo + w - 1 }
    }
}

impl fmt::Display for Description {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

impl FromStr for Description {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("bad description {s:?}, expected lo..hi"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let lo = a.parse().map_err(|_| bad())?;
        let hi = b.parse().map_err(|_| bad())?;
        Description::new(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Respondent { category: u32 },
    Friend { description: Description },
}

impl NodeKind {
    pub fn is_respondent(&self) -> bool {
        matches!(self, NodeKind::Respondent { .. })
    }
}

/// One occurrence in a sample tree. Its occurrence id is its index in the
/// forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestNode {
    pub tree: usize,
    /// Path predecessor for respondents (none for a seed), the naming
    /// respondent for friends.
    pub parent: Option<usize>,
    pub kind: NodeKind,
}

/// The observable sample: trees of respondents and friend occurrences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SampleForest {
    nodes: Vec<ForestNode>,
}

impl SampleForest {
    /// Builds a forest, checking that parents precede children and that
    /// friends hang off respondents of the same tree.
    pub fn from_nodes(nodes: Vec<ForestNode>) -> Result<Self> {
        for (i, node) in nodes.iter().enumerate() {
            if let Some(p) = node.parent {
                let parent = nodes
                    .get(p)
                    .filter(|_| p < i)
                    .ok_or_else(|| Error::invalid(format!("occurrence {i}: parent {p} must precede it")))?;
                if !parent.kind.is_respondent() {
                    return Err(Error::invalid(format!(
                        "occurrence {i}: parent {p} is not a respondent"
                    )));
                }
                if parent.tree != node.tree {
                    return Err(Error::invalid(format!(
                        "occurrence {i}: parent {p} is in another tree"
                    )));
                }
            } else if !node.kind.is_respondent() {
                return Err(Error::invalid(format!("friend occurrence {i} has no parent")));
            }
        }
        Ok(SampleForest { nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[ForestNode] {
        &self.nodes
    }

    pub fn node(&self, occ: usize) -> &ForestNode {
        &self.nodes[occ]
    }

    pub fn respondent_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind.is_respondent()).count()
    }

    pub fn friend_count(&self) -> usize {
        self.len() - self.respondent_count()
    }

    pub fn tree_count(&self) -> usize {
        self.nodes.iter().map(|n| n.tree + 1).max().unwrap_or(0)
    }

    /// `(parent, child)` occurrence pairs.
    pub fn tree_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.parent.map(|p| (p, i)))
    }

    /// Writes `tree occ kind parent payload` lines; kind is `R` or `F`, a
    /// missing parent is `-`, payload is the category or `lo..hi`.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (occ, n) in self.nodes.iter().enumerate() {
            let parent = n.parent.map_or_else(|| "-".to_string(), |p| p.to_string());
            match n.kind {
                NodeKind::Respondent { category } => {
                    writeln!(w, "{} {occ} R {parent} {category}", n.tree)?
                }
                NodeKind::Friend { description } => {
                    writeln!(w, "{} {occ} F {parent} {description}", n.tree)?
                }
            }
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut nodes = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let fields: Vec<&str> = t.split_whitespace().collect();
            let [tree, occ, kind, parent, payload] = fields[..] else {
                return Err(Error::parse(lineno, "expected `tree occ kind parent payload`"));
            };
            let num = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(lineno, format!("bad integer {s:?}")))
            };
            if num(occ)? != nodes.len() {
                return Err(Error::parse(lineno, "occurrence ids must be 0, 1, 2, ... in order"));
            }
            let parent = match parent {
                "-" => None,
                p => Some(num(p)?),
            };
            let kind = match kind {
                "R" => NodeKind::Respondent {
                    category: payload
                        .parse()
                        .map_err(|_| Error::parse(lineno, format!("bad category {payload:?}")))?,
                },
                "F" => NodeKind::Friend {
                    description: payload
                        .parse()
                        .map_err(|e: Error| Error::parse(lineno, e.to_string()))?,
                },
                k => return Err(Error::parse(lineno, format!("unknown node kind {k:?}"))),
            };
            nodes.push(ForestNode {
                tree: num(tree)?,
                parent,
                kind,
            });
        }
        if nodes.is_empty() {
            return Err(Error::EmptyInput);
        }
        SampleForest::from_nodes(nodes)
    }
}

/// Underlying vertex of every occurrence. Evaluation-only.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SealedTruth {
    vertex_of: Vec<usize>,
}

impl SealedTruth {
    pub fn new(vertex_of: Vec<usize>) -> Self {
        SealedTruth { vertex_of }
    }

    #[inline]
    pub fn vertex(&self, occ: usize) -> usize {
        self.vertex_of[occ]
    }

    pub fn len(&self) -> usize {
        self.vertex_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertex_of.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.vertex_of
    }

    /// `occ vertex` lines.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (occ, v) in self.vertex_of.iter().enumerate() {
            writeln!(w, "{occ} {v}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut vertex_of = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let mut it = t.split_whitespace();
            let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::parse(i + 1, "expected `occ vertex`"));
            };
            let occ: usize = a.parse().map_err(|_| Error::parse(i + 1, "bad occurrence id"))?;
            let v: usize = b.parse().map_err(|_| Error::parse(i + 1, "bad vertex id"))?;
            if occ != vertex_of.len() {
                return Err(Error::parse(i + 1, "occurrence ids must be 0, 1, 2, ... in order"));
            }
            vertex_of.push(v);
        }
        if vertex_of.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(SealedTruth { vertex_of })
    }
}

/// Set of vertices supporting O(1) uniform choice and removal.
struct Pool {
    items: Vec<usize>,
    pos: Vec<usize>,
}

impl Pool {
    fn new(n: usize, items: Vec<usize>) -> Self {
        let mut pos = vec![usize::MAX; n];
        for (i, &v) in items.iter().enumerate() {
            pos[v] = i;
        }
        Pool { items, pos }
    }

    fn remove(&mut self, v: usize) {
        let i = self.pos[v];
        if i == usize::MAX {
            return;
        }
        let last = *self.items.last().expect("non-empty");
        self.items.swap_remove(i);
        if last != v {
            self.pos[last] = i;
        }
        self.pos[v] = usize::MAX;
    }

    fn choose(&self, rng: &mut Rng) -> Option<usize> {
        if self.items.is_empty() {
            None
        } else {
            Some(self.items[rng.random_range(0..self.items.len())])
        }
    }
}

/// Grows sample paths one respondent at a time.
struct PathWalker<'g> {
    graph: &'g Graph,
    method: SamplingMethod,
    in_path: Vec<bool>,
    unused: Pool,
    hubs: Pool,
    current: Option<usize>,
    rng: Rng,
    seed_fallback: bool,
}

impl<'g> PathWalker<'g> {
    fn new(graph: &'g Graph, method: SamplingMethod, seed: u64) -> Self {
        let n = graph.n();
        let hubs = (0..n)
            .filter(|&v| graph.deg(v) >= HPM_MIN_SEED_DEGREE)
            .collect();
        PathWalker {
            graph,
            method,
            in_path: vec![false; n],
            unused: Pool::new(n, (0..n).collect()),
            hubs: Pool::new(n, hubs),
            current: None,
            rng: rng_from_seed(seed),
            seed_fallback: false,
        }
    }

    fn visit(&mut self, v: usize) {
        self.in_path[v] = true;
        self.unused.remove(v);
        self.hubs.remove(v);
        self.current = Some(v);
    }

    fn successor(&mut self, v: usize) -> Option<usize> {
        let eligible: Vec<usize> = self
            .graph
            .neighbors(v)
            .iter()
            .copied()
            .filter(|&u| !self.in_path[u])
            .collect();
        if eligible.is_empty() {
            return None;
        }
        let pick = match self.method {
            SamplingMethod::Rpm => eligible[self.rng.random_range(0..eligible.len())],
            SamplingMethod::Hpm => {
                let top = eligible.iter().map(|&u| self.graph.deg(u)).max().expect("non-empty");
                let best: Vec<usize> = eligible
                    .into_iter()
                    .filter(|&u| self.graph.deg(u) == top)
                    .collect();
                best[self.rng.random_range(0..best.len())]
            }
        };
        Some(pick)
    }

    fn seed(&mut self) -> Option<usize> {
        match self.method {
            SamplingMethod::Rpm => self.unused.choose(&mut self.rng),
            SamplingMethod::Hpm => match self.hubs.choose(&mut self.rng) {
                Some(v) => Some(v),
                None => {
                    let v = self.unused.choose(&mut self.rng);
                    self.seed_fallback |= v.is_some();
                    v
                }
            },
        }
    }

    /// Next respondent and whether it starts a new path.
    fn step(&mut self) -> Option<(usize, bool)> {
        if let Some(v) = self.current {
            if let Some(u) = self.successor(v) {
                self.visit(u);
                return Some((u, false));
            }
        }
        let s = self.seed()?;
        self.visit(s);
        Some((s, true))
    }

    /// Starts a new path at a chosen vertex.
    #[cfg(test)]
    fn force_seed(&mut self, v: usize) {
        self.visit(v);
    }
}

/// Vertex-disjoint sample paths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathSample {
    pub paths: Vec<Vec<usize>>,
    /// HPM ran out of seeds of degree >= 5 and used unrestricted seeds.
    pub seed_fallback: bool,
}

impl PathSample {
    pub fn respondent_count(&self) -> usize {
        self.paths.iter().map(Vec::len).sum()
    }
}

/// Grows paths until they hold exactly `n_r` vertices in total.
pub fn sample_paths(g: &Graph, method: SamplingMethod, n_r: usize, seed: u64) -> Result<PathSample> {
    if n_r > g.n() {
        return Err(Error::invalid(format!(
            "respondent target {n_r} exceeds vertex count {}",
            g.n()
        )));
    }
    let mut walker = PathWalker::new(g, method, seed);
    let mut paths: Vec<Vec<usize>> = Vec::new();
    for _ in 0..n_r {
        let (v, fresh) = walker.step().expect("n_r <= n leaves unused vertices");
        if fresh {
            paths.push(Vec::new());
        }
        paths.last_mut().expect("path started").push(v);
    }
    Ok(PathSample {
        paths,
        seed_fallback: walker.seed_fallback,
    })
}

fn check_friend_params(attrs: &AttributeMap, g: &Graph, c: u32) -> Result<()> {
    if c == 0 {
        return Err(Error::invalid("description width c must be at least 1"));
    }
    if attrs.len() != g.n() {
        return Err(Error::invalid(format!(
            "attribute map covers {} vertices, graph has {}",
            attrs.len(),
            g.n()
        )));
    }
    Ok(())
}

/// Friends of one respondent: a uniform subset of `min(f, degree)`
/// neighbors, in vertex order, each with a fresh description.
fn friends_of(
    g: &Graph,
    attrs: &AttributeMap,
    v: usize,
    f: usize,
    c: u32,
    rng: &mut Rng,
) -> Vec<(usize, Description)> {
    let nb = g.neighbors(v);
    let k = f.min(nb.len());
    let mut picked: Vec<usize> = index::sample(rng, nb.len(), k).into_iter().map(|i| nb[i]).collect();
    picked.sort_unstable();
    picked
        .into_iter()
        .map(|u| (u, Description::random_window(attrs.get(u), c, attrs.g(), rng)))
        .collect()
}

/// A sampled forest together with its sealed identities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub forest: SampleForest,
    pub truth: SealedTruth,
    pub seed_fallback: bool,
}

struct ForestBuilder {
    nodes: Vec<ForestNode>,
    truth: Vec<usize>,
    last_respondent: Option<usize>,
    tree: Option<usize>,
}

impl ForestBuilder {
    fn new() -> Self {
        ForestBuilder {
            nodes: Vec::new(),
            truth: Vec::new(),
            last_respondent: None,
            tree: None,
        }
    }

    fn push_respondent(&mut self, v: usize, category: u32, starts_path: bool) -> usize {
        if starts_path {
            self.tree = Some(self.tree.map_or(0, |t| t + 1));
            self.last_respondent = None;
        }
        let occ = self.nodes.len();
        self.nodes.push(ForestNode {
            tree: self.tree.expect("first respondent starts a path"),
            parent: self.last_respondent,
            kind: NodeKind::Respondent { category },
        });
        self.truth.push(v);
        self.last_respondent = Some(occ);
        occ
    }

    fn push_friend(&mut self, parent: usize, u: usize, description: Description) {
        self.nodes.push(ForestNode {
            tree: self.nodes[parent].tree,
            parent: Some(parent),
            kind: NodeKind::Friend { description },
        });
        self.truth.push(u);
    }

    fn finish(self, seed_fallback: bool) -> Sample {
        Sample {
            forest: SampleForest { nodes: self.nodes },
            truth: SealedTruth::new(self.truth),
            seed_fallback,
        }
    }
}

/// Converts paths to sample trees and elicits friends for every respondent.
pub fn elicit_friends(
    g: &Graph,
    attrs: &AttributeMap,
    paths: &PathSample,
    f: usize,
    c: u32,
    seed: u64,
) -> Result<Sample> {
    check_friend_params(attrs, g, c)?;
    let mut rng = rng_from_seed(seed);
    let mut b = ForestBuilder::new();
    for path in &paths.paths {
        for (i, &v) in path.iter().enumerate() {
            let occ = b.push_respondent(v, attrs.get(v), i == 0);
            for (u, d) in friends_of(g, attrs, v, f, c, &mut rng) {
                b.push_friend(occ, u, d);
            }
        }
    }
    Ok(b.finish(paths.seed_fallback))
}

/// When to stop collecting respondents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSize {
    /// Exactly this many respondents.
    Respondents(usize),
    /// Stop after the first respondent at which the sample covers at least
    /// this many distinct underlying vertices.
    TrueNetwork(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplerConfig {
    pub method: SamplingMethod,
    pub size: SampleSize,
    pub f: usize,
    pub c: u32,
}

/// Full two-phase sample. Path growth and friend elicitation draw from
/// separate streams derived from `seed`, so a [`SampleSize::TrueNetwork`]
/// sample equals the [`SampleSize::Respondents`] sample with the same
/// respondent count.
pub fn sample(g: &Graph, attrs: &AttributeMap, cfg: &SamplerConfig, seed: u64) -> Result<Sample> {
    let path_seed = derive_seed(seed, "paths");
    let friend_seed = derive_seed(seed, "friends");
    match cfg.size {
        SampleSize::Respondents(n_r) => {
            let paths = sample_paths(g, cfg.method, n_r, path_seed)?;
            elicit_friends(g, attrs, &paths, cfg.f, cfg.c, friend_seed)
        }
        SampleSize::TrueNetwork(target) => {
            check_friend_params(attrs, g, cfg.c)?;
            let mut walker = PathWalker::new(g, cfg.method, path_seed);
            let mut rng = rng_from_seed(friend_seed);
            let mut b = ForestBuilder::new();
            let mut seen = vec![false; g.n()];
            let mut distinct = 0usize;
            let mut mark = |v: usize, distinct: &mut usize| {
                if !std::mem::replace(&mut seen[v], true) {
                    *distinct += 1;
                }
            };
            while distinct < target {
                let Some((v, fresh)) = walker.step() else { break };
                let occ = b.push_respondent(v, attrs.get(v), fresh);
                mark(v, &mut distinct);
                for (u, d) in friends_of(g, attrs, v, cfg.f, cfg.c, &mut rng) {
                    b.push_friend(occ, u, d);
                    mark(u, &mut distinct);
                }
            }
            Ok(b.finish(walker.seed_fallback))
        }
    }
}

/// The ideal reconstruction: all occurrences of each underlying vertex
/// merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrueNetwork {
    pub graph: Graph,
    /// True-network vertex of each occurrence.
    pub vertex_of_occ: Vec<usize>,
    /// Underlying vertex of each true-network vertex.
    pub underlying: Vec<usize>,
}

pub fn true_network(forest: &SampleForest, truth: &SealedTruth) -> Result<TrueNetwork> {
    if truth.len() != forest.len() {
        return Err(Error::invalid(format!(
            "truth table has {} entries for {} occurrences",
            truth.len(),
            forest.len()
        )));
    }
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut underlying = Vec::new();
    let vertex_of_occ: Vec<usize> = (0..forest.len())
        .map(|occ| {
            let v = truth.vertex(occ);
            *index.entry(v).or_insert_with(|| {
                underlying.push(v);
                underlying.len() - 1
            })
        })
        .collect();
    let edges = forest
        .tree_edges()
        .map(|(p, c)| (vertex_of_occ[p], vertex_of_occ[c]));
    let (graph, _) = Graph::from_edges(underlying.len(), edges)?;
    Ok(TrueNetwork {
        graph,
        vertex_of_occ,
        underlying,
    })
}

//! Simple undirected graphs with dense vertex ids, per-vertex category
//! attributes, and vertex partitions, plus their line-oriented text formats.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Simple undirected graph over vertices `0..n`.
///
/// Neighbor lists are kept sorted, so [`Graph::is_edge`] is a binary search.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Graph {
    adj: Vec<Vec<usize>>,
    m: usize,
}

/// Counts of input edges that could not be represented in a simple graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Dropped {
    pub duplicates: usize,
    pub self_loops: usize,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adj: vec![Vec::new(); n],
            m: 0,
        }
    }

    /// Builds a graph from an edge iterator, dropping self-loops and repeated
    /// edges (in either orientation).
    pub fn from_edges<I>(n: usize, edges: I) -> Result<(Self, Dropped)>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adj = vec![Vec::new(); n];
        let mut dropped = Dropped::default();
        let mut raw = 0usize;
        for (u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(Error::VertexOutOfRange { vertex: w, n });
                }
            }
            if u == v {
                dropped.self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
            raw += 1;
        }
        let mut total = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            total += list.len();
        }
        let m = total / 2;
        dropped.duplicates = raw - m;
        Ok((Graph { adj, m }, dropped))
    }

    /// Like [`Graph::from_edges`] for edge sets already known to be valid.
    ///
    /// Panics if an endpoint is out of range.
    pub fn from_edges_lossy<I>(n: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        Graph::from_edges(n, edges)
            .expect("edge endpoint out of range")
            .0
    }

    pub fn n(&self) -> usize {
        self.adj.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    fn check(&self, v: usize) -> Result<()> {
        if v < self.n() {
            Ok(())
        } else {
            Err(Error::VertexOutOfRange {
                vertex: v,
                n: self.n(),
            })
        }
    }

    pub fn degree(&self, v: usize) -> Result<usize> {
        self.check(v)?;
        Ok(self.adj[v].len())
    }

    /// Degree without the range check, for hot loops over `0..n`.
    #[inline]
    pub fn deg(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn is_edge(&self, u: usize, v: usize) -> Result<bool> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.has_edge(u, v))
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let (a, b) = if self.adj[u].len() <= self.adj[v].len() {
            (u, v)
        } else {
            (v, u)
        };
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    /// Writes one `u v` line per edge using dense ids.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> Result<()> {
        for (u, v) in self.edges() {
            writeln!(w, "{u} {v}")?;
        }
        Ok(())
    }
}

/// A graph read from an edge-list file, with its original vertex labels.
#[derive(Debug, Clone)]
pub struct LoadedGraph {
    pub graph: Graph,
    /// `labels[v]` is the token that named dense vertex `v` in the input.
    pub labels: Vec<i64>,
    pub dropped: Dropped,
}

/// Reads an edge list: two integer tokens per line, `#` lines ignored.
///
/// Labels are compacted to `0..n` in order of first appearance. A self-loop
/// line still introduces its vertex.
pub fn load_edge_list<R: BufRead>(reader: R) -> Result<LoadedGraph> {
    let mut index: HashMap<i64, usize> = HashMap::new();
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    let mut intern = |label: i64| {
        *index.entry(label).or_insert_with(|| {
            labels.push(label);
            labels.len() - 1
        })
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::parse(i + 1, format!("expected two tokens, got {trimmed:?}")));
        };
        let parse = |t: &str| {
            t.parse::<i64>()
                .map_err(|_| Error::parse(i + 1, format!("not an integer vertex label: {t:?}")))
        };
        let (a, b) = (parse(a)?, parse(b)?);
        let u = intern(a);
        let v = intern(b);
        edges.push((u, v));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (graph, dropped) = Graph::from_edges(labels.len(), edges)?;
    Ok(LoadedGraph {
        graph,
        labels,
        dropped,
    })
}

/// Category attribute per vertex, each in `1..=g`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeMap {
    categories: Vec<u32>,
    g: u32,
}

impl AttributeMap {
    pub fn new(categories: Vec<u32>, g: u32) -> Result<Self> {
        if g == 0 {
            return Err(Error::invalid("category count g must be positive"));
        }
        if let Some((v, &c)) = categories
            .iter()
            .enumerate()
            .find(|(_, &c)| c == 0 || c > g)
        {
            return Err(Error::invalid(format!(
                "vertex {v} has category {c} outside [1, {g}]"
            )));
        }
        Ok(AttributeMap { categories, g })
    }

    pub fn g(&self) -> u32 {
        self.g
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    #[inline]
    pub fn get(&self, v: usize) -> u32 {
        self.categories[v]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.categories
    }

    pub(crate) fn swap(&mut self, u: usize, v: usize) {
        self.categories.swap(u, v);
    }

    /// Empirical category frequencies, counts indexed by `category - 1`.
    pub fn histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.g as usize];
        for &c in &self.categories {
            counts[c as usize - 1] += 1;
        }
        counts
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (v, c) in self.categories.iter().enumerate() {
            writeln!(w, "{v} {c}")?;
        }
        Ok(())
    }

    /// Reads `vertex category` lines. Vertices must cover `0..n` exactly;
    /// `g` defaults to the largest category seen.
    pub fn read<R: BufRead>(reader: R, g: Option<u32>) -> Result<Self> {
        let pairs = read_pairs(reader)?;
        let cats = dense_values(pairs)?;
        let cats: Vec<u32> = cats
            .into_iter()
            .map(|c| u32::try_from(c).map_err(|_| Error::invalid(format!("category {c} too large"))))
            .collect::<Result<_>>()?;
        let g = g.unwrap_or_else(|| cats.iter().copied().max().unwrap_or(0));
        AttributeMap::new(cats, g)
    }
}

/// Assignment of every vertex to a community, ids dense in `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    community: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Relabels arbitrary community labels to dense ids in order of first
    /// appearance.
    pub fn from_labels<T: Eq + std::hash::Hash + Copy>(labels: &[T]) -> Self {
        let mut map: HashMap<T, usize> = HashMap::new();
        let community = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Partition {
            community,
            count: map.len(),
        }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            community: (0..n).collect(),
            count: n,
        }
    }

    pub fn single_block(n: usize) -> Self {
        Partition {
            community: vec![0; n],
            count: usize::from(n > 0),
        }
    }

    pub fn len(&self) -> usize {
        self.community.len()
    }

    pub fn is_empty(&self) -> bool {
        self.community.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    #[inline]
    pub fn of(&self, v: usize) -> usize {
        self.community[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.community
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &c in &self.community {
            sizes[c] += 1;
        }
        sizes
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for (v, c) in self.community.iter().enumerate() {
            writeln!(w, "{v} {c}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let pairs = read_pairs(reader)?;
        Ok(Partition::from_labels(&dense_values(pairs)?))
    }
}

fn read_pairs<R: BufRead>(reader: R) -> Result<Vec<(usize, u64)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let mut it = t.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(Error::parse(i + 1, format!("expected `vertex value`, got {t:?}")));
        };
        let v = a
            .parse::<usize>()
            .map_err(|_| Error::parse(i + 1, format!("bad vertex id {a:?}")))?;
        let x = b
            .parse::<u64>()
            .map_err(|_| Error::parse(i + 1, format!("bad value {b:?}")))?;
        out.push((v, x));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

fn dense_values(pairs: Vec<(usize, u64)>) -> Result<Vec<u64>> {
    let n = pairs.len();
    let mut values = vec![None; n];
    for (v, x) in pairs {
        let slot = values
            .get_mut(v)
            .ok_or(Error::VertexOutOfRange { vertex: v, n })?;
        if slot.replace(x).is_some() {
            return Err(Error::invalid(format!("vertex {v} listed twice")));
        }
    }
    Ok(values.into_iter().map(|x| x.expect("n distinct ids below n")).collect())
}

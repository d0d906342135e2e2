//! Evaluation measures.
//!
//! Coalescing precision scores the merge log against the sealed identities.
//! Everything else compares structures across vertex sets, so reconstructed
//! vertices are first projected onto the underlying vertices they most likely
//! stand for (see [`project`]).

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::graph::{Graph, Partition};
use crate::reconstruct::CoalesceLog;
use crate::sampler::{SampleForest, SealedTruth};

/// Fraction of merge events that joined occurrences of a single underlying
/// vertex.
pub fn coalescing_precision(log: &CoalesceLog, truth: &SealedTruth) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::Undefined("coalescing precision"));
    }
    let correct = log
        .events
        .iter()
        .filter(|e| {
            let first = truth.vertex(e.a[0]);
            e.a.iter().chain(&e.b).all(|&o| truth.vertex(o) == first)
        })
        .count();
    Ok(correct as f64 / log.len() as f64)
}

/// Underlying vertex each reconstructed vertex is taken to represent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionMap {
    underlying: Vec<usize>,
    /// Members of the group that belong to the projected vertex.
    support: Vec<usize>,
    has_respondent: Vec<bool>,
}

impl ProjectionMap {
    pub fn len(&self) -> usize {
        self.underlying.len()
    }

    pub fn is_empty(&self) -> bool {
        self.underlying.is_empty()
    }

    #[inline]
    pub fn get(&self, v: usize) -> usize {
        self.underlying[v]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.underlying
    }

    /// One reconstructed vertex per projected underlying vertex: the one
    /// holding the respondent if any, else the best-supported, else the
    /// lowest id. Keys are sorted.
    pub fn representatives(&self) -> BTreeMap<usize, usize> {
        let mut best: BTreeMap<usize, usize> = BTreeMap::new();
        for v in 0..self.len() {
            let key = |x: usize| (self.has_respondent[x], self.support[x], std::cmp::Reverse(x));
            best.entry(self.underlying[v])
                .and_modify(|cur| {
                    if key(v) > key(*cur) {
                        *cur = v;
                    }
                })
                .or_insert(v);
        }
        best
    }

    /// Identity projection for a network whose vertices are already
    /// underlying vertices (such as the true network).
    pub fn identity_of(underlying: Vec<usize>) -> Self {
        let n = underlying.len();
        ProjectionMap {
            underlying,
            support: vec![1; n],
            has_respondent: vec![false; n],
        }
    }
}

/// Projects every reconstructed vertex (given as its member occurrences).
/// A group with a respondent maps to that respondent; a friend-only group
/// maps to its most frequent underlying id, ties to the smallest.
pub fn project(groups: &[Vec<usize>], forest: &SampleForest, truth: &SealedTruth) -> ProjectionMap {
    let mut underlying = Vec::with_capacity(groups.len());
    let mut support = Vec::with_capacity(groups.len());
    let mut has_respondent = Vec::with_capacity(groups.len());
    for members in groups {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &o in members {
            *counts.entry(truth.vertex(o)).or_insert(0) += 1;
        }
        let respondent = members
            .iter()
            .find(|&&o| forest.node(o).kind.is_respondent())
            .map(|&o| truth.vertex(o));
        let id = respondent.unwrap_or_else(|| {
            // BTreeMap iterates ascending, so max_by_key with reversed id
            // picks the smallest among the most frequent
            counts
                .iter()
                .max_by_key(|(&v, &c)| (c, std::cmp::Reverse(v)))
                .map(|(&v, _)| v)
                .expect("groups are non-empty")
        });
        underlying.push(id);
        support.push(counts[&id]);
        has_respondent.push(respondent.is_some());
    }
    ProjectionMap {
        underlying,
        support,
        has_respondent,
    }
}

fn pairs(k: usize) -> u64 {
    (k as u64) * (k as u64).saturating_sub(1) / 2
}

/// Among unordered pairs of reconstructed vertices sharing a reconstructed
/// community, the fraction whose projections share an underlying community.
/// Pairs projecting onto one underlying vertex are left out.
pub fn community_precision(
    recon: &Partition,
    underlying: &Partition,
    proj: &ProjectionMap,
) -> Result<f64> {
    if recon.len() != proj.len() {
        return Err(Error::MismatchedElements(recon.len(), proj.len()));
    }
    let mut by_vertex: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for v in 0..recon.len() {
        let u = proj.get(v);
        if u >= underlying.len() {
            return Err(Error::VertexOutOfRange {
                vertex: u,
                n: underlying.len(),
            });
        }
        *by_vertex.entry((recon.of(v), u)).or_insert(0) += 1;
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for v in 0..recon.len() {
        *joint.entry((recon.of(v), underlying.of(proj.get(v)))).or_insert(0) += 1;
    }
    let same_vertex: u64 = by_vertex.values().map(|&k| pairs(k)).sum();
    let denominator: u64 = recon.sizes().into_iter().map(pairs).sum::<u64>() - same_vertex;
    let numerator: u64 = joint.values().map(|&k| pairs(k)).sum::<u64>() - same_vertex;
    if denominator == 0 {
        return Err(Error::Undefined("community precision"));
    }
    Ok(numerator as f64 / denominator as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information `I(X;Y) / ((H(X) + H(Y)) / 2)`, natural
/// logs. Two zero-entropy partitions score 1; one alone scores 0.
pub fn nmi(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::MismatchedElements(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Undefined("NMI of empty partitions"));
    }
    let n = a.len() as f64;
    let ha = entropy(a.sizes().into_iter(), n);
    let hb = entropy(b.sizes().into_iter(), n);
    let (za, zb) = (ha.abs() < 1e-15, hb.abs() < 1e-15);
    if za && zb {
        return Ok(1.0);
    }
    if za || zb {
        return Ok(0.0);
    }
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for v in 0..a.len() {
        *joint.entry((a.of(v), b.of(v))).or_insert(0) += 1;
    }
    let hab = entropy(joint.values().copied(), n);
    let mi = ha + hb - hab;
    Ok((2.0 * mi / (ha + hb)).clamp(0.0, 1.0))
}

/// Restricts two projected partitions to the underlying vertices both cover,
/// returning them over that common set in ascending id order.
pub fn align_partitions(
    a: &Partition,
    a_proj: &ProjectionMap,
    b: &Partition,
    b_proj: &ProjectionMap,
) -> (Vec<usize>, Partition, Partition) {
    let ra = a_proj.representatives();
    let rb = b_proj.representatives();
    let common: Vec<usize> = ra.keys().filter(|k| rb.contains_key(k)).copied().collect();
    let la: Vec<usize> = common.iter().map(|k| a.of(ra[k])).collect();
    let lb: Vec<usize> = common.iter().map(|k| b.of(rb[k])).collect();
    (common, Partition::from_labels(&la), Partition::from_labels(&lb))
}

/// Ranks starting at 1; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| x[i].total_cmp(&x[j]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman's coefficient: Pearson correlation of average ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::MismatchedElements(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(Error::Undefined("Spearman correlation of fewer than two items"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        let (dx, dy) = (a - mean, b - mean);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("Spearman correlation with constant ranks"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexProperties {
    pub degree: usize,
    pub k_out: usize,
    /// `(degree − k_out) / degree`, 1 for isolated vertices.
    pub embeddedness: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Property {
    Degree,
    KOut,
    Embeddedness,
}

impl Property {
    pub const ALL: [Property; 3] = [Property::Degree, Property::KOut, Property::Embeddedness];

    pub fn name(&self) -> &'static str {
        match self {
            Property::Degree => "degree",
            Property::KOut => "k_out",
            Property::Embeddedness => "embeddedness",
        }
    }
}

impl VertexProperties {
    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::Degree => self.degree as f64,
            Property::KOut => self.k_out as f64,
            Property::Embeddedness => self.embeddedness,
        }
    }
}

pub fn vertex_properties(g: &Graph, p: &Partition) -> Vec<VertexProperties> {
    (0..g.n())
        .map(|v| {
            let degree = g.deg(v);
            let k_out = g.neighbors(v).iter().filter(|&&u| p.of(u) != p.of(v)).count();
            let embeddedness = if degree == 0 {
                1.0
            } else {
                (degree - k_out) as f64 / degree as f64
            };
            VertexProperties {
                degree,
                k_out,
                embeddedness,
            }
        })
        .collect()
}

/// A network, a partition of it, and where its vertices sit in the
/// underlying network.
#[derive(Debug, Clone, Copy)]
pub struct ProjectedView<'a> {
    pub graph: &'a Graph,
    pub partition: &'a Partition,
    pub projection: &'a ProjectionMap,
}

/// Spearman correlation of a property between two networks over the
/// underlying vertices that occur in both.
pub fn rank_correlation(a: ProjectedView<'_>, b: ProjectedView<'_>, property: Property) -> Result<f64> {
    let pa = vertex_properties(a.graph, a.partition);
    let pb = vertex_properties(b.graph, b.partition);
    let ra = a.projection.representatives();
    let rb = b.projection.representatives();
    let (x, y): (Vec<f64>, Vec<f64>) = ra
        .iter()
        .filter_map(|(k, &va)| rb.get(k).map(|&vb| (pa[va].get(property), pb[vb].get(property))))
        .unzip();
    spearman(&x, &y)
}

//! Synthetic benchmark networks with planted communities, and attribute
//! labeling.
//!
//! The generator follows the LFR recipe in simplified form: community sizes
//! and degrees are drawn from truncated power laws, each vertex's degree is
//! split into an internal and an external share according to the mixing
//! parameter, and stubs are wired by randomized configuration-model matching
//! that skips self-loops, repeated edges and (for external stubs) same-community
//! partners.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::{AttributeMap, Graph, Partition};
use crate::rng::{rng_from_seed, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LfrParams {
    pub n: usize,
    pub k_avg: f64,
    pub k_max: usize,
    pub mu: f64,
    /// Degree power-law exponent.
    pub tau1: f64,
    /// Community-size power-law exponent.
    pub tau2: f64,
    pub c_min: usize,
    pub c_max: usize,
    pub seed: u64,
}

impl LfrParams {
    /// The parameter set used throughout the precision experiments.
    pub fn benchmark_1460(mu: f64, seed: u64) -> Self {
        LfrParams {
            n: 1460,
            k_avg: 20.0,
            k_max: 30,
            mu,
            tau1: 3.0,
            tau2: 1.0,
            c_min: 10,
            c_max: 20,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self;
        if !(p.k_avg > 0.0 && p.k_avg <= p.k_max as f64 && p.k_max < p.n) {
            return Err(Error::invalid(format!(
                "need 0 < k_avg <= k_max < n, got k_avg={} k_max={} n={}",
                p.k_avg, p.k_max, p.n
            )));
        }
        if p.k_max < 2 {
            return Err(Error::invalid("k_max must be at least 2"));
        }
        if !(0.0..1.0).contains(&p.mu) {
            return Err(Error::invalid(format!("mu must be in [0, 1), got {}", p.mu)));
        }
        if p.c_min < 2 || p.c_min > p.c_max || p.c_max > p.n {
            return Err(Error::invalid(format!(
                "need 2 <= c_min <= c_max <= n, got c_min={} c_max={} n={}",
                p.c_min, p.c_max, p.n
            )));
        }
        if !(p.tau1.is_finite() && p.tau2.is_finite()) {
            return Err(Error::invalid("exponents must be finite"));
        }
        // some community count k must satisfy k*c_min <= n <= k*c_max
        let lo = p.n.div_ceil(p.c_max);
        let hi = p.n / p.c_min;
        if lo > hi {
            return Err(Error::Infeasible(format!(
                "no community count splits n={} into sizes in [{}, {}]",
                p.n, p.c_min, p.c_max
            )));
        }
        Ok(())
    }
}

/// Continuous power law `x^-exponent` truncated to `[lo, hi]`, sampled by
/// inverting its CDF.
#[derive(Debug, Clone, Copy)]
struct PowerLaw {
    lo: f64,
    hi: f64,
    exponent: f64,
}

impl PowerLaw {
    fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        let e = 1.0 - self.exponent;
        if e.abs() < 1e-12 {
            self.lo * (self.hi / self.lo).powf(u)
        } else {
            let a = self.lo.powf(e);
            let b = self.hi.powf(e);
            (a + u * (b - a)).powf(1.0 / e)
        }
    }

    /// Mean by Simpson quadrature; the closed forms need three special cases.
    fn mean(&self) -> f64 {
        const STEPS: usize = 2000;
        let h = (self.hi - self.lo) / STEPS as f64;
        if h == 0.0 {
            return self.lo;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..=STEPS {
            let x = self.lo + h * i as f64;
            let w = if i == 0 || i == STEPS {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let d = x.powf(-self.exponent);
            num += w * x * d;
            den += w * d;
        }
        num / den
    }
}

/// Lower cutoff in `[2, k_max]` whose truncated power law has mean `k_avg`.
fn degree_law(p: &LfrParams) -> PowerLaw {
    let hi = p.k_max as f64;
    let law = |lo: f64| PowerLaw {
        lo,
        hi,
        exponent: p.tau1,
    };
    if law(2.0).mean() >= p.k_avg {
        return law(2.0);
    }
    let (mut a, mut b) = (2.0, hi);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if law(mid).mean() < p.k_avg {
            a = mid;
        } else {
            b = mid;
        }
    }
    law(0.5 * (a + b))
}

fn community_sizes(p: &LfrParams, rng: &mut Rng) -> Vec<usize> {
    let law = PowerLaw {
        lo: p.c_min as f64,
        hi: p.c_max as f64 + 1.0,
        exponent: p.tau2,
    };
    let mut sizes = Vec::new();
    let mut total = 0;
    while total < p.n {
        let s = (law.sample(rng).floor() as usize).clamp(p.c_min, p.c_max);
        sizes.push(s);
        total += s;
    }
    // feasibility was checked, so the count can be moved into range
    while sizes.len() * p.c_min > p.n {
        sizes.pop();
    }
    while sizes.len() * p.c_max < p.n {
        sizes.push(p.c_min);
    }
    let mut total: usize = sizes.iter().sum();
    let mut i = 0;
    while total != p.n {
        let k = sizes.len();
        let s = &mut sizes[i % k];
        if total > p.n && *s > p.c_min {
            *s -= 1;
            total -= 1;
        } else if total < p.n && *s < p.c_max {
            *s += 1;
            total += 1;
        }
        i += 1;
    }
    sizes
}

/// Rounds `x` up with probability equal to its fractional part.
fn stochastic_round(x: f64, rng: &mut Rng) -> usize {
    let f = x.floor();
    let up = rng.random::<f64>() < x - f;
    f as usize + usize::from(up)
}

/// Randomized stub matching. Each stub is paired with a random remaining stub
/// whose owner passes `allowed` and is not already a neighbor; stubs that
/// find no partner within a bounded number of tries are discarded.
fn match_stubs(
    mut stubs: Vec<usize>,
    adj: &mut [Vec<usize>],
    allowed: impl Fn(usize, usize) -> bool,
    rng: &mut Rng,
) {
    const TRIES: usize = 64;
    stubs.shuffle(rng);
    while let Some(u) = stubs.pop() {
        let len = stubs.len();
        if len == 0 {
            break;
        }
        let mut found = None;
        let attempts = TRIES.min(len * 2);
        for _ in 0..attempts {
            let j = rng.random_range(0..len);
            let v = stubs[j];
            if v != u && allowed(u, v) && !adj[u].contains(&v) {
                found = Some(j);
                break;
            }
        }
        if found.is_none() && len <= TRIES {
            found = stubs
                .iter()
                .position(|&v| v != u && allowed(u, v) && !adj[u].contains(&v));
        }
        if let Some(j) = found {
            let v = stubs.swap_remove(j);
            adj[u].push(v);
            adj[v].push(u);
        }
    }
}

/// Generates a community-structured graph and its planted partition.
///
/// Deterministic in `params.seed`. A vertex whose internal degree would not
/// fit inside its community is given the largest internal degree that fits,
/// and its external degree is scaled down with it so that its own mixing
/// fraction stays at `mu`.
pub fn generate_lfr_like(params: &LfrParams) -> Result<(Graph, Partition)> {
    params.validate()?;
    let p = params;
    let mut rng = rng_from_seed(p.seed);
    let sizes = community_sizes(p, &mut rng);

    let law = degree_law(p);
    let mut degrees: Vec<usize> = (0..p.n)
        .map(|_| (law.sample(&mut rng).round() as usize).clamp(2, p.k_max))
        .collect();
    degrees.sort_unstable_by(|a, b| b.cmp(a));

    let mut internal_want: Vec<usize> = degrees
        .iter()
        .map(|&k| stochastic_round((1.0 - p.mu) * k as f64, &mut rng))
        .collect();

    // Place high internal degrees first, preferring communities big enough to
    // hold them; pick among fitting communities weighted by free slots.
    let mut free = sizes.clone();
    let mut community = vec![usize::MAX; p.n];
    let mut order: Vec<usize> = (0..p.n).collect();
    order.sort_by_key(|&v| std::cmp::Reverse(internal_want[v]));
    for &v in &order {
        let need = internal_want[v];
        let fitting: Vec<usize> = (0..sizes.len())
            .filter(|&c| free[c] > 0 && sizes[c] > need)
            .collect();
        let c = if fitting.is_empty() {
            (0..sizes.len())
                .filter(|&c| free[c] > 0)
                .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
                .expect("community slots sum to n")
        } else {
            let weights: Vec<usize> = fitting.iter().map(|&c| free[c]).collect();
            let dist = WeightedIndex::new(&weights).expect("positive weights");
            fitting[dist.sample(&mut rng)]
        };
        free[c] -= 1;
        community[v] = c;
    }

    let mut external_want = vec![0usize; p.n];
    for v in 0..p.n {
        let cap = sizes[community[v]] - 1;
        if internal_want[v] > cap {
            internal_want[v] = cap;
            let scaled = cap as f64 * p.mu / (1.0 - p.mu);
            external_want[v] = stochastic_round(scaled, &mut rng);
        } else {
            external_want[v] = degrees[v] - internal_want[v];
        }
    }

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for v in 0..p.n {
        members[community[v]].push(v);
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); p.n];
    for group in &members {
        let stubs: Vec<usize> = group
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, internal_want[v]))
            .collect();
        match_stubs(stubs, &mut adj, |_, _| true, &mut rng);
    }
    let stubs: Vec<usize> = (0..p.n)
        .flat_map(|v| std::iter::repeat_n(v, external_want[v]))
        .collect();
    match_stubs(stubs, &mut adj, |u, v| community[u] != community[v], &mut rng);

    // vertex ids were assigned in degree order; hide that ordering
    let mut perm: Vec<usize> = (0..p.n).collect();
    perm.shuffle(&mut rng);
    let edges = adj.iter().enumerate().flat_map(|(u, l)| {
        let perm = &perm;
        l.iter()
            .filter(move |&&v| v > u)
            .map(move |&v| (perm[u], perm[v]))
    });
    let graph = Graph::from_edges_lossy(p.n, edges);
    let mut labels = vec![0; p.n];
    for v in 0..p.n {
        labels[perm[v]] = community[v];
    }
    Ok((graph, Partition::from_labels(&labels)))
}

/// Mean over non-isolated vertices of the fraction of edges leaving the
/// vertex's community.
pub fn realized_mixing(g: &Graph, p: &Partition) -> f64 {
    let (mut sum, mut count) = (0.0, 0usize);
    for v in 0..g.n() {
        let d = g.deg(v);
        if d == 0 {
            continue;
        }
        let cross = g
            .neighbors(v)
            .iter()
            .filter(|&&u| p.of(u) != p.of(v))
            .count();
        sum += cross as f64 / d as f64;
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Population frequency of each attribute category; `p[k - 1]` is the
/// probability of category `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution {
    p: Vec<f64>,
}

impl CategoryDistribution {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::invalid("distribution needs at least one category"));
        }
        if p.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(CategoryDistribution { p })
    }

    fn normalized(w: Vec<f64>) -> Self {
        let total: f64 = w.iter().sum();
        CategoryDistribution {
            p: w.into_iter().map(|x| x / total).collect(),
        }
    }

    pub fn uniform(g: u32) -> Self {
        assert!(g > 0, "g must be positive");
        CategoryDistribution {
            p: vec![1.0 / f64::from(g); g as usize],
        }
    }

    /// Normal density centred on `(g + 1) / 2` with sigma `g / 6`, evaluated
    /// at each category and renormalized over `1..=g`.
    pub fn normal(g: u32) -> Self {
        assert!(g > 0, "g must be positive");
        let centre = (f64::from(g) + 1.0) / 2.0;
        let sigma = f64::from(g) / 6.0;
        let w = (1..=g)
            .map(|k| {
                let z = (f64::from(k) - centre) / sigma;
                (-0.5 * z * z).exp()
            })
            .collect();
        Self::normalized(w)
    }

    /// Empirical category frequencies of a labeled population.
    pub fn empirical(a: &AttributeMap) -> Self {
        Self::normalized(a.histogram().into_iter().map(|c| c as f64).collect())
    }

    pub fn g(&self) -> u32 {
        self.p.len() as u32
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    #[inline]
    pub fn prob(&self, category: u32) -> f64 {
        self.p[category as usize - 1]
    }
}

/// Draws each vertex's category independently from `dist`.
pub fn assign_attributes(g: &Graph, dist: &CategoryDistribution, seed: u64) -> AttributeMap {
    let mut rng = rng_from_seed(seed);
    let sampler = WeightedIndex::new(dist.probs()).expect("valid distribution");
    let cats = (0..g.n())
        .map(|_| sampler.sample(&mut rng) as u32 + 1)
        .collect();
    AttributeMap::new(cats, dist.g()).expect("sampled categories are in range")
}

/// Sum over edges of `|a_u - a_v|`.
pub fn edge_discrepancy(g: &Graph, a: &AttributeMap) -> u64 {
    g.edges()
        .map(|(u, v)| u64::from(a.get(u).abs_diff(a.get(v))))
        .sum()
}

fn local_discrepancy(g: &Graph, a: &AttributeMap, v: usize, cat: u32, skip: usize) -> u64 {
    g.neighbors(v)
        .iter()
        .filter(|&&w| w != skip)
        .map(|&w| u64::from(cat.abs_diff(a.get(w))))
        .sum()
}

/// Proposes `attempts` swaps of two random vertices' categories and keeps a
/// swap iff it does not increase [`edge_discrepancy`].
pub fn make_assortative(g: &Graph, a: &AttributeMap, attempts: usize, seed: u64) -> AttributeMap {
    let mut out = a.clone();
    let n = g.n();
    if n < 2 {
        return out;
    }
    let mut rng = rng_from_seed(seed);
    let mut total = edge_discrepancy(g, &out);
    for _ in 0..attempts {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        let (au, av) = (out.get(u), out.get(v));
        if u == v || au == av {
            continue;
        }
        // an edge u-v keeps its discrepancy under the swap, so skip it
        let before = local_discrepancy(g, &out, u, au, v) + local_discrepancy(g, &out, v, av, u);
        let after = local_discrepancy(g, &out, u, av, v) + local_discrepancy(g, &out, v, au, u);
        if after <= before {
            out.swap(u, v);
            total = total - before + after;
        }
    }
    debug_assert_eq!(total, edge_discrepancy(g, &out));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_params(mu: f64, seed: u64) -> LfrParams {
        LfrParams {
            n: 400,
            k_avg: 10.0,
            k_max: 20,
            mu,
            tau1: 2.5,
            tau2: 1.5,
            c_min: 20,
            c_max: 50,
            seed,
        }
    }

    #[test]
    fn generated_graph_respects_contract() {
        let p = small_params(0.2, 3);
        let (g, part) = generate_lfr_like(&p).unwrap();
        assert_eq!(g.n(), p.n);
        for s in part.sizes() {
            assert!((p.c_min..=p.c_max).contains(&s), "size {s}");
        }
        let degs = g.degrees();
        assert!(degs.iter().all(|&d| d <= p.k_max));
        let mean = degs.iter().sum::<usize>() as f64 / p.n as f64;
        assert!((mean - p.k_avg).abs() <= 0.15 * p.k_avg, "mean degree {mean}");
        for (u, v) in g.edges() {
            assert!(g.has_edge(v, u) && u != v);
        }
        let mix = realized_mixing(&g, &part);
        assert!((mix - 0.2).abs() <= 0.05, "mixing {mix}");
    }

    #[test]
    fn zero_mixing_means_no_cross_edges() {
        let (g, part) = generate_lfr_like(&small_params(0.0, 11)).unwrap();
        assert!(realized_mixing(&g, &part) <= 0.05);
    }

    #[test]
    fn same_seed_same_graph_different_seed_different_edges() {
        let a = generate_lfr_like(&small_params(0.3, 1)).unwrap();
        let b = generate_lfr_like(&small_params(0.3, 1)).unwrap();
        let c = generate_lfr_like(&small_params(0.3, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.0, c.0);
        let mean = |g: &Graph| 2.0 * g.m() as f64 / g.n() as f64;
        assert!((mean(&a.0) - mean(&c.0)).abs() < 0.1 * mean(&a.0));
    }

    #[test]
    fn infeasible_sizes_rejected() {
        let mut p = small_params(0.1, 0);
        p.n = 45;
        p.k_max = 10;
        p.c_min = 20;
        p.c_max = 22;
        assert!(matches!(generate_lfr_like(&p), Err(Error::Infeasible(_))));
        p.mu = 1.0;
        assert!(generate_lfr_like(&p).is_err());
    }

    #[test]
    fn realized_mixing_hand_cases() {
        let c4 = Graph::from_edges_lossy(4, [(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert_eq!(realized_mixing(&c4, &Partition::from_labels(&[0, 0, 1, 1])), 0.5);
        assert_eq!(realized_mixing(&c4, &Partition::single_block(4)), 0.0);
        let k33 = Graph::from_edges_lossy(6, (0..3).flat_map(|u| (3..6).map(move |v| (u, v))));
        let parts = Partition::from_labels(&[0, 0, 0, 1, 1, 1]);
        assert_eq!(realized_mixing(&k33, &parts), 1.0);
    }

    #[test]
    fn power_law_mean_matches_closed_form() {
        // exponent 3 on [a, b]: mean = 2 (a^-1 - b^-1) / (a^-2 - b^-2)
        let law = PowerLaw {
            lo: 4.0,
            hi: 30.0,
            exponent: 3.0,
        };
        let exact = 2.0 * (1.0 / 4.0 - 1.0 / 30.0) / (1.0 / 16.0 - 1.0 / 900.0);
        assert!((law.mean() - exact).abs() < 1e-6);
    }

    #[test]
    fn uniform_frequencies_within_binomial_bounds() {
        let n = 50_000;
        let g = Graph::empty(n);
        let a = assign_attributes(&g, &CategoryDistribution::uniform(50), 9);
        let p = 1.0 / 50.0;
        let sd = (n as f64 * p * (1.0 - p)).sqrt();
        for c in a.histogram() {
            assert!((c as f64 - n as f64 * p).abs() <= 5.0 * sd, "count {c}");
        }
    }

    #[test]
    fn single_category_and_normal_shape() {
        let g = Graph::empty(20_000);
        let one = assign_attributes(&g, &CategoryDistribution::uniform(1), 1);
        assert!(one.as_slice().iter().all(|&c| c == 1));

        let a = assign_attributes(&g, &CategoryDistribution::normal(50), 2);
        let h = a.histogram();
        let middle = h[24].min(h[25]);
        let extreme = h[0].max(h[49]);
        assert!(middle > extreme, "middle {middle} extreme {extreme}");
        assert!(CategoryDistribution::new(CategoryDistribution::normal(50).probs().to_vec()).is_ok());
    }

    #[test]
    fn distribution_validation() {
        assert!(CategoryDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CategoryDistribution::new(vec![-0.5, 1.5]).is_err());
        assert!(CategoryDistribution::new(vec![]).is_err());
    }

    #[test]
    fn assortative_swaps() {
        let path = Graph::from_edges_lossy(3, [(0, 1), (1, 2)]);
        let a = AttributeMap::new(vec![1, 3, 1], 3).unwrap();
        assert_eq!(make_assortative(&path, &a, 0, 5), a);
        assert_eq!(edge_discrepancy(&path, &a), 4);
        // all arrangements of {1,1,3}: (1,3,1) -> 4, (3,1,1)/(1,1,3) -> 2
        let b = make_assortative(&path, &a, 200, 5);
        assert_eq!(edge_discrepancy(&path, &b), 2);
        let mut x = b.as_slice().to_vec();
        x.sort_unstable();
        assert_eq!(x, vec![1, 1, 3]);
    }

    #[test]
    fn assortative_preserves_multiset_and_improves() {
        let (g, _) = generate_lfr_like(&small_params(0.2, 4)).unwrap();
        let a = assign_attributes(&g, &CategoryDistribution::normal(30), 4);
        let b = make_assortative(&g, &a, 20 * g.n(), 4);
        assert_eq!(a.histogram(), b.histogram());
        assert!(edge_discrepancy(&g, &b) < edge_discrepancy(&g, &a));
    }
}

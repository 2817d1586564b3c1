//! Instance families: random linear and separable settings, random grids,
//! the two-feature family and the clique hardness construction.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{CellGrid, DelegationSetting, ModelError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeneratorError {
    #[error("feature counts dH={dh}, dM={dm} outside 1 ≤ dH, dM and dH + dM ≤ {max}")]
    FeatureRange { dh: usize, dm: usize, max: usize },
    #[error("expected {expected} coefficients, got {got}")]
    Coefficients { expected: usize, got: usize },
    #[error("invalid graph: {0}")]
    Graph(String),
    #[error("graph is not regular: {0}")]
    NotRegular(String),
    #[error("graph has {n} nodes, more than the limit of {max}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Largest `dH + dM` accepted by the linear generators.
pub const MAX_LINEAR_FEATURES: usize = 12;

/// `f*(x) = v·x` on uniform states with the human on features `1..=dh` and
/// the machine on the remaining `dm`.
pub fn linear_setting(dh: usize, dm: usize, v: &[f64]) -> Result<DelegationSetting, GeneratorError> {
    if dh == 0 || dm == 0 || dh + dm > MAX_LINEAR_FEATURES {
        return Err(GeneratorError::FeatureRange {
            dh,
            dm,
            max: MAX_LINEAR_FEATURES,
        });
    }
    let d = dh + dm;
    if v.len() != d {
        return Err(GeneratorError::Coefficients {
            expected: d,
            got: v.len(),
        });
    }
    let n = 1usize << d;
    let actions = (0..n)
        .map(|x| (0..d).filter(|k| x >> k & 1 == 1).map(|k| v[k]).sum())
        .collect();
    let human: Vec<usize> = (1..=dh).collect();
    let machine: Vec<usize> = (dh + 1..=d).collect();
    Ok(DelegationSetting::new(d, &human, &machine, vec![1.0 / n as f64; n], actions)?)
}

/// [`linear_setting`] with `v ~ Normal(0, I)`.
pub fn random_linear_setting<R: Rng + ?Sized>(
    dh: usize,
    dm: usize,
    rng: &mut R,
) -> Result<DelegationSetting, GeneratorError> {
    let v: Vec<f64> = (0..dh + dm).map(|_| rng.sample(StandardNormal)).collect();
    linear_setting(dh, dm, &v)
}

/// The setting whose grid is `[[0, 1], [a, b]]` with uniform masses.
pub fn two_feature_setting(a: f64, b: f64) -> DelegationSetting {
    // State index x1 + 2·x2; the human sees x1, the machine x2.
    DelegationSetting::new(2, &[1], &[2], vec![0.25; 4], vec![0.0, a, 1.0, b])
        .expect("two-feature settings are valid for finite a, b")
}

/// Random probability vector of length `n`, entries drawn uniformly from
/// `[0.05, 1)` and normalized.
fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Random setting on `d` features: random observation sets, random
/// positive probabilities and normal actions.
pub fn random_setting<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<DelegationSetting, GeneratorError> {
    let human: Vec<usize> = (1..=d).filter(|_| rng.random_bool(0.5)).collect();
    let machine: Vec<usize> = (1..=d).filter(|_| rng.random_bool(0.5)).collect();
    let n = 1usize << d;
    let probs = random_simplex(n, rng);
    let actions = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    Ok(DelegationSetting::new(d, &human, &machine, probs, actions)?)
}

/// Grid with random positive masses and normal values.
pub fn random_grid<R: Rng + ?Sized>(h: usize, m: usize, rng: &mut R) -> CellGrid {
    let flat = random_simplex(h * m, rng);
    let mass = flat.chunks(m).map(<[f64]>::to_vec).collect();
    let value = (0..h)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    CellGrid::new(mass, value, 0.0).expect("valid random grid")
}

/// Grid with uniform masses `1/(h·m)` and normal values.
pub fn random_uniform_grid<R: Rng + ?Sized>(h: usize, m: usize, rng: &mut R) -> CellGrid {
    let mass = vec![vec![1.0 / (h * m) as f64; m]; h];
    let value = (0..h)
        .map(|_| (0..m).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    CellGrid::new(mass, value, 0.0).expect("valid random grid")
}

/// Feature roles drawn by [`random_separable_setting`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeparableShape {
    pub shared: usize,
    pub human_only: usize,
    pub machine_only: usize,
    pub unobserved: usize,
}

/// Random separable setting: `f* = u(human view) + w(machine view) + z(rest)`
/// with the human-only, machine-only and unobserved features independent
/// given the shared ones.
pub fn random_separable_setting<R: Rng + ?Sized>(
    shape: &SeparableShape,
    rng: &mut R,
) -> Result<DelegationSetting, GeneratorError> {
    let d = shape.shared + shape.human_only + shape.machine_only + shape.unobserved;
    if d == 0 || d > crate::model::MAX_FEATURES {
        return Err(GeneratorError::Model(ModelError::FeatureCount(d)));
    }
    let mut features: Vec<usize> = (1..=d).collect();
    features.shuffle(rng);
    let (shared, rest) = features.split_at(shape.shared);
    let (human_only, rest) = rest.split_at(shape.human_only);
    let (machine_only, unobserved) = rest.split_at(shape.machine_only);
    let mut human: Vec<usize> = shared.iter().chain(human_only).copied().collect();
    let mut machine: Vec<usize> = shared.iter().chain(machine_only).copied().collect();
    human.sort_unstable();
    machine.sort_unstable();

    let bits = |x: usize, set: &[usize]| -> usize {
        set.iter()
            .enumerate()
            .fold(0, |acc, (t, &f)| acc | ((x >> (f - 1)) & 1) << t)
    };
    let p_shared = random_simplex(1 << shared.len(), rng);
    let p_human: Vec<Vec<f64>> = (0..1 << shared.len())
        .map(|_| random_simplex(1 << human_only.len(), rng))
        .collect();
    let p_machine: Vec<Vec<f64>> = (0..1 << shared.len())
        .map(|_| random_simplex(1 << machine_only.len(), rng))
        .collect();
    let p_unobserved = random_simplex(1 << unobserved.len(), rng);
    let u: Vec<f64> = (0..1 << human.len()).map(|_| rng.sample(StandardNormal)).collect();
    let w: Vec<f64> = (0..1 << machine.len()).map(|_| rng.sample(StandardNormal)).collect();
    let z: Vec<f64> = (0..1 << unobserved.len()).map(|_| rng.sample(StandardNormal)).collect();

    let n = 1usize << d;
    let mut probs = Vec::with_capacity(n);
    let mut actions = Vec::with_capacity(n);
    for x in 0..n {
        let s = bits(x, shared);
        probs.push(
            p_shared[s]
                * p_human[s][bits(x, human_only)]
                * p_machine[s][bits(x, machine_only)]
                * p_unobserved[bits(x, unobserved)],
        );
        actions.push(u[bits(x, &human)] + w[bits(x, &machine)] + z[bits(x, unobserved)]);
    }
    Ok(DelegationSetting::new(d, &human, &machine, probs, actions)?)
}

/// Undirected graph on nodes `0..n`, optionally with edge weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    weights: Option<Vec<f64>>,
}

impl WeightedGraph {
    /// Edges are stored as `(min, max)` pairs in the given order.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GeneratorError> {
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(GeneratorError::Graph(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if u == v {
                return Err(GeneratorError::Graph(format!("self-loop at node {u}")));
            }
            let e = (u.min(v), u.max(v));
            if !seen.insert(e) {
                return Err(GeneratorError::Graph(format!("duplicate edge ({u}, {v})")));
            }
            out.push(e);
        }
        Ok(Self {
            n,
            edges: out,
            weights: None,
        })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self, GeneratorError> {
        if weights.len() != self.edges.len() {
            return Err(GeneratorError::Graph(format!(
                "{} weights for {} edges",
                weights.len(),
                self.edges.len()
            )));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn complete(n: usize) -> Self {
        let edges: Vec<_> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::new(n, &edges).expect("simple graph")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a cycle needs at least 3 nodes");
        let edges: Vec<_> = (0..n).map(|u| (u, (u + 1) % n)).collect();
        Self::new(n, &edges).expect("simple graph")
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((i + 5, (i + 2) % 5 + 5));
        }
        Self::new(10, &edges).expect("simple graph")
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// The common degree when every node has the same one.
    pub fn regular_degree(&self) -> Option<usize> {
        let deg = self.degrees();
        let first = *deg.first()?;
        deg.iter().all(|&d| d == first).then_some(first)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Total weight of edges inside `nodes` divided by `|nodes|`; unweighted
    /// edges count 1.
    pub fn density(&self, nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let inside: HashSet<usize> = nodes.iter().copied().collect();
        let total: f64 = self
            .edges
            .iter()
            .enumerate()
            .filter(|(_, (u, v))| inside.contains(u) && inside.contains(v))
            .map(|(k, _)| self.weights.as_ref().map_or(1.0, |w| w[k]))
            .sum();
        total / nodes.len() as f64
    }
}

/// Signed weights on the complete graph over the nodes of a `d`-regular
/// graph: `1/(d(1 + n − d))` on edges and `−1/(1 + n − d)` on non-edges.
pub fn neg_regular_dsd_weights(graph: &WeightedGraph) -> Result<WeightedGraph, GeneratorError> {
    let n = graph.node_count();
    if n < 2 {
        return Err(GeneratorError::Graph("need at least 2 nodes".into()));
    }
    let d = match graph.regular_degree() {
        Some(d) if d >= 1 => d,
        Some(_) => return Err(GeneratorError::NotRegular("degree 0".into())),
        None => {
            return Err(GeneratorError::NotRegular(format!(
                "degrees {:?}",
                graph.degrees()
            )))
        }
    };
    let scale = 1.0 / (1 + n - d) as f64;
    let complete = WeightedGraph::complete(n);
    let weights = complete
        .edges()
        .iter()
        .map(|&(u, v)| {
            if graph.has_edge(u, v) {
                scale / d as f64
            } else {
                -scale
            }
        })
        .collect();
    complete.with_weights(weights)
}

/// Grid with one row per node and two columns per weighted pair, holding
/// `±√(|w|/2)` so that row variances and column sums encode the weights.
pub fn graph_to_instance(graph: &WeightedGraph) -> Result<CellGrid, GeneratorError> {
    let weights = graph
        .weights()
        .ok_or_else(|| GeneratorError::Graph("graph has no weights".into()))?;
    let h = graph.node_count();
    let m = 2 * graph.edges().len();
    if h == 0 || m == 0 {
        return Err(GeneratorError::Graph("graph has no weighted pairs".into()));
    }
    let mut value = vec![vec![0.0; m]; h];
    for (p, (&(u, v), &w)) in graph.edges().iter().zip(weights).enumerate() {
        let x = (w.abs() / 2.0).sqrt();
        let (xu, xv) = if w > 0.0 { (x, x) } else { (x, -x) };
        value[u][2 * p] = xu;
        value[v][2 * p] = xv;
        value[u][2 * p + 1] = -xu;
        value[v][2 * p + 1] = -xv;
    }
    let mass = vec![vec![1.0 / (h * m) as f64; m]; h];
    Ok(CellGrid::new(mass, value, 0.0)?)
}

pub const MAX_CLIQUE_NODES: usize = 20;

/// Maximum clique by exhaustive enumeration; among equal sizes the
/// lexicographically smallest node list.
pub fn max_clique_brute(graph: &WeightedGraph) -> Result<(usize, Vec<usize>), GeneratorError> {
    let n = graph.node_count();
    if n > MAX_CLIQUE_NODES {
        return Err(GeneratorError::TooLarge {
            n,
            max: MAX_CLIQUE_NODES,
        });
    }
    let mut adj = vec![0u32; n];
    for &(u, v) in graph.edges() {
        adj[u] |= 1 << v;
        adj[v] |= 1 << u;
    }
    let nodes = |mask: u32| -> Vec<usize> { (0..n).filter(|&i| mask >> i & 1 == 1).collect() };
    let mut best: (usize, Vec<usize>) = (0, Vec::new());
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size < best.0 {
            continue;
        }
        let is_clique = (0..n)
            .filter(|&i| mask >> i & 1 == 1)
            .all(|i| (adj[i] | 1 << i) & mask == mask);
        if !is_clique {
            continue;
        }
        let members = nodes(mask);
        if size > best.0 || members < best.1 {
            best = (size, members);
        }
    }
    Ok(best)
}

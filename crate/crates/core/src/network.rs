//! Graph representation of the recurrent layer and the pure-graph algorithms
//! on it: small-world generation, betweenness centrality, node removal,
//! degree statistics, and delocalizing edge addition.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-neuron parameters: membrane time constant (ms) and intrinsic
/// leak/excitability, the diagonal term of the linearized dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronParams {
    pub tau_m: f64,
    pub leak: f64,
}

/// Weighted directed graph of neurons with signed synapses.
///
/// Invariants enforced by every constructor and mutator:
/// - no self-loops (the diagonal lives in `NeuronParams::leak`),
/// - every edge endpoint is alive,
/// - edge weights are finite and nonzero (zero weight = absent edge).
///
/// Values are immutable after construction; operations return new networks.
/// Neuron indices are stable: pruning marks nodes dead without renumbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    n: usize,
    /// (src, dst) -> weight. BTreeMap keeps edge iteration deterministic.
    edges: BTreeMap<(usize, usize), f64>,
    params: Vec<NeuronParams>,
    alive: Vec<bool>,
}

/// Per-node nonnegative centrality scores, indexed by neuron id.
/// Dead nodes score 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralityMap {
    scores: Vec<f64>,
}

impl CentralityMap {
    pub fn get(&self, node: usize) -> f64 {
        self.scores[node]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

/// Graph used for shortest-path counting: directed skeleton as stored, or
/// the symmetrized skeleton.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentralityMode {
    Directed,
    Symmetrized,
}

impl Network {
    /// Build a network from parts, validating all invariants.
    pub fn new(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
        params: Vec<NeuronParams>,
        alive: Vec<bool>,
    ) -> Result<Self> {
        if params.len() != n || alive.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "n={} but {} param rows and {} alive flags",
                n,
                params.len(),
                alive.len()
            )));
        }
        for (i, p) in params.iter().enumerate() {
            if !(p.tau_m > 0.0) || !p.tau_m.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "tau_m[{i}] = {} must be positive and finite",
                    p.tau_m
                )));
            }
            if !p.leak.is_finite() {
                return Err(Error::InvalidParameter(format!("leak[{i}] is not finite")));
            }
        }
        let mut net = Network {
            n,
            edges: BTreeMap::new(),
            params,
            alive,
        };
        for (src, dst, w) in edges {
            net.insert_edge(src, dst, w)?;
        }
        Ok(net)
    }

    /// Empty network of `n` alive neurons with uniform parameters.
    pub fn with_uniform_params(n: usize, tau_m: f64, leak: f64) -> Result<Self> {
        Network::new(
            n,
            std::iter::empty(),
            vec![NeuronParams { tau_m, leak }; n],
            vec![true; n],
        )
    }

    fn insert_edge(&mut self, src: usize, dst: usize, w: f64) -> Result<()> {
        if src >= self.n || dst >= self.n {
            return Err(Error::UnknownNode {
                node: src.max(dst),
            });
        }
        if src == dst {
            return Err(Error::InvalidParameter(format!(
                "self-loop on node {src}; diagonal terms belong in neuron leak"
            )));
        }
        if !self.alive[src] || !self.alive[dst] {
            return Err(Error::InvalidParameter(format!(
                "edge ({src},{dst}) touches a dead neuron"
            )));
        }
        if !w.is_finite() || w == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "edge ({src},{dst}) weight {w} must be finite and nonzero"
            )));
        }
        self.edges.insert((src, dst), w);
        Ok(())
    }

    pub fn n_total(&self) -> usize {
        self.n
    }

    pub fn n_alive(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub fn is_alive(&self, node: usize) -> bool {
        node < self.n && self.alive[node]
    }

    /// Alive neuron ids in ascending order.
    pub fn alive_nodes(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| self.alive[i]).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges as (src, dst, weight), ascending by (src, dst).
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.edges.iter().map(|(&(s, d), &w)| (s, d, w))
    }

    pub fn has_edge(&self, src: usize, dst: usize) -> bool {
        self.edges.contains_key(&(src, dst))
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        self.edges.get(&(src, dst)).copied()
    }

    pub fn params(&self, node: usize) -> NeuronParams {
        self.params[node]
    }

    pub fn tau_m(&self, node: usize) -> f64 {
        self.params[node].tau_m
    }

    pub fn leak(&self, node: usize) -> f64 {
        self.params[node].leak
    }

    /// Out-neighbor lists for alive nodes, indexed by neuron id.
    pub fn out_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (&(s, d), _) in &self.edges {
            adj[s].push(d);
        }
        adj
    }

    /// Undirected neighbor sets (union of in- and out-neighbors).
    pub fn undirected_adjacency(&self) -> Vec<BTreeSet<usize>> {
        let mut adj = vec![BTreeSet::new(); self.n];
        for (&(s, d), _) in &self.edges {
            adj[s].insert(d);
            adj[d].insert(s);
        }
        adj
    }

    /// Total degree (in + out) per node. Dead nodes have degree 0.
    pub fn total_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for (&(s, d), _) in &self.edges {
            deg[s] += 1;
            deg[d] += 1;
        }
        deg
    }

    /// Dense weight matrix over alive neurons in compacted index space.
    ///
    /// Returns `(W, ids)` where `W[(post, pre)]` is the weight of the synapse
    /// `ids[pre] -> ids[post]` (rows receive, columns send).
    pub fn weight_matrix(&self) -> (DMatrix<f64>, Vec<usize>) {
        let ids = self.alive_nodes();
        let mut index = vec![usize::MAX; self.n];
        for (c, &id) in ids.iter().enumerate() {
            index[id] = c;
        }
        let m = ids.len();
        let mut w = DMatrix::zeros(m, m);
        for (&(s, d), &wt) in &self.edges {
            w[(index[d], index[s])] = wt;
        }
        (w, ids)
    }

    /// Copy of this network with per-neuron membrane time constants drawn
    /// from a gamma distribution (shape, scale) under `seed`. Leak terms are
    /// unchanged.
    pub fn resample_timescales(&self, shape: f64, scale: f64, seed: u64) -> Result<Network> {
        if !(shape > 0.0) || !(scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "gamma shape {shape} and scale {scale} must be positive"
            )));
        }
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let gamma = rand_distr::Gamma::new(shape, scale)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut net = self.clone();
        for p in &mut net.params {
            // Clamp away from zero so exp(-dt/tau) and dt/tau stay sane.
            p.tau_m = rng.sample::<f64, _>(gamma).max(1e-3);
        }
        Ok(net)
    }

    /// Copy with the given per-neuron leak values (length = n_total).
    pub fn with_leaks(&self, leaks: &[f64]) -> Result<Network> {
        if leaks.len() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "{} leak values for {} neurons",
                leaks.len(),
                self.n
            )));
        }
        let mut net = self.clone();
        for (p, &l) in net.params.iter_mut().zip(leaks) {
            if !l.is_finite() {
                return Err(Error::NonFiniteInput("leak".into()));
            }
            p.leak = l;
        }
        Ok(net)
    }

    /// Copy with the edge set replaced by `edges` (same neurons, params,
    /// alive flags). All edge invariants re-validated.
    pub fn with_edges(&self, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Network> {
        let mut net = self.clone();
        net.edges.clear();
        for (s, d, w) in edges {
            net.insert_edge(s, d, w)?;
        }
        Ok(net)
    }
}

/// Directed Watts-Strogatz small-world generator.
///
/// Each node starts with out-edges to its `k` nearest ring neighbors (`k/2`
/// on each side); every edge is rewired to a uniform random target with
/// probability `beta`. Each edge gets an excitatory sign with probability
/// `excit_frac` and a magnitude uniform in `(0, weight_scale]`.
pub fn generate_small_world(
    n: usize,
    k: usize,
    beta: f64,
    excit_frac: f64,
    weight_scale: f64,
    seed: u64,
) -> Result<Network> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("n = {n} must be >= 3")));
    }
    if k == 0 || k >= n || k % 2 != 0 {
        return Err(Error::InvalidParameter(format!(
            "k = {k} must be even with 0 < k < n = {n}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::InvalidParameter(format!(
            "beta = {beta} must lie in [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&excit_frac) {
        return Err(Error::InvalidParameter(format!(
            "excit_frac = {excit_frac} must lie in [0, 1]"
        )));
    }
    if !(weight_scale > 0.0) || !weight_scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "weight_scale = {weight_scale} must be positive and finite"
        )));
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut targets: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for i in 0..n {
        let mut set = BTreeSet::new();
        for off in 1..=(k / 2) {
            set.insert((i + off) % n);
            set.insert((i + n - off) % n);
        }
        targets.insert(i, set);
    }

    // Rewire in deterministic order: source asc, original target asc.
    for src in 0..n {
        let original: Vec<usize> = targets[&src].iter().copied().collect();
        for dst in original {
            if rng.gen::<f64>() < beta {
                let set = targets.get_mut(&src).unwrap();
                // New target distinct from src and current targets; the
                // precondition k < n guarantees a free slot exists.
                if set.len() >= n - 1 {
                    continue;
                }
                set.remove(&dst);
                loop {
                    let cand = rng.gen_range(0..n);
                    if cand != src && !set.contains(&cand) {
                        set.insert(cand);
                        break;
                    }
                }
            }
        }
    }

    let mut edges = Vec::new();
    for (&src, set) in &targets {
        for &dst in set {
            let (sign, magnitude) = draw_weight(&mut rng, excit_frac, weight_scale);
            edges.push((src, dst, sign * magnitude));
        }
    }

    // Default LIF-ish parameters; timescales are usually resampled from a
    // gamma distribution afterwards.
    Network::new(
        n,
        edges,
        vec![
            NeuronParams {
                tau_m: 20.0,
                leak: 1.0,
            };
            n
        ],
        vec![true; n],
    )
}

/// Sign/magnitude scheme shared by the generator and edge addition:
/// excitatory with probability `excit_frac`, magnitude uniform in
/// `(0, weight_scale]`.
fn draw_weight(rng: &mut ChaCha20Rng, excit_frac: f64, weight_scale: f64) -> (f64, f64) {
    let sign = if rng.gen::<f64>() < excit_frac { 1.0 } else { -1.0 };
    let magnitude = (1.0 - rng.gen::<f64>()) * weight_scale;
    (sign, magnitude)
}

/// Exact shortest-path betweenness on the unweighted directed skeleton.
///
/// Brandes accumulation: one BFS per source, then dependency back-propagation.
/// Isolated and dead nodes score 0.
pub fn betweenness_centrality(net: &Network) -> Result<CentralityMap> {
    betweenness_centrality_mode(net, CentralityMode::Directed)
}

/// Betweenness with an explicit choice of directed or symmetrized skeleton.
pub fn betweenness_centrality_mode(net: &Network, mode: CentralityMode) -> Result<CentralityMap> {
    let ids = net.alive_nodes();
    if ids.is_empty() {
        return Err(Error::InvalidParameter(
            "betweenness needs at least one alive node".into(),
        ));
    }
    let m = ids.len();
    let mut index = vec![usize::MAX; net.n_total()];
    for (c, &id) in ids.iter().enumerate() {
        index[id] = c;
    }
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for (s, d, _) in net.edges() {
        adj[index[s]].push(index[d]);
        if mode == CentralityMode::Symmetrized {
            adj[index[d]].push(index[s]);
        }
    }
    for list in &mut adj {
        list.sort_unstable();
        list.dedup();
    }

    let mut centrality = vec![0.0_f64; m];
    let mut dist = vec![-1_i64; m];
    let mut sigma = vec![0.0_f64; m];
    let mut delta = vec![0.0_f64; m];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); m];

    for s in 0..m {
        for v in 0..m {
            dist[v] = -1;
            sigma[v] = 0.0;
            delta[v] = 0.0;
            preds[v].clear();
        }
        dist[s] = 0;
        sigma[s] = 1.0;
        let mut order: Vec<usize> = Vec::with_capacity(m);
        let mut queue = VecDeque::new();
        queue.push_back(s);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                if dist[w] < 0 {
                    dist[w] = dist[v] + 1;
                    queue.push_back(w);
                }
                if dist[w] == dist[v] + 1 {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                }
            }
        }
        while let Some(w) = order.pop() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }

    let mut scores = vec![0.0; net.n_total()];
    for (c, &id) in ids.iter().enumerate() {
        scores[id] = centrality[c];
    }
    Ok(CentralityMap { scores })
}

/// Mark the given nodes dead and drop all incident edges. Indices are
/// stable: surviving neurons keep their ids.
pub fn prune_nodes(net: &Network, to_remove: &BTreeSet<usize>) -> Result<Network> {
    for &node in to_remove {
        if !net.is_alive(node) {
            return Err(Error::UnknownNode { node });
        }
    }
    let mut out = net.clone();
    for &node in to_remove {
        out.alive[node] = false;
    }
    out.edges
        .retain(|&(s, d), _| out.alive[s] && out.alive[d]);
    Ok(out)
}

/// Population variance of total degree (in + out) over alive nodes.
pub fn degree_variance(net: &Network) -> Result<f64> {
    let ids = net.alive_nodes();
    if ids.is_empty() {
        return Err(Error::InvalidParameter(
            "degree variance needs at least one alive node".into(),
        ));
    }
    let deg = net.total_degrees();
    let degs: Vec<f64> = ids.iter().map(|&i| deg[i] as f64).collect();
    let mean = degs.iter().sum::<f64>() / degs.len() as f64;
    Ok(degs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / degs.len() as f64)
}

/// Candidate edges for delocalization: `(u, v)` such that `u` lies within
/// two hops of `v` on the undirected skeleton, `u != v`, and the edge does
/// not already exist. Ascending (src, dst) order.
pub fn delocalization_candidates(net: &Network) -> Vec<(usize, usize)> {
    let adj = net.undirected_adjacency();
    let mut candidates = Vec::new();
    for v in net.alive_nodes() {
        let mut within: BTreeSet<usize> = BTreeSet::new();
        for &u in &adj[v] {
            within.insert(u);
            for &uu in &adj[u] {
                within.insert(uu);
            }
        }
        within.remove(&v);
        for u in within {
            if !net.has_edge(u, v) {
                candidates.push((u, v));
            }
        }
    }
    candidates.sort_unstable();
    candidates
}

/// Add exactly `m` new edges, greedily maximizing the degree variance.
///
/// Each step adds the candidate edge that maximizes the resulting variance;
/// ties break toward the lowest (src, dst) pair. Candidates come from
/// [`delocalization_candidates`] computed once up front. New weights use the
/// generator's sign/magnitude scheme with the excitatory fraction and scale
/// estimated from the current edge set.
pub fn add_delocalizing_edges(net: &Network, m: usize, rng_seed: u64) -> Result<Network> {
    let mut candidates = delocalization_candidates(net);
    if candidates.len() < m {
        return Err(Error::InsufficientCandidates {
            requested: m,
            available: candidates.len(),
        });
    }
    if m == 0 {
        return Ok(net.clone());
    }

    // Empirical sign/magnitude scheme from the existing edges.
    let n_edges = net.n_edges();
    let excit_frac = if n_edges == 0 {
        0.5
    } else {
        net.edges().filter(|&(_, _, w)| w > 0.0).count() as f64 / n_edges as f64
    };
    let weight_scale = net
        .edges()
        .map(|(_, _, w)| w.abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let weight_scale = if n_edges == 0 { 1.0 } else { weight_scale };

    let mut rng = ChaCha20Rng::seed_from_u64(rng_seed);
    let deg = net.total_degrees();
    let mut degs: Vec<i64> = deg.iter().map(|&d| d as i64).collect();
    let mut out = net.clone();

    for _ in 0..m {
        // Var = (N*sumsq - sum^2)/N^2 with N fixed, so the argmax over
        // candidates of the post-insertion variance is exact in integers:
        // adding (u,v) bumps sumsq by 2*deg[u] + 2*deg[v] + 2.
        let (best_idx, _) = candidates
            .iter()
            .enumerate()
            .map(|(idx, &(u, v))| (idx, degs[u] + degs[v]))
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty candidate list");
        let (u, v) = candidates.remove(best_idx);
        let (sign, magnitude) = draw_weight(&mut rng, excit_frac, weight_scale);
        out.insert_edge(u, v, sign * magnitude)?;
        degs[u] += 1;
        degs[v] += 1;
    }
    Ok(out)
}

// --- serialization -------------------------------------------------------

/// Wire form: {"n", "edges", "tau_m", "leak", "alive"} in this field order.
#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
    tau_m: Vec<f64>,
    leak: Vec<f64>,
    alive: Vec<bool>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc {
            n: self.n,
            edges: self.edges().collect(),
            tau_m: self.params.iter().map(|p| p.tau_m).collect(),
            leak: self.params.iter().map(|p| p.leak).collect(),
            alive: self.alive.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let doc = NetworkDoc::deserialize(deserializer)?;
        if doc.tau_m.len() != doc.n || doc.leak.len() != doc.n {
            return Err(serde::de::Error::custom("tau_m/leak length mismatch"));
        }
        let params = doc
            .tau_m
            .iter()
            .zip(&doc.leak)
            .map(|(&tau_m, &leak)| NeuronParams { tau_m, leak })
            .collect();
        Network::new(doc.n, doc.edges, params, doc.alive).map_err(serde::de::Error::custom)
    }
}

impl Network {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Network> {
        Ok(serde_json::from_str(s)?)
    }
}

//! The noise-driven pruning pipeline and both baselines.
//!
//! Pipeline per iteration: estimate per-neuron exponents of the untrained
//! rate map, build the harmonic-mean matrix over edges and the linear
//! surrogate `A = -D + L`, drive it with noise to estimate the firing-rate
//! covariance, sparsify `A` by edge-wise Bernoulli retention with `1/p`
//! rescaling, restore the diagonal homeostatically, prune low-centrality
//! nodes, and add degree-variance-maximizing edges. Timescale optimization
//! runs once after the final iteration.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    estimate_covariance, simulate_lif, simulate_linear_noise, LIFConfig, Phi, SpikeRecord,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::lyapunov::{
    lyapunov_matrix, network_per_neuron_exponents, JacobianSequence, LyapunovMatrix,
};
use crate::network::{
    add_delocalizing_edges, betweenness_centrality_mode, prune_nodes, CentralityMode, Network,
};
use crate::seed::derive_seed;
use crate::tsopt::{optimize_network_timescales, TimescaleOptConfig};

/// Edge retention probabilities: entries in [0, 1], zero on the diagonal and
/// off the edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct RetentionMatrix {
    matrix: DMatrix<f64>,
}

impl RetentionMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "retention matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        for i in 0..matrix.nrows() {
            if matrix[(i, i)] != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "retention diagonal entry ({i},{i}) must be zero"
                )));
            }
            for j in 0..matrix.ncols() {
                let p = matrix[(i, j)];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::InvalidParameter(format!(
                        "retention p[({i},{j})] = {p} outside [0, 1]"
                    )));
                }
            }
        }
        Ok(RetentionMatrix { matrix })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn get(&self, post: usize, pre: usize) -> f64 {
        self.matrix[(post, pre)]
    }
}

/// One pruning-trace record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub step: String,
    pub neurons: usize,
    pub edges: usize,
    pub seed: u64,
    pub eval: Option<f64>,
}

/// Per-step record of the pruning run, for reproducibility and plotting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneTrace {
    pub rows: Vec<TraceRow>,
}

impl PruneTrace {
    pub fn new() -> Self {
        PruneTrace::default()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn push(&mut self, iteration: usize, step: &str, net: &Network, seed: u64, eval: Option<f64>) {
        self.rows.push(TraceRow {
            iteration,
            step: step.to_string(),
            neurons: net.n_alive(),
            edges: net.n_edges(),
            seed,
            eval,
        });
    }

    /// CSV document with header `iteration,step,neurons,edges,seed`; an
    /// `eval` column is appended when any row carries one.
    pub fn to_csv(&self) -> Result<String> {
        let has_eval = self.rows.iter().any(|r| r.eval.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        if has_eval {
            w.write_record(["iteration", "step", "neurons", "edges", "seed", "eval"])?;
        } else {
            w.write_record(["iteration", "step", "neurons", "edges", "seed"])?;
        }
        for r in &self.rows {
            let mut rec = vec![
                r.iteration.to_string(),
                r.step.clone(),
                r.neurons.to_string(),
                r.edges.to_string(),
                r.seed.to_string(),
            ];
            if has_eval {
                rec.push(r.eval.map(|e| e.to_string()).unwrap_or_default());
            }
            w.write_record(rec)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagonalMode {
    Keep,
    Perturb,
}

/// Where the firing-rate covariance comes from: the linear surrogate's
/// noise-driven states (default) or exponentially filtered spike rates of
/// the LIF network under Bernoulli noise input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceSource {
    LinearSurrogate,
    SpikeRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LNPConfig {
    /// Density constant of the retention probabilities.
    pub rho: f64,
    /// Quantile (over distinct centrality values) below which nodes are cut.
    pub centrality_quantile: f64,
    /// Edges added per iteration in the delocalization step.
    pub m_delocalize: usize,
    pub diagonal_mode: DiagonalMode,
    /// Steps of both the rate-map run and the noise drive.
    pub sim_steps: usize,
    pub burn_in: usize,
    /// Noise standard deviation of the drive.
    pub sigma: f64,
    /// Step (ms) of the noise drive; also sets the rate map's per-neuron
    /// fraction dt/tau.
    pub dt: f64,
    pub iterations: usize,
    pub seed: u64,
    pub phi: Phi,
    pub covariance_source: CovarianceSource,
    pub centrality_mode: CentralityMode,
    /// Ablation: skip the node-pruning step.
    pub skip_node_prune: bool,
    /// Ablation: skip the edge-addition step.
    pub skip_delocalize: bool,
    /// Ablation: run timescale optimization inside every iteration instead
    /// of once at the end.
    pub optimize_timescales_each_iteration: bool,
    /// Step-IV configuration; `None` skips timescale optimization.
    pub tsopt: Option<TimescaleOptConfig>,
}

impl Default for LNPConfig {
    fn default() -> Self {
        LNPConfig {
            rho: 50.0,
            centrality_quantile: 0.1,
            m_delocalize: 5,
            diagonal_mode: DiagonalMode::Perturb,
            sim_steps: 1200,
            burn_in: 200,
            sigma: 0.5,
            dt: 0.5,
            iterations: 10,
            seed: 0,
            phi: Phi::Tanh,
            covariance_source: CovarianceSource::LinearSurrogate,
            centrality_mode: CentralityMode::Directed,
            skip_node_prune: false,
            skip_delocalize: false,
            optimize_timescales_each_iteration: false,
            tsopt: None,
        }
    }
}

impl LNPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "rho {} must be positive",
                self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.centrality_quantile) {
            return Err(Error::InvalidParameter(format!(
                "centrality_quantile {} must lie in [0, 1)",
                self.centrality_quantile
            )));
        }
        if self.sim_steps < self.burn_in + 2 {
            return Err(Error::InvalidParameter(format!(
                "sim_steps {} must exceed burn_in {} by at least 2",
                self.sim_steps, self.burn_in
            )));
        }
        if !(self.sigma >= 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(
                "sigma must be >= 0 and dt positive".into(),
            ));
        }
        Ok(())
    }
}

/// Retention probability per edge:
/// `rho * l_ij * (S_ii + S_jj - 2 S_ij)` for excitatory entries and
/// `rho * |l_ij| * (S_ii + S_jj + 2 S_ij)` for inhibitory ones, clipped into
/// [0, 1]. Edge sign comes from the weight entry in `a` (falling back to
/// `l_ij` where `a` is zero); non-edges and the diagonal stay 0.
pub fn retention_probabilities(
    a: &DMatrix<f64>,
    l: &LyapunovMatrix,
    sigma: &DMatrix<f64>,
    rho: f64,
) -> Result<RetentionMatrix> {
    let n = a.nrows();
    if a.ncols() != n || l.matrix.nrows() != n || l.matrix.ncols() != n || sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "A {}x{}, L {}x{}, Sigma {}x{}",
            a.nrows(),
            a.ncols(),
            l.matrix.nrows(),
            l.matrix.ncols(),
            sigma.nrows(),
            sigma.ncols()
        )));
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("rho {rho} must be >= 0")));
    }
    let mut p = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let lij = l.matrix[(i, j)];
            if lij == 0.0 {
                continue;
            }
            let weight = if a[(i, j)] != 0.0 { a[(i, j)] } else { lij };
            let raw = if weight > 0.0 {
                rho * lij * (sigma[(i, i)] + sigma[(j, j)] - 2.0 * sigma[(i, j)])
            } else {
                rho * lij.abs() * (sigma[(i, i)] + sigma[(j, j)] + 2.0 * sigma[(i, j)])
            };
            p[(i, j)] = raw.clamp(0.0, 1.0);
        }
    }
    RetentionMatrix::new(p)
}

/// Bernoulli edge sampling: each off-diagonal entry survives with
/// probability `p_ij` and is rescaled by `1/p_ij`; the diagonal is copied
/// untouched (see [`adjust_diagonal`]). Deterministic per seed, row-major
/// draw order over entries with positive retention.
pub fn sample_sparse(a: &DMatrix<f64>, p: &RetentionMatrix, seed: u64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || p.matrix.nrows() != n {
        return Err(Error::ShapeMismatch(format!(
            "A {}x{} vs P {}x{}",
            a.nrows(),
            a.ncols(),
            p.matrix.nrows(),
            p.matrix.ncols()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        out[(i, i)] = a[(i, i)];
        for j in 0..n {
            if i == j {
                continue;
            }
            let pij = p.matrix[(i, j)];
            if pij > 0.0 && rng.gen::<f64>() < pij {
                out[(i, j)] = a[(i, j)] / pij;
            }
        }
    }
    Ok(out)
}

/// Diagonal policy after sparsification: `Keep` restores the original
/// diagonal; `Perturb` applies the homeostatic correction
/// `A_ii - (sum_j |A^sparse_ij| - sum_j |A_ij|)` rowwise, which zeroes the
/// per-row change of total absolute input.
pub fn adjust_diagonal(
    a_sparse: &DMatrix<f64>,
    a: &DMatrix<f64>,
    mode: DiagonalMode,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a_sparse.nrows() != n || a_sparse.ncols() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "A_sparse {}x{} vs A {}x{}",
            a_sparse.nrows(),
            a_sparse.ncols(),
            a.nrows(),
            a.ncols()
        )));
    }
    let mut out = a_sparse.clone();
    for i in 0..n {
        match mode {
            DiagonalMode::Keep => out[(i, i)] = a[(i, i)],
            DiagonalMode::Perturb => {
                let mut delta = 0.0;
                for j in 0..a.ncols() {
                    if j != i {
                        delta += a_sparse[(i, j)].abs() - a[(i, j)].abs();
                    }
                }
                out[(i, i)] = a[(i, i)] - delta;
            }
        }
    }
    Ok(out)
}

/// Remove nodes whose betweenness falls strictly below the `quantile`-th
/// quantile of the distinct score values; ties at the threshold survive.
pub fn node_prune_by_centrality(net: &Network, quantile: f64) -> Result<Network> {
    node_prune_by_centrality_mode(net, quantile, CentralityMode::Directed)
}

pub fn node_prune_by_centrality_mode(
    net: &Network,
    quantile: f64,
    mode: CentralityMode,
) -> Result<Network> {
    if !(0.0..1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!(
            "quantile {quantile} must lie in [0, 1)"
        )));
    }
    let ids = net.alive_nodes();
    if ids.is_empty() {
        return Err(Error::WouldEmptyNetwork);
    }
    let bc = betweenness_centrality_mode(net, mode)?;
    // Quantile over distinct levels: with heavy ties (many zero-score
    // nodes) a multiset quantile would never exceed the lowest level and
    // nothing could ever be pruned.
    let mut levels: Vec<f64> = ids.iter().map(|&v| bc.get(v)).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    levels.dedup();
    let idx = ((quantile * levels.len() as f64).floor() as usize).min(levels.len() - 1);
    let threshold = levels[idx];
    let doomed: BTreeSet<usize> = ids.iter().copied().filter(|&v| bc.get(v) < threshold).collect();
    if doomed.len() == ids.len() {
        return Err(Error::WouldEmptyNetwork);
    }
    prune_nodes(net, &doomed)
}

/// Linear surrogate `A = -D + L` over the global index space: minus the
/// per-neuron leak on the diagonal, harmonic-mean entries on edges.
pub fn build_linear_surrogate(net: &Network, l: &LyapunovMatrix) -> DMatrix<f64> {
    let n = net.n_total();
    let mut a = l.matrix.clone();
    for i in 0..n {
        a[(i, i)] = -net.leak(i);
    }
    a
}

fn covariance_of(net: &Network, cfg: &LNPConfig, a: &DMatrix<f64>, seed: u64) -> Result<DMatrix<f64>> {
    match cfg.covariance_source {
        CovarianceSource::LinearSurrogate => {
            let n = a.nrows();
            let traj = simulate_linear_noise(
                a,
                &DVector::zeros(n),
                &DVector::zeros(n),
                cfg.sigma,
                cfg.sim_steps,
                cfg.dt,
                seed,
            )?;
            estimate_covariance(&traj, cfg.burn_in)
        }
        CovarianceSource::SpikeRates => spike_rate_covariance(net, cfg, seed),
    }
}

/// Covariance of exponentially filtered spike traces under independent
/// Bernoulli(1/2) noise input scaled by sigma, embedded into the global
/// index space.
fn spike_rate_covariance(net: &Network, cfg: &LNPConfig, seed: u64) -> Result<DMatrix<f64>> {
    let ids = net.alive_nodes();
    let n = ids.len();
    let lif = LIFConfig {
        v_thresh: 1.0,
        v_reset: 0.0,
        dt: cfg.dt,
        refractory: 0,
    };
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "noise-spikes"));
    let mut input = SpikeRecord::zeros(cfg.sim_steps, (0..n).collect(), cfg.dt);
    for t in 0..cfg.sim_steps {
        for c in 0..n {
            if rng.gen::<bool>() {
                input.set(t, c, true);
            }
        }
    }
    let w_in = DMatrix::from_diagonal_element(n, n, cfg.sigma);
    let rec = simulate_lif(net, &lif, &input, &w_in, cfg.sim_steps, seed)?;

    let decay: Vec<f64> = ids.iter().map(|&id| (-cfg.dt / net.tau_m(id)).exp()).collect();
    let mut trace = vec![0.0_f64; n];
    let mut states = DMatrix::zeros(cfg.sim_steps, n);
    for t in 0..cfg.sim_steps {
        for c in 0..n {
            trace[c] = trace[c] * decay[c] + if rec.get(t, c) { 1.0 } else { 0.0 };
            states[(t, c)] = trace[c];
        }
    }
    let compact = estimate_covariance(
        &Trajectory {
            states,
            dt: cfg.dt,
        },
        cfg.burn_in,
    )?;
    let mut global = DMatrix::zeros(net.n_total(), net.n_total());
    for (ci, &gi) in ids.iter().enumerate() {
        for (cj, &gj) in ids.iter().enumerate() {
            global[(gi, gj)] = compact[(ci, cj)];
        }
    }
    Ok(global)
}

/// Write the sparsified surrogate back onto the network: surviving
/// off-diagonal entries become the signed synaptic weights (a subset of the
/// previous edge set), and the diagonal becomes the new leak
/// (`leak_i = -A^sparse_ii`, inverting `A = -D + L`).
fn write_back(net: &Network, a_sparse: &DMatrix<f64>) -> Result<Network> {
    let edges: Vec<(usize, usize, f64)> = net
        .edges()
        .filter_map(|(s, d, _)| {
            let v = a_sparse[(d, s)];
            (v != 0.0).then_some((s, d, v))
        })
        .collect();
    let leaks: Vec<f64> = (0..net.n_total()).map(|i| -a_sparse[(i, i)]).collect();
    net.with_edges(edges)?.with_leaks(&leaks)
}

/// Result of a pipeline run, including the Step-IV optimization record when
/// it ran.
#[derive(Debug, Clone)]
pub struct LnpOutcome {
    pub network: Network,
    pub trace: PruneTrace,
    pub tsopt_run: Option<crate::tsopt::BoRun>,
}

/// Run the full pruning pipeline. Deterministic per `cfg.seed`; every step
/// appends a trace row. `iterations == 0` returns the input unchanged with
/// an empty trace.
pub fn lnp_pipeline(net: &Network, cfg: &LNPConfig) -> Result<(Network, PruneTrace)> {
    let outcome = lnp_pipeline_full(net, cfg)?;
    Ok((outcome.network, outcome.trace))
}

/// [`lnp_pipeline`] variant that also returns the timescale-optimization
/// history.
pub fn lnp_pipeline_full(net: &Network, cfg: &LNPConfig) -> Result<LnpOutcome> {
    cfg.validate()?;
    let mut trace = PruneTrace::new();
    let mut current = net.clone();
    let mut tsopt_run = None;
    if cfg.iterations == 0 {
        return Ok(LnpOutcome {
            network: current,
            trace,
            tsopt_run,
        });
    }

    for iteration in 0..cfg.iterations {
        let iter_seed = derive_seed(cfg.seed, &format!("lnp-iter-{iteration}"));
        let ctx = |step: &str| {
            let step = step.to_string();
            move |e: Error| e.in_pipeline(iteration, &step)
        };

        if current.n_alive() == 0 || current.n_edges() == 0 {
            // Disconnected input: steps 1-2 have nothing to act on.
            trace.push(iteration, "degenerate", &current, iter_seed, None);
            continue;
        }

        // Step 1: noise pruning of synapses.
        let lambda = network_per_neuron_exponents(
            &current,
            cfg.dt,
            cfg.phi,
            cfg.sim_steps,
            cfg.sigma,
            derive_seed(iter_seed, "rate-map"),
        )
        .map_err(ctx("synapse-prune"))?;
        let lmat = lyapunov_matrix(&current, &lambda).map_err(ctx("synapse-prune"))?;
        let a = build_linear_surrogate(&current, &lmat);
        let covariance = covariance_of(&current, cfg, &a, derive_seed(iter_seed, "noise-drive"))
            .map_err(ctx("synapse-prune"))?;
        let p = retention_probabilities(&a, &lmat, &covariance, cfg.rho)
            .map_err(ctx("synapse-prune"))?;
        let sampled =
            sample_sparse(&a, &p, derive_seed(iter_seed, "sample")).map_err(ctx("synapse-prune"))?;
        let a_sparse =
            adjust_diagonal(&sampled, &a, cfg.diagonal_mode).map_err(ctx("synapse-prune"))?;
        current = write_back(&current, &a_sparse).map_err(ctx("synapse-prune"))?;
        trace.push(iteration, "synapse-prune", &current, iter_seed, None);

        // Step 2: node pruning by betweenness centrality.
        if !cfg.skip_node_prune && current.n_alive() > 0 {
            current =
                node_prune_by_centrality_mode(&current, cfg.centrality_quantile, cfg.centrality_mode)
                    .map_err(ctx("node-prune"))?;
            trace.push(iteration, "node-prune", &current, iter_seed, None);
        }

        // Step 3: eigenvector delocalization via edge addition.
        if !cfg.skip_delocalize && cfg.m_delocalize > 0 {
            current =
                add_delocalizing_edges(&current, cfg.m_delocalize, derive_seed(iter_seed, "delocalize"))
                    .map_err(ctx("delocalize"))?;
            trace.push(iteration, "delocalize", &current, iter_seed, None);
        }

        // Step 4 per iteration (ablation flag).
        if cfg.optimize_timescales_each_iteration {
            if let Some(ts) = &cfg.tsopt {
                let (run, retimed) =
                    optimize_network_timescales(&current, ts, derive_seed(iter_seed, "tsopt"))
                        .map_err(ctx("timescale-opt"))?;
                current = retimed;
                tsopt_run = Some(run);
                trace.push(iteration, "timescale-opt", &current, iter_seed, None);
            }
        }
    }

    // Step 4 once, after the final iteration.
    if !cfg.optimize_timescales_each_iteration {
        if let Some(ts) = &cfg.tsopt {
            let seed = derive_seed(cfg.seed, "tsopt");
            let (run, retimed) = optimize_network_timescales(&current, ts, seed)
                .map_err(|e| e.in_pipeline(cfg.iterations - 1, "timescale-opt"))?;
            current = retimed;
            tsopt_run = Some(run);
            trace.push(cfg.iterations - 1, "timescale-opt", &current, seed, None);
        }
    }
    Ok(LnpOutcome {
        network: current,
        trace,
        tsopt_run,
    })
}

/// Baseline: prune the `top_k` neurons ranked by the per-neuron exponent
/// (descending) whose contribution `mean |J_ii|` lies at or below the median
/// contribution. Ties in the exponent ranking break toward the lower index.
pub fn lyapunov_neuron_prune(
    net: &Network,
    jacobians: &JacobianSequence,
    top_k: usize,
) -> Result<Network> {
    let ids = net.alive_nodes();
    let n = ids.len();
    if jacobians.dim() != n {
        return Err(Error::ShapeMismatch(format!(
            "jacobians are {}-dimensional but {} neurons are alive",
            jacobians.dim(),
            n
        )));
    }
    if top_k >= n && top_k != 0 {
        return Err(Error::InvalidParameter(format!(
            "top_k {top_k} must be below the alive count {n}"
        )));
    }
    if top_k == 0 {
        return Ok(net.clone());
    }

    let t = jacobians.len() as f64;
    let mut log_sum = vec![0.0_f64; n];
    let mut abs_sum = vec![0.0_f64; n];
    for jac in jacobians.iter() {
        for i in 0..n {
            log_sum[i] += jac[(i, i)].abs().ln();
            abs_sum[i] += jac[(i, i)].abs();
        }
    }
    let lambda: Vec<f64> = log_sum.iter().map(|s| s / t).collect();
    let contribution: Vec<f64> = abs_sum.iter().map(|s| s / t).collect();

    let mut sorted_contrib = contribution.clone();
    sorted_contrib.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let median = if n % 2 == 0 {
        0.5 * (sorted_contrib[n / 2 - 1] + sorted_contrib[n / 2])
    } else {
        sorted_contrib[n / 2]
    };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        lambda[b]
            .partial_cmp(&lambda[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let doomed: BTreeSet<usize> = order
        .into_iter()
        .filter(|&c| contribution[c] <= median)
        .take(top_k)
        .map(|c| ids[c])
        .collect();
    prune_nodes(net, &doomed)
}

/// Baseline: iterative activity pruning. Each iteration simulates the
/// network via `simulate`, removes the `ceil(r * n)` least active neurons
/// (ties toward the lower id), and re-evaluates via `eval_fn` (higher is
/// better). Stops at `max_iters`, when performance falls below a tenth of
/// the initial value, or when another removal would empty the network.
pub fn activity_prune<S, E>(
    net: &Network,
    mut simulate: S,
    r: f64,
    max_iters: usize,
    mut eval_fn: E,
    seed: u64,
) -> Result<(Network, PruneTrace)>
where
    S: FnMut(&Network, u64) -> Result<SpikeRecord>,
    E: FnMut(&Network) -> Result<f64>,
{
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "pruning rate {r} must lie in (0, 1)"
        )));
    }
    let initial = eval_fn(net)?;
    let mut current = net.clone();
    let mut trace = PruneTrace::new();

    for iteration in 0..max_iters {
        let n_alive = current.n_alive();
        let n_prune = (r * n_alive as f64).ceil() as usize;
        if n_prune >= n_alive {
            break;
        }
        let iter_seed = derive_seed(seed, &format!("ap-iter-{iteration}"));
        let rec = simulate(&current, iter_seed)?;
        let counts = rec.spike_counts();
        let mut ranked: Vec<(usize, usize)> = rec
            .neuron_ids()
            .iter()
            .copied()
            .zip(counts)
            .map(|(id, c)| (c, id))
            .collect();
        ranked.sort();
        let doomed: BTreeSet<usize> = ranked.iter().take(n_prune).map(|&(_, id)| id).collect();
        current = prune_nodes(&current, &doomed)?;
        let perf = eval_fn(&current)?;
        trace.push(iteration, "activity-prune", &current, iter_seed, Some(perf));
        if perf < 0.1 * initial {
            break;
        }
    }
    Ok((current, trace))
}

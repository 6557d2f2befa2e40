//! Bayesian optimization of the gamma distribution governing neuronal
//! membrane timescales: Sinkhorn distances between candidate distributions,
//! a Matern-5/2 kernel over those distances, GP regression, and
//! expected-improvement acquisition over a quasi-random candidate pool.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Gamma, Normal};

use crate::dynamics::{simulate_discrete_map, Phi};
use crate::error::{Error, Result};
use crate::lyapunov::max_local_le;
use crate::network::Network;
use crate::seed::derive_seed;

/// Gamma distribution over membrane time constants (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimescaleDistribution {
    pub shape: f64,
    pub scale: f64,
}

impl TimescaleDistribution {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma shape {shape} / scale {scale} must be positive and finite"
            )));
        }
        Ok(TimescaleDistribution { shape, scale })
    }

    fn statrs(&self) -> Result<Gamma> {
        Gamma::new(self.shape, 1.0 / self.scale)
            .map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    /// Quantile at probability `p`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.statrs()?.inverse_cdf(p))
    }

    /// `n` equal-mass midpoint-quantile atoms, ascending.
    pub fn quantile_atoms(&self, n: usize) -> Result<Vec<f64>> {
        let g = self.statrs()?;
        Ok((0..n)
            .map(|i| g.inverse_cdf((i as f64 + 0.5) / n as f64))
            .collect())
    }

    /// Inverse-CDF sample at the given uniforms (common random numbers make
    /// objectives deterministic and smooth in the parameters).
    pub fn sample_at(&self, uniforms: &[f64]) -> Result<Vec<f64>> {
        let g = self.statrs()?;
        Ok(uniforms.iter().map(|&u| g.inverse_cdf(u)).collect())
    }
}

/// Entropic-regularized optimal transport distance between two timescale
/// distributions, each discretized to `n_atoms` equal-mass quantile atoms
/// with squared atom distance as cost.
///
/// Runs log-domain Sinkhorn warm-started from the exact monotone-matching
/// duals, iterating until the transport cost is stable to relative
/// tolerance below 1e-6. Returns the transport cost `<P, C>` of the
/// converged plan.
pub fn sinkhorn_distance(
    p: &TimescaleDistribution,
    q: &TimescaleDistribution,
    reg: f64,
    n_atoms: usize,
) -> Result<f64> {
    if !(reg > 0.0) {
        return Err(Error::InvalidParameter(format!("reg {reg} must be positive")));
    }
    if n_atoms < 8 {
        return Err(Error::InvalidParameter(format!(
            "n_atoms {n_atoms} must be >= 8"
        )));
    }
    let xs = p.quantile_atoms(n_atoms)?;
    let ys = q.quantile_atoms(n_atoms)?;
    // The cost is symmetric, so canonicalize the argument order; this makes
    // d(p, q) and d(q, p) bit-identical.
    if xs
        .iter()
        .zip(&ys)
        .find_map(|(a, b)| a.partial_cmp(b).filter(|o| o.is_ne()))
        == Some(std::cmp::Ordering::Greater)
    {
        sinkhorn_atoms(&ys, &xs, reg)
    } else {
        sinkhorn_atoms(&xs, &ys, reg)
    }
}

/// Default regularization: 0.05 times the squared mean spacing of the pooled
/// atom set.
pub fn default_sinkhorn_reg(
    p: &TimescaleDistribution,
    q: &TimescaleDistribution,
    n_atoms: usize,
) -> Result<f64> {
    let mut pooled = p.quantile_atoms(n_atoms)?;
    pooled.extend(q.quantile_atoms(n_atoms)?);
    let lo = pooled.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pooled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let spacing = (hi - lo) / (pooled.len() - 1) as f64;
    Ok((0.05 * spacing * spacing).max(1e-12))
}

fn sinkhorn_atoms(xs: &[f64], ys: &[f64], reg: f64) -> Result<f64> {
    let n = xs.len();
    let m = ys.len();
    let cost = DMatrix::from_fn(n, m, |i, j| (xs[i] - ys[j]) * (xs[i] - ys[j]));
    let log_a = -(n as f64).ln();
    let log_b = -(m as f64).ln();
    let eps = reg;

    // Warm start from exact unregularized duals of the monotone matching:
    // for sorted atoms and equal masses the optimal plan is the identity,
    // and the midpoint increment rule
    //   g_j = g_{j-1} + (C_jj - C_{j,j-1} + C_{j-1,j} - C_{j-1,j-1}) / 2,
    //   f_i = C_ii - g_i
    // is a feasible dual pair (adjacent constraints hold with strict slack
    // under the Monge inequality, longer ones by summation). The entropic
    // fixed point is a local perturbation of it, so the iteration settles in
    // a handful of sweeps instead of O(cost/reg).
    let mut f: DVector<f64> = DVector::zeros(n);
    let mut g: DVector<f64> = DVector::zeros(m);
    if n == m {
        for j in 1..m {
            g[j] = g[j - 1]
                + 0.5 * (cost[(j, j)] - cost[(j, j - 1)] + cost[(j - 1, j)] - cost[(j - 1, j - 1)]);
        }
        for i in 0..n {
            f[i] = cost[(i, i)] - g[i];
        }
    }

    // Stopping rule: relative change of the (row-normalized) transport cost
    // between sweeps. Marginal-violation criteria stall harmonically when
    // many atoms tie within sqrt(reg) -- the unresolved mass shuffles among
    // equal-cost cells -- while the cost itself settles immediately.
    let max_iters = 200_000usize;
    let tol = 1e-7;
    let mut iters_used = 0usize;
    let mut last_cost: Option<f64> = None;
    let transport_cost = loop {
        if iters_used >= max_iters {
            return Err(Error::NonConvergence { max_iters });
        }
        iters_used += 1;
        // f_i <- -eps * LSE_j((g_j - C_ij)/eps + log b_j)
        for i in 0..n {
            let mut max_v = f64::NEG_INFINITY;
            for j in 0..m {
                let v = (g[j] - cost[(i, j)]) / eps + log_b;
                if v > max_v {
                    max_v = v;
                }
            }
            let mut sum = 0.0_f64;
            for j in 0..m {
                sum += ((g[j] - cost[(i, j)]) / eps + log_b - max_v).exp();
            }
            f[i] = -eps * (max_v + sum.ln());
        }
        // g_j <- -eps * LSE_i((f_i - C_ij)/eps + log a_i)
        for j in 0..m {
            let mut max_v = f64::NEG_INFINITY;
            for i in 0..n {
                let v = (f[i] - cost[(i, j)]) / eps + log_a;
                if v > max_v {
                    max_v = v;
                }
            }
            let mut sum = 0.0_f64;
            for i in 0..n {
                sum += ((f[i] - cost[(i, j)]) / eps + log_a - max_v).exp();
            }
            g[j] = -eps * (max_v + sum.ln());
        }
        // Cost of the row-normalized plan (rows forced to exact mass).
        let mut current = 0.0;
        for i in 0..n {
            let mut row_mass = 0.0;
            let mut row_cost = 0.0;
            for j in 0..m {
                let pij = ((f[i] + g[j] - cost[(i, j)]) / eps + log_a + log_b).exp();
                row_mass += pij;
                row_cost += pij * cost[(i, j)];
            }
            if row_mass > 0.0 {
                current += row_cost * (log_a.exp() / row_mass);
            }
        }
        if let Some(last) = last_cost {
            if (current - last).abs() <= tol * current.abs().max(1e-30) {
                break current;
            }
        }
        last_cost = Some(current);
    };
    Ok(transport_cost)
}

/// Matern-5/2 kernel over a precomputed distance.
pub fn matern_kernel(d: f64, lengthscale: f64, variance: f64) -> f64 {
    let s = 5.0_f64.sqrt() * d / lengthscale;
    variance * (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// GP regression state: observed distributions, objective values, and kernel
/// hyperparameters.
#[derive(Debug, Clone)]
pub struct GPState {
    pub points: Vec<TimescaleDistribution>,
    pub values: Vec<f64>,
    pub lengthscale: f64,
    pub variance: f64,
    pub noise: f64,
    pub n_atoms: usize,
}

impl GPState {
    pub fn new(lengthscale: f64, variance: f64, noise: f64, n_atoms: usize) -> Self {
        GPState {
            points: Vec::new(),
            values: Vec::new(),
            lengthscale,
            variance,
            noise,
            n_atoms,
        }
    }

    pub fn observe(&mut self, point: TimescaleDistribution, value: f64) {
        self.points.push(point);
        self.values.push(value);
    }

}

/// Kernel-space distance between precomputed atom sets: the square root of
/// the squared-cost transport value under the default regularization. The
/// rooted value is a metric (1-d W2 embeds isometrically in Hilbert space),
/// which keeps the Matern Gram matrix positive definite; the raw squared
/// cost does not satisfy the triangle inequality. Callers cache the quantile
/// atoms because the gamma inverse-CDF dominates the cost otherwise.
fn kernel_distance_atoms(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let lo = xs
        .iter()
        .chain(ys)
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let hi = xs
        .iter()
        .chain(ys)
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let spacing = (hi - lo) / (xs.len() + ys.len() - 1) as f64;
    let reg = (0.05 * spacing * spacing).max(1e-12);
    let cost = if xs
        .iter()
        .zip(ys)
        .find_map(|(a, b)| a.partial_cmp(b).filter(|o| o.is_ne()))
        == Some(std::cmp::Ordering::Greater)
    {
        sinkhorn_atoms(ys, xs, reg)?
    } else {
        sinkhorn_atoms(xs, ys, reg)?
    };
    Ok(cost.max(0.0).sqrt())
}

/// Standard GP posterior (prior mean zero) at the candidate points, using
/// the Sinkhorn-Matern kernel. Jitter starts at 1e-8 and escalates tenfold
/// to at most 1e-4 before giving up.
pub fn gp_posterior(
    state: &GPState,
    candidates: &[TimescaleDistribution],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = state.points.len();
    if n == 0 {
        return Err(Error::InvalidParameter("gp needs at least one observation".into()));
    }
    let obs_atoms: Vec<Vec<f64>> = state
        .points
        .iter()
        .map(|p| p.quantile_atoms(state.n_atoms))
        .collect::<Result<_>>()?;
    let mut base = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let d = if i == j {
                0.0
            } else {
                kernel_distance_atoms(&obs_atoms[i], &obs_atoms[j])?
            };
            let k = matern_kernel(d, state.lengthscale, state.variance);
            base[(i, j)] = k;
            base[(j, i)] = k;
        }
    }

    // Jitter scales with the kernel variance so the escalation ladder keeps
    // its meaning for objectives of any magnitude.
    let mut jitter = 1e-8;
    let chol = loop {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += state.noise + jitter * state.variance;
        }
        match nalgebra::Cholesky::new(k) {
            Some(c) => break c,
            None => {
                jitter *= 10.0;
                if jitter > 1e-4 {
                    return Err(Error::KernelNotPsd { max_jitter: 1e-4 });
                }
            }
        }
    };

    let y = DVector::from_column_slice(&state.values);
    let alpha = chol.solve(&y);

    let mut means = Vec::with_capacity(candidates.len());
    let mut vars = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let cand_atoms = cand.quantile_atoms(state.n_atoms)?;
        let mut k_star = DVector::zeros(n);
        for i in 0..n {
            let d = kernel_distance_atoms(&obs_atoms[i], &cand_atoms)?;
            k_star[i] = matern_kernel(d, state.lengthscale, state.variance);
        }
        let mean = k_star.dot(&alpha);
        let v = chol.solve(&k_star);
        let var = matern_kernel(0.0, state.lengthscale, state.variance) - k_star.dot(&v);
        means.push(mean);
        vars.push(var.max(0.0));
    }
    Ok((means, vars))
}

/// Expected improvement for maximization: `(mu - best) Phi(Z) + sigma phi(Z)`
/// with `Z = (mu - best)/sigma`; degenerates to `max(mu - best, 0)` at zero
/// variance.
pub fn expected_improvement(mean: &[f64], var: &[f64], best: f64) -> Vec<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    mean.iter()
        .zip(var)
        .map(|(&mu, &v)| {
            let sigma = v.max(0.0).sqrt();
            if sigma == 0.0 {
                (mu - best).max(0.0)
            } else {
                let z = (mu - best) / sigma;
                ((mu - best) * std_normal.cdf(z) + sigma * std_normal.pdf(z)).max(0.0)
            }
        })
        .collect()
}

/// Search box for the gamma parameters. Degenerate ranges (lo == hi) pin a
/// coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub shape: (f64, f64),
    pub scale: (f64, f64),
}

impl Bounds {
    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("shape", self.shape), ("scale", self.scale)] {
            if !(lo > 0.0) || !(hi >= lo) || !hi.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} bounds ({lo}, {hi}) must satisfy 0 < lo <= hi < inf"
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, d: &TimescaleDistribution) -> bool {
        d.shape >= self.shape.0
            && d.shape <= self.shape.1
            && d.scale >= self.scale.0
            && d.scale <= self.scale.1
    }
}

/// One objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub round: usize,
    pub shape: f64,
    pub scale: f64,
    pub objective: f64,
}

/// Result of a BO run: the best observed distribution and the full history.
#[derive(Debug, Clone)]
pub struct BoRun {
    pub best: TimescaleDistribution,
    pub best_objective: f64,
    pub history: Vec<HistoryEntry>,
}

impl BoRun {
    /// CSV document: round,shape,scale,objective.
    pub fn history_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "shape", "scale", "objective"])?;
        for h in &self.history {
            w.write_record([
                h.round.to_string(),
                h.shape.to_string(),
                h.scale.to_string(),
                h.objective.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut fraction = 1.0;
    let mut result = 0.0;
    while index > 0 {
        fraction /= base as f64;
        result += fraction * (index % base) as f64;
        index /= base;
    }
    result
}

fn halton_point(index: u64, bounds: &Bounds) -> TimescaleDistribution {
    let u = halton(index, 2);
    let v = halton(index, 3);
    TimescaleDistribution {
        shape: bounds.shape.0 + u * (bounds.shape.1 - bounds.shape.0),
        scale: bounds.scale.0 + v * (bounds.scale.1 - bounds.scale.0),
    }
}

/// Maximize `objective` over the bounds with a budget of evaluations:
/// 3 quasi-random initial points, then EI-argmax over a fresh 256-candidate
/// quasi-random pool per round. Deterministic per seed; the seed offsets the
/// quasi-random sequence.
///
/// The GP hyperparameters are refit each round from the observations: median
/// pairwise Sinkhorn distance as lengthscale, observation variance as signal
/// variance.
pub fn optimize_timescales<F>(
    net: &Network,
    mut objective: F,
    budget: usize,
    bounds: &Bounds,
    seed: u64,
) -> Result<BoRun>
where
    F: FnMut(&Network, &TimescaleDistribution) -> Result<f64>,
{
    bounds.validate()?;
    if budget < 3 {
        return Err(Error::InvalidParameter(format!(
            "budget {budget} must be >= 3"
        )));
    }
    const POOL: usize = 256;
    const N_ATOMS: usize = 64;

    let mut next_index = (seed % 9973) + 1;
    let mut draw = |count: usize| -> Vec<TimescaleDistribution> {
        let pts = (0..count)
            .map(|k| halton_point(next_index + k as u64, bounds))
            .collect();
        next_index += count as u64;
        pts
    };

    let mut history: Vec<HistoryEntry> = Vec::new();
    let evaluate = |point: TimescaleDistribution,
                        history: &mut Vec<HistoryEntry>,
                        objective: &mut F|
     -> Result<()> {
        let round = history.len();
        let value = objective(net, &point).map_err(|e| Error::ObjectiveFailure {
            round,
            message: e.to_string(),
            partial_history: history
                .iter()
                .map(|h| (h.round, h.shape, h.scale, h.objective))
                .collect(),
        })?;
        history.push(HistoryEntry {
            round,
            shape: point.shape,
            scale: point.scale,
            objective: value,
        });
        Ok(())
    };

    for point in draw(3) {
        evaluate(point, &mut history, &mut objective)?;
    }

    while history.len() < budget {
        let candidates = draw(POOL);
        let mut gp = fit_gp(&history, N_ATOMS)?;
        for h in &history {
            gp.observe(
                TimescaleDistribution {
                    shape: h.shape,
                    scale: h.scale,
                },
                h.objective,
            );
        }
        let (mean, var) = gp_posterior(&gp, &candidates)?;
        let best = history
            .iter()
            .map(|h| h.objective)
            .fold(f64::NEG_INFINITY, f64::max);
        let ei = expected_improvement(&mean, &var, best);
        let mut pick = 0;
        for (i, &v) in ei.iter().enumerate() {
            if v > ei[pick] {
                pick = i;
            }
        }
        evaluate(candidates[pick], &mut history, &mut objective)?;
    }

    let best_entry = history
        .iter()
        .cloned()
        .max_by(|a, b| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.round.cmp(&a.round))
        })
        .expect("nonempty history");
    Ok(BoRun {
        best: TimescaleDistribution {
            shape: best_entry.shape,
            scale: best_entry.scale,
        },
        best_objective: best_entry.objective,
        history,
    })
}

fn fit_gp(history: &[HistoryEntry], n_atoms: usize) -> Result<GPState> {
    let n = history.len();
    let points: Vec<TimescaleDistribution> = history
        .iter()
        .map(|h| TimescaleDistribution {
            shape: h.shape,
            scale: h.scale,
        })
        .collect();
    let atoms: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.quantile_atoms(n_atoms))
        .collect::<Result<_>>()?;
    let mut dists = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(kernel_distance_atoms(&atoms[i], &atoms[j])?);
        }
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let lengthscale = if dists.is_empty() {
        1.0
    } else {
        dists[dists.len() / 2].max(1e-6)
    };
    let mean = history.iter().map(|h| h.objective).sum::<f64>() / n as f64;
    let variance = (history
        .iter()
        .map(|h| (h.objective - mean) * (h.objective - mean))
        .sum::<f64>()
        / n as f64)
        .max(1e-6);
    Ok(GPState::new(lengthscale, variance, 1e-6 * variance, n_atoms))
}

/// Configuration of the pipeline's default criticality objective and BO run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimescaleOptConfig {
    pub budget: usize,
    pub bounds: Bounds,
    /// Time points of the local-exponent estimator.
    pub seq_len: usize,
    /// Rate-map step (ms) shared with the pipeline.
    pub dt_ms: f64,
    pub phi: Phi,
    pub noise_sigma: f64,
}

impl Default for TimescaleOptConfig {
    fn default() -> Self {
        TimescaleOptConfig {
            budget: 12,
            bounds: Bounds {
                shape: (1.0, 10.0),
                scale: (1.0, 10.0),
            },
            seq_len: 8,
            dt_ms: 2.0,
            phi: Phi::Tanh,
            noise_sigma: 0.5,
        }
    }
}

/// Max local Lyapunov exponent of the network's rate map under timescales
/// drawn from `dist` at fixed uniforms (common random numbers per `seed`).
///
/// The estimator's matrices are instantiated from the heterogeneous map
/// Jacobian: `U = diag(1 - dt_i)` with `alpha = 1`, `W_hat = diag(dt_i) W`,
/// and `D(t) = diag(phi'(h_t))` along a short noise-driven trajectory.
pub fn network_max_local_le(
    net: &Network,
    dist: &TimescaleDistribution,
    cfg: &TimescaleOptConfig,
    seed: u64,
) -> Result<f64> {
    let (w, ids) = net.weight_matrix();
    let n = ids.len();
    if n == 0 {
        return Err(Error::InvalidParameter("network has no alive neurons".into()));
    }
    // Fixed uniforms: one per alive neuron, independent of the candidate.
    let uniforms: Vec<f64> = {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(derive_seed(seed, "tau-uniforms"));
        (0..n).map(|_| rng.gen_range(1e-4..1.0 - 1e-4)).collect()
    };
    let taus = dist.sample_at(&uniforms)?;
    let dt_norms = DVector::from_iterator(
        n,
        taus.iter().map(|&t| (cfg.dt_ms / t.max(1e-3)).clamp(1e-6, 1.0 - 1e-9)),
    );
    let traj = simulate_discrete_map(
        &w,
        &dt_norms,
        cfg.phi,
        cfg.seq_len + 1,
        cfg.noise_sigma,
        derive_seed(seed, "lmax-traj"),
    )?;
    let d_seq: Vec<DVector<f64>> = (0..cfg.seq_len)
        .map(|t| {
            DVector::from_fn(n, |i, _| cfg.phi.derivative(traj.states[(t, i)]))
        })
        .collect();
    let u = DMatrix::from_diagonal(&dt_norms.map(|d| 1.0 - d));
    let mut w_hat = w;
    for i in 0..n {
        for j in 0..n {
            w_hat[(i, j)] *= dt_norms[i];
        }
    }
    max_local_le(&u, &w_hat, &d_seq, 1.0)
}

/// Run BO with the default criticality objective (maximize `-|L_max|`,
/// driving the pruned network toward the edge of stability) and return the
/// run along with the network re-parameterized by timescales resampled from
/// the optimum.
pub fn optimize_network_timescales(
    net: &Network,
    cfg: &TimescaleOptConfig,
    seed: u64,
) -> Result<(BoRun, Network)> {
    let objective_seed = derive_seed(seed, "tsopt-objective");
    let run = optimize_timescales(
        net,
        |net, dist| network_max_local_le(net, dist, cfg, objective_seed).map(|l| -l.abs()),
        cfg.budget,
        &cfg.bounds,
        derive_seed(seed, "tsopt-bo"),
    )?;
    let retimed =
        net.resample_timescales(run.best.shape, run.best.scale, derive_seed(seed, "tau-final"))?;
    Ok((run, retimed))
}

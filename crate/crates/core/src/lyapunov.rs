//! Lyapunov machinery: Jacobians of the firing-rate map, the full exponent
//! spectrum via QR reorthonormalization, per-neuron exponents from the
//! Jacobian diagonal, the harmonic-mean Lyapunov matrix over edges, and the
//! max local exponent estimator from eigenvalue moduli.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Phi;
use crate::error::{Error, Result};
use crate::network::Network;

/// One Jacobian per time step, all square and of equal dimension.
#[derive(Debug, Clone)]
pub struct JacobianSequence {
    jacobians: Vec<DMatrix<f64>>,
    dt_norm: f64,
}

impl JacobianSequence {
    pub fn new(jacobians: Vec<DMatrix<f64>>, dt_norm: f64) -> Result<Self> {
        if jacobians.is_empty() {
            return Err(Error::InvalidParameter("need at least one Jacobian".into()));
        }
        let dim = jacobians[0].nrows();
        if dim == 0 {
            return Err(Error::InvalidParameter("Jacobian dimension must be >= 1".into()));
        }
        for (t, j) in jacobians.iter().enumerate() {
            if j.nrows() != dim || j.ncols() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "Jacobian {} is {}x{}, expected {dim}x{dim}",
                    t,
                    j.nrows(),
                    j.ncols()
                )));
            }
            if j.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteInput(format!("Jacobian {t}")));
            }
        }
        Ok(JacobianSequence { jacobians, dt_norm })
    }

    pub fn len(&self) -> usize {
        self.jacobians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.jacobians.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.jacobians[0].nrows()
    }

    pub fn dt_norm(&self) -> f64 {
        self.dt_norm
    }

    pub fn iter(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.jacobians.iter()
    }
}

/// Full spectrum (sorted descending), per-neuron diagonal-estimator
/// exponents, and the number of steps used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub spectrum: Vec<f64>,
    pub per_neuron: Vec<f64>,
    #[serde(rename = "T")]
    pub t: usize,
}

impl LyapunovReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Edge-indexed harmonic means of neighboring exponents. `matrix[(i, j)]` is
/// the value for the synapse j -> i; non-edges are zero. `degenerate_edges`
/// counts edges whose harmonic mean was undefined (zero exponent in the
/// neighbor set or vanishing reciprocal sum) and therefore zeroed.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovMatrix {
    pub matrix: DMatrix<f64>,
    pub degenerate_edges: usize,
}

/// Jacobian of the rate map at `h_prev`:
/// `D_ij = (1 - dt) delta_ij + dt * W_ij * phi'(h_j)`.
pub fn jacobian_at(
    h_prev: &DVector<f64>,
    w: &DMatrix<f64>,
    dt_norm: f64,
    phi: Phi,
) -> Result<DMatrix<f64>> {
    let dts = DVector::from_element(h_prev.len(), dt_norm);
    jacobian_at_hetero(h_prev, w, &dts, phi)
}

/// Heterogeneous-timescale Jacobian:
/// `D_ij = (1 - dt_i) delta_ij + dt_i * W_ij * phi'(h_j)`.
pub fn jacobian_at_hetero(
    h_prev: &DVector<f64>,
    w: &DMatrix<f64>,
    dt_norms: &DVector<f64>,
    phi: Phi,
) -> Result<DMatrix<f64>> {
    let n = h_prev.len();
    if w.nrows() != n || w.ncols() != n || dt_norms.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "h has {n} units, W is {}x{}, dt_norms has {}",
            w.nrows(),
            w.ncols(),
            dt_norms.len()
        )));
    }
    let dphi: Vec<f64> = (0..n).map(|j| phi.derivative(h_prev[j])).collect();
    let mut jac = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut v = dt_norms[i] * w[(i, j)] * dphi[j];
            if i == j {
                v += 1.0 - dt_norms[i];
            }
            jac[(i, j)] = v;
        }
    }
    Ok(jac)
}

/// Diagonal of the heterogeneous Jacobian without materializing the matrix:
/// `d_i = (1 - dt_i) + dt_i * W_ii * phi'(h_i)`.
pub fn jacobian_diag_hetero(
    h_prev: &DVector<f64>,
    w: &DMatrix<f64>,
    dt_norms: &DVector<f64>,
    phi: Phi,
) -> DVector<f64> {
    DVector::from_fn(h_prev.len(), |i, _| {
        (1.0 - dt_norms[i]) + dt_norms[i] * w[(i, i)] * phi.derivative(h_prev[i])
    })
}

/// Full Lyapunov spectrum by QR reorthonormalization.
///
/// Q starts as the identity; each step QR-decomposes `J_t Q_t` with the
/// diagonal of R forced positive by column sign flips. `lambda_k` is the mean
/// of `log r_t^k`. The per-neuron estimator is the running mean of
/// `log |(J_t)_ii|` (a zero diagonal entry yields -inf for that neuron).
pub fn lyapunov_spectrum(jacobians: &JacobianSequence) -> Result<LyapunovReport> {
    let dim = jacobians.dim();
    let steps = jacobians.len();
    let mut q = DMatrix::<f64>::identity(dim, dim);
    let mut log_r = vec![0.0_f64; dim];
    let mut log_diag = vec![0.0_f64; dim];

    for (t, jac) in jacobians.iter().enumerate() {
        for i in 0..dim {
            log_diag[i] += jac[(i, i)].abs().ln();
        }
        let z = jac * &q;
        let qr = z.qr();
        let mut new_q = qr.q();
        let r = qr.r();
        for k in 0..dim {
            let rkk = r[(k, k)];
            if rkk == 0.0 {
                return Err(Error::SingularR { step: t, index: k });
            }
            log_r[k] += rkk.abs().ln();
            if rkk < 0.0 {
                for row in 0..dim {
                    new_q[(row, k)] = -new_q[(row, k)];
                }
            }
        }
        q = new_q;
    }

    let t = steps as f64;
    let mut spectrum: Vec<f64> = log_r.iter().map(|s| s / t).collect();
    spectrum.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let per_neuron: Vec<f64> = log_diag.iter().map(|s| s / t).collect();
    Ok(LyapunovReport {
        spectrum,
        per_neuron,
        t: steps,
    })
}

/// Per-neuron exponents from a stream of Jacobian diagonals: the mean of
/// `log |d_i|` across steps. Streaming counterpart of the diagonal estimator
/// in [`lyapunov_spectrum`] for runs too long to store.
pub fn per_neuron_exponents(
    diagonals: impl Iterator<Item = DVector<f64>>,
) -> Result<DVector<f64>> {
    let mut acc: Option<DVector<f64>> = None;
    let mut steps = 0usize;
    for diag in diagonals {
        match &mut acc {
            None => acc = Some(diag.map(|d| d.abs().ln())),
            Some(a) => {
                if a.len() != diag.len() {
                    return Err(Error::ShapeMismatch("diagonal length changed".into()));
                }
                for i in 0..a.len() {
                    a[i] += diag[i].abs().ln();
                }
            }
        }
        steps += 1;
    }
    let acc = acc.ok_or_else(|| Error::InvalidParameter("no diagonals supplied".into()))?;
    Ok(acc / steps as f64)
}

/// Harmonic-mean Lyapunov matrix over the network's edges.
///
/// For the edge j -> i, the exponent set is the union of the undirected
/// neighborhoods of i and j (node-set union first, shared neighbors counted
/// once); i and j are excluded unless the edge is reciprocal. The entry is
/// the plain harmonic mean |S| / sum(1/lambda). Undefined means (zero
/// exponent, vanishing reciprocal sum, empty set) zero the entry and bump
/// the diagnostic counter.
///
/// `per_neuron` is indexed by global neuron id and must cover all alive
/// neurons.
pub fn lyapunov_matrix(net: &Network, per_neuron: &[f64]) -> Result<LyapunovMatrix> {
    let n = net.n_total();
    if per_neuron.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} exponents for {} neurons",
            per_neuron.len(),
            n
        )));
    }
    for node in net.alive_nodes() {
        if !per_neuron[node].is_finite() {
            return Err(Error::NonFiniteInput(format!("exponent of neuron {node}")));
        }
    }

    let adj = net.undirected_adjacency();
    let mut matrix = DMatrix::zeros(n, n);
    let mut degenerate = 0usize;

    for (src, dst, _) in net.edges() {
        let mut set: BTreeSet<usize> = adj[src].union(&adj[dst]).copied().collect();
        let mutual = net.has_edge(dst, src);
        if !mutual {
            set.remove(&src);
            set.remove(&dst);
        }
        let value = harmonic_mean(set.iter().map(|&k| per_neuron[k]));
        match value {
            Some(v) => matrix[(dst, src)] = v,
            None => degenerate += 1,
        }
    }
    Ok(LyapunovMatrix {
        matrix,
        degenerate_edges: degenerate,
    })
}

/// Plain harmonic mean: count / sum of reciprocals. `None` when the set is
/// empty, contains a zero, or the reciprocal sum vanishes or overflows.
fn harmonic_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut count = 0usize;
    let mut recip_sum = 0.0_f64;
    for v in values {
        if v == 0.0 {
            return None;
        }
        recip_sum += 1.0 / v;
        count += 1;
    }
    if count == 0 || recip_sum == 0.0 || !recip_sum.is_finite() {
        return None;
    }
    let hm = count as f64 / recip_sum;
    hm.is_finite().then_some(hm)
}

/// Per-neuron exponents of the network's heterogeneous rate map along a
/// noise-driven trajectory, using the streaming diagonal estimator. Returns
/// a vector indexed by global neuron id (dead neurons get 0).
///
/// The map's per-neuron step fraction is `dt_ms / tau_m`, clamped into
/// (0, 1].
pub fn network_per_neuron_exponents(
    net: &Network,
    dt_ms: f64,
    phi: Phi,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let (w, ids) = net.weight_matrix();
    let n = ids.len();
    if n == 0 {
        return Err(Error::InvalidParameter("network has no alive neurons".into()));
    }
    // Upper clamp strictly below one: a memoryless unit (tau <= dt) has
    // J_ii = 0 and an undefined log for the diagonal estimator.
    let dt_norms = DVector::from_iterator(
        n,
        ids.iter().map(|&id| (dt_ms / net.tau_m(id)).clamp(1e-6, 1.0 - 1e-9)),
    );
    let traj = crate::dynamics::simulate_discrete_map(&w, &dt_norms, phi, steps, noise_sigma, seed)?;
    let compact = per_neuron_exponents(
        (0..traj.steps()).map(|t| {
            jacobian_diag_hetero(&traj.states.row(t).transpose(), &w, &dt_norms, phi)
        }),
    )?;
    let mut global = vec![0.0; net.n_total()];
    for (c, &id) in ids.iter().enumerate() {
        global[id] = compact[c];
    }
    Ok(global)
}

/// Full Lyapunov report of the network's rate map over a noise-driven
/// trajectory (QR reorthonormalization over the stored Jacobians, so keep
/// `steps` moderate on large networks). Spectrum and per-neuron entries are
/// indexed over alive neurons in ascending id order.
pub fn network_spectrum(
    net: &Network,
    dt_ms: f64,
    phi: Phi,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<LyapunovReport> {
    let (w, ids) = net.weight_matrix();
    let n = ids.len();
    if n == 0 {
        return Err(Error::InvalidParameter("network has no alive neurons".into()));
    }
    let dt_norms = DVector::from_iterator(
        n,
        ids.iter().map(|&id| (dt_ms / net.tau_m(id)).clamp(1e-6, 1.0 - 1e-9)),
    );
    let traj = crate::dynamics::simulate_discrete_map(&w, &dt_norms, phi, steps, noise_sigma, seed)?;
    let jacobians: Vec<DMatrix<f64>> = (0..traj.steps())
        .map(|t| jacobian_at_hetero(&traj.states.row(t).transpose(), &w, &dt_norms, phi))
        .collect::<Result<_>>()?;
    let mean_dt = dt_norms.sum() / n as f64;
    lyapunov_spectrum(&JacobianSequence::new(jacobians, mean_dt)?)
}

/// Max local Lyapunov exponent from eigenvalue moduli:
/// for each step t, compute the moduli of the eigenvalues of
/// `alpha * U + D(t) * W_hat`, track the k-th largest modulus across steps,
/// and return the largest mean log-modulus.
///
/// `d_seq` holds the diagonals of the D(t) matrices.
pub fn max_local_le(
    u: &DMatrix<f64>,
    w_hat: &DMatrix<f64>,
    d_seq: &[DVector<f64>],
    alpha: f64,
) -> Result<f64> {
    let n = u.nrows();
    if u.ncols() != n || w_hat.nrows() != n || w_hat.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "U is {}x{}, W_hat is {}x{}",
            u.nrows(),
            u.ncols(),
            w_hat.nrows(),
            w_hat.ncols()
        )));
    }
    if d_seq.is_empty() {
        return Err(Error::InvalidParameter("d_seq must be nonempty".into()));
    }
    let mut acc = vec![0.0_f64; n];
    for d in d_seq {
        if d.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "diagonal has {} entries, expected {n}",
                d.len()
            )));
        }
        let mut m = w_hat.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= d[i];
            }
        }
        m += u * alpha;
        let schur =
            nalgebra::Schur::try_new(m, 1e-12, 100_000).ok_or(Error::EigenSolverFailure)?;
        let mut moduli: Vec<f64> = schur.complex_eigenvalues().iter().map(|e| e.norm()).collect();
        moduli.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        for k in 0..n {
            acc[k] += moduli[k].ln();
        }
    }
    let t = d_seq.len() as f64;
    Ok(acc
        .iter()
        .map(|s| s / t)
        .fold(f64::NEG_INFINITY, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NeuronParams;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn jacobian_full_dt_identity_phi_is_w() {
        let w = DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.9, 0.0]);
        let h = DVector::from_column_slice(&[0.3, 0.6]);
        let jac = jacobian_at(&h, &w, 1.0, Phi::Identity).unwrap();
        assert_relative_eq!(jac, w, epsilon = 1e-15);
    }

    #[test]
    fn jacobian_zero_dt_is_identity() {
        let w = DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.9, 0.0]);
        let h = DVector::from_column_slice(&[0.3, 0.6]);
        let jac = jacobian_at(&h, &w, 0.0, Phi::Tanh).unwrap();
        assert_relative_eq!(jac, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn jacobian_tanh_at_origin() {
        let w = DMatrix::from_row_slice(2, 2, &[0.1, -0.4, 0.9, 0.2]);
        let h = DVector::zeros(2);
        let dt = 0.3;
        let jac = jacobian_at(&h, &w, dt, Phi::Tanh).unwrap();
        let expected = DMatrix::identity(2, 2) * (1.0 - dt) + &w * dt;
        assert_relative_eq!(jac, expected, epsilon = 1e-15);
    }

    #[test]
    fn spectrum_constant_diagonal() {
        let j = DMatrix::from_diagonal(&DVector::from_column_slice(&[2.0, 0.5]));
        let seq = JacobianSequence::new(vec![j; 37], 1.0).unwrap();
        let report = lyapunov_spectrum(&seq).unwrap();
        assert!((report.spectrum[0] - 2.0_f64.ln()).abs() < 1e-12);
        assert!((report.spectrum[1] + 2.0_f64.ln()).abs() < 1e-12);
        assert!((report.per_neuron[0] - 2.0_f64.ln()).abs() < 1e-12);
        assert!((report.per_neuron[1] + 2.0_f64.ln()).abs() < 1e-12);
        assert_eq!(report.t, 37);
    }

    #[test]
    fn spectrum_constant_diagonal_property() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let diag: Vec<f64> = (0..n)
                .map(|_| {
                    let mag = rng.gen_range(0.2..3.0);
                    if rng.gen::<bool>() {
                        mag
                    } else {
                        -mag
                    }
                })
                .collect();
            let j = DMatrix::from_diagonal(&DVector::from_column_slice(&diag));
            let seq = JacobianSequence::new(vec![j; 11], 1.0).unwrap();
            let report = lyapunov_spectrum(&seq).unwrap();
            let mut expected: Vec<f64> = diag.iter().map(|a| a.abs().ln()).collect();
            for (i, &e) in expected.iter().enumerate() {
                assert!((report.per_neuron[i] - e).abs() < 1e-12);
            }
            expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
            for (got, want) in report.spectrum.iter().zip(&expected) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn spectrum_rotation_is_neutral() {
        let theta = 0.7_f64;
        let j = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let seq = JacobianSequence::new(vec![j; 200], 1.0).unwrap();
        let report = lyapunov_spectrum(&seq).unwrap();
        assert!(report.spectrum.iter().all(|l| l.abs() < 1e-10));
    }

    #[test]
    fn spectrum_is_pure() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let jacs: Vec<DMatrix<f64>> = (0..25)
            .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() - 0.5) + DMatrix::identity(3, 3))
            .collect();
        let seq = JacobianSequence::new(jacs, 1.0).unwrap();
        let a = lyapunov_spectrum(&seq).unwrap();
        let b = lyapunov_spectrum(&seq).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn volume_growth_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let jacs: Vec<DMatrix<f64>> = (0..40)
            .map(|_| {
                DMatrix::identity(4, 4) + DMatrix::from_fn(4, 4, |_, _| 0.2 * (rng.gen::<f64>() - 0.5))
            })
            .collect();
        let mean_log_det = jacs
            .iter()
            .map(|j| j.determinant().abs().ln())
            .sum::<f64>()
            / jacs.len() as f64;
        let seq = JacobianSequence::new(jacs, 1.0).unwrap();
        let report = lyapunov_spectrum(&seq).unwrap();
        let sum: f64 = report.spectrum.iter().sum();
        assert!(
            (sum - mean_log_det).abs() < 1e-8,
            "sum {sum} vs volume {mean_log_det}"
        );
    }

    #[test]
    fn singular_r_reports_step() {
        let good = DMatrix::identity(2, 2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let seq = JacobianSequence::new(vec![good, bad], 1.0).unwrap();
        match lyapunov_spectrum(&seq) {
            Err(Error::SingularR { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected singular-R, got {other:?}"),
        }
    }

    #[test]
    fn per_neuron_streaming_matches_batch() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let jacs: Vec<DMatrix<f64>> = (0..30)
            .map(|_| DMatrix::from_fn(3, 3, |_, _| rng.gen::<f64>() + 0.1))
            .collect();
        let seq = JacobianSequence::new(jacs.clone(), 1.0).unwrap();
        let report = lyapunov_spectrum(&seq).unwrap();
        let streamed =
            per_neuron_exponents(jacs.iter().map(|j| j.diagonal())).unwrap();
        for i in 0..3 {
            assert!((report.per_neuron[i] - streamed[i]).abs() < 1e-12);
        }
    }

    fn path4() -> Network {
        Network::new(
            4,
            vec![(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)],
            vec![
                NeuronParams {
                    tau_m: 20.0,
                    leak: 1.0
                };
                4
            ],
            vec![true; 4],
        )
        .unwrap()
    }

    #[test]
    fn lyapunov_matrix_equal_exponents() {
        let net = path4();
        let lm = lyapunov_matrix(&net, &[0.5; 4]).unwrap();
        // every defined entry is the harmonic mean of equal values
        for (s, d, _) in net.edges() {
            assert_relative_eq!(lm.matrix[(d, s)], 0.5, epsilon = 1e-12);
        }
        assert_eq!(lm.degenerate_edges, 0);
    }

    #[test]
    fn lyapunov_matrix_hand_harmonic_mean() {
        // edge 1->2 of the path: neighbor union {0,1,2,3} minus endpoints
        // {1,2} (not reciprocal) leaves exponents of nodes 0 and 3.
        let net = path4();
        let lm = lyapunov_matrix(&net, &[1.0, 9.0, 9.0, 0.25]).unwrap();
        assert_relative_eq!(lm.matrix[(2, 1)], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_matrix_singular_denominator() {
        let net = path4();
        let lm = lyapunov_matrix(&net, &[1.0, 9.0, 9.0, -1.0]).unwrap();
        assert_eq!(lm.matrix[(2, 1)], 0.0);
        assert!(lm.degenerate_edges >= 1);
    }

    #[test]
    fn lyapunov_matrix_zero_off_edges() {
        let net = path4();
        let lm = lyapunov_matrix(&net, &[0.3, 0.7, 0.9, 0.2]).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if !net.has_edge(j, i) {
                    assert_eq!(lm.matrix[(i, j)], 0.0, "({i},{j})");
                }
            }
        }
    }

    /// Fully independent recomputation from the formula: undirected
    /// neighborhoods by scanning edges, set union, reciprocal handling.
    fn brute_force_lyapunov_matrix(net: &Network, lambda: &[f64]) -> DMatrix<f64> {
        let n = net.n_total();
        let mut out = DMatrix::zeros(n, n);
        let neighborhood = |v: usize| -> BTreeSet<usize> {
            let mut set = BTreeSet::new();
            for (s, d, _) in net.edges() {
                if s == v {
                    set.insert(d);
                }
                if d == v {
                    set.insert(s);
                }
            }
            set
        };
        for (s, d, _) in net.edges() {
            let mut union: BTreeSet<usize> =
                neighborhood(s).union(&neighborhood(d)).copied().collect();
            if !(net.has_edge(s, d) && net.has_edge(d, s)) {
                union.remove(&s);
                union.remove(&d);
            }
            if union.is_empty() {
                continue;
            }
            let mut recip = 0.0;
            let mut broken = false;
            for &k in &union {
                if lambda[k] == 0.0 {
                    broken = true;
                    break;
                }
                recip += 1.0 / lambda[k];
            }
            if broken || recip == 0.0 {
                continue;
            }
            out[(d, s)] = union.len() as f64 / recip;
        }
        out
    }

    #[test]
    fn lyapunov_matrix_matches_brute_force() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for _ in 0..30 {
            let n = rng.gen_range(2..=8);
            let mut edges = std::collections::BTreeSet::new();
            for _ in 0..rng.gen_range(1..2 * n) {
                let s = rng.gen_range(0..n);
                let d = rng.gen_range(0..n);
                if s != d {
                    edges.insert((s, d));
                }
            }
            if edges.is_empty() {
                continue;
            }
            let net = Network::new(
                n,
                edges.iter().map(|&(s, d)| (s, d, 1.0)),
                vec![
                    NeuronParams {
                        tau_m: 20.0,
                        leak: 1.0
                    };
                    n
                ],
                vec![true; n],
            )
            .unwrap();
            let lambda: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let fast = lyapunov_matrix(&net, &lambda).unwrap();
            let slow = brute_force_lyapunov_matrix(&net, &lambda);
            assert_relative_eq!(fast.matrix, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn max_local_le_identity_argument() {
        let u = DMatrix::identity(3, 3);
        let w = DMatrix::zeros(3, 3);
        let d = vec![DVector::from_element(3, 0.7); 4];
        let le = max_local_le(&u, &w, &d, 1.0).unwrap();
        assert!(le.abs() < 1e-12);
    }

    #[test]
    fn max_local_le_scalar_matrix() {
        let u = DMatrix::identity(2, 2);
        let w = DMatrix::zeros(2, 2);
        let d = vec![DVector::from_element(2, 1.0); 3];
        let le = max_local_le(&u, &w, &d, 0.5).unwrap();
        assert!((le - 0.5_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn max_local_le_hand_eigenvalues() {
        let u = DMatrix::zeros(2, 2);
        let w = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 2.0]));
        let d = vec![DVector::from_element(2, 1.0)];
        let le = max_local_le(&u, &w, &d, 0.0).unwrap();
        assert!((le - 2.0_f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn report_json_shape() {
        let report = LyapunovReport {
            spectrum: vec![0.5, -0.5],
            per_neuron: vec![0.1, 0.2],
            t: 10,
        };
        let json = report.to_json().unwrap();
        assert_eq!(
            json,
            "{\"spectrum\":[0.5,-0.5],\"per_neuron\":[0.1,0.2],\"T\":10}"
        );
    }
}

//! Simulators for the recurrent layer: spiking LIF dynamics, the
//! noise-driven linear surrogate, and the discrete-time firing-rate map, plus
//! rate encoding and firing-rate/covariance estimators.
//!
//! All simulators are pure functions of (inputs, seed); running many seeds in
//! parallel is safe.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;

/// Leaky integrate-and-fire configuration. Per-neuron membrane time
/// constants live in [`Network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LIFConfig {
    pub v_thresh: f64,
    pub v_reset: f64,
    /// Simulation step in ms.
    pub dt: f64,
    /// Refractory period in steps.
    pub refractory: usize,
}

impl Default for LIFConfig {
    fn default() -> Self {
        // The numeric constants are conventional defaults, config-exposed.
        LIFConfig {
            v_thresh: 1.0,
            v_reset: 0.0,
            dt: 1.0,
            refractory: 2,
        }
    }
}

impl LIFConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_reset < self.v_thresh) {
            return Err(Error::InvalidParameter(format!(
                "v_reset {} must be below v_thresh {}",
                self.v_reset, self.v_thresh
            )));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt {} must be positive",
                self.dt
            )));
        }
        Ok(())
    }
}

/// Binary spike raster over discrete simulation steps.
///
/// Columns map to neuron ids via `neuron_ids` (the alive neurons at
/// simulation time, ascending), rows to steps.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeRecord {
    steps: usize,
    neuron_ids: Vec<usize>,
    data: Vec<bool>,
    dt: f64,
}

impl SpikeRecord {
    pub fn zeros(steps: usize, neuron_ids: Vec<usize>, dt: f64) -> Self {
        let cols = neuron_ids.len();
        SpikeRecord {
            steps,
            neuron_ids,
            data: vec![false; steps * cols],
            dt,
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_neurons(&self) -> usize {
        self.neuron_ids.len()
    }

    pub fn neuron_ids(&self) -> &[usize] {
        &self.neuron_ids
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn get(&self, step: usize, col: usize) -> bool {
        self.data[step * self.neuron_ids.len() + col]
    }

    pub fn set(&mut self, step: usize, col: usize, value: bool) {
        self.data[step * self.neuron_ids.len() + col] = value;
    }

    /// Spike count per column over all steps.
    pub fn spike_counts(&self) -> Vec<usize> {
        let cols = self.neuron_ids.len();
        let mut counts = vec![0usize; cols];
        for step in 0..self.steps {
            for c in 0..cols {
                if self.data[step * cols + c] {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// CSV document: header of neuron indices, one 0/1 row per step.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.neuron_ids.iter().map(|id| id.to_string()))?;
        let cols = self.neuron_ids.len();
        for step in 0..self.steps {
            w.write_record(
                (0..cols).map(|c| if self.data[step * cols + c] { "1" } else { "0" }),
            )?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Real-valued state trajectory: rows are steps, columns are units.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: DMatrix<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.states.nrows()
    }

    pub fn dims(&self) -> usize {
        self.states.ncols()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record((0..self.dims()).map(|c| c.to_string()))?;
        for r in 0..self.steps() {
            w.write_record((0..self.dims()).map(|c| self.states[(r, c)].to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidParameter(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

/// Named nonlinearity of the firing-rate map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phi {
    Tanh,
    Relu,
    Identity,
}

impl Phi {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Phi::Tanh => x.tanh(),
            Phi::Relu => x.max(0.0),
            Phi::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Phi::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Phi::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Phi::Identity => 1.0,
        }
    }
}

impl FromStr for Phi {
    type Err = Error;

    fn from_str(s: &str) -> Result<Phi> {
        match s {
            "tanh" => Ok(Phi::Tanh),
            "relu" => Ok(Phi::Relu),
            "identity" => Ok(Phi::Identity),
            other => Err(Error::UnknownNonlinearity(other.to_string())),
        }
    }
}

impl fmt::Display for Phi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phi::Tanh => "tanh",
            Phi::Relu => "relu",
            Phi::Identity => "identity",
        };
        f.write_str(name)
    }
}

/// Step-by-step LIF integrator over the alive neurons of a network:
/// exponential-Euler membrane decay, delta-current synapses, recurrent
/// spikes arriving one step after emission. Membrane potentials start at
/// `v_reset`.
pub struct LifStepper {
    cfg: LIFConfig,
    decay: Vec<f64>,
    v: Vec<f64>,
    refractory: Vec<usize>,
    out: Vec<Vec<(usize, f64)>>,
    prev_spikes: Vec<usize>,
    spiked: Vec<usize>,
}

impl LifStepper {
    /// Build a stepper; returns it with the alive neuron ids its columns map
    /// to.
    pub fn new(net: &Network, cfg: &LIFConfig) -> Result<(Self, Vec<usize>)> {
        cfg.validate()?;
        let ids = net.alive_nodes();
        let n = ids.len();
        let mut index = vec![usize::MAX; net.n_total()];
        for (c, &id) in ids.iter().enumerate() {
            index[id] = c;
        }
        let mut out: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (s, d, w) in net.edges() {
            out[index[s]].push((index[d], w));
        }
        let decay = ids.iter().map(|&id| (-cfg.dt / net.tau_m(id)).exp()).collect();
        Ok((
            LifStepper {
                cfg: *cfg,
                decay,
                v: vec![cfg.v_reset; n],
                refractory: vec![0; n],
                out,
                prev_spikes: Vec::new(),
                spiked: Vec::new(),
            },
            ids,
        ))
    }

    pub fn n_neurons(&self) -> usize {
        self.v.len()
    }

    /// Advance one step under the given external drive (one entry per alive
    /// neuron); recurrent input from the previous step's spikes is added
    /// internally. Returns the columns that spiked.
    pub fn step(&mut self, external_drive: &[f64]) -> &[usize] {
        let n = self.v.len();
        debug_assert_eq!(external_drive.len(), n);
        let mut drive = external_drive.to_vec();
        for &pre in &self.prev_spikes {
            for &(post, w) in &self.out[pre] {
                drive[post] += w;
            }
        }
        self.spiked.clear();
        for i in 0..n {
            if self.refractory[i] > 0 {
                self.refractory[i] -= 1;
                self.v[i] = self.cfg.v_reset;
                continue;
            }
            self.v[i] = self.v[i] * self.decay[i] + drive[i];
            if self.v[i] >= self.cfg.v_thresh {
                self.v[i] = self.cfg.v_reset;
                self.refractory[i] = self.cfg.refractory;
                self.spiked.push(i);
            }
        }
        std::mem::swap(&mut self.prev_spikes, &mut self.spiked);
        &self.prev_spikes
    }
}

/// Simulate the spiking network with exponential-Euler membrane decay and
/// delta-current synapses.
///
/// `input_spikes` columns are input channels; `input_weights` has one row per
/// channel and one column per alive neuron. Recurrent spikes arrive one step
/// after emission. Membrane potentials start at `v_reset`; the base model
/// draws no random numbers, so `seed` only labels the run (the simulator
/// interface is uniformly seeded).
pub fn simulate_lif(
    net: &Network,
    cfg: &LIFConfig,
    input_spikes: &SpikeRecord,
    input_weights: &DMatrix<f64>,
    steps: usize,
    seed: u64,
) -> Result<SpikeRecord> {
    let _ = seed;
    let (mut stepper, ids) = LifStepper::new(net, cfg)?;
    let n = ids.len();
    if input_spikes.steps() < steps {
        return Err(Error::ShapeMismatch(format!(
            "input raster has {} steps, need {}",
            input_spikes.steps(),
            steps
        )));
    }
    if input_weights.nrows() != input_spikes.n_neurons() || input_weights.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "input weights {}x{} vs {} channels and {} alive neurons",
            input_weights.nrows(),
            input_weights.ncols(),
            input_spikes.n_neurons(),
            n
        )));
    }

    let mut rec = SpikeRecord::zeros(steps, ids, cfg.dt);
    let mut drive = vec![0.0; n];
    for t in 0..steps {
        drive.iter_mut().for_each(|d| *d = 0.0);
        for ch in 0..input_spikes.n_neurons() {
            if input_spikes.get(t, ch) {
                for i in 0..n {
                    drive[i] += input_weights[(ch, i)];
                }
            }
        }
        for &i in stepper.step(&drive) {
            rec.set(t, i, true);
        }
    }
    Ok(rec)
}

/// Bernoulli rate encoding of a real-valued series.
///
/// Each channel is min-max normalized to [0, 1] (using `bounds` when given,
/// otherwise the channel's own range) and spikes independently per step with
/// probability `value * rate_max_hz * dt_ms / 1000`, clipped to [0, 1].
/// A degenerate channel (max == min) encodes as silence.
pub fn rate_encode(
    series: &DMatrix<f64>,
    bounds: Option<&[(f64, f64)]>,
    rate_max_hz: f64,
    dt_ms: f64,
    seed: u64,
) -> Result<SpikeRecord> {
    if series.nrows() == 0 || series.ncols() == 0 {
        return Err(Error::EmptySeries);
    }
    let channels = series.ncols();
    let bounds: Vec<(f64, f64)> = match bounds {
        Some(b) => {
            if b.len() != channels {
                return Err(Error::ShapeMismatch(format!(
                    "{} bounds for {} channels",
                    b.len(),
                    channels
                )));
            }
            b.to_vec()
        }
        None => (0..channels)
            .map(|c| {
                let col = series.column(c);
                (col.min(), col.max())
            })
            .collect(),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rec = SpikeRecord::zeros(series.nrows(), (0..channels).collect(), dt_ms);
    let scale = rate_max_hz * dt_ms / 1000.0;
    for t in 0..series.nrows() {
        for c in 0..channels {
            let (lo, hi) = bounds[c];
            let norm = if hi > lo {
                ((series[(t, c)] - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let p = (norm * scale).clamp(0.0, 1.0);
            if rng.gen::<f64>() < p {
                rec.set(t, c, true);
            }
        }
    }
    Ok(rec)
}

/// Per-channel min/max of a series, for fixing encoder bounds on a training
/// split.
pub fn channel_bounds(series: &DMatrix<f64>) -> Vec<(f64, f64)> {
    (0..series.ncols())
        .map(|c| {
            let col = series.column(c);
            (col.min(), col.max())
        })
        .collect()
}

/// Per-neuron firing rate in Hz over the trailing `window` steps.
pub fn estimate_firing_rates(rec: &SpikeRecord, window: usize) -> Result<DVector<f64>> {
    if window == 0 || window > rec.steps() {
        return Err(Error::InvalidWindow(format!(
            "window {} for a {}-step raster",
            window,
            rec.steps()
        )));
    }
    let cols = rec.n_neurons();
    let start = rec.steps() - window;
    let mut counts = vec![0.0; cols];
    for t in start..rec.steps() {
        for c in 0..cols {
            if rec.get(t, c) {
                counts[c] += 1.0;
            }
        }
    }
    let seconds = window as f64 * rec.dt() / 1000.0;
    Ok(DVector::from_iterator(cols, counts.into_iter().map(|c| c / seconds)))
}

/// Euler-Maruyama integration of `dx/dt = A x + b + sigma * xi(t)`.
///
/// Row 0 of the trajectory is `x0`; each later row advances one step:
/// `x += dt * (A x + b) + sigma * sqrt(dt) * xi`. A warning is logged when
/// the spectral abscissa of `A` appears positive (the step may be unstable);
/// this is advisory only.
pub fn simulate_linear_noise(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    sigma: f64,
    steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::ShapeMismatch(format!("A is {}x{}", a.nrows(), a.ncols())));
    }
    if b.len() != n || x0.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "A is {n}x{n} but b has {} and x0 has {} entries",
            b.len(),
            x0.len()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt {dt} must be positive")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("sigma {sigma} must be >= 0")));
    }
    if a.iter().any(|v| !v.is_finite())
        || b.iter().any(|v| !v.is_finite())
        || x0.iter().any(|v| !v.is_finite())
    {
        return Err(Error::NonFiniteInput("simulate_linear_noise".into()));
    }

    if let Some(abscissa) = spectral_abscissa(a) {
        if abscissa > 0.0 {
            log::warn!(
                "linear surrogate has spectral abscissa {abscissa:.4} > 0; Euler step dt={dt} may diverge"
            );
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise_scale = sigma * dt.sqrt();
    let mut x = x0.clone();
    let mut states = DMatrix::zeros(steps, n);
    states.row_mut(0).copy_from(&x.transpose());
    for t in 1..steps {
        let mut next = &x + (a * &x + b) * dt;
        if sigma > 0.0 {
            for i in 0..n {
                next[i] += noise_scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
        x = next;
        states.row_mut(t).copy_from(&x.transpose());
    }
    Ok(Trajectory { states, dt })
}

/// Largest real part among the eigenvalues of `a`, if the Schur iteration
/// converges.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> Option<f64> {
    if a.is_empty() {
        return None;
    }
    let schur = nalgebra::Schur::try_new(a.clone(), 1e-9, 10_000)?;
    let eigs = schur.complex_eigenvalues();
    eigs.iter().map(|e| e.re).fold(None, |acc, re| {
        Some(match acc {
            None => re,
            Some(m) => m.max(re),
        })
    })
}

/// Sample covariance of the post-burn-in trajectory rows. Symmetric PSD by
/// construction.
pub fn estimate_covariance(traj: &Trajectory, burn_in: usize) -> Result<DMatrix<f64>> {
    let total = traj.steps();
    if total < burn_in + 2 {
        return Err(Error::InsufficientSamples(format!(
            "{total} steps with burn_in {burn_in} leaves fewer than 2 samples"
        )));
    }
    let m = total - burn_in;
    let rows = traj.states.rows(burn_in, m);
    let mean = rows.row_sum() / m as f64;
    let mut centered = rows.clone_owned();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    Ok(centered.transpose() * &centered / (m as f64 - 1.0))
}

/// One step of the discrete-time firing-rate map
/// `h' = (1 - dt) h + dt * W phi(h)`.
pub fn discrete_map_step(
    h: &DVector<f64>,
    w: &DMatrix<f64>,
    dt_norm: f64,
    phi: Phi,
) -> Result<DVector<f64>> {
    if !(dt_norm > 0.0 && dt_norm <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "dt_norm {dt_norm} must lie in (0, 1]"
        )));
    }
    let dts = DVector::from_element(h.len(), dt_norm);
    discrete_map_step_hetero(h, w, &dts, phi)
}

/// Heterogeneous-timescale variant: per-unit step fractions `dt_norms`,
/// `h'_i = (1 - dt_i) h_i + dt_i * sum_j W_ij phi(h_j)`.
pub fn discrete_map_step_hetero(
    h: &DVector<f64>,
    w: &DMatrix<f64>,
    dt_norms: &DVector<f64>,
    phi: Phi,
) -> Result<DVector<f64>> {
    let n = h.len();
    if w.nrows() != n || w.ncols() != n || dt_norms.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "h has {n} units, W is {}x{}, dt_norms has {}",
            w.nrows(),
            w.ncols(),
            dt_norms.len()
        )));
    }
    let fired = h.map(|x| phi.apply(x));
    let drive = w * fired;
    Ok(DVector::from_fn(n, |i, _| {
        (1.0 - dt_norms[i]) * h[i] + dt_norms[i] * drive[i]
    }))
}

/// Run the rate map for `steps` steps from `h = 0` with i.i.d. Gaussian input
/// noise of scale `noise_sigma` injected inside the drive term. Row t of the
/// result is the state before step t (row 0 is the origin).
///
/// Additive input does not alter the map's Jacobian, so the trajectory is a
/// valid linearization path.
pub fn simulate_discrete_map(
    w: &DMatrix<f64>,
    dt_norms: &DVector<f64>,
    phi: Phi,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<Trajectory> {
    let n = w.nrows();
    if w.ncols() != n || dt_norms.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "W is {}x{}, dt_norms has {}",
            w.nrows(),
            w.ncols(),
            dt_norms.len()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidParameter("steps must be >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut h = DVector::zeros(n);
    let mut states = DMatrix::zeros(steps, n);
    states.row_mut(0).copy_from(&h.transpose());
    for t in 1..steps {
        let fired = h.map(|x| phi.apply(x));
        let drive = w * fired;
        let mut next = DVector::zeros(n);
        for i in 0..n {
            let noise = if noise_sigma > 0.0 {
                noise_sigma * rng.sample::<f64, _>(StandardNormal)
            } else {
                0.0
            };
            next[i] = (1.0 - dt_norms[i]) * h[i] + dt_norms[i] * (drive[i] + noise);
        }
        h = next;
        states.row_mut(t).copy_from(&h.transpose());
    }
    Ok(Trajectory { states, dt: 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{generate_small_world, NeuronParams};
    use approx::assert_relative_eq;

    fn single_neuron() -> Network {
        Network::new(
            1,
            std::iter::empty(),
            vec![NeuronParams {
                tau_m: 20.0,
                leak: 1.0,
            }],
            vec![true],
        )
        .unwrap()
    }

    fn constant_input(steps: usize, dt: f64) -> SpikeRecord {
        let mut rec = SpikeRecord::zeros(steps, vec![0], dt);
        for t in 0..steps {
            rec.set(t, 0, true);
        }
        rec
    }

    #[test]
    fn lif_zero_input_is_silent() {
        let net = single_neuron();
        let cfg = LIFConfig::default();
        let input = SpikeRecord::zeros(100, vec![0], cfg.dt);
        let w_in = DMatrix::zeros(1, 1);
        let rec = simulate_lif(&net, &cfg, &input, &w_in, 100, 0).unwrap();
        assert_eq!(rec.spike_counts(), vec![0]);
    }

    #[test]
    fn lif_interspike_interval_matches_closed_form() {
        let net = single_neuron();
        let cfg = LIFConfig {
            v_thresh: 1.0,
            v_reset: 0.0,
            dt: 1.0,
            refractory: 0,
        };
        let drive = 0.1;
        let steps = 400;
        let input = constant_input(steps, cfg.dt);
        let w_in = DMatrix::from_element(1, 1, drive);
        let rec = simulate_lif(&net, &cfg, &input, &w_in, steps, 0).unwrap();

        // Analytic: v_k = I (1 - d^k)/(1 - d), spike at the first k with
        // v_k >= theta.
        let d = (-cfg.dt / 20.0_f64).exp();
        let k_star = ((1.0 - cfg.v_thresh * (1.0 - d) / drive).ln() / d.ln()).ceil();

        let spike_steps: Vec<usize> = (0..steps).filter(|&t| rec.get(t, 0)).collect();
        assert!(spike_steps.len() > 3);
        let isi = (spike_steps[2] - spike_steps[1]) as f64;
        assert!(
            (isi - k_star).abs() <= 1.0,
            "isi {isi} vs closed form {k_star}"
        );
    }

    #[test]
    fn lif_deterministic() {
        let net = generate_small_world(20, 4, 0.2, 0.8, 0.4, 3).unwrap();
        let cfg = LIFConfig::default();
        let input = rate_encode(
            &DMatrix::from_fn(200, 2, |r, c| ((r + c) as f64).sin()),
            None,
            400.0,
            cfg.dt,
            5,
        )
        .unwrap();
        let w_in = DMatrix::from_fn(2, 20, |r, c| 0.3 * ((r * 20 + c) as f64 * 0.7).sin());
        let a = simulate_lif(&net, &cfg, &input, &w_in, 200, 9).unwrap();
        let b = simulate_lif(&net, &cfg, &input, &w_in, 200, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lif_respects_refractory() {
        let net = single_neuron();
        let cfg = LIFConfig {
            v_thresh: 0.5,
            v_reset: 0.0,
            dt: 1.0,
            refractory: 3,
        };
        let steps = 50;
        let input = constant_input(steps, cfg.dt);
        let w_in = DMatrix::from_element(1, 1, 1.0); // suprathreshold every step
        let rec = simulate_lif(&net, &cfg, &input, &w_in, steps, 0).unwrap();
        let spikes: Vec<usize> = (0..steps).filter(|&t| rec.get(t, 0)).collect();
        assert!(spikes.len() > 2);
        for pair in spikes.windows(2) {
            assert!(pair[1] - pair[0] >= cfg.refractory + 1);
        }
    }

    #[test]
    fn lif_shape_mismatch() {
        let net = single_neuron();
        let cfg = LIFConfig::default();
        let input = SpikeRecord::zeros(10, vec![0], cfg.dt);
        let w_in = DMatrix::zeros(2, 1);
        assert!(matches!(
            simulate_lif(&net, &cfg, &input, &w_in, 10, 0),
            Err(Error::ShapeMismatch(_))
        ));
        let w_in = DMatrix::zeros(1, 1);
        assert!(simulate_lif(&net, &cfg, &input, &w_in, 11, 0).is_err());
    }

    #[test]
    fn rate_encode_zero_channel_is_silent() {
        let series = DMatrix::zeros(100, 1);
        let rec = rate_encode(&series, None, 500.0, 1.0, 1).unwrap();
        assert_eq!(rec.spike_counts(), vec![0]);
    }

    #[test]
    fn rate_encode_half_probability() {
        // constant channel pinned to the top of explicit bounds;
        // rate_max * dt / 1000 = 0.5
        let series = DMatrix::from_element(10_000, 1, 3.0);
        let rec = rate_encode(&series, Some(&[(0.0, 3.0)]), 500.0, 1.0, 42).unwrap();
        let rate = rec.spike_counts()[0] as f64 / 10_000.0;
        assert!((rate - 0.5).abs() < 0.02, "rate {rate}");
    }

    #[test]
    fn rate_encode_seeds_differ_counts_agree() {
        let series = DMatrix::from_element(20_000, 1, 1.0);
        let a = rate_encode(&series, Some(&[(0.0, 2.0)]), 400.0, 1.0, 1).unwrap();
        let b = rate_encode(&series, Some(&[(0.0, 2.0)]), 400.0, 1.0, 2).unwrap();
        assert_ne!(a, b);
        let (ca, cb) = (a.spike_counts()[0] as f64, b.spike_counts()[0] as f64);
        // expected p = 0.2 -> 4000 spikes, binomial sd ~ 57
        assert!((ca - 4000.0).abs() < 3.0 * 57.0);
        assert!((cb - 4000.0).abs() < 3.0 * 57.0);
    }

    #[test]
    fn rate_encode_empty_errors() {
        let series = DMatrix::<f64>::zeros(0, 0);
        assert!(matches!(
            rate_encode(&series, None, 100.0, 1.0, 0),
            Err(Error::EmptySeries)
        ));
    }

    #[test]
    fn firing_rates_silent_and_saturated() {
        let rec = SpikeRecord::zeros(200, vec![0, 1], 1.0);
        let rates = estimate_firing_rates(&rec, 100).unwrap();
        assert_eq!(rates, DVector::zeros(2));

        let mut rec = SpikeRecord::zeros(200, vec![0], 1.0);
        for t in 0..200 {
            rec.set(t, 0, true);
        }
        let rates = estimate_firing_rates(&rec, 100).unwrap();
        assert_relative_eq!(rates[0], 1000.0);
    }

    #[test]
    fn firing_rates_half_density() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let mut rec = SpikeRecord::zeros(10_000, vec![0], 1.0);
        for t in 0..10_000 {
            if rng.gen::<f64>() < 0.5 {
                rec.set(t, 0, true);
            }
        }
        let rates = estimate_firing_rates(&rec, 10_000).unwrap();
        // 3 binomial standard errors of 1000 * 0.5 Hz
        let se = 1000.0 * (0.25_f64 / 10_000.0).sqrt();
        assert!((rates[0] - 500.0).abs() < 3.0 * se, "rate {}", rates[0]);
    }

    #[test]
    fn firing_rates_window_validation() {
        let rec = SpikeRecord::zeros(10, vec![0], 1.0);
        assert!(estimate_firing_rates(&rec, 0).is_err());
        assert!(estimate_firing_rates(&rec, 11).is_err());
    }

    #[test]
    fn linear_noise_fixed_point() {
        let a = DMatrix::zeros(2, 2);
        let b = DVector::zeros(2);
        let x0 = DVector::zeros(2);
        let traj = simulate_linear_noise(&a, &b, &x0, 0.0, 100, 0.1, 0).unwrap();
        assert_eq!(traj.states, DMatrix::zeros(100, 2));
    }

    #[test]
    fn linear_noise_exponential_decay() {
        let a = DMatrix::from_diagonal_element(1, 1, -1.0);
        let b = DVector::zeros(1);
        let x0 = DVector::from_element(1, 1.0);
        let dt = 0.001;
        let steps = 1001;
        let traj = simulate_linear_noise(&a, &b, &x0, 0.0, steps, dt, 0).unwrap();
        let t_end = (steps - 1) as f64 * dt;
        assert!((traj.states[(steps - 1, 0)] - (-t_end).exp()).abs() < 1e-3);
    }

    #[test]
    fn linear_noise_matches_plain_euler_bit_for_bit() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, -0.2, -0.8]);
        let b = DVector::from_column_slice(&[0.1, -0.2]);
        let x0 = DVector::from_column_slice(&[1.0, 2.0]);
        let dt = 0.05;
        let traj = simulate_linear_noise(&a, &b, &x0, 0.0, 50, dt, 123).unwrap();
        let mut x = x0.clone();
        for t in 0..50 {
            assert_eq!(traj.states.row(t).transpose(), x);
            x = &x + (&a * &x + &b) * dt;
        }
    }

    #[test]
    fn ou_stationary_variance() {
        // dx = -x dt + dW has stationary variance 1/2 per coordinate.
        let a = DMatrix::from_diagonal_element(2, 2, -1.0);
        let b = DVector::zeros(2);
        let x0 = DVector::zeros(2);
        let dt = 0.01;
        let traj = simulate_linear_noise(&a, &b, &x0, 1.0, 1_000_000, dt, 7).unwrap();
        let cov = estimate_covariance(&traj, 10_000).unwrap();
        for i in 0..2 {
            assert!(
                (cov[(i, i)] - 0.5).abs() / 0.5 < 0.05,
                "var {} = {}",
                i,
                cov[(i, i)]
            );
        }
        assert!(cov[(0, 1)].abs() < 0.02);
    }

    #[test]
    fn covariance_of_constant_trajectory_is_zero() {
        let traj = Trajectory {
            states: DMatrix::from_element(50, 3, 2.5),
            dt: 1.0,
        };
        let cov = estimate_covariance(&traj, 0).unwrap();
        assert_relative_eq!(cov.norm(), 0.0);
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        for seed in 0..10u64 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let states = DMatrix::from_fn(40, 5, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            let cov = estimate_covariance(&Trajectory { states, dt: 1.0 }, 3).unwrap();
            assert_relative_eq!(cov.clone(), cov.transpose(), epsilon = 1e-12);
            let eigs = cov.symmetric_eigenvalues();
            assert!(eigs.iter().all(|&e| e >= -1e-10), "eigs {eigs}");
        }
    }

    #[test]
    fn covariance_needs_two_samples() {
        let traj = Trajectory {
            states: DMatrix::zeros(5, 2),
            dt: 1.0,
        };
        assert!(estimate_covariance(&traj, 4).is_err());
    }

    #[test]
    fn map_step_full_dt_identity_phi() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.5, 0.2]);
        let h = DVector::from_column_slice(&[0.3, -0.7]);
        let out = discrete_map_step(&h, &w, 1.0, Phi::Identity).unwrap();
        assert_relative_eq!(out, &w * &h, epsilon = 1e-15);
    }

    #[test]
    fn map_step_pure_leak() {
        let w = DMatrix::zeros(3, 3);
        let h = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let out = discrete_map_step(&h, &w, 0.25, Phi::Tanh).unwrap();
        assert_relative_eq!(out, &h * 0.75, epsilon = 1e-15);
    }

    #[test]
    fn map_step_hand_case_tanh() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.8, -0.6, 0.0]);
        let h = DVector::from_column_slice(&[0.2, -0.4]);
        let dt = 0.5;
        let out = discrete_map_step(&h, &w, dt, Phi::Tanh).unwrap();
        // scalar hand evaluation
        let h0 = (1.0 - dt) * 0.2 + dt * (0.8 * (-0.4_f64).tanh());
        let h1 = (1.0 - dt) * (-0.4) + dt * (-0.6 * (0.2_f64).tanh());
        assert!((out[0] - h0).abs() < 1e-12);
        assert!((out[1] - h1).abs() < 1e-12);
    }

    #[test]
    fn phi_parsing() {
        assert_eq!("tanh".parse::<Phi>().unwrap(), Phi::Tanh);
        assert!(matches!(
            "softplus".parse::<Phi>(),
            Err(Error::UnknownNonlinearity(_))
        ));
    }

    #[test]
    fn raster_csv_has_header_and_rows() {
        let mut rec = SpikeRecord::zeros(2, vec![3, 5], 1.0);
        rec.set(1, 0, true);
        let csv = rec.to_csv().unwrap();
        assert_eq!(csv, "3,5\n0,0\n1,0\n");
    }
}

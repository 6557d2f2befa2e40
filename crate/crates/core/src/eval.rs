//! Evaluation of a network on time-series forecasting: readout-neuron
//! selection by centrality, ridge-regression readout over exponentially
//! filtered spike traces, closed-loop autoregressive forecasting, and the
//! RMSE / valid-prediction-time / synaptic-operation metrics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::TimeSeries;
use crate::dynamics::{channel_bounds, LIFConfig, LifStepper, SpikeRecord};
use crate::error::{Error, Result};
use crate::network::{betweenness_centrality, Network};
use crate::seed::derive_seed;

/// Default validity threshold for the valid-prediction-time count.
pub const DEFAULT_VPT_EPSILON: f64 = 0.1;

/// Linear readout over a set of selected neurons. `weights` has one row per
/// selected neuron plus a trailing bias row, one column per output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Readout {
    pub selected_neurons: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub ridge_lambda: f64,
}

impl Readout {
    pub fn outputs(&self) -> usize {
        self.weights.first().map_or(0, |row| row.len())
    }

    /// Predict one output frame from the selected neurons' trace values.
    pub fn predict(&self, state: &[f64]) -> Vec<f64> {
        let outputs = self.outputs();
        let mut y = vec![0.0; outputs];
        for (k, &s) in state.iter().enumerate() {
            for o in 0..outputs {
                y[o] += s * self.weights[k][o];
            }
        }
        for o in 0..outputs {
            y[o] += self.weights[state.len()][o]; // bias row
        }
        y
    }
}

/// Forecast-evaluation summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse_series: Vec<f64>,
    pub vpt: usize,
    pub total_sops: u64,
    pub sop_ratio: f64,
    pub efficiency: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Reservoir evaluation configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirConfig {
    pub lif: LIFConfig,
    /// Peak Bernoulli rate of the encoder (Hz).
    pub rate_max_hz: f64,
    /// LIF steps per series frame.
    pub steps_per_frame: usize,
    /// Input weights are uniform in [-input_scale, input_scale].
    pub input_scale: f64,
    /// Fraction of alive neurons wired to the readout.
    pub readout_fraction: f64,
    pub ridge_lambda: f64,
    pub vpt_epsilon: f64,
    /// Initial frames dropped before fitting the readout.
    pub washout_frames: usize,
    /// Readout emits per-frame increments rather than absolute values.
    /// Integrating increments keeps the closed loop's error gain at one,
    /// where absolute-value feedback amplifies geometrically.
    pub predict_deltas: bool,
}

impl Default for ReservoirConfig {
    fn default() -> Self {
        ReservoirConfig {
            lif: LIFConfig::default(),
            rate_max_hz: 800.0,
            steps_per_frame: 10,
            input_scale: 0.8,
            readout_fraction: 0.1,
            ridge_lambda: 1e-3,
            vpt_epsilon: DEFAULT_VPT_EPSILON,
            washout_frames: 50,
            predict_deltas: true,
        }
    }
}

/// The `ceil(fraction * n_alive)` neurons with the highest betweenness
/// centrality, ties toward the lower index. Ascending id order.
pub fn select_readout_neurons(net: &Network, fraction: f64) -> Result<Vec<usize>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "readout fraction {fraction} must lie in (0, 1]"
        )));
    }
    let ids = net.alive_nodes();
    let bc = betweenness_centrality(net)?;
    let want = ((fraction * ids.len() as f64).ceil() as usize).min(ids.len());
    let mut order = ids.clone();
    order.sort_by(|&a, &b| {
        bc.get(b)
            .partial_cmp(&bc.get(a))
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut selected: Vec<usize> = order.into_iter().take(want).collect();
    selected.sort_unstable();
    Ok(selected)
}

/// Closed-form ridge regression with an unregularized bias term.
///
/// `states` is frames x selected, `targets` frames x outputs. Returns the
/// readout and the RMS training residual.
pub fn train_readout(
    selected: &[usize],
    states: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    ridge_lambda: f64,
) -> Result<(Readout, f64)> {
    let frames = states.nrows();
    let k = states.ncols();
    if k != selected.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} state columns for {} selected neurons",
            k,
            selected.len()
        )));
    }
    if targets.nrows() != frames {
        return Err(Error::ShapeMismatch(format!(
            "{} state rows vs {} target rows",
            frames,
            targets.nrows()
        )));
    }
    if frames < k + 1 {
        return Err(Error::InsufficientSamples(format!(
            "{frames} frames for {k} features plus bias"
        )));
    }
    if !(ridge_lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ridge_lambda {ridge_lambda} must be >= 0"
        )));
    }

    // design matrix with trailing all-ones bias column
    let mut x = DMatrix::zeros(frames, k + 1);
    x.view_mut((0, 0), (frames, k)).copy_from(states);
    for r in 0..frames {
        x[(r, k)] = 1.0;
    }
    let mut gram = x.transpose() * &x;
    for i in 0..k {
        gram[(i, i)] += ridge_lambda; // bias row unregularized
    }
    let chol = nalgebra::Cholesky::new(gram).ok_or(Error::SingularSystem)?;
    let rhs = x.transpose() * targets;
    let w = chol.solve(&rhs);

    let residual_matrix = &x * &w - targets;
    let residual =
        (residual_matrix.norm_squared() / (frames * targets.ncols()) as f64).sqrt();
    let weights = (0..k + 1)
        .map(|r| (0..targets.ncols()).map(|c| w[(r, c)]).collect())
        .collect();
    Ok((
        Readout {
            selected_neurons: selected.to_vec(),
            weights,
            ridge_lambda,
        },
        residual,
    ))
}

/// Frame-level reservoir driver shared by state harvesting and forecasting:
/// encodes one series frame into `steps_per_frame` Bernoulli spike steps,
/// advances the LIF network, and maintains per-neuron exponential spike
/// traces (time constant tau_m) that are read out at frame boundaries.
struct FrameSim {
    stepper: LifStepper,
    ids: Vec<usize>,
    w_in: DMatrix<f64>,
    bounds: Vec<(f64, f64)>,
    trace_decay: Vec<f64>,
    traces: Vec<f64>,
    rng: ChaCha20Rng,
    steps_per_frame: usize,
    encode_scale: f64,
    raster: Vec<Vec<bool>>,
}

impl FrameSim {
    fn new(
        net: &Network,
        cfg: &ReservoirConfig,
        w_in: &DMatrix<f64>,
        bounds: &[(f64, f64)],
        seed: u64,
    ) -> Result<Self> {
        let (stepper, ids) = LifStepper::new(net, &cfg.lif)?;
        if w_in.nrows() != bounds.len() || w_in.ncols() != ids.len() {
            return Err(Error::ShapeMismatch(format!(
                "input weights {}x{} vs {} channels and {} alive neurons",
                w_in.nrows(),
                w_in.ncols(),
                bounds.len(),
                ids.len()
            )));
        }
        if cfg.steps_per_frame == 0 {
            return Err(Error::InvalidParameter("steps_per_frame must be >= 1".into()));
        }
        let trace_decay = ids
            .iter()
            .map(|&id| (-cfg.lif.dt / net.tau_m(id)).exp())
            .collect();
        let n = ids.len();
        Ok(FrameSim {
            stepper,
            ids,
            w_in: w_in.clone(),
            bounds: bounds.to_vec(),
            trace_decay,
            traces: vec![0.0; n],
            rng: ChaCha20Rng::seed_from_u64(seed),
            steps_per_frame: cfg.steps_per_frame,
            encode_scale: cfg.rate_max_hz * cfg.lif.dt / 1000.0,
            raster: Vec::new(),
        })
    }

    /// Feed one frame; traces afterwards reflect the network state at the
    /// frame boundary.
    ///
    /// Every nonzero input connection carries its own independent Bernoulli
    /// spike train (an afferent per connection). A single shared train per
    /// channel would correlate the encoding noise across the population and
    /// put a floor under readout averaging.
    fn feed(&mut self, frame: &[f64]) {
        let n = self.ids.len();
        let channels = self.bounds.len();
        let mut p_ch = vec![0.0; channels];
        for (ch, &value) in frame.iter().enumerate().take(channels) {
            let (lo, hi) = self.bounds[ch];
            let norm = if hi > lo {
                ((value - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                0.0
            };
            p_ch[ch] = (norm * self.encode_scale).clamp(0.0, 1.0);
        }
        let mut drive = vec![0.0; n];
        for _ in 0..self.steps_per_frame {
            drive.iter_mut().for_each(|d| *d = 0.0);
            for ch in 0..channels {
                let p = p_ch[ch];
                if p == 0.0 {
                    continue;
                }
                for i in 0..n {
                    let w = self.w_in[(ch, i)];
                    if w != 0.0 && self.rng.gen::<f64>() < p {
                        drive[i] += w;
                    }
                }
            }
            let spiked = self.stepper.step(&drive);
            let mut row = vec![false; n];
            for &i in spiked {
                row[i] = true;
            }
            for i in 0..n {
                self.traces[i] *= self.trace_decay[i];
                if row[i] {
                    self.traces[i] += 1.0;
                }
            }
            self.raster.push(row);
        }
    }

    fn spike_record(&self, dt: f64) -> SpikeRecord {
        let mut rec = SpikeRecord::zeros(self.raster.len(), self.ids.clone(), dt);
        for (t, row) in self.raster.iter().enumerate() {
            for (c, &s) in row.iter().enumerate() {
                if s {
                    rec.set(t, c, true);
                }
            }
        }
        rec
    }
}

/// Teacher-forced pass over a series: returns per-frame traces of all alive
/// neurons (row f is the state after feeding frame f) and the spike raster.
pub fn harvest_states(
    net: &Network,
    cfg: &ReservoirConfig,
    w_in: &DMatrix<f64>,
    bounds: &[(f64, f64)],
    series: &TimeSeries,
    seed: u64,
) -> Result<(DMatrix<f64>, SpikeRecord)> {
    let mut sim = FrameSim::new(net, cfg, w_in, bounds, seed)?;
    let frames = series.len();
    let n = sim.ids.len();
    let mut states = DMatrix::zeros(frames, n);
    for f in 0..frames {
        let frame: Vec<f64> = (0..series.channels()).map(|c| series.values[(f, c)]).collect();
        sim.feed(&frame);
        for i in 0..n {
            states[(f, i)] = sim.traces[i];
        }
    }
    Ok((states, sim.spike_record(cfg.lif.dt)))
}

/// Closed-loop forecast: replay `seed_series` teacher-forced (identical
/// spike draws to [`harvest_states`] under the same seed), then feed each
/// prediction back as the next input for `horizon` frames. Also returns the
/// full spike raster (warm-up plus rollout).
pub fn forecast(
    net: &Network,
    readout: &Readout,
    cfg: &ReservoirConfig,
    w_in: &DMatrix<f64>,
    bounds: &[(f64, f64)],
    seed_series: &TimeSeries,
    horizon: usize,
    seed: u64,
) -> Result<(TimeSeries, SpikeRecord)> {
    let mut sim = FrameSim::new(net, cfg, w_in, bounds, seed)?;
    let n = sim.ids.len();
    let mut col_of = vec![usize::MAX; net.n_total()];
    for (c, &id) in sim.ids.iter().enumerate() {
        col_of[id] = c;
    }
    for &sel in &readout.selected_neurons {
        if sel >= net.n_total() || col_of[sel] == usize::MAX {
            return Err(Error::UnknownNode { node: sel });
        }
    }
    let channels = seed_series.channels();
    if readout.outputs() != channels {
        return Err(Error::ShapeMismatch(format!(
            "readout emits {} channels, series has {}",
            readout.outputs(),
            channels
        )));
    }

    let mut last_frame = vec![0.0; channels];
    for f in 0..seed_series.len() {
        for (c, v) in last_frame.iter_mut().enumerate() {
            *v = seed_series.values[(f, c)];
        }
        sim.feed(&last_frame);
    }
    let mut out = DMatrix::zeros(horizon, channels);
    let mut state: Vec<f64> = Vec::with_capacity(readout.selected_neurons.len());
    for h in 0..horizon {
        state.clear();
        state.extend(readout.selected_neurons.iter().map(|&id| sim.traces[col_of[id]]));
        let y = readout.predict(&state);
        for c in 0..channels {
            let value = if cfg.predict_deltas {
                last_frame[c] + y[c]
            } else {
                y[c]
            };
            out[(h, c)] = value;
            last_frame[c] = value;
        }
        if h + 1 < horizon {
            sim.feed(&last_frame);
        }
    }
    let _ = n;
    Ok((
        TimeSeries {
            values: out,
            dt: seed_series.dt,
        },
        sim.spike_record(cfg.lif.dt),
    ))
}

/// Per-step normalized RMSE between forecast and truth:
/// `sqrt(mean_i(((f_i - u_i)/sigma_i)^2))`.
pub fn rmse_series(
    forecast: &TimeSeries,
    truth: &TimeSeries,
    sigma: &[f64],
) -> Result<Vec<f64>> {
    if forecast.len() != truth.len() || forecast.channels() != truth.channels() {
        return Err(Error::ShapeMismatch(format!(
            "forecast {}x{} vs truth {}x{}",
            forecast.len(),
            forecast.channels(),
            truth.len(),
            truth.channels()
        )));
    }
    let d = forecast.channels();
    if sigma.len() != d {
        return Err(Error::ShapeMismatch(format!(
            "{} sigmas for {} channels",
            sigma.len(),
            d
        )));
    }
    for (c, &s) in sigma.iter().enumerate() {
        if !(s > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sigma[{c}] = {s} must be positive"
            )));
        }
    }
    Ok((0..forecast.len())
        .map(|t| {
            let sum: f64 = (0..d)
                .map(|c| {
                    let e = (forecast.values[(t, c)] - truth.values[(t, c)]) / sigma[c];
                    e * e
                })
                .sum();
            (sum / d as f64).sqrt()
        })
        .collect())
}

/// Valid prediction time: the number of steps whose RMSE is strictly below
/// `epsilon`.
pub fn vpt(rmse: &[f64], epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon {epsilon} must be positive"
        )));
    }
    Ok(rmse.iter().filter(|&&r| r < epsilon).count())
}

/// Synaptic operations of a run: every spike of an alive presynaptic neuron
/// costs one operation per outgoing synapse to an alive postsynaptic neuron.
/// Raster columns whose neuron is dead in `net` contribute nothing.
pub fn count_sops(rec: &SpikeRecord, net: &Network) -> Result<u64> {
    let counts = rec.spike_counts();
    let mut out_degree = vec![0u64; net.n_total()];
    for (s, _, _) in net.edges() {
        out_degree[s] += 1;
    }
    let mut total = 0u64;
    for (c, &id) in rec.neuron_ids().iter().enumerate() {
        if id >= net.n_total() {
            return Err(Error::ShapeMismatch(format!(
                "raster column {c} refers to neuron {id} outside the network"
            )));
        }
        if net.is_alive(id) {
            total += counts[c] as u64 * out_degree[id];
        }
    }
    Ok(total)
}

/// Assemble the evaluation report: `sop_ratio = dense/sparse`,
/// `efficiency = vpt/sparse`.
pub fn report(
    dense_sops: u64,
    sparse_sops: u64,
    vpt: usize,
    rmse: Vec<f64>,
) -> Result<EvalReport> {
    if sparse_sops == 0 {
        return Err(Error::DivisionByZero(
            "sparse SOP count is zero".into(),
        ));
    }
    Ok(EvalReport {
        rmse_series: rmse,
        vpt,
        total_sops: sparse_sops,
        sop_ratio: dense_sops as f64 / sparse_sops as f64,
        efficiency: vpt as f64 / sparse_sops as f64,
    })
}

/// Outcome of one forecast evaluation run.
#[derive(Debug, Clone)]
pub struct ForecastOutcome {
    pub forecast: TimeSeries,
    pub rmse: Vec<f64>,
    pub vpt: usize,
    pub sops: u64,
    pub readout: Readout,
    pub train_residual: f64,
}

/// End-to-end evaluation: fit a readout on `train` (one-step-ahead targets,
/// washout dropped), roll the network forward `truth.len()` frames closed
/// loop, and score against `truth` (which must chronologically follow
/// `train`). Encoder bounds and RMSE sigmas come from the training split
/// only.
pub fn evaluate_forecast(
    net: &Network,
    cfg: &ReservoirConfig,
    train: &TimeSeries,
    truth: &TimeSeries,
    seed: u64,
) -> Result<ForecastOutcome> {
    if train.channels() != truth.channels() {
        return Err(Error::ShapeMismatch(format!(
            "train has {} channels, truth {}",
            train.channels(),
            truth.channels()
        )));
    }
    let frames = train.len();
    if frames < cfg.washout_frames + 2 {
        return Err(Error::InsufficientSamples(format!(
            "{} training frames with washout {}",
            frames, cfg.washout_frames
        )));
    }
    let bounds = channel_bounds(&train.values);
    let sigma: Vec<f64> = (0..train.channels())
        .map(|c| {
            let col = train.values.column(c);
            let mean = col.sum() / frames as f64;
            (col.map(|v| (v - mean) * (v - mean)).sum() / frames as f64).sqrt()
        })
        .collect();

    let selected = select_readout_neurons(net, cfg.readout_fraction)?;
    let n_alive = net.alive_nodes();
    let w_in = input_weights(
        train.channels(),
        n_alive.len(),
        cfg.input_scale,
        derive_seed(seed, "input-weights"),
    );

    let sim_seed = derive_seed(seed, "frames");
    let (states, _) = harvest_states(net, cfg, &w_in, &bounds, train, sim_seed)?;

    // state after frame f predicts frame f+1
    let mut col_of = vec![usize::MAX; net.n_total()];
    for (c, &id) in n_alive.iter().enumerate() {
        col_of[id] = c;
    }
    let usable = frames - 1 - cfg.washout_frames;
    let mut x = DMatrix::zeros(usable, selected.len());
    let mut y = DMatrix::zeros(usable, train.channels());
    for r in 0..usable {
        let f = cfg.washout_frames + r;
        for (k, &id) in selected.iter().enumerate() {
            x[(r, k)] = states[(f, col_of[id])];
        }
        for c in 0..train.channels() {
            y[(r, c)] = if cfg.predict_deltas {
                train.values[(f + 1, c)] - train.values[(f, c)]
            } else {
                train.values[(f + 1, c)]
            };
        }
    }
    let (readout, train_residual) = train_readout(&selected, &x, &y, cfg.ridge_lambda)?;

    let (predicted, raster) =
        forecast(net, &readout, cfg, &w_in, &bounds, train, truth.len(), sim_seed)?;
    let rmse = rmse_series(&predicted, truth, &sigma)?;
    let valid = vpt(&rmse, cfg.vpt_epsilon)?;
    let sops = count_sops(&raster, net)?;
    Ok(ForecastOutcome {
        forecast: predicted,
        rmse,
        vpt: valid,
        sops,
        readout,
        train_residual,
    })
}

/// Channel-selective input wiring: each neuron listens to one random input
/// channel with a positive weight in [0.5, 1.5] * scale. Mixed-sign dense
/// wiring silences the half of the population with net-negative drive and
/// entangles channels beyond what a linear readout can invert.
pub fn input_weights(channels: usize, neurons: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut w = DMatrix::zeros(channels, neurons);
    for i in 0..neurons {
        let ch = rng.gen_range(0..channels);
        w[(ch, i)] = (0.5 + rng.gen::<f64>()) * scale;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::lorenz63;
    use crate::network::{generate_small_world, NeuronParams};
    use approx::assert_relative_eq;

    fn path3() -> Network {
        Network::new(
            3,
            vec![(0, 1, 1.0), (1, 2, 1.0)],
            vec![
                NeuronParams {
                    tau_m: 20.0,
                    leak: 1.0
                };
                3
            ],
            vec![true; 3],
        )
        .unwrap()
    }

    #[test]
    fn select_all_neurons_at_full_fraction() {
        let net = generate_small_world(10, 2, 0.3, 0.8, 1.0, 1).unwrap();
        let selected = select_readout_neurons(&net, 1.0).unwrap();
        assert_eq!(selected, net.alive_nodes());
    }

    #[test]
    fn select_ten_percent_of_fifty() {
        let net = generate_small_world(50, 4, 0.2, 0.8, 1.0, 2).unwrap();
        let selected = select_readout_neurons(&net, 0.1).unwrap();
        assert_eq!(selected.len(), 5);
    }

    #[test]
    fn select_prefers_path_center() {
        let net = path3();
        let selected = select_readout_neurons(&net, 0.3).unwrap();
        assert_eq!(selected, vec![1]);
    }

    #[test]
    fn ridge_recovers_exact_linear_map() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let frames = 60;
        let states = DMatrix::from_fn(frames, 3, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let true_w = DMatrix::from_row_slice(3, 2, &[0.5, -1.0, 2.0, 0.3, -0.7, 1.1]);
        let mut targets = &states * &true_w;
        for r in 0..frames {
            targets[(r, 0)] += 0.25; // bias on channel 0
        }
        let (readout, residual) = train_readout(&[0, 1, 2], &states, &targets, 1e-10).unwrap();
        assert!(residual < 1e-8, "residual {residual}");
        let y = readout.predict(&[0.2, -0.4, 0.9]);
        let expected0 = 0.2 * 0.5 - 0.4 * 2.0 + 0.9 * -0.7 + 0.25;
        assert!((y[0] - expected0).abs() < 1e-8);
    }

    #[test]
    fn ridge_large_lambda_shrinks_to_target_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let frames = 50;
        let states = DMatrix::from_fn(frames, 2, |_, _| rng.gen::<f64>());
        let targets = DMatrix::from_fn(frames, 1, |r, _| (r as f64 * 0.37).sin() + 2.0);
        let mean = targets.column(0).sum() / frames as f64;
        let (readout, _) = train_readout(&[0, 1], &states, &targets, 1e12).unwrap();
        assert!(readout.weights[0][0].abs() < 1e-6);
        assert!(readout.weights[1][0].abs() < 1e-6);
        let y = readout.predict(&[0.5, 0.5]);
        assert!((y[0] - mean).abs() < 1e-4, "prediction {} vs mean {mean}", y[0]);
    }

    #[test]
    fn ridge_matches_normal_equation_oracle() {
        // 2-feature hand system solved through the explicit 3x3 normal
        // equations (features + bias).
        let states = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 2.0, -1.0]);
        let targets = DMatrix::from_row_slice(4, 1, &[1.0, -1.0, 0.5, 2.0]);
        let lambda = 0.3;
        let (readout, _) = train_readout(&[0, 1], &states, &targets, lambda).unwrap();

        let mut x = DMatrix::zeros(4, 3);
        x.view_mut((0, 0), (4, 2)).copy_from(&states);
        for r in 0..4 {
            x[(r, 2)] = 1.0;
        }
        let mut gram = x.transpose() * &x;
        gram[(0, 0)] += lambda;
        gram[(1, 1)] += lambda;
        let w = gram.try_inverse().unwrap() * x.transpose() * &targets;
        for k in 0..3 {
            assert!(
                (readout.weights[k][0] - w[(k, 0)]).abs() < 1e-10,
                "weight {k}"
            );
        }
    }

    #[test]
    fn ridge_residual_monotone_in_lambda() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let states = DMatrix::from_fn(40, 3, |_, _| rng.gen::<f64>());
        let targets = DMatrix::from_fn(40, 1, |r, _| (r as f64).cos());
        let mut last = -1.0;
        for lambda in [0.0, 1e-3, 1e-1, 1.0, 10.0, 1e3] {
            let (_, residual) = train_readout(&[0, 1, 2], &states, &targets, lambda).unwrap();
            assert!(residual >= last - 1e-12, "lambda {lambda}");
            last = residual;
        }
    }

    #[test]
    fn ridge_singular_system_detected() {
        // an all-zero feature column with lambda = 0 makes the Gram matrix
        // exactly singular
        let states = DMatrix::zeros(10, 2);
        let targets = DMatrix::from_fn(10, 1, |r, _| r as f64);
        assert!(matches!(
            train_readout(&[0, 1], &states, &targets, 0.0),
            Err(Error::SingularSystem)
        ));
    }

    #[test]
    fn rmse_hand_cases() {
        let truth = TimeSeries {
            values: DMatrix::zeros(5, 1),
            dt: 1.0,
        };
        let same = rmse_series(&truth, &truth, &[1.0]).unwrap();
        assert!(same.iter().all(|&r| r == 0.0));

        let forecast = TimeSeries {
            values: DMatrix::from_element(5, 1, 0.2),
            dt: 1.0,
        };
        let r = rmse_series(&forecast, &truth, &[1.0]).unwrap();
        for v in r {
            assert_relative_eq!(v, 0.2);
        }

        let truth2 = TimeSeries {
            values: DMatrix::zeros(1, 2),
            dt: 1.0,
        };
        let forecast2 = TimeSeries {
            values: DMatrix::from_row_slice(1, 2, &[0.3, 0.4]),
            dt: 1.0,
        };
        let r2 = rmse_series(&forecast2, &truth2, &[1.0, 1.0]).unwrap();
        assert_relative_eq!(r2[0], (0.25_f64 / 2.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(r2[0], 0.35355339059327373, epsilon = 1e-12);
    }

    #[test]
    fn rmse_affine_consistency() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let truth = TimeSeries {
            values: DMatrix::from_fn(20, 2, |_, _| rng.gen::<f64>() * 4.0),
            dt: 1.0,
        };
        let forecast = TimeSeries {
            values: DMatrix::from_fn(20, 2, |_, _| rng.gen::<f64>() * 4.0),
            dt: 1.0,
        };
        let base = rmse_series(&forecast, &truth, &[1.5, 0.5]).unwrap();
        let scale = [3.0, 0.25];
        let scaled = rmse_series(
            &TimeSeries {
                values: DMatrix::from_fn(20, 2, |r, c| forecast.values[(r, c)] * scale[c]),
                dt: 1.0,
            },
            &TimeSeries {
                values: DMatrix::from_fn(20, 2, |r, c| truth.values[(r, c)] * scale[c]),
                dt: 1.0,
            },
            &[1.5 * scale[0], 0.5 * scale[1]],
        )
        .unwrap();
        for (a, b) in base.iter().zip(&scaled) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn rmse_error_contracts() {
        let a = TimeSeries {
            values: DMatrix::zeros(3, 1),
            dt: 1.0,
        };
        let b = TimeSeries {
            values: DMatrix::zeros(4, 1),
            dt: 1.0,
        };
        assert!(rmse_series(&a, &b, &[1.0]).is_err());
        assert!(rmse_series(&a, &a, &[0.0]).is_err());
    }

    #[test]
    fn vpt_counts_indicator_sum() {
        let all_below: Vec<f64> = vec![0.05; 100];
        assert_eq!(vpt(&all_below, 0.1).unwrap(), 100);
        assert_eq!(vpt(&[0.01, 0.05, 0.2, 0.05], DEFAULT_VPT_EPSILON).unwrap(), 3);
    }

    #[test]
    fn vpt_monotone_in_epsilon() {
        let mut rng = ChaCha20Rng::seed_from_u64(10);
        let rmse: Vec<f64> = (0..200).map(|_| rng.gen::<f64>()).collect();
        let mut last = 0;
        for eps in [0.1, 0.2, 0.5, 0.8, 1.1] {
            let v = vpt(&rmse, eps).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn sops_hand_cases() {
        // one neuron with 5 spikes and 3 outgoing synapses
        let net = Network::new(
            4,
            vec![(0, 1, 1.0), (0, 2, 1.0), (0, 3, 1.0)],
            vec![
                NeuronParams {
                    tau_m: 20.0,
                    leak: 1.0
                };
                4
            ],
            vec![true; 4],
        )
        .unwrap();
        let mut rec = SpikeRecord::zeros(10, net.alive_nodes(), 1.0);
        for t in 0..5 {
            rec.set(t, 0, true);
        }
        assert_eq!(count_sops(&rec, &net).unwrap(), 15);

        // (s, c) = (2, 4) and (3, 1): 8 + 3
        let net2 = Network::new(
            6,
            vec![
                (0, 1, 1.0),
                (0, 2, 1.0),
                (0, 3, 1.0),
                (0, 4, 1.0),
                (5, 0, 1.0),
            ],
            vec![
                NeuronParams {
                    tau_m: 20.0,
                    leak: 1.0
                };
                6
            ],
            vec![true; 6],
        )
        .unwrap();
        let mut rec2 = SpikeRecord::zeros(10, net2.alive_nodes(), 1.0);
        for t in 0..2 {
            rec2.set(t, 0, true);
        }
        for t in 0..3 {
            rec2.set(t, 5, true);
        }
        assert_eq!(count_sops(&rec2, &net2).unwrap(), 11);
    }

    #[test]
    fn sops_pruned_presynaptic_contributes_zero() {
        let net = Network::new(
            3,
            vec![(0, 1, 1.0), (1, 2, 1.0)],
            vec![
                NeuronParams {
                    tau_m: 20.0,
                    leak: 1.0
                };
                3
            ],
            vec![true; 3],
        )
        .unwrap();
        let mut rec = SpikeRecord::zeros(5, net.alive_nodes(), 1.0);
        for t in 0..5 {
            rec.set(t, 0, true);
            rec.set(t, 1, true);
        }
        let full = count_sops(&rec, &net).unwrap();
        assert_eq!(full, 10);
        let pruned = crate::network::prune_nodes(&net, &std::collections::BTreeSet::from([0]))
            .unwrap();
        // raster still has a column for neuron 0, but it is dead now
        assert_eq!(count_sops(&rec, &pruned).unwrap(), 5);
    }

    #[test]
    fn sops_match_brute_force_triple_loop() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        for _ in 0..10 {
            let net = generate_small_world(20, 4, 0.3, 0.8, 1.0, rng.gen()).unwrap();
            let ids = net.alive_nodes();
            let mut rec = SpikeRecord::zeros(50, ids.clone(), 1.0);
            for t in 0..50 {
                for c in 0..ids.len() {
                    if rng.gen::<f64>() < 0.2 {
                        rec.set(t, c, true);
                    }
                }
            }
            let mut brute = 0u64;
            for t in 0..50 {
                for (c, &pre) in ids.iter().enumerate() {
                    if !rec.get(t, c) {
                        continue;
                    }
                    for (s, d, _) in net.edges() {
                        if s == pre && net.is_alive(d) {
                            brute += 1;
                        }
                    }
                }
            }
            assert_eq!(count_sops(&rec, &net).unwrap(), brute);
        }
    }

    #[test]
    fn report_ratio_and_efficiency() {
        let r = report(100, 10, 40, vec![0.1]).unwrap();
        assert_relative_eq!(r.sop_ratio, 10.0);
        assert_relative_eq!(r.efficiency, 4.0);
        let r2 = report(20, 20, 40, vec![]).unwrap();
        assert_relative_eq!(r2.efficiency, 2.0);
        assert!(matches!(
            report(10, 0, 1, vec![]),
            Err(Error::DivisionByZero(_))
        ));
    }

    #[test]
    fn report_json_field_order() {
        let r = report(100, 10, 4, vec![0.5]).unwrap();
        let json = r.to_json().unwrap();
        assert!(json.starts_with("{\"rmse_series\":[0.5],\"vpt\":4,\"total_sops\":10,"));
    }

    #[test]
    fn forecast_zero_horizon_is_empty() {
        let net = generate_small_world(12, 2, 0.2, 0.8, 0.5, 3).unwrap();
        let cfg = ReservoirConfig::default();
        let readout = Readout {
            selected_neurons: vec![0],
            weights: vec![vec![0.0], vec![1.0]],
            ridge_lambda: 0.0,
        };
        let bounds = [(0.0, 1.0)];
        let w_in = input_weights(1, 12, 0.5, 1);
        let seed_series = TimeSeries {
            values: DMatrix::from_element(5, 1, 0.5),
            dt: 1.0,
        };
        let (out, _) = forecast(&net, &readout, &cfg, &w_in, &bounds, &seed_series, 0, 2).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn forecast_identity_readout_is_persistence() {
        // A readout that reproduces its input exactly (zero increment in
        // delta mode, or bias = last frame in value mode) pins the closed
        // loop at its fixed point: persistence of the last seed frame.
        let net = generate_small_world(12, 2, 0.2, 0.8, 0.5, 3).unwrap();
        let last = 0.7;
        let bounds = [(0.0, 1.0)];
        let w_in = input_weights(1, 12, 0.5, 1);
        let seed_series = TimeSeries {
            values: DMatrix::from_element(5, 1, last),
            dt: 1.0,
        };

        let delta_cfg = ReservoirConfig::default();
        let zero_delta = Readout {
            selected_neurons: vec![0, 3],
            weights: vec![vec![0.0], vec![0.0], vec![0.0]],
            ridge_lambda: 0.0,
        };
        let (out, _) =
            forecast(&net, &zero_delta, &delta_cfg, &w_in, &bounds, &seed_series, 7, 2).unwrap();
        for h in 0..7 {
            assert_eq!(out.values[(h, 0)], last);
        }

        let value_cfg = ReservoirConfig {
            predict_deltas: false,
            ..ReservoirConfig::default()
        };
        let constant = Readout {
            selected_neurons: vec![0, 3],
            weights: vec![vec![0.0], vec![0.0], vec![last]],
            ridge_lambda: 0.0,
        };
        let (out, _) =
            forecast(&net, &constant, &value_cfg, &w_in, &bounds, &seed_series, 7, 2).unwrap();
        for h in 0..7 {
            assert_eq!(out.values[(h, 0)], last);
        }
    }

    #[test]
    fn forecast_deterministic_per_seed() {
        let net = generate_small_world(16, 4, 0.2, 0.8, 0.6, 4)
            .unwrap()
            .resample_timescales(4.0, 5.0, 5)
            .unwrap();
        let cfg = ReservoirConfig {
            washout_frames: 5,
            ..ReservoirConfig::default()
        };
        let series = lorenz63(80, [12.0, 2.0, 9.0], 0.01, 10.0, 28.0, 8.0 / 3.0).unwrap();
        let train = series.slice(0, 60);
        let truth = series.slice(60, 20);
        let a = evaluate_forecast(&net, &cfg, &train, &truth, 11).unwrap();
        let b = evaluate_forecast(&net, &cfg, &train, &truth, 11).unwrap();
        assert_eq!(a.forecast, b.forecast);
        assert_eq!(a.sops, b.sops);
        assert_eq!(a.rmse, b.rmse);
        assert!(a.sops > 0);
        assert_eq!(a.rmse.len(), 20);
    }
}

//! Run configuration: one JSON document with sections for the network,
//! dataset, pruning methods, evaluation, and timescale optimization.
//! Unknown keys are rejected everywhere.

use serde::{Deserialize, Serialize};

use lnprune::data::{lorenz_defaults, rossler_defaults, SplitSpec};
use lnprune::eval::ReservoirConfig;
use lnprune::pruning::LNPConfig;
use lnprune::tsopt::TimescaleOptConfig;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub network: NetworkSection,
    pub data: DataSection,
    pub lnp: LNPConfig,
    pub ap: ApSection,
    pub eval: EvalSection,
    /// Step-IV Bayesian optimization; `null` disables it.
    pub tsopt: Option<TimescaleOptConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub n: usize,
    pub k: usize,
    pub beta: f64,
    pub excit_frac: f64,
    pub weight_scale: f64,
    /// Gamma distribution of the membrane time constants (ms).
    pub tau_shape: f64,
    pub tau_scale: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection {
            n: 200,
            k: 8,
            beta: 0.2,
            excit_frac: 0.8,
            weight_scale: 0.1,
            tau_shape: 1.5,
            tau_scale: 40.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// lorenz63 | rossler | csv
    pub dataset: String,
    pub n: Option<usize>,
    pub x0: Option<[f64; 3]>,
    pub dt: Option<f64>,
    pub sigma: Option<f64>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub c: Option<f64>,
    pub discard: Option<usize>,
    pub split: Option<SplitSpec>,
    /// Gaussian input noise level; `null` leaves the series clean.
    pub snr_db: Option<f64>,
    pub csv_path: Option<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: "lorenz63".to_string(),
            n: None,
            x0: None,
            dt: None,
            sigma: None,
            rho: None,
            beta: None,
            a: None,
            b: None,
            c: None,
            discard: None,
            split: None,
            snr_db: None,
            csv_path: None,
        }
    }
}

impl DataSection {
    pub fn split_spec(&self) -> SplitSpec {
        self.split.unwrap_or(match self.dataset.as_str() {
            "rossler" => rossler_defaults::SPLIT,
            _ => lorenz_defaults::SPLIT,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApSection {
    /// Fraction of alive neurons pruned per iteration.
    pub rate: f64,
    pub max_iters: usize,
    /// Frames of the training split used to measure activity.
    pub probe_frames: usize,
    /// Stop early once the alive count reaches this target.
    pub target_neurons: Option<usize>,
}

impl Default for ApSection {
    fn default() -> Self {
        ApSection {
            rate: 0.03,
            max_iters: 100,
            probe_frames: 200,
            target_neurons: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub reservoir: ReservoirConfig,
    /// Independent evaluation seeds; reports carry mean and std.
    pub seeds: usize,
    /// Trailing frames of the training split used to fit the readout.
    pub train_frames: usize,
    /// Forecast length, scored against the head of the validation split.
    pub horizon: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            reservoir: ReservoirConfig {
                readout_fraction: 0.25,
                ..ReservoirConfig::default()
            },
            seeds: 5,
            train_frames: 1500,
            horizon: 100,
        }
    }
}

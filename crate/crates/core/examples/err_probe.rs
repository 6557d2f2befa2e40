use lnprune::data::{lorenz63, lorenz_defaults, split, SplitSpec};
use lnprune::dynamics::LIFConfig;
use lnprune::eval::{evaluate_forecast, ReservoirConfig};
use lnprune::network::generate_small_world;
use lnprune::pruning::{lnp_pipeline, LNPConfig};
use lnprune::tsopt::{Bounds, TimescaleOptConfig};
use lnprune::seed::derive_seed;
use std::time::Instant;

fn main() {
    let series = lorenz63(4000, lorenz_defaults::X0, lorenz_defaults::DT,
        lorenz_defaults::SIGMA, lorenz_defaults::RHO, lorenz_defaults::BETA).unwrap();
    let spec = SplitSpec { n_train: 1500, n_val: 100, n_test: 100, n_discard: 0 };
    let (train, val, _) = split(&series, &spec).unwrap();
    let rcfg = ReservoirConfig {
        lif: LIFConfig { v_thresh: 1.0, v_reset: 0.0, dt: 1.0, refractory: 0 },
        rate_max_hz: 800.0, steps_per_frame: 10, input_scale: 0.8,
        readout_fraction: 0.25, ridge_lambda: 1e-3, vpt_epsilon: 0.1,
        washout_frames: 50, predict_deltas: true,
    };
    for seed in [1u64, 3] {
        let base = generate_small_world(200, 8, 0.2, 0.8, 0.1, seed).unwrap()
            .resample_timescales(1.5, 40.0, seed + 100).unwrap();
        let t = Instant::now();
        let cfg = LNPConfig {
            rho: 300.0, centrality_quantile: 0.03, m_delocalize: 3,
            sim_steps: 2000, burn_in: 200, iterations: 10, seed,
            tsopt: Some(TimescaleOptConfig {
                budget: 10,
                bounds: Bounds { shape: (1.0, 3.0), scale: (20.0, 80.0) },
                seq_len: 8, dt_ms: 0.5, phi: lnprune::dynamics::Phi::Tanh, noise_sigma: 0.5,
            }),
            ..Default::default()
        };
        let (pruned, trace) = lnp_pipeline(&base, &cfg).unwrap();
        let last = trace.rows.last().unwrap();
        let out = evaluate_forecast(&pruned, &rcfg, &train, &val, derive_seed(seed, "eval")).unwrap();
        println!("seed {seed}: {}n/{}e (last step {}) vpt {} sops {} took {:?}",
            pruned.n_alive(), pruned.n_edges(), last.step, out.vpt, out.sops, t.elapsed());
    }
}

use lnprune::data::{lorenz63, lorenz_defaults, split, SplitSpec};
use lnprune::dynamics::{channel_bounds, LIFConfig};
use lnprune::eval::{evaluate_forecast, harvest_states, input_weights, ReservoirConfig};
use lnprune::network::generate_small_world;
use lnprune::pruning::{activity_prune, lnp_pipeline, LNPConfig};
use lnprune::seed::derive_seed;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
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
    let probe = train.slice(0, 200);
    let bounds = channel_bounds(&probe.values);

    for (rho, q, m, steps) in [(300.0, 0.04, 4, 1500usize), (350.0, 0.05, 4, 1500), (300.0, 0.03, 3, 2000)] {
        let mut lnp_edges = Vec::new();
        let mut ap_edges = Vec::new();
        let mut lnp_eff = Vec::new();
        let mut ap_eff = Vec::new();
        let mut lnp_vpts = Vec::new();
        let mut ap_vpts = Vec::new();
        for seed in 1u64..=5 {
            let base = generate_small_world(200, 8, 0.2, 0.8, 0.1, seed).unwrap()
                .resample_timescales(1.5, 40.0, seed + 100).unwrap();
            let cfg = LNPConfig { rho, centrality_quantile: q, m_delocalize: m,
                sim_steps: steps, burn_in: 200, iterations: 10, seed, ..Default::default() };
            let (lnp_net, _) = match lnp_pipeline(&base, &cfg) {
                Ok(v) => v,
                Err(e) => { println!("  seed {seed} error: {e}"); continue; }
            };
            let out = evaluate_forecast(&lnp_net, &rcfg, &train, &val, derive_seed(seed, "eval")).unwrap();
            lnp_edges.push(lnp_net.n_edges() as f64);
            lnp_eff.push(out.vpt as f64 / out.sops as f64);
            lnp_vpts.push(out.vpt);
            let lnp_n = lnp_net.n_alive();

            let mut ap_net = base.clone();
            let mut it = 0u64;
            while ap_net.n_alive() > lnp_n && it < 300 {
                let (next, _) = activity_prune(
                    &ap_net,
                    |n, s| {
                        let ids = n.alive_nodes();
                        let w_in = input_weights(3, ids.len(), rcfg.input_scale, derive_seed(s, "w"));
                        harvest_states(n, &rcfg, &w_in, &bounds, &probe, s).map(|(_, rec)| rec)
                    },
                    0.03, 1, |_| Ok(1.0),
                    derive_seed(seed, &format!("ap{it}")),
                ).unwrap();
                ap_net = next;
                it += 1;
            }
            let out = evaluate_forecast(&ap_net, &rcfg, &train, &val, derive_seed(seed, "eval")).unwrap();
            ap_edges.push(ap_net.n_edges() as f64);
            ap_eff.push(out.vpt as f64 / out.sops as f64);
            ap_vpts.push(out.vpt);
            println!("  seed {seed}: LNP {}n/{}e vpt {} | AP {}n/{}e vpt {}",
                lnp_n, lnp_edges.last().unwrap(), lnp_vpts.last().unwrap(),
                ap_net.n_alive(), ap_edges.last().unwrap(), ap_vpts.last().unwrap());
        }
        let std = |v: &[f64]| { let m = v.iter().sum::<f64>() / v.len() as f64;
            (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt() };
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!("rho {rho} q {q} m {m} steps {steps}: eff LNP {:.3e} vs AP {:.3e} | edge std LNP {:.1} vs AP {:.1} ({:?})",
            mean(&lnp_eff), mean(&ap_eff), std(&lnp_edges), std(&ap_edges), t0.elapsed());
    }
}

//! Pipeline orchestration: dataset generation, network construction, pruning
//! runs (noise pruning, activity pruning, exponent ranking, random-match
//! control), forecasting evaluation, and report emission.
//!
//! Exit codes: 0 success, 2 usage/config errors, 1 runtime failures.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use config::RunConfig;
use lnprune::data::{self, TimeSeries};
use lnprune::dynamics::channel_bounds;
use lnprune::error::Error as CoreError;
use lnprune::eval::{
    evaluate_forecast, harvest_states, input_weights, report, EvalReport,
};
use lnprune::lyapunov::{network_spectrum, JacobianSequence};
use lnprune::network::{generate_small_world, Network, NeuronParams};
use lnprune::pruning::{
    activity_prune, lnp_pipeline_full, lyapunov_neuron_prune, PruneTrace, TraceRow,
};
use lnprune::seed::derive_seed;

#[derive(Parser)]
#[command(name = "lnprune", version, about = "Spiking-network pruning and chaotic forecasting bench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV and its parameter manifest.
    GenData {
        /// lorenz63 | rossler | csv
        dataset: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the initial small-world network.
    InitNet {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Prune a network and write the pruned network, trace, and spectrum.
    Prune {
        /// lnp | ap | lyapunov | random-match
        #[arg(long)]
        method: String,
        #[arg(long)]
        network: PathBuf,
        /// Dataset CSV (required for method=ap).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Reference trace CSV (required for method=random-match).
        #[arg(long)]
        reference_trace: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a network on closed-loop forecasting.
    Eval {
        #[arg(long)]
        network: PathBuf,
        /// Unpruned network for the dense SOP baseline.
        #[arg(long)]
        reference_network: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Chain gen-data, init-net, prune, and eval from one config.
    Pipeline {
        /// lnp | ap | lyapunov | random-match
        #[arg(long, default_value = "lnp")]
        method: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData {
            dataset,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed, Some(&dataset))?;
            std::fs::create_dir_all(&out)?;
            cmd_gen_data(&cfg, &out).map(|_| ())
        }
        Command::InitNet { config, out, seed } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            std::fs::create_dir_all(&out)?;
            cmd_init_net(&cfg, &out).map(|_| ())
        }
        Command::Prune {
            method,
            network,
            data,
            reference_trace,
            config,
            out,
            seed,
        } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            std::fs::create_dir_all(&out)?;
            let net = load_network(&network)?;
            cmd_prune(
                &cfg,
                &method,
                &net,
                data.as_deref(),
                reference_trace.as_deref(),
                &out,
            )
            .map(|_| ())
        }
        Command::Eval {
            network,
            reference_network,
            data,
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            std::fs::create_dir_all(&out)?;
            let net = load_network(&network)?;
            let reference = reference_network.as_deref().map(load_network).transpose()?;
            let series = load_series(&cfg, &data)?;
            cmd_eval(&cfg, &net, reference.as_ref(), &series, &out, jobs).map(|_| ())
        }
        Command::Pipeline {
            method,
            config,
            out,
            seed,
            jobs,
        } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            std::fs::create_dir_all(&out)?;
            let data_file = cmd_gen_data(&cfg, &out)?;
            let base = cmd_init_net(&cfg, &out)?;
            let series = load_series(&cfg, &data_file)?;
            let pruned = cmd_prune(
                &cfg,
                &method,
                &base,
                Some(data_file.as_path()),
                None,
                &out,
            )?;
            cmd_eval(&cfg, &pruned, Some(&base), &series, &out, jobs)?;
            Ok(())
        }
    }
}

fn version_string() -> String {
    format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn load_config(path: Option<&Path>, seed: Option<u64>, dataset: Option<&str>) -> CliResult<RunConfig> {
    let mut cfg: RunConfig = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = dataset {
        cfg.data.dataset = d.to_string();
    }
    match cfg.data.dataset.as_str() {
        "lorenz63" | "rossler" | "csv" => {}
        other => {
            return Err(CliError::Usage(format!(
                "unknown dataset {other:?} (expected lorenz63, rossler, or csv)"
            )))
        }
    }
    Ok(cfg)
}

/// JSON artifact wrapper; key order is alphabetical and the embedded
/// payload keeps its own canonical field order.
fn write_artifact(
    path: &Path,
    cfg: &RunConfig,
    payload_key: &str,
    payload_json: &str,
) -> CliResult<()> {
    let config_value = serde_json::to_value(cfg).map_err(CoreError::from)?;
    let mut doc = String::from("{");
    write!(
        doc,
        "\"config\":{},\"{payload_key}\":{payload_json},\"version\":{}",
        serde_json::to_string(&config_value).map_err(CoreError::from)?,
        serde_json::to_string(&version_string()).map_err(CoreError::from)?
    )
    .expect("string write");
    doc.push('}');
    std::fs::write(path, doc)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, cfg: &RunConfig, key: &str, payload: &T) -> CliResult<()> {
    let payload_json = serde_json::to_string(&serde_json::to_value(payload).map_err(CoreError::from)?)
        .map_err(CoreError::from)?;
    write_artifact(path, cfg, key, &payload_json)
}

// --- gen-data -------------------------------------------------------------

fn resolved_data_params(cfg: &RunConfig) -> serde_json::Value {
    let d = &cfg.data;
    match d.dataset.as_str() {
        "rossler" => serde_json::json!({
            "dataset": "rossler",
            "n": d.n.unwrap_or(data::rossler_defaults::N),
            "x0": d.x0.unwrap_or(data::rossler_defaults::X0),
            "dt": d.dt.unwrap_or(data::rossler_defaults::DT),
            "a": d.a.unwrap_or(data::rossler_defaults::A),
            "b": d.b.unwrap_or(data::rossler_defaults::B),
            "c": d.c.unwrap_or(data::rossler_defaults::C),
            "discard": d.discard.unwrap_or(data::rossler_defaults::DISCARD),
        }),
        "csv" => serde_json::json!({
            "dataset": "csv",
            "csv_path": d.csv_path,
        }),
        _ => serde_json::json!({
            "dataset": "lorenz63",
            "n": d.n.unwrap_or(data::lorenz_defaults::N),
            "x0": d.x0.unwrap_or(data::lorenz_defaults::X0),
            "dt": d.dt.unwrap_or(data::lorenz_defaults::DT),
            "sigma": d.sigma.unwrap_or(data::lorenz_defaults::SIGMA),
            "rho": d.rho.unwrap_or(data::lorenz_defaults::RHO),
            "beta": d.beta.unwrap_or(data::lorenz_defaults::BETA),
        }),
    }
}

fn generate_series(cfg: &RunConfig) -> CliResult<TimeSeries> {
    let d = &cfg.data;
    let series = match d.dataset.as_str() {
        "rossler" => data::rossler(
            d.n.unwrap_or(data::rossler_defaults::N),
            d.x0.unwrap_or(data::rossler_defaults::X0),
            d.dt.unwrap_or(data::rossler_defaults::DT),
            d.a.unwrap_or(data::rossler_defaults::A),
            d.b.unwrap_or(data::rossler_defaults::B),
            d.c.unwrap_or(data::rossler_defaults::C),
            d.discard.unwrap_or(data::rossler_defaults::DISCARD),
        )?,
        "csv" => {
            let path = d.csv_path.as_ref().ok_or_else(|| {
                CliError::Usage("dataset csv requires data.csv_path".to_string())
            })?;
            data::load_csv(Path::new(path))?
        }
        _ => data::lorenz63(
            d.n.unwrap_or(data::lorenz_defaults::N),
            d.x0.unwrap_or(data::lorenz_defaults::X0),
            d.dt.unwrap_or(data::lorenz_defaults::DT),
            d.sigma.unwrap_or(data::lorenz_defaults::SIGMA),
            d.rho.unwrap_or(data::lorenz_defaults::RHO),
            d.beta.unwrap_or(data::lorenz_defaults::BETA),
        )?,
    };
    Ok(series)
}

/// Content-addressed dataset file: the name carries a hash of the resolved
/// generation parameters so reruns are reproducible byte for byte.
fn cmd_gen_data(cfg: &RunConfig, out: &Path) -> CliResult<PathBuf> {
    let params = resolved_data_params(cfg);
    let canonical = serde_json::to_string(&params).map_err(CoreError::from)?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    let hash = hex_prefix(&hasher.finalize(), 8);
    let series = generate_series(cfg)?;

    let file = out.join(format!("{}_{hash}.csv", cfg.data.dataset));
    std::fs::write(&file, series.to_csv()?)?;
    let manifest = out.join(format!("{}_{hash}.manifest.json", cfg.data.dataset));
    write_json(
        &manifest,
        cfg,
        "dataset",
        &serde_json::json!({
            "params": params,
            "rows": series.len(),
            "channels": series.channels(),
            "file": file.file_name().map(|n| n.to_string_lossy().to_string()),
        }),
    )?;
    println!("wrote {}", file.display());
    Ok(file)
}

fn hex_prefix(bytes: &[u8], n: usize) -> String {
    bytes.iter().take(n).fold(String::new(), |mut acc, b| {
        write!(acc, "{b:02x}").expect("string write");
        acc
    })
}

// --- init-net ---------------------------------------------------------------

fn cmd_init_net(cfg: &RunConfig, out: &Path) -> CliResult<Network> {
    let n = &cfg.network;
    let net = generate_small_world(
        n.n,
        n.k,
        n.beta,
        n.excit_frac,
        n.weight_scale,
        derive_seed(cfg.seed, "network"),
    )?
    .resample_timescales(n.tau_shape, n.tau_scale, derive_seed(cfg.seed, "timescales"))?;
    let path = out.join("network.json");
    write_artifact(&path, cfg, "network", &net.to_json()?)?;
    println!("wrote {}", path.display());
    Ok(net)
}

fn load_network(path: &Path) -> CliResult<Network> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read network {}: {e}", path.display())))?;
    // Accept both the bare document and the CLI wrapper.
    if let Ok(net) = Network::from_json(&text) {
        return Ok(net);
    }
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid network file {}: {e}", path.display())))?;
    let inner = value
        .get("network")
        .ok_or_else(|| CliError::Usage(format!("{} has no network document", path.display())))?;
    Ok(serde_json::from_value(inner.clone())
        .map_err(|e| CliError::Usage(format!("invalid network document: {e}")))?)
}

fn load_series(cfg: &RunConfig, path: &Path) -> CliResult<TimeSeries> {
    let mut series = data::load_csv(path)
        .map_err(|e| CliError::Usage(format!("cannot load data {}: {e}", path.display())))?;
    if let Some(snr_db) = cfg.data.snr_db {
        series = data::add_noise_snr(&series, snr_db, derive_seed(cfg.seed, "input-noise"))?;
    }
    Ok(series)
}

// --- prune -------------------------------------------------------------------

fn cmd_prune(
    cfg: &RunConfig,
    method: &str,
    net: &Network,
    data_path: Option<&Path>,
    reference_trace: Option<&Path>,
    out: &Path,
) -> CliResult<Network> {
    let (pruned, trace, tsopt_csv) = match method {
        "lnp" => {
            let mut lnp_cfg = cfg.lnp.clone();
            lnp_cfg.seed = derive_seed(cfg.seed, "prune");
            lnp_cfg.tsopt = cfg.tsopt.clone();
            let outcome = lnp_pipeline_full(net, &lnp_cfg)?;
            let csv = outcome.tsopt_run.as_ref().map(|r| r.history_csv()).transpose()?;
            (outcome.network, outcome.trace, csv)
        }
        "ap" => {
            let data_path = data_path
                .ok_or_else(|| CliError::Usage("method=ap requires --data".to_string()))?;
            let series = load_series(cfg, data_path)?;
            let (pruned, trace) = run_activity_pruning(cfg, net, &series)?;
            (pruned, trace, None)
        }
        "lyapunov" => {
            let (pruned, trace) = run_lyapunov_pruning(cfg, net)?;
            (pruned, trace, None)
        }
        "random-match" => {
            let trace_path = reference_trace.ok_or_else(|| {
                CliError::Usage("method=random-match requires --reference-trace".to_string())
            })?;
            let (matched, trace) = run_random_match(cfg, trace_path)?;
            (matched, trace, None)
        }
        other => {
            return Err(CliError::Usage(format!(
                "unknown method {other:?} (expected lnp, ap, lyapunov, or random-match)"
            )))
        }
    };

    let net_path = out.join("pruned_network.json");
    write_artifact(&net_path, cfg, "network", &pruned.to_json()?)?;
    let trace_path = out.join("trace.csv");
    std::fs::write(&trace_path, trace.to_csv()?)?;
    if let Some(csv) = tsopt_csv {
        std::fs::write(out.join("tsopt_history.csv"), csv)?;
    }

    // Spectrum of the pruned network's rate map.
    if pruned.n_alive() > 0 {
        let spectrum = network_spectrum(
            &pruned,
            cfg.lnp.dt,
            cfg.lnp.phi,
            300,
            cfg.lnp.sigma,
            derive_seed(cfg.seed, "report-spectrum"),
        )?;
        write_json(&out.join("lyapunov.json"), cfg, "report", &spectrum)?;
    }
    println!(
        "pruned with {method}: {} neurons, {} edges -> {}",
        pruned.n_alive(),
        pruned.n_edges(),
        net_path.display()
    );
    Ok(pruned)
}

/// Iterative activity pruning against the configured probe slice, retraining
/// the ridge readout for the performance check each iteration.
fn run_activity_pruning(
    cfg: &RunConfig,
    net: &Network,
    series: &TimeSeries,
) -> CliResult<(Network, PruneTrace)> {
    let spec = cfg.data.split_spec();
    let (train, val, _) = data::split(series, &spec)?;
    let probe_len = cfg.ap.probe_frames.min(train.len());
    let probe = train.slice(0, probe_len);
    let bounds = channel_bounds(&probe.values);
    let rcfg = cfg.eval.reservoir.clone();
    let eval_train_len = cfg.eval.train_frames.min(train.len());
    let eval_train = train.slice(train.len() - eval_train_len, eval_train_len);
    let eval_truth = val.slice(0, cfg.eval.horizon.min(val.len()));
    let master = derive_seed(cfg.seed, "prune");

    let performance = |n: &Network| -> Result<f64, CoreError> {
        let out = evaluate_forecast(n, &rcfg, &eval_train, &eval_truth, master)?;
        let mean_rmse = out.rmse.iter().sum::<f64>() / out.rmse.len().max(1) as f64;
        Ok(1.0 / (1.0 + mean_rmse))
    };
    let initial = performance(net)?;

    let target = cfg.ap.target_neurons;
    let mut current = net.clone();
    let mut merged = PruneTrace::new();
    let mut iteration_offset = 0usize;
    loop {
        if let Some(t) = target {
            if current.n_alive() <= t {
                break;
            }
        }
        if iteration_offset >= cfg.ap.max_iters {
            break;
        }
        let (next, trace) = activity_prune(
            &current,
            |n, s| {
                let ids = n.alive_nodes();
                let w_in = input_weights(
                    probe.channels(),
                    ids.len(),
                    rcfg.input_scale,
                    derive_seed(s, "input-weights"),
                );
                harvest_states(n, &rcfg, &w_in, &bounds, &probe, s).map(|(_, rec)| rec)
            },
            cfg.ap.rate,
            1,
            performance,
            derive_seed(master, &format!("ap-{iteration_offset}")),
        )?;
        if trace.rows.is_empty() {
            break;
        }
        let last_eval = trace.rows.last().and_then(|r| r.eval);
        for mut row in trace.rows {
            row.iteration += iteration_offset;
            merged.rows.push(row);
        }
        current = next;
        iteration_offset += 1;
        // the paper's stop rule, against the performance of the unpruned net
        if last_eval.is_some_and(|e| e < 0.1 * initial) {
            break;
        }
    }
    Ok((current, merged))
}

/// Single-shot exponent-ranked neuron pruning over the rate map's Jacobians.
fn run_lyapunov_pruning(cfg: &RunConfig, net: &Network) -> CliResult<(Network, PruneTrace)> {
    let seed = derive_seed(cfg.seed, "prune");
    let ids = net.alive_nodes();
    let (w, _) = net.weight_matrix();
    let dt_norms = nalgebra::DVector::from_iterator(
        ids.len(),
        ids.iter()
            .map(|&id| (cfg.lnp.dt / net.tau_m(id)).clamp(1e-6, 1.0 - 1e-9)),
    );
    let traj = lnprune::dynamics::simulate_discrete_map(
        &w,
        &dt_norms,
        cfg.lnp.phi,
        120,
        cfg.lnp.sigma,
        derive_seed(seed, "rate-map"),
    )?;
    let jacobians: Vec<DMatrix<f64>> = (0..traj.steps())
        .map(|t| {
            lnprune::lyapunov::jacobian_at_hetero(
                &traj.states.row(t).transpose(),
                &w,
                &dt_norms,
                cfg.lnp.phi,
            )
        })
        .collect::<Result<_, _>>()
        .map_err(CoreError::from)?;
    let seq = JacobianSequence::new(jacobians, cfg.lnp.dt)?;
    let top_k = ((cfg.ap.rate * ids.len() as f64).ceil() as usize).min(ids.len().saturating_sub(1));
    let pruned = lyapunov_neuron_prune(net, &seq, top_k)?;
    let mut trace = PruneTrace::new();
    trace.rows.push(TraceRow {
        iteration: 0,
        step: "lyapunov-prune".to_string(),
        neurons: pruned.n_alive(),
        edges: pruned.n_edges(),
        seed,
        eval: None,
    });
    Ok((pruned, trace))
}

/// Random-initialization control: for each iteration of a reference trace,
/// draw an Erdos-Renyi network with the same neuron and synapse counts; the
/// last one is returned.
fn run_random_match(cfg: &RunConfig, trace_path: &Path) -> CliResult<(Network, PruneTrace)> {
    let text = std::fs::read_to_string(trace_path)
        .map_err(|e| CliError::Usage(format!("cannot read trace {}: {e}", trace_path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| CliError::Usage(format!("invalid trace: {e}")))?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (it_col, n_col, e_col) = match (col("iteration"), col("neurons"), col("edges")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(CliError::Usage(
                "trace must have iteration,neurons,edges columns".to_string(),
            ))
        }
    };
    // last row per iteration
    let mut finals: Vec<(usize, usize, usize)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Usage(format!("invalid trace row: {e}")))?;
        let parse = |idx: usize| -> CliResult<usize> {
            record
                .get(idx)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| CliError::Usage("non-numeric trace entry".to_string()))
        };
        let row = (parse(it_col)?, parse(n_col)?, parse(e_col)?);
        match finals.last() {
            Some(&(it, _, _)) if it == row.0 => *finals.last_mut().expect("nonempty") = row,
            _ => finals.push(row),
        }
    }
    if finals.is_empty() {
        return Err(CliError::Usage("reference trace has no rows".to_string()));
    }

    let master = derive_seed(cfg.seed, "random-match");
    let mut trace = PruneTrace::new();
    let mut result: Option<Network> = None;
    for &(iteration, neurons, edges) in &finals {
        let seed = derive_seed(master, &format!("iter-{iteration}"));
        let net = erdos_renyi_matched(cfg, neurons, edges, seed)?;
        trace.rows.push(TraceRow {
            iteration,
            step: "random-match".to_string(),
            neurons: net.n_alive(),
            edges: net.n_edges(),
            seed,
            eval: None,
        });
        result = Some(net);
    }
    Ok((result.expect("nonempty finals"), trace))
}

fn erdos_renyi_matched(
    cfg: &RunConfig,
    neurons: usize,
    edges: usize,
    seed: u64,
) -> CliResult<Network> {
    let max_edges = neurons.saturating_mul(neurons.saturating_sub(1));
    if edges > max_edges {
        return Err(CliError::Usage(format!(
            "cannot place {edges} edges on {neurons} neurons"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chosen = std::collections::BTreeSet::new();
    while chosen.len() < edges {
        let s = rng.gen_range(0..neurons);
        let d = rng.gen_range(0..neurons);
        if s != d {
            chosen.insert((s, d));
        }
    }
    let scheme = &cfg.network;
    let edge_list: Vec<(usize, usize, f64)> = chosen
        .into_iter()
        .map(|(s, d)| {
            let sign = if rng.gen::<f64>() < scheme.excit_frac { 1.0 } else { -1.0 };
            let magnitude = (1.0 - rng.gen::<f64>()) * scheme.weight_scale;
            (s, d, sign * magnitude)
        })
        .collect();
    let net = Network::new(
        neurons,
        edge_list,
        vec![
            NeuronParams {
                tau_m: 20.0,
                leak: 1.0
            };
            neurons
        ],
        vec![true; neurons],
    )?;
    Ok(net.resample_timescales(scheme.tau_shape, scheme.tau_scale, derive_seed(seed, "tau"))?)
}

// --- eval ---------------------------------------------------------------------

#[derive(Serialize)]
struct EvalSummary {
    efficiency_mean: f64,
    efficiency_std: f64,
    mean_rmse_mean: f64,
    mean_rmse_std: f64,
    sop_ratio_mean: f64,
    sop_ratio_std: f64,
    total_sops_mean: f64,
    total_sops_std: f64,
    vpt_mean: f64,
    vpt_std: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn cmd_eval(
    cfg: &RunConfig,
    net: &Network,
    reference: Option<&Network>,
    series: &TimeSeries,
    out: &Path,
    jobs: Option<usize>,
) -> CliResult<Vec<EvalReport>> {
    let spec = cfg.data.split_spec();
    let (train, val, _) = data::split(series, &spec)?;
    let train_len = cfg.eval.train_frames.min(train.len());
    let eval_train = train.slice(train.len() - train_len, train_len);
    let horizon = cfg.eval.horizon.min(val.len());
    let truth = val.slice(0, horizon);
    let rcfg = cfg.eval.reservoir.clone();

    let seeds: Vec<u64> = (0..cfg.eval.seeds.max(1))
        .map(|k| derive_seed(cfg.seed, &format!("eval-{k}")))
        .collect();

    let evaluate_seed = |&seed: &u64| -> Result<EvalReport, CoreError> {
        let outcome = evaluate_forecast(net, &rcfg, &eval_train, &truth, seed)?;
        let dense = match reference {
            Some(reference_net) => {
                evaluate_forecast(reference_net, &rcfg, &eval_train, &truth, seed)?.sops
            }
            None => outcome.sops,
        };
        report(dense, outcome.sops, outcome.vpt, outcome.rmse)
    };

    let reports: Vec<EvalReport> = if let Some(jobs) = jobs {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| {
            use rayon::prelude::*;
            seeds.par_iter().map(evaluate_seed).collect::<Result<_, _>>()
        })?
    } else {
        seeds.iter().map(|s| evaluate_seed(s)).collect::<Result<_, _>>()?
    };

    let vpts: Vec<f64> = reports.iter().map(|r| r.vpt as f64).collect();
    let sops: Vec<f64> = reports.iter().map(|r| r.total_sops as f64).collect();
    let ratios: Vec<f64> = reports.iter().map(|r| r.sop_ratio).collect();
    let effs: Vec<f64> = reports.iter().map(|r| r.efficiency).collect();
    let mean_rmses: Vec<f64> = reports
        .iter()
        .map(|r| r.rmse_series.iter().sum::<f64>() / r.rmse_series.len().max(1) as f64)
        .collect();
    let (vpt_mean, vpt_std) = mean_std(&vpts);
    let (sops_mean, sops_std) = mean_std(&sops);
    let (ratio_mean, ratio_std) = mean_std(&ratios);
    let (eff_mean, eff_std) = mean_std(&effs);
    let (rmse_mean, rmse_std) = mean_std(&mean_rmses);
    let summary = EvalSummary {
        efficiency_mean: eff_mean,
        efficiency_std: eff_std,
        mean_rmse_mean: rmse_mean,
        mean_rmse_std: rmse_std,
        sop_ratio_mean: ratio_mean,
        sop_ratio_std: ratio_std,
        total_sops_mean: sops_mean,
        total_sops_std: sops_std,
        vpt_mean,
        vpt_std,
    };

    write_json(
        &out.join("eval_report.json"),
        cfg,
        "report",
        &serde_json::json!({
            "per_seed": reports,
            "summary": summary,
        }),
    )?;

    // rmse.csv: one row per forecast step, one column per seed, then
    // mean/std columns.
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string()];
    header.extend((0..reports.len()).map(|k| format!("seed{k}")));
    header.push("mean".to_string());
    header.push("std".to_string());
    w.write_record(&header).map_err(CoreError::from)?;
    for t in 0..horizon {
        let row_vals: Vec<f64> = reports.iter().map(|r| r.rmse_series[t]).collect();
        let (m, s) = mean_std(&row_vals);
        let mut record = vec![t.to_string()];
        record.extend(row_vals.iter().map(|v| v.to_string()));
        record.push(m.to_string());
        record.push(s.to_string());
        w.write_record(&record).map_err(CoreError::from)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(out.join("rmse.csv"), bytes)?;

    println!(
        "eval: vpt {:.2} +- {:.2}, sops {:.0} +- {:.0}, efficiency {:.3e} -> {}",
        vpt_mean,
        vpt_std,
        sops_mean,
        sops_std,
        eff_mean,
        out.join("eval_report.json").display()
    );
    Ok(reports)
}

//! Chaotic dataset generation (Lorenz-63, Rossler) with fixed-step RK4,
//! chronological splitting, SNR-controlled noise injection, and CSV
//! ingestion for user-supplied series.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued multichannel series; rows are steps.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: DMatrix<f64>,
    /// Dimensionless integrator step size (1.0 for ingested data).
    pub dt: f64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    /// CSV with non-numeric channel labels (`c0,c1,...`) so the header
    /// survives [`load_csv`]'s auto-detection on re-ingestion.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record((0..self.channels()).map(|c| format!("c{c}")))?;
        for r in 0..self.len() {
            w.write_record((0..self.channels()).map(|c| self.values[(r, c)].to_string()))?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    /// Contiguous row slice as a new series.
    pub fn slice(&self, start: usize, len: usize) -> TimeSeries {
        TimeSeries {
            values: self.values.rows(start, len).clone_owned(),
            dt: self.dt,
        }
    }
}

/// Chronological split sizes; `n_discard` initial rows are skipped first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    #[serde(default)]
    pub n_discard: usize,
}

/// Experimental setup for the Lorenz system.
pub mod lorenz_defaults {
    use super::SplitSpec;

    pub const N: usize = 20_000;
    pub const X0: [f64; 3] = [12.0, 2.0, 9.0];
    pub const DT: f64 = 0.01;
    pub const SIGMA: f64 = 10.0;
    pub const RHO: f64 = 28.0;
    pub const BETA: f64 = 8.0 / 3.0;
    pub const SPLIT: SplitSpec = SplitSpec {
        n_train: 11_250,
        n_val: 3_750,
        n_test: 5_000,
        n_discard: 0,
    };
}

/// Experimental setup for the Rossler system.
pub mod rossler_defaults {
    use super::SplitSpec;

    pub const N: usize = 12_700;
    pub const X0: [f64; 3] = [1.0, 1.0, 1.0];
    pub const DT: f64 = 0.03;
    pub const A: f64 = 0.15;
    pub const B: f64 = 0.2;
    pub const C: f64 = 10.0;
    pub const DISCARD: usize = 7_700;
    pub const SPLIT: SplitSpec = SplitSpec {
        n_train: 3_000,
        n_val: 1_000,
        n_test: 1_000,
        n_discard: 0,
    };
}

/// Classic fixed-step RK4 on a 3-d vector field. Row 0 is `x0`; `n` rows
/// total. Reports the step index on numeric blow-up.
fn rk4_integrate_3d(
    f: impl Fn(&Vector3<f64>) -> Vector3<f64>,
    x0: Vector3<f64>,
    dt: f64,
    n: usize,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt {dt} must be positive")));
    }
    let mut out = DMatrix::zeros(n, 3);
    let mut x = x0;
    for step in 0..n {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        out.row_mut(step).copy_from(&x.transpose());
        if step + 1 == n {
            break;
        }
        let k1 = f(&x);
        let k2 = f(&(x + k1 * (dt / 2.0)));
        let k3 = f(&(x + k2 * (dt / 2.0)));
        let k4 = f(&(x + k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(out)
}

fn lorenz_field(sigma: f64, rho: f64, beta: f64) -> impl Fn(&Vector3<f64>) -> Vector3<f64> {
    move |x| {
        Vector3::new(
            sigma * (x[1] - x[0]),
            x[0] * (rho - x[2]) - x[1],
            x[0] * x[1] - beta * x[2],
        )
    }
}

/// Lorenz-63 trajectory via RK4. Row 0 equals `x0`.
pub fn lorenz63(
    n: usize,
    x0: [f64; 3],
    dt: f64,
    sigma: f64,
    rho: f64,
    beta: f64,
) -> Result<TimeSeries> {
    let values = rk4_integrate_3d(lorenz_field(sigma, rho, beta), Vector3::from(x0), dt, n)?;
    Ok(TimeSeries { values, dt })
}

/// Rossler trajectory via RK4 with the first `discard` rows dropped.
pub fn rossler(
    n: usize,
    x0: [f64; 3],
    dt: f64,
    a: f64,
    b: f64,
    c: f64,
    discard: usize,
) -> Result<TimeSeries> {
    if discard >= n {
        return Err(Error::InvalidParameter(format!(
            "discard {discard} must be below n {n}"
        )));
    }
    let field = move |x: &Vector3<f64>| {
        Vector3::new(-x[1] - x[2], x[0] + a * x[1], b + x[2] * (x[0] - c))
    };
    let values = rk4_integrate_3d(field, Vector3::from(x0), dt, n)?;
    Ok(TimeSeries {
        values: values.rows(discard, n - discard).clone_owned(),
        dt,
    })
}

/// Jacobians of the Lorenz-63 RK4 step map along the trajectory from `x0`,
/// for validating exponent estimators against the tangent-linear flow.
/// Returns `n` matrices; dividing the resulting exponents by `dt` converts
/// per-step rates to per-unit-time rates.
pub fn lorenz63_tangent_jacobians(
    n: usize,
    x0: [f64; 3],
    dt: f64,
    sigma: f64,
    rho: f64,
    beta: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let f = lorenz_field(sigma, rho, beta);
    let df = |x: &Vector3<f64>| {
        Matrix3::new(
            -sigma, sigma, 0.0, //
            rho - x[2], -1.0, -x[0], //
            x[1], x[0], -beta,
        )
    };
    let eye = Matrix3::identity();
    let mut x = Vector3::from(x0);
    let mut jacs = Vec::with_capacity(n);
    for step in 0..n {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { step });
        }
        let k1 = f(&x);
        let m1 = df(&x);
        let x2 = x + k1 * (dt / 2.0);
        let k2 = f(&x2);
        let m2 = df(&x2) * (eye + m1 * (dt / 2.0));
        let x3 = x + k2 * (dt / 2.0);
        let k3 = f(&x3);
        let m3 = df(&x3) * (eye + m2 * (dt / 2.0));
        let x4 = x + k3 * dt;
        let k4 = f(&x4);
        let m4 = df(&x4) * (eye + m3 * dt);
        let step_jac = eye + (m1 + m2 * 2.0 + m3 * 2.0 + m4) * (dt / 6.0);
        jacs.push(DMatrix::from_fn(3, 3, |i, j| step_jac[(i, j)]));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok(jacs)
}

/// Contiguous chronological split after the spec's discards. No shuffling.
pub fn split(series: &TimeSeries, spec: &SplitSpec) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    let needed = spec.n_discard + spec.n_train + spec.n_val + spec.n_test;
    if needed > series.len() {
        return Err(Error::SpecOverflow {
            needed,
            available: series.len(),
        });
    }
    let train = series.slice(spec.n_discard, spec.n_train);
    let val = series.slice(spec.n_discard + spec.n_train, spec.n_val);
    let test = series.slice(spec.n_discard + spec.n_train + spec.n_val, spec.n_test);
    Ok((train, val, test))
}

/// Add i.i.d. Gaussian noise per channel with variance
/// `signal_power / 10^(snr_db / 10)`, where signal power is the channel's
/// mean square. `snr_db = +inf` leaves the series unchanged.
pub fn add_noise_snr(series: &TimeSeries, snr_db: f64, seed: u64) -> Result<TimeSeries> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    let rows = series.len();
    let channels = series.channels();
    let mut noise_sd = DVector::zeros(channels);
    for c in 0..channels {
        let power = series.values.column(c).map(|v| v * v).sum() / rows as f64;
        if power == 0.0 {
            return Err(Error::ZeroSignalPower { channel: c });
        }
        noise_sd[c] = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = series.values.clone();
    for r in 0..rows {
        for c in 0..channels {
            values[(r, c)] += noise_sd[c] * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Ok(TimeSeries {
        values,
        dt: series.dt,
    })
}

/// Load a rectangular numeric CSV as a series. A non-numeric first row is
/// treated as a header and skipped. Row/column positions in errors are
/// 1-based file coordinates.
pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let file_row = idx + 1;
        let mut parsed = Vec::with_capacity(record.len());
        let mut numeric = true;
        for (col, field) in record.iter().enumerate() {
            match field.parse::<f64>() {
                Ok(v) => parsed.push(v),
                Err(_) => {
                    if idx == 0 {
                        numeric = false;
                        break;
                    }
                    return Err(Error::ParseError {
                        row: file_row,
                        col: col + 1,
                        message: format!("not a number: {field:?}"),
                    });
                }
            }
        }
        if idx == 0 && !numeric {
            continue; // header row
        }
        match width {
            None => width = Some(parsed.len()),
            Some(w) if w != parsed.len() => {
                return Err(Error::ParseError {
                    row: file_row,
                    col: parsed.len() + 1,
                    message: format!("ragged row: expected {w} fields, found {}", parsed.len()),
                });
            }
            _ => {}
        }
        rows.push(parsed);
    }
    let width = width.ok_or(Error::EmptySeries)?;
    if rows.is_empty() || width == 0 {
        return Err(Error::EmptySeries);
    }
    let values = DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c]);
    Ok(TimeSeries { values, dt: 1.0 })
}

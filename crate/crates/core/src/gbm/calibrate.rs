use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, NaiveDateTime};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::params::{identity, project_correlation};
use super::{GbmParams, ParamShape};
use crate::error::{Error, Result};

/// Relative tolerance when checking that sampling intervals agree.
const INTERVAL_TOL: f64 = 1e-9;

/// Time-stamped positive prices of one quoted component.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    pub label: String,
    /// Seconds since the Unix epoch.
    pub timestamps: Vec<f64>,
    pub prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(label: impl Into<String>, timestamps: Vec<f64>, prices: Vec<f64>) -> Result<Self> {
        let label = label.into();
        if timestamps.len() != prices.len() {
            return Err(Error::Ingestion(format!("{label}: timestamps and prices differ in length")));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(Error::Ingestion(format!("{label}: price {p} is not positive")));
        }
        if timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Ingestion(format!("{label}: timestamps are not strictly increasing")));
        }
        Ok(Self {
            label,
            timestamps,
            prices,
        })
    }

    /// Common spacing of the timestamps, in seconds.
    pub fn sampling_interval(&self) -> Result<f64> {
        if self.timestamps.len() < 2 {
            return Err(Error::Ingestion(format!("{}: need at least 2 observations", self.label)));
        }
        let first = self.timestamps[1] - self.timestamps[0];
        for w in self.timestamps.windows(2) {
            if ((w[1] - w[0]) - first).abs() > INTERVAL_TOL * first {
                return Err(Error::Ingestion(format!("{}: sampling interval is not constant", self.label)));
            }
        }
        Ok(first)
    }

    pub fn log_returns(&self) -> Vec<f64> {
        self.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }
}

/// Accepts integer epoch seconds, RFC 3339, or an offset-free ISO-8601
/// date-time read as UTC.
pub fn parse_timestamp(raw: &str) -> Option<f64> {
    let raw = raw.trim();
    if let Ok(secs) = raw.parse::<i64>() {
        return Some(secs as f64);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(raw) {
        return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(raw, fmt) {
            let t = t.and_utc();
            return Some(t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9);
        }
    }
    None
}

/// Reads `timestamp,exchange,price` rows into one series per exchange
/// label. Any malformed row is an error naming its line.
pub fn read_price_csv(reader: impl Read) -> Result<BTreeMap<String, PriceSeries>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["timestamp", "exchange", "price"] {
        return Err(Error::Ingestion(format!(
            "expected header `timestamp,exchange,price`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut raw: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Ingestion(format!("line {line}: {e}")))?;
        if record.len() != 3 {
            return Err(Error::Ingestion(format!("line {line}: expected 3 fields, got {}", record.len())));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| Error::Ingestion(format!("line {line}: bad timestamp {:?}", &record[0])))?;
        let exchange = record[1].to_string();
        if exchange.is_empty() {
            return Err(Error::Ingestion(format!("line {line}: empty exchange label")));
        }
        let price: f64 = record[2]
            .parse()
            .map_err(|_| Error::Ingestion(format!("line {line}: bad price {:?}", &record[2])))?;
        if !(price.is_finite() && price > 0.0) {
            return Err(Error::Ingestion(format!("line {line}: price {price} is not positive")));
        }
        let entry = raw.entry(exchange).or_default();
        if entry.0.last().is_some_and(|&last| ts <= last) {
            return Err(Error::Ingestion(format!("line {line}: timestamp does not increase for {}", &record[1])));
        }
        entry.0.push(ts);
        entry.1.push(price);
    }
    raw.into_iter()
        .map(|(label, (ts, px))| PriceSeries::new(label.clone(), ts, px).map(|s| (label, s)))
        .collect()
}

/// Calibrated parameters plus anything worth telling the user about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub params: GbmParams,
    pub sampling_interval: f64,
    pub warnings: Vec<String>,
}

/// Fits drift, vol and correlation from log returns.
///
/// `series` is exchange-major (`series[i * d + c]` is component `c` of
/// exchange `i`) and all series must share timestamps. `time_unit` is the
/// number of seconds in one model time unit. The start price is the last
/// observation, so the lattice models the future from the latest quote.
pub fn calibrate_from_prices(series: &[PriceSeries], shape: ParamShape, time_unit: f64) -> Result<Calibration> {
    let width = shape.exchanges * shape.dim;
    if width == 0 || series.len() != width {
        return Err(Error::InvalidArgument(format!(
            "expected {width} series for {} exchanges x {} components, got {}",
            shape.exchanges,
            shape.dim,
            series.len()
        )));
    }
    if !(time_unit.is_finite() && time_unit > 0.0) {
        return Err(Error::InvalidArgument(format!("time unit must be positive, got {time_unit}")));
    }
    let interval = series[0].sampling_interval()?;
    for s in &series[1..] {
        s.sampling_interval()?;
        if s.timestamps != series[0].timestamps {
            return Err(Error::Ingestion(format!(
                "{} and {} are not sampled at the same times",
                series[0].label, s.label
            )));
        }
    }
    let dt = interval / time_unit;
    let returns: Vec<Vec<f64>> = series.iter().map(PriceSeries::log_returns).collect();
    let count = returns[0].len() as f64;

    let mut warnings = Vec::new();
    if returns[0].len() < 2 {
        warnings.push("only one return per series; volatility estimated as zero".to_string());
    }
    let means: Vec<f64> = returns.iter().map(|r| r.iter().sum::<f64>() / count).collect();
    let centered: Vec<Vec<f64>> = returns
        .iter()
        .zip(&means)
        .map(|(r, m)| r.iter().map(|x| x - m).collect())
        .collect();
    // population moments, matching the lattice innovations
    let variances: Vec<f64> = centered.iter().map(|c| c.iter().map(|x| x * x).sum::<f64>() / count).collect();
    let degenerate: Vec<bool> = variances.iter().map(|&v| v <= 1e-30 || returns[0].len() < 2).collect();

    let mut drift = vec![vec![0.0; shape.dim]; shape.exchanges];
    let mut vol = vec![vec![0.0; shape.dim]; shape.exchanges];
    let mut s0 = vec![vec![0.0; shape.dim]; shape.exchanges];
    for j in 0..width {
        let (i, c) = (j / shape.dim, j % shape.dim);
        let sigma = if degenerate[j] { 0.0 } else { (variances[j] / dt).sqrt() };
        vol[i][c] = sigma;
        drift[i][c] = means[j] / dt + 0.5 * sigma * sigma;
        s0[i][c] = *series[j].prices.last().expect("at least two prices");
        if degenerate[j] && returns[0].len() >= 2 {
            warnings.push(format!("{}: constant log returns; vol set to 0 and correlations to 0", series[j].label));
        }
    }

    let corr = if width == 1 {
        identity(1)
    } else {
        let raw = DMatrix::from_fn(width, width, |a, b| {
            if a == b {
                1.0
            } else if degenerate[a] || degenerate[b] {
                0.0
            } else {
                let cov: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum::<f64>() / count;
                (cov / (variances[a] * variances[b]).sqrt()).clamp(-1.0, 1.0)
            }
        });
        let projected = project_correlation(&raw);
        (0..width)
            .map(|a| {
                (0..width)
                    .map(|b| {
                        if a != b && (degenerate[a] || degenerate[b]) {
                            0.0
                        } else {
                            projected[(a, b)]
                        }
                    })
                    .collect()
            })
            .collect()
    };
    for w in &warnings {
        log::warn!("{w}");
    }
    let params = GbmParams { drift, vol, corr, s0 };
    params.validate()?;
    Ok(Calibration {
        params,
        sampling_interval: dt,
        warnings,
    })
}

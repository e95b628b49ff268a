//! The hypothesis class: correlated geometric Brownian motions with
//! constant multiplicative drift, realized on a lattice with moment-matched
//! branch innovations, plus calibration from price data and the exact
//! binomial martingale measure used as a validation oracle.

mod calibrate;
mod params;
mod risk_neutral;
mod simulate;

pub use calibrate::{calibrate_from_prices, parse_timestamp, read_price_csv, Calibration, PriceSeries};
pub use params::{project_correlation, GbmParams, ParamShape};
pub use risk_neutral::risk_neutral_binomial_measure;
pub use simulate::{branch_innovations, simulate_gbm};

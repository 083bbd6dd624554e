//! RMSE, weighted cuRMSE and molecule-level bootstrap intervals.
//!
//! Two weighted variants exist. [`cu_rmse`] multiplies each squared error by
//! the record weight, `sqrt(sum(w * e^2) / n)`. [`cu_rmse_error_weighted`]
//! weights the error before squaring, `sqrt(sum((w * e)^2) / n)`. For two
//! records with error 0.6 and weight 0.5 they give 0.42426... and 0.3.
//! Both divide by the record count, not by the weight sum.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::DetRng;
use crate::rounding::round_half_away;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub molecule_key: String,
    pub predicted: f64,
    pub observed: f64,
    pub weight: f64,
}

impl EvalPair {
    pub fn new(
        molecule_key: impl Into<String>,
        predicted: f64,
        observed: f64,
        weight: f64,
    ) -> Self {
        EvalPair {
            molecule_key: molecule_key.into(),
            predicted,
            observed,
            weight,
        }
    }

    fn error(&self) -> f64 {
        self.predicted - self.observed
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no evaluation pairs")]
    EmptyInput,
    #[error("weight {0} outside (0, 1]")]
    WeightOutOfRange(f64),
    #[error("non-finite value in evaluation pairs")]
    NonFinite,
    #[error("at least 100 bootstrap resamples are required, got {0}")]
    TooFewResamples(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Rmse,
    Curmse,
    CurmseErrorWeighted,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Rmse => "rmse",
            MetricKind::Curmse => "curmse",
            MetricKind::CurmseErrorWeighted => "curmse-error-weighted",
        }
    }

    pub fn parse(s: &str) -> Option<MetricKind> {
        [
            MetricKind::Rmse,
            MetricKind::Curmse,
            MetricKind::CurmseErrorWeighted,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }

    pub fn compute(self, pairs: &[EvalPair]) -> Result<f64, MetricsError> {
        match self {
            MetricKind::Rmse => rmse(pairs),
            MetricKind::Curmse => cu_rmse(pairs),
            MetricKind::CurmseErrorWeighted => cu_rmse_error_weighted(pairs),
        }
    }
}

fn check(pairs: &[EvalPair], weighted: bool) -> Result<(), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for p in pairs {
        if !(p.predicted.is_finite() && p.observed.is_finite() && p.weight.is_finite()) {
            return Err(MetricsError::NonFinite);
        }
        if weighted && !(p.weight > 0.0 && p.weight <= 1.0) {
            return Err(MetricsError::WeightOutOfRange(p.weight));
        }
    }
    Ok(())
}

pub fn rmse(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    check(pairs, false)?;
    let ss: f64 = pairs.iter().map(|p| p.error().powi(2)).sum();
    Ok((ss / pairs.len() as f64).sqrt())
}

pub fn cu_rmse(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    check(pairs, true)?;
    let ss: f64 = pairs.iter().map(|p| p.weight * p.error().powi(2)).sum();
    Ok((ss / pairs.len() as f64).sqrt())
}

pub fn cu_rmse_error_weighted(pairs: &[EvalPair]) -> Result<f64, MetricsError> {
    check(pairs, true)?;
    let ss: f64 = pairs.iter().map(|p| (p.weight * p.error()).powi(2)).sum();
    Ok((ss / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: MetricKind,
    pub point: f64,
    pub ci_halfwidth: f64,
    pub n_records: usize,
    pub n_molecules: usize,
    pub formatted: String,
}

/// `"0.58 ± 0.02"`: two decimals, half away from zero.
pub fn format_pm(point: f64, halfwidth: f64) -> String {
    format!(
        "{} ± {}",
        round_half_away(point, 2),
        round_half_away(halfwidth, 2)
    )
}

pub fn format_report(r: &MetricReport) -> String {
    format_pm(r.point, r.ci_halfwidth)
}

pub const DEFAULT_RESAMPLES: usize = 1000;

/// Point value on all pairs plus the standard deviation of the metric over
/// `b` resamples of molecules with replacement. All records of a drawn
/// molecule enter the resample together. Resample `i` uses the stream
/// `DetRng::derive(seed, i)`, so the result does not depend on scheduling.
pub fn bootstrap_ci(
    pairs: &[EvalPair],
    metric: MetricKind,
    b: usize,
    seed: u64,
) -> Result<MetricReport, MetricsError> {
    if b < 100 {
        return Err(MetricsError::TooFewResamples(b));
    }
    let point = metric.compute(pairs)?;
    let mut groups: BTreeMap<&str, Vec<&EvalPair>> = BTreeMap::new();
    for p in pairs {
        groups.entry(&p.molecule_key).or_default().push(p);
    }
    let groups: Vec<Vec<&EvalPair>> = groups.into_values().collect();
    let m = groups.len();

    let stats: Vec<f64> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = DetRng::derive(seed, i as u64);
            let mut sample = Vec::with_capacity(pairs.len());
            for _ in 0..m {
                sample.extend(groups[rng.below_usize(m)].iter().map(|&p| p.clone()));
            }
            metric.compute(&sample).expect("resample of valid pairs")
        })
        .collect();
    let ci_halfwidth = std_dev(&stats);
    Ok(MetricReport {
        metric_name: metric,
        point,
        ci_halfwidth,
        n_records: pairs.len(),
        n_molecules: m,
        formatted: format_pm(point, ci_halfwidth),
    })
}

/// Sample standard deviation; zero when all values are equal.
fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 || xs.iter().all(|&x| x == xs[0]) {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Reads a predictions CSV with columns `molecule_key,predicted,observed,weight`.
pub fn read_predictions<R: Read>(input: R) -> Result<Vec<EvalPair>, csv::Error> {
    csv::Reader::from_reader(input).deserialize().collect()
}

pub fn write_predictions<W: Write>(pairs: &[EvalPair], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for p in pairs {
        w.serialize(p)?;
    }
    if pairs.is_empty() {
        w.write_record(["molecule_key", "predicted", "observed", "weight"])?;
    }
    w.flush()?;
    Ok(())
}

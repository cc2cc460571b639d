//! Emitted artifacts. Every document carries the tool version and
//! re-parses to an equal value; the integration suite pins both.

use blockcorr::blocks::{BlockLayout, MeanMode};
use blockcorr::sim::EmpiricalResult;
use blockcorr::{LssParams, MethodTag, TestReport};
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of one independence test on real data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReportDocument {
    pub version: String,
    pub statistic: String,
    pub observed: f64,
    pub mean: f64,
    pub variance: f64,
    pub z_score: f64,
    /// Two-sided normal p-value; null when the variance is degenerate.
    pub p_value: Option<f64>,
    pub method: MethodTag,
    pub mean_mode: MeanMode,
    pub blocks: Vec<usize>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl TestReportDocument {
    pub fn new(statistic: String, report: &TestReport, layout: &BlockLayout) -> Self {
        TestReportDocument {
            version: TOOL_VERSION.into(),
            statistic,
            observed: report.statistic,
            mean: report.mean,
            variance: report.variance,
            z_score: report.z_score,
            p_value: report.p_value,
            method: report.method,
            mean_mode: report.mean_mode,
            blocks: layout.block_sizes().to_vec(),
            samples: layout.samples(),
            warnings: report.warnings.clone(),
        }
    }
}

/// Null CLT parameters for a layout, no data involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub version: String,
    pub statistic: String,
    pub mean: f64,
    pub variance: f64,
    pub method: MethodTag,
    pub mean_mode: MeanMode,
    pub blocks: Vec<usize>,
    pub samples: usize,
    pub warnings: Vec<String>,
}

impl ParamsDocument {
    pub fn new(statistic: String, params: &LssParams, layout: &BlockLayout) -> Self {
        ParamsDocument {
            version: TOOL_VERSION.into(),
            statistic,
            mean: params.mean,
            variance: params.variance,
            method: params.method,
            mean_mode: params.mean_mode,
            blocks: layout.block_sizes().to_vec(),
            samples: layout.samples(),
            warnings: params.warnings.clone(),
        }
    }
}

/// Equal-width histogram; `edges` has one more entry than `counts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    assert!(bins > 0, "histogram needs at least one bin");
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !(lo < hi) {
        // Empty or constant input still deserves a well-formed table.
        let center = if values.is_empty() { 0.0 } else { lo };
        lo = center - 0.5;
        hi = center + 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0usize; bins];
    for &v in values {
        let slot = (((v - lo) / width) as usize).min(bins - 1);
        counts[slot] += 1;
    }
    Histogram { edges, counts }
}

/// Outcome of a Monte Carlo experiment, histogram included so external
/// plotters need nothing but this file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub version: String,
    pub standardized_mean: f64,
    pub standardized_variance: f64,
    pub histogram: Histogram,
    pub result: EmpiricalResult,
}

impl SimulationDocument {
    pub fn new(result: EmpiricalResult) -> Self {
        SimulationDocument {
            version: TOOL_VERSION.into(),
            standardized_mean: result.standardized_mean(),
            standardized_variance: result.standardized_variance(),
            histogram: histogram(&result.standardized, 40),
            result,
        }
    }
}

//! Monte Carlo and exact checks on simulated paths.
//!
//! Every test is a pure function of `(model, parameters, seed)`: replica `r`
//! reads path stream `r`, replicas run in parallel, and statistics are reduced
//! in replica order afterwards.

mod clt;
mod degenerate;
mod negligibility;
mod pipeline;

use std::collections::BTreeMap;
use std::time::Duration;

use serde::Serialize;

use crate::error::Result;

pub use clt::{clt_test, kolmogorov_pvalue, CltConfig};
pub use degenerate::{coboundary_probe, degenerate_split, DegenerateSplit};
pub use negligibility::{block_maxima_test, gap_mask, gap_sum_test, lp_scaling_test, quantile, NegligibilityConfig};
pub use pipeline::{asip_pipeline_demo, LevelDiagnostics, PipelineConfig, PipelineOutcome};

/// Outcome of one check. `pass` is `statistic <= threshold` or
/// `statistic > threshold` according to the test; `runtime` is not serialized
/// so reports are reproducible byte for byte.
#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub name: String,
    pub model: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub statistics: BTreeMap<String, f64>,
    pub replicas: usize,
    pub seeds: Vec<u64>,
    #[serde(skip)]
    pub runtime: Duration,
    pub curve: Vec<(f64, f64)>,
    pub notes: Vec<String>,
}

impl TestReport {
    pub(crate) fn new(name: &str, model: &str, replicas: usize, seed: u64) -> Self {
        Self {
            name: name.to_string(),
            model: model.to_string(),
            statistic: f64::NAN,
            threshold: f64::NAN,
            pass: false,
            statistics: BTreeMap::new(),
            replicas,
            seeds: vec![seed],
            runtime: Duration::ZERO,
            curve: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub(crate) fn stat(&mut self, key: impl Into<String>, value: f64) {
        self.statistics.insert(key.into(), value);
    }

    pub fn to_json_line(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_curve_csv<W: std::io::Write>(&self, x: &str, y: &str, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([x, y])?;
        for (a, b) in &self.curve {
            w.write_record([format!("{a:?}"), format!("{b:?}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn non_increasing_tail(values: &[f64], count: usize) -> bool {
    let tail = &values[values.len().saturating_sub(count)..];
    tail.windows(2).all(|w| w[1] <= w[0])
}

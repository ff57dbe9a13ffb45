//! Per-iteration optimization records: costs, solve counters, step
//! diagnostics and control snapshots.

use serde::{Deserialize, Serialize};

use crate::control::ControlField;
use crate::dynamics::EquationCounter;

/// Which optimizer produced an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeTag {
    Grape,
    Krotov,
}

impl std::fmt::Display for SchemeTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SchemeTag::Grape => write!(f, "grape"),
            SchemeTag::Krotov => write!(f, "krotov"),
        }
    }
}

/// Why an optimization run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationStatus {
    /// The terminal cost dropped below the configured threshold.
    ReachedStopJt,
    /// The equation budget was exhausted.
    BudgetExhausted,
    /// No improving step could be found along the search direction.
    LineSearchFailed,
    /// The sequential update diverged repeatedly even after shrinking
    /// its step size.
    Unstable,
    /// The configured iteration cap was reached (hybrid phase switch).
    IterationCap,
}

/// Newton refinement statistics for one sequential sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonStats {
    pub mean_iterations: f64,
    pub max_iterations: u32,
    pub fallbacks: u32,
}

/// One optimizer iteration. Counters are cumulative totals after the
/// iteration finished.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub scheme: SchemeTag,
    pub n_forward: u64,
    pub n_backward: u64,
    pub j_terminal: f64,
    pub j_total: f64,
    pub penalty: f64,
    /// Accepted line-search step (concurrent schemes only).
    pub step_length: Option<f64>,
    /// Metric norm of the gradient at the accepted point.
    pub grad_norm: Option<f64>,
    /// Current step-size parameter (sequential scheme only).
    pub k: Option<f64>,
    pub newton: Option<NewtonStats>,
    /// Wall time of the iteration; excluded from deterministic exports.
    pub wall_ms: f64,
}

impl IterationRecord {
    pub fn n_total(&self) -> u64 {
        self.n_forward + self.n_backward
    }
}

/// A stored control trajectory snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ControlSnapshot {
    pub iteration: usize,
    pub values: Vec<f64>,
}

/// Complete record of one optimization run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub snapshots: Vec<ControlSnapshot>,
    pub status: Option<TerminationStatus>,
    /// Number of times the sequential scheme halved its step size.
    pub k_halvings: u32,
}

impl RunTrace {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            snapshots: Vec::new(),
            status: None,
            k_halvings: 0,
        }
    }

    pub fn push(&mut self, record: IterationRecord) {
        if let Some(last) = self.records.last() {
            debug_assert!(
                record.n_total() > last.n_total(),
                "equation counters must increase strictly"
            );
        }
        self.records.push(record);
    }

    pub fn snapshot(&mut self, iteration: usize, values: &[f64]) {
        if self.snapshots.last().map(|s| s.iteration) == Some(iteration) {
            return;
        }
        self.snapshots.push(ControlSnapshot {
            iteration,
            values: values.to_vec(),
        });
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    pub fn final_j_terminal(&self) -> Option<f64> {
        self.records.last().map(|r| r.j_terminal)
    }

    /// Smallest cumulative equation count at which the terminal cost was
    /// at or below `threshold`.
    pub fn equations_to_reach(&self, threshold: f64) -> Option<u64> {
        self.records
            .iter()
            .find(|r| r.j_terminal <= threshold)
            .map(|r| r.n_total())
    }

    /// Terminal cost of the last record at or before the given
    /// cumulative equation count.
    pub fn j_terminal_at(&self, n_total: u64) -> Option<f64> {
        self.records
            .iter()
            .take_while(|r| r.n_total() <= n_total)
            .last()
            .map(|r| r.j_terminal)
    }
}

impl Default for RunTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// What every optimizer entry point returns: the final control, the run
/// trace and the equation counters.
#[derive(Debug, Clone)]
pub struct OptimizerOutcome {
    pub control: ControlField,
    pub trace: RunTrace,
    pub counter: EquationCounter,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(iteration: usize, n_forward: u64, jt: f64) -> IterationRecord {
        IterationRecord {
            iteration,
            scheme: SchemeTag::Grape,
            n_forward,
            n_backward: iteration as u64,
            j_terminal: jt,
            j_total: jt,
            penalty: 0.0,
            step_length: None,
            grad_norm: None,
            k: None,
            newton: None,
            wall_ms: 0.0,
        }
    }

    #[test]
    fn reach_queries() {
        let mut trace = RunTrace::new();
        trace.push(record(0, 1, 0.4));
        trace.push(record(1, 5, 0.1));
        trace.push(record(2, 9, 0.004));
        assert_eq!(trace.equations_to_reach(0.1), Some(6));
        assert_eq!(trace.equations_to_reach(1e-3), None);
        assert_eq!(trace.j_terminal_at(6), Some(0.1));
        assert_eq!(trace.final_j_terminal(), Some(0.004));
    }

    #[test]
    fn duplicate_snapshots_collapse() {
        let mut trace = RunTrace::new();
        trace.snapshot(3, &[1.0, 2.0]);
        trace.snapshot(3, &[1.0, 2.0]);
        assert_eq!(trace.snapshots.len(), 1);
    }
}

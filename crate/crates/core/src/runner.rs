//! Runs a resolved scenario through one or both engines and assembles the
//! run report.

use serde::{Deserialize, Serialize};

use crate::analysis::{inf_norm, AnalysisInputs, ConvergenceReport};
use crate::distributed::{run_distributed, DistributedOptions, DistributedRun};
use crate::rgp::{rgp_run, shifted_references, RunOutcome};
use crate::scenario::{Mode, ResolvedScenario, ScenarioError};
use crate::weights::xi_bounds;

/// Largest centralized/distributed gaps over a whole trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub max_state_deviation: f64,
    pub max_eta_deviation: f64,
    pub same_status: bool,
    pub same_length: bool,
}

impl CompareSummary {
    pub fn within(&self, tol: f64) -> bool {
        self.same_status && self.same_length && self.max_state_deviation <= tol && self.max_eta_deviation <= tol
    }
}

pub fn compare_outcomes(a: &RunOutcome, b: &RunOutcome) -> CompareSummary {
    let mut max_state_deviation = 0.0f64;
    let mut max_eta_deviation = 0.0f64;
    for (ra, rb) in a.trace.iter().zip(&b.trace) {
        for (u, v) in ra.x.iter().zip(&rb.x) {
            max_state_deviation = max_state_deviation.max((u - v).abs());
        }
        match (ra.eta, rb.eta) {
            (Some(u), Some(v)) => max_eta_deviation = max_eta_deviation.max((u - v).abs()),
            (None, None) => {}
            _ => max_eta_deviation = f64::INFINITY,
        }
    }
    CompareSummary {
        max_state_deviation,
        max_eta_deviation,
        same_status: a.status == b.status,
        same_length: a.trace.len() == b.trace.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: Option<String>,
    pub seed: Option<u64>,
    pub mode: Mode,
    pub channels: usize,
    /// Initial mean removed before the run.
    pub alpha: f64,
    pub detrend_steps: usize,
    /// Final water levels h_Z + alpha, when a geometry is configured.
    pub final_levels: Option<Vec<f64>>,
    /// max_i |x_i(k_bar) - mean(x(0))|.
    pub final_deviation: f64,
    pub total_messages: Option<u64>,
    pub compare: Option<CompareSummary>,
    pub convergence: ConvergenceReport,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    /// Trace written to disk: the agent-level one whenever it was produced.
    pub outcome: RunOutcome,
    pub centralized: Option<RunOutcome>,
    pub distributed: Option<DistributedRun>,
    pub report: RunReport,
}

pub fn analysis_inputs(res: &ResolvedScenario, x0_inf: f64) -> Result<AnalysisInputs, ScenarioError> {
    let ct = &res.channels;
    Ok(AnalysisInputs {
        eta_lower: res.spectral.eta_lower,
        eta_upper: res.eta_upper_for(x0_inf, &res.limits)?,
        eta_upper_design: res.eta_upper_for(x0_inf, &res.design_limits)?,
        xi: xi_bounds(ct),
        d_min: ct.d_min(),
        d_max: ct.d_max(),
        rho: ct.radius(),
        phi: ct.diameter(),
    })
}

pub fn run_scenario(res: &ResolvedScenario, mode: Mode) -> Result<ScenarioRun, ScenarioError> {
    let (init, detrend_steps) = res.initial_state()?;
    let x0 = &init.x0;
    let params = res.params();
    let opts = DistributedOptions {
        workers: res.scenario.workers,
        precompute_constraints: res.scenario.precompute_constraints,
    };
    let centralized = match mode {
        Mode::Centralized | Mode::Compare => Some(rgp_run(x0, &res.weights, &res.limits, &params)?),
        Mode::Distributed => None,
    };
    let distributed = match mode {
        Mode::Distributed | Mode::Compare => Some(run_distributed(x0, &res.weights, &res.limits, &params, opts)?),
        Mode::Centralized => None,
    };
    let compare = match (&centralized, &distributed) {
        (Some(c), Some(d)) => Some(compare_outcomes(c, &d.outcome)),
        _ => None,
    };
    let outcome = distributed
        .as_ref()
        .map(|d| d.outcome.clone())
        .or_else(|| centralized.clone())
        .expect("at least one engine runs");

    let inputs = analysis_inputs(res, inf_norm(x0))?;
    let convergence = ConvergenceReport::from_run(&outcome, &res.weights, &res.limits, &res.geometry, inputs)?;
    let mean0 = crate::rgp::mean(x0);
    let last = &outcome.trace.last().expect("trace has a row").x;
    let final_deviation = last.iter().map(|v| (v - mean0).abs()).fold(0.0, f64::max);
    let report = RunReport {
        name: res.scenario.name.clone(),
        seed: res.scenario.seed(),
        mode,
        channels: res.n(),
        alpha: init.alpha,
        detrend_steps,
        final_levels: (!res.geometry.is_empty()).then(|| shifted_references(&res.geometry, init.alpha)),
        final_deviation,
        total_messages: distributed.as_ref().map(|d| d.total_messages),
        compare,
        convergence,
    };
    Ok(ScenarioRun {
        outcome,
        centralized,
        distributed,
        report,
    })
}

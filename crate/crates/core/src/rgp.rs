//! Centralized reference generation: x(k+1) = (eta I + (1 - eta) P) x(k)
//! with the adaptive, constraint-aware choice of eta(k).
//!
//! This engine sees the whole state vector and is the exact oracle for the
//! agent-level simulator in [`crate::distributed`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{delta_x_star, disagreement, inf_norm};
use crate::constraints::{ChannelLimits, ProfileError};
use crate::geometry::ChannelGeometry;
use crate::weights::ConsensusWeights;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RgpError {
    #[error("mixing parameter must lie in (0, 1), got {0}")]
    EtaOutOfRange(f64),
    #[error("state has {got} entries, topology has {expected} channels")]
    Dimension { expected: usize, got: usize },
    #[error("invalid protocol parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Profile(#[from] ProfileError),
}

/// Constants every agent holds before the protocol starts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub gamma: f64,
    pub k_max: usize,
    pub eta_lower: f64,
    pub omega: f64,
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), RgpError> {
        if !(self.gamma > 0.0) {
            return Err(RgpError::Parameter(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.eta_lower > 0.0 && self.eta_lower < 1.0) {
            return Err(RgpError::Parameter(format!("eta_L must lie in (0, 1), got {}", self.eta_lower)));
        }
        if !(1.0..2.0).contains(&self.omega) {
            return Err(RgpError::Parameter(format!("omega must lie in [1, 2), got {}", self.omega)));
        }
        Ok(())
    }
}

/// Admissible mixing range of a nominal run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaBounds {
    pub lower: f64,
    pub upper: f64,
}

impl EtaBounds {
    pub fn new(lower: f64, upper: f64) -> Result<Self, RgpError> {
        if !(lower > 0.0 && lower <= upper && upper < 1.0) {
            return Err(RgpError::Parameter(format!("need 0 < eta_L <= eta_H < 1, got [{lower}, {upper}]")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, eta: f64, lower_slack: f64, upper_slack: f64) -> bool {
        eta >= self.lower - lower_slack && eta <= self.upper + upper_slack
    }
}

/// eta(k) = max(eta_L, 1 - c(k) / (omega ||x(k)||_inf)), or eta_L at the origin.
pub fn eta_adaptive(x_inf: f64, c_k: f64, omega: f64, eta_lower: f64) -> f64 {
    if x_inf > 0.0 {
        eta_lower.max(1.0 - c_k / (omega * x_inf))
    } else {
        eta_lower
    }
}

/// Upper bound on every eta(k) of a run starting at `x0_inf`, given the
/// smallest limit the run will ever see.
pub fn eta_upper_bound(x0_inf: f64, min_c: f64, omega: f64, eta_lower: f64) -> f64 {
    eta_adaptive(x0_inf, min_c, omega, eta_lower)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RgpState {
    pub x: Vec<f64>,
    pub k: usize,
    pub eta_history: Vec<f64>,
    /// Mean of the initial state; preserved by every step.
    pub alpha: f64,
}

impl RgpState {
    pub fn new(x0: Vec<f64>) -> Self {
        let alpha = mean(&x0);
        Self {
            x: x0,
            k: 0,
            eta_history: Vec::new(),
            alpha,
        }
    }

    pub fn mean(&self) -> f64 {
        mean(&self.x)
    }

    /// Whether every entry lies within its channel's height range.
    pub fn within_bounds(&self, geometry: &[ChannelGeometry]) -> bool {
        self.x.iter().zip(geometry).all(|(&x, g)| {
            let (lo, hi) = g.height_range();
            (lo..=hi).contains(&x)
        })
    }
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// One protocol step with the given mixing parameter.
pub fn rgp_step(state: &RgpState, w: &ConsensusWeights, eta: f64) -> Result<RgpState, RgpError> {
    if !(eta > 0.0 && eta < 1.0) {
        return Err(RgpError::EtaOutOfRange(eta));
    }
    check_dim(w, &state.x)?;
    let mut eta_history = state.eta_history.clone();
    eta_history.push(eta);
    Ok(RgpState {
        x: mix(&state.x, w, eta),
        k: state.k + 1,
        eta_history,
        alpha: state.alpha,
    })
}

pub(crate) fn mix(x: &[f64], w: &ConsensusWeights, eta: f64) -> Vec<f64> {
    let px = w.apply(x);
    x.iter().zip(&px).map(|(xi, pi)| eta * xi + (1.0 - eta) * pi).collect()
}

fn check_dim(w: &ConsensusWeights, x: &[f64]) -> Result<(), RgpError> {
    if x.len() != w.n() {
        return Err(RgpError::Dimension {
            expected: w.n(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Gradient of the objective: (I - P) x.
pub fn objective_gradient(x: &[f64], w: &ConsensusWeights) -> Vec<f64> {
    x.iter().zip(w.apply(x)).map(|(xi, pi)| xi - pi).collect()
}

/// Steepest-descent form of the update: x - (1 - eta) grad J(x).
pub fn descent_step(x: &[f64], w: &ConsensusWeights, eta: f64) -> Vec<f64> {
    x.iter()
        .zip(objective_gradient(x, w))
        .map(|(xi, g)| xi - (1.0 - eta) * g)
        .collect()
}

/// Weighted disagreement J(x) = (1/2) sum over edges {i, j} of
/// p_ij (x_i - x_j)^2, whose gradient is (I - P) x.
pub fn objective_j(x: &[f64], w: &ConsensusWeights) -> f64 {
    0.5 * edge_sum(x, w)
}

/// (1/2) sum_i sum_{j in N_i} p_ij (x_i - x_j)^2, which counts every edge
/// twice and so equals 2 J(x).
pub fn objective_double_sum(x: &[f64], w: &ConsensusWeights) -> f64 {
    edge_sum(x, w)
}

fn edge_sum(x: &[f64], w: &ConsensusWeights) -> f64 {
    let mut total = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        for &(j, p) in w.row(i) {
            if j > i {
                total += p * (xi - x[j]).powi(2);
            }
        }
    }
    total
}

/// (1/2) x^T (I - P) x.
pub fn objective_quadratic(x: &[f64], w: &ConsensusWeights) -> f64 {
    0.5 * x.iter().zip(objective_gradient(x, w)).map(|(a, b)| a * b).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detrended {
    pub x0: Vec<f64>,
    pub alpha: f64,
}

/// Subtracts the initial mean so the consensus target is zero.
pub fn detrend(raw: &[f64]) -> Detrended {
    let alpha = mean(raw);
    Detrended {
        x0: raw.iter().map(|v| v - alpha).collect(),
        alpha,
    }
}

/// Recomputed zero references h_Z + alpha: the final water level of each
/// channel.
pub fn shifted_references(geometry: &[ChannelGeometry], alpha: f64) -> Vec<f64> {
    geometry.iter().map(|g| g.shape().h_zero + alpha).collect()
}

/// One row per protocol step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub x: Vec<f64>,
    /// Mixing parameter used to leave step k; absent on the final row.
    pub eta: Option<f64>,
    pub w: f64,
    pub x_inf: f64,
    pub c_down_min: f64,
    pub c_up_min: f64,
    pub delta_x_star: f64,
    /// Scalar messages exchanged during step k (agent-level runs only).
    pub mcp_messages: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Converged { k_bar: usize },
    NotConverged { k_max: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Vec<TraceRow>,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn k_bar(&self) -> Option<usize> {
        match self.status {
            RunStatus::Converged { k_bar } => Some(k_bar),
            RunStatus::NotConverged { .. } => None,
        }
    }

    pub fn converged(&self) -> bool {
        self.k_bar().is_some()
    }

    pub fn eta_sequence(&self) -> Vec<f64> {
        self.trace.iter().filter_map(|r| r.eta).collect()
    }

    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.trace.iter().map(|r| r.x.as_slice())
    }
}

pub(crate) fn observe(k: usize, x: &[f64], limits: &ChannelLimits) -> Result<TraceRow, RgpError> {
    Ok(TraceRow {
        k,
        x: x.to_vec(),
        eta: None,
        w: disagreement(x),
        x_inf: inf_norm(x),
        c_down_min: limits.min_download(k)?,
        c_up_min: limits.min_upload(k)?,
        delta_x_star: delta_x_star(x),
        mcp_messages: None,
    })
}

/// Runs the protocol until W(x(k)) <= gamma or `k_max` steps have been taken.
pub fn rgp_run(
    x0: &[f64],
    w: &ConsensusWeights,
    limits: &ChannelLimits,
    params: &ProtocolParams,
) -> Result<RunOutcome, RgpError> {
    params.validate()?;
    check_dim(w, x0)?;
    if limits.channel_count() != w.n() {
        return Err(RgpError::Dimension {
            expected: w.n(),
            got: limits.channel_count(),
        });
    }
    let mut state = RgpState::new(x0.to_vec());
    let mut trace = Vec::new();
    loop {
        let k = state.k;
        let mut row = observe(k, &state.x, limits)?;
        if row.w <= params.gamma {
            trace.push(row);
            return Ok(RunOutcome {
                trace,
                status: RunStatus::Converged { k_bar: k },
            });
        }
        if k == params.k_max {
            trace.push(row);
            return Ok(RunOutcome {
                trace,
                status: RunStatus::NotConverged { k_max: k },
            });
        }
        let c_k = row.c_down_min.min(row.c_up_min);
        let eta = eta_adaptive(row.x_inf, c_k, params.omega, params.eta_lower);
        row.eta = Some(eta);
        trace.push(row);
        state = rgp_step(&state, w, eta)?;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::ProfileKind;
    use crate::graph::ChannelTopology;
    use crate::weights::{build_mh_weights, xi_bounds};
    use approx::assert_abs_diff_eq;

    fn pair() -> ConsensusWeights {
        build_mh_weights(&ChannelTopology::from_neighbors(vec![vec![1], vec![0]]).unwrap())
    }

    fn limits(n: usize, c: f64) -> ChannelLimits {
        ChannelLimits::uniform(n, ProfileKind::constant(c), ProfileKind::constant(c)).unwrap()
    }

    #[test]
    fn eta_rule_branches() {
        assert_eq!(eta_adaptive(0.0, 0.5, 1.5, 0.001), 0.001);
        let eta = eta_adaptive(4.64, 0.6825, 80.0 / 41.0, 0.001);
        assert_abs_diff_eq!(eta, 1.0 - 0.6825 / (4.64 * 80.0 / 41.0), epsilon = 1e-15);
        assert!((eta - 0.9246).abs() < 1e-4);
        assert_eq!(eta_adaptive(1.0, 2.0, 1.5, 0.001), 0.001);
    }

    #[test]
    fn eta_upper_bound_table_values() {
        let g = eta_upper_bound(4.64, 0.6825, 10.0 / 6.0, 0.001);
        assert!((g - 0.9118).abs() < 1e-4, "{g}");
        let t = eta_upper_bound(4.64, 0.6825, 80.0 / 41.0, 0.001);
        assert!((t - 0.9246).abs() < 1e-4, "{t}");
        assert_eq!(eta_upper_bound(1.0, 10.0, 1.5, 0.001), 0.001);
        assert_eq!(eta_upper_bound(0.0, 1.0, 1.5, 0.01), 0.01);
    }

    #[test]
    fn step_examples() {
        let w = pair();
        let s = RgpState::new(vec![3.0, 3.0]);
        for v in rgp_step(&s, &w, 0.3).unwrap().x {
            assert_abs_diff_eq!(v, 3.0, epsilon = 1e-15);
        }
        let s = RgpState::new(vec![1.0, -1.0]);
        let next = rgp_step(&s, &w, 0.001).unwrap();
        assert_abs_diff_eq!(next.x[0], 0.001, epsilon = 1e-15);
        assert_abs_diff_eq!(next.x[1], -0.001, epsilon = 1e-15);
        let next = rgp_step(&s, &w, 0.5).unwrap();
        assert_eq!(next.x, vec![0.5, -0.5]);
        assert_eq!(next.eta_history, vec![0.5]);
        assert!(matches!(rgp_step(&s, &w, 1.0), Err(RgpError::EtaOutOfRange(_))));
        assert!(matches!(rgp_step(&s, &w, 0.0), Err(RgpError::EtaOutOfRange(_))));
    }

    #[test]
    fn run_examples() {
        let w = pair();
        let params = ProtocolParams { gamma: 0.6, k_max: 100, eta_lower: 0.001, omega: 1.0 };
        let out = rgp_run(&[0.0, 0.0], &w, &limits(2, 5.0), &params).unwrap();
        assert_eq!(out.k_bar(), Some(0));
        assert_eq!(out.trace.len(), 1);

        let out = rgp_run(&[1.0, -1.0], &w, &limits(2, 1e6), &params).unwrap();
        assert_eq!(out.k_bar(), Some(1));
        assert_abs_diff_eq!(out.trace[1].x[0], 0.001, epsilon = 1e-15);
        assert_abs_diff_eq!(out.trace[1].w, 0.002, epsilon = 1e-15);

        let out = rgp_run(&[1.0, -1.0], &w, &limits(2, 0.5), &params).unwrap();
        assert_eq!(out.trace[0].eta, Some(0.5));
        assert_eq!(out.trace[1].x, vec![0.5, -0.5]);
        // download limit met with equality
        assert_eq!(out.trace[1].x[0] - out.trace[0].x[0], -0.5);
    }

    #[test]
    fn run_reports_non_convergence() {
        let w = pair();
        let params = ProtocolParams { gamma: 1e-30, k_max: 5, eta_lower: 0.001, omega: 1.0 };
        let out = rgp_run(&[1.0, -1.0], &w, &limits(2, 0.01), &params).unwrap();
        assert_eq!(out.status, RunStatus::NotConverged { k_max: 5 });
        assert_eq!(out.trace.len(), 6);
        assert!(out.trace.last().unwrap().eta.is_none());
    }

    #[test]
    fn detrend_examples() {
        let d = detrend(&[1.0, 2.0, 3.0]);
        assert_eq!(d.alpha, 2.0);
        assert_eq!(d.x0, vec![-1.0, 0.0, 1.0]);
        let d = detrend(&[-1.0, 0.0, 1.0]);
        assert_eq!((d.alpha, d.x0.clone()), (0.0, vec![-1.0, 0.0, 1.0]));
        let d = detrend(&[2.5; 4]);
        assert_eq!(d.alpha, 2.5);
        assert!(d.x0.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn objective_examples() {
        let w = pair();
        assert_eq!(objective_j(&[4.0, 4.0], &w), 0.0);
        assert_eq!(objective_double_sum(&[1.0, -1.0], &w), 2.0);
        assert_eq!(objective_j(&[1.0, -1.0], &w), 1.0);
        assert_eq!(objective_quadratic(&[1.0, -1.0], &w), 1.0);
    }

    #[test]
    fn sandwich_bounds() {
        // xi W^2 / phi <= 2 J <= (n / 2) W^2; phi = 1 on complete graphs
        let path = ChannelTopology::from_neighbors(vec![vec![1], vec![0, 2], vec![1, 3], vec![2]]).unwrap();
        let complete = ChannelTopology::from_neighbors((0..5).map(|i| (0..5).filter(|&j| j != i).collect()).collect()).unwrap();
        for ct in [path, complete] {
            let w = build_mh_weights(&ct);
            let n = ct.node_count();
            let xi = xi_bounds(&ct).lower;
            let phi = ct.diameter() as f64;
            for t in 0..50 {
                let x: Vec<f64> = (0..n).map(|i| ((t * 7 + i * 3) as f64).sin() * 2.0).collect();
                let two_j = objective_double_sum(&x, &w);
                let wd = disagreement(&x);
                assert!(xi * wd * wd / phi <= two_j + 1e-12);
                assert!(two_j <= n as f64 / 2.0 * wd * wd + 1e-12);
            }
        }
    }

    #[test]
    fn eta_bounds_validation() {
        assert!(EtaBounds::new(0.001, 0.9).is_ok());
        assert!(EtaBounds::new(0.0, 0.9).is_err());
        assert!(EtaBounds::new(0.5, 0.4).is_err());
        assert!(EtaBounds::new(0.5, 1.0).is_err());
    }
}

//! Convergence diagnostics: disagreement, theoretical rate bounds and
//! their empirical counterparts on a recorded trace.

use serde::{Deserialize, Serialize};

use crate::constraints::{ChannelLimits, ProfileError};
use crate::geometry::ChannelGeometry;
use crate::rgp::{RunOutcome, RunStatus, TraceRow};
use crate::weights::{ConsensusWeights, XiBounds};

/// Disagreement values below this are treated as exact consensus when
/// forming contraction ratios.
pub const W_ZERO: f64 = 1e-14;
const CHECK_TOL: f64 = 1e-12;

/// W(x) = max_i x_i - min_i x_i.
pub fn disagreement(x: &[f64]) -> f64 {
    let (lo, hi) = min_max(x);
    hi - lo
}

pub fn inf_norm(x: &[f64]) -> f64 {
    let (lo, hi) = min_max(x);
    hi.max(-lo).max(0.0)
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Entry of largest magnitude, keeping its sign. Ties go to the lowest index.
pub fn delta_x_star(x: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &v in x {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Guaranteed per-rho-step contraction range of W for mixing parameters in
/// [eta_L, eta_H].
pub fn rate_bounds(eta_upper: f64, xi: XiBounds, rho: usize) -> RateBounds {
    let rho = rho as i32;
    RateBounds {
        lower: 1.0 - (xi.upper + (1.0 - xi.upper) * eta_upper).powi(rho),
        upper: 1.0 - ((1.0 - eta_upper) * xi.lower).powi(rho),
    }
}

/// Smallest and largest admissible entries of Q_eta over [eta_L, eta_H].
pub fn epsilon_bounds(eta_upper: f64, xi: XiBounds) -> (f64, f64) {
    ((1.0 - eta_upper) * xi.lower, xi.upper + (1.0 - xi.upper) * eta_upper)
}

/// Topology-only rate: 1 - (2 + d_M - d_m)^(-rho).
pub fn r_hat(d_min: usize, d_max: usize, rho: usize) -> f64 {
    1.0 - (2.0 + d_max as f64 - d_min as f64).powi(-(rho as i32))
}

/// Topology index phi (1 + (d_M - d_m)/2)^rho; smaller means faster.
pub fn r_index(d_min: usize, d_max: usize, rho: usize, phi: usize) -> f64 {
    phi as f64 * r_hat_index(d_min, d_max, rho)
}

/// Dimensionless variant of [`r_index`] without the diameter factor.
pub fn r_hat_index(d_min: usize, d_max: usize, rho: usize) -> f64 {
    (1.0 + (d_max as f64 - d_min as f64) / 2.0).powi(rho as i32)
}

/// Dense Q_eta = eta I + (1 - eta) P, row-major.
pub fn q_matrix(eta: f64, w: &ConsensusWeights) -> Vec<f64> {
    let n = w.n();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        for &(j, p) in w.row(i) {
            q[i * n + j] = (1.0 - eta) * p;
        }
        q[i * n + i] += eta;
    }
    q
}

/// Q(start + len - 1) ... Q(start), dense row-major.
pub fn q_product(etas: &[f64], w: &ConsensusWeights) -> Vec<f64> {
    let n = w.n();
    let mut b = identity(n);
    for &eta in etas {
        b = mat_mul(&q_matrix(eta, w), &b, n);
    }
    b
}

pub fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

pub fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..n {
                c[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    c
}

/// Largest column-wise minimum of a dense matrix: the best lower bound a
/// single strictly positive column offers.
pub fn positive_column_min(b: &[f64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| b[i * n + j]).fold(f64::INFINITY, f64::min))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest positive entry of Q_eta(k) over a run, restricted to the closed
/// neighborhoods.
pub fn realized_epsilon(etas: &[f64], w: &ConsensusWeights) -> Option<f64> {
    let n = w.n();
    let mut best: Option<f64> = None;
    for &eta in etas {
        for i in 0..n {
            for &(j, p) in w.row(i) {
                let q = if i == j { eta + (1.0 - eta) * p } else { (1.0 - eta) * p };
                best = Some(best.map_or(q, |b| b.min(q)));
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    /// (k, W(k + rho) / W(k)) for every k with W(k) above [`W_ZERO`].
    pub ratios: Vec<(usize, f64)>,
    pub max_ratio: Option<f64>,
    pub violations: Vec<usize>,
}

impl ContractionCheck {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks W(k + rho) <= r_upper W(k) along a disagreement series.
pub fn contraction_verify(w_series: &[f64], rho: usize, r_upper: f64) -> ContractionCheck {
    let mut ratios = Vec::new();
    let mut violations = Vec::new();
    for k in 0..w_series.len().saturating_sub(rho) {
        let (now, later) = (w_series[k], w_series[k + rho]);
        if later > r_upper * now + CHECK_TOL {
            violations.push(k);
        }
        if now >= W_ZERO {
            let ratio = later / now;
            if ratio > r_upper + CHECK_TOL && !violations.contains(&k) {
                violations.push(k);
            }
            ratios.push((k, ratio));
        }
    }
    let max_ratio = ratios.iter().map(|r| r.1).reduce(f64::max);
    ContractionCheck {
        ratios,
        max_ratio,
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub k: usize,
    pub channel: usize,
    pub delta: f64,
    pub c_down: f64,
    pub c_up: f64,
}

/// Per-channel check of -c_i^D(k) <= x_i(k+1) - x_i(k) <= c_i^U(k).
pub fn constraint_violations(trace: &[TraceRow], limits: &ChannelLimits) -> Result<Vec<ConstraintViolation>, ProfileError> {
    let mut out = Vec::new();
    for pair in trace.windows(2) {
        let k = pair[0].k;
        for (i, (a, b)) in pair[0].x.iter().zip(&pair[1].x).enumerate() {
            let delta = b - a;
            let (c_down, c_up) = (limits.download(i, k)?, limits.upload(i, k)?);
            if delta < -c_down - CHECK_TOL || delta > c_up + CHECK_TOL {
                out.push(ConstraintViolation {
                    k,
                    channel: i,
                    delta,
                    c_down,
                    c_up,
                });
            }
        }
    }
    Ok(out)
}

/// Steps at which some height left its channel's admissible range.
pub fn bound_violations(trace: &[TraceRow], geometry: &[ChannelGeometry]) -> Vec<usize> {
    trace
        .iter()
        .filter(|row| {
            row.x.iter().zip(geometry).any(|(&x, g)| {
                let (lo, hi) = g.height_range();
                x < lo - CHECK_TOL || x > hi + CHECK_TOL
            })
        })
        .map(|row| row.k)
        .collect()
}

/// Constants needed to interpret a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisInputs {
    pub eta_lower: f64,
    /// Bound from the limits the run actually faced.
    pub eta_upper: f64,
    /// Bound from the nominal limits the protocol was designed for.
    pub eta_upper_design: f64,
    pub xi: XiBounds,
    pub d_min: usize,
    pub d_max: usize,
    pub rho: usize,
    pub phi: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub status: RunStatus,
    pub steps: usize,
    pub inputs: AnalysisInputs,
    pub rate: RateBounds,
    pub r_hat: f64,
    pub r_index: f64,
    pub r_hat_index: f64,
    pub epsilon_lower: f64,
    pub epsilon_upper: f64,
    pub epsilon_realized: Option<f64>,
    pub eta_min: Option<f64>,
    pub eta_max: Option<f64>,
    /// Steps where eta(k) exceeded the design bound.
    pub design_bound_exceeded: Vec<usize>,
    pub contraction: ContractionCheck,
    pub constraint_violations: Vec<ConstraintViolation>,
    pub bound_violations: Vec<usize>,
    pub max_mean_drift: f64,
    pub norm_increases: Vec<usize>,
    pub initial_w: f64,
    pub final_w: f64,
}

impl ConvergenceReport {
    pub fn from_run(
        run: &RunOutcome,
        w: &ConsensusWeights,
        limits: &ChannelLimits,
        geometry: &[ChannelGeometry],
        inputs: AnalysisInputs,
    ) -> Result<Self, ProfileError> {
        let etas = run.eta_sequence();
        let w_series: Vec<f64> = run.trace.iter().map(|r| r.w).collect();
        let rate = rate_bounds(inputs.eta_upper, inputs.xi, inputs.rho);
        let (epsilon_lower, epsilon_upper) = epsilon_bounds(inputs.eta_upper, inputs.xi);
        let mean0 = crate::rgp::mean(&run.trace[0].x);
        let max_mean_drift = run
            .states()
            .map(|x| (crate::rgp::mean(x) - mean0).abs())
            .fold(0.0, f64::max);
        let norm_increases = run
            .trace
            .windows(2)
            .filter(|p| p[1].x_inf > p[0].x_inf + CHECK_TOL)
            .map(|p| p[0].k)
            .collect();
        let design_bound_exceeded = run
            .trace
            .iter()
            .filter(|r| r.eta.is_some_and(|e| e > inputs.eta_upper_design + CHECK_TOL))
            .map(|r| r.k)
            .collect();
        Ok(Self {
            status: run.status,
            steps: run.trace.len() - 1,
            inputs,
            rate,
            r_hat: r_hat(inputs.d_min, inputs.d_max, inputs.rho),
            r_index: r_index(inputs.d_min, inputs.d_max, inputs.rho, inputs.phi),
            r_hat_index: r_hat_index(inputs.d_min, inputs.d_max, inputs.rho),
            epsilon_lower,
            epsilon_upper,
            epsilon_realized: realized_epsilon(&etas, w),
            eta_min: etas.iter().copied().reduce(f64::min),
            eta_max: etas.iter().copied().reduce(f64::max),
            design_bound_exceeded,
            contraction: contraction_verify(&w_series, inputs.rho, rate.upper),
            constraint_violations: constraint_violations(&run.trace, limits)?,
            bound_violations: if geometry.is_empty() { Vec::new() } else { bound_violations(&run.trace, geometry) },
            max_mean_drift,
            norm_increases,
            initial_w: w_series[0],
            final_w: *w_series.last().unwrap(),
        })
    }

    pub fn k_bar(&self) -> Option<usize> {
        match self.status {
            RunStatus::Converged { k_bar } => Some(k_bar),
            RunStatus::NotConverged { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_line_graph, ChannelTopology, JunctionTopology};
    use crate::weights::{build_mh_weights, xi_bounds};
    use approx::assert_abs_diff_eq;

    #[test]
    fn disagreement_and_norm() {
        assert_eq!(disagreement(&[1.0, -2.0, 0.5]), 3.0);
        assert_eq!(disagreement(&[2.0; 3]), 0.0);
        assert_eq!(inf_norm(&[1.0, -2.0, 0.5]), 2.0);
        assert_eq!(inf_norm(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn delta_x_star_keeps_sign_and_first_tie() {
        assert_eq!(delta_x_star(&[0.1, -0.7, 0.3]), -0.7);
        assert_eq!(delta_x_star(&[0.5, -0.5]), 0.5);
        assert_eq!(delta_x_star(&[-0.5, 0.5]), -0.5);
        assert_eq!(delta_x_star(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn topology_rates_for_both_networks() {
        // complete junction graph on 22 nodes: 40-regular, radius 2
        assert_eq!(r_hat_index(40, 40, 2), 1.0);
        assert_eq!(r_index(40, 40, 2, 2), 2.0);
        assert_abs_diff_eq!(r_hat(40, 40, 2), 0.75, epsilon = 1e-15);
        // synthetic network: d in [2, 5], radius 5, diameter 7
        assert_abs_diff_eq!(r_hat_index(2, 5, 5), 2.5f64.powi(5), epsilon = 1e-12);
        assert_abs_diff_eq!(r_index(2, 5, 5, 7), 683.59375, epsilon = 1e-9);
    }

    #[test]
    fn rate_bounds_order() {
        let xi = XiBounds { lower: 1.0 / 41.0, upper: 1.0 / 41.0 };
        let r = rate_bounds(0.925, xi, 2);
        assert!(0.0 < r.lower && r.lower < r.upper && r.upper < 1.0);
        let (lo, hi) = epsilon_bounds(0.925, xi);
        assert_abs_diff_eq!(lo, 0.075 / 41.0, epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 - r.upper, lo.powi(2), epsilon = 1e-15);
        assert_abs_diff_eq!(1.0 - r.lower, hi.powi(2), epsilon = 1e-15);
    }

    #[test]
    fn contraction_check_examples() {
        let ok = contraction_verify(&[4.0, 2.0, 1.0, 0.5], 1, 0.5);
        assert!(ok.holds());
        assert_eq!(ok.max_ratio, Some(0.5));
        let bad = contraction_verify(&[4.0, 2.0, 1.5], 1, 0.5);
        assert_eq!(bad.violations, vec![1]);
        let zero = contraction_verify(&[1.0, 0.0, 0.0], 1, 0.5);
        assert!(zero.holds());
        assert_eq!(zero.ratios.len(), 1);
    }

    #[test]
    fn q_product_has_positive_column_and_averages() {
        let jt = JunctionTopology::new(4, [(0, 1), (1, 2), (2, 3), (1, 3)]).unwrap();
        let ct = build_line_graph(&jt).unwrap();
        let w = build_mh_weights(&ct);
        let n = ct.node_count();
        let rho = ct.radius();
        let eta_h = 0.6;
        let xi = xi_bounds(&ct);
        let (eps_lo, _) = epsilon_bounds(eta_h, xi);
        let etas: Vec<f64> = (0..rho).map(|k| 0.001 + (eta_h - 0.001) * (k as f64 / rho as f64)).collect();
        let b = q_product(&etas, &w);
        assert!(positive_column_min(&b, n) >= eps_lo.powi(rho as i32) - 1e-15);

        let long: Vec<f64> = (0..400).map(|k| 0.2 + 0.3 * ((k as f64) * 0.37).sin().abs()).collect();
        let b = q_product(&long, &w);
        for v in b {
            assert_abs_diff_eq!(v, 1.0 / n as f64, epsilon = 1e-8);
        }
    }

    #[test]
    fn realized_epsilon_matches_hand_value() {
        let ct = ChannelTopology::from_neighbors(vec![vec![1], vec![0]]).unwrap();
        let w = build_mh_weights(&ct);
        assert_eq!(realized_epsilon(&[], &w), None);
        assert_abs_diff_eq!(realized_epsilon(&[0.5, 0.8], &w).unwrap(), 0.1, epsilon = 1e-15);
    }
}

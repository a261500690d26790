//! Metropolis-Hastings consensus weights and the spectral and structural
//! constants derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{symmetric_eigenvalues, EigenError};
use crate::graph::ChannelTopology;

/// Above this node count weights are kept only as neighbor lists.
pub const DENSE_LIMIT: usize = 512;

/// Default fallback for the lower mixing bound.
pub const DEFAULT_ZETA: f64 = 0.001;

const STOCHASTIC_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("leading eigenvalue {0} differs from 1 by more than 1e-9")]
    LeadingEigenvalue(f64),
    #[error("zeta must lie in (0, 1), got {0}")]
    InvalidZeta(f64),
    #[error("weight matrix invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StoragePolicy {
    /// Dense up to [`DENSE_LIMIT`] nodes, sparse above.
    #[default]
    Auto,
    Dense,
    Sparse,
}

/// Symmetric doubly-stochastic weight matrix P over a channel topology.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsensusWeights {
    topology: ChannelTopology,
    /// Closed neighborhood of each node, sorted by column, self included.
    rows: Vec<Vec<(usize, f64)>>,
    dense: Option<Vec<f64>>,
}

pub fn build_mh_weights(ct: &ChannelTopology) -> ConsensusWeights {
    build_mh_weights_with(ct, StoragePolicy::Auto)
}

pub fn build_mh_weights_with(ct: &ChannelTopology, policy: StoragePolicy) -> ConsensusWeights {
    let n = ct.node_count();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|i| {
            let di = ct.degree(i);
            let mut row: Vec<(usize, f64)> = ct
                .neighbors(i)
                .iter()
                .map(|&j| (j, 1.0 / (1.0 + di.max(ct.degree(j)) as f64)))
                .collect();
            let self_weight = 1.0 - row.iter().map(|&(_, p)| p).sum::<f64>();
            let pos = row.partition_point(|&(j, _)| j < i);
            row.insert(pos, (i, self_weight));
            row
        })
        .collect();
    let dense = match policy {
        StoragePolicy::Dense => true,
        StoragePolicy::Sparse => false,
        StoragePolicy::Auto => n <= DENSE_LIMIT,
    }
    .then(|| densify(&rows, n));
    let w = ConsensusWeights {
        topology: ct.clone(),
        rows,
        dense,
    };
    debug_assert_eq!(w.validate(), Ok(()));
    w
}

fn densify(rows: &[Vec<(usize, f64)>], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            m[i * n + j] = p;
        }
    }
    m
}

impl ConsensusWeights {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn topology(&self) -> &ChannelTopology {
        &self.topology
    }

    pub fn is_dense(&self) -> bool {
        self.dense.is_some()
    }

    /// Closed-neighborhood row `i` as `(column, weight)` pairs in column order.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.dense {
            Some(m) => m[i * self.n() + j],
            None => self.rows[i]
                .binary_search_by_key(&j, |&(c, _)| c)
                .map_or(0.0, |pos| self.rows[i][pos].1),
        }
    }

    pub fn self_weight(&self, i: usize) -> f64 {
        self.weight(i, i)
    }

    /// Row-major dense copy of P.
    pub fn to_dense(&self) -> Vec<f64> {
        self.dense.clone().unwrap_or_else(|| densify(&self.rows, self.n()))
    }

    /// P x.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n, "state length must equal node count");
        match &self.dense {
            Some(m) => m
                .chunks(n)
                .map(|row| row.iter().zip(x).map(|(p, v)| p * v).sum())
                .collect(),
            None => self
                .rows
                .iter()
                .map(|row| row.iter().map(|&(j, p)| p * x[j]).sum())
                .collect(),
        }
    }

    pub fn min_positive_entry(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|&(_, p)| p)
            .filter(|&p| p > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.rows.iter().flatten().map(|&(_, p)| p).fold(0.0, f64::max)
    }

    /// Induced infinity norm of I - P.
    pub fn inf_norm_identity_minus(&self) -> f64 {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|&(j, p)| if i == j { (1.0 - p).abs() } else { p.abs() })
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Checks double stochasticity, symmetry, the support pattern, and the
    /// entry and norm bounds implied by the topology.
    pub fn validate(&self) -> Result<(), WeightsError> {
        let n = self.n();
        let fail = |msg: String| Err(WeightsError::Invariant(msg));
        let mut col_sums = vec![0.0; n];
        for (i, row) in self.rows.iter().enumerate() {
            let mut row_sum = 0.0;
            for &(j, p) in row {
                if !(p > 0.0 && p < 1.0) && !(i == j && p > 0.0 && p <= 1.0) {
                    return fail(format!("entry ({}, {}) = {p} outside (0, 1)", i + 1, j + 1));
                }
                if (p - self.weight(j, i)).abs() > 0.0 {
                    return fail(format!("asymmetric at ({}, {})", i + 1, j + 1));
                }
                row_sum += p;
                col_sums[j] += p;
            }
            let expected_support = self.topology.neighbors(i).len() + 1;
            if row.len() != expected_support {
                return fail(format!("row {} support differs from closed neighborhood", i + 1));
            }
            if (row_sum - 1.0).abs() > STOCHASTIC_TOL {
                return fail(format!("row {} sums to {row_sum}", i + 1));
            }
        }
        if let Some((j, s)) = col_sums
            .iter()
            .enumerate()
            .find(|(_, s)| (**s - 1.0).abs() > STOCHASTIC_TOL)
        {
            return fail(format!("column {} sums to {s}", j + 1));
        }
        let xi = xi_bounds(&self.topology);
        if (self.min_positive_entry() - xi.lower).abs() > 1e-15 {
            return fail(format!(
                "smallest positive entry {} differs from 1/(1+d_M) = {}",
                self.min_positive_entry(),
                xi.lower
            ));
        }
        if self.max_entry() > xi.upper + 1e-15 {
            return fail(format!("largest entry {} exceeds {}", self.max_entry(), xi.upper));
        }
        let omega = omega_bound(&self.topology);
        if self.inf_norm_identity_minus() > omega + 1e-12 {
            return fail(format!(
                "||I - P||_inf = {} exceeds omega = {omega}",
                self.inf_norm_identity_minus()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    pub lambda_1: f64,
    pub lambda_n_minus_1: f64,
    pub varsigma_p: f64,
    pub eta_star: f64,
    pub eta_lower: f64,
    pub zeta: f64,
}

/// Second-largest and smallest eigenvalues of P and the mixing bounds that
/// follow from them.
pub fn spectral_summary(w: &ConsensusWeights, zeta: f64) -> Result<SpectralSummary, WeightsError> {
    if !(zeta > 0.0 && zeta < 1.0) {
        return Err(WeightsError::InvalidZeta(zeta));
    }
    let n = w.n();
    let ev = symmetric_eigenvalues(&w.to_dense(), n)?;
    if (ev[0] - 1.0).abs() > 1e-9 {
        return Err(WeightsError::LeadingEigenvalue(ev[0]));
    }
    Ok(summary_from_eigenvalues(ev[1], ev[n - 1], zeta))
}

pub fn summary_from_eigenvalues(lambda_1: f64, lambda_n_minus_1: f64, zeta: f64) -> SpectralSummary {
    let varsigma_p = (lambda_1 + lambda_n_minus_1) / 2.0;
    let eta_star = varsigma_p / (varsigma_p - 1.0);
    SpectralSummary {
        lambda_1,
        lambda_n_minus_1,
        varsigma_p,
        eta_star,
        eta_lower: lower_eta(eta_star, zeta),
        zeta,
    }
}

/// `eta_star` when it is positive, `zeta` otherwise.
pub fn lower_eta(eta_star: f64, zeta: f64) -> f64 {
    if eta_star > 0.0 {
        eta_star
    } else {
        zeta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XiBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn xi_bounds(ct: &ChannelTopology) -> XiBounds {
    xi_bounds_from_degrees(ct.d_min(), ct.d_max())
}

pub fn xi_bounds_from_degrees(d_min: usize, d_max: usize) -> XiBounds {
    let denom = 1.0 + d_max as f64;
    XiBounds {
        lower: 1.0 / denom,
        upper: 1.0 - d_min as f64 / denom,
    }
}

/// Upper bound on ||I - P||_inf: 2 d_M / (1 + d_M).
pub fn omega_bound(ct: &ChannelTopology) -> f64 {
    omega_from_max_degree(ct.d_max())
}

pub fn omega_from_max_degree(d_max: usize) -> f64 {
    2.0 * d_max as f64 / (1.0 + d_max as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_line_graph, JunctionTopology};
    use approx::assert_abs_diff_eq;

    fn path3() -> ChannelTopology {
        ChannelTopology::from_neighbors(vec![vec![1], vec![0, 2], vec![1]]).unwrap()
    }

    #[test]
    fn path_of_three_hand_values() {
        let w = build_mh_weights(&path3());
        let expected = [2.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 1.0 / 3.0, 2.0 / 3.0];
        for (a, b) in w.to_dense().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        w.validate().unwrap();
    }

    #[test]
    fn single_edge_is_half_half() {
        let ct = ChannelTopology::from_neighbors(vec![vec![1], vec![0]]).unwrap();
        let w = build_mh_weights(&ct);
        assert_eq!(w.to_dense(), vec![0.5; 4]);
        let xi = xi_bounds(&ct);
        assert_eq!((xi.lower, xi.upper), (0.5, 0.5));
        assert_eq!(omega_bound(&ct), 1.0);
        let s = spectral_summary(&w, DEFAULT_ZETA).unwrap();
        assert_abs_diff_eq!(s.lambda_1, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn regular_adjoint_has_uniform_weights() {
        let ct = build_line_graph(&JunctionTopology::complete(22).unwrap()).unwrap();
        let w = build_mh_weights(&ct);
        for i in 0..ct.node_count() {
            for &(_, p) in w.row(i) {
                assert_abs_diff_eq!(p, 1.0 / 41.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn table_constants_from_degrees() {
        let xi = xi_bounds_from_degrees(2, 5);
        assert_abs_diff_eq!(xi.lower, 1.0 / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(xi.upper, 2.0 / 3.0, epsilon = 1e-15);
        assert!((xi.lower - 0.167).abs() < 1e-3 && (xi.upper - 0.667).abs() < 1e-3);
        let xi = xi_bounds_from_degrees(40, 40);
        assert_abs_diff_eq!(xi.lower, xi.upper, epsilon = 1e-15);
        assert!((xi.lower - 0.024).abs() < 1e-3);
        assert!((omega_from_max_degree(5) - 1.667).abs() < 1e-3);
        assert!((omega_from_max_degree(40) - 1.951).abs() < 1e-3);
        assert_eq!(omega_from_max_degree(1), 1.0);
    }

    #[test]
    fn lower_eta_branches() {
        // positive varsigma gives negative eta_star
        let s = summary_from_eigenvalues(0.5, 0.242, 0.001);
        assert!((s.varsigma_p - 0.371).abs() < 1e-12);
        assert!(s.eta_star < 0.0);
        assert_eq!(s.eta_lower, 0.001);
        let s = summary_from_eigenvalues(0.3, -0.3, 0.001);
        assert_eq!(s.eta_star, 0.0);
        assert_eq!(s.eta_lower, 0.001);
        let s = summary_from_eigenvalues(0.1, -0.5, 0.001);
        assert!(s.eta_star > 0.0 && s.eta_star < 1.0);
        assert_eq!(s.eta_lower, s.eta_star);
    }

    #[test]
    fn zeta_is_validated() {
        let w = build_mh_weights(&path3());
        assert_eq!(spectral_summary(&w, 0.0), Err(WeightsError::InvalidZeta(0.0)));
        assert_eq!(spectral_summary(&w, 1.0), Err(WeightsError::InvalidZeta(1.0)));
    }

    #[test]
    fn dense_and_sparse_paths_agree() {
        let ct = build_line_graph(&JunctionTopology::synthetic_22_25()).unwrap();
        let dense = build_mh_weights_with(&ct, StoragePolicy::Dense);
        let sparse = build_mh_weights_with(&ct, StoragePolicy::Sparse);
        assert!(dense.is_dense() && !sparse.is_dense());
        let x: Vec<f64> = (0..ct.node_count()).map(|i| (i as f64 * 0.7).sin() * 3.0).collect();
        for (a, b) in dense.apply(&x).iter().zip(sparse.apply(&x)) {
            assert!((a - b).abs() <= 1e-14);
        }
        for (a, b) in dense.to_dense().iter().zip(sparse.to_dense()) {
            assert!((a - b).abs() <= 1e-14);
        }
        for i in 0..ct.node_count() {
            for j in 0..ct.node_count() {
                assert_eq!(dense.weight(i, j), sparse.weight(i, j));
            }
        }
    }
}

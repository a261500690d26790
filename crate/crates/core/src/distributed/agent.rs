//! A single channel's controller: its state, its row of P, and the local
//! decision rule.

use super::mcp::{LocalView, LocalityError};
use crate::rgp::eta_adaptive;

/// Constants known to every agent before the protocol starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentConstants {
    pub gamma: f64,
    pub eta_lower: f64,
    pub omega: f64,
    /// Rounds per max-consensus session: the graph diameter.
    pub rounds: usize,
}

/// Network-wide quantities as reconstructed by one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimates {
    pub x_max: f64,
    pub x_min: f64,
    pub c_down: f64,
    pub c_up: f64,
}

impl Estimates {
    pub fn disagreement(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn x_inf(&self) -> f64 {
        self.x_max.max(-self.x_min).max(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    Terminate,
    Mix { eta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: usize,
    /// Closed-neighborhood weights, self included, in column order.
    pub row: Vec<(usize, f64)>,
    pub x: f64,
}

impl Agent {
    pub fn decide(&self, est: &Estimates, consts: &AgentConstants) -> Decision {
        if est.disagreement() <= consts.gamma {
            return Decision::Terminate;
        }
        let c = est.c_down.min(est.c_up);
        Decision::Mix {
            eta: eta_adaptive(est.x_inf(), c, consts.omega, consts.eta_lower),
        }
    }

    /// eta x_i + (1 - eta) sum_j p_ij x_j, reading only neighbor states.
    pub fn mixed_state(&self, view: &LocalView<'_, f64>, eta: f64) -> Result<f64, LocalityError> {
        let terms = self
            .row
            .iter()
            .map(|&(j, p)| view.read(j).map(|v| p * v))
            .collect::<Result<Vec<f64>, _>>()?;
        let px: f64 = terms.into_iter().sum();
        Ok(eta * self.x + (1.0 - eta) * px)
    }
}

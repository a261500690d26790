//! Agent-level simulation: every channel controller decides from its own
//! state, its neighbors' messages and four max/min-consensus sessions.
//!
//! The simulator is synchronous and double-buffered, so its output does not
//! depend on the number of worker threads.

pub mod agent;
pub mod mcp;

use rayon::prelude::*;
use thiserror::Error;

pub use agent::{Agent, AgentConstants, Decision, Estimates};
pub use mcp::{mcp_run, LocalView, LocalityError, MaxConsensusSession};

use crate::analysis::disagreement;
use crate::constraints::{ChannelLimits, ProfileError};
use crate::graph::ChannelTopology;
use crate::rgp::{observe, Detrended, ProtocolParams, RgpError, RunOutcome, RunStatus};
use crate::weights::ConsensusWeights;

#[derive(Debug, Error)]
pub enum DistributedError {
    #[error(transparent)]
    Rgp(#[from] RgpError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Locality(#[from] LocalityError),
    #[error("agents disagree on {what} at step {k}")]
    Inconsistent { k: usize, what: &'static str },
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("consensus averaging did not settle within {0} steps")]
    AveragingStalled(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributedOptions {
    pub workers: usize,
    /// Agents know c_D(k) and c_U(k) in advance, so only the two state
    /// sessions are run.
    pub precompute_constraints: bool,
}

impl Default for DistributedOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            precompute_constraints: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub terminated: bool,
    /// eta^i(k) of every agent; empty when terminated.
    pub etas: Vec<f64>,
    pub estimates: Vec<Estimates>,
    pub messages: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedRun {
    pub outcome: RunOutcome,
    pub steps: Vec<StepRecord>,
    pub total_messages: u64,
}

impl DistributedRun {
    /// Largest spread of eta^i(k) across agents over the run.
    pub fn eta_spread(&self) -> f64 {
        self.steps
            .iter()
            .filter(|s| !s.etas.is_empty())
            .map(|s| disagreement(&s.etas))
            .fold(0.0, f64::max)
    }
}

pub fn make_agents(x0: &[f64], w: &ConsensusWeights) -> Vec<Agent> {
    x0.iter()
        .enumerate()
        .map(|(i, &x)| Agent {
            id: i,
            row: w.row(i).to_vec(),
            x,
        })
        .collect()
}

/// One synchronous iteration of the agent protocol at step `k`. Agents that
/// do not terminate move to x_i(k + 1).
pub fn alg1_iteration(
    agents: &mut [Agent],
    topo: &ChannelTopology,
    limits: &ChannelLimits,
    k: usize,
    consts: &AgentConstants,
    precompute_constraints: bool,
) -> Result<StepRecord, DistributedError> {
    let (estimates, mut messages) = if precompute_constraints {
        let (c_down, c_up) = (limits.min_download(k)?, limits.min_upload(k)?);
        let session = MaxConsensusSession::new(agents.iter().map(|a| [a.x, -a.x]).collect(), consts.rounds).run(topo);
        let est = session
            .estimates()
            .iter()
            .map(|e| Estimates {
                x_max: e[0],
                x_min: -e[1],
                c_down,
                c_up,
            })
            .collect::<Vec<_>>();
        (est, session.messages())
    } else {
        let inputs = agents
            .iter()
            .map(|a| Ok([a.x, -a.x, -limits.download(a.id, k)?, -limits.upload(a.id, k)?]))
            .collect::<Result<Vec<_>, ProfileError>>()?;
        let session = MaxConsensusSession::new(inputs, consts.rounds).run(topo);
        let est = session
            .estimates()
            .iter()
            .map(|e| Estimates {
                x_max: e[0],
                x_min: -e[1],
                c_down: -e[2],
                c_up: -e[3],
            })
            .collect::<Vec<_>>();
        (est, session.messages())
    };

    let decisions: Vec<Decision> = agents.iter().zip(&estimates).map(|(a, e)| a.decide(e, consts)).collect();
    let terminated = decisions.iter().filter(|d| matches!(d, Decision::Terminate)).count();
    if terminated == agents.len() {
        return Ok(StepRecord {
            k,
            terminated: true,
            etas: Vec::new(),
            estimates,
            messages,
        });
    }
    if terminated > 0 {
        return Err(DistributedError::Inconsistent { k, what: "termination" });
    }
    let etas: Vec<f64> = decisions
        .iter()
        .map(|d| match d {
            Decision::Mix { eta } => *eta,
            Decision::Terminate => unreachable!(),
        })
        .collect();

    let board: Vec<f64> = agents.iter().map(|a| a.x).collect();
    let next = agents
        .par_iter()
        .zip(etas.par_iter())
        .map(|(a, &eta)| a.mixed_state(&LocalView::new(a.id, topo.neighbors(a.id), &board), eta))
        .collect::<Result<Vec<f64>, LocalityError>>()?;
    for (a, x) in agents.iter_mut().zip(next) {
        a.x = x;
    }
    messages += 2 * topo.edge_count() as u64;
    Ok(StepRecord {
        k,
        terminated: false,
        etas,
        estimates,
        messages,
    })
}

/// Runs the agent protocol from `x0` and records the same trace as the
/// centralized engine.
pub fn run_distributed(
    x0: &[f64],
    w: &ConsensusWeights,
    limits: &ChannelLimits,
    params: &ProtocolParams,
    opts: DistributedOptions,
) -> Result<DistributedRun, DistributedError> {
    params.validate()?;
    if x0.len() != w.n() || limits.channel_count() != w.n() {
        return Err(RgpError::Dimension {
            expected: w.n(),
            got: if x0.len() != w.n() { x0.len() } else { limits.channel_count() },
        }
        .into());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| DistributedError::Pool(e.to_string()))?;
    pool.install(|| run_in_pool(x0, w, limits, params, opts))
}

fn run_in_pool(
    x0: &[f64],
    w: &ConsensusWeights,
    limits: &ChannelLimits,
    params: &ProtocolParams,
    opts: DistributedOptions,
) -> Result<DistributedRun, DistributedError> {
    let topo = w.topology();
    let consts = AgentConstants {
        gamma: params.gamma,
        eta_lower: params.eta_lower,
        omega: params.omega,
        rounds: topo.diameter(),
    };
    let mut agents = make_agents(x0, w);
    let mut trace = Vec::new();
    let mut steps = Vec::new();
    let mut total_messages = 0;
    let mut k = 0;
    loop {
        let x: Vec<f64> = agents.iter().map(|a| a.x).collect();
        let mut row = observe(k, &x, limits)?;
        if k == params.k_max && row.w > params.gamma {
            trace.push(row);
            return Ok(DistributedRun {
                outcome: RunOutcome {
                    trace,
                    status: RunStatus::NotConverged { k_max: k },
                },
                steps,
                total_messages,
            });
        }
        let rec = alg1_iteration(&mut agents, topo, limits, k, &consts, opts.precompute_constraints)?;
        total_messages += rec.messages;
        row.mcp_messages = Some(rec.messages);
        if rec.terminated {
            trace.push(row);
            steps.push(rec);
            return Ok(DistributedRun {
                outcome: RunOutcome {
                    trace,
                    status: RunStatus::Converged { k_bar: k },
                },
                steps,
                total_messages,
            });
        }
        if disagreement(&rec.etas) != 0.0 {
            return Err(DistributedError::Inconsistent { k, what: "eta" });
        }
        row.eta = Some(rec.etas[0]);
        trace.push(row);
        steps.push(rec);
        k += 1;
    }
}

/// Average consensus y <- P y until the local estimates of the initial mean
/// agree to within `tol`; each agent then subtracts its own estimate.
pub fn consensus_detrend(
    raw: &[f64],
    w: &ConsensusWeights,
    tol: f64,
    max_steps: usize,
) -> Result<(Detrended, usize), DistributedError> {
    let scale = raw.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut y = raw.to_vec();
    let mut steps = 0;
    while disagreement(&y) > tol * scale {
        if steps == max_steps {
            return Err(DistributedError::AveragingStalled(max_steps));
        }
        y = w.apply(&y);
        steps += 1;
    }
    let alpha = crate::rgp::mean(&y);
    let x0 = raw.iter().zip(&y).map(|(r, a)| r - a).collect();
    Ok((Detrended { x0, alpha }, steps))
}

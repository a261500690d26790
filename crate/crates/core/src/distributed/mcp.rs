//! Max-consensus over the channel graph, with every read going through a
//! neighbor-restricted view of the published values.

use rayon::prelude::*;
use thiserror::Error;

use crate::graph::ChannelTopology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("agent {agent} tried to read agent {target}, which is not a neighbor")]
pub struct LocalityError {
    pub agent: usize,
    pub target: usize,
}

/// What agent `agent` can see of a round's published values: its own entry
/// and those of its neighbors.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a, T> {
    agent: usize,
    neighbors: &'a [usize],
    board: &'a [T],
}

impl<'a, T> LocalView<'a, T> {
    pub fn new(agent: usize, neighbors: &'a [usize], board: &'a [T]) -> Self {
        Self { agent, neighbors, board }
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn own(&self) -> &'a T {
        &self.board[self.agent]
    }

    pub fn read(&self, target: usize) -> Result<&'a T, LocalityError> {
        if target == self.agent || self.neighbors.binary_search(&target).is_ok() {
            Ok(&self.board[target])
        } else {
            Err(LocalityError {
                agent: self.agent,
                target,
            })
        }
    }

    /// Neighbor entries, self excluded.
    pub fn neighbors(&self) -> impl Iterator<Item = (usize, &'a T)> + '_ {
        self.neighbors.iter().map(|&j| (j, &self.board[j]))
    }
}

/// `L` independent max-consensus sessions run in lockstep. Min-consensus is
/// obtained by negating the inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxConsensusSession<const L: usize> {
    estimates: Vec<[f64; L]>,
    rounds: usize,
    done: usize,
    messages: u64,
}

impl<const L: usize> MaxConsensusSession<L> {
    pub fn new(initial: Vec<[f64; L]>, rounds: usize) -> Self {
        Self {
            estimates: initial,
            rounds,
            done: 0,
            messages: 0,
        }
    }

    pub fn estimates(&self) -> &[[f64; L]] {
        &self.estimates
    }

    pub fn rounds_done(&self) -> usize {
        self.done
    }

    pub fn is_finished(&self) -> bool {
        self.done == self.rounds
    }

    /// Messages exchanged so far; one per directed edge per round.
    pub fn messages(&self) -> u64 {
        self.messages
    }

    /// One synchronous round; every agent replaces each lane by the maximum
    /// over its closed neighborhood. Returns false once all rounds are done.
    pub fn step(&mut self, topo: &ChannelTopology) -> bool {
        if self.is_finished() {
            return false;
        }
        let board = &self.estimates;
        let next: Vec<[f64; L]> = (0..board.len())
            .into_par_iter()
            .map(|i| {
                let view = LocalView::new(i, topo.neighbors(i), board);
                let mut est = *view.own();
                for (_, other) in view.neighbors() {
                    for (e, o) in est.iter_mut().zip(other) {
                        *e = e.max(*o);
                    }
                }
                est
            })
            .collect();
        self.estimates = next;
        self.done += 1;
        self.messages += 2 * topo.edge_count() as u64;
        true
    }

    pub fn run(mut self, topo: &ChannelTopology) -> Self {
        while self.step(topo) {}
        self
    }
}

/// Single-lane convenience: every agent's estimate after `rounds` rounds.
pub fn mcp_run(values: &[f64], topo: &ChannelTopology, rounds: usize) -> Vec<f64> {
    MaxConsensusSession::new(values.iter().map(|&v| [v]).collect(), rounds)
        .run(topo)
        .estimates()
        .iter()
        .map(|e| e[0])
        .collect()
}

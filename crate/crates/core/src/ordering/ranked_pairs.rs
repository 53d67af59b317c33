//! Ranked pairs (Tideman): lock pairwise majorities strongest first, skipping
//! any that would close a cycle, and read off a total order.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::types::{Ballot, OrderedOutput, OrderingError};
use crate::ids::MessageId;

/// A pairwise majority: `winner` beat `loser` `wins` to `losses` among ballots
/// ranking both.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Majority {
    pub winner: MessageId,
    pub loser: MessageId,
    pub wins: usize,
    pub losses: usize,
}

impl Majority {
    pub fn margin(&self) -> usize {
        self.wins - self.losses
    }
}

/// Every strict pairwise majority, sorted in lock order: margin descending,
/// then `(winner, loser)` ascending.
pub fn pairwise_majorities(s: &BTreeSet<MessageId>, ballots: &[Ballot]) -> Vec<Majority> {
    let vertices: Vec<MessageId> = s.iter().copied().collect();
    let n = vertices.len();
    let mut prefer = vec![vec![0usize; n]; n];
    for ballot in ballots {
        let ranked: Vec<usize> = ballot.order().iter().filter_map(|id| vertices.binary_search(id).ok()).collect();
        for (x, &i) in ranked.iter().enumerate() {
            for &j in &ranked[x + 1..] {
                prefer[i][j] += 1;
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if prefer[i][j] > prefer[j][i] {
                out.push(Majority {
                    winner: vertices[i],
                    loser: vertices[j],
                    wins: prefer[i][j],
                    losses: prefer[j][i],
                });
            }
        }
    }
    out.sort_by(|a, b| b.margin().cmp(&a.margin()).then_with(|| (a.winner, a.loser).cmp(&(b.winner, b.loser))));
    out
}

fn reaches(adjacency: &[Vec<usize>], from: usize, to: usize) -> bool {
    let mut seen = vec![false; adjacency.len()];
    let mut stack = vec![from];
    while let Some(v) = stack.pop() {
        if v == to {
            return true;
        }
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        stack.extend(adjacency[v].iter().copied());
    }
    false
}

pub fn ranked_pairs_order(s: &BTreeSet<MessageId>, ballots: &[Ballot]) -> Result<OrderedOutput, OrderingError> {
    if ballots.is_empty() {
        return Err(OrderingError::NoBallots);
    }
    let vertices: Vec<MessageId> = s.iter().copied().collect();
    let idx = |id: &MessageId| vertices.binary_search(id).expect("majority over known vertex");
    let mut locked = vec![Vec::new(); vertices.len()];
    for maj in pairwise_majorities(s, ballots) {
        let (w, l) = (idx(&maj.winner), idx(&maj.loser));
        if !reaches(&locked, l, w) {
            locked[w].push(l);
        }
    }
    let mut indegree = vec![0usize; vertices.len()];
    for adj in &locked {
        for &l in adj {
            indegree[l] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..vertices.len()).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(vertices.len());
    while let Some(Reverse(v)) = ready.pop() {
        order.push(vertices[v]);
        for &l in &locked[v] {
            indegree[l] -= 1;
            if indegree[l] == 0 {
                ready.push(Reverse(l));
            }
        }
    }
    Ok(OrderedOutput::total(order))
}

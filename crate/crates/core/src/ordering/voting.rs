//! FIFO ordering by ranked voting: γ-majority precedence graphs and their
//! condensation into batches.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use super::types::{ceil_frac, Ballot, BallotReading, OrderedOutput, OrderingError, VotingParams};
use crate::ids::MessageId;

/// Smallest network size that keeps γ-batch order fairness with `f` faults:
/// `n ≥ 2f(γ+1)/(2γ−1)`.
pub fn fault_bound_voting(gamma: f64, f: usize) -> Result<usize, OrderingError> {
    if !(gamma > 0.5 && gamma <= 1.0) {
        return Err(OrderingError::GammaOutOfRange(gamma));
    }
    let bound = 2.0 * f as f64 * (gamma + 1.0) / (2.0 * gamma - 1.0);
    Ok(ceil_frac(bound).max(1))
}

/// Directed graph over the message set; `a → b` means a γ-majority ranks `a`
/// before `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrecedenceGraph {
    vertices: Vec<MessageId>,
    adjacency: Vec<Vec<usize>>,
}

impl PrecedenceGraph {
    /// Build directly from an edge list. Vertices are deduplicated and sorted.
    pub fn from_edges(
        vertices: impl IntoIterator<Item = MessageId>,
        edges: impl IntoIterator<Item = (MessageId, MessageId)>,
    ) -> Self {
        let vertices: Vec<MessageId> = vertices.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (a, b) in edges {
            if let (Ok(i), Ok(j)) = (vertices.binary_search(&a), vertices.binary_search(&b)) {
                if i != j && !adjacency[i].contains(&j) {
                    adjacency[i].push(j);
                }
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
        }
        PrecedenceGraph { vertices, adjacency }
    }

    pub fn vertices(&self) -> &[MessageId] {
        &self.vertices
    }

    pub fn edges(&self) -> Vec<(MessageId, MessageId)> {
        let mut out = Vec::new();
        for (i, adj) in self.adjacency.iter().enumerate() {
            for &j in adj {
                out.push((self.vertices[i], self.vertices[j]));
            }
        }
        out
    }

    pub fn has_edge(&self, a: &MessageId, b: &MessageId) -> bool {
        match (self.vertices.binary_search(a), self.vertices.binary_search(b)) {
            (Ok(i), Ok(j)) => self.adjacency[i].binary_search(&j).is_ok(),
            _ => false,
        }
    }

    pub(crate) fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }
}

/// Per-ballot rank of every vertex (`None` when unranked).
fn rank_matrix(vertices: &[MessageId], ballots: &[Ballot]) -> Vec<Vec<Option<usize>>> {
    ballots
        .iter()
        .map(|ballot| {
            let mut ranks = vec![None; vertices.len()];
            for (pos, id) in ballot.order().iter().enumerate() {
                if let Ok(v) = vertices.binary_search(id) {
                    ranks[v] = Some(pos);
                }
            }
            ranks
        })
        .collect()
}

/// Number of ballots supporting "`i` before `j`" under the given reading.
fn support(ranks: &[Vec<Option<usize>>], i: usize, j: usize, reading: BallotReading) -> usize {
    ranks
        .iter()
        .filter(|r| match (r[i], r[j], reading) {
            (Some(a), Some(b), _) => a < b,
            (Some(_), None, BallotReading::ArrivalPrefix) => true,
            (None, None, BallotReading::ArrivalPrefix) => true,
            _ => false,
        })
        .count()
}

pub fn build_precedence_graph(
    s: &BTreeSet<MessageId>,
    ballots: &[Ballot],
    params: &VotingParams,
) -> Result<PrecedenceGraph, OrderingError> {
    params.check()?;
    if ballots.len() > params.nodes {
        return Err(OrderingError::TooManyBallots { ballots: ballots.len(), nodes: params.nodes });
    }
    for ballot in ballots {
        if let Some(id) = ballot.order().iter().find(|id| !s.contains(id)) {
            return Err(OrderingError::UnknownMessage(*id));
        }
    }
    let vertices: Vec<MessageId> = s.iter().copied().collect();
    let ranks = rank_matrix(&vertices, ballots);
    let quorum = params.quorum().max(1);
    let absent = match params.reading {
        BallotReading::Pairwise => 0,
        BallotReading::ArrivalPrefix => params.nodes - ballots.len(),
    };
    let mut adjacency = vec![Vec::new(); vertices.len()];
    for (i, out) in adjacency.iter_mut().enumerate() {
        out.extend((0..vertices.len()).filter(|&j| i != j && support(&ranks, i, j, params.reading) + absent >= quorum));
    }
    Ok(PrecedenceGraph { vertices, adjacency })
}

/// Strongly connected components, each as sorted vertex indices, in Tarjan
/// completion order (sinks first).
pub(crate) fn tarjan_scc(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (vertex, next child offset)
        let mut call: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next;
        low[root] = next;
        next += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut child)) = call.last_mut() {
            if let Some(&w) = adjacency[v].get(*child) {
                *child += 1;
                if index[w] == UNVISITED {
                    index[w] = next;
                    low[w] = next;
                    next += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comp.sort_unstable();
                components.push(comp);
            }
        }
    }
    components
}

/// Collapse each strongly connected component into one batch and emit the
/// batches in topological order of the condensation. Among components with no
/// remaining predecessor, the one holding the smallest `MessageId` goes first.
pub fn condense_cycles(g: &PrecedenceGraph) -> OrderedOutput {
    let adjacency = g.adjacency();
    let components = tarjan_scc(adjacency);
    let mut comp_of = vec![0; adjacency.len()];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            comp_of[v] = c;
        }
    }
    let mut indegree = vec![0usize; components.len()];
    let mut dag: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); components.len()];
    for (v, adj) in adjacency.iter().enumerate() {
        for &w in adj {
            let (cv, cw) = (comp_of[v], comp_of[w]);
            if cv != cw && dag[cv].insert(cw) {
                indegree[cw] += 1;
            }
        }
    }
    // Members are sorted indices into sorted vertices, so members[0] is the
    // smallest id of the component.
    let mut ready: BinaryHeap<Reverse<(usize, usize)>> = components
        .iter()
        .enumerate()
        .filter(|(c, _)| indegree[*c] == 0)
        .map(|(c, members)| Reverse((members[0], c)))
        .collect();
    let mut batches = Vec::with_capacity(components.len());
    while let Some(Reverse((_, c))) = ready.pop() {
        batches.push(components[c].iter().map(|&v| g.vertices()[v]).collect());
        for &d in &dag[c] {
            indegree[d] -= 1;
            if indegree[d] == 0 {
                ready.push(Reverse((components[d][0], d)));
            }
        }
    }
    OrderedOutput::from_batches(batches)
}

pub fn fifo_via_voting(
    s: &BTreeSet<MessageId>,
    ballots: &[Ballot],
    params: &VotingParams,
) -> Result<OrderedOutput, OrderingError> {
    Ok(condense_cycles(&build_precedence_graph(s, ballots, params)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::NodeId;

    fn m(k: u64) -> MessageId {
        MessageId::numbered(k)
    }

    fn ballots(orders: &[&[u64]]) -> Vec<Ballot> {
        orders
            .iter()
            .enumerate()
            .map(|(i, o)| Ballot::new(NodeId(i as u32), o.iter().map(|&k| m(k)).collect()).unwrap())
            .collect()
    }

    fn set(ks: &[u64]) -> BTreeSet<MessageId> {
        ks.iter().map(|&k| m(k)).collect()
    }

    #[test]
    fn fault_bound_values() {
        assert_eq!(fault_bound_voting(1.0, 1).unwrap(), 4);
        assert_eq!(fault_bound_voting(1.0, 0).unwrap(), 1);
        assert_eq!(fault_bound_voting(0.75, 2).unwrap(), 14);
        assert!(fault_bound_voting(0.5, 1).is_err());
        assert!(fault_bound_voting(1.01, 1).is_err());
    }

    #[test]
    fn unanimous_pair_has_single_edge() {
        let g = build_precedence_graph(
            &set(&[1, 2]),
            &ballots(&[&[1, 2], &[1, 2], &[1, 2]]),
            &VotingParams::new(1.0, 3, 0),
        )
        .unwrap();
        assert_eq!(g.edges(), vec![(m(1), m(2))]);
    }

    #[test]
    fn condorcet_cycle_edges() {
        let g = build_precedence_graph(
            &set(&[1, 2, 3]),
            &ballots(&[&[1, 2, 3], &[2, 3, 1], &[3, 1, 2]]),
            &VotingParams::new(2.0 / 3.0, 3, 0),
        )
        .unwrap();
        assert_eq!(g.edges(), vec![(m(1), m(2)), (m(2), m(3)), (m(3), m(1))]);
    }

    #[test]
    fn thin_coverage_yields_no_edge() {
        let g = build_precedence_graph(
            &set(&[1, 2]),
            &ballots(&[&[1, 2], &[1], &[1]]),
            &VotingParams::new(2.0 / 3.0, 3, 0),
        )
        .unwrap();
        assert!(g.edges().is_empty());
    }

    #[test]
    fn arrival_prefix_counts_unranked_as_later() {
        let params = VotingParams::new(2.0 / 3.0, 3, 0).with_reading(BallotReading::ArrivalPrefix);
        let g = build_precedence_graph(&set(&[1, 2]), &ballots(&[&[1, 2], &[1], &[1]]), &params).unwrap();
        assert_eq!(g.edges(), vec![(m(1), m(2))]);
    }

    #[test]
    fn gamma_must_exceed_half() {
        let err = build_precedence_graph(&set(&[1]), &[], &VotingParams::new(0.5, 3, 0));
        assert!(matches!(err, Err(OrderingError::GammaOutOfRange(_))));
    }

    #[test]
    fn foreign_message_is_rejected() {
        let err = build_precedence_graph(&set(&[1]), &ballots(&[&[1, 9]]), &VotingParams::new(1.0, 1, 0));
        assert_eq!(err, Err(OrderingError::UnknownMessage(m(9))));
    }

    #[test]
    fn condense_examples() {
        let cycle = PrecedenceGraph::from_edges([m(1), m(2), m(3)], [(m(1), m(2)), (m(2), m(3)), (m(3), m(1))]);
        assert_eq!(condense_cycles(&cycle).batches(), &[vec![m(1), m(2), m(3)]]);

        let chain = PrecedenceGraph::from_edges([m(1), m(2), m(3)], [(m(1), m(2)), (m(2), m(3))]);
        assert_eq!(condense_cycles(&chain).batches(), &[vec![m(1)], vec![m(2)], vec![m(3)]]);

        let mixed = PrecedenceGraph::from_edges([m(1), m(2), m(3)], [(m(1), m(2)), (m(2), m(1)), (m(2), m(3))]);
        assert_eq!(condense_cycles(&mixed).batches(), &[vec![m(1), m(2)], vec![m(3)]]);
    }

    #[test]
    fn incomparable_components_by_smallest_id() {
        let g = PrecedenceGraph::from_edges([m(5), m(1), m(3)], [(m(5), m(3))]);
        assert_eq!(condense_cycles(&g).flatten(), vec![m(1), m(5), m(3)]);
    }

    #[test]
    fn fifo_voting_examples() {
        let s = set(&[1, 2, 3]);
        let out = fifo_via_voting(
            &s,
            &ballots(&[&[1, 2, 3], &[1, 2, 3], &[1, 2, 3], &[1, 2, 3]]),
            &VotingParams::new(1.0, 4, 0),
        )
        .unwrap();
        assert_eq!(out.batches(), &[vec![m(1)], vec![m(2)], vec![m(3)]]);

        let out =
            fifo_via_voting(&s, &ballots(&[&[1, 2, 3], &[2, 3, 1], &[3, 1, 2]]), &VotingParams::new(2.0 / 3.0, 3, 0))
                .unwrap();
        assert_eq!(out.batches(), &[vec![m(1), m(2), m(3)]]);

        let out = fifo_via_voting(
            &set(&[1, 2]),
            &ballots(&[&[1, 2], &[1, 2], &[2, 1], &[1, 2]]),
            &VotingParams::new(0.75, 4, 0),
        )
        .unwrap();
        assert_eq!(out.batches(), &[vec![m(1)], vec![m(2)]]);
    }

    #[test]
    fn deep_chain_does_not_overflow() {
        let n = 20_000u64;
        let g = PrecedenceGraph::from_edges((0..n).map(m), (0..n - 1).map(|k| (m(k), m(k + 1))));
        assert_eq!(condense_cycles(&g).batches().len(), n as usize);
    }
}

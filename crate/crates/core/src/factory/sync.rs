//! State synchronization: from collected views to a common `(S, D)`.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::view::{digest_of_view_digests, LocalView, SealedView};
use crate::consensus::Round;
use crate::ids::{Digest, MessageId, NodeId};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SyncError {
    #[error("{have} usable views, at least {need} required")]
    UnderQuorum { have: usize, need: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynchronizedState {
    pub round: Round,
    pub nodes: usize,
    pub faults: usize,
    pub message_set: BTreeSet<MessageId>,
    /// Contributors' views, sorted by node.
    pub metadata_bundle: Vec<LocalView>,
    pub contributors: BTreeSet<NodeId>,
    pub view_digests: BTreeMap<NodeId, Digest>,
    /// Nodes proven to have equivocated, by this round's reshared digests or earlier.
    pub excluded: BTreeSet<NodeId>,
    pub evidence: Vec<EquivocationEvidence>,
}

impl SynchronizedState {
    pub fn view_set_digest(&self) -> Digest {
        digest_of_view_digests(&self.view_digests)
    }

    /// Messages seen by some contributor that did not reach the inclusion threshold.
    pub fn pending(&self) -> BTreeSet<MessageId> {
        self.metadata_bundle
            .iter()
            .flat_map(|v| v.messages.iter())
            .filter(|m| !self.message_set.contains(m))
            .copied()
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EquivocationEvidence {
    pub accused: NodeId,
    /// Round in which the conflicting views were sent.
    pub round: Round,
    pub digest_a: Digest,
    pub digest_b: Digest,
    pub reporters: (NodeId, NodeId),
}

/// Evidence for every accused node for which two distinct reporters hold two
/// distinct digests. `reshared` maps a reporter to its `(accused, digest)` claims.
pub fn detect_equivocation(
    reshared: &BTreeMap<NodeId, Vec<(NodeId, Digest)>>,
    round: Round,
) -> Vec<EquivocationEvidence> {
    let mut claims: BTreeMap<NodeId, BTreeMap<Digest, BTreeSet<NodeId>>> = BTreeMap::new();
    for (reporter, list) in reshared {
        for (accused, d) in list {
            if accused != reporter {
                claims.entry(*accused).or_default().entry(*d).or_default().insert(*reporter);
            }
        }
    }
    let mut out = Vec::new();
    for (accused, by_digest) in claims {
        let digests: Vec<_> = by_digest.iter().collect();
        let found = digests.iter().enumerate().find_map(|(i, (da, ra))| {
            digests[i + 1..].iter().find_map(|(db, rb)| {
                let (r1, r2) = distinct_pair(ra, rb)?;
                Some((**da, **db, r1, r2))
            })
        });
        if let Some((digest_a, digest_b, r1, r2)) = found {
            out.push(EquivocationEvidence { accused, round, digest_a, digest_b, reporters: (r1, r2) });
        }
    }
    out
}

fn distinct_pair(a: &BTreeSet<NodeId>, b: &BTreeSet<NodeId>) -> Option<(NodeId, NodeId)> {
    a.iter().find_map(|x| b.iter().find(|y| *y != x).map(|y| (*x, *y)))
}

/// Build `(S, D)` from the views collected for `round`.
///
/// Views from unknown or excluded nodes, duplicate views from one node, views of
/// another round and views with inconsistent metadata are dropped. Reshared
/// digests in the remaining views extend `excluded`. A message enters `S` when
/// at least `f + 1` contributors hold it.
pub fn synchronize(
    views: &[LocalView],
    round: Round,
    n: usize,
    f: usize,
    excluded: &BTreeSet<NodeId>,
) -> Result<SynchronizedState, SyncError> {
    let sealed: Vec<SealedView> = views.iter().cloned().map(SealedView::new).collect();
    synchronize_sealed(&sealed, round, n, f, excluded)
}

/// [`synchronize`] over views whose digests are already known.
pub fn synchronize_sealed<'a>(
    views: impl IntoIterator<Item = &'a SealedView>,
    round: Round,
    n: usize,
    f: usize,
    excluded: &BTreeSet<NodeId>,
) -> Result<SynchronizedState, SyncError> {
    let mut by_node: BTreeMap<NodeId, &SealedView> = BTreeMap::new();
    for v in views {
        if v.round == round && v.node.index() < n && v.is_consistent() {
            by_node.entry(v.node).or_insert(v);
        }
    }
    let reshared: BTreeMap<NodeId, Vec<(NodeId, Digest)>> = by_node
        .values()
        .filter(|v| !excluded.contains(&v.node))
        .map(|v| (v.node, v.reshared.iter().map(|(a, d)| (*a, *d)).collect()))
        .collect();
    let evidence = detect_equivocation(&reshared, round.saturating_sub(1));
    let mut excluded = excluded.clone();
    excluded.extend(evidence.iter().map(|e| e.accused));

    let bundle: Vec<&SealedView> = by_node.into_values().filter(|v| !excluded.contains(&v.node)).collect();
    let need = n.saturating_sub(f).max(1);
    if bundle.len() < need {
        return Err(SyncError::UnderQuorum { have: bundle.len(), need });
    }
    let mut holders: BTreeMap<MessageId, usize> = BTreeMap::new();
    for v in &bundle {
        for m in &v.view().messages {
            *holders.entry(*m).or_default() += 1;
        }
    }
    let message_set = holders.into_iter().filter(|(_, c)| *c > f).map(|(m, _)| m).collect();
    Ok(SynchronizedState {
        round,
        nodes: n,
        faults: f,
        message_set,
        contributors: bundle.iter().map(|v| v.node).collect(),
        view_digests: bundle.iter().map(|v| (v.node, v.digest())).collect(),
        metadata_bundle: bundle.into_iter().map(|v| v.view().clone()).collect(),
        excluded,
        evidence,
    })
}

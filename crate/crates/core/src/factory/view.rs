//! A node's local view `(S_i, D_i)` for one round.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::consensus::Round;
use crate::ids::{Digest, DigestBuilder, MessageId, NodeId};
use crate::ordering::{Ballot, TimestampMap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataKind {
    Ballot,
    Timestamps,
    Randomness,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Metadata {
    Ballot(Ballot),
    Timestamps(TimestampMap),
    /// A node's randomness contribution for the round.
    Randomness(Digest),
}

impl Metadata {
    pub fn kind(&self) -> MetadataKind {
        match self {
            Metadata::Ballot(_) => MetadataKind::Ballot,
            Metadata::Timestamps(_) => MetadataKind::Timestamps,
            Metadata::Randomness(_) => MetadataKind::Randomness,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalView {
    pub node: NodeId,
    pub round: Round,
    pub messages: BTreeSet<MessageId>,
    pub metadata: Metadata,
    /// Digests of the views this node received from each peer in its previous
    /// round, reshared so equivocation can be detected.
    pub reshared: BTreeMap<NodeId, Digest>,
}

impl LocalView {
    /// Whether the metadata mentions only messages of this view.
    pub fn is_consistent(&self) -> bool {
        match &self.metadata {
            Metadata::Ballot(b) => b.voter() == self.node && b.order().iter().all(|m| self.messages.contains(m)),
            Metadata::Timestamps(t) => t.reporter == self.node && t.times.keys().all(|m| self.messages.contains(m)),
            Metadata::Randomness(_) => true,
        }
    }

    pub fn digest(&self) -> Digest {
        let mut b = DigestBuilder::new("local-view");
        b.u64(self.node.0 as u64).u64(self.round).u64(self.messages.len() as u64);
        for m in &self.messages {
            b.id(m);
        }
        match &self.metadata {
            Metadata::Ballot(ballot) => {
                b.u64(0).u64(ballot.order().len() as u64);
                for m in ballot.order() {
                    b.id(m);
                }
            }
            Metadata::Timestamps(t) => {
                b.u64(1).u64(t.times.len() as u64);
                for (m, ts) in &t.times {
                    b.id(m).u64(ts.0);
                }
            }
            Metadata::Randomness(d) => {
                b.u64(2).digest(d);
            }
        }
        b.u64(self.reshared.len() as u64);
        for (peer, d) in &self.reshared {
            b.u64(peer.0 as u64).digest(d);
        }
        b.finish()
    }
}

/// Digest of a set of views, independent of the order they are given in.
/// A view with its digest computed once, so it can be shared between
/// receivers without rehashing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SealedView {
    view: LocalView,
    digest: Digest,
}

impl SealedView {
    pub fn new(view: LocalView) -> Self {
        SealedView { digest: view.digest(), view }
    }

    pub fn view(&self) -> &LocalView {
        &self.view
    }

    pub fn digest(&self) -> Digest {
        self.digest
    }
}

impl std::ops::Deref for SealedView {
    type Target = LocalView;

    fn deref(&self) -> &LocalView {
        &self.view
    }
}

pub fn view_set_digest<'a>(views: impl IntoIterator<Item = &'a LocalView>) -> Digest {
    let sorted: BTreeMap<NodeId, Digest> = views.into_iter().map(|v| (v.node, v.digest())).collect();
    digest_of_view_digests(&sorted)
}

pub(crate) fn digest_of_view_digests(sorted: &BTreeMap<NodeId, Digest>) -> Digest {
    let mut b = DigestBuilder::new("view-set");
    b.u64(sorted.len() as u64);
    for (node, d) in sorted {
        b.u64(node.0 as u64).digest(d);
    }
    b.finish()
}

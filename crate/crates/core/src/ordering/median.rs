//! FIFO ordering by median timestamps, and the f-robustness test for a pair.

use std::collections::{BTreeMap, BTreeSet};

use super::types::{OrderedOutput, OrderingError, Timestamp, TimestampMap};
use crate::ids::MessageId;

fn sorted(times: &[Timestamp]) -> Vec<Timestamp> {
    let mut v = times.to_vec();
    v.sort_unstable();
    v
}

/// Median of a multiset. Even sizes take the lower of the two middle values, so
/// the result is always a reported value.
pub fn median_timestamp(times: &[Timestamp]) -> Result<Timestamp, OrderingError> {
    if times.is_empty() {
        return Err(OrderingError::EmptyMultiset);
    }
    let s = sorted(times);
    Ok(s[(s.len() - 1) / 2])
}

/// 1-based order statistics `(hi, lo)` compared by [`is_f_robust`]:
/// `⌊n/2⌋ + f + 1` and `⌈n/2⌉ − f`.
pub fn robust_indices(n: usize, f: usize) -> Result<(usize, usize), OrderingError> {
    let hi = n / 2 + f + 1;
    let lo = n.div_ceil(2).checked_sub(f).filter(|&lo| lo >= 1);
    match lo {
        Some(lo) if n > 2 * f && hi <= n => Ok((hi, lo)),
        _ => Err(OrderingError::IndexOutOfRange { n, f }),
    }
}

/// Whether `median(ta) < median(tb)` survives any adversary rewriting up to `f`
/// entries of each multiset.
pub fn is_f_robust(ta: &[Timestamp], tb: &[Timestamp], n: usize, f: usize) -> Result<bool, OrderingError> {
    if ta.len() != n || tb.len() != n {
        return Err(OrderingError::SizeMismatch { n, a: ta.len(), b: tb.len() });
    }
    let (hi, lo) = robust_indices(n, f)?;
    Ok(sorted(ta)[hi - 1] < sorted(tb)[lo - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimestampOrder {
    pub output: OrderedOutput,
    pub medians: BTreeMap<MessageId, Timestamp>,
    /// One flag per adjacent pair of the output, in output order.
    pub robustness: Vec<((MessageId, MessageId), bool)>,
}

/// The timestamp multiset of `id` across `reports`, padding absent entries
/// with [`Timestamp::INFINITY`].
pub fn padded_times(id: &MessageId, reports: &[TimestampMap]) -> Vec<Timestamp> {
    reports.iter().map(|r| r.get(id).unwrap_or(Timestamp::INFINITY)).collect()
}

/// Sort `s` by median timestamp (ties by id). Each message must appear in at
/// least `reports.len() − f` reports.
pub fn fifo_via_timestamping(
    s: &BTreeSet<MessageId>,
    reports: &[TimestampMap],
    f: usize,
) -> Result<TimestampOrder, OrderingError> {
    let n = reports.len();
    let required = n.saturating_sub(f).max(1);
    let mut multisets = BTreeMap::new();
    let mut medians = BTreeMap::new();
    for id in s {
        let times = padded_times(id, reports);
        let present = times.iter().filter(|t| !t.is_infinite()).count();
        if present < required {
            return Err(OrderingError::MissingTimestamps { id: *id, present, required });
        }
        medians.insert(*id, median_timestamp(&times)?);
        multisets.insert(*id, times);
    }
    let mut order: Vec<MessageId> = s.iter().copied().collect();
    order.sort_by_key(|id| (medians[id], *id));
    let robustness = order
        .windows(2)
        .map(|w| {
            let flag = is_f_robust(&multisets[&w[0]], &multisets[&w[1]], n, f)?;
            Ok(((w[0], w[1]), flag))
        })
        .collect::<Result<Vec<_>, OrderingError>>()?;
    Ok(TimestampOrder { output: OrderedOutput::total(order), medians, robustness })
}

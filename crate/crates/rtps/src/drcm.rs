//! Degree-centrality based rate calculation.
//!
//! Splits the usable link capacity into per-flow desired rates. When the
//! capacity covers every flow's least rate, each flow gets its least rate
//! plus a centrality-proportional share of the residual; otherwise the whole
//! capacity is divided by centrality share alone, most popular flow first.

use thiserror::Error;

use crate::social::PopularityProfile;
use crate::FlowId;

#[derive(Debug, Error, PartialEq)]
pub enum DrcmError {
    #[error("link capacity {0} must be positive")]
    NonPositiveCapacity(f64),
    #[error("least rate {rate} of flow {flow} must be non-negative")]
    NegativeLeastRate { flow: FlowId, rate: f64 },
    #[error("least rates cover {got} flows, profile has {expected}")]
    FlowCountMismatch { got: usize, expected: usize },
}

/// Desired rates for all flows, summing exactly to the capacity they were
/// computed from.
#[derive(Debug, Clone)]
pub struct RateAllocation {
    desired: Vec<f64>,
    shares: Vec<f64>,
    least: Vec<f64>,
    /// True when the least-rate floor applied (capacity covered all floors).
    least_floor_applied: bool,
}

impl RateAllocation {
    pub fn desired(&self, flow: FlowId) -> f64 {
        self.desired[flow.index()]
    }

    pub fn desired_rates(&self) -> &[f64] {
        &self.desired
    }

    pub fn shares(&self) -> &[f64] {
        &self.shares
    }

    pub fn least_floor_applied(&self) -> bool {
        self.least_floor_applied
    }

    pub fn least_rates(&self) -> &[f64] {
        &self.least
    }

    pub fn total(&self) -> f64 {
        self.desired.iter().sum()
    }

    /// Adds `amount` to one flow's desired rate; used to credit the
    /// capacity-recovery bonus to the most popular flow.
    pub fn add_desired(&mut self, flow: FlowId, amount: f64) {
        self.desired[flow.index()] += amount;
    }
}

/// Normalized centrality shares; equal shares when every centrality is zero
/// so the allocation stays well-defined.
fn centrality_shares(profile: &PopularityProfile) -> Vec<f64> {
    let centralities = profile.centralities();
    let total: f64 = centralities.iter().sum();
    if total > 0.0 {
        centralities.iter().map(|&c| c / total).collect()
    } else {
        let equal = 1.0 / centralities.len() as f64;
        vec![equal; centralities.len()]
    }
}

/// Computes per-flow desired rates from the usable capacity `l_c`, the
/// per-flow least rates, and the popularity profile.
pub fn compute_desired_rates(
    l_c: f64,
    least: &[f64],
    profile: &PopularityProfile,
) -> Result<RateAllocation, DrcmError> {
    if l_c <= 0.0 {
        return Err(DrcmError::NonPositiveCapacity(l_c));
    }
    if least.len() != profile.flow_count() {
        return Err(DrcmError::FlowCountMismatch {
            got: least.len(),
            expected: profile.flow_count(),
        });
    }
    for (i, &rate) in least.iter().enumerate() {
        if rate < 0.0 {
            return Err(DrcmError::NegativeLeastRate {
                flow: FlowId(i as u32),
                rate,
            });
        }
    }

    let shares = centrality_shares(profile);
    let least_total: f64 = least.iter().sum();
    let mut desired = vec![0.0; least.len()];
    let least_floor_applied = l_c >= least_total;
    if least_floor_applied {
        let residual = l_c - least_total;
        for &flow in profile.ranked() {
            let i = flow.index();
            desired[i] = shares[i] * residual + least[i];
        }
    } else {
        for &flow in profile.ranked() {
            let i = flow.index();
            desired[i] = l_c * shares[i];
        }
    }

    Ok(RateAllocation {
        desired,
        shares,
        least: least.to_vec(),
        least_floor_applied,
    })
}

/// Caps one contended flow at its measured rate and hands the freed share to
/// the remaining flows in proportion to their renormalized shares. The total
/// is unchanged.
pub fn recompute_with_cap(alloc: &RateAllocation, capped: FlowId, cap: f64) -> RateAllocation {
    apply_caps(alloc, &[(capped, cap)])
}

/// Applies several contention caps at once. Freed bandwidth is redistributed
/// only over uncapped flows; if every flow is capped the remainder stays
/// unassigned.
pub fn apply_caps(alloc: &RateAllocation, caps: &[(FlowId, f64)]) -> RateAllocation {
    let mut out = alloc.clone();
    let mut is_capped = vec![false; out.desired.len()];
    let mut freed = 0.0;
    for &(flow, cap) in caps {
        let i = flow.index();
        let capped_rate = cap.min(out.desired[i]);
        freed += out.desired[i] - capped_rate;
        out.desired[i] = capped_rate;
        is_capped[i] = true;
    }
    if freed <= 0.0 {
        return out;
    }
    let open_share: f64 = out
        .shares
        .iter()
        .zip(&is_capped)
        .filter(|(_, &capped)| !capped)
        .map(|(&s, _)| s)
        .sum();
    if open_share <= 0.0 {
        return out;
    }
    for (i, capped) in is_capped.iter().enumerate() {
        if !capped {
            out.desired[i] += freed * out.shares[i] / open_share;
        }
    }
    out
}

//! Link capacity computing: the consumable link `c`, the usable capacity
//! belief `l^(c)`, and per-flow contention detection.
//!
//! A flow is contended once its measured rate stays under `epsilon` times
//! its entitled rate for a full epoch; it settles the moment the rate rises
//! back above the threshold. Contention on at least half of the flows marks
//! the whole link as contended. `l^(c)` is reduced while flows are
//! contended, recovers additively when contention settles (the recovered
//! amount is credited to the most popular flow only), and is re-initialized
//! to the configured capacity at a fixed period.

use crate::FlowId;

/// Contention threshold fraction.
pub const DEFAULT_EPSILON: f64 = 0.7;
/// Measurement epoch in seconds.
pub const DEFAULT_EPOCH: f64 = 1.0;
/// Re-initialization period in seconds.
pub const DEFAULT_REINIT_PERIOD: f64 = 100.0;

#[derive(Debug, Clone, Copy)]
pub struct LccmParams {
    pub epsilon: f64,
    pub epoch: f64,
    pub reinit_period: f64,
    /// Configured total receiver capacity, bits/second.
    pub initial_capacity: f64,
    /// Packet size in bits; one packet per top-flow SRTT is the additive
    /// recovery quantum.
    pub packet_bits: f64,
}

/// Strict threshold test: contended only strictly below `epsilon * d_r`,
/// settled at or above it.
pub fn below_threshold(epsilon: f64, measured: f64, desired: f64) -> bool {
    desired > 0.0 && measured < epsilon * desired
}

/// Receiver-global capacity state.
#[derive(Debug, Clone)]
pub struct LinkCapacityState {
    params: LccmParams,
    /// Consumable link: sum of all per-flow rate estimates.
    c: f64,
    /// `c` at the previous arrival.
    c_prev: f64,
    /// Running maximum of observed `c_prev` since the last re-init.
    me: f64,
    /// Capacity belief before contention reductions.
    l_uncapped: f64,
    /// Portion of `l_uncapped` recovered additively since contention
    /// settled; allocated to the most popular flow only.
    recovery_bonus: f64,
    contended: Vec<bool>,
    below_since: Vec<Option<f64>>,
    last_reinit: f64,
}

impl LinkCapacityState {
    pub fn new(params: LccmParams, flow_count: usize) -> Self {
        Self {
            params,
            c: 0.0,
            c_prev: 0.0,
            me: 0.0,
            l_uncapped: params.initial_capacity,
            recovery_bonus: 0.0,
            contended: vec![false; flow_count],
            below_since: vec![None; flow_count],
            last_reinit: 0.0,
        }
    }

    pub fn params(&self) -> &LccmParams {
        &self.params
    }

    pub fn consumable(&self) -> f64 {
        self.c
    }

    pub fn max_estimation(&self) -> f64 {
        self.me
    }

    pub fn uncapped_capacity(&self) -> f64 {
        self.l_uncapped
    }

    pub fn recovery_bonus(&self) -> f64 {
        self.recovery_bonus
    }

    pub fn is_contended(&self, flow: FlowId) -> bool {
        self.contended[flow.index()]
    }

    pub fn contended_count(&self) -> usize {
        self.contended.iter().filter(|&&c| c).count()
    }

    /// Full-link contention: at least half of all flows contended.
    pub fn full_link_contended(&self) -> bool {
        self.contended_count() >= self.contended.len().div_ceil(2)
    }

    /// Sums the rate estimates into `c` and folds the previous `c` into the
    /// running maximum. Called on every data arrival.
    pub fn update_consumable(&mut self, rates: &[f64]) {
        debug_assert!(rates.iter().all(|&r| r >= 0.0));
        self.c = rates.iter().sum();
        if self.c_prev > self.me {
            self.me = self.c_prev;
        }
    }

    /// Records the current `c` as the previous one; the tail step of each
    /// arrival.
    pub fn commit_previous(&mut self) {
        self.c_prev = self.c;
    }

    /// Epoch-boundary maintenance. `measured[i]` is false until flow `i`
    /// has produced a rate estimate; unmeasured flows never count as
    /// contended. `entitlements` are the uncapped desired rates the
    /// contention thresholds compare against. `top_srtt` scales the
    /// additive recovery quantum.
    pub fn epoch_update(
        &mut self,
        now: f64,
        rates: &[f64],
        measured: &[bool],
        entitlements: &[f64],
        top_srtt: f64,
    ) {
        for i in 0..self.contended.len() {
            if measured[i] && below_threshold(self.params.epsilon, rates[i], entitlements[i]) {
                let since = *self.below_since[i].get_or_insert(now);
                if now - since >= self.params.epoch {
                    self.contended[i] = true;
                }
            } else {
                self.below_since[i] = None;
                self.contended[i] = false;
            }
        }

        let contended = self.contended_count();
        if contended > 0 {
            self.recovery_bonus = 0.0;
            if self.full_link_contended() && self.c > 0.0 {
                self.l_uncapped = self.c.min(self.params.initial_capacity);
            }
        } else {
            self.l_uncapped = self
                .l_uncapped
                .max(self.c)
                .min(self.params.initial_capacity);
            if self.l_uncapped < self.params.initial_capacity && top_srtt > 0.0 {
                let quantum = self.params.packet_bits / top_srtt;
                let inc = quantum.min(self.params.initial_capacity - self.l_uncapped);
                self.l_uncapped += inc;
                self.recovery_bonus += inc;
            }
        }

        if now - self.last_reinit >= self.params.reinit_period {
            self.reinitialize(now);
        }
    }

    /// Capacity visible to the allocator: the uncapped belief minus
    /// `d^(r) (1 - epsilon)` for every contended flow, never below the
    /// measured total.
    pub fn effective_capacity(&self, entitlements: &[f64]) -> f64 {
        let reduction: f64 = entitlements
            .iter()
            .zip(&self.contended)
            .filter(|(_, &contended)| contended)
            .map(|(&d, _)| d * (1.0 - self.params.epsilon))
            .sum();
        (self.l_uncapped - reduction).max(self.c.min(self.l_uncapped))
    }

    /// Measured-rate caps for all currently contended flows.
    pub fn contention_caps(&self, rates: &[f64]) -> Vec<(FlowId, f64)> {
        self.contended
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| (FlowId(i as u32), rates[i]))
            .collect()
    }

    fn reinitialize(&mut self, now: f64) {
        self.l_uncapped = self.params.initial_capacity;
        self.me = 0.0;
        self.recovery_bonus = 0.0;
        self.contended.fill(false);
        self.below_since.fill(None);
        self.last_reinit = now;
    }
}

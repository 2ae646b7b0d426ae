//! Receiver-side per-flow rate estimation.
//!
//! Tracks four quantities per flow: the instantaneous arrival-rate estimate
//! `e_k`, its exponential weighted moving average `w_k`, the smoothed RTT
//! measured through timestamp echoes, and the smoothed packet inter-arrival
//! time that feeds the delayed-ACK timeout.

use thiserror::Error;

/// Smoothing gain for both the receiver SRTT and the smoothed inter-arrival
/// time, mirroring classic TCP SRTT practice.
pub const SMOOTHING_GAIN: f64 = 1.0 / 8.0;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("arrival time {arrival} not after previous arrival {previous}")]
    NonMonotoneArrival { arrival: f64, previous: f64 },
    #[error("ewma weight {0} outside [0, 1)")]
    BadEwmaWeight(f64),
    #[error("rtt sample {0} must be positive")]
    BadRttSample(f64),
    #[error("inter-arrival gap {0} must be non-negative")]
    NegativeGap(f64),
}

/// Per-flow estimator state. All times are seconds, rates bits/second.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    /// Current estimated arrival rate `e_k`; 0 before the first packet.
    rate: f64,
    /// Rate before the latest update, `e_k^(p)`.
    rate_prev: f64,
    /// Arrival time of the last counted packet; starts at the flow's
    /// start time so the first estimate becomes `p / (RTT + gap)`.
    last_arrival: f64,
    /// EWMA of the rate, `w_k`.
    ewma: f64,
    /// EWMA value before the latest update, `w_k^(p)`.
    ewma_prev: f64,
    /// Receiver-side smoothed round-trip time.
    srtt: f64,
    srtt_initialized: bool,
    /// Smoothed packet inter-arrival time `t_k^(s)`; 0 until the first gap.
    smoothed_gap: f64,
    gap_initialized: bool,
    packets_seen: u64,
}

impl RateEstimate {
    /// `flow_start` anchors the first inter-arrival gap; `base_rtt` seeds
    /// the SRTT until the first timestamp echo arrives.
    pub fn new(flow_start: f64, base_rtt: f64) -> Self {
        Self {
            rate: 0.0,
            rate_prev: 0.0,
            last_arrival: flow_start,
            ewma: 0.0,
            ewma_prev: 0.0,
            srtt: base_rtt,
            srtt_initialized: false,
            smoothed_gap: 0.0,
            gap_initialized: false,
            packets_seen: 0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn ewma(&self) -> f64 {
        self.ewma
    }

    pub fn srtt(&self) -> f64 {
        self.srtt
    }

    pub fn smoothed_gap(&self) -> f64 {
        self.smoothed_gap
    }

    pub fn last_arrival(&self) -> f64 {
        self.last_arrival
    }

    pub fn packets_seen(&self) -> u64 {
        self.packets_seen
    }

    /// Folds one packet arrival into the rate estimate:
    /// `e_k = (p + RTT * e_k^(p)) / (RTT + (t_k - t_k^(p)))`.
    pub fn update_rate(&mut self, packet_size_bits: f64, arrival: f64) -> Result<(), RateError> {
        if arrival <= self.last_arrival {
            return Err(RateError::NonMonotoneArrival {
                arrival,
                previous: self.last_arrival,
            });
        }
        let gap = arrival - self.last_arrival;
        self.rate_prev = self.rate;
        self.rate = (packet_size_bits + self.srtt * self.rate_prev) / (self.srtt + gap);
        self.last_arrival = arrival;
        self.packets_seen += 1;
        Ok(())
    }

    /// Advances the EWMA: `w_k = sigma * w_k^(p) + (1 - sigma) * e_k`.
    pub fn update_ewma(&mut self, sigma: f64) -> Result<(), RateError> {
        if !(0.0..1.0).contains(&sigma) {
            return Err(RateError::BadEwmaWeight(sigma));
        }
        self.ewma_prev = self.ewma;
        self.ewma = sigma * self.ewma_prev + (1.0 - sigma) * self.rate;
        Ok(())
    }

    /// Folds an RTT sample measured from a timestamp echo. The first sample
    /// replaces the configured base RTT outright.
    pub fn update_srtt(&mut self, sample: f64) -> Result<(), RateError> {
        if sample <= 0.0 {
            return Err(RateError::BadRttSample(sample));
        }
        if self.srtt_initialized {
            self.srtt = (1.0 - SMOOTHING_GAIN) * self.srtt + SMOOTHING_GAIN * sample;
        } else {
            self.srtt = sample;
            self.srtt_initialized = true;
        }
        Ok(())
    }

    /// Folds one inter-arrival gap into `t_k^(s)`.
    pub fn update_smoothed_arrival(&mut self, gap: f64) -> Result<(), RateError> {
        if gap < 0.0 {
            return Err(RateError::NegativeGap(gap));
        }
        if self.gap_initialized {
            self.smoothed_gap = (1.0 - SMOOTHING_GAIN) * self.smoothed_gap + SMOOTHING_GAIN * gap;
        } else {
            self.smoothed_gap = gap;
            self.gap_initialized = true;
        }
        Ok(())
    }
}

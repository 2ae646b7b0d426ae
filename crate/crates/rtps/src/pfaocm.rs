//! Popularity-aware flow and acknowledgment overhead control.
//!
//! Maintains, per flow, the advertised window `a_k` (the bandwidth lever)
//! and the delayed-ACK window `da_k` (the overhead lever). The advertised
//! window chases the flow's desired rate inside a tolerance band; the delay
//! window accumulates fractional growth driven by how far the consumable
//! link sits from its historical maximum.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PfaocmError {
    #[error("sigma {0} outside [0, 1)")]
    BadSigma(f64),
    #[error("theta {0} outside (0, 1]")]
    BadTheta(f64),
    #[error("phi {0} must be at least 1")]
    BadPhi(f64),
    #[error("tolerance factor {0} must be positive")]
    BadTolerance(f64),
}

/// Window-engine constants. Defaults carry the protocol's published values.
#[derive(Debug, Clone, Copy)]
pub struct PfaocmParams {
    /// Rate band half-width and EWMA weight.
    pub sigma: f64,
    /// Consistency factor damping advertised-window growth.
    pub theta: f64,
    /// Congestion-detection multiplier on the historical maximum rate.
    pub phi: f64,
    /// Timer tolerance factor `f` in the effective timeout.
    pub tolerance: f64,
}

impl Default for PfaocmParams {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            theta: 0.7,
            phi: 3.0,
            tolerance: 1.0,
        }
    }
}

impl PfaocmParams {
    pub fn validate(&self) -> Result<(), PfaocmError> {
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(PfaocmError::BadSigma(self.sigma));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(PfaocmError::BadTheta(self.theta));
        }
        if self.phi < 1.0 {
            return Err(PfaocmError::BadPhi(self.phi));
        }
        if self.tolerance <= 0.0 {
            return Err(PfaocmError::BadTolerance(self.tolerance));
        }
        Ok(())
    }
}

/// Whether a data packet is acknowledged immediately or absorbed into the
/// delay window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckDecision {
    AckNow,
    Delay,
}

/// Per-flow window state. Single-writer: only the owning receiver mutates it.
#[derive(Debug, Clone)]
pub struct WindowState {
    /// Advertised window in whole packets, never below 1.
    pub awnd: u32,
    awnd_prev: u32,
    /// Delayed-ACK window; real-valued so sub-unit growth accumulates.
    pub da: f64,
    da_prev: f64,
    /// Unacknowledged in-order data packets absorbed so far.
    pub ac: u32,
    /// EWMA rate at the last forced acknowledgment; reference for the rate
    /// trend `delta_k`.
    w_ref: f64,
    /// Latest estimation ratio `e^(r)`.
    pub e_ratio: f64,
    /// Latest increment/decrement factor, in `[0, 1]`.
    pub factor: f64,
}

impl Default for WindowState {
    fn default() -> Self {
        Self::new()
    }
}

impl WindowState {
    pub fn new() -> Self {
        Self {
            awnd: 1,
            awnd_prev: 1,
            da: 0.0,
            da_prev: 0.0,
            ac: 0,
            w_ref: 0.0,
            e_ratio: 0.0,
            factor: 0.0,
        }
    }

    pub fn rate_trend(&self, w: f64) -> f64 {
        w - self.w_ref
    }
}

/// Packets needed to carry `rate` for one `srtt` at the given packet size.
pub fn packets_for_rate(rate: f64, srtt: f64, packet_bits: f64) -> f64 {
    rate * srtt / packet_bits
}

/// Moves the advertised window toward the desired rate. Holds inside the
/// band `[d_r (1 - sigma), d_r (1 + sigma)]`, grows below it by at least one
/// packet, shrinks above it by at least half a packet. The result is rounded
/// half-up to whole packets and clamped to 1.
pub fn adjust_advertised_window(
    ws: &mut WindowState,
    params: &PfaocmParams,
    w: f64,
    d_r: f64,
    srtt: f64,
    packet_bits: f64,
) {
    let low = d_r * (1.0 - params.sigma);
    let high = d_r * (1.0 + params.sigma);
    let raw = if w < low {
        let a_d = params.theta * packets_for_rate(d_r - w, srtt, packet_bits);
        a_d.max(1.0) + f64::from(ws.awnd_prev)
    } else if w > high {
        let a_d = 0.5 + packets_for_rate(w - d_r, srtt, packet_bits);
        f64::from(ws.awnd_prev) - a_d
    } else {
        f64::from(ws.awnd_prev)
    };
    let rounded = raw.round();
    ws.awnd = if rounded < 1.0 { 1 } else { rounded as u32 };
    ws.awnd_prev = ws.awnd;
}

/// Estimation ratio and increment/decrement factor from the consumable link
/// `c` and the historical maximum `me`.
pub fn compute_factor(params: &PfaocmParams, c: f64, me: f64) -> (f64, f64) {
    let e_ratio = if c > me * params.phi {
        (c - me) / c
    } else {
        1.0 - params.phi
    };
    let factor = ((params.phi - 1.0) + e_ratio) / params.phi;
    (e_ratio, factor)
}

/// Grows the delay window by `1 - factor`, clamped to the advertised window.
pub fn grow_delay_window(ws: &mut WindowState) {
    ws.da = f64::from(ws.awnd).min((1.0 - ws.factor) + ws.da_prev);
    ws.da_prev = ws.da;
}

/// Shrinks the delay window by `1 - factor`, floored at zero.
pub fn shrink_delay_window(ws: &mut WindowState) {
    ws.da = (ws.da_prev - (1.0 - ws.factor)).max(0.0);
    ws.da_prev = ws.da;
}

/// Effective delayed-ACK timeout: `t_s * (2 + f)`. Two smoothed arrival
/// intervals cover the expected next packet, `f` adds tolerance.
pub fn effective_timeout(smoothed_gap: f64, tolerance: f64) -> f64 {
    smoothed_gap * (2.0 + tolerance)
}

/// Loss/popularity/timeout acknowledgment path. Shrinks or clears the delay
/// window depending on the rate trend, resets the unacked counter, and
/// always emits an acknowledgment.
pub fn lpda(ws: &mut WindowState, w: f64) -> AckDecision {
    let delta = ws.rate_trend(w);
    if delta > 0.0 {
        shrink_delay_window(ws);
    } else {
        ws.da = 0.0;
    }
    ws.da_prev = ws.da;
    ws.ac = 0;
    ws.w_ref = w;
    AckDecision::AckNow
}

/// In-interval arrival path. While fewer than `da` packets are pending the
/// packet is absorbed, unless it is out of order or from the most popular
/// flow running under its band, which escalates to `lpda`. Once the counter
/// reaches `da` an acknowledgment goes out and the delay window adapts to
/// the flow's position against its band.
pub fn ida(
    ws: &mut WindowState,
    params: &PfaocmParams,
    w: f64,
    d_r: f64,
    out_of_order: bool,
    top_popular: bool,
) -> AckDecision {
    if f64::from(ws.ac) < ws.da {
        if out_of_order || (top_popular && w < d_r * (1.0 - params.sigma)) {
            return lpda(ws, w);
        }
        ws.ac += 1;
        return AckDecision::Delay;
    }
    ws.ac = 0;
    let delta = ws.rate_trend(w);
    if w >= d_r * (1.0 + params.sigma) {
        if delta > 0.0 {
            grow_delay_window(ws);
        } else {
            shrink_delay_window(ws);
        }
    } else if w < d_r * (1.0 - params.sigma) {
        if delta > 0.0 {
            shrink_delay_window(ws);
        } else {
            ws.da = 0.0;
        }
    }
    ws.da_prev = ws.da;
    AckDecision::AckNow
}

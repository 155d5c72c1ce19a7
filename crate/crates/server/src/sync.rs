//! Client-side clock synchronisation from PING/PONG round trips.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyncError {
    #[error("no PING/PONG samples")]
    NoSamples,
    #[error("realtime factor must be positive")]
    BadRealtimeFactor,
}

/// One round trip: client wall time at send, server simulation timestamp in
/// the PONG, client wall time at receipt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSample {
    pub send_wall: f64,
    pub server_ts: f64,
    pub recv_wall: f64,
}

/// Estimates the wall-clock instant at which the simulation clock read zero,
/// so that `sim ≈ realtime_factor · (wall − epoch)`.
///
/// Each sample assumes the server stamped its reply at the round-trip
/// midpoint; the median over samples rejects outliers.
pub fn sync_time(samples: &[TimeSample], realtime_factor: f64) -> Result<f64, SyncError> {
    if samples.is_empty() {
        return Err(SyncError::NoSamples);
    }
    if !(realtime_factor > 0.0 && realtime_factor.is_finite()) {
        return Err(SyncError::BadRealtimeFactor);
    }
    let mut est: Vec<f64> =
        samples.iter().map(|s| 0.5 * (s.send_wall + s.recv_wall) - s.server_ts / realtime_factor).collect();
    est.sort_by(f64::total_cmp);
    let n = est.len();
    Ok(if n % 2 == 1 { est[n / 2] } else { 0.5 * (est[n / 2 - 1] + est[n / 2]) })
}

/// Simulation time predicted for a wall-clock instant.
pub fn predict_sim_time(epoch: f64, realtime_factor: f64, wall: f64) -> f64 {
    realtime_factor * (wall - epoch)
}

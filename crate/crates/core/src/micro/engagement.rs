use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::error::Result;
use crate::model::ControlParams;

/// The instant a cruising vehicle's gap first closes to the critical spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngagementEvent {
    /// Position of the vehicle in the platoon (leader = 0).
    pub index: usize,
    pub vehicle_id: usize,
    pub t: f64,
    /// Position of the engaging vehicle at `t`.
    pub x: f64,
}

const TIME_TOL: f64 = 1e-9;

/// Finds, for each follower that starts with a gap above `s_c`, the first time
/// its gap reaches `s_c`. The sampled gap is bracketed and the root refined by
/// bisection on the cubic Hermite interpolant of both positions.
///
/// `trajectories` must be in platoon order, leader first.
pub fn detect_engagement(
    trajectories: &[Trajectory],
    params: &ControlParams,
) -> Result<Vec<EngagementEvent>> {
    let s_c = params.critical_spacing();
    let mut events = Vec::new();
    for (i, pair) in trajectories.windows(2).enumerate() {
        let (lead, follower) = (&pair[0], &pair[1]);
        let gap = |t: f64| -> Result<f64> {
            Ok(lead.hermite_position(t)? - follower.hermite_position(t)?)
        };
        let samples = &follower.samples;
        let usable = samples.iter().take_while(|s| lead.covers(s.t));
        let mut prev: Option<(f64, f64)> = None;
        for s in usable {
            let g = gap(s.t)? - s_c;
            match prev {
                None if g <= 0.0 => break, // already engaged
                Some((t_lo, _)) if g <= 0.0 => {
                    let (mut lo, mut hi) = (t_lo, s.t);
                    while hi - lo > TIME_TOL {
                        let mid = 0.5 * (lo + hi);
                        if gap(mid)? - s_c > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let t = 0.5 * (lo + hi);
                    events.push(EngagementEvent {
                        index: i + 1,
                        vehicle_id: follower.vehicle_id,
                        t,
                        x: follower.hermite_position(t)?,
                    });
                    break;
                }
                _ => prev = Some((s.t, g)),
            }
        }
    }
    Ok(events)
}

//! Disturbance-propagation paths on the time-space plane: characteristic
//! waves traced through a platoon, the constant-speed baseline, shock fronts
//! and engagement fronts of the free-flow to congestion transition.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::micro::{detect_engagement, EngagementEvent, Trajectory};
use crate::model::{regime_of, ControlParams, TrafficState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathKind {
    Characteristic,
    ConstantSpeed,
    Shock,
    Engagement,
}

impl PathKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PathKind::Characteristic => "characteristic",
            PathKind::ConstantSpeed => "constant-speed",
            PathKind::Shock => "shock",
            PathKind::Engagement => "engagement",
        }
    }
}

/// A point where a path meets a vehicle trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    /// Platoon position of the crossed vehicle (leader = 0).
    pub index: usize,
    pub vehicle_id: usize,
    pub t: f64,
    pub x: f64,
    /// Speed of the crossed vehicle at `t`.
    pub v: f64,
}

/// A path starting on one trajectory and crossing the vehicles behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct WavePath {
    pub kind: PathKind,
    pub origin: Crossing,
    pub crossings: Vec<Crossing>,
    /// True when the path left the time window (or was stopped by a barrier)
    /// before reaching the last vehicle.
    pub truncated: bool,
}

impl WavePath {
    /// Origin followed by every crossing.
    pub fn points(&self) -> impl Iterator<Item = &Crossing> {
        std::iter::once(&self.origin).chain(self.crossings.iter())
    }

    /// Speeds sampled along the path, origin first.
    pub fn speeds(&self) -> Vec<f64> {
        self.points().map(|c| c.v).collect()
    }
}

/// A straight discontinuity in the time-space plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockSegment {
    /// Upstream state.
    pub left: TrafficState,
    /// Downstream state.
    pub right: TrafficState,
    pub speed: f64,
    pub t_start: f64,
    pub x_start: f64,
    pub t_end: f64,
}

impl ShockSegment {
    pub fn position(&self, t: f64) -> f64 {
        self.x_start + self.speed * (t - self.t_start)
    }
}

/// `W = v_{n-1} - k_v (x_{n-1} - x_n)` with `k_v` gated by the follower's regime.
pub fn pair_wave_speed(
    t: f64,
    leader: &Trajectory,
    follower: &Trajectory,
    params: &ControlParams,
) -> Result<f64> {
    let l = leader.sample_at(t)?;
    let f = follower.sample_at(t)?;
    let s = l.x - f.x;
    let state = TrafficState::from_spacing(s, f.v)?;
    let (_, k_v) = regime_of(state, params, params.speed_tol)?.gains(params);
    Ok(l.v - k_v * s)
}

fn crossing_on(trajs: &[Trajectory], index: usize, t: f64) -> Result<Crossing> {
    let s = trajs[index].sample_at(t)?;
    Ok(Crossing {
        index,
        vehicle_id: trajs[index].vehicle_id,
        t,
        x: s.x,
        v: s.v,
    })
}

/// Common time window of a set of trajectories.
fn window(trajs: &[Trajectory]) -> (f64, f64) {
    let start = trajs
        .iter()
        .map(Trajectory::start_time)
        .fold(f64::MIN, f64::max);
    let end = trajs
        .iter()
        .map(Trajectory::end_time)
        .fold(f64::MAX, f64::min);
    (start, end)
}

/// Explicit-Euler path tracer. `speed(t, k)` gives the path speed while the
/// next vehicle to be crossed is `k`. Within one step both the path and the
/// (linearly interpolated) trajectory are straight, and the crossing is found
/// by bisection on their difference.
fn trace<F>(
    kind: PathKind,
    origin: Crossing,
    trajs: &[Trajectory],
    mut speed: F,
    barrier: Option<&ShockSegment>,
) -> Result<WavePath>
where
    F: FnMut(f64, usize) -> Result<f64>,
{
    let dt = trajs[origin.index].dt;
    let mut path = WavePath {
        kind,
        origin,
        crossings: Vec::new(),
        truncated: false,
    };
    let mut next = origin.index + 1;
    let (mut t, mut x) = (origin.t, origin.x);
    let (_, t_end) = window(&trajs[origin.index..]);
    while next < trajs.len() {
        let traj = &trajs[next];
        // a vehicle that has not appeared yet (cut-in) is simply waited for
        if !traj.covers(t) && t > traj.end_time() {
            path.truncated = true;
            return Ok(path);
        }
        let h = dt.min(t_end - t);
        if h <= 1e-12 {
            path.truncated = true;
            return Ok(path);
        }
        let w = speed(t, next)?;
        let t1 = t + h;
        let x1 = x + w * h;
        if traj.covers(t) && traj.covers(t1) {
            let gap0 = x - traj.sample_at(t)?.x;
            let gap1 = x1 - traj.sample_at(t1)?.x;
            if gap0 > 0.0 && gap1 <= 0.0 {
                let (mut lo, mut hi) = (t, t1);
                let f = |tt: f64| -> Result<f64> { Ok(x + w * (tt - t) - traj.sample_at(tt)?.x) };
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid)? > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-12 {
                        break;
                    }
                }
                let tc = 0.5 * (lo + hi);
                let c = crossing_on(trajs, next, tc)?;
                if let Some(b) = barrier {
                    if c.x <= b.position(tc) {
                        path.truncated = true;
                        return Ok(path);
                    }
                }
                path.crossings.push(c);
                t = tc;
                x = c.x;
                next += 1;
                continue;
            }
        }
        if let Some(b) = barrier {
            if x1 <= b.position(t1) {
                path.truncated = true;
                return Ok(path);
            }
        }
        t = t1;
        x = x1;
    }
    Ok(path)
}

/// Traces `dx/dt = W(t)` from a point on trajectory `origin_index` at time
/// `t0`, where `W` is the pair wave speed of (last crossed vehicle, next vehicle).
pub fn trace_characteristic_path(
    t0: f64,
    origin_index: usize,
    trajs: &[Trajectory],
    params: &ControlParams,
) -> Result<WavePath> {
    trace_characteristic_path_bounded(t0, origin_index, trajs, params, None)
}

/// As [`trace_characteristic_path`], stopping once the path falls on or behind
/// the given shock line.
pub fn trace_characteristic_path_bounded(
    t0: f64,
    origin_index: usize,
    trajs: &[Trajectory],
    params: &ControlParams,
    barrier: Option<&ShockSegment>,
) -> Result<WavePath> {
    check_origin(origin_index, trajs)?;
    let origin = crossing_on(trajs, origin_index, t0)?;
    trace(
        PathKind::Characteristic,
        origin,
        trajs,
        |t, k| pair_wave_speed(t, &trajs[k - 1], &trajs[k], params),
        barrier,
    )
}

/// Straight path of slope `w` from a point on trajectory `origin_index` at `t0`.
pub fn constant_speed_path(
    t0: f64,
    origin_index: usize,
    trajs: &[Trajectory],
    w: f64,
) -> Result<WavePath> {
    check_origin(origin_index, trajs)?;
    let origin = crossing_on(trajs, origin_index, t0)?;
    trace(PathKind::ConstantSpeed, origin, trajs, |_, _| Ok(w), None)
}

fn check_origin(origin_index: usize, trajs: &[Trajectory]) -> Result<()> {
    if origin_index >= trajs.len() {
        return Err(Error::InvalidParameter(format!(
            "origin vehicle {origin_index} outside a platoon of {}",
            trajs.len()
        )));
    }
    Ok(())
}

/// Origin times `start, start + spacing, ...` strictly before `end`.
pub fn origin_times(start: f64, end: f64, spacing: f64) -> Result<Vec<f64>> {
    if !(spacing > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "origin spacing must be > 0, got {spacing}"
        )));
    }
    let n = ((end - start) / spacing - 1e-9).ceil().max(0.0) as usize;
    Ok((0..n).map(|k| start + k as f64 * spacing).collect())
}

/// Rankine-Hugoniot speed of a mass discontinuity, `c = [rho v] / [rho]`.
pub fn shock_speed(left: TrafficState, right: TrafficState) -> Result<f64> {
    if left.rho == right.rho {
        return Err(Error::DegenerateJump(left.rho));
    }
    Ok((right.flow() - left.flow()) / (right.rho - left.rho))
}

/// Segment of the engagement front between two consecutive engagement points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrontSegment {
    pub from: EngagementEvent,
    pub to: EngagementEvent,
    /// `(x_{i-1} - x_i) / (t_{i-1} - t_i)`; infinite when the times coincide.
    pub speed: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngagementFront {
    pub events: Vec<EngagementEvent>,
    pub segments: Vec<FrontSegment>,
}

pub fn engagement_front(events: &[EngagementEvent]) -> Result<EngagementFront> {
    if events.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "an engagement front needs at least 2 events, got {}",
            events.len()
        )));
    }
    let segments = events
        .windows(2)
        .map(|w| {
            let dt = w[0].t - w[1].t;
            let dx = w[0].x - w[1].x;
            let degenerate = dt == 0.0;
            let speed = if degenerate {
                f64::INFINITY.copysign(dx)
            } else {
                dx / dt
            };
            FrontSegment {
                from: w[0],
                to: w[1],
                speed,
                degenerate,
            }
        })
        .collect();
    Ok(EngagementFront {
        events: events.to_vec(),
        segments,
    })
}

/// Settings for the composite transition construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionOptions {
    /// Equilibrium speed of the congested state reached after the transition.
    pub v_e: f64,
    /// Spacing between characteristic origins on the leader [s].
    pub origin_spacing: f64,
    /// A vehicle counts as settled once its spacing is within this margin of `s_e` [m].
    pub settle_margin: f64,
    /// Latest origin time; `None` uses the end of the data minus the margin
    /// needed for paths to reach the last vehicle.
    pub origin_end: Option<f64>,
}

impl TransitionOptions {
    pub fn new(v_e: f64) -> Self {
        Self {
            v_e,
            origin_spacing: 1.0,
            settle_margin: 0.1,
            origin_end: None,
        }
    }
}

/// Geometry of a free-flow to congestion transition.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTransition {
    pub events: Vec<EngagementEvent>,
    pub front: Option<EngagementFront>,
    /// Engagement points joined as one path (origin = first engagement).
    pub engagement_path: Option<WavePath>,
    pub shock: Option<ShockSegment>,
    pub shock_path: Option<WavePath>,
    /// First time the leader/follower spacing settles near `s_e`.
    pub launch_time: Option<f64>,
    pub characteristics: Vec<WavePath>,
}

impl PhaseTransition {
    /// Every path of the composite construction.
    pub fn paths(&self) -> Vec<WavePath> {
        let mut out = Vec::new();
        out.extend(self.engagement_path.iter().cloned());
        out.extend(self.shock_path.iter().cloned());
        out.extend(self.characteristics.iter().cloned());
        out
    }
}

/// Builds the engagement front, the shock between the cruise state
/// `(1/s_c, v_f)` and the congested state `(1/s_e, v_e)` launched from the
/// first engagement point, and characteristic paths launched on the leader once
/// the first follower's spacing has settled near `s_e`. A characteristic path
/// ends where the shock line overtakes it.
pub fn trace_phase_transition(
    trajs: &[Trajectory],
    params: &ControlParams,
    opts: &TransitionOptions,
) -> Result<PhaseTransition> {
    if trajs.len() < 2 {
        return Err(Error::InvalidParameter(
            "a transition needs a leader and at least one follower".into(),
        ));
    }
    let events = detect_engagement(trajs, params)?;
    let s_e = params.desired_spacing(opts.v_e);
    let s_c = params.critical_spacing();

    let front = if events.len() >= 2 {
        Some(engagement_front(&events)?)
    } else {
        None
    };
    let engagement_path = events.first().map(|first| {
        let as_crossing =
            |e: &EngagementEvent| -> Result<Crossing> { crossing_on(trajs, e.index, e.t) };
        Ok::<_, Error>(WavePath {
            kind: PathKind::Engagement,
            origin: as_crossing(first)?,
            crossings: events[1..].iter().map(as_crossing).collect::<Result<_>>()?,
            truncated: events.last().map(|e| e.index) != Some(trajs.len() - 1),
        })
    });
    let engagement_path = engagement_path.transpose()?;

    let (shock, shock_path) = match events.first() {
        Some(first) => {
            let left = TrafficState::from_spacing(s_c, params.v_free)?;
            let right = TrafficState::from_spacing(s_e, opts.v_e)?;
            let speed = shock_speed(left, right)?;
            let path = constant_speed_path(first.t, first.index, trajs, speed)?;
            let path = WavePath {
                kind: PathKind::Shock,
                ..path
            };
            let t_end = path.crossings.last().map_or(first.t, |c| c.t);
            let seg = ShockSegment {
                left,
                right,
                speed,
                t_start: first.t,
                x_start: first.x,
                t_end,
            };
            (Some(seg), Some(path))
        }
        None => (None, None),
    };

    // launch once the first follower's spacing settles
    let (t_start, t_stop) = window(trajs);
    let mut launch_time = None;
    for s in &trajs[1].samples {
        if s.t < t_start {
            continue;
        }
        let gap = trajs[0].sample_at(s.t)?.x - s.x;
        if gap <= s_e + opts.settle_margin {
            launch_time = Some(s.t);
            break;
        }
    }
    let mut characteristics = Vec::new();
    if let Some(t_launch) = launch_time {
        let end = opts.origin_end.unwrap_or(t_stop);
        for t0 in origin_times(t_launch, end, opts.origin_spacing)? {
            let path = trace_characteristic_path_bounded(t0, 0, trajs, params, shock.as_ref())?;
            characteristics.push(path);
        }
    }
    Ok(PhaseTransition {
        events,
        front,
        engagement_path,
        shock,
        shock_path,
        launch_time,
        characteristics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::{simulate_platoon, OscillationSpec, Scenario, VehicleSample};
    use approx::assert_abs_diff_eq;

    fn equilibrium_platoon(n: usize, duration: f64) -> (ControlParams, Vec<Trajectory>) {
        let p = ControlParams::default();
        let sc = Scenario::oscillating(p, n, OscillationSpec::steady(10.0), duration);
        (p, simulate_platoon(&sc).unwrap())
    }

    #[test]
    fn pair_wave_speed_examples() {
        let (p, trajs) = equilibrium_platoon(2, 5.0);
        assert_abs_diff_eq!(
            pair_wave_speed(2.0, &trajs[0], &trajs[1], &p).unwrap(),
            -13.8,
            epsilon = 1e-9
        );
        let zero = ControlParams { k_v: 0.0, ..p };
        assert_abs_diff_eq!(
            pair_wave_speed(2.0, &trajs[0], &trajs[1], &zero).unwrap(),
            10.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn equilibrium_characteristic_crosses_at_constant_intervals() {
        let (p, trajs) = equilibrium_platoon(4, 20.0);
        let path = trace_characteristic_path(5.0, 0, &trajs, &p).unwrap();
        assert_eq!(path.crossings.len(), 3);
        assert!(!path.truncated);
        let mut prev = path.origin;
        for c in &path.crossings {
            assert_abs_diff_eq!(c.t - prev.t, 17.0 / 23.8, epsilon = 1e-9);
            // straight line of slope v_e - k_v x_e
            assert_abs_diff_eq!((c.x - prev.x) / (c.t - prev.t), -13.8, epsilon = 1e-9);
            prev = *c;
        }
    }

    #[test]
    fn single_pair_has_one_crossing() {
        let (p, trajs) = equilibrium_platoon(2, 10.0);
        assert_eq!(
            trace_characteristic_path(1.0, 0, &trajs, &p)
                .unwrap()
                .crossings
                .len(),
            1
        );
    }

    #[test]
    fn constant_speed_paths() {
        let (p, trajs) = equilibrium_platoon(4, 20.0);
        let base = constant_speed_path(5.0, 0, &trajs, p.congested_wave_speed()).unwrap();
        assert_eq!(base.crossings.len(), 3);
        for w in base.points().collect::<Vec<_>>().windows(2) {
            assert_abs_diff_eq!(w[1].t - w[0].t, 1.2, epsilon = 1e-9);
        }
        // a stationary path is crossed where each vehicle passes the origin position
        let still = constant_speed_path(5.0, 0, &trajs, 0.0).unwrap();
        for c in &still.crossings {
            assert_abs_diff_eq!(c.x, 50.0, epsilon = 1e-9);
            assert_abs_diff_eq!(c.t, 5.0 + 1.7 * c.index as f64, epsilon = 1e-9);
        }
        // baseline at W reproduces the characteristic
        let same = constant_speed_path(5.0, 0, &trajs, -13.8).unwrap();
        let ch = trace_characteristic_path(5.0, 0, &trajs, &p).unwrap();
        for (a, b) in same.crossings.iter().zip(&ch.crossings) {
            assert_abs_diff_eq!(a.t, b.t, epsilon = 1e-9);
            assert_abs_diff_eq!(a.x, b.x, epsilon = 1e-9);
        }
    }

    #[test]
    fn paths_leaving_the_window_are_truncated() {
        let (p, trajs) = equilibrium_platoon(4, 6.0);
        let path = trace_characteristic_path(5.0, 0, &trajs, &p).unwrap();
        assert!(path.truncated);
        assert_eq!(path.crossings.len(), 1);
    }

    #[test]
    fn shock_speed_examples() {
        let p = ControlParams::default();
        let l = TrafficState::from_spacing(19.4, 12.0).unwrap();
        let r = TrafficState::from_spacing(17.0, 10.0).unwrap();
        assert_abs_diff_eq!(shock_speed(l, r).unwrap(), -5.0 / 1.2, epsilon = 1e-12);
        let c = shock_speed(
            TrafficState::new(0.05, 12.0).unwrap(),
            TrafficState::new(0.08, 6.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(c, -4.0, epsilon = 1e-12);
        let c = shock_speed(
            TrafficState::new(0.02, 7.0).unwrap(),
            TrafficState::new(0.09, 7.0).unwrap(),
        )
        .unwrap();
        assert_abs_diff_eq!(c, 7.0, epsilon = 1e-12);
        assert!(shock_speed(l, l).is_err());
        assert_abs_diff_eq!(p.congested_wave_speed(), -4.1667, epsilon = 1e-4);
    }

    #[test]
    fn engagement_front_speeds() {
        let ev = |index, t, x| EngagementEvent {
            index,
            vehicle_id: index,
            t,
            x,
        };
        let front = engagement_front(&[ev(1, 4.0, 100.0), ev(2, 5.0, 80.0)]).unwrap();
        assert_abs_diff_eq!(front.segments[0].speed, -20.0, epsilon = 1e-12);
        let front = engagement_front(&[ev(1, 4.0, 100.0), ev(2, 4.0, 80.0)]).unwrap();
        assert!(front.segments[0].degenerate && front.segments[0].speed.is_infinite());
        assert!(engagement_front(&[ev(1, 4.0, 100.0)]).is_err());
    }

    #[test]
    fn origin_grid() {
        assert_eq!(origin_times(2.0, 5.0, 1.0).unwrap(), vec![2.0, 3.0, 4.0]);
        assert!(origin_times(2.0, 5.0, 0.0).is_err());
    }

    #[test]
    fn crossing_lies_on_trajectory() {
        let samples: Vec<VehicleSample> = (0..=100)
            .map(|k| VehicleSample {
                t: k as f64 * 0.1,
                x: 10.0 * k as f64 * 0.1,
                v: 10.0,
                a: 0.0,
            })
            .collect();
        let lead = Trajectory::new(0, 0.1, samples.clone()).unwrap();
        let follow = Trajectory::new(
            1,
            0.1,
            samples
                .iter()
                .map(|s| VehicleSample {
                    x: s.x - 17.0,
                    ..*s
                })
                .collect(),
        )
        .unwrap();
        let trajs = vec![lead, follow];
        let path = constant_speed_path(0.0, 0, &trajs, -5.0).unwrap();
        let c = path.crossings[0];
        assert_abs_diff_eq!(c.x, trajs[1].sample_at(c.t).unwrap().x, epsilon = 1e-12);
        assert_abs_diff_eq!(c.t, 17.0 / 15.0, epsilon = 1e-9);
    }
}

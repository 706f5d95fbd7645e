//! Microscopic ACC platoon simulation and exact vehicle-pair solutions.

mod engagement;
mod pair;
mod ring;
mod sim;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ControlParams;

pub use engagement::{detect_engagement, EngagementEvent};
pub use pair::{
    pair_state_analytic, spacing_analytic, LeadAcceleration, PairDynamics, PairErrorState,
};
pub use ring::{ring_setup, RingLayout};
pub use sim::simulate_platoon;

/// One sample of a vehicle trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleSample {
    pub t: f64,
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

/// Uniformly sampled vehicle trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub vehicle_id: usize,
    pub dt: f64,
    pub samples: Vec<VehicleSample>,
}

impl Trajectory {
    pub fn new(vehicle_id: usize, dt: f64, samples: Vec<VehicleSample>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "trajectory dt must be > 0, got {dt}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::Empty(format!("trajectory of vehicle {vehicle_id}")));
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParameter(format!(
                "trajectory of vehicle {vehicle_id} must have strictly increasing time"
            )));
        }
        Ok(Self {
            vehicle_id,
            dt,
            samples,
        })
    }

    pub fn start_time(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end_time(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn covers(&self, t: f64) -> bool {
        let eps = 1e-9 * self.dt.max(1.0);
        t >= self.start_time() - eps && t <= self.end_time() + eps
    }

    /// Index `k` of the sample interval `[t_k, t_{k+1}]` containing `t`, plus the
    /// interpolation weight.
    fn locate(&self, t: f64) -> Result<(usize, f64)> {
        if !self.covers(t) {
            return Err(Error::OutOfRange {
                vehicle: self.vehicle_id,
                t,
                start: self.start_time(),
                end: self.end_time(),
            });
        }
        let n = self.samples.len();
        if n == 1 {
            return Ok((0, 0.0));
        }
        let raw = ((t - self.start_time()) / self.dt).floor();
        let mut k = if raw < 0.0 {
            0
        } else {
            (raw as usize).min(n - 2)
        };
        // guard against rounding at sample boundaries
        while k > 0 && self.samples[k].t > t {
            k -= 1;
        }
        while k + 2 < n && self.samples[k + 1].t < t {
            k += 1;
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        Ok((k, w))
    }

    /// Linearly interpolated state at time `t`.
    pub fn sample_at(&self, t: f64) -> Result<VehicleSample> {
        let (k, w) = self.locate(t)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0]);
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        let lerp = |p: f64, q: f64| p + w * (q - p);
        Ok(VehicleSample {
            t,
            x: lerp(a.x, b.x),
            v: lerp(a.v, b.v),
            a: lerp(a.a, b.a),
        })
    }

    /// Position from the cubic Hermite interpolant that uses sampled speeds as slopes.
    pub fn hermite_position(&self, t: f64) -> Result<f64> {
        let (k, w) = self.locate(t)?;
        if self.samples.len() == 1 {
            return Ok(self.samples[0].x);
        }
        let (a, b) = (&self.samples[k], &self.samples[k + 1]);
        Ok(hermite(a.x, a.v, b.x, b.v, b.t - a.t, w))
    }

    pub fn speeds(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v).collect()
    }
}

/// Cubic Hermite on an interval of length `h`, evaluated at fraction `w`.
pub(crate) fn hermite(p0: f64, m0: f64, p1: f64, m1: f64, h: f64, w: f64) -> f64 {
    let w2 = w * w;
    let w3 = w2 * w;
    (2.0 * w3 - 3.0 * w2 + 1.0) * p0
        + (w3 - 2.0 * w2 + w) * h * m0
        + (-2.0 * w3 + 3.0 * w2) * p1
        + (w3 - w2) * h * m1
}

/// One sinusoidal component of the leader's position oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    /// Position amplitude [m].
    pub amplitude: f64,
    /// Angular frequency [rad/s].
    pub omega: f64,
    /// Phase [rad].
    pub phase: f64,
}

/// Leader motion `x0(t) = v_e t + sum_m A_m sin(w_m t + phi_m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationSpec {
    pub v_e: f64,
    #[serde(default)]
    pub modes: Vec<Mode>,
}

/// Position, speed and acceleration at an instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub x: f64,
    pub v: f64,
    pub a: f64,
}

impl OscillationSpec {
    pub fn steady(v_e: f64) -> Self {
        Self {
            v_e,
            modes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.modes {
            if !(m.omega > 0.0) || m.amplitude < 0.0 || !m.phase.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "invalid oscillation mode {m:?}"
                )));
            }
        }
        Ok(())
    }

    /// Equilibrium spacing `x_e = tau v_e + L`.
    pub fn equilibrium_spacing(&self, params: &ControlParams) -> f64 {
        params.desired_spacing(self.v_e)
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.omega).collect()
    }
}

/// Leader position, speed and acceleration from its oscillation spec.
pub fn leader_motion(spec: &OscillationSpec, t: f64) -> Kinematics {
    let mut k = Kinematics {
        x: spec.v_e * t,
        v: spec.v_e,
        a: 0.0,
    };
    for m in &spec.modes {
        let arg = m.omega * t + m.phase;
        let (s, c) = arg.sin_cos();
        k.x += m.amplitude * s;
        k.v += m.amplitude * m.omega * c;
        k.a -= m.amplitude * m.omega * m.omega * s;
    }
    k
}

/// Constant acceleration over `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelSegment {
    pub start: f64,
    pub end: f64,
    pub accel: f64,
}

/// Oscillation added on top of a maneuver from `onset` on. Position offsets are
/// shifted so the position stays continuous at the onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperposedOscillation {
    pub onset: f64,
    pub modes: Vec<Mode>,
}

/// Leader driving piecewise-constant acceleration segments, optionally with an
/// oscillation layered on after some onset time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Maneuver {
    #[serde(default)]
    pub x0: f64,
    pub v0: f64,
    #[serde(default)]
    pub segments: Vec<AccelSegment>,
    #[serde(default)]
    pub oscillation: Option<SuperposedOscillation>,
}

impl Maneuver {
    pub fn validate(&self) -> Result<()> {
        for s in &self.segments {
            if !(s.end > s.start) || !s.accel.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "invalid acceleration segment {s:?}"
                )));
            }
        }
        if let Some(osc) = &self.oscillation {
            OscillationSpec {
                v_e: 0.0,
                modes: osc.modes.clone(),
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let mut k = Kinematics {
            x: self.x0 + self.v0 * t,
            v: self.v0,
            a: 0.0,
        };
        for s in &self.segments {
            let len = s.end - s.start;
            let active = (t - s.start).clamp(0.0, len);
            k.v += s.accel * active;
            let integral = if t <= s.start {
                0.0
            } else if t <= s.end {
                0.5 * (t - s.start).powi(2)
            } else {
                0.5 * len * len + len * (t - s.end)
            };
            k.x += s.accel * integral;
            if t >= s.start && t < s.end {
                k.a += s.accel;
            }
        }
        if let Some(osc) = &self.oscillation {
            if t >= osc.onset {
                let tau = t - osc.onset;
                for m in &osc.modes {
                    let arg = m.omega * tau + m.phase;
                    let (sn, cs) = arg.sin_cos();
                    k.x += m.amplitude * (sn - m.phase.sin());
                    k.v += m.amplitude * m.omega * cs;
                    k.a -= m.amplitude * m.omega * m.omega * sn;
                }
            }
        }
        k
    }

    /// Leader acceleration as a piecewise-constant profile, when no oscillation is layered on.
    pub fn piecewise_acceleration(&self) -> Option<LeadAcceleration> {
        if self.oscillation.is_some() {
            return None;
        }
        let mut knots: Vec<f64> = self
            .segments
            .iter()
            .flat_map(|s| [s.start, s.end])
            .collect();
        knots.sort_by(|a, b| a.total_cmp(b));
        knots.dedup();
        let pieces = knots
            .iter()
            .map(|&t0| {
                let a = self
                    .segments
                    .iter()
                    .filter(|s| t0 >= s.start && t0 < s.end)
                    .map(|s| s.accel)
                    .sum();
                (t0, a)
            })
            .collect();
        Some(LeadAcceleration::PiecewiseConstant(pieces))
    }
}

/// How the platoon leader moves.
#[derive(Debug, Clone, PartialEq)]
pub enum LeaderMotion {
    Oscillation(OscillationSpec),
    Maneuver(Maneuver),
    /// Recorded trajectory, linearly interpolated.
    Recorded(Trajectory),
}

impl LeaderMotion {
    pub fn kinematics(&self, t: f64) -> Result<Kinematics> {
        Ok(match self {
            LeaderMotion::Oscillation(spec) => leader_motion(spec, t),
            LeaderMotion::Maneuver(m) => m.kinematics(t),
            LeaderMotion::Recorded(traj) => {
                let s = traj.sample_at(t)?;
                Kinematics {
                    x: s.x,
                    v: s.v,
                    a: s.a,
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    /// Open road behind an externally driven leader (vehicle 0).
    Open { leader: LeaderMotion },
    /// Closed ring of the given length; every vehicle runs the ACC law.
    Ring { length: f64 },
}

/// Initial placement of the vehicles that run the ACC law.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Followers at the leader's initial speed on the time-headway manifold.
    Equilibrium,
    /// Followers on their steady-state oscillation (needs an oscillating leader).
    SteadyOscillation,
    /// Followers at `speed` (leader's initial speed if `None`) with the given gaps,
    /// front to back.
    Gaps { gaps: Vec<f64>, speed: Option<f64> },
    /// Explicit positions and speeds of the ACC vehicles, front to back.
    Explicit {
        positions: Vec<f64>,
        speeds: Vec<f64>,
    },
}

/// A vehicle entering the platoon in front of platoon position `ahead_of`.
/// It appears `gap` metres behind its new leader, at the speed of the vehicle
/// it cuts in front of, with ACC engaged immediately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutIn {
    pub time: f64,
    pub ahead_of: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Integrator {
    /// Speed update followed by position update with the new speed.
    #[default]
    SemiImplicitEuler,
    /// Classical fourth-order Runge-Kutta.
    Rk4,
}

/// Full description of one platoon simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: ControlParams,
    /// Number of vehicles, leader included.
    pub vehicles: usize,
    pub topology: Topology,
    pub initial: InitialCondition,
    pub cut_ins: Vec<CutIn>,
    pub duration: f64,
    pub dt: f64,
    pub integrator: Integrator,
}

impl Scenario {
    /// Open-road platoon starting on equilibrium behind an oscillating leader.
    pub fn oscillating(
        params: ControlParams,
        vehicles: usize,
        spec: OscillationSpec,
        duration: f64,
    ) -> Self {
        Self {
            params,
            vehicles,
            topology: Topology::Open {
                leader: LeaderMotion::Oscillation(spec),
            },
            initial: InitialCondition::Equilibrium,
            cut_ins: Vec::new(),
            duration,
            dt: 0.01,
            integrator: Integrator::SemiImplicitEuler,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.vehicles < 2 {
            return Err(Error::InvalidParameter(format!(
                "a platoon needs at least 2 vehicles, got {}",
                self.vehicles
            )));
        }
        if !(self.duration > 0.0) || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter(
                "duration and dt must be > 0".into(),
            ));
        }
        match &self.topology {
            Topology::Open { leader } => match leader {
                LeaderMotion::Oscillation(spec) => spec.validate()?,
                LeaderMotion::Maneuver(m) => m.validate()?,
                LeaderMotion::Recorded(traj) => {
                    if traj.end_time() < self.duration - 1e-9 || traj.start_time() > 1e-9 {
                        return Err(Error::InvalidParameter(format!(
                            "recorded leader covers [{}, {}] but the simulation needs [0, {}]",
                            traj.start_time(),
                            traj.end_time(),
                            self.duration
                        )));
                    }
                }
            },
            Topology::Ring { length } => {
                if !(*length > 0.0) {
                    return Err(Error::InvalidParameter("ring length must be > 0".into()));
                }
                if !matches!(self.initial, InitialCondition::Explicit { .. }) {
                    return Err(Error::InvalidParameter(
                        "ring scenarios need explicit initial positions and speeds".into(),
                    ));
                }
                if !self.cut_ins.is_empty() {
                    return Err(Error::InvalidParameter(
                        "cut-ins are only supported on open roads".into(),
                    ));
                }
            }
        }
        for c in &self.cut_ins {
            if c.ahead_of == 0 || !(c.gap > 0.0) || c.time < 0.0 {
                return Err(Error::InvalidParameter(format!("invalid cut-in {c:?}")));
            }
        }
        Ok(())
    }
}

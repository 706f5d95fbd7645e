use super::{
    CutIn, InitialCondition, Integrator, LeaderMotion, Scenario, Topology, Trajectory,
    VehicleSample,
};
use crate::error::{Error, Result};
use crate::model::{acc_acceleration, ControlParams};
use crate::wave::follower_motion_closed_form;

/// Mutable state of the vehicles that run the ACC law.
struct Fleet {
    /// Vehicle ids front to back (excluding an external leader).
    ids: Vec<usize>,
    x: Vec<f64>,
    v: Vec<f64>,
}

/// What vehicle `i` of the fleet follows.
#[derive(Clone, Copy)]
struct LeadState {
    x: f64,
    v: f64,
}

struct Driver<'a> {
    params: &'a ControlParams,
    leader: Option<&'a LeaderMotion>,
    ring_length: Option<f64>,
}

impl Driver<'_> {
    fn lead_of(&self, i: usize, t: f64, x: &[f64], v: &[f64]) -> Result<LeadState> {
        if i > 0 {
            return Ok(LeadState {
                x: x[i - 1],
                v: v[i - 1],
            });
        }
        match (self.leader, self.ring_length) {
            (Some(leader), _) => {
                let k = leader.kinematics(t)?;
                Ok(LeadState { x: k.x, v: k.v })
            }
            (None, Some(len)) => {
                let last = x.len() - 1;
                Ok(LeadState {
                    x: x[last] + len,
                    v: v[last],
                })
            }
            (None, None) => unreachable!("driver without leader or ring"),
        }
    }

    fn accelerations(
        &self,
        t: f64,
        ids: &[usize],
        x: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) -> Result<()> {
        for i in 0..x.len() {
            let lead = self.lead_of(i, t, x, v)?;
            let gap = lead.x - x[i];
            if !(gap > 0.0) {
                return Err(Error::Collision {
                    t,
                    vehicle: ids[i],
                    gap,
                });
            }
            out[i] = acc_acceleration(gap, v[i], lead.v, self.params)?;
        }
        Ok(())
    }
}

/// Runs the platoon and returns one trajectory per vehicle, in final platoon
/// order (front to back). A cut-in vehicle gets the next free id and its
/// trajectory starts at the cut-in time.
pub fn simulate_platoon(scenario: &Scenario) -> Result<Vec<Trajectory>> {
    scenario.validate()?;
    let params = &scenario.params;
    let dt = scenario.dt;
    let steps = (scenario.duration / dt).round() as usize;

    let (leader, ring_length) = match &scenario.topology {
        Topology::Open { leader } => (Some(leader), None),
        Topology::Ring { length } => (None, Some(*length)),
    };
    let driver = Driver {
        params,
        leader,
        ring_length,
    };

    let mut fleet = initial_fleet(scenario)?;
    let mut next_id = scenario.vehicles;
    let mut records: Vec<Vec<VehicleSample>> =
        vec![Vec::with_capacity(steps + 1); scenario.vehicles];

    let mut cut_ins: Vec<CutIn> = scenario.cut_ins.clone();
    cut_ins.sort_by(|a, b| a.time.total_cmp(&b.time));
    let mut pending = cut_ins.into_iter().peekable();

    let mut acc = vec![0.0; fleet.x.len()];
    for k in 0..=steps {
        let t = k as f64 * dt;
        while let Some(c) = pending.peek().copied() {
            if t + 1e-9 < c.time {
                break;
            }
            pending.next();
            apply_cut_in(&driver, &mut fleet, c, t, next_id)?;
            records.push(Vec::with_capacity(steps + 1 - k));
            next_id += 1;
            acc.resize(fleet.x.len(), 0.0);
        }

        driver.accelerations(t, &fleet.ids, &fleet.x, &fleet.v, &mut acc)?;
        if let Some(leader) = leader {
            let lk = leader.kinematics(t)?;
            records[0].push(VehicleSample {
                t,
                x: lk.x,
                v: lk.v,
                a: lk.a,
            });
        }
        for (i, &id) in fleet.ids.iter().enumerate() {
            records[id].push(VehicleSample {
                t,
                x: fleet.x[i],
                v: fleet.v[i],
                a: acc[i],
            });
        }
        if k == steps {
            break;
        }
        match scenario.integrator {
            Integrator::SemiImplicitEuler => {
                for ((x, v), a) in fleet.x.iter_mut().zip(fleet.v.iter_mut()).zip(&acc) {
                    *v += a * dt;
                    *x += *v * dt;
                }
            }
            Integrator::Rk4 => rk4_step(&driver, &mut fleet, t, dt, &acc)?,
        }
    }

    let mut order = Vec::with_capacity(next_id);
    if leader.is_some() {
        order.push(0);
    }
    order.extend(fleet.ids.iter().copied());
    order
        .into_iter()
        .map(|id| Trajectory::new(id, dt, std::mem::take(&mut records[id])))
        .collect()
}

fn rk4_step(driver: &Driver<'_>, fleet: &mut Fleet, t: f64, dt: f64, a1: &[f64]) -> Result<()> {
    let n = fleet.x.len();
    let (x0, v0) = (fleet.x.clone(), fleet.v.clone());
    let stage = |xs: &[f64], vs: &[f64], tt: f64| -> Result<Vec<f64>> {
        let mut a = vec![0.0; n];
        driver.accelerations(tt, &fleet.ids, xs, vs, &mut a)?;
        Ok(a)
    };
    let k1x = v0.clone();
    let k1v = a1.to_vec();
    let x2: Vec<f64> = (0..n).map(|i| x0[i] + 0.5 * dt * k1x[i]).collect();
    let v2: Vec<f64> = (0..n).map(|i| v0[i] + 0.5 * dt * k1v[i]).collect();
    let k2v = stage(&x2, &v2, t + 0.5 * dt)?;
    let k2x = v2;
    let x3: Vec<f64> = (0..n).map(|i| x0[i] + 0.5 * dt * k2x[i]).collect();
    let v3: Vec<f64> = (0..n).map(|i| v0[i] + 0.5 * dt * k2v[i]).collect();
    let k3v = stage(&x3, &v3, t + 0.5 * dt)?;
    let k3x = v3;
    let x4: Vec<f64> = (0..n).map(|i| x0[i] + dt * k3x[i]).collect();
    let v4: Vec<f64> = (0..n).map(|i| v0[i] + dt * k3v[i]).collect();
    let k4v = stage(&x4, &v4, t + dt)?;
    let k4x = v4;
    for i in 0..n {
        fleet.x[i] = x0[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
        fleet.v[i] = v0[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
    }
    Ok(())
}

fn apply_cut_in(
    driver: &Driver<'_>,
    fleet: &mut Fleet,
    cut: CutIn,
    t: f64,
    id: usize,
) -> Result<()> {
    // `ahead_of` counts platoon positions with the leader at 0.
    let idx = cut.ahead_of - 1;
    if idx >= fleet.x.len() {
        return Err(Error::InvalidParameter(format!(
            "cut-in ahead of platoon position {} but the platoon has {} followers",
            cut.ahead_of,
            fleet.x.len()
        )));
    }
    let lead = driver.lead_of(idx, t, &fleet.x, &fleet.v)?;
    let x_new = lead.x - cut.gap;
    let v_new = fleet.v[idx];
    let rear_gap = x_new - fleet.x[idx];
    if !(rear_gap > 0.0) {
        return Err(Error::Collision {
            t,
            vehicle: fleet.ids[idx],
            gap: rear_gap,
        });
    }
    fleet.ids.insert(idx, id);
    fleet.x.insert(idx, x_new);
    fleet.v.insert(idx, v_new);
    Ok(())
}

fn initial_fleet(scenario: &Scenario) -> Result<Fleet> {
    let params = &scenario.params;
    match &scenario.topology {
        Topology::Ring { .. } => {
            let InitialCondition::Explicit { positions, speeds } = &scenario.initial else {
                unreachable!("validated");
            };
            check_len(positions.len(), speeds.len(), scenario.vehicles)?;
            Ok(Fleet {
                ids: (0..scenario.vehicles).collect(),
                x: positions.clone(),
                v: speeds.clone(),
            })
        }
        Topology::Open { leader } => {
            let n = scenario.vehicles - 1;
            let ids: Vec<usize> = (1..=n).collect();
            let lead0 = leader.kinematics(0.0)?;
            let (x, v) = match &scenario.initial {
                InitialCondition::Equilibrium => {
                    let v0 = lead0.v;
                    let s = params.desired_spacing(v0);
                    (
                        (1..=n).map(|i| lead0.x - i as f64 * s).collect(),
                        vec![v0; n],
                    )
                }
                InitialCondition::SteadyOscillation => {
                    let LeaderMotion::Oscillation(spec) = leader else {
                        return Err(Error::InvalidParameter(
                            "steady-oscillation start needs an oscillating leader".into(),
                        ));
                    };
                    (1..=n)
                        .map(|i| follower_motion_closed_form(i, spec, params, 0.0))
                        .unzip()
                }
                InitialCondition::Gaps { gaps, speed } => {
                    if gaps.len() != n {
                        return Err(Error::InvalidParameter(format!(
                            "expected {n} gaps, got {}",
                            gaps.len()
                        )));
                    }
                    let mut xs = Vec::with_capacity(n);
                    let mut front = lead0.x;
                    for g in gaps {
                        front -= g;
                        xs.push(front);
                    }
                    (xs, vec![speed.unwrap_or(lead0.v); n])
                }
                InitialCondition::Explicit { positions, speeds } => {
                    check_len(positions.len(), speeds.len(), n)?;
                    (positions.clone(), speeds.clone())
                }
            };
            Ok(Fleet { ids, x, v })
        }
    }
}

fn check_len(np: usize, nv: usize, expected: usize) -> Result<()> {
    if np != expected || nv != expected {
        return Err(Error::InvalidParameter(format!(
            "expected {expected} initial positions and speeds, got {np} and {nv}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::micro::{ring_setup, AccelSegment, Maneuver, Mode, OscillationSpec};
    use crate::model::ControlParams;
    use approx::assert_abs_diff_eq;

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let p = ControlParams::default();
        let sc = Scenario::oscillating(p, 4, OscillationSpec::steady(10.0), 100.0);
        let trajs = simulate_platoon(&sc).unwrap();
        assert_eq!(trajs.len(), 4);
        assert_eq!(trajs[1].len(), 10_001);
        for w in trajs.windows(2) {
            for (a, b) in w[0].samples.iter().zip(&w[1].samples) {
                assert_abs_diff_eq!(a.x - b.x, 17.0, epsilon = 1e-9);
                // positions reach ~1 km, so round-off in the gap accumulates at the 1e-13 level per step
                assert_abs_diff_eq!(b.v, 10.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn cut_in_on_steady_platoon_recovers_equilibrium() {
        let p = ControlParams::default();
        let mut sc = Scenario::oscillating(p, 4, OscillationSpec::steady(10.0), 120.0);
        sc.cut_ins.push(CutIn {
            time: 10.0,
            ahead_of: 1,
            gap: 10.0,
        });
        let trajs = simulate_platoon(&sc).unwrap();
        assert_eq!(trajs.len(), 5);
        let ids: Vec<usize> = trajs.iter().map(|t| t.vehicle_id).collect();
        assert_eq!(ids, vec![0, 4, 1, 2, 3]);
        assert_abs_diff_eq!(trajs[1].start_time(), 10.0, epsilon = 1e-9);
        let first = trajs[0].sample_at(10.0).unwrap().x - trajs[1].samples[0].x;
        assert_abs_diff_eq!(first, 10.0, epsilon = 1e-9);
        // transient happened, then every gap returns to 17 m
        let mid = trajs[2].sample_at(12.0).unwrap().v;
        assert!((mid - 10.0).abs() > 0.1);
        for w in trajs.windows(2) {
            let s = w[0].sample_at(120.0).unwrap().x - w[1].sample_at(120.0).unwrap().x;
            assert_abs_diff_eq!(s, 17.0, epsilon = 1e-3);
        }
    }

    #[test]
    fn cruise_mode_holds_speed_until_gap_closes() {
        let p = ControlParams::default().with_v_free(12.0);
        let leader = Maneuver {
            x0: 0.0,
            v0: 12.0,
            segments: vec![AccelSegment {
                start: 0.0,
                end: 4.0,
                accel: -0.5,
            }],
            oscillation: None,
        };
        let sc = Scenario {
            params: p,
            vehicles: 2,
            topology: Topology::Open {
                leader: LeaderMotion::Maneuver(leader),
            },
            initial: InitialCondition::Gaps {
                gaps: vec![30.0],
                speed: Some(12.0),
            },
            cut_ins: vec![],
            duration: 40.0,
            dt: 0.01,
            integrator: Integrator::SemiImplicitEuler,
        };
        let trajs = simulate_platoon(&sc).unwrap();
        let f = &trajs[1];
        // gap(t) = 30 - (t^2/4 for t<4, then 4 + 2(t-4)) reaches 19.4 at t = 7.3
        for s in f.samples.iter().take_while(|s| s.t < 7.25) {
            assert_eq!(s.v, 12.0);
            assert_eq!(s.a, 0.0);
        }
        assert!(f.sample_at(8.0).unwrap().v < 12.0);
    }

    #[test]
    fn ring_conserves_total_spacing() {
        let p = ControlParams::default();
        let speeds = [10.0, 11.0, 10.0, 9.0, 12.0, 8.5];
        let ring = ring_setup(speeds.len(), &p, &speeds).unwrap();
        let sc = Scenario {
            params: p,
            vehicles: speeds.len(),
            topology: Topology::Ring {
                length: ring.length,
            },
            initial: InitialCondition::Explicit {
                positions: ring.positions.clone(),
                speeds: speeds.to_vec(),
            },
            cut_ins: vec![],
            duration: 50.0,
            dt: 0.01,
            integrator: Integrator::SemiImplicitEuler,
        };
        let trajs = simulate_platoon(&sc).unwrap();
        let n = trajs.len();
        for k in (0..trajs[0].len()).step_by(97) {
            let mut total = trajs[n - 1].samples[k].x + ring.length - trajs[0].samples[k].x;
            for i in 1..n {
                total += trajs[i - 1].samples[k].x - trajs[i].samples[k].x;
            }
            assert_abs_diff_eq!(total, ring.length, epsilon = 1e-9);
        }
        // string-stable gains damp the disturbance
        let end: Vec<f64> = trajs.iter().map(|t| t.samples.last().unwrap().v).collect();
        let spread = end.iter().cloned().fold(f64::MIN, f64::max)
            - end.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.5, "spread {spread}");
    }

    #[test]
    fn collision_is_reported() {
        let p = ControlParams::default();
        let sc = Scenario {
            params: p,
            vehicles: 2,
            topology: Topology::Open {
                leader: LeaderMotion::Oscillation(OscillationSpec::steady(0.0)),
            },
            initial: InitialCondition::Gaps {
                gaps: vec![2.0],
                speed: Some(30.0),
            },
            cut_ins: vec![],
            duration: 10.0,
            dt: 0.01,
            integrator: Integrator::SemiImplicitEuler,
        };
        assert!(matches!(
            simulate_platoon(&sc),
            Err(Error::Collision { vehicle: 1, .. })
        ));
    }

    #[test]
    fn steady_start_matches_closed_form_at_t0() {
        let p = ControlParams::default();
        let spec = OscillationSpec {
            v_e: 10.0,
            modes: vec![Mode {
                amplitude: 20.0,
                omega: 0.5,
                phase: 0.0,
            }],
        };
        let mut sc = Scenario::oscillating(p, 3, spec.clone(), 1.0);
        sc.initial = InitialCondition::SteadyOscillation;
        let trajs = simulate_platoon(&sc).unwrap();
        let (x2, v2) = follower_motion_closed_form(2, &spec, &p, 0.0);
        assert_eq!(trajs[2].samples[0].x, x2);
        assert_eq!(trajs[2].samples[0].v, v2);
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let p = ControlParams::default();
        let sc = Scenario::oscillating(p, 1, OscillationSpec::steady(10.0), 10.0);
        assert!(simulate_platoon(&sc).is_err());
        let mut sc = Scenario::oscillating(p, 3, OscillationSpec::steady(10.0), 10.0);
        sc.cut_ins.push(CutIn {
            time: 1.0,
            ahead_of: 7,
            gap: 10.0,
        });
        assert!(simulate_platoon(&sc).is_err());
    }
}

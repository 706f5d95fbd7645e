//! End-to-end experiment pipelines: the four reference cases, the ring
//! comparison between microscopic simulation and the finite-volume solver,
//! and the empirical-style sweep over calibrated parameter draws.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::config::{
    Analysis, EventConfig, InitialConfig, LeaderConfig, MetricsConfig, OutputConfig, PdeConfig,
    PlatoonConfig, ScenarioConfig, TransitionConfig,
};
use crate::error::{Error, Result};
use crate::io::ParamSample;
use crate::metrics::{deviation_set, summary_stats, DeviationSet, DeviationStats, FieldComponent};
use crate::micro::{
    ring_setup, simulate_platoon, AccelSegment, InitialCondition, Integrator, LeaderMotion, Mode,
    Scenario, SuperposedOscillation, Topology, Trajectory,
};
use crate::model::ControlParams;
use crate::pde::{
    micro_field, output_grid, pde_initial_from_micro, solve, EulerianField, Grid, SolveOptions,
};
use crate::signal::{fourier_decompose, periodic_reconstruct};
use crate::tracker::{
    constant_speed_path, origin_times, trace_characteristic_path, trace_phase_transition,
    PhaseTransition, TransitionOptions, WavePath,
};
use crate::wave::{wave_oscillation_period, Periodicity, RATIO_TOL};

/// Base oscillation frequency of the reference cases [rad/s].
pub const BASE_OMEGA: f64 = 0.16 * PI;
/// Warm-up before steady-state measurements: three periods of the base mode [s].
pub const WARMUP: f64 = 3.0 * 2.0 * PI / BASE_OMEGA;
/// Length of the window holding path origins [s].
pub const ORIGIN_WINDOW: f64 = 50.0;
/// Extra simulated time so that late paths reach the last vehicle [s].
pub const TAIL: f64 = 15.0;

fn single_mode() -> Vec<Mode> {
    vec![Mode {
        amplitude: 20.0,
        omega: BASE_OMEGA,
        phase: 0.0,
    }]
}

fn compound_modes() -> Vec<Mode> {
    vec![
        Mode {
            amplitude: 20.0,
            omega: BASE_OMEGA,
            phase: 0.0,
        },
        Mode {
            amplitude: 10.0,
            omega: 2.0 * BASE_OMEGA,
            phase: 0.5 * PI,
        },
    ]
}

fn steady_case(name: &str, modes: Vec<Mode>) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed: 2024,
        params: ControlParams::default(),
        platoon: PlatoonConfig {
            vehicles: 4,
            duration: WARMUP + ORIGIN_WINDOW + TAIL,
            dt: 0.01,
            integrator: Integrator::SemiImplicitEuler,
            initial: InitialConfig::Equilibrium,
        },
        leader: LeaderConfig::Oscillation { v_e: 10.0, modes },
        events: Vec::new(),
        metrics: MetricsConfig {
            origin_start: WARMUP,
            origin_end: Some(WARMUP + ORIGIN_WINDOW),
            ..MetricsConfig::default()
        },
        pde: PdeConfig::default(),
        output: OutputConfig::default(),
    }
}

/// Built-in configuration of reference case 1-4.
///
/// * 1: single steady oscillation.
/// * 2: the case-1 platoon already in its steady oscillation, with a vehicle
///   cutting in ahead of the second vehicle at 10 s, 10 m behind its new leader.
/// * 3: compound steady oscillation.
/// * 4: free-flow start at `v_f = 12` with unequal gaps; the leader brakes at
///   -0.5 m/s^2 from 5 to 9 s and then oscillates around 10 m/s.
pub fn case_config(case: u8) -> Result<ScenarioConfig> {
    Ok(match case {
        1 => steady_case("case1", single_mode()),
        2 => {
            let mut cfg = steady_case("case2", single_mode());
            cfg.platoon.initial = InitialConfig::SteadyOscillation;
            cfg.platoon.duration = 10.0 + ORIGIN_WINDOW + TAIL;
            cfg.events.push(EventConfig::CutIn {
                time: 10.0,
                ahead_of: 1,
                gap: 10.0,
            });
            cfg.metrics.origin_start = 10.0;
            cfg.metrics.origin_end = Some(10.0 + ORIGIN_WINDOW);
            cfg
        }
        3 => steady_case("case3", compound_modes()),
        4 => {
            let mut cfg = steady_case("case4", Vec::new());
            cfg.params = ControlParams::default().with_v_free(12.0);
            cfg.platoon.initial = InitialConfig::Gaps {
                gaps: vec![30.0, 34.0, 38.0],
                speed: None,
            };
            cfg.platoon.duration = 9.0 + ORIGIN_WINDOW + TAIL;
            cfg.leader = LeaderConfig::Maneuver {
                x0: 0.0,
                v0: 12.0,
                segments: vec![AccelSegment {
                    start: 5.0,
                    end: 9.0,
                    accel: -0.5,
                }],
                oscillation: Some(SuperposedOscillation {
                    onset: 9.0,
                    modes: vec![Mode {
                        amplitude: 10.0,
                        omega: BASE_OMEGA,
                        phase: -0.5 * PI,
                    }],
                }),
            };
            cfg.metrics = MetricsConfig {
                analysis: Analysis::PhaseTransition,
                origin_start: 0.0,
                origin_end: Some(9.0 + ORIGIN_WINDOW),
                transition: Some(TransitionConfig {
                    v_e: None,
                    fourier_start: 9.0,
                    // the window holds four base periods
                    fourier_end: Some(9.0 + ORIGIN_WINDOW),
                    fourier_modes: crate::signal::DEFAULT_MODES,
                    settle_margin: 0.1,
                }),
                ..MetricsConfig::default()
            };
            cfg
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown case {other}; expected 1-4"
            )))
        }
    })
}

/// Number of parameter draws used by the empirical sweep.
pub const EMPIRICAL_DRAWS: usize = 200;

/// Configuration of the empirical workflow: a four-vehicle platoon behind a
/// recorded leader (`leader_path`, vehicle 0), path origins every second
/// from 10 s, and a ring of 100 vehicles under the default controller for
/// the micro/PDE comparison.
pub fn empirical_config(leader_path: &std::path::Path) -> ScenarioConfig {
    let mut cfg = steady_case("empirical", Vec::new());
    cfg.params = ControlParams {
        tau: 1.0883,
        standstill: 9.655,
        k_s: 0.3134,
        k_v: 0.4629,
        ..ControlParams::default()
    };
    cfg.platoon.dt = 0.1;
    // the sweep runs over the whole recording; this only documents its length
    cfg.platoon.duration = 120.0;
    cfg.leader = LeaderConfig::Recorded {
        path: leader_path.to_path_buf(),
        vehicle_id: Some(0),
    };
    cfg.metrics.origin_start = 10.0;
    cfg.metrics.origin_end = None;
    // the calibrated gains give k_v tau < 1, for which the continuum model is
    // linearly unstable; the ring comparison uses the default controller
    cfg.pde.params = Some(ControlParams::default());
    cfg
}

/// Paths and deviation statistics of one scenario.
#[derive(Debug, Clone)]
pub struct WaveStudy {
    pub trajectories: Vec<Trajectory>,
    pub proposed: Vec<WavePath>,
    pub baseline: Vec<WavePath>,
    pub proposed_devs: DeviationSet,
    pub baseline_devs: DeviationSet,
    pub proposed_stats: DeviationStats,
    pub baseline_stats: DeviationStats,
    pub transition: Option<PhaseTransition>,
    /// Congested equilibrium speed used by the transition analysis.
    pub v_e: Option<f64>,
}

fn study_from_paths(
    trajectories: Vec<Trajectory>,
    proposed: Vec<WavePath>,
    baseline: Vec<WavePath>,
    transition: Option<PhaseTransition>,
    v_e: Option<f64>,
) -> Result<WaveStudy> {
    let proposed_devs = deviation_set(&proposed);
    let baseline_devs = deviation_set(&baseline);
    Ok(WaveStudy {
        proposed_stats: summary_stats(&proposed_devs)?,
        baseline_stats: summary_stats(&baseline_devs)?,
        trajectories,
        proposed,
        baseline,
        proposed_devs,
        baseline_devs,
        transition,
        v_e,
    })
}

/// Simulates the configured platoon and traces proposed and baseline paths.
pub fn run_wave_study(cfg: &ScenarioConfig) -> Result<WaveStudy> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let trajs = simulate_platoon(&scenario)?;
    wave_study_on(cfg, trajs)
}

/// Traces proposed and baseline paths on given trajectories (leader first).
pub fn wave_study_on(cfg: &ScenarioConfig, trajs: Vec<Trajectory>) -> Result<WaveStudy> {
    let params = &cfg.params;
    let m = &cfg.metrics;
    let w_base = m
        .baseline_speed
        .unwrap_or_else(|| params.congested_wave_speed());
    let end = m.origin_end.unwrap_or_else(|| trajs[0].end_time());
    match m.analysis {
        Analysis::Characteristic => {
            let origins = origin_times(m.origin_start, end, m.origin_spacing)?;
            let proposed = origins
                .iter()
                .map(|&t0| trace_characteristic_path(t0, 0, &trajs, params))
                .collect::<Result<_>>()?;
            let baseline = origins
                .iter()
                .map(|&t0| constant_speed_path(t0, 0, &trajs, w_base))
                .collect::<Result<_>>()?;
            study_from_paths(trajs, proposed, baseline, None, None)
        }
        Analysis::PhaseTransition => {
            let tc = m.transition.as_ref().ok_or_else(|| {
                Error::Config("phase-transition analysis needs [metrics.transition]".into())
            })?;
            let v_e = match tc.v_e {
                Some(v) => v,
                None => {
                    let f_end = tc.fourier_end.unwrap_or_else(|| trajs[0].end_time());
                    let leader = &trajs[0];
                    let speeds: Vec<f64> = leader
                        .samples
                        .iter()
                        .filter(|s| s.t >= tc.fourier_start - 1e-9 && s.t < f_end - 1e-9)
                        .map(|s| s.v)
                        .collect();
                    let k = tc.fourier_modes.min(speeds.len().saturating_sub(1) / 2);
                    fourier_decompose(&speeds, leader.dt, k)?.v_e
                }
            };
            let opts = TransitionOptions {
                v_e,
                origin_spacing: m.origin_spacing,
                settle_margin: tc.settle_margin,
                origin_end: Some(end),
            };
            let transition = trace_phase_transition(&trajs, params, &opts)?;
            let proposed = transition.paths();
            // the first-order view has no engagement or shock structure: one
            // constant-speed family launched from the leader at the same times
            // as the characteristic family
            let baseline = transition
                .characteristics
                .iter()
                .map(|p| constant_speed_path(p.origin.t, 0, &trajs, w_base))
                .collect::<Result<_>>()?;
            study_from_paths(trajs, proposed, baseline, Some(transition), Some(v_e))
        }
    }
}

/// Result of the ring comparison between micro simulation and PDE solver.
#[derive(Debug, Clone)]
pub struct RingStudy {
    pub ring_length: f64,
    pub vehicles: usize,
    pub trajectories: Vec<Trajectory>,
    pub micro: EulerianField,
    pub pde: EulerianField,
    pub rmse_v: f64,
    pub rmse_rho: f64,
    pub pde_steps: usize,
}

/// Speeds for a ring of `n` vehicles holding one period of the leader's
/// speed profile: vehicle `i` starts at the leader speed from `i T / n`
/// seconds earlier.
fn ring_speeds(leader: &LeaderMotion, n: usize, period: f64, t_ref: f64) -> Result<Vec<f64>> {
    (0..n)
        .map(|i| {
            let t = t_ref - i as f64 * period / n as f64;
            Ok(leader.kinematics(t)?.v.max(0.0))
        })
        .collect()
}

fn leader_period(leader: &LeaderMotion, fallback: f64) -> Result<f64> {
    let omegas = match leader {
        LeaderMotion::Oscillation(spec) => spec.omegas(),
        _ => return Ok(fallback),
    };
    if omegas.is_empty() {
        return Ok(fallback);
    }
    Ok(match wave_oscillation_period(&omegas, RATIO_TOL)? {
        Periodicity::Periodic(t) => t,
        Periodicity::QuasiPeriodic => fallback,
    })
}

/// Ring with the leader's oscillation spread over one lap, simulated
/// microscopically and with the finite-volume solver from the same initial
/// Eulerian state. Cut-in events become one extra vehicle placed `gap` metres
/// behind its leader at `t = 0`.
pub fn run_ring_study(cfg: &ScenarioConfig) -> Result<RingStudy> {
    cfg.validate()?;
    let leader = cfg.leader_motion()?;
    let period = leader_period(&leader, cfg.pde.horizon)?;
    let speeds = ring_speeds(&leader, cfg.pde.ring_vehicles, period, 0.0)?;
    ring_study_from_speeds(cfg, &cfg.pde.params.unwrap_or(cfg.params), speeds)
}

/// Ring comparison from explicit initial speeds (one per ring vehicle).
pub fn ring_study_from_speeds(
    cfg: &ScenarioConfig,
    params: &ControlParams,
    speeds: Vec<f64>,
) -> Result<RingStudy> {
    let n = speeds.len();
    let layout = ring_setup(n, params, &speeds)?;
    let mut positions = layout.positions.clone();
    let mut speeds = speeds;
    for e in &cfg.events {
        let EventConfig::CutIn { ahead_of, gap, .. } = *e;
        let idx = ahead_of.min(positions.len() - 1).max(1);
        let x_new = positions[idx - 1] - gap;
        if !(x_new > positions[idx]) {
            return Err(Error::InvalidParameter(format!(
                "cut-in gap {gap} m leaves no room ahead of ring vehicle {idx}"
            )));
        }
        positions.insert(idx, x_new);
        speeds.insert(idx, speeds[idx]);
    }
    let vehicles = positions.len();
    let scenario = Scenario {
        params: *params,
        vehicles,
        topology: Topology::Ring {
            length: layout.length,
        },
        initial: InitialCondition::Explicit { positions, speeds },
        cut_ins: Vec::new(),
        duration: cfg.pde.horizon,
        dt: cfg.platoon.dt,
        integrator: cfg.platoon.integrator,
    };
    let trajs = simulate_platoon(&scenario)?;
    let cells = match cfg.pde.dx {
        Some(dx) => ((layout.length / dx).round() as usize).max(4),
        None => cfg.pde.cells,
    };
    let grid = Grid::new(layout.length, cells)?;
    let times = output_grid(cfg.pde.horizon, cfg.pde.output_step);
    let micro = micro_field(&trajs, &grid, &times)?;
    let init = pde_initial_from_micro(&trajs, &grid)?;
    let sol = solve(
        &init,
        &grid,
        params,
        0.0,
        &times,
        SolveOptions { cfl: cfg.pde.cfl },
        None,
    )?;
    let rmse_v = crate::metrics::field_rmse(&micro, &sol.field, FieldComponent::V)?;
    let rmse_rho = crate::metrics::field_rmse(&micro, &sol.field, FieldComponent::Rho)?;
    Ok(RingStudy {
        ring_length: layout.length,
        vehicles,
        trajectories: trajs,
        micro,
        pde: sol.field,
        rmse_v,
        rmse_rho,
        pde_steps: sol.steps,
    })
}

/// Pooled results of the sweep over parameter draws behind a recorded leader.
#[derive(Debug, Clone)]
pub struct EmpiricalStudy {
    pub samples: Vec<ParamSample>,
    pub proposed_devs: DeviationSet,
    pub baseline_devs: DeviationSet,
    pub proposed_stats: DeviationStats,
    pub baseline_stats: DeviationStats,
    /// Top-K Fourier reconstruction of the leader speed.
    pub reconstruction: Vec<f64>,
    pub reconstruction_rmse: f64,
    pub ring: RingStudy,
}

/// For every draw, simulates the followers behind the recorded leader and
/// pools the deviations of characteristic and constant-speed paths (the
/// baseline uses each draw's `-L / tau`). The leader's speed profile is also
/// reconstructed from its `modes` strongest Fourier components and replayed on
/// a ring for the micro/PDE comparison, using `pde.params` when set and the
/// mean of the draws otherwise.
pub fn run_empirical_study(
    cfg: &ScenarioConfig,
    leader: &Trajectory,
    samples: &[ParamSample],
    modes: usize,
) -> Result<EmpiricalStudy> {
    if samples.is_empty() {
        return Err(Error::Empty("parameter samples".into()));
    }
    let leader = crate::io::rebase_time(leader.clone());
    let duration = leader.end_time();
    let per_sample: Vec<(Vec<WavePath>, Vec<WavePath>)> = samples
        .par_iter()
        .map(|s| -> Result<_> {
            let params = s.to_params(&cfg.params)?;
            let scenario = Scenario {
                params,
                vehicles: cfg.platoon.vehicles,
                topology: Topology::Open {
                    leader: LeaderMotion::Recorded(leader.clone()),
                },
                initial: InitialCondition::Equilibrium,
                cut_ins: Vec::new(),
                duration,
                dt: leader.dt,
                integrator: cfg.platoon.integrator,
            };
            let trajs = simulate_platoon(&scenario)?;
            let end = cfg.metrics.origin_end.unwrap_or(duration - TAIL);
            let origins = origin_times(cfg.metrics.origin_start, end, cfg.metrics.origin_spacing)?;
            let w = cfg
                .metrics
                .baseline_speed
                .unwrap_or_else(|| params.congested_wave_speed());
            let proposed = origins
                .iter()
                .map(|&t0| trace_characteristic_path(t0, 0, &trajs, &params))
                .collect::<Result<_>>()?;
            let baseline = origins
                .iter()
                .map(|&t0| constant_speed_path(t0, 0, &trajs, w))
                .collect::<Result<_>>()?;
            Ok((proposed, baseline))
        })
        .collect::<Result<_>>()?;
    let mut proposed_devs = DeviationSet::default();
    let mut baseline_devs = DeviationSet::default();
    let mut offset = 0;
    for (p, b) in &per_sample {
        let mut dp = deviation_set(p);
        let mut db = deviation_set(b);
        for d in dp.values.iter_mut().chain(db.values.iter_mut()) {
            d.path += offset;
        }
        offset += p.len();
        proposed_devs.values.append(&mut dp.values);
        baseline_devs.values.append(&mut db.values);
    }

    let speeds = leader.speeds();
    let k = modes.min(speeds.len().saturating_sub(1) / 2);
    let (reconstruction, reconstruction_rmse) = periodic_reconstruct(&speeds, k)?;

    let ring_params = match cfg.pde.params {
        Some(p) => p,
        None => {
            let mean = |f: fn(&ParamSample) -> f64| {
                samples.iter().map(f).sum::<f64>() / samples.len() as f64
            };
            let mean_draw = ParamSample {
                tau: mean(|s| s.tau),
                standstill: mean(|s| s.standstill),
                k_s: mean(|s| s.k_s),
                k_v: mean(|s| s.k_v),
            };
            mean_draw.to_params(&cfg.params)?
        }
    };
    // one lap holds the reconstructed (exactly periodic) profile
    let n = cfg.pde.ring_vehicles;
    let ring_speeds: Vec<f64> = (0..n)
        .map(|i| {
            let j = (reconstruction.len() * (n - i) / n) % reconstruction.len();
            reconstruction[j].max(0.0)
        })
        .collect();
    let ring = ring_study_from_speeds(cfg, &ring_params, ring_speeds)?;

    Ok(EmpiricalStudy {
        samples: samples.to_vec(),
        proposed_stats: summary_stats(&proposed_devs)?,
        baseline_stats: summary_stats(&baseline_devs)?,
        proposed_devs,
        baseline_devs,
        reconstruction,
        reconstruction_rmse,
        ring,
    })
}

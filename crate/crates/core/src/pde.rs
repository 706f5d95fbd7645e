//! First-order finite-volume solver for the congested-regime balance law on a
//! periodic ring, plus the mapping from ring trajectories to Eulerian fields.
//!
//! One step of size `dt` does:
//!
//! 1. mass: `rho_i -= dt/dx (F_{i+1/2} - F_{i-1/2})` with Rusanov fluxes;
//! 2. convection of `v` with interface speeds `a_{i+1/2} = (a_i + a_{i+1})/2`,
//!    `a = v - k_v/rho`, each interface contributing its upwind fluctuation;
//! 3. source relaxation `v += dt k_s (1/rho^{n+1} - tau v - L)`.

use crate::error::{Error, Result};
use crate::micro::Trajectory;
use crate::model::{ControlParams, TrafficState};

/// Uniform periodic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub length: f64,
    pub cells: usize,
    pub dx: f64,
}

impl Grid {
    pub fn new(length: f64, cells: usize) -> Result<Self> {
        if cells < 4 {
            return Err(Error::InvalidParameter(format!(
                "a grid needs at least 4 cells, got {cells}"
            )));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid length must be > 0, got {length}"
            )));
        }
        Ok(Self {
            length,
            cells,
            dx: length / cells as f64,
        })
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.cells).map(|i| self.center(i)).collect()
    }
}

/// States on a grid at a sequence of times.
#[derive(Debug, Clone, PartialEq)]
pub struct EulerianField {
    pub grid: Grid,
    pub times: Vec<f64>,
    /// `states[n][i]` is cell `i` at `times[n]`.
    pub states: Vec<Vec<TrafficState>>,
}

impl EulerianField {
    pub fn single(grid: Grid, t: f64, states: Vec<TrafficState>) -> Self {
        Self {
            grid,
            times: vec![t],
            states: vec![states],
        }
    }

    /// Total number of vehicles `sum rho_i dx` at snapshot `n`.
    pub fn mass(&self, n: usize) -> f64 {
        total_mass(&self.states[n], self.grid.dx)
    }
}

pub fn total_mass(states: &[TrafficState], dx: f64) -> f64 {
    states.iter().map(|s| s.rho).sum::<f64>() * dx
}

/// Largest characteristic speed magnitude over two neighbouring states.
pub fn local_wave_bound(left: TrafficState, right: TrafficState, params: &ControlParams) -> f64 {
    cell_wave_bound(left, params).max(cell_wave_bound(right, params))
}

fn cell_wave_bound(s: TrafficState, params: &ControlParams) -> f64 {
    s.v.abs().max((s.v - params.k_v / s.rho).abs())
}

/// Rusanov mass flux `(F_l + F_r)/2 - alpha (rho_r - rho_l)/2`.
pub fn rusanov_flux(left: TrafficState, right: TrafficState, params: &ControlParams) -> f64 {
    let alpha = local_wave_bound(left, right, params);
    0.5 * (left.flow() + right.flow()) - 0.5 * alpha * (right.rho - left.rho)
}

/// Advection speed of the speed equation, `v - k_v / rho`.
pub fn advection_speed(state: TrafficState, params: &ControlParams) -> Result<f64> {
    if !(state.rho > 0.0) {
        return Err(Error::NonPositiveDensity(state.rho));
    }
    Ok(state.v - params.k_v / state.rho)
}

/// Time step allowed by the CFL condition.
pub fn cfl_time_step(
    states: &[TrafficState],
    grid: &Grid,
    params: &ControlParams,
    cfl: f64,
) -> Result<f64> {
    if !(cfl > 0.0 && cfl < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "cfl must lie in (0, 1), got {cfl}"
        )));
    }
    let bound = states
        .iter()
        .map(|&s| cell_wave_bound(s, params))
        .fold(0.0, f64::max);
    if !(bound > 0.0) {
        return Err(Error::InvalidParameter(
            "all wave speeds vanish; the CFL step is unbounded".into(),
        ));
    }
    Ok(cfl * grid.dx / bound)
}

/// Extra right-hand side `(f_rho, f_v)` at `(t, x)`, used for manufactured solutions.
pub trait Forcing {
    fn source(&self, t: f64, x: f64) -> (f64, f64);
}

/// Advances all cells by exactly `dt`.
pub fn step_with_dt(
    states: &[TrafficState],
    grid: &Grid,
    params: &ControlParams,
    t: f64,
    dt: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<Vec<TrafficState>> {
    let n = states.len();
    if n != grid.cells {
        return Err(Error::GridMismatch(format!(
            "{n} states on a grid of {} cells",
            grid.cells
        )));
    }
    let r = dt / grid.dx;
    let right = |i: usize| (i + 1) % n;
    let left = |i: usize| (i + n - 1) % n;

    // interface i carries i+1/2
    let flux: Vec<f64> = (0..n)
        .map(|i| rusanov_flux(states[i], states[right(i)], params))
        .collect();
    let adv: Vec<f64> = states
        .iter()
        .map(|&s| advection_speed(s, params))
        .collect::<Result<_>>()?;
    let a_face: Vec<f64> = (0..n).map(|i| 0.5 * (adv[i] + adv[right(i)])).collect();

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (il, ir) = (left(i), right(i));
        let (f_rho, f_v) = forcing.map_or((0.0, 0.0), |f| f.source(t, grid.center(i)));
        let rho = states[i].rho - r * (flux[i] - flux[il]) + dt * f_rho;
        if !(rho > 0.0) {
            return Err(Error::Positivity {
                cell: i,
                t: t + dt,
                rho,
            });
        }
        let v = states[i].v;
        let incoming = a_face[il].max(0.0) * (v - states[il].v);
        let outgoing = a_face[i].min(0.0) * (states[ir].v - v);
        let v_star = v - r * (incoming + outgoing) + dt * f_v;
        let v_new =
            v_star + dt * params.k_s * (1.0 / rho - params.tau * v_star - params.standstill);
        out.push(TrafficState { rho, v: v_new });
    }
    Ok(out)
}

/// One CFL-limited step; returns the new states and the step size used.
pub fn step(
    states: &[TrafficState],
    grid: &Grid,
    params: &ControlParams,
    cfl: f64,
    t: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<(Vec<TrafficState>, f64)> {
    let dt = cfl_time_step(states, grid, params, cfl)?;
    Ok((step_with_dt(states, grid, params, t, dt, forcing)?, dt))
}

/// Solver settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub cfl: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { cfl: 0.5 }
    }
}

/// Result of [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub field: EulerianField,
    pub steps: usize,
}

/// Integrates from `t0` and records the state at every requested output time.
/// Steps are shortened where needed so that each output time is hit exactly.
pub fn solve(
    initial: &[TrafficState],
    grid: &Grid,
    params: &ControlParams,
    t0: f64,
    output_times: &[f64],
    opts: SolveOptions,
    forcing: Option<&dyn Forcing>,
) -> Result<Solution> {
    if output_times.windows(2).any(|w| w[1] < w[0]) || output_times.first().is_some_and(|&t| t < t0)
    {
        return Err(Error::InvalidParameter(
            "output times must be sorted and not before t0".into(),
        ));
    }
    let mut state = initial.to_vec();
    let mut t = t0;
    let mut steps = 0;
    let mut times = Vec::with_capacity(output_times.len());
    let mut states = Vec::with_capacity(output_times.len());
    for &target in output_times {
        while target - t > 1e-12 * target.abs().max(1.0) {
            let dt = cfl_time_step(&state, grid, params, opts.cfl)?.min(target - t);
            state = step_with_dt(&state, grid, params, t, dt, forcing)?;
            t += dt;
            steps += 1;
        }
        t = target;
        times.push(target);
        states.push(state.clone());
    }
    Ok(Solution {
        field: EulerianField {
            grid: *grid,
            times,
            states,
        },
        steps,
    })
}

/// Evenly spaced output times `0, dt_out, ..., t_end`.
pub fn output_grid(t_end: f64, dt_out: f64) -> Vec<f64> {
    let n = (t_end / dt_out + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * dt_out).collect()
}

/// Eulerian state implied by ring trajectories at time `t`: vehicle `i` owns
/// the road from its own position up to its leader's, with density `1/s_i`
/// and speed `v_i`. Each cell takes the owner of its centre.
///
/// `trajs` are front to back; vehicle 0 follows the last one across the wrap.
pub fn micro_to_eulerian(trajs: &[Trajectory], grid: &Grid, t: f64) -> Result<Vec<TrafficState>> {
    let n = trajs.len();
    if n < 2 {
        return Err(Error::InvalidParameter(
            "a ring needs at least 2 vehicles".into(),
        ));
    }
    let samples: Vec<_> = trajs
        .iter()
        .map(|tr| tr.sample_at(t))
        .collect::<Result<_>>()?;
    let len = grid.length;
    let mut owners: Vec<(f64, TrafficState)> = Vec::with_capacity(n);
    for i in 0..n {
        let lead_x = if i == 0 {
            samples[n - 1].x + len
        } else {
            samples[i - 1].x
        };
        let s = lead_x - samples[i].x;
        owners.push((
            samples[i].x.rem_euclid(len),
            TrafficState::from_spacing(s, samples[i].v)?,
        ));
    }
    owners.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = Vec::with_capacity(grid.cells);
    for c in grid.centers() {
        // last vehicle at or behind the centre; wrap to the front-most otherwise
        let k = owners.partition_point(|o| o.0 <= c);
        let owner = if k == 0 {
            owners[n - 1].1
        } else {
            owners[k - 1].1
        };
        out.push(owner);
    }
    Ok(out)
}

/// Micro-derived field at each of `times`.
pub fn micro_field(trajs: &[Trajectory], grid: &Grid, times: &[f64]) -> Result<EulerianField> {
    let states = times
        .iter()
        .map(|&t| micro_to_eulerian(trajs, grid, t))
        .collect::<Result<_>>()?;
    Ok(EulerianField {
        grid: *grid,
        times: times.to_vec(),
        states,
    })
}

/// PDE initial condition taken from the micro-derived field at the first sample time.
pub fn pde_initial_from_micro(trajs: &[Trajectory], grid: &Grid) -> Result<Vec<TrafficState>> {
    let t0 = trajs
        .iter()
        .map(Trajectory::start_time)
        .fold(f64::MIN, f64::max);
    micro_to_eulerian(trajs, grid, t0)
}

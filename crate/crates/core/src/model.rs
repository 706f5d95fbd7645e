//! The ACC-embedded macroscopic model: control law, regime switching,
//! characteristic structure, and the analytic maps built on top of them.
//!
//! In the congested regime the state `U = (rho, v)` obeys
//!
//! ```text
//! rho_t + (rho v)_x = 0
//! v_t + (v - k_v / rho) v_x = k_s (1/rho - tau v - L)
//! ```
//!
//! and the flux Jacobian has eigenvalues `v` and `v - k_v / rho`. In free flow
//! both gains vanish and the system collapses to linear transport at `v_f`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default speed tolerance used to decide whether a vehicle is cruising at `v_f`.
pub const EXACT_SPEED_TOL: f64 = 1e-9;

/// Speed tolerance suggested for noisy recorded data.
pub const EMPIRICAL_SPEED_TOL: f64 = 0.1;

/// Constants of the linear ACC feedback law with a constant time-headway policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    /// Desired time headway [s].
    pub tau: f64,
    /// Standstill distance [m].
    pub standstill: f64,
    /// Spacing-error gain [1/s^2].
    pub k_s: f64,
    /// Speed-difference gain [1/s].
    pub k_v: f64,
    /// Free-flow (cruise set) speed [m/s].
    pub v_free: f64,
    /// Tolerance on `|v - v_free|` for the cruise-mode test [m/s].
    #[serde(default = "default_speed_tol")]
    pub speed_tol: f64,
}

fn default_speed_tol() -> f64 {
    EXACT_SPEED_TOL
}

impl Default for ControlParams {
    /// Default experiment gains. The free-flow speed is set high enough that
    /// oscillating platoons never re-enter cruise mode.
    fn default() -> Self {
        Self {
            tau: 1.2,
            standstill: 5.0,
            k_s: 0.8,
            k_v: 1.4,
            v_free: 30.0,
            speed_tol: EXACT_SPEED_TOL,
        }
    }
}

impl ControlParams {
    pub fn new(tau: f64, standstill: f64, k_s: f64, k_v: f64, v_free: f64) -> Result<Self> {
        let p = Self {
            tau,
            standstill,
            k_s,
            k_v,
            v_free,
            speed_tol: EXACT_SPEED_TOL,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_v_free(mut self, v_free: f64) -> Self {
        self.v_free = v_free;
        self
    }

    pub fn with_speed_tol(mut self, tol: f64) -> Self {
        self.speed_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.tau,
            self.standstill,
            self.k_s,
            self.k_v,
            self.v_free,
            self.speed_tol,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(Error::InvalidParameter(
                "control parameters must be finite".into(),
            ));
        }
        if self.tau <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "tau must be > 0, got {}",
                self.tau
            )));
        }
        if self.standstill <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "standstill distance must be > 0, got {}",
                self.standstill
            )));
        }
        if self.v_free <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "v_free must be > 0, got {}",
                self.v_free
            )));
        }
        if self.k_s < 0.0 || self.k_v < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "gains must be non-negative, got k_s = {}, k_v = {}",
                self.k_s, self.k_v
            )));
        }
        if self.speed_tol < 0.0 {
            return Err(Error::InvalidParameter(
                "speed tolerance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Desired spacing `tau v + L` for ego speed `v`.
    pub fn desired_spacing(&self, v: f64) -> f64 {
        self.tau * v + self.standstill
    }

    /// Critical spacing `s_c = tau v_f + L` at which the controller engages.
    pub fn critical_spacing(&self) -> f64 {
        self.desired_spacing(self.v_free)
    }

    /// Critical density `rho_c = 1 / s_c`.
    pub fn critical_density(&self) -> f64 {
        1.0 / self.critical_spacing()
    }

    /// Jam density, taken as `1 / L`.
    pub fn jam_density(&self) -> f64 {
        1.0 / self.standstill
    }

    /// Equilibrium speed on the time-headway manifold for spacing `s`.
    pub fn equilibrium_speed(&self, s: f64) -> f64 {
        (s - self.standstill) / self.tau
    }

    /// Congested-branch slope of the CTH fundamental diagram, `-L / tau`.
    pub fn congested_wave_speed(&self) -> f64 {
        -self.standstill / self.tau
    }

    pub fn regime(&self, state: TrafficState) -> Result<Regime> {
        regime_of(state, self, self.speed_tol)
    }
}

/// Macroscopic traffic state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrafficState {
    /// Density [veh/m].
    pub rho: f64,
    /// Speed [m/s].
    pub v: f64,
}

impl TrafficState {
    pub fn new(rho: f64, v: f64) -> Result<Self> {
        if !(rho > 0.0) {
            return Err(Error::NonPositiveDensity(rho));
        }
        Ok(Self { rho, v })
    }

    /// State with density `1 / s`.
    pub fn from_spacing(s: f64, v: f64) -> Result<Self> {
        if !(s > 0.0) {
            return Err(Error::NonPositiveDensity(1.0 / s));
        }
        Ok(Self { rho: 1.0 / s, v })
    }

    /// Steady state on the CTH manifold `1/rho = tau v + L`.
    pub fn equilibrium(v: f64, params: &ControlParams) -> Result<Self> {
        Self::from_spacing(params.desired_spacing(v), v)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.rho
    }

    pub fn flow(&self) -> f64 {
        self.rho * self.v
    }
}

/// Operating mode of the ACC controller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    FreeFlow,
    Congested,
}

impl Regime {
    /// Active `(k_s, k_v)` in this regime.
    pub fn gains(self, params: &ControlParams) -> (f64, f64) {
        match self {
            Regime::FreeFlow => (0.0, 0.0),
            Regime::Congested => (params.k_s, params.k_v),
        }
    }
}

/// Classifies a state. Cruise mode requires `rho < rho_c` and `|v - v_f| <= eps_v`;
/// the boundary `rho = rho_c` counts as congested.
pub fn regime_of(state: TrafficState, params: &ControlParams, eps_v: f64) -> Result<Regime> {
    if !(state.rho > 0.0) {
        return Err(Error::NonPositiveDensity(state.rho));
    }
    let below_capacity = state.rho < params.critical_density();
    let cruising = (state.v - params.v_free).abs() <= eps_v;
    Ok(if below_capacity && cruising {
        Regime::FreeFlow
    } else {
        Regime::Congested
    })
}

/// Linear feedback law `k_s (s - tau v - L) + k_v (v_lead - v)` with regime-gated gains.
pub fn acc_acceleration(s: f64, v: f64, v_lead: f64, params: &ControlParams) -> Result<f64> {
    let regime = regime_of(TrafficState::from_spacing(s, v)?, params, params.speed_tol)?;
    let (k_s, k_v) = regime.gains(params);
    Ok(k_s * (s - params.desired_spacing(v)) + k_v * (v_lead - v))
}

/// Eigenvalues and right eigenvectors of the flux Jacobian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenStructure {
    pub lambda1: f64,
    pub lambda2: f64,
    pub r1: [f64; 2],
    pub r2: [f64; 2],
}

pub fn eigenstructure(state: TrafficState, k_v: f64) -> Result<EigenStructure> {
    if !(state.rho > 0.0) {
        return Err(Error::NonPositiveDensity(state.rho));
    }
    let rho = state.rho;
    Ok(EigenStructure {
        lambda1: state.v,
        lambda2: state.v - k_v / rho,
        r1: [1.0, 0.0],
        r2: [1.0, -k_v / (rho * rho)],
    })
}

/// Residual of the congested momentum equation for given partial derivatives.
/// Vanishes for exact solutions.
pub fn momentum_residual(v_t: f64, v_x: f64, state: TrafficState, params: &ControlParams) -> f64 {
    let s = state.spacing();
    v_t + (state.v - params.k_v * s) * v_x
        + (-s + state.v * params.tau + params.standstill) * params.k_s
}

/// Speed-difference gain that makes the ACC eigenstructure coincide with a
/// phase-transition model built on equilibrium speed `V(rho)` with slope `V'(rho)`.
pub fn ptm_equivalent_kv(rho: f64, v: f64, eq_speed: f64, eq_speed_slope: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::NonPositiveDensity(rho));
    }
    if eq_speed == 0.0 {
        return Err(Error::ZeroEquilibriumSpeed);
    }
    Ok(-rho * (v + rho * eq_speed_slope / eq_speed * v - eq_speed))
}

/// A speed-difference gain that may vary with the state, together with its partials.
pub trait GainField {
    fn value(&self, rho: f64, v: f64) -> f64;
    fn d_rho(&self, rho: f64, v: f64) -> f64;
    fn d_v(&self, rho: f64, v: f64) -> f64;
}

/// Constant gain.
#[derive(Debug, Clone, Copy)]
pub struct ConstantGain(pub f64);

impl GainField for ConstantGain {
    fn value(&self, _rho: f64, _v: f64) -> f64 {
        self.0
    }
    fn d_rho(&self, _rho: f64, _v: f64) -> f64 {
        0.0
    }
    fn d_v(&self, _rho: f64, _v: f64) -> f64 {
        0.0
    }
}

/// Gain given by a polynomial in density, `sum_i c_i rho^i`.
#[derive(Debug, Clone)]
pub struct DensityPolynomialGain {
    pub coeffs: Vec<f64>,
}

impl GainField for DensityPolynomialGain {
    fn value(&self, rho: f64, _v: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * rho + c)
    }
    fn d_rho(&self, rho: f64, _v: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, c)| acc * rho + i as f64 * c)
    }
    fn d_v(&self, _rho: f64, _v: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CharacteristicField {
    First,
    Second,
}

/// `grad(lambda_i) . r_i` for a possibly state-dependent speed gain.
/// Zero means the field is linearly degenerate at this state.
pub fn linear_degeneracy_indicator(
    field: CharacteristicField,
    state: TrafficState,
    gain: &dyn GainField,
) -> Result<f64> {
    if !(state.rho > 0.0) {
        return Err(Error::NonPositiveDensity(state.rho));
    }
    Ok(match field {
        CharacteristicField::First => 0.0,
        CharacteristicField::Second => {
            let (rho, v) = (state.rho, state.v);
            let k = gain.value(rho, v);
            -gain.d_rho(rho, v) / rho + k / rho.powi(3) * gain.d_v(rho, v)
        }
    })
}

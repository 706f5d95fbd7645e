//! Frequency-domain analysis of ACC platoons: the position transfer function,
//! string-stability classification, steady-state follower motion and the
//! closed-form speed of oscillatory waves.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::micro::OscillationSpec;
use crate::model::ControlParams;

/// Gain and phase of the follower/leader position transfer function at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferEval {
    pub omega: f64,
    pub gain_mag: f64,
    /// Principal argument in `(-pi, pi]`.
    pub phase: f64,
}

/// `G(s) = (k_v s + k_s) / (s^2 + (k_s tau + k_v) s + k_s)` evaluated at `s = j omega`.
pub fn transfer_complex(omega: f64, params: &ControlParams) -> Complex64 {
    let s = Complex64::new(0.0, omega);
    let num = s * params.k_v + params.k_s;
    let den = s * s + s * (params.k_s * params.tau + params.k_v) + params.k_s;
    if den.norm() == 0.0 {
        // k_s = 0 at omega = 0: the DC limit of k_v / (s + k_v) is 1
        return Complex64::new(1.0, 0.0);
    }
    num / den
}

pub fn transfer_function(omega: f64, params: &ControlParams) -> TransferEval {
    let g = transfer_complex(omega, params);
    TransferEval {
        omega,
        gain_mag: g.norm(),
        phase: g.arg(),
    }
}

/// Bode data over a frequency list.
pub fn bode(omegas: &[f64], params: &ControlParams) -> Vec<TransferEval> {
    omegas
        .iter()
        .map(|&w| transfer_function(w, params))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityClass {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub class: StabilityClass,
    pub sup_gain: f64,
    pub argmax_omega: f64,
}

/// Tolerance separating the three string-stability classes.
pub const STABILITY_TOL: f64 = 1e-6;

/// `n` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Default frequency grid: 10^4 log-spaced points on `[1e-2, 100]` rad/s.
///
/// The lower end stays away from zero because every ACC law tracks position
/// with unit DC gain; including `omega = 0` would make every configuration
/// look marginal.
pub fn default_omega_grid() -> Vec<f64> {
    log_grid(1e-2, 100.0, 10_000)
}

pub fn string_stability_class(
    params: &ControlParams,
    omega_grid: &[f64],
) -> Result<StabilityReport> {
    let (argmax_omega, sup_gain) = omega_grid
        .iter()
        .map(|&w| (w, transfer_function(w, params).gain_mag))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::Empty("frequency grid".into()))?;
    let class = if sup_gain < 1.0 - STABILITY_TOL {
        StabilityClass::Stable
    } else if (sup_gain - 1.0).abs() <= STABILITY_TOL {
        StabilityClass::Marginal
    } else {
        StabilityClass::Unstable
    };
    Ok(StabilityReport {
        class,
        sup_gain,
        argmax_omega,
    })
}

/// Steady-state position and speed of follower `n` (leader = 0) behind an
/// oscillating leader: each mode is scaled by `|G|^n` and shifted by `n arg G`.
pub fn follower_motion_closed_form(
    n: usize,
    spec: &OscillationSpec,
    params: &ControlParams,
    t: f64,
) -> (f64, f64) {
    let x_e = spec.equilibrium_spacing(params);
    let mut x = spec.v_e * t - n as f64 * x_e;
    let mut v = spec.v_e;
    for m in &spec.modes {
        let g = transfer_function(m.omega, params);
        let amp = m.amplitude * g.gain_mag.powi(n as i32);
        let (s, c) = (m.omega * t + m.phase + n as f64 * g.phase).sin_cos();
        x += amp * s;
        v += amp * m.omega * c;
    }
    (x, v)
}

/// One harmonic of the wave speed, `R cos(omega t + theta0 + phi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveHarmonic {
    pub omega: f64,
    /// `R_nm >= 0` [m/s].
    pub amplitude: f64,
    /// `phi_nm` [rad].
    pub phase: f64,
    /// Constant part of `Theta_m(t) = omega t + theta0`, i.e. `phi_m + (n-1) arg G`.
    pub theta0: f64,
}

/// Closed-form speed of the wave travelling from vehicle `n-1` to vehicle `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveSpeedClosedForm {
    pub n: usize,
    /// `v_e - k_v x_e`.
    pub nominal: f64,
    pub harmonics: Vec<WaveHarmonic>,
}

impl WaveSpeedClosedForm {
    pub fn evaluate(&self, t: f64) -> f64 {
        self.nominal
            + self
                .harmonics
                .iter()
                .map(|h| h.amplitude * (h.omega * t + h.theta0 + h.phase).cos())
                .sum::<f64>()
    }
}

/// Builds `W(t) = v_{n-1}(t) - k_v (x_{n-1}(t) - x_n(t))` for the steady
/// oscillation. Per mode, the speed term of vehicle `n-1` and the spacing term
/// combine into the single phasor
/// `A |G|^{n-1} (omega + j k_v (1 - G(j omega)))`, whose modulus and argument
/// give `R_nm` and `phi_nm`.
pub fn wave_speed_closed_form(
    n: usize,
    spec: &OscillationSpec,
    params: &ControlParams,
) -> Result<WaveSpeedClosedForm> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "wave speed needs a follower index n >= 1".into(),
        ));
    }
    let x_e = spec.equilibrium_spacing(params);
    let harmonics = spec
        .modes
        .iter()
        .map(|m| {
            let g = transfer_complex(m.omega, params);
            let scale = m.amplitude * g.norm().powi(n as i32 - 1);
            let p = (Complex64::new(m.omega, 0.0) + Complex64::new(0.0, params.k_v) * (1.0 - g))
                * scale;
            WaveHarmonic {
                omega: m.omega,
                amplitude: p.norm(),
                phase: p.arg(),
                theta0: m.phase + (n - 1) as f64 * g.arg(),
            }
        })
        .collect();
    Ok(WaveSpeedClosedForm {
        n,
        nominal: spec.v_e - params.k_v * x_e,
        harmonics,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Periodicity {
    Periodic(f64),
    QuasiPeriodic,
}

/// Largest denominator accepted when testing frequency ratios for rationality.
/// Larger caps make every ratio look rational at double precision.
pub const RATIO_DENOMINATOR_CAP: u64 = 1000;

/// Default relative tolerance of the rationality test.
pub const RATIO_TOL: f64 = 1e-9;

/// Best rational approximation `p/q` of `x > 0` with `q <= cap` that is within
/// relative tolerance `tol`, from the continued-fraction convergents.
fn rational_approx(x: f64, tol: f64, cap: u64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > 1e15 {
            return None;
        }
        let a = a as u64;
        let h = a.checked_mul(h1)?.checked_add(h0)?;
        let k = a.checked_mul(k1)?.checked_add(k0)?;
        if k > cap {
            return None;
        }
        if ((h as f64 / k as f64) - x).abs() <= tol * x.abs() {
            return Some((h, k));
        }
        (h0, h1, k0, k1) = (h1, h, k1, k);
        let frac = r - a as f64;
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Common period of a set of sinusoids, or `QuasiPeriodic` when some
/// frequency ratio is irrational within `tol`.
pub fn wave_oscillation_period(omegas: &[f64], tol: f64) -> Result<Periodicity> {
    let Some(&w1) = omegas.first() else {
        return Err(Error::Empty("frequency list".into()));
    };
    if omegas.iter().any(|w| !(*w > 0.0)) {
        return Err(Error::InvalidParameter(
            "frequencies must be positive".into(),
        ));
    }
    let mut ratios = Vec::with_capacity(omegas.len());
    for &w in omegas {
        match rational_approx(w / w1, tol, RATIO_DENOMINATOR_CAP) {
            Some(pq) => ratios.push(pq),
            None => return Ok(Periodicity::QuasiPeriodic),
        }
    }
    // omega_m = w1 * n_m / q with q = lcm of denominators
    let q = ratios
        .iter()
        .fold(1u64, |acc, &(_, d)| acc / gcd(acc, d) * d);
    let g = ratios
        .iter()
        .fold(0u64, |acc, &(p, d)| gcd(acc, p * (q / d)));
    let fundamental = w1 * g as f64 / q as f64;
    Ok(Periodicity::Periodic(
        2.0 * std::f64::consts::PI / fundamental,
    ))
}

//! Fourier decomposition of speed profiles.

use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::micro::{Mode, OscillationSpec};

/// Default number of retained modes.
pub const DEFAULT_MODES: usize = 10;

/// One positive-frequency DFT bin expressed as a speed cosine
/// `c cos(omega t + psi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SpeedComponent {
    bin: usize,
    c: f64,
    psi: f64,
}

struct Spectrum {
    mean: f64,
    /// Strongest first; ties keep the lower frequency first.
    components: Vec<SpeedComponent>,
}

fn spectrum(series: &[f64], k: usize) -> Result<Spectrum> {
    let n = series.len();
    if n == 0 {
        return Err(Error::Empty("speed series".into()));
    }
    let available = (n - 1) / 2;
    if k > available {
        return Err(Error::TooManyModes {
            requested: k,
            available,
        });
    }
    let mut buf: Vec<Complex<f64>> = series.iter().map(|&v| Complex::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    let mut components: Vec<SpeedComponent> = (1..=available)
        .map(|bin| {
            let x = buf[bin] * scale;
            SpeedComponent {
                bin,
                c: 2.0 * x.norm(),
                psi: x.arg(),
            }
        })
        .collect();
    components.sort_by(|a, b| b.c.total_cmp(&a.c).then(a.bin.cmp(&b.bin)));
    components.truncate(k);
    Ok(Spectrum {
        mean: buf[0].re * scale,
        components,
    })
}

/// Splits a uniformly sampled speed series (first sample at `t = 0`) into its
/// mean and the `k` strongest positive-frequency components, written as
/// position modes so that `v(t) = v_e + sum A omega cos(omega t + phi)`.
pub fn fourier_decompose(series: &[f64], dt: f64, k: usize) -> Result<OscillationSpec> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample step must be > 0, got {dt}"
        )));
    }
    let sp = spectrum(series, k)?;
    let period = series.len() as f64 * dt;
    let modes = sp
        .components
        .iter()
        .map(|c| {
            let omega = 2.0 * std::f64::consts::PI * c.bin as f64 / period;
            Mode {
                amplitude: c.c / omega,
                omega,
                phase: c.psi,
            }
        })
        .collect();
    Ok(OscillationSpec {
        v_e: sp.mean,
        modes,
    })
}

/// Mean plus the `k` strongest components, evaluated on the input samples;
/// returns the reconstruction and its RMSE against the input.
pub fn periodic_reconstruct(series: &[f64], k: usize) -> Result<(Vec<f64>, f64)> {
    let sp = spectrum(series, k)?;
    let n = series.len();
    let recon: Vec<f64> = (0..n)
        .map(|j| {
            sp.mean
                + sp.components
                    .iter()
                    .map(|c| {
                        c.c * (2.0 * std::f64::consts::PI * (c.bin * j % n) as f64 / n as f64
                            + c.psi)
                            .cos()
                    })
                    .sum::<f64>()
        })
        .collect();
    let rmse = (recon
        .iter()
        .zip(series)
        .map(|(r, s)| (r - s).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Ok((recon, rmse))
}

/// Linear resampling of `(t, v)` pairs onto a uniform grid starting at the
/// first time, with step `dt`, up to the last time.
pub fn resample_linear(t: &[f64], v: &[f64], dt: f64) -> Result<Vec<f64>> {
    if t.len() != v.len() {
        return Err(Error::InvalidParameter(
            "time and value lengths differ".into(),
        ));
    }
    if t.len() < 2 {
        return Err(Error::Empty("need at least two samples to resample".into()));
    }
    if !(dt > 0.0) || t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "times must increase and dt must be > 0".into(),
        ));
    }
    let n = ((t[t.len() - 1] - t[0]) / dt + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    for j in 0..n {
        let tj = t[0] + j as f64 * dt;
        while k + 2 < t.len() && t[k + 1] < tj {
            k += 1;
        }
        let w = ((tj - t[k]) / (t[k + 1] - t[k])).clamp(0.0, 1.0);
        out.push(v[k] + w * (v[k + 1] - v[k]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_series() {
        let spec = fourier_decompose(&[10.0; 64], 0.1, 0).unwrap();
        assert_abs_diff_eq!(spec.v_e, 10.0, epsilon = 1e-12);
        assert!(spec.modes.is_empty());
    }

    #[test]
    fn single_cosine_round_trip() {
        // 0.4 rad/s, window of 5 periods sampled at 0.05 s
        let period = 2.0 * std::f64::consts::PI / 0.4;
        let dt = 5.0 * period / 2000.0;
        let series: Vec<f64> = (0..2000)
            .map(|j| 10.0 + 3.0 * (0.4 * j as f64 * dt).cos())
            .collect();
        let spec = fourier_decompose(&series, dt, 1).unwrap();
        let m = spec.modes[0];
        assert_abs_diff_eq!(spec.v_e, 10.0, epsilon = 1e-9);
        assert_abs_diff_eq!(m.omega, 0.4, epsilon = 0.004);
        assert_abs_diff_eq!(m.amplitude * m.omega, 3.0, epsilon = 0.03);
        assert_abs_diff_eq!(m.amplitude, 7.5, epsilon = 0.075);
        assert_abs_diff_eq!(m.phase, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn two_modes_in_amplitude_order() {
        let n = 500;
        let series: Vec<f64> = (0..n)
            .map(|j| {
                let u = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                8.0 + 1.0 * (7.0 * u + 0.3).cos() + 2.5 * (3.0 * u - 1.1).cos()
            })
            .collect();
        let spec = fourier_decompose(&series, 0.2, 2).unwrap();
        let w = |k: f64| 2.0 * std::f64::consts::PI * k / (n as f64 * 0.2);
        assert_abs_diff_eq!(spec.modes[0].omega, w(3.0), epsilon = 1e-12);
        assert_abs_diff_eq!(
            spec.modes[0].amplitude * spec.modes[0].omega,
            2.5,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(spec.modes[0].phase, -1.1, epsilon = 1e-9);
        assert_abs_diff_eq!(spec.modes[1].omega, w(7.0), epsilon = 1e-12);
        assert_abs_diff_eq!(spec.modes[1].phase, 0.3, epsilon = 1e-9);
        let (_, rmse) = periodic_reconstruct(&series, 2).unwrap();
        assert!(rmse < 1e-12);
    }

    #[test]
    fn zero_modes_gives_standard_deviation() {
        let series = [1.0, 4.0, 2.0, 7.0, 3.0];
        let (recon, rmse) = periodic_reconstruct(&series, 0).unwrap();
        let mean = 17.0 / 5.0;
        assert!(recon.iter().all(|&r| (r - mean).abs() < 1e-12));
        let sd = (series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0).sqrt();
        assert_abs_diff_eq!(rmse, sd, epsilon = 1e-12);
    }

    #[test]
    fn too_many_modes() {
        assert!(matches!(
            fourier_decompose(&[1.0, 2.0, 3.0, 4.0], 1.0, 2),
            Err(Error::TooManyModes {
                requested: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn resampling() {
        let out = resample_linear(&[0.0, 1.0, 3.0], &[0.0, 2.0, 6.0], 0.5).unwrap();
        assert_eq!(out, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(resample_linear(&[0.0, 0.0], &[1.0, 1.0], 0.5).is_err());
    }
}

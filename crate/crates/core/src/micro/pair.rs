//! Exact solution of the linear error dynamics of one leader/follower pair.
//!
//! With `e_s = s - (tau v + L)` and `e_v = v_lead - v`, the ACC law gives
//! `z' = A z + D a_lead` where
//!
//! ```text
//! A = [[-tau k_s, 1 - tau k_v],
//!      [-k_s,     -k_v       ]],   D = [0, 1]^T.
//! ```

use crate::error::{Error, Result};
use crate::model::ControlParams;

type Mat2 = [[f64; 2]; 2];

/// Spacing error and speed difference of a vehicle pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairErrorState {
    /// `s - (tau v + L)` [m].
    pub e_s: f64,
    /// `v_lead - v` [m/s].
    pub e_v: f64,
}

impl PairErrorState {
    pub fn new(e_s: f64, e_v: f64) -> Self {
        Self { e_s, e_v }
    }

    fn as_array(self) -> [f64; 2] {
        [self.e_s, self.e_v]
    }
}

/// Leader acceleration profile driving the pair.
#[derive(Debug, Clone, PartialEq)]
pub enum LeadAcceleration {
    Zero,
    /// `(start, accel)` pieces sorted by start; each value holds until the next
    /// start, the last one indefinitely. Zero before the first start.
    PiecewiseConstant(Vec<(f64, f64)>),
    /// Samples `values[k]` at `t0 + k dt`, linearly interpolated and zero outside.
    Sampled {
        t0: f64,
        dt: f64,
        values: Vec<f64>,
    },
}

impl LeadAcceleration {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            LeadAcceleration::Zero => 0.0,
            LeadAcceleration::PiecewiseConstant(pieces) => pieces
                .iter()
                .take_while(|(start, _)| *start <= t)
                .last()
                .map_or(0.0, |&(_, a)| a),
            LeadAcceleration::Sampled { t0, dt, values } => {
                let u = (t - t0) / dt;
                if values.is_empty() || u < 0.0 || u > (values.len() - 1) as f64 {
                    return 0.0;
                }
                let k = (u.floor() as usize).min(values.len().saturating_sub(2));
                if values.len() == 1 {
                    return values[0];
                }
                let w = u - k as f64;
                values[k] + w * (values[k + 1] - values[k])
            }
        }
    }

    /// `\int_{t0}^{t} a(u) du`.
    pub fn integral(&self, t0: f64, t: f64) -> f64 {
        match self {
            LeadAcceleration::Zero => 0.0,
            LeadAcceleration::PiecewiseConstant(_) => self
                .constant_pieces(t0, t)
                .into_iter()
                .map(|(p, q, a)| a * (q - p))
                .sum(),
            LeadAcceleration::Sampled { .. } => {
                let nodes = self.sample_nodes(t0, t);
                nodes
                    .windows(2)
                    .map(|w| 0.5 * (w[1] - w[0]) * (self.value(w[0]) + self.value(w[1])))
                    .sum()
            }
        }
    }

    /// Sub-intervals `(p, q, a)` of `[t0, t]` on which the profile is constant.
    fn constant_pieces(&self, t0: f64, t: f64) -> Vec<(f64, f64, f64)> {
        let LeadAcceleration::PiecewiseConstant(pieces) = self else {
            return vec![(t0, t, 0.0)];
        };
        let mut cuts = vec![t0];
        cuts.extend(pieces.iter().map(|p| p.0).filter(|&s| s > t0 && s < t));
        cuts.push(t);
        cuts.windows(2)
            .map(|w| (w[0], w[1], self.value(w[0])))
            .collect()
    }

    /// Quadrature nodes on `[t0, t]`: the end points plus every sample time inside.
    fn sample_nodes(&self, t0: f64, t: f64) -> Vec<f64> {
        let mut nodes = vec![t0];
        if let LeadAcceleration::Sampled { t0: s0, dt, values } = self {
            for k in 0..values.len() {
                let tk = s0 + k as f64 * dt;
                if tk > t0 + 1e-12 && tk < t - 1e-12 {
                    nodes.push(tk);
                }
            }
        }
        nodes.push(t);
        nodes
    }
}

/// The constant matrices of the pair error dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairDynamics {
    pub a: Mat2,
    pub d: [f64; 2],
    /// Selects `e_s`.
    pub g0: [f64; 2],
    /// Selects `e_v`.
    pub g1: [f64; 2],
}

impl PairDynamics {
    pub fn new(params: &ControlParams) -> Self {
        let (tau, k_s, k_v) = (params.tau, params.k_s, params.k_v);
        Self {
            a: [[-tau * k_s, 1.0 - tau * k_v], [-k_s, -k_v]],
            d: [0.0, 1.0],
            g0: [1.0, 0.0],
            g1: [0.0, 1.0],
        }
    }

    /// `e^{A t}` in closed form. Writing `A = m I + N` with `m = tr(A)/2`, the
    /// traceless part satisfies `N^2 = delta2 I`, so the exponential is a
    /// combination of `I` and `N` with hyperbolic or circular coefficients.
    pub fn expm(&self, t: f64) -> Mat2 {
        let a = &self.a;
        let m = 0.5 * (a[0][0] + a[1][1]);
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let delta2 = m * m - det;
        let x = delta2 * t * t;
        let (c, s) = if x.abs() < 1e-8 {
            // near-defective: series in delta2 t^2
            (
                1.0 + x / 2.0 + x * x / 24.0,
                t * (1.0 + x / 6.0 + x * x / 120.0),
            )
        } else if delta2 > 0.0 {
            let d = delta2.sqrt();
            ((d * t).cosh(), (d * t).sinh() / d)
        } else {
            let w = (-delta2).sqrt();
            ((w * t).cos(), (w * t).sin() / w)
        };
        let e = (m * t).exp();
        let n = [[a[0][0] - m, a[0][1]], [a[1][0], a[1][1] - m]];
        [
            [e * (c + s * n[0][0]), e * s * n[0][1]],
            [e * s * n[1][0], e * (c + s * n[1][1])],
        ]
    }

    /// `\int_0^h e^{A u} du D`: the response to a unit constant input over `h`.
    fn step_response(&self, h: f64) -> [f64; 2] {
        let a = &self.a;
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let scale = a
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
            .max(1e-300);
        if det.abs() > 1e-6 * scale * scale {
            // A^{-1} (e^{Ah} - I) D
            let ed = mul_vec(&self.expm(h), self.d);
            let r = [ed[0] - self.d[0], ed[1] - self.d[1]];
            let inv = [
                [a[1][1] / det, -a[0][1] / det],
                [-a[1][0] / det, a[0][0] / det],
            ];
            mul_vec(&inv, r)
        } else {
            augmented_integral(a, self.d, h)
        }
    }
}

fn mul_vec(m: &Mat2, v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Top-right block of `exp([[A, D], [0, 0]] h)` by scaling and squaring.
fn augmented_integral(a: &Mat2, d: [f64; 2], h: f64) -> [f64; 2] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = a[i][j] * h;
        }
        m[i][2] = d[i] * h;
    }
    let norm = m
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scale = 2f64.powi(-squarings);
    for row in m.iter_mut() {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let mut result = identity3();
    let mut term = identity3();
    for k in 1..=18 {
        term = mul3(&term, &m);
        for row in term.iter_mut() {
            for v in row.iter_mut() {
                *v /= k as f64;
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul3(&result, &result);
    }
    [result[0][2], result[1][2]]
}

fn identity3() -> [[f64; 3]; 3] {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

fn mul3(x: &[[f64; 3]; 3], y: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = (0..3).map(|k| x[i][k] * y[k][j]).sum();
        }
    }
    r
}

/// Error state at `t` from `z0` at `t0`:
/// `z(t) = e^{A(t-t0)} z0 + \int_{t0}^{t} e^{A(t-u)} D a_lead(u) du`.
///
/// The convolution is exact for piecewise-constant profiles and uses the
/// trapezoidal rule on the sample grid for sampled ones.
pub fn pair_state_analytic(
    z0: PairErrorState,
    a_lead: &LeadAcceleration,
    t0: f64,
    t: f64,
    params: &ControlParams,
) -> Result<PairErrorState> {
    if !(t >= t0) {
        return Err(Error::InvalidParameter(format!(
            "pair solution needs t >= t0, got t = {t}, t0 = {t0}"
        )));
    }
    let dynamics = PairDynamics::new(params);
    let mut z = mul_vec(&dynamics.expm(t - t0), z0.as_array());
    match a_lead {
        LeadAcceleration::Zero => {}
        LeadAcceleration::PiecewiseConstant(_) => {
            for (p, q, acc) in a_lead.constant_pieces(t0, t) {
                if acc == 0.0 {
                    continue;
                }
                let local = dynamics.step_response(q - p);
                let carried = mul_vec(&dynamics.expm(t - q), local);
                z[0] += acc * carried[0];
                z[1] += acc * carried[1];
            }
        }
        LeadAcceleration::Sampled { .. } => {
            let nodes = a_lead.sample_nodes(t0, t);
            let integrand = |u: f64| {
                let e = dynamics.expm(t - u);
                let col = mul_vec(&e, dynamics.d);
                let a = a_lead.value(u);
                [col[0] * a, col[1] * a]
            };
            let mut prev = integrand(nodes[0]);
            for w in nodes.windows(2) {
                let next = integrand(w[1]);
                let h = w[1] - w[0];
                z[0] += 0.5 * h * (prev[0] + next[0]);
                z[1] += 0.5 * h * (prev[1] + next[1]);
                prev = next;
            }
        }
    }
    Ok(PairErrorState {
        e_s: z[0],
        e_v: z[1],
    })
}

/// Absolute spacing `s(t) = e_s - tau e_v + tau (v_lead(t0) + \int a_lead) + L`.
pub fn spacing_analytic(
    z0: PairErrorState,
    a_lead: &LeadAcceleration,
    v_lead0: f64,
    t0: f64,
    t: f64,
    params: &ControlParams,
) -> Result<f64> {
    let z = pair_state_analytic(z0, a_lead, t0, t, params)?;
    let v_lead = v_lead0 + a_lead.integral(t0, t);
    Ok(z.e_s - params.tau * z.e_v + params.tau * v_lead + params.standstill)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rk4(a: &Mat2, z: [f64; 2], h: f64) -> [f64; 2] {
        let f = |y: [f64; 2]| mul_vec(a, y);
        let add = |y: [f64; 2], k: [f64; 2], c: f64| [y[0] + c * k[0], y[1] + c * k[1]];
        let k1 = f(z);
        let k2 = f(add(z, k1, h / 2.0));
        let k3 = f(add(z, k2, h / 2.0));
        let k4 = f(add(z, k3, h));
        [
            z[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
            z[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        ]
    }

    /// RK4 refined by step doubling until successive answers agree.
    fn ode_oracle(a: &Mat2, z0: [f64; 2], t: f64) -> [f64; 2] {
        let solve = |n: usize| (0..n).fold(z0, |z, _| rk4(a, z, t / n as f64));
        let mut n = 16;
        let mut prev = solve(n);
        loop {
            n *= 2;
            let next = solve(n);
            if (next[0] - prev[0]).abs().max((next[1] - prev[1]).abs()) < 1e-13 || n > 1 << 16 {
                return next;
            }
            prev = next;
        }
    }

    #[test]
    fn equilibrium_and_zero_horizon() {
        let p = ControlParams::default();
        for t in [0.0, 1.0, 50.0] {
            let z = pair_state_analytic(
                PairErrorState::default(),
                &LeadAcceleration::Zero,
                0.0,
                t,
                &p,
            )
            .unwrap();
            assert_eq!(z, PairErrorState::default());
            let s = spacing_analytic(
                PairErrorState::default(),
                &LeadAcceleration::Zero,
                10.0,
                0.0,
                t,
                &p,
            )
            .unwrap();
            assert_abs_diff_eq!(s, 17.0, epsilon = 1e-12);
        }
        let z0 = PairErrorState::new(1.5, -0.3);
        let z = pair_state_analytic(
            z0,
            &LeadAcceleration::PiecewiseConstant(vec![(0.0, 2.0)]),
            3.0,
            3.0,
            &p,
        )
        .unwrap();
        assert_eq!(z, z0);
        let s = spacing_analytic(
            PairErrorState::new(2.0, 0.0),
            &LeadAcceleration::Zero,
            10.0,
            0.0,
            0.0,
            &p,
        )
        .unwrap();
        assert_abs_diff_eq!(s, 19.0, epsilon = 1e-12);
        assert!(pair_state_analytic(z0, &LeadAcceleration::Zero, 1.0, 0.5, &p).is_err());
    }

    #[test]
    fn free_response_matches_ode_oracle() {
        let p = ControlParams::default();
        let dynamics = PairDynamics::new(&p);
        let z = pair_state_analytic(
            PairErrorState::new(1.0, 0.0),
            &LeadAcceleration::Zero,
            0.0,
            1.0,
            &p,
        )
        .unwrap();
        let oracle = ode_oracle(&dynamics.a, [1.0, 0.0], 1.0);
        assert_abs_diff_eq!(z.e_s, oracle[0], epsilon = 1e-8);
        assert_abs_diff_eq!(z.e_v, oracle[1], epsilon = 1e-8);
    }

    #[test]
    fn expm_covers_all_eigen_regimes() {
        // complex, real-distinct, and (near-)repeated eigenvalues
        let cases = [
            ControlParams::default(),
            ControlParams {
                k_s: 0.05,
                k_v: 2.0,
                ..ControlParams::default()
            },
            ControlParams {
                k_s: 0.0,
                k_v: 0.0,
                ..ControlParams::default()
            },
            ControlParams {
                k_s: 0.0,
                k_v: 1.0,
                ..ControlParams::default()
            },
        ];
        for p in cases {
            let d = PairDynamics::new(&p);
            for t in [0.1, 1.0, 7.5] {
                let e = d.expm(t);
                let c0 = ode_oracle(&d.a, [1.0, 0.0], t);
                let c1 = ode_oracle(&d.a, [0.0, 1.0], t);
                for i in 0..2 {
                    assert_abs_diff_eq!(e[i][0], c0[i], epsilon = 1e-9);
                    assert_abs_diff_eq!(e[i][1], c1[i], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn step_response_paths_agree() {
        for p in [
            ControlParams::default(),
            ControlParams {
                k_s: 0.3134,
                k_v: 0.4629,
                tau: 1.0883,
                ..ControlParams::default()
            },
        ] {
            let d = PairDynamics::new(&p);
            for h in [0.01, 0.7, 4.0, 20.0] {
                let closed = d.step_response(h);
                let aug = augmented_integral(&d.a, d.d, h);
                assert_abs_diff_eq!(closed[0], aug[0], epsilon = 1e-10);
                assert_abs_diff_eq!(closed[1], aug[1], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn piecewise_and_sampled_convolutions_agree() {
        let p = ControlParams::default();
        let pw = LeadAcceleration::PiecewiseConstant(vec![(1.0, -0.5), (4.0, 0.0)]);
        let dt = 0.001;
        let values: Vec<f64> = (0..=10_000).map(|k| pw.value(k as f64 * dt)).collect();
        let sampled = LeadAcceleration::Sampled {
            t0: 0.0,
            dt,
            values,
        };
        let z0 = PairErrorState::new(0.4, 0.1);
        let exact = pair_state_analytic(z0, &pw, 0.0, 9.0, &p).unwrap();
        let quad = pair_state_analytic(z0, &sampled, 0.0, 9.0, &p).unwrap();
        // the sampled profile ramps linearly across each jump over one dt
        assert_abs_diff_eq!(exact.e_s, quad.e_s, epsilon = 1e-3);
        assert_abs_diff_eq!(exact.e_v, quad.e_v, epsilon = 1e-3);
        assert_abs_diff_eq!(pw.integral(0.0, 9.0), -1.5, epsilon = 1e-12);
        assert_abs_diff_eq!(sampled.integral(0.0, 9.0), -1.5, epsilon = 1e-9);
    }
}

"""Regenerates the synthetic stand-in inputs for the empirical workflow.

openacc_standin.csv: one leader trajectory sampled at 0.1 s with a pronounced
speed dip (about 20 -> 8 -> 18 m/s) plus small seeded measurement-like noise.
param_draws.csv: 400 controller parameter sets scattered around
tau = 1.0883 s, L = 9.655 m, k_s = 0.3134, k_v = 0.4629.

Replace either file with real data of the same layout to run on it.
"""

import numpy as np

rng = np.random.default_rng(7)

dt = 0.1
t = np.arange(0.0, 120.0 + dt / 2, dt)
base = 20.0 - 2.0 * t / 120.0
dip = 12.0 * np.exp(-(((t - 45.0) / 9.0) ** 2))
ripple = 0.8 * np.sin(2 * np.pi * t / 17.0) + 0.4 * np.sin(2 * np.pi * t / 7.3 + 1.0)
noise = np.convolve(rng.normal(0.0, 0.25, t.size), np.ones(5) / 5, mode="same")
v = base - dip + ripple + noise
x = np.concatenate([[0.0], np.cumsum(0.5 * (v[1:] + v[:-1]) * dt)])
a = np.gradient(v, dt)
with open("openacc_standin.csv", "w") as f:
    f.write("t,vehicle_id,x,v,a\n")
    for ti, xi, vi, ai in zip(t, x, v, a):
        f.write(f"{ti:.1f},0,{xi:.4f},{vi:.4f},{ai:.4f}\n")

n = 400
tau = np.clip(rng.normal(1.0883, 0.12, n), 0.6, 2.0)
L = np.clip(rng.normal(9.655, 0.8, n), 5.0, 15.0)
ks = np.clip(rng.normal(0.3134, 0.04, n), 0.15, 0.6)
kv = np.clip(rng.normal(0.4629, 0.06, n), 0.2, 0.9)
with open("param_draws.csv", "w") as f:
    f.write("tau,L,k_s,k_v\n")
    for row in zip(tau, L, ks, kv):
        f.write(",".join(f"{r:.4f}" for r in row) + "\n")

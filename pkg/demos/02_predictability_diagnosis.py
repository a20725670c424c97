#!/usr/bin/env python3
"""Diagnose, before solving anything, whether parallel evaluation will pay.

The largest Lyapunov exponent of the dynamics controls the smallest
singular value of the residual Jacobian and hence the conditioning of the
merit function.  A predictable system (negative exponent) keeps the bounds
flat in the horizon; a chaotic one degrades them exponentially.
"""

import numpy as np

from parseq import SolverConfig, conditioning_report, deer_solve
from parseq.analysis import pl_bounds, tilde_mu
from parseq.systems import mean_field_rnn

T = 400
for g, label in [(0.7, "predictable"), (1.8, "chaotic")]:
    model = mean_field_rnn(D=30, g=g, T=T, seed=0)
    s0 = np.zeros(30)
    rep = conditioning_report(model, s0, seed=0)
    verdict = "yes" if rep.parallelizable() else "no"
    print(f"g={g} ({label}):")
    print(f"  lambda            = {rep.lle:+.4f}")
    print(f"  sqrt(mu) bounds   = [{rep.sqrt_mu_lower:.3e}, {rep.sqrt_mu_upper:.3e}]")
    print(f"  basin radius mu/L = {rep.basin_radius:.3e}")
    print(f"  predicted steps   = {rep.predicted_steps:.1f}")
    print(f"  parallelizable: {verdict}")
    solve = deer_solve(model, s0, SolverConfig(seed=0, max_iters=T))
    print(f"  measured DEER steps = {solve.iterations} (converged={solve.converged})")
    print()

print("How the lower bound decays with the horizon at fixed lambda:")
for lam in (-0.3, 0.0, 0.1):
    mus = [tilde_mu(lam, T) for T in (10, 100, 1000)]
    lo10, _ = pl_bounds(lam, 10)
    print(f"  lambda={lam:+.1f}: tilde_mu at T=10/100/1000 -> "
          + ", ".join(f"{m:.2e}" for m in mus))

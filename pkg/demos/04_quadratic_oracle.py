"""Linear check: H = |u|^2/2 with three fixed impulses.

For a quadratic Hamiltonian the stationarity equations are linear and can be
solved with matrix exponentials.  The discrete critical point is compared
with that closed form.
"""

import numpy as np
from scipy.linalg import expm

from impulsive_duality import builtin, find_critical_point

J = np.array([[0.0, 1.0], [-1.0, 0.0]])


def P(s):
    return -J @ (expm(J * s) - np.eye(2))


sc = builtin("quadratic-impulses")
times = sc.impulses_block["times"]
jumps = np.array(sc.impulses_block["jumps"])
w0 = np.linalg.solve(P(1.0), -sum(0.5 * P(1.0 - x) @ b for x, b in zip(times, jumps)))

res = find_critical_point(sc)
g, V = res.v_star.grids[0], res.v_star.values[0]
print(f"converged: {res.converged}, gradient norm {res.gradient_norm:.1e}")
print("   t    discrete v                  closed form")
for t in (0.1, 0.25, 0.5, 0.75, 0.9):
    exact = P(t) @ w0 + sum(0.5 * P(t - x) @ b for x, b in zip(times, jumps) if x < t)
    d = g.evaluate(V, t)[0]
    print(f"{t:5.2f}   ({d[0]:+.7f}, {d[1]:+.7f})   ({exact[0]:+.7f}, {exact[1]:+.7f})")

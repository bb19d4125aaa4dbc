"""Random impulse times and the expected jump mass.

Samples orbits of the builtin power-law scenario, shows one orbit, and
compares the Monte Carlo estimate of the expected jump mass with its exact
value 4/49 and the two analytic bounds.
"""

from impulsive_duality import analytic_B_bound, builtin, estimate_B, sample_orbits

sc = builtin("example-4.1")
spec = sc.impulse_spec

orbit = sample_orbits(spec, 1, seed=0)[0]
print(f"orbit 0: {orbit.size} impulses, stop reason {orbit.stop_reason!r}")
for j, (t, b) in enumerate(zip(orbit.times[:5], orbit.jumps[:5]), start=1):
    print(f"  xi_{j} = {t:.6f}   jump = ({b[0]:+.6f}, {b[1]:+.6f})")
print(f"  last impulse at {orbit.times[-1]:.6f}, always below 1")

est = estimate_B(spec, 20_000, seed=0, workers=4)
print(f"\nMonte Carlo mass  {est.mc_mean:.6f} +/- {est.mc_stderr:.6f}")
print(f"exact mean        {4 / 49:.6f}")
print(f"bound, tau < d_j  {analytic_B_bound(spec, loose=False):.6f}")
print(f"bound, tau <= 1   {analytic_B_bound(spec):.6f}")

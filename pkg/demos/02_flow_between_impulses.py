"""The Hamiltonian flow of |u|^10 and propagation through impulses.

Circles are invariant and the period scales like |u|^-8.  A path started at
rest stays at rest until the first impulse, then rotates at the radius the
jump gave it.
"""

import math

import numpy as np

from impulsive_duality import PowerLaw, builtin, first_return_time, propagate_orbit

H = PowerLaw(1.0, 10.0)
print("radius   measured period   pi/5 r^-8")
for r in (0.8, 1.0, 1.2):
    print(f"{r:6.2f}   {first_return_time(H, np.array([r, 0.0])):15.10f}   {math.pi / 5 * r**-8:.10f}")

sc = builtin("example-4.1-fixed")
orbit = sc.sampled_orbits(1)[0]
path = propagate_orbit(H, np.zeros(2), orbit)
print("\nthree fixed impulses, start at rest")
for j, (a, b) in enumerate(path.grid.segments):
    r = np.linalg.norm(path.values[a:b], axis=1)
    print(f"  segment {j}: |u| from {r.min():.6f} to {r.max():.6f}")
exact = np.array_equal(path.right_values(), path.left_values() + path.jumps)
print(f"right value == left value + jump at every impulse: {exact}")

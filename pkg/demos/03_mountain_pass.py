"""From hypotheses to a critical point of the dual action.

Checks the growth and size conditions, the mountain-pass geometry, runs the
search on a single fixed orbit, and inspects the recovered state.  The state
from the critical point solves the ODE between impulses, but it jumps by half
of each prescribed jump, so the jump residuals are reported as failures.
"""

from impulsive_duality import (
    builtin,
    find_critical_point,
    mountain_pass_geometry,
    recover_u,
    residuals,
    verify_hypotheses,
)

sc = builtin("example-4.1-fixed")
hyp = verify_hypotheses(builtin("example-4.1"), n_orbits=2000)
print(f"size condition (1 - p/2) a* - B/2 = {hyp.condition_value:.4f}, passed: {hyp.passed}")

geo = mountain_pass_geometry(sc)
print(f"rim radius {geo.rho:.4f}: min chi {geo.rim_lower_bound:.4f} over {geo.rim_samples} samples")
print(f"far loop |e| = {geo.e_norm_used:.3f}: chi = {geo.chi_at_v1:.3f}")

res = find_critical_point(sc, geometry=geo)
print(f"\ncritical level {res.chi_at_vstar:.6f} after {res.iterations} iterations, "
      f"gradient norm {res.gradient_norm:.1e}")

ru = recover_u(res.v_star, sc.hamiltonian)
print(f"|grad H*(v') - J v|: raw {ru.distance:.4f}, segment offsets removed {ru.offset_distance:.4f}")
rep = residuals(ru.u_star, sc)
print(f"ODE residual {rep.ode_residual_sup:.2e}")
for xi, r in zip(rep.impulse_times[0], rep.jump_residuals[0]):
    print(f"  jump residual at {xi:.3f}: {r:.4f}")

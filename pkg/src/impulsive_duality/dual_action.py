"""Energy functional, dual action and its derivative on discretised processes.

Within each segment a process is read as the piecewise-linear interpolant of
its node values, so on a cell ``c = [t_i, t_{i+1}]`` the derivative is the
constant ``d_c = (V_{i+1} - V_i) / h_c`` and the cell value is taken at the
midpoint ``m_c = (V_i + V_{i+1}) / 2``.  For one orbit with jumps ``b_j``::

    chi(V) = 1/2 sum_c h_c (J d_c, m_c) + sum_c h_c H*(t_c, d_c)
             + 1/2 sum_j (V(xi_j^-), b_j)

and the ensemble value is the mean over orbits.  Cells never straddle an
impulse, and ``sum_c h_c d_c`` telescopes exactly over a segment, so
constants pair to zero with Dirichlet test functions as they do in the
continuum.  ``chi_pairing`` is the exact directional derivative of this
discrete functional.

Critical points are searched for in the subspace where ``v`` vanishes at
``0`` and ``T`` and is continuous across impulses (the left and right
nodes of each impulse are tied).  :class:`OrbitFunctional` works in the
coordinates of that subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DirichletError, DomainError
from .function_space import EnsembleProcess, OrbitGrid, coarsen_orbit
from .hamiltonian import apply_j
from .impulse_process import SampleOrbit

__all__ = [
    "ChiReport",
    "OrbitFunctional",
    "orbit_jumps",
    "phi",
    "chi",
    "chi_pairing",
    "chi_gradient",
    "build_functionals",
]


def orbit_jumps(grid: OrbitGrid, orbit: SampleOrbit) -> np.ndarray:
    """Jumps of ``orbit`` as seen on ``grid`` (after the grid's coarsening)."""
    if orbit is None:
        if grid.impulse_times.size:
            raise DomainError("grid has impulses but no orbit was given")
        return np.zeros((0, 0))
    if not math.isclose(orbit.horizon, grid.horizon):
        raise DomainError("orbit horizon differs from the grid horizon")
    merged = coarsen_orbit(orbit, grid.spec)
    if not np.array_equal(merged.times, grid.impulse_times):
        raise DomainError("orbit impulse times do not match the process grid")
    return np.array(merged.jumps, dtype=float)


def _pairs(v: EnsembleProcess, orbits: Optional[Sequence[SampleOrbit]]):
    if orbits is None:
        orbits = [None] * v.n_orbits
    if len(orbits) != v.n_orbits:
        raise DomainError(f"{len(orbits)} orbits for a {v.n_orbits}-orbit process")
    return [(g, x, orbit_jumps(g, o)) for g, x, o in zip(v.grids, v.values, orbits)]


def _impulse_sum(values, nodes, jumps) -> float:
    if len(nodes) == 0:
        return 0.0
    return float(np.einsum("ij,ij->", values[nodes], jumps))


def _orbit_terms(grid, V, spec, jumps):
    h = grid.cell_lengths
    d, m = grid.cell_diff @ V, grid.cell_mean @ V
    sym = 0.5 * float(h @ np.einsum("ij,ij->i", apply_j(d), m))
    conj = float(h @ np.asarray(spec.conj_value(grid.cell_times, d), dtype=float))
    imp = 0.5 * _impulse_sum(V, grid.left_nodes, jumps)
    return sym, conj, imp


def _orbit_euclid_grad(grid, V, spec, jumps):
    """Gradient of the discrete chi with respect to every node value."""
    h = grid.cell_lengths[:, None]
    B, A = grid.cell_diff, grid.cell_mean
    d, m = B @ V, A @ V
    G = 0.5 * (A.T @ (h * apply_j(d))) - 0.5 * (B.T @ (h * apply_j(m)))
    G += B.T @ (h * np.asarray(spec.conj_grad(grid.cell_times, d), dtype=float))
    if len(grid.left_nodes):
        np.add.at(G, grid.left_nodes, 0.5 * jumps)
    return G


def _orbit_pairing(grid, V, H, spec, jumps):
    h = grid.cell_lengths
    B, A = grid.cell_diff, grid.cell_mean
    d, m = B @ V, A @ V
    a = 0.5 * (h @ np.einsum("ij,ij->i", apply_j(d), A @ H))
    star = np.asarray(spec.conj_grad(grid.cell_times, d), dtype=float) - 0.5 * apply_j(m)
    b = h @ np.einsum("ij,ij->i", star, B @ H)
    return math.fsum([float(a), float(b), 0.5 * _impulse_sum(H, grid.left_nodes, jumps)])


class OrbitFunctional:
    """Discrete dual action of one orbit on the tied Dirichlet subspace.

    Degrees of freedom are the node values with the two boundary nodes
    removed and the left/right nodes of each impulse merged.  ``x`` has
    shape ``(n_dof, d)``.

    Parameters
    ----------
    grid : OrbitGrid
    spec : Hamiltonian
        Needs ``conj_value``, ``conj_grad`` and (for :meth:`hessian`)
        ``conj_hess``.
    jumps : ndarray, shape (n_impulses, d)
    """

    def __init__(self, grid: OrbitGrid, spec, jumps, dimension: int):
        self.grid, self.spec, self.dimension = grid, spec, int(dimension)
        self.jumps = np.asarray(jumps, dtype=float).reshape(-1, self.dimension)
        if len(self.jumps) != len(grid.left_nodes):
            raise DomainError("one jump per impulse node is required")
        n = grid.n_nodes
        dof = np.full(n, -1, dtype=int)
        k = 0
        right = set(grid.right_nodes.tolist())
        pair = dict(zip(grid.right_nodes.tolist(), grid.left_nodes.tolist()))
        for i in range(1, n - 1):
            if i in right:
                dof[i] = dof[pair[i]]
            else:
                dof[i] = k
                k += 1
        self.dof_of_node = dof
        self.n_dof = k
        live = np.flatnonzero(dof >= 0)
        self.embed = sp.csr_matrix((np.ones(len(live)), (live, dof[live])), shape=(n, k))
        self.mass = np.asarray(self.embed.T @ grid.quadrature_weights()).ravel()
        if np.any(self.mass <= 0):
            raise DomainError("degenerate grid: a degree of freedom has zero weight")
        self._sobolev = None

    # coordinates -------------------------------------------------------
    def to_nodes(self, x) -> np.ndarray:
        return self.embed @ np.asarray(x, dtype=float).reshape(self.n_dof, self.dimension)

    def from_nodes(self, V) -> np.ndarray:
        """Node values averaged into the subspace (exact for tied Dirichlet values)."""
        counts = np.asarray(self.embed.sum(axis=0)).ravel()
        return (self.embed.T @ np.asarray(V, dtype=float)) / counts[:, None]

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n_dof, self.dimension))

    # functional --------------------------------------------------------
    def terms(self, x):
        return _orbit_terms(self.grid, self.to_nodes(x), self.spec, self.jumps)

    def value(self, x) -> float:
        return math.fsum(self.terms(x))

    def gradient(self, x) -> np.ndarray:
        """Euclidean gradient in the ``x`` coordinates."""
        G = _orbit_euclid_grad(self.grid, self.to_nodes(x), self.spec, self.jumps)
        return self.embed.T @ G

    def riesz(self, x) -> np.ndarray:
        """Riesz representative for the weighted L2 product ``sum m_k (g_k, h_k)``."""
        return self.gradient(x) / self.mass[:, None]

    def gradient_norm(self, x) -> float:
        g = self.gradient(x)
        return math.sqrt(float(np.sum(g * g / self.mass[:, None])))

    def dot(self, a, b) -> float:
        return float(np.sum(self.mass[:, None] * a * b))

    def hessian(self, x) -> np.ndarray:
        """Dense Hessian of the discrete functional in flattened ``x`` coordinates."""
        d = self.dimension
        g = self.grid
        V = self.to_nodes(x)
        B, A = g.cell_diff, g.cell_mean
        Hc = sp.diags(g.cell_lengths)
        J = np.stack([apply_j(row) for row in np.eye(d)], axis=1)
        sym = sp.kron(0.5 * (A.T @ Hc @ B - B.T @ Hc @ A), J)
        hess = np.asarray(self.spec.conj_hess(g.cell_times, B @ V), dtype=float)
        block = sp.block_diag(list(g.cell_lengths[:, None, None] * hess))
        Bk = sp.kron(B, sp.identity(d))
        full = sym + Bk.T @ block @ Bk
        E = sp.kron(self.embed, sp.identity(d))
        return np.asarray((E.T @ full @ E).todense())

    def sobolev_solve(self, r) -> np.ndarray:
        """Solve ``(M + K) s = r`` in the subspace, ``K`` the P1 stiffness (an H^1 metric)."""
        if self._sobolev is None:
            g = self.grid
            W = sp.diags(g.quadrature_weights())
            K = g.cell_diff.T @ sp.diags(g.cell_lengths) @ g.cell_diff
            A = self.embed.T @ (W + K) @ self.embed
            self._sobolev = splu(sp.csc_matrix(A))
        return self._sobolev.solve(np.asarray(r, dtype=float))

    def sobolev_dot(self, a, b) -> float:
        g = self.grid
        W = g.quadrature_weights()[:, None]
        A, B = self.to_nodes(a), self.to_nodes(b)
        dA, dB = g.cell_diff @ A, g.cell_diff @ B
        return float(np.sum(W * A * B) + np.sum(g.cell_lengths[:, None] * dA * dB))


def build_functionals(v_or_grids, spec, orbits=None, dimension: Optional[int] = None):
    """One :class:`OrbitFunctional` per orbit of a process (or per grid)."""
    if isinstance(v_or_grids, EnsembleProcess):
        grids, dimension = v_or_grids.grids, v_or_grids.dimension
    else:
        grids = tuple(v_or_grids)
    if orbits is None:
        orbits = [None] * len(grids)
    out = []
    for g, o in zip(grids, orbits):
        jumps = orbit_jumps(g, o)
        out.append(OrbitFunctional(g, spec, jumps.reshape(-1, dimension), dimension))
    return out


@dataclass(frozen=True)
class ChiReport:
    """Dual action value and its three terms (ensemble means)."""

    chi_value: float
    term_symplectic: float
    term_conjugate: float
    term_impulse: float
    gradient_norm: float

    def to_dict(self):
        return {
            "chi_value": self.chi_value,
            "term_symplectic": self.term_symplectic,
            "term_conjugate": self.term_conjugate,
            "term_impulse": self.term_impulse,
            "gradient_norm": self.gradient_norm,
        }


def _mean(xs) -> float:
    xs = list(xs)
    return math.fsum(xs) / len(xs)


def phi(u: EnsembleProcess, spec, orbits=None) -> float:
    """Energy functional ``E[-1/2 int (Ju', u) - int H(t, u) - 1/2 sum (J u(xi_j^-), b_j)]``.

    The symplectic term uses the cell form of :func:`chi`; the potential
    term uses the grid quadrature on node values.
    """
    parts = []
    for g, U, jumps in _pairs(u, orbits):
        h = g.cell_lengths
        d, m = g.cell_diff @ U, g.cell_mean @ U
        sym = -0.5 * float(h @ np.einsum("ij,ij->i", apply_j(d), m))
        pot = -float(g.quadrature_weights() @ np.asarray(spec.value(g.times, U), dtype=float))
        imp = -0.5 * _impulse_sum(apply_j(U), g.left_nodes, jumps.reshape(-1, U.shape[1]))
        parts.append(math.fsum([sym, pot, imp]))
    return _mean(parts)


def chi(v: EnsembleProcess, spec, orbits=None, with_gradient: bool = True) -> ChiReport:
    """Dual action with its term breakdown.

    ``gradient_norm`` is the norm of the Riesz gradient on the tied
    Dirichlet subspace (NaN when ``with_gradient`` is false).
    """
    terms = [
        _orbit_terms(g, V, spec, jumps.reshape(-1, V.shape[1]))
        for g, V, jumps in _pairs(v, orbits)
    ]
    sym = _mean(t[0] for t in terms)
    conj = _mean(t[1] for t in terms)
    imp = _mean(t[2] for t in terms)
    gnorm = math.nan
    if with_gradient:
        fs = build_functionals(v, spec, orbits)
        gnorm = math.sqrt(_mean(_riesz_sq(f, V) for f, V in zip(fs, v.values)))
    return ChiReport(math.fsum([sym, conj, imp]), sym, conj, imp, gnorm)


def _riesz_sq(f: OrbitFunctional, V) -> float:
    G = f.embed.T @ _orbit_euclid_grad(f.grid, V, f.spec, f.jumps)
    return float(np.sum(G * G / f.mass[:, None]))


def _check_dirichlet(h: EnsembleProcess, tol: float = 1e-12):
    for g, H in zip(h.grids, h.values):
        scale = 1.0 + float(np.max(np.abs(H))) if H.size else 1.0
        if np.max(np.abs(H[g.boundary_nodes])) > tol * scale:
            raise DirichletError("test function must vanish at t=0 and t=T")


def chi_pairing(v: EnsembleProcess, h: EnsembleProcess, spec, orbits=None) -> float:
    """``(chi'(v), h)``: the directional derivative of the discrete ``chi``."""
    v._check_compatible(h)
    _check_dirichlet(h)
    parts = [
        _orbit_pairing(g, V, H, spec, jumps.reshape(-1, V.shape[1]))
        for (g, V, jumps), H in zip(_pairs(v, orbits), h.values)
    ]
    return _mean(parts)


def chi_gradient(v: EnsembleProcess, spec, orbits=None) -> EnsembleProcess:
    """Riesz representative of ``chi'(v)`` in the tied Dirichlet subspace.

    ``inner_product(chi_gradient(v), h) == chi_pairing(v, h)`` for every
    ``h`` vanishing at the ends and continuous across impulses.
    """
    fs = build_functionals(v, spec, orbits)
    vals = []
    for f, g, V in zip(fs, v.grids, v.values):
        G = _orbit_euclid_grad(g, V, spec, f.jumps)
        vals.append(f.embed @ ((f.embed.T @ G) / f.mass[:, None]))
    return EnsembleProcess(v.grids, tuple(vals), dirichlet=True)

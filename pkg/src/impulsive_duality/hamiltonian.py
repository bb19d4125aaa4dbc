"""Hamiltonians, the symplectic map ``J`` and the Legendre transform.

Two kinds are supported.  :class:`PowerLaw` is ``H(u) = alpha |u|^q`` with
``q > 2`` and a closed-form conjugate ``H*(v) = alpha* |v|^p``.
:class:`CallableHamiltonian` wraps user callables; its conjugate is computed
by maximising the concave function ``u -> (v, u) - H(t, u)``.

All evaluation routines act on the last axis, so ``u`` may be a single
vector of length ``2n`` or an array of shape ``(..., 2n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError

__all__ = [
    "SymplecticForm",
    "apply_j",
    "conjugate_exponent",
    "alpha_star",
    "PowerLaw",
    "CallableHamiltonian",
    "quadratic_hamiltonian",
    "zero_hamiltonian",
    "h_value",
    "h_grad",
    "legendre_value",
    "legendre_grad",
    "legendre_hess",
    "DualityReport",
    "check_duality_inequalities",
]


def apply_j(u):
    """``J u = (u_{n+1..2n}, -u_{1..n})`` along the last axis."""
    u = np.asarray(u, dtype=float)
    d = u.shape[-1]
    if d % 2:
        raise DomainError(f"J needs an even dimension, got {d}")
    n = d // 2
    return np.concatenate((u[..., n:], -u[..., :n]), axis=-1)


@dataclass(frozen=True)
class SymplecticForm:
    """The standard symplectic matrix ``[[0, I_n], [-I_n, 0]]``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("half dimension must be >= 1")

    @property
    def dimension(self) -> int:
        return 2 * self.n

    def matrix(self) -> np.ndarray:
        n = self.n
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -np.eye(n)
        return J

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[-1] != 2 * self.n:
            raise DomainError(f"expected last axis {2 * self.n}, got {u.shape[-1]}")
        return apply_j(u)


def conjugate_exponent(q: float) -> float:
    return q / (q - 1.0)


def alpha_star(alpha: float, q: float) -> float:
    """Coefficient of the conjugate of ``alpha |u|^q``: ``(alpha q)^(-p/q) / p``."""
    p = conjugate_exponent(q)
    return (alpha * q) ** (-p / q) / p


def _check_finite(x, what):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError(f"{what} must be finite")
    return x


def _norm(x):
    return np.linalg.norm(x, axis=-1)


@dataclass(frozen=True)
class PowerLaw:
    """``H(t, u) = alpha |u|^q`` (Euclidean norm), ``alpha > 0``, ``q > 2``."""

    alpha: float
    q: float
    kind = "power"
    autonomous = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if not self.q > 2:
            raise ConfigurationError("power-law Hamiltonians need q > 2")

    @property
    def p(self) -> float:
        return conjugate_exponent(self.q)

    @property
    def alpha_star(self) -> float:
        return alpha_star(self.alpha, self.q)

    @property
    def m_star(self) -> float:
        """Maximum of ``H*`` on the unit sphere."""
        return self.alpha_star

    @property
    def certificate(self):
        return (self.alpha, self.q)

    def value(self, t, u):
        u = _check_finite(u, "u")
        return self.alpha * _norm(u) ** self.q

    def grad(self, t, u):
        u = _check_finite(u, "u")
        r = _norm(u)[..., None]
        return self.alpha * self.q * r ** (self.q - 2.0) * u

    def conjugate(self, t, v):
        """``(H*(v), grad H*(v))``; the gradient is 0 at the origin."""
        v = _check_finite(v, "v")
        r = _norm(v)
        p = self.p
        val = self.alpha_star * r**p
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, (self.alpha * self.q) ** (-(p - 1.0)) * r ** (p - 2.0), 0.0)
        return val, scale[..., None] * v

    def conj_value(self, t, v):
        return self.conjugate(t, v)[0]

    def conj_grad(self, t, v):
        return self.conjugate(t, v)[1]

    def conj_hess(self, t, v, floor: float = 1e-12):
        """Hessian of ``H*``; radii below ``floor`` are clipped to ``floor``."""
        v = _check_finite(v, "v")
        p = self.p
        r = np.maximum(_norm(v), floor)
        vhat = v / r[..., None]
        c = (self.alpha * self.q) ** (-(p - 1.0)) * r ** (p - 2.0)
        eye = np.eye(v.shape[-1])
        outer = vhat[..., :, None] * vhat[..., None, :]
        return c[..., None, None] * (eye + (p - 2.0) * outer)

    def to_dict(self):
        return {"kind": "power", "alpha": self.alpha, "q": self.q}


class CallableHamiltonian:
    """Hamiltonian given by callables ``value(t, u)`` and ``gradient(t, u)``.

    Parameters
    ----------
    value, gradient : callable
        ``H`` and ``grad_u H``.  With ``vectorized=True`` they accept arrays
        of shape ``(m, 2n)`` together with ``t`` of shape ``(m,)``.
    hessian : callable, optional
        ``grad_u^2 H``; enables Newton steps in the conjugate solver.
    certificate : (alpha, q), optional
        Constants for which the caller asserts ``q H <= (grad H, u)`` and
        ``H <= alpha |u|^q``.
    """

    kind = "callable"

    def __init__(self, value, gradient, hessian=None, *, dimension, vectorized=False,
                 certificate=None, autonomous=True, name="callable", tol=1e-10, max_iter=10_000):
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.dimension = int(dimension)
        self.vectorized = vectorized
        self.certificate = certificate
        self.autonomous = autonomous
        self.name = name
        self.tol = tol
        self.max_iter = max_iter

    def _call(self, fn, t, u, out_shape):
        u = np.asarray(u, dtype=float)
        lead = u.shape[:-1]
        flat = u.reshape(-1, u.shape[-1])
        tt = np.broadcast_to(np.asarray(t, dtype=float), lead).reshape(-1)
        if self.vectorized:
            res = np.asarray(fn(tt, flat), dtype=float)
        else:
            res = np.array([np.asarray(fn(ti, ui), dtype=float) for ti, ui in zip(tt, flat)])
        return res.reshape(lead + out_shape)

    def value(self, t, u):
        u = _check_finite(u, "u")
        return self._call(self._value, t, u, ())

    def grad(self, t, u):
        u = _check_finite(u, "u")
        return self._call(self._gradient, t, u, (u.shape[-1],))

    def hess(self, t, u, step=1e-6):
        """Hessian of ``H``; central differences of ``grad`` (relative step) if none is given."""
        u = _check_finite(u, "u")
        d = u.shape[-1]
        if self._hessian is not None:
            return self._call(self._hessian, t, u, (d, d))
        h = step * (1.0 + _norm(u))[..., None]
        cols = []
        for k in range(d):
            e = np.zeros(d)
            e[k] = 1.0
            cols.append((self.grad(t, u + h * e) - self.grad(t, u - h * e)) / (2 * h))
        return np.stack(cols, axis=-1)

    def _maximiser(self, t, v):
        """Batched maximisation of ``(v,u) - H(t,u)``; returns ``u*`` rows.

        Newton steps on the stationarity residual ``v - grad H(u)`` (finite
        difference Hessian when none is given), halved until the residual
        norm drops; rows whose Newton system is singular fall back to the
        plain ascent direction ``v - grad H(u)``.
        """
        v = np.asarray(v, dtype=float)
        u = v.copy()
        vnorm = _norm(v)
        r = v - self.grad(t, u)
        res = _norm(r)
        for it in range(self.max_iter):
            active = res >= self.tol * (1.0 + vnorm)
            if not active.any():
                return u
            idx = np.flatnonzero(active)
            hs = self.hess(t[idx], u[idx])
            direction = np.empty((len(idx), v.shape[1]))
            for k, (h, rk) in enumerate(zip(hs, r[idx])):
                try:
                    direction[k] = np.linalg.solve(h, rk)
                except np.linalg.LinAlgError:
                    direction[k] = rk
            lam = np.ones(len(idx))
            done = np.zeros(len(idx), dtype=bool)
            for _ in range(60):
                trial = u[idx] + lam[:, None] * direction
                rt = v[idx] - self.grad(t[idx], trial)
                nt = _norm(rt)
                good = ~done & (nt < (1.0 - 1e-4 * lam) * res[idx])
                rows = idx[good]
                u[rows], r[rows], res[rows] = trial[good], rt[good], nt[good]
                done |= good
                if done.all():
                    break
                lam[~done] *= 0.5
            if not done.all():
                break
        raise NumericalError(
            "Legendre transform: inner maximisation did not converge",
            max_residual=float(np.max(res)),
            iterations=it + 1,
        )

    def conjugate(self, t, v):
        v = _check_finite(v, "v")
        lead = v.shape[:-1]
        flat = v.reshape(-1, v.shape[-1])
        tt = np.broadcast_to(np.asarray(t, dtype=float), lead).reshape(-1)
        u = self._maximiser(tt, flat)
        val = np.einsum("ij,ij->i", flat, u) - self.value(tt, u)
        return val.reshape(lead), u.reshape(v.shape)

    def conj_value(self, t, v):
        return self.conjugate(t, v)[0]

    def conj_grad(self, t, v):
        return self.conjugate(t, v)[1]

    def conj_hess(self, t, v):
        _, u = self.conjugate(t, v)
        return np.linalg.inv(self.hess(t, u))

    def to_dict(self):
        return {"kind": self.name}


def quadratic_hamiltonian(dimension: int = 2) -> CallableHamiltonian:
    """``H(u) = |u|^2 / 2`` as a (vectorised) callable Hamiltonian."""
    d = int(dimension)
    return CallableHamiltonian(
        lambda t, u: 0.5 * np.einsum("ij,ij->i", u, u),
        lambda t, u: u.copy(),
        lambda t, u: np.broadcast_to(np.eye(d), u.shape + (d,)).copy(),
        dimension=d,
        vectorized=True,
        certificate=(0.5, 2.0),
        name="quadratic",
    )


def zero_hamiltonian(dimension: int = 2) -> CallableHamiltonian:
    """``H = 0``; the flow is constant.  It has no finite conjugate."""
    return CallableHamiltonian(
        lambda t, u: np.zeros(len(u)),
        lambda t, u: np.zeros_like(u),
        dimension=dimension,
        vectorized=True,
        name="zero",
    )


def h_value(spec, t, u):
    return spec.value(t, u)


def h_grad(spec, t, u):
    return spec.grad(t, u)


def legendre_value(spec, t, v):
    return spec.conj_value(t, v)


def legendre_grad(spec, t, v):
    return spec.conj_grad(t, v)


def legendre_hess(spec, t, v):
    return spec.conj_hess(t, v)


@dataclass(frozen=True)
class DualityReport:
    """Minimum relative slack of each inequality over the samples.

    Slacks are ``(rhs - lhs) / max(1, |lhs|, |rhs|)`` so that rounding in
    large powers does not masquerade as a violation.
    """

    superquadratic: float  # (grad H(u), u) - q H(u)
    growth: float  # alpha |u|^q - H(u)
    conj_homogeneity: float  # p H*(v) - (grad H*(v), v)
    conj_upper: float  # M* |v|^p - H*(v), |v| >= 1
    conj_lower: float  # H*(v) - alpha* |v|^p
    m_star: float
    samples: int

    def slacks(self) -> dict:
        return {
            "superquadratic": self.superquadratic,
            "growth": self.growth,
            "conj_homogeneity": self.conj_homogeneity,
            "conj_upper": self.conj_upper,
            "conj_lower": self.conj_lower,
        }

    def passed(self, tol: float = 1e-10) -> bool:
        return all(s >= -tol for s in self.slacks().values())


def _rel(big, small):
    return (big - small) / np.maximum(1.0, np.maximum(np.abs(big), np.abs(small)))


def _sample_vectors(rng, samples, d, lo, hi):
    x = rng.standard_normal((samples, d))
    x /= _norm(x)[:, None]
    r = np.exp(rng.uniform(math.log(lo), math.log(hi), samples))
    return x * r[:, None]


def check_duality_inequalities(spec, samples: int, seed: int, certificate=None,
                               radius=(1e-2, 10.0), t: float = 0.0) -> DualityReport:
    """Sample two growth conditions on ``H`` and the three bounds they imply for ``H*``."""
    cert = certificate if certificate is not None else getattr(spec, "certificate", None)
    if cert is None:
        raise ConfigurationError("a growth certificate (alpha, q) is required")
    alpha, q = map(float, cert)
    if not q > 2:
        raise ConfigurationError(f"growth exponent must exceed 2, got q={q}")
    p = conjugate_exponent(q)
    a_star = alpha_star(alpha, q)
    d = spec.dimension if hasattr(spec, "dimension") else 2
    rng = np.random.default_rng(seed)
    u = _sample_vectors(rng, samples, d, *radius)
    v = _sample_vectors(rng, samples, d, *radius)

    H = spec.value(t, u)
    gu = np.einsum("ij,ij->i", spec.grad(t, u), u)
    superquadratic = _rel(gu, q * H)
    growth = _rel(alpha * _norm(u) ** q, H)

    Hs, gHs = spec.conjugate(t, v)
    gv = np.einsum("ij,ij->i", gHs, v)
    conj_homog = _rel(p * Hs, gv)

    if isinstance(spec, PowerLaw):
        m_star = spec.m_star
    else:
        sphere = _sample_vectors(rng, 1000, d, 1.0, 1.0)
        m_star = float(np.max(spec.conj_value(t, sphere)))
    vr = _norm(v)
    big = vr >= 1.0
    conj_upper = _rel(m_star * vr[big] ** p, Hs[big]) if big.any() else np.array([np.inf])
    conj_lower = _rel(Hs, a_star * vr**p)
    return DualityReport(
        float(np.min(superquadratic)),
        float(np.min(growth)),
        float(np.min(conj_homog)),
        float(np.min(conj_upper)),
        float(np.min(conj_lower)),
        float(m_star),
        int(samples),
    )

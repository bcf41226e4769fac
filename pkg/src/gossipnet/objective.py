"""Local objectives, their Fenchel conjugates, and primal/dual error metrics.

Node fields are ``(n, d)`` float arrays, one ``d``-vector per node. The dual
iterate ``v`` lives on the nodes; its primal surrogate is ``x_i = grad f_i^*(v_i)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameter, NumericFailure


@dataclass(frozen=True)
class QuadraticLocal:
    """``f(x) = (a/2) ||x - c||^2``, so ``sigma = L = a``."""

    a: float
    c: np.ndarray

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidParameter(f"curvature must be positive, got {self.a}")
        object.__setattr__(self, "c", np.atleast_1d(np.asarray(self.c, dtype=float)))

    @property
    def sigma(self):
        return self.a

    @property
    def L(self):
        return self.a

    @property
    def dim(self):
        return self.c.shape[0]

    def value(self, x):
        r = np.asarray(x) - self.c
        return 0.5 * self.a * float(r @ r)

    def grad(self, x):
        return self.a * (np.asarray(x, dtype=float) - self.c)

    def conj_grad(self, v):
        return np.asarray(v, dtype=float) / self.a + self.c

    def conj_value(self, v):
        v = np.asarray(v, dtype=float)
        return float(v @ v) / (2.0 * self.a) + float(v @ self.c)


@dataclass(frozen=True)
class CustomSmoothLocal:
    """A smooth strongly convex function given by oracles.

    ``fun`` and ``grad`` map a ``d``-vector to a float and a ``d``-vector.
    ``hess`` is optional; without it the Newton solve uses a forward-difference
    Jacobian of ``grad``.
    """

    fun: Callable
    grad_fn: Callable
    sigma: float
    L: float
    dim: int = 1
    hess: Optional[Callable] = None
    tol: float = 1e-12
    max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.sigma <= self.L:
            raise InvalidParameter(f"need 0 < sigma <= L, got sigma={self.sigma}, L={self.L}")

    def value(self, x):
        return float(self.fun(np.asarray(x, dtype=float)))

    def grad(self, x):
        return np.atleast_1d(np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float))

    def _jacobian(self, x):
        if self.hess is not None:
            return np.atleast_2d(np.asarray(self.hess(x), dtype=float))
        g0 = self.grad(x)
        jac = np.empty((self.dim, self.dim))
        for k in range(self.dim):
            h = 1e-7 * max(1.0, abs(x[k]))
            xp = x.copy()
            xp[k] += h
            jac[:, k] = (self.grad(xp) - g0) / h
        return jac

    def conj_grad(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if self.dim == 1:
            return self._solve_scalar(v)
        return self._solve_newton(v)

    def _solve_scalar(self, v):
        # strong convexity brackets the root of grad(x) - v within |r(0)|/sigma of 0
        def resid(x):
            return float(self.grad(np.array([x]))[0] - v[0])

        x = 0.0
        r = resid(x)
        span = abs(r) / self.sigma
        lo, hi = x - span, x + span
        scale = max(1.0, abs(v[0]))
        for _ in range(self.max_iter):
            if abs(r) <= self.tol * scale:
                return np.array([x])
            if r > 0:
                hi = x
            else:
                lo = x
            jac = float(self._jacobian(np.array([x]))[0, 0])
            step = x - r / jac if jac > 0 else 0.5 * (lo + hi)
            x = step if lo < step < hi else 0.5 * (lo + hi)
            r = resid(x)
            if hi - lo <= 4 * np.finfo(float).eps * max(1.0, abs(x)):
                return np.array([x])
        raise NumericFailure("conjugate-gradient solve did not converge", abs(r))

    def _solve_newton(self, v):
        x = np.zeros(self.dim)
        r = self.grad(x) - v
        scale = max(1.0, float(np.linalg.norm(v)))
        for _ in range(self.max_iter):
            nr = float(np.linalg.norm(r))
            if nr <= self.tol * scale:
                return x
            step = np.linalg.solve(self._jacobian(x), r)
            t = 1.0
            while t > 1e-8:
                x_new = x - t * step
                r_new = self.grad(x_new) - v
                if np.linalg.norm(r_new) < nr:
                    break
                t *= 0.5
            else:
                # damped Newton stalled; a 1/L gradient step still contracts
                x_new = x - r / self.L
                r_new = self.grad(x_new) - v
            x, r = x_new, r_new
        raise NumericFailure("conjugate-gradient solve did not converge", float(np.linalg.norm(r)))

    def conj_value(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        x = self.conj_grad(v)
        return float(x @ v) - self.value(x)


@dataclass(frozen=True)
class ProblemInstance:
    """One local function per node, all on ``R^d``."""

    locals: tuple
    dim: int = field(init=False)

    def __post_init__(self):
        if len(self.locals) < 1:
            raise InvalidParameter("instance needs at least one node")
        dims = {f.dim for f in self.locals}
        if len(dims) != 1:
            raise InvalidParameter(f"local functions disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "locals", tuple(self.locals))
        object.__setattr__(self, "dim", dims.pop())

    @property
    def n(self):
        return len(self.locals)

    @property
    def sigmas(self):
        return np.array([f.sigma for f in self.locals], dtype=float)

    @property
    def smoothness(self):
        return np.array([f.L for f in self.locals], dtype=float)

    @property
    def sigma_min(self):
        return float(self.sigmas.min())

    @property
    def L_max(self):
        return float(self.smoothness.max())

    @property
    def is_quadratic(self):
        return all(isinstance(f, QuadraticLocal) for f in self.locals)

    def quadratic_arrays(self):
        """``(a, c)`` with shapes ``(n,)`` and ``(n, d)``; quadratic instances only."""
        if not self.is_quadratic:
            raise InvalidParameter("instance is not purely quadratic")
        a = np.array([f.a for f in self.locals], dtype=float)
        c = np.stack([f.c for f in self.locals])
        return a, c

    def zeros(self):
        return np.zeros((self.n, self.dim))


def quadratic_instance(curvatures, centers):
    """Build ``f_i(x) = (a_i/2)||x - c_i||^2`` from a scalar/array of curvatures and an ``(n, d)`` array."""
    c = np.asarray(centers, dtype=float)
    if c.ndim == 1:
        c = c[:, None]
    a = np.broadcast_to(np.asarray(curvatures, dtype=float), (c.shape[0],))
    return ProblemInstance(tuple(QuadraticLocal(float(ai), ci) for ai, ci in zip(a, c)))


def averaging_instance(n, dim=1, curvature=1.0):
    """The worst-case mixing instance: ``c_0 = 1`` and ``c_i = 0`` otherwise."""
    c = np.zeros((n, dim))
    c[0, :] = 1.0
    return quadratic_instance(curvature, c)


def conj_grad(instance, i, v_i):
    return instance.locals[i].conj_grad(v_i)


def conj_value(instance, i, v_i):
    return instance.locals[i].conj_value(v_i)


def _check_field(instance, v):
    v = np.asarray(v, dtype=float)
    if v.shape != (instance.n, instance.dim):
        raise InvalidParameter(f"node field must have shape {(instance.n, instance.dim)}, got {v.shape}")
    return v


def dual_value(instance, v):
    """``F^*(v) = sum_i f_i^*(v_i)``."""
    v = _check_field(instance, v)
    if instance.is_quadratic:
        a, c = instance.quadratic_arrays()
        return float(np.sum(np.sum(v * v, axis=1) / (2 * a) + np.sum(v * c, axis=1)))
    return float(sum(f.conj_value(vi) for f, vi in zip(instance.locals, v)))


def primal_point(instance, v):
    v = _check_field(instance, v)
    if instance.is_quadratic:
        a, c = instance.quadratic_arrays()
        return v / a[:, None] + c
    return np.stack([f.conj_grad(vi) for f, vi in zip(instance.locals, v)])


@dataclass(frozen=True)
class Optimum:
    x: np.ndarray
    v: np.ndarray
    dual_value: float


def optimum(instance, tol=1e-12, max_iter=1_000_000):
    """Consensus minimiser ``x*``, the dual optimum ``v*_i = grad f_i(x*)`` and ``F^*(v*)``.

    Non-quadratic instances use centralised gradient descent on the average
    ``(1/n) sum_i f_i`` with step ``1/L_max``.
    """
    if instance.is_quadratic:
        a, c = instance.quadratic_arrays()
        x = (a[:, None] * c).sum(axis=0) / a.sum()
        v = a[:, None] * (x[None, :] - c)
    else:
        x = np.zeros(instance.dim)
        step = 1.0 / instance.L_max
        g = np.mean([f.grad(x) for f in instance.locals], axis=0)
        for _ in range(max_iter):
            if np.linalg.norm(g) <= tol:
                break
            x = x - step * g
            g = np.mean([f.grad(x) for f in instance.locals], axis=0)
        else:
            raise NumericFailure("centralised gradient descent did not converge", float(np.linalg.norm(g)))
        v = np.stack([f.grad(x) for f in instance.locals])
        # v* is the zero-sum projection; remove the O(tol) residual
        v -= v.mean(axis=0, keepdims=True)
    return Optimum(x, v, dual_value(instance, v))


def dual_gap(instance, v, opt):
    """``F^*(v) - F^*(v*)`` summed as per-node differences to avoid cancellation."""
    v = _check_field(instance, v)
    if instance.is_quadratic:
        a, c = instance.quadratic_arrays()
        w = opt.v
        gap = np.sum((v - w) * ((v + w) / (2 * a[:, None]) + c))
    else:
        gap = sum(f.conj_value(vi) - f.conj_value(wi) for f, vi, wi in zip(instance.locals, v, opt.v))
    return max(float(gap), 0.0)


@dataclass(frozen=True)
class ErrorMetrics:
    dual_gap: float
    primal_sq_err: float
    consensus_sq_err: float


def error_metrics(instance, v, opt):
    x = primal_point(instance, v)
    perr = float(np.sum((x - opt.x[None, :]) ** 2))
    cerr = float(np.sum((x - x.mean(axis=0, keepdims=True)) ** 2))
    return ErrorMetrics(dual_gap(instance, v, opt), perr, cerr)


def primal_dual_bound(instance, gap):
    """Upper bound ``(2 L_max / sigma_min^2) * gap`` on ``||x - x*||^2``."""
    return 2.0 * instance.L_max / instance.sigma_min**2 * gap


def instance_from_spec(spec, n):
    """Instance from the JSON ``instance`` block: ``{family, curvatures, centers, dimension}``."""
    family = spec.get("family", "quadratic")
    if family != "quadratic":
        raise InvalidParameter(f"only the quadratic family is configurable from JSON, got {family!r}")
    dim = int(spec.get("dimension", 1))
    if dim < 1:
        raise InvalidParameter("dimension must be >= 1")
    curv = spec.get("curvatures", 1.0)
    centers = spec.get("centers", "e0")
    if isinstance(centers, str):
        if centers != "e0":
            raise InvalidParameter(f"unknown centers shorthand {centers!r}")
        c = np.zeros((n, dim))
        c[0, :] = 1.0
    else:
        c = np.asarray(centers, dtype=float).reshape(n, -1)
        if c.shape[1] != dim:
            raise InvalidParameter(f"centers have dimension {c.shape[1]}, expected {dim}")
    a = np.asarray(curv, dtype=float)
    if a.ndim and a.shape != (n,):
        raise InvalidParameter(f"curvatures must be a scalar or have length {n}")
    return quadratic_instance(a, c)


__all__: Sequence[str] = [
    "QuadraticLocal",
    "CustomSmoothLocal",
    "ProblemInstance",
    "Optimum",
    "ErrorMetrics",
    "quadratic_instance",
    "averaging_instance",
    "conj_grad",
    "conj_value",
    "dual_value",
    "primal_point",
    "optimum",
    "dual_gap",
    "error_metrics",
    "primal_dual_bound",
    "instance_from_spec",
]

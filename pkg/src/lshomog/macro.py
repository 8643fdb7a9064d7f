"""Auxiliary macroscopic problem ``delta v + H(p + Dv, y) = 0``.

``-delta v^delta(0)`` converges to ``H̄(p)`` as ``delta -> 0``, which gives a
second, independent route to the effective Hamiltonian. The discrete
problem is solved by Gauss-Seidel with alternating sweep orders using either
a Lax-Friedrichs numerical Hamiltonian (any dimension) or the Godunov flux
for unimodal one-dimensional Hamiltonians. Both are monotone, so each sweep
contracts in the sup norm by at least ``(sum alpha/h) / (delta + sum alpha/h)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit

from ._parallel import pmap
from .env import Environment, HamiltonianFamily, sup_hamiltonian
from .errors import PreconditionError, SolverFailure
from .metric import FORWARD, Lattice, solve_metric
from .shape import sublinearity_check

SCHEMES = ("lf", "godunov", "auto")


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True, inline="always")
def _ham(code, gamma, kappa, bx, by, cx, cy, qx, qy, v, dim):
    if code == 0:
        return v * math.sqrt(qx * qx + qy * qy)
    if code == 1:
        return (qx * qx + qy * qy) ** (0.5 * gamma) - v
    if code == 2:
        dx = qx - (bx + cx * v)
        dy = qy - (by + cy * v)
        return math.sqrt(dx * dx + dy * dy) - v
    if dim == 1:
        return abs(qx) - v
    return max(abs(qx), kappa * abs(qy)) - v


@njit(cache=True, nogil=True)
def _lf_1d(u, V, prm, px, alpha, h, delta, tol, max_sweeps):
    code, gamma, kappa, bx, by, cx, cy = prm
    n = u.shape[0]
    denom = delta + alpha / h
    ratio = alpha / (h * delta)
    diff = np.inf
    for sweep in range(max_sweeps):
        diff = 0.0
        scale = 1.0
        for rev in range(2):
            for t in range(n):
                i = n - 1 - t if rev else t
                left = u[i - 1] if i > 0 else u[i + 1]
                right = u[i + 1] if i < n - 1 else u[i - 1]
                g = (right - left) / (2.0 * h)
                new = (alpha * (left + right) / (2.0 * h) - _ham(int(code), gamma, kappa, bx, by, cx, cy, px + g, 0.0, V[i], 1)) / denom
                d = abs(new - u[i])
                if d > diff:
                    diff = d
                u[i] = new
                if abs(new) > scale:
                    scale = abs(new)
        if diff * ratio <= tol * scale:
            return sweep + 1, diff
    return -1, diff


@njit(cache=True, nogil=True)
def _godunov_node(left, right, k, v0, c, gamma, px, h, delta):
    # 1-D Hamiltonians read k |q - c|^gamma - v0, so the Godunov flux at value
    # u is k ((u - m)^+ / h)^gamma - v0 with m the smaller upwind anchor
    m = min(left - h * (px - c), right + h * (px - c))
    rhs = v0 - delta * m
    if rhs <= 0.0:
        return v0 / delta
    dh = delta * h
    if gamma == 1.0:
        x = rhs / (dh + k)
    elif gamma == 0.5:
        y = 2.0 * rhs / (k + math.sqrt(k * k + 4.0 * dh * rhs))
        x = y * y
    else:
        lo, hi = 0.0, rhs / dh
        for _ in range(200):
            x = 0.5 * (lo + hi)
            if x <= lo or x >= hi:
                break
            if dh * x + k * x**gamma > rhs:
                hi = x
            else:
                lo = x
        x = 0.5 * (lo + hi)
    return m + h * x


@njit(cache=True, nogil=True)
def _godunov_1d(u, K, V0, Cn, gamma, px, h, delta, tol, max_sweeps, lip):
    n = u.shape[0]
    ratio = lip / (h * delta)
    diff = np.inf
    for sweep in range(max_sweeps):
        diff = 0.0
        scale = 1.0
        for rev in range(2):
            for t in range(n):
                i = n - 1 - t if rev else t
                left = u[i - 1] if i > 0 else u[i + 1]
                right = u[i + 1] if i < n - 1 else u[i - 1]
                new = _godunov_node(left, right, K[i], V0[i], Cn[i], gamma, px, h, delta)
                d = abs(new - u[i])
                if d > diff:
                    diff = d
                u[i] = new
                if abs(new) > scale:
                    scale = abs(new)
        if diff * ratio <= tol * scale:
            return sweep + 1, diff
    return -1, diff


@njit(cache=True, nogil=True)
def _godunov_residual(u, K, V0, Cn, gamma, px, h, delta, F, lo, di, up):
    # F(u) and its tridiagonal (semismooth) Jacobian for the Godunov system
    n = u.shape[0]
    worst = 0.0
    for i in range(n):
        il = i - 1 if i > 0 else i + 1
        ir = i + 1 if i < n - 1 else i - 1
        a = u[il] - h * (px - Cn[i])
        b = u[ir] + h * (px - Cn[i])
        nb, m = (il, a) if a <= b else (ir, b)
        x = (u[i] - m) / h
        lo[i] = 0.0
        up[i] = 0.0
        if x <= 0.0:
            F[i] = delta * u[i] - V0[i]
            di[i] = delta
        else:
            F[i] = delta * u[i] + K[i] * x**gamma - V0[i]
            d = K[i] * gamma * x ** (gamma - 1.0) / h
            di[i] = delta + d
            if nb == i - 1:
                lo[i] = -d
            else:
                up[i] = -d
        if abs(F[i]) > worst:
            worst = abs(F[i])
    return worst


@njit(cache=True, nogil=True)
def _thomas(lo, di, up, rhs, out):
    n = di.shape[0]
    c = np.empty(n)
    d = np.empty(n)
    c[0] = up[0] / di[0]
    d[0] = rhs[0] / di[0]
    for i in range(1, n):
        w = di[i] - lo[i] * c[i - 1]
        c[i] = up[i] / w
        d[i] = (rhs[i] - lo[i] * d[i - 1]) / w
    out[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        out[i] = d[i] - c[i] * out[i + 1]


@njit(cache=True, nogil=True)
def _godunov_newton(u, K, V0, Cn, gamma, px, h, delta, tol, max_iter):
    """Damped semismooth Newton; returns (iterations, max|F| / delta) or -1 on stall.

    The Jacobian is a diagonally dominant M-matrix with margin ``delta``, so
    by comparison ``|u - u*| <= max|F| / delta``.
    """
    n = u.shape[0]
    F = np.empty(n)
    lo = np.empty(n)
    di = np.empty(n)
    up = np.empty(n)
    F2 = np.empty(n)
    step = np.empty(n)
    trial = np.empty(n)
    res = _godunov_residual(u, K, V0, Cn, gamma, px, h, delta, F, lo, di, up)
    for it in range(max_iter):
        scale = max(1.0, np.max(np.abs(u)))
        if res / delta <= tol * scale:
            return it, res / delta
        # the upwind row at i = 0 points at i + 1 (reflection) which is in band
        _thomas(lo, di, up, -F, step)
        t = 1.0
        accepted = False
        for _ in range(40):
            for i in range(n):
                trial[i] = u[i] + t * step[i]
            r2 = _godunov_residual(trial, K, V0, Cn, gamma, px, h, delta, F2, lo, di, up)
            if r2 < res or r2 == 0.0:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            _godunov_residual(u, K, V0, Cn, gamma, px, h, delta, F, lo, di, up)
            return -1, res / delta
        u[:] = trial
        res = _godunov_residual(u, K, V0, Cn, gamma, px, h, delta, F, lo, di, up)
    return -1, res / delta


@njit(cache=True, nogil=True)
def _lf_2d(u, V, prm, px, py, ax, ay, h, delta, tol, max_sweeps):
    code, gamma, kappa, bx, by, cx, cy = prm
    n0, n1 = u.shape
    denom = delta + (ax + ay) / h
    ratio = (ax + ay) / (h * delta)
    diff = np.inf
    for sweep in range(max_sweeps):
        diff = 0.0
        scale = 1.0
        for order in range(4):
            for t0 in range(n0):
                i = n0 - 1 - t0 if order & 1 else t0
                for t1 in range(n1):
                    j = n1 - 1 - t1 if order & 2 else t1
                    w = u[i - 1, j] if i > 0 else u[i + 1, j]
                    e = u[i + 1, j] if i < n0 - 1 else u[i - 1, j]
                    s = u[i, j - 1] if j > 0 else u[i, j + 1]
                    nn = u[i, j + 1] if j < n1 - 1 else u[i, j - 1]
                    gx = (e - w) / (2.0 * h)
                    gy = (nn - s) / (2.0 * h)
                    hv = _ham(int(code), gamma, kappa, bx, by, cx, cy, px + gx, py + gy, V[i, j], 2)
                    new = (ax * (w + e) / (2.0 * h) + ay * (s + nn) / (2.0 * h) - hv) / denom
                    d = abs(new - u[i, j])
                    if d > diff:
                        diff = d
                    u[i, j] = new
                    if abs(new) > scale:
                        scale = abs(new)
        if diff * ratio <= tol * scale:
            return sweep + 1, diff
    return -1, diff


def _params(family: HamiltonianFamily) -> np.ndarray:
    b0 = family._vec(family.drift, 2)
    b1 = family._vec(family.drift_coupling, 2)
    return np.array([family.code, family.gamma, family.kappa, b0[0], b0[1], b1[0], b1[1]], dtype=np.float64)


# ---------------------------------------------------------------------------
# constants


def lipschitz_constant(family: HamiltonianFamily, env: Environment, p) -> tuple[float, float]:
    """``(M, C)``: ``M = sup_y |H(p, y)|`` bounds ``|delta v|`` and ``C`` bounds ``|Dv|``."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    vals = np.asarray(env.values) if env.piecewise_constant else np.array([env.v_min, env.v_max])
    hp = family.hamiltonian(np.broadcast_to(p, vals.shape + p.shape), vals)
    if not env.piecewise_constant:
        hp = np.concatenate([hp, [sup_hamiltonian(family, env, p)]])
    M = float(np.max(np.abs(hp)))
    C = family.coercivity_radius(M, env) + float(np.linalg.norm(p))
    return M, max(M, C)


def dissipation(family: HamiltonianFamily, env: Environment, p, C: float, h: float, n: int = 64) -> np.ndarray:
    """Per-axis finite-difference bound on ``|dH/dq_k|`` over ``|q| <= C + 1``.

    The difference step is ``h/2``, the smallest gradient increment a grid of
    spacing ``h`` resolves; families with unbounded slope get a finite value.
    """
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    d = env.dim
    vals = np.asarray(env.values) if env.piecewise_constant else np.linspace(env.v_min, env.v_max, 9)
    axis = np.linspace(-(C + 1.0), C + 1.0, n + 1)
    if d == 1:
        q = axis[:, None]
    else:
        q = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1).reshape(-1, 2)
    eps = 0.5 * h
    out = np.zeros(d)
    for k in range(d):
        e = np.zeros(d)
        e[k] = eps
        for v in vals:
            hq = family.hamiltonian(p + q, v)
            out[k] = max(out[k], float(np.max(np.abs(family.hamiltonian(p + q + e, v) - hq))) / eps)
    return np.maximum(out, 1e-12)


# ---------------------------------------------------------------------------
# solutions


@dataclass
class MacroSolution:
    """Discrete ``v^delta`` on ``[-L, L]^d`` with ``L = R / delta``."""

    p: np.ndarray
    delta: float
    h: float
    half_nodes: int
    values: np.ndarray
    residual: float
    sweeps: int
    scheme: str
    alpha: np.ndarray
    M: float
    C: float
    R: float
    seed: int
    ball: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def L(self) -> float:
        return self.h * self.half_nodes

    @property
    def axis(self) -> np.ndarray:
        return self.h * np.arange(-self.half_nodes, self.half_nodes + 1)

    @property
    def center_value(self) -> float:
        c = self.half_nodes
        return float(self.values[c] if self.dim == 1 else self.values[c, c])

    @property
    def estimate(self) -> float:
        """``-delta v^delta(0)``."""
        return -self.delta * self.center_value

    def corrector(self) -> np.ndarray:
        """``w^delta = v^delta - v^delta(0)``."""
        return self.values - self.center_value

    def interpolate(self, values: np.ndarray, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        if self.dim == 1:
            return np.interp(pts[:, 0], self.axis, values)
        s = (pts + self.L) / self.h
        i0 = np.clip(np.floor(s).astype(np.int64), 0, 2 * self.half_nodes - 1)
        f = s - i0
        a, b = i0[:, 0], i0[:, 1]
        fx, fy = f[:, 0], f[:, 1]
        return (
            (1 - fx) * (1 - fy) * values[a, b] + fx * (1 - fy) * values[a + 1, b]
            + (1 - fx) * fy * values[a, b + 1] + fx * fy * values[a + 1, b + 1]
        )

    def ball_stats(self, r: float) -> tuple[float, float]:
        """``(sup, inf)`` of ``-delta v`` over the ball of radius ``r / delta``."""
        rad = r / self.delta
        if rad > self.L:
            raise PreconditionError(f"ball radius {rad} exceeds the domain half-width {self.L}")
        ax = self.axis
        if self.dim == 1:
            mask = np.abs(ax) <= rad
        else:
            X, Y = np.meshgrid(ax, ax, indexing="ij")
            mask = X**2 + Y**2 <= rad**2
        vals = -self.delta * self.values[mask]
        return float(vals.max()), float(vals.min())

    def lipschitz_report(self, slack: float = 1e-9) -> dict:
        """``|delta v| <= M`` and difference quotients bounded by ``C``."""
        amp = float(np.max(np.abs(self.delta * self.values)))
        grads = [np.max(np.abs(np.diff(self.values, axis=k))) / self.h for k in range(self.dim)]
        g = float(max(grads))
        return {
            "pass": amp <= self.M * (1 + slack) + slack and g <= self.C * (1 + slack) + slack,
            "sup_delta_v": amp,
            "M": self.M,
            "max_difference_quotient": g,
            "C": self.C,
        }

    def summary(self) -> dict:
        return {
            "p": [float(x) for x in self.p],
            "delta": self.delta,
            "h": self.h,
            "L": self.L,
            "seed": self.seed,
            "scheme": self.scheme,
            "estimate": self.estimate,
            "residual": self.residual,
            "sweeps": self.sweeps,
            "ball": {str(k): list(v) for k, v in self.ball.items()},
        }

    def to_csv(self, path) -> Path:
        """Slice dump ``y, v, minus_delta_v`` along the first axis through the origin."""
        path = Path(path)
        row = self.values if self.dim == 1 else self.values[:, self.half_nodes]
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["y", "v", "minus_delta_v"])
            for y, v in zip(self.axis, row):
                w.writerow([repr(float(y)), repr(float(v)), repr(float(-self.delta * v))])
        path.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path


def _godunov_coeffs(family: HamiltonianFamily, V: np.ndarray):
    """``(k, v0, gamma)`` with ``H(q, v) = k |q - c(v)|^gamma - v0`` in one dimension."""
    if family.kind == "EIKONAL":
        return np.ascontiguousarray(V, dtype=np.float64), np.zeros_like(V, dtype=np.float64), 1.0
    g = family.gamma if family.kind == "POWER" else 1.0
    return np.ones_like(V, dtype=np.float64), np.ascontiguousarray(V, dtype=np.float64), float(g)


def _choose_scheme(scheme: str, family: HamiltonianFamily, dim: int) -> str:
    if scheme not in SCHEMES:
        raise PreconditionError(f"unknown scheme {scheme!r}")
    if scheme != "auto":
        if scheme == "godunov" and dim != 1:
            raise PreconditionError("the Godunov flux is implemented in one dimension only")
        return scheme
    # unbounded p-slope (gamma < 1) breaks the Lax-Friedrichs monotonicity bound
    return "godunov" if dim == 1 and family.kind == "POWER" and family.gamma < 1 else "lf"


def solve_macro(
    family: HamiltonianFamily,
    env: Environment,
    p,
    delta: float,
    R: float | None = None,
    h: float | None = None,
    tol: float = 1e-8,
    max_sweeps: int = 200_000,
    scheme: str = "auto",
    init=None,
    ball_radii: Sequence[float] = (0.25, 0.5, 1.0),
) -> MacroSolution:
    """Steady state of the monotone scheme on ``[-R/delta, R/delta]^d``.

    ``R`` defaults to ``8 C``; ``init`` is ``"low"``, ``"high"`` or an array.
    """
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if p.shape != (env.dim,):
        raise PreconditionError("momentum dimension differs from the environment")
    M, C = lipschitz_constant(family, env, p)
    R = 8.0 * C if R is None else float(R)
    if R < 4.0 * C:
        raise PreconditionError(f"R = {R} below 4 C = {4 * C}")
    h = (0.25 if env.dim == 1 else 0.5) if h is None else float(h)
    half = int(math.ceil(R / delta / h))
    ax = h * np.arange(-half, half + 1)
    if env.dim == 1:
        V = env.field(ax[:, None])
        shape = (len(ax),)
    else:
        X, Y = np.meshgrid(ax, ax, indexing="ij")
        V = env.field(np.stack([X, Y], axis=-1))
        shape = (len(ax), len(ax))
    if init is None or (isinstance(init, str) and init == "pointwise"):
        u = -np.broadcast_to(family.hamiltonian(np.broadcast_to(p, V.shape + p.shape), V), shape) / delta
        u = np.array(u, dtype=np.float64)
    elif isinstance(init, str):
        u = np.full(shape, M / delta if init == "high" else -M / delta)
    else:
        u = np.array(init, dtype=np.float64).reshape(shape)
    kind = _choose_scheme(scheme, family, env.dim)
    prm = _params(family)
    alpha = dissipation(family, env, p, C, h)
    for attempt in range(2):
        if kind == "godunov":
            center = family.drift_vector(V, 1) if family.kind == "DRIFT" else np.zeros(V.shape + (1,))
            K, V0, g = _godunov_coeffs(family, V)
            lip = float(alpha[0])
            cn = np.ascontiguousarray(center[:, 0])
            sweeps, res = _godunov_newton(u, K, V0, cn, g, float(p[0]), h, delta, tol, 200)
            if sweeps < 0:
                sweeps, res = _godunov_1d(u, K, V0, cn, g, float(p[0]), h, delta, tol, max_sweeps, lip)
        elif env.dim == 1:
            sweeps, res = _lf_1d(u, V, prm, float(p[0]), float(alpha[0]), h, delta, tol, max_sweeps)
        else:
            sweeps, res = _lf_2d(u, V, prm, float(p[0]), float(p[1]), float(alpha[0]), float(alpha[1]), h, delta, tol, max_sweeps)
        if sweeps >= 0:
            break
        if attempt == 0:
            alpha = 2.0 * alpha
    else:
        raise SolverFailure(f"macro iteration stagnated (residual {res:.3e} after {max_sweeps} sweeps)")
    sol = MacroSolution(p, float(delta), h, half, u, float(res), int(sweeps), kind, alpha, M, C, R, env.seed)
    for r in ball_radii:
        if r / delta <= sol.L:
            sol.ball[float(r)] = sol.ball_stats(r)
    return sol


# ---------------------------------------------------------------------------
# ensembles and diagnostics


def estimate_h(
    family: HamiltonianFamily,
    env: Environment,
    p,
    deltas: Sequence[float],
    seeds: Sequence[int],
    workers: int = 1,
    **kw,
) -> dict:
    """Liminf/limsup proxies for ``-delta v^delta(0)`` from a decreasing ladder.

    ``h_lower``/``h_upper`` are the min/max over the two smallest ``delta`` of
    the realization means; the per-delta spread across realizations is
    reported separately and should not grow as ``delta`` shrinks.
    """
    deltas = list(deltas)
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise PreconditionError("delta ladder must be strictly decreasing")
    jobs = [(d, s) for d in deltas for s in seeds]
    sols = pmap(lambda js: solve_macro(family, env.with_seed(js[1]), p, js[0], **kw), jobs, workers)
    per = {}
    for (d, _), sol in zip(jobs, sols):
        per.setdefault(d, []).append(sol.estimate)
    means = {d: float(np.sort(v).sum() / len(v)) for d, v in per.items()}
    spread = {d: float(np.max(v) - np.min(v)) for d, v in per.items()}
    tail = deltas[-2:]
    lo = min(means[d] for d in tail)
    hi = max(means[d] for d in tail)
    growing = len(deltas) >= 2 and spread[deltas[-1]] > spread[deltas[0]] * 1.5 + 1e-12
    return {
        "h_lower": lo,
        "h_upper": hi,
        "means": {str(d): means[d] for d in deltas},
        "spread": {str(d): spread[d] for d in deltas},
        "samples": {str(d): per[d] for d in deltas},
        "inconsistent": bool(growing),
        "solutions": sols,
    }


def ball_uniform_check(solutions: dict, radii: Sequence[float] = (0.25, 0.5, 1.0), min_realizations: int = 8) -> dict:
    """``sup - inf`` of ``-delta v`` over ``B_{r/delta}`` along the delta ladder.

    ``solutions`` maps ``delta`` to a list of realizations.
    """
    rows = {}
    for d in sorted(solutions, reverse=True):
        sols = solutions[d]
        if len(sols) < min_realizations:
            raise PreconditionError(f"need at least {min_realizations} realizations at delta = {d}")
        rows[d] = {}
        for r in radii:
            stats_ = [s.ball_stats(r) for s in sols]
            rows[d][r] = float(np.mean([a - b for a, b in stats_]))
    deltas = sorted(rows, reverse=True)
    shrinking = {
        r: all(rows[b][r] <= rows[a][r] + 1e-12 for a, b in zip(deltas, deltas[1:])) for r in radii
    }
    worst = max(rows[deltas[-1]].values())
    return {
        "deviation": {str(d): {str(r): v for r, v in rows[d].items()} for d in deltas},
        "shrinking": {str(r): bool(v) for r, v in shrinking.items()},
        "max_deviation_smallest_delta": worst,
    }


def _metric_lattice(sol: MacroSolution, rho: int) -> Lattice:
    return Lattice.centered(sol.h, sol.half_nodes, sol.dim, rho)


def domination_check(
    sol: MacroSolution,
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    n_sources: int = 10,
    n_targets: int = 100,
    region: float | None = None,
    slack: float | None = None,
    rng_seed: int = 0,
    rho: int = 2,
) -> dict:
    """Discrete domination ``w(y) - w(x) + p.(y-x) <= m_mu(y, x) + slack`` on sampled pairs.

    ``region`` is the half-width of the sampling box (default a quarter of the
    domain); the default slack is one grid cell of Lipschitz growth, ``2 C h``.
    """
    if sol.dim != env.dim:
        raise PreconditionError("solution and environment dimensions differ")
    lat = _metric_lattice(sol, rho)
    region = 0.25 * sol.L if region is None else float(region)
    k_reg = int(region / sol.h)
    slack = 2.0 * sol.C * sol.h if slack is None else float(slack)
    rng = np.random.default_rng(rng_seed)
    w = sol.corrector()
    c = sol.half_nodes
    worst = -math.inf
    worst_pair = None
    gaps, dists = [], []
    for _ in range(n_sources):
        xi = rng.integers(-k_reg, k_reg + 1, size=sol.dim) + c
        src = (int(xi[0]), int(xi[1]) if sol.dim == 2 else 0)
        yi = rng.integers(-k_reg, k_reg + 1, size=(n_targets, sol.dim)) + c
        fld = solve_metric(lat, family, env, mu, src, FORWARD)
        for y in yi:
            node = (int(y[0]), int(y[1]) if sol.dim == 2 else 0)
            dy = (np.array(node[: sol.dim]) - np.array(src[: sol.dim])) * sol.h
            wy = w[node[0]] if sol.dim == 1 else w[node]
            wx = w[src[0]] if sol.dim == 1 else w[src]
            lhs = wy - wx + float(sol.p @ dy)
            gap = lhs - fld.at(node) - slack
            gaps.append(gap)
            dists.append(float(np.linalg.norm(dy)))
            if gap > worst:
                worst, worst_pair = gap, (src, node)
    gaps = np.array(gaps)
    dists = np.array(dists)
    far = dists >= np.median(dists)
    return {
        "pass": bool(worst <= 0),
        "worst_violation": float(max(worst, 0.0)),
        "worst_pair": worst_pair,
        "pairs": int(len(gaps)),
        "fail_fraction_far": float(np.mean(gaps[far] > 0)) if far.any() else 0.0,
        "slack": slack,
        "mu": mu,
    }


def corrector_checks(
    sol: MacroSolution,
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    h_upper: float | None = None,
    radii: Sequence[float] = (10.0, 20.0, 40.0, 80.0),
    tol: float = 1e-9,
    **dom_kw,
) -> dict:
    """Domination, sublinearity of ``w^delta`` and the approximate-subsolution residual."""
    dom = domination_check(sol, family, env, mu, **dom_kw)
    w = sol.corrector()
    usable = [r for r in radii if r <= sol.L]
    sub = sublinearity_check(lambda pts: sol.interpolate(w, pts), usable, sol.dim)
    h_up = sol.estimate if h_upper is None else h_upper
    excess = float(np.max(-sol.delta * sol.values)) - h_up
    bound = sol.delta * float(np.max(np.abs(w)))
    return {
        "domination": dom,
        "sublinearity": sub,
        "residual": {"excess": excess, "bound": bound, "pass": excess <= bound + tol},
    }


def scheme_monotone(sol: MacroSolution, family: HamiltonianFamily, env: Environment) -> dict:
    """Configuration-time monotonicity: Lax-Friedrichs dissipation dominates the p-slope."""
    if sol.scheme == "godunov":
        return {"pass": True, "note": "Godunov flux is monotone for unimodal Hamiltonians"}
    ref = dissipation(family, env, sol.p, sol.C, sol.h, n=128)
    return {"pass": bool(np.all(sol.alpha >= ref * (1 - 1e-9))), "alpha": sol.alpha.tolist(), "slope_bound": ref.tolist()}


def agreement(h_est: float, bracket: tuple[float, float], rel: float = 0.10, floor_abs: float = 0.05) -> dict:
    """Distance from ``-delta v(0)`` to the duality bracket, relative to its midpoint with an absolute floor."""
    lo, hi = bracket
    mid = 0.5 * (lo + hi)
    dist = max(lo - h_est, h_est - hi, 0.0)
    band = max(rel * abs(mid), floor_abs)
    return {"pass": dist <= band, "macro": h_est, "bracket": [lo, hi], "distance": dist, "band": band}

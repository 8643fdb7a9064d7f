"""Sublevel-set geometry of ``p -> H(p, y)``: minimizers, ray radii, support functions.

Sublevel sets are convex (level-set convexity), so they are star-shaped about
any interior anchor and a boundary radius per direction describes them
completely. The support function ``sigma_mu(y, q) = max{p.q : H(p, y) <= mu}``
is the Finsler integrand of the metric problem.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .env import Environment, HamiltonianFamily
from .errors import OptimizationFailure, PreconditionError, SolverFailure

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_MAX_BISECT = 200


def fan(n_dirs: int, dim: int) -> np.ndarray:
    """Uniform direction fan; ``{+1, -1}`` in one dimension."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    ang = 2.0 * np.pi * np.arange(n_dirs) / n_dirs
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def fan_error_factor(n_dirs: int, dim: int) -> float:
    """Worst ratio between the true support function and its fan under-approximation."""
    return 1.0 if dim == 1 else 1.0 / math.cos(math.pi / n_dirs)


# ---------------------------------------------------------------------------
# ray bisection


def _ray_radii(hfun: Callable, mu: float, p0: np.ndarray, dirs: np.ndarray, cap: float) -> np.ndarray:
    """Vectorized ``max{s >= 0 : hfun(p0 + s e) <= mu}`` to full float resolution.

    Returns the inside endpoint of the final bracket, so the boundary point is
    always a member of the sublevel set.
    """
    m = len(dirs)
    lo = np.zeros(m)
    hi = np.ones(m)
    # the witness bounds the set, so the cap (nudged outward) is always outside
    cap = max(1.0, cap * (1.0 + 1e-12) + 1e-12)
    for _ in range(64):
        inside = hfun(p0 + hi[:, None] * dirs) <= mu
        if not inside.any():
            break
        if np.any(inside & (hi >= cap)):
            raise SolverFailure("coercivity witness does not bound the sublevel set")
        lo = np.where(inside, hi, lo)
        hi = np.where(inside, np.minimum(2.0 * hi, cap), hi)
    for _ in range(_MAX_BISECT):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        inside = hfun(p0 + mid[:, None] * dirs) <= mu
        lo = np.where(active & inside, mid, lo)
        hi = np.where(active & ~inside, mid, hi)
    return lo


def _hfun(family: HamiltonianFamily, v: float) -> Callable:
    return functools.partial(family.hamiltonian, v=np.float64(v))


def ray_radius(family: HamiltonianFamily, env: Environment, y, mu: float, p0, e) -> float:
    """Largest ``s >= 0`` with ``H(p0 + s e, y) <= mu``."""
    v = float(np.atleast_1d(env.field(y)).ravel()[0])
    return _ray_radius_value(family, v, env.dim, mu, p0, e)


def _ray_radius_value(family, v, dim, mu, p0, e) -> float:
    p0 = np.atleast_1d(np.asarray(p0, dtype=np.float64))
    e = np.atleast_1d(np.asarray(e, dtype=np.float64))
    if p0.shape != (dim,) or e.shape != (dim,):
        raise PreconditionError("anchor and direction must match the dimension")
    if not math.isclose(float(np.linalg.norm(e)), 1.0, rel_tol=1e-12):
        raise PreconditionError("direction must be a unit vector")
    h = _hfun(family, v)
    if float(h(p0)) > mu:
        raise PreconditionError(f"anchor outside the sublevel set: H(p0) = {float(h(p0))} > mu = {mu}")
    cap = family.radius_bound(mu, (v, v)) + float(np.linalg.norm(p0))
    return float(_ray_radii(h, mu, p0, e[None, :], cap)[0])


# ---------------------------------------------------------------------------
# minimization


def _golden(f: Callable, a: float, b: float, iters: int = 80) -> float:
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    return c if fc <= fd else d


def _minimize_value(family: HamiltonianFamily, v: float, dim: int, tol_min: float = 1e-8, n_starts: int = 8, max_iter: int = 20):
    h = _hfun(family, v)
    f = lambda p: float(h(p))  # noqa: E731
    origin = np.zeros(dim)
    h0 = f(origin)
    R = family.radius_bound(h0 + 1.0, (v, v))
    if not math.isfinite(R):
        raise OptimizationFailure("no finite coercivity radius to bracket the minimizer", origin, h0)
    R = max(R, 1e-3)
    rng = np.random.default_rng(0)
    starts = [origin] + [rng.uniform(-R, R, size=dim) for _ in range(n_starts)]
    dirs = fan(32, dim)
    best, fbest = origin, h0
    for x in starts:
        x = x.copy()
        for _ in range(max_iter):
            prev = f(x)
            for k in range(dim):
                def g(s, k=k):
                    z = x.copy()
                    z[k] = s
                    return f(z)

                x[k] = _golden(g, -R, R)
            # fan polish: line search along each direction through x
            for e in dirs:
                s = _golden(lambda s: f(x + s * e), -R, R, iters=60)
                cand = x + s * e
                if f(cand) < f(x):
                    x = cand
            if prev - f(x) <= tol_min * 1e-3:
                break
        if f(x) < fbest:
            best, fbest = x, f(x)
    # origin wins ties, which keeps anchors canonical for families minimized there
    if h0 <= fbest:
        best, fbest = origin, h0
    probe = rng.uniform(-R, R, size=(4096, dim))
    worst = float(np.min(h(probe)))
    scale = max(1.0, abs(fbest))
    if worst < fbest - tol_min * scale:
        raise OptimizationFailure(
            f"minimizer not verified: sampled value {worst} below best {fbest}", best, fbest
        )
    return best, fbest


def find_min(family: HamiltonianFamily, env: Environment, y, tol_min: float = 1e-8, n_starts: int = 8):
    """Return ``(p0, mu_min)``: a minimizer of ``H(., y)`` and the minimum value."""
    v = float(np.atleast_1d(env.field(y)).ravel()[0])
    p0, m = _minimize_value(family, v, env.dim, tol_min, n_starts)
    return p0, m


# ---------------------------------------------------------------------------
# geometry


@dataclass(frozen=True)
class SublevelGeometry:
    """Star-shaped description of ``K_mu = {H(., y) <= mu}`` about an anchor.

    ``sign = -1`` marks the reversed geometry ``-K_mu`` (sublevel set of
    ``p -> H(-p, y)``); it shares the underlying samples with the original so
    reversal is exact.
    """

    mu: float
    mu_min: float
    base_anchor: np.ndarray
    base_directions: np.ndarray
    radii: np.ndarray
    radius_fn: Callable | None = None
    sign: float = 1.0
    refine: bool = True

    @property
    def dim(self) -> int:
        return self.base_anchor.shape[0]

    @property
    def n_dirs(self) -> int:
        return len(self.radii)

    @property
    def anchor(self) -> np.ndarray:
        return self.sign * self.base_anchor

    @property
    def directions(self) -> np.ndarray:
        return self.sign * self.base_directions

    @property
    def points(self) -> np.ndarray:
        return self.sign * (self.base_anchor + self.radii[:, None] * self.base_directions)

    @property
    def error_factor(self) -> float:
        return fan_error_factor(self.n_dirs, self.dim)


def _geometry_from_value(family, v, dim, mu, n_dirs=64, refine=True) -> SublevelGeometry:
    p0, mmin = _minimize_value(family, v, dim)
    if mu < mmin:
        raise PreconditionError(f"mu = {mu} below the pointwise minimum {mmin}: empty sublevel set")
    h = _hfun(family, v)
    cap = family.radius_bound(mu, (v, v)) + float(np.linalg.norm(p0))
    dirs = fan(n_dirs, dim)
    radii = _ray_radii(h, mu, p0, dirs, cap)

    def radius_fn(e: np.ndarray) -> np.ndarray:
        return _ray_radii(h, mu, p0, np.atleast_2d(e), cap)

    return SublevelGeometry(mu, mmin, p0, dirs, radii, radius_fn, 1.0, refine)


@functools.lru_cache(maxsize=4096)
def geometry_for_value(family: HamiltonianFamily, v: float, dim: int, mu: float, n_dirs: int = 64, refine: bool = True) -> SublevelGeometry:
    """Cached geometry for a single field value; idempotent under concurrent calls."""
    return _geometry_from_value(family, float(v), dim, float(mu), n_dirs, refine)


def build_geometry(family: HamiltonianFamily, env: Environment, y, mu: float, n_dirs: int = 64, refine: bool = True) -> SublevelGeometry:
    v = float(np.atleast_1d(env.field(y)).ravel()[0])
    return geometry_for_value(family, v, env.dim, float(mu), n_dirs, refine)


@functools.lru_cache(maxsize=64)
def reference_geometry(family: HamiltonianFamily, dim: int, n_dirs: int = 64) -> SublevelGeometry:
    """Geometry of the unit gauge ball ``{G <= 1}`` shared by all field values."""
    g = family.gauge
    p0 = np.zeros(dim)
    cap = 2.0 / min(1.0, family.kappa) if family.kind == "ANISO" else 2.0
    dirs = fan(n_dirs, dim)

    def radius_fn(e):
        return _ray_radii(g, 1.0, p0, np.atleast_2d(e), cap)

    return SublevelGeometry(1.0, 0.0, p0, dirs, radius_fn(dirs), radius_fn, 1.0, True)


def reversed_geometry(geom: SublevelGeometry) -> SublevelGeometry:
    """Geometry of ``-K_mu``, the sublevel set of ``p -> H(-p, y)``."""
    return SublevelGeometry(
        geom.mu, geom.mu_min, geom.base_anchor, geom.base_directions, geom.radii,
        geom.radius_fn, -geom.sign, geom.refine,
    )


def _refine_2d(geom: SublevelGeometry, q: np.ndarray, best: np.ndarray, k: np.ndarray) -> np.ndarray:
    # golden-section over the angle around the best fan sample; x.q is unimodal
    # along the boundary of a convex set, and every probe is a member, so the
    # result stays a lower bound
    half = 2.0 * np.pi / geom.n_dirs
    base = np.arctan2(geom.base_directions[k, 1], geom.base_directions[k, 0])
    a = base - half
    b = base + half

    def value(phi):
        e = np.stack([np.cos(phi), np.sin(phi)], axis=1)
        r = geom.radius_fn(e)
        pts = geom.base_anchor + r[:, None] * e
        return np.einsum("ij,ij->i", pts, q)

    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = value(c), value(d)
    for _ in range(64):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nc = np.where(left, b - _INVPHI * (b - a), d)
        nd = np.where(left, c, a + _INVPHI * (b - a))
        fnew = value(np.where(left, nc, nd))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = nc, nd
    return np.maximum(best, np.maximum(fc, fd))


def support(geom: SublevelGeometry, q) -> np.ndarray | float:
    """``max{p.q : p in K_mu}`` from boundary samples (refined in 2-D)."""
    q = np.asarray(q, dtype=np.float64)
    scalar = q.ndim == 0 or (q.ndim == 1 and geom.dim > 1) or (q.ndim == 1 and geom.dim == 1 and q.shape[0] == 1)
    if q.ndim == 0:
        q = q[None]
    flat = (geom.sign * q).reshape(-1, geom.dim)
    base_pts = geom.base_anchor + geom.radii[:, None] * geom.base_directions
    vals = flat @ base_pts.T
    k = np.argmax(vals, axis=1)
    best = vals[np.arange(len(flat)), k]
    if geom.dim == 2 and geom.refine and geom.radius_fn is not None and len(flat):
        best = _refine_2d(geom, flat, best, k)
    out = best.reshape(q.shape[:-1])
    return float(out) if scalar else out


def hull_check(geom: SublevelGeometry, tol: float = 1e-9) -> bool:
    """Boundary samples, in angular order about the anchor, are in convex position."""
    if geom.dim == 1:
        return True
    pts = geom.points
    e1 = np.roll(pts, -1, axis=0) - pts
    e2 = np.roll(e1, -1, axis=0)
    cross = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    scale = max(1.0, float(np.max(np.abs(pts)))) ** 2
    return bool(np.all(cross >= -tol * scale))


def dump_geometry_csv(geom: SublevelGeometry, path) -> Path:
    """Debug dump: direction angle, boundary radius, support value."""
    path = Path(path)
    dirs = geom.directions
    sig = np.atleast_1d(support(geom, dirs))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["angle", "radius", "support"])
        for e, r, s in zip(dirs, geom.radii, sig):
            ang = math.atan2(e[1], e[0]) if geom.dim == 2 else (0.0 if e[0] > 0 else math.pi)
            w.writerow([repr(ang), repr(float(r)), repr(float(s))])
    return path

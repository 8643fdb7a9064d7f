"""Hamiltonian families and seeded stationary random environments.

A realization is identified by an integer seed. Every field value is a pure
function of ``(seed, y)``: checkerboard cells are labelled by a counter-based
hash of their integer coordinates, Poisson bumps are generated lazily per
spatial tile from a hashed tile key, and periodic fields carry a hashed
phase. Stationarity comes from a uniformly random global offset (checkerboard,
periodic) or from the translation invariance of the Poisson process itself.
"""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
from numba import njit

from .errors import (
    ConfigError,
    DegenerateFamily,
    HypothesisViolation,
    PreconditionError,
)

FAMILY_KINDS = ("EIKONAL", "POWER", "DRIFT", "ANISO")
ENV_KINDS = ("CHECKERBOARD", "POISSON_BUMPS", "PERIODIC_PHASE")

_MASK64 = (1 << 64) - 1

# stream tags keep the offset/phase/tile hashes independent of the cell hash
_TAG_OFFSET = 0x6F6666736574
_TAG_TILE = 0x74696C6573


# ---------------------------------------------------------------------------
# counter-based hashing


def _mix(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on a uint64 array (wrapping arithmetic)."""
    with np.errstate(over="ignore"):
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def cell_hash(seed: int, index: np.ndarray) -> np.ndarray:
    """Hash integer coordinates ``index[..., d]`` under ``seed`` to uint64."""
    index = np.asarray(index, dtype=np.int64)
    h = _mix(np.full(index.shape[:-1], seed & _MASK64, dtype=np.uint64))
    for k in range(index.shape[-1]):
        h = _mix(h ^ index[..., k].astype(np.uint64))
    return h


def unit_float(h: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to floats in [0, 1) using the top 53 bits."""
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _stream_uniforms(seed: int, tag: int, count: int) -> np.ndarray:
    idx = np.stack([np.full(count, tag, dtype=np.int64), np.arange(count, dtype=np.int64)], axis=-1)
    return unit_float(cell_hash(seed, idx))


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


# ---------------------------------------------------------------------------
# Poisson bump kernel


@functools.lru_cache(maxsize=65536)
def _tile_centers(seed: int, intensity: float, tile: float, dim: int, key: tuple) -> np.ndarray:
    h = int(cell_hash(seed ^ _TAG_TILE, np.array([key], dtype=np.int64))[0])
    rng = np.random.default_rng(h)
    n = rng.poisson(intensity * tile**dim)
    pts = (np.array(key, dtype=np.float64) + rng.random((n, dim))) * tile
    pts.setflags(write=False)
    return pts


@njit(cache=True, nogil=True)
def _bump_product(y, lo, counts_shape, starts, centers, tile, radius):
    # y: (m, 2) padded coordinates; tiles stored densely over [lo, lo+shape)
    m = y.shape[0]
    out = np.empty(m)
    n0 = counts_shape[0]
    n1 = counts_shape[1]
    for i in range(m):
        acc = 1.0
        a0 = int(math.floor((y[i, 0] - radius) / tile)) - lo[0]
        b0 = int(math.floor((y[i, 0] + radius) / tile)) - lo[0]
        a1 = int(math.floor((y[i, 1] - radius) / tile)) - lo[1]
        b1 = int(math.floor((y[i, 1] + radius) / tile)) - lo[1]
        for t0 in range(max(a0, 0), min(b0, n0 - 1) + 1):
            for t1 in range(max(a1, 0), min(b1, n1 - 1) + 1):
                slot = t0 * n1 + t1
                for j in range(starts[slot], starts[slot + 1]):
                    d0 = y[i, 0] - centers[j, 0]
                    d1 = y[i, 1] - centers[j, 1]
                    s = math.sqrt(d0 * d0 + d1 * d1) / radius
                    if s < 1.0:
                        acc *= 1.0 - (1.0 - 3.0 * s * s + 2.0 * s * s * s)
        out[i] = 1.0 - acc
    return out


# ---------------------------------------------------------------------------
# environments


@dataclass(frozen=True)
class Environment:
    """One realization of a stationary random field ``V(y, omega)``.

    ``offset`` overrides the seed-derived global offset (checkerboard) or phase
    (periodic); it exists so translation covariance can be tested directly.
    """

    kind: str
    seed: int
    dim: int
    v_min: float
    v_max: float
    cell: float = 1.0
    values: tuple = (0.0, 1.0)
    probs: tuple | None = None
    mollify: float = 0.0
    intensity: float = 0.5
    bump_radius: float = 1.0
    tile: float = 4.0
    period: float = 4.0
    offset: tuple | None = None

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise ConfigError(f"unknown environment kind {self.kind!r}")
        if self.dim not in (1, 2):
            raise ConfigError(f"dimension must be 1 or 2, got {self.dim}")
        if not (math.isfinite(self.v_min) and math.isfinite(self.v_max)) or self.v_min > self.v_max:
            raise ConfigError(f"invalid field range [{self.v_min}, {self.v_max}]")
        if self.kind == "CHECKERBOARD":
            if self.cell <= 0 or not self.values:
                raise ConfigError("checkerboard needs cell > 0 and at least one value")
            if self.probs is not None:
                if len(self.probs) != len(self.values) or min(self.probs) < 0:
                    raise ConfigError("probs must match values and be nonnegative")
                if not math.isclose(sum(self.probs), 1.0, rel_tol=1e-12):
                    raise ConfigError("probs must sum to 1")
            if not 0.0 <= self.mollify <= 1.0:
                raise ConfigError("mollify width must lie in [0, 1] (fraction of a cell)")
        if self.kind == "POISSON_BUMPS" and (self.intensity < 0 or self.bump_radius <= 0 or self.tile <= 0):
            raise ConfigError("poisson bumps need intensity >= 0, bump_radius > 0, tile > 0")
        if self.kind == "PERIODIC_PHASE" and self.period <= 0:
            raise ConfigError("period must be positive")
        if self.offset is not None and len(self.offset) != self.dim:
            raise ConfigError("offset length must equal dim")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "Environment":
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        if kind not in ENV_KINDS:
            raise ConfigError(f"unknown environment kind {kind!r}")
        try:
            seed = int(cfg.pop("seed"))
            dim = int(cfg.pop("dim"))
        except KeyError as exc:
            raise ConfigError(f"environment config missing {exc.args[0]!r}") from None
        kw: dict[str, Any] = {}
        if kind == "CHECKERBOARD":
            values = tuple(float(v) for v in cfg.pop("values", (0.0, 1.0)))
            if not values:
                raise ConfigError("checkerboard needs at least one value")
            kw.update(values=values, cell=float(cfg.pop("cell", 1.0)), mollify=float(cfg.pop("mollify", 0.0)))
            if "probs" in cfg:
                kw["probs"] = tuple(float(v) for v in cfg.pop("probs"))
            v_min, v_max = min(values), max(values)
        else:
            rng_ = cfg.pop("range", None)
            if rng_ is None or len(rng_) != 2:
                raise ConfigError(f"{kind} needs an explicit field range [v_min, v_max]")
            v_min, v_max = float(rng_[0]), float(rng_[1])
            if kind == "POISSON_BUMPS":
                kw.update(
                    intensity=float(cfg.pop("intensity", 0.5)),
                    bump_radius=float(cfg.pop("bump_radius", 1.0)),
                    tile=float(cfg.pop("tile", 4.0)),
                )
            else:
                kw.update(period=float(cfg.pop("period", 4.0)))
        if "offset" in cfg:
            kw["offset"] = tuple(float(v) for v in cfg.pop("offset"))
        if cfg:
            raise ConfigError(f"unknown environment keys: {sorted(cfg)}")
        return cls(kind=kind, seed=seed, dim=dim, v_min=v_min, v_max=v_max, **kw)

    def with_seed(self, seed: int) -> "Environment":
        return replace(self, seed=int(seed), offset=None)

    def with_offset(self, offset) -> "Environment":
        return replace(self, offset=tuple(float(v) for v in np.atleast_1d(offset)))

    # -- evaluation -------------------------------------------------------

    @property
    def shift(self) -> np.ndarray:
        """Global offset (checkerboard) or phase (periodic) of this realization."""
        if self.offset is not None:
            return np.array(self.offset, dtype=np.float64)
        scale = self.cell if self.kind == "CHECKERBOARD" else self.period
        return scale * _stream_uniforms(self.seed, _TAG_OFFSET, self.dim)

    def _points(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.dim == 1 and (y.ndim == 0 or y.shape[-1] != 1):
            y = y[..., None]
        if y.shape[-1] != self.dim:
            raise ConfigError(f"point dimension {y.shape[-1]} does not match environment dim {self.dim}")
        return y

    def _cell_values(self, idx: np.ndarray) -> np.ndarray:
        u = unit_float(cell_hash(self.seed, idx))
        vals = np.asarray(self.values, dtype=np.float64)
        if self.probs is None:
            k = np.minimum((u * len(vals)).astype(np.int64), len(vals) - 1)
        else:
            k = np.minimum(np.searchsorted(np.cumsum(self.probs), u, side="right"), len(vals) - 1)
        return vals[k]

    def field(self, y) -> np.ndarray:
        """Field value ``V(y)`` for points ``y[..., dim]`` (a bare scalar is allowed in 1-D)."""
        y = self._points(y)
        if self.kind == "CHECKERBOARD":
            s = (y - self.shift) / self.cell
            if self.mollify == 0.0:
                return self._cell_values(np.floor(s).astype(np.int64))
            return self._mollified(s)
        if self.kind == "PERIODIC_PHASE":
            arg = 2.0 * np.pi * (y + self.shift) / self.period
            prof = np.mean(0.5 * (1.0 + np.cos(arg)), axis=-1)
            return self.v_min + (self.v_max - self.v_min) * prof
        return self.v_min + (self.v_max - self.v_min) * self._bumps(y)

    def _mollified(self, s: np.ndarray) -> np.ndarray:
        # tensor-product C^1 partition of unity, ramps of width `mollify` centred on cell faces
        w = self.mollify
        base = np.floor(s).astype(np.int64)
        out = np.zeros(s.shape[:-1])
        shifts = np.array(np.meshgrid(*([[-1, 0, 1]] * self.dim), indexing="ij")).reshape(self.dim, -1).T
        for sh in shifts:
            idx = base + sh
            weight = np.ones(s.shape[:-1])
            for k in range(self.dim):
                loc = s[..., k] - idx[..., k]
                weight *= _smoothstep((loc + w / 2) / w) - _smoothstep((loc - 1 + w / 2) / w)
            out += weight * self._cell_values(idx)
        return out

    def _bumps(self, y: np.ndarray) -> np.ndarray:
        flat = y.reshape(-1, self.dim)
        if flat.shape[0] == 0:
            return np.zeros(y.shape[:-1])
        pad = np.zeros((flat.shape[0], 2))
        pad[:, : self.dim] = flat
        r, T = self.bump_radius, self.tile
        lo = np.floor((pad.min(axis=0) - r) / T).astype(np.int64)
        hi = np.floor((pad.max(axis=0) + r) / T).astype(np.int64)
        if self.dim == 1:
            lo[1] = hi[1] = 0
        shape = hi - lo + 1
        chunks, starts = [], [0]
        for t0 in range(lo[0], hi[0] + 1):
            for t1 in range(lo[1], hi[1] + 1):
                key = (int(t0),) if self.dim == 1 else (int(t0), int(t1))
                c = _tile_centers(self.seed, self.intensity, T, self.dim, key)
                chunks.append(c)
                starts.append(starts[-1] + len(c))
        centers = np.zeros((starts[-1], 2))
        if starts[-1]:
            centers[:, : self.dim] = np.concatenate(chunks)
        out = _bump_product(pad, lo, shape, np.array(starts, dtype=np.int64), centers, T, r)
        return out.reshape(y.shape[:-1])

    @property
    def piecewise_constant(self) -> bool:
        return self.kind == "CHECKERBOARD" and self.mollify == 0.0

    def segment_pieces(self, y0, y1) -> tuple[np.ndarray, np.ndarray]:
        """Split segments ``y0 -> y1`` into pieces on which the field is sampled.

        Returns ``(fractions, values)`` of shape ``(m, P)``; fractions sum to one
        per segment and are listed in order from ``y0``. Piecewise-constant
        fields are cut exactly at cell faces; other fields use the midpoint.
        """
        y0 = self._points(y0).reshape(-1, self.dim)
        y1 = self._points(y1).reshape(-1, self.dim)
        if not self.piecewise_constant:
            return np.ones((len(y0), 1)), self.field(0.5 * (y0 + y1))[:, None]
        s0 = (y0 - self.shift) / self.cell
        s1 = (y1 - self.shift) / self.cell
        ts = [np.zeros(len(y0)), np.ones(len(y0))]
        for k in range(self.dim):
            a, b = s0[:, k], s1[:, k]
            lo, hi = np.minimum(a, b), np.maximum(a, b)
            first = np.floor(lo) + 1.0
            n_max = int(np.max(np.floor(hi) - np.floor(lo), initial=0))
            span = b - a
            with np.errstate(divide="ignore", invalid="ignore"):
                for j in range(n_max):
                    line = first + j
                    t = (line - a) / span
                    ok = (line < hi) & (span != 0)
                    ts.append(np.where(ok, t, 1.0))
        t = np.sort(np.stack(ts, axis=1), axis=1)
        frac = np.diff(t, axis=1)
        mid = 0.5 * (t[:, :-1] + t[:, 1:])
        pts = y0[:, None, :] + mid[..., None] * (y1 - y0)[:, None, :]
        return frac, self.field(pts)

    def snapshot_csv(self, path, points) -> Path:
        """Write ``y, V(y)`` rows for audit."""
        pts = self._points(points).reshape(-1, self.dim)
        vals = self.field(pts)
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"y{k}" for k in range(self.dim)] + ["V"])
            for row, v in zip(pts, vals):
                w.writerow([repr(float(c)) for c in row] + [repr(float(v))])
        return path


# ---------------------------------------------------------------------------
# Hamiltonian families

_KIND_CODE = {k: i for i, k in enumerate(FAMILY_KINDS)}


def _power_mean(a, b, r):
    return (0.5 * (a**r + b**r)) ** (1.0 / r)


@dataclass(frozen=True)
class HamiltonianFamily:
    """Parametric ``H(p, y) = H(p; V(y))`` driven by the environment's field.

    EIKONAL ``V|p|`` (V plays the speed c > 0); POWER ``|p|^gamma - V``;
    DRIFT ``|p - b(V)| - V`` with ``b(V) = drift + drift_coupling * V``;
    ANISO ``max(|p1|, kappa |p2|) - V`` (``|p| - V`` in one dimension).
    Every family has the form ``K_mu(y) = center + scale * {G <= 1}`` for a
    fixed gauge ``G``, which is what :meth:`affine_sublevel` exposes.
    """

    kind: str
    gamma: float = 1.0
    kappa: float = 1.0
    drift: tuple = ()
    drift_coupling: tuple = ()

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ConfigError(f"unknown Hamiltonian kind {self.kind!r}")
        if self.kind == "POWER" and not self.gamma > 0:
            raise ConfigError("POWER needs gamma > 0")

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "HamiltonianFamily":
        cfg = dict(cfg)
        kind = cfg.pop("kind", None)
        kw: dict[str, Any] = {}
        if "gamma" in cfg:
            kw["gamma"] = float(cfg.pop("gamma"))
        if "kappa" in cfg:
            kw["kappa"] = float(cfg.pop("kappa"))
        for key in ("drift", "drift_coupling"):
            if key in cfg:
                kw[key] = tuple(float(v) for v in np.atleast_1d(cfg.pop(key)))
        if cfg:
            raise ConfigError(f"unknown family keys: {sorted(cfg)}")
        if kind not in FAMILY_KINDS:
            raise ConfigError(f"unknown Hamiltonian kind {kind!r}")
        return cls(kind=kind, **kw)

    @property
    def code(self) -> int:
        return _KIND_CODE[self.kind]

    def _vec(self, t: tuple, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        if t:
            n = min(dim, len(t))
            out[:n] = t[:n]
        return out

    def drift_vector(self, v, dim: int) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return self._vec(self.drift, dim) + v[..., None] * self._vec(self.drift_coupling, dim)

    def gauge(self, p: np.ndarray) -> np.ndarray:
        """The 1-homogeneous-up-to-power shape function G with K_ref = {G <= 1}."""
        p = np.asarray(p, dtype=np.float64)
        if self.kind == "ANISO" and p.shape[-1] == 2:
            return np.maximum(np.abs(p[..., 0]), self.kappa * np.abs(p[..., 1]))
        r = np.sqrt(np.sum(p * p, axis=-1))
        return r**self.gamma if self.kind == "POWER" else r

    def hamiltonian(self, p, v) -> np.ndarray:
        """``H(p; V)`` with ``p[..., d]`` broadcast against ``v[...]``."""
        p = np.asarray(p, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if self.kind == "EIKONAL":
            return v * self.gauge(p)
        if self.kind == "DRIFT":
            return self.gauge(p - self.drift_vector(v, p.shape[-1])) - v
        return self.gauge(p) - v

    def affine_sublevel(self, mu: float, v, dim: int) -> tuple[np.ndarray, np.ndarray]:
        """``(center, scale)`` with ``{H(.; v) <= mu} = center + scale * {G <= 1}``.

        A negative scale means the sublevel set is empty.
        """
        v = np.asarray(v, dtype=np.float64)
        center = np.zeros(v.shape + (dim,))
        if self.kind == "EIKONAL":
            scale = mu / v
        elif self.kind == "POWER":
            lvl = mu + v
            with np.errstate(invalid="ignore"):
                scale = np.where(lvl >= 0, np.abs(lvl) ** (1.0 / self.gamma), -1.0)
        else:
            scale = mu + v
            if self.kind == "DRIFT":
                center = self.drift_vector(v, dim) + 0.0 * center
        return center, np.asarray(scale, dtype=np.float64)

    def min_value(self, v) -> np.ndarray:
        """``min_p H(p; v)`` in closed form (the gauge vanishes only at the centre)."""
        v = np.asarray(v, dtype=np.float64)
        return np.zeros_like(v) if self.kind == "EIKONAL" else -v

    def drift_bound(self, v_range) -> float:
        lo, hi = v_range
        if self.kind != "DRIFT":
            return 0.0
        ends = [np.linalg.norm(self.drift_vector(np.float64(v), 2)) for v in (lo, hi)]
        return float(max(ends))

    def radius_bound(self, mu: float, v_range) -> float:
        """Coercivity witness: ``|p| > R`` implies ``H(p; v) > mu`` for all v in range."""
        v_min, v_max = v_range
        if self.kind == "EIKONAL":
            if v_min <= 0:
                return math.inf
            return max(mu, 0.0) / v_min
        lvl = max(mu + v_max, 0.0)
        if self.kind == "POWER":
            return lvl ** (1.0 / self.gamma)
        if self.kind == "DRIFT":
            return lvl + self.drift_bound(v_range)
        if self.kappa <= 0:
            return math.inf
        return math.sqrt(2.0) * lvl / min(1.0, self.kappa)

    def coercivity_radius(self, mu: float, env: Environment) -> float:
        r = self.radius_bound(mu, (env.v_min, env.v_max))
        if env.dim == 1 and self.kind == "ANISO":
            r = max(mu + env.v_max, 0.0)
        return r

    def is_convex(self) -> bool:
        return self.kind != "POWER" or self.gamma >= 1.0

    def is_even(self, dim: int = 2) -> bool:
        if self.kind == "DRIFT":
            return not (np.any(self._vec(self.drift, dim)) or np.any(self._vec(self.drift_coupling, dim)))
        return True

    def modulus(self, a, b, v_range) -> np.ndarray:
        """Declared level-set modulus Lambda: ``H((p+q)/2) <= Lambda(H(p), H(q))``."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if self.is_convex():
            return 0.5 * (a + b)
        r = 1.0 / self.gamma
        # M_r(a+V, b+V) - V decreases in V for r > 1: worst admissible V is the smallest one
        shift = np.maximum(v_range[0], -np.minimum(a, b))
        return _power_mean(a + shift, b + shift, r) - shift

    def lambda_modulus(self, lam: float, a, b, v_range, depth: int = 12) -> np.ndarray:
        """Modulus for ``H(lam p + (1-lam) q)`` built by iterating the midpoint modulus."""
        if not 0.0 < lam <= 1.0:
            raise PreconditionError("lam must lie in (0, 1]")

        def dyadic(k: int, n: int, a, b):
            # bound for H(k/2^n p + (1 - k/2^n) q)
            if k == 0:
                return np.asarray(b, dtype=np.float64)
            if k == 1 << n:
                return np.asarray(a, dtype=np.float64)
            while k % 2 == 0:
                k //= 2
                n -= 1
            half = 1 << (n - 1)
            if k < half:
                return self.modulus(b, dyadic(k, n - 1, a, b), v_range)
            return self.modulus(a, dyadic(k - half, n - 1, a, b), v_range)

        k = int(math.floor(lam * (1 << depth)))
        if k == lam * (1 << depth):
            return dyadic(k, depth, a, b)
        return np.maximum(dyadic(k, depth, a, b), dyadic(k + 1, depth, a, b))


# ---------------------------------------------------------------------------
# public operations


def evaluate(family: HamiltonianFamily, env: Environment, p, y):
    """``H(p, y, omega)``; scalar in, float out, arrays broadcast."""
    p = np.asarray(p, dtype=np.float64)
    if env.dim == 1 and p.ndim == 0:
        p = p[None]
    if p.shape[-1] != env.dim:
        raise ConfigError(f"momentum dimension {p.shape[-1]} does not match environment dim {env.dim}")
    v = env.field(y)
    out = family.hamiltonian(p, v)
    return float(out) if np.ndim(out) == 0 else out


def sup_hamiltonian(family: HamiltonianFamily, env: Environment, p, window: float = 64.0, n: int = 4096, seed: int = 0):
    """Sampled ``sup_y H(p, y)``; exact over the value set for discrete checkerboards."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    if env.piecewise_constant:
        vals = np.asarray(env.values)
    else:
        rng = np.random.default_rng(seed)
        vals = env.field(rng.uniform(-window, window, size=(n, env.dim)))
        vals = np.concatenate([vals, [env.v_min, env.v_max]])
    return float(np.max(family.hamiltonian(np.broadcast_to(p, vals.shape + p.shape), vals)))


@dataclass
class HypothesisReport:
    checks: dict = field(default_factory=dict)

    def add(self, name: str, ok: bool, worst: float, required: bool = True, **extra):
        self.checks[name] = {"pass": bool(ok), "worst_violation": float(worst), "required": required, **extra}

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks.values() if c["required"])

    def as_dict(self) -> dict:
        return {"passed": self.passed, "checks": self.checks}


def _random_unit(rng, n, dim):
    u = rng.normal(size=(n, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _violation(lhs, rhs, slack):
    return np.max(lhs - rhs - slack * np.maximum(1.0, np.abs(rhs)), initial=-np.inf)


def validate_hypotheses(
    family: HamiltonianFamily,
    env: Environment,
    sample_budget: int = 10_000,
    slack: float = 1e-10,
    window: float = 50.0,
    rng_seed: int = 0,
) -> HypothesisReport:
    """Sample the structural hypotheses on ``H`` (boundedness, continuity,
    coercivity, level-set convexity and the Lambda modulus).

    Raises :class:`HypothesisViolation` naming the failed inequality;
    midpoint convexity is reported but never required.
    """
    if sample_budget < 1000:
        raise PreconditionError("sample_budget must be at least 1000")
    rng = np.random.default_rng(rng_seed)
    d, n = env.dim, sample_budget
    rep = HypothesisReport()
    vr = (env.v_min, env.v_max)
    top = env.v_max + 1.0
    R = family.coercivity_radius(top, env)
    P = 2.0 * R + 1.0 if math.isfinite(R) else 10.0

    ys = rng.uniform(-window, window, size=(n, d))
    vs = env.field(ys)

    def ball(m):
        return _random_unit(rng, m, d) * P * rng.random((m, 1)) ** (1.0 / d)

    p, q = ball(n), ball(n)
    hp, hq = family.hamiltonian(p, vs), family.hamiltonian(q, vs)
    hm = family.hamiltonian(0.5 * (p + q), vs)

    finite = bool(np.all(np.isfinite(hp)))
    rep.add("bounded", finite, 0.0 if finite else math.inf, sup_abs=float(np.max(np.abs(hp))))

    etas = (1e-2, 1e-4, 1e-6)
    omegas = []
    for eta in etas:
        dp = _random_unit(rng, n, d) * eta
        omegas.append(float(np.max(np.abs(family.hamiltonian(p + dp, vs) - hp))))
    cont = all(b <= a + slack for a, b in zip(omegas, omegas[1:])) and omegas[-1] <= 0.5 * max(omegas[0], slack)
    rep.add("equicontinuous in p", cont, omegas[-1], moduli=dict(zip(map(str, etas), omegas)))

    worst_c = -math.inf
    mus = (env.v_max * 0 + sup_hamiltonian(family, env, np.zeros(d)), top, top + 4.0, top + 24.0)
    for mu in mus:
        Rm = family.coercivity_radius(mu, env)
        if not math.isfinite(Rm):
            worst_c = math.inf
            break
        m = max(1000, n)
        pts = _random_unit(rng, m, d) * (Rm + 1.0)
        yv = env.field(rng.uniform(-window, window, size=(m, d)))
        worst_c = max(worst_c, float(np.max(mu - family.hamiltonian(pts, yv))))
    rep.add("coercive", worst_c < 0, max(worst_c, 0.0))

    v_qc = _violation(hm, np.maximum(hp, hq), slack)
    rep.add("level-set convex", v_qc <= 0, max(v_qc, 0.0))

    lam = family.modulus(hp, hq, vr)
    v_l = _violation(hm, lam, slack)
    rep.add("Lambda modulus", v_l <= 0, max(v_l, 0.0))

    a = rng.uniform(-env.v_max - 1, top + 4, size=n)
    b = rng.uniform(-env.v_max - 1, top + 4, size=n)
    eps = rng.uniform(0, 1, size=n)
    la, la_a, la_b = family.modulus(a, b, vr), family.modulus(a + eps, b, vr), family.modulus(a, b + eps, vr)
    mono = min(float(np.min(la_a - la)), float(np.min(la_b - la)))
    strict = float(np.max((la - np.maximum(a, b))[a != b]))
    ok7 = mono >= -slack * 10 and strict < 0
    rep.add("Lambda axioms", ok7, max(-mono, strict, 0.0))

    v_cx = _violation(hm, 0.5 * (hp + hq), slack)
    rep.add("midpoint convex", v_cx <= 0, max(v_cx, 0.0), required=False)
    if env.piecewise_constant:
        rep.add("continuous in y", False, 0.0, required=False, note="piecewise-constant field; discontinuous at cell faces")

    if not rep.passed:
        bad = [k for k, c in rep.checks.items() if c["required"] and not c["pass"]]
        raise HypothesisViolation(f"hypothesis violated: {', '.join(bad)}", rep.as_dict())
    return rep


def perturbation_tolerance(
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    alpha: float,
    n_samples: int = 512,
    n_dirs: int = 64,
    rng_seed: int = 0,
) -> float:
    """Largest sampled ``theta`` with ``inf_{|q|<=theta} H(p+q, y) >= mu - alpha``
    whenever ``H(p, y) >= mu``.

    Samples concentrate on the critical level set ``{H = mu}`` plus a shell
    outside it; the inner infimum is taken over the sphere of radius theta
    (fan directions plus the direction to the sublevel centre) and the centre
    itself when it lies inside the ball.
    """
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    rng = np.random.default_rng(rng_seed)
    d = env.dim
    ys = rng.uniform(-50, 50, size=(n_samples, d))
    vs = env.field(ys)
    if env.piecewise_constant:
        vs = np.concatenate([vs, np.asarray(env.values)])
    m = len(vs)
    dirs = _random_unit(rng, m, d) if d > 1 else np.where(rng.random((m, 1)) < 0.5, -1.0, 1.0)
    if d == 1:
        dirs[: m // 2] *= -1
    center, scale = family.affine_sublevel(mu, vs, d)
    # radial bisection on the gauge: boundary of {G <= 1} along dirs
    lo, hi = np.zeros(m), np.ones(m)
    while np.any(family.gauge(hi[:, None] * dirs) <= 1.0):
        hi = np.where(family.gauge(hi[:, None] * dirs) <= 1.0, 2 * hi, hi)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        inside = family.gauge(mid[:, None] * dirs) <= 1.0
        lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
    rad = np.where(scale >= 0, scale * hi, 0.0)
    crit = center + rad[:, None] * dirs
    shell = center + (rad[:, None] + rng.exponential(0.5, size=(m, 1))) * dirs
    ps = np.concatenate([crit, shell])
    vv = np.concatenate([vs, vs])
    cc = np.concatenate([center, center])
    keep = family.hamiltonian(ps, vv) >= mu
    ps, vv, cc = ps[keep], vv[keep], cc[keep]
    if len(ps) == 0:
        raise DegenerateFamily("no sampled momenta with H >= mu")
    if d == 1:
        fan = np.array([[1.0], [-1.0]])
    else:
        ang = 2 * np.pi * np.arange(n_dirs) / n_dirs
        fan = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    to_c = cc - ps
    nrm = np.linalg.norm(to_c, axis=1, keepdims=True)
    to_c = np.where(nrm > 0, to_c / np.where(nrm > 0, nrm, 1.0), fan[0])

    def holds(theta: float) -> bool:
        cand = [family.hamiltonian(ps + theta * to_c, vv)]
        for e in fan:
            cand.append(family.hamiltonian(ps + theta * e, vv))
        inner = np.min(np.stack(cand), axis=0)
        inside = nrm[:, 0] <= theta
        inner = np.where(inside, np.minimum(inner, family.hamiltonian(cc, vv)), inner)
        return bool(np.all(inner >= mu - alpha))

    theta_hi = 1.0
    while holds(theta_hi) and theta_hi < 1e6:
        theta_hi *= 2.0
    theta_lo = theta_hi
    while not holds(theta_lo):
        theta_lo *= 0.5
        if theta_lo < 1e-14:
            raise DegenerateFamily("no perturbation radius above floating-point resolution")
    if theta_lo == theta_hi:
        return theta_lo
    for _ in range(60):
        mid = 0.5 * (theta_lo + theta_hi)
        if holds(mid):
            theta_lo = mid
        else:
            theta_hi = mid
    return theta_lo


def family_from_config(cfg) -> HamiltonianFamily:
    return HamiltonianFamily.from_config(cfg)


def env_from_config(cfg) -> Environment:
    return Environment.from_config(cfg)

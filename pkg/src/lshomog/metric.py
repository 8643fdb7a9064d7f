"""Discrete metric problem: maximal subsolutions as Finsler shortest paths.

The maximal subsolution ``m_mu(., x)`` of the metric problem is approximated
by single-source shortest paths on a lattice whose edges carry the cost
``h |v| * sigma_mu(y, v/|v|)``, integrated over the pieces of the edge.
Checkerboard edges are split exactly at cell faces; continuous fields use
the midpoint value.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from numba import njit

from .convexgeom import geometry_for_value, reference_geometry, support
from .env import Environment, HamiltonianFamily
from .errors import PreconditionError, SolverBug, SolverFailure, UnsupportedRegime

FORWARD = "FORWARD"
REVERSED = "REVERSED"
_MAX_GENERIC_VALUES = 16


# ---------------------------------------------------------------------------
# stencil and lattice


@lru_cache(maxsize=8)
def stencil(rho: int, dim: int = 2) -> np.ndarray:
    """Coprime offsets with Chebyshev norm <= rho, canonical half first then negated.

    Row ``k`` and row ``k + K/2`` are negatives of each other.
    """
    if dim == 1:
        return np.array([[1, 0], [-1, 0]], dtype=np.int64)
    if rho not in (1, 2, 3):
        raise PreconditionError("stencil radius must be 1, 2 or 3")
    half = []
    for a in range(0, rho + 1):
        for b in range(-rho, rho + 1):
            if (a > 0 or b > 0) and math.gcd(a, abs(b)) == 1:
                half.append((a, b))
    half.sort(key=lambda v: math.atan2(v[1], v[0]))
    out = np.array(half + [(-a, -b) for a, b in half], dtype=np.int64)
    out.setflags(write=False)
    return out


def anisotropy_factor(rho: int, dim: int = 2) -> float:
    """``sec(theta_max / 2)`` for the largest angular gap of the stencil."""
    if dim == 1:
        return 1.0
    offs = stencil(rho, dim)
    ang = np.sort(np.arctan2(offs[:, 1], offs[:, 0]))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    return 1.0 / math.cos(float(gaps.max()) / 2.0)


@dataclass(frozen=True)
class Lattice:
    """Regular grid ``origin + h * index``; one-dimensional lattices use shape ``(n, 1)``."""

    h: float
    shape: tuple
    origin: tuple
    rho: int = 2
    dim: int = 2

    def __post_init__(self):
        if not self.h > 0:
            raise PreconditionError("spacing must be positive")
        if self.dim == 1 and self.shape[1] != 1:
            raise PreconditionError("one-dimensional lattices have shape (n, 1)")
        if len(self.origin) != self.dim:
            raise PreconditionError("origin must match dimension")

    @classmethod
    def centered(cls, h: float, half_nodes: int, dim: int = 2, rho: int = 2, center=None) -> "Lattice":
        """Square box of ``2*half_nodes+1`` nodes per axis, node ``half_nodes`` at ``center``."""
        c = np.zeros(dim) if center is None else np.asarray(center, dtype=np.float64)
        n = 2 * int(half_nodes) + 1
        shape = (n, 1) if dim == 1 else (n, n)
        origin = tuple(float(v) for v in c - h * half_nodes)
        return cls(float(h), shape, origin, rho, dim)

    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def offsets(self) -> np.ndarray:
        return stencil(self.rho, self.dim)

    @property
    def anisotropy(self) -> float:
        return anisotropy_factor(self.rho, self.dim)

    def coords(self, index=None) -> np.ndarray:
        """Coordinates of node multi-indices ``index[..., 2]`` (all nodes if omitted)."""
        if index is None:
            ii, jj = np.meshgrid(np.arange(self.shape[0]), np.arange(self.shape[1]), indexing="ij")
            index = np.stack([ii.ravel(), jj.ravel()], axis=1)
        index = np.asarray(index, dtype=np.float64)
        return np.asarray(self.origin) + self.h * index[..., : self.dim]

    def flat(self, index) -> int:
        i, j = (int(index[0]), int(index[1]) if len(index) > 1 else 0)
        if not (0 <= i < self.shape[0] and 0 <= j < self.shape[1]):
            raise PreconditionError(f"node {tuple(index)} outside lattice {self.shape}")
        return i * self.shape[1] + j

    def unflat(self, k: int) -> tuple:
        return (int(k) // self.shape[1], int(k) % self.shape[1])

    def node_of(self, point) -> tuple:
        """Nearest node multi-index to a point."""
        p = np.atleast_1d(np.asarray(point, dtype=np.float64))
        idx = np.rint((p - np.asarray(self.origin)) / self.h).astype(np.int64)
        return (int(idx[0]), 0) if self.dim == 1 else (int(idx[0]), int(idx[1]))

    def boundary_mask(self) -> np.ndarray:
        """Nodes within one stencil jump of the box edge; every exiting path visits one."""
        w = 1 if self.dim == 1 else self.rho
        m = np.zeros(self.shape, dtype=bool)
        m[:w, :] = True
        m[-w:, :] = True
        if self.dim == 2:
            m[:, :w] = True
            m[:, -w:] = True
        return m


# ---------------------------------------------------------------------------
# support tables and edge costs


def _unit(offs: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray]:
    v = offs[:, :dim].astype(np.float64)
    n = np.linalg.norm(v, axis=1)
    return v / n[:, None], n


class SupportTable:
    """``sigma_mu(V, q)`` for field values ``V`` and a fixed set of unit directions.

    Few distinct values (discrete checkerboards) get one generic geometry per
    value; otherwise the affine structure ``K_mu(V) = center(V) + scale(V) K_ref``
    gives ``sigma = center.q + scale * sigma_ref(q)``.
    """

    def __init__(self, family: HamiltonianFamily, env: Environment, mu: float, dirs: np.ndarray, n_dirs: int = 64, generic: bool | None = None):
        self.family, self.mu, self.dirs, self.dim = family, float(mu), dirs, env.dim
        discrete = env.piecewise_constant and len(set(env.values)) <= _MAX_GENERIC_VALUES
        self.generic = discrete if generic is None else generic
        if self.generic:
            if not env.piecewise_constant:
                raise PreconditionError("generic support tables need a discrete field")
            self.keys = np.array(sorted(set(float(v) for v in env.values)))
            rows = []
            for v in self.keys:
                try:
                    geom = geometry_for_value(family, float(v), env.dim, self.mu, n_dirs)
                except PreconditionError as exc:
                    raise UnsupportedRegime(f"mu = {mu}: {exc}") from None
                rows.append(np.atleast_1d(support(geom, dirs)))
            self.table = np.array(rows)
        else:
            ref = reference_geometry(family, env.dim, n_dirs)
            self.ref = np.atleast_1d(support(ref, dirs))

    def __call__(self, values: np.ndarray, k: int) -> np.ndarray:
        """Support values in direction ``dirs[k]`` for an array of field values."""
        if self.generic:
            idx = np.searchsorted(self.keys, values)
            return self.table[np.clip(idx, 0, len(self.keys) - 1), k]
        center, scale = self.family.affine_sublevel(self.mu, values, self.dim)
        if np.any(scale < 0):
            raise UnsupportedRegime(f"mu = {self.mu} leaves some sublevel sets empty")
        return center @ self.dirs[k] + scale * self.ref[k]

    def max_value(self, env: Environment) -> float:
        if self.generic:
            return float(self.table.max())
        vals = np.linspace(env.v_min, env.v_max, 257)
        return float(max(np.max(self(vals, k)) for k in range(len(self.dirs))))


def _check_costs(c: np.ndarray, mu: float):
    if np.any(c < 0):
        raise UnsupportedRegime(
            f"negative edge cost at mu = {mu}: 0 lies outside some sublevel set"
        )


def build_costs(lattice: Lattice, family: HamiltonianFamily, env: Environment, mu: float, direction: str = FORWARD, n_dirs: int = 64):
    """Edge cost array of shape ``(K, N)`` (``(K, 1)`` for a constant field) and ``C_mu``."""
    if env.dim != lattice.dim:
        raise PreconditionError("lattice and environment dimensions differ")
    offs = lattice.offsets
    K = len(offs)
    half = K // 2
    units, lengths = _unit(offs, lattice.dim)
    table = SupportTable(family, env, mu, units, n_dirs)
    sgn = 1 if direction == FORWARD else -1
    # a reversed edge with offset v reads the forward support at -v
    col = lambda k: k if sgn > 0 else (k + half) % K  # noqa: E731
    c_mu = table.max_value(env)
    if env.v_min == env.v_max:
        vals = np.array([env.v_min])
        costs = np.array([[lattice.h * lengths[k] * table(vals, col(k))[0]] for k in range(K)])
        _check_costs(costs, mu)
        return costs, c_mu
    n0, n1 = lattice.shape
    y0 = lattice.coords()
    costs = np.full((K, lattice.size), np.inf)
    for k in range(half):
        v = offs[k]
        y1 = y0 + lattice.h * v[: lattice.dim]
        frac, vals = env.segment_pieces(y0, y1)
        plus = np.zeros(lattice.size)
        minus = np.zeros(lattice.size)
        for i in range(frac.shape[1]):
            plus += frac[:, i] * table(vals[:, i], col(k))
            minus += frac[:, i] * table(vals[:, i], col(k + half))
        plus *= lattice.h * lengths[k]
        minus *= lattice.h * lengths[k]
        _check_costs(plus, mu)
        _check_costs(minus, mu)
        costs[k] = plus
        # edge b -> b - v shares the segment that starts at a = b - v
        grid = minus.reshape(n0, n1)
        shifted = np.full((n0, n1), np.inf)
        a0, a1 = int(v[0]), int(v[1])
        src = grid[max(0, -a0): n0 - max(0, a0), max(0, -a1): n1 - max(0, a1)]
        shifted[max(0, a0): n0 - max(0, -a0), max(0, a1): n1 - max(0, -a1)] = src
        costs[k + half] = shifted.ravel()
    return costs, c_mu


def edge_cost(lattice: Lattice, family: HamiltonianFamily, env: Environment, mu: float, node, offset, n_dirs: int = 64) -> float:
    """``h |v| * integral of sigma_mu(y, v/|v|)`` along the edge from ``node`` by ``offset``."""
    v = np.zeros(2, dtype=np.int64)
    v[: len(offset)] = offset
    matches = np.where((lattice.offsets == v).all(axis=1))[0]
    if len(matches) == 0:
        raise PreconditionError(f"offset {tuple(offset)} not in the stencil")
    k = int(matches[0])
    units, lengths = _unit(lattice.offsets, lattice.dim)
    table = SupportTable(family, env, mu, units, n_dirs)
    idx = np.zeros(2)
    idx[: len(node)] = node
    y0 = lattice.coords(idx)[None, :]
    y1 = y0 + lattice.h * v[: lattice.dim]
    half = len(lattice.offsets) // 2
    # pieces are always taken along the canonical orientation
    if k < half:
        frac, vals = env.segment_pieces(y0, y1)
    else:
        frac, vals = env.segment_pieces(y1, y0)
    total = 0.0
    for i in range(frac.shape[1]):
        total += frac[0, i] * table(vals[:, i], k)[0]
    cost = lattice.h * lengths[k] * total
    _check_costs(np.array([cost]), mu)
    return float(cost)


# ---------------------------------------------------------------------------
# Dijkstra kernel


@njit(cache=True, nogil=True, inline="always")
def _less(dist, a, b):
    return dist[a] < dist[b] or (dist[a] == dist[b] and a < b)


@njit(cache=True, nogil=True)
def _sift_up(heap, pos, dist, i):
    node = heap[i]
    while i > 0:
        parent = (i - 1) >> 1
        pn = heap[parent]
        if _less(dist, node, pn):
            heap[i] = pn
            pos[pn] = i
            i = parent
        else:
            break
    heap[i] = node
    pos[node] = i


@njit(cache=True, nogil=True)
def _sift_down(heap, pos, dist, i, size):
    node = heap[i]
    while True:
        child = 2 * i + 1
        if child >= size:
            break
        if child + 1 < size and _less(dist, heap[child + 1], heap[child]):
            child += 1
        cn = heap[child]
        if _less(dist, cn, node):
            heap[i] = cn
            pos[cn] = i
            i = child
        else:
            break
    heap[i] = node
    pos[node] = i


@njit(cache=True, nogil=True)
def dijkstra(n0, n1, offs, costs, source, targets):
    """Single-source shortest paths on the implicit stencil graph.

    ``costs`` is ``(K, N)`` or ``(K, 1)`` for a uniform graph. When ``targets``
    is non-empty the search stops once all targets are settled. Returns the
    distances and a settled mask; unsettled nodes hold +inf.
    """
    N = n0 * n1
    K = offs.shape[0]
    uniform = costs.shape[1] == 1
    dist = np.full(N, np.inf)
    state = np.zeros(N, np.int8)
    heap = np.empty(N, np.int64)
    pos = np.full(N, -1, np.int64)
    is_target = np.zeros(N, np.bool_)
    remaining = 0
    for t in targets:
        if not is_target[t]:
            is_target[t] = True
            remaining += 1
    stop = remaining > 0
    dist[source] = 0.0
    heap[0] = source
    pos[source] = 0
    state[source] = 1
    size = 1
    while size > 0:
        u = heap[0]
        size -= 1
        if size > 0:
            heap[0] = heap[size]
            pos[heap[0]] = 0
            _sift_down(heap, pos, dist, 0, size)
        state[u] = 2
        if stop and is_target[u]:
            remaining -= 1
            if remaining == 0:
                break
        i = u // n1
        j = u - i * n1
        du = dist[u]
        for k in range(K):
            ii = i + offs[k, 0]
            jj = j + offs[k, 1]
            if ii < 0 or ii >= n0 or jj < 0 or jj >= n1:
                continue
            v = ii * n1 + jj
            if state[v] == 2:
                continue
            c = costs[k, 0] if uniform else costs[k, u]
            nd = du + c
            if nd < dist[v]:
                dist[v] = nd
                if state[v] == 0:
                    state[v] = 1
                    heap[size] = v
                    pos[v] = size
                    size += 1
                    _sift_up(heap, pos, dist, size - 1)
                else:
                    _sift_up(heap, pos, dist, pos[v])
    for v in range(N):
        if state[v] != 2:
            dist[v] = np.inf
    return dist, state == 2


# ---------------------------------------------------------------------------
# metric fields


@dataclass
class MetricField:
    """Discrete ``m_mu(., x)`` (FORWARD) or ``n_mu(., x)`` (REVERSED) on a lattice."""

    mu: float
    source: tuple
    values: np.ndarray
    direction: str
    lipschitz: float
    lattice: Lattice
    box_certified: bool = True
    meta: dict = field(default_factory=dict)

    def at(self, node) -> float:
        return float(self.values[tuple(node)]) if len(node) == 2 else float(self.values[int(node[0]), 0])

    def interpolate(self, points) -> np.ndarray:
        """Multilinear interpolation of node values at arbitrary points."""
        lat = self.lattice
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        s = (p - np.asarray(lat.origin)) / lat.h
        base = np.floor(s).astype(np.int64)
        frac = s - base
        out = np.zeros(len(p))
        if lat.dim == 1:
            i0 = np.clip(base[:, 0], 0, lat.shape[0] - 2)
            f = s[:, 0] - i0
            return (1 - f) * self.values[i0, 0] + f * self.values[i0 + 1, 0]
        i0 = np.clip(base[:, 0], 0, lat.shape[0] - 2)
        j0 = np.clip(base[:, 1], 0, lat.shape[1] - 2)
        fx, fy = s[:, 0] - i0, s[:, 1] - j0
        out = (
            (1 - fx) * (1 - fy) * self.values[i0, j0]
            + fx * (1 - fy) * self.values[i0 + 1, j0]
            + (1 - fx) * fy * self.values[i0, j0 + 1]
            + fx * fy * self.values[i0 + 1, j0 + 1]
        )
        del frac
        return out

    def manifest(self) -> dict:
        return {
            "mu": self.mu,
            "source": list(self.source),
            "direction": self.direction,
            "lipschitz": self.lipschitz,
            "h": self.lattice.h,
            "shape": list(self.lattice.shape),
            "origin": list(self.lattice.origin),
            "stencil_radius": self.lattice.rho,
            "anisotropy_factor": self.lattice.anisotropy,
            "box_certified": self.box_certified,
            **self.meta,
        }

    def to_csv(self, path) -> Path:
        """Rows ``i, j, y0[, y1], value`` in row-major node order."""
        path = Path(path)
        lat = self.lattice
        coords = lat.coords()
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j"] + [f"y{k}" for k in range(lat.dim)] + ["value"])
            for n, (c, v) in enumerate(zip(coords, self.values.ravel())):
                i, j = lat.unflat(n)
                w.writerow([i, j] + [repr(float(x)) for x in c] + [repr(float(v))])
        path.with_suffix(".json").write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return path


def _flat_nodes(lattice: Lattice, nodes) -> np.ndarray:
    if nodes is None:
        return np.zeros(0, dtype=np.int64)
    return np.array([lattice.flat(n) for n in nodes], dtype=np.int64)


def solve_metric(
    lattice: Lattice,
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    source,
    direction: str = FORWARD,
    targets=None,
    n_dirs: int = 64,
    costs=None,
) -> MetricField:
    """Shortest-path values from ``source`` (a node multi-index).

    REVERSED uses the support of ``-K_mu``, so ``n_mu(y, x) = m_mu(x, y)``
    holds by path reversal. With ``targets`` the search stops early and the
    box certificate (every settled boundary-layer value at least the largest
    target value) is recorded.
    """
    if direction not in (FORWARD, REVERSED):
        raise PreconditionError(f"unknown direction {direction!r}")
    src = tuple(source) if len(source) == 2 else (int(source[0]), 0)
    s = lattice.flat(src)
    if costs is None:
        costs, c_mu = build_costs(lattice, family, env, mu, direction, n_dirs)
    else:
        costs, c_mu = costs
    tg = _flat_nodes(lattice, targets)
    n0, n1 = lattice.shape
    dist, settled = dijkstra(n0, n1, lattice.offsets, costs, s, tg)
    certified = True
    if len(tg):
        tmax = float(dist[tg].max())
        bmask = lattice.boundary_mask().ravel() & settled
        certified = bool(not bmask.any() or dist[bmask].min() >= tmax)
    return MetricField(float(mu), src, dist.reshape(n0, n1), direction, c_mu, lattice, certified)


def solve_to_points(
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    points,
    h: float = 1.0,
    rho: int = 2,
    direction: str = FORWARD,
    n_dirs: int = 64,
    max_grow: int = 6,
) -> tuple[np.ndarray, MetricField]:
    """``m_mu(point, 0)`` for off-lattice points via interpolation on a certified box.

    The box starts at half-width ``1.5 * anisotropy * max|point|`` and grows
    by 1.5x until the truncation certificate holds.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if env.dim == 1 and pts.shape[1] != 1:
        pts = pts.reshape(-1, 1)
    reach = float(np.max(np.linalg.norm(pts, axis=1), initial=0.0))
    af = anisotropy_factor(rho, env.dim)
    half = max(int(math.ceil(1.5 * af * reach / h)) + 2, 4)
    for _ in range(max_grow):
        lat = Lattice.centered(h, half, env.dim, rho)
        s = (pts - np.asarray(lat.origin)) / h
        base = np.floor(s).astype(np.int64)
        corners = []
        for di in (0, 1):
            for dj in ((0, 1) if env.dim == 2 else (0,)):
                c = base.copy()
                c[:, 0] += di
                if env.dim == 2:
                    c[:, 1] += dj
                corners.append(c)
        nodes = np.unique(np.concatenate(corners), axis=0)
        if env.dim == 1:
            nodes = np.concatenate([nodes, np.zeros_like(nodes)], axis=1)
        f = solve_metric(lat, family, env, mu, (half, half if env.dim == 2 else 0), direction, nodes, n_dirs)
        if f.box_certified:
            return f.interpolate(pts), f
        half = int(math.ceil(1.5 * half))
    raise SolverFailure(f"box truncation certificate failed after {max_grow} enlargements")


# ---------------------------------------------------------------------------
# exact identities


def _tol(x, tol):
    return tol * np.maximum(1.0, np.abs(x))


def check_subadditivity(fields, tol: float = 1e-12) -> dict:
    """``m(z, x) <= m(y, x) + m(z, y)`` over every ordered pair of sources and every node ``z``."""
    worst, count = -math.inf, 0
    for fx in fields:
        for fy in fields:
            if fx.lattice != fy.lattice or fx.mu != fy.mu or fx.direction != fy.direction:
                raise PreconditionError("fields must share lattice, mu and direction")
            rhs = fx.at(fy.source) + fy.values
            ok = np.isfinite(rhs)
            gap = fx.values[ok] - rhs[ok] - _tol(rhs[ok], tol)
            worst = max(worst, float(gap.max(initial=-math.inf)))
            count += int(ok.sum())
    rep = {"pass": worst <= 0, "worst_violation": max(worst, 0.0), "checked": count}
    if not rep["pass"]:
        raise SolverBug(f"subadditivity violated by {worst}")
    return rep


def check_reversal(reversed_field: MetricField, forward_fields, tol: float = 1e-12) -> dict:
    """``n(y, x) = m(x, y)``: reversed-from-x at y against forward-from-y at x."""
    x = reversed_field.source
    worst = 0.0
    for fy in forward_fields:
        a = reversed_field.at(fy.source)
        b = fy.at(x)
        worst = max(worst, abs(a - b) - float(_tol(b, tol)))
    rep = {"pass": worst <= 0, "worst_violation": max(worst, 0.0), "checked": len(forward_fields)}
    if not rep["pass"]:
        raise SolverBug(f"reversal identity violated by {worst}")
    return rep


def check_maximality_affine(fld: MetricField, p, family: HamiltonianFamily, env: Environment, slack: float = 1e-9) -> dict:
    """Affine subsolutions ``w(y) = p.y`` stay below the maximal one: ``p.(y-x) <= m(y, x)``."""
    lat = fld.lattice
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    q = p if fld.direction == FORWARD else -p
    vals = np.asarray(env.values) if env.piecewise_constant else env.field(lat.coords())
    hmax = float(np.max(family.hamiltonian(np.broadcast_to(q, vals.shape + q.shape), vals)))
    if hmax > fld.mu:
        raise PreconditionError(f"p.y is not a subsolution: sup H(p, y) = {hmax} > mu = {fld.mu}")
    y = lat.coords()
    x = lat.coords(np.array(fld.source, dtype=np.float64))
    lhs = (y - x) @ p
    v = fld.values.ravel()
    ok = np.isfinite(v)
    gap = lhs[ok] - v[ok] - slack * (1.0 + np.abs(v[ok]))
    k = int(np.argmax(gap))
    worst = float(gap[k])
    rep = {"pass": worst <= 0, "worst_violation": max(worst, 0.0), "worst_node": lat.unflat(np.flatnonzero(ok)[k]), "sup_H": hmax}
    if not rep["pass"]:
        warnings.warn(f"affine domination fails by {worst} at node {rep['worst_node']}: refine the lattice or fan", RuntimeWarning)
    return rep


def check_mu_monotonicity(f_mu: MetricField, f_nu: MetricField, k_bound: float | None = None) -> dict:
    """Exact ordering ``m_nu >= m_mu`` plus the empirical strict-growth constant."""
    if f_mu.lattice != f_nu.lattice or f_mu.source != f_nu.source:
        raise PreconditionError("fields must share lattice and source")
    gap_mu = f_nu.mu - f_mu.mu
    if gap_mu < 0:
        raise PreconditionError("expected mu <= nu")
    if k_bound is not None and gap_mu < 1.0 / k_bound and gap_mu != 0:
        raise PreconditionError("nu - mu below 1/k")
    diff = f_nu.values - f_mu.values
    ok = np.isfinite(diff)
    worst = float(np.min(diff[ok]))
    lat = f_mu.lattice
    dist = np.linalg.norm(lat.coords() - lat.coords(np.array(f_mu.source, dtype=np.float64)), axis=1).reshape(lat.shape)
    far = ok & (dist > 0)
    c = float(np.min(diff[far] / dist[far])) if far.any() else 0.0
    rep = {"pass": worst >= 0, "worst_violation": max(-worst, 0.0), "growth_constant": c}
    if not rep["pass"]:
        raise SolverBug(f"mu-monotonicity violated by {-worst}")
    return rep


def check_lipschitz(fld: MetricField) -> dict:
    """``m(y, x) <= C_mu * anisotropy * |y - x|`` on all settled nodes."""
    lat = fld.lattice
    dist = np.linalg.norm(lat.coords() - lat.coords(np.array(fld.source, dtype=np.float64)), axis=1)
    v = fld.values.ravel()
    ok = np.isfinite(v)
    bound = fld.lipschitz * lat.anisotropy * dist[ok]
    worst = float(np.max(v[ok] - bound - 1e-12 * np.maximum(1.0, bound)))
    return {"pass": worst <= 0, "worst_violation": max(worst, 0.0)}

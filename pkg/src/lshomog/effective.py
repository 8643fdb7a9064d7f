"""Effective Hamiltonian from shape functions by sublevel-set duality.

``p`` lies in the effective sublevel set ``{H̄ <= mu}`` exactly when
``p.e <= m̄_mu(e)`` for every direction ``e``. Membership is monotone in
``mu``, so ``H̄(p)`` is found by bisection. Probes sit on a shared dyadic grid
``floor + j * step`` so shape estimates are reused across momenta.
"""

from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .env import Environment, HamiltonianFamily, sup_hamiltonian
from .errors import PreconditionError, StatisticsInconsistency
from .metric import FORWARD, REVERSED
from .shape import DEFAULT_LADDER, ShapeEstimate, estimate_shape

MEMBER_SLACK = 1e-9


def member_K(p, shape: ShapeEstimate, slack: float = MEMBER_SLACK) -> tuple[bool, float]:
    """``(p in K_mu, margin)`` with margin ``min_e (m̄_mu(e) - p.e)`` over the fan."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    margin = float(np.min(shape.estimate - shape.directions @ p))
    scale = max(1.0, float(np.max(np.abs(shape.estimate))))
    return margin >= -slack * scale, margin


def hstar_lower(family: HamiltonianFamily, env: Environment, n: int = 4096, seed: int = 0) -> float:
    """Sampled ``esssup_y inf_p H(p, y)``."""
    if env.piecewise_constant:
        vals = np.asarray(env.values, dtype=np.float64)
    else:
        rng = np.random.default_rng(seed)
        vals = env.field(rng.uniform(-64.0, 64.0, size=(n, env.dim)))
    return float(np.max(family.min_value(vals)))


def admissibility_floor(family: HamiltonianFamily, env: Environment) -> float:
    """Smallest level with nonnegative metric costs, and never below the H̄_* bound."""
    return max(sup_hamiltonian(family, env, np.zeros(env.dim)), hstar_lower(family, env))


class Reconstructor:
    """Shared probe grid and shape cache for bracketing ``H̄`` on many momenta."""

    def __init__(
        self,
        family: HamiltonianFamily,
        env: Environment,
        seeds: Sequence[int],
        ceiling: float,
        tol: float | None = None,
        ladder: Sequence[float] = DEFAULT_LADDER,
        n_fan: int = 16,
        h: float = 1.0,
        rho: int = 2,
        workers: int = 1,
        n_dirs: int = 64,
    ):
        self.family, self.env = family, env
        self.seeds = tuple(int(s) for s in seeds)
        self.floor = admissibility_floor(family, env)
        self.lower = hstar_lower(family, env)
        if not ceiling > self.floor:
            ceiling = self.floor + 1.0
        span = ceiling - self.floor
        tol = 1e-2 * span if tol is None else tol
        if not tol > 0:
            raise PreconditionError("bisection tolerance must be positive")
        self.levels = 1 << max(1, math.ceil(math.log2(span / tol)))
        self.step = span / self.levels
        self.ceiling = self.floor + self.levels * self.step
        self.opts = dict(ladder=tuple(ladder), n_fan=n_fan, h=h, rho=rho, workers=workers, n_dirs=n_dirs)
        self._cache: dict = {}
        self._lock = threading.Lock()

    def mu(self, j: int) -> float:
        return self.floor + j * self.step

    def shape(self, j: int, direction: str = FORWARD) -> ShapeEstimate:
        key = (int(j), direction)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        est = estimate_shape(self.family, self.env, self.mu(j), self.seeds, direction=direction, **self.opts)
        with self._lock:
            return self._cache.setdefault(key, est)

    def member(self, p, j: int, direction: str = FORWARD) -> tuple[bool, float]:
        # the reversed shape n̄ describes -K_mu
        q = np.atleast_1d(np.asarray(p, dtype=np.float64))
        return member_K(q if direction == FORWARD else -q, self.shape(j, direction))

    @property
    def max_halfwidth(self) -> float:
        hw = [float(np.max(s.halfwidth)) for s in self._cache.values()]
        return max(hw) if hw else 0.0

    def bracket(self, p, direction: str = FORWARD) -> dict:
        """Bisection on the probe grid: member at ``hi``, non-member at ``lo``."""
        ok_top, _ = self.member(p, self.levels, direction)
        if not ok_top:
            raise StatisticsInconsistency(f"p = {p} is not a member at the ceiling level {self.ceiling}")
        ok_floor, _ = self.member(p, 0, direction)
        if ok_floor:
            resolved = self.floor <= self.lower
            return {"lo": self.lower if not resolved else self.floor, "hi": self.floor, "resolved": resolved, "at_floor": True}
        jl, jh = 0, self.levels
        while jh - jl > 1:
            jm = (jl + jh) // 2
            if self.member(p, jm, direction)[0]:
                jh = jm
            else:
                jl = jm
        return {"lo": self.mu(jl), "hi": self.mu(jh), "resolved": True, "at_floor": False}


def reconstruct_Hbar(p, family: HamiltonianFamily, env: Environment, seeds: Sequence[int], tol: float | None = None, bracket=None, direction: str = FORWARD, **opts) -> tuple[float, float]:
    """Bracket ``[mu_lo, mu_hi]`` containing ``H̄(p)``."""
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    ceiling = sup_hamiltonian(family, env, p) if bracket is None else bracket[1]
    rec = Reconstructor(family, env, seeds, ceiling, tol, **opts)
    b = rec.bracket(p, direction)
    return b["lo"], b["hi"]


@dataclass
class EffectiveTable:
    """Brackets of ``H̄`` over a momentum grid plus qualitative verdicts."""

    p_grid: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    floor: float
    step: float
    hstar_lower: float
    ceilings: np.ndarray
    direction: str = FORWARD
    max_halfwidth: float = 0.0
    resolved: np.ndarray | None = None
    verdicts: dict = field(default_factory=dict)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def hstar_min(self) -> float:
        return float(np.min(self.hi))

    def index(self, p) -> int:
        p = np.atleast_1d(np.asarray(p, dtype=np.float64))
        d = np.linalg.norm(self.p_grid - p, axis=1)
        k = int(np.argmin(d))
        return k if d[k] <= 1e-9 * max(1.0, float(np.linalg.norm(p))) else -1

    def to_csv(self, path) -> Path:
        """Rows ``p0[, p1], mu_lo, mu_hi``; verdicts go to a JSON file alongside."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"p{i}" for i in range(self.p_grid.shape[1])] + ["mu_lo", "mu_hi"])
            for p, a, b in zip(self.p_grid, self.lo, self.hi):
                w.writerow([repr(float(x)) for x in p] + [repr(float(a)), repr(float(b))])
        path.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path

    def summary(self) -> dict:
        return {
            "direction": self.direction,
            "floor": self.floor,
            "step": self.step,
            "hstar_min": self.hstar_min,
            "hstar_lower": self.hstar_lower,
            "max_ci_halfwidth": self.max_halfwidth,
            "verdicts": self.verdicts,
        }


def build_table(
    family: HamiltonianFamily,
    env: Environment,
    p_grid,
    seeds: Sequence[int],
    tol: float | None = None,
    direction: str = FORWARD,
    reconstructor: Reconstructor | None = None,
    **opts,
) -> EffectiveTable:
    """Reconstruct ``H̄`` on a grid of momenta with one shared probe cache."""
    grid = np.asarray(p_grid, dtype=np.float64)
    if grid.ndim == 1:
        grid = grid[:, None]
    if grid.shape[1] != env.dim:
        raise PreconditionError("momentum grid dimension differs from the environment")
    ceilings = np.array([sup_hamiltonian(family, env, p) for p in grid])
    rec = reconstructor or Reconstructor(family, env, seeds, float(ceilings.max()), tol, **opts)
    rows = [rec.bracket(p, direction) for p in grid]
    return EffectiveTable(
        grid,
        np.array([r["lo"] for r in rows]),
        np.array([r["hi"] for r in rows]),
        rec.floor,
        rec.step,
        rec.lower,
        ceilings,
        direction,
        rec.max_halfwidth,
        np.array([r["resolved"] for r in rows]),
    )


def estimate_Hstar(table: EffectiveTable, family: HamiltonianFamily, env: Environment, tol: float | None = None) -> dict:
    """``(grid-min of H̄, sampled esssup_y inf_p H)`` with the ordering check."""
    tol = 2.0 * table.step if tol is None else tol
    low = hstar_lower(family, env)
    mn = table.hstar_min
    return {"min_based": mn, "lower_bound": low, "pass": low <= mn + tol}


def _pairs_with_midpoints(grid: np.ndarray):
    n = len(grid)
    for a in range(n):
        for b in range(a + 1, n):
            mid = 0.5 * (grid[a] + grid[b])
            d = np.linalg.norm(grid - mid, axis=1)
            c = int(np.argmin(d))
            if d[c] <= 1e-9:
                yield a, b, c


def property_suite(table: EffectiveTable, rev_table: EffectiveTable | None, family: HamiltonianFamily, env: Environment, tol: float | None = None) -> dict:
    """Evenness, quasiconvexity, Lambda inequality, duality, H̄_* ordering, flat spot.

    Inequalities use bracket ends on the conservative side: the left side
    takes ``mu_lo`` and the right side ``mu_hi``.
    """
    if tol is None:
        tol = max(3.0 * table.max_halfwidth, 2.0 * table.step)
    grid, lo, hi, mid = table.p_grid, table.lo, table.hi, table.mid
    v: dict = {"tol": tol}

    worst = 0.0
    pairs = 0
    for k, p in enumerate(grid):
        j = table.index(-p)
        if j >= 0:
            worst = max(worst, abs(mid[k] - mid[j]))
            pairs += 1
    v["evenness"] = {
        "pass": worst <= tol,
        "expected": family.is_even(env.dim),
        "worst": worst,
        "pairs": pairs,
    }

    wq = wl = -math.inf
    n_pairs = 0
    vr = (env.v_min, env.v_max)
    for a, b, c in _pairs_with_midpoints(grid):
        n_pairs += 1
        wq = max(wq, lo[c] - max(hi[a], hi[b]))
        wl = max(wl, float(lo[c] - family.modulus(hi[a], hi[b], vr)))
    v["quasiconvexity"] = {"pass": wq <= tol, "worst": max(wq, 0.0) if n_pairs else 0.0, "pairs": n_pairs}
    v["lambda"] = {"pass": wl <= tol, "worst": max(wl, 0.0) if n_pairs else 0.0, "pairs": n_pairs}

    if rev_table is not None:
        d = float(np.max(np.abs(mid - rev_table.mid)))
        v["duality"] = {"pass": d <= tol, "worst": d}

    hs = estimate_Hstar(table, family, env, tol)
    v["hstar"] = hs
    chain = float(np.max(np.maximum(hs["lower_bound"] - hi, lo - table.ceilings), initial=-math.inf))
    v["chain"] = {"pass": chain <= tol, "worst": max(chain, 0.0)}

    flat = hi <= hs["min_based"] + tol
    v["flat_spot"] = {"count": int(flat.sum()), "measure": _grid_measure(grid, flat)}
    v["empty_interior"] = _empty_interior(grid, mid, hs["min_based"], tol)
    table.verdicts = _plain(v)
    return table.verdicts


def _plain(obj):
    """Convert numpy scalars inside nested verdicts to builtins for JSON."""
    if isinstance(obj, dict):
        return {k: _plain(x) for k, x in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(x) for x in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _grid_measure(grid: np.ndarray, mask: np.ndarray) -> float:
    """Measure of a grid subset: hull length in 1-D, tensor Voronoi cells in 2-D."""
    if not mask.any():
        return 0.0
    if grid.shape[1] == 1:
        return float(grid[mask, 0].max() - grid[mask, 0].min())
    weights = np.ones(len(grid))
    for k in range(grid.shape[1]):
        xs = np.unique(grid[:, k])
        if len(xs) < 2:
            continue
        edges = np.concatenate([[xs[0]], 0.5 * (xs[1:] + xs[:-1]), [xs[-1]]])
        width = np.diff(edges)
        weights *= width[np.searchsorted(xs, grid[:, k])]
    return float(weights[mask].sum())


def _empty_interior(grid: np.ndarray, mid: np.ndarray, hstar: float, tol: float) -> dict:
    """No run of three consecutive 1-D grid points on a common level above the flat spot."""
    if grid.shape[1] != 1:
        return {"pass": True, "checked": 0, "note": "evaluated on 1-D grids only"}
    order = np.argsort(grid[:, 0])
    m = mid[order]
    bad = 0
    for i in range(len(m) - 2):
        w = m[i: i + 3]
        if w.min() > hstar + tol and w.max() - w.min() <= 1e-12 * max(1.0, abs(w.max())):
            bad += 1
    return {"pass": bad == 0, "checked": max(len(m) - 2, 0), "violations": bad}


def recheck_bracket(table: EffectiveTable, rec_fresh: Reconstructor) -> dict:
    """Re-test membership at ``mu_hi`` and non-membership at ``mu_lo`` with fresh realizations.

    A flip is a CI-level fluke when its margin is within three fresh
    half-widths; anything larger means the bracket is wrong.
    """
    if rec_fresh.floor != table.floor or rec_fresh.step != table.step:
        raise PreconditionError("fresh reconstructor must share the probe grid")
    mism = []
    within = True
    for k, p in enumerate(table.p_grid):
        checks = [("hi", int(round((table.hi[k] - table.floor) / table.step)), True)]
        if table.floor <= table.lo[k] < table.hi[k]:
            checks.append(("lo", int(round((table.lo[k] - table.floor) / table.step)), False))
        for side, j, want in checks:
            ok, margin = rec_fresh.member(p, j, table.direction)
            if ok != want:
                hw = float(np.max(rec_fresh.shape(j, table.direction).halfwidth))
                within = within and abs(margin) <= 3.0 * hw
                mism.append({"index": k, "side": side, "margin": margin, "halfwidth": hw})
    return {"pass": not mism, "within_ci": within, "mismatches": mism, "checked": len(table.p_grid)}

"""Monte-Carlo estimation of the deterministic shape function ``m̄_mu``.

For each realization one shortest-path solve from the origin provides
``t^{-1} m_mu(t e_k, 0)`` on every ladder scale ``t`` and fan direction
``e_k``. Subadditivity plus stationarity make the ensemble means nonincreasing
along doubling ladders (the Fekete diagnostic), so the largest-scale mean is
the estimate, reported with a Student-t confidence interval.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from ._parallel import pmap
from .convexgeom import fan
from .env import Environment, HamiltonianFamily
from .errors import PreconditionError, StatisticsInconsistency
from .metric import FORWARD, REVERSED, solve_to_points

DEFAULT_LADDER = (64.0, 128.0, 256.0, 512.0)


@dataclass
class ShapeEstimate:
    """Ladder statistics of ``t^{-1} m_mu(t e, 0)`` over an ensemble.

    ``samples[i, k, j]`` holds realization ``i``, direction ``k``, scale ``j``.
    """

    mu: float
    directions: np.ndarray
    ladder: np.ndarray
    samples: np.ndarray
    seeds: tuple
    direction: str = FORWARD
    confidence: float = 0.95
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def means(self) -> np.ndarray:
        # sorted accumulation keeps the reduction independent of job order
        return np.sort(self.samples, axis=0).sum(axis=0) / self.n

    @property
    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.full(self.samples.shape[1:], np.inf)
        return np.std(self.samples, axis=0, ddof=1) / math.sqrt(self.n)

    @property
    def estimate(self) -> np.ndarray:
        """Largest-scale mean per direction: an upper bound up to noise."""
        return self.means[:, -1]

    @property
    def halfwidth(self) -> np.ndarray:
        if self.n < 2:
            return np.full(len(self.directions), np.inf)
        q = stats.t.ppf(0.5 + self.confidence / 2.0, self.n - 1)
        return q * self.stderr[:, -1]

    @property
    def ci(self) -> np.ndarray:
        return np.stack([self.estimate - self.halfwidth, self.estimate + self.halfwidth], axis=1)

    def value(self, e) -> float:
        """Estimate at a fan direction (matched to the nearest fan member)."""
        e = np.atleast_1d(np.asarray(e, dtype=np.float64))
        k = int(np.argmax(self.directions @ (e / np.linalg.norm(e))))
        return float(self.estimate[k])

    def to_csv(self, path) -> Path:
        """Rows ``k, e0[, e1], t, mean, stderr``; a JSON summary sits alongside."""
        path = Path(path)
        means, se = self.means, self.stderr
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k"] + [f"e{i}" for i in range(self.directions.shape[1])] + ["t", "mean", "stderr"])
            for k, e in enumerate(self.directions):
                for j, t in enumerate(self.ladder):
                    w.writerow([k] + [repr(float(x)) for x in e] + [repr(float(t)), repr(float(means[k, j])), repr(float(se[k, j]))])
        path.with_suffix(".json").write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        return path

    def summary(self) -> dict:
        return {
            "mu": self.mu,
            "direction": self.direction,
            "n_realizations": self.n,
            "seeds": list(self.seeds),
            "ladder": [float(t) for t in self.ladder],
            "estimate": [float(v) for v in self.estimate],
            "ci": [[float(a), float(b)] for a, b in self.ci],
            "diagnostics": self.diagnostics,
        }


def _fekete(samples: np.ndarray, slack: float = 1e-12) -> dict:
    n = samples.shape[0]
    means = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(samples.shape[1:])
    comb = np.sqrt(se[:, 1:] ** 2 + se[:, :-1] ** 2)
    excess = means[:, 1:] - means[:, :-1] - slack * np.maximum(1.0, np.abs(means[:, :-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(excess > 0, np.where(comb > 0, excess / comb, np.inf), 0.0)
    flags = [(int(k), int(j)) for k, j in zip(*np.nonzero(z > 2.0))]
    return {"max_z": float(z.max(initial=0.0)), "flags_2sigma": flags, "pass_2sigma": not flags}


def estimate_shape(
    family: HamiltonianFamily,
    env: Environment,
    mu: float,
    seeds: Sequence[int],
    ladder: Sequence[float] = DEFAULT_LADDER,
    directions=None,
    n_fan: int = 16,
    h: float = 1.0,
    rho: int = 2,
    direction: str = FORWARD,
    workers: int = 1,
    n_dirs: int = 64,
    confidence: float = 0.95,
    strict: bool = True,
) -> ShapeEstimate:
    """Estimate ``m̄_mu`` (or ``n̄_mu`` for REVERSED) on a direction fan.

    ``env`` is a template; each seed gives one realization. Raises
    :class:`StatisticsInconsistency` when a ladder step violates the Fekete
    bound by more than three standard errors (``strict``).
    """
    if direction not in (FORWARD, REVERSED):
        raise PreconditionError(f"unknown direction {direction!r}")
    ladder = np.asarray(sorted(float(t) for t in ladder))
    if len(ladder) == 0 or ladder[0] <= 0:
        raise PreconditionError("ladder must be a nonempty set of positive scales")
    if len(seeds) == 0:
        raise PreconditionError("need at least one realization")
    dirs = fan(n_fan, env.dim) if directions is None else np.atleast_2d(np.asarray(directions, dtype=np.float64))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    pts = (ladder[None, :, None] * dirs[:, None, :]).reshape(-1, env.dim)

    def one(seed: int) -> np.ndarray:
        vals, _ = solve_to_points(family, env.with_seed(seed), mu, pts, h, rho, direction, n_dirs)
        return vals.reshape(len(dirs), len(ladder)) / ladder[None, :]

    samples = np.stack(pmap(one, list(seeds), workers))
    est = ShapeEstimate(float(mu), dirs, ladder, samples, tuple(int(s) for s in seeds), direction, confidence)
    fk = _fekete(samples)
    est.diagnostics["fekete"] = fk
    if strict and fk["max_z"] > 3.0:
        raise StatisticsInconsistency(f"Fekete bound violated at {fk['max_z']:.2f} standard errors")
    return est


def _familywise_q(confidence: float, m: int, df: int) -> float:
    """Student-t quantile with a Bonferroni split over ``m`` simultaneous comparisons."""
    if df < 1:
        return math.inf
    return float(stats.t.ppf(1.0 - (1.0 - confidence) / (2.0 * max(m, 1)), df))


def _match(dirs_a: np.ndarray, e: np.ndarray) -> int:
    k = int(np.argmax(dirs_a @ e))
    if not np.allclose(dirs_a[k], e, atol=1e-9):
        raise PreconditionError("fan is not closed under negation")
    return k


def check_reversal_identity(forward: ShapeEstimate, reverse: ShapeEstimate, slack: float = 1e-12) -> dict:
    """``n̄_mu(e) = m̄_mu(-e)`` within the combined confidence band, family-wise over the fan."""
    if forward.mu != reverse.mu:
        raise PreconditionError("estimates must share mu")
    q = _familywise_q(forward.confidence, len(reverse.directions), min(forward.n, reverse.n) - 1)
    se_f, se_r = forward.stderr[:, -1], reverse.stderr[:, -1]
    worst, rows = -math.inf, []
    for k, e in enumerate(reverse.directions):
        j = _match(forward.directions, -e)
        d = abs(reverse.estimate[k] - forward.estimate[j])
        band = q * math.hypot(se_r[k], se_f[j]) + slack * max(1.0, abs(forward.estimate[j]))
        worst = max(worst, d - band)
        rows.append({"k": k, "n_bar": float(reverse.estimate[k]), "m_bar_neg": float(forward.estimate[j]), "band": band})
    return {"pass": worst <= 0, "worst_excess": float(worst), "rows": rows}


def check_mu_monotone(lower: ShapeEstimate, upper: ShapeEstimate) -> dict:
    """Strict growth ``m̄_mu < m̄_nu`` with confidence-interval separation.

    With common random numbers the comparison is paired per realization.
    """
    if not lower.mu < upper.mu:
        raise PreconditionError("expected lower.mu < upper.mu")
    if lower.seeds == upper.seeds and lower.n > 1:
        diff = upper.samples[:, :, -1] - lower.samples[:, :, -1]
        q = stats.t.ppf(0.5 + lower.confidence / 2.0, lower.n - 1)
        lo = diff.mean(axis=0) - q * diff.std(axis=0, ddof=1) / math.sqrt(lower.n)
    else:
        lo = (upper.estimate - upper.halfwidth) - (lower.estimate + lower.halfwidth)
    return {"pass": bool(np.all(lo > 0)), "min_separation": float(lo.min()), "paired": lower.seeds == upper.seeds}


def check_convexity(est: ShapeEstimate, slack: float = 1e-12) -> dict:
    """``m̄(e_a + e_b) <= m̄(e_a) + m̄(e_b)`` for fan triples, within CI."""
    dirs, m, hw = est.directions, est.estimate, est.halfwidth
    n = len(dirs)
    if est.directions.shape[1] == 1 or n < 3:
        return {"pass": True, "worst_excess": 0.0, "checked": 0}
    worst, count = -math.inf, 0
    for step in range(1, n // 4 + 1):
        for k in range(n):
            a, b = (k - step) % n, (k + step) % n
            s = dirs[a] + dirs[b]
            norm = float(np.linalg.norm(s))
            if norm < 1e-9:
                continue
            try:
                c = _match(dirs, s / norm)
            except PreconditionError:
                continue
            lhs = norm * m[c]
            rhs = m[a] + m[b]
            band = math.sqrt((norm * hw[c]) ** 2 + hw[a] ** 2 + hw[b] ** 2) + slack * max(1.0, rhs)
            worst = max(worst, lhs - rhs - band)
            count += 1
    return {"pass": worst <= 0, "worst_excess": float(worst), "checked": count}


def compare_ensembles(a: ShapeEstimate, b: ShapeEstimate) -> dict:
    """Disjoint ensembles agree within the combined confidence band, family-wise over the fan."""
    if set(a.seeds) & set(b.seeds):
        raise PreconditionError("ensembles share realizations")
    d = np.abs(a.estimate - b.estimate)
    q = _familywise_q(a.confidence, len(a.directions), min(a.n, b.n) - 1)
    band = q * np.hypot(a.stderr[:, -1], b.stderr[:, -1]) + 1e-12
    return {"pass": bool(np.all(d <= band)), "worst_ratio": float(np.max(d / band))}


def sublinearity_check(w: Callable[[np.ndarray], np.ndarray], radii: Sequence[float], dim: int, n_angles: int = 64, center=None) -> dict:
    """Profile of ``sup_{|y|=R} |w(y)| / R`` over a radius ladder.

    ``w`` maps points ``(m, dim)`` to values. The slope is the least-squares
    exponent in ``log profile ~ slope * log R``.
    """
    radii = np.asarray(radii, dtype=np.float64)
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=np.float64)
    dirs = fan(n_angles, dim)
    prof = []
    for r in radii:
        vals = np.abs(np.asarray(w(c + r * dirs)))
        prof.append(float(vals.max()) / r)
    prof = np.array(prof)
    pos = prof > 0
    slope = float(np.polyfit(np.log(radii[pos]), np.log(prof[pos]), 1)[0]) if pos.sum() >= 2 else 0.0
    ratio = float(prof[0] / prof[-1]) if prof[-1] > 0 else math.inf
    return {"radii": radii.tolist(), "profile": prof.tolist(), "slope": slope, "decay_ratio": ratio}

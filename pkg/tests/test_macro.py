from __future__ import annotations

import json

import numpy as np
import pytest

from lshomog.env import Environment, HamiltonianFamily
from lshomog.errors import PreconditionError
from lshomog.macro import (
    agreement,
    ball_uniform_check,
    corrector_checks,
    dissipation,
    domination_check,
    estimate_h,
    lipschitz_constant,
    scheme_monotone,
    solve_macro,
)

CB1 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 3, "values": [0.0, 1.0], "dim": 1})
CB2 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 3, "values": [0.0, 1.0], "dim": 2})
ZERO1 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0], "dim": 1})
ZERO2 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0], "dim": 2})
POWER1 = HamiltonianFamily("POWER", gamma=1.0)
POWER_HALF = HamiltonianFamily("POWER", gamma=0.5)


def _osher_residual(sol, gamma, V):
    """``delta u + k max(a - c, c - b, 0)^gamma - v0`` with reflected ghosts (c = 0, k = 1)."""
    u = sol.values
    ext = np.concatenate([[u[1]], u, [u[-2]]])
    a = sol.p[0] + (u - ext[:-2]) / sol.h
    b = sol.p[0] + (ext[2:] - u) / sol.h
    g = np.maximum(np.maximum(a, -b), 0.0) ** gamma - V
    return sol.delta * u + g


def test_constant_coefficient_is_exact():
    for env, p, scheme in ((ZERO1, [0.7], "lf"), (ZERO1, [0.7], "godunov"), (ZERO2, [0.3, 0.4], "lf")):
        sol = solve_macro(POWER1, env, p, 0.1, scheme=scheme)
        assert sol.estimate == pytest.approx(float(np.linalg.norm(p)), abs=1e-9)
        assert np.ptp(sol.values) <= 1e-9 * np.max(np.abs(sol.values))


@pytest.mark.parametrize("gamma", [1.0, 0.5])
def test_godunov_solution_solves_scheme(gamma):
    fam = HamiltonianFamily("POWER", gamma=gamma)
    sol = solve_macro(fam, CB1, [1.0], 0.05, scheme="godunov")
    V = CB1.field(sol.axis[:, None])
    F = _osher_residual(sol, gamma, V)
    # M-matrix comparison: |u - u*| <= max|F| / delta
    assert np.max(np.abs(F)) / sol.delta <= 1e-8 * max(1.0, np.max(np.abs(sol.values))) * 1.0001
    assert sol.lipschitz_report()["pass"]


def test_godunov_and_lax_friedrichs_agree():
    g = solve_macro(POWER1, CB1, [1.0], 0.05, scheme="godunov")
    f = solve_macro(POWER1, CB1, [1.0], 0.05, scheme="lf")
    # both are consistent monotone schemes; they differ at O(h) on the same grid
    assert abs(g.estimate - f.estimate) <= 0.05
    assert scheme_monotone(f, POWER1, CB1)["pass"]
    assert scheme_monotone(g, POWER1, CB1)["pass"]


def test_auto_scheme_choice():
    assert solve_macro(POWER_HALF, CB1, [1.0], 0.1).scheme == "godunov"
    assert solve_macro(POWER1, CB1, [1.0], 0.1).scheme == "lf"


def test_comparison_principle_bounds():
    # -M <= delta v <= M for the discrete solution
    sol = solve_macro(POWER1, CB2, [0.5, 0.2], 0.2)
    rep = sol.lipschitz_report()
    assert rep["pass"] and rep["sup_delta_v"] <= rep["M"] + 1e-9


def test_dissipation_bounds_slope():
    M, C = lipschitz_constant(POWER1, CB1, [1.0])
    assert M == 1.0 and C >= M
    a = dissipation(POWER1, CB1, [1.0], C, 0.25)
    assert a[0] == pytest.approx(1.0, abs=1e-12)


def test_estimate_h_ladder_and_ball_check():
    seeds = list(range(8))
    est = estimate_h(POWER1, CB1, [1.0], [0.1, 0.05], seeds)
    assert est["h_lower"] <= est["h_upper"]
    assert 0.3 <= est["h_lower"] and est["h_upper"] <= 0.7
    by = {}
    for sol in est["solutions"]:
        by.setdefault(sol.delta, []).append(sol)
    rep = ball_uniform_check(by, radii=(0.25, 0.5))
    assert set(rep["deviation"]) == {"0.1", "0.05"}
    with pytest.raises(PreconditionError):
        estimate_h(POWER1, CB1, [1.0], [0.05, 0.1], seeds)
    with pytest.raises(PreconditionError):
        ball_uniform_check({0.1: by[0.1][:2]})


def test_domination_and_negative_control():
    sol = solve_macro(POWER1, CB1, [1.0], 0.05)
    # H̄(1) = 0.5 for this family
    ok = domination_check(sol, POWER1, CB1, 0.5 + 0.05, n_sources=5, n_targets=100)
    assert ok["pass"] and ok["pairs"] == 500
    mu_bad = 0.5 - 0.1 - 0.05
    bad = domination_check(sol, POWER1, CB1, mu_bad, n_sources=5, n_targets=100)
    assert not bad["pass"]
    # m̄_mu(1) = mu + 1/2, so rightward pairs miss by (H̄ - mu) |y - x| minus the slack;
    # leftward pairs have p.(y - x) < 0 and cannot fail, so about half the far pairs do
    (x, _), (y, _) = bad["worst_pair"]
    gap = (0.5 - mu_bad) * abs(y - x) * sol.h - bad["slack"]
    assert bad["worst_violation"] == pytest.approx(gap, rel=0.2)
    assert 0.35 <= bad["fail_fraction_far"] <= 0.65


def test_corrector_checks_report():
    sol = solve_macro(POWER1, CB1, [1.0], 0.0125)
    rep = corrector_checks(sol, POWER1, CB1, 0.55, n_sources=2, n_targets=20)
    assert rep["residual"]["pass"]
    assert rep["sublinearity"]["radii"] == [10.0, 20.0, 40.0, 80.0]
    assert rep["domination"]["pairs"] == 40


def test_agreement_examples():
    assert agreement(0.52, (0.49, 0.5))["pass"]
    r = agreement(0.7, (0.49, 0.5))
    assert not r["pass"] and r["distance"] == pytest.approx(0.2)
    # absolute floor near zero
    assert agreement(0.04, (0.0, 0.0))["pass"]


def test_preconditions(tmp_path):
    with pytest.raises(PreconditionError):
        solve_macro(POWER1, CB1, [1.0], -0.1)
    with pytest.raises(PreconditionError):
        solve_macro(POWER1, CB2, [1.0, 0.0], 0.1, scheme="godunov")
    with pytest.raises(PreconditionError):
        solve_macro(POWER1, CB1, [1.0], 0.1, R=0.5)
    sol = solve_macro(POWER1, CB1, [1.0], 0.1)
    p = sol.to_csv(tmp_path / "m.csv")
    rows = p.read_text().splitlines()
    assert rows[0] == "y,v,minus_delta_v" and len(rows) == len(sol.axis) + 1
    assert json.loads(p.with_suffix(".json").read_text())["scheme"] == "lf"

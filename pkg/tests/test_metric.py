from __future__ import annotations

import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lshomog.env import Environment, HamiltonianFamily
from lshomog.errors import PreconditionError, UnsupportedRegime
from lshomog.metric import (
    FORWARD,
    REVERSED,
    Lattice,
    anisotropy_factor,
    build_costs,
    check_lipschitz,
    check_maximality_affine,
    check_mu_monotonicity,
    check_reversal,
    check_subadditivity,
    edge_cost,
    solve_metric,
    solve_to_points,
    stencil,
)

from oracles import csgraph_distances, farey_stencil, py_cell_hash, py_unit_float, stencil_norm_distance

EUCLID = HamiltonianFamily("POWER", gamma=1.0)
ZERO = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0], "dim": 2})
CHECKER = Environment.from_config({"kind": "CHECKERBOARD", "seed": 42, "values": [0.0, 1.0], "dim": 2})
DRIFT = HamiltonianFamily("DRIFT", drift=(0.4, 0.0), drift_coupling=(0.3, -0.2))


@pytest.mark.parametrize("rho", [1, 2, 3])
def test_stencil_symmetric_and_complete(rho):
    s = stencil(rho)
    K = len(s)
    assert np.array_equal(s[K // 2:], -s[: K // 2])
    assert {tuple(v) for v in s} == set(farey_stencil(rho))


def test_anisotropy_factors():
    # the largest angular gaps sit next to the axes: (1,0)-(2,1) and (1,0)-(3,1)
    assert anisotropy_factor(2) == pytest.approx(1 / math.cos(math.atan(0.5) / 2), rel=1e-14)
    assert anisotropy_factor(2) <= 1.028
    assert anisotropy_factor(3) == pytest.approx(1 / math.cos(math.atan(1 / 3) / 2), rel=1e-14)


def test_edge_cost_examples():
    lat = Lattice.centered(1.0, 4, 2, 2)
    assert edge_cost(lat, EUCLID, ZERO, 1.0, (4, 4), (1, 0)) == pytest.approx(1.0, abs=1e-14)
    assert edge_cost(lat, EUCLID, ZERO, 1.0, (4, 4), (2, 1)) == pytest.approx(math.sqrt(5), abs=1e-13)


def test_edge_cost_inside_v1_cell():
    # h = 1/4 keeps the whole edge inside one cell
    shift = CHECKER.shift
    i = next(i for i in range(50) if py_unit_float(py_cell_hash(42, (i, 0))) >= 0.5)
    lat = Lattice(0.25, (9, 9), tuple(shift + np.array([i + 0.25, 0.25])), 2, 2)
    assert edge_cost(lat, EUCLID, CHECKER, 0.0, (0, 0), (1, 0)) == pytest.approx(0.25, abs=1e-14)
    # cost per unit length equals mu + V = 1
    assert edge_cost(lat, EUCLID, CHECKER, 0.0, (0, 0), (1, 0)) / lat.h == pytest.approx(1.0, abs=1e-13)


def test_negative_cost_is_unsupported():
    lat = Lattice.centered(1.0, 3, 2, 2)
    with pytest.raises(UnsupportedRegime):
        build_costs(lat, EUCLID, CHECKER, -0.5)


def test_constant_solve_examples():
    lat = Lattice.centered(1.0, 12, 2, 2)
    f = solve_metric(lat, EUCLID, ZERO, 1.0, (12, 12))
    assert f.at((12, 12)) == 0.0
    assert f.at((22, 12)) == 10.0
    v = f.at((15, 16))
    assert 5.0 <= v <= 5.0 * 1.028
    assert v == pytest.approx(stencil_norm_distance((3, 4), 2), abs=1e-12)
    f2 = solve_metric(lat, EUCLID, ZERO, 2.0, (12, 12))
    assert np.array_equal(f2.values, 2.0 * f.values)


@pytest.mark.parametrize("rho", [1, 2, 3])
def test_constant_matches_stencil_decomposition(rho):
    n = 8
    lat = Lattice.centered(1.0, n, 2, rho)
    f = solve_metric(lat, EUCLID, ZERO, 1.0, (n, n))
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            assert f.at((n + i, n + j)) == pytest.approx(stencil_norm_distance((i, j), rho), abs=1e-12)


def test_dijkstra_matches_scipy_on_random_checkerboard():
    lat = Lattice.centered(0.5, 14, 2, 2)
    for fam, mu in ((EUCLID, 0.2), (DRIFT, 1.0)):
        for seed in (1, 2, 3):
            env = CHECKER.with_seed(seed)
            costs, _ = build_costs(lat, fam, env, mu)
            src = lat.flat((7, 20))
            f = solve_metric(lat, fam, env, mu, (7, 20))
            ref = csgraph_distances(lat.shape, lat.offsets, costs, src)
            np.testing.assert_allclose(f.values.ravel(), ref, rtol=1e-13, atol=1e-13)


def test_triangle_inequality_over_edges():
    lat = Lattice.centered(0.5, 12, 2, 2)
    costs, _ = build_costs(lat, DRIFT, CHECKER, 1.0)
    f = solve_metric(lat, DRIFT, CHECKER, 1.0, (12, 12))
    n0, n1 = lat.shape
    d = f.values
    for k, (a, b) in enumerate(lat.offsets):
        c = costs[k].reshape(n0, n1)
        src = d[max(0, -a): n0 - max(0, a), max(0, -b): n1 - max(0, b)]
        dst = d[max(0, a): n0 - max(0, -a), max(0, b): n1 - max(0, -b)]
        cc = c[max(0, -a): n0 - max(0, a), max(0, -b): n1 - max(0, b)]
        assert np.all(dst <= src + cc + 1e-12 * np.maximum(1.0, dst))


def test_anisotropy_certificate_on_circle():
    n = 60
    for rho in (2, 3):
        lat = Lattice.centered(1.0, n, 2, rho)
        f = solve_metric(lat, EUCLID, ZERO, 1.0, (n, n))
        y = lat.coords().reshape(*lat.shape, 2)
        r = np.linalg.norm(y, axis=-1)
        ring = (r > 40) & (r <= 50)
        assert np.max(f.values[ring] / r[ring]) <= anisotropy_factor(rho) + 1e-12
        assert np.min(f.values[ring] / r[ring]) >= 1.0 - 1e-12


def test_large_constant_lattice_runtime():
    lat = Lattice.centered(1.0, 512, 2, 2)
    solve_metric(Lattice.centered(1.0, 4, 2, 2), EUCLID, ZERO, 1.0, (4, 4))  # compile
    t0 = time.perf_counter()
    f = solve_metric(lat, EUCLID, ZERO, 1.0, (512, 512))
    assert time.perf_counter() - t0 < 5.0
    assert f.at((1024, 512)) == 512.0


def _random_sources(rng, lat, k):
    n0, n1 = lat.shape
    return [(int(rng.integers(0, n0)), int(rng.integers(0, n1))) for _ in range(k)]


@given(seed=st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_exact_identities_random_instances(seed):
    rng = np.random.default_rng(seed)
    lat = Lattice.centered(1.0, 10, 2, 2)
    env = CHECKER.with_seed(seed)
    srcs = _random_sources(rng, lat, 3)
    fwd = [solve_metric(lat, DRIFT, env, 1.0, s) for s in srcs]
    assert check_subadditivity(fwd)["pass"]
    rev = solve_metric(lat, DRIFT, env, 1.0, srcs[0], REVERSED)
    assert check_reversal(rev, fwd)["pass"]
    up = solve_metric(lat, DRIFT, env, 1.25, srcs[0])
    rep = check_mu_monotonicity(fwd[0], up, k_bound=4)
    assert rep["pass"] and rep["growth_constant"] > 0


def test_reversal_drift_not_symmetric():
    lat = Lattice.centered(1.0, 8, 2, 2)
    fam = HamiltonianFamily("DRIFT", drift=(0.8, 0.0))
    f = solve_metric(lat, fam, ZERO, 1.0, (8, 8))
    r = solve_metric(lat, fam, ZERO, 1.0, (8, 8), REVERSED)
    assert not np.allclose(f.values, r.values)
    # n(y, x) = m(x, y) with x the centre and y = (12, 8)
    fy = solve_metric(lat, fam, ZERO, 1.0, (12, 8))
    assert r.at((12, 8)) == pytest.approx(fy.at((8, 8)), abs=1e-12)
    assert r.at((8, 8)) == f.at((8, 8)) == 0.0


def test_mu_monotonicity_constant_and_ladder():
    lat = Lattice.centered(1.0, 8, 2, 2)
    f1 = solve_metric(lat, EUCLID, ZERO, 1.0, (8, 8))
    f15 = solve_metric(lat, EUCLID, ZERO, 1.5, (8, 8))
    np.testing.assert_allclose(f15.values - f1.values, 0.5 * f1.values, rtol=1e-13)
    assert check_mu_monotonicity(f1, f1)["pass"]
    # continuity in mu: sup |m_{mu + 2^-j} - m_mu| shrinks geometrically
    env = CHECKER.with_seed(5)
    base = solve_metric(lat, DRIFT, env, 1.0, (8, 8))
    gaps = [float(np.max(solve_metric(lat, DRIFT, env, 1.0 + 2.0**-j, (8, 8)).values - base.values)) for j in range(1, 6)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))
    assert gaps[-1] < 2 * gaps[0] / 16


def test_mu_monotonicity_rejects_small_gap():
    lat = Lattice.centered(1.0, 4, 2, 2)
    f1 = solve_metric(lat, EUCLID, ZERO, 1.0, (4, 4))
    f2 = solve_metric(lat, EUCLID, ZERO, 1.1, (4, 4))
    with pytest.raises(PreconditionError):
        check_mu_monotonicity(f1, f2, k_bound=4)


def test_affine_domination_examples():
    lat = Lattice.centered(1.0, 8, 2, 2)
    f = solve_metric(lat, EUCLID, ZERO, 1.0, (8, 8))
    rep = check_maximality_affine(f, [1.0, 0.0], EUCLID, ZERO)
    assert rep["pass"]
    assert f.at((14, 8)) == 6.0  # equality along the axis
    assert check_maximality_affine(f, [0.0, 0.0], EUCLID, ZERO)["pass"]
    env = Environment.from_config({"kind": "CHECKERBOARD", "seed": 3, "values": [0.5, 1.0], "dim": 2})
    g = solve_metric(Lattice.centered(0.5, 16, 2, 2), EUCLID, env, 0.0, (16, 16))
    assert check_maximality_affine(g, [0.25, 0.0], EUCLID, env)["pass"]
    with pytest.raises(PreconditionError):
        check_maximality_affine(g, [0.75, 0.0], EUCLID, env)


def test_lipschitz_certificate():
    lat = Lattice.centered(1.0, 10, 2, 2)
    f = solve_metric(lat, DRIFT, CHECKER, 1.0, (10, 10))
    assert check_lipschitz(f)["pass"]


def test_one_dimensional_quadrature():
    from oracles import quadrature_metric_1d

    env = Environment.from_config({"kind": "CHECKERBOARD", "seed": 4, "values": [0.0, 1.0], "dim": 1})
    for mu, gamma in ((0.5, 1.0), (1.0, 0.5)):
        fam = HamiltonianFamily("POWER", gamma=gamma)
        pts = np.array([[37.0], [-23.5], [100.25]])
        vals, _ = solve_to_points(fam, env, mu, pts, h=0.25)
        for p, v in zip(pts[:, 0], vals):
            assert v == pytest.approx(quadrature_metric_1d(env, mu, p, gamma), rel=1e-12)


def test_solve_to_points_certified_and_grows():
    vals, f = solve_to_points(DRIFT, CHECKER, 1.0, np.array([[20.0, 5.0], [-7.0, 13.0]]))
    assert f.box_certified
    assert np.all(vals > 0)


def test_metric_csv_and_manifest(tmp_path):
    lat = Lattice.centered(1.0, 2, 2, 2)
    f = solve_metric(lat, EUCLID, ZERO, 1.0, (2, 2))
    p = f.to_csv(tmp_path / "m.csv")
    rows = p.read_text().splitlines()
    assert rows[0] == "i,j,y0,y1,value" and len(rows) == 26
    import json

    man = json.loads(p.with_suffix(".json").read_text())
    assert man["mu"] == 1.0 and man["stencil_radius"] == 2
    assert man["direction"] == FORWARD

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lshomog.env import (
    Environment,
    HamiltonianFamily,
    cell_hash,
    evaluate,
    perturbation_tolerance,
    sup_hamiltonian,
    unit_float,
    validate_hypotheses,
)
from lshomog.errors import ConfigError, HypothesisViolation, PreconditionError

from oracles import py_cell_hash, py_unit_float

CHECKER = Environment.from_config({"kind": "CHECKERBOARD", "seed": 42, "cell": 1.0, "values": [0.0, 1.0], "dim": 2})
CONST1 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [1.0], "dim": 2})
CONST0 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0], "dim": 2})

FAMILIES = [
    HamiltonianFamily("EIKONAL"),
    HamiltonianFamily("POWER", gamma=0.5),
    HamiltonianFamily("POWER", gamma=2.0),
    HamiltonianFamily("DRIFT", drift=(0.3, -0.2), drift_coupling=(0.5, 0.0)),
    HamiltonianFamily("ANISO", kappa=2.0),
]
EIK_ENV = Environment.from_config({"kind": "CHECKERBOARD", "seed": 3, "values": [0.5, 2.0], "dim": 2})


def _env_for(fam):
    return EIK_ENV if fam.kind == "EIKONAL" else CHECKER


def test_evaluate_examples():
    assert evaluate(HamiltonianFamily("EIKONAL"), CONST1, [3.0, 4.0], [0.3, -7.1]) == 5.0
    assert evaluate(HamiltonianFamily("POWER", gamma=0.5), CONST0, [4.0, 0.0], [1.0, 2.0]) == 2.0


def test_checkerboard_cell_lookup_matches_independent_hash():
    # locate a V=1 cell with the pure-integer hash, then query its centre
    shift = CHECKER.shift
    for i in range(50):
        u = py_unit_float(py_cell_hash(42, (i, 0)))
        if u >= 0.5:
            break
    y = shift + np.array([i + 0.5, 0.5])
    assert CHECKER.field(y) == 1.0
    assert evaluate(HamiltonianFamily("POWER", gamma=1.0), CHECKER, [1.0, 0.0], y) == 0.0


@given(st.integers(0, 2**63 - 1), st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_cell_hash_matches_pure_python(seed, a, b):
    h = cell_hash(seed, np.array([a, b]))
    assert int(h) == py_cell_hash(seed, (a, b))
    assert float(unit_float(h)) == py_unit_float(py_cell_hash(seed, (a, b)))


def test_dimension_mismatch_is_config_error():
    with pytest.raises(ConfigError):
        evaluate(HamiltonianFamily("EIKONAL"), CONST1, [1.0, 0.0, 0.0], [0.0, 0.0])
    with pytest.raises(ConfigError):
        CHECKER.field(np.zeros(3))


def test_config_errors():
    with pytest.raises(ConfigError):
        Environment.from_config({"kind": "POISSON_BUMPS", "seed": 1, "dim": 2})
    with pytest.raises(ConfigError):
        Environment.from_config({"kind": "CHECKERBOARD", "seed": 1, "dim": 4})
    with pytest.raises(ConfigError):
        HamiltonianFamily.from_config({"kind": "POWER", "beta": 1})


@pytest.mark.parametrize("kind", ["CHECKERBOARD", "POISSON_BUMPS", "PERIODIC_PHASE"])
def test_field_is_pure_and_in_range(kind):
    cfg = {"kind": kind, "seed": 11, "dim": 2}
    if kind != "CHECKERBOARD":
        cfg["range"] = [0.2, 1.3]
    env = Environment.from_config(cfg)
    y = np.random.default_rng(0).uniform(-40, 40, size=(2000, 2))
    a = env.field(y)
    b = Environment.from_config(cfg).field(y[::-1])[::-1]
    assert np.array_equal(a, b)
    assert np.all((a >= env.v_min) & (a <= env.v_max))


@pytest.mark.parametrize("kind", ["CHECKERBOARD", "PERIODIC_PHASE"])
@given(z=st.tuples(st.floats(-50, 50), st.floats(-50, 50)))
@settings(max_examples=50, deadline=None)
def test_translation_covariance_exact(kind, z):
    cfg = {"kind": kind, "seed": 5, "dim": 2, "offset": [0.25, 0.6]}
    if kind != "CHECKERBOARD":
        cfg["range"] = [0.0, 1.0]
    env = Environment.from_config(cfg)
    z = np.array(z)
    # the checkerboard field reads y - offset, the periodic field y + phase
    sign = 1.0 if kind == "CHECKERBOARD" else -1.0
    moved = env.with_offset(np.array(env.offset) + sign * z)
    y = np.random.default_rng(1).uniform(-10, 10, size=(200, 2))
    a, b = env.field(y), moved.field(y + z)
    if kind == "CHECKERBOARD":
        # cell index is floor of a rounded difference; compare away from faces
        s = (y - env.shift) / env.cell
        ok = np.all(np.abs(s - np.round(s)) > 1e-9, axis=1)
        assert np.array_equal(a[ok], b[ok])
    else:
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_poisson_stationarity_statistical():
    env = Environment.from_config({"kind": "POISSON_BUMPS", "seed": 2, "dim": 2, "range": [0.0, 1.0]})
    rng = np.random.default_rng(3)
    a = np.concatenate([env.with_seed(s).field(rng.uniform(0, 20, (200, 2))) for s in range(20)])
    b = np.concatenate([env.with_seed(100 + s).field(rng.uniform(500, 520, (200, 2))) for s in range(20)])
    from scipy.stats import ks_2samp

    assert ks_2samp(a, b).pvalue > 1e-3


def test_checkerboard_value_frequencies():
    env = Environment.from_config({"kind": "CHECKERBOARD", "seed": 9, "dim": 1, "values": [0.0, 1.0]})
    v = env.field(np.arange(20000, dtype=float)[:, None] + 0.5)
    assert abs(v.mean() - 0.5) < 4 * 0.5 / math.sqrt(20000)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f"{f.kind}-{f.gamma}")
def test_validate_hypotheses_pass(fam):
    rep = validate_hypotheses(fam, _env_for(fam), 4000)
    assert rep.passed
    for name in ("bounded", "equicontinuous in p", "coercive", "level-set convex", "Lambda modulus"):
        assert rep.checks[name]["pass"], name


def test_power_half_quasiconvex_not_convex():
    rep = validate_hypotheses(HamiltonianFamily("POWER", gamma=0.5), CONST0, 4000)
    assert rep.checks["level-set convex"]["pass"]
    assert not rep.checks["midpoint convex"]["pass"]
    assert not rep.checks["midpoint convex"]["required"]
    # the orthogonal pair (1,0), (0,1) is no witness (0.84 < 1); a radial pair is
    f = HamiltonianFamily("POWER", gamma=0.5)
    h = lambda p: float(f.hamiltonian(np.array(p), 0.0))  # noqa: E731
    assert h([0.5, 0.5]) < 0.5 * (h([1.0, 0.0]) + h([0.0, 1.0]))
    assert h([0.5, 0.0]) > 0.5 * (h([1.0, 0.0]) + h([0.0, 0.0]))


def test_corrupted_family_raises():
    with pytest.raises(HypothesisViolation) as exc:
        validate_hypotheses(HamiltonianFamily("ANISO", kappa=-1.0), CONST0, 2000)
    assert "coercive" in str(exc.value)


def test_sample_budget_precondition():
    with pytest.raises(PreconditionError):
        validate_hypotheses(HamiltonianFamily("EIKONAL"), CONST1, 10)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f"{f.kind}-{f.gamma}")
@given(seed=st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_quasiconvex_and_lambda_random_triples(fam, seed):
    env = _env_for(fam)
    rng = np.random.default_rng(seed)
    n = 500
    p = rng.uniform(-3, 3, (n, 2))
    q = rng.uniform(-3, 3, (n, 2))
    v = env.field(rng.uniform(-20, 20, (n, 2)))
    hp, hq = fam.hamiltonian(p, v), fam.hamiltonian(q, v)
    hm = fam.hamiltonian(0.5 * (p + q), v)
    slack = 1e-10 * np.maximum(1.0, np.abs(hm))
    assert np.all(hm <= np.maximum(hp, hq) + slack)
    assert np.all(hm <= fam.modulus(hp, hq, (env.v_min, env.v_max)) + slack)


@pytest.mark.parametrize("fam", FAMILIES, ids=lambda f: f"{f.kind}-{f.gamma}")
def test_coercivity_witness(fam):
    env = _env_for(fam)
    rng = np.random.default_rng(4)
    for mu in (0.0, 0.5, 2.0, 10.0):
        r = fam.radius_bound(mu, (env.v_min, env.v_max)) + 1.0
        u = rng.normal(size=(10_000, 2))
        p = r * u / np.linalg.norm(u, axis=1, keepdims=True)
        v = env.field(rng.uniform(-30, 30, (10_000, 2)))
        assert np.all(fam.hamiltonian(p, v) > mu)


def test_power_modulus_closed_form():
    fam = HamiltonianFamily("POWER", gamma=0.5)
    a, b = 0.3, 1.7
    expect = ((a**2 + b**2) / 2) ** 0.5
    assert math.isclose(float(fam.modulus(a, b, (0.0, 0.0))), expect, rel_tol=1e-14)


def test_lambda_modulus_power_of_two_homogeneity():
    fam = HamiltonianFamily("POWER", gamma=0.5)
    a, b = 0.4, 1.1
    # Lambda_{1/2} is Lambda itself
    assert float(fam.lambda_modulus(0.5, a, b, (0.0, 0.0))) == float(fam.modulus(a, b, (0.0, 0.0)))
    for lam in (0.25, 0.75, 0.125):
        expect = (lam * a**2 + (1 - lam) * b**2) ** 0.5
        got = float(fam.lambda_modulus(lam, a, b, (0.0, 0.0)))
        assert math.isclose(got, expect, rel_tol=1e-12), (lam, got, expect)


def test_sup_hamiltonian_discrete_exact():
    fam = HamiltonianFamily("POWER", gamma=1.0)
    assert sup_hamiltonian(fam, CHECKER, np.array([1.0, 0.0])) == 1.0


def test_perturbation_tolerance_examples():
    eik = perturbation_tolerance(HamiltonianFamily("EIKONAL"), CONST1, 1.0, 0.1)
    assert math.isclose(eik, 0.1, rel_tol=1e-9)
    # (1 - theta)^2 = 0.9 on the critical circle
    pw = perturbation_tolerance(HamiltonianFamily("POWER", gamma=2.0), CONST0, 1.0, 0.1)
    assert math.isclose(pw, 1.0 - math.sqrt(0.9), rel_tol=1e-6)
    with pytest.raises(PreconditionError):
        perturbation_tolerance(HamiltonianFamily("EIKONAL"), CONST1, 1.0, 0.0)


def test_snapshot_csv(tmp_path):
    pts = np.array([[0.0, 0.0], [1.5, -2.0]])
    path = CHECKER.snapshot_csv(tmp_path / "f.csv", pts)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[-1] == "V"
    assert len(lines) == 3
    assert float(lines[2].split(",")[-1]) == float(CHECKER.field(pts[1]))

from __future__ import annotations

import math

import numpy as np
import pytest

from lshomog.env import Environment, HamiltonianFamily
from lshomog.errors import PreconditionError
from lshomog.metric import FORWARD, REVERSED
from lshomog.shape import (
    ShapeEstimate,
    _fekete,
    check_convexity,
    check_mu_monotone,
    check_reversal_identity,
    compare_ensembles,
    estimate_shape,
    sublinearity_check,
)

from oracles import quadrature_metric_1d

ZERO2 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0], "dim": 2})
CB1 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0, 1.0], "dim": 1})
CB2 = Environment.from_config({"kind": "CHECKERBOARD", "seed": 0, "values": [0.0, 1.0], "dim": 2})
SEEDS = list(range(32))


def test_constant_shape_is_exact_with_zero_variance():
    est = estimate_shape(HamiltonianFamily("POWER", gamma=1.0), ZERO2, 1.0, SEEDS[:4], ladder=(8, 16), n_fan=8)
    assert np.all(est.stderr == 0)
    # axis points are lattice nodes; diagonal ones are interpolated
    np.testing.assert_allclose(est.estimate[::2], 1.0, atol=1e-12)
    assert np.all((est.estimate >= 1.0 - 1e-12) & (est.estimate <= 1.028))


@pytest.mark.parametrize("gamma,mu,exact", [(1.0, 0.5, 1.0), (0.5, 1.0, 2.5)])
def test_one_dimensional_shape_against_oracle(gamma, mu, exact):
    fam = HamiltonianFamily("POWER", gamma=gamma)
    est = estimate_shape(fam, CB1, mu, SEEDS, n_fan=2, h=0.25)
    # per-realization values agree with the quadrature oracle
    for i, s in enumerate(SEEDS[:4]):
        env = CB1.with_seed(s)
        for k, e in enumerate(est.directions[:, 0]):
            for j, t in enumerate(est.ladder):
                ref = quadrature_metric_1d(env, mu, e * t, gamma) / t
                assert est.samples[i, k, j] == pytest.approx(ref, rel=1e-12)
    lo, hi = est.ci.min(), est.ci.max()
    assert lo - 0.02 <= exact <= hi + 0.02
    assert np.all(np.abs(est.estimate - exact) <= 0.05 * exact)


def test_reversal_identity_drift():
    fam = HamiltonianFamily("DRIFT", drift=(0.0,), drift_coupling=(0.5,))
    f = estimate_shape(fam, CB1, 0.2, SEEDS[:16], ladder=(64, 128), n_fan=2, h=0.25)
    r = estimate_shape(fam, CB1, 0.2, SEEDS[16:], ladder=(64, 128), n_fan=2, h=0.25, direction=REVERSED)
    assert check_reversal_identity(f, r)["pass"]
    # the forward shape itself is not even: right support averages mu + 0.75, left mu + 0.25
    assert f.value([1.0]) == pytest.approx(0.95, abs=0.03)
    assert f.value([-1.0]) == pytest.approx(0.45, abs=0.03)


def test_two_dimensional_properties():
    fam = HamiltonianFamily("POWER", gamma=1.0)
    kw = dict(ladder=(8, 16, 32), n_fan=8)
    a = estimate_shape(fam, CB2, 0.5, SEEDS[:12], **kw)
    b = estimate_shape(fam, CB2, 0.5, SEEDS[12:24], **kw)
    up = estimate_shape(fam, CB2, 0.75, SEEDS[:12], **kw)
    rev = estimate_shape(fam, CB2, 0.5, SEEDS[:12], direction=REVERSED, **kw)
    assert a.diagnostics["fekete"]["pass_2sigma"]
    assert check_convexity(a)["pass"] and check_convexity(a)["checked"] > 0
    assert compare_ensembles(a, b)["pass"]
    rep = check_mu_monotone(a, up)
    assert rep["pass"] and rep["paired"]
    assert check_reversal_identity(a, rev)["pass"]


def test_fekete_diagnostic_flags_increase():
    rng = np.random.default_rng(0)
    ok = 1.0 - 0.1 * np.arange(3) + 0.01 * rng.normal(size=(20, 2, 3))
    assert _fekete(ok)["pass_2sigma"]
    bad = ok.copy()
    bad[:, :, 2] += 0.5
    fk = _fekete(bad)
    assert not fk["pass_2sigma"] and fk["max_z"] > 3


def test_compare_ensembles_rejects_overlap():
    fam = HamiltonianFamily("POWER", gamma=1.0)
    a = estimate_shape(fam, CB1, 0.5, [1, 2], ladder=(16,), n_fan=2)
    with pytest.raises(PreconditionError):
        compare_ensembles(a, a)


def test_estimate_preconditions():
    fam = HamiltonianFamily("POWER", gamma=1.0)
    with pytest.raises(PreconditionError):
        estimate_shape(fam, CB1, 0.5, [], ladder=(16,))
    with pytest.raises(PreconditionError):
        estimate_shape(fam, CB1, 0.5, [1], ladder=(-1.0,))


def test_sort_reduction_order_independent():
    fam = HamiltonianFamily("POWER", gamma=1.0)
    a = estimate_shape(fam, CB1, 0.5, [3, 1, 2, 7], ladder=(32,), n_fan=2, workers=1)
    b = estimate_shape(fam, CB1, 0.5, [7, 2, 1, 3], ladder=(32,), n_fan=2, workers=4)
    assert np.array_equal(a.means, b.means)


def test_sublinearity_examples():
    zero = sublinearity_check(lambda y: np.zeros(len(y)), [10, 20, 40], 2)
    assert zero["profile"] == [0.0, 0.0, 0.0]
    per = sublinearity_check(lambda y: np.sin(y[:, 0]) * np.cos(y[:, 1]), [10, 20, 40, 80], 2, n_angles=256)
    assert per["slope"] == pytest.approx(-1.0, abs=0.15)
    assert per["decay_ratio"] > 4


def test_shape_csv(tmp_path):
    fam = HamiltonianFamily("POWER", gamma=1.0)
    est = estimate_shape(fam, CB1, 0.5, [1, 2], ladder=(16, 32), n_fan=2)
    p = est.to_csv(tmp_path / "s.csv")
    rows = p.read_text().splitlines()
    assert rows[0] == "k,e0,t,mean,stderr" and len(rows) == 5
    import json

    summ = json.loads(p.with_suffix(".json").read_text())
    assert summ["n_realizations"] == 2 and summ["direction"] == FORWARD
    assert isinstance(est, ShapeEstimate) and math.isfinite(summ["estimate"][0])

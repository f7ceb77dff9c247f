from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isowalk.groups import builtin
from isowalk.measures import ISOMETRIES, DiscreteMeasure, convolve, dirac, uniform
from isowalk.spaces import Circle, FiniteGroupSpace, Sphere2, Torus, reference_measure
from isowalk.transport import (
    TransportError,
    certificate_gap,
    cost_matrix,
    oracle_value,
    subsample,
    transport_simplex,
    tv_distance,
    w1_exact,
    w1_oracle,
)

C = Circle()
S3 = FiniteGroupSpace(builtin("S3"))


def random_measure(space, rng, k):
    pts = [space.random_point(rng) for _ in range(k)]
    w = rng.random(k) + 0.05
    return DiscreteMeasure.from_atoms(space, "points", list(zip(pts, w / w.sum())), check=False)


def check_plan(plan, nu1, nu2):
    r, c = plan.marginals(len(nu1), len(nu2))
    assert np.abs(r - nu1.weights).max() <= 1e-10
    assert np.abs(c - nu2.weights).max() <= 1e-10
    M = cost_matrix(nu1, nu2)
    assert abs(sum(x * M[i, j] for i, j, x in plan.entries) - plan.cost) <= 1e-10
    assert sum(x > 1e-12 for _, _, x in plan.entries) <= len(nu1) + len(nu2) - 1
    viol, slack = certificate_gap(plan, M)
    assert viol <= 1e-9 and slack <= 1e-9


def test_w1_examples():
    u = uniform(C, [0.1, 0.35, 0.8])
    v, plan = w1_exact(u, u)
    assert v == 0 and sorted((i, j) for i, j, x in plan.entries if x > 0) == [(0, 0), (1, 1), (2, 2)]
    assert w1_exact(dirac(C, 0.0), dirac(C, 0.5))[0] == pytest.approx(0.5)
    a, b = uniform(C, [0.0, 0.5]), uniform(C, [0.25, 0.75])
    v, plan = w1_exact(a, b)
    assert v == pytest.approx(0.25)
    check_plan(plan, a, b)


def test_w1_errors():
    with pytest.raises(TransportError):
        w1_exact(dirac(C, 0.1), dirac(S3, 0))
    bad = DiscreteMeasure.from_atoms(C, "points", [(0.1, 0.5)], check=False)
    with pytest.raises(TransportError):
        w1_exact(bad, dirac(C, 0.1))
    big = uniform(C, [k / 7 for k in range(7)])
    with pytest.raises(TransportError):
        w1_oracle(big, big)


def test_oracle_examples():
    assert w1_oracle(dirac(C, 0.1), dirac(C, 0.4)) == pytest.approx(0.3)
    u = uniform(C, [0.2, 0.7])
    assert w1_oracle(u, u) == pytest.approx(0.0)


def test_oracle_agrees_with_simplex():
    rng = np.random.default_rng(0)
    for t in range(500):
        space = C if t % 2 else S3
        n, m = rng.integers(1, 6, size=2)
        nu1, nu2 = random_measure(space, rng, n), random_measure(space, rng, m)
        assert abs(w1_exact(nu1, nu2)[0] - w1_oracle(nu1, nu2)) <= 1e-9


def test_oracle_on_six_atoms_and_raw_costs():
    rng = np.random.default_rng(1)
    for _ in range(3):
        nu1, nu2 = random_measure(C, rng, 6), random_measure(C, rng, 6)
        assert abs(w1_exact(nu1, nu2)[0] - w1_oracle(nu1, nu2)) <= 1e-9
    for _ in range(100):
        n, m = rng.integers(1, 5, size=2)
        a, b = rng.random(n), rng.random(m)
        a, b = a / a.sum(), b / b.sum()
        M = rng.random((n, m))
        plan = transport_simplex(a, b, M)
        assert abs(plan.cost - oracle_value(a, b, M)) <= 1e-9


def test_degenerate_instances():
    # equal marginals on a grid produce many ties and zero-mass basics
    for n in (2, 4, 8, 16):
        grid = [k / n for k in range(n)]
        a = uniform(C, grid, exact=False)
        b = uniform(C, [(x + 0.5 / n) % 1 for x in grid], exact=False)
        v, plan = w1_exact(a, b)
        assert v == pytest.approx(0.5 / n)
        check_plan(plan, a, b)


def test_plans_are_certified_on_every_kind():
    rng = np.random.default_rng(2)
    for space in (C, Torus(2), Sphere2(), S3):
        for _ in range(20):
            nu1, nu2 = random_measure(space, rng, 12), random_measure(space, rng, 9)
            check_plan(w1_exact(nu1, nu2)[1], nu1, nu2)


def test_isometry_carrier_uses_sup_distance():
    a = dirac(C, C.translation(0.1), ISOMETRIES)
    b = dirac(C, C.translation(0.4), ISOMETRIES)
    assert w1_exact(a, b)[0] == pytest.approx(0.3)


def test_metric_axioms():
    rng = np.random.default_rng(3)
    for _ in range(30):
        space = Torus(2) if rng.random() < 0.5 else C
        a, b, c = (random_measure(space, rng, int(rng.integers(1, 21))) for _ in range(3))
        ab, ba = w1_exact(a, b)[0], w1_exact(b, a)[0]
        assert abs(ab - ba) <= 1e-10
        assert w1_exact(a, c)[0] <= ab + w1_exact(b, c)[0] + 1e-9
        assert w1_exact(a, a)[0] <= 1e-12


def test_tv_examples():
    assert tv_distance(dirac(S3, S3.point("Id")), dirac(S3, S3.point("(1 2)"))) == 1
    u = uniform(S3, [0, 2, 5])
    assert tv_distance(u, u) == 0
    pair = uniform(S3, [S3.point("Id"), S3.point("(1 2)")])
    assert tv_distance(pair, uniform(S3, S3.all_points())) == Fraction(2, 3)
    with pytest.raises(TransportError):
        tv_distance(dirac(C, 0.1), dirac(C, 0.2))


finite_measure = st.lists(st.integers(1, 9), min_size=6, max_size=6).filter(any).map(
    lambda w: DiscreteMeasure.from_atoms(S3, "points", [(i, Fraction(x, sum(w))) for i, x in enumerate(w) if x])
)


@settings(max_examples=100)
@given(finite_measure, finite_measure)
def test_discrete_metric_w1_is_tv(a, b):
    assert abs(w1_exact(a, b)[0] - float(tv_distance(a, b))) <= 1e-10


def test_semi_invariance_on_circle_grid():
    n = 64
    ref = reference_measure(C, n)
    rng = np.random.default_rng(4)
    for _ in range(20):
        k = int(rng.integers(1, 4))
        steps = rng.choice(n, size=k, replace=False)
        mu = uniform(C, [C.translation(s / n) for s in steps], ISOMETRIES)
        nu = uniform(C, [s / n for s in rng.choice(n, size=int(rng.integers(1, 6)), replace=False)])
        before = w1_exact(nu, ref)[0]
        assert w1_exact(convolve(mu, nu), ref)[0] <= before + 1e-10


def test_semi_invariance_on_finite_group():
    haar = uniform(S3, S3.all_points())
    rng = np.random.default_rng(5)
    for _ in range(50):
        supp = rng.choice(6, size=int(rng.integers(1, 5)), replace=False)
        mu = uniform(S3, [S3.shift(int(g)) for g in supp], ISOMETRIES)
        nu = uniform(S3, [int(x) for x in rng.choice(6, size=2, replace=False)])
        assert tv_distance(convolve(mu, nu), haar) <= tv_distance(nu, haar)


def test_subsample():
    big = uniform(C, [k / 5000 for k in range(5000)], exact=False)
    small, k = subsample(big, 2000, seed=1)
    assert k == 2000 and abs(small.total() - 1) <= 1e-12
    same, _ = subsample(big, 2000, seed=1)
    assert same.same_as(small)
    tiny = uniform(C, [0.1])
    assert subsample(tiny)[0] is tiny

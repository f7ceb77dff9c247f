import itertools

import numpy as np
import pytest

from isowalk.experiments import stromberg_family
from isowalk.groups import builtin, cyclic
from isowalk.measures import ISOMETRIES, MeasureFamily, convolve, convolve_all, dirac, uniform
from isowalk.setdyn import (
    Net,
    SetDynError,
    asym_D,
    eps_wide_partition,
    group_elements,
    hausdorff,
    in_S_eps,
    is_eps_dense,
    is_wide,
    pseudo_H,
    pseudo_H_report,
    separation_probe,
    t_mu,
)
from isowalk.spaces import Circle, FiniteGroupSpace, Torus, cycle_graph_metric

C = Circle()
S3 = FiniteGroupSpace(builtin("S3"))
Z4 = FiniteGroupSpace(cyclic(4))


def arc(net, lo, hi):
    return net.subset_of_points(p for p in net.points if lo - 1e-12 <= p <= hi + 1e-12)


def test_asym_D_examples():
    net = Net.of(C, points=C.grid(8))
    A = net.subset_of_points([0.0, 0.5])
    assert asym_D(A, net.subset_of_points([0.5])) == 0
    assert asym_D(net.subset_of_points([0.0]), net.subset_of_points([0.5])) == pytest.approx(0.5)
    assert asym_D(A, net.subset_of_points([0.25])) == pytest.approx(0.25)


def test_hausdorff_examples():
    net = Net.of(C, points=C.grid(40))
    A, B = arc(net, 0, 0.25), arc(net, 0.5, 0.75)
    assert hausdorff(A, A) == 0
    assert hausdorff(A, B) == pytest.approx(0.375)
    inner = arc(net, 0.1, 0.2)
    assert hausdorff(inner, A) == pytest.approx(asym_D(inner, A))


def test_net_mismatch():
    a = Net.of(C, points=C.grid(8)).full()
    b = Net.of(C, points=C.grid(16)).full()
    with pytest.raises(SetDynError):
        asym_D(a, b)


def test_pseudo_H_examples():
    net = Net.of(C, points=C.grid(40))
    els = group_elements(net)
    A, B = arc(net, 0, 0.25), arc(net, 0.5, 0.75)
    assert pseudo_H(A, B, els) == pytest.approx(0, abs=1e-12)
    rep = pseudo_H_report(A, B, els)
    assert rep.projection_error <= net.covering_radius
    fnet = Net.of(S3)
    A = fnet.subset([0, 1])
    assert pseudo_H(A, A.moved(S3.shift("(1 2 3)")), S3.all_isometries()) == 0
    with pytest.raises(SetDynError):
        pseudo_H(A, A, [])
    with pytest.raises(SetDynError):
        pseudo_H(A, A, [S3.shift("(1 2 3)")])


def test_t_mu_examples():
    net = Net.of(Z4)
    A = net.subset([0, 1, 2])
    assert t_mu(A, [Z4.shift(0), Z4.shift(1)]) == net.subset([1, 2])
    assert t_mu(A, [Z4.identity()]) == A
    assert t_mu(A, Z4.all_isometries()) is None


def test_t_mu_needs_grid_isometries():
    net = Net.of(C, points=C.grid(8))
    with pytest.raises(SetDynError):
        t_mu(net.subset([0, 1]), [C.translation(0.01)])
    assert t_mu(net.subset([0, 1]), [C.translation(0.125)]) == net.subset([1, 2])


def test_wide_partitions():
    P = eps_wide_partition(C, C.grid(40), 0.25)
    assert len(P.cells) == 4
    assert sorted(i for c in P.cells for i in c.members) == list(range(40))
    assert all(is_wide(c, 0.25) for c in P.cells)
    P = eps_wide_partition(S3, S3.all_points(), 1.0)
    assert [len(c) for c in P.cells] == [1] * 6
    T = Torus(2)
    P = eps_wide_partition(T, T.grid(24), 0.5)
    assert len(P.cells) == 4
    assert sum(len(c) for c in P.cells) == 24 * 24
    for c in P.cells:
        assert is_wide(c, 0.5)
        coords = np.asarray(c.points())
        for k in range(2):
            assert C.net_covering_radius(np.unique(coords[:, k])) <= 0.5
    with pytest.raises(ValueError):
        eps_wide_partition(C, C.grid(8), 0.25)


def test_density_examples():
    mu = uniform(C, [0.0, 0.25, 0.5, 0.75])
    assert is_eps_dense(mu, 0.2) == (True, 0.125)
    assert is_eps_dense(mu, 0.1) == (False, 0.125)
    mu1 = stromberg_family().members[0]
    two = convolve(mu1, mu1)
    ok, radius = is_eps_dense(convolve(two, dirac(S3, S3.point("Id"))), 0.5)
    assert len(two) == 4 and not ok and radius == 1.0


def test_probe_examples():
    net = Net.of(S3)
    ident = MeasureFamily((dirac(S3, S3.identity(), ISOMETRIES),))
    rep = separation_probe(net.subset([0, 2]), ident, 5)
    assert rep.h_values == [0.0] * 5 and rep.first_exit is None

    fam = MeasureFamily((uniform(Z4, [Z4.shift(0), Z4.shift(1)], ISOMETRIES),))
    rep = separation_probe(Net.of(Z4).subset([0, 1, 2]), fam, 4)
    assert [None if A is None else A.members for A in rep.iterates[:4]] == [(0, 1, 2), (1, 2), (2,), None]
    assert rep.first_exit == 3
    assert rep.support_sizes[:3] == [1, 2, 3]

    fam = stromberg_family()
    A0 = net.subset([net.index_of(S3.point("Id"))]).complement()
    rep = separation_probe(A0, fam, 8)
    assert all(A is not None for A in rep.iterates)
    assert all(rep.iterates[k] == rep.iterates[k + 2] for k in range(1, 7))
    assert rep.iterates[1] != rep.iterates[2]


def test_in_S_eps():
    net = Net.of(C, points=C.grid(40))
    assert in_S_eps(arc(net, 0, 0.5), 0.1)
    assert not in_S_eps(arc(net, 0, 0.1), 0.1)
    assert not in_S_eps(net.full(), 0.1)


# --- lemma properties on finite spaces ---


def all_sets(net):
    n = len(net)
    return [net.subset(i for i in range(n) if bits >> i & 1) for bits in range(1, 2**n)]


@pytest.mark.parametrize("name", ["Z6", "S3", "V4", "D4"])
def test_immersion_is_exhaustively_an_equality(name):
    space = FiniteGroupSpace(builtin(name))
    net = Net.of(space)
    for A in all_sets(net):
        for g in space.all_isometries():
            gA = A.moved(g, exact=True)
            if gA.issubset(A):
                assert gA == A


def test_triangle_and_dominance():
    rng = np.random.default_rng(0)
    for name in ("S3", "Z6", "D4"):
        space = FiniteGroupSpace(builtin(name))
        net, els = Net.of(space), space.all_isometries()
        n = len(net)
        for _ in range(300):
            A, B, Cs = (net.subset(rng.choice(n, size=int(rng.integers(1, n)), replace=False)) for _ in range(3))
            assert pseudo_H(A, Cs, els) <= pseudo_H(A, B, els) + pseudo_H(B, Cs, els)
            assert pseudo_H(A, B, els) <= hausdorff(A, B)


def test_triangle_on_cycle_graph_metric():
    space = cycle_graph_metric(7)
    net, els = Net.of(space), space.all_isometries()
    rng = np.random.default_rng(1)
    for _ in range(300):
        A, B, Cs = (net.subset(rng.choice(7, size=int(rng.integers(1, 7)), replace=False)) for _ in range(3))
        assert pseudo_H(A, Cs, els) <= pseudo_H(A, B, els) + pseudo_H(B, Cs, els) + 1e-12
        assert pseudo_H(A, B, els) <= hausdorff(A, B) + 1e-12


def test_monotonicity():
    space = cycle_graph_metric(6)
    net, els = Net.of(space), space.all_isometries()
    sets = all_sets(net)
    rng = np.random.default_rng(2)
    checked = 0
    for _ in range(3000):
        A, B, Cs = (sets[int(i)] for i in rng.integers(len(sets), size=3))
        below = any(A.moved(g, exact=True).issubset(B) for g in els)
        above = any(B.moved(h, exact=True).issubset(Cs) for h in els)
        if below and above:
            checked += 1
            assert pseudo_H(A, B, els) <= pseudo_H(A, Cs, els) + 1e-12
    assert checked > 50


def test_complement_identity():
    rng = np.random.default_rng(3)
    for name in ("S3", "Z6", "D4"):
        space = FiniteGroupSpace(builtin(name))
        net = Net.of(space)
        n = len(net)
        for _ in range(30):
            mus = [
                uniform(space, [space.shift(int(g)) for g in rng.choice(n, size=2, replace=False)], ISOMETRIES)
                for _ in range(int(rng.integers(1, 4)))
            ]
            x = int(rng.integers(n))
            nu = convolve_all(mus, dirac(space, x))
            supp = net.subset(nu.support_indices())
            composed = [space.identity()]
            for mu in mus:
                composed = [space.compose(g, s) for g in mu.support for s in composed]
            assert supp.complement() == t_mu(net.subset([x]).complement(), composed)


def test_partition_on_sets_is_deterministic():
    a = eps_wide_partition(C, C.grid(40), 0.25).to_json()
    b = eps_wide_partition(C, C.grid(40), 0.25).to_json()
    assert a == b and len(list(itertools.chain(*a["cells"]))) == 40

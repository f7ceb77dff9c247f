from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isowalk.experiments import (
    PARTICLES,
    ConfigError,
    WalkConfig,
    classify_measure,
    config_from_json,
    config_to_json,
    observable,
    observable_from_function,
    probe_standing_assumption,
    random_coset_aperiodic_family,
    revalidate_standing_assumption,
    run_convergence,
    run_ergodic,
    run_ito_kawada_census,
    run_large_deviations,
    run_sphere_equidistribution,
    run_stromberg,
    seeded_rotation_pair,
    stromberg_family,
)
from isowalk.groups import builtin, cyclic
from isowalk.measures import IID, ISOMETRIES, MeasureFamily, convolve_all, dirac, stream, uniform
from isowalk.setdyn import Net, eps_wide_partition
from isowalk.spaces import Circle, FiniteGroupSpace, Sphere2, reference_measure
from isowalk.transport import w1_exact

from scenarios import circle_config, group_measure, load_config, raw_config, s3_lazy_config, single

C = Circle()
S3 = FiniteGroupSpace(builtin("S3"))
Z2 = FiniteGroupSpace(cyclic(2))


# --- convergence ---


def test_identity_walk_is_constant():
    cfg = load_config("converge_identity.json")
    d = run_convergence(cfg).distances
    ref = reference_measure(C, cfg.reference_n)
    assert np.all(d == d[0]) and d[0] == pytest.approx(w1_exact(dirac(C, 0.25), ref)[0])
    assert len(d) == cfg.horizon + 1


def test_single_measure_on_s3_decreases_fast():
    mu1 = stromberg_family().members[0]
    cfg = WalkConfig(S3, single(mu1), S3.group.identity, 50, arithmetic="fraction")
    d = run_convergence(cfg).distances
    assert np.all(np.diff(d) < 0) and d[50] < 1e-3


def test_stromberg_alternation():
    rep = run_stromberg(60)
    even, odd = ["Id", "(1 2)"], ["(2 3)", "(1 2 3)"]
    assert all(rep.supports[n] == (even if n % 2 == 0 else odd) for n in range(1, 61))
    assert rep.tv[1:] == [pytest.approx(2 / 3)] * 60
    assert rep.verdict == "non-convergent" and rep.tail_diameter == 1.0
    assert rep.flags["mu1"] == {"adapted": True, "strictly_aperiodic": True, "coset_aperiodic": False}


def fraction_measure(space, rng):
    k = int(rng.integers(1, space.size + 1))
    supp = rng.choice(space.size, size=k, replace=False)
    w = rng.integers(1, 5, size=k)
    return group_measure(space, [(int(g), Fraction(int(x), int(w.sum()))) for g, x in zip(supp, w)])


def test_exact_distances_never_increase():
    rng = stream(1)
    for t in range(40):
        G = builtin(["S3", "Z6", "D4", "V4"][t % 4])
        space = FiniteGroupSpace(G)
        fam = MeasureFamily(tuple(fraction_measure(space, rng) for _ in range(2)), IID)
        cfg = WalkConfig(space, fam, int(rng.integers(G.order)), 15, seed=t, arithmetic="fraction")
        d = [r.distance for r in run_convergence(cfg).records]
        assert all(b <= a for a, b in zip(d, d[1:]))
        assert isinstance(d[-1], Fraction)


def test_float_and_fraction_paths_agree():
    a = run_convergence(s3_lazy_config(horizon=30)).distances
    b = run_convergence(s3_lazy_config(horizon=30, arithmetic="fraction")).distances
    assert np.abs(a - b).max() <= 1e-12


def test_particles_agree_with_exact_run():
    n = 100_000
    exact = run_convergence(s3_lazy_config(horizon=12)).distances
    cloud = run_convergence(s3_lazy_config(horizon=12, mode=PARTICLES, particles=n)).distances
    assert np.abs(exact - cloud).max() <= 5 * np.sqrt(6 / n)


def test_particle_runs_on_circle_report_subsampling():
    cfg = circle_config(horizon=3, mode=PARTICLES, particles=3000)
    series = run_convergence(cfg)
    assert "2000" in series.note and len(series.records) == 4


def test_runs_are_deterministic():
    for cfg in (s3_lazy_config(horizon=20, mode=PARTICLES, particles=500), circle_config(horizon=5)):
        assert run_convergence(cfg).jsonl() == run_convergence(cfg).jsonl()
    cfg = circle_config(horizon=200, trials=5, checkpoints=(50, 200))
    assert run_ergodic(cfg).jsonl() == run_ergodic(cfg).jsonl()


# --- configuration ---


def test_config_errors_are_collected():
    with pytest.raises(ConfigError) as e:
        config_from_json(raw_config("bad.json"))
    assert "horizon ≥ 1" in e.value.errors and "N ≥ 100 in particle mode" in e.value.errors
    with pytest.raises(ConfigError):
        s3_lazy_config(observable="cos2pi")


@settings(max_examples=40, deadline=None)
@given(
    st.integers(1, 10**4),
    st.integers(0, 2**63 - 1),
    st.sampled_from(["exact", "particles"]),
    st.integers(100, 10**5),
    st.sampled_from([None, "one", "indicator:Id", "indicator:Id;(1 2)"]),
)
def test_config_round_trip(horizon, seed, mode, particles, obs):
    cfg = s3_lazy_config(horizon=horizon, seed=seed, mode=mode, particles=particles, observable=obs)
    again = config_from_json(config_to_json(cfg))
    assert config_to_json(again) == config_to_json(cfg)


def test_circle_config_round_trip():
    cfg = circle_config()
    assert config_to_json(config_from_json(config_to_json(cfg))) == config_to_json(cfg)


# --- observables ---


def test_observables():
    assert observable(C, "cos2pi").reference == 0
    ind = observable(S3, "indicator:Id")
    assert ind.reference == pytest.approx(1 / 6) and ind(np.array([0, 1])).tolist() == [1.0, 0.0]
    assert observable(Sphere2(), "z").provenance == "exact"
    q = observable_from_function(C, "sq", lambda x: np.asarray(x) ** 2)
    assert q.provenance == "quadrature" and q.reference == pytest.approx(1 / 3, abs=1e-4)
    with pytest.raises(ValueError):
        observable(S3, "cos2pi")


# --- standing assumption probe ---


def test_probe_examples():
    haar_step = single(uniform(S3, S3.all_isometries(), ISOMETRIES))
    assert probe_standing_assumption(haar_step, 0.01).m == 1
    parity = single(dirac(Z2, Z2.shift(1), ISOMETRIES))
    res = probe_standing_assumption(parity, 0.1, cap=12)
    assert not res.found and res.max_distance == 1.0


def test_probe_on_alternating_family():
    iid = MeasureFamily(stromberg_family().members, IID)
    sampled = probe_standing_assumption(iid, 0.1, cap=24, windows="sampled")
    assert sampled.found and sampled.m <= 24
    # the worst window alternates the two measures, which never mixes
    exhaustive = probe_standing_assumption(iid, 0.1, cap=12, windows="exhaustive")
    assert not exhaustive.found and all(gap == 1.0 for _, gap, _ in exhaustive.history)
    assert not probe_standing_assumption(stromberg_family(), 0.1, cap=12).found


def test_probe_results_revalidate():
    rng = stream(2)
    for G in (builtin("S3"), cyclic(8)):
        for schedule in ("cyclic", IID):
            fam = random_coset_aperiodic_family(G, rng, schedule=schedule)
            res = probe_standing_assumption(fam, 0.1)
            assert res.found
            assert revalidate_standing_assumption(fam, res.m, draws=100, seed=9) < 0.1


def test_full_support_within_probe_window():
    """Every start reaches full support within m steps, so every wide cell has mass."""
    rng = stream(3)
    for t in range(100):
        G = builtin("S3") if t % 2 else cyclic(8)
        fam = random_coset_aperiodic_family(G, rng, schedule=IID if t % 3 else "cyclic")
        m = probe_standing_assumption(fam, 0.1).m
        space = fam.space
        cells = eps_wide_partition(space, Net.of(space), 1.0).cells
        steps = fam.indices(m, rng)
        nu = convolve_all([fam.members[k] for k in steps], dirac(space, int(rng.integers(G.order))))
        mass = min(float(nu.mass(c.points())) for c in cells)
        assert len(nu) == G.order and mass >= 1 / G.order - 0.1


# --- ergodic averages and tails ---


def test_constant_observable():
    cfg = s3_lazy_config(horizon=500, observable="one", trials=20, checkpoints=(10, 500))
    rep = run_ergodic(cfg)
    assert np.all(rep.averages == 1.0) and rep.deviations.max() == 0
    ld = run_large_deviations(cfg, [100, 200], 0.05, 1000)
    assert ld.flag == "degenerate: all zero" and ld.p_hat == [0.0, 0.0]


def test_epsilon_above_range_gives_no_tail_events():
    phi = observable(S3, "indicator:Id")
    ld = run_large_deviations(s3_lazy_config(horizon=200), [50, 100, 200], phi.spread + 0.01, 1000)
    assert ld.p_hat == [0.0, 0.0, 0.0]


def test_circle_averages_concentrate():
    rep = run_ergodic(circle_config(trials=50))
    assert rep.fraction_within(0.05) >= 0.95
    assert rep.summary()["trials"] == 50


def test_s3_indicator_averages_concentrate():
    cfg = s3_lazy_config(horizon=5000, observable="indicator:Id", trials=200, checkpoints=(500, 5000))
    rep = run_ergodic(cfg)
    assert rep.fraction_within(0.02) >= 0.95
    assert np.median(rep.deviations[:, 1]) < np.median(rep.deviations[:, 0])


def test_tail_frequencies_decrease():
    ld = run_large_deviations(s3_lazy_config(), [50, 100, 200, 400], 0.1, 2000)
    assert ld.flag == "ok" and ld.slope < 0
    assert all(b < a for a, b in zip(ld.p_hat, ld.p_hat[1:]))
    with pytest.raises(ConfigError):
        run_large_deviations(s3_lazy_config(), [50], 0.1, 999)


# --- sphere ---


def test_sphere_examples():
    A, B = seeded_rotation_pair(3)
    x = (1.0, 0.0, 0.0)
    assert run_sphere_equidistribution(A, B, x, 6, area=1.0).share == 1.0
    one = run_sphere_equidistribution(A, B, x, 1)
    S = Sphere2()
    inside = [np.dot(S.apply(g, x), (0, 0, 1)) >= 1 - 2 * 0.3 for g in (A, B)]
    assert one.share == sum(inside) / 2
    with pytest.raises(ValueError):
        run_sphere_equidistribution(A, B, x, 23)


def test_sphere_share_matches_pointwise_words():
    A, B = seeded_rotation_pair(5)
    S = Sphere2()
    x = (0.0, 1.0, 0.0)
    pts = [x]
    for _ in range(4):
        pts = [S.apply(g, p) for g in (A, B) for p in pts]
    share = np.mean([np.dot(p, (0, 0, 1)) >= 0.4 for p in pts])
    assert run_sphere_equidistribution(A, B, x, 4).share == share


# --- census ---


def test_census_examples():
    e = classify_measure(cyclic(2), np.array([0.0, 1.0]))
    assert e.adapted and not e.strictly_aperiodic and e.verdict == "oscillates"
    G = builtin("S3")
    v = np.zeros(6)
    v[G.elements(["(2 3)", "(1 2 3)"])] = 0.5
    e = classify_measure(G, v)
    assert e.adapted and e.strictly_aperiodic and e.converged
    e = classify_measure(cyclic(4), np.array([0, 0, 1.0, 0]))
    assert not e.adapted and not e.converged


def test_small_census_is_consistent():
    entries = run_ito_kawada_census([builtin(n) for n in ("S3", "Z4", "V4", "D4", "Z5")], per_group=40, seed=1)
    assert all(e.consistent and e.witness_consistent for e in entries)
    assert {e.verdict for e in entries} >= {"converges", "oscillates"}


def test_census_is_deterministic():
    a = [e.to_json() for e in run_ito_kawada_census([builtin("D3")], per_group=10, seed=4)]
    b = [e.to_json() for e in run_ito_kawada_census([builtin("D3")], per_group=10, seed=4)]
    assert a == b


def test_group_measure_helper():
    mu = group_measure(S3, [("Id", "1/2"), ("(1 2)", "1/2")])
    assert replace(s3_lazy_config(), family=single(mu)).family.members[0] is mu

"""Scenario drivers: convergence of nonstationary walks, the uniform-mixing
probe, ergodic averages, tail frequencies, the convergence census on small
groups, the alternating S3 counterexample and sphere equidistribution.

Randomness: each trial owns the stream ``stream(seed, trial)`` (plus a scenario
tag where several streams are needed), consumed sequentially, so results do
not depend on the order in which trials are evaluated.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats

from . import groups as grp
from .measures import (
    CYCLIC,
    IID,
    ISOMETRIES,
    POINTS,
    DiscreteMeasure,
    MeasureFamily,
    ParticleCloud,
    convolve,
    dirac,
    from_vector,
    particle_step,
    stream,
    uniform,
)
from .spaces import (
    Circle,
    FiniteGroupSpace,
    Rotation,
    Space,
    Sphere2,
    Torus,
    quat_matrix,
    random_rotation,
    reference_measure,
    space_from_json,
)
from .transport import subsample, transport_simplex, tv_distance, w1_exact

EXACT = "exact"
PARTICLES = "particles"
WINDOW = 100
OSCILLATION_GAP = 0.1
CONVERGED_TV = 1e-6
SPHERE_MAX_N = 22

# stream tags separating the uses of one master seed
_SCHEDULE, _PARTICLE, _PROBE, _REVALIDATE, _CENSUS = 1, 2, 3, 4, 5


class ConfigError(ValueError):
    def __init__(self, errors: Sequence[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


# ---------------------------------------------------------------------------
# observables


@dataclass(frozen=True)
class Observable:
    id: str
    fn: Callable[[np.ndarray], np.ndarray]
    reference: float
    provenance: str  # "exact" or "quadrature"
    spread: float  # sup |phi - reference|

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(pts), dtype=float)


def _first_coord(pts):
    pts = np.asarray(pts, float)
    return pts if pts.ndim == 1 else pts[:, 0]


def observable(space: Space, oid: str) -> Observable:
    """Look up an observable by id.

    ``one``; ``cos2pi`` / ``sin2pi`` (circle, or first torus coordinate);
    ``z`` (sphere height); ``indicator:a,b,...`` on finite spaces with
    element labels or indices separated by ``;`` or ``|``.
    """
    if oid == "one":
        return Observable(oid, lambda p: np.ones(len(p)), 1.0, "exact", 0.0)
    if oid in ("cos2pi", "sin2pi") and isinstance(space, (Circle, Torus)):
        f = np.cos if oid == "cos2pi" else np.sin
        return Observable(oid, lambda p: f(2 * np.pi * _first_coord(p)), 0.0, "exact", 1.0)
    if oid == "z" and isinstance(space, Sphere2):
        return Observable(oid, lambda p: np.asarray(p, float)[:, 2], 0.0, "exact", 1.0)
    if oid.startswith("indicator:") and space.finite:
        raw = [s for s in oid.split(":", 1)[1].replace("|", ";").split(";") if s.strip()]
        members = sorted({_finite_index(space, s.strip()) for s in raw})
        if not members:
            raise ValueError("indicator needs at least one element")
        size = len(space.all_points())
        mask = np.zeros(size)
        mask[members] = 1.0
        ref = len(members) / size
        return Observable(oid, lambda p: mask[np.asarray(p, int)], ref, "exact", max(ref, 1 - ref))
    raise ValueError(f"observable {oid!r} is not defined on {space.kind}")


def _finite_index(space: Space, s: str) -> int:
    if isinstance(space, FiniteGroupSpace):
        return space.point(int(s) if s.isdigit() else s)
    return space.point(int(s))


def observable_from_function(space: Space, oid: str, fn: Callable, n: int = 10**4) -> Observable:
    """Observable whose reference integral comes from quadrature on the reference measure."""
    ref = reference_measure(space, n)
    pts = np.asarray(ref.support)
    vals = np.asarray(fn(pts), float)
    mean = float(np.dot(ref.weights.astype(float), vals))
    return Observable(oid, fn, mean, "quadrature", float(np.abs(vals - mean).max()))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class WalkConfig:
    space: Space
    family: MeasureFamily
    start: Any  # a point, or a DiscreteMeasure over points
    horizon: int
    mode: str = EXACT
    particles: int = 10_000
    seed: int = 0
    observable: str | None = None
    epsilon: float | None = None
    trials: int = 1
    checkpoints: tuple = ()
    reference_n: int = 64
    arithmetic: str = "float"  # or "fraction" for exact finite runs

    def __post_init__(self):
        errs = self.errors()
        if errs:
            raise ConfigError(errs)

    def errors(self) -> list[str]:
        errs = []
        if not isinstance(self.horizon, int) or self.horizon < 1:
            errs.append("horizon ≥ 1")
        if self.mode not in (EXACT, PARTICLES):
            errs.append(f"mode must be {EXACT!r} or {PARTICLES!r}")
        if self.mode == PARTICLES and self.particles < 100:
            errs.append("N ≥ 100 in particle mode")
        if self.trials < 1:
            errs.append("trials ≥ 1")
        if self.arithmetic not in ("float", "fraction"):
            errs.append("arithmetic must be 'float' or 'fraction'")
        if self.family.space != self.space:
            errs.append("family lives on a different space")
        if self.observable is not None:
            try:
                observable(self.space, self.observable)
            except ValueError as e:
                errs.append(str(e))
        if self.epsilon is not None and self.epsilon <= 0:
            errs.append("epsilon > 0")
        if any(c < 1 or c > self.horizon for c in self.checkpoints):
            errs.append("checkpoints must lie in 1..horizon")
        return errs

    def start_measure(self) -> DiscreteMeasure:
        if isinstance(self.start, DiscreteMeasure):
            return self.start
        return dirac(self.space, self.space.point(self.start))

    def checkpoint_list(self) -> list[int]:
        return sorted(set(self.checkpoints)) if self.checkpoints else [self.horizon]


# ---------------------------------------------------------------------------
# convergence runs


@dataclass
class StepRecord:
    step: int
    distance: float
    radius: float
    support_size: int


@dataclass
class ConvergenceSeries:
    metric: str  # "tv" or "w1"
    records: list = field(default_factory=list)
    supports: list | None = None  # per-step support labels on finite spaces
    note: str = ""

    @property
    def distances(self) -> np.ndarray:
        return np.asarray([float(r.distance) for r in self.records])

    def window_gap(self, window: int = WINDOW) -> float:
        d = self.distances[-window:]
        return float(d.max() - d.min())

    def jsonl(self) -> list[str]:
        out = []
        for i, r in enumerate(self.records):
            rec = {"step": r.step, self.metric: float(r.distance), "radius": r.radius, "support_size": r.support_size}
            if self.supports is not None:
                rec["support"] = self.supports[i]
            out.append(json.dumps(rec, sort_keys=True))
        return out

    def csv_rows(self) -> list[list]:
        return [["step", self.metric, "radius", "support_size"]] + [
            [r.step, float(r.distance), r.radius, r.support_size] for r in self.records
        ]


def step_matrix(space: Space, mu: DiscreteMeasure) -> np.ndarray:
    """Column-stochastic matrix of ``nu -> mu * nu`` on a finite space."""
    n = len(space.all_points())
    M = np.zeros((n, n))
    cols = np.arange(n)
    for g, w in mu.atoms:
        M[space.permutation_of(g), cols] += float(w)
    return M


def _support_radius(space: Space, pts: Sequence) -> float:
    if space.finite:
        allp = np.asarray(space.all_points())
        return float(space.distance_matrix(allp, np.asarray(pts)).min(axis=1).max())
    if isinstance(space, Circle):
        return float(space.net_covering_radius(list(pts)))
    net = np.asarray(space.reference_net(0.1))
    return float(space.distance_matrix(net, np.asarray(pts)).min(axis=1).max())


def _finite_distance(space: Space, v: np.ndarray) -> float:
    n = len(v)
    if isinstance(space, FiniteGroupSpace):
        return float(0.5 * np.abs(v - 1.0 / n).sum())
    plan = transport_simplex(v, np.full(n, 1.0 / n), space.matrix)
    return float(plan.cost)


def _labels(space: Space, idx) -> list:
    if isinstance(space, FiniteGroupSpace):
        return [space.label(int(i)) for i in idx]
    return [int(i) for i in idx]


def run_convergence(cfg: WalkConfig, record_supports: bool = False) -> ConvergenceSeries:
    """Iterate nu_n = mu_n * nu_{n-1} and record the distance to the reference each step."""
    space, fam = cfg.space, cfg.family
    sched = fam.indices(cfg.horizon, stream(cfg.seed, _SCHEDULE))
    if cfg.mode == PARTICLES:
        return _run_particles(cfg, sched)
    if space.finite and cfg.arithmetic == "float":
        return _run_finite_vector(cfg, sched, record_supports)
    return _run_exact_measures(cfg, sched, record_supports)


def _run_finite_vector(cfg, sched, record_supports):
    space, fam = cfg.space, cfg.family
    mats = [step_matrix(space, mu) for mu in fam.members]
    v = np.asarray(cfg.start_measure().vector(), float)
    metric = "tv" if isinstance(space, FiniteGroupSpace) else "w1"
    series = ConvergenceSeries(metric, supports=[] if record_supports else None)

    def record(step):
        supp = np.flatnonzero(v > 0)
        series.records.append(StepRecord(step, _finite_distance(space, v), _support_radius(space, supp), len(supp)))
        if record_supports:
            series.supports.append(_labels(space, supp))

    record(0)
    for step, k in enumerate(sched, 1):
        v = mats[k] @ v
        record(step)
    return series


def _run_exact_measures(cfg, sched, record_supports):
    space, fam = cfg.space, cfg.family
    nu = cfg.start_measure()
    if space.finite:
        metric = "tv" if isinstance(space, FiniteGroupSpace) else "w1"
        ref = uniform(space, space.all_points(), exact=cfg.arithmetic == "fraction")
    else:
        metric = "w1"
        ref = reference_measure(space, cfg.reference_n)
    series = ConvergenceSeries(metric, supports=[] if record_supports else None)
    if not space.finite:
        series.note = f"distance to a {len(ref)}-atom reference measure"

    def dist(nu):
        if metric == "tv":
            return tv_distance(nu, ref)
        return w1_exact(nu, ref)[0]

    def record(step):
        supp = nu.support
        series.records.append(StepRecord(step, dist(nu), _support_radius(space, supp), len(supp)))
        if record_supports:
            idx = nu.support_indices() if space.finite else supp
            series.supports.append(_labels(space, idx) if space.finite else [list(np.atleast_1d(p)) for p in idx])

    record(0)
    for step, k in enumerate(sched, 1):
        nu = convolve(fam.members[k], nu)
        record(step)
    return series


def _run_particles(cfg, sched):
    space, fam = cfg.space, cfg.family
    rng = stream(cfg.seed, _PARTICLE)
    start = cfg.start_measure()
    w = start.weights.astype(float)
    picks = rng.choice(len(start), size=cfg.particles, p=w / w.sum())
    pts = np.asarray(start.support)[picks]
    cloud = ParticleCloud(space, np.array(pts))
    if space.finite:
        metric = "tv" if isinstance(space, FiniteGroupSpace) else "w1"
    else:
        metric = "w1"
        ref = reference_measure(space, cfg.reference_n)
    series = ConvergenceSeries(metric)

    def record(step):
        if space.finite:
            h = cloud.histogram()
            d = _finite_distance(space, h)
            supp = np.flatnonzero(h > 0)
            series.records.append(StepRecord(step, d, _support_radius(space, supp), len(supp)))
        else:
            emp = cloud.empirical()
            sub, size = subsample(emp, 2000, seed=cfg.seed)
            d = w1_exact(sub, ref)[0]
            series.records.append(StepRecord(step, d, _support_radius(space, sub.support), len(emp)))

    record(0)
    for step, k in enumerate(sched, 1):
        cloud = particle_step(cloud, fam.members[k], rng)
        record(step)
    if not space.finite:
        series.note = "particle clouds subsampled to 2000 atoms before transport"
    return series


# ---------------------------------------------------------------------------
# uniform mixing probe


@dataclass
class ProbeResult:
    m: int | None
    max_distance: float
    found: bool
    history: list  # (m, max distance, windows were exhaustive) per tried length

    def to_json(self) -> dict:
        return {"m": self.m, "max_distance": self.max_distance, "found": self.found, "history": self.history}


WINDOW_BUDGET = 2 * 10**7  # entries of stacked window products kept in memory


def _random_start(space: Space, rng: np.random.Generator, dirac_only: bool) -> DiscreteMeasure:
    if dirac_only:
        return dirac(space, space.random_point(rng))
    k = int(rng.integers(1, 5))
    pts = [space.random_point(rng) for _ in range(k)]
    w = rng.dirichlet(np.ones(k))
    return DiscreteMeasure.from_atoms(space, POINTS, list(zip(pts, w)))


def _window(fam: MeasureFamily, m: int, rng: np.random.Generator) -> list[int]:
    period = len(fam.script) if fam.script else len(fam.members)
    return fam.indices(m, rng, offset=int(rng.integers(period)))


def _pair_gap(fam: MeasureFamily, window: list[int], nu, nu2, mats=None) -> float:
    space = fam.space
    if mats is not None:
        v, v2 = np.asarray(nu.vector(), float), np.asarray(nu2.vector(), float)
        for k in window:
            v, v2 = mats[k] @ v, mats[k] @ v2
        if isinstance(space, FiniteGroupSpace):
            return float(0.5 * np.abs(v - v2).sum())
        return float(transport_simplex(v, v2, space.matrix).cost)
    for k in window:
        nu, nu2 = convolve(fam.members[k], nu), convolve(fam.members[k], nu2)
    return w1_exact(nu, nu2)[0]


def _sampled_gap(fam, m, trials, seed, tag) -> float:
    space = fam.space
    mats = [step_matrix(space, mu) for mu in fam.members] if space.finite else None
    worst = 0.0
    for t in range(trials):
        rng = stream(seed, tag, m, t)
        dirac_only = t % 2 == 0
        nu, nu2 = _random_start(space, rng, dirac_only), _random_start(space, rng, dirac_only)
        worst = max(worst, _pair_gap(fam, _window(fam, m, rng), nu, nu2, mats))
    return worst


def _column_gaps(space: Space, P: np.ndarray) -> np.ndarray:
    """For each window product, the largest distance between two of its columns."""
    n = P.shape[1]
    if isinstance(space, FiniteGroupSpace):
        out = np.empty(len(P))
        chunk = max(1, 2**22 // (n**3))
        for lo in range(0, len(P), chunk):
            Q = P[lo : lo + chunk]
            out[lo : lo + chunk] = (0.5 * np.abs(Q[:, :, :, None] - Q[:, :, None, :]).sum(axis=1)).max(axis=(1, 2))
        return out
    return np.asarray([
        max((transport_simplex(Q[:, x], Q[:, y], space.matrix).cost for x in range(n) for y in range(x + 1, n)), default=0.0)
        for Q in P
    ])


class _WindowScan:
    """Products of every schedule window, grown one step at a time.

    A window whose worst Dirac gap is already below delta stays below it
    after any extension (steps are contractions), so it is dropped and only
    its gap is remembered.  Equal products are merged.
    """

    def __init__(self, family: MeasureFamily, mats: np.ndarray, delta: float):
        self.fam, self.mats, self.delta = family, mats, delta
        n = mats.shape[1]
        if family.schedule == IID:
            self.stack, self.phase = np.eye(n)[None], None
        else:
            period = len(family.script) if family.script else len(family.members)
            self.stack = np.repeat(np.eye(n)[None], period, axis=0)
            self.phase = np.arange(period)
        self.m = 0
        self.pruned = 0.0

    def step(self) -> tuple[float, bool] | None:
        """Extend every window by one step: (max gap, all within delta), or None when too big."""
        K, n = len(self.mats), self.mats.shape[1]
        if self.phase is None:
            if len(self.stack) * K * n * n > WINDOW_BUDGET:
                return None
            P = np.matmul(self.mats[:, None], self.stack[None]).reshape(-1, n, n)
            P = np.unique(np.round(P, 12), axis=0)
        else:
            ks = [self.fam.indices(1, offset=int(p) + self.m)[0] for p in self.phase]
            P = np.matmul(self.mats[ks], self.stack)
        self.m += 1
        gaps = _column_gaps(self.fam.space, P) if len(P) else np.zeros(0)
        bad = gaps >= self.delta
        if (~bad).any():
            self.pruned = max(self.pruned, float(gaps[~bad].max()))
        self.stack = P[bad]
        if self.phase is not None:
            self.phase = self.phase[bad]
        worst = max(self.pruned, float(gaps.max()) if len(gaps) else 0.0)
        return worst, not bad.any()


def probe_standing_assumption(
    family: MeasureFamily,
    delta: float,
    trials: int = 100,
    cap: int = 64,
    seed: int = 0,
    windows: str = "auto",
) -> ProbeResult:
    """Smallest window length m after which any two starts are delta-close.

    On finite spaces with ``windows`` "auto" or "exhaustive" the answer is
    exact: every schedule window is enumerated (all phases of a cyclic or
    scripted schedule, every word of an iid one while the stack fits in
    memory) and the worst start pair, a pair of Dirac masses by convexity,
    is found by scanning columns of the window product.  The reported
    maximum is exact while some window is still delta-far and an upper
    bound below delta once none is.  Otherwise ``trials`` random windows and
    start pairs are sampled, half of the pairs Dirac masses and half random
    measures with up to four atoms.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if windows not in ("auto", "exhaustive", "sampled"):
        raise ValueError("windows must be 'auto', 'exhaustive' or 'sampled'")
    space = family.space
    scan = None
    if space.finite and windows != "sampled":
        scan = _WindowScan(family, np.asarray([step_matrix(space, mu) for mu in family.members]), delta)
    history = []
    for m in range(1, cap + 1):
        res = scan.step() if scan is not None else None
        if res is None and windows == "exhaustive":
            raise ValueError("exhaustive window scan does not fit; use sampled windows")
        if res is None:
            scan = None
            gap = _sampled_gap(family, m, trials, seed, _PROBE)
            done, exhaustive = gap < delta, False
        else:
            (gap, done), exhaustive = res, True
        history.append((m, gap, exhaustive))
        if done:
            return ProbeResult(m, gap, True, history)
    return ProbeResult(None, history[-1][1], False, history)


def revalidate_standing_assumption(family: MeasureFamily, m: int, draws: int = 100, seed: int = 0) -> float:
    """Largest gap after m steps over fresh random draws, from streams the probe never uses."""
    return _sampled_gap(family, m, draws, seed, _REVALIDATE)


# ---------------------------------------------------------------------------
# trajectories, ergodic averages and tail frequencies


def _element_table(fam: MeasureFamily):
    elems, offsets, cdfs = [], [], []
    for mu in fam.members:
        offsets.append(len(elems))
        elems.extend(g for g, _ in mu.atoms)
        w = mu.weights.astype(float)
        c = np.cumsum(w / w.sum())
        c[-1] = 1.0
        cdfs.append(c)
    return elems, np.asarray(offsets), cdfs


def _trial_steps(fam, table, n, rng) -> np.ndarray:
    _, offsets, cdfs = table
    sched = np.asarray(fam.indices(n, rng), int)
    u = rng.random(n)
    out = np.empty(n, dtype=np.int64)
    for k, c in enumerate(cdfs):
        sel = sched == k
        out[sel] = offsets[k] + np.searchsorted(c, u[sel], side="right")
    return out


def birkhoff_averages(cfg: WalkConfig, checkpoints: Sequence[int], trials: int, phi: Observable) -> np.ndarray:
    """Averages (1/n) sum_{k<n} phi(x_k) at each checkpoint, one row per trial."""
    space, fam = cfg.space, cfg.family
    table = _element_table(fam)
    elems = table[0]
    cps = sorted(checkpoints)
    n = cps[-1]
    start = cfg.start_measure()
    sw = start.weights.astype(float)
    out = np.empty((trials, len(cps)))
    block = 2048
    for lo in range(0, trials, block):
        hi = min(trials, lo + block)
        steps, starts = [], []
        for t in range(lo, hi):
            rng = stream(cfg.seed, t)
            starts.append(start.support[int(rng.choice(len(start), p=sw / sw.sum()))] if len(start) > 1 else start.support[0])
            steps.append(_trial_steps(fam, table, n, rng))
        S = np.stack(steps)
        pts = np.asarray(starts)
        acc = np.zeros(hi - lo)
        j = 0
        for k in range(n):
            acc += phi(pts)
            if k + 1 == cps[j]:
                out[lo:hi, j] = acc / cps[j]
                j += 1
                if j == len(cps):
                    break
            col = S[:, k]
            new = np.array(pts, copy=True)
            for e in np.unique(col):
                sel = col == e
                new[sel] = space.apply_many(elems[e], pts[sel])
            pts = new
    return out


@dataclass
class ErgodicReport:
    observable: str
    reference: float
    provenance: str
    checkpoints: list
    averages: np.ndarray  # trials x checkpoints

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(self.averages - self.reference)

    def fraction_within(self, tol: float, column: int = -1) -> float:
        return float((self.deviations[:, column] <= tol).mean())

    def jsonl(self) -> list[str]:
        return [
            json.dumps({"trial": t, "n": n, "average": float(a), "deviation": float(abs(a - self.reference))}, sort_keys=True)
            for t, row in enumerate(self.averages)
            for n, a in zip(self.checkpoints, row)
        ]

    def summary(self) -> dict:
        return {
            "observable": self.observable,
            "reference": self.reference,
            "reference_provenance": self.provenance,
            "checkpoints": self.checkpoints,
            "trials": len(self.averages),
            "max_deviation": [float(x) for x in self.deviations.max(axis=0)],
            "q95_deviation": [float(x) for x in np.quantile(self.deviations, 0.95, axis=0)],
        }


def run_ergodic(cfg: WalkConfig) -> ErgodicReport:
    if cfg.observable is None:
        raise ConfigError(["an observable is required"])
    phi = observable(cfg.space, cfg.observable)
    cps = cfg.checkpoint_list()
    avg = birkhoff_averages(cfg, cps, cfg.trials, phi)
    return ErgodicReport(phi.id, phi.reference, phi.provenance, cps, avg)


@dataclass
class LdReport:
    epsilon: float
    n_grid: list
    p_hat: list
    counts: list
    trials: int
    slope: float | None
    intercept: float | None
    slope_stderr: float | None
    r_squared: float | None
    flag: str  # "ok", "degenerate: all zero", "degenerate: too few nonzero"

    def to_json(self) -> dict:
        return dict(self.__dict__)


def run_large_deviations(cfg: WalkConfig, n_grid: Sequence[int], epsilon: float, trials: int) -> LdReport:
    """Fraction of trials whose Birkhoff average misses the integral by more than epsilon."""
    if trials < 1000:
        raise ConfigError(["trials ≥ 1000 for tail frequencies"])
    if epsilon <= 0:
        raise ConfigError(["epsilon > 0"])
    if cfg.observable is None:
        raise ConfigError(["an observable is required"])
    phi = observable(cfg.space, cfg.observable)
    grid = sorted(int(n) for n in n_grid)
    avg = birkhoff_averages(cfg, grid, trials, phi)
    counts = (np.abs(avg - phi.reference) > epsilon).sum(axis=0)
    p = counts / trials
    keep = counts > 0
    if not keep.any():
        return LdReport(epsilon, grid, p.tolist(), counts.tolist(), trials, None, None, None, None, "degenerate: all zero")
    if keep.sum() < 3:
        return LdReport(epsilon, grid, p.tolist(), counts.tolist(), trials, None, None, None, None, "degenerate: too few nonzero")
    fit = stats.linregress(np.asarray(grid)[keep], np.log(p[keep]))
    return LdReport(
        epsilon, grid, p.tolist(), counts.tolist(), trials,
        float(fit.slope), float(fit.intercept), float(fit.stderr), float(fit.rvalue**2), "ok",
    )


# ---------------------------------------------------------------------------
# sphere


@dataclass
class SphereShare:
    n: int
    share: float
    area: float

    @property
    def deviation(self) -> float:
        return abs(self.share - self.area)


def run_sphere_equidistribution(A: Rotation, B: Rotation, x, n: int, center=(0.0, 0.0, 1.0), area: float = 0.3) -> SphereShare:
    """Share of the 2^n points w(x), w a word of length n in A and B, inside a cap.

    The cap is centred at ``center`` with normalized area ``area``, so its
    angular radius satisfies cos(theta) = 1 - 2 area.
    """
    if not 1 <= n <= SPHERE_MAX_N:
        raise ValueError(f"word length must be in 1..{SPHERE_MAX_N}")
    if not 0 <= area <= 1:
        raise ValueError("cap area must lie in [0, 1]")
    RA, RB = quat_matrix(A.quat), quat_matrix(B.quat)
    pts = np.asarray(x, float)[None, :]
    for _ in range(n):
        pts = np.concatenate([pts @ RA.T, pts @ RB.T])
    c = np.asarray(center, float)
    c = c / np.linalg.norm(c)
    inside = pts @ c >= 1.0 - 2.0 * area - 1e-15
    return SphereShare(n, float(inside.mean()), float(area))


def seeded_rotation_pair(seed: int) -> tuple[Rotation, Rotation]:
    rng = stream(seed, 0)
    return random_rotation(rng), random_rotation(rng)


# ---------------------------------------------------------------------------
# census over small groups


@dataclass
class CensusEntry:
    group: str
    support: list
    weights: list
    adapted: bool
    strictly_aperiodic: bool
    coset_aperiodic: bool
    witnesses: int
    tv_final: float
    window_gap: float
    tail_diameter: float
    verdict: str  # "converges", "oscillates" or "stalls"

    @property
    def converged(self) -> bool:
        return self.verdict == "converges"

    @property
    def consistent(self) -> bool:
        return self.converged == (self.adapted and self.strictly_aperiodic)

    @property
    def witness_consistent(self) -> bool:
        return self.coset_aperiodic == (self.witnesses == 0)

    def to_json(self) -> dict:
        d = dict(self.__dict__)
        d["consistent"] = self.consistent
        d["witness_consistent"] = self.witness_consistent
        return d


def random_group_measure(G: grp.FiniteGroupTable, rng: np.random.Generator) -> np.ndarray:
    """Random support of random size; weights uniform on [1, 2] before normalizing."""
    k = int(rng.integers(1, G.order + 1))
    supp = rng.choice(G.order, size=k, replace=False)
    v = np.zeros(G.order)
    v[supp] = rng.uniform(1.0, 2.0, size=k)
    return v / v.sum()


def power_series(G: grp.FiniteGroupTable, v: np.ndarray, horizon: int) -> np.ndarray:
    """Rows mu^{*n} for n = 1..horizon, as probability vectors."""
    space = FiniteGroupSpace(G)
    M = step_matrix(space, from_vector(space, v, ISOMETRIES))
    out = np.empty((horizon, G.order))
    cur = v.copy()
    for n in range(horizon):
        out[n] = cur
        cur = M @ cur
    return out


def classify_measure(G: grp.FiniteGroupTable, v: np.ndarray, horizon: int = 500, window: int = WINDOW) -> CensusEntry:
    rows = power_series(G, v, horizon)
    tv = 0.5 * np.abs(rows - 1.0 / G.order).sum(axis=1)
    tail = rows[-window:]
    diam = 0.5 * np.abs(tail[:, None, :] - tail[None, :, :]).sum(axis=2).max()
    if tv[-1] < CONVERGED_TV:
        verdict = "converges"
    elif diam > OSCILLATION_GAP:
        verdict = "oscillates"
    else:
        verdict = "stalls"
    supp = grp.support_of(v)
    return CensusEntry(
        G.name,
        [G.labels[i] for i in supp],
        [float(v[i]) for i in supp],
        grp.is_adapted(G, v),
        grp.is_strictly_aperiodic(G, v)[0],
        grp.is_coset_aperiodic(G, v)[0],
        len(grp.group_witnesses(G, v, max_subsets=1)),
        float(tv[-1]),
        float(tv[-window:].max() - tv[-window:].min()),
        float(diam),
        verdict,
    )


def run_ito_kawada_census(
    groups: Sequence[grp.FiniteGroupTable] | None = None, per_group: int = 200, seed: int = 0, horizon: int = 500
) -> list[CensusEntry]:
    groups = grp.builtin_groups(12) if groups is None else groups
    out = []
    for gi, G in enumerate(groups):
        for t in range(per_group):
            v = random_group_measure(G, stream(seed, _CENSUS, gi, t))
            out.append(classify_measure(G, v, horizon))
    return out


# ---------------------------------------------------------------------------
# alternating S3 counterexample


def stromberg_family() -> MeasureFamily:
    space = FiniteGroupSpace(grp.builtin("S3"))
    h = Fraction(1, 2)
    mu1 = DiscreteMeasure.from_atoms(space, ISOMETRIES, [(space.shift("(2 3)"), h), (space.shift("(1 2 3)"), h)])
    mu2 = DiscreteMeasure.from_atoms(space, ISOMETRIES, [(space.shift("(2 3)"), h), (space.shift("(1 3 2)"), h)])
    return MeasureFamily((mu1, mu2), CYCLIC)


@dataclass
class StrombergReport:
    supports: list  # labels of supp(nu_n), n = 0..horizon
    tv: list
    window_gap: float
    tail_diameter: float
    verdict: str
    flags: dict

    def summary(self) -> dict:
        return {
            "even_support": self.supports[2],
            "odd_support": self.supports[1],
            "window_gap": self.window_gap,
            "tail_diameter": self.tail_diameter,
            "verdict": self.verdict,
            "flags": self.flags,
        }


def run_stromberg(horizon: int = 200, arithmetic: str = "fraction") -> StrombergReport:
    """Walk from the identity with the two step measures alternating, first one first."""
    fam = stromberg_family()
    space = fam.space
    cfg = WalkConfig(space, fam, space.group.identity, horizon, arithmetic=arithmetic)
    series = run_convergence(cfg, record_supports=True)
    window = min(WINDOW, horizon)
    nus = []
    nu = cfg.start_measure()
    for k in fam.indices(horizon):
        nu = convolve(fam.members[k], nu)
        nus.append(np.asarray(nu.vector(), float))
    tail = np.asarray(nus[-window:])
    diam = float(0.5 * np.abs(tail[:, None, :] - tail[None, :, :]).sum(axis=2).max())
    G = space.group
    flags = {}
    for name, mu in zip(("mu1", "mu2"), fam.members):
        flags[name] = {
            "adapted": grp.is_adapted(G, mu),
            "strictly_aperiodic": grp.is_strictly_aperiodic(G, mu)[0],
            "coset_aperiodic": grp.is_coset_aperiodic(G, mu)[0],
        }
    return StrombergReport(
        series.supports,
        [float(d) for d in series.distances],
        series.window_gap(window),
        diam,
        "non-convergent" if diam > OSCILLATION_GAP else "convergent",
        flags,
    )


# ---------------------------------------------------------------------------
# config I/O


def config_from_json(obj: dict) -> WalkConfig:
    """Build a WalkConfig, listing every schema problem at once."""
    errs = []
    space = family = None
    try:
        space = space_from_json(obj.get("space", {}))
    except (ValueError, KeyError, TypeError) as e:
        errs.append(f"space: {e}")
    if space is not None:
        try:
            family = MeasureFamily.from_json(space, obj.get("family", {}))
        except (ValueError, KeyError, TypeError) as e:
            errs.append(f"family: {e}")
    start = obj.get("start")
    if start is None:
        errs.append("start: missing")
    elif space is not None:
        try:
            if isinstance(start, dict) and "atoms" in start:
                start = DiscreteMeasure.from_json(space, {"carrier": POINTS, **start})
            else:
                start = space.point(start)
        except (ValueError, KeyError, TypeError) as e:
            errs.append(f"start: {e}")
    horizon = obj.get("horizon", 100)
    if not isinstance(horizon, int) or horizon < 1:
        errs.append("horizon ≥ 1")
    mode = obj.get("mode", EXACT)
    particles = obj.get("particles", 10_000)
    if mode == PARTICLES and (not isinstance(particles, int) or particles < 100):
        errs.append("N ≥ 100 in particle mode")
    if errs:
        raise ConfigError(errs)
    kwargs = dict(
        mode=mode,
        particles=particles,
        seed=int(obj["seed"]) if obj.get("seed") is not None else 0,
        observable=obj.get("observable"),
        epsilon=obj.get("epsilon"),
        trials=obj.get("trials", 1),
        checkpoints=tuple(obj.get("checkpoints", ())),
        reference_n=obj.get("reference_n", 64),
        arithmetic=obj.get("arithmetic", "float"),
    )
    return WalkConfig(space, family, start, horizon, **kwargs)


def config_to_json(cfg: WalkConfig) -> dict:
    sp = cfg.space
    if isinstance(cfg.start, DiscreteMeasure):
        start = {k: v for k, v in cfg.start.to_json().items() if k != "carrier"}
    else:
        start = list(cfg.start) if isinstance(cfg.start, tuple) else cfg.start
    fam = cfg.family.to_json()
    fam["members"] = [{k: v for k, v in m.items() if k != "carrier"} for m in fam["members"]]
    out = {
        "space": sp.to_json(),
        "family": fam,
        "start": start,
        "horizon": cfg.horizon,
        "mode": cfg.mode,
        "particles": cfg.particles,
        "seed": cfg.seed,
        "observable": cfg.observable,
        "epsilon": cfg.epsilon,
        "trials": cfg.trials,
        "checkpoints": list(cfg.checkpoints),
        "reference_n": cfg.reference_n,
        "arithmetic": cfg.arithmetic,
    }
    return out


def random_coset_aperiodic_family(
    G: grp.FiniteGroupTable, rng: np.random.Generator, size: int = 3, schedule: str = CYCLIC
) -> MeasureFamily:
    """Family of ``size`` random measures, each redrawn until coset aperiodic."""
    space = FiniteGroupSpace(G)
    members = []
    while len(members) < size:
        v = random_group_measure(G, rng)
        if grp.is_coset_aperiodic(G, v)[0]:
            members.append(from_vector(space, v, ISOMETRIES))
    return MeasureFamily(tuple(members), schedule)

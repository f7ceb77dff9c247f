"""Compact metric spaces, their isometries, reference nets and reference measures.

Points are plain values: a float on the circle, a tuple of floats on the
torus, a unit 3-tuple on the sphere, an int on finite spaces.  Isometries are
small frozen dataclasses so that a measure over points can never be confused
with a measure over isometries.

Composition is fixed once for every kind: ``apply(compose(g, h), p) ==
apply(g, apply(h, p))``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .groups import FiniteGroupTable, builtin

POINT_TOL = 1e-12
ISOMETRY_CAP = 10**5  # enumerated isometries of a finite metric space
_SNAP = 1e12


class KindMismatch(ValueError):
    """A point or isometry was used with a space of another kind."""


# ---------------------------------------------------------------------------
# isometry elements


@dataclass(frozen=True)
class Translation:
    """Translation of the circle (1 coordinate) or torus (d coordinates)."""

    shift: tuple[float, ...]


@dataclass(frozen=True)
class Rotation:
    """Rotation of the 2-sphere as a unit quaternion (w, x, y, z)."""

    quat: tuple[float, float, float, float]


@dataclass(frozen=True)
class Shift:
    """Left multiplication by a group element."""

    element: int


@dataclass(frozen=True)
class Permutation:
    """Distance-preserving permutation of a finite metric space."""

    perm: tuple[int, ...]


# ---------------------------------------------------------------------------
# quaternion helpers


def quat_mul(a, b):
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return (
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    )


def _normalize(v):
    n = math.sqrt(sum(c * c for c in v))
    if n == 0:
        raise ValueError("zero vector")
    return tuple(c / n for c in v)


def quat_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rotation_about(axis: Sequence[float], angle: float) -> Rotation:
    ax = _normalize(axis)
    s = math.sin(angle / 2)
    return Rotation(_normalize((math.cos(angle / 2), ax[0] * s, ax[1] * s, ax[2] * s)))


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Haar-distributed rotation (normalized Gaussian quaternion)."""
    return Rotation(_normalize(tuple(float(v) for v in rng.standard_normal(4))))


def rotation_angle(g: Rotation) -> float:
    w = min(1.0, abs(g.quat[0]))
    return 2.0 * math.acos(w)


# ---------------------------------------------------------------------------
# spaces


def _circ(a, b):
    d = abs(a - b) % 1.0
    return min(d, 1.0 - d)


def _mod1(x: float) -> float:
    y = x % 1.0
    # snap values a rounding error away from 1 back to 0
    return 0.0 if y >= 1.0 - POINT_TOL else y


class Space:
    kind: str = ""
    finite: bool = False
    diameter: float = 0.0

    def _check_point(self, p):  # pragma: no cover - overridden
        raise NotImplementedError

    def _check_iso(self, g, cls):
        if not isinstance(g, cls):
            raise KindMismatch(f"{type(g).__name__} is not an isometry of {self.kind}")

    def key(self, p):
        """Hashable key implementing the space's point equality."""
        return p

    def iso_key(self, g):
        return g

    def sup_distance(self, g, h) -> float:
        return self.sup_distance_report(g, h)[0]

    def net_covering_radius(self, net: Sequence) -> float:
        return 0.0

    def to_json(self) -> dict:  # pragma: no cover - overridden
        raise NotImplementedError


@dataclass(frozen=True)
class Circle(Space):
    """R/Z with the arc metric; circumference 1, diameter 1/2."""

    kind = "circle"
    diameter = 0.5

    def _check_point(self, p):
        if not isinstance(p, (float, int, np.floating, np.integer)) or isinstance(p, bool):
            raise KindMismatch(f"{p!r} is not a circle point")

    def point(self, x) -> float:
        return _mod1(float(x))

    def distance(self, p, q) -> float:
        self._check_point(p)
        self._check_point(q)
        return _circ(p, q)

    def distance_matrix(self, P, Q) -> np.ndarray:
        d = np.abs(np.asarray(P, float)[:, None] - np.asarray(Q, float)[None, :]) % 1.0
        return np.minimum(d, 1.0 - d)

    def key(self, p):
        return round(p * _SNAP) % round(_SNAP)

    def identity(self):
        return Translation((0.0,))

    def translation(self, t) -> Translation:
        return Translation((_mod1(float(t)),))

    def apply(self, g, p):
        self._check_iso(g, Translation)
        self._check_point(p)
        return _mod1(p + g.shift[0])

    def apply_many(self, g, pts: np.ndarray) -> np.ndarray:
        out = (pts + g.shift[0]) % 1.0
        out[out >= 1.0 - POINT_TOL] = 0.0
        return out

    def compose(self, g, h):
        self._check_iso(g, Translation)
        self._check_iso(h, Translation)
        return Translation((_mod1(g.shift[0] + h.shift[0]),))

    def inverse(self, g):
        self._check_iso(g, Translation)
        return Translation((_mod1(-g.shift[0]),))

    def iso_key(self, g):
        return ("T", self.key(g.shift[0]))

    def sup_distance_report(self, g, h):
        self._check_iso(g, Translation)
        self._check_iso(h, Translation)
        return _circ(g.shift[0], h.shift[0]), 0.0

    def reference_net(self, eps: float) -> list[float]:
        if eps <= 0:
            raise ValueError("eps must be positive")
        n = math.ceil(1.0 / eps - 1e-12)
        return [k / n for k in range(n)]

    def grid(self, n: int) -> list[float]:
        return [k / n for k in range(n)]

    def net_covering_radius(self, net):
        pts = np.sort(np.asarray(net, float))
        gaps = np.diff(np.concatenate([pts, [pts[0] + 1.0]]))
        return float(gaps.max() / 2)

    def random_point(self, rng):
        return float(rng.random())

    def to_json(self):
        return {"kind": "circle"}


@dataclass(frozen=True)
class Torus(Space):
    """(R/Z)^d with the max of coordinate-wise arc metrics."""

    dimension: int = 2
    kind = "torus"
    diameter = 0.5

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("torus dimension must be >= 1")

    def _check_point(self, p):
        if not isinstance(p, tuple) or len(p) != self.dimension:
            raise KindMismatch(f"{p!r} is not a point of the {self.dimension}-torus")

    def point(self, x) -> tuple:
        return tuple(_mod1(float(c)) for c in x)

    def distance(self, p, q):
        self._check_point(p)
        self._check_point(q)
        return max(_circ(a, b) for a, b in zip(p, q))

    def distance_matrix(self, P, Q):
        P = np.asarray(P, float).reshape(len(P), self.dimension)
        Q = np.asarray(Q, float).reshape(len(Q), self.dimension)
        d = np.abs(P[:, None, :] - Q[None, :, :]) % 1.0
        return np.minimum(d, 1.0 - d).max(axis=2)

    def key(self, p):
        return tuple(round(c * _SNAP) % round(_SNAP) for c in p)

    def identity(self):
        return Translation((0.0,) * self.dimension)

    def translation(self, t) -> Translation:
        if len(t) != self.dimension:
            raise KindMismatch("translation dimension mismatch")
        return Translation(tuple(_mod1(float(c)) for c in t))

    def apply(self, g, p):
        self._check_iso(g, Translation)
        self._check_point(p)
        if len(g.shift) != self.dimension:
            raise KindMismatch("translation dimension mismatch")
        return tuple(_mod1(a + b) for a, b in zip(p, g.shift))

    def apply_many(self, g, pts):
        out = (pts + np.asarray(g.shift)) % 1.0
        out[out >= 1.0 - POINT_TOL] = 0.0
        return out

    def compose(self, g, h):
        self._check_iso(g, Translation)
        self._check_iso(h, Translation)
        return Translation(tuple(_mod1(a + b) for a, b in zip(g.shift, h.shift)))

    def inverse(self, g):
        self._check_iso(g, Translation)
        return Translation(tuple(_mod1(-a) for a in g.shift))

    def iso_key(self, g):
        return ("T",) + self.key(g.shift)

    def sup_distance_report(self, g, h):
        self._check_iso(g, Translation)
        self._check_iso(h, Translation)
        return max(_circ(a, b) for a, b in zip(g.shift, h.shift)), 0.0

    def grid(self, n: int) -> list[tuple]:
        return [tuple(c / n for c in idx) for idx in itertools.product(range(n), repeat=self.dimension)]

    def reference_net(self, eps: float):
        if eps <= 0:
            raise ValueError("eps must be positive")
        return self.grid(math.ceil(1.0 / eps - 1e-12))

    def net_covering_radius(self, net):
        # product grids: the worst coordinate gap dominates under the max metric
        arr = np.asarray(net, float).reshape(len(net), self.dimension)
        return max(Circle().net_covering_radius(np.unique(arr[:, k])) for k in range(self.dimension))

    def random_point(self, rng):
        return tuple(float(v) for v in rng.random(self.dimension))

    def to_json(self):
        return {"kind": "torus", "dimension": self.dimension}


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    phi = i * math.pi * (3.0 - math.sqrt(5.0))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _chord_to_angle(c):
    return 2.0 * np.arcsin(np.clip(c / 2.0, 0.0, 1.0))


@dataclass(frozen=True)
class Sphere2(Space):
    """Unit 2-sphere with the great-circle metric, diameter pi."""

    kind = "sphere2"
    diameter = math.pi

    def _check_point(self, p):
        if not isinstance(p, tuple) or len(p) != 3:
            raise KindMismatch(f"{p!r} is not a sphere point")
        if abs(math.sqrt(sum(c * c for c in p)) - 1.0) > POINT_TOL * 10:
            raise KindMismatch(f"{p!r} is not a unit vector")

    def point(self, v) -> tuple:
        return _normalize(tuple(float(c) for c in v))

    def distance(self, p, q):
        self._check_point(p)
        self._check_point(q)
        # atan2 form stays accurate near 0 and pi
        cross = np.cross(p, q)
        return float(math.atan2(float(np.linalg.norm(cross)), float(np.dot(p, q))))

    def distance_matrix(self, P, Q):
        P = np.asarray(P, float).reshape(-1, 3)
        Q = np.asarray(Q, float).reshape(-1, 3)
        return np.arccos(np.clip(P @ Q.T, -1.0, 1.0))

    def key(self, p):
        return tuple(round(c * _SNAP) for c in p)

    def identity(self):
        return Rotation((1.0, 0.0, 0.0, 0.0))

    def apply(self, g, p):
        self._check_iso(g, Rotation)
        self._check_point(p)
        return _normalize(tuple(float(c) for c in quat_matrix(g.quat) @ np.asarray(p)))

    def apply_many(self, g, pts):
        out = pts @ quat_matrix(g.quat).T
        return out / np.linalg.norm(out, axis=1, keepdims=True)

    def compose(self, g, h):
        self._check_iso(g, Rotation)
        self._check_iso(h, Rotation)
        return Rotation(_normalize(quat_mul(g.quat, h.quat)))

    def inverse(self, g):
        self._check_iso(g, Rotation)
        w, x, y, z = g.quat
        return Rotation((w, -x, -y, -z))

    def iso_key(self, g):
        q = g.quat
        if q[0] < 0 or (q[0] == 0 and q[1:] < (0.0, 0.0, 0.0)):
            q = tuple(-c for c in q)  # q and -q are the same rotation
        return ("R",) + tuple(round(c * _SNAP) for c in q)

    def sup_distance_report(self, g, h, eps: float = 0.05):
        """Max displacement over a Fibonacci net, with the net's covering radius."""
        self._check_iso(g, Rotation)
        self._check_iso(h, Rotation)
        net, radius = self._net(eps)
        a = self.apply_many(g, net)
        b = self.apply_many(h, net)
        # chord form stays accurate for nearly equal rotations
        return float(_chord_to_angle(np.linalg.norm(a - b, axis=1)).max()), radius

    def measure_covering_radius(self, pts: np.ndarray, probe_factor: int = 16) -> float:
        """Largest gap seen from a denser Fibonacci probe set (nested-net estimate)."""
        probe = fibonacci_sphere(max(2000, probe_factor * len(pts)))
        dist, _ = cKDTree(pts).query(probe)
        return float(_chord_to_angle(dist).max())

    def _net(self, eps):
        return _sphere_net(eps)

    def reference_net(self, eps: float) -> list[tuple]:
        if eps <= 0:
            raise ValueError("eps must be positive")
        pts, _ = self._net(eps)
        return [tuple(map(float, p)) for p in pts]

    def net_covering_radius(self, net):
        return self.measure_covering_radius(np.asarray(net, float))

    def random_point(self, rng):
        return _normalize(tuple(float(v) for v in rng.standard_normal(3)))

    def to_json(self):
        return {"kind": "sphere2"}


_SPHERE_NETS: dict[float, tuple[np.ndarray, float]] = {}


def _sphere_net(eps: float):
    if eps not in _SPHERE_NETS:
        n = max(4, int(math.ceil(2.0 / (eps * eps))))
        sph = Sphere2()
        while True:
            pts = fibonacci_sphere(n)
            r = sph.measure_covering_radius(pts)
            if r <= eps:
                break
            n = int(math.ceil(n * 1.25))
        _SPHERE_NETS[eps] = (pts, r)
    return _SPHERE_NETS[eps]


@dataclass(frozen=True, eq=False)
class FiniteGroupSpace(Space):
    """A finite group acting on itself by left shifts; discrete metric."""

    group: FiniteGroupTable = field(default_factory=lambda: builtin("S3"))
    kind = "finite_group"
    finite = True

    @property
    def diameter(self):
        return 1.0 if self.group.order > 1 else 0.0

    @property
    def size(self) -> int:
        return self.group.order

    def _check_point(self, p):
        if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or not 0 <= p < self.group.order:
            raise KindMismatch(f"{p!r} is not an element of {self.group.name}")

    def point(self, x) -> int:
        return self.group.element(x)

    def distance(self, p, q):
        self._check_point(p)
        self._check_point(q)
        return 0.0 if p == q else 1.0

    def distance_matrix(self, P, Q):
        return (np.asarray(P)[:, None] != np.asarray(Q)[None, :]).astype(float)

    def identity(self):
        return Shift(self.group.identity)

    def shift(self, g) -> Shift:
        return Shift(self.group.element(g))

    def apply(self, g, p):
        self._check_iso(g, Shift)
        self._check_point(p)
        return int(self.group.cayley[g.element, p])

    def apply_many(self, g, pts):
        return self.group.cayley[g.element][pts]

    def compose(self, g, h):
        self._check_iso(g, Shift)
        self._check_iso(h, Shift)
        return Shift(int(self.group.cayley[g.element, h.element]))

    def inverse(self, g):
        self._check_iso(g, Shift)
        return Shift(int(self.group.inverse[g.element]))

    def permutation_of(self, g) -> np.ndarray:
        return np.asarray(self.group.cayley[g.element])

    def sup_distance_report(self, g, h):
        self._check_iso(g, Shift)
        self._check_iso(h, Shift)
        return (0.0 if g.element == h.element else 1.0), 0.0

    def all_points(self):
        return list(range(self.group.order))

    def all_isometries(self):
        return [Shift(g) for g in range(self.group.order)]

    def reference_net(self, eps):
        if eps <= 0:
            raise ValueError("eps must be positive")
        return self.all_points()

    def label(self, p) -> str:
        return self.group.labels[p]

    def random_point(self, rng):
        return int(rng.integers(self.group.order))

    def to_json(self):
        return {"kind": "finite_group", **self.group.to_json()}

    def __eq__(self, other):
        return isinstance(other, FiniteGroupSpace) and (
            other.group is self.group or np.array_equal(other.group.cayley, self.group.cayley)
        )

    def __hash__(self):
        return hash(("finite_group", self.group.cayley.tobytes()))


@dataclass(frozen=True, eq=False)
class FiniteMetric(Space):
    """Finitely many points with an explicit distance matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    kind = "finite_metric"
    finite = True

    def __post_init__(self):
        D = np.asarray(self.matrix, dtype=float)
        if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] == 0:
            raise ValueError("distance matrix must be square and nonempty")
        if not np.array_equal(D, D.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(D) != 0) or np.any(D < 0):
            raise ValueError("distance matrix needs a zero diagonal and nonnegative entries")
        off = D + np.eye(len(D))
        if np.any(off <= 0):
            raise ValueError("distinct points must be at positive distance")
        if np.any(D[:, None, :] > D[:, :, None] + D[None, :, :] + 1e-12):
            raise ValueError("distance matrix violates the triangle inequality")
        D.setflags(write=False)
        object.__setattr__(self, "matrix", D)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def diameter(self):
        return float(self.matrix.max())

    def _check_point(self, p):
        if not isinstance(p, (int, np.integer)) or isinstance(p, bool) or not 0 <= p < self.size:
            raise KindMismatch(f"{p!r} is not a point of this finite metric space")

    def point(self, x) -> int:
        x = int(x)
        self._check_point(x)
        return x

    def distance(self, p, q):
        self._check_point(p)
        self._check_point(q)
        return float(self.matrix[p, q])

    def distance_matrix(self, P, Q):
        return self.matrix[np.ix_(np.asarray(P, int), np.asarray(Q, int))]

    def permutation(self, perm: Sequence[int]) -> Permutation:
        p = tuple(int(v) for v in perm)
        if sorted(p) != list(range(self.size)):
            raise ValueError("not a permutation of the points")
        idx = np.asarray(p)
        if not np.array_equal(self.matrix[np.ix_(idx, idx)], self.matrix):
            raise ValueError("permutation does not preserve the distance matrix")
        return Permutation(p)

    def identity(self):
        return Permutation(tuple(range(self.size)))

    def apply(self, g, p):
        self._check_iso(g, Permutation)
        self._check_point(p)
        return g.perm[p]

    def apply_many(self, g, pts):
        return np.asarray(g.perm)[pts]

    def compose(self, g, h):
        self._check_iso(g, Permutation)
        self._check_iso(h, Permutation)
        return Permutation(tuple(g.perm[h.perm[i]] for i in range(self.size)))

    def inverse(self, g):
        self._check_iso(g, Permutation)
        inv = [0] * self.size
        for i, j in enumerate(g.perm):
            inv[j] = i
        return Permutation(tuple(inv))

    def permutation_of(self, g) -> np.ndarray:
        return np.asarray(g.perm)

    def sup_distance_report(self, g, h):
        self._check_iso(g, Permutation)
        self._check_iso(h, Permutation)
        return float(self.matrix[np.asarray(g.perm), np.asarray(h.perm)].max()), 0.0

    @cached_property
    def _isometries(self):
        """Distance-preserving permutations, by backtracking over partial maps."""
        D, n = self.matrix, self.size
        out: list[Permutation] = []
        img = [0] * n
        used = [False] * n

        def extend(i):
            if i == n:
                out.append(Permutation(tuple(img)))
                if len(out) > ISOMETRY_CAP:
                    raise ValueError(f"more than {ISOMETRY_CAP} isometries")
                return
            for y in range(n):
                if not used[y] and all(D[img[j], y] == D[j, i] for j in range(i)):
                    img[i], used[y] = y, True
                    extend(i + 1)
                    used[y] = False

        extend(0)
        return out

    def all_isometries(self):
        return list(self._isometries)

    def all_points(self):
        return list(range(self.size))

    def reference_net(self, eps):
        if eps <= 0:
            raise ValueError("eps must be positive")
        return self.all_points()

    def random_point(self, rng):
        return int(rng.integers(self.size))

    def to_json(self):
        return {"kind": "finite_metric", "matrix": self.matrix.tolist()}

    def __eq__(self, other):
        return isinstance(other, FiniteMetric) and np.array_equal(other.matrix, self.matrix)

    def __hash__(self):
        return hash(("finite_metric", self.matrix.tobytes()))


def cycle_graph_metric(n: int) -> FiniteMetric:
    """Shortest-path metric of the n-cycle; its isometry group is dihedral."""
    i = np.arange(n)
    d = np.abs(i[:, None] - i[None, :])
    return FiniteMetric(np.minimum(d, n - d).astype(float))


# ---------------------------------------------------------------------------
# module-level operations


def distance(space: Space, p, q) -> float:
    return space.distance(p, q)


def apply(space: Space, g, p):
    return space.apply(g, p)


def compose(space: Space, g, h):
    return space.compose(g, h)


def inverse(space: Space, g):
    return space.inverse(g)


def sup_distance(space: Space, g, h) -> float:
    return space.sup_distance(g, h)


def reference_net(space: Space, eps: float) -> list:
    return space.reference_net(eps)


def reference_measure(space: Space, n: int = 1):
    """Uniform measure on all points (finite kinds) or on an n-point grid / Fibonacci lattice."""
    from .measures import DiscreteMeasure

    if n < 1:
        raise ValueError("n must be >= 1")
    if space.finite:
        pts = space.all_points()
    elif isinstance(space, Sphere2):
        pts = [tuple(map(float, p)) for p in fibonacci_sphere(n)]
    else:
        pts = space.grid(n)
    w = 1.0 / len(pts)
    if space.finite:
        from fractions import Fraction

        w = Fraction(1, len(pts))
    return DiscreteMeasure.from_atoms(space, "points", [(p, w) for p in pts])


# ---------------------------------------------------------------------------
# JSON


def space_from_json(obj: Mapping[str, Any]) -> Space:
    kind = obj.get("kind")
    if kind == "circle":
        return Circle()
    if kind == "torus":
        return Torus(int(obj.get("dimension", 2)))
    if kind == "sphere2":
        return Sphere2()
    if kind == "finite_group":
        if "group" in obj:
            return FiniteGroupSpace(builtin(obj["group"]))
        return FiniteGroupSpace(FiniteGroupTable.from_json(obj))
    if kind == "finite_metric":
        return FiniteMetric(np.asarray(obj["matrix"], float))
    raise ValueError(f"unknown space kind {kind!r}")


def space_to_json(space: Space) -> dict:
    return space.to_json()


def point_from_json(space: Space, v):
    return space.point(v)


def point_to_json(space: Space, p):
    if isinstance(p, tuple):
        return list(p)
    return p


def isometry_from_json(space: Space, v):
    if isinstance(space, Circle):
        return space.translation(v[0] if isinstance(v, list) else v)
    if isinstance(space, Torus):
        return space.translation(v)
    if isinstance(space, Sphere2):
        if isinstance(v, Mapping):
            return rotation_about(v["axis"], float(v["angle"]))
        return Rotation(_normalize(tuple(float(c) for c in v)))
    if isinstance(space, FiniteGroupSpace):
        return space.shift(v)
    if isinstance(space, FiniteMetric):
        return space.permutation(v)
    raise KindMismatch(type(space).__name__)


def isometry_to_json(space: Space, g):
    if isinstance(g, Translation):
        return g.shift[0] if isinstance(space, Circle) else list(g.shift)
    if isinstance(g, Rotation):
        return list(g.quat)
    if isinstance(g, Shift):
        return g.element
    if isinstance(g, Permutation):
        return list(g.perm)
    raise KindMismatch(type(g).__name__)

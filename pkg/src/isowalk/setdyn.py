"""Dynamics of closed sets represented as subsets of a fixed finite net.

A closed set is a nonempty index set into a reference net.  Isometries act by
mapping net points and snapping the images back onto the net; on finite
spaces, and for translations by grid multiples on the circle and torus, this
snapping is exact, which is what the exact set operations (``t_mu``,
``separation_probe``) require.

The empty set is represented by ``None``: an intersection that vanishes is a
legitimate outcome, not an error.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .measures import DiscreteMeasure, MeasureFamily
from .spaces import Circle, Space, point_to_json

EXACT_TOL = 1e-9


class SetDynError(ValueError):
    """Raised for net mismatches and isometries that do not preserve the net."""


class PartitionError(SetDynError):
    def __init__(self, msg: str, cell: "NetSet | None" = None):
        super().__init__(msg)
        self.cell = cell


@dataclass(frozen=True, eq=False)
class Net:
    """A finite list of points of ``space`` used as the ambient set."""

    space: Space
    points: tuple

    @classmethod
    def of(cls, space: Space, eps: float | None = None, points: Sequence | None = None) -> "Net":
        if points is None:
            points = space.all_points() if space.finite else space.reference_net(eps)
        return cls(space, tuple(space.point(p) for p in points))

    def __len__(self):
        return len(self.points)

    @cached_property
    def coords(self) -> np.ndarray:
        return np.asarray(self.points)

    @cached_property
    def dist(self) -> np.ndarray:
        return self.space.distance_matrix(self.coords, self.coords)

    @cached_property
    def covering_radius(self) -> float:
        return 0.0 if self.space.finite else float(self.space.net_covering_radius(list(self.points)))

    @cached_property
    def digest(self) -> str:
        blob = json.dumps(
            {"space": self.space.to_json(), "points": [point_to_json(self.space, p) for p in self.points]},
            sort_keys=True,
        )
        return hashlib.sha1(blob.encode()).hexdigest()[:16]

    @cached_property
    def _index(self) -> dict:
        return {self.space.key(p): i for i, p in enumerate(self.points)}

    def index_of(self, p) -> int:
        try:
            return self._index[self.space.key(self.space.point(p))]
        except KeyError:
            raise SetDynError(f"{p!r} is not a net point") from None

    def subset(self, members: Iterable[int]) -> "NetSet":
        return NetSet(self, tuple(sorted(set(int(i) for i in members))))

    def subset_of_points(self, pts: Iterable) -> "NetSet":
        return self.subset(self.index_of(p) for p in pts)

    def full(self) -> "NetSet":
        return NetSet(self, tuple(range(len(self))))

    def image(self, g) -> tuple[np.ndarray, float]:
        """Index map of g on the net and the largest snapping error."""
        key = self.space.iso_key(g)
        cache = self.__dict__.setdefault("_images", {})
        if key not in cache:
            img = self.space.apply_many(g, self.coords.copy())
            d = self.space.distance_matrix(img, self.coords)
            idx = d.argmin(axis=1)
            cache[key] = (idx, float(d[np.arange(len(idx)), idx].max()))
        return cache[key]

    def exact_image(self, g) -> np.ndarray:
        idx, err = self.image(g)
        if err > EXACT_TOL or len(set(idx.tolist())) != len(idx):
            raise SetDynError("isometry does not map the net onto itself; exact set mode needs grid-compatible isometries")
        return idx


@dataclass(frozen=True)
class NetSet:
    net: Net = field(compare=False)
    members: tuple

    def __post_init__(self):
        if not self.members:
            raise SetDynError("a net set is nonempty; use None for the empty set")
        n = len(self.net)
        if any(not 0 <= i < n for i in self.members) or len(set(self.members)) != len(self.members):
            raise SetDynError("invalid net indices")
        if list(self.members) != sorted(self.members):
            object.__setattr__(self, "members", tuple(sorted(self.members)))

    def __eq__(self, other):
        return isinstance(other, NetSet) and self.net is other.net and self.members == other.members

    def __hash__(self):
        return hash((id(self.net), self.members))

    def __len__(self):
        return len(self.members)

    @property
    def covering_radius(self) -> float:
        return self.net.covering_radius

    @property
    def idx(self) -> np.ndarray:
        return np.asarray(self.members, dtype=int)

    def points(self) -> list:
        return [self.net.points[i] for i in self.members]

    def complement(self) -> "NetSet | None":
        rest = sorted(set(range(len(self.net))) - set(self.members))
        return NetSet(self.net, tuple(rest)) if rest else None

    def issubset(self, other: "NetSet") -> bool:
        return set(self.members) <= set(other.members)

    def moved(self, g, exact: bool = False) -> "NetSet":
        idx = self.net.exact_image(g) if exact else self.net.image(g)[0]
        return self.net.subset(idx[self.idx])

    def to_json(self) -> dict:
        return {"net": self.net.digest, "members": list(self.members)}


def _same_net(A: NetSet, B: NetSet):
    if A.net is not B.net and A.net.digest != B.net.digest:
        raise SetDynError("sets live on different nets")


def asym_D(A: NetSet, B: NetSet) -> float:
    """Smallest r with B inside the r-neighbourhood of A, on the net."""
    _same_net(A, B)
    return float(A.net.dist[np.ix_(A.idx, B.idx)].min(axis=0).max())


def hausdorff(A: NetSet, B: NetSet) -> float:
    return max(asym_D(A, B), asym_D(B, A))


class HReport(NamedTuple):
    value: float
    projection_error: float


def _check_elements(space: Space, elements: Sequence):
    if not elements:
        raise SetDynError("empty group element list")
    keys = {space.iso_key(g) for g in elements}
    if space.iso_key(space.identity()) not in keys:
        raise SetDynError("group element list must contain the identity")
    if any(space.iso_key(space.inverse(g)) not in keys for g in elements):
        raise SetDynError("group element list must be closed under inverses")


def pseudo_H_report(A: NetSet, B: NetSet, elements: Sequence) -> HReport:
    """Distance up to the listed isometries, with the net snapping error.

    The minimum runs over ``elements`` only; on continuous spaces this is a
    finite sample of the full isometry group.
    """
    _same_net(A, B)
    net = A.net
    _check_elements(net.space, elements)
    err = 0.0
    best_ab = best_ba = np.inf
    for g in elements:
        idx, e = net.image(g)
        err = max(err, e)
        best_ab = min(best_ab, float(net.dist[np.ix_(idx[A.idx], B.idx)].min(axis=0).max()))
        best_ba = min(best_ba, float(net.dist[np.ix_(idx[B.idx], A.idx)].min(axis=0).max()))
    return HReport(max(best_ab, best_ba), err)


def pseudo_H(A: NetSet, B: NetSet, elements: Sequence) -> float:
    return pseudo_H_report(A, B, elements).value


def group_elements(net: Net) -> list:
    """The isometries that permute the net: all of them on finite spaces, grid shifts otherwise."""
    sp = net.space
    if sp.finite:
        return sp.all_isometries()
    if isinstance(sp, Circle):
        return [sp.translation(p) for p in net.points]
    if sp.kind == "torus":
        return [sp.translation(p) for p in net.points]
    raise SetDynError(f"no canonical finite isometry list for {sp.kind}")


def t_mu(A: NetSet, supp: Sequence) -> NetSet | None:
    """Intersection of the images g(A) over g in supp; None when empty."""
    if not supp:
        raise SetDynError("empty support")
    keep = set(range(len(A.net)))
    for g in supp:
        keep &= set(A.net.exact_image(g)[A.idx].tolist())
        if not keep:
            return None
    return A.net.subset(keep)


# ---------------------------------------------------------------------------
# wide sets


@dataclass(frozen=True)
class WidePartition:
    cells: list
    centers: list
    eps: float

    def to_json(self) -> dict:
        return {
            "eps": self.eps,
            "net": self.cells[0].net.digest if self.cells else None,
            "cells": [list(c.members) for c in self.cells],
            "centers": list(self.centers),
        }


def is_wide(cell: NetSet, eps: float, center: int | None = None) -> bool:
    """Inside a closed eps-ball and containing an open eps/3-ball, relative to the net."""
    d = cell.net.dist
    members = set(cell.members)
    candidates = [center] if center is not None else list(cell.members)
    inside = any(d[c, cell.idx].max() <= eps + EXACT_TOL for c in candidates)
    if not inside:
        return False
    return any(set(np.flatnonzero(d[c] < eps / 3 - EXACT_TOL).tolist()) <= members for c in candidates)


def eps_wide_partition(space: Space, net: Net | Sequence, eps: float) -> WidePartition:
    """Greedy partition of the net into eps-wide cells.

    Centers are taken in index order among points at distance at least eps
    from every earlier center, so their eps/2-balls are disjoint; every point
    then joins its nearest center, ties going to the earlier one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not isinstance(net, Net):
        net = Net.of(space, points=net)
    if net.covering_radius > eps / 6 + EXACT_TOL:
        raise ValueError(f"net covering radius {net.covering_radius:g} exceeds eps/6")
    d = net.dist
    centers: list[int] = []
    for i in range(len(net)):
        if all(d[i, c] >= eps - EXACT_TOL for c in centers):
            centers.append(i)
    owner = np.asarray(centers)[d[:, centers].argmin(axis=1)]
    cells = [net.subset(np.flatnonzero(owner == c)) for c in centers]
    for c, cell in zip(centers, cells):
        if not is_wide(cell, eps, c) and not is_wide(cell, eps):
            raise PartitionError(f"cell around net point {c} is not {eps:g}-wide", cell)
    return WidePartition(cells, centers, eps)


def in_S_eps(A: NetSet | None, eps: float) -> bool:
    """Whether A and its complement both contain an open eps-ball of the net."""
    if A is None:
        return False
    comp = A.complement()
    if comp is None:
        return False
    d = A.net.dist

    def holds_ball(S: NetSet) -> bool:
        ms = set(S.members)
        return any(set(np.flatnonzero(d[c] < eps - EXACT_TOL).tolist()) <= ms for c in S.members)

    return holds_ball(A) and holds_ball(comp)


def is_eps_dense(S: NetSet | DiscreteMeasure, eps: float, net: Net | None = None) -> tuple[bool, float]:
    """Whether every net point is within eps of S, and the covering radius itself.

    For a measure on the circle the covering radius is exact (half the widest
    gap between support points); elsewhere it is measured against ``net``, or
    all points on finite spaces.
    """
    if isinstance(S, NetSet):
        radius = asym_D(S, S.net.full())
        return radius <= eps, radius
    sp = S.space
    pts = S.support
    if isinstance(sp, Circle) and net is None:
        radius = float(sp.net_covering_radius(pts))
    else:
        if net is None:
            if not sp.finite:
                raise SetDynError("a net is required for measures on this space")
            net = Net.of(sp)
        radius = float(sp.distance_matrix(net.coords, np.asarray(pts)).min(axis=1).max())
    return radius <= eps, radius


# ---------------------------------------------------------------------------
# separation probe


@dataclass
class ProbeReport:
    iterates: list  # NetSet or None, one per step 0..m
    h_values: list  # pseudo distances between consecutive nonempty iterates
    h_matrix: np.ndarray  # pairwise pseudo distances, nan where an iterate is empty
    first_exit: int | None  # first step outside the eps-regular class
    support_sizes: list

    def to_json(self) -> dict:
        return {
            "iterates": [None if A is None else list(A.members) for A in self.iterates],
            "h_values": self.h_values,
            "first_exit": self.first_exit,
            "support_sizes": self.support_sizes,
        }


def _compose_supports(space: Space, outer: Sequence, inner: Sequence) -> list:
    out = {}
    for g in outer:
        for s in inner:
            h = space.compose(g, s)
            out.setdefault(space.iso_key(h), h)
    return list(out.values())


def separation_probe(
    A0: NetSet,
    family: MeasureFamily,
    m: int,
    eps: float | None = None,
    rng: np.random.Generator | None = None,
    elements: Sequence | None = None,
) -> ProbeReport:
    """Iterate A_k = T applied to A0 with the support of mu_k * ... * mu_1.

    ``first_exit`` is the first k whose iterate is empty or, when eps is
    given, fails the eps-regularity test.
    """
    net = A0.net
    space = net.space
    elements = list(elements) if elements is not None else group_elements(net)
    schedule = family.indices(m, rng)
    S = [space.identity()]
    iterates = [A0]
    sizes = [1]
    for k in schedule:
        S = _compose_supports(space, family.members[k].support, S)
        sizes.append(len(S))
        iterates.append(t_mu(A0, S))
    first_exit = None
    for k, A in enumerate(iterates):
        if A is None or (eps is not None and not in_S_eps(A, eps)):
            first_exit = k
            break
    n = len(iterates)
    H = np.full((n, n), np.nan)
    for i in range(n):
        for j in range(i, n):
            if iterates[i] is not None and iterates[j] is not None:
                H[i, j] = H[j, i] = pseudo_H(iterates[i], iterates[j], elements)
    h_values = [float(H[k, k + 1]) for k in range(n - 1) if not np.isnan(H[k, k + 1])]
    return ProbeReport(iterates, h_values, H, first_exit, sizes)

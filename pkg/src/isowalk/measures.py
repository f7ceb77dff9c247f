"""Finitely supported probability measures over points or isometries.

Weights may be floats or :class:`fractions.Fraction`; with fractions every
operation on finite spaces is exact, which the exactness checks rely on.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .spaces import (
    KindMismatch,
    Space,
    isometry_from_json,
    isometry_to_json,
    point_from_json,
    point_to_json,
)

POINTS = "points"
ISOMETRIES = "isometries"
ATOM_CAP = 10**6
SUM_TOL = 1e-12


class AtomCapExceeded(RuntimeError):
    pass


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``; order of creation does not matter."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])))


def _weight(w):
    if isinstance(w, str):
        return Fraction(w)
    if isinstance(w, (Fraction, int)) and not isinstance(w, bool):
        return Fraction(w)
    return float(w)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    space: Space
    carrier: str
    atoms: tuple[tuple[Any, Real], ...]

    @classmethod
    def from_atoms(cls, space: Space, carrier: str, pairs: Iterable[tuple[Any, Real]], check: bool = True) -> "DiscreteMeasure":
        """Merge equal atoms, drop zero weights and validate the total mass."""
        if carrier not in (POINTS, ISOMETRIES):
            raise ValueError(f"unknown carrier {carrier!r}")
        keyf = space.key if carrier == POINTS else space.iso_key
        merged: dict = {}
        first: dict = {}
        for x, w in pairs:
            if w < 0:
                raise ValueError("negative weight")
            k = keyf(x)
            if k in merged:
                merged[k] = merged[k] + w
            else:
                merged[k] = w
                first[k] = x
            if len(merged) > ATOM_CAP:
                raise AtomCapExceeded(f"more than {ATOM_CAP} atoms")
        atoms = tuple((first[k], w) for k, w in merged.items() if w > 0)
        if not atoms:
            raise ValueError("measure has no mass")
        m = cls(space, carrier, atoms)
        if check:
            total = m.total()
            if isinstance(total, Fraction):
                if total != 1:
                    raise ValueError(f"weights sum to {total}, not 1")
            elif abs(total - 1.0) > SUM_TOL:
                raise ValueError(f"weights sum to {total!r}, not 1")
        return m

    def __len__(self):
        return len(self.atoms)

    def total(self):
        return sum(w for _, w in self.atoms)

    @property
    def support(self) -> list:
        return [x for x, _ in self.atoms]

    @property
    def weights(self) -> np.ndarray:
        return np.array([float(w) for _, w in self.atoms])

    def key(self, x):
        return self.space.key(x) if self.carrier == POINTS else self.space.iso_key(x)

    def as_dict(self) -> dict:
        return {self.key(x): w for x, w in self.atoms}

    def same_as(self, other: "DiscreteMeasure", tol: float = 0.0) -> bool:
        """Atom-by-atom equality; exact when ``tol`` is 0."""
        if self.carrier != other.carrier or self.space != other.space:
            return False
        a, b = self.as_dict(), other.as_dict()
        if a.keys() != b.keys():
            return False
        return all(abs(a[k] - b[k]) <= tol for k in a)

    def support_indices(self) -> list[int]:
        """Sorted element indices, for finite spaces."""
        return sorted(int(_index(x)) for x in self.support)

    def vector(self) -> np.ndarray:
        """Probability vector over a finite space (floats)."""
        v = np.zeros(self.space.size)
        for x, w in self.atoms:
            v[_index(x)] += float(w)
        return v

    def exact_vector(self) -> list:
        v = [Fraction(0)] * self.space.size
        for x, w in self.atoms:
            v[_index(x)] += w
        return v

    def mass(self, elements: Iterable) -> Real:
        keys = {self.key(x) for x in elements}
        return sum((w for x, w in self.atoms if self.key(x) in keys), 0)

    def to_json(self) -> dict:
        enc = point_to_json if self.carrier == POINTS else isometry_to_json
        return {
            "carrier": self.carrier,
            "atoms": [[enc(self.space, x), str(w) if isinstance(w, Fraction) else w] for x, w in self.atoms],
        }

    @classmethod
    def from_json(cls, space: Space, obj: Mapping) -> "DiscreteMeasure":
        carrier = obj.get("carrier", POINTS)
        dec = point_from_json if carrier == POINTS else isometry_from_json
        return cls.from_atoms(space, carrier, [(dec(space, x), _weight(w)) for x, w in obj["atoms"]])

    def __repr__(self):
        body = ", ".join(f"{x!r}: {w}" for x, w in self.atoms[:6])
        more = ", ..." if len(self.atoms) > 6 else ""
        return f"DiscreteMeasure({self.carrier}, {{{body}{more}}})"


def _index(x):
    if hasattr(x, "element"):
        return x.element
    if hasattr(x, "perm"):
        raise KindMismatch("permutations have no element index")
    return x


def dirac(space: Space, x, carrier: str = POINTS) -> DiscreteMeasure:
    return DiscreteMeasure.from_atoms(space, carrier, [(x, Fraction(1))])


def uniform(space: Space, elements: Sequence, carrier: str = POINTS, exact: bool = True) -> DiscreteMeasure:
    w = Fraction(1, len(elements)) if exact else 1.0 / len(elements)
    return DiscreteMeasure.from_atoms(space, carrier, [(x, w) for x in elements])


def from_vector(space: Space, vec, carrier: str = POINTS) -> DiscreteMeasure:
    """Measure on a finite space from a probability vector (zeros dropped)."""
    elems = range(len(vec))
    if carrier == ISOMETRIES:
        elems = [space.all_isometries()[i] for i in elems]
    return DiscreteMeasure.from_atoms(space, carrier, [(x, w) for x, w in zip(elems, vec) if w != 0])


def pushforward(g, nu: DiscreteMeasure) -> DiscreteMeasure:
    if nu.carrier != POINTS:
        raise KindMismatch("pushforward acts on measures over points")
    sp = nu.space
    return DiscreteMeasure.from_atoms(sp, POINTS, [(sp.apply(g, x), w) for x, w in nu.atoms], check=False)


def convolve(mu: DiscreteMeasure, nu: DiscreteMeasure) -> DiscreteMeasure:
    """Law of ``g x`` (or ``g h``) with ``g ~ mu`` and ``x ~ nu`` independent."""
    if mu.carrier != ISOMETRIES:
        raise KindMismatch("left factor of a convolution must be a measure over isometries")
    if mu.space != nu.space:
        raise KindMismatch("measures live on different spaces")
    sp = mu.space
    if len(mu) * len(nu) > 100 * ATOM_CAP:
        raise AtomCapExceeded("convolution would enumerate too many atom pairs")
    op = sp.apply if nu.carrier == POINTS else sp.compose
    pairs = ((op(g, x), a * b) for g, a in mu.atoms for x, b in nu.atoms)
    return DiscreteMeasure.from_atoms(sp, nu.carrier, pairs)


def convolve_all(measures: Sequence[DiscreteMeasure], nu: DiscreteMeasure) -> DiscreteMeasure:
    """``measures[-1] * ... * measures[0] * nu``."""
    out = nu
    for mu in measures:
        out = convolve(mu, out)
    return out


class PruneResult(NamedTuple):
    measure: DiscreteMeasure
    dropped: Real
    tv_bound: float


def prune(nu: DiscreteMeasure, w_min: Real) -> PruneResult:
    """Drop atoms lighter than ``w_min`` and renormalize.

    ``tv_bound = dropped / (1 - dropped)`` bounds the total-variation change.
    """
    if w_min < 0:
        raise ValueError("w_min must be nonnegative")
    if w_min == 0:
        return PruneResult(nu, 0, 0.0)
    kept = [(x, w) for x, w in nu.atoms if w >= w_min]
    if not kept:
        raise ValueError("all atoms fall below the threshold")
    kept_mass = sum(w for _, w in kept)
    dropped = 1 - kept_mass
    m = DiscreteMeasure.from_atoms(nu.space, nu.carrier, [(x, w / kept_mass) for x, w in kept], check=False)
    return PruneResult(m, dropped, float(dropped) / float(kept_mass))


# ---------------------------------------------------------------------------
# families and schedules

CYCLIC = "cyclic"
IID = "iid"
SCRIPTED = "scripted"


@dataclass(frozen=True, eq=False)
class MeasureFamily:
    """Finite set of step measures plus the rule that picks one at each step.

    ``cyclic`` walks the members in order, ``iid`` draws a member uniformly at
    each step, ``scripted`` follows ``script`` and wraps around at its end.
    """

    members: tuple[DiscreteMeasure, ...]
    schedule: str = CYCLIC
    script: tuple[int, ...] = ()

    def __post_init__(self):
        if not self.members:
            raise ValueError("family needs at least one member")
        sp = self.members[0].space
        for m in self.members:
            if m.carrier != ISOMETRIES:
                raise ValueError("family members must be measures over isometries")
            if m.space != sp:
                raise KindMismatch("family members live on different spaces")
        if self.schedule not in (CYCLIC, IID, SCRIPTED):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.schedule == SCRIPTED:
            if not self.script:
                raise ValueError("scripted schedule needs a script")
            if any(not 0 <= i < len(self.members) for i in self.script):
                raise ValueError("script index out of range")
        object.__setattr__(self, "members", tuple(self.members))
        object.__setattr__(self, "script", tuple(int(i) for i in self.script))

    @property
    def space(self) -> Space:
        return self.members[0].space

    def indices(self, n: int, rng: np.random.Generator | None = None, offset: int = 0) -> list[int]:
        """Member index for steps ``offset+1 .. offset+n``."""
        k = len(self.members)
        if self.schedule == CYCLIC:
            return [(offset + j) % k for j in range(n)]
        if self.schedule == SCRIPTED:
            s = self.script
            return [s[(offset + j) % len(s)] for j in range(n)]
        if rng is None:
            raise ValueError("iid schedule needs a random stream")
        return [int(i) for i in rng.integers(0, k, size=n)]

    def to_json(self) -> dict:
        out = {"members": [m.to_json() for m in self.members], "schedule": self.schedule}
        if self.script:
            out["script"] = list(self.script)
        return out

    @classmethod
    def from_json(cls, space: Space, obj: Mapping) -> "MeasureFamily":
        members = tuple(
            DiscreteMeasure.from_json(space, {"carrier": ISOMETRIES, **m}) for m in obj["members"]
        )
        return cls(members, obj.get("schedule", CYCLIC), tuple(obj.get("script", ())))


# ---------------------------------------------------------------------------
# particles


@dataclass(frozen=True, eq=False)
class ParticleCloud:
    """Equal-weight sample of points; ``particles`` has one row per particle."""

    space: Space
    particles: np.ndarray

    def __post_init__(self):
        if len(self.particles) < 1:
            raise ValueError("cloud needs at least one particle")
        self.particles.setflags(write=False)

    @classmethod
    def at(cls, space: Space, x, n: int) -> "ParticleCloud":
        arr = np.asarray([x] * n)
        return cls(space, arr)

    @property
    def n(self) -> int:
        return len(self.particles)

    def points(self) -> list:
        if self.particles.ndim == 1:
            return [p.item() for p in self.particles]
        return [tuple(float(c) for c in row) for row in self.particles]

    def empirical(self) -> DiscreteMeasure:
        w = 1.0 / self.n
        return DiscreteMeasure.from_atoms(self.space, POINTS, [(p, w) for p in self.points()])

    def histogram(self) -> np.ndarray:
        """Empirical probability vector on a finite space."""
        return np.bincount(self.particles, minlength=self.space.size) / self.n

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for p in self.points():
            w.writerow(p if isinstance(p, tuple) else (p,))
        return buf.getvalue()


def particle_step(cloud: ParticleCloud, mu: DiscreteMeasure, rng: np.random.Generator) -> ParticleCloud:
    """Move every particle by an independent draw from ``mu``."""
    if mu.carrier != ISOMETRIES:
        raise KindMismatch("step measure must be over isometries")
    if mu.space != cloud.space:
        raise KindMismatch("cloud and measure live on different spaces")
    w = mu.weights
    picks = rng.choice(len(mu), size=cloud.n, p=w / w.sum())
    out = np.array(cloud.particles, copy=True)
    for j, (g, _) in enumerate(mu.atoms):
        sel = picks == j
        if sel.any():
            out[sel] = mu.space.apply_many(g, cloud.particles[sel])
    return ParticleCloud(cloud.space, out)

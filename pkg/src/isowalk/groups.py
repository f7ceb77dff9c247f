"""Finite groups given by Cayley tables, and the aperiodicity classification
of step measures (adapted / strictly aperiodic / coset aperiodic).

Elements are integer indices into the table.  ``cayley[i, j]`` is the index of
``g_i g_j``.  Permutation groups built here multiply left to right: ``s t``
means "apply ``s`` first, then ``t``", the usual convention of computational
group theory.  Under it ``(2 3)(1 2 3) = (1 2)``.
"""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

MAX_SUBGROUP_ORDER = 48
MAX_WITNESS_POINTS = 20


class GroupTableError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FiniteGroupTable:
    cayley: np.ndarray
    labels: tuple[str, ...]
    name: str = "G"
    identity: int = field(init=False)
    inverse: np.ndarray = field(init=False)

    def __post_init__(self):
        table = np.asarray(self.cayley, dtype=np.int64)
        if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] == 0:
            raise GroupTableError("Cayley table must be a nonempty square array")
        n = table.shape[0]
        if len(self.labels) != n:
            raise GroupTableError("need one label per element")
        full = np.arange(n)
        for r in range(n):
            if not np.array_equal(np.sort(table[r]), full):
                raise GroupTableError(f"row {r} is not a permutation (not a Latin square)")
            if not np.array_equal(np.sort(table[:, r]), full):
                raise GroupTableError(f"column {r} is not a permutation (not a Latin square)")
        if n <= 24:
            # (ab)c == a(bc) for all triples
            left = table[table[:, :, None], np.arange(n)[None, None, :]]
            right = table[np.arange(n)[:, None, None], table[None, :, :]]
            if not np.array_equal(left, right):
                raise GroupTableError("table is not associative")
        else:
            rng = np.random.default_rng(0)
            a, b, c = rng.integers(0, n, size=(3, 100_000))
            if not np.array_equal(table[table[a, b], c], table[a, table[b, c]]):
                raise GroupTableError("table is not associative")
        ident = [e for e in range(n) if np.array_equal(table[e], full) and np.array_equal(table[:, e], full)]
        if len(ident) != 1:
            raise GroupTableError("table has no two-sided identity")
        e = ident[0]
        inv = np.empty(n, dtype=np.int64)
        for g in range(n):
            (h,) = np.nonzero(table[g] == e)[0]
            if table[h, g] != e:
                raise GroupTableError(f"element {g} has no two-sided inverse")
            inv[g] = h
        table.setflags(write=False)
        inv.setflags(write=False)
        object.__setattr__(self, "cayley", table)
        object.__setattr__(self, "identity", int(e))
        object.__setattr__(self, "inverse", inv)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def order(self) -> int:
        return self.cayley.shape[0]

    def mul(self, g: int, h: int) -> int:
        return int(self.cayley[g, h])

    def inv(self, g: int) -> int:
        return int(self.inverse[g])

    def element(self, label: str | int) -> int:
        """Index of an element given by index or label (spaces are ignored)."""
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.order:
                raise KeyError(label)
            return int(label)
        key = _norm_label(label)
        for i, lab in enumerate(self.labels):
            if _norm_label(lab) == key:
                return i
        raise KeyError(label)

    def elements(self, labels: Iterable[str | int]) -> list[int]:
        return [self.element(x) for x in labels]

    def to_json(self) -> dict:
        return {"name": self.name, "labels": list(self.labels), "cayley": self.cayley.tolist()}

    @classmethod
    def from_json(cls, obj: Mapping) -> "FiniteGroupTable":
        table = obj["cayley"] if "cayley" in obj else obj["table"]
        n = len(table)
        labels = obj.get("labels") or [str(i) for i in range(n)]
        return cls(np.asarray(table), tuple(labels), obj.get("name", "G"))

    def __repr__(self):
        return f"FiniteGroupTable({self.name}, order={self.order})"


def _norm_label(label: str) -> str:
    s = str(label).replace(" ", "").replace(",", "")
    return "id" if s.lower() in ("id", "e", "()") else s


# ---------------------------------------------------------------------------
# built-in groups


def cyclic(n: int) -> FiniteGroupTable:
    if n < 1:
        raise ValueError("n >= 1")
    idx = np.arange(n)
    return FiniteGroupTable((idx[:, None] + idx[None, :]) % n, tuple(str(i) for i in range(n)), f"Z{n}")


def _cycle_label(perm: Sequence[int]) -> str:
    n = len(perm)
    seen = [False] * n
    cycles = []
    for start in range(n):
        if seen[start]:
            continue
        cyc = [start]
        seen[start] = True
        j = perm[start]
        while j != start:
            cyc.append(j)
            seen[j] = True
            j = perm[j]
        if len(cyc) > 1:
            cycles.append("(" + " ".join(str(c + 1) for c in cyc) + ")")
    return "".join(cycles) or "Id"


def permutation_group(perms: Sequence[Sequence[int]], name: str, labels: Sequence[str] | None = None) -> FiniteGroupTable:
    """Group table of a list of permutations of ``range(k)`` closed under products.

    Product ``s t`` applies ``s`` first: ``(s t)(i) = t[s[i]]``.
    """
    perms = [tuple(int(v) for v in p) for p in perms]
    index = {p: i for i, p in enumerate(perms)}
    if len(index) != len(perms):
        raise GroupTableError("duplicate permutations")
    n = len(perms)
    table = np.empty((n, n), dtype=np.int64)
    for i, s in enumerate(perms):
        for j, t in enumerate(perms):
            prod = tuple(t[s[k]] for k in range(len(s)))
            try:
                table[i, j] = index[prod]
            except KeyError:
                raise GroupTableError("permutation list is not closed under products") from None
    if labels is None:
        labels = [_cycle_label(p) for p in perms]
    return FiniteGroupTable(table, tuple(labels), name)


def symmetric(n: int) -> FiniteGroupTable:
    if not 1 <= n <= 5:
        raise ValueError("built-in symmetric groups cover 1 <= n <= 5")
    perms = sorted(itertools.permutations(range(n)))
    return permutation_group(perms, f"S{n}")


def dihedral(n: int) -> FiniteGroupTable:
    """Symmetries of the regular n-gon, order 2n; labels r^k and s r^k."""
    if not 2 <= n <= 12:
        raise ValueError("built-in dihedral groups cover 2 <= n <= 12")
    rots = [tuple((i + k) % n for i in range(n)) for k in range(n)]
    refl = [tuple((k - i) % n for i in range(n)) for k in range(n)]
    labels = [f"r{k}" for k in range(n)] + [f"s{k}" for k in range(n)]
    return permutation_group(rots + refl, f"D{n}", labels)


def klein4() -> FiniteGroupTable:
    t = np.array([[a ^ b for b in range(4)] for a in range(4)])
    return FiniteGroupTable(t, ("e", "a", "b", "ab"), "V4")


def builtin(name: str) -> FiniteGroupTable:
    """``Z<n>``, ``S<n>``, ``D<n>`` or ``V4``."""
    key = name.strip().upper().replace("/", "")
    if key == "V4":
        return klein4()
    kind, num = key[0], key[1:]
    if key.startswith("Z") and key[1:].isdigit():
        return cyclic(int(num))
    if kind == "S" and num.isdigit():
        return symmetric(int(num))
    if kind == "D" and num.isdigit():
        return dihedral(int(num))
    raise KeyError(f"unknown built-in group {name!r}")


def builtin_groups(max_order: int = 12) -> list[FiniteGroupTable]:
    """All built-in groups of order <= max_order, small to large."""
    out = [cyclic(n) for n in range(1, max_order + 1)]
    out += [symmetric(n) for n in range(3, 6) if _fact(n) <= max_order]
    out += [dihedral(n) for n in range(3, 13) if 2 * n <= max_order]
    if max_order >= 4:
        out.append(klein4())
    return sorted(out, key=lambda g: (g.order, g.name))


def _fact(n):
    r = 1
    for k in range(2, n + 1):
        r *= k
    return r


def load_group(path) -> FiniteGroupTable:
    with open(path) as fh:
        return FiniteGroupTable.from_json(json.load(fh))


# ---------------------------------------------------------------------------
# subgroups


@dataclass(frozen=True)
class SubgroupRecord:
    elements: frozenset[int]
    is_normal: bool

    @property
    def order(self) -> int:
        return len(self.elements)


def _closure(G: FiniteGroupTable, gens: Iterable[int]) -> frozenset[int]:
    gens = {int(g) for g in gens}
    members = {G.identity}
    queue = deque([G.identity])
    while queue:
        x = queue.popleft()
        for s in gens:
            y = int(G.cayley[x, s])
            if y not in members:
                members.add(y)
                queue.append(y)
    # finite group: the semigroup generated is a group, inverses come for free
    return frozenset(members)


def is_normal(G: FiniteGroupTable, H: Iterable[int]) -> bool:
    H = frozenset(H)
    for g in range(G.order):
        gi = G.inverse[g]
        for h in H:
            if int(G.cayley[G.cayley[g, h], gi]) not in H:
                return False
    return True


def generated_subgroup(G: FiniteGroupTable, S: Iterable[int]) -> SubgroupRecord:
    S = list(S)
    if not S:
        raise ValueError("generating set must be nonempty")
    H = _closure(G, S)
    return SubgroupRecord(H, is_normal(G, H))


def normal_closure(G: FiniteGroupTable, S: Iterable[int]) -> SubgroupRecord:
    conj = {int(G.cayley[G.cayley[g, s], G.inverse[g]]) for g in range(G.order) for s in S}
    H = _closure(G, conj)
    return SubgroupRecord(H, True)


def all_subgroups(G: FiniteGroupTable) -> list[SubgroupRecord]:
    """Every subgroup, by joining cyclic subgroups until nothing new appears."""
    if G.order > MAX_SUBGROUP_ORDER:
        raise ValueError(f"subgroup enumeration is capped at order {MAX_SUBGROUP_ORDER}")
    found = {_closure(G, [g]) for g in range(G.order)}
    cyclics = list(found)
    frontier = set(found)
    while frontier:
        new = set()
        for H in frontier:
            for C in cyclics:
                if C <= H:
                    continue
                J = _closure(G, H | C)
                if J not in found:
                    new.add(J)
        found |= new
        frontier = new
    return sorted((SubgroupRecord(H, is_normal(G, H)) for H in found), key=lambda r: (r.order, sorted(r.elements)))


def all_subgroups_bruteforce(G: FiniteGroupTable) -> list[frozenset[int]]:
    """Filter the whole power set; a cross-check for small groups only."""
    n = G.order
    if n > 14:
        raise ValueError("power-set enumeration is for n <= 14")
    out = []
    for mask in range(1, 1 << n):
        S = [i for i in range(n) if mask >> i & 1]
        if G.identity not in S:
            continue
        Sset = set(S)
        if all(int(G.cayley[a, b]) in Sset for a in S for b in S):
            out.append(frozenset(S))
    return out


# ---------------------------------------------------------------------------
# classification of step measures


def support_of(mu) -> list[int]:
    """Support indices of a measure given as a probability vector, a mapping or an index list."""
    if isinstance(mu, Mapping):
        return sorted(int(k) for k, w in mu.items() if w > 0)
    if hasattr(mu, "support_indices"):
        return mu.support_indices()
    arr = np.asarray(mu)
    if arr.dtype.kind == "f" or arr.dtype == object:
        return [int(i) for i in np.nonzero(arr > 0)[0]]
    return sorted({int(i) for i in arr})


def quotient_set(G: FiniteGroupTable, supp: Sequence[int]) -> set[int]:
    return {int(G.cayley[G.inverse[g], h]) for g in supp for h in supp}


def is_adapted(G: FiniteGroupTable, mu) -> bool:
    return generated_subgroup(G, support_of(mu)).order == G.order


def is_coset_aperiodic(G: FiniteGroupTable, mu) -> tuple[bool, tuple[int, SubgroupRecord] | None]:
    """``(True, None)`` or ``(False, (g, H))`` with ``supp mu`` inside the coset ``g H``."""
    supp = support_of(mu)
    H0 = generated_subgroup(G, quotient_set(G, supp))
    if H0.order < G.order:
        return False, (supp[0], H0)
    return True, None


def is_strictly_aperiodic(G: FiniteGroupTable, mu) -> tuple[bool, tuple[int, SubgroupRecord] | None]:
    """As :func:`is_coset_aperiodic`, but only normal subgroups may trap the support."""
    supp = support_of(mu)
    N = normal_closure(G, quotient_set(G, supp))
    if N.order < G.order:
        return False, (supp[0], N)
    return True, None


def naive_coset_trap(G: FiniteGroupTable, supp: Sequence[int], normal_only: bool = False):
    """Scan every (proper subgroup, coset) pair; reference for the quotient shortcut."""
    supp = set(supp)
    for H in all_subgroups(G):
        if H.order == G.order or (normal_only and not H.is_normal):
            continue
        for g in range(G.order):
            coset = {int(G.cayley[g, h]) for h in H.elements}
            if supp <= coset:
                return g, H
    return None


def left_shift_permutations(G: FiniteGroupTable, elems: Iterable[int]) -> list[np.ndarray]:
    return [np.asarray(G.cayley[g]) for g in elems]


def deterministic_image_witnesses(
    n_points: int,
    perms: Sequence[Sequence[int]],
    max_subsets: int | None = None,
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """Proper nonempty ``A`` whose image ``B = g(A)`` is the same for every ``g``.

    ``perms`` lists the support as permutations of ``range(n_points)``
    (``perm[x] = g(x)``).  Every subset is scanned; ``max_subsets`` truncates
    the returned list.  An empty result means no deterministic images.
    """
    if n_points > MAX_WITNESS_POINTS:
        raise ValueError(f"exhaustive witness scan is capped at {MAX_WITNESS_POINTS} points")
    if not perms:
        raise ValueError("support must be nonempty")
    masks = np.arange(1, (1 << n_points) - 1, dtype=np.int64)
    images = []
    for p in perms:
        img = np.zeros_like(masks)
        for i in range(n_points):
            img |= ((masks >> i) & 1) << int(p[i])
        images.append(img)
    same = np.ones(masks.shape, dtype=bool)
    for img in images[1:]:
        same &= img == images[0]
    hits = np.nonzero(same)[0]
    if max_subsets is not None:
        hits = hits[:max_subsets]

    def unpack(m):
        return tuple(i for i in range(n_points) if m >> i & 1)

    return [(unpack(int(masks[k])), unpack(int(images[0][k]))) for k in hits]


def group_witnesses(G: FiniteGroupTable, mu, max_subsets: int | None = None):
    """Deterministic-image witnesses for ``mu`` acting on ``G`` by left shifts."""
    return deterministic_image_witnesses(G.order, left_shift_permutations(G, support_of(mu)), max_subsets)

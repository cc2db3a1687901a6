"""Loop-free digraphs on dense integer vertices with bitset adjacency.

Vertex sets are plain Python ints used as bitsets: bit ``v`` is set iff
vertex ``v`` is a member.  All helpers here are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

VertexSet = int


def mask_of(vertices: Iterable[int]) -> VertexSet:
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


def members(mask: VertexSet) -> list[int]:
    """Ascending list of the vertices in ``mask``."""
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def iter_members(mask: VertexSet) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def popcount(mask: VertexSet) -> int:
    return mask.bit_count()


def lowest(mask: VertexSet) -> int:
    """Smallest vertex of a nonempty set."""
    return (mask & -mask).bit_length() - 1


def full_set(n: int) -> VertexSet:
    return (1 << n) - 1


def complement(mask: VertexSet, n: int) -> VertexSet:
    return full_set(n) & ~mask


class Digraph:
    """Immutable loop-free digraph.

    ``out_adj[v]`` and ``in_adj[v]`` are bitsets of out- and in-neighbours.
    """

    __slots__ = ("n", "out_adj", "in_adj")

    def __init__(self, n: int, arcs: Iterable[tuple[int, int]] = ()):
        if n < 0:
            raise ValueError("vertex count must be non-negative")
        out = [0] * n
        inn = [0] * n
        for u, v in arcs:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"arc ({u}, {v}) out of range for n={n}")
            if u == v:
                raise ValueError(f"self-loop at {u} not allowed in a host digraph")
            out[u] |= 1 << v
            inn[v] |= 1 << u
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "out_adj", tuple(out))
        object.__setattr__(self, "in_adj", tuple(inn))

    def __setattr__(self, name, value):
        raise AttributeError("Digraph is immutable")

    @classmethod
    def from_out_rows(cls, rows: Sequence[int]) -> Digraph:
        n = len(rows)
        full = full_set(n)
        arcs = []
        for u, row in enumerate(rows):
            if row & ~full:
                raise ValueError(f"row {u} has bits beyond n={n}")
            arcs.extend((u, v) for v in iter_members(row))
        return cls(n, arcs)

    def __eq__(self, other):
        return isinstance(other, Digraph) and self.n == other.n and self.out_adj == other.out_adj

    def __hash__(self):
        return hash((self.n, self.out_adj))

    def __repr__(self):
        return f"Digraph(n={self.n}, arcs={self.arc_count()})"

    @property
    def vertices(self) -> VertexSet:
        return full_set(self.n)

    def has_arc(self, u: int, v: int) -> bool:
        return bool(self.out_adj[u] >> v & 1)

    def arcs(self) -> list[tuple[int, int]]:
        """All arcs in lexicographic order."""
        return [(u, v) for u in range(self.n) for v in iter_members(self.out_adj[u])]

    def arc_count(self) -> int:
        return sum(row.bit_count() for row in self.out_adj)

    def out_neighbours(self, v: int) -> VertexSet:
        return self.out_adj[v]

    def in_neighbours(self, v: int) -> VertexSet:
        return self.in_adj[v]

    def induced(self, keep: VertexSet) -> tuple[Digraph, list[int]]:
        """Subdigraph induced on ``keep``, relabelled densely.

        Returns the subdigraph and the list mapping new labels to old ones.
        """
        old = members(keep)
        index = {v: i for i, v in enumerate(old)}
        arcs = [
            (index[u], index[v])
            for u in old
            for v in iter_members(self.out_adj[u] & keep)
        ]
        return Digraph(len(old), arcs), old

    def check_invariants(self) -> None:
        full = full_set(self.n)
        for v in range(self.n):
            if self.out_adj[v] >> v & 1:
                raise AssertionError(f"self-loop at {v}")
            if (self.out_adj[v] | self.in_adj[v]) & ~full:
                raise AssertionError(f"row {v} escapes vertex range")
            for u in iter_members(self.out_adj[v]):
                if not self.in_adj[u] >> v & 1:
                    raise AssertionError(f"mirror broken for arc ({v}, {u})")
        if sum(r.bit_count() for r in self.in_adj) != self.arc_count():
            raise AssertionError("in/out arc totals differ")

    def to_json_obj(self) -> dict:
        return {"n": self.n, "arcs": [list(a) for a in self.arcs()]}

    @classmethod
    def from_json_obj(cls, obj: dict) -> Digraph:
        if not isinstance(obj, dict) or "n" not in obj or "arcs" not in obj:
            raise ValueError("digraph JSON needs keys 'n' and 'arcs'")
        n = obj["n"]
        if not isinstance(n, int) or isinstance(n, bool):
            raise ValueError("'n' must be an integer")
        arcs = []
        for a in obj["arcs"]:
            if not (isinstance(a, (list, tuple)) and len(a) == 2 and all(isinstance(x, int) for x in a)):
                raise ValueError(f"malformed arc {a!r}")
            arcs.append((a[0], a[1]))
        return cls(n, arcs)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    def to_dot(self, name: str = "D") -> str:
        lines = [f"digraph {name} {{"]
        lines.extend(f"  {v};" for v in range(self.n))
        lines.extend(f"  {u} -> {v};" for u, v in self.arcs())
        lines.append("}")
        return "\n".join(lines) + "\n"


def degrees(D: Digraph, v: int) -> tuple[int, int]:
    """Out- and in-degree of ``v``."""
    if not 0 <= v < D.n:
        raise IndexError(f"vertex {v} out of range for n={D.n}")
    return D.out_adj[v].bit_count(), D.in_adj[v].bit_count()


def min_semi_degree(D: Digraph) -> int:
    if D.n < 1:
        raise ValueError("empty digraph has no semi-degree")
    return min(min(o.bit_count(), i.bit_count()) for o, i in zip(D.out_adj, D.in_adj))


def strong_neighbourhood(D: Digraph, v: int) -> VertexSet:
    """Vertices joined to ``v`` by arcs in both directions."""
    return D.out_adj[v] & D.in_adj[v]


def arcs_between(D: Digraph, X: VertexSet, Y: VertexSet) -> int:
    """Number of arcs with tail in X and head in Y (X, Y may overlap)."""
    return sum((D.out_adj[x] & Y).bit_count() for x in iter_members(X))


@dataclass(frozen=True)
class Path:
    """A vertex sequence; with ``is_cycle`` the closing arc last->first is implied."""

    verts: tuple[int, ...]
    is_cycle: bool = False

    def __post_init__(self):
        object.__setattr__(self, "verts", tuple(self.verts))

    def __len__(self):
        return len(self.verts)

    @property
    def arc_length(self) -> int:
        return len(self.verts) if self.is_cycle else len(self.verts) - 1

    @property
    def first(self) -> int:
        return self.verts[0]

    @property
    def last(self) -> int:
        return self.verts[-1]

    def vertex_set(self) -> VertexSet:
        return mask_of(self.verts)

    def arcs(self) -> list[tuple[int, int]]:
        pairs = list(zip(self.verts, self.verts[1:]))
        if self.is_cycle and self.verts:
            pairs.append((self.verts[-1], self.verts[0]))
        return pairs

    def problems(self, D: Digraph) -> list[str]:
        """Reasons this sequence is not a valid path (or cycle) of ``D``."""
        errs = []
        if not self.verts:
            return ["empty vertex sequence"]
        if any(not 0 <= v < D.n for v in self.verts):
            return ["vertex out of range"]
        if len(set(self.verts)) != len(self.verts):
            errs.append("repeated vertex")
        if self.is_cycle and len(self.verts) < 2:
            errs.append("cycle needs at least two vertices")
        for u, v in self.arcs():
            if not D.has_arc(u, v):
                errs.append(f"missing arc ({u}, {v})")
        return errs

    def is_valid_in(self, D: Digraph) -> bool:
        return not self.problems(D)

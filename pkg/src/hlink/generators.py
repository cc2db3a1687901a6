"""Constructions: complete digraphs, the three tightness families, seeded
random digraphs with a semi-degree floor, and the undirected double cover."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .digraph import Digraph, iter_members, mask_of
from .linkage import Instance, Pattern


def gen_complete(n: int) -> Digraph:
    if n < 1:
        raise ValueError("n must be at least 1")
    return Digraph(n, ((u, v) for u in range(n) for v in range(n) if u != v))


def _clique_arcs(vs: list[int]) -> list[tuple[int, int]]:
    return [(u, v) for u in vs for v in vs if u != v]


def gen_remark1(n: int) -> tuple[Digraph, int]:
    """K_{n-1} on vertices 1..n-1 plus vertex 0 sending an arc to everything.

    Vertex 0 has no in-arcs, so nothing can ever route into it.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    arcs = _clique_arcs(list(range(1, n)))
    arcs += [(0, v) for v in range(1, n)]
    return Digraph(n, arcs), 0


@dataclass(frozen=True)
class Remark2:
    D: Digraph
    xs: tuple[int, ...]
    ys: tuple[int, ...]
    q1_private: tuple[int, ...]
    q2_private: tuple[int, ...]

    def matching_pattern(self) -> tuple[Pattern, tuple[int, ...]]:
        """Pattern of k disjoint arcs x_i -> y_i and its terminal map."""
        k = len(self.xs)
        H = Pattern(2 * k, tuple((2 * i, 2 * i + 1) for i in range(k)))
        f = tuple(v for i in range(k) for v in (self.xs[i], self.ys[i]))
        return H, f


def gen_remark2(n: int, k: int) -> Remark2:
    """Two complete digraphs of order n/2+k sharing exactly 2k vertices.

    Shared vertices are 0..2k-1 (x_1..x_k then y_1..y_k), followed by the
    vertices private to the first clique and then those private to the second.
    """
    if k < 1 or n % 2 or n // 2 + k < 2 * k + 1:
        raise ValueError("need n even, k >= 1 and n/2 + k >= 2k + 1")
    half = n // 2 + k
    shared = list(range(2 * k))
    p1 = list(range(2 * k, half))
    p2 = list(range(half, n))
    if len(p2) != half - 2 * k:
        raise ValueError("inconsistent Remark-2 sizes")
    arcs = _clique_arcs(shared + p1) + _clique_arcs(shared + p2)
    D = Digraph(n, set(arcs))
    return Remark2(D, tuple(range(k)), tuple(range(k, 2 * k)), tuple(p1), tuple(p2))


def remark3_blocks(n: int, k: int) -> int:
    """Number of blocks l for a legal (n, k), or raise ValueError."""
    if k < 5:
        raise ValueError("the construction needs k >= 5")
    num = n + 3 * k - 1
    den = 2 * (3 * k - 2)
    if num % den or num // den < 2 or (n - 3 * k + 1) % 2 or n - 3 * k + 1 < 0:
        raise ValueError(f"(n={n}, k={k}) violates the divisibility constraint")
    return num // den


def gen_remark3(n: int, k: int) -> Digraph:
    """Join of (n-3k+1)/2 isolated vertices with l disjoint complete blocks of order 3k-2.

    Join vertices come first (0..m-1), then the blocks in order.
    """
    l = remark3_blocks(n, k)
    m = (n - 3 * k + 1) // 2
    b = 3 * k - 2
    if m + l * b != n:
        raise ValueError(f"(n={n}, k={k}) does not add up")
    arcs: list[tuple[int, int]] = []
    join = range(m)
    for j in range(l):
        block = list(range(m + j * b, m + (j + 1) * b))
        arcs += _clique_arcs(block)
        for x in join:
            for y in block:
                arcs += [(x, y), (y, x)]
    return Digraph(n, arcs)


def gen_random_floor(n: int, floor: int, seed: int, density: float = 0.5) -> Digraph:
    """Random digraph with each arc present with probability ``density``,
    then repaired until the minimum semi-degree is at least ``floor``.

    Repair visits deficient vertices in ascending order and adds the
    lexicographically first missing arc until the vertex is fixed.
    """
    if not 0 <= floor <= max(n - 1, 0):
        raise ValueError("floor must lie in [0, n-1]")
    rng = np.random.default_rng(seed)
    draws = rng.random((n, n))
    out = [0] * n
    inn = [0] * n
    for u in range(n):
        for v in range(n):
            if u != v and draws[u, v] < density:
                out[u] |= 1 << v
                inn[v] |= 1 << u
    changed = True
    while changed:
        changed = False
        for v in range(n):
            while out[v].bit_count() < floor:
                w = next(w for w in range(n) if w != v and not out[v] >> w & 1)
                out[v] |= 1 << w
                inn[w] |= 1 << v
                changed = True
            while inn[v].bit_count() < floor:
                w = next(w for w in range(n) if w != v and not inn[v] >> w & 1)
                out[w] |= 1 << v
                inn[v] |= 1 << w
                changed = True
    return Digraph.from_out_rows(out)


def double_cover(edges: Iterable[tuple[int, int]], n: int) -> Digraph:
    """Replace each undirected edge by two opposite arcs."""
    arcs = set()
    for u, v in edges:
        if u == v:
            raise ValueError("simple graphs only")
        arcs.add((u, v))
        arcs.add((v, u))
    return Digraph(n, sorted(arcs))


def petersen_edges() -> list[tuple[int, int]]:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return outer + spokes + inner


def blowup_ec1(sizes: tuple[int, int, int, int]) -> tuple[Digraph, list[int]]:
    """One-way cyclic blow-up W1->W2->W3->W4->W1 with W1, W3 complete inside
    and W2, W4 joined by arcs in both directions.

    Returns the digraph and the four vertex sets as bitmasks.
    """
    starts = [sum(sizes[:i]) for i in range(4)]
    parts = [list(range(starts[i], starts[i] + sizes[i])) for i in range(4)]
    arcs: list[tuple[int, int]] = []
    for i in range(4):
        arcs += [(u, v) for u in parts[i] for v in parts[(i + 1) % 4]]
    arcs += _clique_arcs(parts[0]) + _clique_arcs(parts[2])
    arcs += [(u, v) for u in parts[3] for v in parts[1]]
    arcs += [(u, v) for u in parts[1] for v in parts[3]]
    D = Digraph(sum(sizes), set(arcs))
    return D, [mask_of(p) for p in parts]


def random_instance(
    D: Digraph,
    k: int,
    seed: int,
    min_length: int = 4,
    alpha: float = 0.1,
    beta: float = 0.1,
) -> Instance:
    """A spanning-feasible instance with k disjoint pattern arcs on random
    terminals and a random length split with every length >= ``min_length``."""
    n = D.n
    rng = np.random.default_rng(seed)
    internal = n - 2 * k
    if internal < k * (min_length - 1):
        raise ValueError("host too small for the requested lengths")
    terms = [int(x) for x in rng.permutation(n)[: 2 * k]]
    spare = internal - k * (min_length - 1)
    cuts = sorted(int(x) for x in rng.integers(0, spare + 1, size=k - 1))
    parts = [b - a for a, b in zip([0] + cuts, cuts + [spare])]
    lengths = tuple(min_length + p for p in parts)
    H = Pattern(2 * k, tuple((2 * i, 2 * i + 1) for i in range(k)))
    return Instance(D, H, tuple(terms), lengths, alpha, beta)


def components_without(D: Digraph, removed: int) -> int:
    """Weakly connected components of D minus the vertex set ``removed``."""
    left = D.vertices & ~removed
    count = 0
    while left:
        frontier = left & -left
        seen = frontier
        while frontier:
            nxt = 0
            for v in iter_members(frontier):
                nxt |= D.out_adj[v] | D.in_adj[v]
            frontier = nxt & left & ~seen
            seen |= frontier
        left &= ~seen
        count += 1
    return count

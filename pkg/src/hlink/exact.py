"""Exact algorithms for small hosts: the subdivision search, Hamiltonian
paths, longest paths and bipartite matching."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .digraph import Digraph, Path, VertexSet, full_set, iter_members
from .linkage import Instance, Subdivision, branch_vertices, validate_instance

DEFAULT_EXACT_CAP = 16
HAMILTON_CAP = 22


@dataclass(frozen=True)
class SearchBudget:
    node_limit: int = 20_000_000
    time_limit: float = 120.0
    policy: str = "fail"  # or "report-partial"

    def __post_init__(self):
        if self.node_limit <= 0 or self.time_limit <= 0:
            raise ValueError("budget limits must be positive")
        if self.policy not in ("fail", "report-partial"):
            raise ValueError(f"unknown budget policy {self.policy!r}")


@dataclass(frozen=True)
class Infeasible:
    reason: str
    nodes: int = 0


@dataclass(frozen=True)
class BudgetExhausted:
    nodes: int
    partial: tuple[Path, ...] = ()


class BudgetExceeded(Exception):
    def __init__(self, nodes: int):
        super().__init__(f"search budget exhausted after {nodes} nodes")
        self.nodes = nodes


@dataclass(frozen=True)
class RouteDemand:
    """One route to be threaded: ``start`` to ``end`` with ``length`` arcs.

    For a cycle ``end == start`` and the closing arc counts toward length.
    """

    start: int
    end: int
    length: int
    is_cycle: bool = False


def _distance_at_most(D: Digraph, src: int, dst: int, free: VertexSet, limit: int) -> bool:
    """Is there a src->dst walk of at most ``limit`` arcs whose inner vertices lie in ``free``?"""
    out = D.out_adj
    reach = out[src]
    d = 1
    seen = 0
    while True:
        if reach >> dst & 1:
            return True
        if d >= limit:
            return False
        frontier = reach & free & ~seen
        if not frontier:
            return False
        seen |= frontier
        reach = 0
        for v in iter_members(frontier):
            reach |= out[v]
        d += 1


def _closure(adj: Sequence[int], src_mask: VertexSet, within: VertexSet) -> VertexSet:
    """Vertices of ``within`` reachable from ``src_mask`` using only ``within``."""
    reach = 0
    for v in iter_members(src_mask):
        reach |= adj[v]
    reach &= within
    frontier = reach
    while frontier:
        nxt = 0
        for v in iter_members(frontier):
            nxt |= adj[v]
        frontier = nxt & within & ~reach
        reach |= frontier
    return reach


class _LinkageSearch:
    """Backtracking over routes in order, one vertex at a time, with a
    failure memo keyed by (route, current vertex, free set).  The memo is
    sound because that triple determines the entire remaining subproblem."""

    def __init__(self, D: Digraph, free: VertexSet, demands: Sequence[RouteDemand], budget: SearchBudget):
        self.D = D
        self.free0 = free
        self.demands = list(demands)
        self.budget = budget
        self.nodes = 0
        self.deadline = time.monotonic() + budget.time_limit
        self.failed: set[tuple[int, int, int]] = set()
        self.stack: list[list[int]] = []
        self.best_partial: tuple[Path, ...] = ()
        self.best_depth = -1

    def run(self) -> list[list[int]] | None:
        if not self.demands:
            return [] if self.free0 == 0 else None
        d0 = self.demands[0]
        self.stack = [[d0.start]]
        if self._route(0, d0.start, 0, self.free0):
            return self.stack
        return None

    def _tick(self):
        self.nodes += 1
        if self.nodes > self.budget.node_limit or (
            self.nodes & 1023 == 0 and time.monotonic() > self.deadline
        ):
            raise BudgetExceeded(self.nodes)

    def _snapshot(self):
        depth = sum(len(r) for r in self.stack)
        if depth > self.best_depth:
            self.best_depth = depth
            self.best_partial = tuple(Path(tuple(r)) for r in self.stack)

    def _future_ok(self, r: int, free: VertexSet) -> bool:
        out = self.D.out_adj
        for d in self.demands[r + 1:]:
            if d.length == 1:
                if not out[d.start] >> d.end & 1:
                    return False
            elif not out[d.start] & free or not self.D.in_adj[d.end] & free:
                return False
        return True

    def _route(self, r: int, cur: int, steps: int, free: VertexSet) -> bool:
        self._tick()
        if self.budget.policy == "report-partial":
            self._snapshot()
        dem = self.demands[r]
        rem = dem.length - steps
        D = self.D
        if rem == 1:
            if not D.out_adj[cur] >> dem.end & 1:
                return False
            if r + 1 == len(self.demands):
                return free == 0
            nxt = self.demands[r + 1]
            self.stack.append([nxt.start])
            if self._route(r + 1, nxt.start, 0, free):
                return True
            self.stack.pop()
            return False
        key = (r, cur, free)
        if key in self.failed:
            return False
        if rem - 1 > free.bit_count() or not _distance_at_most(D, cur, dem.end, free, rem):
            self.failed.add(key)
            return False
        last = r + 1 == len(self.demands)
        if last:
            # the final route must sweep every free vertex
            if rem - 1 != free.bit_count():
                self.failed.add(key)
                return False
            if _closure(D.out_adj, 1 << cur, free) != free:
                self.failed.add(key)
                return False
            if _closure(D.in_adj, 1 << dem.end, free) != free:
                self.failed.add(key)
                return False
        elif steps == 0 and not self._future_ok(r, free):
            self.failed.add(key)
            return False
        route = self.stack[-1]
        for v in iter_members(D.out_adj[cur] & free):
            route.append(v)
            if self._route(r, v, steps + 1, free & ~(1 << v)):
                return True
            route.pop()
        self.failed.add(key)
        return False


def solve_demands(
    D: Digraph,
    free: VertexSet,
    demands: Sequence[RouteDemand],
    budget: SearchBudget | None = None,
) -> list[Path] | Infeasible | BudgetExhausted:
    """Thread all demanded routes so their inner vertices partition ``free``."""
    budget = budget or SearchBudget()
    need = sum(d.length - 1 for d in demands)
    if need != free.bit_count():
        return Infeasible(f"routes need {need} inner vertices but {free.bit_count()} are free")
    search = _LinkageSearch(D, free, demands, budget)
    try:
        found = search.run()
    except BudgetExceeded as exc:
        return BudgetExhausted(exc.nodes, search.best_partial)
    if found is None:
        return Infeasible("search space exhausted", search.nodes)
    paths = []
    for d, verts in zip(demands, found):
        if d.is_cycle:
            paths.append(Path(tuple(verts), True))
        else:
            paths.append(Path(tuple(verts) + (d.end,)))
    return paths


def exact_solve(
    inst: Instance,
    budget: SearchBudget | None = None,
    cap: int = DEFAULT_EXACT_CAP,
) -> Subdivision | Infeasible | BudgetExhausted:
    """Complete search for a spanning subdivision of ``inst``.

    Routes are built in pattern-arc order, candidates tried in ascending
    vertex order.  ``Infeasible`` is only returned after the search space is
    exhausted (or when counting alone rules the instance out).
    """
    if inst.n > cap:
        raise ValueError(f"exact search is capped at n={cap}, got n={inst.n}")
    rep = validate_instance(inst)
    hard = [v for v in rep.violations if "alpha" not in v]
    if hard:
        return Infeasible("; ".join(hard))
    demands = []
    for i in range(inst.k):
        s, t = inst.terminals(i)
        demands.append(RouteDemand(s, t, inst.lengths[i], inst.H.is_loop(i)))
    free = full_set(inst.n) & ~branch_vertices(inst)
    res = solve_demands(inst.D, free, demands, budget)
    if isinstance(res, list):
        return Subdivision(tuple(res))
    return res


class _HamSearch:
    def __init__(self, D: Digraph, within: VertexSet, end_mask: VertexSet, node_limit: int | None):
        self.D = D
        self.within = within
        self.end_mask = end_mask
        self.node_limit = node_limit
        self.nodes = 0
        self.failed: set[tuple[int, int]] = set()

    def extend(self, path: list[int], left: VertexSet) -> bool:
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise BudgetExceeded(self.nodes)
        cur = path[-1]
        if not left:
            return bool(self.end_mask >> cur & 1)
        key = (left, cur)
        if key in self.failed:
            return False
        D = self.D
        if _closure(D.out_adj, 1 << cur, left) != left:
            self.failed.add(key)
            return False
        ends = self.end_mask & left
        if not ends or _closure(D.in_adj, ends, left) | ends != left:
            self.failed.add(key)
            return False
        for v in iter_members(D.out_adj[cur] & left):
            path.append(v)
            if self.extend(path, left & ~(1 << v)):
                return True
            path.pop()
        self.failed.add(key)
        return False


def hamiltonian_path(
    D: Digraph,
    s: int | None = None,
    t: int | None = None,
    within: VertexSet | None = None,
    starts: VertexSet | None = None,
    ends: VertexSet | None = None,
    node_limit: int | None = None,
) -> Path | None:
    """Hamiltonian path of D[within] from ``s`` to ``t`` (either may be None for any).

    Depth-first search over (visited set, endpoint) states with a failure
    memo, i.e. the subset dynamic program explored lazily.  ``None`` is a
    proof that no such path exists.  ``starts``/``ends`` generalise ``s``/``t``
    to sets.  Raises ``BudgetExceeded`` when ``node_limit`` is hit.
    """
    within = full_set(D.n) if within is None else within
    size = within.bit_count()
    if size > HAMILTON_CAP:
        raise ValueError(f"exact Hamiltonian search is capped at {HAMILTON_CAP} vertices")
    if size == 0:
        return None
    start_mask = within if starts is None else starts & within
    end_mask = within if ends is None else ends & within
    if s is not None:
        start_mask &= 1 << s
    if t is not None:
        end_mask &= 1 << t
    search = _HamSearch(D, within, end_mask, node_limit)
    for v in iter_members(start_mask):
        path = [v]
        if search.extend(path, within & ~(1 << v)):
            return Path(tuple(path))
    return None


def longest_path(D: Digraph, s: int, t: int) -> int | None:
    """Maximum arc-length of a simple s->t path, or None if t is unreachable."""
    if D.n > HAMILTON_CAP:
        raise ValueError(f"longest-path search is capped at n={HAMILTON_CAP}")
    if s == t:
        return 0
    everything = full_set(D.n)
    if not _closure(D.out_adj, 1 << s, everything) >> t & 1:
        return None
    memo: dict[tuple[int, int], int] = {}
    neg = -1

    def best(cur: int, used: VertexSet) -> int:
        # longest cur->t continuation avoiding ``used``; -1 when impossible
        key = (used, cur)
        if key in memo:
            return memo[key]
        left = everything & ~used
        top = neg
        if D.out_adj[cur] >> t & 1:
            top = 1
        room = left & ~(1 << t)
        for v in iter_members(D.out_adj[cur] & room):
            sub = best(v, used | 1 << v)
            if sub >= 0 and sub + 1 > top:
                top = sub + 1
                if top == left.bit_count():
                    break
        memo[key] = top
        return top

    result = best(s, 1 << s)
    return result if result >= 0 else None


def shortest_path_length(D: Digraph, s: int, t: int) -> int | None:
    if s == t:
        return 0
    dist = 0
    seen = 1 << s
    frontier = 1 << s
    while frontier:
        dist += 1
        nxt = 0
        for v in iter_members(frontier):
            nxt |= D.out_adj[v]
        if nxt >> t & 1:
            return dist
        frontier = nxt & ~seen
        seen |= frontier
    return None


@dataclass(frozen=True)
class MatchingProblem:
    left: int
    right: int
    adj: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "adj", tuple(self.adj))
        if len(self.adj) != self.left:
            raise ValueError("need one adjacency row per left vertex")
        if any(row >> self.right for row in self.adj):
            raise ValueError("adjacency exceeds the right side")


@dataclass
class MatchingResult:
    pairs: list[tuple[int, int]]
    saturated: bool
    hall_violator: VertexSet = 0
    cover: tuple[VertexSet, VertexSet] = (0, 0)
    right_of: dict[int, int] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.pairs)


def max_bipartite_matching(p: MatchingProblem) -> MatchingResult:
    """Maximum matching by repeated augmenting-path search (Kuhn).

    When the left side is not saturated, ``hall_violator`` is a set of left
    vertices with fewer neighbours than members.  ``cover`` is a minimum
    vertex cover (left mask, right mask) built from the alternating forest.
    """
    match_right = [-1] * p.right
    match_left = [-1] * p.left

    def augment(u: int, seen: list[int]) -> bool:
        row = p.adj[u] & ~seen[0]
        for r in iter_members(row):
            seen[0] |= 1 << r
            if match_right[r] < 0 or augment(match_right[r], seen):
                match_right[r] = u
                match_left[u] = r
                return True
        return False

    for u in range(p.left):
        augment(u, [0])

    # alternating reachability from unmatched left vertices
    z_left = 0
    z_right = 0
    frontier = [u for u in range(p.left) if match_left[u] < 0]
    for u in frontier:
        z_left |= 1 << u
    while frontier:
        nxt = []
        for u in frontier:
            for r in iter_members(p.adj[u] & ~z_right):
                z_right |= 1 << r
                w = match_right[r]
                if w >= 0 and not z_left >> w & 1:
                    z_left |= 1 << w
                    nxt.append(w)
        frontier = nxt
    pairs = sorted((u, r) for u, r in enumerate(match_left) if r >= 0)
    saturated = len(pairs) == p.left
    all_left = (1 << p.left) - 1
    return MatchingResult(
        pairs=pairs,
        saturated=saturated,
        hall_violator=0 if saturated else z_left,
        cover=(all_left & ~z_left, z_right),
        right_of={u: r for u, r in pairs},
    )


def neighbourhood(p: MatchingProblem, left_set: VertexSet) -> VertexSet:
    out = 0
    for u in iter_members(left_set):
        out |= p.adj[u]
    return out


__all__ = [
    "BudgetExhausted",
    "BudgetExceeded",
    "Infeasible",
    "MatchingProblem",
    "MatchingResult",
    "RouteDemand",
    "SearchBudget",
    "exact_solve",
    "hamiltonian_path",
    "longest_path",
    "max_bipartite_matching",
    "neighbourhood",
    "shortest_path_length",
    "solve_demands",
]

"""Best-effort solver for digraphs with the four-part extremal structure.

The host is reduced to a few clusters: nearly complete blocks and nearly
complete bipartite pairs.  Every route becomes an itinerary of fixed pieces
(terminals, leftover vertices, cluster-crossing arcs) separated by gaps that
are filled inside one cluster.  Gap sizes are chosen by a small dynamic
program; each cluster is then filled by the matching-based alternating-path
embedding.  Nothing is returned unless the verifier accepts it.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .digraph import Digraph, Path, VertexSet, full_set, iter_members, mask_of, members
from .exact import MatchingProblem, max_bipartite_matching
from .linkage import Instance, Subdivision, branch_vertices, verify_subdivision
from .structure import (
    CASE_HUGE,
    CASE_MIDDLE,
    CASE_TINY,
    ExtremalPartition,
    at_most,
    type_thresholds,
    type_vertices,
)


class MatchingUnsaturated(Exception):
    def __init__(self, msg: str, hall_violator: list[tuple[int, int]]):
        super().__init__(msg)
        self.hall_violator = hall_violator


@dataclass(frozen=True)
class Fallback:
    reason: str
    trace: dict = field(default_factory=dict, compare=False)


@dataclass
class EmbedTask:
    A: VertexSet
    B: VertexSet
    counts: list[int]
    x_anchors: list[int]
    y_anchors: list[int]
    eta: float = 0.1

    def check(self) -> None:
        a = self.A.bit_count()
        k = len(self.counts)
        if self.A & self.B or self.B.bit_count() != a:
            raise ValueError("sides must be disjoint and of equal size")
        if sum(self.counts) != a or any(c < 1 for c in self.counts):
            raise ValueError("counts must be positive and sum to the side size")
        if len(self.x_anchors) != k or len(self.y_anchors) != k:
            raise ValueError("one anchor pair per path")
        if len(set(self.x_anchors)) != k or len(set(self.y_anchors)) != k:
            raise ValueError("anchors must be distinct")
        if any(not self.A >> x & 1 for x in self.x_anchors) or any(not self.B >> y & 1 for y in self.y_anchors):
            raise ValueError("anchors must lie on their sides")


def prop_degree_ok(task: EmbedTask, D: Digraph) -> bool:
    """Every vertex sees at least (1 - eta)a vertices of the other side in both directions."""
    a = task.A.bit_count()
    need = (1 - task.eta) * a
    for own, other in ((task.A, task.B), (task.B, task.A)):
        for u in iter_members(own):
            if min((D.out_adj[u] & other).bit_count(), (D.in_adj[u] & other).bit_count()) < need:
                return False
    return True


def prop_embed(task: EmbedTask, D: Digraph, seed: int = 0, attempts: int = 8) -> list[Path]:
    """Disjoint alternating A-B paths, path j running x_j -> ... -> y_j with
    counts[j] vertices on each side, together using all of A and B.

    The A-vertices of each path are fixed first (its last one an
    in-neighbour of y_j); then every consecutive A-pair is a slot that needs
    a B-vertex b with first -> b -> second, and a saturating matching of
    slots to the unanchored B-vertices finishes the job.  Several orderings
    of the free A-vertices are tried before giving up with a Hall violator.
    """
    task.check()
    k = len(task.counts)
    xs, ys = task.x_anchors, task.y_anchors
    free_a = task.A & ~mask_of(xs)
    b_free = members(task.B & ~mask_of(ys))
    b_index = {b: i for i, b in enumerate(b_free)}

    for j in range(k):
        if task.counts[j] == 1 and not D.has_arc(xs[j], ys[j]):
            raise MatchingUnsaturated(f"path {j} needs the arc {xs[j]}->{ys[j]}", [(j, 0)])
    # choose the last A-vertex of each longer path
    needs_last = [j for j in range(k) if task.counts[j] >= 2]
    pool = members(free_a)
    pos = {v: i for i, v in enumerate(pool)}
    rows = [sum(1 << pos[v] for v in iter_members(D.in_adj[ys[j]] & free_a)) for j in needs_last]
    res = max_bipartite_matching(MatchingProblem(len(needs_last), len(pool), tuple(rows)))
    if not res.saturated:
        bad = [needs_last[i] for i in iter_members(res.hall_violator)]
        raise MatchingUnsaturated("too few in-neighbours of the end anchors", [(j, -1) for j in bad])
    last = {needs_last[i]: pool[r] for i, r in res.pairs}
    middle = [v for v in pool if v not in last.values()]

    rng = np.random.default_rng(seed)
    violator: list[tuple[int, int]] = []
    for attempt in range(attempts):
        order = list(middle) if attempt == 0 else [middle[i] for i in rng.permutation(len(middle))]
        chains = []
        it = iter(order)
        for j in range(k):
            c = task.counts[j]
            chain = [xs[j]]
            if c >= 2:
                chain += [next(it) for _ in range(c - 2)] + [last[j]]
            chains.append(chain)
        slots = [(j, i) for j in range(k) for i in range(len(chains[j]) - 1)]
        rows = []
        for j, i in slots:
            hit = D.out_adj[chains[j][i]] & D.in_adj[chains[j][i + 1]]
            rows.append(sum(1 << b_index[b] for b in iter_members(hit) if b in b_index))
        res = max_bipartite_matching(MatchingProblem(len(slots), len(b_free), tuple(rows)))
        if res.saturated:
            fill = {slots[s]: b_free[r] for s, r in res.pairs}
            paths = []
            for j in range(k):
                verts = []
                for i, x in enumerate(chains[j]):
                    verts.append(x)
                    if i + 1 < len(chains[j]):
                        verts.append(fill[(j, i)])
                verts.append(ys[j])
                paths.append(Path(tuple(verts)))
            return paths
        violator = [slots[s] for s in iter_members(res.hall_violator)]
    raise MatchingUnsaturated("auxiliary matching is not saturating", violator)


@dataclass(frozen=True)
class ExtremalParams:
    eps: float = 0.2
    eps1: float = 0.1
    eta: float = 0.1
    seed: int = 0
    attempts: int = 8
    combo_limit: int = 32
    time_limit: float = 20.0


@dataclass
class Cluster:
    """A nearly complete block (``Y == 0``) or a nearly complete bipartite pair (X, Y)."""

    X: VertexSet
    Y: VertexSet = 0
    bipartite: bool = False

    @property
    def verts(self) -> VertexSet:
        return self.X | self.Y


@dataclass
class RoutePlan:
    pieces: list[tuple[int, ...]]
    gaps: list[int]  # cluster index per gap, -1 for a gap that must stay empty
    cycle: bool = False


class _Abort(Exception):
    pass


@dataclass
class CasePlan:
    """Refined vertex sets and the fixed pieces staged so far.

    Pieces may share branch vertices only; ``stage`` enforces this on every
    addition so the staged set is internally disjoint at all times.
    """

    case: str
    sets: dict[str, VertexSet]
    branch: VertexSet
    staged: list[tuple[int, ...]] = field(default_factory=list)
    assignments: list[tuple[int, int]] = field(default_factory=list)
    _seen: VertexSet = 0

    def stage(self, piece: tuple[int, ...]) -> None:
        inner = mask_of(piece) & ~self.branch
        if inner & self._seen or len(set(piece)) != len(piece):
            raise _Abort(f"staged piece {piece} overlaps earlier pieces")
        self._seen |= inner
        self.staged.append(tuple(piece))

    def to_json_obj(self) -> dict:
        return {
            "case": self.case,
            "sets": {k: members(v) for k, v in self.sets.items()},
            "assignments": [list(a) for a in self.assignments],
            "staged": [list(p) for p in self.staged],
        }


def _pick_best(mask: VertexSet, score) -> int | None:
    best = None
    for v in iter_members(mask):
        s = score(v)
        if best is None or s > best[0]:
            best = (s, v)
    return None if best is None else best[1]


class _Planner:
    """Itinerary planning, gap sizing and cluster filling for one attempt."""

    def __init__(self, inst: Instance, clusters: list[Cluster], leftovers: VertexSet, params: ExtremalParams, trace: dict):
        self.inst = inst
        self.D = inst.D
        self.clusters = clusters
        self.leftovers = leftovers
        self.params = params
        self.trace = trace
        self.deadline = time.monotonic() + params.time_limit

    # cluster graph ---------------------------------------------------------

    def _free(self, used: VertexSet) -> list[VertexSet]:
        return [c.verts & ~used for c in self.clusters]

    def _crossing_graph(self, free: list[VertexSet]) -> dict[int, list[int]]:
        g = {}
        for a, fa in enumerate(free):
            outs = 0
            for x in iter_members(fa):
                outs |= self.D.out_adj[x]
            g[a] = [b for b, fb in enumerate(free) if b != a and outs & fb]
        return g

    def _cluster_route(self, graph, a: int, b: int) -> list[int]:
        if a == b:
            return [a]
        prev = {a: None}
        q = deque([a])
        while q:
            u = q.popleft()
            for w in graph[u]:
                if w not in prev:
                    prev[w] = u
                    q.append(w)
        if b not in prev:
            raise _Abort(f"cluster {b} unreachable from cluster {a}")
        out = [b]
        while out[-1] != a:
            out.append(prev[out[-1]])
        return out[::-1]

    def _cross_arc(self, a: int, b: int, used: VertexSet) -> tuple[int, int]:
        D = self.D
        fa = self.clusters[a].verts & ~used
        fb = self.clusters[b].verts & ~used
        x = _pick_best(
            sum(1 << v for v in iter_members(fa) if D.out_adj[v] & fb),
            lambda v: (D.in_adj[v] & fa).bit_count(),
        )
        if x is None:
            raise _Abort(f"no free arc from cluster {a} to cluster {b}")
        y = _pick_best(D.out_adj[x] & fb, lambda v: (D.out_adj[v] & fb).bit_count())
        return x, y

    # itineraries -----------------------------------------------------------

    def _attach(self, v: int, out: bool, used: VertexSet) -> list[tuple[int, tuple[int, ...]]]:
        """Cluster options for leaving (``out``) or entering terminal v, best first.

        Each option is (cluster, piece) where the piece is (v,) or uses one
        leftover vertex as a stepping stone.
        """
        D = self.D
        adj = D.out_adj if out else D.in_adj
        opts = []
        for ci, c in enumerate(self.clusters):
            free = c.verts & ~used
            hit = (adj[v] & free).bit_count()
            if hit:
                opts.append((hit, ci, (v,)))
        if not opts:
            for u in iter_members(adj[v] & self.leftovers & ~used):
                back = D.out_adj[u] if out else D.in_adj[u]
                for ci, c in enumerate(self.clusters):
                    hit = (back & c.verts & ~used).bit_count()
                    if hit:
                        opts.append((hit, ci, (v, u) if out else (u, v)))
        opts.sort(key=lambda t: (-t[0], t[1]))
        return [(ci, piece) for _, ci, piece in opts]

    def _leftover_types(self, used: VertexSet, todo: list[int]) -> list[tuple[int, int, int]]:
        D = self.D
        out = []
        for u in todo:
            best = None
            for a, ca in enumerate(self.clusters):
                ia = (D.in_adj[u] & ca.verts & ~used).bit_count()
                if not ia:
                    continue
                for b, cb in enumerate(self.clusters):
                    ob = (D.out_adj[u] & cb.verts & ~used).bit_count()
                    if not ob:
                        continue
                    score = (a == b, min(ia, ob))
                    if best is None or score > best[0]:
                        best = (score, a, b)
            if best is None:
                raise _Abort(f"leftover vertex {u} has no cluster on one side")
            out.append((u, best[1], best[2]))
        return out

    def _walk(self, graph, cur: int, pending: list, beads: list) -> tuple[list[tuple], int]:
        """Order leftover pieces and beads greedily, crossing clusters only when needed."""
        steps: list[tuple] = []
        pending = list(pending)
        while pending or beads:
            nxt = next((t for t in pending if t[1] == cur), None)
            if nxt is None and beads:
                bead = next((t for t in beads if t[0] == cur), beads[0])
                hop = self._cluster_route(graph, cur, bead[0])
                steps.extend(("arc", x, y) for x, y in zip(hop, hop[1:]))
                cur = bead[0]
                steps.append(("piece", bead[1], cur, cur))
                beads.remove(bead)
                continue
            if nxt is None:
                nxt = pending[0]
                hop = self._cluster_route(graph, cur, nxt[1])
                steps.extend(("arc", x, y) for x, y in zip(hop, hop[1:]))
            steps.append(("piece", (nxt[0],), nxt[1], nxt[2]))
            cur = nxt[2]
            pending.remove(nxt)
        return steps, cur

    def build(self, starts: list[int], ends: list[int], attach_in, attach_out, balance: list[tuple[int, tuple[int, int]]]) -> tuple[list[RoutePlan], VertexSet]:
        inst = self.inst
        used = branch_vertices(inst)
        for _, piece in attach_in + attach_out:
            used |= mask_of(piece)
        for _, arc in balance:
            used |= mask_of(arc)
        todo = members(self.leftovers & ~used)
        typed = self._leftover_types(used, todo)
        used |= mask_of(todo)
        graph = self._crossing_graph(self._free(used))
        carrier = max(range(inst.k), key=lambda i: (inst.lengths[i], -i))
        # spread leftovers over routes by remaining room; each may cost a
        # vertex plus two crossing arcs
        room = [inst.lengths[i] - 1 for i in range(inst.k)]
        share: list[list] = [[] for _ in range(inst.k)]
        for t in typed:
            i = max(range(inst.k), key=lambda j: (room[j], -j))
            share[i].append(t)
            room[i] -= 1 if t[1] == t[2] else 3
        plans = []
        visited = set()
        walks = {}
        for i in range(inst.k):
            walks[i] = self._walk(graph, starts[i], share[i], list(balance) if i == carrier else [])
        # every nonempty cluster must host a gap somewhere
        for i in range(inst.k):
            steps, cur = walks[i]
            visited.add(starts[i])
            for st in steps:
                visited.add(st[2] if st[0] == "arc" else st[3])
                if st[0] == "arc":
                    visited.add(st[1])
            visited.add(ends[i])
        free = self._free(used)
        missing = [c for c in range(len(self.clusters)) if free[c] and c not in visited]
        steps, cur = walks[carrier]
        for c in missing:
            hop = self._cluster_route(graph, cur, c)
            steps.extend(("arc", x, y) for x, y in zip(hop, hop[1:]))
            cur = c
        walks[carrier] = (steps, cur)

        for i in range(inst.k):
            steps, cur = walks[i]
            hop = self._cluster_route(graph, cur, ends[i])
            steps = steps + [("arc", x, y) for x, y in zip(hop, hop[1:])]
            pieces = [attach_out[i][1]]
            gaps = [starts[i]]
            for st in steps:
                if st[0] == "arc":
                    x, y = self._cross_arc(st[1], st[2], used)
                    used |= (1 << x) | (1 << y)
                    pieces.append((x, y))
                    gaps.append(st[2])
                else:
                    pieces.append(st[1])
                    gaps.append(st[3])
            pieces.append(attach_in[i][1])
            s, t = inst.terminals(i)
            plans.append(RoutePlan(pieces, gaps, s == t))
        return plans, used

    # gap sizing ------------------------------------------------------------

    def size_gaps(self, plans: list[RoutePlan], used: VertexSet):
        """Choose a count (and for bipartite clusters a starting side) per gap.

        Exhaustive memoised search over gaps in route order; the state is
        (gap index, what the current route still needs, what every cluster
        still offers), which fixes the rest of the problem.
        """
        D = self.D
        inst = self.inst
        free = self._free(used)
        cap0 = []
        for c, f in zip(self.clusters, free):
            if c.bipartite:
                cap0.append(((c.X & f).bit_count(), (c.Y & f).bit_count()))
            else:
                cap0.append((f.bit_count(), 0))
        gaps = []
        needs = []
        for r, plan in enumerate(plans):
            inner = sum(len(p) for p in plan.pieces) - 2
            needs.append(inst.lengths[r] - 1 - inner)
            for g, ci in enumerate(plan.gaps):
                p, q = plan.pieces[g][-1], plan.pieces[g + 1][0]
                zero_ok = D.has_arc(p, q)
                sides = []
                if ci >= 0 and self.clusters[ci].bipartite:
                    cl = self.clusters[ci]
                    for s, smask in ((0, cl.X), (1, cl.Y)):
                        if D.out_adj[p] & smask & free[ci]:
                            sides.append(s)
                    ends_ok = [bool(D.in_adj[q] & m & free[ci]) for m in (cl.X, cl.Y)]
                else:
                    ends_ok = [True, True]
                    if ci >= 0 and not (D.out_adj[p] & free[ci] and D.in_adj[q] & free[ci]):
                        sides = []
                    else:
                        sides = [0]
                gaps.append((r, ci, zero_ok, sides, ends_ok, g == len(plan.gaps) - 1))
        if any(x < 0 for x in needs):
            raise _Abort("pieces alone exceed a route length")
        failed = set()
        choice = {}

        def usage(ci, c, s):
            if not self.clusters[ci].bipartite:
                return (c, 0)
            big, small = (c + 1) // 2, c // 2
            return (big, small) if s == 0 else (small, big)

        def options(gi, rem, caps):
            r, ci, zero_ok, sides, ends_ok, last = gaps[gi]
            if last:
                counts = [rem]
            else:
                share = rem / max(1, sum(1 for g in gaps[gi:] if g[0] == r))
                counts = sorted(range(rem + 1), key=lambda c: (abs(c - share), c))
            for c in counts:
                if c == 0:
                    if zero_ok:
                        yield c, None
                    continue
                if ci < 0:
                    continue
                for s in sides:
                    e = s if c % 2 else 1 - s
                    if not self.clusters[ci].bipartite:
                        e = 0
                    if not ends_ok[e]:
                        continue
                    ux, uy = usage(ci, c, s)
                    if ux <= caps[ci][0] and uy <= caps[ci][1]:
                        yield c, s

        def solve(gi, rem, caps) -> bool:
            if time.monotonic() > self.deadline:
                raise _Abort("time limit while sizing gaps")
            if gi == len(gaps):
                return all(c == (0, 0) for c in caps)
            key = (gi, rem, caps)
            if key in failed:
                return False
            r, ci, *_ , last = gaps[gi]
            for c, s in options(gi, rem, caps):
                new_caps = caps
                if c:
                    ux, uy = usage(ci, c, s)
                    lst = list(caps)
                    lst[ci] = (caps[ci][0] - ux, caps[ci][1] - uy)
                    new_caps = tuple(lst)
                nrem = rem - c
                if last:
                    nrem = needs[r + 1] if r + 1 < len(needs) else 0
                if solve(gi + 1, nrem, new_caps):
                    choice[gi] = (c, s)
                    return True
            failed.add(key)
            return False

        if not solve(0, needs[0], tuple(cap0)):
            raise _Abort("no gap sizes satisfy route lengths, cluster sizes and parity")
        out = []
        gi = 0
        for plan in plans:
            row = []
            for _ in plan.gaps:
                row.append(choice[gi])
                gi += 1
            out.append(row)
        return out

    # cluster filling -------------------------------------------------------

    def fill(self, plans: list[RoutePlan], sizes, used: VertexSet, rng: np.random.Generator) -> dict:
        free = self._free(used)
        filled = {}
        for ci, cl in enumerate(self.clusters):
            jobs = []
            for r, plan in enumerate(plans):
                for g, ci2 in enumerate(plan.gaps):
                    c, s = sizes[r][g]
                    if ci2 == ci and c > 0:
                        jobs.append(((r, g), plan.pieces[g][-1], plan.pieces[g + 1][0], c, s))
            if not jobs:
                if free[ci]:
                    raise _Abort(f"cluster {ci} left with unused vertices")
                continue
            filled.update(self._fill_cluster(cl, free[ci], jobs, rng))
        return filled

    def _fill_cluster(self, cl: Cluster, free: VertexSet, jobs, rng) -> dict:
        if cl.bipartite:
            X, Y = cl.X & free, cl.Y & free
            return self._fill_sides(X, Y, jobs, rng)
        odd = sum(1 for j in jobs if j[3] % 2)
        vs = members(free)
        nx = (len(vs) + odd) // 2
        last_err = None
        for _ in range(self.params.attempts):
            perm = [vs[i] for i in rng.permutation(len(vs))]
            X, Y = mask_of(perm[:nx]), mask_of(perm[nx:])
            try:
                return self._fill_sides(X, Y, [(key, p, q, c, 0) for key, p, q, c, _ in jobs], rng)
            except _Abort as exc:
                last_err = exc
        raise _Abort(f"complete cluster could not be filled: {last_err}")

    def _fill_sides(self, X: VertexSet, Y: VertexSet, jobs, rng) -> dict:
        """Alternating X/Y paths for every job (key, pred, succ, count, start side)."""
        D = self.D
        last_err = None
        for attempt in range(self.params.attempts):
            taken = 0
            frame = []
            try:
                for key, p, q, c, s in jobs:
                    head = tail = None
                    prev = p
                    rest = c
                    if s == 1:
                        head = self._choose(D.out_adj[prev] & Y & ~taken, rng, attempt)
                        taken |= 1 << head
                        prev, rest = head, rest - 1
                    if rest % 2:
                        tail = self._choose(D.in_adj[q] & X & ~taken, rng, attempt, D.out_adj[prev] if rest == 1 else None)
                        taken |= 1 << tail
                        rest -= 1
                    nxt = tail if tail is not None else q
                    a = rest // 2
                    if a == 0:
                        if not D.has_arc(prev, nxt):
                            raise _Abort("missing arc across an empty core")
                        frame.append((key, head, None, None, tail, 0))
                        continue
                    x0 = self._choose(D.out_adj[prev] & X & ~taken, rng, attempt)
                    taken |= 1 << x0
                    pref = D.out_adj[x0] if a == 1 else None
                    y0 = self._choose(D.in_adj[nxt] & Y & ~taken, rng, attempt, pref)
                    taken |= 1 << y0
                    frame.append((key, head, x0, y0, tail, a))
                cores = [f for f in frame if f[5] > 0]
                out = {}
                if cores:
                    task = EmbedTask(
                        X & ~taken | mask_of(f[2] for f in cores),
                        Y & ~taken | mask_of(f[3] for f in cores),
                        [f[5] for f in cores],
                        [f[2] for f in cores],
                        [f[3] for f in cores],
                        self.params.eta,
                    )
                    if task.A.bit_count() != task.B.bit_count():
                        raise _Abort("cluster sides unbalanced after anchoring")
                    paths = prop_embed(task, D, seed=int(rng.integers(1 << 30)), attempts=self.params.attempts)
                    core_of = {f[0]: P.verts for f, P in zip(cores, paths)}
                else:
                    if (X | Y) & ~taken:
                        raise _Abort("unused cluster vertices")
                    core_of = {}
                for key, head, _, _, tail, _ in frame:
                    verts = ([head] if head is not None else []) + list(core_of.get(key, ())) + ([tail] if tail is not None else [])
                    out[key] = tuple(verts)
                return out
            except (_Abort, MatchingUnsaturated, ValueError) as exc:
                last_err = exc
        raise _Abort(f"cluster filling failed: {last_err}")

    @staticmethod
    def _choose(mask: VertexSet, rng, attempt: int, prefer: VertexSet | None = None) -> int:
        if prefer is not None and mask & prefer:
            mask &= prefer
        if not mask:
            raise _Abort("no eligible vertex for an anchor")
        vs = members(mask)
        if attempt == 0:
            return vs[0]
        return vs[int(rng.integers(len(vs)))]

    # assembly --------------------------------------------------------------

    def assemble(self, plans: list[RoutePlan], filled: dict) -> Subdivision:
        routes = []
        for r, plan in enumerate(plans):
            verts: list[int] = []
            for g, piece in enumerate(plan.pieces):
                verts.extend(piece)
                if g < len(plan.gaps):
                    verts.extend(filled.get((r, g), ()))
            if plan.cycle:
                routes.append(Path(tuple(verts[:-1]), True))
            else:
                routes.append(Path(tuple(verts)))
        return Subdivision(tuple(routes))


def _terminal_options(planner: _Planner, inst: Instance, used: VertexSet):
    outs, ins = [], []
    for i in range(inst.k):
        s, t = inst.terminals(i)
        o = planner._attach(s, True, used)
        n_ = planner._attach(t, False, used)
        if not o or not n_:
            raise _Abort(f"terminal of pair {i} reaches no cluster")
        outs.append(o)
        ins.append(n_)
    return outs, ins


def _balance_beads(D: Digraph, clusters: list[Cluster], used: VertexSet, count: int, side: int) -> list[tuple[int, tuple[int, int]]]:
    """Up to ``count`` disjoint arcs inside one side of a bipartite cluster."""
    beads = []
    for ci, cl in enumerate(clusters):
        if not cl.bipartite:
            continue
        S = (cl.X, cl.Y)[side] & ~used
        for x in iter_members(S):
            if len(beads) >= count:
                return beads
            hit = D.out_adj[x] & S & ~used
            if hit:
                y = (hit & -hit).bit_length() - 1
                beads.append((ci, (x, y)))
                used |= (1 << x) | (1 << y)
                S &= ~((1 << x) | (1 << y))
    return beads


def _run_plans(inst: Instance, clusters: list[Cluster], leftovers: VertexSet, params: ExtremalParams, trace: dict, sets: dict[str, VertexSet]) -> Subdivision | Fallback:
    clusters = [c for c in clusters if c.verts]
    if not clusters:
        return Fallback("no clusters to work with", trace)
    planner = _Planner(inst, clusters, leftovers, params, trace)
    base_used = branch = branch_vertices(inst)
    try:
        outs, ins = _terminal_options(planner, inst, base_used)
    except _Abort as exc:
        return Fallback(str(exc), trace)
    combos = []
    for i in range(inst.k):
        combos.append([(a, b) for a in outs[i][:2] for b in ins[i][:2]])
    has_bip = any(c.bipartite for c in clusters)
    bead_options = [[]]
    if has_bip:
        bead_options += [("side", side, cnt) for cnt in (1, 2) for side in (0, 1)]
    rng = np.random.default_rng(params.seed)
    reasons = []
    tried = 0
    for choice in _product_limited(combos, params.combo_limit):
        for beads in bead_options:
            tried += 1
            used = base_used
            attach_out = [c[0] for c in choice]
            attach_in = [c[1] for c in choice]
            extra = [v for _, p in attach_out + attach_in for v in p if not branch >> v & 1]
            if len(set(extra)) != len(extra):
                continue  # two attachments share a stepping stone
            for _, p in attach_out + attach_in:
                used |= mask_of(p)
            bead_list = []
            if beads:
                _, side, cnt = beads
                bead_list = _balance_beads(inst.D, clusters, used, cnt, side)
                if len(bead_list) < cnt:
                    continue
            try:
                starts = [o[0] for o in attach_out]
                ends = [o[0] for o in attach_in]
                plans, used_all = planner.build(starts, ends, attach_in, attach_out, bead_list)
                case_plan = CasePlan(trace.get("case", ""), sets, branch, assignments=list(zip(starts, ends)))
                for plan in plans:
                    for piece in plan.pieces:
                        case_plan.stage(piece)
                trace["plan"] = case_plan.to_json_obj()
                sizes = planner.size_gaps(plans, used_all)
                filled = planner.fill(plans, sizes, used_all, rng)
                sub = planner.assemble(plans, filled)
            except _Abort as exc:
                reasons.append(str(exc))
                if time.monotonic() > planner.deadline:
                    break
                continue
            rep = verify_subdivision(inst, sub)
            if rep.ok:
                trace["plans_tried"] = tried
                return sub
            reasons.append(f"verifier rejected: {sorted(rep.rules())}")
        if time.monotonic() > planner.deadline:
            break
    trace["plans_tried"] = tried
    trace["reasons"] = reasons[-5:]
    return Fallback(reasons[-1] if reasons else "no plan", trace)


def _product_limited(options: list[list], limit: int):
    count = 0

    def rec(i, acc):
        nonlocal count
        if count >= limit:
            return
        if i == len(options):
            count += 1
            yield list(acc)
            return
        for o in options[i]:
            acc.append(o)
            yield from rec(i + 1, acc)
            acc.pop()
            if count >= limit:
                return

    yield from rec(0, [])


def _migrate(D: Digraph, sides: list[VertexSet], rest: VertexSet, eps: float, bipartite: bool, trace: dict):
    """Move misplaced vertices until none qualifies (at most n moves).

    For blocks a vertex joins a side where both its in- and out-degree
    exceed eps^(1/3) of that side; for bipartite pairs it joins the side
    opposite to where its two-way neighbours are.  Lowest index first.
    """
    _, strong = type_thresholds(eps)
    moves = 0
    for _ in range(D.n):
        a, b = sides
        typing = type_vertices(D, a, b, eps)
        bad = typing.E4 if bipartite else typing.E2
        moved = False
        for v in members(((a | b) & bad) | rest):
            for j in (0, 1):
                target = sides[j]
                if bipartite:
                    other = sides[1 - j]
                    score = (D.out_adj[v] & D.in_adj[v] & other).bit_count()
                    size = other.bit_count()
                else:
                    score = min((D.out_adj[v] & target).bit_count(), (D.in_adj[v] & target).bit_count())
                    size = (target & ~(1 << v)).bit_count()
                if target >> v & 1 or size == 0 or at_most(score, strong * size):
                    continue
                sides = [s & ~(1 << v) for s in sides]
                sides[j] |= 1 << v
                rest &= ~(1 << v)
                moved = True
                moves += 1
                break
            if moved:
                break
        if not moved:
            break
    trace["migrations"] = moves
    return sides, rest


def solve_case1(
    inst: Instance,
    partition: ExtremalPartition,
    params: ExtremalParams = ExtremalParams(),
    trace: dict | None = None,
) -> Subdivision | Fallback:
    """Two nearly complete blocks W1, W3; everything else is leftover."""
    trace = {} if trace is None else trace
    trace["case"] = "case1"
    D = inst.D
    branch = branch_vertices(inst)
    W1, _, W3, _ = partition.W
    sides = [W1 & ~branch, W3 & ~branch]
    rest = full_set(inst.n) & ~branch & ~sides[0] & ~sides[1]
    sides, rest = _migrate(D, sides, rest, params.eps, False, trace)
    typing = type_vertices(D, sides[0], sides[1], params.eps)
    S1, S2 = sides[0] & ~typing.E2, sides[1] & ~typing.E2
    S3 = full_set(inst.n) & ~branch & ~S1 & ~S2
    trace["sizes"] = [S1.bit_count(), S2.bit_count(), S3.bit_count()]
    sets = {"S1": S1, "S2": S2, "S3": S3}
    return _run_plans(inst, [Cluster(S1), Cluster(S2)], S3, params, trace, sets)


def solve_case2(
    inst: Instance,
    partition: ExtremalPartition,
    params: ExtremalParams = ExtremalParams(),
    trace: dict | None = None,
) -> Subdivision | Fallback:
    """One nearly complete bipartite pair (W2, W4); parity and balance are
    repaired by leftover vertices and same-side arcs."""
    trace = {} if trace is None else trace
    trace["case"] = "case2"
    D = inst.D
    branch = branch_vertices(inst)
    _, W2, _, W4 = partition.W
    sides = [W2 & ~branch, W4 & ~branch]
    rest = full_set(inst.n) & ~branch & ~sides[0] & ~sides[1]
    sides, rest = _migrate(D, sides, rest, params.eps, True, trace)
    typing = type_vertices(D, sides[0], sides[1], params.eps)
    S1, S2 = sides[0] & ~typing.E4, sides[1] & ~typing.E4
    S3 = full_set(inst.n) & ~branch & ~S1 & ~S2
    trace["sizes"] = [S1.bit_count(), S2.bit_count(), S3.bit_count()]
    sets = {"S1": S1, "S2": S2, "S3": S3}
    return _run_plans(inst, [Cluster(S1, S2, True)], S3, params, trace, sets)


def _case3_native(inst: Instance, partition: ExtremalPartition, params: ExtremalParams, trace: dict | None = None) -> Subdivision | Fallback:
    trace = {} if trace is None else trace
    trace["case"] = "case3"
    D = inst.D
    branch = branch_vertices(inst)
    W = [w & ~branch for w in partition.W]
    blocks = type_vertices(D, W[0], W[2], params.eps)
    pair = type_vertices(D, W[1], W[3], params.eps)
    S11, S12 = W[0] & ~blocks.E2, W[2] & ~blocks.E2
    S21, S22 = W[1] & ~pair.E4, W[3] & ~pair.E4
    S3 = full_set(inst.n) & ~branch & ~(S11 | S12 | S21 | S22)
    trace["sizes"] = [S11.bit_count(), S21.bit_count(), S12.bit_count(), S22.bit_count(), S3.bit_count()]
    clusters = [Cluster(S11), Cluster(S21, S22, True), Cluster(S12)]
    sets = {"S11": S11, "S21": S21, "S12": S12, "S22": S22, "S3": S3}
    return _run_plans(inst, clusters, S3, params, trace, sets)


def reduction_target(partition: ExtremalPartition, n: int, eps: float) -> str | None:
    """Which simpler case a middle partition reduces to, if any part is tiny.

    A tiny W2 or W4 leaves the two blocks; otherwise a tiny W1 or W3 leaves
    the bipartite pair.
    """
    small = [at_most(w.bit_count(), eps ** (1 / 3) * n) for w in partition.W]
    if small[1] or small[3]:
        return CASE_TINY
    if small[0] or small[2]:
        return CASE_HUGE
    return None


def solve_case3(
    inst: Instance,
    partition: ExtremalPartition,
    params: ExtremalParams = ExtremalParams(),
    trace: dict | None = None,
) -> Subdivision | Fallback:
    """Blocks W1, W3 and the bipartite pair (W2, W4) around the one-way cycle.

    When ``reduction_target`` names a simpler case it is tried first; the
    four-part plan is always tried as well.
    """
    trace = {} if trace is None else trace
    trace["case"] = "case3"
    target = reduction_target(partition, inst.n, params.eps)
    order = []
    if target is not None:
        trace["reduced_to"] = target
        order.append(CASE_SOLVERS[target])
    order.append(_case3_native)
    attempts = []
    res: Subdivision | Fallback = Fallback("no attempt")
    for fn in order:
        sub_trace: dict = {}
        res = fn(inst, partition, params, sub_trace)
        attempts.append(sub_trace)
        if not isinstance(res, Fallback):
            break
    trace["attempts"] = attempts
    if isinstance(res, Fallback):
        return Fallback(res.reason, trace)
    return res


CASE_SOLVERS = {CASE_TINY: solve_case1, CASE_HUGE: solve_case2, CASE_MIDDLE: solve_case3}


def solve_extremal(
    inst: Instance,
    partition: ExtremalPartition,
    params: ExtremalParams = ExtremalParams(),
    trace: dict | None = None,
) -> Subdivision | Fallback:
    """Dispatch on the partition's case tag."""
    return CASE_SOLVERS[partition.case](inst, partition, params, trace)

"""Constructive solver for stable digraphs via absorbers.

Flow: pick a disjoint absorber family, split it into one class per long
pattern arc, chain each class into an absorbing path, build the short
routes, hook every absorbing path to its terminals, then cover the leftover
vertices by Hamiltonian paths that are spliced into the shells.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .digraph import Digraph, Path, VertexSet, full_set, iter_members, mask_of, members
from .exact import (
    HAMILTON_CAP,
    BudgetExceeded,
    RouteDemand,
    SearchBudget,
    _distance_at_most,
    hamiltonian_path,
    solve_demands,
)
from .linkage import Instance, Subdivision, branch_vertices, verify_subdivision


class PipelineError(Exception):
    """Base class for every recoverable failure of the pipeline."""


class NoConnector(PipelineError):
    pass


class CoverageUnreachable(PipelineError):
    def __init__(self, msg: str, worst_pair: tuple[int, int] | None = None, worst: int = 0):
        super().__init__(msg)
        self.worst_pair = worst_pair
        self.worst = worst


class PartitionUnreachable(PipelineError):
    pass


class NotASegment(PipelineError):
    pass


class NotAbsorbable(PipelineError):
    pass


class ShellTooLong(PipelineError):
    pass


class RouteFailed(PipelineError):
    pass


class CoverFailed(PipelineError):
    pass


class SplitInfeasible(PipelineError):
    pass


class NotStable(PipelineError):
    pass


@dataclass(frozen=True)
class PipelineParams:
    gamma: float = 0.08
    eps_prime: float = 0.2
    t_min: int = 2
    retries: int = 32
    seed: int = 0
    # expected number of sampled 4-tuples; None means gamma*n / density**3
    sample_mean: float | None = None
    relax_coverage: bool = True
    cover_restarts: int = 24
    exact_remainder_cap: int = HAMILTON_CAP
    combo_limit: int = 64
    route_node_limit: int = 200_000
    link_node_limit: int = 300_000

    def __post_init__(self):
        if not 0 < self.gamma < self.eps_prime < 1:
            raise ValueError("need 0 < gamma < eps_prime < 1")
        if self.t_min < 0 or self.retries < 1:
            raise ValueError("t_min must be >= 0 and retries >= 1")


@dataclass(frozen=True)
class Absorber:
    z: tuple[int, int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(self.z))
        if len(set(self.z)) != 4:
            raise ValueError("absorber vertices must be distinct")

    @property
    def vertex_set(self) -> VertexSet:
        return mask_of(self.z)

    def is_valid_in(self, D: Digraph) -> bool:
        a, b, c, d = self.z
        return D.has_arc(a, b) and D.has_arc(b, c) and D.has_arc(c, d)

    def absorbs(self, D: Digraph, u: int, v: int) -> bool:
        if u in self.z or v in self.z:
            return False
        return D.has_arc(self.z[1], u) and D.has_arc(v, self.z[2])


@dataclass(frozen=True)
class AbsorberFamily:
    members: tuple[Absorber, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))

    def __len__(self):
        return len(self.members)

    @property
    def vertex_set(self) -> VertexSet:
        m = 0
        for a in self.members:
            m |= a.vertex_set
        return m

    def is_disjoint(self) -> bool:
        return self.vertex_set.bit_count() == 4 * len(self.members)

    def absorbers_of(self, D: Digraph, u: int, v: int) -> list[int]:
        return [i for i, a in enumerate(self.members) if a.absorbs(D, u, v)]

    def coverage(self, D: Digraph, pool: VertexSet) -> dict[tuple[int, int], int]:
        """Number of members absorbing each ordered pair drawn from ``pool`` (u = v included)."""
        into = [D.out_adj[a.z[1]] for a in self.members]
        outof = [D.in_adj[a.z[2]] for a in self.members]
        table = {}
        verts = members(pool)
        for u in verts:
            hits = [j for j, row in enumerate(into) if row >> u & 1]
            for v in verts:
                table[(u, v)] = sum(1 for j in hits if outof[j] >> v & 1)
        return table


def connect(D: Digraph, P1: Path, P2: Path, forbidden: VertexSet = 0) -> Path:
    """Path from the last vertex of P1 to the first of P2 on at most four vertices.

    Tried in order: the direct arc, a common neighbour, then an arc between
    an out-neighbour of the start and an in-neighbour of the end.  Lowest
    indices win at every tier.
    """
    b, c = P1.last, P2.first
    blocked = forbidden | (P1.vertex_set() & ~(1 << b)) | (P2.vertex_set() & ~(1 << c))
    allowed = full_set(D.n) & ~blocked & ~(1 << b) & ~(1 << c)
    if D.has_arc(b, c):
        return Path((b, c))
    mid = D.out_adj[b] & D.in_adj[c] & allowed
    if mid:
        x = (mid & -mid).bit_length() - 1
        return Path((b, x, c))
    ys = D.in_adj[c] & allowed
    for x in iter_members(D.out_adj[b] & allowed):
        hit = D.out_adj[x] & ys & ~(1 << x)
        if hit:
            y = (hit & -hit).bit_length() - 1
            return Path((b, x, y, c))
    raise NoConnector(f"no connector from {b} to {c}")


def enumerate_absorbers(D: Digraph, excluded: VertexSet, u: int, v: int) -> list[Absorber]:
    """Every 4-path outside ``excluded`` and {u, v} that absorbs (u, v)."""
    avail = full_set(D.n) & ~excluded & ~(1 << u) & ~(1 << v)
    found = []
    for z2 in iter_members(D.in_adj[u] & avail):
        for z3 in iter_members(D.out_adj[z2] & D.out_adj[v] & avail):
            rest = avail & ~(1 << z2) & ~(1 << z3)
            for z1 in iter_members(D.in_adj[z2] & rest):
                for z4 in iter_members(D.out_adj[z3] & rest & ~(1 << z1)):
                    found.append(Absorber((z1, z2, z3, z4)))
    return found


def _arc_density(D: Digraph) -> float:
    if D.n < 2:
        return 0.0
    return D.arc_count() / (D.n * (D.n - 1))


def _sample_candidates(D: Digraph, avail: list[int], rng: np.random.Generator, mean: float) -> list[tuple[int, ...]]:
    if len(avail) < 4:
        return []
    count = int(rng.poisson(mean))
    out = []
    pool = np.array(avail)
    for _ in range(count):
        out.append(tuple(int(x) for x in rng.choice(pool, size=4, replace=False)))
    return out


def _prune(D: Digraph, cands: list[tuple[int, ...]], greedy: bool = False) -> list[Absorber]:
    """Drop every candidate that meets another one, then every non-path.

    With ``greedy`` the non-paths go first and a candidate is dropped only
    if it meets one already kept, which retains far more members.
    """
    if greedy:
        kept, taken = [], 0
        for c in dict.fromkeys(cands):
            a = Absorber(c)
            if a.is_valid_in(D) and not a.vertex_set & taken:
                kept.append(a)
                taken |= a.vertex_set
        return kept
    uses: dict[int, int] = {}
    for c in set(cands):
        for x in c:
            uses[x] = uses.get(x, 0) + 1
    kept = []
    for c in dict.fromkeys(cands):
        if any(uses[x] > 1 for x in c):
            continue
        a = Absorber(c)
        if a.is_valid_in(D):
            kept.append(a)
    return kept


def family_coverage_audit(D: Digraph, family: AbsorberFamily, excluded: VertexSet) -> tuple[int, tuple[int, int] | None, dict[int, int]]:
    """Minimum coverage over residual pairs, a worst pair, and a histogram."""
    pool = full_set(D.n) & ~excluded & ~family.vertex_set
    table = family.coverage(D, pool)
    if not table:
        return 0, None, {}
    hist: dict[int, int] = {}
    worst_pair, worst = None, None
    for pair, c in table.items():
        hist[c] = hist.get(c, 0) + 1
        if worst is None or c < worst:
            worst, worst_pair = c, pair
    return worst, worst_pair, dict(sorted(hist.items()))


@dataclass
class FamilyResult:
    family: AbsorberFamily
    attempts: int
    histogram: dict[int, int]


def select_family(
    D: Digraph,
    excluded: VertexSet,
    params: PipelineParams,
    t_min: int | None = None,
    min_members: int = 1,
    stats: dict | None = None,
) -> AbsorberFamily:
    """Random disjoint absorber family of at most floor(gamma*n) members.

    Each attempt draws a Poisson number of random ordered 4-tuples, deletes
    every tuple meeting another one and every tuple that is not a 4-path,
    trims to the size cap, and accepts only if every residual pair is
    absorbed by at least ``t_min`` members.  Attempts use fresh seeds.
    With ``t_min == 0`` (no coverage demanded) the deletion is greedy.
    """
    t_min = params.t_min if t_min is None else t_min
    n = D.n
    cap = math.floor(params.gamma * n)
    avail = members(full_set(n) & ~excluded)
    if params.sample_mean is not None:
        mean = params.sample_mean
    else:
        dens = _arc_density(D)
        mean = params.gamma * n / dens**3 if dens > 0 else 0.0
    worst_seen = (None, None)
    for attempt in range(params.retries):
        rng = np.random.default_rng([params.seed, attempt, 17])
        kept = _prune(D, _sample_candidates(D, avail, rng, mean), greedy=t_min == 0)[:cap]
        fam = AbsorberFamily(tuple(kept))
        if len(fam) < max(min_members, 1):
            continue
        worst, pair, hist = family_coverage_audit(D, fam, excluded)
        if pair is None or worst >= t_min:
            if stats is not None:
                stats.update(attempts=attempt + 1, histogram=hist)
            return fam
        if worst_seen[0] is None or worst > worst_seen[0]:
            worst_seen = (worst, pair)
    raise CoverageUnreachable(
        f"no family reached coverage {t_min} in {params.retries} attempts",
        worst_seen[1],
        worst_seen[0] or 0,
    )


def partition_family(
    F: AbsorberFamily,
    class_caps: list[int],
    pairs: list[tuple[int, int]],
    params: PipelineParams,
    D: Digraph | None = None,
) -> list[AbsorberFamily]:
    """Split F into len(class_caps) nonempty classes.

    Class i may use at most ``class_caps[i]`` vertices and must absorb every
    pair in ``pairs`` (which needs ``D``).  Random assignment with retries.
    """
    s = len(class_caps)
    if s < 1:
        raise ValueError("need at least one class")
    if len(F) < s or any(c < 4 for c in class_caps):
        raise PartitionUnreachable("too few absorbers or a class cap below one absorber")
    if pairs and D is None:
        raise ValueError("pair coverage needs the host digraph")
    for attempt in range(params.retries):
        rng = np.random.default_rng([params.seed, attempt, 29])
        order = rng.permutation(len(F))
        room = list(class_caps)
        classes: list[list[Absorber]] = [[] for _ in range(s)]
        ok = True
        # seed every class with one member, then scatter the rest
        for pos, idx in enumerate(order):
            a = F.members[int(idx)]
            if pos < s:
                j = pos
            else:
                open_ = [j for j in range(s) if room[j] >= 4]
                if not open_:
                    ok = False
                    break
                j = open_[int(rng.integers(len(open_)))]
            if room[j] < 4:
                ok = False
                break
            classes[j].append(a)
            room[j] -= 4
        if not ok:
            continue
        parts = [AbsorberFamily(tuple(sorted(c, key=lambda a: F.members.index(a)))) for c in classes]
        if all(all(any(a.absorbs(D, u, v) for a in part.members) for u, v in pairs) for part in parts):
            return parts
    raise PartitionUnreachable(f"no valid split into {s} classes after {params.retries} attempts")


def build_absorbing_path(D: Digraph, cls: AbsorberFamily, forbidden: VertexSet = 0) -> Path:
    """Chain the class members in order, joined by connectors."""
    if not len(cls):
        raise ValueError("empty absorber class")
    everything = cls.vertex_set
    verts = list(cls.members[0].z)
    for a in cls.members[1:]:
        block = (forbidden | everything | mask_of(verts)) & ~(1 << verts[-1]) & ~(1 << a.z[0])
        link = connect(D, Path(tuple(verts)), Path(a.z), block)
        verts.extend(link.verts[1:-1])
        verts.extend(a.z)
    return Path(tuple(verts))


def exact_length_route(
    D: Digraph,
    start: int,
    end: int,
    length: int,
    allowed: VertexSet,
    node_limit: int = 200_000,
) -> Path:
    """A start->end path (a cycle when start == end) of exactly ``length`` arcs
    with inner vertices from ``allowed``.  Lowest-index extension first, so
    the first answer is the greedy one whenever greedy succeeds."""
    cycle = start == end
    path = [start]
    nodes = 0

    def grow(cur: int, free: VertexSet, rem: int) -> bool:
        nonlocal nodes
        nodes += 1
        if nodes > node_limit:
            raise BudgetExceeded(nodes)
        if rem == 1:
            return D.has_arc(cur, end)
        if not _distance_at_most(D, cur, end, free, rem):
            return False
        for v in iter_members(D.out_adj[cur] & free):
            path.append(v)
            if grow(v, free & ~(1 << v), rem - 1):
                return True
            path.pop()
        return False

    free = allowed & ~(1 << start) & ~(1 << end)
    try:
        found = length >= 1 and length - 1 <= free.bit_count() and grow(start, free, length)
    except BudgetExceeded:
        found = False
    if not found:
        raise RouteFailed(f"no {start}->{end} route of length {length}")
    if cycle:
        return Path(tuple(path), True)
    return Path(tuple(path) + (end,))


def absorb(D: Digraph, shell: Path, absorber: Absorber, P: Path) -> Path:
    """Replace the arc z2->z3 of the absorber segment in ``shell`` by z2 -> P -> z3."""
    verts = list(shell.verts)
    z = absorber.z
    try:
        i = verts.index(z[0])
    except ValueError:
        raise NotASegment("absorber not on shell") from None
    if tuple(verts[i:i + 4]) != z:
        raise NotASegment("absorber is not a consecutive segment of the shell")
    if P.vertex_set() & shell.vertex_set():
        raise NotAbsorbable("path meets the shell")
    if not absorber.absorbs(D, P.first, P.last):
        raise NotAbsorbable(f"absorber does not absorb ({P.first}, {P.last})")
    out = verts[: i + 2] + list(P.verts) + verts[i + 2:]
    return Path(tuple(out), shell.is_cycle)


@dataclass
class Skeleton:
    routes: dict[int, Path]
    shells: dict[int, Path]
    classes: dict[int, AbsorberFamily]
    used: VertexSet
    family: AbsorberFamily
    coverage_relaxed: bool = False
    stats: dict = field(default_factory=dict)

    def class_absorbs(self, D: Digraph, i: int, u: int, v: int) -> bool:
        return any(a.absorbs(D, u, v) for a in self.classes[i].members)


def long_arcs(inst: Instance) -> list[int]:
    """Arcs that get a shell: long enough relative to beta*n and able to hold an absorber.

    If none qualifies, the longest arc able to hold one is promoted.
    """
    n = inst.n
    roomy = [i for i, L in enumerate(inst.lengths) if L - 6 >= 4]
    chosen = [i for i in roomy if inst.lengths[i] >= inst.beta * n]
    if not chosen and roomy:
        chosen = [max(roomy, key=lambda i: (inst.lengths[i], -i))]
    return chosen


def _residual_pairs(D: Digraph, pool: VertexSet) -> list[tuple[int, int]]:
    vs = members(pool)
    return [(u, v) for u in vs for v in vs]


def build_skeleton(inst: Instance, params: PipelineParams, stable: bool = True) -> Skeleton:
    if not stable:
        raise NotStable("digraph is extremal; use the extremal solver")
    D = inst.D
    n = inst.n
    branch = branch_vertices(inst)
    longs = long_arcs(inst)
    if not longs:
        # nothing can carry an absorber: greedy routes now, one is rerouted at cover time
        used = branch
        routes = {}
        for i in range(inst.k):
            s, t = inst.terminals(i)
            routes[i] = exact_length_route(D, s, t, inst.lengths[i], full_set(n) & ~used, params.route_node_limit)
            used |= routes[i].vertex_set()
        return Skeleton(routes, {}, {}, used, AbsorberFamily(), stats={"family_size": 0})
    shorts = [i for i in range(inst.k) if i not in longs]
    caps = [inst.lengths[i] - 6 for i in longs]
    stats: dict = {}

    relaxed = False
    try:
        fam = select_family(D, branch, params, min_members=len(longs), stats=stats)
        pool = full_set(n) & ~branch & ~fam.vertex_set
        parts = partition_family(fam, caps, _residual_pairs(D, pool), params, D)
    except (CoverageUnreachable, PartitionUnreachable):
        if not params.relax_coverage:
            raise
        relaxed = True
        fam = select_family(D, branch, params, t_min=0, min_members=len(longs), stats=stats)
        parts = partition_family(fam, caps, [], params, D)
    classes = dict(zip(longs, parts))

    used = branch | fam.vertex_set
    absorbing: dict[int, Path] = {}
    for i in longs:
        others = fam.vertex_set & ~classes[i].vertex_set
        L = build_absorbing_path(D, classes[i], (used & ~classes[i].vertex_set) | others)
        absorbing[i] = L
        used |= L.vertex_set()

    routes: dict[int, Path] = {}
    for i in shorts:
        s, t = inst.terminals(i)
        allowed = full_set(n) & ~used
        routes[i] = exact_length_route(D, s, t, inst.lengths[i], allowed, params.route_node_limit)
        used |= routes[i].vertex_set()

    shells: dict[int, Path] = {}
    for i in longs:
        s, t = inst.terminals(i)
        L = absorbing[i]
        head = connect(D, Path((s,)), L, used & ~(1 << s) & ~(1 << L.first))
        verts = list(head.verts[:-1]) + list(L.verts)
        used |= mask_of(verts)
        tail = connect(D, Path(tuple(verts)), Path((t,)), used & ~(1 << verts[-1]) & ~(1 << t))
        verts.extend(tail.verts[1:])
        used |= mask_of(verts)
        if s == t:
            shell = Path(tuple(verts[:-1]), True)
        else:
            shell = Path(tuple(verts))
        if shell.arc_length > inst.lengths[i]:
            raise ShellTooLong(f"shell for arc {i} has length {shell.arc_length} > {inst.lengths[i]}")
        shells[i] = shell
    stats["family_size"] = len(fam)
    return Skeleton(routes, shells, classes, used, fam, relaxed, stats)


def _pick(rng: np.random.Generator, mask: VertexSet, score=None) -> int:
    vs = members(mask)
    if score is not None:
        best = min(score(v) for v in vs)
        vs = [v for v in vs if score(v) == best]
    return vs[int(rng.integers(len(vs)))]


def heuristic_hamiltonian_path(
    D: Digraph,
    within: VertexSet,
    rng: np.random.Generator,
    start: int | None = None,
    end: int | None = None,
    max_moves: int | None = None,
) -> Path | None:
    """Randomised extension-rotation search for a Hamiltonian path of D[within].

    Moves, in order of preference: extend at the tail (fewest onward options
    first), extend at the head, insert a missing vertex between two
    consecutive ones, or rotate the tail: with arcs p_i -> p_{j+1} and
    p_m -> p_{i+1} the path p_0..p_i p_{j+1}..p_m p_{i+1}..p_j ends at p_j.
    A fixed ``start`` disables head moves; a fixed ``end`` is appended last.
    """
    body = within
    if end is not None:
        body &= ~(1 << end)
    if start is not None and not body >> start & 1:
        return None
    if not body:
        return None
    out, inn = D.out_adj, D.in_adj
    first = start if start is not None else _pick(rng, body)
    path = [first]
    left = body & ~(1 << first)
    moves = 0
    budget = max_moves or 40 * body.bit_count() + 200

    def finished() -> bool:
        return not left and (end is None or out[path[-1]] >> end & 1)

    while moves < budget:
        moves += 1
        if finished():
            break
        tail = path[-1]
        cand = out[tail] & left
        if cand:
            v = _pick(rng, cand, lambda w: (out[w] & left).bit_count())
            path.append(v)
            left &= ~(1 << v)
            continue
        if start is None:
            cand = inn[path[0]] & left
            if cand:
                v = _pick(rng, cand, lambda w: (inn[w] & left).bit_count())
                path.insert(0, v)
                left &= ~(1 << v)
                continue
        if left:
            spots = []
            for i in range(len(path) - 1):
                hit = out[path[i]] & inn[path[i + 1]] & left
                if hit:
                    spots.append((i, hit))
            if spots:
                i, hit = spots[int(rng.integers(len(spots)))]
                v = _pick(rng, hit)
                path.insert(i + 1, v)
                left &= ~(1 << v)
                continue
        m = len(path) - 1
        rots = []
        for i in range(m - 1):
            if not out[path[m]] >> path[i + 1] & 1:
                continue
            for j in range(i + 1, m):
                if out[path[i]] >> path[j + 1] & 1:
                    rots.append((i, j))
        if not rots:
            break
        i, j = rots[int(rng.integers(len(rots)))]
        path = path[: i + 1] + path[j + 1:] + path[i + 1: j + 1]
    if not finished():
        return None
    if end is not None:
        path.append(end)
    return Path(tuple(path))


def _absorb_all(D: Digraph, inst: Instance, skel: Skeleton, pieces: dict[int, tuple[Absorber, Path]]) -> Subdivision:
    routes = []
    for i in range(inst.k):
        if i in skel.routes:
            routes.append(skel.routes[i])
        elif i in pieces:
            a, P = pieces[i]
            routes.append(absorb(D, skel.shells[i], a, P))
        else:
            routes.append(skel.shells[i])
    return Subdivision(tuple(routes))


def cover_and_assemble(inst: Instance, skel: Skeleton, params: PipelineParams) -> Subdivision:
    D = inst.D
    n = inst.n
    rest = full_set(n) & ~skel.used
    if not skel.shells:
        return _reroute_cover(inst, skel, rest, params)
    need = {i: inst.lengths[i] - skel.shells[i].arc_length for i in skel.shells}
    if sum(need.values()) != rest.bit_count() or any(x < 0 for x in need.values()):
        raise SplitInfeasible(f"segments need {sum(need.values())} vertices, {rest.bit_count()} remain")
    active = [i for i in sorted(need) if need[i] > 0]
    pieces: dict[int, tuple[Absorber, Path]] = {}
    if active:
        if rest.bit_count() <= params.exact_remainder_cap:
            pieces = _cover_exact(D, skel, active, need, rest, params)
        else:
            pieces = _cover_heuristic(D, skel, active, need, rest, params)
    sub = _absorb_all(D, inst, skel, pieces)
    rep = verify_subdivision(inst, sub)
    if not rep.ok:
        raise CoverFailed(f"assembled routes rejected: {rep.violations[:3]}")
    return sub


def _reroute_cover(inst: Instance, skel: Skeleton, rest: VertexSet, params: PipelineParams) -> Subdivision:
    """Without shells, release the longest greedy route and thread it through the remainder."""
    D = inst.D
    routes = dict(skel.routes)
    if rest:
        j = max(routes, key=lambda i: (inst.lengths[i], -i))
        old = routes[j]
        inner = old.vertex_set() & ~(1 << old.first) & ~(1 << old.last)
        pool = rest | inner
        s, t = inst.terminals(j)
        if pool.bit_count() != inst.lengths[j] - 1:
            raise SplitInfeasible(f"route {j} cannot absorb {rest.bit_count()} leftover vertices")
        P = None
        if s == t:
            found = _ham_through(D, pool, s, s, params)
            P = None if found is None else Path(found.verts[:-1], True)
        else:
            P = _ham_through(D, pool, s, t, params)
        if P is None:
            raise CoverFailed(f"no route {s}->{t} through the remainder")
        routes[j] = P
    sub = Subdivision(tuple(routes[i] for i in range(inst.k)))
    rep = verify_subdivision(inst, sub)
    if not rep.ok:
        raise CoverFailed(f"assembled routes rejected: {rep.violations[:3]}")
    return sub


def _ham_through(D: Digraph, pool: VertexSet, s: int, t: int, params: PipelineParams) -> Path | None:
    """s -> every vertex of pool -> t, where s may equal t."""
    if s == t:
        within, ends = pool | 1 << s, D.in_adj[s]
    else:
        within, ends = pool | 1 << s | 1 << t, 1 << t
    if within.bit_count() <= params.exact_remainder_cap:
        P = hamiltonian_path(D, s, None, within=within, ends=ends)
    else:
        P = None
        for r in range(params.cover_restarts):
            rng = np.random.default_rng([params.seed, r, 47])
            P = heuristic_hamiltonian_path(D, within, rng, start=s, end=None if s == t else t)
            if P is not None and (s != t or D.has_arc(P.last, s)):
                break
            P = None
    if P is None:
        return None
    return Path(P.verts + (s,)) if s == t else P


def _cover_exact(D, skel, active, need, rest, params) -> dict[int, tuple[Absorber, Path]]:
    choices = [skel.classes[i].members for i in active]
    budget = SearchBudget(node_limit=params.link_node_limit, time_limit=30.0)
    for combo in itertools.islice(itertools.product(*choices), params.combo_limit):
        demands = [RouteDemand(a.z[1], a.z[2], need[i] + 1) for i, a in zip(active, combo)]
        res = solve_demands(D, rest, demands, budget)
        if isinstance(res, list):
            return {i: (a, Path(p.verts[1:-1])) for i, a, p in zip(active, combo, res)}
    raise CoverFailed("no absorbable cover of the remainder")


def _cover_heuristic(D, skel, active, need, rest, params) -> dict[int, tuple[Absorber, Path]]:
    if len(active) == 1:
        i = active[0]
        for a in skel.classes[i].members:
            for r in range(params.cover_restarts):
                rng = np.random.default_rng([params.seed, r, 41, a.z[1]])
                within = rest | (1 << a.z[1]) | (1 << a.z[2])
                P = heuristic_hamiltonian_path(D, within, rng, start=a.z[1], end=a.z[2])
                if P is not None:
                    return {i: (a, Path(P.verts[1:-1]))}
        raise CoverFailed("no Hamiltonian path between absorber ends")
    for r in range(params.cover_restarts):
        rng = np.random.default_rng([params.seed, r, 43])
        P = heuristic_hamiltonian_path(D, rest, rng)
        if P is None:
            continue
        for order in itertools.islice(itertools.permutations(active), 120):
            pos = 0
            got = {}
            for i in order:
                seg = Path(P.verts[pos: pos + need[i]])
                pos += need[i]
                pick = next((a for a in skel.classes[i].members if a.absorbs(D, seg.first, seg.last)), None)
                if pick is None:
                    break
                got[i] = (pick, seg)
            if len(got) == len(active):
                return got
    raise CoverFailed("no Hamiltonian cover split into absorbable segments")


@dataclass
class AbsorptionOutcome:
    subdivision: Subdivision | None
    error: str | None
    report: dict


def solve_absorption(inst: Instance, params: PipelineParams, stable: bool = True, timings: bool = False) -> AbsorptionOutcome:
    """Run the whole pipeline; failures are reported, never raised."""
    report: dict = {"stage": "skeleton"}
    t0 = time.perf_counter()
    clock = {}
    try:
        skel = build_skeleton(inst, params, stable)
        clock["skeleton"] = time.perf_counter() - t0
        report.update(
            family_size=len(skel.family),
            coverage_relaxed=skel.coverage_relaxed,
            family_attempts=skel.stats.get("attempts"),
            coverage_histogram={str(k): v for k, v in skel.stats.get("histogram", {}).items()},
            shells=len(skel.shells),
            short_routes=len(skel.routes),
        )
        report["stage"] = "cover"
        t1 = time.perf_counter()
        sub = cover_and_assemble(inst, skel, params)
        clock["cover"] = time.perf_counter() - t1
        report["stage"] = "done"
        if timings:
            report["timings"] = clock
        return AbsorptionOutcome(sub, None, report)
    except PipelineError as exc:
        report["error"] = f"{type(exc).__name__}: {exc}"
        if timings:
            report["timings"] = clock
        return AbsorptionOutcome(None, report["error"], report)

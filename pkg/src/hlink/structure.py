"""Structure detection: robust expansion, the extremal condition, the
four-part extremal partition, exceptional-vertex types and pair classes.

Threshold rule used throughout: a count ``c`` meets a real threshold ``x``
from above when ``c >= ceil(x - 1e-9)`` and from below when
``c <= x + 1e-9``.  The 1e-9 slack absorbs binary rounding of products such
as 0.3 * 20 so that exact integers compare as integers.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .digraph import Digraph, VertexSet, arcs_between, full_set, iter_members, mask_of, members
from .linkage import Instance

TOL = 1e-9
EXPANDER_EXACT_CAP = 20
EC_EXACT_CAP = 16


def ceil_count(x: float) -> int:
    return max(0, math.ceil(x - TOL))


def at_most(count: int, x: float) -> bool:
    return count <= x + TOL


def robust_out_neighbourhood(D: Digraph, S: VertexSet, nu: float) -> VertexSet:
    """Vertices with at least ceil(nu*n) in-neighbours inside S."""
    if nu <= 0:
        raise ValueError("nu must be positive")
    need = ceil_count(nu * D.n)
    out = 0
    for x in range(D.n):
        if (D.in_adj[x] & S).bit_count() >= need:
            out |= 1 << x
    return out


@dataclass
class ExpansionReport:
    nu: float
    tau: float
    mode: str
    verdict: bool
    worst_set: VertexSet | None = None
    deficit: float = 0.0
    checked: int = 0
    caveat: bool = False

    def to_json_obj(self) -> dict:
        return {
            "nu": self.nu,
            "tau": self.tau,
            "mode": self.mode,
            "verdict": "pass" if self.verdict else "fail",
            "worst_set": None if self.worst_set is None else members(self.worst_set),
            "deficit": self.deficit,
            "sets_checked": self.checked,
            "caveat": self.caveat,
        }


def _window(n: int, tau: float) -> tuple[int, int]:
    lo = math.floor(tau * n + TOL) + 1
    hi = math.ceil((1 - tau) * n - TOL) - 1
    return lo, hi


def check_robust_outexpander(
    D: Digraph,
    nu: float,
    tau: float,
    mode: str = "exact",
    samples: int = 2000,
    seed: int = 0,
    exact_cap: int = EXPANDER_EXACT_CAP,
) -> ExpansionReport:
    """Test |RN(S)| >= |S| + nu*n for every S with tau*n < |S| < (1-tau)*n.

    Exact mode scans every set in the window (n <= ``exact_cap``) and on
    failure reports the set with the largest deficit, ties going to the
    lexicographically least sorted member list.  Sampled mode checks random
    sets only and flags its verdict as non-certifying.
    """
    n = D.n
    lo, hi = _window(n, tau)
    need = ceil_count(nu * n)
    if mode == "exact":
        if n > exact_cap:
            raise ValueError(f"exact expansion check is capped at n={exact_cap}")
        masks = np.arange(1 << n, dtype=np.uint32)
        sizes = np.bitwise_count(masks)
        masks = masks[(sizes >= lo) & (sizes <= hi)]
        sizes = np.bitwise_count(masks).astype(np.int64)
        rn = np.zeros(len(masks), dtype=np.int64)
        for x in range(n):
            rn += np.bitwise_count(masks & np.uint32(D.in_adj[x])) >= need
        deficit = sizes + nu * n - rn
        bad = deficit > TOL
        rep = ExpansionReport(nu, tau, "exact", not bad.any(), checked=int(len(masks)))
        if bad.any():
            top = deficit.max()
            tied = [int(m) for m in masks[deficit >= top - TOL]]
            rep.worst_set = min(tied, key=members)
            rep.deficit = float(top)
        return rep
    if mode != "sampled":
        raise ValueError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    rep = ExpansionReport(nu, tau, "sampled", True, caveat=True)
    if lo > hi:
        return rep
    for _ in range(samples):
        size = int(rng.integers(lo, hi + 1))
        S = mask_of(int(x) for x in rng.choice(n, size=size, replace=False))
        rn = robust_out_neighbourhood(D, S, nu).bit_count()
        d = size + nu * n - rn
        rep.checked += 1
        if d > TOL and (rep.worst_set is None or d > rep.deficit):
            rep.verdict = False
            rep.worst_set, rep.deficit = S, d
    return rep


@dataclass(frozen=True)
class ECWitness:
    U1: VertexSet
    U2: VertexSet
    crossing: int
    eps_prime: float

    def to_json_obj(self) -> dict:
        return {
            "U1": members(self.U1),
            "U2": members(self.U2),
            "crossing": self.crossing,
            "eps_prime": self.eps_prime,
        }


@dataclass(frozen=True)
class ECNotFound:
    certified: bool
    eps_prime: float


def ec_bounds(n: int, eps_prime: float) -> tuple[int, float]:
    """Minimum set size and maximum crossing arc count."""
    return ceil_count((0.5 - eps_prime) * n), (eps_prime * n) ** 2


def witness_ok(D: Digraph, w: ECWitness) -> bool:
    m, bound = ec_bounds(D.n, w.eps_prime)
    cross = arcs_between(D, w.U1, w.U2)
    return (
        w.U1.bit_count() >= m
        and w.U2.bit_count() >= m
        and cross == w.crossing
        and at_most(cross, bound)
    )


def _best_partner(D: Digraph, U1: VertexSet, m: int) -> tuple[int, VertexSet]:
    counts = sorted(((D.in_adj[v] & U1).bit_count(), v) for v in range(D.n))
    chosen = counts[:m]
    return sum(c for c, _ in chosen), mask_of(v for _, v in chosen)


def _grow(D: Digraph, U1: VertexSet, U2: VertexSet, eps_prime: float) -> tuple[VertexSet, VertexSet, int]:
    """Enlarge a witness while each step adds at most eps'*n crossing arcs
    and the total stays within bound.  Cheapest step first, U1 before U2,
    lowest index first."""
    n = D.n
    _, bound = ec_bounds(n, eps_prime)
    step_cap = eps_prime * n
    cross = arcs_between(D, U1, U2)
    while True:
        best = None
        for x in iter_members(full_set(n) & ~U1):
            c = (D.out_adj[x] & U2).bit_count()
            if best is None or c < best[0]:
                best = (c, 0, x)
        for y in iter_members(full_set(n) & ~U2):
            c = (D.in_adj[y] & U1).bit_count()
            if best is None or c < best[0]:
                best = (c, 1, y)
        if best is None:
            break
        c, side, v = best
        if not at_most(c, step_cap) or not at_most(cross + c, bound):
            break
        if side == 0:
            U1 |= 1 << v
        else:
            U2 |= 1 << v
        cross += c
    return U1, U2, cross


def detect_ec(
    D: Digraph,
    eps_prime: float,
    mode: str = "exact",
    seed: int = 0,
    restarts: int = 12,
    grow: bool = True,
) -> ECWitness | ECNotFound:
    """Search for sets U1, U2 of size >= (1/2 - eps')n with at most (eps'n)^2 arcs from U1 to U2.

    Crossing arcs only increase as the sets grow, so it suffices to look at
    sets of exactly the minimum size; for a fixed U1 the best U2 is the m
    vertices with fewest in-neighbours in U1.  Exact mode therefore scans
    every U1 of minimum size in lexicographic order.  Heuristic mode runs a
    seeded swap local search from several starting sets; its NotFound is
    not a certificate.  A found witness is enlarged by cheap additions.
    """
    n = D.n
    m, bound = ec_bounds(n, eps_prime)
    found = None
    if mode == "exact":
        if n > EC_EXACT_CAP:
            raise ValueError(f"exact EC search is capped at n={EC_EXACT_CAP}")
        for combo in itertools.combinations(range(n), m):
            U1 = mask_of(combo)
            cost, U2 = _best_partner(D, U1, m)
            if at_most(cost, bound):
                found = (U1, U2)
                break
        if found is None:
            return ECNotFound(True, eps_prime)
    elif mode == "heuristic":
        found = _ec_local_search(D, m, bound, seed, restarts)
        if found is None:
            return ECNotFound(False, eps_prime)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    U1, U2 = found
    if grow:
        U1, U2, cross = _grow(D, U1, U2, eps_prime)
    else:
        cross = arcs_between(D, U1, U2)
    return ECWitness(U1, U2, cross, eps_prime)


def _ec_local_search(D: Digraph, m: int, bound: float, seed: int, restarts: int):
    n = D.n
    if m > n:
        return None
    A = np.zeros((n, n), dtype=np.int64)
    for u, v in D.arcs():
        A[u, v] = 1
    rng = np.random.default_rng(seed)
    outdeg = A.sum(axis=1)

    starts = [list(np.lexsort((np.arange(n), outdeg))[:m])]
    for v in rng.permutation(n)[: max(1, restarts // 2)]:
        closed = [int(v)] + members(D.out_adj[int(v)])
        extra = [int(x) for x in rng.permutation(n) if int(x) not in closed]
        starts.append((closed + extra)[:m])
    while len(starts) < restarts:
        starts.append([int(x) for x in rng.permutation(n)[:m]])

    def score(c: np.ndarray) -> int:
        return int(np.partition(c, m - 1)[:m].sum()) if m > 0 else 0

    for init in starts:
        inside = np.zeros(n, dtype=bool)
        inside[init] = True
        c = A[inside].sum(axis=0)
        cur = score(c)
        for _ in range(4 * n):
            if at_most(cur, bound):
                break
            improved = False
            for u in rng.permutation(np.flatnonzero(inside)):
                outs = np.flatnonzero(~inside)
                trial = c[None, :] - A[u][None, :] + A[outs]
                part = np.partition(trial, m - 1, axis=1)[:, :m].sum(axis=1)
                j = int(np.argmin(part))
                if part[j] < cur:
                    inside[u] = False
                    inside[outs[j]] = True
                    c = trial[j]
                    cur = int(part[j])
                    improved = True
                    break
            if not improved:
                break
        if at_most(cur, bound):
            U1 = mask_of(int(x) for x in np.flatnonzero(inside))
            _, U2 = _best_partner(D, U1, m)
            return U1, U2
    return None


class AuditFailed(Exception):
    def __init__(self, msg: str, partition: "ExtremalPartition"):
        super().__init__(msg)
        self.partition = partition


@dataclass
class ExtremalPartition:
    W: tuple[VertexSet, VertexSet, VertexSet, VertexSet]
    case: str
    audits: dict = field(default_factory=dict)
    refined: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(a["deficit"] <= TOL for a in self.audits.values())

    def failures(self) -> list[str]:
        return [k for k, a in self.audits.items() if a["deficit"] > TOL]

    def to_json_obj(self) -> dict:
        return {
            "W": [members(w) for w in self.W],
            "case": self.case,
            "audits": self.audits,
            "refined": self.refined,
        }


CASE_TINY = "tiny-overlap"
CASE_HUGE = "huge-overlap"
CASE_MIDDLE = "middle"


def _audit(required: float, actual: float) -> dict:
    return {"required": required, "actual": actual, "deficit": max(0.0, required - actual)}


def ec1_audits(D: Digraph, W: tuple[int, int, int, int], eps: float) -> dict:
    """Numeric checks of the four-part structure; deficit 0 means satisfied.

    (A) arcs W_i -> W_{i+1} cyclically, (B) arcs inside W_1 and W_3, (C) arcs
    both ways between W_2 and W_4, plus the two size-balance conditions.
    """
    n = D.n
    slack = eps * n * n
    size = [w.bit_count() for w in W]
    out = {}
    for i in range(4):
        j = (i + 1) % 4
        out[f"A{i + 1}{j + 1}"] = _audit(size[i] * size[j] - slack, arcs_between(D, W[i], W[j]))
    for i in (0, 2):
        out[f"B{i + 1}"] = _audit(size[i] ** 2 - slack, arcs_between(D, W[i], W[i]))
    out["C24"] = _audit(size[1] * size[3] - slack, arcs_between(D, W[1], W[3]))
    out["C42"] = _audit(size[1] * size[3] - slack, arcs_between(D, W[3], W[1]))
    for name, a, b in (("size13", 0, 2), ("size24", 1, 3)):
        gap = abs(size[a] - size[b])
        out[name] = {"required": eps * n, "actual": gap, "deficit": max(0.0, gap - eps * n)}
    return out


def classify_ec1(
    D: Digraph,
    witness: ECWitness,
    eps1: float,
    eps: float,
    strict: bool = True,
) -> ExtremalPartition:
    """Turn an extremal witness into the four-part partition W1..W4.

    Case by overlap U0 = U1 & U2: at most eps1*n gives W1 = U1-U0, W3 = U2-U0
    with the rest split by index into W2 (lower half) and W4; at least
    (1/2-eps1)n gives W2 = U0 minus its lowest vertices down to
    ceil((1/2-eps1)n) and W4 = everything else; otherwise W1 = U1-U0,
    W2 = V-(U1|U2), W3 = U2-U0, W4 = U0.
    """
    n = D.n
    V = full_set(n)
    U0 = witness.U1 & witness.U2
    o = U0.bit_count()
    if at_most(o, eps1 * n):
        case = CASE_TINY
        W1 = witness.U1 & ~U0
        W3 = witness.U2 & ~U0
        rest = members(V & ~W1 & ~W3)
        half = (len(rest) + 1) // 2
        W2, W4 = mask_of(rest[:half]), mask_of(rest[half:])
    elif o >= ceil_count((0.5 - eps1) * n):
        case = CASE_HUGE
        target = ceil_count((0.5 - eps1) * n)
        drop = members(U0)[: o - target]
        W2 = U0 & ~mask_of(drop)
        W1 = W3 = 0
        W4 = V & ~W2
    else:
        case = CASE_MIDDLE
        W1 = witness.U1 & ~U0
        W2 = V & ~(witness.U1 | witness.U2)
        W3 = witness.U2 & ~U0
        W4 = U0
    W = (W1, W2, W3, W4)
    part = ExtremalPartition(W, case, ec1_audits(D, W, eps))
    size = [w.bit_count() for w in W]
    if case == CASE_TINY:
        part.refined = {"W1,W3 >= (1/2 - eps/2)n": min(size[0], size[2]) >= (0.5 - eps / 2) * n - TOL}
    elif case == CASE_HUGE:
        part.refined = {
            "W2 = (1/2 - eps1)n": abs(size[1] - (0.5 - eps1) * n) < 1,
            "W4 = (1/2 + eps1)n": abs(size[3] - (0.5 + eps1) * n) < 1,
        }
    else:
        part.refined = {
            "eps1*n/2 <= W_i <= (1/2 - eps1/4)n": all(
                eps1 * n / 2 - TOL <= s <= (0.5 - eps1 / 4) * n + TOL for s in size
            )
        }
    if strict and not part.ok:
        raise AuditFailed(f"audits violated: {part.failures()}", part)
    return part


@dataclass(frozen=True)
class VertexTyping:
    E1: VertexSet
    E2: VertexSet
    E3: VertexSet
    E4: VertexSet


def type_thresholds(eps: float) -> tuple[float, float]:
    """Fractions for the weak (types 1, 3) and strong (types 2, 4) deficiency tests.

    The weak fraction is 1 - sqrt(10 eps), raised to eps^(1/3) when that is
    larger so that strong deficiency always implies weak deficiency.
    """
    strong = eps ** (1 / 3)
    weak = max(1 - math.sqrt(10 * eps), strong)
    return weak, strong


def type_vertices(D: Digraph, W1: VertexSet, W2: VertexSet, eps: float) -> VertexTyping:
    """Vertices of W1 (resp. W2) with few in/out-neighbours on their own side
    (types 1, 2) or few two-way neighbours on the other side (types 3, 4)."""
    if W1 & W2:
        raise ValueError("W1 and W2 must be disjoint")
    weak, strong = type_thresholds(eps)
    E = [0, 0, 0, 0]
    for own, other in ((W1, W2), (W2, W1)):
        a, b = own.bit_count(), other.bit_count()
        for u in iter_members(own):
            low = min((D.out_adj[u] & own).bit_count(), (D.in_adj[u] & own).bit_count())
            s = (D.out_adj[u] & D.in_adj[u] & other).bit_count()
            if at_most(low, weak * a):
                E[0] |= 1 << u
            if at_most(low, strong * a):
                E[1] |= 1 << u
            if at_most(s, weak * b):
                E[2] |= 1 << u
            if at_most(s, strong * b):
                E[3] |= 1 << u
    return VertexTyping(*E)


V1, V2, V3, V4 = 1, 2, 4, 8


def classify_pairs(D: Digraph, inst: Instance, U1: VertexSet, U2: VertexSet) -> list[int]:
    """Membership bitmask (bits V1..V4) for each terminal pair.

    With start v and end v': V1 (V2) needs 4k out-neighbours of v and 4k
    in-neighbours of v' in U1 (U2); V3 needs the out-neighbours in U1 and the
    in-neighbours in U2; V4 the reverse.
    """
    need = 4 * inst.k
    sets = (U1, U2)
    out = []
    for i in range(inst.k):
        v, w = inst.terminals(i)
        go = [(D.out_adj[v] & U).bit_count() >= need for U in sets]
        come = [(D.in_adj[w] & U).bit_count() >= need for U in sets]
        mask = 0
        if go[0] and come[0]:
            mask |= V1
        if go[1] and come[1]:
            mask |= V2
        if go[0] and come[1]:
            mask |= V3
        if go[1] and come[0]:
            mask |= V4
        out.append(mask)
    return out

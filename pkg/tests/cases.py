"""Random accept/reject subdivision cases for verifier cross-checks."""

from __future__ import annotations

import random

from hlink.digraph import Digraph, Path
from hlink.linkage import Instance, Pattern, Subdivision

MUTATIONS = (
    "none",
    "drop-arc",
    "drop-vertex",
    "swap-inner",
    "move-vertex",
    "flip-cycle",
    "bump-length",
    "share-inner",
    "wrong-end",
    "branch-inside",
    "reverse",
    "drop-route",
)


def _pattern(rng: random.Random, n: int) -> Pattern:
    k = rng.randint(1, 3)
    h = rng.randint(1, min(n, 2 * k))
    while True:
        arcs = []
        for _ in range(k):
            t = rng.randrange(h)
            head = t if h == 1 or rng.random() < 0.15 else rng.randrange(h)
            arcs.append((t, head))
        if len({v for a in arcs for v in a}) == h:
            return Pattern(h, tuple(arcs))


def random_case(rng: random.Random, max_n: int = 14) -> tuple[Instance, Subdivision, str]:
    """A valid subdivision of a random host, then (usually) one mutation."""
    while True:
        n = rng.randint(3, max_n)
        H = _pattern(rng, n)
        f = rng.sample(range(n), H.h_verts)
        free = [v for v in range(n) if v not in f]
        rng.shuffle(free)
        loops = [i for i in range(H.k) if H.is_loop(i)]
        if len(free) < len(loops):
            continue
        blocks = [[] for _ in range(H.k)]
        for i in loops:
            blocks[i].append(free.pop())
        for v in free:
            blocks[rng.randrange(H.k)].append(v)
        routes = []
        for i, block in enumerate(blocks):
            s, e = f[H.arcs[i][0]], f[H.arcs[i][1]]
            if H.is_loop(i):
                routes.append(Path(tuple([s] + block), True))
            else:
                routes.append(Path(tuple([s] + block + [e])))
        arcs = {a for P in routes for a in P.arcs()}
        density = rng.random() * 0.5
        arcs |= {(u, v) for u in range(n) for v in range(n) if u != v and rng.random() < density}
        break
    lengths = [P.arc_length for P in routes]
    kind = "none" if rng.random() < 0.4 else rng.choice(MUTATIONS[1:])
    routes = list(routes)
    i = rng.randrange(len(routes))
    verts = list(routes[i].verts)
    cyc = routes[i].is_cycle
    if kind == "drop-arc":
        route_arcs = routes[i].arcs()
        if route_arcs:
            arcs.discard(rng.choice(route_arcs))
    elif kind == "drop-vertex" and len(verts) > 2:
        del verts[rng.randrange(1, len(verts) - 1)]
    elif kind == "swap-inner" and len(verts) > 3:
        a, b = rng.sample(range(1, len(verts) - 1), 2)
        verts[a], verts[b] = verts[b], verts[a]
    elif kind == "move-vertex" and len(routes) > 1 and len(verts) > 2:
        j = rng.choice([x for x in range(len(routes)) if x != i])
        v = verts.pop(rng.randrange(1, len(verts) - 1))
        other = list(routes[j].verts)
        other.insert(rng.randint(1, max(1, len(other) - 1)), v)
        routes[j] = Path(tuple(other), routes[j].is_cycle)
    elif kind == "flip-cycle":
        cyc = not cyc
    elif kind == "bump-length":
        lengths[i] += rng.choice((-1, 1))
    elif kind == "share-inner" and len(routes) > 1:
        j = rng.choice([x for x in range(len(routes)) if x != i])
        inner = list(routes[j].verts[1:-1] if not routes[j].is_cycle else routes[j].verts[1:])
        if inner:
            verts.insert(rng.randint(1, max(1, len(verts) - 1)), rng.choice(inner))
    elif kind == "wrong-end":
        verts[-1] = rng.randrange(n)
    elif kind == "branch-inside" and len(f) > 2:
        verts.insert(1, rng.choice(f))
    elif kind == "reverse":
        verts.reverse()
    routes[i] = Path(tuple(verts), cyc)
    if kind == "drop-route":
        routes.pop()
    D = Digraph(n, sorted(arcs))
    inst = Instance(D, H, tuple(f), tuple(lengths))
    return inst, Subdivision(tuple(routes)), kind


def random_small_instance(rng: random.Random, max_n: int = 8, density: float | None = None) -> Instance:
    """Random host, pattern and a spanning-consistent length vector."""
    while True:
        n = rng.randint(3, max_n)
        H = _pattern(rng, n)
        free = n - H.h_verts
        loops = sum(H.is_loop(i) for i in range(H.k))
        if free < loops:
            continue
        inner = [1 if H.is_loop(i) else 0 for i in range(H.k)]
        for _ in range(free - loops):
            inner[rng.randrange(H.k)] += 1
        p = rng.uniform(0.3, 0.9) if density is None else density
        arcs = [(u, v) for u in range(n) for v in range(n) if u != v and rng.random() < p]
        f = tuple(rng.sample(range(n), H.h_verts))
        return Instance(Digraph(n, arcs), H, f, tuple(x + 1 for x in inner))

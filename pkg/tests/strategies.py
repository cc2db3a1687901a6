"""Shared hypothesis strategies and small builders."""

import itertools

from hypothesis import strategies as st

from hlink.digraph import Digraph


@st.composite
def digraphs(draw, min_n=1, max_n=8, density=None):
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(n) if u != v]
    if density is None:
        arcs = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    else:
        keep = draw(st.lists(st.floats(0, 1), min_size=len(pairs), max_size=len(pairs)))
        arcs = [p for p, x in zip(pairs, keep) if x < density]
    return Digraph(n, arcs)


def clique_arcs(vs):
    return list(itertools.permutations(vs, 2))


def complete(n):
    return Digraph(n, clique_arcs(range(n)))


def two_cliques(a, b):
    return Digraph(a + b, clique_arcs(range(a)) + clique_arcs(range(a, a + b)))


def bicomplete(a, b=None):
    """Sides 0..a-1 and a..a+b-1 with every cross arc in both directions."""
    b = a if b is None else b
    arcs = [(u, v) for u in range(a) for v in range(a, a + b)]
    arcs += [(v, u) for u, v in arcs]
    return Digraph(a + b, arcs)

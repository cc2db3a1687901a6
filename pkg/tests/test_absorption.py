import itertools
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlink.absorption import (
    Absorber,
    AbsorberFamily,
    CoverageUnreachable,
    CoverFailed,
    NoConnector,
    NotAbsorbable,
    NotASegment,
    NotStable,
    PartitionUnreachable,
    PipelineParams,
    absorb,
    build_absorbing_path,
    build_skeleton,
    connect,
    cover_and_assemble,
    enumerate_absorbers,
    family_coverage_audit,
    heuristic_hamiltonian_path,
    partition_family,
    select_family,
    solve_absorption,
)
from hlink.digraph import Digraph, Path, full_set, mask_of
from hlink.generators import gen_complete, gen_random_floor, random_instance
from hlink.linkage import Instance, Pattern, branch_vertices, verify_subdivision
from oracles import arc_set, brute_absorbers
from strategies import digraphs, two_cliques

ONE_ARC = Pattern(2, ((0, 1),))
P = PipelineParams()


def _contains_run(seq, run):
    return any(tuple(seq[i:i + len(run)]) == tuple(run) for i in range(len(seq)))


def test_connect_tiers():
    K = gen_complete(6)
    assert connect(K, Path((0,)), Path((1,))).verts == (0, 1)
    # 0 -> 2 -> 1 is the only way out of 0
    D = Digraph(5, [(0, 2), (2, 1), (3, 4), (4, 3), (1, 3)])
    assert connect(D, Path((0,)), Path((1,))).verts == (0, 2, 1)
    chain = Digraph(4, [(0, 2), (2, 3), (3, 1)])
    assert connect(chain, Path((0,)), Path((1,))).verts == (0, 2, 3, 1)


def test_connect_fails_when_everything_is_forbidden():
    D = Digraph(5, [(0, 2), (2, 1), (0, 3), (3, 4), (4, 1)])
    with pytest.raises(NoConnector):
        connect(D, Path((0,)), Path((1,)), mask_of([2, 3, 4]))


@given(digraphs(min_n=4, max_n=8), st.data())
def test_connect_output_is_short_and_avoids_forbidden(D, data):
    b, c = data.draw(st.lists(st.integers(0, D.n - 1), min_size=2, max_size=2, unique=True))
    forbidden = mask_of(data.draw(st.sets(st.integers(0, D.n - 1)))) & ~(1 << b) & ~(1 << c)
    try:
        Q = connect(D, Path((b,)), Path((c,)), forbidden)
    except NoConnector:
        # no b -> c walk on at most four vertices outside forbidden
        ok = {x for x in range(D.n) if not forbidden >> x & 1} - {b, c}
        arcs = arc_set(D)
        assert (b, c) not in arcs
        assert not any((b, x) in arcs and (x, c) in arcs for x in ok)
        assert not any((b, x) in arcs and (x, y) in arcs and (y, c) in arcs for x in ok for y in ok if x != y)
        return
    assert Q.first == b and Q.last == c and len(Q) <= 4 and Q.is_valid_in(D)
    assert not Q.vertex_set() & forbidden


def test_enumerate_absorbers_complete():
    K8 = gen_complete(8)
    found = enumerate_absorbers(K8, 0, 0, 1)
    assert len(found) == 360 == 6 * 5 * 4 * 3
    assert {a.z for a in found} == brute_absorbers(8, arc_set(K8), set(), 0, 1)


def test_enumerate_absorbers_empty_cases():
    assert enumerate_absorbers(Digraph(8, []), 0, 0, 1) == []
    K8 = gen_complete(8)
    no_in = Digraph(8, [a for a in K8.arcs() if a[1] != 0])
    assert enumerate_absorbers(no_in, 0, 0, 1) == []


@given(digraphs(min_n=6, max_n=8), st.data())
def test_enumerate_absorbers_matches_brute_force(D, data):
    u = data.draw(st.integers(0, D.n - 1))
    v = data.draw(st.integers(0, D.n - 1))
    excluded = data.draw(st.sets(st.integers(0, D.n - 1), max_size=2))
    got = {a.z for a in enumerate_absorbers(D, mask_of(excluded), u, v)}
    assert got == brute_absorbers(D.n, arc_set(D), excluded, u, v)
    assert all(Absorber(z).absorbs(D, u, v) for z in got)


def test_select_family_complete_60():
    D = gen_complete(60)
    params = PipelineParams(gamma=0.1)
    fam = select_family(D, 0, params)
    assert 1 <= len(fam) <= 6 and fam.is_disjoint()
    assert all(a.is_valid_in(D) for a in fam.members)
    pool = full_set(60) & ~fam.vertex_set
    table = fam.coverage(D, pool)
    assert len(table) == pool.bit_count() ** 2
    assert min(table.values()) >= 2
    worst, _, _ = family_coverage_audit(D, fam, 0)
    assert worst >= 2
    again = select_family(D, 0, params)
    assert again == fam


def test_select_family_unreachable_target():
    D = gen_complete(30)
    most = len(enumerate_absorbers(D, 0, 0, 1))
    with pytest.raises(CoverageUnreachable) as err:
        select_family(D, 0, PipelineParams(retries=3), t_min=most + 1)
    assert err.value.worst_pair is not None


def test_select_family_respects_exclusion():
    D = gen_complete(40)
    excluded = mask_of(range(10))
    fam = select_family(D, excluded, P)
    assert not fam.vertex_set & excluded


def _ten_disjoint_absorbers():
    D = gen_complete(50)
    members = tuple(Absorber(tuple(range(4 * i, 4 * i + 4))) for i in range(10))
    return D, AbsorberFamily(members)


def test_partition_family_examples():
    D, F = _ten_disjoint_absorbers()
    whole = partition_family(F, [40], [], P, D)
    assert len(whole) == 1 and set(whole[0].members) == set(F.members)
    pool = list(range(40, 50))
    pairs = [(u, v) for u in pool for v in pool]
    assert all(len(F.absorbers_of(D, u, v)) >= 5 for u, v in pairs)
    parts = partition_family(F, [24, 24], pairs, P, D)
    assert sorted(a.z for part in parts for a in part.members) == sorted(a.z for a in F.members)
    for part in parts:
        assert all(part.absorbers_of(D, u, v) for u, v in pairs)
    with pytest.raises(PartitionUnreachable):
        partition_family(F, [3, 40], [], P, D)
    with pytest.raises(PartitionUnreachable):
        partition_family(AbsorberFamily(F.members[:1]), [8, 8], [], P, D)


def test_absorbing_path_examples():
    K = gen_complete(30)
    single = AbsorberFamily((Absorber((0, 1, 2, 3)),))
    assert build_absorbing_path(K, single).verts == (0, 1, 2, 3)
    fam = AbsorberFamily(tuple(Absorber(tuple(range(4 * i, 4 * i + 4))) for i in range(3)))
    L = build_absorbing_path(K, fam)
    assert len(L) <= 3 * 4 + 2 * 3 and L.is_valid_in(K)
    assert all(_contains_run(L.verts, a.z) for a in fam.members)


def test_absorbing_path_blocked():
    arcs = [(0, 1), (1, 2), (2, 3), (4, 5), (5, 6), (6, 7), (3, 8), (8, 4)]
    D = Digraph(9, arcs)
    fam = AbsorberFamily((Absorber((0, 1, 2, 3)), Absorber((4, 5, 6, 7))))
    assert build_absorbing_path(D, fam).verts == (0, 1, 2, 3, 8, 4, 5, 6, 7)
    with pytest.raises(NoConnector):
        build_absorbing_path(D, fam, forbidden=1 << 8)


def test_absorb_examples():
    a = Absorber((1, 2, 3, 4))
    K = gen_complete(9)
    shell = Path((0, 1, 2, 3, 4, 5))
    out = absorb(K, shell, a, Path((6,)))
    assert out.verts == (0, 1, 2, 6, 3, 4, 5)
    out3 = absorb(K, shell, a, Path((6, 7, 8)))
    assert out3.arc_length == shell.arc_length + 3
    with pytest.raises(NotAbsorbable):
        absorb(K, shell, a, Path((5, 6)))
    with pytest.raises(NotASegment):
        absorb(K, Path((0, 1, 3, 2, 4, 5)), a, Path((6,)))


@given(st.integers(0, 10**6))
def test_absorb_invariants(seed):
    rng = random.Random(seed)
    n = rng.randint(9, 14)
    K = gen_complete(n)
    perm = rng.sample(range(n), n)
    cut = rng.randint(6, n - 1)
    shell_verts, rest = perm[:cut], perm[cut:]
    i = rng.randint(0, cut - 4)
    z = tuple(shell_verts[i:i + 4])
    seg = Path(tuple(rest[: rng.randint(1, len(rest))]))
    shell = Path(tuple(shell_verts))
    out = absorb(K, shell, Absorber(z), seg)
    assert (out.first, out.last) == (shell.first, shell.last)
    assert out.vertex_set() == shell.vertex_set() | seg.vertex_set()
    assert out.arc_length - shell.arc_length == len(seg)
    assert out.is_valid_in(K)


def test_skeleton_single_long_arc():
    inst = Instance(gen_complete(40), ONE_ARC, (0, 1), (39,))
    skel = build_skeleton(inst, P)
    assert list(skel.shells) == [0] and not skel.routes
    shell = skel.shells[0]
    assert shell.first == 0 and shell.last == 1 and shell.arc_length <= 39
    assert all(_contains_run(shell.verts, a.z) for a in skel.classes[0].members)
    assert full_set(40) & ~skel.used
    assert skel.used.bit_count() <= len(skel.family) * 4 + 2 + 3 * len(skel.family) + 4


def test_skeleton_short_route():
    H = Pattern(4, ((0, 1), (2, 3)))
    inst = Instance(gen_complete(20), H, (0, 1, 2, 3), (4, 14))
    skel = build_skeleton(inst, P)
    assert skel.routes[0].verts[0] == 0 and skel.routes[0].verts[-1] == 1
    assert skel.routes[0].arc_length == 4 and skel.routes[0].is_valid_in(inst.D)
    lone = Instance(gen_complete(20), ONE_ARC, (0, 1), (4,))
    route = build_skeleton(lone, P).routes[0]
    assert (route.first, route.last, route.arc_length) == (0, 1, 4)


def test_skeleton_refuses_extremal():
    inst = Instance(gen_complete(40), ONE_ARC, (0, 1), (39,))
    with pytest.raises(NotStable):
        build_skeleton(inst, P, stable=False)


def test_cover_complete_14():
    inst = Instance(gen_complete(14), ONE_ARC, (0, 1), (13,))
    out = solve_absorption(inst, P)
    assert out.error is None
    assert verify_subdivision(inst, out.subdivision).ok


def test_cover_without_remainder():
    H = Pattern(4, ((0, 1), (2, 3)))
    inst = Instance(gen_complete(8), H, (0, 1, 2, 3), (3, 3))
    skel = build_skeleton(inst, P)
    assert not full_set(8) & ~skel.used
    sub = cover_and_assemble(inst, skel, P)
    assert sub.routes == tuple(skel.routes[i] for i in range(2))


def test_cover_fails_on_two_cliques():
    D = two_cliques(20, 20)
    inst = Instance(D, ONE_ARC, (0, 1), (39,))
    out = solve_absorption(inst, P)
    assert out.subdivision is None and out.error
    with pytest.raises((CoverFailed, NoConnector, CoverageUnreachable)):
        cover_and_assemble(inst, build_skeleton(inst, P), P)


def test_heuristic_hamiltonian_path_on_dense_hosts():
    for seed in range(5):
        D = gen_random_floor(40, 22, seed)
        rng = np.random.default_rng(seed)
        Q = heuristic_hamiltonian_path(D, full_set(40), rng)
        assert Q is not None and sorted(Q.verts) == list(range(40)) and Q.is_valid_in(D)


def test_pipeline_is_sound_and_deterministic():
    solved = 0
    for n, k, seed in itertools.product((24, 40), (1, 2), range(3)):
        D = gen_random_floor(n, n // 2 + k, seed)
        inst = random_instance(D, k, seed)
        a = solve_absorption(inst, PipelineParams(seed=seed))
        b = solve_absorption(inst, PipelineParams(seed=seed))
        assert a.subdivision == b.subdivision and a.error == b.error
        if a.subdivision is not None:
            assert verify_subdivision(inst, a.subdivision).ok
            assert not branch_vertices(inst) & ~full_set(n)
            solved += 1
    assert solved

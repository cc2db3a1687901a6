import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from hlink.digraph import Digraph, Path, mask_of
from hlink.linkage import (
    Instance,
    Pattern,
    Subdivision,
    branch_vertices,
    validate_instance,
    verify_subdivision,
)
from cases import random_case
from oracles import arc_set, naive_verify
from strategies import complete

ONE_ARC = Pattern(2, ((0, 1),))


def _naive(inst, sub):
    return naive_verify(
        inst.n,
        arc_set(inst.D),
        inst.H.arcs,
        inst.f,
        inst.lengths,
        [P.verts for P in sub.routes],
        [P.is_cycle for P in sub.routes],
    )


def test_pattern_rules():
    with pytest.raises(ValueError):
        Pattern(1, ())
    with pytest.raises(ValueError):
        Pattern(3, ((0, 1),))
    loop = Pattern(1, ((0, 0),))
    assert loop.k == 1 and loop.is_loop(0)
    parallel = Pattern(2, ((0, 1), (0, 1)))
    assert parallel.k == 2


def test_instance_structure_errors():
    K = complete(4)
    with pytest.raises(ValueError):
        Instance(K, ONE_ARC, (0,), (3,))
    with pytest.raises(ValueError):
        Instance(K, ONE_ARC, (0, 9), (3,))
    with pytest.raises(ValueError):
        Instance(K, ONE_ARC, (0, 1), (1, 2))


def test_validate_hamiltonian_path_instance():
    rep = validate_instance(Instance(complete(10), ONE_ARC, (0, 1), (9,)))
    assert rep.ok
    bad = validate_instance(Instance(complete(10), ONE_ARC, (0, 1), (8,)))
    assert not bad.ok
    assert any("spanning" in v for v in bad.violations)


def test_validate_two_arcs_counting():
    H = Pattern(4, ((0, 1), (2, 3)))
    rep = validate_instance(Instance(complete(12), H, (0, 1, 2, 3), (4, 6)))
    assert rep.ok
    assert (4 - 1) + (6 - 1) + H.h_verts == 12


def test_validate_strength_flags():
    inst = Instance(complete(10), Pattern(4, ((0, 1), (2, 3))), (0, 1, 2, 3), (3, 5))
    lax = validate_instance(inst)
    assert lax.ok and lax.warnings
    strict = validate_instance(inst, strict=True)
    assert not strict.ok
    assert validate_instance(Instance(complete(10), ONE_ARC, (0, 1), (9,))).degree_condition
    inj = validate_instance(Instance(complete(5), ONE_ARC, (0, 0), (4,)))
    assert any("injective" in v for v in inj.violations)


def test_verify_examples():
    K6 = complete(6)
    inst = Instance(K6, ONE_ARC, (0, 1), (5,))
    assert verify_subdivision(inst, Subdivision((Path((0, 2, 3, 4, 5, 1)),))).ok
    short = Instance(K6, ONE_ARC, (0, 1), (4,))
    rep = verify_subdivision(short, Subdivision((Path((0, 2, 3, 4, 1)),)))
    assert rep.rules() == {"spanning"}


def test_verify_shared_internal_vertex_reports_both():
    H = Pattern(4, ((0, 1), (2, 3)))
    inst = Instance(complete(7), H, (0, 1, 2, 3), (3, 3))
    sub = Subdivision((Path((0, 4, 5, 1)), Path((2, 5, 6, 3))))
    rep = verify_subdivision(inst, sub)
    assert "disjoint" in rep.rules()
    shared = [r for r, rule, _ in rep.violations if rule == "disjoint"]
    assert shared == [(0, 1)]


def test_verify_loop_and_parallel_arcs():
    loop = Instance(complete(4), Pattern(1, ((0, 0),)), (2,), (4,))
    assert verify_subdivision(loop, Subdivision((Path((2, 0, 1, 3), True),))).ok
    assert "shape" in verify_subdivision(loop, Subdivision((Path((2, 0, 1, 3)),))).rules()
    par = Instance(complete(5), Pattern(2, ((0, 1), (0, 1))), (0, 1), (2, 3))
    assert verify_subdivision(par, Subdivision((Path((0, 2, 1)), Path((0, 3, 4, 1))))).ok


def test_branch_vertices_examples():
    assert branch_vertices(Instance(complete(8), ONE_ARC, (3, 7), (1,))) == mask_of([3, 7])
    assert branch_vertices(Instance(complete(8), Pattern(1, ((0, 0),)), (5,), (3,))) == mask_of([5])
    H = Pattern(6, ((0, 1), (2, 3), (4, 5)))
    assert branch_vertices(Instance(complete(8), H, tuple(range(6)), (1, 1, 3))).bit_count() == 6


def test_instance_json_round_trip():
    inst = Instance(complete(5), Pattern(1, ((0, 0),)), (2,), (5,), 0.2, 0.3)
    again = Instance.from_json_obj(json.loads(inst.to_json()))
    assert again == inst
    with pytest.raises(ValueError):
        Instance.from_json_obj({"digraph": {"n": 2, "arcs": []}})


def test_subdivision_json_round_trip():
    sub = Subdivision((Path((0, 1, 2)), Path((3, 4), True)))
    assert Subdivision.from_json_obj(json.loads(json.dumps(sub.to_json_obj()))) == sub
    with pytest.raises(ValueError):
        Subdivision.from_json_obj({"routes": [[0, 1]], "cycles": [True, False]})


def test_verifier_matches_naive_on_random_cases():
    rng = random.Random(11)
    for _ in range(300):
        inst, sub, kind = random_case(rng)
        assert verify_subdivision(inst, sub).ok == _naive(inst, sub), kind


@given(st.integers(0, 10**6))
def test_deleting_a_route_arc_breaks_acceptance(seed):
    rng = random.Random(seed)
    while True:
        inst, sub, kind = random_case(rng)
        if kind == "none" and verify_subdivision(inst, sub).ok:
            break
    route_arcs = sorted({a for P in sub.routes for a in P.arcs()})
    drop = route_arcs[rng.randrange(len(route_arcs))]
    D = Digraph(inst.n, [a for a in inst.D.arcs() if a != drop])
    weaker = Instance(D, inst.H, inst.f, inst.lengths)
    assert not verify_subdivision(weaker, sub).ok


@given(st.integers(0, 10**6))
def test_accepted_instances_count_exactly(seed):
    rng = random.Random(seed)
    inst, sub, _ = random_case(rng)
    if verify_subdivision(inst, sub).ok:
        assert sum(x - 1 for x in inst.lengths) + inst.H.h_verts == inst.n
        for P, (t, h) in zip(sub.routes, inst.H.arcs):
            if t == h:
                assert len(P.verts) == P.arc_length

import json

import pytest

from hlink.digraph import Digraph
from hlink.generators import blowup_ec1, gen_complete, gen_random_floor, gen_remark2, random_instance
from hlink.linkage import Instance, Pattern, verify_subdivision
from hlink.solver import EXIT_CODES, GAVE_UP, INFEASIBLE, VERIFIED, SolveParams, solve
from strategies import two_cliques

ONE_ARC = Pattern(2, ((0, 1),))


def test_params_validation():
    with pytest.raises(ValueError):
        SolveParams(mode="magic")
    with pytest.raises(ValueError):
        SolveParams(seeds=())
    with pytest.raises(ValueError):
        SolveParams(gamma=0.3, eps_prime=0.2)
    with pytest.raises(ValueError):
        SolveParams(eps=1.0)


def test_exit_codes_are_total():
    assert EXIT_CODES == {VERIFIED: 0, INFEASIBLE: 2, GAVE_UP: 3}


def test_complete_host_is_verified():
    inst = Instance(gen_complete(14), ONE_ARC, (0, 1), (13,))
    out = solve(inst)
    assert out.status == VERIFIED and out.exit_code == 0
    assert verify_subdivision(inst, out.subdivision).ok
    assert out.report["status"] == VERIFIED and out.report["solved_by"]


def test_remark2_is_proven_infeasible():
    r = gen_remark2(12, 1)
    H, f = r.matching_pattern()
    out = solve(Instance(r.D, H, f, (11,)))
    assert out.status == INFEASIBLE and out.exit_code == 2
    assert out.subdivision is None
    assert out.report["exact"]["verdict"] == "infeasible"


def test_spanning_count_mismatch_is_infeasible_without_search():
    out = solve(Instance(gen_complete(10), ONE_ARC, (0, 1), (5,)))
    assert out.status == INFEASIBLE and "exact" not in out.report


def test_structural_violation_raises():
    with pytest.raises(ValueError):
        solve(Instance(gen_complete(6), ONE_ARC, (0, 0), (5,)))


def test_gives_up_above_exact_cap():
    inst = Instance(two_cliques(10, 10), ONE_ARC, (0, 1), (19,))
    out = solve(inst, SolveParams(exact_cap=16))
    assert out.status == GAVE_UP and out.exit_code == 3
    assert "skipped" in out.report["exact"]


def test_budget_exhaustion_gives_up():
    D = gen_random_floor(14, 4, 1, density=0.2)
    out = solve(Instance(D, ONE_ARC, (0, 1), (13,)), SolveParams(mode="exact", budget_nodes=50))
    assert out.status == GAVE_UP and out.report["exact"]["verdict"] == "budget-exhausted"


def test_modes_route_to_one_engine():
    inst = Instance(gen_complete(12), ONE_ARC, (0, 1), (11,))
    assert solve(inst, SolveParams(mode="exact")).report["solved_by"] == "exact"
    ab = solve(inst, SolveParams(mode="absorption"))
    assert "ec" not in ab.report
    assert ab.status in (VERIFIED, GAVE_UP)


def test_extremal_mode_on_blowup():
    D, W = blowup_ec1((10, 10, 10, 10))
    inst = Instance(D, ONE_ARC, (0, 1), (39,))
    out = solve(inst, SolveParams(mode="extremal"))
    assert out.report["ec"]["found"]
    if out.status == VERIFIED:
        assert out.report["solved_by"] == "extremal"
        assert verify_subdivision(inst, out.subdivision).ok
    else:
        assert out.status == GAVE_UP


def test_report_is_deterministic_json():
    D = gen_random_floor(30, 17, 4)
    inst = random_instance(D, 2, 4)
    a = solve(inst, SolveParams(seeds=(4,)))
    b = solve(inst, SolveParams(seeds=(4,)))
    assert json.dumps(a.report, sort_keys=True) == json.dumps(b.report, sort_keys=True)
    assert a.subdivision == b.subdivision
    assert "timings" not in a.report
    timed = solve(inst, SolveParams(seeds=(4,), timings=True))
    assert "timings" in timed.report


def test_auto_mode_never_returns_unverified():
    for n in (20, 30):
        for seed in range(4):
            D = gen_random_floor(n, n // 2 + 2, seed)
            inst = random_instance(D, 2, seed)
            out = solve(inst, SolveParams(seeds=(seed,)))
            assert out.status in (VERIFIED, GAVE_UP, INFEASIBLE)
            if out.status == VERIFIED:
                assert verify_subdivision(inst, out.subdivision).ok
            else:
                assert out.subdivision is None


def test_no_arc_into_source_is_infeasible():
    arcs = [(u, v) for u in range(1, 6) for v in range(1, 6) if u != v] + [(0, v) for v in range(1, 6)]
    D = Digraph(6, arcs)
    out = solve(Instance(D, ONE_ARC, (1, 0), (5,)))
    assert out.status == INFEASIBLE

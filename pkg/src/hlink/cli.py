"""Command-line front end: ``hlink gen | solve | verify | analyze | bench``.

Exit codes: 0 verified (or analysis written), 1 malformed input or usage,
2 proven infeasible or a rejected subdivision, 3 gave up.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path as FsPath

from .digraph import Digraph
from .exact import DEFAULT_EXACT_CAP
from .generators import (
    double_cover,
    gen_complete,
    gen_random_floor,
    gen_remark1,
    gen_remark2,
    gen_remark3,
    petersen_edges,
    random_instance,
)
from .linkage import Instance, Subdivision, verify_subdivision
from .solver import MODES, SolveParams, solve
from .structure import (
    EC_EXACT_CAP,
    EXPANDER_EXACT_CAP,
    AuditFailed,
    ECWitness,
    check_robust_outexpander,
    classify_ec1,
    detect_ec,
)

FAMILIES = ("complete", "remark1", "remark2", "remark3", "random_floor", "double_cover")
BENCH_FAMILIES = ("complete", "random_floor", "remark2")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _unit(name: str):
    def parse(text: str) -> float:
        x = float(text)
        if not 0 < x < 1:
            raise argparse.ArgumentTypeError(f"{name} must lie strictly between 0 and 1")
        return x

    return parse


def _positive_int(text: str) -> int:
    x = int(text)
    if x <= 0:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return x


def _dump(obj, path: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        FsPath(path).write_text(text)


def _load_json(path: str):
    try:
        text = sys.stdin.read() if path == "-" else FsPath(path).read_text()
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _load_instance(path: str) -> Instance:
    obj = _load_json(path)
    try:
        return Instance.from_json_obj(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed instance {path}: {exc}") from exc


def _load_digraph(path: str) -> Digraph:
    obj = _load_json(path)
    try:
        if isinstance(obj, dict) and "digraph" in obj:
            obj = obj["digraph"]
        return Digraph.from_json_obj(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed digraph {path}: {exc}") from exc


def _spanning_split(total: int, k: int) -> tuple[int, ...]:
    """k lengths whose inner vertex counts sum to ``total``, as even as possible."""
    base, extra = divmod(total, k)
    return tuple(base + 1 + (i < extra) for i in range(k))


def _family_digraph(family: str, n: int, k: int | None, floor: int | None, seed: int, edges_path: str | None):
    """Build the host and, where the family implies one, its instance."""
    if family == "complete":
        return gen_complete(n), None
    if family == "remark1":
        D, _ = gen_remark1(n)
        return D, None
    if family == "remark2":
        r = gen_remark2(n, k or 1)
        H, f = r.matching_pattern()
        lengths = _spanning_split(n - len(f), len(r.xs))
        return r.D, Instance(r.D, H, f, lengths)
    if family == "remark3":
        if k is None:
            raise UsageError("remark3 needs --k")
        return gen_remark3(n, k), None
    if family == "random_floor":
        if floor is None:
            floor = math.ceil(n / 2 + (k or 0))
        return gen_random_floor(n, floor, seed), None
    if family == "double_cover":
        if edges_path:
            obj = _load_json(edges_path)
            try:
                return double_cover([tuple(e) for e in obj["edges"]], int(obj["n"])), None
            except (KeyError, TypeError, ValueError) as exc:
                raise UsageError(f"malformed edge list: {exc}") from exc
        return double_cover(petersen_edges(), 10), None
    raise UsageError(f"unknown family {family!r}")


def cmd_gen(args) -> int:
    seed = args.seed[0] if args.seed else 0
    try:
        D, inst = _family_digraph(args.family, args.n, args.k, args.floor, seed, args.edges)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _dump(D.to_json_obj(), args.output)
    if args.dot:
        FsPath(args.dot).write_text(D.to_dot())
    if args.instance:
        try:
            if inst is None:
                if args.k is None:
                    raise UsageError("--instance needs --k for this family")
                inst = random_instance(D, args.k, seed, alpha=args.alpha, beta=args.beta)
            if args.lengths:
                inst = Instance(inst.D, inst.H, inst.f, tuple(args.lengths), args.alpha, args.beta)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _dump(inst.to_json_obj(), args.instance)
    return 0


def _solve_params(args) -> SolveParams:
    return SolveParams(
        mode=args.mode,
        seeds=tuple(args.seed or [0]),
        gamma=args.gamma,
        eps_prime=args.eps_prime,
        eps1=args.eps1,
        eps=args.eps,
        budget_nodes=args.budget_nodes,
        budget_secs=args.budget_secs,
        exact_cap=args.exact_cap,
        timings=args.timings,
    )


def cmd_solve(args) -> int:
    inst = _load_instance(args.input)
    if args.alpha is not None or args.beta is not None:
        inst = Instance(inst.D, inst.H, inst.f, inst.lengths, args.alpha or inst.alpha, args.beta or inst.beta)
    try:
        params = _solve_params(args)
        out = solve(inst, params)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if out.subdivision is not None:
        _dump(out.subdivision.to_json_obj(), args.output)
    if args.report:
        _dump(out.report, args.report)
    if args.dot:
        FsPath(args.dot).write_text(inst.D.to_dot())
    print(f"status: {out.status}", file=sys.stderr)
    return out.exit_code


def cmd_verify(args) -> int:
    inst = _load_instance(args.input)
    obj = _load_json(args.subdivision)
    try:
        sub = Subdivision.from_json_obj(obj)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"malformed subdivision: {exc}") from exc
    rep = verify_subdivision(inst, sub)
    _dump(
        {
            "ok": rep.ok,
            "violations": [{"routes": list(r), "rule": rule, "detail": d} for r, rule, d in rep.violations],
        },
        args.output,
    )
    return 0 if rep.ok else 2


def analyze_digraph(D: Digraph, args) -> dict:
    seed = args.seed[0] if args.seed else 0
    report: dict = {
        "params": {
            "eps_prime": args.eps_prime,
            "eps1": args.eps1,
            "eps": args.eps,
            "nu": args.nu,
            "tau": args.tau,
            "seed": seed,
            "samples": args.samples,
        },
        "n": D.n,
        "caveats": [],
    }
    if args.sampled:
        ec_mode = "heuristic"
    elif D.n <= EC_EXACT_CAP:
        ec_mode = "exact"
    else:
        ec_mode = "heuristic"
        if args.exact:
            report["caveats"].append(f"exact EC search is capped at n={EC_EXACT_CAP}; heuristic search used")
    witness = detect_ec(D, args.eps_prime, mode=ec_mode, seed=seed)
    if isinstance(witness, ECWitness):
        report["ec"] = {"mode": ec_mode, "found": True, **witness.to_json_obj()}
        try:
            part = classify_ec1(D, witness, args.eps1, args.eps, strict=False)
            report["partition"] = part.to_json_obj()
            report["partition"]["audits_pass"] = part.ok
        except AuditFailed as exc:
            report["partition"] = {"error": str(exc)}
    else:
        report["ec"] = {"mode": ec_mode, "found": False, "certified": witness.certified}
        report["partition"] = None
    if args.sampled:
        xp_mode = "sampled"
    elif D.n <= EXPANDER_EXACT_CAP:
        xp_mode = "exact"
    else:
        xp_mode = "sampled"
        if args.exact:
            report["caveats"].append(
                f"exact expander check is capped at n={EXPANDER_EXACT_CAP}; sampled mode used"
            )
    xp = check_robust_outexpander(D, args.nu, args.tau, mode=xp_mode, samples=args.samples, seed=seed)
    report["expansion"] = xp.to_json_obj()
    return report


def cmd_analyze(args) -> int:
    D = _load_digraph(args.input)
    _dump(analyze_digraph(D, args), args.output)
    return 0


def _parse_grid(text: str) -> list[int]:
    if not text.strip():
        return []
    try:
        sizes = [int(t) for t in text.split(",")]
    except ValueError as exc:
        raise UsageError(f"bad size grid {text!r}") from exc
    if any(s < 2 for s in sizes):
        raise UsageError("grid sizes must be at least 2")
    return sorted(set(sizes))


def _bench_instance(family: str, n: int, k: int, seed: int) -> Instance:
    if family == "remark2":
        return _family_digraph(family, n, k, None, seed, None)[1]
    D, _ = _family_digraph(family, n, k, None, seed, None)
    return random_instance(D, k, seed)


BENCH_COLUMNS = ["instance", "family", "n", "k", "seed", "status", "success", "solved_by", "retries"]


def cmd_bench(args) -> int:
    sizes = _parse_grid(args.sizes)
    if args.family not in BENCH_FAMILIES:
        raise UsageError(f"bench family must be one of {BENCH_FAMILIES}")
    seeds = sorted(set(args.seed or [0]))
    cells = []
    for n in sizes:
        for seed in seeds:
            try:
                inst = _bench_instance(args.family, n, args.k, seed)
            except ValueError as exc:
                raise UsageError(f"grid cell n={n}, seed={seed}: {exc}") from exc
            cells.append((n, seed, inst))
    columns = BENCH_COLUMNS + (["seconds"] if args.timings else [])
    rows = []
    for n, seed, inst in cells:
        params = SolveParams(
            mode=args.mode,
            seeds=(seed,),
            gamma=args.gamma,
            eps_prime=args.eps_prime,
            eps1=args.eps1,
            eps=args.eps,
            budget_nodes=args.budget_nodes,
            budget_secs=args.budget_secs,
            exact_cap=args.exact_cap,
        )
        t = time.perf_counter()
        out = solve(inst, params)
        elapsed = time.perf_counter() - t
        rep = out.report
        # failed solver runs before the final outcome
        retries = len(rep.get("extremal", [])) + sum(1 for r in rep.get("absorption", []) if "error" in r)
        row = {
            "instance": f"{args.family}-n{n:04d}-k{args.k}",
            "family": args.family,
            "n": n,
            "k": args.k,
            "seed": seed,
            "status": out.status,
            "success": int(out.status == "verified"),
            "solved_by": rep.get("solved_by", ""),
            "retries": retries,
        }
        if args.timings:
            row["seconds"] = f"{elapsed:.4f}"
        rows.append(row)
    rows.sort(key=lambda r: (r["instance"], r["seed"]))
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    if args.output in (None, "-"):
        sys.stdout.write(buf.getvalue())
    else:
        FsPath(args.output).write_text(buf.getvalue())
    return 0


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=MODES, default="auto")
    p.add_argument("--gamma", type=_unit("gamma"), default=0.08)
    p.add_argument("--eps-prime", type=_unit("eps-prime"), default=0.2)
    p.add_argument("--eps1", type=_unit("eps1"), default=0.1)
    p.add_argument("--eps", type=_unit("eps"), default=0.2)
    p.add_argument("--budget-nodes", type=_positive_int, default=20_000_000)
    p.add_argument("--budget-secs", type=float, default=120.0)
    p.add_argument("--exact-cap", type=_positive_int, default=DEFAULT_EXACT_CAP)
    p.add_argument("--timings", action="store_true", help="record wall-clock timings (breaks byte-identical output)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hlink", description="Hamiltonian linkage toolkit for dense digraphs")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a digraph (and optionally an instance)")
    g.add_argument("family", choices=FAMILIES)
    g.add_argument("--n", type=_positive_int, required=True)
    g.add_argument("--k", type=_positive_int)
    g.add_argument("--floor", type=int, help="semi-degree floor for random_floor (default ceil(n/2 + k))")
    g.add_argument("--seed", type=int, action="append")
    g.add_argument("--edges", help="edge list JSON {n, edges} for double_cover (default: Petersen graph)")
    g.add_argument("--output", "-o")
    g.add_argument("--instance", help="also write an instance JSON here")
    g.add_argument("--lengths", type=_positive_int, nargs="+")
    g.add_argument("--alpha", type=_unit("alpha"), default=0.1)
    g.add_argument("--beta", type=_unit("beta"), default=0.1)
    g.add_argument("--dot", help="write DOT for the generated digraph")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="find a verified spanning subdivision")
    s.add_argument("--input", "-i", required=True)
    s.add_argument("--output", "-o")
    s.add_argument("--report")
    s.add_argument("--seed", type=int, action="append")
    s.add_argument("--alpha", type=_unit("alpha"))
    s.add_argument("--beta", type=_unit("beta"))
    s.add_argument("--dot", help="write DOT for the host digraph")
    _add_solver_flags(s)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a subdivision against an instance")
    v.add_argument("--input", "-i", required=True)
    v.add_argument("--subdivision", "-s", required=True)
    v.add_argument("--output", "-o")
    v.set_defaults(func=cmd_verify)

    a = sub.add_parser("analyze", help="extremal structure and expansion report")
    a.add_argument("--input", "-i", required=True, help="digraph or instance JSON")
    a.add_argument("--output", "-o")
    a.add_argument("--eps-prime", type=_unit("eps-prime"), default=0.2)
    a.add_argument("--eps1", type=_unit("eps1"), default=0.1)
    a.add_argument("--eps", type=_unit("eps"), default=0.2)
    a.add_argument("--nu", type=_unit("nu"), default=0.1)
    a.add_argument("--tau", type=_unit("tau"), default=0.1)
    a.add_argument("--samples", type=_positive_int, default=2000)
    a.add_argument("--seed", type=int, action="append")
    how = a.add_mutually_exclusive_group()
    how.add_argument("--exact", action="store_true", help="insist on exhaustive checks (falls back above the caps)")
    how.add_argument("--sampled", action="store_true", help="use heuristic and sampled checks only")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("bench", help="run a size grid and write CSV")
    b.add_argument("--family", default="random_floor")
    b.add_argument("--sizes", required=True, help="comma-separated host sizes, e.g. 12,14")
    b.add_argument("--k", type=_positive_int, default=1)
    b.add_argument("--seed", type=int, action="append")
    b.add_argument("--output", "-o")
    _add_solver_flags(b)
    b.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"hlink: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

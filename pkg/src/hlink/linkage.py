"""Patterns, linkage instances, subdivisions and the subdivision verifier."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .digraph import Digraph, Path, VertexSet, full_set, mask_of, members, min_semi_degree


@dataclass(frozen=True)
class Pattern:
    """A multidigraph whose arcs get subdivided.  Loops and parallel arcs are fine."""

    h_verts: int
    arcs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        arcs = tuple((int(t), int(h)) for t, h in self.arcs)
        object.__setattr__(self, "arcs", arcs)
        if not arcs:
            raise ValueError("pattern needs at least one arc")
        touched = set()
        for t, h in arcs:
            if not (0 <= t < self.h_verts and 0 <= h < self.h_verts):
                raise ValueError(f"pattern arc ({t}, {h}) out of range")
            touched.update((t, h))
        if len(touched) != self.h_verts:
            raise ValueError("every pattern vertex must lie on some arc")

    @property
    def k(self) -> int:
        return len(self.arcs)

    def is_loop(self, i: int) -> bool:
        t, h = self.arcs[i]
        return t == h


@dataclass(frozen=True)
class Instance:
    D: Digraph
    H: Pattern
    f: tuple[int, ...]
    lengths: tuple[int, ...]
    alpha: float = 0.1
    beta: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "f", tuple(int(x) for x in self.f))
        object.__setattr__(self, "lengths", tuple(int(x) for x in self.lengths))
        if len(self.f) != self.H.h_verts:
            raise ValueError("terminal map must list one host vertex per pattern vertex")
        if any(not 0 <= x < self.D.n for x in self.f):
            raise ValueError("terminal map points outside the host digraph")
        if len(self.lengths) != self.H.k:
            raise ValueError("need exactly one length per pattern arc")

    @property
    def n(self) -> int:
        return self.D.n

    @property
    def k(self) -> int:
        return self.H.k

    def terminals(self, i: int) -> tuple[int, int]:
        """Host endpoints (start, end) of the route for pattern arc ``i``."""
        t, h = self.H.arcs[i]
        return self.f[t], self.f[h]

    def to_json_obj(self) -> dict:
        return {
            "digraph": self.D.to_json_obj(),
            "pattern": {"verts": self.H.h_verts, "arcs": [list(a) for a in self.H.arcs]},
            "f": list(self.f),
            "lengths": list(self.lengths),
            "alpha": self.alpha,
            "beta": self.beta,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> Instance:
        try:
            D = Digraph.from_json_obj(obj["digraph"])
            pat = obj["pattern"]
            H = Pattern(int(pat["verts"]), tuple(tuple(a) for a in pat["arcs"]))
            return cls(
                D,
                H,
                tuple(obj["f"]),
                tuple(obj["lengths"]),
                float(obj.get("alpha", 0.1)),
                float(obj.get("beta", 0.1)),
            )
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed instance: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


@dataclass(frozen=True)
class Subdivision:
    routes: tuple[Path, ...]

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))

    def to_json_obj(self) -> dict:
        return {
            "routes": [list(p.verts) for p in self.routes],
            "cycles": [p.is_cycle for p in self.routes],
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> Subdivision:
        try:
            routes = obj["routes"]
            cycles = obj.get("cycles", [False] * len(routes))
            if len(cycles) != len(routes):
                raise ValueError("'cycles' and 'routes' differ in length")
            return cls(tuple(Path(tuple(int(v) for v in r), bool(c)) for r, c in zip(routes, cycles)))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed subdivision: {exc}") from exc


@dataclass
class InstanceReport:
    violations: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    degree_condition: bool = False

    @property
    def ok(self) -> bool:
        return not self.violations


def branch_vertices(inst: Instance) -> VertexSet:
    return mask_of(inst.f)


def validate_instance(inst: Instance, strict: bool = False) -> InstanceReport:
    """Check the instance invariants.

    Spanning feasibility, injectivity and positive lengths are always hard.
    The stronger guarantee conditions (every length at least 4 and the
    short-length budget) are warnings unless ``strict`` is set.
    """
    rep = InstanceReport()
    n = inst.n
    if len(set(inst.f)) != len(inst.f):
        rep.violations.append("terminal map is not injective")
    if any(x < 1 for x in inst.lengths):
        rep.violations.append("every length must be at least 1")
    internal = sum(x - 1 for x in inst.lengths)
    branch = len(set(inst.f))
    if internal != n - branch:
        rep.violations.append(
            f"spanning feasibility fails: sum of (n_i - 1) = {internal} but n - |branch| = {n - branch}"
        )
    if not (0 < inst.alpha < 1 and 0 < inst.beta < 1):
        rep.violations.append("alpha and beta must lie strictly between 0 and 1")
    strength = []
    if any(x < 4 for x in inst.lengths):
        strength.append("some length is below 4")
    short_total = sum(x for x in inst.lengths if x < inst.beta * n)
    if short_total > inst.alpha * n:
        strength.append(f"short lengths total {short_total} exceeds alpha*n = {inst.alpha * n:g}")
    (rep.violations if strict else rep.warnings).extend(strength)
    if n >= 1:
        rep.degree_condition = min_semi_degree(inst.D) >= n / 2 + inst.k
    return rep


@dataclass
class VerifyReport:
    violations: list[tuple[tuple[int, ...], str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {rule for _, rule, _ in self.violations}

    def add(self, routes: Sequence[int], rule: str, detail: str) -> None:
        self.violations.append((tuple(routes), rule, detail))


def verify_subdivision(inst: Instance, sub: Subdivision) -> VerifyReport:
    """Check that ``sub`` is a spanning subdivision with the prescribed lengths.

    Violations are reported as ``(route indices, rule, detail)`` with rules
    ``count``, ``shape``, ``endpoints``, ``length``, ``arc``, ``repeat``,
    ``disjoint`` and ``spanning``.
    """
    rep = VerifyReport()
    D = inst.D
    if len(sub.routes) != inst.k:
        rep.add((), "count", f"expected {inst.k} routes, got {len(sub.routes)}")
        return rep
    branch = set(inst.f)
    endpoints: list[set[int]] = []
    holders: dict[int, list[int]] = {}
    for i, route in enumerate(sub.routes):
        start, end = inst.terminals(i)
        verts = route.verts
        loop = inst.H.is_loop(i)
        if not verts or any(not 0 <= v < D.n for v in verts):
            rep.add((i,), "shape", "empty route or vertex out of range")
            endpoints.append(set())
            continue
        if route.is_cycle != loop:
            rep.add((i,), "shape", "loop arcs need cycle routes and other arcs need paths")
        if route.is_cycle:
            if verts[0] != start:
                rep.add((i,), "endpoints", f"cycle must start at branch vertex {start}")
            ends = {verts[0]}
        else:
            if verts[0] != start or verts[-1] != end:
                rep.add((i,), "endpoints", f"route runs {verts[0]}->{verts[-1]}, expected {start}->{end}")
            ends = {verts[0], verts[-1]}
        endpoints.append(ends)
        if route.arc_length != inst.lengths[i]:
            rep.add((i,), "length", f"arc-length {route.arc_length} != {inst.lengths[i]}")
        if len(set(verts)) != len(verts):
            rep.add((i,), "repeat", "route repeats a vertex")
        for u, v in route.arcs():
            if u != v and not D.has_arc(u, v):
                rep.add((i,), "arc", f"missing arc ({u}, {v})")
            elif u == v:
                rep.add((i,), "arc", f"self-loop at {u}")
        for v in set(verts):
            holders.setdefault(v, []).append(i)
    for v in sorted(holders):
        owners = holders[v]
        if len(owners) < 2:
            continue
        if v not in branch or any(v not in endpoints[i] for i in owners):
            rep.add(owners, "disjoint", f"vertex {v} shared by routes {owners}")
    covered = mask_of(holders)
    missing = full_set(D.n) & ~covered
    if missing:
        rep.add((), "spanning", f"uncovered vertices {members(missing)}")
    return rep

"""JSON forms of instances, flows, solutions, audits and certificates."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .cost import cost_from_dict
from .errors import ConfigurationError
from .flow import BRANCHING, TERMINAL, AngleAudit, Edge, Flow, Instance, Terminal, Vertex, Violation

SCHEMA_VERSION = 1


class InputError(ConfigurationError):
    """Malformed input file; ``path`` locates the offending JSON node, ``line`` its line."""

    def __init__(self, message: str, path: Sequence = (), line: Optional[int] = None, source: str = ""):
        self.path = tuple(path)
        self.line = line
        self.source = source
        self.detail = message
        super().__init__(self._format())

    def _format(self):
        where = "".join(f"[{p}]" if isinstance(p, int) else (f".{p}" if i else str(p)) for i, p in enumerate(self.path))
        prefix = self.source or "input"
        if self.line is not None:
            prefix += f":{self.line}"
        return f"{prefix}: {where + ': ' if where else ''}{self.detail}"


def _num(x) -> Any:
    """Plain float for JSON; non-finite values become None."""
    x = float(x)
    return x if math.isfinite(x) else None


# ---------------------------------------------------------------------------
# instances


def instance_to_dict(instance: Instance) -> dict:
    return {
        "dimension": instance.dimension,
        "terminals": [
            {"id": t.id, "position": [_num(c) for c in t.position], "mass": _num(t.mass)} for t in instance.terminals
        ],
        "cost": instance.cost.to_dict(),
    }


def instance_from_dict(data: Any) -> Instance:
    if not isinstance(data, dict):
        raise InputError("instance must be a JSON object")
    extra = set(data) - {"dimension", "terminals", "cost"}
    if extra:
        raise InputError(f"unexpected fields {sorted(extra)}")
    for key in ("dimension", "terminals", "cost"):
        if key not in data:
            raise InputError(f"missing field '{key}'")
    dim = data["dimension"]
    if dim not in (2, 3) or isinstance(dim, bool):
        raise InputError("dimension must be 2 or 3", ("dimension",))
    raw = data["terminals"]
    if not isinstance(raw, list):
        raise InputError("terminals must be a list", ("terminals",))
    terminals = []
    for i, t in enumerate(raw):
        path = ("terminals", i)
        if not isinstance(t, dict) or set(t) != {"id", "position", "mass"}:
            raise InputError("terminal needs exactly the fields id, position, mass", path)
        if not isinstance(t["id"], str) or not t["id"]:
            raise InputError("id must be a nonempty string", path + ("id",))
        pos = t["position"]
        if (
            not isinstance(pos, list)
            or len(pos) != dim
            or any(isinstance(c, bool) or not isinstance(c, (int, float)) or not math.isfinite(c) for c in pos)
        ):
            raise InputError(f"position must be a list of {dim} finite numbers", path + ("position",))
        m = t["mass"]
        if isinstance(m, bool) or not isinstance(m, (int, float)) or not math.isfinite(m) or m == 0:
            raise InputError("mass must be a finite nonzero number", path + ("mass",))
        terminals.append(Terminal(t["id"], np.array(pos, dtype=float), float(m)))
    try:
        cost = cost_from_dict(data["cost"])
    except ConfigurationError as exc:
        raise InputError(str(exc), ("cost",)) from None
    try:
        return Instance(dim, tuple(terminals), cost)
    except ConfigurationError as exc:
        raise InputError(str(exc), ("terminals",)) from None


def _element_offsets(text: str, key: str) -> tuple[Optional[int], list[int]]:
    """Offset of top-level ``key`` and of each element of the array stored under it."""
    depth, i, n = 0, 0, len(text)
    key_pos, starts = None, []
    in_array = False
    while i < n:
        ch = text[i]
        if ch == '"':
            j = i + 1
            while j < n and text[j] != '"':
                j += 2 if text[j] == "\\" else 1
            token = text[i + 1 : j]
            if depth == 1 and token == key and key_pos is None:
                key_pos = i
            elif in_array and depth == 2 and starts and starts[-1] is None:
                starts[-1] = i
            i = j + 1
            continue
        if ch in "[{":
            if key_pos is not None and not in_array and depth == 1 and ch == "[":
                in_array = True
                depth += 1
                starts.append(None)
                i += 1
                continue
            if in_array and depth == 2 and starts and starts[-1] is None:
                starts[-1] = i
            depth += 1
        elif ch in "]}":
            depth -= 1
            if in_array and depth == 1:
                break
        elif ch == "," and in_array and depth == 2:
            starts.append(None)
        elif in_array and depth == 2 and not ch.isspace() and starts and starts[-1] is None:
            starts[-1] = i
        i += 1
    return key_pos, [s for s in starts if s is not None]


def _line_of(text: str, path: Sequence) -> Optional[int]:
    if not path:
        return 1
    key_pos, elems = _element_offsets(text, str(path[0]))
    if key_pos is None:
        return None
    pos = key_pos
    if len(path) > 1 and isinstance(path[1], int) and path[1] < len(elems):
        pos = elems[path[1]]
    return text.count("\n", 0, pos) + 1


def parse_instance(text: str, source: str = "") -> Instance:
    """Parse an instance document, reporting errors with a line number when possible."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg} (column {exc.colno})", line=exc.lineno, source=source) from None
    try:
        return instance_from_dict(data)
    except InputError as exc:
        raise InputError(exc.detail, exc.path, _line_of(text, exc.path), source) from None


def load_instance(path) -> Instance:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read instance: {exc}", source=str(path)) from None
    return parse_instance(text, str(path))


# ---------------------------------------------------------------------------
# flows and reports


def flow_to_dict(flow: Flow) -> dict:
    return {
        "vertices": [
            {"id": v.id, "position": [_num(c) for c in v.position], "kind": v.kind} for v in flow.vertices
        ],
        "edges": [{"u": e.u, "v": e.v, "mass": _num(e.mass)} for e in flow.edges],
        "functional": None if flow.functional is None else _num(flow.functional),
    }


def flow_from_dict(data: Any) -> Flow:
    if not isinstance(data, dict) or "vertices" not in data or "edges" not in data:
        raise InputError("flow must be an object with vertices and edges", ("flow",))
    verts = []
    for i, v in enumerate(data["vertices"]):
        if not isinstance(v, dict) or not {"id", "position"} <= set(v):
            raise InputError("vertex needs id and position", ("flow", "vertices", i))
        kind = v.get("kind", BRANCHING)
        if kind not in (TERMINAL, BRANCHING):
            raise InputError(f"unknown vertex kind {kind!r}", ("flow", "vertices", i))
        verts.append(Vertex(str(v["id"]), np.array(v["position"], dtype=float), kind))
    edges = []
    for i, e in enumerate(data["edges"]):
        if not isinstance(e, dict) or set(e) != {"u", "v", "mass"}:
            raise InputError("edge needs exactly u, v, mass", ("flow", "edges", i))
        edges.append(Edge(str(e["u"]), str(e["v"]), float(e["mass"])))
    return Flow(tuple(verts), tuple(edges), data.get("functional"))


def violations_to_list(violations: Sequence[Violation]) -> list[dict]:
    return [{"kind": v.kind, "where": v.where, "detail": v.detail} for v in violations]


def audit_to_dict(audit: AngleAudit) -> dict:
    def check(c):
        return {
            "branch": c.branch,
            "pair": list(c.pair),
            "angle": _num(c.angle),
            "required": _num(c.required),
            "margin": _num(c.margin),
        }

    return {
        "checks": [check(c) for c in audit.checks],
        "violations": [check(c) for c in audit.violations],
        "unavailable": [{"branch": b, "pair": list(p), "reason": r} for b, p, r in audit.unavailable],
    }


def certificate_to_dict(cert) -> dict:
    return {
        "masses": [_num(m) for m in cert.masses],
        "instance": instance_to_dict(cert.instance),
        "flow": flow_to_dict(cert.flow),
        "star_value": _num(cert.star_value),
        "residual": _num(cert.residual),
        "diagonal_margins": [_num(m) for m in cert.diagonal_margins],
        "consecutive_angles": [{"angle": _num(a), "h": _num(h)} for a, h in cert.consecutive_angles],
        "competitor_values": {k: _num(v) for k, v in sorted(cert.competitor_values.items())},
        "polychain": [[_num(c) for c in p] for p in cert.polychain],
        "rejection": cert.rejection,
        "valid": bool(cert.valid),
    }


def dumps_report(report: dict) -> str:
    """Canonical report text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"

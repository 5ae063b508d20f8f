"""Command-line front end.

Subcommands::

    gilbert-steiner solve  --input inst.json [--report out.json] [--svg out.svg]
    gilbert-steiner check  --input inst.json --flow flow.json
    gilbert-steiner demo   {trapezoid,simplex3d} [--masses a,b,c,d] [--p 0.7]
    gilbert-steiner verify-theorem [--samples 100] [--seed 42]

Exit codes: 0 ok, 1 flow check found violations, 2 input error, 3 terminal cap
exceeded, 4 demo hypothesis rejected, 5 theorem-harness failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import counterexamples as cx
from .cost import PowerCost
from .errors import CapExceededError, ConfigurationError, FlowStructureError, NotRealizable
from .flow import branch_degrees, check_local_angles, default_merge_tol, validate_flow
from .harness import ANGLE_TOL, run_theorem_harness
from .serialize import (
    SCHEMA_VERSION,
    InputError,
    _num,
    audit_to_dict,
    certificate_to_dict,
    dumps_report,
    flow_from_dict,
    flow_to_dict,
    instance_to_dict,
    load_instance,
    violations_to_list,
)
from .solver import TIE_TOL, solve

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_INPUT = 2
EXIT_CAP = 3
EXIT_REJECTED = 4
EXIT_HARNESS = 5

DEMOS = ("trapezoid", "simplex3d")
DEFAULT_SIMPLEX_MASSES = (1.0, 2.0, 3.0, -6.0)
DEFAULT_SIMPLEX_P = 0.7


@dataclass
class RunConfig:
    command: str
    input: Optional[Path] = None
    flow: Optional[Path] = None
    report: Optional[Path] = None
    svg: Optional[Path] = None
    merge_tol: Optional[float] = None
    tie_tol: float = TIE_TOL
    angle_tol: float = ANGLE_TOL
    allow_degree4: bool = False
    seed: int = 42
    samples: Optional[int] = None
    demo: Optional[str] = None
    masses: tuple[float, ...] = DEFAULT_SIMPLEX_MASSES
    p: float = DEFAULT_SIMPLEX_P
    radius: float = 1e-4
    labels: bool = False
    workers: Optional[int] = None

    def __post_init__(self):
        for name in ("tie_tol", "angle_tol"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"--{name.replace('_', '-')} must be positive")
        if self.merge_tol is not None and not self.merge_tol > 0:
            raise ConfigurationError("--merge-tol must be positive")
        if self.samples is not None and self.samples < 1:
            raise ConfigurationError("--samples must be at least 1")
        if self.radius < 0:
            raise ConfigurationError("--radius must be nonnegative")


def _masses(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gilbert-steiner", description="Gilbert-Steiner branched transport toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, report=True, svg=True):
        if report:
            p.add_argument("--report", type=Path, help="write the JSON report here (default: stdout)")
        if svg:
            p.add_argument("--svg", type=Path, help="render a figure to this path")
            p.add_argument("--labels", action="store_true", help="label vertices in the figure")
        p.add_argument("--merge-tol", type=float, help="distance below which branch points merge")
        p.add_argument("--tie-tol", type=float, default=TIE_TOL)
        p.add_argument("--angle-tol", type=float, default=ANGLE_TOL)
        p.add_argument("--workers", type=int, help="processes for topology optimization")

    p = sub.add_parser("solve", help="solve an instance file")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--allow-degree4", action="store_true", help="also enumerate degree-4 Steiner nodes")
    common(p)

    p = sub.add_parser("check", help="validate a flow against an instance")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--flow", type=Path, required=True, help="flow JSON, or a solve report containing one")
    common(p, svg=False)

    p = sub.add_parser("demo", help="degree-4 star constructions")
    p.add_argument("demo", choices=DEMOS)
    p.add_argument("--masses", type=_masses, default=DEFAULT_SIMPLEX_MASSES, help="four masses for simplex3d")
    p.add_argument("--p", type=float, default=DEFAULT_SIMPLEX_P, help="power cost exponent for simplex3d")
    p.add_argument("--samples", type=int, default=10_000, help="perturbation probe samples")
    p.add_argument("--radius", type=float, default=1e-4, help="perturbation probe radius")
    p.add_argument("--seed", type=int, default=0)
    common(p)

    p = sub.add_parser("verify-theorem", help="randomized degree-3 check under power costs")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=42)
    common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__ and v is not None}
    return RunConfig(**fields)


def _emit(report: dict, cfg: RunConfig):
    text = dumps_report(report)
    if cfg.report is None:
        sys.stdout.write(text)
    else:
        cfg.report.write_text(text, encoding="utf-8")


def _render(flow, instance, cfg: RunConfig, title: str):
    if cfg.svg is None:
        return
    problems = validate_flow(flow, instance)
    if problems:
        print(f"error: refusing to render a flow with {len(problems)} violations", file=sys.stderr)
        return
    from .plotting import render_flow

    render_flow(flow, instance, cfg.svg, labels=cfg.labels, title=title)


def _flow_sections(flow, instance, cfg: RunConfig) -> dict:
    merge_tol = cfg.merge_tol or default_merge_tol(instance)
    degrees = branch_degrees(flow, merge_tol)
    census = Counter(degrees.values())
    audit = check_local_angles(flow, instance.cost, cfg.angle_tol)
    return {
        "flow": flow_to_dict(flow),
        "branch_degrees": dict(sorted(degrees.items())),
        "degree_census": {str(k): census[k] for k in sorted(census)},
        "max_branch_degree": max(degrees.values(), default=0),
        "angle_audit": audit_to_dict(audit),
        "validation": violations_to_list(validate_flow(flow, instance)),
    }


def cmd_solve(cfg: RunConfig) -> int:
    instance = load_instance(cfg.input)
    sol = solve(instance, cfg.allow_degree4, cfg.tie_tol, cfg.merge_tol, cfg.workers)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "solve",
        "allow_degree4": cfg.allow_degree4,
        "instance": instance_to_dict(instance),
        "solution": {
            "topology": sol.label,
            "functional": _num(sol.value),
            "converged": bool(sol.converged),
            "iterations": sol.iterations,
            "residual": _num(sol.residual),
            "competitor_gap": _num(sol.competitor_gap),
            "candidates": [{"topology": t, "functional": _num(v)} for t, v in sol.candidates],
        },
    }
    report.update(_flow_sections(sol.flow, instance, cfg))
    _emit(report, cfg)
    _render(sol.flow, instance, cfg, f"{sol.label}   L = {sol.value:.6g}")
    return EXIT_OK


def cmd_check(cfg: RunConfig) -> int:
    instance = load_instance(cfg.input)
    try:
        data = json.loads(cfg.flow.read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read flow: {exc}", source=str(cfg.flow)) from None
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", line=exc.lineno, source=str(cfg.flow)) from None
    if isinstance(data, dict) and "flow" in data:
        data = data["flow"]
    try:
        flow = flow_from_dict(data)
        sections = _flow_sections(flow, instance, cfg)
    except (InputError, FlowStructureError, TypeError, ValueError) as exc:
        detail = exc.detail if isinstance(exc, InputError) else str(exc)
        raise InputError(detail, source=str(cfg.flow)) from None
    report = {"schema_version": SCHEMA_VERSION, "command": "check", "instance": instance_to_dict(instance)}
    report.update(sections)
    report["ok"] = not sections["validation"] and not sections["angle_audit"]["violations"]
    _emit(report, cfg)
    return EXIT_OK if report["ok"] else EXIT_VIOLATIONS


def cmd_demo(cfg: RunConfig) -> int:
    report = {"schema_version": SCHEMA_VERSION, "command": "demo", "demo": cfg.demo}
    if cfg.demo == "trapezoid":
        cert = cx.build_trapezoid_star()
    else:
        cost = PowerCost(cfg.p)
        report["cost"] = cost.to_dict()
        try:
            cert = cx.build_simplex_star(cfg.masses, cost)
        except (cx.HypothesisRejected, NotRealizable) as exc:
            report.update({"masses": [_num(m) for m in cfg.masses], "valid": False, "rejection": str(exc)})
            _emit(report, cfg)
            print(f"rejected: {exc}", file=sys.stderr)
            return EXIT_REJECTED
    report["certificate"] = certificate_to_dict(cert)
    report["perturbation_probe"] = {
        "samples": cfg.samples,
        "radius": _num(cfg.radius),
        "seed": cfg.seed,
        "min_delta": {
            label: _num(cx.perturbation_probe(cert, cfg.samples, cfg.radius, label, cfg.seed))
            for label in sorted(cert.topologies)
        },
    }
    _emit(report, cfg)
    _render(cert.flow, cert.instance, cfg, f"{cfg.demo}   L = {cert.star_value:.6g}")
    if not cert.valid:
        print(f"rejected: {cert.rejection or 'certificate conditions not met'}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK


def cmd_verify_theorem(cfg: RunConfig) -> int:
    samples = 100 if cfg.samples is None else cfg.samples
    rows = run_theorem_harness(samples, cfg.seed, cfg.angle_tol, tie_tol=cfg.tie_tol, merge_tol=cfg.merge_tol,
                               workers=cfg.workers)
    table = [
        {
            "index": r.index,
            "n": len(r.instance.terminals),
            "p": r.instance.cost.p,
            "topology": r.topology,
            "functional": _num(r.value),
            "max_degree": r.max_degree,
            "competitor_gap": _num(r.competitor_gap),
            "angle_violations": r.angle_violations,
            "flow_violations": len(r.flow_violations),
            "converged": bool(r.converged),
            "ok": bool(r.ok),
        }
        for r in rows
    ]
    failures = [
        {
            "index": r.index,
            "instance": instance_to_dict(r.instance),
            "max_degree": r.max_degree,
            "angle_violations": r.angle_violations,
            "flow_violations": violations_to_list(r.flow_violations),
            "beaten_by": r.beaten_by,
        }
        for r in rows
        if not r.ok
    ]
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify-theorem",
        "seed": cfg.seed,
        "instances_run": len(rows),
        "max_degree_seen": max(r.max_degree for r in rows),
        "worst_competitor_gap": _num(min(r.competitor_gap for r in rows)),
        "total_angle_violations": sum(r.angle_violations for r in rows),
        "passed": not failures,
        "failures": failures,
        "instances": table,
    }
    _emit(report, cfg)
    if cfg.svg is not None:
        from .plotting import render_harness

        render_harness(table, cfg.svg)
    return EXIT_OK if not failures else EXIT_HARNESS


COMMANDS = {"solve": cmd_solve, "check": cmd_check, "demo": cmd_demo, "verify-theorem": cmd_verify_theorem}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = config_from_args(args)
        return COMMANDS[cfg.command](cfg)
    except CapExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

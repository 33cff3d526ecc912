"""Command-line front end: ``fibered-forms run`` and ``fibered-forms checks``."""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .runner import run_checks
from .scenario import CHECKS, ScenarioError, load_scenario

EXIT_OK, EXIT_FAILED, EXIT_INVALID = 0, 1, 2


def run_file(path: str, seed: int = 0) -> tuple[int, dict]:
    """Run one scenario file; returns (exit code, report)."""
    try:
        sc = load_scenario(path)
        report = run_checks(sc, seed)
    except ScenarioError as exc:
        return EXIT_INVALID, {"scenario": str(path), "error": {"pointer": exc.pointer, "message": exc.message}}
    except OSError as exc:
        return EXIT_INVALID, {"scenario": str(path), "error": {"pointer": "", "message": str(exc)}}
    return (EXIT_OK if report["pass"] else EXIT_FAILED), {"scenario": str(path), **report}


def _run_star(args):
    return run_file(*args)


def _summary(report: dict) -> str:
    lines = [f"scenario {report['scenario']}"]
    if "error" in report:
        err = report["error"]
        lines.append(f"  invalid at {err['pointer'] or '/'}: {err['message']}")
        return "\n".join(lines)
    for k, c in enumerate(report["checks"]):
        verdict = "PASS" if c["pass"] else "FAIL"
        extra = f"  ({c['error']})" if "error" in c else ""
        lines.append(f"  [{k}] {c['check']}: {verdict}{extra}")
    lines.append(f"  overall: {'PASS' if report['pass'] else 'FAIL'}")
    return "\n".join(lines)


def _cmd_run(args) -> int:
    jobs = max(1, args.jobs)
    work = [(p, args.seed) for p in args.scenarios]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_star, work))
    else:
        results = [_run_star(w) for w in work]
    for _, report in results:
        print(_summary(report))
    if args.json:
        payload = results[0][1] if len(results) == 1 else [r for _, r in results]
        Path(args.json).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    return max(code for code, _ in results)


def _cmd_checks(args) -> int:
    if args.json:
        print(json.dumps(list(CHECKS)))
    else:
        print("\n".join(CHECKS))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fibered-forms", description="Verify fibered exterior-calculus scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the checks declared in scenario files")
    run.add_argument("scenarios", nargs="+", metavar="scenario.json")
    run.add_argument("--json", metavar="out.json", help="write the machine-readable report here")
    run.add_argument("--seed", type=int, default=0, help="seed for randomized sampling oracles (default 0)")
    run.add_argument("--jobs", type=int, default=1, help="run independent scenario files concurrently")
    run.set_defaults(func=_cmd_run)
    checks = sub.add_parser("checks", help="list the check vocabulary")
    checks.add_argument("--json", action="store_true", help="emit the list as a JSON array")
    checks.set_defaults(func=_cmd_checks)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

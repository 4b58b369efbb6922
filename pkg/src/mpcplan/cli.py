"""``mpcplan`` command line: gen, validate, run, report.

Exit codes: 0 success, 1 domain error (bad data, schema mismatch, solver
failure, truncated trace), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .capacity import PlanningError
from .core import SchemaError, ValidationError, dump_json, load_scenario, save_scenario, scenario_from_dict, validate_scenario
from .harness import (
    ExtractionError,
    cost_report,
    generate_scenario,
    genspec_from_dict,
    mpc_series,
    reference_genspec,
    series_csv,
)
from .milp import SolveLimits, to_lp_text
from .resource import ResourcePlanningError
from .rolling import TRACE_SCHEMA, StepError, run

log = logging.getLogger("mpcplan")

DOMAIN_ERRORS = (ValidationError, SchemaError, ExtractionError, StepError, PlanningError,
                 ResourcePlanningError, OSError, json.JSONDecodeError)


class DomainError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpcplan", description="Two-stage MPC capacity and resource planning.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="{gen,validate,run,report}")

    gen = sub.add_parser("gen", help="generate a scenario from a generator spec")
    gen.add_argument("--spec", type=Path, help="mpc-genspec/1 JSON (default: the reference spec)")
    gen.add_argument("--out", type=Path, required=True)
    gen.add_argument("--seed", type=int, help="overrides the spec seed and MPC_SEED")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario", type=Path)

    rn = sub.add_parser("run", help="rolling-horizon run producing a trace")
    rn.add_argument("--scenario", type=Path, action="append", required=True,
                    help="scenario file; repeat to run several (then --out is a directory)")
    rn.add_argument("--out", type=Path, required=True)
    rn.add_argument("--max-seconds", type=float, default=30.0)
    rn.add_argument("--max-nodes", type=int, default=20000)
    rn.add_argument("--gap", type=float, default=1e-6, help="relative gap target")
    rn.add_argument("--engine", choices=("highs", "native"), default="highs")
    rn.add_argument("--seed", type=int, help="recorded seed override (also read from MPC_SEED)")
    rn.add_argument("--dump-models", type=Path, metavar="DIR", help="write every model as LP text")
    rn.add_argument("--jobs", type=int, default=1, help="worker threads across scenarios")

    rp = sub.add_parser("report", help="series CSV and cost JSON from a trace")
    rp.add_argument("trace", type=Path)
    rp.add_argument("--scenario", type=Path, help="scenario file (default: the copy inside the trace)")
    rp.add_argument("--csv", type=Path, required=True)
    rp.add_argument("--costs", type=Path, required=True)
    return parser


def resolve_seed(flag: int | None, environ=os.environ) -> int | None:
    if flag is not None:
        return flag
    raw = environ.get("MPC_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise DomainError(f"MPC_SEED must be an integer, got {raw!r}") from None


def _read_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DomainError(f"{path}: not valid JSON ({exc})") from exc


def cmd_gen(args) -> int:
    spec = genspec_from_dict(_read_json(args.spec)) if args.spec else reference_genspec()
    seed = resolve_seed(args.seed)
    if seed is not None:
        spec = replace(spec, seed=seed)
    save_scenario(generate_scenario(spec), args.out)
    log.info("wrote %s", args.out)
    return 0


def cmd_validate(args) -> int:
    violations = validate_scenario(load_scenario(args.scenario))
    for v in violations:
        print(v)
    if not violations:
        print(f"{args.scenario}: ok")
    return 0 if not violations else 1


def _run_one(path: Path, out: Path, limits: SolveLimits, seed: int | None, dump_dir: Path | None) -> None:
    scenario = load_scenario(path)
    problems = validate_scenario(scenario)
    if problems:
        raise ValidationError(f"{path}: " + "; ".join(str(v) for v in problems))
    if seed is not None:
        scenario = replace(scenario, seed=seed)

    dump = None
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

        def dump(stage, day, model):
            (dump_dir / f"{scenario.name or path.stem}-{stage}-day{day:04d}.lp").write_text(to_lp_text(model))

    def progress(event):
        log.info("%s day %d %s", scenario.name, event["day"], event["kind"])

    trace = run(scenario, limits, progress=progress, dump=dump)
    out.write_text(dump_json(trace))


def cmd_run(args) -> int:
    try:
        limits = SolveLimits(max_nodes=args.max_nodes, max_seconds=args.max_seconds,
                             relative_gap_target=args.gap, engine=args.engine)
    except ValueError as exc:
        raise DomainError(str(exc)) from exc
    seed = resolve_seed(args.seed)
    paths = args.scenario
    if len(paths) == 1:
        _run_one(paths[0], args.out, limits, seed, args.dump_models)
        return 0
    args.out.mkdir(parents=True, exist_ok=True)
    jobs = [(p, args.out / f"{p.stem}.trace.json") for p in paths]
    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        futures = [pool.submit(_run_one, p, o, limits, seed, args.dump_models) for p, o in jobs]
        for f in futures:
            f.result()
    return 0


def cmd_report(args) -> int:
    trace = _read_json(args.trace)
    if not isinstance(trace, dict) or trace.get("schema") != TRACE_SCHEMA:
        found = trace.get("schema") if isinstance(trace, dict) else None
        raise SchemaError(found, TRACE_SCHEMA, str(args.trace))
    if args.scenario is not None:
        scenario = load_scenario(args.scenario)
    elif "scenario_data" in trace:
        scenario = scenario_from_dict(trace["scenario_data"], str(args.trace))
    else:
        raise ExtractionError(f"{args.trace}: no embedded scenario; pass --scenario")
    points = mpc_series(trace, scenario)
    args.csv.write_text(series_csv(points))
    args.costs.write_text(dump_json(cost_report(trace).to_dict()))
    return 0


COMMANDS = {"gen": cmd_gen, "validate": cmd_validate, "run": cmd_run, "report": cmd_report}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.verb](args)
    except (DomainError, *DOMAIN_ERRORS) as exc:
        print(f"mpcplan {args.verb}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""``rsmu-sim`` command line: plan, run, validate, replay.

Exit codes: 0 success, 1 domain-invalid result (bad coverage, replay
mismatch), 2 input error, 3 internal invariant breach.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from .channel import ChannelError
from .deployment import DeploymentError
from .simcore.config import ScenarioConfig, ScenarioError, load_scenario
from .simcore.engine import CoverageError, Simulation, build_plan
from .simcore.metrics import (MetricsError, collect_metrics, csv_rows, flatten, read_log, report_to_csv,
                              report_to_json, write_log)
from .simcore.replay import replay_views
from .topology import TopologyError, build_network

EXIT_OK, EXIT_DOMAIN, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
LOG_SUFFIX = ".log.jsonl"
TRACE_SUFFIX = ".trace.jsonl"

log = logging.getLogger("rsmu_sim")


def _setup_logging(verbose: int) -> None:
    level = os.environ.get("RSMU_SIM_LOG_LEVEL", "").upper()
    if not level:
        level = "DEBUG" if verbose > 1 else "INFO" if verbose == 1 else "WARNING"
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _load(args) -> ScenarioConfig:
    cfg = load_scenario(args.scenario)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "profile", None):
        updates["channel"] = cfg.channel.model_copy(update={"profile": args.profile})
    return cfg.model_copy(update=updates) if updates else cfg


def _stem(out: Path) -> Path:
    name = out.name
    for ext in (".json", ".csv"):
        if name.endswith(ext):
            return out.with_name(name[: -len(ext)])
    return out


def _write(path: Optional[Path], text: str) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)


def _plan_csv(plan) -> str:
    rows = ["id,carriageway,station,role,jurisdiction_start,jurisdiction_end,x,y,neighbors"]
    for n in sorted(plan.nodes, key=lambda n: n.id):
        rows.append(f"{n.id},{n.carriageway},{n.station},{n.role},{n.jurisdiction[0]},{n.jurisdiction[1]},"
                    f"{n.position[0]},{n.position[1]},{' '.join(map(str, n.neighbors))}")
    rep = plan.report
    rows.append(f"# coverage valid={rep.valid} worst_distance={rep.worst_distance} "
                f"uncovered={rep.uncovered_count}")
    return "\n".join(rows) + "\n"


def cmd_plan(args) -> int:
    cfg = _load(args)
    network = build_network(cfg.geometry.model_dump())
    plan = build_plan(cfg, network)
    rep = plan.report
    text = _plan_csv(plan) if args.format == "csv" else json.dumps(plan.to_dict(), sort_keys=True, indent=2) + "\n"
    _write(Path(args.out) if args.out else None, text)
    per_side = {cw: len(ids) for cw, ids in plan.order.items()}
    print(f"plan: {len(plan.nodes)} RSMUs ({', '.join(f'{k} {v}' for k, v in per_side.items())}); "
          f"coverage {'valid' if rep.valid else 'INVALID'}, worst distance {rep.worst_distance:.1f} m",
          file=sys.stderr)
    if not rep.valid:
        for cw, bands in rep.uncovered.items():
            for a, b in bands:
                print(f"  uncovered {cw} {a:.0f}-{b:.0f} m", file=sys.stderr)
        for a, b, gap in rep.spacing_violations:
            print(f"  spacing {a}->{b}: {gap:.0f} m", file=sys.stderr)
        return EXIT_DOMAIN
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load(args)
    network = build_network(cfg.geometry.model_dump())
    plan = build_plan(cfg, network)
    if not plan.report.valid and not cfg.deployment.allow_invalid:
        print(f"{args.scenario}: schema ok, deployment coverage invalid")
        return EXIT_DOMAIN
    print(f"{args.scenario}: valid")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    sim = Simulation(cfg, tick_trace=args.tick_trace)
    result = sim.run()
    report = result.report
    if args.out:
        out = Path(args.out)
        stem = _stem(out)
        report_path = out if out.suffix in (".json", ".csv") else stem.with_suffix("." + args.format)
        _write(report_path, report_to_csv(report) if args.format == "csv" else report_to_json(report))
        write_log(result.log_lines, str(stem) + LOG_SUFFIX)
        if args.tick_trace:
            write_log([json.dumps(t, sort_keys=True) for t in result.trace], str(stem) + TRACE_SUFFIX)
    else:
        sys.stdout.write(report_to_csv(report) if args.format == "csv" else report_to_json(report))
    st = report["staleness_ms"]["max"]
    ratio = report["delivery"]["ratio"]
    print(f"handovers={report['handovers_total']} max_gap_ms={report['max_link_gap_ms']:g} "
          f"delivery_ratio={'n/a' if ratio is None else f'{ratio:.4f}'} "
          f"max_staleness_ms={'n/a' if st is None else f'{st:.1f}'}", file=sys.stderr)
    if result.violations:
        _err(f"{len(result.violations)} invariant violations, first: {result.violations[0]}")
        return EXIT_INTERNAL
    return EXIT_OK


def _sibling_report(log_path: Path) -> Optional[Path]:
    name = log_path.name
    base = log_path.with_name(name[: -len(LOG_SUFFIX)]) if name.endswith(LOG_SUFFIX) else log_path.with_suffix("")
    for ext in (".json", ".csv"):
        cand = base.with_name(base.name + ext)
        if cand.exists():
            return cand
    return None


def _compare(report: dict, path: Path) -> Tuple[bool, List[str]]:
    text = path.read_text()
    if path.suffix == ".csv":
        want = csv_rows(text)
        got = [(k, json.loads(json.dumps(v))) for k, v in flatten(report)]
    else:
        want = flatten(json.loads(text))
        got = flatten(report)
    if got == want:
        return True, []
    w, g = dict(want), dict(got)
    diff = sorted(k for k in set(w) | set(g) if w.get(k) != g.get(k))
    return False, diff


def cmd_replay(args) -> int:
    path = Path(args.log)
    records = read_log(path)
    report = collect_metrics(records)
    oracle = replay_views(records)
    ok = oracle.match and report["conservation"]["ok"]
    for m in oracle.mismatches:
        print(f"  {m}", file=sys.stderr)
    if not report["conservation"]["ok"]:
        print(f"  conservation failed; missing seq {report['conservation']['missing_seq'][:10]}", file=sys.stderr)
    ref = Path(args.report) if args.report else _sibling_report(path)
    if ref is not None:
        same, diff = _compare(report, ref)
        if not same:
            print(f"  report differs in {len(diff)} fields, e.g. {diff[:5]}", file=sys.stderr)
        ok = ok and same
    if args.out:
        _write(Path(args.out), report_to_csv(report) if args.format == "csv" else report_to_json(report))
    print("match" if ok else "mismatch")
    return EXIT_OK if ok else EXIT_DOMAIN


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rsmu-sim", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, out_help):
        sp.add_argument("--scenario", required=True, metavar="PATH")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--profile", choices=("dsrc", "cv2x"), default=None)
        sp.add_argument("--out", metavar="PATH", help=out_help)
        sp.add_argument("--format", choices=("json", "csv"), default="json")

    sp = sub.add_parser("plan", help="plan the deployment and check coverage")
    scenario_args(sp, "plan output (stdout if omitted)")
    sp.set_defaults(func=cmd_plan)

    sp = sub.add_parser("run", help="run a scenario, write report and message log")
    scenario_args(sp, "report path; the log goes next to it as <stem>.log.jsonl")
    sp.add_argument("--tick-trace", action="store_true", help="also write per-tick vehicle states")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("validate", help="check a scenario file")
    scenario_args(sp, "unused")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("replay", help="recompute metrics and views from a message log")
    sp.add_argument("log", metavar="LOG")
    sp.add_argument("--report", metavar="PATH", help="report to compare (default: sibling of LOG)")
    sp.add_argument("--out", metavar="PATH")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ScenarioError as exc:
        _err(str(exc))
        return EXIT_INPUT
    except (MetricsError, TopologyError, ChannelError, DeploymentError) as exc:
        _err(str(exc))
        return EXIT_INPUT
    except CoverageError as exc:
        _err(str(exc))
        return EXIT_DOMAIN
    except Exception as exc:  # invariant breach or bug
        log.exception("internal error")
        _err(f"internal error: {exc}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

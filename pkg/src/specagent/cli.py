"""Command-line entry point: ``specagent <command> [flags]``.

Exit codes: 0 success, 1 usage error, 2 runtime error. Reports go to stdout,
logs to stderr.
"""

from __future__ import annotations

import argparse
import asyncio
import csv
import io
import logging
import sys
from pathlib import Path
from typing import Optional

from . import analysis
from .backends import ChatCompletionBackend, EndpointConfig, ScriptedBackend, load_scenario
from .config import load_config, read_asset, run_config_from
from .core import Provenance
from .errors import SpecAgentError
from .orchestrator import Job, RunReport, arun_many, parse_trace, serialize_trace
from .simulator import SimParams, simulate
from .tools import FixtureToolBackend, HttpToolBackend, HttpToolConfig, ToolExecutor, load_fixtures

logger = logging.getLogger("specagent")

COMMANDS = ("run", "baseline", "replay", "analyze", "profile-threshold", "simulate")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _policy(value: str) -> tuple[str, int]:
    name, _, limit = value.partition(":")
    name = name.replace("-", "_")
    if name == "edit_distance":
        return name, int(limit or 0)
    if limit:
        raise argparse.ArgumentTypeError(f"policy {name} takes no argument")
    return name, 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specagent", description="Speculative draft-verify runtime for research agents")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, scenario=True):
        sp.add_argument("--config", default=None, help="config file or bundled name (e.g. demo)")
        if scenario:
            sp.add_argument("--scenario", action="append", default=[], help="scenario file; repeat for several tasks")
            sp.add_argument("--fixtures", default=None, help="tool fixture file (overrides config)")
        sp.add_argument("--seed", type=int, default=None)

    for name in ("run", "baseline"):
        sp = sub.add_parser(name, help="run tasks with speculation" if name == "run" else "run the full-reasoning baseline")
        common(sp)
        sp.add_argument("--question", default=None, help="question for a live (http) run")
        sp.add_argument("--trace-out", default="traces", help="directory, or a .jsonl path for a single task")
        sp.add_argument("--tau", type=float, default=None)
        sp.add_argument("--tau-think", type=int, default=None)
        sp.add_argument("--policy", type=_policy, default=None, help="semantic | exact | edit_distance:N | always_accept | always_reject")
        sp.add_argument("--prefetch", action="store_true", default=None)
        sp.add_argument("--parallel", type=int, default=1)

    sp = sub.add_parser("replay", help="validate a trace, or re-run it and compare byte-for-byte")
    common(sp)
    sp.add_argument("trace")

    sp = sub.add_parser("analyze", help="offline reports over trace files")
    sp.add_argument("traces", nargs="+")
    sp.add_argument("--report", choices=("latency", "entropy", "scores"), default="latency")

    sp = sub.add_parser("profile-threshold", help="pick tau for a target intervention rate")
    common(sp, scenario=False)
    sp.add_argument("dev", help="CSV with score[,label] columns, or trace .jsonl files", nargs="+")
    sp.add_argument("--target-rate", type=float, default=None)

    sp = sub.add_parser("simulate", help="discrete-event latency simulation")
    common(sp, scenario=False)
    sp.add_argument("--prefetch", action="store_true", default=None)
    return p


# -- wiring ----------------------------------------------------------------------


def _tools(cfg: dict, fixtures: Optional[str]) -> ToolExecutor:
    section = dict(cfg.get("tools") or {})
    mode = section.get("mode", "fixture")
    if mode == "http":
        backend = HttpToolBackend(HttpToolConfig(**section["http"]))
    elif mode == "fixture":
        path = fixtures or section.get("fixtures")
        if path is None:
            raise SpecAgentError("fixture mode needs --fixtures or tools.fixtures in the config")
        backend = FixtureToolBackend(load_fixtures(read_asset(path)))
    else:
        raise SpecAgentError(f"unknown tools.mode {mode!r}")
    return ToolExecutor(
        backend,
        max_results=section.get("max_results", 10),
        content_cap=section.get("content_cap", 8192),
        cache_size=section.get("cache_size", 1024),
    )


def _jobs(args, cfg: dict) -> list[Job]:
    section = cfg.get("backends") or {}
    mode = section.get("mode", "scripted")
    jobs = []
    if mode == "scripted":
        if not args.scenario:
            raise UsageError("scripted backends need at least one --scenario")
        for name in args.scenario:
            script = load_scenario(read_asset(name))
            question = script.question or getattr(args, "question", None)
            if not question:
                raise SpecAgentError(f"scenario {name} has no question")
            task_id = script.task_id or Path(name).stem
            jobs.append(Job(question, ScriptedBackend(script), _tools(cfg, args.fixtures), task_id))
    elif mode == "http":
        if not getattr(args, "question", None):
            raise UsageError("http backends need --question")
        endpoints = {role: EndpointConfig.from_dict(ep) for role, ep in (section.get("endpoints") or {}).items()}
        jobs.append(Job(args.question, ChatCompletionBackend(endpoints), _tools(cfg, args.fixtures)))
    else:
        raise SpecAgentError(f"unknown backends.mode {mode!r}")
    return jobs


def _run_config(args, cfg: dict):
    policy, limit = getattr(args, "policy", None) or (None, None)
    return run_config_from(
        cfg.get("run"),
        seed=args.seed,
        tau=getattr(args, "tau", None),
        tau_think=getattr(args, "tau_think", None),
        verifier_policy=policy,
        edit_limit=limit if policy == "edit_distance" else None,
        prefetch=getattr(args, "prefetch", None),
    )


def _summary(reports: list[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task_id", "status", "steps", "accepted", "fallbacks", "intervention_rate", "wall_ms", "final_answer"])
    for r in reports:
        t = r.trajectory
        w.writerow([t.task_id, r.status, r.step_count, r.accept_count, r.fallback_count,
                    f"{r.intervention_rate:.3f}", r.wall_ms, t.final_answer or ""])
    return buf.getvalue()


def _trace_path(out: str, task_id: str, baseline: bool, single: bool) -> Path:
    p = Path(out)
    if single and p.suffix == ".jsonl":
        return p
    return p / (f"{task_id}.baseline.jsonl" if baseline else f"{task_id}.jsonl")


def cmd_run(args, baseline: bool) -> int:
    cfg = load_config(args.config)
    config = _run_config(args, cfg)
    jobs = _jobs(args, cfg)
    reports = asyncio.run(arun_many(jobs, config, parallel=args.parallel, baseline=baseline))
    for r in reports:
        path = _trace_path(args.trace_out, r.trajectory.task_id, baseline, len(reports) == 1)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(serialize_trace(r.trajectory), encoding="utf-8")
        logger.info("wrote %s", path)
    sys.stdout.write(_summary(reports))
    return 0


def cmd_replay(args) -> int:
    recorded = Path(args.trace).read_text(encoding="utf-8")
    traj = parse_trace(recorded)
    if not args.scenario:
        report = RunReport.from_trajectory(traj)
        sys.stdout.write(_summary([report]))
        return 0
    cfg = load_config(args.config)
    config = _run_config(args, cfg)
    jobs = _jobs(args, cfg)
    if len(jobs) != 1:
        raise UsageError("replay takes exactly one --scenario")
    job = Job(jobs[0].question, jobs[0].backend, jobs[0].tools, traj.task_id)
    baseline = bool(traj.steps) and all(s.provenance is Provenance.BASE for s in traj.steps)
    (report,) = asyncio.run(arun_many([job], config, baseline=baseline))
    fresh = serialize_trace(report.trajectory)
    if fresh == recorded:
        sys.stdout.write(f"identical: {len(traj.steps)} steps replayed byte-for-byte\n")
        return 0
    a, b = recorded.split("\n"), fresh.split("\n")
    first = next((i for i, (x, y) in enumerate(zip(a, b)) if x != y), min(len(a), len(b)))
    sys.stdout.write(f"diverged at record {first}\n")
    return 2


def cmd_analyze(args) -> int:
    trajs = [parse_trace(Path(p).read_text(encoding="utf-8")) for p in args.traces]
    if args.report == "latency":
        for t in trajs:
            if len(trajs) > 1:
                sys.stdout.write(f"# {t.task_id}\n")
            sys.stdout.write(analysis.latency_breakdown(t).to_csv())
    elif args.report == "entropy":
        rep = analysis.entropy_report(analysis.action_samples(trajs))
        sys.stdout.write(rep.to_csv())
        sys.stdout.write(f"# search_exceeds_visit_without_reasoning,{rep.search_exceeds_visit}\n")
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(["task_id", "final_answer", "n", "mean", "p25"])
        for t in trajs:
            scores = analysis.trajectory_scores(t)
            if not scores:
                w.writerow([t.task_id, t.final_answer or "", 0, "", ""])
                continue
            agg = analysis.trajectory_aggregates(scores)
            w.writerow([t.task_id, t.final_answer or "", agg.n, repr(agg.mean), repr(agg.p25)])
    return 0


def _dev_records(paths: list[str]) -> list[tuple[float, str]]:
    records: list[tuple[float, str]] = []
    for p in paths:
        text = Path(p).read_text(encoding="utf-8")
        if p.endswith(".jsonl"):
            traj = parse_trace(text)
            records += [(s, traj.task_id) for s in analysis.trajectory_scores(traj)]
            continue
        for row in csv.reader(io.StringIO(text)):
            if not row or row[0].strip().lower() == "score":
                continue
            records.append((float(row[0]), row[1] if len(row) > 1 else ""))
    return records


def cmd_profile(args) -> int:
    cfg = load_config(args.config)
    target = args.target_rate if args.target_rate is not None else (cfg.get("profile") or {}).get("target_rate", 0.2)
    records = _dev_records(args.dev)
    tau = analysis.profile_threshold(records, target)
    achieved = analysis.intervention_rate_at([s for s, _ in records], tau)
    sys.stdout.write(f"records,target_rate,tau,achieved_rate\n{len(records)},{target},{tau!r},{achieved:.4f}\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    section = dict(cfg.get("simulate") or {})
    if args.seed is not None:
        section["seed"] = args.seed
    if args.prefetch:
        section["prefetch"] = True
    if not section:
        raise UsageError("simulate needs a config with a simulate section")
    report = simulate(SimParams.from_dict(section))
    sys.stdout.write(report.to_csv())
    return 0


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "specagent: error: a command is required")
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command in ("run", "baseline"):
            return cmd_run(args, baseline=args.command == "baseline")
        if args.command == "replay":
            return cmd_replay(args)
        if args.command == "analyze":
            return cmd_analyze(args)
        if args.command == "profile-threshold":
            return cmd_profile(args)
        return cmd_simulate(args)
    except UsageError as exc:
        print(f"specagent: error: {exc}", file=sys.stderr)
        return 1
    except (SpecAgentError, OSError, ValueError, TypeError, KeyError) as exc:
        print(f"specagent: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

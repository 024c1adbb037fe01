"""Intervention-rate sweep.

Two views of the same trade-off, printed as CSV:

* ``--mode sim``: the latency simulator over intervention rates 0.0 .. 1.0.
* ``--mode scripted``: the ten-step demo with a graded critic, re-run across a
  range of thresholds; reports the achieved intervention rate and wall time.
"""

import argparse
import csv
import math
import sys

from specagent.backends import ScriptedBackend
from specagent.backends.builders import critic_distribution
from specagent.config import load_config
from specagent.demo import QUESTION, ten_step_fixtures_yaml, ten_step_scenario
from specagent.orchestrator import RunConfig, run_baseline, run_task
from specagent.simulator import SimParams, simulate
from specagent.tools import FixtureToolBackend, ToolExecutor, load_fixtures


def sim_sweep(points: int, steps: int, seed: int, prefetch: bool):
    section = dict(load_config("sim_default")["simulate"], steps=steps, seed=seed, prefetch=prefetch)
    for i in range(points):
        rate = i / (points - 1)
        rep = simulate(SimParams.from_dict(dict(section, accept_prob=1 - rate)))
        yield [f"{rate:.2f}", f"{rep.mean_step_ms:.1f}", f"{rep.speedup:.3f}"]


def _graded_scenario():
    # step i gets Yes-mass rising from 0.15 to 0.95 so thresholds cut at different steps
    script = ten_step_scenario(reject_steps=())
    entries = dict(script.entries)
    for (role, step, mode), value in script.entries.items():
        if role.value == "critic":
            p_yes = 0.15 + 0.8 * ((step * 7) % 10) / 9
            entries[(role, step, mode)] = critic_distribution(p_yes, 1 - p_yes, latency_ms=value.latency_ms)
    return type(script)(entries, script.question, script.task_id)


def scripted_sweep(taus):
    baseline = run_baseline(QUESTION, RunConfig(), ScriptedBackend(ten_step_scenario()), _tools()).wall_ms
    for tau in taus:
        report = run_task(QUESTION, RunConfig(tau=tau), ScriptedBackend(_graded_scenario()), _tools())
        yield [f"{tau:.2f}", f"{report.intervention_rate:.2f}", report.wall_ms, f"{baseline / report.wall_ms:.3f}",
               report.trajectory.final_answer or ""]


def _tools():
    return ToolExecutor(FixtureToolBackend(load_fixtures(ten_step_fixtures_yaml())))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=("sim", "scripted"), default="sim")
    ap.add_argument("--points", type=int, default=11)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--prefetch", action="store_true")
    args = ap.parse_args(argv)

    w = csv.writer(sys.stdout, lineterminator="\n")
    if args.mode == "sim":
        w.writerow(["intervention_rate", "mean_step_ms", "speedup"])
        w.writerows(sim_sweep(args.points, args.steps, args.seed, args.prefetch))
    else:
        w.writerow(["tau", "intervention_rate", "wall_ms", "speedup", "final_answer"])
        lo, hi = math.log(0.15 / 0.85) - 0.1, math.log(0.95 / 0.05) + 0.1
        w.writerows(scripted_sweep([lo + (hi - lo) * i / (args.points - 1) for i in range(args.points)]))


if __name__ == "__main__":
    main()

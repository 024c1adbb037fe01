"""Regenerate the bundled demo scenario, tool fixtures and configs."""

import argparse
import sys
from pathlib import Path

from specagent.backends.scenario import dump_scenario
from specagent.demo import ten_step_fixtures_yaml, ten_step_scenario

DATA = Path(__file__).resolve().parents[1] / "src" / "specagent" / "data"

DEMO_CONFIG = """\
run:
  tau: 0.0
  tau_think: 512
  max_steps: 30
  verifier_policy: semantic
  prefetch: false
  seed: 0
  window: 8
backends:
  mode: scripted
tools:
  mode: fixture
  fixtures: fixtures/ten_step_tools
  max_results: 10
  content_cap: 8192
  cache_size: 1024
profile:
  target_rate: 0.2
"""

SIM_DEFAULT = """\
simulate:
  r_base: 10000
  r_slm: 3000
  g_llm: 2000
  v: 500
  e_tool: 2000
  accept_prob: 0.8
  steps: 10000
  seed: 0
  prefetch: false
"""


def assets():
    return {
        "fixtures/ten_step.yaml": dump_scenario(ten_step_scenario()),
        "fixtures/ten_step_tools.yaml": ten_step_fixtures_yaml(),
        "configs/demo.yaml": DEMO_CONFIG,
        "configs/sim_default.yaml": SIM_DEFAULT,
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--check", action="store_true", help="report stale assets instead of writing")
    args = ap.parse_args(argv)

    stale = []
    for rel, text in assets().items():
        path = DATA / rel
        if args.check:
            if not path.exists() or path.read_text(encoding="utf-8") != text:
                stale.append(rel)
            continue
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    if args.check:
        print("stale: " + ", ".join(stale) if stale else "assets up to date")
        sys.exit(1 if stale else 0)
    print(f"wrote assets under {DATA}")


if __name__ == "__main__":
    main()

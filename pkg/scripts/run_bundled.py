#!/usr/bin/env python3
"""Run every bundled scenario in a scratch directory and print its metrics.

Equivalent to ``proteus-sim run`` on each file under scenarios/, but keeps
generated bitstreams and outputs out of the repository tree.
"""

import shutil
import sys
import tempfile
from pathlib import Path

from proteus_sim.runner import run_scenario
from proteus_sim.scenario import parse_scenario

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def main():
    status = 0
    for source in sorted(SCENARIOS.glob("*.pscn")):
        with tempfile.TemporaryDirectory() as workdir:
            work = Path(workdir)
            shutil.copy(source, work / source.name)
            try:
                scenario = parse_scenario(source.read_text(), base_dir=work)
            except Exception as exc:
                print(f"{source.name}: parse error: {exc}")
                status = 2
                continue
            result = run_scenario(scenario, work, seed=0)
            print(f"== {source.name} (exit {result.exit_status})")
            for key in sorted(result.metrics):
                print(f"   {key} = {result.metrics[key]}")
            for failure in result.expect_failures:
                print(f"   expect failed: {failure}")
            if result.fault:
                print(f"   fault: {result.fault}")
            status = max(status, result.exit_status)
    return status


if __name__ == "__main__":
    sys.exit(main())

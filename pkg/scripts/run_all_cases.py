"""Run every registered case through the continuation solver and print a summary table.

    python3 scripts/run_all_cases.py [--out out/all] [--cases test1,test2]

Writes the usual run artifacts (field dumps, sections, manifest) per case.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass

from vanishing_moment.harness.config import RunConfig
from vanishing_moment.harness.registry import registry
from vanishing_moment.harness.run import run_case


@dataclass(frozen=True)
class Experiment:
    out: str = "out/all"
    cases: tuple[str, ...] = tuple(registry())


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=Experiment.out)
    ap.add_argument("--cases", default=",".join(Experiment.cases))
    args = ap.parse_args()
    exp = Experiment(args.out, tuple(args.cases.split(",")))
    print(f"{'case':8s} {'status':10s} {'stages':>6s} {'final |R|':>10s} {'linf err':>10s} {'secs':>6s}")
    for name in exp.cases:
        t0 = time.perf_counter()
        m = run_case(RunConfig(problem=name, out=f"{exp.out}/{name}"))
        diag = dict(m.diagnostics)
        errs = [v for k, v in diag.items() if k.endswith(".linf")]
        last = m.stages[-1]
        print(
            f"{name:8s} {m.status:10s} {len(m.stages):6d} {float(last['final_residual']):10.2e} "
            f"{(float(errs[-1]) if errs else float('nan')):10.3e} {time.perf_counter() - t0:6.1f}"
        )


if __name__ == "__main__":
    main()

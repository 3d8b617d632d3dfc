"""Grid refinement study at fixed eps: error vs exact solution and observed orders.

    python3 scripts/h_convergence.py [--case test2] [--ns 17,33,65] [--eps 1e-3]

At fixed eps the discrete solution converges to the regularized solution,
so the error against the exact limit saturates at the O(eps) moment error
once h is small enough; the table shows where.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from vanishing_moment.diagnostics import convergence_rate, error_norms
from vanishing_moment.harness.registry import get_case
from vanishing_moment.solver import continuation_solve


@dataclass(frozen=True)
class StudyConfig:
    case: str = "test2"
    ns: tuple[int, ...] = (17, 33, 65)
    eps: float | None = None  # None -> the case's final schedule value


def run(cfg: StudyConfig) -> None:
    case = get_case(cfg.case)
    model = case.model()
    if model.exact is None:
        raise SystemExit(f"{cfg.case} has no exact solution")
    eps = case.schedule[-1] if cfg.eps is None else cfg.eps
    sched = tuple(v for v in case.schedule if abs(v) > abs(eps)) + (eps,)
    prev = None
    print(f"{'n':>5s} {'linf':>11s} {'l2':>11s} {'h1':>11s} {'order(linf)':>12s}")
    for n in cfg.ns:
        grid = case.grid(n)
        res = continuation_solve(model, grid, sched)
        if not res.completed:
            print(f"{n:5d} failed at stage {res.failed_stage}")
            break
        e = error_norms(res.final.full_field(), model.exact, grid)
        rate = "" if prev is None else convergence_rate(prev, e.linf)
        rate_s = rate if isinstance(rate, str) else f"{rate:.2f}"
        print(f"{n:5d} {e.linf:11.4e} {e.l2:11.4e} {e.h1:11.4e} {rate_s:>12s}")
        prev = e.linf


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--case", default=StudyConfig.case)
    ap.add_argument("--ns", default=",".join(map(str, StudyConfig.ns)))
    ap.add_argument("--eps", type=float)
    args = ap.parse_args()
    run(StudyConfig(args.case, tuple(int(v) for v in args.ns.split(",")), args.eps))


if __name__ == "__main__":
    main()

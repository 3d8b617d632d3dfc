"""Gauss-curvature continuation: sweep K with warm starts and report where Newton breaks down.

    python3 scripts/gauss_sweep.py [--n 33] [--eps 1e-3] [--k-max 2.4] [--k-step 0.1]
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from vanishing_moment.harness.registry import get_case
from vanishing_moment.solver import parameter_continuation


@dataclass(frozen=True)
class SweepConfig:
    n: int = 33
    eps: float = 1e-3
    warmup: tuple[float, ...] = (1e-1, 1e-2)
    k_values: tuple[float, ...] = (0.1, 1.0, 2.0, 2.1, 2.2, 2.3, 2.4)


def run(cfg: SweepConfig) -> None:
    case = get_case("test6")
    res = parameter_continuation(case.make_model, cfg.k_values, case.grid(cfg.n), cfg.eps, eps_warmup=cfg.warmup)
    for st in res.stages:
        r = st.report
        print(f"K={st.value:5.2f} converged={r.converged!s:5s} iters={r.iterations:3d} damped={r.damping_events:2d} |R|={r.final_residual:.2e}")
    if res.completed:
        print(f"no breakdown up to K={cfg.k_values[-1]}")
    else:
        print(f"breakdown at K={res.stages[res.failed_stage].value}")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=SweepConfig.n)
    ap.add_argument("--eps", type=float, default=SweepConfig.eps)
    ap.add_argument("--k-max", type=float)
    ap.add_argument("--k-step", type=float, default=0.1)
    args = ap.parse_args()
    ks = SweepConfig.k_values
    if args.k_max is not None:
        ks = tuple(float(k) for k in np.round(np.arange(args.k_step, args.k_max + 1e-9, args.k_step), 10))
    run(SweepConfig(n=args.n, eps=args.eps, k_values=ks))


if __name__ == "__main__":
    main()

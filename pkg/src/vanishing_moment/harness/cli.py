"""``moment-solve`` command line.

Exit codes: 0 converged / all checks pass, 2 partial (a stage or check
failed), 1 error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, RunConfig, load_config
from .io import FormatError
from .registry import registry
from .run import EXIT_ERROR, EXIT_OK, EXIT_PARTIAL, RunError, run_case
from .verify import verify_case


def _floats(s: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="moment-solve", description="Vanishing moment solver for fully nonlinear second-order PDEs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log Newton progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("--config", required=True)

    c = sub.add_parser("case", help="run a registered case")
    c.add_argument("name")
    c.add_argument("--n", type=int)
    c.add_argument("--eps-schedule", type=_floats)
    c.add_argument("--aux-value", type=float)
    c.add_argument("--out")

    v = sub.add_parser("verify", help="run a case's acceptance checks")
    v.add_argument("name")
    v.add_argument("--n", type=int)

    sub.add_parser("list", help="list registered cases")
    return p


def _report_run(cfg: RunConfig) -> int:
    m = run_case(cfg)
    for i, st in enumerate(m.stages):
        label = next(iter(st))
        print(f"stage {i}: {label}={st[label]} converged={st['converged']} iterations={st['iterations']} residual={st['final_residual']}")
    print(f"status: {m.status} ({len(m.files)} files in {m.out_dir})")
    return m.exit_code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        if args.command == "list":
            for name, case in registry().items():
                print(f"{name:8s} {case.title}")
            return EXIT_OK
        if args.command == "run":
            return _report_run(load_config(args.config))
        if args.command == "case":
            cfg = RunConfig(
                problem=args.name,
                n=args.n,
                eps_schedule=args.eps_schedule,
                aux_value=args.aux_value,
                out=args.out or f"out/{args.name}",
            )
            return _report_run(cfg)
        if args.command == "verify":
            checks = verify_case(args.name, args.n)
            for chk in checks:
                print(chk.line())
            return EXIT_OK if all(chk.passed for chk in checks) else EXIT_PARTIAL
    except (ConfigError, FormatError, KeyError, RunError, ValueError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

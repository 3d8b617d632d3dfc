"""Execute a configured case and write its artifacts."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

from ..diagnostics import convexity_report, cross_section, error_norms
from ..grid import ScalarField
from ..solver import ContinuationResult, continuation_solve, parameter_continuation
from .config import RunConfig
from .io import format_key_values, section_name, write_field_dump, write_section
from .registry import get_case

FORMAT_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_PARTIAL = 0, 1, 2


class RunError(RuntimeError):
    pass


@dataclass
class RunManifest:
    config: list[tuple[str, str]]
    case: str
    grid_n: tuple[int, ...]
    branch: str
    status: str = "converged"
    stages: list[dict] = field(default_factory=list)
    diagnostics: list[tuple[str, str]] = field(default_factory=list)
    wall_times: dict[str, float] = field(default_factory=dict)  # kept out of the manifest file
    files: list[str] = field(default_factory=list)
    out_dir: Path | None = None
    error: str | None = None
    format_version: int = FORMAT_VERSION

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_ERROR
        return EXIT_OK if self.status == "converged" else EXIT_PARTIAL

    def items(self) -> list[tuple[str, str]]:
        out = [("format_version", str(self.format_version))]
        out += self.config
        out += [("case", self.case), ("grid_n", " ".join(map(str, self.grid_n))), ("branch", self.branch), ("status", self.status)]
        for i, st in enumerate(self.stages):
            out += [(f"stage.{i}.{k}", v) for k, v in st.items()]
        out += self.diagnostics
        if self.error is not None:
            out.append(("error", self.error))
        out += [("file", f) for f in self.files]
        return out

    def text(self) -> str:
        return format_key_values(self.items())


def _stage_items(label: str, value: float, report) -> dict:
    return {
        label: repr(float(value)),
        "converged": "true" if report.converged else "false",
        "iterations": str(report.iterations),
        "final_residual": repr(float(report.final_residual)),
        "damping_events": str(report.damping_events),
        "message": report.message,
    }


def solve_config(cfg: RunConfig) -> tuple[ContinuationResult, str]:
    """Run the solve only; returns the result and the stage label ('eps' or the parameter name)."""
    case = get_case(cfg.problem)
    grid = case.grid(cfg.n)
    schedule = cfg.schedule(case)
    opts = cfg.newton_options()
    if cfg.sweep:
        res = parameter_continuation(case.make_model, cfg.sweep, grid, schedule[-1], cfg.aux_value, opts, eps_warmup=schedule[:-1])
        return res, case.parameter
    return continuation_solve(case.model(cfg.parameter), grid, schedule, cfg.aux_value, opts), "eps"


def run_case(cfg: RunConfig) -> RunManifest:
    """Validate, solve, then write dumps, sections and ``manifest.txt`` under ``cfg.out``.

    Nothing is written if validation fails. Wall times go to ``timing.txt``
    so that the manifest itself is reproducible byte for byte.
    """
    cfg = cfg.validate()
    case = get_case(cfg.problem)
    grid = case.grid(cfg.n)
    schedule = cfg.schedule(case)
    manifest = RunManifest(
        config=cfg.items(),
        case=case.name,
        grid_n=grid.n,
        branch="concave" if schedule[0] < 0 else "convex",
    )
    t0 = time.perf_counter()
    res, label = solve_config(cfg)
    manifest.wall_times["solve"] = time.perf_counter() - t0
    manifest.status = "converged" if res.completed else "partial"
    manifest.stages = [_stage_items(label, st.value, st.report) for st in res.stages]

    good = [st for st in res.stages if st.report.converged]
    model = case.model(cfg.parameter)
    if cfg.emit_reports and good and label == "eps":
        for i, st in enumerate(good):
            if model.exact is not None:
                err = error_norms(st.full_field(), model.exact, grid)
                manifest.diagnostics += [(f"error.{i}.{k}", repr(getattr(err, k))) for k in ("linf", "l2", "h1", "h2")]
        U = ScalarField(grid, good[-1].full_field())
        cvx = convexity_report(U, k=2)
        manifest.diagnostics += [
            ("convexity.margin", str(cvx.margin)),
            ("convexity.min_eig", repr(cvx.min_eig)),
            ("convexity.max_eig", repr(cvx.max_eig)),
            ("convexity.min_det", repr(cvx.min_det)),
            ("convexity.min_laplacian", repr(cvx.min_laplacian)),
            ("convexity.boundary_layer_width", str(cvx.boundary_layer_width)),
        ]

    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if cfg.emit_fields:
            for st in good:
                name = f"{case.name}_{label}{st.value:g}.field"
                write_field_dump(ScalarField(grid, st.full_field()), out / name)
                manifest.files.append(name)
        if cfg.emit_sections and good:
            U = ScalarField(grid, good[-1].full_field())
            for axis in (0, 1):
                lo, hi = grid.lo[axis], grid.hi[axis]
                for s in case.sections:
                    c = lo + s * (hi - lo)
                    name = section_name(case.name, axis, c)
                    write_section(cross_section(U, axis, c), out / name)
                    manifest.files.append(name)
        manifest.wall_times["total"] = time.perf_counter() - t0
        (out / "timing.txt").write_text(format_key_values([(k, repr(v)) for k, v in manifest.wall_times.items()]))
        manifest.files.append("timing.txt")
        (out / "manifest.txt").write_text(manifest.text())
    except OSError as exc:
        manifest.error = f"I/O failure: {exc}"
        try:
            (out / "manifest.txt").write_text(manifest.text())
        except OSError:
            pass
        raise RunError(f"{manifest.error}; manifest so far lists {len(manifest.files)} files") from exc
    manifest.out_dir = out
    return manifest

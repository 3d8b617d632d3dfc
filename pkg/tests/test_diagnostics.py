import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vanishing_moment.diagnostics import (
    convergence_rate,
    convexity_report,
    cross_section,
    error_norms,
    interior_minima,
    moment_convergence_study,
    operator_order,
)
from vanishing_moment.grid import ScalarField, build_grid, sample_function
from vanishing_moment.harness.registry import get_case
from vanishing_moment.operators import laplacian_fd
from vanishing_moment.solver import continuation_solve

UNIT = build_grid((0, 0), (1, 1), 17)


def r2(x):
    return np.sum(x * x, -1)


def saddle(x):
    return x[..., 0] ** 2 - x[..., 1] ** 2


# --- error norms ------------------------------------------------------------------

def test_error_norms_of_exact_samples_vanish():
    rep = error_norms(sample_function(UNIT, r2), r2)
    assert rep.linf == rep.l2 == rep.h1 == rep.h2 == 0.0


def test_error_norms_constant_shift():
    c = 0.37
    rep = error_norms(sample_function(UNIT, lambda x: r2(x) + c), r2)
    assert abs(rep.linf - c) <= 1e-15
    assert rep.h1 <= 1e-12 and rep.h2 <= 1e-9
    assert rep.l2 <= rep.linf * math.sqrt(1.0) + 1e-14


def test_error_norms_accept_arrays():
    U = sample_function(UNIT, saddle)
    a = error_norms(U.values + 1.0, U.values, UNIT)
    b = error_norms(U.values + 1.0, saddle, UNIT)
    assert a == b
    with pytest.raises(ValueError):
        error_norms(U.values, saddle)


@given(st.integers(0, 2**32 - 1))
def test_l2_bounded_by_linf(seed):
    v = np.random.default_rng(seed).normal(size=UNIT.shape)
    rep = error_norms(v, np.zeros(UNIT.shape), UNIT)
    assert min(rep.linf, rep.l2, rep.h1, rep.h2) >= 0
    assert rep.l2 <= rep.linf * 1.0 + 1e-12  # measure of the unit square is 1


def test_pinned_error_test9():
    case = get_case("test9")
    res = continuation_solve(case.model(), case.grid(), case.schedule)
    e = error_norms(res.final.full_field(), case.model().exact, case.grid()).linf
    pin = 0.0020394353534576304
    assert abs(e - pin) <= 0.2 * pin


# --- convexity -------------------------------------------------------------------

def test_convexity_of_paraboloid():
    rep = convexity_report(sample_function(UNIT, r2))
    assert abs(rep.min_eig - 2) <= 1e-9 and abs(rep.max_eig - 2) <= 1e-9
    assert abs(rep.min_det - 4) <= 1e-8
    assert rep.boundary_layer_width == 1
    assert rep.n_nodes == 13 * 13


def test_convexity_flags_saddle():
    rep = convexity_report(sample_function(UNIT, saddle))
    assert abs(rep.min_eig + 2) <= 1e-9
    assert rep.boundary_layer_width is None


@given(st.integers(0, 2**32 - 1))
def test_convexity_negation_swaps_extremes(seed):
    v = np.random.default_rng(seed).normal(size=UNIT.shape)
    a = convexity_report(ScalarField(UNIT, v))
    b = convexity_report(ScalarField(UNIT, -v))
    assert abs(a.min_eig + b.max_eig) <= 1e-12 * max(1.0, abs(a.min_eig))
    assert abs(a.max_eig + b.min_eig) <= 1e-12 * max(1.0, abs(a.max_eig))


def test_convexity_report_consistent_with_laplacian():
    U = ScalarField(UNIT, np.random.default_rng(1).normal(size=UNIT.shape))
    rep = convexity_report(U, k=3)
    lap = laplacian_fd(U)
    assert rep.min_laplacian == lap[2:-2, 2:-2].min()
    with pytest.raises(ValueError):
        convexity_report(U, k=0)


# --- cross sections ---------------------------------------------------------------

def test_section_of_linear_field():
    U = sample_function(UNIT, lambda x: x[..., 0])
    sec = cross_section(U, 0, 0.5)
    assert [v for _, v in sec] == [0.5] * 17
    assert [c for c, _ in sec] == list(UNIT.axis_coords(1))


def test_section_of_paraboloid_along_y0():
    U = sample_function(UNIT, r2)
    sec = cross_section(U, 1, 0.0)
    assert [v for _, v in sec] == [c * c for c, _ in sec]


def test_section_bit_equal_to_grid_reads():
    U = ScalarField(UNIT, np.random.default_rng(2).normal(size=UNIT.shape))
    sec = cross_section(U, 0, 0.3)
    i = round(0.3 * 16)
    assert np.array([v for _, v in sec]).tobytes() == U.values[i, :].tobytes()
    with pytest.raises(ValueError):
        cross_section(U, 0, 1.5)


def test_section_3d_uses_mid_plane():
    g = build_grid((0, 0, 0), (1, 1, 1), 9)
    U = ScalarField(g, np.random.default_rng(3).normal(size=g.shape))
    sec = cross_section(U, 0, 0.25)
    assert np.array([v for _, v in sec]).tobytes() == U.values[2, :, 4].tobytes()


def test_interior_minima_count():
    assert interior_minima([(0, 0), (1, -1), (2, 0)]) == 1
    assert interior_minima([(0, 0), (1, -1), (2, 0), (3, -1), (4, 0)]) == 2
    assert interior_minima([(0, 0), (1, 1), (2, 2)]) == 0


def test_test1_mid_section_single_minimum():
    case = get_case("test1")
    res = continuation_solve(case.model(), case.grid(), case.schedule)
    sec = cross_section(ScalarField(case.grid(), res.final.full_field()), 0, 0.5)
    assert interior_minima(sec) == 1
    assert sec[0][1] == 0.0 and sec[-1][1] == 0.0


# --- rates and studies --------------------------------------------------------------

def test_convergence_rate_examples():
    assert convergence_rate(0.4, 0.1) == 2.0
    assert convergence_rate(0.4, 0.2) == 1.0
    assert convergence_rate(0.3, 0.0) == "exact"
    with pytest.raises(ValueError):
        convergence_rate(-1.0, 0.1)


def test_laplacian_order():
    fn = lambda x: np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])  # noqa: E731
    order = operator_order(laplacian_fd, fn, lambda x: -2 * np.pi**2 * fn(x), (0, 0), (1, 1), 33)
    assert 1.9 <= order <= 2.1


def test_degenerate_schedule_zero_difference():
    case = get_case("test2")
    study = moment_convergence_study(case.model(), case.grid(17), (1e-2, 1e-2))
    assert study.completed
    assert study.differences[0].linf == 0.0


@pytest.mark.parametrize("name", ["test2", "test7"])
def test_stage_errors_decrease(name):
    case = get_case(name)
    study = moment_convergence_study(case.model(), case.grid(), case.schedule)
    assert study.completed and len(study.differences) == 2
    errs = [e.linf for e in study.stage_errors]
    assert all(b < a for a, b in zip(errs, errs[1:]))


def test_study_needs_two_stages():
    case = get_case("test2")
    with pytest.raises(ValueError):
        moment_convergence_study(case.model(), case.grid(9), (1e-2,))

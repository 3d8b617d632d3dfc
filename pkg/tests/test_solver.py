import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from vanishing_moment.assembly import build_system, residual_vector
from vanishing_moment.grid import build_grid
from vanishing_moment.harness.registry import get_case
from vanishing_moment.models import ModelSpec
from vanishing_moment.solver import (
    EpsilonSchedule,
    NewtonOptions,
    TimeStepOptions,
    continuation_solve,
    evolve_parabolic,
    fixed_point_warmup,
    initial_guess,
    newton_solve,
    parameter_continuation,
)


def zeros(x):
    return np.zeros(x.shape[:-1])


def poisson_model(source=None, boundary=None):
    return ModelSpec("Poisson", source=source or (lambda x: np.ones(x.shape[:-1])), boundary=boundary or zeros)


def max_res(sys_, u):
    return float(np.max(np.abs(residual_vector(sys_, u))))


# --- initial guess ------------------------------------------------------------------

def test_initial_guess_test1_poisson_bowl():
    case = get_case("test1")
    sys_ = build_system(case.model(), case.grid(), 1e-3)
    u0 = initial_guess(sys_)
    assert np.max(np.abs(sys_.stencils.lap @ u0 - 2.0)) <= 1e-9
    U = sys_.full_field(u0)
    assert U[16, 16] < 0


def test_initial_guess_affine_data():
    affine = lambda x: 1 + 2 * x[..., 0] - 3 * x[..., 1]  # noqa: E731
    m = ModelSpec("MongeAmpereClassical", source=zeros, boundary=affine)
    g = build_grid((0, 0), (1, 1), 13)
    sys_ = build_system(m, g, 0.1)
    assert np.max(np.abs(initial_guess(sys_) - affine(sys_.interior_coords).ravel())) <= 1e-10


def test_initial_guess_concave_branch_negates():
    case = get_case("test1")
    plus = initial_guess(build_system(case.model(), case.grid(), 1e-3))
    minus = initial_guess(build_system(case.model(), case.grid(), -1e-3))
    assert np.array_equal(minus, -plus)


# --- fixed-point warm-up ----------------------------------------------------------------

def test_warmup_zero_iterations_is_identity():
    case = get_case("test2")
    sys_ = build_system(case.model(), case.grid(17), 1e-2)
    u = initial_guess(sys_)
    assert np.array_equal(fixed_point_warmup(sys_, u, 0), u)
    with pytest.raises(ValueError):
        fixed_point_warmup(sys_, u, -1)


def test_warmup_linear_model_one_iteration():
    sys_ = build_system(poisson_model(), build_grid((0, 0), (1, 1), 17), 0.05)
    u = fixed_point_warmup(sys_, np.zeros(sys_.n_unknowns), 1)
    assert max_res(sys_, u) <= 1e-8


def test_warmup_decreases_residual_on_test2():
    case = get_case("test2")
    sys_ = build_system(case.model(), case.grid(), 1e-3)
    u0 = initial_guess(sys_)
    u1 = fixed_point_warmup(sys_, u0, 1)
    u2 = fixed_point_warmup(sys_, u1, 1)
    r = [max_res(sys_, v) for v in (u0, u1, u2)]
    assert r[0] > r[1] > r[2]
    assert np.array_equal(fixed_point_warmup(sys_, u0, 2), u2)


# --- Newton -------------------------------------------------------------------------

def test_newton_linear_model_one_step():
    sys_ = build_system(poisson_model(), build_grid((0, 0), (1, 1), 17), 1e-2)
    _, rep = newton_solve(sys_, np.zeros(sys_.n_unknowns))
    assert rep.converged and rep.iterations == 1
    assert rep.step_lengths == [1.0] and rep.damping_events == 0


def test_newton_quadratic_tail_test9():
    case = get_case("test9")
    sys_ = build_system(case.model(), case.grid(), case.schedule[-1])
    _, rep = newton_solve(sys_, initial_guess(sys_))
    hist = rep.residual_history
    assert rep.converged and hist[-1] <= 1e-8
    assert len(hist) == rep.iterations + 1
    a, b, c = hist[-3:]
    assert b <= a * a
    assert c <= max(b * b, 1e-10)  # the last step may land on the round-off floor


def test_newton_from_solution_is_fixed():
    case = get_case("test2")
    sys_ = build_system(case.model(), case.grid(17), 1e-2)
    u, rep = newton_solve(sys_, initial_guess(sys_))
    u2, rep2 = newton_solve(sys_, u)
    assert rep2.iterations <= 1 and rep2.damping_events == 0
    assert max_res(sys_, u2) <= max_res(sys_, u)


def test_newton_never_increases_residual():
    case = get_case("test1")
    sys_ = build_system(case.model(), case.grid(), 1e-3)
    _, rep = newton_solve(sys_, initial_guess(sys_))
    h = rep.residual_history
    assert all(b < a for a, b in zip(h, h[1:]))


def test_newton_nonconvergence_returns_report():
    case = get_case("test2")
    sys_ = build_system(case.model(), case.grid(17), 1e-3)
    u, rep = newton_solve(sys_, initial_guess(sys_), NewtonOptions(max_iters=1))
    assert not rep.converged and rep.message == "max_iters reached"
    assert np.all(np.isfinite(u))


def test_newton_options_validation():
    with pytest.raises(ValueError):
        NewtonOptions(abs_tol=0)
    with pytest.raises(ValueError):
        NewtonOptions(max_iters=0)


# --- continuation -----------------------------------------------------------------------

def test_schedule_validation():
    with pytest.raises(ValueError, match="sign"):
        EpsilonSchedule((1e-1, -1e-2))
    with pytest.raises(ValueError, match="decrease"):
        EpsilonSchedule((1e-2, 1e-1))
    with pytest.raises(ValueError, match="decrease"):
        EpsilonSchedule((1e-2, 1e-2))
    assert EpsilonSchedule((1e-2, 1e-2), strict=False).values == (1e-2, 1e-2)
    with pytest.raises(ValueError):
        EpsilonSchedule(())
    assert EpsilonSchedule((0.1, 0.01)).negated().values == (-0.1, -0.01)


def test_single_stage_equals_direct_solve():
    case = get_case("test2")
    grid = case.grid(17)
    res = continuation_solve(case.model(), grid, (1e-3,))
    sys_ = build_system(case.model(), grid, 1e-3)
    u, _ = newton_solve(sys_, initial_guess(sys_))
    assert res.final.u.tobytes() == u.tobytes()


@pytest.mark.parametrize("name", ["test1", "test2", "test9"])
def test_warm_start_not_worse_than_cold(name):
    case = get_case(name)
    warm = continuation_solve(case.model(), case.grid(), case.schedule)
    cold = continuation_solve(case.model(), case.grid(), case.schedule[-1:])
    assert warm.completed and cold.completed
    assert warm.final.report.iterations <= cold.final.report.iterations


def test_continuation_stops_at_failed_stage():
    case = get_case("test2")
    res = continuation_solve(case.model(), case.grid(17), (1e-1, 1e-2, 1e-3), opts=NewtonOptions(max_iters=2))
    assert not res.completed
    assert res.failed_stage == len(res.stages) - 1


def test_gauss_curvature_sweep_breaks_down():
    case = get_case("test6")
    res = parameter_continuation(case.make_model, (0.1, 1.0, 2.0, 2.1, 2.2), case.grid(), 1e-3, eps_warmup=(1e-1, 1e-2))
    assert [st.report.converged for st in res.stages] == [True, True, True, True, False]
    assert res.stages[res.failed_stage].value == 2.2


def test_determinism():
    case = get_case("test1")
    a = continuation_solve(case.model(), case.grid(17), case.schedule)
    b = continuation_solve(case.model(), case.grid(17), case.schedule)
    assert a.final.u.tobytes() == b.final.u.tobytes()
    assert [s.report.residual_history for s in a.stages] == [s.report.residual_history for s in b.stages]


def test_branch_symmetry_test1():
    case = get_case("test1")
    grid = case.grid()
    sched = EpsilonSchedule(case.schedule)
    plus = continuation_solve(case.model(), grid, sched, aux_value=0.0)
    minus = continuation_solve(case.model(), grid, sched.negated(), aux_value=0.0)
    assert plus.completed and minus.completed
    assert np.max(np.abs(plus.final.full_field() + minus.final.full_field())) <= 1e-8


# --- parabolic ------------------------------------------------------------------------

def test_time_step_options_validation():
    with pytest.raises(ValueError):
        TimeStepOptions(dt=0, t_end=1)
    with pytest.raises(ValueError):
        TimeStepOptions(dt=0.1, t_end=0.05)
    with pytest.raises(ValueError):
        TimeStepOptions(dt=0.1, t_end=1, scheme="leapfrog")


def test_backward_euler_linear_step_matches_direct_solve():
    g = build_grid((0, 0), (1, 1), 17)
    f = lambda x: np.sin(3 * x[..., 0]) + x[..., 1]  # noqa: E731
    m = poisson_model(source=f)
    eps, dt = 1e-2, 1e-3
    U0 = np.zeros(g.shape)
    U0[g.interior] = np.random.default_rng(0).normal(size=g.interior_shape)
    opts = TimeStepOptions(dt=dt, t_end=dt, newton=NewtonOptions(abs_tol=1e-13, rel_tol=1e-15))
    tr = evolve_parabolic(m, g, U0, eps, opts, aux_value=0.0)
    assert tr.completed
    sys_ = build_system(m, g, eps, aux_value=0.0)
    L = sys_.stencils.lap
    A = sp.identity(L.shape[0]) / dt + eps * (L @ L) - L
    rhs = U0[g.interior].ravel() / dt - f(sys_.interior_coords).ravel()
    ref = spla.spsolve(A.tocsc(), rhs)
    assert np.max(np.abs(tr.fields[-1][g.interior].ravel() - ref)) <= 1e-10 * max(1.0, np.max(np.abs(ref)))


def _parabolic(model):
    return ModelSpec(
        "ParabolicMongeAmpere",
        source=lambda x, t: model.source(x),
        boundary=lambda x, *t: model.boundary(x),
    )


def test_stationary_state_is_fixed_point():
    case = get_case("test2")
    grid = case.grid(17)
    tight = NewtonOptions(abs_tol=1e-11)
    U = continuation_solve(case.model(), grid, (1e-1, 1e-2), opts=tight).final.full_field()
    tr = evolve_parabolic(_parabolic(case.model()), grid, U, 1e-2, TimeStepOptions(dt=0.01, t_end=0.05, newton=tight))
    assert tr.completed and len(tr.fields) == 6
    for F in tr.fields:
        assert np.max(np.abs(F - U)) <= 1e-10


def test_long_time_run_approaches_elliptic_solution():
    case = get_case("test2")
    grid = case.grid()
    eps = 1e-3
    target = continuation_solve(case.model(), grid, case.schedule).final.full_field()
    sys_ = build_system(case.model(), grid, eps)
    U0 = sys_.full_field(initial_guess(sys_))
    times = [0.1 * k for k in range(1, 6)]
    tr = evolve_parabolic(_parabolic(case.model()), grid, U0, eps, TimeStepOptions(dt=0.01, t_end=0.5), sample_times=times)
    assert tr.completed
    gaps = [np.max(np.abs(F - target)) for F in tr.fields[-5:]]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_parabolic_rejects_incompatible_initial_data():
    case = get_case("test2")
    grid = case.grid(9)
    with pytest.raises(ValueError, match="Dirichlet"):
        evolve_parabolic(_parabolic(case.model()), grid, np.zeros(grid.shape), 1e-2, TimeStepOptions(dt=0.1, t_end=0.1))


def test_crank_nicolson_runs():
    case = get_case("test2")
    grid = case.grid(17)
    sys_ = build_system(case.model(), grid, 1e-2)
    U0 = sys_.full_field(initial_guess(sys_))
    tr = evolve_parabolic(_parabolic(case.model()), grid, U0, 1e-2, TimeStepOptions(dt=0.01, t_end=0.05, scheme="crank_nicolson"))
    assert tr.completed and len(tr.times) == 6

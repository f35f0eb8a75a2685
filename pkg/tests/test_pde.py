import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lookahead.errors import CFLViolation, DomainExit, PreconditionError
from lookahead.kernel import indicator, infinite
from lookahead.pde import (
    auto_domain,
    diagnostics,
    initial_solution,
    simulate,
    stable_dt,
    step,
)
from lookahead.profiles import Sech2


def test_zero_density_is_stationary(fj2):
    sol = initial_solution(-5, 5, 100, np.zeros(100), infinite())
    for _ in range(5):
        sol = step(fj2, infinite(), sol, dt=0.01)
    assert np.all(sol.rho == 0.0)
    assert all(row.ok for row in sol.history)


def test_periodic_constant_state_conserves_mass(fj2):
    kernel = indicator(1.0)
    sol = initial_solution(0, 10, 200, np.full(200, 0.3), kernel, periodic=True)
    m0 = sol.mass
    for _ in range(50):
        prev = sol.mass
        sol = step(fj2, kernel, sol)
        assert abs(sol.mass - prev) <= 1e-15 * max(1.0, prev) + 1e-15
    assert np.allclose(sol.rho, 0.3, atol=1e-14)
    assert sol.mass == pytest.approx(m0, abs=1e-13)


def _run_to(flux, n, t_end, profile, domain):
    sol = initial_solution(*domain, n, profile, infinite())
    dt = 0.4 * (domain[1] - domain[0]) / 1600  # shared step so only dx changes
    while sol.t < t_end - 1e-12:
        sol = step(flux, infinite(), sol, dt=min(dt, t_end - sol.t))
    return sol.rho


def _coarsen(rho, k):
    return rho.reshape(-1, k).mean(axis=1)


def test_first_order_refinement(fj2):
    # L1 distance between successive grids halves with each refinement
    profile, domain = Sech2(0.2, 2.0), (-20.0, 20.0)
    r200, r400, r800 = (_run_to(fj2, n, 2.0, profile, domain) for n in (200, 400, 800))
    dx = 40.0 / 200
    e1 = np.sum(np.abs(r200 - _coarsen(r400, 2))) * dx
    e2 = np.sum(np.abs(_coarsen(r400, 2) - _coarsen(r800, 4))) * dx
    assert 1.6 < e1 / e2 < 2.6


def test_diagnostics_of_zero_state():
    sol = initial_solution(0, 1, 10, np.zeros(10))
    row = diagnostics(sol, infinite())
    assert row.ok and row.mass == 0.0 and row.rhobar_max == 0.0
    assert row.factor_min == row.factor_max == 1.0


def test_infinite_kernel_sees_all_mass():
    profile = Sech2(0.5, 1.0)  # mass 2 A w = 1
    sol = initial_solution(-25, 25, 5000, profile, infinite())
    row = sol.history[0]
    assert row.mass == pytest.approx(1.0, abs=1e-9)
    assert row.rhobar_max == pytest.approx(1.0, abs=1e-6)
    assert row.factor_min == pytest.approx(np.exp(-1.0), abs=1e-6)
    assert row.ok


def test_oversized_step_raises(fj2):
    sol = initial_solution(-5, 5, 100, Sech2(0.5, 1.0), infinite())
    with pytest.raises(CFLViolation):
        step(fj2, infinite(), sol, dt=10 * stable_dt(fj2, sol, 0.9))


def test_step_argument_checks(fj2):
    sol = initial_solution(-5, 5, 100, Sech2(0.5, 1.0), infinite())
    with pytest.raises(PreconditionError):
        step(fj2, infinite(), sol, cfl=1.0)
    with pytest.raises(PreconditionError):
        step(fj2, infinite(), sol, scheme="muscl", cfl=0.6)
    with pytest.raises(PreconditionError):
        step(fj2, infinite(), sol, scheme="weno")
    with pytest.raises(PreconditionError):
        initial_solution(-5, 5, 3, [0.1, 1.0, 0.1])


def test_domain_exit_during_run(fj2):
    with pytest.raises(DomainExit):
        simulate(fj2, infinite(), Sech2(0.3, 1.0), 20.0, n_cells=200, domain=(-14.0, 14.0), detect=False)


def test_profile_outside_domain_is_a_precondition(fj2):
    with pytest.raises(PreconditionError, match="not supported"):
        simulate(fj2, infinite(), Sech2(0.3, 4.0), 1.0, n_cells=100, domain=(-5.0, 5.0))


def test_auto_domain_contains_support_and_travel(fj2):
    profile = Sech2(0.2, 4.0)
    a, b = auto_domain(fj2, profile, 10.0)
    lo, hi = profile.support_interval()
    assert a < lo and b > hi + 10.0 * 0.5


def test_muscl_is_conservative_and_bounded(fj2):
    sol = initial_solution(-20, 20, 400, Sech2(0.4, 1.0), infinite())
    m0 = sol.mass
    for _ in range(100):
        sol = step(fj2, infinite(), sol, cfl=0.4, scheme="muscl", local_speed=True)
    assert sol.mass == pytest.approx(m0, rel=1e-13)
    assert all(row.ok for row in sol.history)


def test_simulate_snapshots_and_field(fj2):
    sol, report = simulate(
        fj2, infinite(), Sech2(0.2, 4.0), 1.0, n_cells=200, snapshot_dt=0.25, record_field=True, field_dt=0.1
    )
    times = [t for t, _ in sol.snapshots]
    assert times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert sol.t == 1.0
    ft, fv = sol.factor_field
    assert np.all(np.diff(ft) >= 0.1 - 1e-12)
    assert fv.shape == (ft.size, 200)
    assert np.all((fv > 0) & (fv <= 1))
    assert not report.detected and report.gradient_sign == 0
    assert report.trace.shape[1] == 3 and report.companion.n_cells == 400
    assert sol.history[-1].ok


def test_simulate_detects_forward_shock(fj2):
    # steep rising flank: type-I region, shock with a positive gradient
    sol, report = simulate(fj2, infinite(), Sech2(0.5, 0.5), 6.0, n_cells=800, growth=5.0)
    assert report.detected and report.gradient_sign == 1
    assert report.refinement_evidence >= 1.8
    assert report.t_shock == sol.t
    assert all(row.ok for row in sol.history)


def test_report_lines(fj2):
    _, report = simulate(fj2, infinite(), Sech2(0.2, 4.0), 0.2, n_cells=100)
    lines = report.as_lines()
    assert lines[0] == "detected=False" and lines[3] == "gradient_sign=0"


bumps = st.tuples(st.floats(0.05, 0.9), st.floats(0.3, 3.0), st.floats(-2.0, 2.0))


@settings(max_examples=20, deadline=None)
@given(bump=bumps)
def test_conservation_and_bounds(fj2, bump):
    A, w, shift = bump
    x = np.linspace(-15, 15, 300, endpoint=False) + 0.05
    rho0 = Sech2(A, w).sample(x - shift)[0]
    sol = initial_solution(-15, 15, 300, rho0, infinite())
    m0 = sol.mass
    for _ in range(40):
        sol = step(fj2, infinite(), sol)
    assert sol.mass == pytest.approx(m0, rel=1e-12, abs=1e-14)
    assert sol.rho.min() >= -1e-12 and sol.rho.max() <= 1.0
    assert all(row.ok for row in sol.history)

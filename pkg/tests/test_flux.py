import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lookahead.errors import HypothesisViolation
from lookahead.flux import (
    find_inflection,
    load_table_flux,
    make_custom,
    make_family_j,
    make_lwr,
    parse_flux,
    validate_hypotheses,
)

GRID = np.linspace(0.0, 0.99, 199)


def test_family_j1_is_lwr():
    f1, lwr = make_family_j(1), make_lwr()
    assert np.allclose(f1.eval(GRID), GRID * (1 - GRID), atol=1e-15)
    assert np.allclose(f1.deriv1(GRID), lwr.deriv1(GRID), atol=1e-14)
    assert np.allclose(f1.deriv2(GRID), lwr.deriv2(GRID), atol=1e-14)


def test_family_j2_basic_values(fj2):
    assert fj2.rho_c == pytest.approx(2 / 3, abs=1e-15)
    assert fj2.eval(0.0) == 0.0
    assert fj2.deriv1(0.0) == 1.0
    assert fj2.beta == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("J", [1.5, 2.0, 3.0, 4.5])
def test_second_derivative_closed_form(J):
    flux = make_family_j(J)
    expected = J * ((J + 1) * GRID - 2) * (1 - GRID) ** (J - 2)
    assert np.allclose(flux.deriv2(GRID), expected, rtol=1e-12, atol=1e-12)


@pytest.mark.parametrize("J", [0.0, -1.0])
def test_family_rejects_nonpositive_j(J):
    with pytest.raises(ValueError):
        make_family_j(J)


def test_inflection_lwr_is_one(lwr):
    assert find_inflection(lwr) == 1.0


def test_inflection_j3_is_half():
    assert find_inflection(make_family_j(3)) == pytest.approx(0.5, abs=1e-12)


def test_inflection_bisection_matches_closed_form_j2(fj2):
    assert abs(find_inflection(fj2) - 2 / 3) <= 1e-12


def test_inflection_rejects_multiple_sign_changes():
    # f'' = -cos(3 pi rho) changes sign three times
    wiggly = make_custom(
        lambda r: r * (1 - r),
        deriv2=lambda r: -np.cos(3 * np.pi * np.asarray(r, dtype=float)),
    )
    with pytest.raises(HypothesisViolation):
        find_inflection(wiggly)


def test_validate_lwr_and_fj2_pass(lwr, fj2):
    assert validate_hypotheses(lwr, 1000).passed
    report = validate_hypotheses(fj2, 1000)
    assert report.passed
    assert 0 < report.rho_c < 1


def test_validate_custom_with_flat_start_fails():
    flux = make_custom(lambda r: r**2 * (1 - r))
    report = validate_hypotheses(flux, 1000)
    assert not report.passed
    assert "f'(0)>0" in report.failures()


def test_validate_rejects_too_few_samples(fj2):
    with pytest.raises(ValueError):
        validate_hypotheses(fj2, 8)


def test_custom_finite_differences_match_analytic(fj2):
    custom = make_custom(lambda r: r * (1 - r) ** 2)
    rho = np.linspace(0.05, 0.95, 37)
    assert np.allclose(custom.deriv1(rho), fj2.deriv1(rho), atol=1e-9)
    assert np.allclose(custom.deriv2(rho), fj2.deriv2(rho), atol=1e-7)
    assert np.allclose(custom.deriv3(rho), fj2.deriv3(rho), atol=1e-5)
    assert custom.rho_c == pytest.approx(2 / 3, abs=1e-9)
    assert custom.beta == pytest.approx(0.5, abs=1e-8)


def test_custom_inadmissible_gets_nan_or_raises():
    wiggly = dict(f=lambda r: r * (1 - r), deriv2=lambda r: -np.cos(3 * np.pi * np.asarray(r, dtype=float)))
    assert math.isnan(make_custom(**wiggly).rho_c)
    with pytest.raises(HypothesisViolation):
        make_custom(**wiggly, strict=True)


def test_table_flux_roughly_recovers_fj2(tmp_path):
    rho = np.linspace(0, 1, 401)
    path = tmp_path / "flux.csv"
    np.savetxt(path, np.column_stack([rho, rho * (1 - rho) ** 2]), delimiter=",")
    flux = load_table_flux(path)
    assert flux.eval(0.3) == pytest.approx(0.3 * 0.49, abs=1e-6)
    assert flux.deriv1(0.0) == pytest.approx(1.0, abs=1e-3)
    assert flux.rho_c == pytest.approx(2 / 3, abs=1e-2)


def test_parse_flux():
    assert parse_flux("lwr").kind == "lwr"
    f = parse_flux("fj:2.0")
    assert f.kind == "fj" and f.J == 2.0
    with pytest.raises(ValueError):
        parse_flux("quadratic")


@settings(max_examples=60, deadline=None)
@given(J=st.floats(0.3, 6.0), rho=st.floats(0.01, 0.95))
def test_derivatives_consistent_with_differences(J, rho):
    flux = make_family_j(J)
    h = 1e-6
    fd1 = (flux.eval(rho + h) - flux.eval(rho - h)) / (2 * h)
    fd2 = (flux.deriv1(rho + h) - flux.deriv1(rho - h)) / (2 * h)
    fd3 = (flux.deriv2(rho + h) - flux.deriv2(rho - h)) / (2 * h)
    assert fd1 == pytest.approx(flux.deriv1(rho), rel=1e-6, abs=1e-8)
    assert fd2 == pytest.approx(flux.deriv2(rho), rel=1e-5, abs=1e-6)
    assert fd3 == pytest.approx(flux.deriv3(rho), rel=1e-4, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(J=st.floats(0.3, 6.0), rho=st.floats(0.0, 0.999))
def test_triple_and_scalar_paths_agree_with_arrays(J, rho):
    flux = make_family_j(J)
    f, f1, f2 = flux.triple(rho)
    arr = np.array([rho])
    assert f == pytest.approx(flux.eval(arr)[0], rel=1e-12, abs=1e-15)
    assert f1 == pytest.approx(flux.deriv1(arr)[0], rel=1e-12, abs=1e-15)
    assert f2 == pytest.approx(flux.deriv2(arr)[0], rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(J=st.floats(0.2, 8.0))
def test_family_invariants(J):
    flux = make_family_j(J)
    assert flux.eval(0.0) == 0.0 and abs(flux.eval(1.0)) <= 1e-12
    assert flux.deriv1(0.0) > 0 and flux.beta > 0
    expected = 2 / (J + 1) if J > 1 else 1.0
    assert flux.rho_c == pytest.approx(expected, abs=1e-12)
    assert flux.beta == pytest.approx(1 / J, rel=1e-12)

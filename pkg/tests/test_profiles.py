import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from lookahead.errors import PreconditionError
from lookahead.flux import make_family_j
from lookahead.profiles import (
    Plateau,
    Sech2,
    SteepenedSech2,
    certify_sech2_subcritical,
    parse_profile,
    sample,
    sech2_subcritical_width,
    support_radius,
)

PROFILES = [Sech2(0.2, 4.0), SteepenedSech2(0.5, 2.0, 2.0), Plateau(0.85, 4.0, 1.0, 6.0)]


def test_sech2_peak():
    rho, drho = sample(Sech2(0.2, 4.0), np.array([0.0]))
    assert rho[0] == 0.2 and drho[0] == 0.0


@pytest.mark.parametrize("profile", PROFILES, ids=lambda p: p.spec)
def test_mass_matches_quadrature(profile):
    lo, hi = profile.support_interval(1e-14)
    pts = [p for p in (-profile.W / 2, profile.W / 2) if lo < p < hi] if isinstance(profile, Plateau) else [0.0]
    total, _ = quad(lambda s: float(profile.sample(s)[0]), lo, hi, points=pts, limit=400, epsabs=1e-12)
    assert total == pytest.approx(profile.mass, abs=1e-8)


@pytest.mark.parametrize("profile", PROFILES, ids=lambda p: p.spec)
def test_max_and_support(profile):
    x = np.linspace(-60, 60, 200001)
    rho, _ = profile.sample(x)
    assert rho.max() == pytest.approx(profile.max_value, abs=1e-6)
    assert rho.max() <= profile.max_value
    lo, hi = profile.support_interval()
    outside = (x < lo) | (x > hi)
    assert np.all(rho[outside] < 1e-10)
    assert support_radius(profile) == max(-lo, hi)


def test_plateau_peak_value():
    assert Plateau(0.85, 4.0, 1.0).max_value == 0.85
    rho, drho = Plateau(0.85, 4.0, 1.0).sample(np.array([-1.0, 0.0, 1.5]))
    assert np.all(rho == 0.85) and np.all(drho == 0.0)


def test_steepened_left_flank_is_steeper():
    p = SteepenedSech2(0.5, 2.0, 2.0)
    _, drho = p.sample(np.array([-0.5, 1.0]))
    # same sech^2 argument on both sides, left width halved
    assert drho[0] == pytest.approx(-2.0 * drho[1])


@settings(max_examples=60, deadline=None)
@given(which=st.sampled_from(range(3)), x=st.floats(-25.0, 25.0))
def test_gradient_matches_finite_difference(which, x):
    p = PROFILES[which]
    if isinstance(p, SteepenedSech2) and abs(x) < 1e-3:
        return
    if isinstance(p, Plateau) and min(abs(x - 2.0), abs(x + 2.0)) < 1e-3:
        return
    h = 1e-5
    fd = (p.sample(x + h)[0] - p.sample(x - h)[0]) / (2 * h)
    assert float(p.sample(x)[1]) == pytest.approx(float(fd), abs=1e-7)


def test_tails_stay_finite():
    rho, drho = Sech2(0.5, 0.1).sample(np.array([-1e4, 1e4]))
    assert np.all(np.isfinite(rho)) and np.all(np.isfinite(drho))
    assert np.all(rho == 0.0)


def test_subcritical_width_formula():
    assert sech2_subcritical_width(2, 0.2) == pytest.approx(5.0)


def test_certificate_canonical_bump():
    ratio = certify_sech2_subcritical(Sech2(0.2, 5.0), make_family_j(2))
    # the supremum 2J/w = 0.8 is approached in the far tail
    assert 0.79 < ratio < 0.8


@settings(max_examples=25, deadline=None)
@given(J=st.floats(1.0, 5.0), A=st.floats(0.05, 0.9), extra=st.floats(1.0, 3.0))
def test_certificate_holds_above_width(J, A, extra):
    w = sech2_subcritical_width(J, A) * extra
    assert certify_sech2_subcritical(Sech2(A, w), make_family_j(J)) < 1.0


def test_certificate_reports_narrow_bump():
    assert certify_sech2_subcritical(Sech2(0.5, 1.0), make_family_j(2)) > 1.0


def test_certificate_needs_family_flux():
    from lookahead.flux import make_custom

    flux = make_custom(lambda r: r * (1 - r) ** 2)
    with pytest.raises(PreconditionError):
        certify_sech2_subcritical(Sech2(0.2, 5.0), flux)


def test_parse_profile():
    assert parse_profile("sech2:A=0.2,w=4") == Sech2(0.2, 4.0)
    assert parse_profile("steep:A=0.3,w=1.5,skew=2") == SteepenedSech2(0.3, 1.5, 2.0)
    assert parse_profile("plateau:h=0.85,W=4,k=1") == Plateau(0.85, 4.0, 1.0, 7.0)
    assert parse_profile(Sech2(0.2, 4.0).spec) == Sech2(0.2, 4.0)
    for bad in ("gauss:A=1", "sech2:A=0.2", "sech2:A=0.2,q=1", "sech2:A=0.2,w"):
        with pytest.raises(ValueError):
            parse_profile(bad)


@pytest.mark.parametrize("A", [0.0, 1.0, -0.1, 1.2])
def test_amplitude_must_be_in_open_interval(A):
    with pytest.raises(PreconditionError):
        Sech2(A, 1.0)
    with pytest.raises(PreconditionError):
        Plateau(A, 1.0, 1.0)


def test_shape_parameters_positive():
    with pytest.raises(PreconditionError):
        Sech2(0.2, 0.0)
    with pytest.raises(PreconditionError):
        SteepenedSech2(0.2, 1.0, 0.0)
    with pytest.raises(PreconditionError):
        Plateau(0.5, -1.0, 1.0)

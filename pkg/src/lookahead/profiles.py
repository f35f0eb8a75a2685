"""Initial traffic profiles with closed-form density and gradient.

All profiles are built from sech^2 pieces, so every family is smooth with
exponential tails.  Spec strings:

    sech2:A=0.2,w=4
    steep:A=0.3,w=1.5,skew=2
    plateau:h=0.85,W=4,k=1,b=7
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PreconditionError
from .flux import FluxModel

__all__ = [
    "Sech2",
    "SteepenedSech2",
    "Plateau",
    "parse_profile",
    "sample",
    "sech2_subcritical_width",
    "certify_sech2_subcritical",
]

# densities below this count as outside the support
SUPPORT_TOL = 1e-10


def _sech2_piece(u, scale):
    """(sech^2(u), d/dx sech^2(u)) with u = x/scale, stable for large |u|."""
    au = np.abs(u)
    e = np.exp(-2.0 * au)
    s2 = 4.0 * e / (1.0 + e) ** 2
    th = np.sign(u) * (1.0 - e) / (1.0 + e)
    return s2, -2.0 * s2 * th / scale


def _tail_length(height, scale, tol):
    """Distance beyond which height * sech^2(x/scale) < tol."""
    if height <= tol:
        return 0.0
    return 0.5 * scale * math.log(4.0 * height / tol)


def _check_amplitude(A):
    if not 0.0 < A < 1.0:
        raise PreconditionError(f"profile amplitude must lie in (0, 1), got {A}")


@dataclass(frozen=True)
class Sech2:
    """A sech^2(x/w), an even bump of mass 2 A w."""

    A: float
    w: float

    def __post_init__(self):
        _check_amplitude(self.A)
        if not self.w > 0:
            raise PreconditionError("width must be positive")

    @property
    def spec(self) -> str:
        return f"sech2:A={self.A:g},w={self.w:g}"

    @property
    def max_value(self) -> float:
        return self.A

    @property
    def mass(self) -> float:
        return 2.0 * self.A * self.w

    def sample(self, x):
        s2, ds2 = _sech2_piece(np.asarray(x, dtype=float) / self.w, self.w)
        return self.A * s2, self.A * ds2

    def support_interval(self, tol: float = SUPPORT_TOL) -> tuple[float, float]:
        r = _tail_length(self.A, self.w, tol)
        return -r, r


@dataclass(frozen=True)
class SteepenedSech2:
    """sech^2 bump whose rising (left) flank is ``skew`` times narrower than the right one."""

    A: float
    w: float
    skew: float

    def __post_init__(self):
        _check_amplitude(self.A)
        if not (self.w > 0 and self.skew > 0):
            raise PreconditionError("width and skew must be positive")

    @property
    def spec(self) -> str:
        return f"steep:A={self.A:g},w={self.w:g},skew={self.skew:g}"

    @property
    def left_width(self) -> float:
        return self.w / self.skew

    @property
    def max_value(self) -> float:
        return self.A

    @property
    def mass(self) -> float:
        return self.A * (self.left_width + self.w)

    def sample(self, x):
        x = np.asarray(x, dtype=float)
        scale = np.where(x < 0.0, self.left_width, self.w)
        s2, ds2 = _sech2_piece(x / scale, scale)
        return self.A * s2, self.A * ds2

    def support_interval(self, tol: float = SUPPORT_TOL) -> tuple[float, float]:
        return -_tail_length(self.A, self.left_width, tol), _tail_length(self.A, self.w, tol)


@dataclass(frozen=True)
class Plateau:
    """Flat top of height ``h`` on [-W/2, W/2] with sech^2 shoulders.

    The downstream front is h sech^2(k (x - W/2)); the upstream back is
    h sech^2((x + W/2)/b).  The back must be gentle (large b) when the
    profile is meant to be subcritical on that side.
    """

    h: float
    W: float
    k: float
    b: float = 7.0

    def __post_init__(self):
        _check_amplitude(self.h)
        if not (self.W >= 0 and self.k > 0 and self.b > 0):
            raise PreconditionError("plateau needs W >= 0 and positive k, b")

    @property
    def spec(self) -> str:
        return f"plateau:h={self.h:g},W={self.W:g},k={self.k:g},b={self.b:g}"

    @property
    def max_value(self) -> float:
        return self.h

    @property
    def mass(self) -> float:
        return self.h * (self.W + self.b + 1.0 / self.k)

    def sample(self, x):
        x = np.asarray(x, dtype=float)
        half = 0.5 * self.W
        back, dback = _sech2_piece((x + half) / self.b, self.b)
        front, dfront = _sech2_piece((x - half) * self.k, 1.0 / self.k)
        rho = np.where(x < -half, back, np.where(x > half, front, 1.0))
        drho = np.where(x < -half, dback, np.where(x > half, dfront, 0.0))
        return self.h * rho, self.h * drho

    def support_interval(self, tol: float = SUPPORT_TOL) -> tuple[float, float]:
        half = 0.5 * self.W
        return -half - _tail_length(self.h, self.b, tol), half + _tail_length(self.h, 1.0 / self.k, tol)


Profile = Sech2 | SteepenedSech2 | Plateau


def support_radius(profile: Profile, tol: float = SUPPORT_TOL) -> float:
    lo, hi = profile.support_interval(tol)
    return max(-lo, hi)


def sample(profile: Profile, grid) -> tuple[np.ndarray, np.ndarray]:
    """Exact (rho0, rho0') on ``grid``."""
    return profile.sample(grid)


_PARAMS = {
    "sech2": (Sech2, ("A", "w")),
    "steep": (SteepenedSech2, ("A", "w", "skew")),
    "plateau": (Plateau, ("h", "W", "k", "b")),
}


def parse_profile(spec: str) -> Profile:
    """Parse ``kind:key=value,...`` into a profile."""
    kind, _, rest = spec.strip().partition(":")
    if kind not in _PARAMS:
        raise ValueError(f"unknown profile kind {kind!r}; expected one of {sorted(_PARAMS)}")
    cls, names = _PARAMS[kind]
    kwargs = {}
    for item in filter(None, rest.split(",")):
        key, sep, val = item.partition("=")
        key = key.strip()
        if not sep or key not in names:
            raise ValueError(f"bad parameter {item!r} for profile {kind!r}; allowed {names}")
        kwargs[key] = float(val)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ValueError(f"profile {kind!r} needs parameters {names}") from exc


def sech2_subcritical_width(J: float, A: float) -> float:
    """Smallest sech^2 width w with 2/w <= (1 - A)/J, which keeps rho0' below sigma_J."""
    return 2.0 * J / (1.0 - A)


def certify_sech2_subcritical(profile: Sech2, flux: FluxModel, n: int = 20001) -> float:
    """Check rho0' < sigma(rho0) for a sech^2 bump under the family flux.

    Returns max rho0'/sigma(rho0) over the rising flank, which must be < 1.
    Raises if the width condition holds but the sampled check fails.
    """
    if flux.kind not in ("fj", "lwr"):
        raise PreconditionError("the closed-form certificate needs a family flux")
    J = flux.J
    lo, _ = profile.support_interval()
    x = np.linspace(lo, 0.0, n)[:-1]
    rho, drho = profile.sample(x)
    keep = rho > 0.0
    ratio = float(np.max(drho[keep] * J / (rho[keep] * (1.0 - rho[keep]))))
    if profile.w >= sech2_subcritical_width(J, profile.A) and not ratio < 1.0:
        raise PreconditionError(f"subcriticality certificate failed: max ratio {ratio:.6g}")
    return ratio

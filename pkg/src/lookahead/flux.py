"""Flux functions f(rho) for the look-ahead traffic model.

Admissible fluxes satisfy f(0) = f(1) = 0, f'(0) > 0 and switch at most once
from concave to convex, at the inflection point ``rho_c``.  Three kinds are
supported:

* ``lwr``      f(rho) = rho (1 - rho)
* ``fj``       f(rho) = rho (1 - rho)**J, J > 0
* ``custom``   user supplied callables (missing derivatives by finite differences)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import HypothesisViolation

__all__ = [
    "FluxModel",
    "HypothesisViolation",
    "CheckResult",
    "ValidationReport",
    "make_lwr",
    "make_family_j",
    "make_custom",
    "load_table_flux",
    "parse_flux",
    "find_inflection",
    "validate_hypotheses",
]

# Derivatives near rho = 1 may diverge (J < 2); evaluate them no closer than this.
RHO_CLAMP = 1.0 - 1e-9

# Step for first-order finite differences; higher orders need larger steps
# to keep round-off below truncation error.
_FD_STEPS = {1: 1e-5, 2: 2e-3, 3: 5e-3}

# 4th-order central stencils: (offsets, weights, denominator power)
_STENCILS = {
    1: (np.arange(-2, 3), np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0),
    2: (np.arange(-2, 3), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
    3: (np.arange(-3, 4), np.array([1.0, -8.0, 13.0, 0.0, -13.0, 8.0, -1.0]) / 8.0),
}


def _central_difference(func, order):
    offsets, weights = _STENCILS[order]
    h = _FD_STEPS[order]

    def deriv(rho):
        rho = np.asarray(rho, dtype=float)
        acc = np.zeros_like(rho)
        for k, wk in zip(offsets, weights):
            if wk != 0.0:
                acc = acc + wk * np.asarray(func(rho + k * h), dtype=float)
        out = acc / h**order
        return out if out.ndim else float(out)

    return deriv


@dataclass(frozen=True)
class FluxModel:
    """An admissible flux with derivatives, inflection point and slope ``beta``.

    ``beta = -2 f'(0) / f''(0)`` is the slope of the sigma threshold at the origin.
    Instances are immutable and safe to share between workers.
    """

    kind: str
    eval: Callable
    deriv1: Callable
    deriv2: Callable
    deriv3: Callable
    rho_c: float
    beta: float
    J: float | None = None
    name: str = ""
    _higher: Callable | None = field(default=None, repr=False, compare=False)
    _triple: Callable | None = field(default=None, repr=False, compare=False)

    def __call__(self, rho):
        return self.eval(rho)

    def triple(self, rho: float) -> tuple[float, float, float]:
        """(f, f', f'') at a scalar density; fused where a fast path exists."""
        if self._triple is not None:
            return self._triple(rho)
        return self.eval(rho), self.deriv1(rho), self.deriv2(rho)

    def derivative(self, n: int, rho):
        """n-th derivative of f; orders above 3 fall back to differences of f'''."""
        if n == 0:
            return self.eval(rho)
        if n <= 3:
            return (self.deriv1, self.deriv2, self.deriv3)[n - 1](rho)
        if self._higher is not None:
            return self._higher(n, rho)
        func = self.deriv3
        for _ in range(n - 3):
            func = _central_difference(func, 1)
        return func(rho)

    def max_speed(self, rho_max: float = 1.0, n: int = 2001) -> float:
        """Upper bound of |f'| on [0, rho_max], sampled."""
        grid = np.linspace(0.0, min(rho_max, RHO_CLAMP), n)
        return float(np.max(np.abs(self.deriv1(grid))))


def _falling(J: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= J - i
    return out


def make_family_j(J: float) -> FluxModel:
    """The skewed family f_J(rho) = rho (1 - rho)**J with analytic derivatives."""
    J = float(J)
    if not J > 0:
        raise ValueError(f"J must be positive, got {J}")

    def g(k, rho):
        # k-th derivative of (1 - rho)**J
        return (-1) ** k * _falling(J, k) * (1.0 - rho) ** (J - k)

    def nth_scalar(n, r):
        if n == 0:
            r = min(max(r, 0.0), 1.0)
            return r * (1.0 - r) ** J
        r = min(max(r, 0.0), RHO_CLAMP)
        return r * g(n, r) + n * g(n - 1, r)

    def nth(n, rho):
        if isinstance(rho, float):
            return nth_scalar(n, rho)
        rho = np.asarray(rho, dtype=float)
        if n == 0:
            r = np.clip(rho, 0.0, 1.0)
            out = r * (1.0 - r) ** J
        else:
            r = np.clip(rho, 0.0, RHO_CLAMP)
            out = r * g(n, r) + n * g(n - 1, r)
        return out if out.ndim else float(out)

    def triple(rho):
        rho = float(rho)
        f = min(max(rho, 0.0), 1.0) * (1.0 - min(max(rho, 0.0), 1.0)) ** J
        r = min(max(rho, 0.0), RHO_CLAMP)
        q = 1.0 - r
        p2 = q ** (J - 2.0)
        p1 = p2 * q
        f1 = p1 * (q - J * r)
        f2 = J * p2 * ((J - 1.0) * r - 2.0 * q)
        return f, f1, f2

    rho_c = 2.0 / (J + 1.0) if J > 1.0 else 1.0
    is_lwr = J == 1.0
    return FluxModel(
        kind="fj",
        eval=lambda rho: nth(0, rho),
        deriv1=lambda rho: nth(1, rho),
        deriv2=lambda rho: nth(2, rho),
        deriv3=lambda rho: nth(3, rho),
        rho_c=rho_c,
        beta=1.0 / J,
        J=J,
        name="lwr" if is_lwr else f"fj:{J:g}",
        _higher=nth,
        _triple=triple,
    )


def make_lwr() -> FluxModel:
    """The Lighthill-Whitham-Richards flux rho (1 - rho)."""

    def nth(n, rho):
        if isinstance(rho, float):
            return (rho * (1.0 - rho), 1.0 - 2.0 * rho, -2.0)[n] if n < 3 else 0.0
        rho = np.asarray(rho, dtype=float)
        if n == 0:
            out = rho * (1.0 - rho)
        elif n == 1:
            out = 1.0 - 2.0 * rho
        elif n == 2:
            out = np.full_like(rho, -2.0)
        else:
            out = np.zeros_like(rho)
        return out if out.ndim else float(out)

    return FluxModel(
        kind="lwr",
        eval=lambda rho: nth(0, rho),
        deriv1=lambda rho: nth(1, rho),
        deriv2=lambda rho: nth(2, rho),
        deriv3=lambda rho: nth(3, rho),
        rho_c=1.0,
        beta=1.0,
        J=1.0,
        name="lwr",
        _higher=nth,
        _triple=lambda rho: (rho * (1.0 - rho), 1.0 - 2.0 * rho, -2.0),
    )


def make_custom(
    f, deriv1=None, deriv2=None, deriv3=None, name="custom", strict: bool = False
) -> FluxModel:
    """Wrap a black-box flux.

    Derivatives that are not supplied are obtained by 4th-order central
    differences of the next lower one.  The inflection point is located
    numerically.  If it cannot be (the flux is not admissible) ``rho_c`` is
    NaN, or ``HypothesisViolation`` is raised when ``strict``.
    """
    d1 = deriv1 if deriv1 is not None else _central_difference(f, 1)
    if deriv2 is not None:
        d2 = deriv2
    elif deriv1 is not None:
        d2 = _central_difference(deriv1, 1)
    else:
        d2 = _central_difference(f, 2)
    if deriv3 is not None:
        d3 = deriv3
    elif deriv2 is not None:
        d3 = _central_difference(deriv2, 1)
    elif deriv1 is not None:
        d3 = _central_difference(deriv1, 2)
    else:
        d3 = _central_difference(f, 3)

    def ev(rho):
        out = np.asarray(f(np.asarray(rho, dtype=float)), dtype=float)
        return out if out.ndim else float(out)

    provisional = FluxModel("custom", ev, d1, d2, d3, rho_c=1.0, beta=math.nan, name=name)
    try:
        rho_c = find_inflection(provisional)
    except HypothesisViolation:
        if strict:
            raise
        rho_c = math.nan
    fpp0 = float(d2(0.0))
    beta = -2.0 * float(d1(0.0)) / fpp0 if fpp0 != 0.0 else math.inf
    return FluxModel("custom", ev, d1, d2, d3, rho_c=rho_c, beta=beta, name=name)


def load_table_flux(path: str | Path) -> FluxModel:
    """Custom flux from a two-column text table (rho, f) via a C2 cubic spline.

    Accuracy is limited by the table: f'' is piecewise linear and f''' is
    piecewise constant between the nodes.
    """
    data = np.loadtxt(path, delimiter="," if str(path).endswith(".csv") else None, comments="#")
    order = np.argsort(data[:, 0])
    spline = CubicSpline(data[order, 0], data[order, 1], extrapolate=True)
    derivs = [spline.derivative(k) for k in (1, 2, 3)]
    wrap = [lambda r, p=p: _scalarize(p(r)) for p in [spline, *derivs]]
    return make_custom(*wrap, name=f"table:{path}")


def _scalarize(out):
    out = np.asarray(out, dtype=float)
    return out if out.ndim else float(out)


def parse_flux(spec: str) -> FluxModel:
    """Parse a flux selector: ``lwr``, ``fj:<J>`` or ``table:<path>``."""
    spec = spec.strip()
    if spec.lower() == "lwr":
        return make_lwr()
    kind, _, arg = spec.partition(":")
    if kind.lower() == "fj" and arg:
        return make_family_j(float(arg))
    if kind.lower() == "table" and arg:
        return load_table_flux(arg)
    raise ValueError(f"unknown flux spec {spec!r} (expected lwr, fj:<J> or table:<path>)")


def find_inflection(flux: FluxModel, n_grid: int = 4001, tol: float = 1e-12) -> float:
    """Locate the unique sign change of f'' by bisection; 1 if f'' < 0 throughout."""
    grid = np.linspace(0.0, RHO_CLAMP, n_grid)
    vals = np.asarray(flux.deriv2(grid), dtype=float)
    neg = vals < 0.0
    changes = np.flatnonzero(neg[:-1] != neg[1:])
    if changes.size == 0:
        if neg.all():
            return 1.0
        raise HypothesisViolation("hypothesis violation: f'' is not negative near rho = 0")
    if changes.size > 1 or not neg[0]:
        raise HypothesisViolation(
            f"hypothesis violation: f'' changes sign {changes.size} times on [0, 1)"
        )
    lo, hi = grid[changes[0]], grid[changes[0] + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if flux.deriv2(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    worst: float


@dataclass(frozen=True)
class ValidationReport:
    flux_name: str
    checks: tuple[CheckResult, ...]
    rho_c: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def __str__(self) -> str:
        lines = [f"flux {self.flux_name}: rho_c = {self.rho_c:.12g}"]
        for c in self.checks:
            lines.append(f"  [{'PASS' if c.passed else 'FAIL'}] {c.name:<28s} worst={c.worst:.3e}")
        return "\n".join(lines)


def validate_hypotheses(flux: FluxModel, n_samples: int = 1000) -> ValidationReport:
    """Check the admissibility hypotheses on a uniform grid of [0, 1 - 1e-6].

    Failures are reported, never raised.
    """
    if n_samples < 16:
        raise ValueError("n_samples must be at least 16")
    grid = np.linspace(0.0, 1.0 - 1e-6, n_samples)
    checks = []

    f0, f1 = float(flux.eval(0.0)), float(flux.eval(1.0))
    checks.append(CheckResult("f(0)=0", abs(f0) <= 1e-12, abs(f0)))
    checks.append(CheckResult("f(1)=0", abs(f1) <= 1e-12, abs(f1)))

    fp0 = float(flux.deriv1(0.0))
    checks.append(CheckResult("f'(0)>0", fp0 > 1e-10, max(0.0, 1e-10 - fp0)))

    fpp = np.asarray(flux.deriv2(grid), dtype=float)
    try:
        rho_c = find_inflection(flux)
        located = True
    except HypothesisViolation:
        rho_c = flux.rho_c if np.isfinite(flux.rho_c) else 1.0
        located = False
    sign_changes = int(np.count_nonzero(np.diff(np.sign(fpp[fpp != 0.0])) != 0))
    checks.append(CheckResult("single inflection", located and sign_changes <= 1, float(sign_changes)))

    away = np.abs(grid - rho_c) > 1e-10
    left = away & (grid < rho_c)
    right = away & (grid > rho_c)
    worst_left = float(np.max(fpp[left], initial=-np.inf))
    worst_right = float(np.min(fpp[right], initial=np.inf))
    checks.append(CheckResult("f''<0 on [0,rho_c)", worst_left < 0.0, max(0.0, worst_left)))
    checks.append(CheckResult("f''>0 on (rho_c,1)", worst_right > 0.0, max(0.0, -worst_right)))

    beta = flux.beta
    checks.append(CheckResult("beta>0", bool(np.isfinite(beta) and beta > 0.0), 0.0 if beta > 0 else abs(beta)))

    if flux.kind == "fj" and flux.J is not None:
        expected = 2.0 / (flux.J + 1.0) if flux.J > 1.0 else 1.0
        err = abs(rho_c - expected)
        checks.append(CheckResult("rho_c closed form", err <= 1e-10, err))

    return ValidationReport(flux.name or flux.kind, tuple(checks), rho_c)

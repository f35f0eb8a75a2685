"""Characteristic dynamics of the density and its gradient.

Along a characteristic X(t) with X' = f'(rho) E, where E = exp(-rhobar) is
the slowdown factor, the density rho and its gradient d = rho_x satisfy

    rho' = -rho f(rho) E
    d'   = -(f'' d^2 + (f + 2 rho f') d + rho^2 f) E.

Eliminating time gives a factor-free equation for d as a function of rho,
so every factor produces the same phase portrait, only traversed at a
different speed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq, minimize_scalar

from .errors import NumericalError, PreconditionError, StepFloorError
from .flux import FluxModel
from .threshold import RTOL, Region, ThresholdCurve, build_gamma, build_sigma, classify_pair, trajectory_slope

__all__ = [
    "Terminal",
    "PhaseState",
    "PhaseTrajectory",
    "PhaseCurve",
    "CoupledField",
    "NonlocalFactorModel",
    "integrate_phase",
    "trajectory_in_phase_plane",
    "nullclines",
    "descent_time",
    "blowup_time_bound",
    "PortraitRow",
    "phase_portrait",
    "parse_factor",
]

CONVERGED_RHO = 1e-8
CONVERGED_D = 1e-6
DEFAULT_CAP = 1e6
DEFAULT_T_MAX = 1e12
# if the solver gives up with |d| beyond this, the failure counts as blow-up
STIFF_BLOWUP = 1e3
FACTOR_SLACK = 1e-9


class Terminal(str, enum.Enum):
    CONVERGED = "ConvergedToOrigin"
    BLOWUP_PLUS = "BlowUpPlus"
    BLOWUP_MINUS = "BlowUpMinus"
    TIME_LIMIT = "TimeLimit"


@dataclass(frozen=True)
class PhaseState:
    t: float
    rho: float
    d: float


@dataclass(frozen=True)
class CoupledField:
    """Slowdown factor exp(-rhobar) sampled on a (time, space) grid.

    Evaluated by bilinear interpolation, clamped to the sampled ranges.
    """

    times: np.ndarray
    x: np.ndarray
    values: np.ndarray  # shape (len(times), len(x))
    mass: float

    def __call__(self, t: float, x: float) -> float:
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        if k < 0:
            return float(np.interp(x, self.x, self.values[0]))
        if k >= self.times.size - 1:
            return float(np.interp(x, self.x, self.values[-1]))
        t0, t1 = self.times[k], self.times[k + 1]
        w = (t - t0) / (t1 - t0)
        e0 = np.interp(x, self.x, self.values[k])
        e1 = np.interp(x, self.x, self.values[k + 1])
        return float((1.0 - w) * e0 + w * e1)


@dataclass(frozen=True)
class NonlocalFactorModel:
    """Where the factor exp(-rhobar) comes from.

    ``one`` uses E = 1 and ``lower`` uses E = exp(-m); these bracket every
    admissible factor.  ``coupled`` follows the characteristic through a
    recorded PDE solution.
    """

    mode: str
    m: float = 0.0
    field: CoupledField | None = None

    def __post_init__(self):
        if self.mode not in ("one", "lower", "coupled"):
            raise ValueError(f"unknown factor mode {self.mode!r}")
        if self.m < 0:
            raise PreconditionError("total mass must be nonnegative")
        if self.mode == "coupled" and self.field is None:
            raise PreconditionError("coupled factor needs a recorded field")

    @classmethod
    def one(cls) -> "NonlocalFactorModel":
        return cls("one")

    @classmethod
    def lower(cls, m: float) -> "NonlocalFactorModel":
        return cls("lower", float(m))

    @classmethod
    def coupled(cls, solution) -> "NonlocalFactorModel":
        """Factor read from a GridSolution simulated with ``record_field=True``."""
        rec = getattr(solution, "factor_field", None)
        if rec is None:
            raise PreconditionError("solution has no recorded factor field")
        times, values = rec
        fld = CoupledField(np.asarray(times), solution.x, np.asarray(values), float(solution.mass0))
        return cls("coupled", fld.mass, fld)

    @property
    def label(self) -> str:
        if self.mode == "lower":
            return f"lower:{self.m:g}"
        return self.mode

    def value(self, t: float, x: float = 0.0) -> float:
        if self.mode == "one":
            return 1.0
        if self.mode == "lower":
            return float(np.exp(-self.m))
        e = self.field(t, x)
        lo = np.exp(-self.m) - FACTOR_SLACK
        if not lo <= e <= 1.0 + FACTOR_SLACK:
            raise NumericalError(
                f"factor out of bounds: {e:.12g} not in [{lo + FACTOR_SLACK:.12g}, 1] at t={t:.6g}, x={x:.6g}"
            )
        return e


@dataclass
class PhaseTrajectory:
    """Time samples of (rho, d) with the solver's dense output."""

    t: np.ndarray
    rho: np.ndarray
    d: np.ndarray
    terminal: Terminal
    t_star: float | None = None
    x: np.ndarray | None = None
    dense: object = field(default=None, repr=False)

    @property
    def states(self) -> list[PhaseState]:
        return [PhaseState(float(a), float(b), float(c)) for a, b, c in zip(self.t, self.rho, self.d)]

    def resample_d_of_rho(self, rho_values) -> np.ndarray:
        """d at the given densities, using that rho decreases strictly in time."""
        rho_values = np.atleast_1d(np.asarray(rho_values, dtype=float))
        lo, hi = self.rho[-1], self.rho[0]
        if np.any(rho_values < lo) or np.any(rho_values > hi):
            raise PreconditionError(f"requested densities outside the traversed range [{lo:.6g}, {hi:.6g}]")
        neg = -self.rho
        out = np.empty_like(rho_values)
        for i, r in enumerate(rho_values):
            k = int(np.searchsorted(neg, -r, side="left"))
            if k < self.rho.size and self.rho[k] == r:
                out[i] = self.d[k]
                continue
            ta, tb = self.t[k - 1], self.t[k]
            if self.dense is None:
                w = (self.rho[k - 1] - r) / (self.rho[k - 1] - self.rho[k])
                out[i] = self.d[k - 1] + w * (self.d[k] - self.d[k - 1])
                continue
            ts = brentq(lambda s: self.dense(s)[0] - r, ta, tb, xtol=1e-300, rtol=1e-15)
            out[i] = self.dense(ts)[1]
        return out


def _rhs_factory(flux: FluxModel, factor: NonlocalFactorModel):
    coupled = factor.mode == "coupled"

    def rhs(t, y):
        rho, d = y[0], y[1]
        x = y[2] if coupled else 0.0
        e = factor.value(t, x)
        f, f1, f2 = flux.triple(rho)
        out = [-rho * f * e, -(f2 * d * d + (f + 2.0 * rho * f1) * d + rho * rho * f) * e]
        if coupled:
            out.append(f1 * e)
        return out

    return rhs


def integrate_phase(
    flux: FluxModel,
    factor: NonlocalFactorModel,
    rho0: float,
    d0: float,
    t_max: float = DEFAULT_T_MAX,
    blowup_cap: float = DEFAULT_CAP,
    x0: float = 0.0,
    rtol: float = RTOL,
    atol: float = 1e-14,
) -> PhaseTrajectory:
    """Integrate the characteristic system from (rho0, d0) until a terminal event.

    Stops when |d| reaches ``blowup_cap`` (blow-up, sign of d), when
    rho < 1e-8 and |d| < 1e-6 (convergence), or at ``t_max``.  ``x0`` is the
    foot point, used only by a coupled factor.
    """
    if not 0.0 <= rho0 < 1.0:
        raise PreconditionError("rho0 must lie in [0, 1)")
    if not t_max > 0:
        raise PreconditionError("t_max must be positive")
    if blowup_cap < 1e4:
        raise PreconditionError("blowup_cap must be at least 1e4")
    coupled = factor.mode == "coupled"
    y0 = [float(rho0), float(d0)] + ([float(x0)] if coupled else [])

    def record(t, y, terminal, t_star=None, dense=None):
        y = np.atleast_2d(y)
        return PhaseTrajectory(
            np.atleast_1d(t), y[0], y[1], terminal, t_star,
            y[2] if coupled else None, dense,
        )

    if rho0 < CONVERGED_RHO and abs(d0) < CONVERGED_D:
        # already at the equilibrium (0, 0) to within the convergence box
        return record([0.0], np.array(y0)[:, None], Terminal.CONVERGED)

    def cap_event(t, y):
        return abs(y[1]) - blowup_cap

    cap_event.terminal = True
    cap_event.direction = 1

    def origin_event(t, y):
        return max(y[0] / CONVERGED_RHO, abs(y[1]) / CONVERGED_D) - 1.0

    origin_event.terminal = True
    origin_event.direction = -1

    sol = solve_ivp(
        _rhs_factory(flux, factor), (0.0, t_max), y0, method="DOP853",
        rtol=rtol, atol=atol, dense_output=True, events=[cap_event, origin_event],
    )
    if sol.status == 1:
        if sol.t_events[0].size:
            t_star = float(sol.t_events[0][0])
            d_end = sol.y_events[0][0][1]
            term = Terminal.BLOWUP_PLUS if d_end > 0 else Terminal.BLOWUP_MINUS
            return record(sol.t, sol.y, term, t_star, sol.sol)
        return record(sol.t, sol.y, Terminal.CONVERGED, None, sol.sol)
    if sol.status == 0:
        return record(sol.t, sol.y, Terminal.TIME_LIMIT, None, sol.sol)
    d_last = sol.y[1, -1]
    if abs(d_last) > STIFF_BLOWUP:
        term = Terminal.BLOWUP_PLUS if d_last > 0 else Terminal.BLOWUP_MINUS
        return record(sol.t, sol.y, term, float(sol.t[-1]), sol.sol)
    raise StepFloorError(f"phase integration failed at t={sol.t[-1]:.6g}: {sol.message}")


@dataclass
class PhaseCurve:
    """A phase-plane trajectory d(rho), sampled on decreasing rho."""

    rho: np.ndarray
    d: np.ndarray
    blowup_at: float | None
    dense: object = field(default=None, repr=False)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.asarray(self.dense(rho), dtype=float).reshape(rho.shape)
        return out if out.ndim else float(out)


def trajectory_in_phase_plane(
    flux: FluxModel,
    rho0: float,
    d0: float,
    rho_end: float,
    cap: float = DEFAULT_CAP,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> PhaseCurve:
    """Follow d(rho) from (rho0, d0) down to ``rho_end`` (the direction of time).

    If |d| exceeds ``cap`` first, the abscissa is returned as ``blowup_at``.
    """
    if not 0.0 < rho_end < rho0 < 1.0:
        raise PreconditionError("need 0 < rho_end < rho0 < 1")

    def rhs(rho, y):
        return [trajectory_slope(flux, rho, y[0])]

    def hit_cap(rho, y):
        return abs(y[0]) - cap

    hit_cap.terminal = True
    hit_cap.direction = 1

    sol = solve_ivp(
        rhs, (rho0, rho_end), [float(d0)], method="DOP853", rtol=rtol, atol=atol,
        dense_output=True, events=hit_cap,
    )
    blowup_at = None
    if sol.status == 1:
        blowup_at = float(sol.t_events[0][0])
    elif sol.status == -1:
        if abs(sol.y[0, -1]) > STIFF_BLOWUP:
            blowup_at = float(sol.t[-1])
        else:
            raise NumericalError(f"phase-plane integration failed: {sol.message}")
    dense = sol.sol

    def evaluate(r):
        return dense(np.asarray(r, dtype=float))[0]

    return PhaseCurve(sol.t, sol.y[0], blowup_at, evaluate)


def nullclines(flux: FluxModel, rho: float) -> tuple[float, float] | None:
    """Roots (d_minus, d_plus) of the quadratic in the d equation, or None.

    With C = -f'' (times the factor), d' = C (d - d_minus)(d - d_plus).
    Below rho_c this gives d_minus < 0 < d_plus.
    """
    if not 0.0 < rho < 1.0:
        raise PreconditionError("rho must lie in (0, 1)")
    f = flux.eval(rho)
    f1 = flux.deriv1(rho)
    f2 = flux.deriv2(rho)
    if rho == flux.rho_c or f2 == 0.0:
        raise PreconditionError("nullclines are undefined where f'' = 0")
    b = f + 2.0 * rho * f1
    disc = b * b - 4.0 * rho * rho * f * f2
    if disc < 0.0:
        return None
    root = np.sqrt(disc)
    d_plus = (-b - root) / (2.0 * f2)
    d_minus = (-b + root) / (2.0 * f2)
    if rho < flux.rho_c and not d_minus < 0.0 < d_plus:
        raise NumericalError(f"nullcline ordering fails at rho={rho}: {d_minus}, {d_plus}")
    return float(d_minus), float(d_plus)


def descent_time(flux: FluxModel, m: float, rho0: float, rho1: float) -> float:
    """Upper bound on the time for rho to fall from rho0 to rho1 with any factor >= exp(-m)."""
    if m < 0:
        raise PreconditionError("total mass must be nonnegative")
    if rho1 <= 0.0:
        raise PreconditionError("rho1 must be positive: the descent integral diverges at 0")
    if not rho1 < rho0 < 1.0:
        raise PreconditionError("need 0 < rho1 < rho0 < 1")
    val, err = quad(lambda r: 1.0 / (r * flux.eval(r)), rho1, rho0, epsabs=0.0, epsrel=1e-12, limit=200)
    return float(np.exp(m) * val)


def _min_neg_f2(flux: FluxModel, rho1: float) -> float:
    grid = np.linspace(0.0, rho1, 2001)
    vals = -np.asarray(flux.deriv2(grid), dtype=float)
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    best = float(vals[k])
    if hi > lo:
        res = minimize_scalar(lambda r: -flux.deriv2(r), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        best = min(best, float(res.fun))
    return best


def blowup_time_bound(
    flux: FluxModel,
    m: float,
    rho0: float,
    d0: float,
    rho1: float,
    sigma: ThresholdCurve | None = None,
    trajectory: PhaseTrajectory | None = None,
) -> float:
    """Upper bound t1 + 1/(C d_plus(rho1)) on the blow-up time of a type-I seed.

    C = exp(-m) min over [0, rho1] of -f''.  The uniform lower bound of d
    along the trajectory is taken as the infimum over a computed trajectory
    (``trajectory`` if supplied); rho1 must satisfy 2 d_plus(rho1) below it.
    """
    if sigma is None:
        sigma = build_sigma(flux)
    if not d0 > sigma(rho0):
        raise PreconditionError(f"seed ({rho0}, {d0}) is not type-I supercritical")
    if not 0.0 < rho1 < rho0:
        raise PreconditionError("need 0 < rho1 < rho0")
    if not rho1 < flux.rho_c:
        raise PreconditionError("rho1 must lie below rho_c")
    if trajectory is None:
        trajectory = integrate_phase(flux, NonlocalFactorModel.one(), rho0, d0)
    d_inf = float(np.min(trajectory.d))
    _, d_plus = nullclines(flux, rho1)
    if not 2.0 * d_plus < d_inf:
        raise PreconditionError(
            f"rho1 too large: 2 d_plus(rho1) = {2 * d_plus:.6g} is not below inf d = {d_inf:.6g}"
        )
    c_low = np.exp(-m) * _min_neg_f2(flux, rho1)
    return descent_time(flux, m, rho0, rho1) + 1.0 / (c_low * d_plus)


# terminal status expected for each region of the trichotomy
EXPECTED_TERMINAL = {
    Region.SUBCRITICAL: Terminal.CONVERGED,
    Region.TYPE_I: Terminal.BLOWUP_PLUS,
    Region.TYPE_II: Terminal.BLOWUP_MINUS,
}


@dataclass(frozen=True)
class PortraitRow:
    rho0: float
    d0: float
    region: Region
    terminal: Terminal
    t_star: float | None
    # distance from d0 to the nearest threshold curve
    threshold_distance: float

    @property
    def agrees(self) -> bool:
        return EXPECTED_TERMINAL[self.region] is self.terminal


def parse_factor(spec: str) -> NonlocalFactorModel:
    """``one`` or ``lower:<m>``."""
    kind, _, arg = spec.strip().partition(":")
    if kind == "one" and not arg:
        return NonlocalFactorModel.one()
    if kind == "lower" and arg:
        return NonlocalFactorModel.lower(float(arg))
    raise ValueError(f"unknown factor {spec!r} (expected one or lower:<m>)")


def phase_portrait(
    flux: FluxModel,
    factor: NonlocalFactorModel,
    rho_values,
    d_values,
    sigma: ThresholdCurve | None = None,
    gamma: ThresholdCurve | None = None,
    rtol: float = RTOL,
) -> list[PortraitRow]:
    """Classify and integrate every seed of the grid rho_values x d_values."""
    if sigma is None:
        sigma = build_sigma(flux)
    if gamma is None and flux.rho_c < 1.0:
        gamma = build_gamma(flux)
    rows = []
    for r in np.asarray(rho_values, dtype=float):
        s = float(sigma(r))
        g = float(gamma(r)) if gamma is not None and r > flux.rho_c else -np.inf
        for d in np.asarray(d_values, dtype=float):
            cls = classify_pair(flux, sigma, gamma, float(r), float(d))
            traj = integrate_phase(flux, factor, float(r), float(d), rtol=rtol)
            dist = min(abs(d - s), abs(d - g))
            rows.append(PortraitRow(float(r), float(d), cls.region, traj.terminal, traj.t_star, dist))
    return rows

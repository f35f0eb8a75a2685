"""Critical threshold curves sigma and gamma, and the trichotomy classifier.

Along a characteristic, a trajectory d = d(rho) in the (rho, d) phase plane
obeys

    d'(rho) = [f'' d^2 + (f + 2 rho f') d + rho^2 f] / (rho f).

``sigma`` is the trajectory leaving the origin with slope beta = -2 f'(0)/f''(0);
``gamma`` (only when f has an inflection point rho_c < 1) is the trajectory
that comes in from -inf at rho_c.  Data above sigma blow up with d -> +inf,
data on or below gamma blow up with d -> -inf, everything else stays smooth.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .errors import NumericalError, PreconditionError, ThresholdError
from .flux import FluxModel

__all__ = [
    "ThresholdCurve",
    "Region",
    "Classification",
    "ResolutionWarning",
    "trajectory_slope",
    "build_sigma",
    "build_gamma",
    "eta_series",
    "sigma_closed_fj",
    "gamma_closed_fj",
    "gamma_closed_fj_prime",
    "classify_pair",
    "classify_profile",
]

RHO_END = 1.0 - 1e-9
RTOL = 1e-10
ATOL = 1e-12
# |eta| above which gamma = 1/eta is integrated directly
ETA_SWITCH = 1e-12
MAX_TAYLOR_ORDER = 6


class ResolutionWarning(UserWarning):
    """A profile classification is not stable under 2x sample refinement."""


def trajectory_slope(flux: FluxModel, rho: float, d: float) -> float:
    """Right-hand side of the phase-plane trajectory equation at (rho, d)."""
    f = flux.eval(rho)
    return (flux.deriv2(rho) * d * d + (f + 2.0 * rho * flux.deriv1(rho)) * d + rho * rho * f) / (rho * f)


def _eta_slope(flux: FluxModel, rho: float, eta: float) -> float:
    f = flux.eval(rho)
    return (-flux.deriv2(rho) - (f + 2.0 * rho * flux.deriv1(rho)) * eta - rho * rho * f * eta * eta) / (rho * f)


@dataclass(frozen=True)
class ThresholdCurve:
    """A sampled threshold curve with cubic Hermite interpolation between samples.

    When ``slopes`` (the trajectory-equation slopes at the samples) are given
    the interpolant uses them; otherwise it falls back to monotone PCHIP.

    ``blowup_at`` is the abscissa where the curve exceeds the cap (rho_* for
    sigma, rho^* for gamma); the curve is +inf from there on.  For gamma,
    points between ``origin`` (= rho_c) and the first sample are evaluated
    from the Taylor seed of 1/gamma.
    """

    which: str
    grid: np.ndarray
    values: np.ndarray
    blowup_at: float | None = None
    origin: float = 0.0
    seed_coeffs: tuple[float, ...] = ()
    slopes: np.ndarray | None = None
    # end of the seed segment (linear for sigma); the ODE holds beyond it
    seed_end: float = 0.0
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.which not in ("sigma", "gamma"):
            raise ValueError("which must be 'sigma' or 'gamma'")
        if np.any(np.diff(self.grid) <= 0):
            raise ValueError("curve grid must be strictly increasing")
        if self.slopes is not None:
            interp = CubicHermiteSpline(self.grid, self.values, self.slopes, extrapolate=True)
        else:
            interp = PchipInterpolator(self.grid, self.values, extrapolate=True)
        object.__setattr__(self, "_interp", interp)

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        out = np.asarray(self._interp(rho), dtype=float)
        if self.blowup_at is not None:
            out = np.where(rho >= self.blowup_at, np.inf, out)
        if self.which == "gamma":
            below = rho < self.grid[0]
            if np.any(below):
                h = np.where(below, rho - self.origin, 1.0)
                eta = np.polynomial.polynomial.polyval(h, (0.0, *self.seed_coeffs))
                with np.errstate(divide="ignore"):
                    seeded = np.where(h > 0, 1.0 / eta, -np.inf)
                out = np.where(below, seeded, out)
        return out if out.ndim else float(out)

    @property
    def domain(self) -> tuple[float, float]:
        return (self.origin, self.blowup_at if self.blowup_at is not None else 1.0)

    def derivative_residual(self, flux: FluxModel, lo: float, hi: float, step: float = 1e-3) -> float:
        """Max scaled mismatch between the curve's slope and the trajectory equation on [lo, hi].

        The slope is a fourth-order central difference of the curve at its
        sample points.  The difference step shrinks towards ``origin`` so the
        gamma pole does not dominate the truncation error.
        """
        pts = self.grid[(self.grid >= lo) & (self.grid <= hi)]
        h = np.minimum(step, (pts - self.origin) / 100.0)
        top = self.blowup_at if self.blowup_at is not None else 1.0
        keep = (h > 0) & (pts + 2 * h < top) & (pts - 2 * h >= max(self.origin, self.seed_end))
        pts, h = pts[keep], h[keep]
        if pts.size == 0:
            return 0.0
        fd = (-self(pts + 2 * h) + 8.0 * self(pts + h) - 8.0 * self(pts - h) + self(pts - 2 * h)) / (12.0 * h)
        rhs = np.array([trajectory_slope(flux, r, v) for r, v in zip(pts, self(pts))])
        return float(np.max(np.abs(fd - rhs) / np.maximum(1.0, np.abs(rhs))))


def _node_slopes(flux, grid, values):
    out = np.empty_like(values)
    for i, (r, v) in enumerate(zip(grid, values)):
        out[i] = trajectory_slope(flux, r, v) if r > 0 else np.nan
    return out


def _sample_solution(sol, lo, hi, step):
    """Solver step points plus a uniform grid of spacing ``step`` on [lo, hi]."""
    uniform = np.arange(lo, hi, step)
    pts = np.union1d(sol.t[(sol.t >= lo) & (sol.t <= hi)], uniform)
    pts = pts[(pts >= lo) & (pts <= hi)]
    vals = sol.sol(pts)[0]
    return pts, vals


def build_sigma(
    flux: FluxModel,
    eps: float = 1e-4,
    rho_step: float = 1e-4,
    cap: float = 1e6,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> ThresholdCurve:
    """Construct sigma: linear seed beta*rho on [0, eps], then adaptive RK45 in rho.

    ``rho_step`` is the spacing of the uniform output grid (solver step
    points are kept as well).  If sigma exceeds ``cap`` the abscissa is
    recorded as ``blowup_at``, which must lie beyond rho_c.
    """
    if not 0.0 < eps <= 1e-3:
        raise PreconditionError("eps must lie in (0, 1e-3]")
    if cap < 1e3:
        raise PreconditionError("cap must be at least 1e3")
    beta = flux.beta
    if not (np.isfinite(beta) and beta > 0):
        raise ThresholdError(f"beta must be positive, got {beta}")

    # a-posteriori cone check: the seed stays in 0 <= sigma <= 5 beta rho / 4
    # and the slope field there points back into the cone
    seed_rho = np.linspace(0.0, eps, 11)[1:]
    for r in seed_rho:
        slope = trajectory_slope(flux, r, beta * r)
        if not (0.0 <= slope <= 1.25 * beta):
            raise ThresholdError(
                f"seed region violation at rho={r:.3e}: slope {slope:.6g} outside [0, 5 beta/4]"
            )

    def rhs(rho, y):
        return [trajectory_slope(flux, rho, y[0])]

    def hit_cap(rho, y):
        return y[0] - cap

    hit_cap.terminal = True
    hit_cap.direction = 1

    sol = solve_ivp(
        rhs, (eps, RHO_END), [beta * eps], method="RK45", rtol=rtol, atol=atol,
        dense_output=True, events=hit_cap,
    )
    blowup_at = None
    if sol.status == 1:
        blowup_at = float(sol.t_events[0][0])
    elif sol.status == -1:
        if sol.y[0, -1] > 1e3:
            blowup_at = float(sol.t[-1])
        else:
            raise NumericalError(f"sigma integration failed: {sol.message}")
    end = blowup_at if blowup_at is not None else RHO_END

    pts, vals = _sample_solution(sol, eps, end, rho_step)
    seed_pts = np.linspace(0.0, eps, 11)[:-1]
    grid = np.concatenate([seed_pts, pts])
    values = np.concatenate([beta * seed_pts, vals])

    if blowup_at is not None and not blowup_at > flux.rho_c:
        raise ThresholdError(
            f"sigma blew up at rho={blowup_at:.6g}, not beyond rho_c={flux.rho_c:.6g}"
        )
    slopes = _node_slopes(flux, grid, values)
    slopes[0] = beta
    return ThresholdCurve(
        "sigma", grid, values, blowup_at=blowup_at, origin=0.0, slopes=slopes, seed_end=eps
    )


def eta_series(flux: FluxModel, order: int = 5) -> tuple[tuple[float, ...], int]:
    """Taylor coefficients a_1..a_order of eta = 1/gamma about rho_c, and the leading order n.

    eta vanishes at rho_c to order n-1, where f^(n)(rho_c) is the first
    nonzero derivative beyond the second (n <= 6).
    """
    rc = flux.rho_c
    if not rc < 1.0:
        raise ThresholdError("no inflection: the flux is concave on [0, 1]")
    lead = None
    for n in range(3, MAX_TAYLOR_ORDER + 1):
        if abs(flux.derivative(n, rc)) > 1e-10:
            lead = n
            break
    if lead is None:
        raise ThresholdError(
            f"degenerate inflection: f^(n)(rho_c) vanishes for all 3 <= n <= {MAX_TAYLOR_ORDER}"
        )
    if flux.derivative(lead, rc) < 0:
        raise ThresholdError("hypothesis violation: f is not convex to the right of rho_c")

    N = max(order, lead - 1)
    c = np.array([flux.derivative(k, rc) / math.factorial(k) for k in range(N + 2)], dtype=float)
    fs = c[: N + 1]
    f1 = np.array([(k + 1) * c[k + 1] for k in range(N + 1)])
    f2 = np.zeros(N + 1)
    f2[:N] = [(k + 1) * (k + 2) * c[k + 2] for k in range(N)]
    rho_s = np.zeros(N + 1)
    rho_s[0], rho_s[1] = rc, 1.0

    def mul(a, b):
        return np.convolve(a, b)[: N + 1]

    P = mul(rho_s, fs)
    B = fs + 2.0 * mul(rho_s, f1)
    Q = mul(mul(rho_s, rho_s), fs)
    a = np.zeros(N + 1)
    for j in range(N):
        rhs = -f2[j] - mul(B, a)[j] - mul(Q, mul(a, a))[j]
        rhs -= sum(P[i] * (j - i + 1) * a[j - i + 1] for i in range(1, j + 1))
        a[j + 1] = rhs / (P[0] * (j + 1))
    return tuple(float(v) for v in a[1:]), lead


def build_gamma(
    flux: FluxModel,
    delta: float = 1e-4,
    cap: float = 1e6,
    rho_step: float = 1e-4,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> ThresholdCurve:
    """Construct gamma from its pole at rho_c.

    eta = 1/gamma vanishes at rho_c; its Taylor expansion (leading term
    -f'''(rho_c) h^2 / (2 rho_c f(rho_c)), higher orders when f''' vanishes)
    seeds eta at rho_c + delta.  Once |eta| > 1e-12 the curve is continued in
    gamma itself up to 1 - 1e-9, or until gamma exceeds ``cap`` at rho^*.
    """
    if not 0.0 < delta <= 1e-3:
        raise PreconditionError("delta must lie in (0, 1e-3]")
    coeffs, _ = eta_series(flux)
    rc = flux.rho_c
    rho_s = rc + delta
    eta_s = float(np.polynomial.polynomial.polyval(delta, (0.0, *coeffs)))

    if abs(eta_s) <= ETA_SWITCH:
        def grow(rho, y):
            return abs(y[0]) - ETA_SWITCH

        grow.terminal = True
        sol = solve_ivp(
            lambda r, y: [_eta_slope(flux, r, y[0])], (rho_s, RHO_END), [eta_s],
            method="RK45", rtol=rtol, atol=1e-30, events=grow,
        )
        if sol.status != 1:
            raise NumericalError("eta never left the neighbourhood of zero")
        rho_s, eta_s = float(sol.t_events[0][0]), float(sol.y_events[0][0][0])

    def rhs(rho, y):
        return [trajectory_slope(flux, rho, y[0])]

    def hit_cap(rho, y):
        return y[0] - cap

    hit_cap.terminal = True
    hit_cap.direction = 1

    sol = solve_ivp(
        rhs, (rho_s, RHO_END), [1.0 / eta_s], method="RK45", rtol=rtol, atol=atol,
        dense_output=True, events=hit_cap,
    )
    blowup_at = None
    if sol.status == 1:
        blowup_at = float(sol.t_events[0][0])
    elif sol.status == -1:
        if sol.y[0, -1] > 1e3:
            blowup_at = float(sol.t[-1])
        else:
            raise NumericalError(f"gamma integration failed: {sol.message}")
    end = blowup_at if blowup_at is not None else RHO_END
    grid, values = _sample_solution(sol, rho_s, end, rho_step)
    return ThresholdCurve(
        "gamma", grid, values, blowup_at=blowup_at, origin=rc, seed_coeffs=coeffs,
        slopes=_node_slopes(flux, grid, values), seed_end=float(grid[0]),
    )


def sigma_closed_fj(J: float, rho):
    """sigma for f_J: rho (1 - rho) / J."""
    if not J > 0:
        raise PreconditionError("J must be positive")
    rho = np.asarray(rho, dtype=float)
    out = rho * (1.0 - rho) / J
    return out if out.ndim else float(out)


def gamma_closed_fj(J: float, rho):
    """gamma for f_J, J > 1, defined for rho in (2/(J+1), 1]."""
    if not J > 1:
        raise PreconditionError("gamma exists only for J > 1")
    rho = np.asarray(rho, dtype=float)
    rc = 2.0 / (J + 1.0)
    if np.any(rho <= rc):
        raise PreconditionError(f"gamma is only defined for rho > rho_c = {rc:.6g}")
    re = 4.0 * J / (J + 1.0) ** 2
    out = rho**2 * (1.0 - rho) * (rho - re) / (J * (rho - rc) ** 2)
    return out if out.ndim else float(out)


def gamma_closed_fj_prime(J: float, rho):
    """Derivative of the closed-form gamma for f_J, in factored cubic form."""
    rho = np.asarray(rho, dtype=float)
    rc = 2.0 / (J + 1.0)
    re = 4.0 * J / (J + 1.0) ** 2
    cubic = -2.0 * rho**3 + (re + 4.0 * rc + 1.0) * rho**2 - 3.0 * (re + 1.0) * rc * rho + 2.0 * re * rc
    out = rho / (J * (rho - rc) ** 3) * cubic
    return out if out.ndim else float(out)


class Region(str, enum.Enum):
    SUBCRITICAL = "Subcritical"
    TYPE_I = "TypeISupercritical"
    TYPE_II = "TypeIISupercritical"


@dataclass(frozen=True)
class Classification:
    """Region of the trichotomy with the worst offending location.

    ``margin`` > 0 measures the violation (d0 - sigma or gamma - d0) for
    supercritical data; for subcritical data it is minus the distance to the
    nearest threshold.
    """

    region: Region
    witness_x: float | None
    margin: float
    notes: tuple[str, ...] = ()


def _check_pair_inputs(flux, gamma):
    if flux.rho_c < 1.0 and gamma is None:
        raise PreconditionError("gamma curve required when rho_c < 1")


def _margins(flux, sigma, gamma, rho0, d0):
    """Vectorised (type-I margin, type-II margin); positive means violation."""
    rho0 = np.asarray(rho0, dtype=float)
    d0 = np.asarray(d0, dtype=float)
    if np.any(rho0 >= 1.0) or np.any(rho0 < 0.0):
        raise PreconditionError("rho0 must lie in [0, 1)")
    with np.errstate(invalid="ignore"):
        m1 = d0 - np.asarray(sigma(rho0), dtype=float)
    m2 = np.full(rho0.shape, -np.inf)
    if gamma is not None and flux.rho_c < 1.0:
        above = rho0 > flux.rho_c
        if np.any(above):
            g = np.asarray(gamma(np.where(above, rho0, flux.rho_c + 0.5 * (1 - flux.rho_c))), dtype=float)
            with np.errstate(invalid="ignore"):
                m2 = np.where(above, g - d0, -np.inf)
    return m1, m2


def _regions(m1, m2):
    return np.where(m1 > 0, 1, np.where(m2 >= 0, 2, 0))


_REGION_OF = {0: Region.SUBCRITICAL, 1: Region.TYPE_I, 2: Region.TYPE_II}


def classify_pair(flux, sigma: ThresholdCurve, gamma: ThresholdCurve | None, rho0: float, d0: float) -> Classification:
    """Classify one phase-plane point (rho0, d0)."""
    _check_pair_inputs(flux, gamma)
    m1, m2 = _margins(flux, sigma, gamma, rho0, d0)
    m1, m2 = float(m1), float(m2)
    code = int(_regions(m1, m2))
    if code == 1:
        margin = m1
    elif code == 2:
        margin = m2
    else:
        margin = max(m1, m2)
    return Classification(_REGION_OF[code], None, margin)


def _classify_samples(flux, sigma, gamma, x, rho, drho):
    m1, m2 = _margins(flux, sigma, gamma, rho, drho)
    codes = _regions(m1, m2)
    notes = []
    witnesses = {}
    for code, margins in ((1, m1), (2, m2)):
        hit = np.flatnonzero(codes == code)
        if hit.size:
            k = hit[np.argmax(margins[hit])]
            witnesses[code] = (float(x[k]), float(margins[k]))
    if 1 in witnesses:
        region = Region.TYPE_I
        wx, margin = witnesses[1]
        if 2 in witnesses:
            notes.append(
                f"both supercritical types present: type I at x={witnesses[1][0]:.6g}, "
                f"type II at x={witnesses[2][0]:.6g}"
            )
    elif 2 in witnesses:
        region = Region.TYPE_II
        wx, margin = witnesses[2]
    else:
        region = Region.SUBCRITICAL
        wx = None
        margin = float(np.max(np.maximum(m1, m2))) if rho.size else -np.inf
    return Classification(region, wx, margin, tuple(notes)), codes


def classify_profile(flux, sigma, gamma, x, rho, drho, check_resolution: bool = True) -> Classification:
    """Classify sampled initial data (x, rho0(x), rho0'(x)).

    Subcritical only if every sample is.  When both supercritical types occur,
    type I is reported and the note lists both witnesses.  A
    ``ResolutionWarning`` is issued if classifying the linearly interpolated
    2x-refined profile changes any outcome.
    """
    _check_pair_inputs(flux, gamma)
    x = np.asarray(x, dtype=float)
    rho = np.asarray(rho, dtype=float)
    drho = np.asarray(drho, dtype=float)
    result, codes = _classify_samples(flux, sigma, gamma, x, rho, drho)
    if check_resolution and x.size > 1:
        xm = 0.5 * (x[:-1] + x[1:])
        rm = 0.5 * (rho[:-1] + rho[1:])
        dm = 0.5 * (drho[:-1] + drho[1:])
        _, mid_codes = _classify_samples(flux, sigma, gamma, xm, rm, dm)
        flips = (mid_codes != codes[:-1]) & (mid_codes != codes[1:])
        if np.any(flips):
            msg = f"resolution warning: {int(np.count_nonzero(flips))} refined samples change class"
            warnings.warn(msg, ResolutionWarning, stacklevel=2)
            result = Classification(result.region, result.witness_x, result.margin, result.notes + (msg,))
    return result

"""Look-ahead interaction kernels and the nonlocal density.

The nonlocal density at x weights the traffic ahead of x:

    rhobar(x) = int_0^inf K(y) rho(x + y) dy

Densities are sampled at the nodes of a uniform grid and vanish beyond the
last node.  All quadratures are trapezoidal on those nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["KernelSpec", "infinite", "indicator", "linear_decay", "parse_kernel", "nonlocal_density"]

_RANGE_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """A nonnegative look-ahead kernel with sup bound ``k_max`` and BV seminorm ``bv_norm``.

    ``kind`` is one of ``"infinite"`` (K = 1 on [0, inf)), ``"indicator"``
    (K = 1 on [0, L]) or ``"linear"`` (K = 1 - x/L on [0, L)).  The BV norm
    stored for the built-in kernels is the conservative common bound 2.
    """

    kind: str
    L: float = np.inf
    k_max: float = 1.0
    bv_norm: float = 2.0

    def __post_init__(self):
        if self.kind not in ("infinite", "indicator", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind != "infinite" and not (0.0 < self.L < np.inf):
            raise ValueError(f"kernel length must be positive and finite, got {self.L}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "infinite":
            out = np.where(x >= 0.0, 1.0, 0.0)
        elif self.kind == "indicator":
            out = np.where((x >= 0.0) & (x <= self.L), 1.0, 0.0)
        else:
            out = np.where((x >= 0.0) & (x < self.L), 1.0 - x / self.L, 0.0)
        return out if out.ndim else float(out)

    @property
    def label(self) -> str:
        return "infinite" if self.kind == "infinite" else f"{self.kind}:{self.L:g}"


def infinite() -> KernelSpec:
    return KernelSpec("infinite")


def indicator(L: float) -> KernelSpec:
    return KernelSpec("indicator", float(L))


def linear_decay(L: float) -> KernelSpec:
    return KernelSpec("linear", float(L))


def parse_kernel(spec: str) -> KernelSpec:
    """Parse ``infinite``, ``indicator:<L>`` or ``linear:<L>``."""
    kind, _, arg = spec.strip().partition(":")
    kind = kind.lower()
    if kind == "infinite" and not arg:
        return infinite()
    if kind in ("indicator", "linear") and arg:
        return KernelSpec(kind, float(arg))
    raise ValueError(f"unknown kernel spec {spec!r}")


def _window_weights(kernel: KernelSpec, dx: float):
    """Trapezoid weights on the nodes 0, dx, ..., M dx plus the partial last segment.

    Returns (weights, frac, k_end) where the remaining piece [M dx, L] has
    length ``frac * dx`` and kernel value ``k_end`` at its right end.
    """
    L = kernel.L
    M = int(np.floor(L / dx + 1e-9))
    frac = max(L / dx - M, 0.0)
    if frac < 1e-9:
        frac = 0.0
    y = np.arange(M + 1) * dx
    kv = np.asarray(kernel(y), dtype=float)
    if kernel.kind == "indicator":
        kv[:] = 1.0
    w = kv * dx
    w[0] *= 0.5
    if frac == 0.0:
        w[-1] *= 0.5
        k_end = 0.0
    else:
        # segment [M dx, L]: trapezoid with the left node value
        w[-1] = w[-1] - 0.5 * kv[-1] * dx + 0.5 * kv[-1] * frac * dx
        k_end = 1.0 if kernel.kind == "indicator" else 0.0
    return w, frac, k_end


def nonlocal_density(kernel: KernelSpec, dx: float, rho, periodic: bool = False) -> np.ndarray:
    """Nonlocal density at every node of a uniform grid with spacing ``dx``.

    For the infinite kernel this is a right-to-left cumulative trapezoid sum,
    O(N).  Finite kernels use a windowed discrete correlation.  ``rho`` is
    taken as zero beyond the last node unless ``periodic`` (finite kernels only).
    """
    rho = np.asarray(rho, dtype=float)
    if not dx > 0:
        raise ValueError("dx must be positive")
    if rho.size and (rho.min() < -_RANGE_TOL or rho.max() > 1.0 + _RANGE_TOL):
        raise ValueError(
            f"density out of range [0, 1]: min={rho.min():.3e}, max={rho.max():.3e}"
        )
    n = rho.size
    if kernel.kind == "infinite":
        if periodic:
            raise ValueError("the infinite look-ahead kernel has no periodic form")
        out = np.zeros(n)
        if n > 1:
            seg = 0.5 * dx * (rho[:-1] + rho[1:])
            out[:-1] = np.cumsum(seg[::-1])[::-1]
        return out

    w, frac, k_end = _window_weights(kernel, dx)
    M = w.size - 1
    extra = M + 2 if frac else M + 1
    if periodic:
        reps = int(np.ceil(extra / n)) + 1
        padded = np.tile(rho, reps + 1)[: n + extra]
    else:
        padded = np.concatenate([rho, np.zeros(extra)])
    out = np.zeros(n)
    for k in range(M + 1):
        out += w[k] * padded[k : k + n]
    if frac:
        # rho at x + L by linear interpolation between nodes M and M + 1
        r_end = (1.0 - frac) * padded[M : M + n] + frac * padded[M + 1 : M + 1 + n]
        out += 0.5 * frac * dx * k_end * r_end
    return out

"""Radial averaging kernels and their grid stencils.

Both crowd scenarios average density with the same compactly supported
radial bump

    eta(x) = c_l * (1 - (|x|/l)^4)^4   for |x| < l,   c_l = 315 / (128 pi l^2),

which has unit mass in the plane:  2 pi c_l l^2 * integral_0^1 s (1-s^4)^4 ds
= 2 pi c_l l^2 * 64/315 = 1.  The two public constructors document the two
equivalent parameterizations in circulation (expanded-coefficient and
ratio form) and produce identical kernels.

:func:`build_stencil` turns a kernel into discrete offsets and weights by
midpoint quadrature at cell-center displacements.  The weights are *not*
renormalized to sum to one here -- near boundaries the averaging module
divides by the in-domain kernel mass instead, and that renormalization is
only meaningful if the raw weights approximate the continuum kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Grid

__all__ = [
    "RadialKernel",
    "KernelStencil",
    "make_quartic_kernel_room",
    "make_quartic_kernel_corridor",
    "eval_gradient",
    "build_stencil",
]


@dataclass(frozen=True)
class RadialKernel:
    """Radial profile eta(x) = profile(|x|), compact support [0, support)."""

    support: float
    coefficient: float  # profile value scale, 315 / (128 pi support^2)

    def profile(self, xi: np.ndarray | float) -> np.ndarray:
        """Radial profile value; zero at and beyond the support radius."""
        s = np.asarray(xi, dtype=float) / self.support
        inside = s < 1.0
        body = (1.0 - np.where(inside, s, 1.0) ** 4) ** 4
        return self.coefficient * np.where(inside, body, 0.0)

    def profile_derivative(self, xi: np.ndarray | float) -> np.ndarray:
        s = np.asarray(xi, dtype=float) / self.support
        inside = s < 1.0
        sc = np.where(inside, s, 1.0)
        body = -16.0 * sc**3 * (1.0 - sc**4) ** 3 / self.support
        return self.coefficient * np.where(inside, body, 0.0)

    def profile_second_derivative(self, xi: np.ndarray | float) -> np.ndarray:
        s = np.asarray(xi, dtype=float) / self.support
        inside = s < 1.0
        sc = np.where(inside, s, 1.0)
        body = -48.0 * sc**2 * (1.0 - sc**4) ** 2 * (1.0 - 5.0 * sc**4) / self.support**2
        return self.coefficient * np.where(inside, body, 0.0)

    def __call__(self, x: np.ndarray | float, y: np.ndarray | float) -> np.ndarray:
        return self.profile(np.hypot(x, y))

    def gradient(
        self, x: np.ndarray | float, y: np.ndarray | float
    ) -> tuple[np.ndarray, np.ndarray]:
        """Plane gradient profile'(|x|) * x/|x|, with gradient(0) = 0."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = np.hypot(x, y)
        safe = np.where(r > 0.0, r, 1.0)
        scale = np.where(r > 0.0, self.profile_derivative(r) / safe, 0.0)
        return scale * x, scale * y


def _quartic(support: float) -> RadialKernel:
    if support <= 0.0:
        raise ValueError(f"kernel support must be positive, got {support}")
    coefficient = 315.0 / (128.0 * math.pi * support * support)
    return RadialKernel(support=float(support), coefficient=coefficient)


def make_quartic_kernel_room(support: float) -> RadialKernel:
    """Quartic bump written with expanded coefficients,

        eta~(xi) = 315 / (128 pi l^18) * (l^4 - xi^4)^4  on [0, l].

    Algebraically identical to :func:`make_quartic_kernel_corridor`; both
    share one implementation so the equality is exact, not merely
    approximate.
    """
    return _quartic(support)


def make_quartic_kernel_corridor(support: float) -> RadialKernel:
    """Quartic bump in ratio form,

        eta~(xi) = 315 / (128 pi l^2) * (1 - (xi/l)^4)^4  on [0, l].
    """
    return _quartic(support)


def eval_gradient(
    kernel: RadialKernel, point: tuple[float, float] | np.ndarray
) -> np.ndarray:
    """Gradient of the plane kernel at one point, as a length-2 array."""
    point = np.asarray(point, dtype=float)
    gx, gy = kernel.gradient(point[0], point[1])
    return np.array([float(gx), float(gy)])


@dataclass(frozen=True)
class KernelStencil:
    """Discrete kernel: integer offsets with value and gradient weights.

    ``offsets`` (k, 2) holds cell displacements in deterministic row-major
    order (first index major); ``weights[k] = eta(offset_k * h) * h^2`` and
    ``grad_weights[k] = grad eta(offset_k * h) * h^2``.  ``weight_sum`` is
    the plain left-to-right sum of the weights, i.e. exactly the value the
    normalizer reaches on cells whose whole neighborhood is interior.
    """

    offsets: np.ndarray
    weights: np.ndarray
    grad_weights: np.ndarray
    spacing: tuple[float, float]
    support: float
    weight_sum: float


def build_stencil(
    kernel: RadialKernel, grid: Grid, min_resolution: float = 4.0
) -> KernelStencil:
    """Sample a kernel at cell-center displacements of a grid.

    Requires the support to span at least ``min_resolution`` cells (default
    four) -- below that the midpoint quadrature no longer resembles the
    kernel and the averaging would silently degrade.
    """
    dx, dy = grid.dx, grid.dy
    if max(dx, dy) > kernel.support / min_resolution * (1.0 + 1e-12):
        raise ValueError(
            f"mesh size {max(dx, dy)} under-resolves kernel support "
            f"{kernel.support} (need at least {min_resolution} cells)"
        )
    rx = int(math.ceil(kernel.support / dx))
    ry = int(math.ceil(kernel.support / dy))
    di = np.arange(-rx, rx + 1)
    dj = np.arange(-ry, ry + 1)
    ii, jj = np.meshgrid(di, dj, indexing="ij")
    dist = np.hypot(ii * dx, jj * dy)
    keep = dist < kernel.support
    offsets = np.stack([ii[keep], jj[keep]], axis=1)
    area = dx * dy
    weights = kernel.profile(dist[keep]) * area
    gx, gy = kernel.gradient(offsets[:, 0] * dx, offsets[:, 1] * dy)
    grad_weights = np.stack([gx * area, gy * area], axis=1)

    total = 0.0
    for w in weights:
        total += float(w)

    return KernelStencil(
        offsets=offsets,
        weights=weights,
        grad_weights=grad_weights,
        spacing=(dx, dy),
        support=kernel.support,
        weight_sum=total,
    )

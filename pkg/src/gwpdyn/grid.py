"""Uniform periodic tensor-product grids and the packet-aware sizing heuristic.

Boxes are half-open, ``[c_i - L_i, c_i + L_i)`` per axis, sampled at N
equispaced points with N a power of two (FFT friendly).  The heuristic
:func:`suggest_grid` sizes a box from a packet trajectory so that the
Gaussian envelope decays to negligible mass at the boundary and the
``exp(i p.x / eps)`` oscillation is sampled with at least five points per
period.
"""
from __future__ import annotations

import numpy as np

from .errors import GridError

_DEFAULT_MEMORY_BUDGET = 4 << 30  # bytes available for one complex field


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


class Grid:
    """Immutable uniform periodic grid on a d-dimensional box."""

    def __init__(self, center, half_width, points_per_axis: int,
                 memory_budget_bytes: int = _DEFAULT_MEMORY_BUDGET):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        half_width = np.atleast_1d(np.asarray(half_width, dtype=float))
        if center.ndim != 1 or center.shape != half_width.shape:
            raise GridError("center and half_width must be 1-d arrays of equal length")
        if center.size < 1:
            raise GridError("dimension must be >= 1")
        if np.any(half_width <= 0):
            raise GridError(f"half widths must be positive, got {half_width}")
        n = int(points_per_axis)
        if n < 8 or not _is_power_of_two(n):
            raise GridError(f"points_per_axis must be a power of two >= 8, got {points_per_axis}")
        d = center.size
        # one complex128 field on this grid must fit the budget
        if 16 * n ** d > memory_budget_bytes:
            raise GridError(
                f"grid with {n}^{d} points exceeds memory budget of {memory_budget_bytes} bytes"
            )
        self.dim = d
        self.center = center
        self.center.setflags(write=False)
        self.half_width = half_width
        self.half_width.setflags(write=False)
        self.points_per_axis = n
        self.spacing = 2.0 * half_width / n
        self.spacing.setflags(write=False)
        self.memory_budget_bytes = memory_budget_bytes
        self._meshes = None
        self._wavenumbers = {}

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.dim

    @property
    def weight(self) -> float:
        """Quadrature weight of one node (product of spacings)."""
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        """Sample coordinates along axis i."""
        n = self.points_per_axis
        return self.center[i] - self.half_width[i] + self.spacing[i] * np.arange(n)

    def meshes(self) -> tuple:
        """d coordinate arrays of shape ``self.shape`` (ij indexing), cached."""
        if self._meshes is None:
            axes = [self.axis(i) for i in range(self.dim)]
            self._meshes = tuple(np.meshgrid(*axes, indexing="ij"))
            for m in self._meshes:
                m.setflags(write=False)
        return self._meshes

    def wavenumbers(self, i: int, zero_nyquist: bool = True) -> np.ndarray:
        """Angular wavenumbers along axis i, in {-N/2, ..., N/2-1} * (pi / L_i).

        The Nyquist mode is zeroed when the array is used for differentiation
        so the derivative spectrum stays antisymmetric.
        """
        key = (i, zero_nyquist)
        if key not in self._wavenumbers:
            n = self.points_per_axis
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=self.spacing[i])
            if zero_nyquist:
                k = k.copy()
                k[n // 2] = 0.0
            k.setflags(write=False)
            self._wavenumbers[key] = k
        return self._wavenumbers[key]

    def wavenumber_mesh(self, i: int, zero_nyquist: bool = True) -> np.ndarray:
        """Wavenumbers along axis i broadcast to the full grid shape."""
        k = self.wavenumbers(i, zero_nyquist)
        shape = [1] * self.dim
        shape[i] = self.points_per_axis
        return k.reshape(shape)

    def kinetic_k2(self) -> np.ndarray:
        """|k|^2 on the full spectral grid (Nyquist modes kept)."""
        out = np.zeros(self.shape)
        for i in range(self.dim):
            out = out + self.wavenumber_mesh(i, zero_nyquist=False) ** 2
        return out

    def refined(self) -> "Grid":
        """Same box with twice the points per axis."""
        return Grid(self.center, self.half_width, 2 * self.points_per_axis,
                    self.memory_budget_bytes)

    def key(self) -> tuple:
        return (self.dim, tuple(self.center), tuple(self.half_width), self.points_per_axis)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (f"Grid(dim={self.dim}, center={self.center.tolist()}, "
                f"half_width={self.half_width.tolist()}, N={self.points_per_axis})")


def suggest_grid(q_samples, p_samples, Q_samples, P_samples, eps: float,
                 pad_sigmas: float = 8.0, points_per_period: float = 5.0,
                 min_points: int = 16,
                 memory_budget_bytes: int = _DEFAULT_MEMORY_BUDGET) -> Grid:
    """Size a grid to resolve a packet along a parameter trajectory.

    Half widths cover the q-excursion plus ``pad_sigmas`` position standard
    deviations (std ~ sqrt(eps) times the largest singular value of Q seen
    along the trajectory).  The spacing resolves the fastest phase
    oscillation, dx <= 2 pi eps / (points_per_period * (max|p| + sqrt(eps) ||P||)).
    """
    q = np.atleast_2d(np.asarray(q_samples, dtype=float))
    p = np.atleast_2d(np.asarray(p_samples, dtype=float))
    Q = np.asarray(Q_samples, dtype=complex)
    P = np.asarray(P_samples, dtype=complex)
    if Q.ndim == 2:
        Q = Q[None, :, :]
    if P.ndim == 2:
        P = P[None, :, :]
    d = q.shape[1]

    sigma_q = max(np.linalg.norm(Qt, ord=2) for Qt in Q)
    sigma_p = max(np.linalg.norm(Pt, ord=2) for Pt in P)
    std = np.sqrt(eps) * sigma_q

    lo = q.min(axis=0) - pad_sigmas * std
    hi = q.max(axis=0) + pad_sigmas * std
    center = 0.5 * (lo + hi)
    half_width = 0.5 * (hi - lo)

    p_max = float(np.max(np.abs(p)))
    k_scale = p_max + np.sqrt(eps) * sigma_p
    dx_max = 2.0 * np.pi * eps / (points_per_period * max(k_scale, 1e-30))

    n = min_points
    for i in range(d):
        need = int(np.ceil(2.0 * half_width[i] / dx_max))
        while n < need:
            n *= 2
    return Grid(center, half_width, n, memory_budget_bytes)

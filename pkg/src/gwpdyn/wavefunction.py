"""Complex wave functions on periodic grids: inner products, norms, and the
spectral position/momentum operators.

The momentum operator is ``-i eps d/dx`` applied via FFT: transform,
multiply by ``eps * k``, transform back.  All inner products are plain
Riemann sums, which are spectrally accurate for smooth fields that decay
inside the box.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, NormalizationError, UnsupportedDimensionError, ValidationError
from .grid import Grid

TAIL_WARN_THRESHOLD = 1e-8


@dataclass(frozen=True)
class WaveFunction:
    """Complex-valued samples over a grid, tagged with the semiclassical eps."""

    grid: Grid
    values: np.ndarray
    eps: float

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValidationError(
                f"values shape {vals.shape} does not match grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(vals.view(float))):
            raise ValidationError("wave function contains non-finite values")
        if self.eps <= 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def with_values(self, values: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.grid, values, self.eps)


def _check_compatible(f: WaveFunction, g: WaveFunction):
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")
    if f.eps != g.eps:
        raise GridMismatchError(f"eps differs: {f.eps} vs {g.eps}")


def inner_product(f: WaveFunction, g: WaveFunction) -> complex:
    """Right-linear L2 inner product <f, g> = integral of conj(f) g."""
    _check_compatible(f, g)
    return complex(np.vdot(f.values, g.values) * f.grid.weight)


def l2_norm(f: WaveFunction) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2)) * np.sqrt(f.grid.weight))


def spectral_norm(f: WaveFunction) -> float:
    """L2 norm evaluated from the FFT coefficients (Parseval route)."""
    n_total = f.values.size
    coeffs = sfft.fftn(f.values)
    return float(np.sqrt(np.sum(np.abs(coeffs) ** 2) / n_total) * np.sqrt(f.grid.weight))


def spectral_tail_mass(f: WaveFunction) -> float:
    """Fraction of spectral mass in the outer quarter of the band, per axis union.

    Used as a resolution check: a well-resolved state has essentially no
    mass near the Nyquist frequency.
    """
    coeffs = np.abs(sfft.fftn(f.values)) ** 2
    total = coeffs.sum()
    if total == 0.0:
        return 0.0
    n = f.grid.points_per_axis
    freq_index = np.abs(np.fft.fftfreq(n) * n)  # 0 .. N/2
    outer = freq_index >= (3 * n) // 8
    mask = np.zeros(f.grid.shape, dtype=bool)
    for axis in range(f.grid.dim):
        shape = [1] * f.grid.dim
        shape[axis] = n
        mask |= outer.reshape(shape)
    return float(coeffs[mask].sum() / total)


def apply_position(f: WaveFunction, axis: int, shift=None) -> WaveFunction:
    """Multiply pointwise by (x_axis - shift_axis)."""
    if not 0 <= axis < f.grid.dim:
        raise ValidationError(f"axis {axis} out of range for dimension {f.grid.dim}")
    x = f.grid.meshes()[axis]
    s = 0.0 if shift is None else np.asarray(shift, dtype=float).reshape(-1)[axis]
    return f.with_values((x - s) * f.values)


def apply_momentum(f: WaveFunction, axis: int, warn_tail: bool = True) -> WaveFunction:
    """Apply -i eps d/dx_axis spectrally (Nyquist mode zeroed)."""
    if not 0 <= axis < f.grid.dim:
        raise ValidationError(f"axis {axis} out of range for dimension {f.grid.dim}")
    if warn_tail:
        tail = spectral_tail_mass(f)
        if tail > TAIL_WARN_THRESHOLD:
            warnings.warn(
                f"spectral tail mass {tail:.2e} exceeds {TAIL_WARN_THRESHOLD:.0e}; "
                "momentum application may be under-resolved",
                RuntimeWarning,
                stacklevel=2,
            )
    coeffs = sfft.fftn(f.values)
    coeffs *= f.eps * f.grid.wavenumber_mesh(axis, zero_nyquist=True)
    return f.with_values(sfft.ifftn(coeffs))


def _check_normalized(psi: WaveFunction, tol: float = 1e-8):
    norm = l2_norm(psi)
    if abs(norm - 1.0) > tol:
        raise NormalizationError(norm, tol)


def _real_part(value: complex, imag_tol: float = 1e-9) -> float:
    if abs(value.imag) > imag_tol:
        raise ValidationError(
            f"expectation has imaginary residue {value.imag:.3e} beyond {imag_tol:.0e}"
        )
    return float(value.real)


def expectation(observable: str, psi: WaveFunction, pot=None, axis: int = 0,
                axes: tuple = (0, 1)) -> float:
    """Expectation value <psi, O psi> for a normalized state.

    observable: "position" / "momentum" (with axis), "energy" (with pot),
    or "angular_momentum" (with an axis pair (i, j); Weyl symmetrized).
    """
    _check_normalized(psi)
    if observable == "position":
        op = apply_position(psi, axis)
        return _real_part(inner_product(psi, op))
    if observable == "momentum":
        op = apply_momentum(psi, axis)
        return _real_part(inner_product(psi, op))
    if observable == "energy":
        if pot is None:
            raise ValidationError("energy expectation requires a potential model")
        value = 0.0 + 0.0j
        for i in range(psi.grid.dim):
            dpsi = apply_momentum(psi, i, warn_tail=(i == 0))
            value += 0.5 * inner_product(dpsi, dpsi)
        v_grid = pot.value_grid(psi.grid)
        value += np.vdot(psi.values, v_grid * psi.values) * psi.grid.weight
        return _real_part(value)
    if observable == "angular_momentum":
        i, j = axes
        if psi.grid.dim < 2:
            raise UnsupportedDimensionError("angular momentum requires dimension >= 2")
        if i == j:
            return 0.0
        # J_ij = x_j p_i - x_i p_j; averaging both operator orderings equals
        # taking the real part of <x psi, p psi> since i != j.
        xj = apply_position(psi, j)
        pi_ = apply_momentum(psi, i)
        xi = apply_position(psi, i)
        pj = apply_momentum(psi, j, warn_tail=False)
        return float(inner_product(xj, pi_).real - inner_product(xi, pj).real)
    raise ValidationError(f"unknown observable {observable!r}")


def position_vector(psi: WaveFunction) -> np.ndarray:
    return np.array([expectation("position", psi, axis=i) for i in range(psi.grid.dim)])


def momentum_vector(psi: WaveFunction) -> np.ndarray:
    return np.array([expectation("momentum", psi, axis=i) for i in range(psi.grid.dim)])

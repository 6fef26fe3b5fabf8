"""Analytic potential models with derivatives through 4th order.

Only closed-form families are provided: the residual and correction-force
formulas need exact third and fourth derivative tensors, so numeric-only
potentials are deliberately out.  Each model carries metadata recording a
lower bound, a bound on the Hessian entries, and whether it satisfies the
boundedness hypotheses required by the convergence statements (a quartic
model is included for exploration but flagged as violating them).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedOrderError, ValidationError
from .grid import Grid

_KIND_CODES = {"free": 0, "harmonic": 1, "torsional": 2, "gaussian_well": 3, "quartic": 4}


@dataclass(frozen=True)
class PotentialModel:
    """Analytic potential V with derivative tensors D^k V, k = 0..4."""

    dim: int
    kind: str
    params: dict = field(default_factory=dict)
    offset: float = 0.0
    lower_bound: float = 0.0
    hessian_bound: float = 0.0
    satisfies_hypotheses: bool = True

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValidationError(f"unknown potential kind {self.kind!r}")
        if self.dim < 1:
            raise ValidationError("dimension must be >= 1")

    # -- point evaluation ----------------------------------------------------

    def eval(self, x, order: int = 0):
        """D^order V(x) as a fully symmetric tensor of shape (d,)*order.

        order 0 returns a float; orders 1..4 return ndarrays.
        """
        if not 0 <= order <= 4:
            raise UnsupportedOrderError(f"derivative order {order} unsupported (0..4)")
        x = np.asarray(x, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(x)):
            raise ValidationError("evaluation point must be finite")
        return getattr(self, f"_eval_{self.kind}")(x, order)

    def value(self, x) -> float:
        return self.eval(x, 0)

    def gradient(self, x) -> np.ndarray:
        return self.eval(x, 1)

    def hessian(self, x) -> np.ndarray:
        return self.eval(x, 2)

    def third(self, x) -> np.ndarray:
        return self.eval(x, 3)

    def fourth(self, x) -> np.ndarray:
        return self.eval(x, 4)

    # -- grid evaluation (vectorized) ---------------------------------------

    def value_grid(self, grid: Grid) -> np.ndarray:
        """V sampled on every grid node."""
        xs = grid.meshes()
        return self._value_vec(xs)

    def gradient_grid(self, grid: Grid) -> list:
        """Per-axis fields D_i V sampled on the grid."""
        xs = grid.meshes()
        return self._gradient_vec(xs)

    # -- per-kind formulas ----------------------------------------------------

    def _eval_free(self, x, order):
        if order == 0:
            return self.offset
        return np.zeros((self.dim,) * order)

    def _omega(self):
        return np.asarray(self.params["omega"], dtype=float).reshape(self.dim)

    def _eval_harmonic(self, x, order):
        w2 = self._omega() ** 2
        if order == 0:
            return float(0.5 * np.sum(w2 * x ** 2)) + self.offset
        if order == 1:
            return w2 * x
        if order == 2:
            return np.diag(w2)
        return np.zeros((self.dim,) * order)

    def _eval_torsional(self, x, order):
        if order == 0:
            return float(np.sum(1.0 - np.cos(x))) + self.offset
        out = np.zeros((self.dim,) * order)
        # V = sum_i (1 - cos x_i): only the pure-axis entries survive
        per_axis = {1: np.sin(x), 2: np.cos(x), 3: -np.sin(x), 4: -np.cos(x)}[order]
        for i in range(self.dim):
            out[(i,) * order] = per_axis[i]
        return out

    def _eval_gaussian_well(self, x, order):
        a = float(self.params["depth"])
        w = float(self.params["width"])
        g = float(np.exp(-np.dot(x, x) / (2.0 * w * w)))
        if order == 0:
            return a * (1.0 - g) + self.offset
        d = self.dim
        w2, w4, w6, w8 = w ** 2, w ** 4, w ** 6, w ** 8
        eye = np.eye(d)
        if order == 1:
            dg = -(x / w2) * g
            return -a * dg
        if order == 2:
            dg = (np.multiply.outer(x, x) / w4 - eye / w2) * g
            return -a * dg
        if order == 3:
            xxx = np.multiply.outer(np.multiply.outer(x, x), x)
            sym = (np.multiply.outer(eye, x)
                   + np.einsum("ik,j->ijk", eye, x)
                   + np.einsum("jk,i->ijk", eye, x))
            dg = (sym / w4 - xxx / w6) * g
            return -a * dg
        # order 4
        xx = np.multiply.outer(x, x)
        pair = (np.einsum("ij,kl->ijkl", eye, eye)
                + np.einsum("ik,jl->ijkl", eye, eye)
                + np.einsum("il,jk->ijkl", eye, eye))
        deltaxx = (np.einsum("ij,kl->ijkl", eye, xx)
                   + np.einsum("ik,jl->ijkl", eye, xx)
                   + np.einsum("il,jk->ijkl", eye, xx)
                   + np.einsum("jk,il->ijkl", eye, xx)
                   + np.einsum("jl,ik->ijkl", eye, xx)
                   + np.einsum("kl,ij->ijkl", eye, xx))
        xxxx = np.einsum("i,j,k,l->ijkl", x, x, x, x)
        dg = (pair / w4 - deltaxx / w6 + xxxx / w8) * g
        return -a * dg

    def _eval_quartic(self, x, order):
        c = np.asarray(self.params["coeff"], dtype=float).reshape(self.dim)
        if order == 0:
            return float(np.sum(c * x ** 4) / 4.0) + self.offset
        out = np.zeros((self.dim,) * order)
        per_axis = {1: c * x ** 3, 2: 3.0 * c * x ** 2, 3: 6.0 * c * x, 4: 6.0 * c}[order]
        for i in range(self.dim):
            out[(i,) * order] = per_axis[i]
        return out

    # -- vectorized counterparts ----------------------------------------------

    def _value_vec(self, xs):
        if self.kind == "free":
            return np.full(xs[0].shape, self.offset)
        if self.kind == "harmonic":
            w2 = self._omega() ** 2
            return 0.5 * sum(w2[i] * xs[i] ** 2 for i in range(self.dim)) + self.offset
        if self.kind == "torsional":
            return sum(1.0 - np.cos(xs[i]) for i in range(self.dim)) + self.offset
        if self.kind == "gaussian_well":
            a = float(self.params["depth"])
            w = float(self.params["width"])
            r2 = sum(xi ** 2 for xi in xs)
            return a * (1.0 - np.exp(-r2 / (2.0 * w * w))) + self.offset
        c = np.asarray(self.params["coeff"], dtype=float)
        return sum(c[i] * xs[i] ** 4 for i in range(self.dim)) / 4.0 + self.offset

    def _gradient_vec(self, xs):
        if self.kind == "free":
            return [np.zeros(xs[0].shape) for _ in range(self.dim)]
        if self.kind == "harmonic":
            w2 = self._omega() ** 2
            return [w2[i] * xs[i] for i in range(self.dim)]
        if self.kind == "torsional":
            return [np.sin(xs[i]) for i in range(self.dim)]
        if self.kind == "gaussian_well":
            a = float(self.params["depth"])
            w = float(self.params["width"])
            r2 = sum(xi ** 2 for xi in xs)
            g = np.exp(-r2 / (2.0 * w * w))
            return [a * xs[i] / (w * w) * g for i in range(self.dim)]
        c = np.asarray(self.params["coeff"], dtype=float)
        return [c[i] * xs[i] ** 3 for i in range(self.dim)]

    # -- kernel dispatch -------------------------------------------------------

    def kernel_spec(self):
        """(kind code, flat parameter array) consumed by the compiled stepper."""
        code = _KIND_CODES[self.kind]
        if self.kind == "harmonic":
            params = self._omega().astype(float)
        elif self.kind == "gaussian_well":
            params = np.array([float(self.params["depth"]), float(self.params["width"])])
        elif self.kind == "quartic":
            params = np.asarray(self.params["coeff"], dtype=float).reshape(self.dim)
        else:
            params = np.zeros(0)
        return code, np.ascontiguousarray(params), float(self.offset)


# -- constructors --------------------------------------------------------------

def free(dim: int, offset: float = 0.0) -> PotentialModel:
    return PotentialModel(dim, "free", offset=offset,
                          lower_bound=offset, hessian_bound=0.0)


def harmonic(omega, offset: float = 0.0) -> PotentialModel:
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    if np.any(omega < 0):
        raise ValidationError("harmonic frequencies must be nonnegative")
    return PotentialModel(omega.size, "harmonic", {"omega": tuple(omega)}, offset=offset,
                          lower_bound=offset, hessian_bound=float(np.max(omega ** 2)))


def torsional(dim: int, offset: float = 0.0) -> PotentialModel:
    return PotentialModel(dim, "torsional", offset=offset,
                          lower_bound=offset, hessian_bound=1.0)


def gaussian_well(dim: int, depth: float = 1.0, width: float = 1.0,
                  offset: float = 0.0) -> PotentialModel:
    if depth <= 0 or width <= 0:
        raise ValidationError("gaussian well needs depth > 0 and width > 0")
    return PotentialModel(dim, "gaussian_well", {"depth": depth, "width": width},
                          offset=offset, lower_bound=offset,
                          hessian_bound=depth / width ** 2)


def quartic(coeff, offset: float = 0.0) -> PotentialModel:
    """Pure quartic well; Hessian unbounded, kept for exploration only."""
    coeff = np.atleast_1d(np.asarray(coeff, dtype=float))
    if np.any(coeff <= 0):
        raise ValidationError("quartic coefficients must be positive")
    return PotentialModel(coeff.size, "quartic", {"coeff": tuple(coeff)}, offset=offset,
                          lower_bound=offset, hessian_bound=np.inf,
                          satisfies_hypotheses=False)


def from_config(cfg: dict, dim: int) -> PotentialModel:
    """Build a model from the experiment-config mapping."""
    kind = cfg.get("kind")
    offset = float(cfg.get("offset", 0.0))
    if kind == "free":
        return free(dim, offset)
    if kind == "harmonic":
        return harmonic(cfg.get("omega", [1.0] * dim), offset)
    if kind == "torsional":
        return torsional(dim, offset)
    if kind == "gaussian_well":
        return gaussian_well(dim, float(cfg.get("depth", 1.0)),
                             float(cfg.get("width", 1.0)), offset)
    if kind == "quartic":
        return quartic(cfg.get("coeff", [1.0] * dim), offset)
    raise ValidationError(f"unknown potential kind {kind!r}")


def check_derivatives(pot: PotentialModel, points, h: float = 1e-5) -> float:
    """Self-test: central finite differences of D^(k-1)V against D^k V.

    Returns the maximum relative discrepancy over all sample points, orders
    1..4 and tensor entries (scale floor 1 to keep zero tensors meaningful).
    """
    if not 1e-6 <= h <= 1e-2:
        raise ValidationError("finite-difference step must lie in [1e-6, 1e-2]")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    worst = 0.0
    for x in points:
        for order in range(1, 5):
            exact = np.asarray(pot.eval(x, order))
            approx = np.zeros_like(exact)
            for i in range(pot.dim):
                e = np.zeros(pot.dim)
                e[i] = h
                hi = np.asarray(pot.eval(x + e, order - 1))
                lo = np.asarray(pot.eval(x - e, order - 1))
                approx[..., i] = (hi - lo) / (2.0 * h)
            scale = max(1.0, float(np.max(np.abs(exact))))
            worst = max(worst, float(np.max(np.abs(approx - exact))) / scale)
    return worst

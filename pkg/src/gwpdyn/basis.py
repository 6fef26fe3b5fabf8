"""Gaussian ground state and the ladder-generated excited wave packets.

The ground state is the complex Gaussian determined by (q, p, Q, P, S); the
excited states are generated by raising operators and form an orthonormal
family that generalizes the Hermite functions.  Two constructions are
provided: spectral application of the raising operator (differentiation via
FFT) and an algebraic three-term recurrence that avoids differentiation,
which is the default since it is numerically quieter for higher orders.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ResolutionError, ValidationError
from .grid import Grid
from .packet import PacketParams, PacketTangent
from .wavefunction import (WaveFunction, apply_momentum, inner_product,
                           spectral_tail_mass)

RESOLUTION_TAIL_TOL = 1e-8


def multi_indices(d: int, order: int) -> list:
    """All multi-indices of the given order, lexicographically sorted."""
    if d == 1:
        return [(order,)]
    out = []
    for first in range(order, -1, -1):
        out.extend([(first,) + rest for rest in multi_indices(d - 1, order - first)])
    return sorted(out)


def multi_indices_up_to(d: int, max_order: int) -> list:
    out = []
    for order in range(max_order + 1):
        out.extend(multi_indices(d, order))
    return out


def eval_phi0(params: PacketParams, grid: Grid, check_resolution: bool = True) -> WaveFunction:
    """Sample the normalized Gaussian ground state on a grid.

    The prefactor (det Q)^(-1/2) uses the continuously tracked branch of
    arg det Q carried by the packet, so the global phase stays consistent
    along a trajectory.
    """
    d = params.dim
    if grid.dim != d:
        raise ValidationError("grid and packet dimensions disagree")
    if np.linalg.cond(params.Q) > 1e12:
        raise ValidationError("Q is numerically singular")
    eps = params.eps
    B = params.P @ np.linalg.inv(params.Q)
    det = np.linalg.det(params.Q)
    prefactor = ((np.pi * eps) ** (-d / 4.0) * abs(det) ** -0.5
                 * np.exp(-0.5j * params.det_branch.angle))
    xs = grid.meshes()
    dx = [xs[i] - params.q[i] for i in range(d)]
    quad = np.zeros(grid.shape, dtype=complex)
    for i in range(d):
        for j in range(d):
            quad += 0.5 * B[i, j] * dx[i] * dx[j]
    lin = sum(params.p[i] * dx[i] for i in range(d))
    values = prefactor * np.exp(1j / eps * (quad + lin + params.S))
    wf = WaveFunction(grid, values, eps)
    if check_resolution:
        tail = spectral_tail_mass(wf)
        if tail > RESOLUTION_TAIL_TOL:
            raise ResolutionError(
                f"ground state spectral tail mass {tail:.2e} exceeds "
                f"{RESOLUTION_TAIL_TOL:.0e}; enlarge or refine the grid")
    return wf


def _position_shifted(params: PacketParams, f: WaveFunction) -> list:
    xs = f.grid.meshes()
    return [(xs[i] - params.q[i]) * f.values for i in range(params.dim)]


def _momentum_shifted(params: PacketParams, f: WaveFunction) -> list:
    out = []
    for i in range(params.dim):
        pf = apply_momentum(f, i, warn_tail=False)
        out.append(pf.values - params.p[i] * f.values)
    return out


def apply_lowering(params: PacketParams, f: WaveFunction) -> list:
    """Lowering operator; returns d wave functions (one per component).

    Component j: -(i / sqrt(2 eps)) [ (P^T (x - q))_j - (Q^T (p_op - p))_j ] f.
    """
    pos = _position_shifted(params, f)
    mom = _momentum_shifted(params, f)
    c = -1j / np.sqrt(2.0 * params.eps)
    out = []
    for j in range(params.dim):
        acc = np.zeros(f.grid.shape, dtype=complex)
        for k in range(params.dim):
            acc += params.P[k, j] * pos[k] - params.Q[k, j] * mom[k]
        out.append(f.with_values(c * acc))
    return out


def apply_raising(params: PacketParams, f: WaveFunction) -> list:
    """Raising operator (adjoint of the lowering operator), d components.

    Component j: (i / sqrt(2 eps)) [ (P* (x - q))_j - (Q* (p_op - p))_j ] f.
    """
    pos = _position_shifted(params, f)
    mom = _momentum_shifted(params, f)
    c = 1j / np.sqrt(2.0 * params.eps)
    out = []
    for j in range(params.dim):
        acc = np.zeros(f.grid.shape, dtype=complex)
        for k in range(params.dim):
            acc += np.conj(params.P[k, j]) * pos[k] - np.conj(params.Q[k, j]) * mom[k]
        out.append(f.with_values(c * acc))
    return out


def apply_raising_dt(params: PacketParams, tangent: PacketTangent,
                     f: WaveFunction) -> list:
    """Time derivative of the raising operator along a flow, applied to f.

    Component j: (i / sqrt(2 eps)) [ (P'* (x - q))_j - (P* q')_j
                                     - (Q'* (p_op - p))_j + (Q* p')_j ] f.
    """
    pos = _position_shifted(params, f)
    mom = _momentum_shifted(params, f)
    Pq = params.P.conj().T @ tangent.dq
    Qp = params.Q.conj().T @ tangent.dp
    c = 1j / np.sqrt(2.0 * params.eps)
    out = []
    for j in range(params.dim):
        acc = (-Pq[j] + Qp[j]) * f.values
        for k in range(params.dim):
            acc = acc + np.conj(tangent.dP[k, j]) * pos[k] - np.conj(tangent.dQ[k, j]) * mom[k]
        out.append(f.with_values(c * acc))
    return out


@dataclass
class BasisSet:
    """Wave packets phi_n for all |n| <= max_order on a shared grid."""

    params: PacketParams
    max_order: int
    grid: Grid
    functions: dict

    def __getitem__(self, n) -> WaveFunction:
        key = tuple(int(v) for v in n)
        if key not in self.functions:
            raise ValidationError(f"index {key} not in basis (max order {self.max_order})")
        return self.functions[key]

    def indices(self) -> list:
        return multi_indices_up_to(self.params.dim, self.max_order)

    def gram_matrix(self) -> np.ndarray:
        idx = self.indices()
        g = np.empty((len(idx), len(idx)), dtype=complex)
        for a, m in enumerate(idx):
            for b, n in enumerate(idx):
                if b < a:
                    g[a, b] = np.conj(g[b, a])
                else:
                    g[a, b] = inner_product(self.functions[m], self.functions[n])
        return g

    def gram_deviation(self) -> float:
        g = self.gram_matrix()
        return float(np.max(np.abs(g - np.eye(g.shape[0]))))


def raise_index(params: PacketParams, functions: dict, n: tuple, j: int) -> WaveFunction:
    """phi_{n + e_j} = A*_j phi_n / sqrt(n_j + 1), spectral route."""
    if n not in functions:
        raise ValidationError(f"parent index {n} missing")
    raised = apply_raising(params, functions[n])[j]
    return raised.with_values(raised.values / np.sqrt(n[j] + 1.0))


def build_basis(params: PacketParams, max_order: int, grid: Grid) -> BasisSet:
    """Generate all |n| <= max_order by spectral raising, breadth-first."""
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    functions = {(0,) * params.dim: eval_phi0(params, grid)}
    for order in range(max_order):
        for n in multi_indices(params.dim, order):
            raised = apply_raising(params, functions[n])
            for j in range(params.dim):
                child = list(n)
                child[j] += 1
                child = tuple(child)
                if child not in functions:
                    functions[child] = raised[j].with_values(
                        raised[j].values / np.sqrt(n[j] + 1.0))
    return BasisSet(params, max_order, grid, functions)


def ladder_recurrence_eval(params: PacketParams, max_order: int, grid: Grid) -> BasisSet:
    """Generate the basis through the algebraic three-term recurrence.

    From the ladder representation of (x - q): the vector with components
    sqrt(n_j + 1) phi_{n+e_j} equals
        Q^{-1} [ sqrt(2/eps) (x - q) phi_n - conj(Q) (sqrt(n_j) phi_{n-e_j})_j ],
    which needs no differentiation.
    """
    if max_order < 0:
        raise ValidationError("max_order must be >= 0")
    d = params.dim
    Qinv = np.linalg.inv(params.Q)
    Qbar = np.conj(params.Q)
    phi0 = eval_phi0(params, grid)
    functions = {(0,) * d: phi0}
    xs = grid.meshes()
    dx = [xs[i] - params.q[i] for i in range(d)]
    scale = np.sqrt(2.0 / params.eps)
    for order in range(max_order):
        for n in multi_indices(d, order):
            fn = functions[n].values
            rhs = np.empty((d,) + grid.shape, dtype=complex)
            for i in range(d):
                rhs[i] = scale * dx[i] * fn
                for j in range(d):
                    if n[j] > 0:
                        down = list(n)
                        down[j] -= 1
                        rhs[i] -= Qbar[i, j] * np.sqrt(n[j]) * functions[tuple(down)].values
            v = np.einsum("ij,j...->i...", Qinv, rhs)
            for j in range(d):
                child = list(n)
                child[j] += 1
                child = tuple(child)
                if child not in functions:
                    functions[child] = phi0.with_values(v[j] / np.sqrt(n[j] + 1.0))
    return BasisSet(params, max_order, grid, functions)


def basis_time_derivatives(params: PacketParams, tangent: PacketTangent,
                           basis: BasisSet) -> dict:
    """d/dt phi_n along a flow, assembled analytically (no finite differences).

    The ground-state derivative follows by the chain rule through
    (q, p, Q, P, S) and the determinant branch; excited states recurse via
    the product rule on phi_{n+e_j} = A*_j phi_n / sqrt(n_j + 1).
    """
    d = params.dim
    grid = basis.grid
    eps = params.eps
    Qinv = np.linalg.inv(params.Q)
    B = params.P @ Qinv
    Bdot = tangent.dP @ Qinv - B @ tangent.dQ @ Qinv
    xs = grid.meshes()
    dx = [xs[i] - params.q[i] for i in range(d)]

    quad = np.zeros(grid.shape, dtype=complex)
    for i in range(d):
        for j in range(d):
            quad += 0.5 * Bdot[i, j] * dx[i] * dx[j]
    lin = np.zeros(grid.shape, dtype=complex)
    Bq = B @ tangent.dq
    for i in range(d):
        lin += (tangent.dp[i] - Bq[i]) * dx[i]
    scalar = -float(params.p @ tangent.dq) + tangent.dS
    # d/dt (det Q)^(-1/2) / (det Q)^(-1/2) = -tr(Q^-1 Q') / 2
    trace_term = -0.5 * np.trace(Qinv @ tangent.dQ)

    phi0 = basis.functions[(0,) * d]
    dt_phi = {(0,) * d: phi0.with_values(
        (trace_term + 1j / eps * (quad + lin + scalar)) * phi0.values)}

    for order in range(basis.max_order):
        for n in multi_indices(d, order):
            a_dt = apply_raising_dt(params, tangent, basis.functions[n])
            a_on_dt = apply_raising(params, dt_phi[n])
            for j in range(d):
                child = list(n)
                child[j] += 1
                child = tuple(child)
                if child not in dt_phi:
                    vals = (a_dt[j].values + a_on_dt[j].values) / np.sqrt(n[j] + 1.0)
                    dt_phi[child] = phi0.with_values(vals)
    return dt_phi


def write_basis_csv(basis: BasisSet, path: str):
    """Dump basis samples for plotting (coordinates, then Re/Im per index)."""
    idx = basis.indices()
    xs = basis.grid.meshes()
    header = [f"x_{i}" for i in range(basis.grid.dim)]
    for n in idx:
        tag = "".join(str(v) for v in n)
        header += [f"Re_phi_{tag}", f"Im_phi_{tag}"]
    cols = [x.ravel() for x in xs]
    for n in idx:
        vals = basis.functions[n].values.ravel()
        cols += [vals.real, vals.imag]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

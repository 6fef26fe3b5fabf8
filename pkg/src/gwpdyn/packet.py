"""Gaussian packet parameters (q, p, Q, P, S) and the two flows' building
blocks: the width-coupled correction potential, both Hamiltonians, the
semiclassical angular momentum, and the symplectic-invariant residuals.

The matrices Q, P satisfy Q^T P - P^T Q = 0 and Q* P - P* Q = 2i I; both
relations are preserved by the flows and checked at construction.  The
phase prefactor (det Q)^(-1/2) needs a continuous branch of arg det Q,
tracked by a winding counter plus the previous determinant.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import StepSizeError, UnsupportedDimensionError, ValidationError
from .potentials import PotentialModel

INVARIANT_TOL = 1e-10


@dataclass(frozen=True)
class DetBranch:
    """Continuous-branch state for (det Q)^(-1/2)."""

    winding: int = 0
    prev_det: complex = 1.0 + 0.0j

    @property
    def angle(self) -> float:
        """Continuously tracked arg det Q."""
        return float(np.angle(self.prev_det) + 2.0 * np.pi * self.winding)

    def advanced(self, new_det: complex) -> "DetBranch":
        """Step the branch to a new determinant (must be a small rotation)."""
        new_det = complex(new_det)
        if new_det == 0:
            raise ValidationError("det Q vanished; Q must stay invertible")
        delta = float(np.angle(new_det / self.prev_det))
        if abs(delta) >= 0.5 * np.pi:
            raise StepSizeError(
                f"arg det Q jumped by {delta:.3f} in one update; refine the step size"
            )
        new_angle = self.angle + delta
        winding = int(np.round((new_angle - np.angle(new_det)) / (2.0 * np.pi)))
        return DetBranch(winding, new_det)


def validate_symplectic_pair(Q: np.ndarray, P: np.ndarray, tol: float = INVARIANT_TOL):
    r1, r2 = symplectic_residuals(Q, P)
    if r1 > tol or r2 > tol:
        raise ValidationError(
            f"(Q, P) violates the symplectic relations: residuals ({r1:.2e}, {r2:.2e})"
        )
    d = Q.shape[0]
    if np.linalg.cond(Q) > 1e12:
        raise ValidationError("Q is numerically singular")
    # consequence of the two relations: Im(P Q^-1) = (Q Q*)^-1
    B = P @ np.linalg.inv(Q)
    gap = np.linalg.norm(B.imag - np.linalg.inv(Q @ Q.conj().T).real, ord="fro")
    if gap > 1e-8 * max(1.0, np.linalg.norm(B, ord="fro")):
        raise ValidationError(f"Im(P Q^-1) deviates from (Q Q*)^-1 by {gap:.2e}")


def symplectic_residuals(Q: np.ndarray, P: np.ndarray) -> tuple:
    """Frobenius norms of Q^T P - P^T Q and Q* P - P* Q - 2i I."""
    d = Q.shape[0]
    r1 = np.linalg.norm(Q.T @ P - P.T @ Q, ord="fro")
    r2 = np.linalg.norm(Q.conj().T @ P - P.conj().T @ Q - 2j * np.eye(d), ord="fro")
    return float(r1), float(r2)


@dataclass(frozen=True)
class PacketParams:
    """Parameter tuple of one Gaussian packet at fixed time."""

    q: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    S: float
    eps: float
    det_branch: DetBranch = None
    validate: bool = True

    def __post_init__(self):
        q = np.atleast_1d(np.asarray(self.q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(self.p, dtype=float)).copy()
        Q = np.atleast_2d(np.asarray(self.Q, dtype=complex)).copy()
        P = np.atleast_2d(np.asarray(self.P, dtype=complex)).copy()
        d = q.size
        if p.size != d or Q.shape != (d, d) or P.shape != (d, d):
            raise ValidationError("inconsistent shapes among q, p, Q, P")
        if self.eps <= 0:
            raise ValidationError(f"eps must be positive, got {self.eps}")
        if self.validate:
            validate_symplectic_pair(Q, P)
        branch = self.det_branch
        if branch is None:
            branch = DetBranch(0, complex(np.linalg.det(Q)))
        for a in (q, p, Q, P):
            a.setflags(write=False)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "det_branch", branch)

    @property
    def dim(self) -> int:
        return self.q.size

    def replace(self, **kw) -> "PacketParams":
        return replace(self, **kw)


def standard_packet(q, p, eps: float, S: float = 0.0) -> PacketParams:
    """Packet with the default width matrices Q = I, P = iI."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    d = q.size
    return PacketParams(q, p, np.eye(d, dtype=complex), 1j * np.eye(d, dtype=complex),
                        S, eps)


@dataclass(frozen=True)
class PacketTangent:
    """Time derivative of the packet parameters."""

    dq: np.ndarray
    dp: np.ndarray
    dQ: np.ndarray
    dP: np.ndarray
    dS: float


def v1_correction(q, Q, pot: PotentialModel) -> float:
    """Width-coupled correction potential tr(Q Q* D2V(q)) / 4."""
    value = 0.25 * np.trace(Q @ Q.conj().T @ pot.hessian(q))
    if abs(value.imag) > 1e-12 * max(1.0, abs(value.real)):
        raise ValidationError(f"correction potential has imaginary part {value.imag:.2e}")
    return float(value.real)


def grad_v1(q, Q, pot: PotentialModel) -> np.ndarray:
    """Gradient in q of the correction potential: (Q Q*)_jk D3_ijk V(q) / 4."""
    W = (Q @ Q.conj().T).real  # imaginary part drops against the symmetric tensor
    return 0.25 * np.einsum("jk,ijk->i", W, pot.third(q))


def rhs_classical(state: PacketParams, pot: PotentialModel) -> PacketTangent:
    """Parameter flow with the plain classical force."""
    hess = pot.hessian(state.q)
    return PacketTangent(
        dq=state.p.copy(),
        dp=-pot.gradient(state.q),
        dQ=state.P.copy(),
        dP=-hess @ state.Q,
        dS=float(0.5 * state.p @ state.p - pot.value(state.q)),
    )


def rhs_corrected(state: PacketParams, pot: PotentialModel) -> PacketTangent:
    """Parameter flow whose momentum force includes the eps-scaled correction."""
    base = rhs_classical(state, pot)
    force = base.dp - state.eps * grad_v1(state.q, state.Q, pot)
    return PacketTangent(base.dq, force, base.dQ, base.dP, base.dS)


def hamiltonian_classical(state: PacketParams, pot: PotentialModel) -> float:
    return float(0.5 * state.p @ state.p + pot.value(state.q))


def hamiltonian_eps(state: PacketParams, pot: PotentialModel) -> float:
    """Extended Hamiltonian p^2/2 + V(q) + (eps/4)(tr P*P + tr(Q Q* D2V))."""
    trP = float(np.trace(state.P.conj().T @ state.P).real)
    return (hamiltonian_classical(state, pot)
            + state.eps * (0.25 * trP + v1_correction(state.q, state.Q, pot)))


def semiclassical_angular_momentum(state: PacketParams) -> np.ndarray:
    """Skew matrix q <> p + (eps/2) Re(P Q* - Q P*), with (q<>p)_ij = q_j p_i - q_i p_j."""
    if state.dim < 2:
        raise UnsupportedDimensionError("angular momentum requires dimension >= 2")
    qp = np.multiply.outer(state.p, state.q) - np.multiply.outer(state.q, state.p)
    corr = 0.5 * state.eps * (state.P @ state.Q.conj().T - state.Q @ state.P.conj().T).real
    return qp + corr


def check_symplectic_invariants(state: PacketParams) -> tuple:
    return symplectic_residuals(state.Q, state.P)

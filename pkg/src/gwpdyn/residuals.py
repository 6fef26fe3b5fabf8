"""Residual fields of the packet evolution and their structural identities.

A packet whose parameters follow either flow satisfies a Schrodinger-type
equation up to an eps^(3/2)-scaled residual  zeta_n = alpha * phi_n, where
alpha is an explicit Taylor-remainder field of the potential.  For the
corrected flow alpha splits as alpha = alpha0 + sqrt(eps) * alpha1 with

    alpha0 = grad_q V1 . xi - (1/6) D3V(q) . xi^3,      xi = (x - q)/sqrt(eps),
    alpha1 = eps^-2 ( sum_{k<=3} D^k V(q).(x-q)^k / k! - V(x) ),

and alpha0 * phi_0 is exactly a combination of third excited states, which
is what buys the improved expectation-value rate.  This module evaluates
these fields on grids, assembles the third-excited coefficients, and checks
the identities (orthogonality, the momentum-shifted residual relation, the
Schrodinger-type equations, the raising-operator evolution law, and the
integral representation of the wave-function error).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft

from .basis import (BasisSet, apply_raising, apply_raising_dt, basis_time_derivatives,
                    eval_phi0, ladder_recurrence_eval, multi_indices,
                    multi_indices_up_to)
from .errors import ValidationError
from .grid import Grid
from .packet import PacketParams, grad_v1, rhs_classical, rhs_corrected
from .potentials import PotentialModel
from .wavefunction import WaveFunction, apply_momentum, inner_product, l2_norm


@dataclass(frozen=True)
class ResidualField:
    """zeta_n = alpha * phi_n sampled on a grid."""

    base: WaveFunction
    component: str  # "full", "alpha0_part" or "alpha1_part"
    eps: float


@dataclass(frozen=True)
class AlphaFields:
    """alpha and its split parts as grid fields (alpha = alpha0 + sqrt(eps) alpha1)."""

    alpha: np.ndarray
    alpha0: np.ndarray
    alpha1: np.ndarray


def _displacements(params: PacketParams, grid: Grid) -> list:
    xs = grid.meshes()
    return [xs[i] - params.q[i] for i in range(params.dim)]


def _taylor2(params: PacketParams, pot: PotentialModel, dx: list) -> np.ndarray:
    """Second-order Taylor polynomial of V around q, on the grid."""
    v0 = pot.value(params.q)
    g = pot.gradient(params.q)
    h = pot.hessian(params.q)
    d = params.dim
    out = np.full(dx[0].shape, v0, dtype=float)
    for i in range(d):
        out += g[i] * dx[i]
        for j in range(d):
            out += 0.5 * h[i, j] * dx[i] * dx[j]
    return out


def _third_contraction(T: np.ndarray, fields: list) -> np.ndarray:
    """T_ijk f_i f_j f_k over the grid."""
    d = len(fields)
    out = np.zeros(fields[0].shape)
    for i in range(d):
        for j in range(d):
            for k in range(d):
                if T[i, j, k] != 0.0:
                    out += T[i, j, k] * fields[i] * fields[j] * fields[k]
    return out


def alpha_fields(params: PacketParams, pot: PotentialModel, grid: Grid) -> AlphaFields:
    """alpha for the corrected flow, with its exact split parts."""
    eps = params.eps
    dx = _displacements(params, grid)
    xi = [d_ / np.sqrt(eps) for d_ in dx]
    g1 = grad_v1(params.q, params.Q, pot)
    T = pot.third(params.q)

    alpha0 = sum(g1[i] * xi[i] for i in range(params.dim))
    alpha0 = alpha0 - _third_contraction(T, xi) / 6.0

    v_grid = pot.value_grid(grid)
    taylor3 = _taylor2(params, pot, dx) + _third_contraction(T, dx) / 6.0
    alpha1 = (taylor3 - v_grid) / eps ** 2

    alpha = (sum(g1[i] * dx[i] for i in range(params.dim)) / np.sqrt(eps)
             + (_taylor2(params, pot, dx) - v_grid) / eps ** 1.5)
    return AlphaFields(alpha=np.asarray(alpha, dtype=complex),
                       alpha0=np.asarray(alpha0, dtype=complex),
                       alpha1=np.asarray(alpha1, dtype=complex))


def alpha_classical(params: PacketParams, pot: PotentialModel, grid: Grid) -> np.ndarray:
    """Residual prefactor for the classical flow (no correction-force term)."""
    eps = params.eps
    dx = _displacements(params, grid)
    return np.asarray((_taylor2(params, pot, dx) - pot.value_grid(grid)) / eps ** 1.5,
                      dtype=complex)


def zeta(params: PacketParams, pot: PotentialModel, n, grid: Grid,
         basis: BasisSet = None, variant: str = "corrected",
         component: str = "full") -> ResidualField:
    """zeta_n = alpha * phi_n.

    variant picks the flow ("corrected" or "classical_flow"); component
    selects the full alpha or one of its split parts.
    """
    n = tuple(int(v) for v in n)
    if basis is None:
        basis = ladder_recurrence_eval(params, sum(n), grid)
    phi_n = basis[n]
    if variant == "corrected":
        fields = alpha_fields(params, pot, grid)
        a = {"full": fields.alpha, "alpha0_part": fields.alpha0,
             "alpha1_part": fields.alpha1}[component]
    elif variant == "classical_flow":
        if component != "full":
            raise ValidationError("classical-flow residual has no split parts")
        a = alpha_classical(params, pot, grid)
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    return ResidualField(phi_n.with_values(a * phi_n.values), component, params.eps)


def beta_fields(params: PacketParams, pot: PotentialModel, grid: Grid) -> tuple:
    """Per-axis fields (beta_i, beta0_i, beta1_i), beta = -i sqrt(eps) d alpha/dx.

    beta0_i = -i ( grad_q V1_i - D3_ijk V(q) xi_j xi_k / 2 );
    beta1_i is the gradient analogue of the Taylor-difference expression.
    """
    eps = params.eps
    d = params.dim
    dx = _displacements(params, grid)
    xi = [d_ / np.sqrt(eps) for d_ in dx]
    g1 = grad_v1(params.q, params.Q, pot)
    T = pot.third(params.q)
    g = pot.gradient(params.q)
    h = pot.hessian(params.q)
    grad_grid = pot.gradient_grid(grid)

    beta0, beta1, beta = [], [], []
    for i in range(d):
        quad = np.zeros(grid.shape)
        for j in range(d):
            for k in range(d):
                if T[i, j, k] != 0.0:
                    quad += T[i, j, k] * xi[j] * xi[k]
        b0 = -1j * (g1[i] - 0.5 * quad)
        poly = np.full(grid.shape, g[i], dtype=float)
        for j in range(d):
            poly += h[i, j] * dx[j]
            for k in range(d):
                if T[i, j, k] != 0.0:
                    poly += 0.5 * T[i, j, k] * dx[j] * dx[k]
        b1 = -1j * (poly - grad_grid[i]) / eps ** 1.5
        beta0.append(np.asarray(b0, dtype=complex))
        beta1.append(np.asarray(b1, dtype=complex))
        beta.append(b0 + np.sqrt(eps) * b1)
    return beta, beta0, beta1


def spectral_gradient(field: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """d/dx_axis of a periodic grid field via FFT."""
    coeffs = sfft.fftn(field)
    coeffs *= 1j * grid.wavenumber_mesh(axis, zero_nyquist=True)
    return sfft.ifftn(coeffs)


def eta_zeta_identity_residual(params: PacketParams, pot: PotentialModel,
                               grid: Grid) -> float:
    """Max-over-axes L2 residual of the momentum-shifted residual identity.

    Checks eta_i zeta_0 = beta_i phi_0 + (P Q^-1)_ij xi_j zeta_0 with
    eta_i = (p_op - p)_i / sqrt(eps) applied spectrally.
    """
    eps = params.eps
    d = params.dim
    phi0 = eval_phi0(params, grid)
    af = alpha_fields(params, pot, grid)
    zeta0 = phi0.with_values(af.alpha * phi0.values)
    beta, _, _ = beta_fields(params, pot, grid)
    B = params.P @ np.linalg.inv(params.Q)
    xi = [d_ / np.sqrt(eps) for d_ in _displacements(params, grid)]
    worst = 0.0
    for i in range(d):
        pz = apply_momentum(zeta0, i, warn_tail=False)
        lhs = (pz.values - params.p[i] * zeta0.values) / np.sqrt(eps)
        rhs = beta[i] * phi0.values
        for j in range(d):
            rhs = rhs + B[i, j] * xi[j] * zeta0.values
        worst = max(worst, l2_norm(phi0.with_values(lhs - rhs)))
    return worst


def third_state_coefficients(q, Q, pot: PotentialModel) -> dict:
    """Coefficients c_n with alpha0 * phi_0 = sum_{|n|=3} c_n phi_n.

    The cubic residual part equals -(1/(12 sqrt 2)) M_lmn A*_l A*_m A*_n phi_0
    with M_lmn = T_ijk Q_il Q_jm Q_kn and T = D3V(q).  A triple raising
    yields sqrt(n!) phi_n, and 3!/n! ordered triples hit each multi-index,
    so c_n = -M * 6 / (12 sqrt 2 sqrt(n!)); for d = 1 this collapses to
    -T Q^3 / (4 sqrt 3).
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=complex))
    d = q.size
    T = pot.third(q)
    M = np.einsum("ijk,il,jm,kn->lmn", T, Q, Q, Q)
    coeffs = {}
    for n in multi_indices(d, 3):
        rep = []
        for axis, count in enumerate(n):
            rep.extend([axis] * count)
        l, m, k = rep
        n_factorial = 1
        for c in n:
            for f in range(2, c + 1):
                n_factorial *= f
        coeffs[n] = complex(-M[l, m, k] / (2.0 * np.sqrt(2.0 * n_factorial)))
    return coeffs


def reconstruct_from_third_states(params: PacketParams, pot: PotentialModel,
                                  grid: Grid, basis: BasisSet = None) -> float:
    """Relative L2 gap between alpha0 * phi_0 and its third-state expansion."""
    if basis is None:
        basis = ladder_recurrence_eval(params, 3, grid)
    af = alpha_fields(params, pot, grid)
    phi0 = basis[(0,) * params.dim]
    target = af.alpha0 * phi0.values
    combo = np.zeros(grid.shape, dtype=complex)
    for n, c in third_state_coefficients(params.q, params.Q, pot).items():
        combo += c * basis[n].values
    norm = l2_norm(phi0.with_values(target))
    if norm == 0.0:
        return l2_norm(phi0.with_values(combo))
    return l2_norm(phi0.with_values(target - combo)) / norm


def orthogonality_projections(params: PacketParams, pot: PotentialModel,
                              grid: Grid, basis: BasisSet = None) -> dict:
    """<alpha0 phi_0, phi_k> for all |k| <= 2 (all should vanish)."""
    if basis is None:
        basis = ladder_recurrence_eval(params, 2, grid)
    af = alpha_fields(params, pot, grid)
    phi0 = basis[(0,) * params.dim]
    field = phi0.with_values(af.alpha0 * phi0.values)
    return {k: inner_product(field, basis[k])
            for k in multi_indices_up_to(params.dim, 2)}


def classical_first_excited_projection(params: PacketParams, pot: PotentialModel,
                                      grid: Grid, basis: BasisSet = None) -> tuple:
    """(projections <zeta0_cl, phi_{e_j}>, their eps -> 0 limits) per axis.

    The limit is -(1/sqrt 2) (Q* grad_q V1)_j, the term that the corrected
    flow cancels exactly.
    """
    if basis is None:
        basis = ladder_recurrence_eval(params, 1, grid)
    d = params.dim
    phi0 = basis[(0,) * d]
    field = phi0.with_values(alpha_classical(params, pot, grid) * phi0.values)
    proj = np.empty(d, dtype=complex)
    for j in range(d):
        e = [0] * d
        e[j] = 1
        proj[j] = inner_product(field, basis[tuple(e)])
    g1 = grad_v1(params.q, params.Q, pot)
    limit = -(params.Q.conj().T @ g1) / np.sqrt(2.0)
    return proj, limit


def apply_hamiltonian(f: WaveFunction, pot: PotentialModel) -> WaveFunction:
    """(kinetic + potential) f with the kinetic part applied spectrally."""
    coeffs = sfft.fftn(f.values)
    coeffs *= 0.5 * f.eps ** 2 * f.grid.kinetic_k2()
    kinetic = sfft.ifftn(coeffs)
    return f.with_values(kinetic + pot.value_grid(f.grid) * f.values)


def schrodinger_residual(params: PacketParams, pot: PotentialModel, grid: Grid,
                         n=None, variant: str = "corrected") -> tuple:
    """(absolute, relative) residual of the Schrodinger-type equation for phi_n.

    Evaluates || i eps d/dt phi_n - H phi_n - eps^(3/2) alpha phi_n || with
    the time derivative assembled analytically from the flow's right-hand
    side; the relative figure divides by || H phi_n ||.
    """
    d = params.dim
    n = (0,) * d if n is None else tuple(int(v) for v in n)
    basis = ladder_recurrence_eval(params, sum(n), grid)
    if variant == "corrected":
        tangent = rhs_corrected(params, pot)
        a = alpha_fields(params, pot, grid).alpha
    elif variant == "classical_flow":
        tangent = rhs_classical(params, pot)
        a = alpha_classical(params, pot, grid)
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    dt_phi = basis_time_derivatives(params, tangent, basis)
    phi_n = basis[n]
    lhs = 1j * params.eps * dt_phi[n].values
    rhs_field = apply_hamiltonian(phi_n, pot).values + params.eps ** 1.5 * a * phi_n.values
    resid = l2_norm(phi_n.with_values(lhs - rhs_field))
    scale = l2_norm(apply_hamiltonian(phi_n, pot))
    return resid, resid / scale


def raising_evolution_residual(params: PacketParams, pot: PotentialModel,
                               f: WaveFunction) -> float:
    """Residual of the raising-operator evolution law applied to a test state.

    Checks (i eps dA*/dt + [A*, H]) f = (eps^2 / sqrt 2) (Q* grad_x alpha) f
    along the corrected flow, returning the worst component's L2 norm
    normalized by ||f||.
    """
    grid = f.grid
    d = params.dim
    eps = params.eps
    tangent = rhs_corrected(params, pot)
    a_dt = apply_raising_dt(params, tangent, f)
    hf = apply_hamiltonian(f, pot)
    a_on_hf = apply_raising(params, hf)
    a_f = apply_raising(params, f)

    dx = _displacements(params, grid)
    g1 = grad_v1(params.q, params.Q, pot)
    g = pot.gradient(params.q)
    h = pot.hessian(params.q)
    grad_grid = pot.gradient_grid(grid)
    dalpha = []
    for i in range(d):
        poly = np.full(grid.shape, g[i], dtype=float)
        for j in range(d):
            poly += h[i, j] * dx[j]
        dalpha.append(g1[i] / np.sqrt(eps) + (poly - grad_grid[i]) / eps ** 1.5)

    fnorm = l2_norm(f)
    worst = 0.0
    for j in range(d):
        lhs = (1j * eps * a_dt[j].values + a_on_hf[j].values
               - apply_hamiltonian(a_f[j], pot).values)
        rhs_field = np.zeros(grid.shape, dtype=complex)
        for c in range(d):
            rhs_field += np.conj(params.Q[c, j]) * dalpha[c]
        rhs_field = eps ** 2 / np.sqrt(2.0) * rhs_field * f.values
        worst = max(worst, l2_norm(f.with_values(lhs - rhs_field)))
    return worst / fnorm


def magic_formula_residual(params0: PacketParams, pot: PotentialModel, grid: Grid,
                           t: float, n=None, n_panels: int = 8,
                           solver_dt: float = None) -> float:
    """Relative gap in the integral representation of the wave-function error.

    Checks  psi(t) - phi_n(t) = i sqrt(eps) * int_0^t U(t - s) zeta_n(s) ds
    at a single small time t by composite Simpson quadrature (U is the exact
    propagator, realized by the reference solver).  The quadrature error
    scales like (h / eps)^4 because the integrand oscillates on the eps
    time scale, so t should be of order eps.
    """
    from . import solver as _solver

    if n_panels % 2 != 0:
        raise ValidationError("composite Simpson needs an even panel count")
    d = params0.dim
    n = (0,) * d if n is None else tuple(int(v) for v in n)
    eps = params0.eps
    dt_ode = t / (64.0 * n_panels)
    traj = _integrate_corrected(params0, pot, t, dt_ode, n_panels)
    if solver_dt is None:
        solver_dt = t / 256.0

    def _phi(params_t):
        if sum(n) == 0:
            return eval_phi0(params_t, grid)
        return ladder_recurrence_eval(params_t, sum(n), grid)[n]

    def _zeta_at(params_t):
        phi = _phi(params_t)
        a = alpha_fields(params_t, pot, grid).alpha
        return phi.with_values(a * phi.values)

    def _propagate_to_t(wf, s):
        if s == t:
            return wf
        cfg = _solver.SolverConfig(grid=grid, dt=min(solver_dt, t - s), t_end=t - s,
                                   snapshot_times=(t - s,), refine=False)
        return _solver.propagate(wf, pot, cfg)[-1][1]

    nodes = np.linspace(0.0, t, n_panels + 1)
    weights = np.ones(n_panels + 1)
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    weights *= t / (3.0 * n_panels)
    acc = np.zeros(grid.shape, dtype=complex)
    for node, w in zip(nodes, weights):
        params_s = traj.params_at(traj.sample_index(node))
        acc += w * _propagate_to_t(_zeta_at(params_s), node).values
    integral = 1j * np.sqrt(eps) * acc

    phi_t = _phi(traj.params_at(traj.sample_index(t)))
    psi_t = _propagate_to_t(_phi(params0), 0.0)
    z_true = psi_t.values - phi_t.values
    scale = l2_norm(phi_t.with_values(z_true))
    return l2_norm(phi_t.with_values(z_true - integral)) / scale


def _integrate_corrected(params0, pot, t_end, dt, n_store):
    from .dynamics import IntegratorConfig, integrate

    n_steps = int(round(t_end / dt))
    store = max(1, n_steps // n_store)
    while n_steps % store != 0:
        store += 1
    cfg = IntegratorConfig(dt=t_end / n_steps, t_end=t_end)
    return integrate(params0, pot, cfg, flow="corrected", store_every=store)


def wavefunction_error(traj, pot: PotentialModel, snapshots: list, n=None) -> tuple:
    """Time series ||psi(t) - phi_n(t)|| against reference snapshots.

    snapshots: list of (t, WaveFunction) starting from phi_n(0); the packet
    parameters at each snapshot time are read from the trajectory.
    """
    d = traj.dim
    n = (0,) * d if n is None else tuple(int(v) for v in n)
    times, norms = [], []
    for t, psi in snapshots:
        params_t = traj.params_at(traj.sample_index(t))
        if sum(n) == 0:
            phi = eval_phi0(params_t, psi.grid)
        else:
            phi = ladder_recurrence_eval(params_t, sum(n), psi.grid)[n]
        times.append(t)
        norms.append(l2_norm(psi.with_values(psi.values - phi.values)))
    return np.array(times), np.array(norms)

"""Time integration of the two parameter flows.

The default Stormer-Verlet scheme exploits the separable structure of both
flows (q' = p and Q' = P, with forces depending only on (q, Q)); it
preserves the symplectic matrix relations to roundoff and keeps the
extended Hamiltonian bounded over long runs.  RK4 is kept as a
cross-check.  The hot loops live in a compiled extension when available,
with a pure-numpy twin selected at import time otherwise.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import InvariantDriftError, ValidationError
from .packet import DetBranch, PacketParams, symplectic_residuals
from .packet import hamiltonian_classical, hamiltonian_eps
from .potentials import PotentialModel


def _load_backend():
    if os.environ.get("GWPDYN_DISABLE_EXT", "") not in ("", "0"):
        from . import _flows_py
        return _flows_py, "python"
    try:
        from . import _kernels
        return _kernels, "compiled"
    except ImportError:
        from . import _flows_py
        return _flows_py, "python"


_BACKEND, _BACKEND_NAME = _load_backend()


def backend_name() -> str:
    """Which stepper implementation is active ("compiled" or "python")."""
    return _BACKEND_NAME


def get_backend(name: str):
    """Fetch a specific stepper implementation (for benchmarks/tests)."""
    if name == "python":
        from . import _flows_py
        return _flows_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValidationError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_end: float
    scheme: str = "stormer_verlet"
    refine_until: float = 0.01

    def __post_init__(self):
        if self.scheme not in ("stormer_verlet", "rk4"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")
        if self.dt <= 0 or self.t_end <= 0 or self.dt > self.t_end * (1 + 1e-12):
            raise ValidationError("need 0 < dt <= t_end")
        if not 0.0 < self.refine_until < 1.0:
            raise ValidationError("refine_until must lie in (0, 1)")


@dataclass(frozen=True)
class Trajectory:
    """Stored samples of one integrated parameter flow."""

    eps: float
    times: np.ndarray
    q: np.ndarray        # (n, d)
    p: np.ndarray        # (n, d)
    Q: np.ndarray        # (n, d, d) complex
    P: np.ndarray        # (n, d, d) complex
    S: np.ndarray        # (n,)
    theta: np.ndarray    # (n,) continuous arg det Q
    flow: str

    @property
    def n_samples(self) -> int:
        return self.times.size

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    def params_at(self, i: int) -> PacketParams:
        branch = DetBranch(
            winding=int(np.round((self.theta[i] - np.angle(np.linalg.det(self.Q[i])))
                                 / (2.0 * np.pi))),
            prev_det=complex(np.linalg.det(self.Q[i])),
        )
        return PacketParams(self.q[i], self.p[i], self.Q[i], self.P[i],
                            float(self.S[i]), self.eps, det_branch=branch,
                            validate=False)

    def final(self) -> PacketParams:
        return self.params_at(self.n_samples - 1)

    def sample_index(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValidationError(f"time {t} is not a stored sample")
        return i


def _n_steps(cfg: IntegratorConfig) -> int:
    n = int(round(cfg.t_end / cfg.dt))
    if abs(n * cfg.dt - cfg.t_end) > 1e-9 * cfg.t_end:
        raise ValidationError(f"t_end={cfg.t_end} is not an integer multiple of dt={cfg.dt}")
    return max(n, 1)


def integrate(state: PacketParams, pot: PotentialModel, cfg: IntegratorConfig,
              flow: str = "corrected", store_every: int = None,
              invariant_tol: float = 1e-8) -> Trajectory:
    """Integrate one flow ("classical" or "corrected") over [0, t_end].

    Samples are stored every `store_every` steps (default: close to 1000
    stored samples).  The symplectic residuals are checked at the final
    state; drift beyond `invariant_tol` raises.
    """
    if flow not in ("classical", "corrected"):
        raise ValidationError(f"unknown flow {flow!r}")
    if pot.dim != state.dim:
        raise ValidationError("potential and packet dimensions disagree")
    n_steps = _n_steps(cfg)
    if store_every is None:
        store_every = max(1, n_steps // 1000)
        while n_steps % store_every != 0:
            store_every += 1
    if n_steps % store_every != 0:
        raise ValidationError(f"store_every={store_every} must divide n_steps={n_steps}")
    n_out = n_steps // store_every + 1
    d = state.dim

    out_q = np.empty((n_out, d))
    out_p = np.empty((n_out, d))
    out_Q = np.empty((n_out, d, d), dtype=complex)
    out_P = np.empty((n_out, d, d), dtype=complex)
    out_S = np.empty(n_out)
    out_theta = np.empty(n_out)

    code, pp, offset = pot.kernel_spec()
    runner = _BACKEND.verlet_flow if cfg.scheme == "stormer_verlet" else _BACKEND.rk4_flow
    runner(code, pp, offset, state.eps, 1 if flow == "corrected" else 0,
           state.q.copy(), state.p.copy(), state.Q.copy(), state.P.copy(),
           float(state.S), state.det_branch.angle, state.det_branch.prev_det,
           cfg.dt, n_steps, store_every,
           out_q, out_p, out_Q, out_P, out_S, out_theta)

    times = cfg.dt * store_every * np.arange(n_out)
    traj = Trajectory(state.eps, times, out_q, out_p, out_Q, out_P, out_S,
                      out_theta, flow)

    r1, r2 = symplectic_residuals(out_Q[-1], out_P[-1])
    if max(r1, r2) > invariant_tol:
        raise InvariantDriftError(
            f"symplectic residuals drifted to ({r1:.2e}, {r2:.2e}) > {invariant_tol:.0e}")
    return traj


def step(state: PacketParams, pot: PotentialModel, dt: float,
         flow: str = "corrected", scheme: str = "stormer_verlet") -> PacketParams:
    """Advance one time step and return the new parameter tuple."""
    cfg = IntegratorConfig(dt=dt, t_end=dt, scheme=scheme)
    traj = integrate(state, pot, cfg, flow=flow, store_every=1)
    return traj.final()


def measure_order(state: PacketParams, pot: PotentialModel, cfg: IntegratorConfig,
                  flow: str = "corrected") -> float:
    """Empirical convergence order from a dt / dt/2 / dt/4 halving triple."""
    def endpoint(dt):
        c = IntegratorConfig(dt=dt, t_end=cfg.t_end, scheme=cfg.scheme)
        f = integrate(state, pot, c, flow=flow).final()
        return np.concatenate([f.q, f.p, [f.S]])

    z1 = endpoint(cfg.dt)
    z2 = endpoint(cfg.dt / 2.0)
    z4 = endpoint(cfg.dt / 4.0)
    e12 = float(np.max(np.abs(z1 - z2)))
    e24 = float(np.max(np.abs(z2 - z4)))
    if e24 == 0.0:
        return np.inf
    return float(np.log2(e12 / e24))


def halving_error_estimate(state: PacketParams, pot: PotentialModel,
                           cfg: IntegratorConfig, flow: str) -> float:
    """Richardson estimate of the endpoint (q, p) error at step size dt/2."""
    f1 = integrate(state, pot, cfg, flow=flow).final()
    cfg2 = IntegratorConfig(dt=cfg.dt / 2.0, t_end=cfg.t_end, scheme=cfg.scheme)
    f2 = integrate(state, pot, cfg2, flow=flow).final()
    diff = max(float(np.max(np.abs(f1.q - f2.q))), float(np.max(np.abs(f1.p - f2.p))))
    return diff / 3.0


TRAJECTORY_CSV_COLUMNS = ("t", "q", "p", "ReQ", "ImQ", "ReP", "ImP",
                          "S", "H_eps", "H_classical", "r1", "r2")


def write_trajectory_csv(traj: Trajectory, pot: PotentialModel, path: str):
    """Dump stored samples with per-row Hamiltonians and invariant residuals.

    Matrix columns are row-major: ReQ_ij appears as ReQ_{i}{j}.
    """
    d = traj.dim
    header = ["t"]
    header += [f"q_{i}" for i in range(d)]
    header += [f"p_{i}" for i in range(d)]
    for part, name in (("ReQ", "Q"), ("ImQ", "Q"), ("ReP", "P"), ("ImP", "P")):
        header += [f"{part}_{i}{j}" for i in range(d) for j in range(d)]
    header += ["S", "H_eps", "H_classical", "r1", "r2"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(traj.n_samples):
            st = traj.params_at(i)
            r1, r2 = symplectic_residuals(st.Q, st.P)
            row = [traj.times[i], *st.q, *st.p,
                   *st.Q.real.ravel(), *st.Q.imag.ravel(),
                   *st.P.real.ravel(), *st.P.imag.ravel(),
                   st.S, hamiltonian_eps(st, pot), hamiltonian_classical(st, pot),
                   r1, r2]
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

"""Grid-based reference propagation of the semiclassical Schrodinger equation.

Strang splitting on a periodic grid: half a potential phase in physical
space, a full kinetic phase in Fourier space, half a potential phase again.
Each factor is unimodular, so the propagation is unitary to roundoff and
time-reversible.  Accuracy is second order in dt; :func:`self_refine`
drives dt (halving) and the grid (doubling) until tracked expectation
values stop moving, reporting the achieved tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.fft as sfft

from .errors import GridError, InstabilityError, RefinementBudgetError, ValidationError
from .grid import Grid
from .potentials import PotentialModel
from .wavefunction import WaveFunction, expectation, l2_norm

NORM_DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    dt: float
    t_end: float
    snapshot_times: tuple
    refine: bool = True
    observable_tol: float = 1e-8
    max_refinements: int = 6

    def __post_init__(self):
        times = tuple(float(t) for t in self.snapshot_times)
        if sorted(times) != list(times) or len(set(times)) != len(times):
            raise ValidationError("snapshot_times must be strictly increasing")
        if times and (times[0] < 0.0 or times[-1] > self.t_end * (1 + 1e-12)):
            raise ValidationError("snapshot_times must lie within [0, t_end]")
        if self.dt <= 0:
            raise ValidationError("dt must be positive")
        gaps = np.diff([0.0] + list(times))
        positive = gaps[gaps > 1e-15]
        if positive.size and self.dt > positive.min() * (1 + 1e-12):
            raise ValidationError("dt must not exceed the smallest snapshot spacing")
        object.__setattr__(self, "snapshot_times", times)


def _phases(grid: Grid, pot: PotentialModel, dt: float, eps: float) -> tuple:
    v = pot.value_grid(grid)
    half = np.exp(-0.5j * dt / eps * v)
    kinetic = np.exp(-0.5j * eps * dt * grid.kinetic_k2())
    return half, kinetic


def strang_step(psi: WaveFunction, pot: PotentialModel, dt: float,
                eps: float = None) -> WaveFunction:
    """One Strang splitting step (half potential, kinetic, half potential)."""
    eps = psi.eps if eps is None else eps
    half, kinetic = _phases(psi.grid, pot, dt, eps)
    values = half * psi.values
    values = sfft.ifftn(kinetic * sfft.fftn(values))
    values *= half
    return psi.with_values(values)


def _run_interval(values: np.ndarray, half: np.ndarray, kinetic: np.ndarray,
                  n_steps: int) -> np.ndarray:
    for _ in range(n_steps):
        values *= half
        values = sfft.ifftn(kinetic * sfft.fftn(values))
        values *= half
    return values


def propagate(psi0: WaveFunction, pot: PotentialModel, cfg: SolverConfig) -> list:
    """Propagate and return [(t, WaveFunction)] at the requested snapshot times.

    Within each snapshot interval the step is shrunk to an integer division
    of the interval (never enlarged), keeping snapshots exactly on the step
    lattice.  Aborts if the norm drifts beyond 1e-9 relative or values stop
    being finite.
    """
    if psi0.grid != cfg.grid:
        raise ValidationError("initial state does not live on the solver grid")
    norm0 = l2_norm(psi0)
    if norm0 == 0.0:
        raise ValidationError("initial state must be nonzero")
    values = psi0.values.copy()
    snapshots = []
    t_prev = 0.0
    phase_cache = {}
    times = cfg.snapshot_times
    for t in times:
        if t == 0.0:
            snapshots.append((0.0, psi0))
            continue
        span = t - t_prev
        n_steps = max(1, int(np.ceil(span / cfg.dt - 1e-12)))
        sub_dt = span / n_steps
        key = round(sub_dt, 15)
        if key not in phase_cache:
            phase_cache[key] = _phases(cfg.grid, pot, sub_dt, psi0.eps)
        half, kinetic = phase_cache[key]
        values = _run_interval(values, half, kinetic, n_steps)
        if not np.all(np.isfinite(values.view(float))):
            raise InstabilityError(f"non-finite values at t={t}")
        wf = WaveFunction(cfg.grid, values.copy(), psi0.eps)
        drift = abs(l2_norm(wf) / norm0 - 1.0)
        if drift > NORM_DRIFT_TOL:
            raise InstabilityError(
                f"norm drifted by {drift:.2e} (> {NORM_DRIFT_TOL:.0e}) at t={t}")
        snapshots.append((t, wf))
        t_prev = t
    return snapshots


def _tracked_observables(snapshots: list, pot: PotentialModel) -> np.ndarray:
    rows = []
    for _, psi in snapshots:
        d = psi.grid.dim
        row = [expectation("position", psi, axis=i) for i in range(d)]
        row += [expectation("momentum", psi, axis=i) for i in range(d)]
        row.append(expectation("energy", psi, pot=pot))
        rows.append(row)
    return np.array(rows)


def self_refine(params0, pot: PotentialModel, cfg: SolverConfig,
                make_initial=None) -> tuple:
    """Refine (dt, grid) until tracked expectations settle.

    Each round halves dt and doubles points_per_axis, re-evaluating the
    initial Gaussian on the finer grid, until every tracked expectation
    value (positions, momenta, energy at all snapshots) changes by less
    than cfg.observable_tol between consecutive rounds.  Returns
    (snapshots, achieved_tol, final_cfg).  Raises RefinementBudgetError
    when the iteration or memory budget runs out first.
    """
    from .basis import eval_phi0

    if make_initial is None:
        def make_initial(grid):
            return eval_phi0(params0, grid)

    current = cfg
    snapshots = propagate(make_initial(cfg.grid), pot, current)
    if not cfg.refine:
        return snapshots, np.inf, current
    observed = _tracked_observables(snapshots, pot)
    achieved = np.inf
    for _ in range(cfg.max_refinements):
        try:
            finer_grid = current.grid.refined()
        except GridError as exc:
            raise RefinementBudgetError(achieved, str(exc)) from exc
        finer = replace(current, grid=finer_grid, dt=current.dt / 2.0)
        snapshots = propagate(make_initial(finer.grid), pot, finer)
        new_observed = _tracked_observables(snapshots, pot)
        achieved = float(np.max(np.abs(new_observed - observed)))
        observed = new_observed
        current = finer
        if achieved < cfg.observable_tol:
            return snapshots, achieved, current
    raise RefinementBudgetError(achieved,
                                f"no convergence within {cfg.max_refinements} refinements")


SNAPSHOT_BINARY_DOC = (
    "NumPy .npz archive, little-endian: times float64 (n,), values complex128 "
    "(n, N, ..., N), grid_center float64 (d,), grid_half_width float64 (d,), "
    "points_per_axis int64 scalar, eps float64 scalar"
)


def save_snapshots(path: str, snapshots: list, fmt: str = "npz"):
    """Persist snapshots (binary .npz or plain CSV of flattened samples)."""
    times = np.array([t for t, _ in snapshots], dtype="<f8")
    grid = snapshots[0][1].grid
    eps = snapshots[0][1].eps
    values = np.stack([wf.values for _, wf in snapshots]).astype("<c16")
    if fmt == "npz":
        np.savez(path, times=times, values=values,
                 grid_center=grid.center.astype("<f8"),
                 grid_half_width=grid.half_width.astype("<f8"),
                 points_per_axis=np.int64(grid.points_per_axis),
                 eps=np.float64(eps))
    elif fmt == "csv":
        with open(path, "w") as fh:
            fh.write("t,flat_index,re,im\n")
            for t, wf in snapshots:
                flat = wf.values.ravel()
                for idx in range(flat.size):
                    fh.write(f"{t:.17g},{idx},{flat[idx].real:.17g},{flat[idx].imag:.17g}\n")
    else:
        raise ValidationError(f"unknown snapshot format {fmt!r}")


def load_snapshots(path: str) -> list:
    data = np.load(path)
    grid = Grid(data["grid_center"], data["grid_half_width"],
                int(data["points_per_axis"]))
    eps = float(data["eps"])
    return [(float(t), WaveFunction(grid, v, eps))
            for t, v in zip(data["times"], data["values"])]

"""Experiment orchestration: run both parameter flows against the reference
solver, measure expectation-value errors, sweep the semiclassical parameter,
fit log-log convergence slopes, and emit reproducible reports.

The error metric is the maximum over snapshot times of the per-component
gaps |q_i(t) - <x_i>(t)| and |p_i(t) - <p_i>(t)|, read off at a default
horizon t_end = 1.  Packet-flow step sizes are refined by step halving
until the integrator error is a stated fraction of the smallest measured
error, so the fitted rates are not polluted by time discretization.
"""
from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import dynamics, potentials, solver
from .basis import eval_phi0
from .dynamics import IntegratorConfig, Trajectory
from .errors import InsufficientDataError, ValidationError
from .grid import Grid, suggest_grid
from .packet import (PacketParams, hamiltonian_classical, hamiltonian_eps)
from .potentials import PotentialModel
from .solver import SolverConfig
from .wavefunction import (apply_momentum, apply_position, expectation,
                           inner_product, l2_norm)

ERROR_FLOOR = 1e-13
RELIABLE_R2 = 0.98


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description (see README for the JSON schema)."""

    dimension: int
    potential: dict
    q0: tuple
    p0: tuple
    Q0: tuple          # row-major complex entries
    P0: tuple
    S0: float
    eps_list: tuple
    t_end: float
    n_snapshots: int
    packet_dt: float | str = "auto"
    packet_scheme: str = "stormer_verlet"
    ode_error_fraction: float = 0.01
    solver_dt: float | str = "auto"
    solver_points: int | str = "auto"
    refine: bool = True
    observable_tol: float = 1e-8
    max_refinements: int = 6
    output_dir: str = "out"
    seed_label: str = "default"

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(e <= 0 for e in eps):
            raise ValidationError("eps_list must contain positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValidationError("eps_list must be strictly decreasing")
        if self.n_snapshots < 2:
            raise ValidationError("need at least two snapshots (t=0 and t_end)")
        if self.t_end <= 0:
            raise ValidationError("t_end must be positive")
        d = self.dimension
        if len(self.q0) != d or len(self.p0) != d:
            raise ValidationError("q0/p0 lengths disagree with dimension")
        if len(self.Q0) != d * d or len(self.P0) != d * d:
            raise ValidationError("Q0/P0 must have d*d row-major entries")
        # symplectic admissibility of the initial matrices
        self.initial_packet(eps[0])

    def matrices(self) -> tuple:
        d = self.dimension
        Q = np.array([complex(v[0], v[1]) for v in self.Q0]).reshape(d, d)
        P = np.array([complex(v[0], v[1]) for v in self.P0]).reshape(d, d)
        return Q, P

    def initial_packet(self, eps: float) -> PacketParams:
        Q, P = self.matrices()
        return PacketParams(np.array(self.q0), np.array(self.p0), Q, P,
                            float(self.S0), eps)

    def potential_model(self) -> PotentialModel:
        return potentials.from_config(self.potential, self.dimension)

    def snapshot_times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_snapshots)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "potential": dict(self.potential),
            "initial": {
                "q": list(self.q0),
                "p": list(self.p0),
                "Q": [list(v) for v in self.Q0],
                "P": [list(v) for v in self.P0],
                "S": self.S0,
            },
            "eps_list": list(self.eps_list),
            "t_end": self.t_end,
            "n_snapshots": self.n_snapshots,
            "integrator": {
                "dt": self.packet_dt,
                "scheme": self.packet_scheme,
                "ode_error_fraction": self.ode_error_fraction,
            },
            "solver": {
                "dt": self.solver_dt,
                "points_per_axis": self.solver_points,
                "refine": self.refine,
                "observable_tol": self.observable_tol,
                "max_refinements": self.max_refinements,
            },
            "output_dir": self.output_dir,
            "seed_label": self.seed_label,
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            init = raw["initial"]
            integ = raw.get("integrator", {})
            solv = raw.get("solver", {})
            return cls(
                dimension=int(raw["dimension"]),
                potential=dict(raw["potential"]),
                q0=tuple(float(v) for v in init["q"]),
                p0=tuple(float(v) for v in init["p"]),
                Q0=tuple(tuple(float(x) for x in v) for v in init["Q"]),
                P0=tuple(tuple(float(x) for x in v) for v in init["P"]),
                S0=float(init.get("S", 0.0)),
                eps_list=tuple(float(v) for v in raw["eps_list"]),
                t_end=float(raw["t_end"]),
                n_snapshots=int(raw.get("n_snapshots", 11)),
                packet_dt=integ.get("dt", "auto"),
                packet_scheme=integ.get("scheme", "stormer_verlet"),
                ode_error_fraction=float(integ.get("ode_error_fraction", 0.01)),
                solver_dt=solv.get("dt", "auto"),
                solver_points=solv.get("points_per_axis", "auto"),
                refine=bool(solv.get("refine", True)),
                observable_tol=float(solv.get("observable_tol", 1e-8)),
                max_refinements=int(solv.get("max_refinements", 6)),
                output_dir=str(raw.get("output_dir", "out")),
                seed_label=str(raw.get("seed_label", "default")),
            )
        except KeyError as exc:
            raise ValidationError(f"config is missing required key {exc}") from exc

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def default_torsional_config(**overrides) -> ExperimentConfig:
    """The canonical d=1 torsional experiment (the acceptance workload)."""
    raw = {
        "dimension": 1,
        "potential": {"kind": "torsional"},
        "initial": {"q": [1.0], "p": [0.0], "Q": [[1.0, 0.0]], "P": [[0.0, 1.0]],
                    "S": 0.0},
        "eps_list": [2.0 ** -k for k in range(4, 10)],
        "t_end": 1.0,
        "n_snapshots": 11,
        "seed_label": "torsional-d1",
    }
    raw.update(overrides)
    return ExperimentConfig.from_dict(raw)


# ---------------------------------------------------------------------------
# single-eps comparison

@dataclass
class CompareResult:
    """All measured series for one eps: flows, reference, gaps, errors."""

    eps: float
    times: np.ndarray
    exp_x: np.ndarray       # (n, d) reference <x>
    exp_p: np.ndarray       # (n, d) reference <p>
    exp_H: np.ndarray       # (n,)   reference <H>
    q_classical: np.ndarray
    p_classical: np.ndarray
    q_corrected: np.ndarray
    p_corrected: np.ndarray
    err_x_classical: np.ndarray
    err_p_classical: np.ndarray
    err_x_corrected: np.ndarray
    err_p_corrected: np.ndarray
    hgap_classical: np.ndarray
    hgap_corrected: np.ndarray
    wferr_classical: np.ndarray
    wferr_corrected: np.ndarray
    achieved_tol: float
    ode_error_estimate: float
    packet_dt: float
    grid: Grid
    traj_classical: Trajectory = None
    traj_corrected: Trajectory = None
    snapshots: list = None

    def max_errors(self) -> dict:
        return {
            "err_x_classical": self.err_x_classical.max(axis=0),
            "err_p_classical": self.err_p_classical.max(axis=0),
            "err_x_corrected": self.err_x_corrected.max(axis=0),
            "err_p_corrected": self.err_p_corrected.max(axis=0),
            "hgap_classical": np.array([np.abs(self.hgap_classical).max()]),
            "hgap_corrected": np.array([np.abs(self.hgap_corrected).max()]),
            "hgap_fluct_classical": np.array(
                [np.abs(self.hgap_classical - self.hgap_classical[0]).max()]),
            "hgap_fluct_corrected": np.array(
                [np.abs(self.hgap_corrected - self.hgap_corrected[0]).max()]),
            "wferr_classical": np.array([self.wferr_classical.max()]),
            "wferr_corrected": np.array([self.wferr_corrected.max()]),
        }


def _packet_steps(cfg: ExperimentConfig, eps: float) -> tuple:
    """(dt, store_every) landing stored samples exactly on snapshot times."""
    interval = cfg.t_end / (cfg.n_snapshots - 1)
    target = 5e-4 if cfg.packet_dt == "auto" else float(cfg.packet_dt)
    per_interval = max(1, int(np.ceil(interval / target - 1e-12)))
    return interval / per_interval, per_interval


def _integrate_flows(cfg: ExperimentConfig, state: PacketParams, pot, dt, store_every):
    icfg = IntegratorConfig(dt=dt, t_end=cfg.t_end, scheme=cfg.packet_scheme)
    cl = dynamics.integrate(state, pot, icfg, flow="classical", store_every=store_every)
    co = dynamics.integrate(state, pot, icfg, flow="corrected", store_every=store_every)
    return cl, co


def _solver_grid(cfg: ExperimentConfig, eps: float, trajs: list,
                 state0: PacketParams) -> Grid:
    qs = np.vstack([t.q for t in trajs])
    ps = np.vstack([t.p for t in trajs])
    Qs = np.vstack([t.Q for t in trajs])
    Ps = np.vstack([t.P for t in trajs])
    grid = suggest_grid(qs, ps, Qs, Ps, eps)
    if cfg.solver_points != "auto":
        return Grid(grid.center, grid.half_width, int(cfg.solver_points))
    # the spacing heuristic can be marginal for strongly tilted packets;
    # double N until the sampled packet is comfortably band-limited
    from .basis import RESOLUTION_TAIL_TOL
    from .wavefunction import spectral_tail_mass
    for _ in range(4):
        probe = eval_phi0(state0, grid, check_resolution=False)
        if spectral_tail_mass(probe) <= 0.1 * RESOLUTION_TAIL_TOL:
            break
        grid = grid.refined()
    return grid


def run_compare(cfg: ExperimentConfig, eps: float, refine: bool = None,
                keep_fields: bool = True) -> CompareResult:
    """Evolve both flows and the reference from one initial Gaussian.

    Returns the per-snapshot expectation values, parameter predictions,
    absolute errors, Hamiltonian gaps and wave-function error norms.
    """
    refine = cfg.refine if refine is None else refine
    pot = cfg.potential_model()
    state0 = cfg.initial_packet(eps)
    times = cfg.snapshot_times()

    dt, store_every = _packet_steps(cfg, eps)
    traj_cl, traj_co = _integrate_flows(cfg, state0, pot, dt, store_every)

    grid = _solver_grid(cfg, eps, [traj_cl, traj_co], state0)
    if cfg.solver_dt == "auto":
        # each refinement round doubles the grid as well as halving dt, so
        # starting near the step size the tolerance will demand saves rounds
        base_dt = min(eps / 40.0, times[1] - times[0])
    else:
        base_dt = float(cfg.solver_dt)
    scfg = SolverConfig(grid=grid, dt=base_dt, t_end=cfg.t_end,
                        snapshot_times=tuple(times), refine=refine,
                        observable_tol=cfg.observable_tol,
                        max_refinements=cfg.max_refinements)
    if refine:
        snapshots, achieved, scfg = solver.self_refine(state0, pot, scfg)
    else:
        snapshots = solver.propagate(eval_phi0(state0, grid), pot, scfg)
        achieved = float("nan")

    n = times.size
    d = cfg.dimension
    exp_x = np.empty((n, d))
    exp_p = np.empty((n, d))
    exp_H = np.empty(n)
    for row, (t, psi) in enumerate(snapshots):
        for i in range(d):
            exp_x[row, i] = expectation("position", psi, axis=i)
            exp_p[row, i] = expectation("momentum", psi, axis=i)
        exp_H[row] = expectation("energy", psi, pot=pot)

    def _evaluate(traj_cl, traj_co, dt_used):
        idx = [traj_cl.sample_index(t) for t in times]
        q_cl = traj_cl.q[idx]
        p_cl = traj_cl.p[idx]
        q_co = traj_co.q[idx]
        p_co = traj_co.p[idx]
        h_cl = np.array([hamiltonian_classical(traj_cl.params_at(i), pot) for i in idx])
        h_co = np.array([hamiltonian_eps(traj_co.params_at(i), pot) for i in idx])
        wf_cl = np.empty(n)
        wf_co = np.empty(n)
        for row, (t, psi) in enumerate(snapshots):
            phi_cl = eval_phi0(traj_cl.params_at(idx[row]), psi.grid)
            phi_co = eval_phi0(traj_co.params_at(idx[row]), psi.grid)
            wf_cl[row] = l2_norm(psi.with_values(psi.values - phi_cl.values))
            wf_co[row] = l2_norm(psi.with_values(psi.values - phi_co.values))
        return CompareResult(
            eps=eps, times=times, exp_x=exp_x, exp_p=exp_p, exp_H=exp_H,
            q_classical=q_cl, p_classical=p_cl, q_corrected=q_co, p_corrected=p_co,
            err_x_classical=np.abs(q_cl - exp_x), err_p_classical=np.abs(p_cl - exp_p),
            err_x_corrected=np.abs(q_co - exp_x), err_p_corrected=np.abs(p_co - exp_p),
            hgap_classical=exp_H - h_cl, hgap_corrected=exp_H - h_co,
            wferr_classical=wf_cl, wferr_corrected=wf_co,
            achieved_tol=achieved, ode_error_estimate=float("nan"),
            packet_dt=dt_used, grid=snapshots[0][1].grid,
            traj_classical=traj_cl, traj_corrected=traj_co, snapshots=snapshots,
        )

    result = _evaluate(traj_cl, traj_co, dt)

    # refine the packet step until (a) the ODE error is a small fraction of
    # the smallest expectation-error signal (step-halving Richardson
    # estimate) and (b) the Verlet fluctuation of the flow Hamiltonians at
    # the snapshots stays below the reference tolerance, so the Hamiltonian
    # gap reads as constant in t
    state_for_est = cfg.initial_packet(eps)
    for _ in range(8):
        icfg = IntegratorConfig(dt=dt, t_end=cfg.t_end, scheme=cfg.packet_scheme)
        est = max(
            dynamics.halving_error_estimate(state_for_est, pot, icfg, "classical"),
            dynamics.halving_error_estimate(state_for_est, pot, icfg, "corrected"),
        )
        floor_err = min(
            result.err_x_corrected.max(), result.err_p_corrected.max(),
            result.err_x_classical.max(), result.err_p_classical.max(),
        )
        h_fluct = max(
            np.abs(result.hgap_corrected - result.hgap_corrected[0]).max(),
            np.abs(result.hgap_classical - result.hgap_classical[0]).max(),
        )
        h_target = 5.0 * achieved if np.isfinite(achieved) else np.inf
        if (est <= cfg.ode_error_fraction * max(floor_err, ERROR_FLOOR)
                and h_fluct <= max(h_target, 1e-12)):
            result.ode_error_estimate = est
            break
        dt /= 2.0
        store_every *= 2
        traj_cl, traj_co = _integrate_flows(cfg, state0, pot, dt, store_every)
        result = _evaluate(traj_cl, traj_co, dt)
        result.ode_error_estimate = est

    if not keep_fields:
        result.snapshots = None
        result.traj_classical = None
        result.traj_corrected = None
    return result


# ---------------------------------------------------------------------------
# error-term diagnostics

@dataclass
class ErrorTermDiagnostic:
    """Decomposition of the expectation error into its two inner-product terms."""

    times: np.ndarray
    term1_x: np.ndarray   # (n, d) 2 Re <Z0, (x - q) phi0>
    term2_x: np.ndarray   # (n, d) <Z0, (x - q) Z0>
    term1_p: np.ndarray
    term2_p: np.ndarray
    total_x: np.ndarray   # (n, d) <x>(t) - q(t)
    total_p: np.ndarray
    identity_gap: float   # max | term1 + term2 + <phi0,(x-q)phi0> - total |


def first_error_term_diagnostic(result: CompareResult, flow: str = "corrected") -> ErrorTermDiagnostic:
    """Split <x>(t) - q(t) into its packet/error cross terms (exactly, on the grid)."""
    if result.snapshots is None:
        raise ValidationError("run_compare must keep fields for diagnostics")
    traj = result.traj_corrected if flow == "corrected" else result.traj_classical
    qs = result.q_corrected if flow == "corrected" else result.q_classical
    ps = result.p_corrected if flow == "corrected" else result.p_classical
    n, d = qs.shape
    t1x = np.empty((n, d))
    t2x = np.empty((n, d))
    t1p = np.empty((n, d))
    t2p = np.empty((n, d))
    gap = 0.0
    for row, (t, psi) in enumerate(result.snapshots):
        params_t = traj.params_at(traj.sample_index(t))
        phi = eval_phi0(params_t, psi.grid)
        z = psi.with_values(psi.values - phi.values)
        for i in range(d):
            xphi = apply_position(phi, i, shift=qs[row])
            xz = apply_position(z, i, shift=qs[row])
            t1x[row, i] = 2.0 * inner_product(z, xphi).real
            t2x[row, i] = inner_product(z, xz).real
            pphi = apply_momentum(phi, i, warn_tail=False)
            pz = apply_momentum(z, i, warn_tail=False)
            t1p[row, i] = 2.0 * (inner_product(z, pphi) - ps[row, i] * inner_product(z, phi)).real
            t2p[row, i] = (inner_product(z, pz) - ps[row, i] * inner_product(z, z)).real
            base_x = inner_product(phi, xphi).real
            base_p = (inner_product(phi, pphi) - ps[row, i] * inner_product(phi, phi)).real
            tot_x = result.exp_x[row, i] - qs[row, i]
            tot_p = result.exp_p[row, i] - ps[row, i]
            gap = max(gap,
                      abs(base_x + t1x[row, i] + t2x[row, i] - tot_x),
                      abs(base_p + t1p[row, i] + t2p[row, i] - tot_p))
    total_x = result.exp_x - qs
    total_p = result.exp_p - ps
    return ErrorTermDiagnostic(result.times, t1x, t2x, t1p, t2p, total_x, total_p, gap)


# ---------------------------------------------------------------------------
# sweeps, slope fits, reports

@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float
    n_points: int
    reliable: bool


def fit_slope(points) -> SlopeFit:
    """Least squares on (ln eps, ln err); sub-floor errors are excluded."""
    usable = [(e, v) for e, v in points if v > ERROR_FLOOR]
    if len(usable) < 3:
        raise InsufficientDataError(
            f"need >= 3 usable points above {ERROR_FLOOR:.0e}, got {len(usable)}")
    x = np.log([e for e, _ in usable])
    y = np.log([v for _, v in usable])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return SlopeFit(float(slope), float(intercept), r2, len(usable), r2 >= RELIABLE_R2)


@dataclass
class ConvergenceReport:
    """Per-eps max-over-time errors plus fitted slopes for one experiment."""

    config: ExperimentConfig
    eps: np.ndarray
    max_errors: dict            # name -> (n_eps, n_components)
    achieved_tols: np.ndarray
    ode_estimates: np.ndarray
    slopes: dict                # name -> SlopeFit (or None if insufficient)
    contaminated: np.ndarray    # per-eps flag

    def error_series(self, name: str, component: int = 0) -> list:
        return [(float(e), float(self.max_errors[name][i, component]))
                for i, e in enumerate(self.eps)]


def _reduce_result(res: CompareResult) -> dict:
    return {
        "max_errors": res.max_errors(),
        "achieved_tol": res.achieved_tol,
        "ode_error_estimate": res.ode_error_estimate,
    }


def _sweep_job(raw_cfg: dict, eps: float, refine: bool) -> dict:
    cfg = ExperimentConfig.from_dict(raw_cfg)
    res = run_compare(cfg, eps, refine=refine, keep_fields=False)
    return _reduce_result(res)


def epsilon_sweep(cfg: ExperimentConfig, jobs: int = 1, refine: bool = None) -> ConvergenceReport:
    """Run run_compare over cfg.eps_list and fit convergence slopes.

    Requires at least four eps values spanning 1.5 decades.  Slopes whose
    fit has R^2 below 0.98 are flagged unreliable but still reported.
    """
    eps_list = list(cfg.eps_list)
    if len(eps_list) < 4:
        raise ValidationError("sweep needs at least 4 eps values")
    if np.log10(eps_list[0] / eps_list[-1]) < 1.5 - 1e-9:
        raise ValidationError("sweep must span at least 1.5 decades in eps")
    refine = cfg.refine if refine is None else refine

    if jobs > 1:
        raw = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_sweep_job, raw, e, refine) for e in eps_list]
            reduced = [f.result() for f in futures]
    else:
        reduced = [_sweep_job(cfg.to_dict(), e, refine) for e in eps_list]

    names = list(reduced[0]["max_errors"].keys())
    max_errors = {name: np.vstack([r["max_errors"][name] for r in reduced])
                  for name in names}
    achieved = np.array([r["achieved_tol"] for r in reduced])
    ode_est = np.array([r["ode_error_estimate"] for r in reduced])

    slopes = {}
    for name in names:
        for comp in range(max_errors[name].shape[1]):
            key = name if max_errors[name].shape[1] == 1 else f"{name}_{comp}"
            pts = list(zip(eps_list, max_errors[name][:, comp]))
            try:
                slopes[key] = fit_slope(pts)
            except InsufficientDataError:
                slopes[key] = None

    expectation_errs = np.concatenate([
        max_errors["err_x_classical"], max_errors["err_p_classical"],
        max_errors["err_x_corrected"], max_errors["err_p_corrected"]], axis=1)
    smallest = np.maximum(expectation_errs.min(axis=1), ERROR_FLOOR)
    with np.errstate(invalid="ignore"):
        contaminated = achieved > 0.01 * smallest
    contaminated = np.where(np.isnan(achieved), False, contaminated)

    return ConvergenceReport(cfg, np.array(eps_list), max_errors, achieved,
                             ode_est, slopes, contaminated)


# ---------------------------------------------------------------------------
# report emission

def _fmt(x) -> str:
    return f"{x:.17g}"


def emit_report(report: ConvergenceReport, out_dir: str) -> list:
    """Write config.json, errors.csv, slopes.csv and log-log SVG plots.

    CSV columns are documented in the README; identical configs produce
    bit-identical CSV bytes.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []

    cfg_path = os.path.join(out_dir, "config.json")
    payload = {"config": report.config.to_dict(), "hash": report.config.config_hash()}
    with open(cfg_path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    written.append(cfg_path)

    names = sorted(report.max_errors.keys())
    err_path = os.path.join(out_dir, "errors.csv")
    with open(err_path, "w") as fh:
        header = ["eps"]
        for name in names:
            ncomp = report.max_errors[name].shape[1]
            header += [name if ncomp == 1 else f"{name}_{c}" for c in range(ncomp)]
        header += ["achieved_tol", "ode_error_estimate", "contaminated"]
        fh.write(",".join(header) + "\n")
        for i, eps in enumerate(report.eps):
            row = [_fmt(eps)]
            for name in names:
                row += [_fmt(v) for v in report.max_errors[name][i]]
            row += [_fmt(report.achieved_tols[i]), _fmt(report.ode_estimates[i]),
                    str(bool(report.contaminated[i])).lower()]
            fh.write(",".join(row) + "\n")
    written.append(err_path)

    slope_path = os.path.join(out_dir, "slopes.csv")
    with open(slope_path, "w") as fh:
        fh.write("quantity,slope,intercept,r_squared,n_points,reliable\n")
        for key in sorted(report.slopes.keys()):
            fit = report.slopes[key]
            if fit is None:
                fh.write(f"{key},nan,nan,nan,0,false\n")
            else:
                fh.write(f"{key},{_fmt(fit.slope)},{_fmt(fit.intercept)},"
                         f"{_fmt(fit.r_squared)},{fit.n_points},"
                         f"{str(fit.reliable).lower()}\n")
    written.append(slope_path)

    written += _emit_plots(report, out_dir)
    return written


def _emit_plots(report: ConvergenceReport, out_dir: str) -> list:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = report.config.config_hash()
    import matplotlib.pyplot as plt

    groups = [
        ("errors_position.svg", ["err_x_classical", "err_x_corrected"],
         [(1.0, "slope 1"), (1.5, "slope 3/2")], "max |q(t) - <x>(t)|"),
        ("errors_momentum.svg", ["err_p_classical", "err_p_corrected"],
         [(1.0, "slope 1"), (1.5, "slope 3/2")], "max |p(t) - <p>(t)|"),
        ("hamiltonian_gap.svg", ["hgap_classical", "hgap_corrected"],
         [(1.0, "slope 1"), (2.0, "slope 2")], "max |<H> - H_flow|"),
        ("wavefunction_error.svg", ["wferr_classical", "wferr_corrected"],
         [(0.5, "slope 1/2")], "max ||psi - phi0||"),
    ]
    eps = report.eps
    written = []
    for fname, names, guides, ylabel in groups:
        fig, ax = plt.subplots(figsize=(5.0, 4.0))
        any_data = False
        for name in names:
            errs = report.max_errors[name]
            for comp in range(errs.shape[1]):
                vals = errs[:, comp]
                if np.all(vals <= ERROR_FLOOR):
                    continue
                any_data = True
                label = name if errs.shape[1] == 1 else f"{name}_{comp}"
                ax.loglog(eps, np.maximum(vals, ERROR_FLOOR), "o-", label=label)
        if not any_data:
            plt.close(fig)
            continue
        ref = report.max_errors[names[-1]][:, 0]
        anchor = max(ref[0], ERROR_FLOOR)
        for rate, label in guides:
            ax.loglog(eps, anchor * (eps / eps[0]) ** rate, "k--", lw=0.8, label=label)
        ax.set_xlabel("eps")
        ax.set_ylabel(ylabel)
        ax.legend(fontsize=7)
        ax.grid(True, which="both", alpha=0.3)
        path = os.path.join(out_dir, fname)
        fig.savefig(path, metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written

import json
import os

import numpy as np
import pytest

from gwpdyn.errors import InsufficientDataError, ValidationError
from gwpdyn.harness import (ExperimentConfig, default_torsional_config, emit_report,
                            epsilon_sweep, first_error_term_diagnostic, fit_slope,
                            run_compare)


def _tiny_config(**overrides):
    """Small fixed-resolution torsional config for fast deterministic runs."""
    base = {
        "eps_list": [2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -8],
        "n_snapshots": 5,
        "t_end": 0.5,
        "integrator": {"dt": 1e-3},
        "solver": {"dt": 2.5e-4, "points_per_axis": 512, "refine": False},
    }
    base.update(overrides)
    return default_torsional_config(**base)


class TestFitSlope:
    def test_exact_unit_line(self):
        fit = fit_slope([(1.0, 1.0), (0.5, 0.5), (0.25, 0.25)])
        assert fit.slope == pytest.approx(1.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
        assert fit.reliable

    def test_power_three_halves(self):
        eps = [0.1, 0.05, 0.025, 0.0125]
        fit = fit_slope([(e, e ** 1.5) for e in eps])
        assert fit.slope == pytest.approx(1.5, abs=1e-10)

    def test_sub_floor_points_excluded(self):
        pts = [(0.1, 0.1), (0.05, 0.05), (0.025, 0.025), (0.0125, 1e-15)]
        fit = fit_slope(pts)
        assert fit.n_points == 3
        assert fit.slope == pytest.approx(1.0, abs=1e-10)

    def test_insufficient_points(self):
        with pytest.raises(InsufficientDataError):
            fit_slope([(0.1, 1e-15), (0.05, 1e-16), (0.025, 0.1)])


class TestExperimentConfig:
    def test_requires_decreasing_eps(self):
        with pytest.raises(ValidationError):
            default_torsional_config(eps_list=[0.1, 0.2])

    def test_requires_valid_initial_matrices(self):
        with pytest.raises(ValidationError):
            default_torsional_config(
                initial={"q": [1.0], "p": [0.0], "Q": [[1.0, 0.0]],
                         "P": [[1.0, 0.0]], "S": 0.0})

    def test_hash_stability_and_sensitivity(self):
        a = default_torsional_config()
        b = default_torsional_config()
        c = default_torsional_config(t_end=2.0)
        assert a.config_hash() == b.config_hash()
        assert a.config_hash() != c.config_hash()

    def test_file_round_trip(self, tmp_path):
        cfg = default_torsional_config()
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        loaded = ExperimentConfig.from_file(str(path))
        assert loaded.config_hash() == cfg.config_hash()

    def test_missing_key_raises(self):
        with pytest.raises(ValidationError):
            ExperimentConfig.from_dict({"dimension": 1})


class TestRunCompare:
    def test_harmonic_errors_at_noise_floor(self):
        cfg = _tiny_config(potential={"kind": "harmonic", "omega": [1.0]},
                           solver={"dt": 5e-5, "points_per_axis": 256,
                                   "refine": False},
                           integrator={"dt": 5e-5})
        res = run_compare(cfg, 2.0 ** -4)
        assert res.err_x_classical.max() < 1e-8
        assert res.err_x_corrected.max() < 1e-8
        assert res.err_p_classical.max() < 1e-8

    def test_free_errors_tiny(self):
        cfg = _tiny_config(potential={"kind": "free"})
        res = run_compare(cfg, 2.0 ** -4)
        assert res.err_x_classical.max() < 1e-10
        assert res.err_p_corrected.max() < 1e-10
        assert res.wferr_corrected.max() < 1e-10

    def test_torsional_corrected_beats_classical(self):
        cfg = _tiny_config()
        res = run_compare(cfg, 2.0 ** -5)
        for row in range(2, len(res.times)):
            assert res.err_x_corrected[row, 0] < res.err_x_classical[row, 0]

    def test_decomposition_identity(self):
        cfg = _tiny_config()
        res = run_compare(cfg, 2.0 ** -4)
        for flow in ("corrected", "classical"):
            diag = first_error_term_diagnostic(res, flow=flow)
            assert diag.identity_gap < 1e-10
            total = diag.term1_x + diag.term2_x
            assert np.max(np.abs(total - diag.total_x)) < 1e-10

    def test_decomposition_mechanism(self):
        # the classical flow's error is carried by the packet-cross term,
        # which the corrected force cancels down to the level of the
        # quadratic term
        cfg = default_torsional_config(
            solver={"observable_tol": 1e-9, "refine": True, "max_refinements": 8,
                    "dt": "auto", "points_per_axis": "auto"})
        res = run_compare(cfg, 2.0 ** -5)
        cl = first_error_term_diagnostic(res, flow="classical")
        co = first_error_term_diagnostic(res, flow="corrected")
        t1_cl = abs(cl.term1_x[-1, 0])
        assert t1_cl > 10.0 * abs(cl.term2_x[-1, 0])
        assert abs(co.term1_x[-1, 0]) < 0.1 * t1_cl


class TestSweep:
    def test_needs_enough_eps_values(self):
        cfg = _tiny_config(eps_list=[0.1, 0.05, 0.025])
        with pytest.raises(ValidationError):
            epsilon_sweep(cfg)

    def test_needs_wide_span(self):
        cfg = _tiny_config(eps_list=[0.1, 0.09, 0.08, 0.07])
        with pytest.raises(ValidationError):
            epsilon_sweep(cfg)

    def test_sweep_and_report(self, tmp_path):
        cfg = _tiny_config()
        report = epsilon_sweep(cfg)
        assert report.slopes["err_x_classical"].slope == pytest.approx(1.0, abs=0.2)
        files = emit_report(report, str(tmp_path / "out"))
        names = {os.path.basename(f) for f in files}
        assert {"config.json", "errors.csv", "slopes.csv"} <= names
        assert sum(name.endswith(".svg") for name in names) >= 2
        payload = json.loads((tmp_path / "out" / "config.json").read_text())
        assert payload["hash"] == cfg.config_hash()

    def test_determinism_bit_identical(self, tmp_path):
        cfg = _tiny_config(eps_list=[2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -8],
                           n_snapshots=3)
        for tag in ("a", "b"):
            emit_report(epsilon_sweep(cfg), str(tmp_path / tag))
        for name in ("errors.csv", "slopes.csv", "config.json"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_rk4_scheme_matches_verlet(self):
        base = _tiny_config()
        rk4 = _tiny_config(integrator={"dt": 1e-3, "scheme": "rk4"})
        res_v = run_compare(base, 2.0 ** -4)
        res_r = run_compare(rk4, 2.0 ** -4)
        assert np.max(np.abs(res_v.err_x_classical - res_r.err_x_classical)) < 1e-8
        assert np.max(np.abs(res_v.err_x_corrected - res_r.err_x_corrected)) < 1e-8

    def test_no_signal_report(self, tmp_path):
        # free potential: errors sit at the roundoff floor; slopes come out
        # either unfittable (sub-floor, None) or flagged unreliable, and the
        # report is still emitted
        cfg = _tiny_config(potential={"kind": "free"})
        report = epsilon_sweep(cfg)
        assert report.slopes["err_p_classical"] is None  # all points sub-floor
        fit = report.slopes["err_x_classical"]
        assert fit is None or not fit.reliable
        files = emit_report(report, str(tmp_path / "out"))
        names = {os.path.basename(f) for f in files}
        assert "errors.csv" in names and "slopes.csv" in names
        slopes_text = (tmp_path / "out" / "slopes.csv").read_text()
        assert "err_p_classical,nan,nan,nan,0,false" in slopes_text

    def test_parallel_jobs_match_serial(self, tmp_path):
        cfg = _tiny_config(eps_list=[2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -8],
                           n_snapshots=3)
        serial = epsilon_sweep(cfg, jobs=1)
        parallel = epsilon_sweep(cfg, jobs=2)
        for name in serial.max_errors:
            assert np.array_equal(serial.max_errors[name], parallel.max_errors[name])


class TestCli:
    def test_basis_check(self, capsys):
        from gwpdyn.cli import main
        assert main(["basis-check"]) == 0
        out = capsys.readouterr().out
        assert "PASS" in out and "FAIL" not in out

    def test_evolve_writes_table(self, tmp_path, capsys):
        from gwpdyn.cli import main
        cfg = _tiny_config()
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        code = main(["evolve", "--config", str(path), "--out", str(tmp_path / "o"),
                     "--eps", "0.125"])
        assert code == 0
        files = os.listdir(tmp_path / "o")
        assert any(f.startswith("evolve_eps") for f in files)

    def test_sweep_cli(self, tmp_path):
        from gwpdyn.cli import main
        cfg = _tiny_config(eps_list=[2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -8],
                           n_snapshots=3)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg.to_dict()))
        assert main(["sweep", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
        assert (tmp_path / "o" / "errors.csv").exists()

    def test_bad_config_exits_one(self, tmp_path):
        from gwpdyn.cli import main
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"dimension": 1}))
        assert main(["sweep", "--config", str(path)]) == 1

    def test_residual_check(self, capsys):
        from gwpdyn.cli import main
        assert main(["residual-check"]) == 0
        out = capsys.readouterr().out
        assert "FAIL" not in out


def test_residual_check_writes_diagnostics(tmp_path):
    from gwpdyn.cli import main
    out = tmp_path / "diag"
    assert main(["residual-check", "--out", str(out)]) == 0
    lines = (out / "residual_diagnostics.csv").read_text().strip().split("\n")
    assert lines[0].startswith("eps,zeta0_norm,xi_zeta0_norm,eta_zeta0_norm")
    assert len(lines) == 1 + 7


def test_run_compare_two_dimensional():
    # gaussian well, d = 2: the correction helps componentwise
    raw = {
        "dimension": 2,
        "potential": {"kind": "gaussian_well", "depth": 1.0, "width": 1.0},
        "initial": {"q": [0.6, -0.3], "p": [0.2, 0.5],
                    "Q": [[1, 0], [0, 0], [0, 0], [1, 0]],
                    "P": [[0, 1], [0, 0], [0, 0], [0, 1]], "S": 0.0},
        "eps_list": [0.0625, 0.03125, 0.015625, 0.0078125],
        "t_end": 1.0, "n_snapshots": 6,
        "solver": {"observable_tol": 1e-7, "refine": True, "max_refinements": 5,
                   "dt": "auto", "points_per_axis": "auto"},
    }
    cfg = ExperimentConfig.from_dict(raw)
    res = run_compare(cfg, 0.0625)
    assert res.achieved_tol < 1e-7
    for comp in range(2):
        assert (res.err_x_corrected.max(axis=0)[comp]
                < 0.2 * res.err_x_classical.max(axis=0)[comp])
        assert (res.err_p_corrected.max(axis=0)[comp]
                < 0.2 * res.err_p_classical.max(axis=0)[comp])

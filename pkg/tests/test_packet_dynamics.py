import numpy as np
import pytest

from conftest import random_packet, random_valid_pair
from gwpdyn import (IntegratorConfig, free, gaussian_well, harmonic, integrate,
                    quartic, standard_packet, step, torsional)
from gwpdyn.dynamics import (backend_name, get_backend, measure_order,
                             write_trajectory_csv)
from gwpdyn.errors import (StepSizeError, UnsupportedDimensionError, ValidationError)
from gwpdyn.packet import (DetBranch, PacketParams, check_symplectic_invariants,
                           grad_v1, hamiltonian_classical, hamiltonian_eps,
                           rhs_classical, rhs_corrected,
                           semiclassical_angular_momentum, v1_correction)


class TestCorrectionPotential:
    def test_harmonic_quarter(self):
        assert v1_correction(np.zeros(1), np.eye(1, dtype=complex),
                             harmonic([1.0])) == pytest.approx(0.25)

    def test_free_zero(self):
        assert v1_correction(np.zeros(1), np.eye(1, dtype=complex), free(1)) == 0.0

    def test_torsional_wide_packet(self):
        # Q = 2 at q = 0: tr(QQ* D2V)/4 = 4 * 1 / 4
        assert v1_correction(np.zeros(1), 2.0 * np.eye(1, dtype=complex),
                             torsional(1)) == pytest.approx(1.0)

    def test_grad_harmonic_zero(self):
        g = grad_v1(np.array([0.4]), np.eye(1, dtype=complex), harmonic([1.0]))
        assert np.allclose(g, 0.0)

    def test_grad_torsional_value(self):
        g = grad_v1(np.array([np.pi / 2]), np.eye(1, dtype=complex), torsional(1))
        assert g[0] == pytest.approx(-0.25)

    @pytest.mark.parametrize("pot", [torsional(2), gaussian_well(2, 1.3, 0.9)])
    def test_grad_matches_finite_difference(self, pot, rng):
        Q, _ = random_valid_pair(rng, 2)
        q = rng.uniform(-1, 1, size=2)
        g = grad_v1(q, Q, pot)
        h = 1e-6
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (v1_correction(q + e, Q, pot) - v1_correction(q - e, Q, pot)) / (2 * h)
            assert g[i] == pytest.approx(fd, abs=1e-6)


class TestRhs:
    def test_free(self):
        st = standard_packet([1.0], [2.0], 0.1)
        tan = rhs_classical(st, free(1))
        assert np.all(tan.dp == 0.0) and np.all(tan.dP == 0.0)
        assert tan.dq[0] == 2.0 and tan.dS == pytest.approx(2.0)

    def test_harmonic(self):
        st = standard_packet([0.7], [0.0], 0.1)
        tan = rhs_classical(st, harmonic([1.0]))
        assert tan.dp[0] == pytest.approx(-0.7)
        assert tan.dP[0, 0] == pytest.approx(-st.Q[0, 0])

    def test_torsional_force(self):
        st = standard_packet([np.pi / 2], [0.0], 0.1)
        assert rhs_classical(st, torsional(1)).dp[0] == pytest.approx(-1.0)

    def test_corrected_equals_classical_for_quadratic(self):
        st = standard_packet([0.7], [0.1], 0.1)
        pot = harmonic([1.0])
        a, b = rhs_classical(st, pot), rhs_corrected(st, pot)
        assert np.allclose(a.dp, b.dp) and np.allclose(a.dP, b.dP)

    def test_corrected_torsional_value_and_fd_oracle(self):
        eps = 0.1
        st = standard_packet([np.pi / 2], [0.0], eps)
        pot = torsional(1)
        tan = rhs_corrected(st, pot)
        assert tan.dp[0] == pytest.approx(-1.0 - eps * (-0.25))
        # cross-check: finite difference of V(q) + eps V1(q, Q)
        h = 1e-6
        def vtot(q):
            return pot.value(np.array([q])) + eps * v1_correction(np.array([q]), st.Q, pot)
        fd = (vtot(np.pi / 2 + h) - vtot(np.pi / 2 - h)) / (2 * h)
        assert tan.dp[0] == pytest.approx(-fd, abs=1e-8)


class TestHamiltonians:
    def test_eps_hamiltonian_example(self):
        st = standard_packet([0.0], [0.0], 0.1)
        assert hamiltonian_eps(st, harmonic([1.0])) == pytest.approx(0.05)

    def test_free_value(self):
        st = standard_packet([0.3], [2.0], 0.25)
        assert hamiltonian_classical(st, free(1)) == pytest.approx(2.0)
        assert hamiltonian_eps(st, free(1)) == pytest.approx(2.0 + 0.25 / 4.0)

    def test_decomposition_identity(self, rng):
        pot = gaussian_well(2, 1.2, 1.1)
        for _ in range(5):
            st = random_packet(rng, 2, 0.07)
            lhs = hamiltonian_eps(st, pot)
            trp = float(np.trace(st.P.conj().T @ st.P).real)
            rhs = (hamiltonian_classical(st, pot)
                   + st.eps * (0.25 * trp + v1_correction(st.q, st.Q, pot)))
            assert lhs == pytest.approx(rhs, rel=1e-12)


class TestAngularMomentum:
    def test_plug_in_example(self):
        st = standard_packet([1.0, 0.0], [0.0, 1.0], 0.1)
        J = semiclassical_angular_momentum(st)
        assert J[0, 1] == pytest.approx(-1.0)
        assert np.allclose(J, -J.T)

    def test_symmetric_width_term_vanishes(self):
        # real Q with P = i Q-scaled: Re(P Q* - Q P*) is symmetric, so the
        # skew correction vanishes entrywise off the diagonal
        Q = np.diag([1.0, 2.0]).astype(complex)
        P = 1j * np.linalg.inv(Q)  # valid pair for diagonal real Q
        st = PacketParams(np.zeros(2), np.zeros(2), Q, P, 0.0, 0.1)
        J = semiclassical_angular_momentum(st)
        assert np.allclose(J, 0.0, atol=1e-14)

    def test_dimension_one_rejected(self):
        with pytest.raises(UnsupportedDimensionError):
            semiclassical_angular_momentum(standard_packet([0.0], [0.0], 0.1))

    def test_conserved_along_corrected_flow(self):
        # SO(2)-symmetric well: both split stages are rotation invariant, so
        # the discrete flow conserves the momentum map to roundoff
        st = standard_packet([0.6, -0.3], [0.2, 0.5], 0.05)
        pot = gaussian_well(2, depth=1.0, width=1.0)
        traj = integrate(st, pot, IntegratorConfig(dt=5e-4, t_end=2.0),
                         flow="corrected", store_every=200)
        J0 = semiclassical_angular_momentum(traj.params_at(0))
        drift = max(np.max(np.abs(semiclassical_angular_momentum(traj.params_at(i)) - J0))
                    for i in range(traj.n_samples))
        assert drift < 1e-10


class TestInvariants:
    def test_reference_pairs(self):
        eye = np.eye(2, dtype=complex)
        assert check_symplectic_invariants(
            PacketParams(np.zeros(2), np.zeros(2), eye, 1j * eye, 0.0, 0.1)
        ) == pytest.approx((0.0, 0.0))
        assert check_symplectic_invariants(
            PacketParams(np.zeros(2), np.zeros(2), 2 * eye, 0.5j * eye, 0.0, 0.1)
        ) == pytest.approx((0.0, 0.0))
        bad = PacketParams(np.zeros(2), np.zeros(2), eye, eye, 0.0, 0.1,
                           validate=False)
        r1, r2 = check_symplectic_invariants(bad)
        assert r1 == pytest.approx(0.0)
        assert r2 == pytest.approx(2.0 * np.sqrt(2.0))

    def test_constructor_rejects_invalid_pair(self):
        eye = np.eye(2, dtype=complex)
        with pytest.raises(ValidationError):
            PacketParams(np.zeros(2), np.zeros(2), eye, eye, 0.0, 0.1)

    def test_imaginary_part_consequence(self, rng):
        for _ in range(5):
            st = random_packet(rng, 3, 0.1)
            B = st.P @ np.linalg.inv(st.Q)
            assert np.allclose(B.imag, np.linalg.inv(st.Q @ st.Q.conj().T).real,
                               atol=1e-10)

    @pytest.mark.parametrize("flow", ["classical", "corrected"])
    def test_drift_along_flow(self, flow):
        st = standard_packet([1.0], [0.0], 1e-2)
        traj = integrate(st, torsional(1), IntegratorConfig(dt=1e-4, t_end=1.0),
                         flow=flow)
        r1, r2 = check_symplectic_invariants(traj.final())
        assert max(r1, r2) < 1e-10


class TestIntegration:
    def test_free_flow_exact(self):
        st = standard_packet([1.0], [2.0], 0.1)
        traj = integrate(st, free(1), IntegratorConfig(dt=1e-2, t_end=1.0))
        f = traj.final()
        assert f.q[0] == pytest.approx(3.0, abs=1e-12)
        assert f.Q[0, 0] == pytest.approx(1.0 + 1.0j, abs=1e-12)
        assert f.S == pytest.approx(2.0, abs=1e-10)

    def test_harmonic_half_period(self):
        st = standard_packet([1.0], [0.0], 0.1)
        n = 4096
        traj = integrate(st, harmonic([1.0]),
                         IntegratorConfig(dt=np.pi / n, t_end=np.pi))
        assert traj.final().q[0] == pytest.approx(-1.0, abs=1e-5)

    def test_step_halving_order(self):
        st = standard_packet([1.0], [0.0], 1e-2)
        order = measure_order(st, torsional(1), IntegratorConfig(dt=2e-3, t_end=1.0),
                              flow="corrected")
        assert 1.8 <= order <= 2.2

    @pytest.mark.parametrize("flow", ["classical", "corrected"])
    def test_energy_conservation_order(self, flow):
        st = standard_packet([1.0], [0.0], 1e-2)
        pot = torsional(1)
        ham = hamiltonian_eps if flow == "corrected" else hamiltonian_classical
        def fluct(dt):
            traj = integrate(st, pot, IntegratorConfig(dt=dt, t_end=1.0), flow=flow)
            h = np.array([ham(traj.params_at(i), pot) for i in range(traj.n_samples)])
            return np.abs(h - h[0]).max()
        order = np.log2(fluct(2e-3) / fluct(1e-3))
        assert 1.8 <= order <= 2.2

    def test_quadratic_flows_coincide(self):
        st = standard_packet([0.8], [0.2], 0.05)
        cfg = IntegratorConfig(dt=1e-3, t_end=1.0)
        a = integrate(st, harmonic([1.0]), cfg, flow="classical")
        b = integrate(st, harmonic([1.0]), cfg, flow="corrected")
        assert np.allclose(a.q, b.q, atol=1e-14)
        assert np.allclose(a.P, b.P, atol=1e-14)

    def test_rk4_cross_check(self):
        st = standard_packet([1.0], [0.0], 1e-2)
        pot = torsional(1)
        v = integrate(st, pot, IntegratorConfig(dt=1e-4, t_end=1.0), flow="corrected")
        r = integrate(st, pot, IntegratorConfig(dt=1e-4, t_end=1.0, scheme="rk4"),
                      flow="corrected")
        assert np.max(np.abs(v.final().q - r.final().q)) < 1e-7

    def test_single_step_matches_integrate(self):
        st = standard_packet([1.0], [0.0], 1e-2)
        out = step(st, torsional(1), 1e-3, flow="corrected")
        traj = integrate(st, torsional(1), IntegratorConfig(dt=1e-3, t_end=1e-3),
                         store_every=1)
        assert np.allclose(out.q, traj.final().q)

    def test_dt_must_divide_t_end(self):
        st = standard_packet([1.0], [0.0], 1e-2)
        with pytest.raises(ValidationError):
            integrate(st, torsional(1), IntegratorConfig(dt=3e-4, t_end=1.0))

    @pytest.mark.parametrize("pot,state", [
        (torsional(1), standard_packet([1.0], [0.1], 1e-2)),
        (gaussian_well(2, 1.1, 0.9), standard_packet([0.6, -0.3], [0.2, 0.5], 1e-2)),
        (quartic([0.8]), standard_packet([0.5], [0.1], 1e-2)),
    ])
    @pytest.mark.parametrize("scheme", ["verlet_flow", "rk4_flow"])
    def test_backends_agree(self, pot, state, scheme):
        code, pp, off = pot.kernel_spec()
        d = state.dim
        results = {}
        for name in ("compiled", "python"):
            try:
                mod = get_backend(name)
            except ImportError:
                pytest.skip("compiled backend unavailable")
            n, s = 2000, 100
            nout = n // s + 1
            out = [np.empty((nout, d)), np.empty((nout, d)),
                   np.empty((nout, d, d), complex), np.empty((nout, d, d), complex),
                   np.empty(nout), np.empty(nout)]
            getattr(mod, scheme)(code, pp, off, state.eps, 1, state.q.copy(),
                                 state.p.copy(), state.Q.copy(), state.P.copy(),
                                 0.0, state.det_branch.angle,
                                 state.det_branch.prev_det, 5e-4, n, s, *out)
            results[name] = out
        gaps = [np.max(np.abs(a - b)) for a, b in zip(results["compiled"],
                                                      results["python"])]
        assert max(gaps) < 1e-13


class TestDetBranch:
    def test_continuous_angle_across_cut(self):
        # harmonic rotation: det Q = e^{it} crosses the principal cut at pi
        st = standard_packet([1.0], [0.0], 0.1)
        traj = integrate(st, harmonic([1.0]), IntegratorConfig(dt=1e-3, t_end=4.0),
                         store_every=40)
        # theta tracks t continuously, never wrapping
        assert traj.theta[-1] == pytest.approx(4.0, abs=1e-5)
        jumps = np.abs(np.diff(traj.theta))
        assert jumps.max() < 0.5 * np.pi

    def test_branch_jump_raises(self):
        st = standard_packet([1.0], [0.0], 0.1)
        with pytest.raises(StepSizeError):
            integrate(st, harmonic([1.0]), IntegratorConfig(dt=2.0, t_end=4.0),
                      store_every=1)

    def test_advanced_rejects_zero(self):
        with pytest.raises(ValidationError):
            DetBranch(0, 1.0 + 0j).advanced(0.0)


def test_trajectory_csv(tmp_path):
    st = standard_packet([1.0], [0.0], 1e-2)
    pot = torsional(1)
    traj = integrate(st, pot, IntegratorConfig(dt=1e-3, t_end=0.1), store_every=10)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(traj, pot, str(path))
    lines = path.read_text().strip().split("\n")
    assert lines[0].split(",")[:3] == ["t", "q_0", "p_0"]
    assert "H_eps" in lines[0] and "r1" in lines[0]
    assert len(lines) == 1 + traj.n_samples


def test_backend_name_reports():
    assert backend_name() in ("compiled", "python")


def test_invariant_drift_detected():
    from gwpdyn.errors import InvariantDriftError
    eye = np.eye(1, dtype=complex)
    bad = PacketParams(np.ones(1), np.zeros(1), eye, eye, 0.0, 0.1, validate=False)
    with pytest.raises(InvariantDriftError):
        integrate(bad, torsional(1), IntegratorConfig(dt=1e-2, t_end=0.1))

import numpy as np
import pytest

from gwpdyn import Grid, harmonic, standard_packet
from gwpdyn.basis import eval_phi0
from gwpdyn.errors import (GridError, GridMismatchError, NormalizationError,
                           UnsupportedDimensionError, ValidationError)
from gwpdyn.packet import hamiltonian_eps
from gwpdyn.wavefunction import (WaveFunction, apply_momentum, apply_position,
                                 expectation, inner_product, l2_norm,
                                 spectral_norm, spectral_tail_mass)

EPS = 0.1


def _ground(q=0.0, p=0.0, eps=EPS, n=256, half=None):
    st = standard_packet([q], [p], eps)
    half = 10 * np.sqrt(eps) if half is None else half
    grid = Grid([q], [half], n)
    return st, grid, eval_phi0(st, grid)


class TestGrid:
    def test_spacing_and_weight(self):
        g = Grid([0.0, 1.0], [2.0, 4.0], 64)
        assert np.allclose(g.spacing, [4.0 / 64, 8.0 / 64])
        assert g.weight == pytest.approx(g.spacing[0] * g.spacing[1])
        assert g.axis(1)[0] == pytest.approx(1.0 - 4.0)

    def test_rejects_bad_sizes(self):
        with pytest.raises(GridError):
            Grid([0.0], [1.0], 48)       # not a power of two
        with pytest.raises(GridError):
            Grid([0.0], [1.0], 4)        # too small
        with pytest.raises(GridError):
            Grid([0.0], [-1.0], 64)
        with pytest.raises(GridError):
            Grid([0.0, 0.0], [1.0, 1.0], 1 << 20, memory_budget_bytes=1 << 20)

    def test_wavenumber_convention(self):
        g = Grid([0.0], [2.0], 16)
        k = g.wavenumbers(0, zero_nyquist=False)
        # k = m * pi / L with m in {-N/2 .. N/2-1}
        assert k[1] == pytest.approx(np.pi / 2.0)
        assert k.min() == pytest.approx(-8 * np.pi / 2.0)
        assert g.wavenumbers(0)[16 // 2] == 0.0  # Nyquist zeroed for derivatives


class TestInnerProduct:
    def test_ground_state_normalized(self):
        _, _, phi = _ground()
        assert inner_product(phi, phi) == pytest.approx(1.0, abs=1e-10)
        assert l2_norm(phi) == pytest.approx(1.0, abs=1e-10)

    def test_zero_function(self):
        _, grid, phi = _ground()
        z = WaveFunction(grid, np.zeros(grid.shape, dtype=complex), EPS)
        assert inner_product(z, z) == 0.0
        assert l2_norm(z) == 0.0

    def test_first_excited_orthogonal(self):
        from gwpdyn.basis import ladder_recurrence_eval
        st, grid, _ = _ground()
        basis = ladder_recurrence_eval(st, 1, grid)
        assert abs(inner_product(basis[(0,)], basis[(1,)])) < 1e-10

    def test_conjugate_symmetry_and_linearity(self, rng):
        _, grid, phi = _ground()
        a = phi.with_values(phi.values * (rng.standard_normal(grid.shape)
                                          + 1j * rng.standard_normal(grid.shape)))
        b = phi.with_values(phi.values * (rng.standard_normal(grid.shape)
                                          + 1j * rng.standard_normal(grid.shape)))
        assert inner_product(a, b) == pytest.approx(np.conj(inner_product(b, a)), abs=1e-12)
        c = 0.7 - 0.3j
        lhs = inner_product(a, b.with_values(c * b.values))
        assert lhs == pytest.approx(c * inner_product(a, b), rel=1e-12)

    def test_grid_mismatch_raises(self):
        _, _, phi1 = _ground(n=256)
        _, _, phi2 = _ground(n=128)
        with pytest.raises(GridMismatchError):
            inner_product(phi1, phi2)

    def test_norm_homogeneity(self):
        _, _, phi = _ground()
        c = -2.5 + 1.2j
        assert l2_norm(phi.with_values(c * phi.values)) == pytest.approx(
            abs(c) * l2_norm(phi), rel=1e-12)

    def test_parseval(self):
        _, _, phi = _ground(q=0.2, p=0.6)
        assert spectral_norm(phi) == pytest.approx(l2_norm(phi), rel=1e-12)


class TestOperators:
    def test_position_at_center_node(self):
        st, grid, phi = _ground(q=0.0)
        out = apply_position(phi, 0, shift=st.q)
        i0 = np.argmin(np.abs(grid.axis(0)))
        assert abs(out.values[i0]) < 1e-12

    def test_position_on_constant(self):
        _, grid, _ = _ground()
        one = WaveFunction(grid, np.ones(grid.shape, dtype=complex), EPS)
        out = apply_position(one, 0)
        assert np.allclose(out.values.real, grid.axis(0))

    def test_position_odd_moment_vanishes(self):
        st, _, phi = _ground(q=0.3)
        moment = inner_product(phi, apply_position(phi, 0, shift=st.q))
        assert abs(moment) < 1e-10

    def test_momentum_on_centered_gaussian(self):
        # q=p=0, Q=1, P=i: p_op phi = i x phi
        _, grid, phi = _ground()
        out = apply_momentum(phi, 0)
        expected = 1j * grid.axis(0) * phi.values
        assert np.max(np.abs(out.values - expected)) < 1e-8

    def test_momentum_on_constant(self):
        _, grid, _ = _ground()
        one = WaveFunction(grid, np.ones(grid.shape, dtype=complex), EPS)
        out = apply_momentum(one, 0)
        assert np.max(np.abs(out.values)) < 1e-12

    def test_momentum_expectation_analytic_oracle(self):
        # independent route: p_op phi0 = (P Q^-1 (x - q) + p) phi0 pointwise
        st, grid, phi = _ground(q=0.2, p=0.7)
        spectral = apply_momentum(phi, 0)
        B = st.P @ np.linalg.inv(st.Q)
        analytic = (B[0, 0] * (grid.axis(0) - 0.2) + 0.7) * phi.values
        assert np.max(np.abs(spectral.values - analytic)) < 1e-8
        assert inner_product(phi, spectral).real == pytest.approx(0.7, abs=1e-8)

    def test_canonical_commutator(self):
        # momentum(position(f)) - position(momentum(f)) = -i eps f
        _, _, phi = _ground(q=0.1, p=0.3)
        pxf = apply_momentum(apply_position(phi, 0), 0, warn_tail=False)
        xpf = apply_position(apply_momentum(phi, 0, warn_tail=False), 0)
        comm = pxf.values - xpf.values
        assert np.max(np.abs(comm - (-1j * EPS) * phi.values)) < 1e-8

    def test_cross_axis_commutator_vanishes(self):
        st = standard_packet([0.0, 0.0], [0.2, -0.1], EPS)
        grid = Grid([0.0, 0.0], [10 * np.sqrt(EPS)] * 2, 64)
        phi = eval_phi0(st, grid)
        pxf = apply_momentum(apply_position(phi, 1), 0, warn_tail=False)
        xpf = apply_position(apply_momentum(phi, 0, warn_tail=False), 1)
        assert np.max(np.abs(pxf.values - xpf.values)) < 1e-10

    def test_axis_out_of_range(self):
        _, _, phi = _ground()
        with pytest.raises(ValidationError):
            apply_position(phi, 1)
        with pytest.raises(ValidationError):
            apply_momentum(phi, 3)


class TestExpectation:
    def test_position_momentum(self):
        st, _, phi = _ground(q=0.4, p=-0.3)
        assert expectation("position", phi) == pytest.approx(0.4, abs=1e-9)
        assert expectation("momentum", phi) == pytest.approx(-0.3, abs=1e-9)

    def test_energy_harmonic_ground_state(self):
        # q=p=0, Q=1, P=i, V = x^2/2: <H> = eps/2, equal to the extended
        # Hamiltonian at these parameters
        st, _, phi = _ground()
        pot = harmonic([1.0])
        e = expectation("energy", phi, pot=pot)
        assert e == pytest.approx(EPS / 2.0, abs=1e-9)
        assert e == pytest.approx(hamiltonian_eps(st, pot), abs=1e-9)

    def test_global_phase_invariance(self):
        _, _, phi = _ground(q=0.4, p=-0.3)
        rotated = phi.with_values(np.exp(1.23j) * phi.values)
        for obs in ("position", "momentum"):
            assert expectation(obs, rotated) == pytest.approx(
                expectation(obs, phi), abs=1e-12)

    def test_requires_normalization(self):
        _, _, phi = _ground()
        bad = phi.with_values(1.5 * phi.values)
        with pytest.raises(NormalizationError) as err:
            expectation("position", bad)
        assert err.value.measured_norm == pytest.approx(1.5, abs=1e-6)

    def test_angular_momentum_needs_2d(self):
        _, _, phi = _ground()
        with pytest.raises(UnsupportedDimensionError):
            expectation("angular_momentum", phi, axes=(0, 1))

    def test_unknown_observable(self):
        _, _, phi = _ground()
        with pytest.raises(ValidationError):
            expectation("spin", phi)

    def test_angular_momentum_matches_packet_formula(self):
        from gwpdyn.packet import semiclassical_angular_momentum
        eps = 0.05
        st = standard_packet([1.0, 0.0], [0.0, 1.0], eps)
        grid = Grid([1.0, 0.0], [10 * np.sqrt(eps)] * 2, 128)
        phi = eval_phi0(st, grid)
        j_grid = expectation("angular_momentum", phi, axes=(0, 1))
        j_packet = semiclassical_angular_momentum(st)[0, 1]
        assert j_grid == pytest.approx(j_packet, abs=1e-8)
        assert j_packet == pytest.approx(-1.0, abs=1e-12)


def test_tail_mass_flags_unresolved():
    eps = 1e-3
    st = standard_packet([0.0], [0.0], eps)
    coarse = Grid([0.0], [2.0], 16)
    psi = eval_phi0(st, coarse, check_resolution=False)
    assert spectral_tail_mass(psi) > 1e-8
    with pytest.warns(RuntimeWarning):
        apply_momentum(psi, 0)

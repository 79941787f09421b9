import math

import numpy as np
import pytest

from spintwist import spinstate as ss

from conftest import dense_operator, dense_rotation, random_state


class TestCoherent:
    def test_n1_amplitudes(self):
        st = ss.coherent_x(1)
        np.testing.assert_allclose(st.amplitudes, [1 / math.sqrt(2)] * 2, atol=1e-15)

    def test_n2_amplitudes(self):
        st = ss.coherent_x(2)
        np.testing.assert_allclose(
            st.amplitudes, [0.5, 1 / math.sqrt(2), 0.5], atol=1e-15
        )

    @pytest.mark.parametrize("n", [1, 2, 7, 40, 400, 2001])
    def test_polarization_exact(self, n):
        st = ss.coherent_x(n)
        jx = dense_operator(n, "x") if n <= 40 else None
        if jx is not None:
            val = np.real(np.conj(st.amplitudes) @ (jx @ st.amplitudes))
        else:
            p = ss.measurement_distribution(st, "x")
            val = p @ st.m_values
        assert val == pytest.approx(n / 2.0, abs=1e-9 * n)

    def test_invalid_n(self):
        with pytest.raises(ValueError):
            ss.coherent_x(0)
        with pytest.raises(ValueError):
            ss.coherent_x(-3)


class TestGss:
    def test_n2_profile(self):
        st = ss.gss(2, 1.0, "z")
        expect = np.array([math.exp(-0.5), 1.0, math.exp(-0.5)])
        expect /= np.linalg.norm(expect)
        np.testing.assert_allclose(st.amplitudes.real, expect, atol=1e-15)

    @pytest.mark.parametrize("n,s2", [(11, 0.3), (40, 1.0), (101, 2.0)])
    def test_even_in_m(self, n, s2):
        amps = ss.gss(n, s2, "z").amplitudes
        np.testing.assert_allclose(amps, amps[::-1], atol=1e-15)

    def test_second_moment_matches_brute_sum(self):
        st = ss.gss(400, 1.0, "z")
        m = st.m_values
        brute = sum(
            mm**2 * math.exp(-2 * mm**2 / 400.0) for mm in m
        ) / sum(math.exp(-2 * mm**2 / 400.0) for mm in m)
        jz2 = float(ss.measurement_distribution(st, "z") @ m**2)
        assert jz2 == pytest.approx(brute, rel=1e-10)
        assert jz2 == pytest.approx(100.0, rel=0.01)

    def test_y_axis_profile(self):
        st = ss.gss(24, 0.7, "y")
        p = ss.measurement_distribution(st, "y")
        m = st.m_values
        expect = np.exp(-2 * m**2 / (0.7 * 24))
        expect /= expect.sum()
        np.testing.assert_allclose(p, expect, atol=1e-13)

    def test_invalid_s2(self):
        with pytest.raises(ValueError):
            ss.gss(10, 0.0)
        with pytest.raises(ValueError):
            ss.gss(10, -1.0)


class TestTwist:
    def test_zero_is_identity(self, rng):
        st = random_state(rng, 17)
        out = ss.apply_twist(st, 0.0)
        np.testing.assert_allclose(out.amplitudes, st.amplitudes, atol=0)

    def test_pi_on_two_spins(self):
        st = ss.coherent_x(2)
        out = ss.apply_twist(st, math.pi)
        np.testing.assert_allclose(
            out.amplitudes, [-0.5, 1 / math.sqrt(2), -0.5], atol=1e-15
        )

    def test_z_distribution_invariant(self, rng):
        st = random_state(rng, 23)
        for chi in (0.1, 1.7, -4.0):
            out = ss.apply_twist(st, chi)
            np.testing.assert_allclose(
                ss.measurement_distribution(out, "z"),
                ss.measurement_distribution(st, "z"),
                atol=1e-14,
            )

    def test_magnitudes_preserved(self, rng):
        st = random_state(rng, 9)
        out = ss.apply_twist(st, 0.37)
        np.testing.assert_allclose(
            np.abs(out.amplitudes), np.abs(st.amplitudes), atol=1e-15
        )


class TestRotation:
    def test_zero_identity(self, rng):
        st = random_state(rng, 12)
        for axis in "xyz":
            out = ss.apply_rotation(st, axis, 0.0)
            np.testing.assert_allclose(out.amplitudes, st.amplitudes, atol=1e-13)

    def test_z_two_pi_identity_even_n(self, rng):
        st = random_state(rng, 8)
        out = ss.apply_rotation(st, "z", 2 * math.pi)
        np.testing.assert_allclose(out.amplitudes, st.amplitudes, atol=1e-13)

    @pytest.mark.parametrize("axis", ["x", "y", "z"])
    @pytest.mark.parametrize("n", [5, 16])
    def test_against_expm(self, rng, axis, n):
        st = random_state(rng, n)
        theta = 0.83
        expect = dense_rotation(n, axis, theta) @ st.amplitudes
        out = ss.apply_rotation(st, axis, theta)
        np.testing.assert_allclose(out.amplitudes, expect, atol=1e-11)

    def test_heisenberg_transform_of_jy(self):
        n = 60
        st = ss.apply_rotation(
            ss.apply_twist(ss.coherent_x(n), 0.02), "y", 0.4
        )
        m = st.m_values
        jy0 = float(ss.measurement_distribution(st, "y") @ m)
        jz0 = float(ss.measurement_distribution(st, "z") @ m)
        theta = 0.7
        rot = ss.apply_rotation(st, "x", theta)
        jy1 = float(ss.measurement_distribution(rot, "y") @ m)
        assert jy1 == pytest.approx(
            math.cos(theta) * jy0 - math.sin(theta) * jz0, abs=1e-10
        )

    def test_norm_preserved_through_pipeline(self, rng):
        st = ss.coherent_x(30)
        for _ in range(25):
            st = ss.apply_twist(st, float(rng.uniform(-1, 1)))
            st = ss.apply_rotation(st, rng.choice(["x", "y", "z"]), float(rng.uniform(-2, 2)))
        assert np.sum(np.abs(st.amplitudes) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_twist_commutes_with_z_rotation(self, rng):
        st = random_state(rng, 14)
        a = ss.apply_rotation(ss.apply_twist(st, 0.3), "z", 1.1)
        b = ss.apply_twist(ss.apply_rotation(st, "z", 1.1), 0.3)
        np.testing.assert_allclose(a.amplitudes, b.amplitudes, atol=0)


class TestMeasurement:
    def test_coherent_x_along_x(self):
        p = ss.measurement_distribution(ss.coherent_x(12), "x")
        assert p[-1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(p[:-1] < 1e-12)

    def test_coherent_x_along_z_binomial(self):
        n = 10
        p = ss.measurement_distribution(ss.coherent_x(n), "z")
        expect = np.array([math.comb(n, k) for k in range(n + 1)]) / 2.0**n
        np.testing.assert_allclose(p, expect, atol=1e-14)

    def test_normalized(self, rng):
        for n in (3, 10, 41):
            st = random_state(rng, n)
            for axis in "xyz":
                p = ss.measurement_distribution(st, axis)
                assert p.sum() == pytest.approx(1.0, abs=1e-12)
                assert np.all(p >= 0.0)

    def test_basis_round_trip(self, rng):
        st = random_state(rng, 33)
        cache = ss.rotation_cache(33)
        coeff = ss.basis_amplitudes(st, "x")
        back = cache.x_vectors @ coeff
        np.testing.assert_allclose(back, st.amplitudes, atol=1e-10)


class TestRotationCache:
    @pytest.mark.parametrize("n", [2, 7, 150])
    def test_eigenvalues_half_integer_grid(self, n):
        cache = ss.rotation_cache(n)
        np.testing.assert_allclose(
            cache.eigenvalues, np.arange(n + 1) - n / 2.0, atol=1e-9
        )

    def test_unitary_columns(self):
        cache = ss.rotation_cache(64)
        gram = cache.x_vectors.T @ cache.x_vectors
        assert np.max(np.abs(gram - np.eye(65))) < 1e-10

    def test_y_phase_conjugation(self):
        n = 9
        cache = ss.rotation_cache(n)
        jx = dense_operator(n, "x")
        jy = dense_operator(n, "y")
        d = np.diag(cache.y_phase)
        np.testing.assert_allclose(d @ jx @ d.conj().T, jy, atol=1e-12)


class TestParity:
    def test_twisted_states_have_zero_jy_jz(self, rng):
        n = 200
        st = ss.coherent_x(n)
        for k in range(3):
            st = ss.apply_twist(st, 0.05 / (k + 1))
            st = ss.apply_rotation(st, "x", 0.5 * (-1) ** k)
        m = st.m_values
        jy = float(ss.measurement_distribution(st, "y") @ m)
        jz = float(ss.measurement_distribution(st, "z") @ m)
        assert abs(jy) < 1e-9
        assert abs(jz) < 1e-9


class TestHusimi:
    def test_peak_at_pole_of_coherent_x(self):
        st = ss.coherent_x(20)
        grid = [(math.pi / 2, 0.0), (math.pi / 2, 1.0), (1.0, 0.5), (2.0, 3.0)]
        q = ss.husimi_q(st, grid)
        assert q[0] == pytest.approx(1.0, abs=1e-12)
        assert np.argmax(q) == 0

    @pytest.mark.parametrize("n", [12, 16, 25])
    def test_antipode_negligible(self, n):
        q = ss.husimi_q(ss.coherent_x(n), [(math.pi / 2, math.pi)])
        assert q[0] < 1e-6

    def test_range(self, rng):
        st = random_state(rng, 15)
        thetas = np.linspace(0, math.pi, 7)
        phis = np.linspace(0, 2 * math.pi, 9)
        grid = [(t, p) for t in thetas for p in phis]
        q = ss.husimi_q(st, grid)
        assert np.all(q >= 0.0) and np.all(q <= 1.0)

    def test_poles_are_dicke_weights(self, rng):
        st = random_state(rng, 11)
        q = ss.husimi_q(st, [(0.0, 0.0), (math.pi, 0.0)])
        assert q[0] == pytest.approx(abs(st.amplitudes[-1]) ** 2, abs=1e-12)
        assert q[1] == pytest.approx(abs(st.amplitudes[0]) ** 2, abs=1e-12)


class TestStateValidation:
    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError):
            ss.CollectiveState(3, np.ones(3) / math.sqrt(3))

    def test_unnormalized_rejected(self):
        with pytest.raises(ValueError):
            ss.CollectiveState(2, np.array([1.0, 1.0, 1.0]))

    def test_amplitudes_read_only(self):
        st = ss.coherent_x(4)
        with pytest.raises(ValueError):
            st.amplitudes[0] = 0.0

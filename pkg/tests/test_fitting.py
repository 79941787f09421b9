import math

import numpy as np
import pytest

from spintwist import fitting as ft


class TestPowerLaw:
    def test_exact_power_law(self):
        xs = np.geomspace(10, 1e4, 8)
        pts = [(x, 7.0 * x ** (-5.0 / 3.0)) for x in xs]
        fit = ft.powerlaw_fit(pts)
        assert fit.exponent == pytest.approx(-5.0 / 3.0, abs=1e-12)
        assert fit.log_prefactor == pytest.approx(math.log(7.0), abs=1e-10)
        assert fit.residual_rms < 1e-12

    def test_sql_slope(self):
        pts = [(n, 3.0 / n) for n in (64, 128, 256, 512)]
        assert ft.powerlaw_fit(pts).exponent == pytest.approx(-1.0, abs=1e-12)

    def test_scale_equivariance(self):
        xs = np.geomspace(5, 500, 6)
        ys = 2.0 * xs**-1.4 * (1.0 + 0.01 * np.sin(xs))
        base = ft.powerlaw_fit(np.column_stack([xs, ys]))
        scaled = ft.powerlaw_fit(np.column_stack([xs, 100.0 * ys]))
        assert scaled.exponent == pytest.approx(base.exponent, abs=1e-12)
        assert scaled.log_prefactor == pytest.approx(
            base.log_prefactor + math.log(100.0), abs=1e-10
        )

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            ft.powerlaw_fit([(1.0, 2.0), (2.0, 1.0)])
        with pytest.raises(ValueError):
            ft.powerlaw_fit([(1.0, 2.0), (2.0, -1.0), (3.0, 1.0)])

    def test_self_refit(self):
        xs = np.geomspace(3, 3000, 9)
        fit = ft.powerlaw_fit([(x, 0.5 * x**-0.77) for x in xs])
        synth = [(x, math.exp(fit.log_prefactor) * x**fit.exponent) for x in xs]
        again = ft.powerlaw_fit(synth)
        assert again.exponent == pytest.approx(fit.exponent, abs=1e-10)


class TestSigmoidExp:
    def test_recovers_synthetic_parameters(self):
        true = (0.5, 1.0, 12.0, 0.8)
        c = np.linspace(0.1, 1.3, 25)
        pts = np.column_stack([c, ft.sigmoid_exp_model(c, *true)])
        fit = ft.sigmoid_exp_fit(pts)
        assert fit.converged
        for got, want in zip(fit.params, true):
            assert got == pytest.approx(want, abs=1e-6)

    def test_deterministic(self):
        c = np.linspace(0.05, 1.2, 20)
        y = ft.sigmoid_exp_model(c, 0.4, 1.3, 9.0, 0.7) + 0.01 * np.sin(40 * c)
        pts = np.column_stack([c, y])
        a = ft.sigmoid_exp_fit(pts)
        b = ft.sigmoid_exp_fit(pts)
        assert a == b

    def test_freeing_p3_helps(self):
        # data generated away from the fixed-p3 submodel: the full fit must
        # do at least as well as any p3-pinned variant
        c = np.linspace(0.1, 1.3, 30)
        y = ft.sigmoid_exp_model(c, 0.6, 0.8, 25.0, 0.85)
        pts = np.column_stack([c, y])
        full = ft.sigmoid_exp_fit(pts)

        def pinned_rms(p3):
            best = None
            for p4 in (0.3, 0.6, 0.9, 1.2):
                _, rms, _ = ft._levenberg(
                    c, y, (0.3, 1.0, p3, p4), free=(True, True, False, True)
                )
                best = rms if best is None else min(best, rms)
            return best

        assert full.residual_rms <= pinned_rms(5.0) + 1e-12
        assert full.residual_rms <= pinned_rms(80.0) + 1e-12

    def test_needs_enough_points(self):
        with pytest.raises(ValueError):
            ft.sigmoid_exp_fit([(0.1, 3.0)] * 5)


class TestNuVsSigma:
    def test_flat_synthetic_staircase(self):
        rows = []
        for sigma in (0.05, 0.1, 0.2):
            for n in (100, 200, 400, 800):
                rows.append((n, sigma, n ** (-1.889)))
        table = ft.nu_vs_sigma(rows)
        assert [s for s, _, _ in table] == [0.05, 0.1, 0.2]
        for _, nu, se in table:
            assert nu == pytest.approx(1.889, abs=1e-10)
            assert se < 1e-10

    def test_orders_preserved(self):
        rows = []
        for sigma, true_nu in ((0.1, 1.9), (0.3, 1.6), (0.6, 1.1)):
            for n in (64, 128, 256, 512, 1024):
                rows.append((n, sigma, 2.0 * n**-true_nu))
        table = ft.nu_vs_sigma(rows)
        nus = [nu for _, nu, _ in table]
        assert nus[0] > nus[1] > nus[2]

    def test_stderr_shrinks_with_longer_grid(self):
        def rows_for(ns):
            return [
                (n, 0.1, n**-1.5 * (1.0 + 0.02 * math.sin(5.0 * math.log(n))))
                for n in ns
            ]

        short = ft.nu_vs_sigma(rows_for([100, 200, 400, 800]))
        long = ft.nu_vs_sigma(rows_for([100, 200, 400, 800, 1600, 3200, 6400, 12800]))
        assert long[0][2] < short[0][2]

    def test_requires_three_sizes(self):
        with pytest.raises(ValueError):
            ft.nu_vs_sigma([(100, 0.1, 1.0), (200, 0.1, 0.5)])
